#include "mrt/trial.hpp"

#include "mrt/errors.hpp"
#include "mrt/text_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <sstream>

namespace mrt {

void TrialConfig::validate() const {
    if (num_participants < 1)
        throw InputError("num_participants must be positive");
    if (days_per_participant < 2)
        throw InputError("days_per_participant must be at least 2");
    if (decisions_per_day != 2)
        throw InputError("only two decision times per day are supported");
    if (cohort_size < 1)
        throw InputError("cohort_size must be positive");
    if (cohort_interval_days < 1)
        throw InputError("cohort_interval_days must be positive");
    if (update_weekday < 0 || update_weekday > 6)
        throw InputError("update_weekday must be in 0..6");
    if (reward_cost_weight < 0.0)
        throw InputError("reward_cost_weight must be nonnegative");
}

std::string to_string(FallbackTag tag) {
    switch (tag) {
    case FallbackTag::none: return "none";
    case FallbackTag::method_i: return "method_i";
    case FallbackTag::method_ii: return "method_ii";
    }
    throw InputError("bad fallback tag");
}

FallbackTag fallback_tag_from_string(const std::string& s) {
    if (s == "none")
        return FallbackTag::none;
    if (s == "method_i")
        return FallbackTag::method_i;
    if (s == "method_ii")
        return FallbackTag::method_ii;
    throw DataError("unknown fallback tag '" + s + "'");
}

namespace {

std::uint64_t record_key(int participant_id, int t) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(participant_id)) << 32) |
           static_cast<std::uint32_t>(t);
}

} // namespace

void TrialHistory::add_record(const DecisionRecord& rec) {
    if (rec.point.participant_id < 1)
        throw InputError("participant_id must be positive");
    if (rec.point.t < 1)
        throw InputError("decision index t must be positive");
    if (!seen_.insert(record_key(rec.point.participant_id, rec.point.t)).second)
        throw DataError("duplicate decision record for participant " +
                        std::to_string(rec.point.participant_id) + ", t=" +
                        std::to_string(rec.point.t));
    records_.push_back(rec);
}

void TrialHistory::add_snapshot(const PosteriorSnapshot& snap) {
    if (snap.mu.size() != snap.sigma.rows() || snap.sigma.rows() != snap.sigma.cols())
        throw InputError("snapshot dimensions do not match");
    snapshots_.push_back(snap);
}

void TrialHistory::set_start_date(int participant_id, Date start) {
    start_dates_[participant_id] = start;
}

std::vector<std::pair<int, Date>> recruitment_schedule(const TrialConfig& config) {
    config.validate();
    std::vector<std::pair<int, Date>> out;
    out.reserve(static_cast<std::size_t>(config.num_participants));
    for (int pid = 1; pid <= config.num_participants; ++pid) {
        int cohort = (pid - 1) / config.cohort_size;
        out.emplace_back(pid, config.trial_start_date + cohort * config.cohort_interval_days);
    }
    return out;
}

std::vector<UpdateTime> update_times(const TrialConfig& config,
                                     const std::vector<std::pair<int, Date>>& recruits) {
    config.validate();
    if (recruits.empty())
        throw InputError("update_times needs at least one recruited participant");
    Date last_day = recruits.front().second;
    for (const auto& [pid, start] : recruits) {
        Date fin = start + (config.days_per_participant - 1);
        if (fin > last_day)
            last_day = fin;
    }
    std::vector<UpdateTime> out;
    int tau = 1;
    for (Date d = next_weekday_after(config.trial_start_date, config.update_weekday);
         d <= last_day; d = d + 7)
        out.push_back({tau++, d});
    return out;
}

std::vector<UpdateTime> update_times(const TrialConfig& config) {
    return update_times(config, recruitment_schedule(config));
}

std::vector<BatchItem> batch_for_update(const TrialHistory& history, Date tau_date) {
    std::vector<BatchItem> out;
    for (const DecisionRecord& rec : history.records()) {
        if (rec.excluded_from_update || rec.point.date >= tau_date)
            continue;
        out.push_back({rec.point.participant_id, rec.alg_state, rec.pi, rec.action, rec.reward});
    }
    return out;
}

// --- history CSV ---

namespace {

const char* kHistoryHeader = "participant_id,t,date,slot,f1,f2,f3,f4,f5,"
                             "g1,g2,g3,g4,g5,g6,g7,pi,action,fallback,excluded,oscb,reward";

} // namespace

void write_history_csv(const std::filesystem::path& path, const TrialHistory& history) {
    std::string out;
    out.reserve(history.records().size() * 160 + 256);
    out += kHistoryHeader;
    out += '\n';
    for (const DecisionRecord& rec : history.records()) {
        out += std::to_string(rec.point.participant_id);
        out += ',';
        out += std::to_string(rec.point.t);
        out += ',';
        out += rec.point.date.to_string();
        out += ',';
        out += std::to_string(rec.point.slot);
        for (int i = 0; i < 5; ++i) {
            out += ',';
            out += fmt_double(rec.alg_state(i));
        }
        for (int i = 0; i < 7; ++i) {
            out += ',';
            out += fmt_double(rec.env_state(i));
        }
        out += ',';
        out += fmt_double(rec.pi);
        out += ',';
        out += std::to_string(rec.action);
        out += ',';
        out += to_string(rec.fallback);
        out += ',';
        out += rec.excluded_from_update ? "1" : "0";
        out += ',';
        out += std::to_string(rec.oscb);
        out += ',';
        out += fmt_double(rec.reward);
        out += '\n';
    }
    write_text_file(path, out);
}

TrialHistory read_history_csv(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(path.string() + " is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kHistoryHeader)
        throw DataError(path.string() + " has an unexpected header row");

    TrialHistory history;
    std::vector<int> bad_rows;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 22) {
            bad_rows.push_back(row);
            continue;
        }
        try {
            DecisionRecord rec;
            rec.point.participant_id = static_cast<int>(parse_long(fields[0], "participant_id"));
            rec.point.t = static_cast<int>(parse_long(fields[1], "t"));
            rec.point.date = Date::parse(fields[2]);
            rec.point.slot = static_cast<int>(parse_long(fields[3], "slot"));
            for (int i = 0; i < 5; ++i)
                rec.alg_state(i) = parse_double(fields[static_cast<std::size_t>(4 + i)], "f");
            for (int i = 0; i < 7; ++i)
                rec.env_state(i) = parse_double(fields[static_cast<std::size_t>(9 + i)], "g");
            rec.pi = parse_double(fields[16], "pi");
            rec.action = static_cast<int>(parse_long(fields[17], "action"));
            rec.fallback = fallback_tag_from_string(fields[18]);
            long excluded = parse_long(fields[19], "excluded");
            if (excluded != 0 && excluded != 1)
                throw DataError("excluded flag must be 0 or 1");
            rec.excluded_from_update = excluded == 1;
            rec.oscb = parse_long(fields[20], "oscb");
            rec.reward = parse_double(fields[21], "reward");
            if (rec.action != 0 && rec.action != 1)
                throw DataError("action must be 0 or 1");
            if (rec.oscb < 0)
                throw DataError("oscb must be nonnegative");
            history.add_record(rec);
        } catch (const InputError&) {
            bad_rows.push_back(row);
        } catch (const DataError&) {
            bad_rows.push_back(row);
        }
    }
    if (!bad_rows.empty()) {
        std::string msg = path.string() + " has " + std::to_string(bad_rows.size()) +
                          " malformed row(s):";
        for (std::size_t i = 0; i < bad_rows.size() && i < 10; ++i)
            msg += " " + std::to_string(bad_rows[i]);
        if (bad_rows.size() > 10)
            msg += " ...";
        throw DataError(msg);
    }

    // earliest decision time per participant pins their start date
    std::map<int, std::pair<int, Date>> first_seen; // pid -> (t, date)
    for (const DecisionRecord& rec : history.records()) {
        auto it = first_seen.find(rec.point.participant_id);
        if (it == first_seen.end() || rec.point.t < it->second.first)
            first_seen[rec.point.participant_id] = {rec.point.t, rec.point.date};
    }
    for (const auto& [pid, seen] : first_seen) {
        int day_index = (seen.first - 1) / 2 + 1;
        history.set_start_date(pid, seen.second - (day_index - 1));
    }
    return history;
}

// --- posterior snapshots JSONL ---

namespace {

void append_vector_json(std::string& out, const Eigen::VectorXd& v) {
    out += '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0)
            out += ',';
        out += fmt_double(v(i));
    }
    out += ']';
}

} // namespace

void write_snapshots_jsonl(const std::filesystem::path& path,
                           const std::vector<PosteriorSnapshot>& snapshots) {
    std::string out;
    for (const PosteriorSnapshot& snap : snapshots) {
        out += "{\"tau_index\":";
        out += std::to_string(snap.tau_index);
        out += ",\"date\":\"";
        out += snap.date.to_string();
        out += '"';
        if (snap.participant_id) {
            out += ",\"participant_id\":";
            out += std::to_string(*snap.participant_id);
        }
        out += ",\"mu\":";
        append_vector_json(out, snap.mu);
        out += ",\"sigma\":[";
        for (Eigen::Index r = 0; r < snap.sigma.rows(); ++r) {
            if (r > 0)
                out += ',';
            append_vector_json(out, snap.sigma.row(r));
        }
        out += "]}\n";
    }
    write_text_file(path, out);
}

std::vector<PosteriorSnapshot> read_snapshots_jsonl(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<PosteriorSnapshot> out;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(row) + ": " + e.what());
        }
        try {
            PosteriorSnapshot snap;
            snap.tau_index = j.at("tau_index").get<int>();
            snap.date = Date::parse(j.at("date").get<std::string>());
            if (j.contains("participant_id"))
                snap.participant_id = j.at("participant_id").get<int>();
            auto mu = j.at("mu").get<std::vector<double>>();
            snap.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(),
                                                        static_cast<Eigen::Index>(mu.size()));
            auto sigma_rows = j.at("sigma").get<std::vector<std::vector<double>>>();
            if (sigma_rows.size() != mu.size())
                throw DataError("sigma row count does not match mu");
            snap.sigma.resize(static_cast<Eigen::Index>(mu.size()),
                              static_cast<Eigen::Index>(mu.size()));
            for (std::size_t r = 0; r < sigma_rows.size(); ++r) {
                if (sigma_rows[r].size() != mu.size())
                    throw DataError("sigma is not square");
                for (std::size_t c = 0; c < sigma_rows[r].size(); ++c)
                    snap.sigma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        sigma_rows[r][c];
            }
            out.push_back(std::move(snap));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(row) + ": " + e.what());
        }
    }
    return out;
}

} // namespace mrt
