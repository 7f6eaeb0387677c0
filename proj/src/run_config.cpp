#include "mrt/run_config.hpp"

#include "mrt/errors.hpp"
#include "mrt/text_io.hpp"

#include "json.hpp"

#include <set>

namespace mrt {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (known.find(it.key()) == known.end())
            throw InputError("unknown config key '" + it.key() + "' in " + where);
}

Vec5 get_vec5(const json& obj, const char* key) {
    auto v = obj.at(key).get<std::vector<double>>();
    if (v.size() != 5)
        throw InputError(std::string("'") + key + "' must have 5 entries");
    return Vec5(Eigen::Map<const Vec5>(v.data()));
}

void parse_trial(const json& obj, TrialConfig* trial) {
    reject_unknown_keys(obj,
                        {"num_participants", "days_per_participant", "decisions_per_day",
                         "cohort_size", "cohort_interval_days", "trial_start_date",
                         "update_weekday", "master_seed", "reward_cost_weight"},
                        "trial");
    if (obj.contains("num_participants"))
        trial->num_participants = obj.at("num_participants").get<int>();
    if (obj.contains("days_per_participant"))
        trial->days_per_participant = obj.at("days_per_participant").get<int>();
    if (obj.contains("decisions_per_day"))
        trial->decisions_per_day = obj.at("decisions_per_day").get<int>();
    if (obj.contains("cohort_size"))
        trial->cohort_size = obj.at("cohort_size").get<int>();
    if (obj.contains("cohort_interval_days"))
        trial->cohort_interval_days = obj.at("cohort_interval_days").get<int>();
    if (obj.contains("trial_start_date"))
        trial->trial_start_date = Date::parse(obj.at("trial_start_date").get<std::string>());
    if (obj.contains("update_weekday"))
        trial->update_weekday = parse_weekday(obj.at("update_weekday").get<std::string>());
    if (obj.contains("master_seed"))
        trial->master_seed = obj.at("master_seed").get<std::uint64_t>();
    if (obj.contains("reward_cost_weight"))
        trial->reward_cost_weight = obj.at("reward_cost_weight").get<double>();
}

void parse_prior(const json& obj, Prior* prior) {
    reject_unknown_keys(obj, {"sigma2", "mu_alpha0", "sd_alpha0", "mu_beta", "sd_beta"},
                        "prior");
    if (obj.contains("sigma2"))
        prior->sigma2 = obj.at("sigma2").get<double>();
    if (obj.contains("mu_alpha0"))
        prior->mu_alpha0 = get_vec5(obj, "mu_alpha0");
    if (obj.contains("sd_alpha0"))
        prior->sd_alpha0 = get_vec5(obj, "sd_alpha0");
    if (obj.contains("mu_beta"))
        prior->mu_beta = get_vec5(obj, "mu_beta");
    if (obj.contains("sd_beta"))
        prior->sd_beta = get_vec5(obj, "sd_beta");
}

void parse_smoothing(const json& obj, SmoothingConfig* smoothing) {
    reject_unknown_keys(obj, {"l_min", "l_max", "steepness", "quadrature_nodes"}, "smoothing");
    if (obj.contains("l_min"))
        smoothing->l_min = obj.at("l_min").get<double>();
    if (obj.contains("l_max"))
        smoothing->l_max = obj.at("l_max").get<double>();
    if (obj.contains("steepness"))
        smoothing->steepness = obj.at("steepness").get<double>();
    if (obj.contains("quadrature_nodes"))
        smoothing->quadrature_nodes = obj.at("quadrature_nodes").get<int>();
}

void append_vec5(std::string& out, const Vec5& v) {
    out += '[';
    for (int i = 0; i < 5; ++i) {
        if (i > 0)
            out += ',';
        out += fmt_double(v(i));
    }
    out += ']';
}

} // namespace

void RunConfig::validate() const {
    trial.validate();
    prior.validate();
    smoothing.validate();
    if (reps < 1)
        throw InputError("reps must be positive");
    if (output_dir.empty())
        throw InputError("output_dir must not be empty");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw InputError("config must be a JSON object");
    reject_unknown_keys(
        j, {"trial", "prior", "smoothing", "policy_mode", "reps", "fault_plan", "output_dir"},
        "config");
    RunConfig config;
    try {
        if (j.contains("trial"))
            parse_trial(j.at("trial"), &config.trial);
        if (j.contains("prior"))
            parse_prior(j.at("prior"), &config.prior);
        if (j.contains("smoothing"))
            parse_smoothing(j.at("smoothing"), &config.smoothing);
        if (j.contains("policy_mode"))
            config.policy_mode = policy_mode_from_string(j.at("policy_mode").get<std::string>());
        if (j.contains("reps"))
            config.reps = j.at("reps").get<int>();
        if (j.contains("fault_plan") && !j.at("fault_plan").is_null())
            config.fault_plan_path = j.at("fault_plan").get<std::string>();
        if (j.contains("output_dir"))
            config.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed config value: ") + e.what());
    }
    config.validate();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const DataError& e) {
        throw InputError(e.what()); // a missing config file is a usage error
    }
    return parse_run_config(text);
}

std::string serialize_run_config(const RunConfig& config) {
    std::string out = "{\n  \"trial\": {\n";
    out += "    \"num_participants\": " + std::to_string(config.trial.num_participants) + ",\n";
    out += "    \"days_per_participant\": " + std::to_string(config.trial.days_per_participant) +
           ",\n";
    out += "    \"decisions_per_day\": " + std::to_string(config.trial.decisions_per_day) + ",\n";
    out += "    \"cohort_size\": " + std::to_string(config.trial.cohort_size) + ",\n";
    out += "    \"cohort_interval_days\": " + std::to_string(config.trial.cohort_interval_days) +
           ",\n";
    out += "    \"trial_start_date\": \"" + config.trial.trial_start_date.to_string() + "\",\n";
    out += "    \"update_weekday\": \"" + weekday_name(config.trial.update_weekday) + "\",\n";
    out += "    \"master_seed\": " + std::to_string(config.trial.master_seed) + ",\n";
    out += "    \"reward_cost_weight\": " + fmt_double(config.trial.reward_cost_weight) + "\n";
    out += "  },\n  \"prior\": {\n";
    out += "    \"sigma2\": " + fmt_double(config.prior.sigma2) + ",\n";
    out += "    \"mu_alpha0\": ";
    append_vec5(out, config.prior.mu_alpha0);
    out += ",\n    \"sd_alpha0\": ";
    append_vec5(out, config.prior.sd_alpha0);
    out += ",\n    \"mu_beta\": ";
    append_vec5(out, config.prior.mu_beta);
    out += ",\n    \"sd_beta\": ";
    append_vec5(out, config.prior.sd_beta);
    out += "\n  },\n  \"smoothing\": {\n";
    out += "    \"l_min\": " + fmt_double(config.smoothing.l_min) + ",\n";
    out += "    \"l_max\": " + fmt_double(config.smoothing.l_max) + ",\n";
    out += "    \"steepness\": " + fmt_double(config.smoothing.steepness) + ",\n";
    out += "    \"quadrature_nodes\": " + std::to_string(config.smoothing.quadrature_nodes) +
           "\n  },\n";
    out += "  \"policy_mode\": \"" + to_string(config.policy_mode) + "\",\n";
    out += "  \"reps\": " + std::to_string(config.reps) + ",\n";
    out += "  \"fault_plan\": " +
           (config.fault_plan_path ? "\"" + *config.fault_plan_path + "\"" : "null") + ",\n";
    out += "  \"output_dir\": \"" + config.output_dir + "\"\n}\n";
    return out;
}

} // namespace mrt
