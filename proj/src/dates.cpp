#include "mrt/dates.hpp"

#include "mrt/errors.hpp"

#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>

namespace mrt {

namespace chr = std::chrono;

Date Date::from_ymd(int year, int month, int day) {
    chr::year_month_day ymd{chr::year{year}, chr::month{static_cast<unsigned>(month)},
                            chr::day{static_cast<unsigned>(day)}};
    if (!ymd.ok())
        throw InputError("invalid calendar date: " + std::to_string(year) + "-" +
                         std::to_string(month) + "-" + std::to_string(day));
    return Date(static_cast<std::int32_t>(chr::sys_days(ymd).time_since_epoch().count()));
}

Date Date::parse(const std::string& iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        throw InputError("expected date formatted YYYY-MM-DD, got '" + iso + "'");
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (!std::isdigit(static_cast<unsigned char>(iso[i])))
            throw InputError("expected date formatted YYYY-MM-DD, got '" + iso + "'");
    int y = std::stoi(iso.substr(0, 4));
    int m = std::stoi(iso.substr(5, 2));
    int d = std::stoi(iso.substr(8, 2));
    return from_ymd(y, m, d);
}

std::string Date::to_string() const {
    chr::year_month_day ymd{chr::sys_days{chr::days{serial_}}};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

int Date::weekday() const {
    chr::weekday wd{chr::sys_days{chr::days{serial_}}};
    return static_cast<int>(wd.c_encoding()); // 0 = Sunday
}

Date next_weekday_after(Date d, int weekday) {
    if (weekday < 0 || weekday > 6)
        throw InputError("weekday index must be in 0..6");
    int delta = (weekday - d.weekday() + 7) % 7;
    if (delta == 0)
        delta = 7;
    return d + delta;
}

namespace {
const std::array<const char*, 7> kWeekdayNames = {"sunday",    "monday",   "tuesday", "wednesday",
                                                  "thursday", "friday", "saturday"};
}

int parse_weekday(const std::string& name) {
    std::string lower;
    lower.reserve(name.size());
    for (char c : name)
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (int i = 0; i < 7; ++i)
        if (lower == kWeekdayNames[static_cast<std::size_t>(i)])
            return i;
    throw InputError("unknown weekday name '" + name + "'");
}

std::string weekday_name(int weekday) {
    if (weekday < 0 || weekday > 6)
        throw InputError("weekday index must be in 0..6");
    return kWeekdayNames[static_cast<std::size_t>(weekday)];
}

} // namespace mrt
