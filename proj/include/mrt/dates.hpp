#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace mrt {

/// Calendar date (proleptic Gregorian, no timezone), stored as days since
/// 1970-01-01. Cheap to copy and to do day arithmetic on.
class Date {
  public:
    Date() = default;
    explicit Date(std::int32_t serial) : serial_(serial) {}

    static Date from_ymd(int year, int month, int day);
    /// Parses "YYYY-MM-DD"; throws InputError on anything else.
    static Date parse(const std::string& iso);

    std::int32_t serial() const { return serial_; }
    std::string to_string() const; // "YYYY-MM-DD"

    /// 0 = Sunday .. 6 = Saturday.
    int weekday() const;
    bool is_weekend() const {
        int w = weekday();
        return w == 0 || w == 6;
    }

    Date operator+(int days) const { return Date(serial_ + days); }
    Date operator-(int days) const { return Date(serial_ - days); }
    int operator-(Date other) const { return serial_ - other.serial_; }
    auto operator<=>(const Date&) const = default;

  private:
    std::int32_t serial_ = 0;
};

/// First date with the given weekday strictly after d.
Date next_weekday_after(Date d, int weekday);

/// "sunday".."saturday" (case-insensitive) -> 0..6; throws InputError.
int parse_weekday(const std::string& name);
std::string weekday_name(int weekday);

} // namespace mrt
