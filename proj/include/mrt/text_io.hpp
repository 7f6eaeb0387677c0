#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mrt {

/// Shortest decimal string that round-trips to exactly the same double.
std::string fmt_double(double v);
/// Fixed 17-significant-digit form ("%.17g"), for analysis outputs.
std::string fmt_g17(double v);

/// Strict double parse of a whole token; throws DataError otherwise.
double parse_double(const std::string& token, const std::string& what);
long parse_long(const std::string& token, const std::string& what);

/// Splits one CSV line on commas. No quoting support; none of our fields
/// contain commas.
std::vector<std::string> split_csv_line(const std::string& line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

} // namespace mrt
