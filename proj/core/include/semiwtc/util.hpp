#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace semiwtc {

std::vector<std::string> split_lines(std::string_view text);
std::vector<std::string> split(std::string_view s, char delim);
std::vector<std::string> split_ws(std::string_view s);
std::string trim(std::string_view s);
std::string strip_comment(std::string_view s, char marker = '#');
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool parse_bool(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Exact textual form of a floating-point value (C99 %a).
std::string hexfloat(double v);
double parse_hexfloat(std::string_view s);

/// Fixed-point percentage with two decimals, e.g. 0.94331 -> "94.33".
std::string percent2(double fraction);

}  // namespace semiwtc
