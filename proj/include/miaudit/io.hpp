#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace miaudit {

// All numeric artifact output goes through fmt_g17 so that doubles survive a
// text round trip bit for bit and reruns stay byte-identical.
std::string fmt_g17(double v);
void append_g17(std::string& out, double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Splits on '\n', dropping a trailing empty segment and any '\r' line ends.
std::vector<std::string> split_lines(const std::string& text);
std::vector<std::string> split_csv_line(const std::string& line);

double parse_double_strict(const std::string& s, const std::string& what);
long long parse_int_strict(const std::string& s, const std::string& what);

std::string hex64(std::uint64_t v);
std::uint64_t hash_file_bytes(const std::string& path);

}  // namespace miaudit
