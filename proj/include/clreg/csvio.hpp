#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace clreg {

// Shortest round-trip decimal form via std::to_chars: byte-stable across
// runs and locale-independent.
std::string format_double(double x);

double parse_double(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

void write_text_file(const std::filesystem::path& path, const std::string& content);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace clreg
