#pragma once

#include <string>
#include <vector>

namespace fstm::csv {

/// Splits one CSV line on commas; fields are trimmed of surrounding spaces.
/// The schemas used here never contain quoted or embedded commas.
std::vector<std::string> split_line(const std::string& line);

/// Reads all non-empty lines of a file; throws std::runtime_error when the
/// file cannot be opened.
std::vector<std::string> read_lines(const std::string& path);

/// Writes content to path atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

/// Shortest representation that round-trips a double.
std::string format_number(double v);

}  // namespace fstm::csv
