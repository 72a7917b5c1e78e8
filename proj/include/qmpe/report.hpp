#pragma once

#include <string>
#include <vector>

namespace qmpe {

// FNV-1a over the canonical config text, rendered as 16 hex digits.
std::string config_hash(const std::string& canonical_text);

// Write via a temp file in the same directory, then rename.
void atomic_write_file(const std::string& path, const std::string& content);

// CSV with a units comment line, a header row, and LF endings.
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

} // namespace qmpe
