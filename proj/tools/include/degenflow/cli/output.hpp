#pragma once

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace degenflow::cli {

using CsvCell = std::variant<long long, double, std::string>;

/// Rows are sorted (cell by cell) before writing; doubles use 17 significant digits.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;

  void add(std::vector<CsvCell> row) { rows.push_back(std::move(row)); }
  std::string render() const;
};

/// JSON text with every floating-point number at 17 significant digits.
/// Non-finite values become null.
std::string render_json(const nlohmann::json& j, int indent = 2);

void write_file(const std::string& path, const std::string& text);

}  // namespace degenflow::cli
