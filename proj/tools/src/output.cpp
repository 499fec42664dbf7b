#include "degenflow/cli/output.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "degenflow/cli/config.hpp"
#include "degenflow/error.hpp"

namespace degenflow::cli {

namespace {

std::string render_cell(const CsvCell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

void emit(std::ostringstream& os, const nlohmann::json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{" << nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << "," << nl;
        first = false;
        os << pad << nlohmann::json(it.key()).dump() << (indent > 0 ? ": " : ":");
        emit(os, it.value(), indent, depth + 1);
      }
      os << nl << close << "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::none_of(j.begin(), j.end(), [](const auto& v) { return v.is_structured(); });
      os << "[";
      if (!flat) os << nl;
      bool first = true;
      for (const auto& v : j) {
        if (!first) os << "," << (flat ? " " : nl);
        first = false;
        if (!flat) os << pad;
        emit(os, v, indent, depth + 1);
      }
      if (!flat) os << nl << close;
      os << "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      os << (std::isfinite(v) ? format_double(v) : "null");
      return;
    }
    default: os << j.dump();
  }
}

}  // namespace

std::string CsvTable::render() const {
  auto sorted = rows;
  std::sort(sorted.begin(), sorted.end());
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& r : sorted) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << render_cell(r[i]);
    os << "\n";
  }
  return os.str();
}

std::string render_json(const nlohmann::json& j, int indent) {
  std::ostringstream os;
  emit(os, j, indent, 0);
  os << "\n";
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << text;
}

}  // namespace degenflow::cli
