#include "atlasground/reportio.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "atlasground/rng.hpp"

namespace atlasground {

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size())
    throw std::invalid_argument("table row width mismatch");
  rows.push_back(std::move(row));
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s(buf);
  // Keep the double/int distinction through a round-trip.
  if (s.find_first_of(".eE") == std::string::npos &&
      s.find("nan") == std::string::npos && s.find("inf") == std::string::npos)
    s += ".0";
  return s;
}

std::string cell_to_string(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "null";
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  return std::get<std::string>(c);
}

bool looks_like_int(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i >= s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

bool looks_like_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  if (s == "nan") { out = std::nan(""); return true; }
  if (s == "inf") { out = INFINITY; return true; }
  if (s == "-inf") { out = -INFINITY; return true; }
  bool has_marker = false;
  for (char c : s)
    if (c == '.' || c == 'e' || c == 'E') has_marker = true;
  if (!has_marker) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

Cell parse_cell(const std::string& s) {
  if (s == "null") return std::monostate{};
  if (looks_like_int(s)) return static_cast<std::int64_t>(std::stoll(s));
  double d;
  if (looks_like_double(s, d)) return d;
  return s;
}

std::vector<std::string> split_tab(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_table(const Table& table, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write table " + path.string());
  f << "#table\tv1\n";
  f << "#name\t" << table.name << "\n";
  f << "#columns";
  for (const std::string& c : table.columns) f << "\t" << c;
  f << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) f << "\t";
      f << cell_to_string(row[i]);
    }
    f << "\n";
  }
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read table " + path.string());
  Table t;
  std::string line;
  bool saw_header = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::vector<std::string> parts = split_tab(line);
      if (parts[0] == "#table") {
        if (parts.size() < 2 || parts[1] != "v1")
          throw std::runtime_error("unsupported table version in " + path.string());
        saw_header = true;
      } else if (parts[0] == "#name") {
        t.name = parts.size() > 1 ? parts[1] : "";
      } else if (parts[0] == "#columns") {
        t.columns.assign(parts.begin() + 1, parts.end());
      }
      continue;
    }
    if (!saw_header || t.columns.empty())
      throw std::runtime_error("malformed table file " + path.string());
    const std::vector<std::string> parts = split_tab(line);
    if (parts.size() != t.columns.size())
      throw std::runtime_error("table row width mismatch in " + path.string());
    std::vector<Cell> row;
    row.reserve(parts.size());
    for (const std::string& s : parts) row.push_back(parse_cell(s));
    t.rows.push_back(std::move(row));
  }
  if (!saw_header) throw std::runtime_error("not a table file: " + path.string());
  return t;
}

std::string render_table(const Table& table) {
  std::vector<std::size_t> widths(table.columns.size());
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    widths[i] = table.columns[i].size();
  for (const auto& row : table.rows) {
    std::vector<std::string> r;
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::string s;
      if (const auto* d = std::get_if<double>(&row[i])) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", *d);
        s = buf;
      } else {
        s = cell_to_string(row[i]);
      }
      widths[i] = std::max(widths[i], s.size());
      r.push_back(std::move(s));
    }
    cells.push_back(std::move(r));
  }
  std::ostringstream out;
  out << "== " << table.name << " ==\n";
  auto emit_row = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << "  ";
      out << r[i];
      for (std::size_t pad = r[i].size(); pad < widths[i]; ++pad) out << ' ';
    }
    out << "\n";
  };
  emit_row(table.columns);
  for (const auto& r : cells) emit_row(r);
  return out.str();
}

bool tables_match(const Table& a, const Table& b, double float_tol) {
  if (a.name != b.name || a.columns != b.columns || a.rows.size() != b.rows.size())
    return false;
  for (std::size_t r = 0; r < a.rows.size(); ++r)
    for (std::size_t c = 0; c < a.columns.size(); ++c) {
      const Cell& x = a.rows[r][c];
      const Cell& y = b.rows[r][c];
      if (x.index() != y.index()) {
        // int/double cross-comparisons still compare by value
        const auto* xi = std::get_if<std::int64_t>(&x);
        const auto* yi = std::get_if<std::int64_t>(&y);
        const auto* xd = std::get_if<double>(&x);
        const auto* yd = std::get_if<double>(&y);
        const double xv = xi ? static_cast<double>(*xi) : (xd ? *xd : std::nan(""));
        const double yv = yi ? static_cast<double>(*yi) : (yd ? *yd : std::nan(""));
        if (std::isnan(xv) || std::isnan(yv)) return false;
        if (std::abs(xv - yv) > float_tol) return false;
        continue;
      }
      if (const auto* xd = std::get_if<double>(&x)) {
        const double yd = std::get<double>(y);
        if (std::isnan(*xd) && std::isnan(yd)) continue;
        if (std::abs(*xd - yd) > float_tol) return false;
      } else if (x != y) {
        return false;
      }
    }
  return true;
}

// --- manifest ---------------------------------------------------------------

std::string text_digest_hex(const std::string& text) {
  const std::uint64_t h = hash_bytes64(text);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest_hex(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot digest " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return text_digest_hex(ss.str());
}

std::string tool_version() { return "0.1.0"; }

std::string current_utc_timestamp() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde)
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  else
    t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest " + path.string());
  f << "tool_version\t" << manifest.tool_version << "\n";
  f << "config_hash\t" << manifest.config_hash << "\n";
  f << "seed\t" << manifest.seed << "\n";
  f << "created_utc\t" << manifest.created_utc << "\n";
  for (const auto& [p, d] : manifest.input_digests)
    f << "input\t" << p << "\t" << d << "\n";
}

}  // namespace atlasground
