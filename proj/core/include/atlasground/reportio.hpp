#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace atlasground {

// One table cell; monostate encodes an explicit null (e.g. an undefined
// mean over zero samples).
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

// Line-oriented TSV with '#'-prefixed metadata lines. Doubles use 17
// significant digits, so write -> read round-trips exactly.
void write_table(const Table& table, const std::filesystem::path& path);
Table read_table(const std::filesystem::path& path);

// Aligned human-readable rendering of the same rows.
std::string render_table(const Table& table);

// Cell-wise comparison; doubles match within |delta| <= 1e-9.
bool tables_match(const Table& a, const Table& b, double float_tol = 1e-9);

struct RunManifest {
  std::string tool_version;
  std::string config_hash;  // hex
  std::uint64_t seed = 0;
  std::string created_utc;  // honors SOURCE_DATE_EPOCH for reproducible runs
  std::vector<std::pair<std::string, std::string>> input_digests;  // path, hex
};

std::string file_digest_hex(const std::filesystem::path& path);
std::string text_digest_hex(const std::string& text);

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);

std::string tool_version();
std::string current_utc_timestamp();  // SOURCE_DATE_EPOCH override applies

}  // namespace atlasground
