#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace crowdlabel {

inline constexpr std::string_view kToolName = "crowdlabel";
inline constexpr std::string_view kToolVersion = "0.1.0";

// Provenance stamped on the first line of every output file. Nothing
// time-dependent goes in here: identical inputs must give identical bytes.
struct OutputHeader {
  std::string stage;
  std::string config_hash;   // hex digest of the stage parameters
  std::uint64_t seed = 0;
  std::string input_digest;  // hex digest of the input file contents

  friend bool operator==(const OutputHeader&, const OutputHeader&) = default;
};

// {"_header": {...}} for line-delimited JSON outputs. `extra` members are
// appended inside the header object.
std::string header_json_line(const OutputHeader& header, const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
// "# crowdlabel <version> stage=... config_hash=... seed=... inputs=..."
std::string header_csv_line(const OutputHeader& header);
// Parses either header form from the first line of `path`.
std::optional<OutputHeader> read_header(const std::filesystem::path& path);
bool is_header_line(std::string_view line);

std::string hex_digest(std::string_view bytes);
// Digest of the concatenated file contents; missing files hash as empty.
std::string file_digest(const std::vector<std::filesystem::path>& paths);

std::string format_number(double value, int precision = 6);
std::string format_optional(const std::optional<double>& value, int precision = 6);

// RFC-4180 style writer that quotes every field.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& fields);
  void row(std::initializer_list<std::string> fields) { row(std::vector<std::string>(fields)); }

 private:
  std::ostream& out_;
};

std::vector<std::vector<std::string>> parse_csv(std::istream& in);

// Writes to `path.tmp` then renames, so an interrupted stage never leaves a
// half-written artifact that looks complete.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace crowdlabel
