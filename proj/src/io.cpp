#include "crowdlabel/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crowdlabel/error.hpp"
#include "crowdlabel/random.hpp"

namespace crowdlabel {

std::string header_json_line(const OutputHeader& header, const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json h;
  h["tool"] = kToolName;
  h["version"] = kToolVersion;
  h["stage"] = header.stage;
  h["config_hash"] = header.config_hash;
  h["seed"] = header.seed;
  h["input_digest"] = header.input_digest;
  for (const auto& [key, value] : extra.items()) h[key] = value;
  nlohmann::ordered_json line;
  line["_header"] = std::move(h);
  return line.dump();
}

std::string header_csv_line(const OutputHeader& header) {
  std::string line = "# ";
  line += kToolName;
  line += " ";
  line += kToolVersion;
  line += " stage=" + header.stage + " config_hash=" + header.config_hash + " seed=" + std::to_string(header.seed) +
          " inputs=" + header.input_digest;
  return line;
}

bool is_header_line(std::string_view line) {
  return line.rfind("{\"_header\"", 0) == 0 || line.rfind("# crowdlabel", 0) == 0;
}

std::optional<OutputHeader> read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!in || !std::getline(in, line)) return std::nullopt;
  OutputHeader header;
  if (line.rfind("{\"_header\"", 0) == 0) {
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.contains("_header")) return std::nullopt;
    const auto& h = doc["_header"];
    header.stage = h.value("stage", "");
    header.config_hash = h.value("config_hash", "");
    header.seed = h.value("seed", std::uint64_t{0});
    header.input_digest = h.value("input_digest", "");
    return header;
  }
  if (line.rfind("# crowdlabel", 0) == 0) {
    std::istringstream fields(line);
    std::string token;
    while (fields >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const auto key = token.substr(0, eq);
      const auto value = token.substr(eq + 1);
      if (key == "stage") header.stage = value;
      if (key == "config_hash") header.config_hash = value;
      if (key == "seed") header.seed = std::stoull(value);
      if (key == "inputs") header.input_digest = value;
    }
    return header;
  }
  return std::nullopt;
}

std::string hex_digest(std::string_view bytes) {
  // Two independent FNV-1a lanes give a 128-bit identifier; this is a
  // change detector, not a cryptographic hash.
  const std::uint64_t a = fnv1a(bytes);
  const std::uint64_t b = mix64(fnv1a(bytes, 0x84222325cbf29ce4ULL) ^ bytes.size());
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a), static_cast<unsigned long long>(b));
  return buf;
}

std::string file_digest(const std::vector<std::filesystem::path>& paths) {
  std::string all;
  for (const auto& p : paths) {
    std::error_code ec;
    if (std::filesystem::exists(p, ec)) all += read_file(p);
    all.push_back('\0');
  }
  return hex_digest(all);
}

std::string format_number(double value, int precision) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  std::string s = buf;
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
    // Avoid "-0.000000".
    if (!s.empty() && s[0] == '-') s.erase(0, 1);
  }
  return s;
}

std::string format_optional(const std::optional<double>& value, int precision) {
  return value ? format_number(*value, precision) : std::string();
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out_ << ',';
    first = false;
    out_ << '"';
    for (char c : f) {
      if (c == '"') out_ << '"';
      out_ << c;
    }
    out_ << '"';
  }
  out_ << '\n';
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  char c;
  bool any = false;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw IngestError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace crowdlabel
