#include <toml.hpp>

#include <fstream>
#include <sstream>

#include "fleetledger/bench.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger::bench {

using nlohmann::json;

std::vector<BenchConfig> parse_sweep_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "sweep file must be a table/object");
  BenchConfig defaults;
  if (j.contains("defaults")) defaults = BenchConfig::from_json(j.at("defaults"));
  const char* key = j.contains("runs") ? "runs" : "run";
  std::vector<BenchConfig> out;
  if (!j.contains(key)) return out;
  const auto& runs = j.at(key);
  if (!runs.is_array()) throw Error(ErrorCode::invalid_argument, "sweep runs must be a list");
  for (const auto& r : runs) {
    out.push_back(BenchConfig::from_json(r, defaults));
    out.back().validate();
  }
  return out;
}

std::vector<BenchConfig> parse_sweep_toml(std::string_view text) {
  toml::table table;
  try {
    table = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "sweep file: " << e.description() << " at line " << e.source().begin.line;
    throw Error(ErrorCode::invalid_argument, os.str());
  }
  std::ostringstream os;
  os << toml::json_formatter{table};
  return parse_sweep_json(json::parse(os.str()));
}

std::vector<BenchConfig> load_sweep(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (file.extension() == ".json") {
    try {
      return parse_sweep_json(json::parse(buf.str()));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::invalid_argument, std::string("sweep file: ") + e.what());
    }
  }
  return parse_sweep_toml(buf.str());
}

}  // namespace fleetledger::bench
