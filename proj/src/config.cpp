#include "moka/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "moka/metrics.hpp"

namespace moka {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(int line, const std::string& message) {
  throw ConfigError("line " + std::to_string(line) + ": " + message);
}

std::int64_t to_int(const ConfigEntry& e) {
  std::int64_t value = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) fail(e.line, "key '" + e.key + "': expected an integer, got '" + e.value + "'");
  return value;
}

double to_double(const ConfigEntry& e) {
  double value = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) fail(e.line, "key '" + e.key + "': expected a number, got '" + e.value + "'");
  return value;
}

bool to_bool(const ConfigEntry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  fail(e.line, "key '" + e.key + "': expected true or false, got '" + e.value + "'");
}

PairShape parse_pair_section(const ConfigSection& section) {
  PairShape shape;
  std::set<std::string> seen;
  for (const ConfigEntry& e : section.entries) {
    if (!seen.insert(e.key).second) fail(e.line, "duplicate key '" + e.key + "' in [pair]");
    if (e.key == "m_a") shape.m_a = to_int(e);
    else if (e.key == "n_a") shape.n_a = to_int(e);
    else if (e.key == "m_b") shape.m_b = to_int(e);
    else if (e.key == "n_b") shape.n_b = to_int(e);
    else if (e.key == "identity_a") shape.identity_a = to_bool(e);
    else fail(e.line, "unknown key '" + e.key + "' in [pair]");
  }
  if (shape.m_a < 1 || shape.n_a < 1 || shape.m_b < 1 || shape.n_b < 1) {
    fail(section.line, "[pair]: all of m_a, n_a, m_b, n_b must be >= 1");
  }
  if (shape.identity_a && shape.m_a != shape.n_a) {
    fail(section.line, "[pair]: identity_a requires m_a == n_a");
  }
  return shape;
}

}  // namespace

FlatConfig parse_flat_config(const std::string& text) {
  FlatConfig config;
  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  ConfigSection* current = nullptr;
  while (std::getline(stream, raw)) {
    ++line_no;
    std::string line = raw;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) fail(line_no, "empty section name");
      config.sections.push_back({line_no, name, {}});
      current = &config.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "key '" + key + "': empty value");
    (current ? current->entries : config.globals).push_back({line_no, key, value});
  }
  return config;
}

TrainRunConfig parse_train_config(const std::string& text) {
  const FlatConfig flat = parse_flat_config(text);
  TrainRunConfig config;
  std::set<std::string> seen;
  bool has_task = false;
  for (const ConfigEntry& e : flat.globals) {
    if (!seen.insert(e.key).second) fail(e.line, "duplicate key '" + e.key + "'");
    if (e.key == "seed") config.seed = static_cast<std::uint64_t>(to_int(e));
    else if (e.key == "eta") config.eta = to_double(e);
    else if (e.key == "steps") config.steps = static_cast<int>(to_int(e));
    else if (e.key == "batch_size") config.batch_size = static_cast<int>(to_int(e));
    else if (e.key == "record_every") config.record_every = static_cast<int>(to_int(e));
    else if (e.key == "task") { config.task = e.value; has_task = true; }
    else if (e.key == "m") config.m = to_int(e);
    else if (e.key == "n") config.n = to_int(e);
    else if (e.key == "probes") config.probes = to_int(e);
    else if (e.key == "rho") config.rho = to_double(e);
    else if (e.key == "seq_len") config.seq_len = to_int(e);
    else if (e.key == "model_dim") config.model_dim = to_int(e);
    else if (e.key == "gated") config.gated = to_bool(e);
    else fail(e.line, "unknown key '" + e.key + "'");
  }
  for (const ConfigSection& section : flat.sections) {
    if (section.name != "pair") fail(section.line, "unknown section [" + section.name + "] in a train config");
    config.pairs.push_back(parse_pair_section(section));
  }

  if (!has_task) throw ConfigError("key 'task' is required");
  if (config.task != "planted" && config.task != "frozen_linear" && config.task != "toy_attention") {
    throw ConfigError("key 'task': unknown task '" + config.task + "'");
  }
  if (config.eta <= 0.0) throw ConfigError("key 'eta': must be positive");
  if (config.steps < 1) throw ConfigError("key 'steps': must be >= 1");
  if (config.batch_size < 1) throw ConfigError("key 'batch_size': must be >= 1");
  if (config.record_every < 1) throw ConfigError("key 'record_every': must be >= 1");
  if (config.probes < 1) throw ConfigError("key 'probes': must be >= 1");
  if (config.pairs.empty()) throw ConfigError("at least one [pair] section is required");
  if (config.task == "toy_attention") {
    if (config.seq_len < 1) throw ConfigError("key 'seq_len': must be >= 1");
    if (config.model_dim < 1) throw ConfigError("key 'model_dim': must be >= 1");
  } else {
    if (config.m < 1) throw ConfigError("key 'm': must be >= 1");
    if (config.n < 1) throw ConfigError("key 'n': must be >= 1");
  }
  if (config.rho < 0.0) throw ConfigError("key 'rho': must be >= 0");
  return config;
}

namespace {

void write_pair(std::ostringstream& out, const PairShape& shape) {
  out << "[pair]\n";
  out << "m_a = " << shape.m_a << "\n";
  out << "n_a = " << shape.n_a << "\n";
  out << "m_b = " << shape.m_b << "\n";
  out << "n_b = " << shape.n_b << "\n";
  out << "identity_a = " << (shape.identity_a ? "true" : "false") << "\n";
}

}  // namespace

std::string serialize_train_config(const TrainRunConfig& config) {
  std::ostringstream out;
  out << "task = " << config.task << "\n";
  out << "seed = " << config.seed << "\n";
  out << "eta = " << format_f64(config.eta) << "\n";
  out << "steps = " << config.steps << "\n";
  out << "batch_size = " << config.batch_size << "\n";
  out << "record_every = " << config.record_every << "\n";
  out << "m = " << config.m << "\n";
  out << "n = " << config.n << "\n";
  out << "probes = " << config.probes << "\n";
  out << "rho = " << format_f64(config.rho) << "\n";
  out << "seq_len = " << config.seq_len << "\n";
  out << "model_dim = " << config.model_dim << "\n";
  out << "gated = " << (config.gated ? "true" : "false") << "\n";
  for (const PairShape& shape : config.pairs) write_pair(out, shape);
  return out.str();
}

ShapeConfig parse_shape_config(const std::string& text) {
  const FlatConfig flat = parse_flat_config(text);
  ShapeConfig config;
  config.model_name = "custom";
  config.variant = "custom";
  std::set<std::string> seen;
  for (const ConfigEntry& e : flat.globals) {
    if (!seen.insert(e.key).second) fail(e.line, "duplicate key '" + e.key + "'");
    if (e.key == "model_name") config.model_name = e.value;
    else if (e.key == "variant") config.variant = e.value;
    else if (e.key == "layer_count") config.layer_count = to_int(e);
    else fail(e.line, "unknown key '" + e.key + "'");
  }
  for (const ConfigSection& section : flat.sections) {
    if (section.name == "projection") {
      ProjectionSpec proj;
      std::set<std::string> keys;
      for (const ConfigEntry& e : section.entries) {
        if (!keys.insert(e.key).second) fail(e.line, "duplicate key '" + e.key + "' in [projection]");
        if (e.key == "name") proj.name = e.value;
        else if (e.key == "m") proj.m = to_int(e);
        else if (e.key == "n") proj.n = to_int(e);
        else fail(e.line, "unknown key '" + e.key + "' in [projection]");
      }
      if (proj.name.empty()) fail(section.line, "[projection]: key 'name' is required");
      if (proj.m < 1 || proj.n < 1) fail(section.line, "[projection]: m and n must be >= 1");
      config.projections.push_back(proj);
      config.pair_shapes.emplace_back();
    } else if (section.name == "pair") {
      if (config.projections.empty()) fail(section.line, "[pair] before any [projection]");
      config.pair_shapes.back().push_back(parse_pair_section(section));
    } else {
      fail(section.line, "unknown section [" + section.name + "] in a shape config");
    }
  }
  if (config.layer_count < 1) throw ConfigError("key 'layer_count': must be >= 1");
  if (config.projections.empty()) throw ConfigError("at least one [projection] section is required");
  for (std::size_t p = 0; p < config.projections.size(); ++p) {
    if (config.pair_shapes[p].empty()) {
      throw ConfigError("projection '" + config.projections[p].name + "' has no [pair] sections");
    }
  }
  return config;
}

std::string serialize_shape_config(const ShapeConfig& config) {
  std::ostringstream out;
  out << "model_name = " << config.model_name << "\n";
  out << "variant = " << config.variant << "\n";
  out << "layer_count = " << config.layer_count << "\n";
  for (std::size_t p = 0; p < config.projections.size(); ++p) {
    const ProjectionSpec& proj = config.projections[p];
    out << "[projection]\n";
    out << "name = " << proj.name << "\n";
    out << "m = " << proj.m << "\n";
    out << "n = " << proj.n << "\n";
    for (const PairShape& shape : config.pair_shapes[p]) write_pair(out, shape);
  }
  return out.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << stream.rdbuf();
  return buffer.str();
}

}  // namespace moka
