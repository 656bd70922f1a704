#include "docbin/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "docbin/errors.hpp"

namespace docbin {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <class N, class Field>
std::pair<std::string, Setter> num(const char* key, Field field) {
  return {key, [field](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = parse_number<N>(k, v);
          }};
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      num<int>("model.height", [](RunConfig& c) -> int& { return c.model.height; }),
      num<int>("model.width", [](RunConfig& c) -> int& { return c.model.width; }),
      num<int>("model.channels", [](RunConfig& c) -> int& { return c.model.channels; }),
      num<int>("model.patch", [](RunConfig& c) -> int& { return c.model.patch; }),
      num<int>("model.subpatch", [](RunConfig& c) -> int& { return c.model.subpatch; }),
      num<int>("model.dim", [](RunConfig& c) -> int& { return c.model.dim; }),
      num<int>("model.local_dim", [](RunConfig& c) -> int& { return c.model.local_dim; }),
      num<int>("model.heads_global", [](RunConfig& c) -> int& { return c.model.heads_global; }),
      num<int>("model.heads_local", [](RunConfig& c) -> int& { return c.model.heads_local; }),
      num<int>("model.heads_decoder", [](RunConfig& c) -> int& { return c.model.heads_decoder; }),
      num<int>("model.global_layers", [](RunConfig& c) -> int& { return c.model.global_layers; }),
      num<int>("model.local_layers", [](RunConfig& c) -> int& { return c.model.local_layers; }),
      num<int>("model.decoder_layers",
               [](RunConfig& c) -> int& { return c.model.decoder_layers; }),
      num<int>("model.mlp_dim_global",
               [](RunConfig& c) -> int& { return c.model.mlp_dim_global; }),
      num<int>("model.mlp_dim_local", [](RunConfig& c) -> int& { return c.model.mlp_dim_local; }),
      num<int>("model.mlp_dim_decoder",
               [](RunConfig& c) -> int& { return c.model.mlp_dim_decoder; }),
      num<double>("model.ln_eps", [](RunConfig& c) -> double& { return c.model.ln_eps; }),
      {"model.attn_residual",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.attn_residual = parse_bool(k, v);
       }},
      num<double>("train.learning_rate",
                  [](RunConfig& c) -> double& { return c.train.learning_rate; }),
      num<double>("train.adam_beta1", [](RunConfig& c) -> double& { return c.train.adam_beta1; }),
      num<double>("train.adam_beta2", [](RunConfig& c) -> double& { return c.train.adam_beta2; }),
      num<double>("train.adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; }),
      num<double>("train.weight_decay",
                  [](RunConfig& c) -> double& { return c.train.weight_decay; }),
      num<int>("train.batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; }),
      num<int>("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; }),
      num<int>("train.checkpoint_every",
               [](RunConfig& c) -> int& { return c.train.checkpoint_every; }),
      num<std::uint64_t>("train.seed",
                         [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }),
      {"paths.dataset_root",
       [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_root = v; }},
      {"paths.checkpoint",
       [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"paths.output_dir",
       [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      num<int>("run.held_out_year", [](RunConfig& c) -> int& { return c.held_out_year; }),
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, s] : setters()) keys.push_back(k);
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [k, setter] : setters()) {
    if (k == key) {
      setter(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig config;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(std::string_view(raw).substr(0, comment));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string name = trim(std::string_view(line).substr(0, eq));
    const std::string key = section.empty() ? name : section + "." + name;
    try {
      set_config_value(config, key, trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str(), path.string());
}

}  // namespace docbin
