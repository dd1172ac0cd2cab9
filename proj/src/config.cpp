#include "genrec/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace genrec {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> table = {
      {"seed", "1"},

      {"world.n_concepts", "4"},
      {"world.items_per_concept", "50"},
      {"world.n_users", "1000"},
      {"world.d_item", "16"},
      {"world.seq_len_min", "8"},
      {"world.seq_len_max", "24"},
      {"world.noise", "0.3"},
      {"world.concept_scale", "4.0"},
      {"world.item_std", "1.0"},
      {"world.mixture_alpha", "0.3"},
      {"world.n_text", "32"},
      {"world.caption_len", "4"},
      {"world.min_interactions", "3"},

      // Empty paths mean "synthesize from world.*"; otherwise load TSVs.
      {"data.catalog", ""},
      {"data.interactions", ""},

      {"codebook.levels", "3"},
      {"codebook.k", "8,8,8"},
      {"codebook.max_iters", "50"},

      {"model.d", "64"},
      {"model.layers", "2"},
      {"model.heads", "4"},
      {"model.p_max", "512"},
      {"model.ff_mult", "4"},

      {"train.warmup_steps", "150"},
      {"train.warmup_lr", "0.01"},
      {"train.integrate_steps", "600"},
      {"train.integrate_lr", "0.001"},
      {"train.batch_size", "16"},
      {"train.clip_norm", "1.0"},

      {"align.persona", "0.2430"},
      {"align.sequential", "0.6573"},
      {"align.captioning", "0.0494"},
      {"align.general_lm", "0.0503"},
      {"align.max_history", "12"},
      {"align.persona_max_items", "8"},
      {"align.general_len", "16"},

      {"sft.steps", "300"},
      {"sft.lr", "0.001"},
      {"sft.batch_size", "16"},
      {"sft.samples", "512"},
      {"sft.retrieve_k", "8"},
      {"sft.m_max", "16"},
      {"sft.teacher", "oracle"},  // oracle | model

      {"rl.updates", "40"},
      {"rl.group_size", "16"},
      {"rl.beam_width", "32"},
      {"rl.lr", "1e-05"},
      {"rl.kl_coeff", "0.001"},
      {"rl.clip_ratio", "0.2"},
      {"rl.epochs", "2"},
      {"rl.temperature", "1.0"},
      {"rl.m_max", "16"},
      {"rl.prompts_per_update", "16"},
      {"rl.minibatch_prompts", "4"},
      {"rl.prompt_pool", "128"},

      {"eval.beam_width", "10"},
      {"eval.max_history", "12"},

      {"serve.paths", "4"},
      {"serve.beam_width", "8"},
      {"serve.top_k", "10"},
      {"serve.users", "100"},

      {"ablate.seeds", "1,2,3"},
  };
  return table;
}

RunConfig RunConfig::make_default() {
  RunConfig cfg;
  cfg.values = defaults();
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (defaults().find(key) == defaults().end())
    throw std::runtime_error("unknown config key: " + key);
  values[key] = value;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  RunConfig cfg = make_default();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw std::runtime_error("unknown config key: " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("config key " + key + " is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("config key " + key + " is not a number: " + get(key));
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("config key " + key + " is not an unsigned integer: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config key " + key + " is not a boolean: " + v);
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream ss(get(key));
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      out.push_back(std::stoi(part));
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config key " + key + " has a non-integer element: " + part);
    }
  }
  if (out.empty()) throw std::runtime_error("config key " + key + " is an empty list");
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (int v : get_int_list(key)) {
    if (v < 0) throw std::runtime_error("config key " + key + " has a negative element");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

void RunConfig::write_resolved(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write resolved config: " + path);
  for (const auto& [k, v] : values) out << k << " = " << v << '\n';
  if (!out) throw std::runtime_error("failed writing resolved config: " + path);
}

}  // namespace genrec
