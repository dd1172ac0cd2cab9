#include "genrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace genrec {

const ItemRecord& ItemCatalog::at(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw std::runtime_error("unknown item id: " + id);
  return items[it->second];
}

void ItemCatalog::add(ItemRecord rec) {
  if (index.count(rec.item_id)) throw std::runtime_error("duplicate item id: " + rec.item_id);
  if (!items.empty() && rec.embedding.size() != items[0].embedding.size())
    throw std::runtime_error("embedding dimension mismatch for item: " + rec.item_id);
  for (double x : rec.embedding)
    if (!std::isfinite(x)) throw std::runtime_error("non-finite embedding for item: " + rec.item_id);
  index.emplace(rec.item_id, items.size());
  items.push_back(std::move(rec));
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream iss(s);
  int v;
  while (iss >> v) out.push_back(v);
  return out;
}

std::string format_double(double v) {
  std::ostringstream oss;
  oss.precision(17);
  oss << v;
  return oss.str();
}

}  // namespace

// Catalog line: item_id \t emb0,emb1,... [\t concept_id [\t text token ids]]
ItemCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalog file: " + path);
  ItemCatalog catalog;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 2 || fields[0].empty())
      throw std::runtime_error("malformed catalog line " + std::to_string(lineno));
    ItemRecord rec;
    rec.item_id = fields[0];
    for (const auto& part : split(fields[1], ',')) {
      try {
        std::size_t pos = 0;
        rec.embedding.push_back(std::stod(part, &pos));
        if (pos != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw std::runtime_error("malformed embedding on catalog line " + std::to_string(lineno));
      }
    }
    if (fields.size() >= 3 && !fields[2].empty()) rec.concept_id = std::stoi(fields[2]);
    if (fields.size() >= 4 && !fields[3].empty()) rec.text_tokens = parse_int_list(fields[3]);
    try {
      catalog.add(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(e.what()) + " (catalog line " + std::to_string(lineno) + ")");
    }
  }
  return catalog;
}

void save_catalog(const ItemCatalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write catalog file: " + path);
  for (const auto& rec : catalog.items) {
    out << rec.item_id << '\t';
    for (std::size_t i = 0; i < rec.embedding.size(); ++i) {
      if (i) out << ',';
      out << format_double(rec.embedding[i]);
    }
    out << '\t';
    if (rec.concept_id >= 0) out << rec.concept_id;
    out << '\t';
    for (std::size_t i = 0; i < rec.text_tokens.size(); ++i) {
      if (i) out << ' ';
      out << rec.text_tokens[i];
    }
    out << '\n';
  }
}

// Interactions line: user_id \t item ids space-separated [\t attr tokens \t interest tokens]
std::vector<InteractionSequence> load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interactions file: " + path);
  std::vector<InteractionSequence> seqs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 2 || fields[0].empty())
      throw std::runtime_error("malformed interactions line " + std::to_string(lineno));
    InteractionSequence seq;
    seq.user_id = fields[0];
    std::istringstream iss(fields[1]);
    std::string id;
    while (iss >> id) seq.items.push_back(id);
    if (fields.size() >= 4) {
      Persona p;
      p.attribute_tokens = parse_int_list(fields[2]);
      p.interest_tokens = parse_int_list(fields[3]);
      seq.persona = std::move(p);
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

void save_interactions(const std::vector<InteractionSequence>& seqs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write interactions file: " + path);
  for (const auto& seq : seqs) {
    out << seq.user_id << '\t';
    for (std::size_t i = 0; i < seq.items.size(); ++i) {
      if (i) out << ' ';
      out << seq.items[i];
    }
    if (seq.persona) {
      out << '\t';
      for (std::size_t i = 0; i < seq.persona->attribute_tokens.size(); ++i) {
        if (i) out << ' ';
        out << seq.persona->attribute_tokens[i];
      }
      out << '\t';
      for (std::size_t i = 0; i < seq.persona->interest_tokens.size(); ++i) {
        if (i) out << ' ';
        out << seq.persona->interest_tokens[i];
      }
    }
    out << '\n';
  }
}

void save_world_truth(const WorldTruth& world, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write world file: " + path);
  out << "noise\t" << format_double(world.transition_noise) << '\n';
  for (const auto& c : world.concept_centers) {
    out << "center";
    for (double x : c) out << '\t' << format_double(x);
    out << '\n';
  }
  for (const auto& m : world.user_interest_mixtures) {
    out << "mixture";
    for (double x : m) out << '\t' << format_double(x);
    out << '\n';
  }
  for (const auto& ic : world.interaction_concepts) {
    out << "concepts";
    for (int c : ic) out << '\t' << c;
    out << '\n';
  }
}

WorldTruth load_world_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open world file: " + path);
  WorldTruth world;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    const std::string& tag = fields[0];
    if (tag == "noise") {
      world.transition_noise = std::stod(fields[1]);
    } else if (tag == "center" || tag == "mixture") {
      std::vector<double> row;
      for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
      (tag == "center" ? world.concept_centers : world.user_interest_mixtures).push_back(std::move(row));
    } else if (tag == "concepts") {
      std::vector<int> row;
      for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stoi(fields[i]));
      world.interaction_concepts.push_back(std::move(row));
    } else {
      throw std::runtime_error("unknown world record: " + tag);
    }
  }
  return world;
}

SyntheticWorld synthesize_world(const SynthConfig& config, std::uint64_t seed) {
  if (config.n_concepts < 1 || config.items_per_concept < 1)
    throw std::runtime_error("synthesize_world: need at least one concept and one item per concept");
  if (config.n_users < 1) throw std::runtime_error("synthesize_world: need at least one user");
  if (config.seq_len_min < 3) throw std::runtime_error("synthesize_world: sequence lengths must be >= 3");
  if (config.transition_noise < 0.0 || config.transition_noise >= 1.0)
    throw std::runtime_error("synthesize_world: transition_noise must lie in [0, 1)");
  if (config.n_text < config.n_concepts)
    throw std::runtime_error("synthesize_world: text vocabulary too small for concept tokens");

  Rng rng(seed);
  SyntheticWorld world;
  world.truth.transition_noise = config.transition_noise;

  for (int c = 0; c < config.n_concepts; ++c) {
    std::vector<double> center(config.d_item);
    for (double& x : center) x = config.concept_scale * rng.gaussian();
    world.truth.concept_centers.push_back(std::move(center));
  }

  // Items: embedding scattered around the concept center; caption = concept
  // token followed by item-specific tokens from the general text range.
  std::vector<std::vector<std::size_t>> concept_items(config.n_concepts);
  for (int c = 0; c < config.n_concepts; ++c) {
    for (int j = 0; j < config.items_per_concept; ++j) {
      ItemRecord rec;
      rec.item_id = "i" + std::to_string(c) + "_" + std::to_string(j);
      rec.concept_id = c;
      rec.embedding.resize(config.d_item);
      for (int k = 0; k < config.d_item; ++k)
        rec.embedding[k] = world.truth.concept_centers[c][k] + config.item_std * rng.gaussian();
      rec.text_tokens.push_back(c);
      int general = config.n_text - config.n_concepts;
      for (int k = 1; k < config.caption_len && general > 0; ++k)
        rec.text_tokens.push_back(config.n_concepts + static_cast<int>(rng.uniform_int(general)));
      concept_items[c].push_back(world.catalog.size());
      world.catalog.add(std::move(rec));
    }
  }

  for (int u = 0; u < config.n_users; ++u) {
    std::vector<double> mixture(config.n_concepts);
    double total = 0.0;
    for (double& w : mixture) {
      w = rng.gamma(config.mixture_alpha);
      total += w;
    }
    for (double& w : mixture) w /= total;

    InteractionSequence seq;
    seq.user_id = "u" + std::to_string(u);
    int len = config.seq_len_min +
              static_cast<int>(rng.uniform_int(config.seq_len_max - config.seq_len_min + 1));
    std::vector<int> concepts;
    for (int t = 0; t < len; ++t) {
      if (rng.uniform() < config.transition_noise) {
        // Noise interaction: uniform over the whole catalog.
        std::size_t idx = rng.uniform_int(world.catalog.size());
        seq.items.push_back(world.catalog.items[idx].item_id);
        concepts.push_back(-1);
      } else {
        int c = static_cast<int>(rng.categorical(mixture));
        std::size_t idx = concept_items[c][rng.uniform_int(concept_items[c].size())];
        seq.items.push_back(world.catalog.items[idx].item_id);
        concepts.push_back(c);
      }
    }

    Persona persona;
    int general = config.n_text - config.n_concepts;
    for (int k = 0; k < 2 && general > 0; ++k)
      persona.attribute_tokens.push_back(config.n_concepts + static_cast<int>(rng.uniform_int(general)));
    std::vector<int> order(config.n_concepts);
    for (int c = 0; c < config.n_concepts; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mixture[a] > mixture[b]; });
    for (int k = 0; k < std::min(2, config.n_concepts); ++k) persona.interest_tokens.push_back(order[k]);
    seq.persona = std::move(persona);

    world.truth.user_interest_mixtures.push_back(std::move(mixture));
    world.truth.interaction_concepts.push_back(std::move(concepts));
    world.sequences.push_back(std::move(seq));
  }
  return world;
}

SplitDataset leave_one_out_split(const std::vector<InteractionSequence>& seqs) {
  SplitDataset split;
  for (const auto& seq : seqs) {
    if (seq.items.size() < 3) {
      ++split.skipped;
      continue;
    }
    std::size_t n = seq.items.size();
    InteractionSequence train = seq;
    train.items.assign(seq.items.begin(), seq.items.end() - 2);
    split.train.push_back(std::move(train));
    split.valid.push_back({seq.user_id,
                           std::vector<std::string>(seq.items.begin(), seq.items.end() - 2),
                           seq.items[n - 2]});
    split.test.push_back({seq.user_id,
                          std::vector<std::string>(seq.items.begin(), seq.items.end() - 1),
                          seq.items[n - 1]});
  }
  return split;
}

std::vector<std::string> truncate_history(const std::vector<std::string>& items, int max_len) {
  if (max_len < 1) throw std::runtime_error("truncate_history: max_len must be >= 1");
  if (static_cast<int>(items.size()) <= max_len) return items;
  return std::vector<std::string>(items.end() - max_len, items.end());
}

InteractionSequence truncate_history(const InteractionSequence& seq, int max_len) {
  InteractionSequence out = seq;
  out.items = truncate_history(seq.items, max_len);
  return out;
}

}  // namespace genrec
