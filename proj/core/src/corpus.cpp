#include "atlasground/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "atlasground/rng.hpp"

namespace atlasground {

using nlohmann::json;

namespace {

std::vector<std::string> split_tokens(const std::string& term) {
  std::vector<std::string> out;
  std::istringstream ss(term);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

struct GlossaryEntry {
  OrganId organ;
  std::vector<std::string> tokens;
};

// All organ terms, longest first; ties by organ id then lexicographic.
std::vector<GlossaryEntry> build_glossary(const OrganRegistry& registry) {
  std::vector<GlossaryEntry> out;
  for (const Organ& o : registry.organs())
    for (const std::string& term : o.terms()) {
      GlossaryEntry e{o.id, split_tokens(term)};
      if (!e.tokens.empty()) out.push_back(std::move(e));
    }
  std::stable_sort(out.begin(), out.end(),
                   [](const GlossaryEntry& a, const GlossaryEntry& b) {
                     if (a.tokens.size() != b.tokens.size())
                       return a.tokens.size() > b.tokens.size();
                     if (a.organ != b.organ) return a.organ < b.organ;
                     return a.tokens < b.tokens;
                   });
  return out;
}

}  // namespace

std::vector<TermOccurrence> find_term_occurrences(
    const std::vector<std::string>& tokens, const OrganRegistry& registry) {
  const std::vector<GlossaryEntry> glossary = build_glossary(registry);
  std::vector<TermOccurrence> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const GlossaryEntry* hit = nullptr;
    for (const GlossaryEntry& e : glossary) {
      if (i + e.tokens.size() > tokens.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < e.tokens.size(); ++k)
        if (tokens[i + k] != e.tokens[k]) {
          match = false;
          break;
        }
      if (match) {
        hit = &e;
        break;  // glossary is longest-first
      }
    }
    if (hit) {
      out.push_back({hit->organ, i, i + hit->tokens.size()});
      i += hit->tokens.size();
    } else {
      ++i;
    }
  }
  return out;
}

namespace {

std::set<std::string> all_term_tokens(const OrganRegistry& registry) {
  std::set<std::string> out;
  for (const Organ& o : registry.organs())
    for (const std::string& term : o.terms())
      for (const std::string& tok : split_tokens(term)) out.insert(tok);
  return out;
}

}  // namespace

std::vector<Document> generate_corpus(const Atlas& atlas,
                                      const CorpusSpec& spec) {
  const auto& organs = atlas.registry.organs();
  if (organs.size() < 2)
    throw std::invalid_argument("generate_corpus: atlas needs >= 2 organs");
  if (spec.docs_per_organ_single < 1 || spec.docs_per_organ_multi < 1)
    throw std::invalid_argument("generate_corpus: document counts must be >= 1");
  if (spec.bandwidth_mm <= 0)
    throw std::invalid_argument("generate_corpus: bandwidth must be > 0");
  if (spec.tokens_per_doc < 1)
    throw std::invalid_argument("generate_corpus: tokens_per_doc must be >= 1");

  std::vector<std::string> vocab = spec.filler_vocab;
  for (int i = 0; i < spec.filler_vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "filler%03d", i);
    vocab.push_back(buf);
  }
  // Filler tokens must not collide with organ terms, or self-supervised
  // targets would drift from the annotations.
  const std::set<std::string> reserved = all_term_tokens(atlas.registry);
  std::erase_if(vocab, [&](const std::string& t) { return reserved.count(t) > 0; });
  if (vocab.empty())
    throw std::invalid_argument("generate_corpus: filler vocabulary is empty");

  // Pairwise co-mention weights from centroid distances.
  std::vector<Vec3> centroids;
  for (const Organ& o : organs) centroids.push_back(organ_centroid(o));
  const double denom = 2.0 * spec.bandwidth_mm * spec.bandwidth_mm;
  std::vector<std::vector<double>> partner_w(organs.size());
  for (std::size_t i = 0; i < organs.size(); ++i) {
    partner_w[i].resize(organs.size());
    for (std::size_t j = 0; j < organs.size(); ++j) {
      if (i == j) {
        partner_w[i][j] = 0.0;
        continue;
      }
      const double d_mm =
          distance(centroids[i], centroids[j]) * atlas.resolution_mm;
      partner_w[i][j] = std::exp(-d_mm * d_mm / denom);
    }
    // Guard against total underflow at tiny bandwidths: keep the nearest
    // partner reachable.
    double total = 0.0;
    for (double w : partner_w[i]) total += w;
    if (total <= 0.0) {
      std::size_t nearest = i == 0 ? 1 : 0;
      for (std::size_t j = 0; j < organs.size(); ++j)
        if (j != i && distance(centroids[i], centroids[j]) <
                          distance(centroids[i], centroids[nearest]))
          nearest = j;
      partner_w[i][nearest] = 1.0;
    }
  }

  Rng rng = Rng::substream(spec.seed, "corpus");
  std::vector<Document> docs;
  std::set<std::vector<std::string>> seen;
  std::size_t next_id = 0;

  auto make_doc = [&](const std::set<OrganId>& annotations) {
    Document d;
    d.tokens.reserve(static_cast<std::size_t>(spec.tokens_per_doc) + 8);
    for (int t = 0; t < spec.tokens_per_doc; ++t)
      d.tokens.push_back(vocab[rng.uniform_index(vocab.size())]);
    for (OrganId id : annotations) {
      const Organ& o = atlas.registry.organ(id);
      const std::vector<std::string> terms = o.terms();
      const int k = 1 + static_cast<int>(rng.uniform_index(3));  // 1..3
      for (int occ = 0; occ < k; ++occ) {
        const std::string& term = terms[rng.uniform_index(terms.size())];
        const std::vector<std::string> term_toks = split_tokens(term);
        const std::size_t pos = rng.uniform_index(d.tokens.size() + 1);
        d.tokens.insert(d.tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                        term_toks.begin(), term_toks.end());
      }
    }
    d.annotations = annotations;
    return d;
  };

  auto push_unique = [&](const std::set<OrganId>& annotations) {
    // Occurrence-derived targets must equal the annotations; resample when
    // insertions split a multi-token term or the sequence repeats.
    for (int attempt = 0; attempt < 64; ++attempt) {
      Document d = make_doc(annotations);
      std::set<OrganId> found;
      for (const TermOccurrence& occ :
           find_term_occurrences(d.tokens, atlas.registry))
        found.insert(occ.organ);
      if (found != annotations) continue;
      if (!seen.insert(d.tokens).second) continue;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "d%06zu", next_id++);
      d.id = buf;
      docs.push_back(std::move(d));
      return;
    }
    throw std::runtime_error(
        "generate_corpus: could not build a consistent unique document");
  };

  for (std::size_t i = 0; i < organs.size(); ++i) {
    for (int n = 0; n < spec.docs_per_organ_single; ++n)
      push_unique({organs[i].id});
    for (int n = 0; n < spec.docs_per_organ_multi; ++n) {
      std::set<OrganId> ann{organs[i].id};
      // Two kernel draws, deduplicated.
      ann.insert(organs[rng.pick_weighted(partner_w[i])].id);
      ann.insert(organs[rng.pick_weighted(partner_w[i])].id);
      push_unique(ann);
    }
  }
  return docs;
}

CorpusSplit split_corpus(const std::vector<Document>& docs,
                         const std::array<double, 3>& fractions,
                         std::uint64_t seed) {
  if (docs.empty()) throw std::invalid_argument("split_corpus: empty corpus");
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_corpus: fractions must sum to 1");

  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::substream(seed, "split");
  rng.shuffle(order);

  const std::size_t n = docs.size();
  auto part = [&](double f) -> std::size_t {
    if (f <= 0.0) return 0;
    const std::size_t k = static_cast<std::size_t>(
        std::llround(f * static_cast<double>(n)));
    return std::max<std::size_t>(1, k);
  };
  const std::size_t n_val = part(fractions[1]);
  const std::size_t n_test = part(fractions[2]);
  if (n_val + n_test >= n && fractions[0] > 0.0)
    throw std::invalid_argument("split_corpus: corpus too small to split");

  CorpusSplit out;
  std::size_t i = 0;
  for (; i < n - n_val - n_test; ++i) out.train.push_back(docs[order[i]]);
  for (; i < n - n_test; ++i) out.val.push_back(docs[order[i]]);
  for (; i < n; ++i) out.test.push_back(docs[order[i]]);
  return out;
}

void save_corpus(const std::vector<Document>& docs,
                 const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write corpus " + path.string());
  for (const Document& d : docs) {
    json j = {{"id", d.id},
              {"tokens", d.tokens},
              {"annotations", std::vector<int>(d.annotations.begin(),
                                               d.annotations.end())}};
    f << j.dump() << "\n";
  }
}

std::vector<Document> load_corpus(const std::filesystem::path& path,
                                  const Atlas* validate_against) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read corpus " + path.string());
  std::vector<Document> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line);
    Document d;
    d.id = j.at("id").get<std::string>();
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (d.tokens.empty())
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": empty token list");
    for (int id : j.at("annotations").get<std::vector<int>>()) {
      if (validate_against && !validate_against->registry.has(static_cast<OrganId>(id)))
        throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                 ": unknown organ id " + std::to_string(id));
      d.annotations.insert(static_cast<OrganId>(id));
    }
    out.push_back(std::move(d));
  }
  return out;
}

CorpusSpec corpus_spec_from_json_text(const std::string& text) {
  json j = json::parse(text);
  CorpusSpec spec;
  spec.docs_per_organ_single = j.value("docs_per_organ_single", 500);
  spec.docs_per_organ_multi = j.value("docs_per_organ_multi", 500);
  spec.filler_vocab = j.value("filler_vocab", std::vector<std::string>{});
  spec.filler_vocab_size = j.value("filler_vocab_size", 0);
  spec.bandwidth_mm = j.value("bandwidth_mm", 25.0);
  spec.tokens_per_doc = j.value("tokens_per_doc", 30);
  spec.seed = j.value("seed", 0ull);
  return spec;
}

std::string corpus_spec_to_json_text(const CorpusSpec& spec) {
  json j = {{"docs_per_organ_single", spec.docs_per_organ_single},
            {"docs_per_organ_multi", spec.docs_per_organ_multi},
            {"filler_vocab", spec.filler_vocab},
            {"filler_vocab_size", spec.filler_vocab_size},
            {"bandwidth_mm", spec.bandwidth_mm},
            {"tokens_per_doc", spec.tokens_per_doc},
            {"seed", spec.seed}};
  return j.dump(2);
}

}  // namespace atlasground
