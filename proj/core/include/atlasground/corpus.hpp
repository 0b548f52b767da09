#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "atlasground/atlas.hpp"

namespace atlasground {

struct Document {
  std::string id;
  std::vector<std::string> tokens;  // lowercase
  std::set<OrganId> annotations;    // may be empty in self-supervised use
};

struct CorpusSpec {
  int docs_per_organ_single = 500;
  int docs_per_organ_multi = 500;
  std::vector<std::string> filler_vocab;  // explicit list; see filler_vocab_size
  int filler_vocab_size = 0;              // generates filler000.. when set
  double bandwidth_mm = 25.0;  // co-mention kernel width over centroid distance
  int tokens_per_doc = 30;     // filler tokens; organ terms are added on top
  std::uint64_t seed = 0;
};

// Synthetic corpus: per organ, `single` documents annotated with it alone and
// `multi` documents annotated with it plus partners drawn with probability
// proportional to exp(-centroid_distance^2 / (2 bandwidth^2)). Every
// annotated organ contributes 1-3 occurrences of its name or a synonym.
// Duplicate token sequences are dropped. Deterministic per spec.seed.
std::vector<Document> generate_corpus(const Atlas& atlas, const CorpusSpec& spec);

struct CorpusSplit {
  std::vector<Document> train, val, test;
};

// Seeded shuffle, then sizes: val and test get max(1, round(n*fraction))
// when their fraction is positive, train keeps the remainder.
CorpusSplit split_corpus(const std::vector<Document>& docs,
                         const std::array<double, 3>& fractions,
                         std::uint64_t seed);

struct TermOccurrence {
  OrganId organ;
  std::size_t begin;  // token span [begin, end)
  std::size_t end;
};

// Longest-match-first, non-overlapping token subsequence matching against
// every organ's canonical name and synonyms.
std::vector<TermOccurrence> find_term_occurrences(
    const std::vector<std::string>& tokens, const OrganRegistry& registry);

// JSONL, one record per line: {"id", "tokens", "annotations"}.
void save_corpus(const std::vector<Document>& docs,
                 const std::filesystem::path& path);
std::vector<Document> load_corpus(const std::filesystem::path& path,
                                  const Atlas* validate_against = nullptr);

CorpusSpec corpus_spec_from_json_text(const std::string& text);
std::string corpus_spec_to_json_text(const CorpusSpec& spec);

}  // namespace atlasground
