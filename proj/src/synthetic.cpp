#include "docgraph/synthetic.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <string_view>
#include <unordered_set>

#include "docgraph/error.hpp"

namespace docgraph::synth {
namespace {

constexpr std::array<std::string_view, 64> kWords = {
    "river",   "market", "signal",  "garden",  "engine",  "winter", "harbor",  "policy",
    "silver",  "forest", "report",  "village", "machine", "summer", "council", "bridge",
    "stone",   "ladder", "orbit",   "canvas",  "lantern", "meadow", "quarry",  "tunnel",
    "anchor",  "valley", "pocket",  "thunder", "copper",  "island", "mirror",  "saddle",
    "quietly", "slowly", "often",   "rarely",  "bright",  "narrow", "ancient", "hollow",
    "builds",  "keeps",  "follows", "carries", "answers", "moves",  "holds",   "turns",
    "the",     "a",      "every",   "some",    "near",    "under",  "beyond",  "across",
    "green",   "heavy",  "distant", "gentle",  "simple",  "steady", "patient", "open",
};

std::string make_sentence(SplitMix64& rng) {
  const std::size_t words = 5 + static_cast<std::size_t>(rng.below(8));
  std::string s;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) s += ' ';
    s += kWords[rng.below(kWords.size())];
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += '.';
  return s;
}

std::size_t length_between(SplitMix64& rng, std::size_t lo, std::size_t hi) {
  if (lo == 0 || lo > hi) throw Error("synthetic: bad sentence count range");
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

std::vector<std::string> random_sentences(SplitMix64& rng, std::size_t count) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  while (out.size() < count) {
    auto s = make_sentence(rng);
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

corpus::Document random_document(const std::string& id, std::uint32_t label, std::size_t sentences,
                                 std::uint64_t seed) {
  SplitMix64 rng(seed);
  return {id, label, random_sentences(rng, sentences)};
}

ClusteredCorpus make_clustered_corpus(const ClusterOptions& opts) {
  if (opts.num_classes < 2 || opts.num_classes > opts.dim)
    throw Error("synthetic: need 2 <= classes <= dim");
  SplitMix64 rng(opts.seed);
  ClusteredCorpus c;
  for (std::size_t i = 0; i < opts.documents; ++i) {
    const auto label = static_cast<std::uint32_t>(i % opts.num_classes);
    const auto n = length_between(rng, opts.min_sentences, opts.max_sentences);
    auto doc = random_document("doc-" + std::to_string(i), label, n, rng.next());
    auto emb = embed::synth_embeddings(doc, opts.dim, opts.seed);
    for (std::size_t r = 0; r < emb.n; ++r) {
      auto row = emb.row(r);
      if (opts.num_classes == 2)
        row[0] = static_cast<float>(row[0] + (label ? opts.separation : -opts.separation));
      else
        row[label] = static_cast<float>(row[label] + opts.separation);
      double norm = 0.0;
      for (float v : row) norm += double(v) * v;
      norm = std::sqrt(norm);
      for (float& v : row) v = static_cast<float>(v / norm);
    }
    c.documents.push_back(std::move(doc));
    c.embeddings.push_back(std::move(emb));
  }
  return c;
}

std::vector<corpus::RawDocument> make_raw_corpus(std::size_t documents, std::uint32_t num_classes,
                                                 std::size_t min_sentences, std::size_t max_sentences,
                                                 std::uint64_t seed) {
  if (num_classes == 0) throw Error("synthetic: need at least one class");
  SplitMix64 rng(seed);
  std::vector<corpus::RawDocument> out;
  for (std::size_t i = 0; i < documents; ++i) {
    const auto n = length_between(rng, min_sentences, max_sentences);
    std::string text;
    for (const auto& s : random_sentences(rng, n)) {
      if (!text.empty()) text += ' ';
      text += s;
    }
    out.push_back({"raw-" + std::to_string(i), static_cast<std::uint32_t>(i % num_classes), std::move(text)});
  }
  return out;
}

}  // namespace docgraph::synth
