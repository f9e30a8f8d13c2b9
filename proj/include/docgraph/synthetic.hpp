#pragma once

// Seed-fixed synthetic corpora for tests, demos and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

#include "docgraph/corpus.hpp"
#include "docgraph/embedstore.hpp"
#include "docgraph/rng.hpp"

namespace docgraph::synth {

// `count` distinct sentences of 5 to 12 lowercase words, capitalized and
// ending in a period.
std::vector<std::string> random_sentences(SplitMix64& rng, std::size_t count);

corpus::Document random_document(const std::string& id, std::uint32_t label, std::size_t sentences,
                                 std::uint64_t seed);

struct ClusterOptions {
  std::size_t documents = 100;
  std::uint32_t num_classes = 2;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 10;
  std::size_t dim = 64;
  // Pull towards the class axis before normalization: -/+ on coordinate 0
  // for two classes, + on coordinate `label` otherwise.
  double separation = 1.0;
  std::uint64_t seed = 0;
};

struct ClusteredCorpus {
  std::vector<corpus::Document> documents;
  std::vector<embed::EmbeddedDocument> embeddings;
};

// Labels cycle through the classes; every sentence embedding is a unit
// vector pulled towards its class direction.
ClusteredCorpus make_clustered_corpus(const ClusterOptions& opts);

// Raw labeled texts for the prep stage.
std::vector<corpus::RawDocument> make_raw_corpus(std::size_t documents, std::uint32_t num_classes,
                                                 std::size_t min_sentences, std::size_t max_sentences,
                                                 std::uint64_t seed);

}  // namespace docgraph::synth
