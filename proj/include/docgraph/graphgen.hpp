#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "docgraph/autodiff.hpp"
#include "docgraph/corpus.hpp"
#include "docgraph/embedstore.hpp"

namespace docgraph::graph {

enum class FilterStrategy { MeanBound, MaxBound };

struct FilterConfig {
  FilterStrategy strategy = FilterStrategy::MeanBound;
  double delta = 0.5;

  void validate() const;
};

struct Node {
  std::string text;
  std::vector<float> feature;

  friend bool operator==(const Node&, const Node&) = default;
};

// Undirected edge, canonical u < v.
struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  float weight = 1.0f;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct DocumentGraph {
  std::string doc_id;
  std::uint32_t label = 0;
  std::string scheme;
  std::vector<Node> nodes;
  std::vector<Edge> edges;

  std::size_t directed_entries() const { return 2 * edges.size(); }
  std::size_t feature_dim() const { return nodes.empty() ? 0 : nodes.front().feature.size(); }
  bool connected() const;
  // Throws Error unless: >= 1 node, distinct node texts, equal feature dims,
  // canonical unique edges in range, no self-loops, finite weights, connected.
  void validate() const;

  friend bool operator==(const DocumentGraph&, const DocumentGraph&) = default;
};

// --- statistical filtering -------------------------------------------------

// Population standard deviation (divisor n).
double population_std(std::span<const double> row);
// mean(row) + delta * std(row)
double threshold_mean(std::span<const double> row, double delta);
// max(row) - delta * std(row)
double threshold_max(std::span<const double> row, double delta);
double row_threshold(std::span<const double> row, const FilterConfig& cfg);

// Row-wise retained columns (diagonal excluded) with their values.
struct RetentionSet {
  std::vector<std::vector<std::size_t>> cols;
  std::vector<std::vector<double>> values;
  std::vector<double> thresholds;

  std::size_t rows() const { return cols.size(); }
  std::size_t total() const;
  bool row_empty(std::size_t i) const { return cols[i].empty(); }
};

// tau_i comes from the full row i, diagonal included; entry (i, j) is kept
// when j != i and A(i, j) >= tau_i.
RetentionSet filter_matrix(const ad::Matrix& a, const FilterConfig& cfg);

// --- consolidation ---------------------------------------------------------

// Sentence positions mapped onto unique-text nodes, in first-occurrence order.
struct UniqueMap {
  std::vector<std::string> texts;            // per node
  std::vector<std::size_t> first_position;   // per node
  std::vector<std::size_t> node_of;          // per position

  std::size_t nodes() const { return texts.size(); }
  std::size_t positions() const { return node_of.size(); }
};

UniqueMap unique_sentences(std::span<const std::string> sentences);

// Retained pairs remapped to nodes. Directed (u, v) keys; collisions keep the
// maximum weight; pairs collapsing onto one node are dropped.
struct MergedPairs {
  UniqueMap map;
  std::map<std::pair<std::size_t, std::size_t>, double> pairs;

  bool row_empty(std::size_t node) const;
};

MergedPairs merge_duplicates(std::span<const std::string> sentences, const RetentionSet& retention,
                             const ad::Matrix& a);

struct WeightedPair {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;
};

// A node whose row retained nothing, linked to its neighbouring sentences.
struct Repair {
  std::size_t node = 0;
  double self_weight = 0.0;  // alpha_uu at the node's first position
  std::vector<WeightedPair> added;
};

struct Consolidated {
  std::vector<WeightedPair> edges;  // undirected, u < v, sorted
  std::vector<Repair> repairs;
  std::vector<WeightedPair> bridges;  // residual-disconnection fixes
};

// Symmetrizes retained pairs (max of both directions), links every node with
// an empty row to its preceding / following sentence with alpha_uu / 2 each
// (a boundary node gets one edge with the full alpha_uu), then bridges any
// remaining components through consecutive sentences.
Consolidated preserve_connectivity(const MergedPairs& merged, const ad::Matrix& a);

// --- builders --------------------------------------------------------------

enum class Scheme { Complete, Order, Window, SemanticMean, SemanticMax, LearnedMean, LearnedMax };

inline constexpr Scheme kAllSchemes[] = {Scheme::Complete,     Scheme::Order,       Scheme::Window,
                                         Scheme::SemanticMean, Scheme::SemanticMax, Scheme::LearnedMean,
                                         Scheme::LearnedMax};

std::string_view scheme_name(Scheme s);
std::optional<Scheme> scheme_from_name(std::string_view name);
bool is_learned(Scheme s);
FilterStrategy scheme_strategy(Scheme s);

// Learned graph from an n x n attention matrix.
DocumentGraph build_learned(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                            const ad::Matrix& attention, const FilterConfig& cfg);
DocumentGraph build_complete(const corpus::Document& doc, const embed::EmbeddedDocument& emb);
DocumentGraph build_order(const corpus::Document& doc, const embed::EmbeddedDocument& emb);
DocumentGraph build_window(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                           std::size_t half_width = 2);
DocumentGraph build_semantic(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                             const FilterConfig& cfg);

// Pairwise cosine similarities of the embedding rows, unit diagonal.
ad::Matrix similarity_matrix(const embed::EmbeddedDocument& emb);

// Heuristic schemes only (learned ones need an attention matrix).
DocumentGraph build_heuristic(Scheme s, const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                              double delta);

}  // namespace docgraph::graph
