#include "docgraph/graphgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "docgraph/error.hpp"

namespace docgraph::graph {

void FilterConfig::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw Error("filter delta must be finite and >= 0");
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

double mean_of(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

void check_row(std::span<const double> row) {
  if (row.empty()) throw Error("threshold: empty row");
}

}  // namespace

bool DocumentGraph::connected() const {
  if (nodes.empty()) return false;
  DisjointSets ds(nodes.size());
  std::size_t components = nodes.size();
  for (const auto& e : edges)
    if (e.u < nodes.size() && e.v < nodes.size() && ds.unite(e.u, e.v)) --components;
  return components == 1;
}

void DocumentGraph::validate() const {
  const std::string where = "graph '" + doc_id + "' (" + scheme + "): ";
  if (nodes.empty()) throw Error(where + "no nodes");
  std::unordered_set<std::string_view> texts;
  for (const auto& n : nodes) {
    if (!texts.insert(n.text).second) throw Error(where + "duplicate node text");
    if (n.feature.size() != nodes.front().feature.size()) throw Error(where + "feature dims differ");
  }
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : edges) {
    if (e.u == e.v) throw Error(where + "self-loop on node " + std::to_string(e.u));
    if (e.u > e.v) throw Error(where + "edge not in canonical (u < v) order");
    if (e.v >= nodes.size()) throw Error(where + "edge endpoint out of range");
    if (!std::isfinite(e.weight)) throw Error(where + "non-finite edge weight");
    if (!seen.insert((std::uint64_t{e.u} << 32) | e.v).second) throw Error(where + "duplicate edge");
  }
  if (!connected()) throw Error(where + "graph is not connected");
}

// --- statistical filtering -------------------------------------------------

double population_std(std::span<const double> row) {
  check_row(row);
  const double m = mean_of(row);
  double ss = 0.0;
  for (double v : row) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(row.size()));
}

double threshold_mean(std::span<const double> row, double delta) {
  check_row(row);
  return mean_of(row) + delta * population_std(row);
}

double threshold_max(std::span<const double> row, double delta) {
  check_row(row);
  return *std::max_element(row.begin(), row.end()) - delta * population_std(row);
}

double row_threshold(std::span<const double> row, const FilterConfig& cfg) {
  return cfg.strategy == FilterStrategy::MeanBound ? threshold_mean(row, cfg.delta)
                                                   : threshold_max(row, cfg.delta);
}

std::size_t RetentionSet::total() const {
  std::size_t t = 0;
  for (const auto& c : cols) t += c.size();
  return t;
}

RetentionSet filter_matrix(const ad::Matrix& a, const FilterConfig& cfg) {
  cfg.validate();
  if (a.rows != a.cols) throw ShapeError("filter_matrix: matrix is " + a.shape_str() + ", expected square");
  if (!ad::all_finite(a)) throw NumericError("filter_matrix: non-finite entry");
  RetentionSet r;
  r.cols.resize(a.rows);
  r.values.resize(a.rows);
  r.thresholds.resize(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto row = a.row(i);
    const double tau = row_threshold(row, cfg);
    r.thresholds[i] = tau;
    for (std::size_t j = 0; j < a.cols; ++j) {
      if (j != i && row[j] >= tau) {
        r.cols[i].push_back(j);
        r.values[i].push_back(row[j]);
      }
    }
  }
  return r;
}

// --- consolidation ---------------------------------------------------------

UniqueMap unique_sentences(std::span<const std::string> sentences) {
  UniqueMap m;
  std::unordered_map<std::string_view, std::size_t> index;
  m.node_of.reserve(sentences.size());
  for (std::size_t p = 0; p < sentences.size(); ++p) {
    auto [it, inserted] = index.emplace(sentences[p], m.texts.size());
    if (inserted) {
      m.texts.push_back(sentences[p]);
      m.first_position.push_back(p);
    }
    m.node_of.push_back(it->second);
  }
  return m;
}

bool MergedPairs::row_empty(std::size_t node) const {
  auto it = pairs.lower_bound({node, 0});
  return it == pairs.end() || it->first.first != node;
}

MergedPairs merge_duplicates(std::span<const std::string> sentences, const RetentionSet& retention,
                             const ad::Matrix& a) {
  if (retention.rows() != sentences.size() || a.rows != sentences.size() || a.cols != sentences.size())
    throw ShapeError("merge_duplicates: " + std::to_string(sentences.size()) + " sentences, retention over " +
                     std::to_string(retention.rows()) + " rows, matrix " + a.shape_str());
  MergedPairs m{unique_sentences(sentences), {}};
  for (std::size_t i = 0; i < retention.rows(); ++i) {
    for (std::size_t j : retention.cols[i]) {
      if (j >= sentences.size()) throw Error("merge_duplicates: retained column out of range");
      const std::size_t u = m.map.node_of[i];
      const std::size_t v = m.map.node_of[j];
      if (u == v) continue;
      const double w = a(i, j);
      auto [it, inserted] = m.pairs.emplace(std::make_pair(u, v), w);
      if (!inserted) it->second = std::max(it->second, w);
    }
  }
  return m;
}

Consolidated preserve_connectivity(const MergedPairs& merged, const ad::Matrix& a) {
  const auto& map = merged.map;
  const std::size_t n_nodes = map.nodes();
  const std::size_t n_pos = map.positions();
  if (a.rows != n_pos || a.cols != n_pos)
    throw ShapeError("preserve_connectivity: matrix " + a.shape_str() + " for " + std::to_string(n_pos) +
                     " sentences");

  std::map<std::pair<std::size_t, std::size_t>, double> und;
  auto put_max = [&](std::size_t u, std::size_t v, double w) {
    auto key = std::minmax(u, v);
    auto [it, inserted] = und.emplace(key, w);
    if (!inserted) it->second = std::max(it->second, w);
  };
  for (const auto& [key, w] : merged.pairs) put_max(key.first, key.second, w);

  Consolidated out;
  if (n_nodes > 1) {
    for (std::size_t u = 0; u < n_nodes; ++u) {
      if (!merged.row_empty(u)) continue;
      const std::size_t p = map.first_position[u];
      std::vector<std::size_t> nbrs;
      for (std::size_t q = p; q-- > 0;)
        if (map.node_of[q] != u) {
          nbrs.push_back(map.node_of[q]);
          break;
        }
      for (std::size_t q = p + 1; q < n_pos; ++q)
        if (map.node_of[q] != u) {
          nbrs.push_back(map.node_of[q]);
          break;
        }
      if (nbrs.size() == 2 && nbrs[0] == nbrs[1]) nbrs.pop_back();

      Repair rep{u, a(p, p), {}};
      const double w = rep.self_weight / static_cast<double>(nbrs.size());
      for (std::size_t v : nbrs) {
        rep.added.push_back({u, v, w});
        put_max(u, v, w);
      }
      out.repairs.push_back(std::move(rep));
    }

    DisjointSets ds(n_nodes);
    for (const auto& [key, w] : und) ds.unite(key.first, key.second);
    for (std::size_t p = 0; p + 1 < n_pos; ++p) {
      const std::size_t u = map.node_of[p];
      const std::size_t v = map.node_of[p + 1];
      if (u == v || !ds.unite(u, v)) continue;
      const double w = a(p, p) / 2.0;
      out.bridges.push_back({std::min(u, v), std::max(u, v), w});
      put_max(u, v, w);
    }
  }

  out.edges.reserve(und.size());
  for (const auto& [key, w] : und) out.edges.push_back({key.first, key.second, w});
  return out;
}

// --- builders --------------------------------------------------------------

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Complete: return "complete";
    case Scheme::Order: return "order";
    case Scheme::Window: return "window";
    case Scheme::SemanticMean: return "semantic-mean";
    case Scheme::SemanticMax: return "semantic-max";
    case Scheme::LearnedMean: return "learned-mean";
    case Scheme::LearnedMax: return "learned-max";
  }
  return "?";
}

std::optional<Scheme> scheme_from_name(std::string_view name) {
  for (Scheme s : kAllSchemes)
    if (scheme_name(s) == name) return s;
  return std::nullopt;
}

bool is_learned(Scheme s) { return s == Scheme::LearnedMean || s == Scheme::LearnedMax; }

FilterStrategy scheme_strategy(Scheme s) {
  return (s == Scheme::SemanticMax || s == Scheme::LearnedMax) ? FilterStrategy::MaxBound
                                                                 : FilterStrategy::MeanBound;
}

namespace {

void check_inputs(const corpus::Document& doc, const embed::EmbeddedDocument& emb) {
  if (doc.sentences.empty()) throw Error("document '" + doc.id + "' has no sentences");
  if (emb.n != doc.size())
    throw ShapeError("document '" + doc.id + "': " + std::to_string(doc.size()) + " sentences but " +
                     std::to_string(emb.n) + " embedding rows");
  if (emb.values.size() != emb.n * emb.d) throw ShapeError("document '" + doc.id + "': embedding payload size");
}

std::string filtered_tag(std::string_view base, double delta) {
  std::ostringstream s;
  s << base << "(delta=" << delta << ")";
  return s.str();
}

DocumentGraph skeleton(const corpus::Document& doc, const embed::EmbeddedDocument& emb, const UniqueMap& map,
                       std::string scheme) {
  DocumentGraph g{doc.id, doc.label, std::move(scheme), {}, {}};
  g.nodes.reserve(map.nodes());
  for (std::size_t u = 0; u < map.nodes(); ++u) {
    const auto row = emb.row(map.first_position[u]);
    g.nodes.push_back({map.texts[u], {row.begin(), row.end()}});
  }
  return g;
}

DocumentGraph from_matrix(const corpus::Document& doc, const embed::EmbeddedDocument& emb, const ad::Matrix& a,
                          const FilterConfig& cfg, std::string scheme) {
  check_inputs(doc, emb);
  if (a.rows != doc.size() || a.cols != doc.size())
    throw ShapeError("document '" + doc.id + "': matrix " + a.shape_str() + " for " +
                     std::to_string(doc.size()) + " sentences");
  const auto retention = filter_matrix(a, cfg);
  const auto merged = merge_duplicates(doc.sentences, retention, a);
  const auto consolidated = preserve_connectivity(merged, a);
  auto g = skeleton(doc, emb, merged.map, std::move(scheme));
  for (const auto& e : consolidated.edges)
    g.edges.push_back({static_cast<std::uint32_t>(e.u), static_cast<std::uint32_t>(e.v),
                       static_cast<float>(e.weight)});
  g.validate();
  return g;
}

// Binary edges between positions at distance 1..span, unique-mapped.
DocumentGraph positional(const corpus::Document& doc, const embed::EmbeddedDocument& emb, std::size_t span,
                         std::string scheme) {
  check_inputs(doc, emb);
  const auto map = unique_sentences(doc.sentences);
  auto g = skeleton(doc, emb, map, std::move(scheme));
  std::map<std::pair<std::size_t, std::size_t>, bool> keys;
  for (std::size_t p = 0; p < map.positions(); ++p)
    for (std::size_t q = p + 1; q < map.positions() && q - p <= span; ++q) {
      const auto u = map.node_of[p];
      const auto v = map.node_of[q];
      if (u != v) keys.emplace(std::minmax(u, v), true);
    }
  for (const auto& [k, _] : keys)
    g.edges.push_back({static_cast<std::uint32_t>(k.first), static_cast<std::uint32_t>(k.second), 1.0f});
  g.validate();
  return g;
}

}  // namespace

DocumentGraph build_learned(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                            const ad::Matrix& attention, const FilterConfig& cfg) {
  for (double v : attention.data)
    if (v < 0.0) throw Error("document '" + doc.id + "': attention matrix has a negative entry");
  const auto base = cfg.strategy == FilterStrategy::MeanBound ? scheme_name(Scheme::LearnedMean)
                                                                : scheme_name(Scheme::LearnedMax);
  return from_matrix(doc, emb, attention, cfg, filtered_tag(base, cfg.delta));
}

DocumentGraph build_complete(const corpus::Document& doc, const embed::EmbeddedDocument& emb) {
  return positional(doc, emb, doc.size(), std::string(scheme_name(Scheme::Complete)));
}

DocumentGraph build_order(const corpus::Document& doc, const embed::EmbeddedDocument& emb) {
  return positional(doc, emb, 1, std::string(scheme_name(Scheme::Order)));
}

DocumentGraph build_window(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                           std::size_t half_width) {
  if (half_width < 1) throw Error("window half-width must be >= 1");
  return positional(doc, emb, half_width, std::string(scheme_name(Scheme::Window)));
}

ad::Matrix similarity_matrix(const embed::EmbeddedDocument& emb) {
  ad::Matrix s(emb.n, emb.n);
  for (std::size_t i = 0; i < emb.n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < emb.n; ++j) s(i, j) = s(j, i) = embed::cosine(emb.row(i), emb.row(j));
  }
  if (emb.n == 1) (void)embed::cosine(emb.row(0), emb.row(0));  // rejects a zero row
  return s;
}

DocumentGraph build_semantic(const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                             const FilterConfig& cfg) {
  check_inputs(doc, emb);
  const auto base = cfg.strategy == FilterStrategy::MeanBound ? scheme_name(Scheme::SemanticMean)
                                                                : scheme_name(Scheme::SemanticMax);
  return from_matrix(doc, emb, similarity_matrix(emb), cfg, filtered_tag(base, cfg.delta));
}

DocumentGraph build_heuristic(Scheme s, const corpus::Document& doc, const embed::EmbeddedDocument& emb,
                              double delta) {
  switch (s) {
    case Scheme::Complete: return build_complete(doc, emb);
    case Scheme::Order: return build_order(doc, emb);
    case Scheme::Window: return build_window(doc, emb);
    case Scheme::SemanticMean:
    case Scheme::SemanticMax: return build_semantic(doc, emb, {scheme_strategy(s), delta});
    case Scheme::LearnedMean:
    case Scheme::LearnedMax: break;
  }
  throw Error("scheme '" + std::string(scheme_name(s)) + "' needs an attention matrix");
}

}  // namespace docgraph::graph
