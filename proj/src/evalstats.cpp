#include "docgraph/evalstats.hpp"

#include <cmath>
#include <json.hpp>

#include "docgraph/detail/binio.hpp"
#include "docgraph/error.hpp"
#include "docgraph/graphio.hpp"

namespace docgraph::stats {

Metrics compute_metrics(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> labels,
                        std::size_t num_classes) {
  if (preds.size() != labels.size())
    throw Error("compute_metrics: " + std::to_string(preds.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  if (preds.empty()) throw Error("compute_metrics: no examples");
  if (num_classes == 0) throw Error("compute_metrics: K must be > 0");
  Metrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= num_classes || preds[i] >= num_classes)
      throw Error("compute_metrics: class index " + std::to_string(std::max(labels[i], preds[i])) +
                  " out of range for K=" + std::to_string(num_classes));
    ++m.confusion[labels[i]][preds[i]];
  }
  std::size_t correct = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    correct += m.confusion[k][k];
    std::size_t predicted = 0, actual = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      predicted += m.confusion[j][k];
      actual += m.confusion[k][j];
    }
    const double tp = static_cast<double>(m.confusion[k][k]);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double r = actual ? tp / static_cast<double>(actual) : 0.0;
    m.per_class_f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  m.macro_f1 = macro_average(m.per_class_f1);
  return m;
}

double macro_average(std::span<const double> per_class) {
  if (per_class.empty()) throw Error("macro_average: no classes");
  double s = 0.0;
  for (double v : per_class) s += v;
  return s / static_cast<double>(per_class.size());
}

GraphStats graph_stats(const std::vector<graph::DocumentGraph>& graphs, std::size_t disk_bytes) {
  if (graphs.empty()) throw Error("graph_stats: no graphs");
  GraphStats s;
  s.count = graphs.size();
  for (const auto& g : graphs) {
    if (g.nodes.empty()) throw Error("graph_stats: graph '" + g.doc_id + "' has no nodes");
    const double n = static_cast<double>(g.nodes.size());
    const double e = static_cast<double>(g.directed_entries());
    s.avg_nodes += n;
    s.avg_edges += e;
    s.avg_degree += e / n;
  }
  const double c = static_cast<double>(graphs.size());
  s.avg_nodes /= c;
  s.avg_edges /= c;
  s.avg_degree /= c;
  s.disk_bytes = disk_bytes;
  return s;
}

GraphStats graph_stats(const std::vector<graph::DocumentGraph>& graphs) {
  return graph_stats(graphs, graph::encode_graphs_jsonl(graphs).size());
}

std::string report_json(const Report& r) {
  nlohmann::ordered_json j;
  j["scheme"] = r.scheme;
  j["dataset"] = r.dataset;
  j["accuracy"] = r.metrics.accuracy;
  j["macro_f1"] = r.metrics.macro_f1;
  j["per_class_f1"] = r.metrics.per_class_f1;
  j["avg_nodes"] = r.graphs.avg_nodes;
  j["avg_edges"] = r.graphs.avg_edges;
  j["avg_degree"] = r.graphs.avg_degree;
  j["disk_bytes"] = r.graphs.disk_bytes;
  return j.dump(2) + "\n";
}

ad::Matrix adjacency_matrix(const graph::DocumentGraph& g) {
  const std::size_t n = g.nodes.size();
  ad::Matrix a(n, n);
  for (const auto& e : g.edges) {
    if (e.u >= n || e.v >= n) throw Error("adjacency_matrix: edge endpoint out of range");
    a(e.u, e.v) = e.weight;
    a(e.v, e.u) = e.weight;
  }
  return a;
}

RenderMode render_mode_from_string(std::string_view s) {
  if (s == "weighted") return RenderMode::Weighted;
  if (s == "binarized") return RenderMode::Binarized;
  throw Error("unknown render mode '" + std::string(s) + "' (expected weighted or binarized)");
}

std::string render_pgm(const ad::Matrix& m, RenderMode mode) {
  if (m.empty()) throw Error("render: empty matrix");
  if (!ad::all_finite(m)) throw NumericError("render: non-finite matrix entry");
  double max = 0.0;
  for (double v : m.data) {
    if (v < 0.0) throw Error("render: negative matrix entry");
    max = std::max(max, v);
  }
  std::string out = "P5\n" + std::to_string(m.cols) + " " + std::to_string(m.rows) + "\n255\n";
  out.reserve(out.size() + m.size());
  for (double v : m.data) {
    long px = 255;
    if (mode == RenderMode::Binarized)
      px = v != 0.0 ? 0 : 255;
    else if (max > 0.0)
      px = std::lround(255.0 * (1.0 - v / max));
    out.push_back(static_cast<char>(static_cast<unsigned char>(px)));
  }
  return out;
}

void render_adjacency(const graph::DocumentGraph& g, RenderMode mode, const std::string& path) {
  detail::write_file(path, render_pgm(adjacency_matrix(g), mode));
}

}  // namespace docgraph::stats
