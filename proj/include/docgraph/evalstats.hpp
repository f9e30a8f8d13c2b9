#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "docgraph/autodiff.hpp"
#include "docgraph/graphgen.hpp"

namespace docgraph::stats {

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

// Per-class F1 is 2PR/(P+R), or 0 when P+R = 0; macro-F1 averages all K
// classes, including ones absent from both lists.
Metrics compute_metrics(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> labels,
                        std::size_t num_classes);

double macro_average(std::span<const double> per_class);

struct GraphStats {
  std::size_t count = 0;
  double avg_nodes = 0.0;
  double avg_edges = 0.0;   // directed entries, 2x undirected edges
  double avg_degree = 0.0;  // mean over graphs of directed entries / nodes
  std::size_t disk_bytes = 0;
};

// disk_bytes is the JSON-lines serialization size unless given.
GraphStats graph_stats(const std::vector<graph::DocumentGraph>& graphs);
GraphStats graph_stats(const std::vector<graph::DocumentGraph>& graphs, std::size_t disk_bytes);

struct Report {
  std::string scheme;
  std::string dataset;
  Metrics metrics;
  GraphStats graphs;
};

// {scheme, dataset, accuracy, macro_f1, per_class_f1, avg_nodes, avg_edges,
//  avg_degree, disk_bytes}, pretty-printed with a trailing newline.
std::string report_json(const Report& r);

// Symmetric weighted adjacency in node order; zero diagonal.
ad::Matrix adjacency_matrix(const graph::DocumentGraph& g);

enum class RenderMode { Weighted, Binarized };

RenderMode render_mode_from_string(std::string_view s);

// Binary PGM (P5), one pixel per cell. Weighted maps [0, max] linearly onto
// [255, 0]; binarized maps nonzero to 0 and zero to 255.
std::string render_pgm(const ad::Matrix& m, RenderMode mode);
void render_adjacency(const graph::DocumentGraph& g, RenderMode mode, const std::string& path);

}  // namespace docgraph::stats
