#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "docgraph/graphgen.hpp"

namespace docgraph::graph {

// One graph per line:
//   {"doc_id", "label", "scheme", "nodes": [{"text", "feat": [f32...]}], "edges": [[i, j, w]...]}
std::string to_json_line(const DocumentGraph& g);
DocumentGraph from_json_line(std::string_view line);

std::string encode_graphs_jsonl(const std::vector<DocumentGraph>& graphs);
std::vector<DocumentGraph> decode_graphs_jsonl(std::string_view text);

// DGGR binary container (DGEM conventions, little-endian):
//   magic "DGGR" | version u16 | d u32 | graph_count u64 |
//   per graph: id_len u16 | id | label u32 | scheme_len u16 | scheme |
//              node_count u32 | per node: text_len u32 | text |
//              node_count*d float32 features | edge_count u32 | (u32, u32, f32) per edge
std::string encode_graphs_binary(const std::vector<DocumentGraph>& graphs);
std::vector<DocumentGraph> decode_graphs_binary(std::string_view bytes);

enum class GraphFormat { JsonLines, Binary };

// Returns bytes written.
std::size_t write_graphs(const std::vector<DocumentGraph>& graphs, const std::string& path,
                         GraphFormat format = GraphFormat::JsonLines);
// Detects the format from the leading magic bytes. Every graph is validated.
std::vector<DocumentGraph> read_graphs(const std::string& path);

}  // namespace docgraph::graph
