#include "docgraph/graphio.hpp"

#include <limits>

#include <json.hpp>

#include "docgraph/detail/binio.hpp"
#include "docgraph/embedstore.hpp"
#include "docgraph/error.hpp"

namespace docgraph::graph {

namespace {

// float-valued JSON so features print in shortest float32 form.
using fjson = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, float>;

constexpr char kMagic[4] = {'D', 'G', 'G', 'R'};

}  // namespace

std::string to_json_line(const DocumentGraph& g) {
  fjson nodes = fjson::array();
  for (const auto& n : g.nodes) nodes.push_back(fjson{{"text", n.text}, {"feat", n.feature}});
  fjson edges = fjson::array();
  for (const auto& e : g.edges) edges.push_back(fjson::array({e.u, e.v, e.weight}));
  fjson j{{"doc_id", g.doc_id}, {"label", g.label}, {"scheme", g.scheme}, {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
  return j.dump();
}

DocumentGraph from_json_line(std::string_view line) {
  try {
    const auto j = fjson::parse(line);
    DocumentGraph g;
    g.doc_id = j.at("doc_id").get<std::string>();
    g.label = j.at("label").get<std::uint32_t>();
    g.scheme = j.at("scheme").get<std::string>();
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("text").get<std::string>(), n.at("feat").get<std::vector<float>>()});
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw Error("edge must be [i, j, w]");
      g.edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>(), e[2].get<float>()});
    }
    return g;
  } catch (const fjson::exception& e) {
    throw FormatError(FormatErrc::Malformed, e.what());
  }
}

std::string encode_graphs_jsonl(const std::vector<DocumentGraph>& graphs) {
  std::string out;
  for (const auto& g : graphs) {
    out += to_json_line(g);
    out += '\n';
  }
  return out;
}

std::vector<DocumentGraph> decode_graphs_jsonl(std::string_view text) {
  std::vector<DocumentGraph> out;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(from_json_line(line));
      out.back().validate();
    } catch (const Error& e) {
      throw FormatError(FormatErrc::Malformed, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string encode_graphs_binary(const std::vector<DocumentGraph>& graphs) {
  const std::size_t d = graphs.empty() ? 0 : graphs.front().feature_dim();
  detail::ByteWriter w;
  w.magic({kMagic, 4});
  w.u16(embed::kFormatVersion);
  w.u32(static_cast<std::uint32_t>(d));
  w.u64(graphs.size());
  for (const auto& g : graphs) {
    if (g.feature_dim() != d)
      throw FormatError(FormatErrc::MixedDimensions, "graph '" + g.doc_id + "' feature dim differs");
    if (g.doc_id.size() > std::numeric_limits<std::uint16_t>::max() ||
        g.scheme.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError(FormatErrc::Malformed, "graph id or scheme too long");
    w.u16(static_cast<std::uint16_t>(g.doc_id.size()));
    w.bytes(g.doc_id.data(), g.doc_id.size());
    w.u32(g.label);
    w.u16(static_cast<std::uint16_t>(g.scheme.size()));
    w.bytes(g.scheme.data(), g.scheme.size());
    w.u32(static_cast<std::uint32_t>(g.nodes.size()));
    for (const auto& n : g.nodes) {
      w.u32(static_cast<std::uint32_t>(n.text.size()));
      w.bytes(n.text.data(), n.text.size());
    }
    for (const auto& n : g.nodes) w.floats(n.feature);
    w.u32(static_cast<std::uint32_t>(g.edges.size()));
    for (const auto& e : g.edges) {
      w.u32(e.u);
      w.u32(e.v);
      w.f32(e.weight);
    }
  }
  return w.take();
}

std::vector<DocumentGraph> decode_graphs_binary(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4))
    throw FormatError(FormatErrc::BadMagic, "not a DGGR graph file");
  detail::ByteReader r(bytes);
  r.str(4, "magic");
  const auto version = r.u16("version");
  if (version != embed::kFormatVersion)
    throw FormatError(FormatErrc::VersionMismatch, "DGGR version " + std::to_string(version) + " is not supported");
  const std::size_t d = r.u32("dimension");
  const auto count = r.u64("graph count");
  std::vector<DocumentGraph> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    DocumentGraph g;
    g.doc_id = r.str(r.u16("id length"), "id");
    g.label = r.u32("label");
    g.scheme = r.str(r.u16("scheme length"), "scheme");
    const std::size_t n = r.u32("node count");
    g.nodes.resize(n);
    for (auto& node : g.nodes) node.text = r.str(r.u32("text length"), "node text");
    for (auto& node : g.nodes) {
      node.feature.resize(d);
      r.floats(node.feature, "node features");
    }
    const std::size_t m = r.u32("edge count");
    r.need(m * 12, "edges");
    for (std::size_t e = 0; e < m; ++e) {
      Edge edge;
      edge.u = r.u32("edge");
      edge.v = r.u32("edge");
      edge.weight = r.f32("edge");
      g.edges.push_back(edge);
    }
    try {
      g.validate();
    } catch (const Error& e) {
      throw FormatError(FormatErrc::Malformed, e.what());
    }
    out.push_back(std::move(g));
  }
  if (!r.at_end()) throw FormatError(FormatErrc::Malformed, "trailing bytes after last graph");
  return out;
}

std::size_t write_graphs(const std::vector<DocumentGraph>& graphs, const std::string& path, GraphFormat format) {
  const auto bytes = format == GraphFormat::Binary ? encode_graphs_binary(graphs) : encode_graphs_jsonl(graphs);
  detail::write_file(path, bytes);
  return bytes.size();
}

std::vector<DocumentGraph> read_graphs(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    if (bytes.size() >= 4 && std::string_view(bytes).substr(0, 4) == std::string_view(kMagic, 4))
      return decode_graphs_binary(bytes);
    return decode_graphs_jsonl(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path + ": " + e.what());
  }
}

}  // namespace docgraph::graph
