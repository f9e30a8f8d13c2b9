#include "docgraph/embedstore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "docgraph/detail/binio.hpp"
#include "docgraph/error.hpp"
#include "docgraph/rng.hpp"

namespace docgraph {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::BadMagic: return "bad magic";
    case FormatErrc::VersionMismatch: return "version mismatch";
    case FormatErrc::TruncatedPayload: return "truncated payload";
    case FormatErrc::NonFiniteValue: return "non-finite value";
    case FormatErrc::MixedDimensions: return "mixed dimensions";
    case FormatErrc::Malformed: return "malformed input";
  }
  return "format error";
}

namespace detail {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

namespace embed {

void EmbeddedDocument::validate() const {
  if (n < 1 || d < 1)
    throw FormatError(FormatErrc::Malformed, "document '" + id + "' has an empty embedding matrix");
  if (values.size() != n * d)
    throw FormatError(FormatErrc::Malformed, "document '" + id + "' payload size mismatch");
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!std::isfinite(values[k]))
      throw FormatError(FormatErrc::NonFiniteValue,
                        "document '" + id + "' row " + std::to_string(k / d) + " col " +
                            std::to_string(k % d));
}

std::string encode_embeddings(const std::vector<EmbeddedDocument>& docs) {
  const std::size_t d = docs.empty() ? 0 : docs.front().d;
  detail::ByteWriter w;
  w.magic({kEmbeddingMagic, 4});
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(d));
  w.u64(docs.size());
  for (const auto& doc : docs) {
    if (doc.d != d)
      throw FormatError(FormatErrc::MixedDimensions,
                        "document '" + doc.id + "' has d=" + std::to_string(doc.d) +
                            ", expected " + std::to_string(d));
    doc.validate();
    if (doc.id.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError(FormatErrc::Malformed, "document id too long");
    w.u16(static_cast<std::uint16_t>(doc.id.size()));
    w.bytes(doc.id.data(), doc.id.size());
    w.u32(doc.label);
    w.u32(static_cast<std::uint32_t>(doc.n));
    w.floats(doc.values);
  }
  return w.take();
}

std::vector<EmbeddedDocument> decode_embeddings(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kEmbeddingMagic, 4))
    throw FormatError(FormatErrc::BadMagic, "not a DGEM embedding file");
  r.str(4, "magic");
  const auto version = r.u16("version");
  if (version != kFormatVersion)
    throw FormatError(FormatErrc::VersionMismatch,
                      "DGEM version " + std::to_string(version) + " is not supported");
  const std::size_t d = r.u32("dimension");
  const auto count = r.u64("document count");
  std::vector<EmbeddedDocument> docs;
  for (std::uint64_t k = 0; k < count; ++k) {
    EmbeddedDocument doc;
    doc.id = r.str(r.u16("id length"), "id");
    doc.label = r.u32("label");
    doc.n = r.u32("row count");
    doc.d = d;
    r.need(doc.n * d * sizeof(float), "embedding rows");
    doc.values.resize(doc.n * d);
    r.floats(doc.values, "embedding rows");
    doc.validate();
    docs.push_back(std::move(doc));
  }
  if (!r.at_end())
    throw FormatError(FormatErrc::Malformed,
                      std::to_string(r.remaining()) + " trailing bytes after last document");
  return docs;
}

std::size_t write_embeddings(const std::vector<EmbeddedDocument>& docs, const std::string& path) {
  const auto bytes = encode_embeddings(docs);
  detail::write_file(path, bytes);
  return bytes.size();
}

std::vector<EmbeddedDocument> read_embeddings(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_embeddings(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path + ": " + e.what());
  }
}

std::vector<float> synth_sentence_embedding(std::string_view sentence, std::size_t d,
                                            std::uint64_t seed) {
  if (d < 1) throw Error("embedding dimension must be >= 1");
  SplitMix64 rng(mix_seed(fnv1a64(sentence), seed));
  std::vector<double> v(d);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = rng.uniform(-1.0, 1.0);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

EmbeddedDocument synth_embeddings(const corpus::Document& doc, std::size_t d, std::uint64_t seed) {
  EmbeddedDocument e{doc.id, doc.label, doc.size(), d, {}};
  e.values.reserve(e.n * d);
  for (const auto& s : doc.sentences) {
    const auto row = synth_sentence_embedding(s, d, seed);
    e.values.insert(e.values.end(), row.begin(), row.end());
  }
  return e;
}

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw ShapeError("cosine: vectors differ in length");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw NumericError("cosine: zero-norm vector");
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace embed
}  // namespace docgraph
