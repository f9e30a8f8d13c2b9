#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "docgraph/corpus.hpp"

namespace docgraph::embed {

// Per-sentence embeddings of one document, n x d, row-major.
struct EmbeddedDocument {
  std::string id;
  std::uint32_t label = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * d, d}; }

  // Throws FormatError unless n, d >= 1, the payload size matches and every
  // entry is finite.
  void validate() const;

  friend bool operator==(const EmbeddedDocument&, const EmbeddedDocument&) = default;
};

inline constexpr char kEmbeddingMagic[4] = {'D', 'G', 'E', 'M'};
inline constexpr std::uint16_t kFormatVersion = 1;

// DGEM container:
//   magic "DGEM" | version u16 | d u32 | doc_count u64 |
//   per doc: id_len u16 | id bytes | label u32 | n u32 | n*d float32
// All integers little-endian; floats row-major.
std::string encode_embeddings(const std::vector<EmbeddedDocument>& docs);
std::vector<EmbeddedDocument> decode_embeddings(std::string_view bytes);

// Returns the number of bytes written.
std::size_t write_embeddings(const std::vector<EmbeddedDocument>& docs, const std::string& path);
std::vector<EmbeddedDocument> read_embeddings(const std::string& path);

// Deterministic stand-in for the sentence encoder: each row depends only on
// (sentence text, seed, d) and is unit-normalized.
std::vector<float> synth_sentence_embedding(std::string_view sentence, std::size_t d,
                                            std::uint64_t seed);
EmbeddedDocument synth_embeddings(const corpus::Document& doc, std::size_t d, std::uint64_t seed);

// Cosine similarity; throws on a zero vector or a length mismatch.
double cosine(std::span<const float> u, std::span<const float> v);

}  // namespace docgraph::embed
