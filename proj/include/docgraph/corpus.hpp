#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace docgraph::corpus {

struct RawDocument {
  std::string id;
  std::uint32_t label = 0;
  std::string text;
};

// A labeled document after cleaning, sentence splitting, merging and truncation.
struct Document {
  std::string id;
  std::uint32_t label = 0;
  std::vector<std::string> sentences;

  std::size_t size() const { return sentences.size(); }
};

struct SplitFractions {
  double train = 0.72;
  double val = 0.08;
  double test = 0.20;
};

struct DatasetMeta {
  std::string name;
  std::uint32_t num_classes = 2;
  std::size_t truncation_cap = 1800;
  SplitFractions fractions;

  void validate() const;
};

// Presets for the three evaluation corpora: "bbc", "hnd", "arxiv".
std::optional<DatasetMeta> preset(std::string_view name);

inline constexpr std::size_t kMinSentenceWords = 5;

// Drops control characters, collapses whitespace runs to one space and trims.
// Letter case is preserved.
std::string clean_text(std::string_view raw);

std::size_t word_count(std::string_view s);

// Rule-based splitter. A boundary follows '.', '!' or '?' (plus any closing
// quotes or brackets) when the next token starts with an uppercase letter or
// digit, unless the terminated token is on the abbreviation guard list.
std::vector<std::string> split_sentences(std::string_view text);

// The compiled-in guard list (lowercase tokens with their trailing period).
const std::vector<std::string>& abbreviations();

// Sentences with fewer than `min_words` words are appended to their
// predecessor; a short first sentence is prepended to its successor.
std::vector<std::string> merge_short(std::vector<std::string> sentences,
                                     std::size_t min_words = kMinSentenceWords);

std::vector<std::string> truncate(std::vector<std::string> sentences, std::size_t cap);

// clean -> split -> merge -> truncate. Throws when the cleaned text is empty.
Document prepare(const RawDocument& raw, std::size_t cap,
                 std::size_t min_words = kMinSentenceWords);

struct DedupResult {
  std::vector<RawDocument> unique;
  std::size_t removed = 0;
};

// Removes documents whose cleaned text equals an earlier document's.
DedupResult remove_duplicates(std::vector<RawDocument> docs);

enum class Split { Train, Val, Test };
const char* to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitAssignment {
  std::string id;
  Split split = Split::Train;
};

// Seeded random partition. With `predefined_test`, those ids form the test
// split and only a validation carve-out of `fractions.val / (train + val)` of
// the remaining documents is drawn.
template <class Doc>
std::vector<SplitAssignment> split_dataset(const std::vector<Doc>& docs, const DatasetMeta& meta,
                                           std::uint64_t seed,
                                           const std::vector<std::string>* predefined_test = nullptr);

// JSON-lines I/O. Parse errors name the offending line number.
std::vector<RawDocument> read_raw_jsonl(const std::string& path);
void write_documents_jsonl(const std::vector<Document>& docs, const std::string& path);
std::vector<Document> read_documents_jsonl(const std::string& path);
void write_splits_jsonl(const std::vector<SplitAssignment>& splits, const std::string& path);
std::vector<SplitAssignment> read_splits_jsonl(const std::string& path);

}  // namespace docgraph::corpus
