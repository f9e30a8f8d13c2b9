#include "docgraph/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "docgraph/error.hpp"
#include "docgraph/rng.hpp"

namespace docgraph::corpus {

namespace {

constexpr const char* kAbbreviationData =
#include "abbreviations.inc"
    ;

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_closing(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opening(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }
bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::vector<std::string_view> tokens(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_ascii_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

bool ends_sentence(std::string_view tok, std::string_view next) {
  while (!tok.empty() && is_closing(tok.back())) tok.remove_suffix(1);
  if (tok.empty() || !is_terminator(tok.back())) return false;
  while (!next.empty() && is_opening(next.front())) next.remove_prefix(1);
  if (next.empty()) return false;
  const char first = next.front();
  if (!((first >= 'A' && first <= 'Z') || (first >= '0' && first <= '9'))) return false;
  if (tok.back() != '.') return true;

  while (!tok.empty() && is_opening(tok.front())) tok.remove_prefix(1);
  // Initials such as "J." in "J. Smith".
  if (tok.size() == 2 && tok[0] >= 'A' && tok[0] <= 'Z') return false;
  const auto& guard = abbreviations();
  return !std::binary_search(guard.begin(), guard.end(), lower_ascii(tok));
}

std::string join(std::string_view a, std::string_view b) {
  std::string out;
  out.reserve(a.size() + b.size() + 1);
  out.append(a);
  out.push_back(' ');
  out.append(b);
  return out;
}

nlohmann::json parse_line(const std::string& line, std::size_t lineno, const std::string& path) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::Malformed,
                      path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

template <class F>
void for_each_jsonl(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = parse_line(line, lineno, path);
    try {
      f(j);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatErrc::Malformed,
                        path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_lines(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void DatasetMeta::validate() const {
  if (num_classes < 2) throw Error("dataset '" + name + "': need at least 2 classes");
  if (truncation_cap < 1) throw Error("dataset '" + name + "': truncation cap must be >= 1");
  const double sum = fractions.train + fractions.val + fractions.test;
  if (fractions.train <= 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw Error("dataset '" + name + "': split fractions must be non-negative and sum to 1");
}

std::optional<DatasetMeta> preset(std::string_view name) {
  if (name == "bbc") return DatasetMeta{"bbc", 5, 185, {0.72, 0.08, 0.20}};
  if (name == "hnd") return DatasetMeta{"hnd", 2, 136, {0.72, 0.08, 0.20}};
  if (name == "arxiv") return DatasetMeta{"arxiv", 11, 1800, {0.72, 0.08, 0.20}};
  return std::nullopt;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError(FormatErrc::Malformed, "unknown split '" + std::string(s) + "'");
}

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  auto emit = [&](char c) {
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (is_ascii_space(c)) {
      pending_space = true;
    } else if (c < 0x20 || c == 0x7F) {
      // C0 control: dropped
    } else if (c == 0xC2 && i + 1 < raw.size()) {
      const auto next = static_cast<unsigned char>(raw[i + 1]);
      if (next == 0x85 || next == 0xA0) {  // NEL, NBSP
        pending_space = true;
        ++i;
      } else if (next >= 0x80 && next <= 0x9F) {  // C1 control
        ++i;
      } else {
        emit(static_cast<char>(c));
      }
    } else {
      emit(static_cast<char>(c));
    }
  }
  return out;
}

std::size_t word_count(std::string_view s) { return tokens(s).size(); }

const std::vector<std::string>& abbreviations() {
  static const std::vector<std::string> list = [] {
    std::vector<std::string> v;
    std::istringstream in(kAbbreviationData);
    std::string line;
    while (std::getline(in, line)) {
      auto t = tokens(line);
      if (t.empty() || t.front().front() == '#') continue;
      v.push_back(lower_ascii(t.front()));
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return list;
}

std::vector<std::string> split_sentences(std::string_view text) {
  const auto toks = tokens(text);
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (!current.empty()) current.push_back(' ');
    current.append(toks[i]);
    if (i + 1 < toks.size() && ends_sentence(toks[i], toks[i + 1])) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::string> merge_short(std::vector<std::string> sentences, std::size_t min_words) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::string> out;
    out.reserve(sentences.size());
    for (auto& s : sentences) {
      if (!out.empty() && word_count(s) < min_words) {
        out.back() = join(out.back(), s);
        changed = true;
      } else {
        out.push_back(std::move(s));
      }
    }
    if (out.size() >= 2 && word_count(out.front()) < min_words) {
      out[1] = join(out[0], out[1]);
      out.erase(out.begin());
      changed = true;
    }
    sentences = std::move(out);
  }
  return sentences;
}

std::vector<std::string> truncate(std::vector<std::string> sentences, std::size_t cap) {
  if (cap < 1) throw Error("truncation cap must be >= 1");
  if (sentences.size() > cap) sentences.resize(cap);
  return sentences;
}

Document prepare(const RawDocument& raw, std::size_t cap, std::size_t min_words) {
  auto sentences = split_sentences(clean_text(raw.text));
  if (sentences.empty()) throw Error("document '" + raw.id + "' is empty after cleaning");
  return Document{raw.id, raw.label, truncate(merge_short(std::move(sentences), min_words), cap)};
}

DedupResult remove_duplicates(std::vector<RawDocument> docs) {
  DedupResult r;
  std::unordered_set<std::string> seen;
  for (auto& d : docs) {
    if (seen.insert(clean_text(d.text)).second)
      r.unique.push_back(std::move(d));
    else
      ++r.removed;
  }
  return r;
}

template <class Doc>
std::vector<SplitAssignment> split_dataset(const std::vector<Doc>& docs, const DatasetMeta& meta,
                                           std::uint64_t seed,
                                           const std::vector<std::string>* predefined_test) {
  meta.validate();
  std::vector<SplitAssignment> out(docs.size());
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].label >= meta.num_classes)
      throw Error("document '" + docs[i].id + "' has label " + std::to_string(docs[i].label) +
                  " >= K=" + std::to_string(meta.num_classes));
    if (!ids.insert(docs[i].id).second) throw Error("duplicate document id '" + docs[i].id + "'");
    out[i].id = docs[i].id;
  }

  std::vector<std::size_t> pool;
  std::size_t n_test = 0;
  std::size_t n_val = 0;
  if (predefined_test) {
    std::unordered_set<std::string> test_ids(predefined_test->begin(), predefined_test->end());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (test_ids.count(docs[i].id))
        out[i].split = Split::Test;
      else
        pool.push_back(i);
    }
    const double carve = meta.fractions.val / (meta.fractions.train + meta.fractions.val);
    n_val = static_cast<std::size_t>(std::llround(carve * static_cast<double>(pool.size())));
  } else {
    if (docs.size() < meta.num_classes)
      throw Error("dataset '" + meta.name + "' has fewer documents than classes");
    pool.resize(docs.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    const auto n = static_cast<double>(docs.size());
    n_test = static_cast<std::size_t>(std::llround(meta.fractions.test * n));
    n_val = static_cast<std::size_t>(std::llround(meta.fractions.val * n));
  }
  if (n_test + n_val >= pool.size()) throw Error("split leaves no training documents");

  SplitMix64 rng(seed);
  rng.shuffle(pool);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    Split s = Split::Train;
    if (k < n_test)
      s = Split::Test;
    else if (k < n_test + n_val)
      s = Split::Val;
    out[pool[k]].split = s;
  }

  std::vector<bool> present(meta.num_classes, false);
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (out[i].split == Split::Train) present[docs[i].label] = true;
  for (std::uint32_t k = 0; k < meta.num_classes; ++k)
    if (!present[k])
      throw Error("class " + std::to_string(k) + " is absent from the training partition");
  return out;
}

template std::vector<SplitAssignment> split_dataset(const std::vector<RawDocument>&,
                                                    const DatasetMeta&, std::uint64_t,
                                                    const std::vector<std::string>*);
template std::vector<SplitAssignment> split_dataset(const std::vector<Document>&,
                                                    const DatasetMeta&, std::uint64_t,
                                                    const std::vector<std::string>*);

std::vector<RawDocument> read_raw_jsonl(const std::string& path) {
  std::vector<RawDocument> docs;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    RawDocument d;
    const auto& id = j.at("id");
    d.id = id.is_string() ? id.get<std::string>() : id.dump();
    const auto label = j.at("label").get<long long>();
    if (label < 0) throw Error("negative label for document '" + d.id + "'");
    d.label = static_cast<std::uint32_t>(label);
    d.text = j.at("text").get<std::string>();
    docs.push_back(std::move(d));
  });
  return docs;
}

void write_documents_jsonl(const std::vector<Document>& docs, const std::string& path) {
  std::string body;
  for (const auto& d : docs) {
    nlohmann::json j{{"id", d.id}, {"label", d.label}, {"sentences", d.sentences}};
    body += j.dump();
    body += '\n';
  }
  write_lines(path, body);
}

std::vector<Document> read_documents_jsonl(const std::string& path) {
  std::vector<Document> docs;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.label = j.at("label").get<std::uint32_t>();
    d.sentences = j.at("sentences").get<std::vector<std::string>>();
    if (d.sentences.empty()) throw Error("document '" + d.id + "' has no sentences");
    docs.push_back(std::move(d));
  });
  return docs;
}

void write_splits_jsonl(const std::vector<SplitAssignment>& splits, const std::string& path) {
  std::string body;
  for (const auto& s : splits) {
    nlohmann::json j{{"id", s.id}, {"split", to_string(s.split)}};
    body += j.dump();
    body += '\n';
  }
  write_lines(path, body);
}

std::vector<SplitAssignment> read_splits_jsonl(const std::string& path) {
  std::vector<SplitAssignment> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("id").get<std::string>(),
                   split_from_string(j.at("split").get<std::string>())});
  });
  return out;
}

}  // namespace docgraph::corpus
