#include "docgraph/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <thread>

#include "docgraph/attnmodel.hpp"
#include "docgraph/checkpoint.hpp"
#include "docgraph/corpus.hpp"
#include "docgraph/detail/binio.hpp"
#include "docgraph/embedstore.hpp"
#include "docgraph/error.hpp"
#include "docgraph/evalstats.hpp"
#include "docgraph/gatnet.hpp"
#include "docgraph/graphgen.hpp"
#include "docgraph/graphio.hpp"

namespace docgraph::cli {
namespace {

namespace fs = std::filesystem;

void log(const std::string& msg) { std::cerr << "docgraph: " << msg << "\n"; }

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " file not found: " + path);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Per-item work must be
// independent; the first failing index (lowest, for determinism) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::map<std::string, corpus::Split> split_map(const std::string& path) {
  std::map<std::string, corpus::Split> m;
  for (auto& s : corpus::read_splits_jsonl(path)) m[s.id] = s.split;
  return m;
}

corpus::Split split_of(const std::map<std::string, corpus::Split>& m, const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) throw Error("document '" + id + "' has no split assignment");
  return it->second;
}

template <class Item>
std::uint32_t infer_classes(const std::vector<Item>& items, std::uint32_t given) {
  if (given) return given;
  std::uint32_t k = 0;
  for (const auto& it : items) k = std::max(k, it.label + 1);
  return std::max<std::uint32_t>(k, 2);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

void write_text(const std::string& path, const std::string& text) { detail::write_file(path, text); }

// --- prep --------------------------------------------------------------------

struct PrepArgs {
  std::string input, out, splits, dataset = "bbc", test_ids;
  std::uint32_t classes = 0;
  std::size_t cap = 0, min_words = corpus::kMinSentenceWords;
};

void cmd_prep(const PrepArgs& a, std::uint64_t seed) {
  require_file(a.input, "input corpus");
  auto meta = corpus::preset(a.dataset).value_or(corpus::DatasetMeta{a.dataset, 2, 1800, {}});
  if (a.classes) meta.num_classes = a.classes;
  if (a.cap) meta.truncation_cap = a.cap;
  meta.validate();

  auto dedup = corpus::remove_duplicates(corpus::read_raw_jsonl(a.input));
  if (dedup.removed) log("removed " + std::to_string(dedup.removed) + " duplicate documents");
  std::vector<corpus::Document> docs;
  std::size_t empty = 0;
  for (const auto& raw : dedup.unique) {
    if (corpus::clean_text(raw.text).empty()) {
      ++empty;
      continue;
    }
    docs.push_back(corpus::prepare(raw, meta.truncation_cap, a.min_words));
  }
  if (empty) log("skipped " + std::to_string(empty) + " empty documents");

  std::vector<std::string> test_ids;
  if (!a.test_ids.empty()) {
    require_file(a.test_ids, "test id list");
    test_ids = read_lines(a.test_ids);
  }
  auto splits = corpus::split_dataset(docs, meta, seed, a.test_ids.empty() ? nullptr : &test_ids);
  corpus::write_documents_jsonl(docs, a.out);
  corpus::write_splits_jsonl(splits, a.splits);
  log("prepared " + std::to_string(docs.size()) + " documents");
}

// --- synth-embed ---------------------------------------------------------------

struct SynthEmbedArgs {
  std::string sentences, out;
  std::size_t dim = 384;
};

void cmd_synth_embed(const SynthEmbedArgs& a, std::uint64_t seed) {
  require_file(a.sentences, "sentences");
  std::vector<embed::EmbeddedDocument> out;
  for (const auto& d : corpus::read_documents_jsonl(a.sentences)) out.push_back(embed::synth_embeddings(d, a.dim, seed));
  embed::write_embeddings(out, a.out);
}

// --- train-attn ----------------------------------------------------------------

struct TrainAttnArgs {
  std::string embeddings, splits, out, history;
  std::uint32_t classes = 0;
  attn::AttnConfig cfg;
};

void cmd_train_attn(TrainAttnArgs a, std::uint64_t seed) {
  require_file(a.embeddings, "embeddings");
  require_file(a.splits, "splits");
  auto docs = embed::read_embeddings(a.embeddings);
  if (docs.empty()) throw Error("no documents in " + a.embeddings);
  const auto splits = split_map(a.splits);
  std::vector<embed::EmbeddedDocument> train, val;
  for (auto& d : docs) {
    const auto s = split_of(splits, d.id);
    if (s == corpus::Split::Train) train.push_back(std::move(d));
    else if (s == corpus::Split::Val) val.push_back(std::move(d));
  }
  a.cfg.seed = seed;
  a.cfg.d_model = train.empty() ? 0 : train.front().d;
  a.cfg.num_classes = infer_classes(train, a.classes);
  auto result = attn::train(train, val, a.cfg);
  write_checkpoint(result.model.to_checkpoint(), a.out);
  if (!a.history.empty()) write_history_jsonl(result.history, a.history);
  log("attention model: best val macro-F1 " + std::to_string(result.history.best_val_macro_f1) + " at epoch " +
      std::to_string(result.history.best_epoch));
}

// --- build -----------------------------------------------------------------------

struct BuildArgs {
  std::vector<std::string> schemes{"learned-mean"};
  std::string sentences, embeddings, model, out, out_dir, format = "jsonl";
  double delta = 0.5;
  std::size_t threads = 1;
};

std::vector<graph::Scheme> parse_schemes(const std::vector<std::string>& names) {
  std::vector<graph::Scheme> out;
  for (const auto& n : names) {
    if (n == "all") {
      out.assign(std::begin(graph::kAllSchemes), std::end(graph::kAllSchemes));
      return out;
    }
    auto s = graph::scheme_from_name(n);
    if (!s) throw Error("unknown scheme '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

void cmd_build(const BuildArgs& a) {
  require_file(a.sentences, "sentences");
  require_file(a.embeddings, "embeddings");
  const auto schemes = parse_schemes(a.schemes);
  if (schemes.size() > 1 && a.out_dir.empty()) throw Error("several schemes need --out-dir");
  if (schemes.size() == 1 && a.out.empty() && a.out_dir.empty()) throw Error("missing --out path");
  const auto format = a.format == "binary" ? graph::GraphFormat::Binary
                      : a.format == "jsonl" ? graph::GraphFormat::JsonLines
                                            : throw Error("unknown graph format '" + a.format + "'");

  const auto docs = corpus::read_documents_jsonl(a.sentences);
  std::map<std::string, embed::EmbeddedDocument> by_id;
  for (auto& e : embed::read_embeddings(a.embeddings)) {
    const std::string id = e.id;
    by_id.emplace(id, std::move(e));
  }
  std::vector<const embed::EmbeddedDocument*> embs;
  for (const auto& d : docs) {
    auto it = by_id.find(d.id);
    if (it == by_id.end()) throw Error("document '" + d.id + "' has no embeddings");
    if (it->second.n != d.size())
      throw Error("document '" + d.id + "': " + std::to_string(it->second.n) + " embedding rows for " +
                  std::to_string(d.size()) + " sentences");
    embs.push_back(&it->second);
  }

  std::optional<attn::AttnModel> model;
  std::vector<ad::Matrix> attention(docs.size());
  if (std::any_of(schemes.begin(), schemes.end(), graph::is_learned)) {
    require_file(a.model, "attention model");
    model = attn::AttnModel::from_checkpoint(read_checkpoint(a.model));
    parallel_for(docs.size(), a.threads,
                 [&](std::size_t i) { attention[i] = attn::extract_attention(*model, *embs[i]).a; });
  }

  if (!a.out_dir.empty()) fs::create_directories(a.out_dir);
  for (auto scheme : schemes) {
    std::vector<graph::DocumentGraph> graphs(docs.size());
    parallel_for(docs.size(), a.threads, [&](std::size_t i) {
      if (graph::is_learned(scheme))
        graphs[i] = graph::build_learned(docs[i], *embs[i], attention[i], {graph::scheme_strategy(scheme), a.delta});
      else
        graphs[i] = graph::build_heuristic(scheme, docs[i], *embs[i], a.delta);
    });
    const std::string ext = format == graph::GraphFormat::Binary ? ".dggr" : ".jsonl";
    const auto path = a.out_dir.empty() ? a.out : (fs::path(a.out_dir) / (std::string(graph::scheme_name(scheme)) + ext)).string();
    const auto bytes = graph::write_graphs(graphs, path, format);
    log(std::string(graph::scheme_name(scheme)) + ": " + std::to_string(graphs.size()) + " graphs, " +
        std::to_string(bytes) + " bytes -> " + path);
  }
}

// --- train-gat -------------------------------------------------------------------

struct TrainGatArgs {
  std::string graphs, splits, out, history;
  std::uint32_t classes = 0;
  gat::GatConfig cfg;
};

void cmd_train_gat(TrainGatArgs a, std::uint64_t seed) {
  require_file(a.graphs, "graphs");
  require_file(a.splits, "splits");
  const auto splits = split_map(a.splits);
  std::vector<graph::DocumentGraph> train, val;
  for (auto& g : graph::read_graphs(a.graphs)) {
    const auto s = split_of(splits, g.doc_id);
    if (s == corpus::Split::Train) train.push_back(std::move(g));
    else if (s == corpus::Split::Val) val.push_back(std::move(g));
  }
  a.cfg.seed = seed;
  a.cfg.num_classes = infer_classes(train, a.classes);
  auto result = gat::train_gat(train, val, a.cfg);
  write_checkpoint(result.model.to_checkpoint(), a.out);
  if (!a.history.empty()) write_history_jsonl(result.history, a.history);
  log("GAT: best val macro-F1 " + std::to_string(result.history.best_val_macro_f1) + " at epoch " +
      std::to_string(result.history.best_epoch));
}

// --- eval / stats / render -------------------------------------------------------

struct EvalArgs {
  std::string graphs, splits, model, out, dataset = "dataset", split = "test";
};

void cmd_eval(const EvalArgs& a) {
  require_file(a.graphs, "graphs");
  require_file(a.splits, "splits");
  require_file(a.model, "GAT model");
  const auto graphs = graph::read_graphs(a.graphs);
  const auto splits = split_map(a.splits);
  const auto which = corpus::split_from_string(a.split);
  const auto model = gat::GatModel::from_checkpoint(read_checkpoint(a.model));
  std::vector<std::uint32_t> preds, labels;
  for (const auto& g : graphs) {
    if (split_of(splits, g.doc_id) != which) continue;
    preds.push_back(gat::predict(model, g).label);
    labels.push_back(g.label);
  }
  if (preds.empty()) throw Error("no graphs in the " + a.split + " split");
  stats::Report r;
  r.scheme = graphs.front().scheme;
  r.dataset = a.dataset;
  r.metrics = stats::compute_metrics(preds, labels, model.config().num_classes);
  r.graphs = stats::graph_stats(graphs, static_cast<std::size_t>(fs::file_size(a.graphs)));
  const auto json = stats::report_json(r);
  if (a.out.empty()) std::cout << json;
  else write_text(a.out, json);
}

struct StatsArgs {
  std::string graphs, out;
};

void cmd_stats(const StatsArgs& a) {
  require_file(a.graphs, "graphs");
  const auto s = stats::graph_stats(graph::read_graphs(a.graphs), static_cast<std::size_t>(fs::file_size(a.graphs)));
  nlohmann::ordered_json j{{"graphs", s.count},       {"avg_nodes", s.avg_nodes},
                           {"avg_edges", s.avg_edges}, {"avg_degree", s.avg_degree},
                           {"disk_bytes", s.disk_bytes}};
  const auto text = j.dump(2) + "\n";
  if (a.out.empty()) std::cout << text;
  else write_text(a.out, text);
}

struct RenderArgs {
  std::string graphs, doc, mode = "weighted", out;
};

void cmd_render(const RenderArgs& a) {
  require_file(a.graphs, "graphs");
  const auto mode = stats::render_mode_from_string(a.mode);
  for (const auto& g : graph::read_graphs(a.graphs)) {
    if (!a.doc.empty() && g.doc_id != a.doc) continue;
    stats::render_adjacency(g, mode, a.out);
    return;
  }
  throw Error("document '" + a.doc + "' not found in " + a.graphs);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"docgraph"};
  for (const auto& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Sentence-graph document classification pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; [subcommand] tables mirror the flags");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every stochastic step")->envname("DOCGRAPH_SEED");

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "Clean, segment, deduplicate and split a raw JSON-lines corpus");
  p->add_option("--input", prep.input, "Raw corpus {id, label, text} per line")->required();
  p->add_option("--out", prep.out, "Output sentences JSON-lines")->required();
  p->add_option("--splits", prep.splits, "Output split manifest")->required();
  p->add_option("--dataset", prep.dataset, "Preset: bbc, hnd, arxiv (or a free name)");
  p->add_option("--classes", prep.classes, "Number of classes (overrides the preset)");
  p->add_option("--cap", prep.cap, "Sentence truncation cap (overrides the preset)");
  p->add_option("--min-words", prep.min_words, "Shorter sentences are merged into a neighbour");
  p->add_option("--test-ids", prep.test_ids, "File with one predefined test id per line");

  SynthEmbedArgs se;
  auto* e = app.add_subcommand("synth-embed", "Write deterministic stand-in sentence embeddings (DGEM)");
  e->add_option("--sentences", se.sentences)->required();
  e->add_option("--out", se.out)->required();
  e->add_option("--dim", se.dim)->check(CLI::PositiveNumber);

  TrainAttnArgs ta;
  auto* t = app.add_subcommand("train-attn", "Train the self-attention document classifier");
  t->add_option("--embeddings", ta.embeddings)->required();
  t->add_option("--splits", ta.splits)->required();
  t->add_option("--out", ta.out, "Output checkpoint (DGPT)")->required();
  t->add_option("--history", ta.history, "Per-epoch JSON-lines log");
  t->add_option("--classes", ta.classes);
  t->add_option("--heads", ta.cfg.heads);
  t->add_option("--layers", ta.cfg.layers);
  t->add_option("--epochs", ta.cfg.max_epochs);
  t->add_option("--batch", ta.cfg.batch_size);
  t->add_option("--lr", ta.cfg.lr);
  t->add_option("--patience", ta.cfg.patience);
  t->add_option("--threads", ta.cfg.threads, "Gradient workers (results are thread-count independent)");

  BuildArgs b;
  auto* bc = app.add_subcommand("build", "Build and store sentence graphs for one or more schemes");
  bc->add_option("--scheme", b.schemes, "complete, order, window, semantic-mean, semantic-max, learned-mean, learned-max or all");
  bc->add_option("--sentences", b.sentences)->required();
  bc->add_option("--embeddings", b.embeddings)->required();
  bc->add_option("--model", b.model, "Attention checkpoint, needed by learned schemes");
  bc->add_option("--delta", b.delta, "Filter tolerance degree");
  bc->add_option("--out", b.out, "Output file (single scheme)");
  bc->add_option("--out-dir", b.out_dir, "Output directory, one <scheme> file each");
  bc->add_option("--format", b.format, "jsonl or binary");
  bc->add_option("--threads", b.threads)->check(CLI::PositiveNumber);

  TrainGatArgs tg;
  auto* g = app.add_subcommand("train-gat", "Train the GAT classifier on stored graphs");
  g->add_option("--graphs", tg.graphs)->required();
  g->add_option("--splits", tg.splits)->required();
  g->add_option("--out", tg.out)->required();
  g->add_option("--history", tg.history);
  g->add_option("--classes", tg.classes);
  g->add_option("--layers", tg.cfg.layers);
  g->add_option("--hidden", tg.cfg.hidden);
  g->add_option("--keep-prob", tg.cfg.keep_prob);
  g->add_option("--epochs", tg.cfg.max_epochs);
  g->add_option("--batch", tg.cfg.batch_size);
  g->add_option("--lr", tg.cfg.lr);
  g->add_option("--patience", tg.cfg.patience);
  g->add_option("--threads", tg.cfg.threads);

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Evaluate a GAT checkpoint; emits a JSON report row");
  v->add_option("--graphs", ev.graphs)->required();
  v->add_option("--splits", ev.splits)->required();
  v->add_option("--model", ev.model)->required();
  v->add_option("--dataset", ev.dataset);
  v->add_option("--split", ev.split, "train, val or test");
  v->add_option("--out", ev.out, "Report path (default stdout)");

  StatsArgs st;
  auto* s = app.add_subcommand("stats", "Structural statistics of a graphs file");
  s->add_option("--graphs", st.graphs)->required();
  s->add_option("--out", st.out);

  RenderArgs ra;
  auto* r = app.add_subcommand("render", "Render one graph's adjacency matrix as a PGM image");
  r->add_option("--graphs", ra.graphs)->required();
  r->add_option("--doc", ra.doc, "Document id (default: the first graph)");
  r->add_option("--mode", ra.mode, "weighted or binarized");
  r->add_option("--out", ra.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err, std::cout, std::cerr);
  }

  try {
    if (*p) cmd_prep(prep, seed);
    else if (*e) cmd_synth_embed(se, seed);
    else if (*t) cmd_train_attn(ta, seed);
    else if (*bc) cmd_build(b);
    else if (*g) cmd_train_gat(tg, seed);
    else if (*v) cmd_eval(ev);
    else if (*s) cmd_stats(st);
    else if (*r) cmd_render(ra);
  } catch (const std::exception& ex) {
    std::cerr << "docgraph: error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace docgraph::cli
