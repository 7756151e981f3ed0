// fastlane: synth -> train -> encode -> index -> search -> eval, plus bench
// and analyze.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fastlane/analysis.hpp"
#include "fastlane/bench.hpp"
#include "fastlane/errors.hpp"
#include "fastlane/index.hpp"
#include "fastlane/metrics.hpp"
#include "fastlane/retrieval.hpp"
#include "fastlane/run_config.hpp"
#include "fastlane/synth.hpp"
#include "fastlane/trainer.hpp"

namespace fs = std::filesystem;
using namespace fastlane;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> flag_overrides;  // filled from subcommand flags
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "Override a config key, e.g. --set train.lr=1e-3")->take_all();
  app->add_option("--seed", c.seed, "Seed for every random stage");
}

// Adds `--name` bound to config key `key`; when given it overrides the config.
template <class T>
CLI::Option* keyed(CLI::App* app, const std::string& name, const std::string& key, std::optional<T>& slot,
                   const std::string& help) {
  return app->add_option(name, slot, help + " [" + key + "]");
}

template <class T>
void push(Common& c, const std::string& key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    c.flag_overrides.push_back(key + "=" + *v);
  } else {
    c.flag_overrides.push_back(key + "=" + nlohmann::json(*v).dump());
  }
}

RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  overrides.insert(overrides.end(), c.flag_overrides.begin(), c.flag_overrides.end());
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  RunConfig cfg;
  try {
    cfg = resolve_config(c.config, overrides, process_env());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  std::cerr << "seed=" << cfg.seed << '\n' << "config=" << to_json(cfg).dump() << '\n';
  return cfg;
}

std::string checkpoint_file(const std::string& path) {
  return fs::is_directory(path) ? (fs::path(path) / "checkpoint.flck").string() : path;
}

std::unique_ptr<MultiViewIndex> build_index(const std::vector<ViewMatrix>& docs, const RunConfig& cfg) {
  auto views = views_from_matrices(docs);
  if (cfg.index.kind == IndexKind::flat) return std::make_unique<FlatIndex>(FlatIndex::build(views));
  return std::make_unique<IvfIndex>(IvfIndex::build(views, cfg.kmeans_options()));
}

Tokenizer fit_tokenizer(const ModelConfig& mc, const Corpus& corpus, const std::vector<Triplet>& triplets) {
  Tokenizer tok(mc.encoder.vocab_size, mc.encoder.hash_buckets);
  std::vector<std::string> texts;
  for (const auto& d : corpus.records()) texts.push_back(d.text);
  for (const auto& t : triplets) {
    texts.push_back(t.query);
    if (t.positive_id.empty()) {
      texts.push_back(t.positive);
      texts.push_back(t.negative);
    }
  }
  tok.fit(texts);
  return tok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FastLane multi-view retrieval with a learned view router"};
  app.require_subcommand(1);
  Common common;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train encoder + router on triplets");
  std::string t_corpus, t_triplets, t_out;
  std::optional<std::string> t_queries, t_dev_queries, t_dev_qrels;
  std::optional<std::string> t_scorer;
  std::optional<std::size_t> t_steps;
  train_cmd->add_option("--corpus", t_corpus, "Corpus JSONL/TSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--triplets", t_triplets, "Triplets TSV (text, or ids with --queries)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--queries", t_queries, "Training queries TSV for id-based triplets")->check(CLI::ExistingFile);
  train_cmd->add_option("--dev-queries", t_dev_queries, "Dev queries TSV")->check(CLI::ExistingFile);
  train_cmd->add_option("--dev-qrels", t_dev_qrels, "Dev qrels (TREC)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", t_out, "Output directory")->required();
  keyed(train_cmd, "--scorer", "train.scorer", t_scorer, "Training scorer");
  keyed(train_cmd, "--steps", "train.total_steps", t_steps, "Training steps");
  add_common(train_cmd, common);

  // encode
  auto* encode = app.add_subcommand("encode", "Encode a corpus or query set into an embedding dump");
  std::string e_ckpt, e_out;
  std::optional<std::string> e_corpus, e_queries;
  encode->add_option("--checkpoint", e_ckpt, "Checkpoint file or training output directory")->required()->check(CLI::ExistingPath);
  auto* e_corpus_opt = encode->add_option("--corpus", e_corpus, "Corpus to encode with the document tower")->check(CLI::ExistingFile);
  auto* e_queries_opt = encode->add_option("--queries", e_queries, "Queries to encode with the query tower")->check(CLI::ExistingFile);
  e_corpus_opt->excludes(e_queries_opt);
  encode->add_option("--out", e_out, "Output dump directory")->required();
  add_common(encode, common);

  // index
  auto* index = app.add_subcommand("index", "Build a flat or IVF index from an embedding dump");
  std::string i_emb, i_out;
  std::optional<std::string> i_kind;
  std::optional<std::size_t> i_k;
  index->add_option("--embeddings", i_emb, "Embedding dump directory or manifest")->required()->check(CLI::ExistingPath);
  keyed(index, "--kind", "index.kind", i_kind, "flat or ivf")->check(CLI::IsMember({"flat", "ivf"}));
  keyed(index, "--k", "index.k", i_k, "IVF list count");
  index->add_option("--out", i_out, "Index file")->required();
  add_common(index, common);

  // search
  auto* search = app.add_subcommand("search", "Search an index and write a TREC run");
  std::string s_index, s_out;
  std::optional<std::string> s_ckpt, s_queries, s_qemb, s_scorer;
  std::optional<std::size_t> s_topk, s_nprobe;
  search->add_option("--index", s_index, "Index file")->required()->check(CLI::ExistingFile);
  search->add_option("--checkpoint", s_ckpt, "Checkpoint (needed to encode text queries and to route)")->check(CLI::ExistingPath);
  auto* sq = search->add_option("--queries", s_queries, "Queries TSV")->check(CLI::ExistingFile);
  auto* sqe = search->add_option("--query-embeddings", s_qemb, "Pre-encoded query dump")->check(CLI::ExistingPath);
  sq->excludes(sqe);
  search->add_option("--scorer", s_scorer, "routed, sum_max, max_max, single_view or mean_view")
      ->check(CLI::IsMember({"routed", "sum_max", "max_max", "single_view", "mean_view"}));
  keyed(search, "--topk", "search.top_k", s_topk, "Results per query");
  keyed(search, "--nprobe", "search.nprobe", s_nprobe, "IVF lists probed per search");
  search->add_option("--out", s_out, "TREC run file")->required();
  add_common(search, common);

  // eval
  auto* eval = app.add_subcommand("eval", "Score a TREC run against qrels");
  std::string v_run, v_qrels, v_metrics = "mrr@10,ndcg@10";
  eval->add_option("--run", v_run, "TREC run file")->required()->check(CLI::ExistingFile);
  eval->add_option("--qrels", v_qrels, "TREC qrels file")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", v_metrics, "Comma-separated metrics")->capture_default_str();
  add_common(eval, common);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time sum-max vs routed vs single-view search");
  std::string b_index, b_ckpt, b_out;
  std::optional<std::string> b_queries, b_qemb;
  std::optional<std::size_t> b_reps, b_nprobe, b_topk;
  bench_cmd->add_option("--index", b_index, "Index file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--checkpoint", b_ckpt, "Checkpoint providing the router")->required()->check(CLI::ExistingPath);
  auto* bq = bench_cmd->add_option("--queries", b_queries, "Queries TSV")->check(CLI::ExistingFile);
  auto* bqe = bench_cmd->add_option("--query-embeddings", b_qemb, "Pre-encoded query dump")->check(CLI::ExistingPath);
  bq->excludes(bqe);
  keyed(bench_cmd, "--reps", "bench.reps", b_reps, "Timed repetitions");
  keyed(bench_cmd, "--nprobe", "search.nprobe", b_nprobe, "IVF lists probed per search");
  keyed(bench_cmd, "--topk", "search.top_k", b_topk, "Results per query");
  bench_cmd->add_option("--out", b_out, "Report JSON")->required();
  add_common(bench_cmd, common);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Count distinct views per matrix by agglomerative clustering");
  std::string a_emb, a_out;
  std::optional<double> a_threshold;
  std::optional<std::string> a_linkage, a_json;
  analyze->add_option("--embeddings", a_emb, "Embedding dump directory or manifest")->required()->check(CLI::ExistingPath);
  keyed(analyze, "--threshold", "analysis.threshold", a_threshold, "Merge while similarity >= threshold");
  keyed(analyze, "--linkage", "analysis.linkage", a_linkage, "average or complete")
      ->check(CLI::IsMember({"average", "complete"}));
  analyze->add_option("--out", a_out, "CSV report")->required();
  analyze->add_option("--assignments", a_json, "Optional JSON with per-matrix cluster assignments");
  add_common(analyze, common);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic ambiguous-query corpus");
  std::string y_out;
  std::optional<std::size_t> y_docs, y_views, y_intents, y_dims, y_dev;
  std::optional<double> y_amb;
  keyed(synth, "--docs", "synth.n_docs", y_docs, "Documents");
  keyed(synth, "--views", "synth.views_per_doc", y_views, "Views per document, CLS included");
  keyed(synth, "--intents", "synth.n_intents", y_intents, "Intents");
  keyed(synth, "--dims", "synth.dims", y_dims, "Ideal embedding dims");
  keyed(synth, "--ambiguity", "synth.ambiguity_rate", y_amb, "Fraction of ambiguous queries");
  keyed(synth, "--dev", "synth.n_dev", y_dev, "Dev queries");
  synth->add_option("--out", y_out, "Output directory")->required();
  add_common(synth, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    push(common, "train.scorer", t_scorer);
    push(common, "train.total_steps", t_steps);
    push(common, "index.kind", i_kind);
    push(common, "index.k", i_k);
    push(common, "search.top_k", s_topk);
    push(common, "search.nprobe", s_nprobe);
    push(common, "bench.reps", b_reps);
    push(common, "search.nprobe", b_nprobe);
    push(common, "search.top_k", b_topk);
    push(common, "analysis.threshold", a_threshold);
    push(common, "analysis.linkage", a_linkage);
    push(common, "synth.n_docs", y_docs);
    push(common, "synth.views_per_doc", y_views);
    push(common, "synth.n_intents", y_intents);
    push(common, "synth.dims", y_dims);
    push(common, "synth.ambiguity_rate", y_amb);
    push(common, "synth.n_dev", y_dev);
    const RunConfig cfg = resolve(common);

    if (*train_cmd) {
      const Corpus corpus = load_corpus(t_corpus);
      std::vector<Query> queries;
      if (t_queries) queries = load_queries(*t_queries);
      const auto triplets = load_triplets(t_triplets, t_queries ? &corpus : nullptr, t_queries ? &queries : nullptr);
      if ((t_dev_queries && !t_dev_qrels) || (!t_dev_queries && t_dev_qrels)) {
        throw UsageError("--dev-queries and --dev-qrels go together");
      }
      std::optional<DevSet> dev;
      if (t_dev_queries) dev = DevSet{corpus, load_queries(*t_dev_queries), read_qrels(*t_dev_qrels)};
      const auto mc = cfg.model_config();
      auto model = Model::create(mc, fit_tokenizer(mc, corpus, triplets), cfg.seed);
      fs::create_directories(t_out);
      std::ofstream log(fs::path(t_out) / "train_log.jsonl");
      const auto result = fastlane::train(*model, triplets, cfg.train_config(), dev ? &*dev : nullptr, &log);
      nlohmann::json extra{{"run_config", to_json(cfg)}, {"steps", cfg.train.total_steps}};
      if (result.best_dev_mrr) {
        extra["best_dev_mrr"] = *result.best_dev_mrr;
        extra["best_step"] = result.best_step;
      }
      model->save((fs::path(t_out) / "checkpoint.flck").string(), extra);
      std::ofstream(fs::path(t_out) / "config.json") << to_json(cfg).dump(2) << '\n';
      std::cout << "steps=" << cfg.train.total_steps << " epochs=" << result.epochs;
      if (!result.losses.empty()) std::cout << " final_loss=" << result.losses.back();
      if (result.best_dev_mrr) std::cout << " best_dev_mrr@10=" << *result.best_dev_mrr << " best_step=" << result.best_step;
      std::cout << '\n';
    } else if (*encode) {
      if (!e_corpus && !e_queries) throw UsageError("encode: one of --corpus or --queries is required");
      auto model = Model::load(checkpoint_file(e_ckpt));
      std::vector<ViewMatrix> out;
      if (e_corpus) out = encode_corpus(*model, load_corpus(*e_corpus));
      else out = encode_queries(*model, load_queries(*e_queries));
      dump_embeddings(e_out, out);
      std::cout << "encoded=" << out.size() << " truncated=" << model->encoder().truncations() << '\n';
    } else if (*index) {
      const auto docs = ingest_embeddings(i_emb);
      const auto idx = build_index(docs, cfg);
      idx->save(i_out);
      std::cout << "kind=" << to_string(idx->kind()) << " vectors=" << idx->size() << " docs=" << idx->doc_count()
                << " lists=" << idx->list_count() << '\n';
    } else if (*search) {
      if (!s_queries && !s_qemb) throw UsageError("search: one of --queries or --query-embeddings is required");
      std::unique_ptr<Model> model;
      if (s_ckpt) model = Model::load(checkpoint_file(*s_ckpt));
      if (s_queries && !model) throw UsageError("search: --queries needs --checkpoint to encode the text");
      const ScorerKind scorer = s_scorer ? scorer_from_string(*s_scorer) : model ? model->config().scorer : ScorerKind::routed;
      if (scorer == ScorerKind::routed && !model) throw UsageError("search: --scorer routed needs --checkpoint");
      const auto idx = load_index(s_index);
      const auto queries = s_queries ? encode_queries(*model, load_queries(*s_queries)) : ingest_embeddings(*s_qemb);
      SearchStats stats;
      const auto run = search_all(model.get(), *idx, queries, scorer, cfg.search.top_k, cfg.search.nprobe, &stats);
      write_run(s_out, run, "fastlane-" + to_string(scorer));
      std::cout << "queries=" << stats.queries << " probes=" << stats.probes << " vectors_scanned=" << stats.vectors_scanned
                << '\n';
    } else if (*eval) {
      std::vector<MetricSpec> metrics;
      try {
        metrics = parse_metrics(v_metrics);
      } catch (const ConfigError& e) {
        throw UsageError(std::string("--metrics: ") + e.what());
      }
      const auto summary = evaluate(read_run(v_run), read_qrels(v_qrels), metrics);
      std::cout.precision(10);
      for (const auto& m : metrics) std::cout << m.name() << '=' << summary.values.at(m.name()) << '\n';
      std::cout << "queries=" << summary.evaluated << " skipped=" << summary.skipped << '\n';
      if (summary.skipped) std::cerr << "warning: " << summary.skipped << " queries without judgments skipped\n";
    } else if (*bench_cmd) {
      if (!b_queries && !b_qemb) throw UsageError("bench: one of --queries or --query-embeddings is required");
      auto model = Model::load(checkpoint_file(b_ckpt));
      const auto idx = load_index(b_index);
      const auto queries = b_queries ? encode_queries(*model, load_queries(*b_queries)) : ingest_embeddings(*b_qemb);
      BenchOptions bo;
      bo.reps = cfg.bench.reps;
      bo.nprobe = cfg.search.nprobe;
      bo.top_k = cfg.search.top_k;
      bo.tau = model->config().tau;
      bo.epsilon = model->config().epsilon;
      const auto report = bench(*idx, queries, model->router_params(), bo);
      std::ofstream(b_out) << report.to_json().dump(2) << '\n';
      std::cout << "wallclock_speedup=" << report.wallclock_speedup() << " scan_ratio=" << report.scan_ratio()
                << " probe_ratio=" << report.probe_ratio() << '\n';
    } else if (*analyze) {
      const auto mats = ingest_embeddings(a_emb);
      std::vector<RedundancyRow> rows;
      nlohmann::json assignments = nlohmann::json::object();
      for (const auto& m : mats) {
        const auto sim = similarity_matrix(m);
        if (!sim.excluded.empty()) {
          std::cerr << "warning: " << m.owner_id << ": " << sim.excluded.size() << " zero-norm views excluded\n";
        }
        const auto rep = agglomerative_cluster(sim, cfg.analysis.threshold, cfg.analysis.linkage);
        rows.push_back({m.owner_id, rep.n_clusters, sim.views.size()});
        if (a_json) assignments[m.owner_id] = {{"views", sim.views}, {"clusters", rep.assignment}};
      }
      const auto stats = summarize(std::move(rows));
      write_redundancy_csv(a_out, stats);
      if (a_json) std::ofstream(*a_json) << assignments.dump() << '\n';
      std::cout << "matrices=" << stats.rows.size() << " mean_clusters=" << stats.mean
                << " median_clusters=" << stats.median << '\n';
    } else if (*synth) {
      const auto s = synth_corpus(cfg.synth_config());
      write_synth(y_out, s);
      std::cout << "docs=" << s.corpus.size() << " triplets=" << s.triplets.size()
                << " dev_queries=" << s.dev_queries.size() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return 0;
}
