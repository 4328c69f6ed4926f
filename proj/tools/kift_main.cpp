// kift: weighted-concept + retrieval knowledge report generation toolkit.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kift/common.hpp"
#include "kift/pipeline.hpp"

using nlohmann::json;
using namespace kift;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::istringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) seeds.push_back(std::stoull(part));
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

// JSON-lines of {id, text} -> id-keyed token map.
std::map<std::string, TokenSeq> read_texts(const std::string& path, const TokenizerConfig& tok) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::map<std::string, TokenSeq> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out[j.at("id").get<std::string>()] = tokenize(j.at("text").get<std::string>(), tok);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw DataError(path + ": no records");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"knowledge-injected report generation toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_path, in_path;
  std::uint64_t seed = 0;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a corpus file (or the synthetic benchmark)");
  bool synthetic = false;
  std::size_t synth_n = 32, synth_d = 32;
  bool do_splits = false;
  ingest->add_flag("--synthetic", synthetic, "emit the knowledge-planted synthetic benchmark");
  ingest->add_option("--n", synth_n, "synthetic sample count");
  ingest->add_option("--dim", synth_d, "synthetic embedding dimension");
  ingest->add_option("--in", in_path, "raw JSON-lines {id, text}");
  ingest->add_option("--out", out_path, "output directory (synthetic) or corpus file")->required();
  ingest->add_option("--seed", seed, "shuffle / generation seed");
  ingest->add_flag("--assign-splits", do_splits, "assign 7:1:2 splits with the seed");

  // tfidf
  auto* tfidf_cmd = app.add_subcommand("tfidf", "compute per-report word scores");
  std::string dump_path;
  tfidf_cmd->add_option("--config", config_path)->required();
  tfidf_cmd->add_option("--dump", dump_path, "write the score table as JSON");

  // index
  auto* index = app.add_subcommand("index", "embedding store operations");
  auto* index_build = index->add_subcommand("build", "build and save the train-split store");
  index_build->add_option("--config", config_path)->required();
  index_build->add_option("--out", out_path, "output embeddings file")->required();
  auto* index_query = index->add_subcommand("query", "retrieve nearest train reports");
  std::string query_id;
  std::size_t query_k = 3;
  index_query->add_option("--config", config_path)->required();
  index_query->add_option("--id", query_id, "query report id")->required();
  index_query->add_option("--k", query_k, "neighbours to return");

  // extract
  auto* extract = app.add_subcommand("extract", "triplets and prompts for one report");
  std::string report_id;
  bool dump_prompts = false;
  extract->add_option("--config", config_path)->required();
  extract->add_option("--report-id", report_id)->required();
  extract->add_flag("--dump-prompts", dump_prompts);

  // train
  auto* train_cmd = app.add_subcommand("train", "train the generator");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--seed", seed, "override the config seed");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "decode the test split with a checkpoint");
  std::string ckpt_dir;
  gen_cmd->add_option("--config", config_path)->required();
  gen_cmd->add_option("--checkpoint", ckpt_dir, "checkpoint directory (default from config)");
  gen_cmd->add_option("--out", out_path, "output JSON-lines");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score generated vs reference reports");
  std::string gen_path, ref_path;
  eval_cmd->add_option("--gen", gen_path)->required();
  eval_cmd->add_option("--ref", ref_path)->required();
  eval_cmd->add_option("--out", out_path, "metrics JSON path");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the five-variant ablation ladder");
  std::string seeds_csv = "0,1,2";
  ablate_cmd->add_option("--config", config_path)->required();
  ablate_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds");
  ablate_cmd->add_option("--out", out_path, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*ingest) {
    if (synthetic) {
      make_synthetic_benchmark(out_path, seed, synth_n, synth_d);
      std::cerr << "wrote synthetic benchmark to " << out_path << "\n";
      return 0;
    }
    if (in_path.empty()) throw ConfigError("ingest needs --in or --synthetic");
    std::ifstream in(in_path);
    if (!in) throw DataError("cannot open: " + in_path);
    std::vector<Report> reports;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        json j = json::parse(line);
        Report r;
        r.id = j.at("id").get<std::string>();
        r.text = j.at("text").get<std::string>();
        if (j.contains("split")) r.split = parse_split(j.at("split").get<std::string>());
        if (j.contains("feature_source") && j.at("feature_source").contains("path")) {
          r.feature_source.kind = FeatureSource::Kind::path;
          r.feature_source.path = j.at("feature_source").at("path").get<std::string>();
        } else {
          r.feature_source.seed = fnv1a(r.id);
        }
        reports.push_back(std::move(r));
      } catch (const json::exception& e) {
        throw DataError(in_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (do_splits) assign_splits(reports, seed);
    Corpus c = build_corpus(std::move(reports), TokenizerConfig{});
    save_corpus(c, out_path);
    std::cerr << "wrote " << c.reports.size() << " reports to " << out_path << "\n";
    return 0;
  }

  if (*tfidf_cmd) {
    auto cfg = PipelineConfig::from_file(config_path);
    auto corpus = load_corpus(cfg.corpus_path, cfg.tokenizer);
    auto table = compute_tfidf(corpus);
    if (!dump_path.empty()) {
      dump_tfidf_json(table, dump_path);
      std::cerr << "wrote " << dump_path << "\n";
    } else {
      std::cout << "reports=" << table.n_reports << " distinct_words=" << table.df.size()
                << "\n";
    }
    return 0;
  }

  if (*index_build) {
    auto cfg = PipelineConfig::from_file(config_path);
    auto ctx = build_context(cfg);
    save_embeddings(ctx.store, out_path);
    std::cerr << "wrote " << ctx.store.size() << " embeddings to " << out_path << "\n";
    return 0;
  }
  if (*index_query) {
    auto cfg = PipelineConfig::from_file(config_path);
    auto ctx = build_context(cfg);
    cfg.k = query_k;
    for (const auto& id : retrieve_ids(ctx, query_id, query_k)) {
      std::vector<double> row(ctx.store.dim());
      // Re-score for display.
      const auto& q = ctx.embeddings.at(query_id);
      const auto& e = ctx.embeddings.at(id);
      std::cout << id << '\t' << cosine(q, e) << '\n';
    }
    return 0;
  }

  if (*extract) {
    auto cfg = PipelineConfig::from_file(config_path);
    auto ctx = build_context(cfg);
    auto triplets = extract_triplets(ctx.corpus.report(report_id), ctx.lexicons);
    for (const auto& t : triplets) {
      json j = {{"entity", detokenize(t.entity)},
                {"category", t.category == ConceptCategory::noun ? "noun" : "adjective"},
                {"position", detokenize(t.position)},
                {"exist", t.exist == Existence::exist ? "exist" : "absent"}};
      if (dump_prompts) j["prompt"] = render_prompt(t);
      std::cout << j.dump() << '\n';
    }
    return 0;
  }

  if (*train_cmd) {
    auto cfg = PipelineConfig::from_file(config_path);
    if (train_cmd->count("--seed")) cfg.seed = seed;
    auto metrics = run_end_to_end(cfg);
    write_metrics_csv_row(metrics, "test", cfg.hash(), cfg.out_dir + "/metrics.csv");
    std::cerr << "test BLEU-4 " << metrics.bleu[3] << "; outputs in " << cfg.out_dir << "\n";
    return 0;
  }

  if (*gen_cmd) {
    auto cfg = PipelineConfig::from_file(config_path);
    if (!ckpt_dir.empty()) cfg.checkpoint_dir = ckpt_dir;
    if (cfg.checkpoint_dir.empty()) throw ConfigError("generate needs a checkpoint directory");
    auto ctx = build_context(cfg);
    auto model = TransformerModel::load(cfg.checkpoint_dir);
    cfg.model = model.config();
    auto eval = evaluate_split(ctx, model, Split::test, cfg);
    const std::string path = out_path.empty() ? cfg.out_dir + "/generated.jsonl" : out_path;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path().string().empty()
                                            ? "."
                                            : std::filesystem::path(path).parent_path().string());
    write_generated_jsonl(eval, path);
    std::cerr << "wrote " << eval.ids.size() << " reports to " << path << "\n";
    return 0;
  }

  if (*eval_cmd) {
    TokenizerConfig tok;
    auto gen = read_texts(gen_path, tok);
    auto ref = read_texts(ref_path, tok);
    // Score every generated report; the reference file may cover more ids.
    std::vector<TokenSeq> cands, refs;
    for (const auto& [id, toks] : gen) {
      auto it = ref.find(id);
      if (it == ref.end()) throw DataError("reference file lacks id: " + id);
      cands.push_back(toks);
      refs.push_back(it->second);
    }
    auto m = evaluate_all(cands, refs);
    const std::uint64_t h = fnv1a(gen_path + "|" + ref_path);
    json j = {{"bleu", {m.bleu[0], m.bleu[1], m.bleu[2], m.bleu[3]}},
              {"rouge_l", m.rouge_l},
              {"meteor", m.meteor},
              {"cider", m.cider},
              {"n_samples", m.n_samples}};
    std::cout << j.dump(2) << '\n';
    if (!out_path.empty()) write_metrics_json(m, h, out_path);
    return 0;
  }

  if (*ablate_cmd) {
    auto cfg = PipelineConfig::from_file(config_path);
    auto seeds = parse_seeds(seeds_csv);
    auto rows = ablate(cfg, seeds);
    const std::string path = out_path.empty() ? cfg.out_dir + "/ablation.csv" : out_path;
    std::filesystem::create_directories(cfg.out_dir.empty() ? "." : cfg.out_dir);
    write_ablation_csv(rows, seeds, cfg.hash(), path);
    std::cerr << "wrote " << rows.size() << " rows to " << path << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
