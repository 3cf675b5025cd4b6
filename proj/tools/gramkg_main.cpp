#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "gramkg/dataset.hpp"
#include "gramkg/error.hpp"
#include "gramkg/evaluator.hpp"
#include "gramkg/model.hpp"
#include "gramkg/ngram_graph.hpp"
#include "gramkg/run_config.hpp"
#include "gramkg/trainer.hpp"

namespace fs = std::filesystem;
using namespace gramkg;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << text;
}

struct SharedArgs {
  std::string config_path;
  std::string preset;
  std::map<std::string, std::string> overrides;
};

// config resolution order: defaults -> preset -> config file -> flags
RunConfig resolve(const SharedArgs& args) {
  RunConfig cfg;
  if (!args.preset.empty()) cfg.apply_preset(args.preset);
  if (!args.config_path.empty()) cfg.apply_file(args.config_path);
  for (const auto& [key, value] : args.overrides) cfg.apply(key, value);
  return cfg;
}

void add_override_option(CLI::App* cmd, SharedArgs& args, const std::string& flag,
                         const std::string& key, const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [&args, key](const std::string& value) { args.overrides[key] = value; }, desc);
}

void add_shared_options(CLI::App* cmd, SharedArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--preset", args.preset, "dataset profile: nell or wiki");
  add_override_option(cmd, args, "--dataset", "dataset", "dataset directory");
  add_override_option(cmd, args, "--out", "out", "output directory");
  add_override_option(cmd, args, "--seed", "seed", "RNG seed");
  add_override_option(cmd, args, "--epochs", "epochs", "training epochs");
  add_override_option(cmd, args, "--batch-size", "batch_size", "mini-batch size");
  add_override_option(cmd, args, "--lr", "learning_rate", "Adam learning rate");
  add_override_option(cmd, args, "--label-smoothing", "label_smoothing", "cross-entropy smoothing");
  add_override_option(cmd, args, "--patience", "patience", "early-stop patience (0 = off)");
  add_override_option(cmd, args, "--score-fn", "score_fn", "transe or distmult");
  add_override_option(cmd, args, "--d-model", "d_model", "embedding width");
  add_override_option(cmd, args, "--n-heads", "n_heads", "attention heads");
  add_override_option(cmd, args, "--n-layers", "n_layers", "attention blocks");
  add_override_option(cmd, args, "--d-ff", "d_ff", "feed-forward width");
  add_override_option(cmd, args, "--dropout", "dropout", "dropout rate");
  add_override_option(cmd, args, "--mask-mode", "mask_mode", "post, post-renorm or pre");
  add_override_option(cmd, args, "--variant", "variant", "full, wng or wg");
  add_override_option(cmd, args, "--max-n", "max_n", "maximum gram size");
  add_override_option(cmd, args, "--max-nodes", "max_nodes", "graph node budget");
  add_override_option(cmd, args, "--strategy", "strategy", "word_major or level_major");
  add_override_option(cmd, args, "--edge-sidecar", "edge_sidecar", "r_a/r_c tensor file");
  cmd->add_flag_callback(
      "--strip-prefix", [&args]() { args.overrides["strip_prefix"] = "true"; },
      "drop a leading namespace qualifier like concept:");
  cmd->add_flag_callback(
      "--camel-split", [&args]() { args.overrides["camel_split"] = "true"; },
      "split camelCase words");
}

int cmd_train(const SharedArgs& args) {
  RunConfig cfg = resolve(args);
  if (cfg.dataset_dir.empty()) fail(ErrorKind::InvalidConfig, "train requires --dataset");
  if (cfg.out_dir.empty()) fail(ErrorKind::InvalidConfig, "train requires --out");
  const ZSLSplit split = load_split(cfg.dataset_dir);
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "config.resolved.cfg").string(), cfg.dump());

  const TrainResult result = train(split, cfg.train);
  write_metrics_log((fs::path(cfg.out_dir) / "metrics.jsonl").string(), result.log);
  save_model((fs::path(cfg.out_dir) / "checkpoint.json").string(), result.model,
             split.entity_names);
  std::cout << "trained " << cfg.train.epochs << " epochs on " << split.train.size()
            << " triples; best dev MRR " << result.best_dev_mrr << " at epoch "
            << result.best_epoch << "\n";
  std::cout << "checkpoint: " << (fs::path(cfg.out_dir) / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const SharedArgs& args) {
  RunConfig cfg = resolve(args);
  if (cfg.checkpoint.empty()) fail(ErrorKind::InvalidConfig, "eval requires --checkpoint");
  if (cfg.dataset_dir.empty()) fail(ErrorKind::InvalidConfig, "eval requires --dataset");
  if (cfg.out_dir.empty()) fail(ErrorKind::InvalidConfig, "eval requires --out");
  const Model model = load_model(cfg.checkpoint);
  const ZSLSplit split = load_split(cfg.dataset_dir);
  check_compatible(model, split);
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "config.resolved.cfg").string(), cfg.dump());

  const EvalReport report = evaluate(split.test, split.relation_names, model);
  std::cout << report.to_table();
  write_text((fs::path(cfg.out_dir) / "eval_report.json").string(), report.metrics_json() + "\n");
  report.write_per_query_jsonl((fs::path(cfg.out_dir) / "per_query.jsonl").string());
  return 0;
}

struct GraphArgs {
  std::string text;
  std::string format = "json";
  std::string strategy = "level_major";
  int max_n = 13;
  int max_nodes = 90;
  bool strip_prefix = false;
  bool camel_split = false;
  std::string out_path;
};

int cmd_graph(const GraphArgs& args) {
  TokenizeConfig tok;
  tok.strip_namespace_prefix = args.strip_prefix;
  tok.split_camel_case = args.camel_split;
  const NGramGraph graph = build_graph(tokenize(args.text, tok), args.max_n,
                                       strategy_from_string(args.strategy), args.max_nodes);
  std::string rendered;
  if (args.format == "json") {
    rendered = graph.to_json() + "\n";
  } else if (args.format == "dot") {
    rendered = graph.to_dot();
  } else {
    fail(ErrorKind::InvalidConfig, "unknown format '" + args.format + "' (json or dot)");
  }
  if (args.out_path.empty()) {
    std::cout << rendered;
  } else {
    write_text(args.out_path, rendered);
  }
  return 0;
}

struct FixtureArgs {
  std::string out_dir;
  uint64_t seed = 0;
  FixtureSizes sizes;
};

int cmd_fixture(const FixtureArgs& args) {
  synth_fixture_to_dir(args.out_dir, args.seed, args.sizes);
  const ZSLSplit split = synth_fixture(args.seed, args.sizes);
  std::cout << "wrote fixture to " << args.out_dir << ": " << split.entity_names.size()
            << " entities, " << split.seen_relations.size() << " seen / "
            << split.unseen_relations.size() << " unseen relations, " << split.train.size()
            << " train triples, " << split.test.size() << " test queries\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-gram graph relation encoding for zero-shot link prediction"};
  app.require_subcommand(1);

  SharedArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset split");
  add_shared_options(train_cmd, train_args);

  SharedArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on test queries");
  eval_cmd->add_option_function<std::string>(
      "--checkpoint",
      [&eval_args](const std::string& value) { eval_args.overrides["checkpoint"] = value; },
      "checkpoint.json from train");
  add_shared_options(eval_cmd, eval_args);

  GraphArgs graph_args;
  CLI::App* graph_cmd = app.add_subcommand("graph", "print the n-gram graph of a surface name");
  graph_cmd->add_option("text", graph_args.text, "relation surface name")->required();
  graph_cmd->add_option("--format", graph_args.format, "json or dot");
  graph_cmd->add_option("--strategy", graph_args.strategy, "word_major or level_major");
  graph_cmd->add_option("--max-n", graph_args.max_n, "maximum gram size");
  graph_cmd->add_option("--max-nodes", graph_args.max_nodes, "node budget");
  graph_cmd->add_flag("--strip-prefix", graph_args.strip_prefix, "drop a leading namespace qualifier");
  graph_cmd->add_flag("--camel-split", graph_args.camel_split, "split camelCase words");
  graph_cmd->add_option("--out", graph_args.out_path, "write to file instead of stdout");

  FixtureArgs fixture_args;
  CLI::App* fixture_cmd = app.add_subcommand("fixture", "generate a synthetic dataset split");
  fixture_cmd->add_option("--out", fixture_args.out_dir, "output directory")->required();
  fixture_cmd->add_option("--seed", fixture_args.seed, "RNG seed");
  fixture_cmd->add_option("--entities", fixture_args.sizes.n_entities, "entity count");
  fixture_cmd->add_option("--seen", fixture_args.sizes.n_seen, "seen relations");
  fixture_cmd->add_option("--unseen", fixture_args.sizes.n_unseen, "unseen relations");
  fixture_cmd->add_option("--triples-per-relation", fixture_args.sizes.triples_per_relation,
                          "triples per relation");
  fixture_cmd->add_option("--candidates", fixture_args.sizes.candidates_per_query,
                          "candidate set size");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (graph_cmd->parsed()) return cmd_graph(graph_args);
    if (fixture_cmd->parsed()) return cmd_fixture(fixture_args);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_user_error(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
