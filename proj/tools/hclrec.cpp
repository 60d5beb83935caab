#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "hclrec/corpus.hpp"
#include "hclrec/error.hpp"
#include "hclrec/experiment.hpp"
#include "hclrec/model.hpp"
#include "hclrec/train.hpp"

using namespace hclrec;

namespace {

void print_stats(const DatasetStats& s, const BuildReport& report) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "users        " << s.users << '\n'
            << "items        " << s.items << '\n'
            << "interactions " << s.interactions << '\n'
            << "avg_length   " << s.average_length << '\n'
            << "sparsity     " << s.sparsity * 100.0 << "%\n"
            << "excluded     " << report.excluded_users << '\n';
}

void print_reports(const std::map<std::string, RankingReport>& reports) {
  std::cout << std::fixed << std::setprecision(4);
  for (const char* cohort : {"all", "short", "long"}) {
    const auto& r = reports.at(cohort);
    std::cout << std::left << std::setw(6) << cohort << " users=" << r.per_user_rank.size();
    for (const auto& [k, v] : r.metrics) std::cout << ' ' << k << '=' << v;
    std::cout << '\n';
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical contrastive sequential recommendation"};
  app.require_subcommand(1);

  ExperimentSpec spec;
  std::string config_file;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Config file (JSON or key=value)")->check(CLI::ExistingFile);
    sub->add_option("--override", spec.overrides, "key=value config override (repeatable)");
    sub->add_flag("-v,--verbose", verbose, "Print per-epoch progress");
  };

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Raw log -> k-core leave-one-out split");
  std::string input, format = "tsv";
  PreprocessOptions pre_opts;
  std::string pre_out;
  pre->add_option("--input", input, "Raw interaction file")->required()->check(CLI::ExistingFile);
  pre->add_option("--format", format, "tsv | amazon-csv | yelp-json")->capture_default_str();
  pre->add_option("--k", pre_opts.k, "k-core threshold")->capture_default_str();
  pre->add_option("--max-len", pre_opts.max_len, "Maximum sequence length")->capture_default_str();
  pre->add_option("--out", pre_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model");
  std::string data_dir;
  std::string train_out = "runs/train";
  train->add_option("--data", data_dir, "Preprocessed dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Run directory")->capture_default_str();
  add_common(train);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, eval_out, eval_split = "test";
  int cohort_threshold = 4;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Preprocessed dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--cohort-threshold", cohort_threshold, "Short-sequence cohort threshold")->capture_default_str();
  ev->add_option("--split", eval_split, "valid | test")->check(CLI::IsMember({"valid", "test"}))->capture_default_str();
  ev->add_option("--out", eval_out, "Write report.json and ranks.csv here");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Train the full method and ablation variants");
  std::vector<std::string> datasets;
  std::string variants = "no_blocks,flat_aug,no_warmup,coserec_mode";
  std::string abl_out = "runs/ablation";
  abl->add_option("--data", datasets, "Dataset directories")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--variants", variants, "Comma-separated variants; join flags with '+'")->capture_default_str();
  abl->add_option("--out", abl_out, "Output directory")->capture_default_str();
  add_common(abl);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Hyperparameter grid sweep");
  std::string grid_file, sweep_out = "runs/sweep";
  sw->add_option("--data", data_dir, "Preprocessed dataset directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--grid", grid_file, "Grid file (JSON)")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sweep_out, "Output directory")->capture_default_str();
  add_common(sw);

  // synth
  auto* syn = app.add_subcommand("synth", "Write a synthetic preference-structured log");
  int syn_users = 200, syn_items = 50;
  uint64_t syn_seed = 7;
  std::string syn_out;
  syn->add_option("--users", syn_users)->capture_default_str();
  syn->add_option("--items", syn_items)->capture_default_str();
  syn->add_option("--seed", syn_seed)->capture_default_str();
  syn->add_option("--out", syn_out, "Output TSV (user, item, timestamp)")->required();

  // strip-blocks
  auto* strip = app.add_subcommand("strip-blocks", "Copy a checkpoint without its block parameters");
  std::string strip_in, strip_out;
  strip->add_option("--checkpoint", strip_in)->required()->check(CLI::ExistingFile);
  strip->add_option("--out", strip_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (!config_file.empty()) spec.config_file = config_file;

  if (*pre) {
    spec.command = Command::Preprocess;
    spec.validate();
    pre_opts.format = parse_input_format(format);
    BuildReport report;
    const DatasetStats stats = run_preprocess(input, pre_out, pre_opts, &report);
    print_stats(stats, report);
    std::cout << "hash         " << dataset_hash(pre_out) << '\n';
  } else if (*train) {
    spec.command = Command::Train;
    spec.datasets = {data_dir};
    spec.out_dir = train_out;
    spec.validate();
    const TrainConfig cfg = spec.resolve_config();
    LoadedData data = load_training_data(data_dir, cfg);
    Trainer trainer(cfg, std::move(data.split), std::move(data.index));
    const TrainResult result = trainer.fit(spec.out_dir, verbose);
    std::cout << "best_epoch " << result.best_epoch << " valid_NDCG@10 " << result.best_valid_ndcg10 << '\n';
    for (const auto& [k, v] : result.test.metrics) std::cout << "test_" << k << ' ' << v << '\n';
  } else if (*ev) {
    spec.command = Command::Eval;
    spec.validate();
    std::optional<std::filesystem::path> out;
    if (!eval_out.empty()) out = eval_out;
    const auto target = eval_split == "valid" ? EvalTarget::Valid : EvalTarget::Test;
    print_reports(run_eval(checkpoint, data_dir, cohort_threshold, out, target));
  } else if (*abl) {
    spec.command = Command::Ablate;
    for (const auto& d : datasets) spec.datasets.push_back(d);
    spec.variants = parse_variants(variants);
    spec.out_dir = abl_out;
    spec.validate();
    const TrainConfig cfg = spec.resolve_config();
    const AblationTable table = run_ablation(spec.datasets, cfg, spec.variants, spec.out_dir, verbose);
    std::cout << format_ablation_table(table);
  } else if (*sw) {
    spec.command = Command::Sweep;
    spec.datasets = {data_dir};
    spec.grid_file = grid_file;
    spec.out_dir = sweep_out;
    spec.validate();
    const TrainConfig cfg = spec.resolve_config();
    const SweepGrid grid = load_grid(grid_file, cfg.levels);
    const auto rows = run_sweep(data_dir, cfg, grid, spec.out_dir, verbose);
    std::cout << rows.size() << " cells written to " << (spec.out_dir / "sweep.csv").string() << '\n';
  } else if (*syn) {
    const auto log = make_synthetic_log(syn_users, syn_items, syn_seed);
    std::ofstream out(syn_out);
    if (!out) throw DataError("cannot write " + syn_out);
    for (const auto& r : log) out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
  } else if (*strip) {
    CheckpointMeta meta;
    Model model = load_checkpoint(strip_in, &meta);
    model.remove_blocks();
    save_checkpoint(strip_out, model, meta);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
