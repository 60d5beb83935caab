#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hclrec/config.hpp"
#include "hclrec/corpus.hpp"
#include "hclrec/eval.hpp"
#include "json.hpp"

namespace hclrec {

enum class Command { Preprocess, Train, Eval, Ablate, Sweep };

/// A set of ablation flags; the empty set is the full method.
struct Variant {
  bool no_blocks = false;
  bool flat_aug = false;
  bool no_warmup = false;
  bool coserec_mode = false;

  bool full() const { return !no_blocks && !flat_aug && !no_warmup && !coserec_mode; }
  auto operator<=>(const Variant&) const = default;
};

/// Flag form, e.g. "full", "no_blocks", "no_blocks+no_warmup".
std::string to_string(const Variant& v);
/// Table row label, e.g. "(2) w/o Block".
std::string variant_label(const Variant& v);
Variant parse_variant(const std::string& text);
/// Comma-separated variants; each may join flags with '+'.
std::vector<Variant> parse_variants(const std::string& csv);

/// Base config transformed into the given ablation variant.
TrainConfig apply_variant(TrainConfig cfg, const Variant& v);

struct ExperimentSpec {
  Command command = Command::Train;
  std::vector<std::filesystem::path> datasets;
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;
  std::filesystem::path out_dir = "runs";
  std::vector<Variant> variants;  // ablate only
  std::optional<std::filesystem::path> grid_file;  // sweep only

  /// Usage errors: missing datasets, ablation flags with sweep, sweep without a grid.
  void validate() const;
  /// Base config: file, then HCLREC_SEED, then --override flags.
  TrainConfig resolve_config() const;
};

// ------------------------------------------------------- preprocess and eval

struct PreprocessOptions {
  InputFormat format = InputFormat::Tsv;
  int k = 5;
  int max_len = 50;
};

/// Raw log -> k-core -> leave-one-out split written to `out_dir`.
DatasetStats run_preprocess(const std::filesystem::path& input, const std::filesystem::path& out_dir,
                            const PreprocessOptions& options, BuildReport* report = nullptr);

/// Full-ranking evaluation of a checkpoint, split into all/short/long
/// cohorts. Writes report.json and ranks.csv when `out_dir` is set.
std::map<std::string, RankingReport> run_eval(const std::filesystem::path& checkpoint,
                                              const std::filesystem::path& data_dir, int cohort_threshold,
                                              const std::optional<std::filesystem::path>& out_dir,
                                              EvalTarget target = EvalTarget::Test);

// ------------------------------------------------------------------ ablation

struct AblationCell {
  double hit10 = 0.0;
  double ndcg10 = 0.0;
  double valid_ndcg10 = 0.0;
  int num_blocks = 0;
  std::string dataset_hash;
};

struct AblationTable {
  std::vector<std::string> datasets;
  std::vector<Variant> variants;
  std::map<std::pair<Variant, std::string>, AblationCell> cells;
};

/// Trains the full method plus each requested variant on every dataset with
/// the same seed and inputs.
AblationTable run_ablation(const std::vector<std::filesystem::path>& datasets, const TrainConfig& base,
                           const std::vector<Variant>& variants,
                           const std::optional<std::filesystem::path>& out_dir, bool verbose = false);

/// Markdown table: one row per variant, {Hit@10, NDCG@10} per dataset.
std::string format_ablation_table(const AblationTable& table);
void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table);

// --------------------------------------------------------------------- sweep

enum class TupleConstraint { None, EqualStepAscending, EqualStepDescending };

/// All M-tuples over `values` satisfying the constraint. Equal-step
/// constraints require a strictly positive common step.
std::vector<std::vector<double>> enumerate_tuples(const std::vector<double>& values, int levels,
                                                  TupleConstraint constraint);

struct SweepGrid {
  bool cartesian = false;  // default: vary one axis at a time
  long max_cells = 64;
  std::vector<std::vector<double>> temperatures;
  std::vector<std::vector<double>> lambdas;
  std::vector<int> dims;
  std::vector<int> batch_sizes;
  std::vector<int> thresholds;

  bool empty() const;
};

/// Grid file, e.g.
///   {"mode": "per-axis", "max_cells": 32,
///    "lambdas": {"values": [0.05, 0.075, 0.1], "constraint": "equal-step-descending"},
///    "temperatures": [[1.0, 1.5, 2.0], [1.0, 1.25, 1.5]],
///    "dim": [32, 64, 128], "batch_size": [64, 128, 256, 512], "threshold": [4, 8, 12]}
SweepGrid parse_grid(const nlohmann::json& j, int levels);
SweepGrid load_grid(const std::filesystem::path& path, int levels);

struct SweepCell {
  std::string axis;   // "temperatures", "lambdas", "dim", ... or "cartesian"
  std::string label;  // value(s) of the swept axis
  std::vector<std::string> overrides;  // key=value applied to the base config
};

/// Cells of the grid; throws UsageError when the count exceeds max_cells.
std::vector<SweepCell> expand_grid(const SweepGrid& grid);

struct SweepRow {
  SweepCell cell;
  std::map<std::string, double> test;
  double valid_ndcg10 = 0.0;
};

std::vector<SweepRow> run_sweep(const std::filesystem::path& dataset, const TrainConfig& base,
                                const SweepGrid& grid, const std::optional<std::filesystem::path>& out_dir,
                                bool verbose = false);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

/// One SVG per axis: metric vs swept value.
void write_sweep_plots(const std::filesystem::path& dir, const std::vector<SweepRow>& rows);

}  // namespace hclrec
