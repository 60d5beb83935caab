#include "hclrec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "hclrec/error.hpp"
#include "hclrec/model.hpp"
#include "hclrec/plot.hpp"
#include "hclrec/train.hpp"

namespace hclrec {

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    parts.push_back(cur.substr(b, e - b + 1));
  }
  return parts;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string join_values(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

}  // namespace

std::string to_string(const Variant& v) {
  if (v.full()) return "full";
  std::vector<std::string> flags;
  if (v.no_blocks) flags.push_back("no_blocks");
  if (v.flat_aug) flags.push_back("flat_aug");
  if (v.no_warmup) flags.push_back("no_warmup");
  if (v.coserec_mode) flags.push_back("coserec_mode");
  std::string out;
  for (size_t i = 0; i < flags.size(); ++i) out += (i ? "+" : "") + flags[i];
  return out;
}

std::string variant_label(const Variant& v) {
  if (v.full()) return "(1) HCLRec";
  if (v == Variant{.no_blocks = true}) return "(2) w/o Block";
  if (v == Variant{.flat_aug = true}) return "(3) w/o hier. aug.";
  if (v == Variant{.no_warmup = true}) return "(4) w/o warm-up";
  if (v == Variant{.coserec_mode = true}) return "(5) CoSeRec";
  std::vector<std::string> parts;
  if (v.no_blocks) parts.push_back("w/o Block");
  if (v.flat_aug) parts.push_back("w/o hier. aug.");
  if (v.no_warmup) parts.push_back("w/o warm-up");
  if (v.coserec_mode) parts.push_back("CoSeRec");
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? " + " : "") + parts[i];
  return out;
}

Variant parse_variant(const std::string& text) {
  Variant v;
  if (text == "full") return v;
  for (const auto& flag : split_on(text, '+')) {
    if (flag == "no_blocks") v.no_blocks = true;
    else if (flag == "flat_aug") v.flat_aug = true;
    else if (flag == "no_warmup") v.no_warmup = true;
    else if (flag == "coserec_mode") v.coserec_mode = true;
    else throw UsageError("unknown ablation flag '" + flag + "'");
  }
  return v;
}

std::vector<Variant> parse_variants(const std::string& csv) {
  std::vector<Variant> out;
  for (const auto& item : split_on(csv, ',')) {
    const Variant v = parse_variant(item);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  if (out.empty()) throw UsageError("no ablation variants given");
  return out;
}

TrainConfig apply_variant(TrainConfig cfg, const Variant& v) {
  if (v.no_blocks) cfg.use_blocks = false;
  if (v.flat_aug) cfg.flat_aug = true;
  if (v.no_warmup) cfg.warmup_epochs = 0;
  if (v.coserec_mode) {
    cfg.levels = 1;
    cfg.use_blocks = false;
    cfg.lambdas.clear();
    cfg.temperatures.clear();
  }
  return cfg;
}

void ExperimentSpec::validate() const {
  const bool has_ablation_flags = !variants.empty();
  switch (command) {
    case Command::Sweep:
      if (has_ablation_flags) throw UsageError("ablation flags cannot be combined with sweep");
      if (!grid_file) throw UsageError("sweep requires --grid");
      [[fallthrough]];
    case Command::Train:
    case Command::Ablate:
      if (datasets.empty()) throw UsageError("no dataset given");
      break;
    case Command::Preprocess:
    case Command::Eval:
      if (has_ablation_flags) throw UsageError("ablation flags only apply to ablate");
      break;
  }
  if (command != Command::Sweep && grid_file) throw UsageError("--grid only applies to sweep");
}

TrainConfig ExperimentSpec::resolve_config() const {
  TrainConfig cfg;
  if (config_file) cfg = load_config(*config_file);
  apply_environment(cfg);
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

// ------------------------------------------------------- preprocess and eval

DatasetStats run_preprocess(const std::filesystem::path& input, const std::filesystem::path& out_dir,
                            const PreprocessOptions& options, BuildReport* report) {
  if (options.k < 1) throw ConfigError("k must be at least 1");
  if (options.max_len < 1) throw ConfigError("max_len must be at least 1");
  const auto raw = load_interactions(input, options.format);
  const auto filtered = k_core_filter(raw, options.k);
  if (filtered.empty()) throw DataError("no interactions survive the " + std::to_string(options.k) + "-core filter");
  Preprocessed data = build_split(filtered, options.max_len);
  write_dataset(out_dir, data);
  if (report) *report = data.report;
  return compute_stats(data.split);
}

std::map<std::string, RankingReport> run_eval(const std::filesystem::path& checkpoint,
                                              const std::filesystem::path& data_dir, int cohort_threshold,
                                              const std::optional<std::filesystem::path>& out_dir,
                                              EvalTarget target) {
  if (cohort_threshold < 1) throw ConfigError("cohort threshold must be positive");
  const Model model = load_checkpoint(checkpoint);
  SplitDataset split = read_dataset(data_dir);
  split.max_len = model.config().max_len;
  if (split.num_items != model.config().num_items) {
    throw DataError("checkpoint has " + std::to_string(model.config().num_items) + " items, dataset has " +
                    std::to_string(split.num_items));
  }
  EvalOptions options;
  options.target = target;
  auto reports = evaluate_cohorts(model, split, cohort_threshold, options);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::vector<RankingReport> list;
    for (const char* name : {"all", "short", "long"}) list.push_back(reports.at(name));
    write_report_json(*out_dir / "report.json", list);
    write_ranks_csv(*out_dir / "ranks.csv", {reports.at("short"), reports.at("long")});
  }
  return reports;
}

// ------------------------------------------------------------------ ablation

AblationTable run_ablation(const std::vector<std::filesystem::path>& datasets, const TrainConfig& base,
                           const std::vector<Variant>& variants,
                           const std::optional<std::filesystem::path>& out_dir, bool verbose) {
  AblationTable table;
  table.variants = variants;
  if (std::find(table.variants.begin(), table.variants.end(), Variant{}) == table.variants.end()) {
    table.variants.insert(table.variants.begin(), Variant{});
  }
  for (const auto& dir : datasets) {
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string()
                                                    : dir.filename().string();
    table.datasets.push_back(name);
    std::optional<std::string> reference_hash;
    for (const auto& v : table.variants) {
      TrainConfig cfg = apply_variant(base, v);
      cfg.validate();
      LoadedData data = load_training_data(dir, cfg);
      if (!reference_hash) reference_hash = data.hash;
      if (data.hash != *reference_hash) {
        throw DataError("dataset " + name + " changed between ablation variants");
      }
      if (verbose) std::cerr << "[ablate] " << name << " " << to_string(v) << '\n';
      Trainer trainer(cfg, std::move(data.split), std::move(data.index));
      std::optional<std::filesystem::path> run_dir;
      if (out_dir) run_dir = *out_dir / name / to_string(v);
      const TrainResult result = trainer.fit(run_dir, verbose);
      AblationCell cell;
      cell.hit10 = result.test.metric("Hit@10");
      cell.ndcg10 = result.test.metric("NDCG@10");
      cell.valid_ndcg10 = result.best_valid_ndcg10;
      cell.num_blocks = trainer.model().config().num_blocks;
      cell.dataset_hash = data.hash;
      table.cells[{v, name}] = cell;
    }
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_ablation_csv(*out_dir / "ablation.csv", table);
    std::ofstream(*out_dir / "ablation.md") << format_ablation_table(table);
  }
  return table;
}

std::string format_ablation_table(const AblationTable& table) {
  std::ostringstream os;
  os << "| Variant |";
  for (const auto& d : table.datasets) os << ' ' << d << " Hit@10 | " << d << " NDCG@10 |";
  os << "\n|---|";
  for (size_t i = 0; i < table.datasets.size(); ++i) os << "---|---|";
  os << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& v : table.variants) {
    os << "| " << variant_label(v) << " |";
    for (const auto& d : table.datasets) {
      const auto it = table.cells.find({v, d});
      if (it == table.cells.end()) {
        os << " - | - |";
      } else {
        os << ' ' << it->second.hit10 << " | " << it->second.ndcg10 << " |";
      }
    }
    os << '\n';
  }
  return os.str();
}

void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "dataset,variant,label,hit10,ndcg10,valid_ndcg10,num_blocks,dataset_hash\n";
  out << std::setprecision(17);
  for (const auto& d : table.datasets) {
    for (const auto& v : table.variants) {
      const auto it = table.cells.find({v, d});
      if (it == table.cells.end()) continue;
      const AblationCell& c = it->second;
      out << d << ',' << to_string(v) << ",\"" << variant_label(v) << "\"," << c.hit10 << ',' << c.ndcg10
          << ',' << c.valid_ndcg10 << ',' << c.num_blocks << ',' << c.dataset_hash << '\n';
    }
  }
}

// --------------------------------------------------------------------- sweep

std::vector<std::vector<double>> enumerate_tuples(const std::vector<double>& values, int levels,
                                                  TupleConstraint constraint) {
  if (levels < 1) throw ConfigError("levels must be positive");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::vector<double>> out;
  if (sorted.empty()) return out;
  const size_t n = sorted.size();
  std::vector<size_t> idx(levels, 0);
  while (true) {
    std::vector<double> t(levels);
    for (int i = 0; i < levels; ++i) t[i] = sorted[idx[i]];
    bool ok = true;
    if (constraint != TupleConstraint::None && levels > 1) {
      const double step = t[1] - t[0];
      const double sign = constraint == TupleConstraint::EqualStepAscending ? 1.0 : -1.0;
      const double tol = 1e-9 * std::max(1.0, std::abs(step));
      ok = sign * step > 0.0;
      for (int i = 2; ok && i < levels; ++i) ok = std::abs((t[i] - t[i - 1]) - step) <= tol;
    }
    if (ok) out.push_back(t);
    int pos = levels - 1;
    while (pos >= 0 && ++idx[pos] == n) idx[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

bool SweepGrid::empty() const {
  return temperatures.empty() && lambdas.empty() && dims.empty() && batch_sizes.empty() && thresholds.empty();
}

namespace {

TupleConstraint parse_constraint(const std::string& s) {
  if (s.empty() || s == "none") return TupleConstraint::None;
  if (s == "equal-step-ascending") return TupleConstraint::EqualStepAscending;
  if (s == "equal-step-descending") return TupleConstraint::EqualStepDescending;
  throw ConfigError("unknown tuple constraint '" + s + "'");
}

std::vector<std::vector<double>> parse_tuple_axis(const nlohmann::json& j, int levels,
                                                  TupleConstraint default_constraint, const std::string& name) {
  std::vector<std::vector<double>> out;
  if (j.is_object()) {
    const auto values = j.at("values").get<std::vector<double>>();
    const auto c = j.contains("constraint") ? parse_constraint(j.at("constraint").get<std::string>())
                                            : default_constraint;
    out = enumerate_tuples(values, levels, c);
  } else if (j.is_array()) {
    for (const auto& t : j) {
      auto tuple = t.get<std::vector<double>>();
      if (static_cast<int>(tuple.size()) != levels) {
        throw ConfigError(name + " tuple has " + std::to_string(tuple.size()) + " entries, expected " +
                          std::to_string(levels));
      }
      out.push_back(std::move(tuple));
    }
  } else {
    throw ConfigError(name + " must be an object or a list of tuples");
  }
  return out;
}

}  // namespace

SweepGrid parse_grid(const nlohmann::json& j, int levels) {
  if (!j.is_object()) throw ConfigError("grid file must hold a JSON object");
  static const std::set<std::string> known = {"mode",  "max_cells",  "temperatures", "lambdas",
                                              "dim",   "batch_size", "threshold"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown grid key '" + k + "'");
  }
  SweepGrid g;
  try {
    const std::string mode = j.value("mode", std::string("per-axis"));
    if (mode == "cartesian") g.cartesian = true;
    else if (mode != "per-axis") throw ConfigError("grid mode must be per-axis or cartesian");
    g.max_cells = j.value("max_cells", g.max_cells);
    if (j.contains("temperatures")) {
      g.temperatures = parse_tuple_axis(j["temperatures"], levels, TupleConstraint::EqualStepAscending,
                                        "temperatures");
    }
    if (j.contains("lambdas")) {
      g.lambdas = parse_tuple_axis(j["lambdas"], levels, TupleConstraint::EqualStepDescending, "lambdas");
    }
    if (j.contains("dim")) g.dims = j["dim"].get<std::vector<int>>();
    if (j.contains("batch_size")) g.batch_sizes = j["batch_size"].get<std::vector<int>>();
    if (j.contains("threshold")) g.thresholds = j["threshold"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grid: ") + e.what());
  }
  if (g.empty()) throw UsageError("sweep grid is empty");
  if (g.max_cells < 1) throw ConfigError("max_cells must be positive");
  return g;
}

SweepGrid load_grid(const std::filesystem::path& path, int levels) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read grid file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("grid file " + path.string() + ": " + e.what());
  }
  return parse_grid(j, levels);
}

std::vector<SweepCell> expand_grid(const SweepGrid& grid) {
  struct Axis {
    std::string name;
    std::vector<std::pair<std::string, std::string>> values;  // label, override
  };
  std::vector<Axis> axes;
  auto tuple_axis = [&](const std::string& name, const std::vector<std::vector<double>>& tuples) {
    if (tuples.empty()) return;
    Axis a{name, {}};
    for (const auto& t : tuples) a.values.push_back({join_values(t), name + "=" + join_values(t)});
    axes.push_back(std::move(a));
  };
  auto int_axis = [&](const std::string& name, const std::string& key, const std::vector<int>& values) {
    if (values.empty()) return;
    Axis a{name, {}};
    for (int v : values) a.values.push_back({std::to_string(v), key + "=" + std::to_string(v)});
    axes.push_back(std::move(a));
  };
  tuple_axis("temperatures", grid.temperatures);
  tuple_axis("lambdas", grid.lambdas);
  int_axis("dim", "dim", grid.dims);
  int_axis("batch_size", "batch_size", grid.batch_sizes);
  int_axis("threshold", "threshold", grid.thresholds);

  long count = 0;
  if (grid.cartesian) {
    count = axes.empty() ? 0 : 1;
    for (const auto& a : axes) count *= static_cast<long>(a.values.size());
  } else {
    for (const auto& a : axes) count += static_cast<long>(a.values.size());
  }
  if (count > grid.max_cells) {
    throw UsageError("sweep grid has " + std::to_string(count) + " cells, budget is " +
                     std::to_string(grid.max_cells));
  }

  std::vector<SweepCell> cells;
  if (!grid.cartesian) {
    for (const auto& a : axes) {
      for (const auto& [label, ov] : a.values) cells.push_back({a.name, label, {ov}});
    }
    return cells;
  }
  std::vector<size_t> idx(axes.size(), 0);
  for (long c = 0; c < count; ++c) {
    SweepCell cell{"cartesian", "", {}};
    for (size_t a = 0; a < axes.size(); ++a) {
      const auto& [label, ov] = axes[a].values[idx[a]];
      cell.label += (a ? " " : "") + axes[a].name + "=" + label;
      cell.overrides.push_back(ov);
    }
    cells.push_back(std::move(cell));
    for (size_t a = axes.size(); a-- > 0;) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
  }
  return cells;
}

std::vector<SweepRow> run_sweep(const std::filesystem::path& dataset, const TrainConfig& base,
                                const SweepGrid& grid, const std::optional<std::filesystem::path>& out_dir,
                                bool verbose) {
  const std::vector<SweepCell> cells = expand_grid(grid);
  std::vector<SweepRow> rows;
  for (size_t i = 0; i < cells.size(); ++i) {
    TrainConfig cfg = base;
    apply_overrides(cfg, cells[i].overrides);
    cfg.validate();
    if (verbose) std::cerr << "[sweep] " << cells[i].axis << " " << cells[i].label << '\n';
    LoadedData data = load_training_data(dataset, cfg);
    Trainer trainer(cfg, std::move(data.split), std::move(data.index));
    std::optional<std::filesystem::path> run_dir;
    if (out_dir) run_dir = *out_dir / ("cell_" + std::to_string(i));
    const TrainResult result = trainer.fit(run_dir, verbose);
    rows.push_back({cells[i], result.test.metrics, result.best_valid_ndcg10});
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_sweep_csv(*out_dir / "sweep.csv", rows);
    write_sweep_plots(*out_dir, rows);
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  std::set<std::string> metric_names;
  for (const auto& r : rows) {
    for (const auto& [k, _] : r.test) metric_names.insert(k);
  }
  out << "axis,value,overrides,valid_ndcg10";
  for (const auto& m : metric_names) out << ',' << m;
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    std::string ov;
    for (size_t i = 0; i < r.cell.overrides.size(); ++i) ov += (i ? ";" : "") + r.cell.overrides[i];
    out << r.cell.axis << ",\"" << r.cell.label << "\",\"" << ov << "\"," << r.valid_ndcg10;
    for (const auto& m : metric_names) {
      const auto it = r.test.find(m);
      out << ',' << (it == r.test.end() ? 0.0 : it->second);
    }
    out << '\n';
  }
}

void write_sweep_plots(const std::filesystem::path& dir, const std::vector<SweepRow>& rows) {
  std::vector<std::string> axes;
  for (const auto& r : rows) {
    if (std::find(axes.begin(), axes.end(), r.cell.axis) == axes.end()) axes.push_back(r.cell.axis);
  }
  for (const auto& axis : axes) {
    std::vector<std::string> ticks;
    std::map<std::string, std::vector<double>> by_metric;
    for (const auto& r : rows) {
      if (r.cell.axis != axis) continue;
      ticks.push_back(r.cell.label);
      for (const auto& [k, v] : r.test) by_metric[k].push_back(v);
    }
    std::vector<Series> series;
    for (auto& [k, v] : by_metric) {
      if (v.size() == ticks.size()) series.push_back({k, std::move(v)});
    }
    write_line_plot_svg(dir / ("sweep_" + axis + ".svg"), "Test metrics vs " + axis, axis, ticks, series);
  }
}

}  // namespace hclrec
