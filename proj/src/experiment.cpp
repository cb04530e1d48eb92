#include "bss/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace bss {

namespace {

struct Cell {
  std::string name;
  TrainerConfig config;           // fully resolved except the seed
  index_t budget_slices = 0;      // annotation-budget grid only
  bool budget_single_volume = false;
};

std::vector<Cell> make_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  const TrainerConfig& base = spec.base;
  if (spec.grid == "components") {
    for (Variant v : {Variant::kBaselineMt, Variant::kNfc, Variant::kNfcFx, Variant::kNfcSx,
                      Variant::kFullBva}) {
      Cell c{variant_name(v), base};
      c.config.variant = v;
      cells.push_back(std::move(c));
    }
  } else if (spec.grid == "nfc-sweep") {
    const std::pair<std::string, double> windows[] = {
        {"1-16", 1.0 / 16.0}, {"1-8", 1.0 / 8.0}, {"1-4", 1.0 / 4.0}, {"1-2", 1.0 / 2.0}};
    for (const auto& [wname, wfrac] : windows) {
      for (index_t s : {4, 8, 16}) {
        Cell c{"k" + wname + "_s" + std::to_string(s), base};
        c.config.variant = Variant::kFullBva;
        c.config.nfc.window_fraction = wfrac;
        c.config.nfc.window_voxels = 0;
        c.config.nfc.stride = s;
        cells.push_back(std::move(c));
      }
    }
  } else if (spec.grid == "stacking") {
    for (StackStrategy s :
         {StackStrategy::kSequential, StackStrategy::kRandom, StackStrategy::kWithNoise}) {
      Cell c{stack_strategy_name(s), base};
      c.config.variant = Variant::kFullBva;
      c.config.nfc.stack_strategy = s;
      cells.push_back(std::move(c));
    }
  } else if (spec.grid == "annotation-budget") {
    for (index_t n : {1, 2, 4, 8}) {
      Cell c{"images_n" + std::to_string(n), base};
      c.budget_slices = n;
      c.budget_single_volume = false;
      cells.push_back(std::move(c));
    }
    for (index_t n : {1, 2, 4, 8}) {
      Cell c{"slices_n" + std::to_string(n), base};
      c.budget_slices = n;
      c.budget_single_volume = true;
      cells.push_back(std::move(c));
    }
  } else {
    throw ConfigError("unknown experiment grid '" + spec.grid +
                      "' (expected components|nfc-sweep|stacking|annotation-budget)");
  }
  return cells;
}

CellRow run_cell(const Cell& cell, std::uint64_t seed, const LoadedDataset& data,
                 const ExperimentSpec& spec) {
  TrainerConfig config = cell.config;
  config.seed = seed;
  config.net.num_classes = data.num_classes;

  FitResult fit_result;
  if (cell.budget_slices > 0) {
    LoadedDataset local = data;  // labeled selection is rewritten per cell
    apply_annotation_budget(local, cell.budget_slices, cell.budget_single_volume,
                            SlicePolicy{},
                            derive_seed(0xB0D6E7ULL, std::hash<std::string>{}(cell.name)));
    fit_result = fit(config, local.labeled, local.unlabeled, local.val);
  } else {
    fit_result = fit(config, data.labeled, data.unlabeled, data.val);
  }

  if (spec.save_checkpoints) {
    const std::string path =
        (fs::path(spec.out_dir) / ("ckpt_" + cell.name + "_" + std::to_string(seed) + ".bssvol"))
            .string();
    save_checkpoint(path, fit_result.student);
  }
  {
    const std::string path =
        (fs::path(spec.out_dir) / ("log_" + cell.name + "_" + std::to_string(seed) + ".csv"))
            .string();
    write_training_log_csv(path, fit_result.log);
  }

  CellRow row;
  row.cell = cell.name;
  row.seed = seed;
  const index_t n_classes = data.num_classes - 1;
  std::vector<double> dsc_sum(static_cast<std::size_t>(n_classes), 0.0);
  std::vector<double> asd_sum(static_cast<std::size_t>(n_classes), 0.0);
  std::vector<index_t> asd_count(static_cast<std::size_t>(n_classes), 0);
  double mean_sum = 0.0;
  for (const ValItem& item : data.test) {
    const LabelVolume pred = predict_labels(config.net, fit_result.student, item.volume);
    const DscResult d = dsc_metric(pred, item.label);
    const AsdResult a = asd_metric(pred, item.label);
    mean_sum += d.mean;
    for (index_t c = 0; c < n_classes; ++c) {
      dsc_sum[static_cast<std::size_t>(c)] += d.per_class[static_cast<std::size_t>(c)];
      if (a.per_class[static_cast<std::size_t>(c)].has_value()) {
        asd_sum[static_cast<std::size_t>(c)] += *a.per_class[static_cast<std::size_t>(c)];
        asd_count[static_cast<std::size_t>(c)] += 1;
      }
    }
  }
  const double n_test = static_cast<double>(data.test.size());
  row.mean_dsc = mean_sum / n_test;
  double asd_total = 0.0;
  index_t asd_classes = 0;
  for (index_t c = 0; c < n_classes; ++c) {
    row.per_class_dsc.push_back(dsc_sum[static_cast<std::size_t>(c)] / n_test);
    if (asd_count[static_cast<std::size_t>(c)] > 0) {
      const double v = asd_sum[static_cast<std::size_t>(c)] /
                       static_cast<double>(asd_count[static_cast<std::size_t>(c)]);
      row.per_class_asd.push_back(v);
      asd_total += v;
      ++asd_classes;
    } else {
      row.per_class_asd.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (asd_classes > 0) row.mean_asd = asd_total / static_cast<double>(asd_classes);
  return row;
}

void write_results_csv(const std::string& path, const ExperimentResult& result,
                       index_t num_classes, std::size_t n_seeds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "grid_cell,seed,mean_dsc,mean_asd";
  for (index_t c = 1; c < num_classes; ++c) out << ",dsc_class_" << c;
  for (index_t c = 1; c < num_classes; ++c) out << ",asd_class_" << c;
  out << ",std_dsc,std_asd\n";
  out.precision(17);

  auto print_row = [&](const CellRow& r) {
    out << r.cell << "," << r.seed << "," << r.mean_dsc << "," << r.mean_asd;
    for (double v : r.per_class_dsc) out << "," << v;
    for (double v : r.per_class_asd) out << "," << v;
    out << ",,\n";
  };

  for (const std::string& cell : result.cells) {
    std::vector<const CellRow*> rows;
    for (const CellRow& r : result.rows) {
      if (r.cell == cell) rows.push_back(&r);
    }
    for (const CellRow* r : rows) print_row(*r);

    // summary row: per-cell mean over seeds plus the stddev columns
    CellRow mean_row;
    mean_row.cell = cell;
    mean_row.per_class_dsc.assign(static_cast<std::size_t>(num_classes - 1), 0.0);
    mean_row.per_class_asd.assign(static_cast<std::size_t>(num_classes - 1), 0.0);
    double dsc_sq = 0.0, asd_sq = 0.0, asd_mean_acc = 0.0;
    index_t asd_n = 0;
    for (const CellRow* r : rows) {
      mean_row.mean_dsc += r->mean_dsc;
      dsc_sq += r->mean_dsc * r->mean_dsc;
      if (std::isfinite(r->mean_asd)) {
        asd_mean_acc += r->mean_asd;
        asd_sq += r->mean_asd * r->mean_asd;
        ++asd_n;
      }
      for (std::size_t c = 0; c < mean_row.per_class_dsc.size(); ++c) {
        mean_row.per_class_dsc[c] += r->per_class_dsc[c];
        mean_row.per_class_asd[c] += r->per_class_asd[c];
      }
    }
    const double n = static_cast<double>(rows.size());
    mean_row.mean_dsc /= n;
    for (std::size_t c = 0; c < mean_row.per_class_dsc.size(); ++c) {
      mean_row.per_class_dsc[c] /= n;
      mean_row.per_class_asd[c] /= n;
    }
    const double dsc_var = std::max(0.0, dsc_sq / n - mean_row.mean_dsc * mean_row.mean_dsc);
    double asd_mean = std::numeric_limits<double>::quiet_NaN();
    double asd_std = std::numeric_limits<double>::quiet_NaN();
    if (asd_n > 0) {
      asd_mean = asd_mean_acc / static_cast<double>(asd_n);
      asd_std = std::sqrt(
          std::max(0.0, asd_sq / static_cast<double>(asd_n) - asd_mean * asd_mean));
    }
    out << cell << ",summary," << mean_row.mean_dsc << "," << asd_mean;
    for (double v : mean_row.per_class_dsc) out << "," << v;
    for (double v : mean_row.per_class_asd) out << "," << v;
    out << "," << (n_seeds > 1 ? std::sqrt(dsc_var) : 0.0) << "," << (n_seeds > 1 ? asd_std : 0.0)
        << "\n";
  }
}

// Minimal standalone SVG bar/line plot of per-cell mean DSC.
void write_plot_svg(const std::string& path, const ExperimentResult& result) {
  std::vector<std::pair<std::string, double>> bars;
  for (const std::string& cell : result.cells) {
    bars.emplace_back(cell, cell_mean_dsc(result, cell));
  }
  const int width = 120 + static_cast<int>(bars.size()) * 70;
  const int height = 320;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='60' y1='20' x2='60' y2='260' stroke='black'/>\n";
  out << "<line x1='60' y1='260' x2='" << width - 20 << "' y2='260' stroke='black'/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const int y = 260 - 24 * tick;
    out << "<text x='18' y='" << y + 4 << "' font-size='11'>" << std::fixed
        << std::setprecision(1) << tick / 10.0 << "</text>\n";
    out << "<line x1='56' y1='" << y << "' x2='60' y2='" << y << "' stroke='black'/>\n";
  }
  out << "<text x='8' y='14' font-size='12'>mean test DSC</text>\n";
  int x = 80;
  for (const auto& [name, dsc] : bars) {
    const int h = static_cast<int>(std::clamp(dsc, 0.0, 1.0) * 240.0);
    out << "<rect x='" << x << "' y='" << 260 - h << "' width='40' height='" << h
        << "' fill='#4878a8'/>\n";
    out << "<text x='" << x + 20 << "' y='" << 260 - h - 6
        << "' font-size='11' text-anchor='middle'>" << std::setprecision(3) << dsc << "</text>\n";
    out << "<text x='" << x + 20 << "' y='278' font-size='10' text-anchor='middle'>" << name
        << "</text>\n";
    x += 70;
  }
  out << "</svg>\n";
}

}  // namespace

double cell_mean_dsc(const ExperimentResult& result, const std::string& cell) {
  double sum = 0.0;
  index_t n = 0;
  for (const CellRow& r : result.rows) {
    if (r.cell == cell) {
      sum += r.mean_dsc;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("cell_mean_dsc: no rows for cell '" + cell + "'");
  return sum / static_cast<double>(n);
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw ConfigError("run_experiment: at least one seed is required");
  if (spec.jobs < 1) throw ConfigError("run_experiment: jobs must be >= 1");
  const std::vector<Cell> cells = make_cells(spec);
  fs::create_directories(spec.out_dir);
  const LoadedDataset data = load_dataset(spec.data_dir);
  if (data.test.empty()) throw ConfigError("run_experiment: dataset has no test split");

  ExperimentResult result;
  for (const Cell& c : cells) result.cells.push_back(c.name);

  struct Task {
    const Cell* cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const Cell& c : cells) {
    for (std::uint64_t s : spec.seeds) tasks.push_back({&c, s});
  }

  std::vector<CellRow> rows(tasks.size());
  if (spec.jobs == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      rows[i] = run_cell(*tasks[i].cell, tasks[i].seed, data, spec);
    }
  } else {
    // waves of at most `jobs` concurrent cells; output order stays fixed
    for (std::size_t start = 0; start < tasks.size(); start += static_cast<std::size_t>(spec.jobs)) {
      const std::size_t stop =
          std::min(tasks.size(), start + static_cast<std::size_t>(spec.jobs));
      std::vector<std::future<CellRow>> wave;
      for (std::size_t i = start; i < stop; ++i) {
        wave.push_back(std::async(std::launch::async, [&, i] {
          return run_cell(*tasks[i].cell, tasks[i].seed, data, spec);
        }));
      }
      for (std::size_t i = start; i < stop; ++i) rows[i] = wave[i - start].get();
    }
  }
  result.rows = std::move(rows);

  result.csv_path = (fs::path(spec.out_dir) / "results.csv").string();
  write_results_csv(result.csv_path, result, data.num_classes, spec.seeds.size());
  result.plot_path = (fs::path(spec.out_dir) / "plot_dsc.svg").string();
  write_plot_svg(result.plot_path, result);
  return result;
}

std::vector<EvalRow> evaluate_on(const SegNetConfig& net, const ParameterSet& params,
                                 const std::vector<ValItem>& items) {
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const LabelVolume pred = predict_labels(net, params, items[i].volume);
    const DscResult d = dsc_metric(pred, items[i].label);
    const AsdResult a = asd_metric(pred, items[i].label);
    for (index_t c = 1; c < items[i].label.num_classes; ++c) {
      EvalRow row;
      row.volume_id = "volume_" + std::to_string(i);
      row.cls = c;
      row.dsc = d.per_class[static_cast<std::size_t>(c - 1)];
      if (a.per_class[static_cast<std::size_t>(c - 1)].has_value()) {
        row.asd_defined = true;
        row.asd = *a.per_class[static_cast<std::size_t>(c - 1)];
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "volume_id,class,dsc,asd\n";
  out.precision(17);
  double dsc_sum = 0.0, asd_sum = 0.0;
  index_t asd_n = 0;
  for (const EvalRow& r : rows) {
    out << r.volume_id << "," << r.cls << "," << r.dsc << ",";
    if (r.asd_defined) {
      out << r.asd;
      asd_sum += r.asd;
      ++asd_n;
    } else {
      out << "undefined";
    }
    out << "\n";
    dsc_sum += r.dsc;
  }
  if (!rows.empty()) {
    out << "mean,all," << dsc_sum / static_cast<double>(rows.size()) << ",";
    if (asd_n > 0) {
      out << asd_sum / static_cast<double>(asd_n);
    } else {
      out << "undefined";
    }
    out << "\n";
  }
}

}  // namespace bss
