#pragma once

#include <string>
#include <vector>

#include "bss/phantom.hpp"
#include "bss/trainer.hpp"

namespace bss {

/// One experiment grid over a phantom dataset. Cells are trained with
/// trainer::fit and evaluated (student only) on the test split.
struct ExperimentSpec {
  std::string grid;  // components | nfc-sweep | stacking | annotation-budget
  std::vector<std::uint64_t> seeds;
  TrainerConfig base;
  std::string data_dir;
  std::string out_dir;
  index_t jobs = 1;
  bool save_checkpoints = true;
};

struct CellRow {
  std::string cell;
  std::uint64_t seed = 0;
  double mean_dsc = 0.0;
  double mean_asd = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_class_dsc;
  std::vector<double> per_class_asd;  // NaN where undefined on every volume
};

struct ExperimentResult {
  std::vector<std::string> cells;  // grid order
  std::vector<CellRow> rows;       // cell-major, seeds in given order
  std::string csv_path;
  std::string plot_path;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Mean DSC over seeds for one cell of a finished experiment.
double cell_mean_dsc(const ExperimentResult& result, const std::string& cell);

/// Evaluation of one parameter set over labeled volumes.
struct EvalRow {
  std::string volume_id;
  index_t cls = 0;
  double dsc = 0.0;
  bool asd_defined = false;
  double asd = 0.0;
};

std::vector<EvalRow> evaluate_on(const SegNetConfig& net, const ParameterSet& params,
                                 const std::vector<ValItem>& items);
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace bss
