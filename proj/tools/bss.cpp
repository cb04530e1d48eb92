// Command-line front end: phantom data synthesis, barely-supervised
// training, evaluation, augmentation previews, and experiment grids.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
// failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bss/config_file.hpp"
#include "bss/experiment.hpp"
#include "bss/fsx.hpp"
#include "bss/nfc.hpp"
#include "bss/phantom.hpp"
#include "bss/trainer.hpp"
#include "bss/volume_io.hpp"

namespace fs = std::filesystem;
using namespace bss;

namespace {

constexpr const char* kDataDirEnv = "BSS_DATA_DIR";

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
}

std::string resolve_data_dir(std::string flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv(kDataDirEnv)) return env;
  throw ConfigError("no data directory: pass --data or set " + std::string(kDataDirEnv));
}

FullConfig load_optional_config(const std::string& path) {
  FullConfig config;
  if (!path.empty()) config = load_config_file(path);
  return config;
}

int cmd_synth(const std::string& out_dir, index_t n, std::uint64_t seed,
              const std::string& config_path, double labeled_fraction,
              const std::string& slice_policy, index_t multi_slice) {
  if (n < 1) throw ConfigError("synth: --n must be >= 1");
  FullConfig config = load_optional_config(config_path);
  if (labeled_fraction > 0.0) config.split.labeled_fraction = labeled_fraction;
  if (!slice_policy.empty()) config.split.slice_policy = parse_slice_policy(slice_policy);
  if (multi_slice > 0) config.split.multi_slice = multi_slice;
  fs::create_directories(out_dir);
  synthesize_dataset(out_dir, n, seed, config.phantom, config.split);
  write_text((fs::path(out_dir) / "resolved_config.json").string(),
             resolved_config_json(config));
  std::cout << "wrote " << n << " phantom pairs and manifest to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_flag, const std::string& config_path,
              const std::string& variant, const std::string& out_dir, std::int64_t seed,
              std::int64_t epochs, std::int64_t workers) {
  const std::string data_dir = resolve_data_dir(data_flag);
  FullConfig config = load_optional_config(config_path);
  if (!variant.empty()) config.trainer.variant = parse_variant(variant);
  if (seed >= 0) config.trainer.seed = static_cast<std::uint64_t>(seed);
  if (epochs >= 0) config.trainer.epochs = epochs;
  if (workers >= 1) config.trainer.workers = workers;

  const LoadedDataset data = load_dataset(data_dir);
  config.trainer.net.num_classes = data.num_classes;
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "resolved_config.json").string(),
             resolved_config_json(config));

  const FitResult result = fit(config.trainer, data.labeled, data.unlabeled, data.val);
  save_checkpoint((fs::path(out_dir) / "checkpoint.bssvol").string(), result.student);
  write_training_log_csv((fs::path(out_dir) / "training_log.csv").string(), result.log);
  if (!result.log.empty()) {
    const EpochLog& last = result.log.back();
    std::cout << "final epoch " << last.epoch << ": l_total=" << last.mean_loss.total
              << " val_dsc=" << last.val_dsc << "\n";
  }
  std::cout << "wrote checkpoint and training log to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_flag,
             const std::string& split, const std::string& out_path,
             const std::string& config_path) {
  const std::string data_dir = resolve_data_dir(data_flag);
  FullConfig config = load_optional_config(config_path);
  const LoadedDataset data = load_dataset(data_dir);
  config.trainer.net.num_classes = data.num_classes;

  std::vector<ValItem> items;
  if (split == "test") {
    items = data.test;
  } else if (split == "val") {
    items = data.val;
  } else if (split == "train") {
    for (std::size_t i = 0; i < data.train_labels.size(); ++i) {
      items.push_back({data.unlabeled.volumes[i], data.train_labels[i]});
    }
  } else {
    throw ConfigError("eval: --split must be test|val|train");
  }
  if (items.empty()) throw ConfigError("eval: split '" + split + "' is empty");

  const ParameterSet params = load_checkpoint_student(checkpoint);
  const auto rows = evaluate_on(config.trainer.net, params, items);
  const std::string csv = out_path.empty() ? "metrics.csv" : out_path;
  write_eval_csv(csv, rows);

  double dsc_sum = 0.0;
  for (const EvalRow& r : rows) dsc_sum += r.dsc;
  std::cout << "volume_id,class,dsc,asd\n";
  for (const EvalRow& r : rows) {
    std::cout << r.volume_id << "," << r.cls << "," << r.dsc << ",";
    if (r.asd_defined) {
      std::cout << r.asd;
    } else {
      std::cout << "undefined";
    }
    std::cout << "\n";
  }
  std::cout << "mean DSC over " << rows.size() << " rows: "
            << dsc_sum / static_cast<double>(rows.size()) << "\n";
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_ablate(const std::string& grid, const std::vector<std::uint64_t>& seeds,
               const std::string& data_flag, const std::string& out_dir,
               const std::string& config_path, index_t jobs) {
  FullConfig config = load_optional_config(config_path);
  ExperimentSpec spec;
  spec.grid = grid;
  spec.seeds = seeds.empty() ? std::vector<std::uint64_t>{1} : seeds;
  spec.base = config.trainer;
  spec.data_dir = resolve_data_dir(data_flag);
  spec.out_dir = out_dir;
  spec.jobs = jobs;
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "resolved_config.json").string(),
             resolved_config_json(config));
  const ExperimentResult result = run_experiment(spec);
  for (const std::string& cell : result.cells) {
    std::cout << cell << ": mean DSC " << cell_mean_dsc(result, cell) << "\n";
  }
  std::cout << "wrote " << result.csv_path << " and " << result.plot_path << "\n";
  return 0;
}

int cmd_preview_nfc(const std::string& in_path, const std::string& label_path,
                    std::int64_t slice, const std::string& out_dir, std::uint64_t seed,
                    const std::string& config_path) {
  FullConfig config = load_optional_config(config_path);
  const Volume volume = load_volume(in_path);
  const LabelVolume full = load_label_volume(label_path);
  index_t k = slice;
  if (k < 0) {
    Rng pick(seed);
    k = pick_annotated_slice(full, SlicePolicy{}, pick);
  }
  if (k < 0 || k >= full.depth) throw ConfigError("preview-nfc: slice out of range");

  BarelyLabeledItem item;
  item.volume = volume;
  item.num_classes = full.num_classes;
  item.annotation.slice_index = k;
  item.annotation.label2d.height = full.height;
  item.annotation.label2d.width = full.width;
  item.annotation.label2d.classes.assign(full.classes.begin() + k * full.height * full.width,
                                         full.classes.begin() + (k + 1) * full.height * full.width);
  Rng rng(seed);
  auto [synth_vol, synth_lbl] =
      synthesize(item.volume, item.annotation, item.num_classes, config.trainer.nfc, rng);
  fs::create_directories(out_dir);
  save_volume((fs::path(out_dir) / "synth_volume.bssvol").string(), synth_vol);
  save_volume((fs::path(out_dir) / "synth_label.bssvol").string(), synth_lbl);
  write_text((fs::path(out_dir) / "resolved_config.json").string(),
             resolved_config_json(config));
  std::cout << "synthesized " << synth_vol.depth << "x" << synth_vol.height << "x"
            << synth_vol.width << " volume from slice " << k << "\n";
  return 0;
}

int cmd_preview_fsx(const std::string& in_path, const std::string& ref_path,
                    const std::string& out_dir, std::uint64_t seed, double alpha, double beta,
                    const std::string& config_path) {
  FullConfig config = load_optional_config(config_path);
  FsxConfig fsx = config.trainer.fsx;
  if (beta >= 0.0) fsx.beta = beta;
  const Volume synth = load_volume(in_path);
  const Volume orig = ref_path.empty() ? synth : load_volume(ref_path);

  Rng rng(seed);
  const double a = alpha >= 0.0 ? alpha : rng.uniform(fsx.alpha_lo, fsx.alpha_hi);
  const FreqMask omega = center_mask(synth.depth, synth.height, synth.width, fsx.beta);
  const FreqMixResult mix = frequency_mixup(orig, synth, a, omega, fsx.blend_mode);
  const SpatialMask m = random_cuboid_mask(synth.depth, synth.height, synth.width,
                                           fsx.cutmix_ratio_lo, fsx.cutmix_ratio_hi, rng);
  const Volume mixed = spatial_mixup(mix.perturbed_orig, mix.perturbed_synth, m);

  fs::create_directories(out_dir);
  save_volume((fs::path(out_dir) / "perturbed_synth.bssvol").string(), mix.perturbed_synth);
  save_volume((fs::path(out_dir) / "perturbed_orig.bssvol").string(), mix.perturbed_orig);
  save_volume((fs::path(out_dir) / "mixed.bssvol").string(), mixed);
  LabelVolume omega_grid(omega.depth, omega.height, omega.width, 2);
  for (std::size_t i = 0; i < omega.ones.size(); ++i) omega_grid.classes[i] = omega.ones[i];
  save_volume((fs::path(out_dir) / "freq_mask.bssvol").string(), omega_grid);
  LabelVolume m_grid(m.depth, m.height, m.width, 2);
  for (std::size_t i = 0; i < m.ones.size(); ++i) m_grid.classes[i] = m.ones[i];
  save_volume((fs::path(out_dir) / "spatial_mask.bssvol").string(), m_grid);
  write_text((fs::path(out_dir) / "resolved_config.json").string(),
             resolved_config_json(config));
  std::cout << "alpha=" << a << " beta=" << fsx.beta << " mask_fraction=" << m.fraction() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barely-supervised volumetric segmentation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a phantom dataset with a manifest");
  std::string synth_out, synth_config, synth_policy;
  index_t synth_n = 0, synth_multi = 0;
  std::uint64_t synth_seed = 1;
  double synth_fraction = -1.0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n", synth_n, "number of volumes")->required();
  synth->add_option("--seed", synth_seed, "generation seed");
  synth->add_option("--phantom-config", synth_config, "JSON config file");
  synth->add_option("--labeled-fraction", synth_fraction, "fraction of train volumes labeled");
  synth->add_option("--slice-policy", synth_policy,
                    "max_foreground_area|center|fixed:<k>|random");
  synth->add_option("--multi-slice", synth_multi, "annotate N slices of a single volume");

  // train
  auto* train = app.add_subcommand("train", "train a student model on a dataset");
  std::string train_data, train_config, train_variant, train_out;
  std::int64_t train_seed = -1, train_epochs = -1, train_workers = 0;
  train->add_option("--data", train_data, "dataset directory (or " + std::string(kDataDirEnv) + ")");
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--variant", train_variant, "baseline_mt|nfc|nfc_fx|nfc_sx|full_bva");
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--epochs", train_epochs, "epoch count override");
  train->add_option("--workers", train_workers, "parallel data workers");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out, eval_config;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory");
  eval->add_option("--split", eval_split, "test|val|train");
  eval->add_option("--out", eval_out, "metrics CSV path");
  eval->add_option("--config", eval_config, "JSON config file");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run an experiment grid");
  std::string ablate_grid, ablate_data, ablate_out, ablate_config;
  std::vector<std::uint64_t> ablate_seeds;
  index_t ablate_jobs = 1;
  ablate->add_option("--grid", ablate_grid, "components|nfc-sweep|stacking|annotation-budget")
      ->required();
  ablate->add_option("--seeds", ablate_seeds, "training seeds");
  ablate->add_option("--data", ablate_data, "dataset directory");
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->add_option("--config", ablate_config, "JSON config file");
  ablate->add_option("--jobs", ablate_jobs, "parallel grid cells");

  // preview-nfc
  auto* pnfc = app.add_subcommand("preview-nfc", "synthesize a volume from one labeled slice");
  std::string pnfc_in, pnfc_label, pnfc_out, pnfc_config;
  std::int64_t pnfc_slice = -1;
  std::uint64_t pnfc_seed = 1;
  pnfc->add_option("--in", pnfc_in, "input volume file")->required();
  pnfc->add_option("--label", pnfc_label, "label volume file")->required();
  pnfc->add_option("--slice", pnfc_slice, "annotated slice (default: max foreground area)");
  pnfc->add_option("--out", pnfc_out, "output directory")->required();
  pnfc->add_option("--seed", pnfc_seed, "seed");
  pnfc->add_option("--config", pnfc_config, "JSON config file");

  // preview-fsx
  auto* pfsx = app.add_subcommand("preview-fsx", "apply frequency and spatial mix-up");
  std::string pfsx_in, pfsx_ref, pfsx_out, pfsx_config;
  std::uint64_t pfsx_seed = 1;
  double pfsx_alpha = -1.0, pfsx_beta = -1.0;
  pfsx->add_option("--in", pfsx_in, "synthesized volume file")->required();
  pfsx->add_option("--ref", pfsx_ref, "original volume file (default: --in)");
  pfsx->add_option("--out", pfsx_out, "output directory")->required();
  pfsx->add_option("--seed", pfsx_seed, "seed");
  pfsx->add_option("--alpha", pfsx_alpha, "mix-up strength override");
  pfsx->add_option("--beta", pfsx_beta, "frequency mask fraction override");
  pfsx->add_option("--config", pfsx_config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      return cmd_synth(synth_out, synth_n, synth_seed, synth_config, synth_fraction,
                       synth_policy, synth_multi);
    }
    if (*train) {
      return cmd_train(train_data, train_config, train_variant, train_out, train_seed,
                       train_epochs, train_workers);
    }
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_out, eval_config);
    if (*ablate) {
      return cmd_ablate(ablate_grid, ablate_seeds, ablate_data, ablate_out, ablate_config,
                        ablate_jobs);
    }
    if (*pnfc) {
      return cmd_preview_nfc(pnfc_in, pnfc_label, pnfc_slice, pnfc_out, pnfc_seed, pnfc_config);
    }
    if (*pfsx) {
      return cmd_preview_fsx(pfsx_in, pfsx_ref, pfsx_out, pfsx_seed, pfsx_alpha, pfsx_beta,
                             pfsx_config);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
