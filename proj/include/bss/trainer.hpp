#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bss/fsx.hpp"
#include "bss/nfc.hpp"
#include "bss/objectives.hpp"
#include "bss/segnet.hpp"
#include "bss/volume.hpp"

namespace bss {

/// Ablation rows: which components of the method are active.
///   baseline_mt  mean teacher only (slice supervision + raw consistency)
///   nfc          + synthesized volumetric supervision
///   nfc_fx       + frequency mix-up of the consistency input
///   nfc_sx       + spatial mix-up of inputs and pseudo-labels
///   full_bva     everything
enum class Variant { kBaselineMt, kNfc, kNfcFx, kNfcSx, kFullBva };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainerConfig {
  double lr = 1e-4;
  index_t epochs = 40;
  double ema_decay = 0.99;
  index_t crop_depth = 80, crop_height = 112, crop_width = 112;
  NfcConfig nfc;
  FsxConfig fsx;
  OptimConfig optimizer;
  std::uint64_t seed = 1;
  Variant variant = Variant::kFullBva;
  SegNetConfig net;
  index_t workers = 1;  // parallel data synthesis; results identical to serial

  void validate() const;
};

/// Paired student/teacher parameters plus the student's optimizer moments.
/// The teacher never owns moments and changes only through ema_update.
struct TrainState {
  ParameterSet student;
  ParameterSet teacher;
  std::map<std::string, Tensor> moment1, moment2;
  index_t iteration = 0;
};

TrainState init_train_state(const TrainerConfig& config);

/// theta' <- decay * theta' + (1 - decay) * theta, element-wise.
void ema_update(TrainState& state, double decay);

/// Decoupled-weight-decay adaptive update of the student parameters.
void adamw_step(TrainState& state, const std::map<std::string, Tensor>& grads,
                const TrainerConfig& config);

struct LabeledCrop {
  Tensor image;          // (C, cd, ch, cw)
  Label2d slice_label;   // cropped in-plane
  index_t slice_index;   // within the crop
};

struct VolumeCrop {
  Tensor image;
  std::optional<LabelVolume> label;
};

/// Uniform random crop with identical windows for image and label; volumes
/// smaller than the crop are zero-padded symmetrically first. keep_slice
/// (depth index, pre-padding) constrains the window to contain that slice.
VolumeCrop random_crop(const Volume& v, const LabelVolume* label, index_t crop_d, index_t crop_h,
                       index_t crop_w, Rng& rng);
LabeledCrop random_crop_labeled(const Volume& v, const SliceAnnotation& annotation, index_t crop_d,
                                index_t crop_h, index_t crop_w, Rng& rng);

/// Everything about one iteration that depends only on (inputs, seed): crops,
/// synthesis, perturbations, masks. Pure, so it can be prepared by parallel
/// workers without changing results.
struct IterationData {
  std::uint64_t seed = 0;
  LabeledCrop labeled;
  Tensor synth_image;        // synthesized crop, when the variant uses it
  LabelVolume synth_label;
  bool has_synth = false;
  Tensor unlabeled_image;
  Tensor perturbed_synth;    // frequency-perturbed variants of the two crops
  Tensor perturbed_unlabeled;
  bool has_fx = false;
  SpatialMask mask;
  bool has_sx = false;
  double alpha = 0.0;
};

IterationData prepare_iteration(const BarelyLabeledItem& labeled, const Volume& unlabeled,
                                const TrainerConfig& config, std::uint64_t seed);

struct IterationResult {
  LossReport report;
  std::uint64_t data_seed = 0;
  // FNV-1a of the spatial mask bytes at its two points of use (image mixing
  // and pseudo-label mixing); equal by the mask-sharing contract.
  std::uint64_t image_mask_hash = 0;
  std::uint64_t label_mask_hash = 0;
};

IterationResult train_iteration(TrainState& state, const BarelyLabeledItem& labeled,
                                const Volume& unlabeled, const TrainerConfig& config);
IterationResult train_iteration_with_data(TrainState& state, const IterationData& data,
                                          const TrainerConfig& config);

struct ValItem {
  Volume volume;
  LabelVolume label;
};

struct EpochLog {
  index_t epoch = 0;
  LossReport mean_loss;
  double val_dsc = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  ParameterSet student;
  std::vector<EpochLog> log;
};

/// Full training loop; returns the student parameters only.
FitResult fit(const TrainerConfig& config, const BarelyLabeledSet& labeled,
              const UnlabeledSet& unlabeled, const std::vector<ValItem>& val = {});

/// Student inference on an arbitrary volume (padded to the downsample
/// multiple internally).
LabelVolume predict_labels(const SegNetConfig& net, const ParameterSet& params, const Volume& v);

void save_checkpoint(const std::string& path, const ParameterSet& student,
                     const ParameterSet* teacher = nullptr);
ParameterSet load_checkpoint_student(const std::string& path);

void write_training_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace bss
