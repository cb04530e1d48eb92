#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bss/rng.hpp"
#include "bss/trainer.hpp"
#include "bss/volume.hpp"

namespace bss {

/// Synthetic volumetric benchmark data: smooth ellipsoidal foreground blobs
/// over a textured background.
struct PhantomConfig {
  index_t depth = 40, height = 64, width = 64;
  index_t blobs_lo = 1, blobs_hi = 3;
  double radius_lo = 0.12, radius_hi = 0.24;  // fractions of each axis
  double contrast = 0.5;                      // blob brightness over background, (0,1]
  double noise_std = 0.03;
  double texture_amp = 0.15;                  // low-frequency multiplicative field
  index_t texture_waves = 3;
  index_t num_classes = 2;

  void validate() const;
};

/// Deterministic per seed. Foreground fraction is kept within [0.01, 0.30];
/// configurations that cannot reach it within 100 attempts are rejected.
std::pair<Volume, LabelVolume> generate_phantom(std::uint64_t seed, const PhantomConfig& config);

enum class SplitTag { kTrainLabeled, kTrainUnlabeled, kVal, kTest };
std::string split_tag_name(SplitTag t);
SplitTag parse_split_tag(const std::string& name);

struct ManifestEntry {
  std::string volume_path;
  std::string label_path;        // empty when absent
  index_t annotated_slice = -1;  // >= 0 only for train_labeled entries
  SplitTag split = SplitTag::kTrainUnlabeled;
};

struct DatasetManifest {
  index_t num_classes = 2;
  std::vector<ManifestEntry> entries;

  void validate(const std::string& base_dir) const;
};

struct SlicePolicy {
  enum Kind { kMaxForegroundArea, kCenter, kFixed, kRandom } kind = kMaxForegroundArea;
  index_t fixed_index = 0;
};
SlicePolicy parse_slice_policy(const std::string& name);
std::string slice_policy_name(const SlicePolicy& p);

struct SplitSpec {
  // Fractions follow the 7:1:2 convention unless explicit counts are given.
  double train_fraction = 0.7, val_fraction = 0.1;
  index_t train_count = -1, val_count = -1, test_count = -1;  // used when >= 0
  double labeled_fraction = 0.05;
  SlicePolicy slice_policy;
  // > 0: annotate multi_slice slices of a single training volume instead of
  // labeled_fraction volumes with one slice each.
  index_t multi_slice = 0;
};

/// Chooses the annotated slice of one labeled volume under a policy.
index_t pick_annotated_slice(const LabelVolume& label, const SlicePolicy& policy, Rng& rng);

/// Assigns split tags, selects labeled volumes, and picks annotated slices.
/// Every training volume appears as a train_unlabeled entry; labeled volumes
/// additionally get train_labeled entries. Paths follow vol_NNN/lab_NNN.
DatasetManifest build_split(const std::vector<Volume>& volumes,
                            const std::vector<LabelVolume>& labels, const SplitSpec& spec,
                            std::uint64_t seed);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

/// Generates n phantoms, writes volume/label files plus the manifest to dir.
DatasetManifest synthesize_dataset(const std::string& dir, index_t n, std::uint64_t seed,
                                   const PhantomConfig& config, const SplitSpec& spec);

/// In-memory dataset matching a manifest on disk. train_labels is aligned
/// with unlabeled.volumes (the training pool).
struct LoadedDataset {
  index_t num_classes = 2;
  BarelyLabeledSet labeled;
  UnlabeledSet unlabeled;
  std::vector<LabelVolume> train_labels;
  std::vector<ValItem> val;
  std::vector<ValItem> test;
};

LoadedDataset load_dataset(const std::string& dir);

/// Rewrites the barely-labeled selection of a loaded dataset: either n
/// single-slice volumes or one volume with n annotated slices.
void apply_annotation_budget(LoadedDataset& data, index_t n_slices, bool single_volume,
                             const SlicePolicy& policy, std::uint64_t seed);

}  // namespace bss
