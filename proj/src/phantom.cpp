#include "bss/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bss/volume_io.hpp"

namespace fs = std::filesystem;

namespace bss {

void PhantomConfig::validate() const {
  if (depth < 4 || height < 4 || width < 4) throw ConfigError("phantom: dims must be >= 4");
  if (blobs_lo < 1 || blobs_hi < blobs_lo) throw ConfigError("phantom: bad blob count range");
  if (!(radius_lo > 0.0) || radius_hi < radius_lo || radius_hi > 0.5) {
    throw ConfigError("phantom: radii fractions must satisfy 0 < lo <= hi <= 0.5");
  }
  if (!(contrast > 0.0) || contrast > 1.0) throw ConfigError("phantom: contrast must be in (0,1]");
  if (noise_std < 0.0) throw ConfigError("phantom: noise_std must be >= 0");
  if (num_classes < 2) throw ConfigError("phantom: num_classes must be >= 2");
}

namespace {

std::pair<Volume, LabelVolume> generate_once(std::uint64_t seed, const PhantomConfig& c) {
  Rng rng(seed);
  Volume v(1, c.depth, c.height, c.width);
  LabelVolume l(c.depth, c.height, c.width, c.num_classes);

  // low-frequency multiplicative texture field
  struct Wave {
    double kz, ky, kx, phase, amp;
  };
  std::vector<Wave> waves;
  for (index_t i = 0; i < c.texture_waves; ++i) {
    waves.push_back({rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5),
                     rng.uniform(0.0, 2.0 * M_PI),
                     rng.uniform(0.3, 1.0) / static_cast<double>(c.texture_waves)});
  }
  const double base = 0.35;
  for (index_t z = 0; z < c.depth; ++z) {
    for (index_t y = 0; y < c.height; ++y) {
      for (index_t x = 0; x < c.width; ++x) {
        double field = 0.0;
        for (const Wave& w : waves) {
          field += w.amp * std::cos(2.0 * M_PI * (w.kz * z / c.depth + w.ky * y / c.height +
                                                  w.kx * x / c.width) +
                                    w.phase);
        }
        v.at(0, z, y, x) = base * (1.0 + c.texture_amp * field);
      }
    }
  }

  // ellipsoidal blobs; each blob's class cycles through the foreground set
  const index_t n_blobs = rng.uniform_int(c.blobs_lo, c.blobs_hi);
  for (index_t b = 0; b < n_blobs; ++b) {
    const double rz = rng.uniform(c.radius_lo, c.radius_hi) * static_cast<double>(c.depth);
    const double ry = rng.uniform(c.radius_lo, c.radius_hi) * static_cast<double>(c.height);
    const double rx = rng.uniform(c.radius_lo, c.radius_hi) * static_cast<double>(c.width);
    const double cz = rng.uniform(rz, static_cast<double>(c.depth) - rz);
    const double cy = rng.uniform(ry, static_cast<double>(c.height) - ry);
    const double cx = rng.uniform(rx, static_cast<double>(c.width) - rx);
    const std::int32_t cls = static_cast<std::int32_t>(1 + b % (c.num_classes - 1));
    const index_t z_lo = std::max<index_t>(0, static_cast<index_t>(cz - rz) - 1);
    const index_t z_hi = std::min(c.depth - 1, static_cast<index_t>(cz + rz) + 1);
    for (index_t z = z_lo; z <= z_hi; ++z) {
      for (index_t y = 0; y < c.height; ++y) {
        for (index_t x = 0; x < c.width; ++x) {
          const double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
          const double r2 = dz * dz + dy * dy + dx * dx;
          if (r2 >= 1.0) continue;
          v.at(0, z, y, x) += c.contrast * (1.0 - r2);
          l.at(z, y, x) = cls;
        }
      }
    }
  }

  if (c.noise_std > 0.0) {
    for (auto& x : v.voxels) x += rng.normal(0.0, c.noise_std);
  }
  return {normalize(v), std::move(l)};
}

double foreground_fraction(const LabelVolume& l) {
  index_t fg = 0;
  for (auto cls : l.classes) fg += cls != 0;
  return static_cast<double>(fg) / static_cast<double>(l.numel());
}

}  // namespace

std::pair<Volume, LabelVolume> generate_phantom(std::uint64_t seed, const PhantomConfig& config) {
  config.validate();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto pair = generate_once(derive_seed(seed, static_cast<std::uint64_t>(attempt)), config);
    const double f = foreground_fraction(pair.second);
    if (f >= 0.01 && f <= 0.30) return pair;
  }
  throw ConfigError("generate_phantom: could not reach a foreground fraction in [0.01,0.30] "
                    "within 100 attempts; adjust blob radii or counts");
}

std::string split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::kTrainLabeled: return "train_labeled";
    case SplitTag::kTrainUnlabeled: return "train_unlabeled";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

SplitTag parse_split_tag(const std::string& name) {
  if (name == "train_labeled") return SplitTag::kTrainLabeled;
  if (name == "train_unlabeled") return SplitTag::kTrainUnlabeled;
  if (name == "val") return SplitTag::kVal;
  if (name == "test") return SplitTag::kTest;
  throw MalformedHeaderError("manifest: unknown split tag '" + name + "'");
}

SlicePolicy parse_slice_policy(const std::string& name) {
  SlicePolicy p;
  if (name == "max_foreground_area") {
    p.kind = SlicePolicy::kMaxForegroundArea;
  } else if (name == "center") {
    p.kind = SlicePolicy::kCenter;
  } else if (name == "random") {
    p.kind = SlicePolicy::kRandom;
  } else if (name.rfind("fixed:", 0) == 0) {
    p.kind = SlicePolicy::kFixed;
    p.fixed_index = std::stoll(name.substr(6));
  } else {
    throw ConfigError("unknown slice policy '" + name +
                      "' (expected max_foreground_area|center|fixed:<k>|random)");
  }
  return p;
}

std::string slice_policy_name(const SlicePolicy& p) {
  switch (p.kind) {
    case SlicePolicy::kMaxForegroundArea: return "max_foreground_area";
    case SlicePolicy::kCenter: return "center";
    case SlicePolicy::kRandom: return "random";
    case SlicePolicy::kFixed: return "fixed:" + std::to_string(p.fixed_index);
  }
  return "?";
}

index_t pick_annotated_slice(const LabelVolume& label, const SlicePolicy& policy, Rng& rng) {
  switch (policy.kind) {
    case SlicePolicy::kCenter:
      return label.depth / 2;
    case SlicePolicy::kRandom:
      return rng.uniform_int(0, label.depth - 1);
    case SlicePolicy::kFixed:
      if (policy.fixed_index < 0 || policy.fixed_index >= label.depth) {
        throw ConfigError("slice policy fixed:" + std::to_string(policy.fixed_index) +
                          " outside depth " + std::to_string(label.depth));
      }
      return policy.fixed_index;
    case SlicePolicy::kMaxForegroundArea: {
      index_t best = 0, best_area = -1;
      for (index_t z = 0; z < label.depth; ++z) {
        index_t area = 0;
        for (index_t y = 0; y < label.height; ++y) {
          for (index_t x = 0; x < label.width; ++x) area += label.at(z, y, x) != 0;
        }
        if (area > best_area) {
          best_area = area;
          best = z;
        }
      }
      return best;
    }
  }
  return 0;
}

namespace {

std::string volume_name(index_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vol_%03lld.bssvol", static_cast<long long>(i));
  return buf;
}
std::string label_name(index_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lab_%03lld.bssvol", static_cast<long long>(i));
  return buf;
}

// Slices annotated in multi-slice mode: evenly spaced across the foreground
// extent of the chosen volume.
std::vector<index_t> multi_slice_indices(const LabelVolume& label, index_t n) {
  index_t z_min = -1, z_max = -1;
  for (index_t z = 0; z < label.depth; ++z) {
    bool any = false;
    for (index_t i = z * label.height * label.width; i < (z + 1) * label.height * label.width; ++i) {
      if (label.classes[static_cast<std::size_t>(i)] != 0) {
        any = true;
        break;
      }
    }
    if (any) {
      if (z_min < 0) z_min = z;
      z_max = z;
    }
  }
  if (z_min < 0) {
    z_min = 0;
    z_max = label.depth - 1;
  }
  const index_t extent = z_max - z_min + 1;
  if (n > extent) {
    throw ConfigError("multi_slice: requested " + std::to_string(n) +
                      " slices but the foreground extent is only " + std::to_string(extent));
  }
  std::set<index_t> picked;
  for (index_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    index_t z = z_min + static_cast<index_t>(std::llround(t * static_cast<double>(extent - 1)));
    while (picked.count(z) && z < z_max) ++z;
    while (picked.count(z) && z > z_min) --z;  // extent >= n guarantees a free slot
    picked.insert(z);
  }
  return {picked.begin(), picked.end()};
}

}  // namespace

DatasetManifest build_split(const std::vector<Volume>& volumes,
                            const std::vector<LabelVolume>& labels, const SplitSpec& spec,
                            std::uint64_t seed) {
  if (volumes.size() != labels.size()) {
    throw ConfigError("build_split: volume and label counts differ");
  }
  const index_t n = static_cast<index_t>(volumes.size());
  if (n < 1) throw ConfigError("build_split: empty dataset");

  index_t n_train, n_val, n_test;
  if (spec.train_count >= 0) {
    n_train = spec.train_count;
    n_val = std::max<index_t>(spec.val_count, 0);
    n_test = std::max<index_t>(spec.test_count, 0);
    if (n_train + n_val + n_test != n) {
      throw ConfigError("build_split: explicit counts do not sum to " + std::to_string(n));
    }
  } else {
    n_train = static_cast<index_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    n_val = static_cast<index_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
    n_train = std::max<index_t>(1, n_train);
    n_val = std::max<index_t>(n > 2 ? 1 : 0, n_val);
    n_test = n - n_train - n_val;
    if (n_test < 0) throw ConfigError("build_split: fractions leave no test volumes");
  }
  if (n_train < 1) throw ConfigError("build_split: no training volumes");

  Rng rng(seed);
  std::vector<index_t> order(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);

  const std::vector<index_t> train(order.begin(), order.begin() + n_train);
  const std::vector<index_t> val(order.begin() + n_train, order.begin() + n_train + n_val);
  const std::vector<index_t> test(order.begin() + n_train + n_val, order.end());

  DatasetManifest m;
  m.num_classes = labels[0].num_classes;

  // labeled selection
  std::vector<std::pair<index_t, index_t>> annotations;  // (volume index, slice)
  if (spec.multi_slice > 0) {
    const index_t vi = train[rng.uniform_index(train.size())];
    for (index_t z : multi_slice_indices(labels[static_cast<std::size_t>(vi)], spec.multi_slice)) {
      annotations.emplace_back(vi, z);
    }
  } else {
    const index_t n_labeled = static_cast<index_t>(
        std::floor(spec.labeled_fraction * static_cast<double>(n_train) + 1e-9));
    if (n_labeled < 1) {
      std::ostringstream os;
      os << "build_split: labeled_fraction " << spec.labeled_fraction << " yields 0 labeled "
         << "volumes; minimum is " << 1.0 / static_cast<double>(n_train) << " for "
         << n_train << " training volumes";
      throw ConfigError(os.str());
    }
    std::vector<index_t> pool = train;
    rng.shuffle(pool);
    for (index_t i = 0; i < n_labeled; ++i) {
      const index_t vi = pool[static_cast<std::size_t>(i)];
      const index_t z =
          pick_annotated_slice(labels[static_cast<std::size_t>(vi)], spec.slice_policy, rng);
      annotations.emplace_back(vi, z);
    }
  }

  for (const auto& [vi, z] : annotations) {
    m.entries.push_back({volume_name(vi), label_name(vi), z, SplitTag::kTrainLabeled});
  }
  for (index_t vi : train) {
    m.entries.push_back({volume_name(vi), label_name(vi), -1, SplitTag::kTrainUnlabeled});
  }
  for (index_t vi : val) {
    m.entries.push_back({volume_name(vi), label_name(vi), -1, SplitTag::kVal});
  }
  for (index_t vi : test) {
    m.entries.push_back({volume_name(vi), label_name(vi), -1, SplitTag::kTest});
  }
  return m;
}

void DatasetManifest::validate(const std::string& base_dir) const {
  if (entries.empty()) throw ConfigError("manifest: no entries");
  for (const ManifestEntry& e : entries) {
    if (e.split == SplitTag::kTrainLabeled && e.annotated_slice < 0) {
      throw ConfigError("manifest: labeled entry '" + e.volume_path + "' lacks a slice index");
    }
    if (e.split != SplitTag::kTrainLabeled && e.annotated_slice >= 0) {
      throw ConfigError("manifest: non-labeled entry '" + e.volume_path + "' has a slice index");
    }
    if (!base_dir.empty()) {
      if (!fs::exists(fs::path(base_dir) / e.volume_path)) {
        throw IoError("manifest: missing volume file " + e.volume_path);
      }
      if (!e.label_path.empty() && !fs::exists(fs::path(base_dir) / e.label_path)) {
        throw IoError("manifest: missing label file " + e.label_path);
      }
    }
  }
  // every labeled volume must also be in the unlabeled pool
  std::set<std::string> unlabeled_paths;
  for (const ManifestEntry& e : entries) {
    if (e.split == SplitTag::kTrainUnlabeled) unlabeled_paths.insert(e.volume_path);
  }
  for (const ManifestEntry& e : entries) {
    if (e.split == SplitTag::kTrainLabeled && !unlabeled_paths.count(e.volume_path)) {
      throw ConfigError("manifest: labeled volume '" + e.volume_path +
                        "' is missing from the unlabeled pool");
    }
  }
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "BSSMANIFEST1\n";
  out << "num_classes " << m.num_classes << "\n";
  for (const ManifestEntry& e : m.entries) {
    out << "entry split=" << split_tag_name(e.split) << " volume=" << e.volume_path;
    if (!e.label_path.empty()) out << " label=" << e.label_path;
    if (e.annotated_slice >= 0) out << " slice=" << e.annotated_slice;
    out << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != "BSSMANIFEST1") {
    throw MalformedHeaderError("'" + path + "': bad manifest magic");
  }
  DatasetManifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "num_classes") {
      ls >> m.num_classes;
    } else if (key == "entry") {
      ManifestEntry e;
      std::string field;
      bool saw_split = false;
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) {
          throw MalformedHeaderError("'" + path + "': bad entry field '" + field + "'");
        }
        const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
        if (k == "split") {
          e.split = parse_split_tag(v);
          saw_split = true;
        } else if (k == "volume") {
          e.volume_path = v;
        } else if (k == "label") {
          e.label_path = v;
        } else if (k == "slice") {
          e.annotated_slice = std::stoll(v);
        } else {
          throw MalformedHeaderError("'" + path + "': unknown entry key '" + k + "'");
        }
      }
      if (!saw_split || e.volume_path.empty()) {
        throw MalformedHeaderError("'" + path + "': entry missing split or volume");
      }
      m.entries.push_back(std::move(e));
    } else {
      throw MalformedHeaderError("'" + path + "': unknown manifest key '" + key + "'");
    }
  }
  return m;
}

DatasetManifest synthesize_dataset(const std::string& dir, index_t n, std::uint64_t seed,
                                   const PhantomConfig& config, const SplitSpec& spec) {
  if (n < 1) throw ConfigError("synthesize_dataset: n must be >= 1");
  config.validate();
  fs::create_directories(dir);
  std::vector<Volume> volumes;
  std::vector<LabelVolume> labels;
  for (index_t i = 0; i < n; ++i) {
    auto [v, l] = generate_phantom(derive_seed(seed, static_cast<std::uint64_t>(i)), config);
    save_volume((fs::path(dir) / volume_name(i)).string(), v);
    save_volume((fs::path(dir) / label_name(i)).string(), l);
    volumes.push_back(std::move(v));
    labels.push_back(std::move(l));
  }
  DatasetManifest m = build_split(volumes, labels, spec, derive_seed(seed, 0x5714ULL));
  write_manifest((fs::path(dir) / "manifest.txt").string(), m);
  m.validate(dir);
  return m;
}

LoadedDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
  DatasetManifest m = read_manifest(manifest_path);
  m.validate(dir);

  LoadedDataset data;
  data.num_classes = m.num_classes;
  for (const ManifestEntry& e : m.entries) {
    const std::string vpath = (fs::path(dir) / e.volume_path).string();
    switch (e.split) {
      case SplitTag::kTrainLabeled: {
        BarelyLabeledItem item;
        item.volume = load_volume(vpath);
        item.num_classes = m.num_classes;
        const LabelVolume full = load_label_volume((fs::path(dir) / e.label_path).string());
        if (e.annotated_slice < 0 || e.annotated_slice >= full.depth) {
          throw ConfigError("manifest: annotated slice out of range for " + e.volume_path);
        }
        item.annotation.slice_index = e.annotated_slice;
        item.annotation.label2d.height = full.height;
        item.annotation.label2d.width = full.width;
        item.annotation.label2d.classes.assign(
            full.classes.begin() + e.annotated_slice * full.height * full.width,
            full.classes.begin() + (e.annotated_slice + 1) * full.height * full.width);
        data.labeled.items.push_back(std::move(item));
        break;
      }
      case SplitTag::kTrainUnlabeled: {
        data.unlabeled.volumes.push_back(load_volume(vpath));
        if (!e.label_path.empty()) {
          data.train_labels.push_back(load_label_volume((fs::path(dir) / e.label_path).string()));
        }
        break;
      }
      case SplitTag::kVal:
      case SplitTag::kTest: {
        ValItem item;
        item.volume = load_volume(vpath);
        item.label = load_label_volume((fs::path(dir) / e.label_path).string());
        (e.split == SplitTag::kVal ? data.val : data.test).push_back(std::move(item));
        break;
      }
    }
  }
  if (data.unlabeled.volumes.empty()) throw ConfigError("dataset: no training volumes");
  return data;
}

void apply_annotation_budget(LoadedDataset& data, index_t n_slices, bool single_volume,
                             const SlicePolicy& policy, std::uint64_t seed) {
  if (data.train_labels.size() != data.unlabeled.volumes.size()) {
    throw ConfigError("annotation budget: training labels are unavailable");
  }
  const index_t n_train = static_cast<index_t>(data.unlabeled.volumes.size());
  Rng rng(seed);
  data.labeled.items.clear();

  auto make_item = [&](index_t vi, index_t z) {
    const LabelVolume& full = data.train_labels[static_cast<std::size_t>(vi)];
    BarelyLabeledItem item;
    item.volume = data.unlabeled.volumes[static_cast<std::size_t>(vi)];
    item.num_classes = data.num_classes;
    item.annotation.slice_index = z;
    item.annotation.label2d.height = full.height;
    item.annotation.label2d.width = full.width;
    item.annotation.label2d.classes.assign(full.classes.begin() + z * full.height * full.width,
                                           full.classes.begin() +
                                               (z + 1) * full.height * full.width);
    data.labeled.items.push_back(std::move(item));
  };

  if (single_volume) {
    const index_t vi = static_cast<index_t>(rng.uniform_index(data.unlabeled.volumes.size()));
    for (index_t z :
         multi_slice_indices(data.train_labels[static_cast<std::size_t>(vi)], n_slices)) {
      make_item(vi, z);
    }
  } else {
    if (n_slices > n_train) {
      throw ConfigError("annotation budget: " + std::to_string(n_slices) +
                        " labeled volumes requested but only " + std::to_string(n_train) +
                        " training volumes exist");
    }
    std::vector<index_t> order(static_cast<std::size_t>(n_train));
    for (index_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    for (index_t i = 0; i < n_slices; ++i) {
      const index_t vi = order[static_cast<std::size_t>(i)];
      const index_t z =
          pick_annotated_slice(data.train_labels[static_cast<std::size_t>(vi)], policy, rng);
      make_item(vi, z);
    }
  }
}

}  // namespace bss
