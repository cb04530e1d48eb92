#include "bss/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "bss/volume_io.hpp"

namespace bss {

Variant parse_variant(const std::string& name) {
  if (name == "baseline_mt") return Variant::kBaselineMt;
  if (name == "nfc") return Variant::kNfc;
  if (name == "nfc_fx") return Variant::kNfcFx;
  if (name == "nfc_sx") return Variant::kNfcSx;
  if (name == "full_bva") return Variant::kFullBva;
  throw ConfigError("unknown variant '" + name +
                    "' (expected baseline_mt|nfc|nfc_fx|nfc_sx|full_bva)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBaselineMt: return "baseline_mt";
    case Variant::kNfc: return "nfc";
    case Variant::kNfcFx: return "nfc_fx";
    case Variant::kNfcSx: return "nfc_sx";
    case Variant::kFullBva: return "full_bva";
  }
  return "?";
}

void TrainerConfig::validate() const {
  if (ema_decay < 0.0 || ema_decay >= 1.0) {
    throw ConfigError("trainer: ema_decay must lie in [0,1)");
  }
  if (lr <= 0.0) throw ConfigError("trainer: lr must be positive");
  if (epochs < 0) throw ConfigError("trainer: epochs must be >= 0");
  if (workers < 1) throw ConfigError("trainer: workers must be >= 1");
  net.validate();
  fsx.validate();
  const index_t f = net.downsample_factor();
  if (crop_depth % f != 0 || crop_height % f != 0 || crop_width % f != 0) {
    throw ConfigError("trainer: crop dims must be divisible by " + std::to_string(f));
  }
}

TrainState init_train_state(const TrainerConfig& config) {
  config.validate();
  TrainState state;
  Rng rng(derive_seed(config.seed, 0x1717));
  state.student = segnet_init(config.net, rng);
  state.teacher = state.student;  // teacher starts as a copy of the student
  for (const auto& [name, t] : state.student.entries()) {
    state.moment1[name] = Tensor(t.shape());
    state.moment2[name] = Tensor(t.shape());
  }
  return state;
}

void ema_update(TrainState& state, double decay) {
  if (!state.student.congruent(state.teacher)) {
    throw ConfigError("ema_update: student and teacher parameter sets are not congruent");
  }
  auto& s = state.student.entries();
  auto& t = state.teacher.entries();
  for (std::size_t i = 0; i < s.size(); ++i) {
    Tensor& theta_t = t[i].second;
    const Tensor& theta_s = s[i].second;
    for (index_t j = 0; j < theta_t.numel(); ++j) {
      theta_t[j] = decay * theta_t[j] + (1.0 - decay) * theta_s[j];
    }
  }
}

void adamw_step(TrainState& state, const std::map<std::string, Tensor>& grads,
                const TrainerConfig& config) {
  const OptimConfig& oc = config.optimizer;
  const double t = static_cast<double>(state.iteration + 1);
  const double bc1 = 1.0 - std::pow(oc.beta1, t);
  const double bc2 = 1.0 - std::pow(oc.beta2, t);
  for (auto& [name, param] : state.student.entries()) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.moment1.at(name);
    Tensor& v = state.moment2.at(name);
    for (index_t i = 0; i < param.numel(); ++i) {
      m[i] = oc.beta1 * m[i] + (1.0 - oc.beta1) * g[i];
      v[i] = oc.beta2 * v[i] + (1.0 - oc.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      param[i] -= config.lr * (m_hat / (std::sqrt(v_hat) + oc.eps) + oc.weight_decay * param[i]);
    }
  }
}

namespace {

struct PaddedVolume {
  Volume volume;
  LabelVolume label;
  bool has_label = false;
  index_t pad_z = 0, pad_y = 0, pad_x = 0;  // leading pads
};

PaddedVolume pad_to_min(const Volume& v, const LabelVolume* label, index_t d, index_t h,
                        index_t w) {
  PaddedVolume out;
  const index_t nd = std::max(v.depth, d), nh = std::max(v.height, h), nw = std::max(v.width, w);
  out.pad_z = (nd - v.depth) / 2;
  out.pad_y = (nh - v.height) / 2;
  out.pad_x = (nw - v.width) / 2;
  if (nd == v.depth && nh == v.height && nw == v.width) {
    out.volume = v;
    if (label) {
      out.label = *label;
      out.has_label = true;
    }
    return out;
  }
  out.volume = Volume(v.channels, nd, nh, nw);
  for (index_t c = 0; c < v.channels; ++c) {
    for (index_t z = 0; z < v.depth; ++z) {
      for (index_t y = 0; y < v.height; ++y) {
        for (index_t x = 0; x < v.width; ++x) {
          out.volume.at(c, z + out.pad_z, y + out.pad_y, x + out.pad_x) = v.at(c, z, y, x);
        }
      }
    }
  }
  if (label) {
    out.label = LabelVolume(nd, nh, nw, label->num_classes);
    for (index_t z = 0; z < v.depth; ++z) {
      for (index_t y = 0; y < v.height; ++y) {
        for (index_t x = 0; x < v.width; ++x) {
          out.label.at(z + out.pad_z, y + out.pad_y, x + out.pad_x) = label->at(z, y, x);
        }
      }
    }
    out.has_label = true;
  }
  return out;
}

Tensor crop_to_tensor(const Volume& v, index_t z0, index_t y0, index_t x0, index_t cd, index_t ch,
                      index_t cw) {
  Tensor t(Shape{v.channels, cd, ch, cw});
  for (index_t c = 0; c < v.channels; ++c) {
    for (index_t z = 0; z < cd; ++z) {
      for (index_t y = 0; y < ch; ++y) {
        const double* src = &v.voxels[static_cast<std::size_t>(
            ((c * v.depth + z0 + z) * v.height + y0 + y) * v.width + x0)];
        double* dst = t.data() + ((c * cd + z) * ch + y) * cw;
        std::copy(src, src + cw, dst);
      }
    }
  }
  return t;
}

LabelVolume crop_label(const LabelVolume& l, index_t z0, index_t y0, index_t x0, index_t cd,
                       index_t ch, index_t cw) {
  LabelVolume out(cd, ch, cw, l.num_classes);
  for (index_t z = 0; z < cd; ++z) {
    for (index_t y = 0; y < ch; ++y) {
      const std::int32_t* src =
          &l.classes[static_cast<std::size_t>(((z0 + z) * l.height + y0 + y) * l.width + x0)];
      std::copy(src, src + cw, out.classes.begin() + (z * ch + y) * cw);
    }
  }
  return out;
}

}  // namespace

VolumeCrop random_crop(const Volume& v, const LabelVolume* label, index_t crop_d, index_t crop_h,
                       index_t crop_w, Rng& rng) {
  PaddedVolume p = pad_to_min(v, label, crop_d, crop_h, crop_w);
  const index_t z0 = rng.uniform_int(0, p.volume.depth - crop_d);
  const index_t y0 = rng.uniform_int(0, p.volume.height - crop_h);
  const index_t x0 = rng.uniform_int(0, p.volume.width - crop_w);
  VolumeCrop out;
  out.image = crop_to_tensor(p.volume, z0, y0, x0, crop_d, crop_h, crop_w);
  if (p.has_label) out.label = crop_label(p.label, z0, y0, x0, crop_d, crop_h, crop_w);
  return out;
}

LabeledCrop random_crop_labeled(const Volume& v, const SliceAnnotation& annotation, index_t crop_d,
                                index_t crop_h, index_t crop_w, Rng& rng) {
  if (annotation.slice_index < 0 || annotation.slice_index >= v.depth) {
    throw ConfigError("random_crop_labeled: annotated slice outside the volume");
  }
  PaddedVolume p = pad_to_min(v, nullptr, crop_d, crop_h, crop_w);
  const index_t k = annotation.slice_index + p.pad_z;
  // window must contain the annotated slice
  const index_t z_lo = std::max<index_t>(0, k - crop_d + 1);
  const index_t z_hi = std::min(p.volume.depth - crop_d, k);
  const index_t z0 = rng.uniform_int(z_lo, z_hi);
  const index_t y0 = rng.uniform_int(0, p.volume.height - crop_h);
  const index_t x0 = rng.uniform_int(0, p.volume.width - crop_w);

  LabeledCrop out;
  out.image = crop_to_tensor(p.volume, z0, y0, x0, crop_d, crop_h, crop_w);
  out.slice_index = k - z0;
  out.slice_label.height = crop_h;
  out.slice_label.width = crop_w;
  out.slice_label.classes.assign(static_cast<std::size_t>(crop_h * crop_w), 0);
  // in-plane crop of the 2D annotation; padding contributes background
  for (index_t y = 0; y < crop_h; ++y) {
    const index_t sy = y0 + y - p.pad_y;
    if (sy < 0 || sy >= annotation.label2d.height) continue;
    for (index_t x = 0; x < crop_w; ++x) {
      const index_t sx = x0 + x - p.pad_x;
      if (sx < 0 || sx >= annotation.label2d.width) continue;
      out.slice_label.at(y, x) = annotation.label2d.at(sy, sx);
    }
  }
  return out;
}

IterationData prepare_iteration(const BarelyLabeledItem& labeled, const Volume& unlabeled,
                                const TrainerConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  IterationData data;
  data.seed = seed;
  const index_t cd = config.crop_depth, ch = config.crop_height, cw = config.crop_width;

  data.labeled = random_crop_labeled(labeled.volume, labeled.annotation, cd, ch, cw, rng);

  const bool uses_nfc = config.variant != Variant::kBaselineMt;
  const bool uses_fx = config.variant == Variant::kNfcFx || config.variant == Variant::kFullBva;
  const bool uses_sx = config.variant == Variant::kNfcSx || config.variant == Variant::kFullBva;

  if (uses_nfc) {
    auto [synth_vol, synth_lbl] =
        synthesize(labeled.volume, labeled.annotation, labeled.num_classes, config.nfc, rng);
    VolumeCrop crop = random_crop(synth_vol, &synth_lbl, cd, ch, cw, rng);
    data.synth_image = std::move(crop.image);
    data.synth_label = std::move(*crop.label);
    data.has_synth = true;
  }

  VolumeCrop ucrop = random_crop(unlabeled, nullptr, cd, ch, cw, rng);
  data.unlabeled_image = std::move(ucrop.image);

  if (uses_fx) {
    data.alpha = rng.uniform(config.fsx.alpha_lo, config.fsx.alpha_hi);
    const FreqMask omega = center_mask(cd, ch, cw, config.fsx.beta);
    FreqMixResult mix =
        frequency_mixup(Volume::from_tensor(data.unlabeled_image),
                        Volume::from_tensor(data.synth_image), data.alpha, omega,
                        config.fsx.blend_mode);
    data.perturbed_synth = mix.perturbed_synth.to_tensor();
    data.perturbed_unlabeled = mix.perturbed_orig.to_tensor();
    data.has_fx = true;
  }

  if (uses_sx) {
    data.mask = random_cuboid_mask(cd, ch, cw, config.fsx.cutmix_ratio_lo,
                                   config.fsx.cutmix_ratio_hi, rng);
    data.has_sx = true;
  }
  return data;
}

namespace {

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void check_losses_finite(const LossReport& r, index_t iteration) {
  if (!std::isfinite(r.total) || !std::isfinite(r.sup_slice) || !std::isfinite(r.sup_synth) ||
      !std::isfinite(r.unsup)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration));
  }
}

}  // namespace

IterationResult train_iteration_with_data(TrainState& state, const IterationData& data,
                                          const TrainerConfig& config) {
  const SegNetConfig& net = config.net;
  IterationResult result;
  result.data_seed = data.seed;

  // Teacher forwards, gradient-free.
  const Tensor teacher_unlab = segnet_forward(net, state.teacher, data.unlabeled_image);
  Tensor teacher_synth;
  if (data.has_synth) teacher_synth = segnet_forward(net, state.teacher, data.synth_image);

  // Consistency input and pseudo-label per variant.
  Tensor mixed_input;
  Tensor pseudo_soft;
  if (data.has_sx) {
    const Tensor& img_a = data.has_fx ? data.perturbed_unlabeled : data.unlabeled_image;
    const Tensor& img_b = data.has_fx ? data.perturbed_synth : data.synth_image;
    mixed_input = spatial_mixup(img_a, img_b, data.mask);
    result.image_mask_hash = fnv1a(data.mask.ones);
    pseudo_soft = spatial_mixup(teacher_unlab, teacher_synth, data.mask);
    result.label_mask_hash = fnv1a(data.mask.ones);
  } else if (data.has_fx) {
    mixed_input = data.perturbed_unlabeled;
    pseudo_soft = teacher_unlab;
  } else {
    mixed_input = data.unlabeled_image;
    pseudo_soft = teacher_unlab;
  }
  const LabelVolume pseudo = argmax_classes(pseudo_soft);

  // Student pass.
  Tape tape;
  const auto ids = segnet_register(net, tape, state.student);
  const NodeId pred_labeled = segnet_forward(net, tape, ids, data.labeled.image);
  const NodeId slice_term =
      tape.dice_loss(tape.slice_depth(pred_labeled, data.labeled.slice_index),
                     one_hot_slice(data.labeled.slice_label, net.num_classes));
  NodeId sup = slice_term;
  NodeId synth_term = -1;
  if (data.has_synth) {
    const NodeId pred_synth = segnet_forward(net, tape, ids, data.synth_image);
    synth_term = tape.dice_loss(pred_synth, one_hot(data.synth_label));
    sup = tape.add(slice_term, synth_term);
  }
  const NodeId pred_mixed = segnet_forward(net, tape, ids, mixed_input);
  const NodeId unsup = unsupervised_loss(tape, pred_mixed, pseudo);
  const NodeId total = tape.add(sup, unsup);

  result.report.sup_slice = tape.value(slice_term)[0];
  result.report.sup_synth = data.has_synth ? tape.value(synth_term)[0] : 0.0;
  result.report.unsup = tape.value(unsup)[0];
  result.report.total = tape.value(total)[0];
  check_losses_finite(result.report, state.iteration);

  const auto grads = tape.backward(total);
  adamw_step(state, grads, config);
  state.iteration += 1;
  ema_update(state, config.ema_decay);
  return result;
}

IterationResult train_iteration(TrainState& state, const BarelyLabeledItem& labeled,
                                const Volume& unlabeled, const TrainerConfig& config) {
  const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(state.iteration));
  return train_iteration_with_data(state, prepare_iteration(labeled, unlabeled, config, seed),
                                   config);
}

LabelVolume predict_labels(const SegNetConfig& net, const ParameterSet& params, const Volume& v) {
  const index_t f = net.downsample_factor();
  const index_t pd = (f - v.depth % f) % f;
  const index_t ph = (f - v.height % f) % f;
  const index_t pw = (f - v.width % f) % f;
  Volume padded = v;
  if (pd || ph || pw) {
    padded = Volume(v.channels, v.depth + pd, v.height + ph, v.width + pw);
    for (index_t c = 0; c < v.channels; ++c) {
      for (index_t z = 0; z < v.depth; ++z) {
        for (index_t y = 0; y < v.height; ++y) {
          for (index_t x = 0; x < v.width; ++x) padded.at(c, z, y, x) = v.at(c, z, y, x);
        }
      }
    }
  }
  const Tensor probs = segnet_forward(net, params, padded.to_tensor());
  LabelVolume full = argmax_classes(probs);
  if (!pd && !ph && !pw) return full;
  LabelVolume out(v.depth, v.height, v.width, full.num_classes);
  for (index_t z = 0; z < v.depth; ++z) {
    for (index_t y = 0; y < v.height; ++y) {
      for (index_t x = 0; x < v.width; ++x) out.at(z, y, x) = full.at(z, y, x);
    }
  }
  return out;
}

FitResult fit(const TrainerConfig& config, const BarelyLabeledSet& labeled,
              const UnlabeledSet& unlabeled, const std::vector<ValItem>& val) {
  config.validate();
  if (labeled.items.empty()) throw ConfigError("fit: barely-labeled set is empty");
  if (unlabeled.volumes.empty()) throw ConfigError("fit: unlabeled set is empty");

  TrainState state = init_train_state(config);
  FitResult out;
  const index_t iters_per_epoch = static_cast<index_t>(unlabeled.volumes.size());

  for (index_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(config.seed, 0x00E0000000ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<index_t> order(static_cast<std::size_t>(iters_per_epoch));
    for (index_t i = 0; i < iters_per_epoch; ++i) order[static_cast<std::size_t>(i)] = i;
    epoch_rng.shuffle(order);
    std::vector<index_t> labeled_pick(static_cast<std::size_t>(iters_per_epoch));
    for (auto& p : labeled_pick) {
      p = static_cast<index_t>(epoch_rng.uniform_index(labeled.items.size()));
    }

    // Data preparation may run ahead on worker threads; iteration seeds are
    // derived from the global iteration index so results cannot depend on
    // the worker count.
    const index_t base_iter = state.iteration;
    auto prepare_at = [&](index_t i) {
      const std::uint64_t seed =
          derive_seed(config.seed, 0xDA7A00000000ULL + static_cast<std::uint64_t>(base_iter + i));
      return prepare_iteration(labeled.items[static_cast<std::size_t>(labeled_pick[i])],
                               unlabeled.volumes[static_cast<std::size_t>(order[i])], config,
                               seed);
    };

    LossReport epoch_sum;
    std::vector<std::future<IterationData>> pipeline;
    const index_t window = std::min<index_t>(config.workers, iters_per_epoch);
    if (config.workers > 1) {
      for (index_t i = 0; i < window; ++i) {
        pipeline.push_back(std::async(std::launch::async, prepare_at, i));
      }
    }
    for (index_t i = 0; i < iters_per_epoch; ++i) {
      IterationData data;
      if (config.workers > 1) {
        data = pipeline[static_cast<std::size_t>(i % window)].get();
        if (i + window < iters_per_epoch) {
          pipeline[static_cast<std::size_t>(i % window)] =
              std::async(std::launch::async, prepare_at, i + window);
        }
      } else {
        data = prepare_at(i);
      }
      const IterationResult r = train_iteration_with_data(state, data, config);
      epoch_sum.total += r.report.total;
      epoch_sum.sup_slice += r.report.sup_slice;
      epoch_sum.sup_synth += r.report.sup_synth;
      epoch_sum.unsup += r.report.unsup;
    }

    EpochLog log;
    log.epoch = epoch;
    const double n = static_cast<double>(iters_per_epoch);
    log.mean_loss = {epoch_sum.total / n, epoch_sum.sup_slice / n, epoch_sum.sup_synth / n,
                     epoch_sum.unsup / n};
    if (!val.empty()) {
      double acc = 0.0;
      for (const ValItem& item : val) {
        const LabelVolume pred = predict_labels(config.net, state.student, item.volume);
        acc += dsc_metric(pred, item.label).mean;
      }
      log.val_dsc = acc / static_cast<double>(val.size());
    }
    out.log.push_back(log);
  }

  out.student = std::move(state.student);
  return out;
}

void save_checkpoint(const std::string& path, const ParameterSet& student,
                     const ParameterSet* teacher) {
  std::vector<VolumeRecord> records;
  for (const auto& [name, t] : student.entries()) {
    records.push_back(to_record(t, "student/" + name));
  }
  if (teacher) {
    for (const auto& [name, t] : teacher->entries()) {
      records.push_back(to_record(t, "teacher/" + name));
    }
  }
  write_records(path, records);
}

ParameterSet load_checkpoint_student(const std::string& path) {
  ParameterSet params;
  for (const VolumeRecord& r : read_records(path)) {
    if (r.name.rfind("student/", 0) == 0) {
      params.add(r.name.substr(8), tensor_from_record(r));
    }
  }
  if (params.entries().empty()) {
    throw IoError("checkpoint '" + path + "' contains no student records");
  }
  return params;
}

void write_training_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,l_total,l_sup_slice,l_sup_synth,l_unsup,val_dsc\n";
  out.precision(17);
  for (const EpochLog& e : log) {
    out << e.epoch << "," << e.mean_loss.total << "," << e.mean_loss.sup_slice << ","
        << e.mean_loss.sup_synth << "," << e.mean_loss.unsup << "," << e.val_dsc << "\n";
  }
}

}  // namespace bss
