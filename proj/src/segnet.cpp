#include "bss/segnet.hpp"

#include <cmath>

#include "bss/kernels.hpp"

namespace bss {

void SegNetConfig::validate() const {
  if (in_channels < 1 || base_channels < 1 || num_classes < 2 || levels < 1) {
    throw ConfigError("segnet: in_channels/base_channels >= 1, num_classes >= 2, levels >= 1");
  }
  if (kernel != 3) throw ConfigError("segnet: only 3x3x3 feature kernels are supported");
}

void ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ConfigError("ParameterSet: duplicate '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParameterSet: unknown '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParameterSet: unknown '" + name + "'");
  return entries_[it->second].second;
}

bool ParameterSet::has(const std::string& name) const { return index_.count(name) > 0; }

bool ParameterSet::congruent(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

namespace {

struct LayerSpec {
  std::string name;
  index_t in_ch, out_ch, kernel, stride;
};

// Parameter layout shared by init and both forward passes.
std::vector<LayerSpec> layer_specs(const SegNetConfig& c) {
  std::vector<LayerSpec> specs;
  const auto ch = [&](index_t level) { return c.base_channels << level; };
  specs.push_back({"stem", c.in_channels, ch(0), c.kernel, 1});
  for (index_t l = 1; l <= c.levels; ++l) {
    specs.push_back({"down" + std::to_string(l), ch(l - 1), ch(l), c.kernel, 2});
    specs.push_back({"mid" + std::to_string(l), ch(l), ch(l), c.kernel, 1});
  }
  for (index_t l = c.levels; l >= 1; --l) {
    specs.push_back({"up" + std::to_string(l) + ".reduce", ch(l), ch(l - 1), c.kernel, 1});
    specs.push_back({"up" + std::to_string(l) + ".fuse", 2 * ch(l - 1), ch(l - 1), c.kernel, 1});
  }
  specs.push_back({"head", ch(0), c.num_classes, 1, 1});
  return specs;
}

}  // namespace

ParameterSet segnet_init(const SegNetConfig& config, Rng& rng) {
  config.validate();
  ParameterSet params;
  for (const LayerSpec& s : layer_specs(config)) {
    Tensor w(Shape{s.out_ch, s.in_ch, s.kernel, s.kernel, s.kernel});
    const double fan_in = static_cast<double>(s.in_ch * s.kernel * s.kernel * s.kernel);
    const double bound = std::sqrt(6.0 / fan_in);
    for (index_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
    params.add(s.name + ".w", std::move(w));
    params.add(s.name + ".b", Tensor(Shape{s.out_ch}));
  }
  return params;
}

namespace {

void check_divisible(const SegNetConfig& c, const Shape& s) {
  if (s.rank() != 4) throw ConfigError("segnet: input must be (C,D,H,W), got " + s.str());
  if (s[0] != c.in_channels) {
    throw ConfigError("segnet: expected " + std::to_string(c.in_channels) +
                      " input channels, got " + std::to_string(s[0]));
  }
  const index_t f = c.downsample_factor();
  for (index_t axis = 1; axis < 4; ++axis) {
    if (s[axis] % f != 0) {
      const index_t pad = f - s[axis] % f;
      throw ConfigError("segnet: spatial dim " + std::to_string(s[axis]) + " on axis " +
                        std::to_string(axis) + " not divisible by " + std::to_string(f) +
                        "; pad by " + std::to_string(pad) + " voxels");
    }
  }
}

// The architecture, written once against an abstract handle type. Ctx
// supplies conv/relu/upsample/concat/softmax over handles.
template <typename Ctx, typename H>
H segnet_graph(const SegNetConfig& c, Ctx& ctx, H input) {
  std::vector<H> skips;
  H x = ctx.relu(ctx.conv(input, "stem", 1));
  skips.push_back(x);
  for (index_t l = 1; l <= c.levels; ++l) {
    x = ctx.relu(ctx.conv(x, "down" + std::to_string(l), 2));
    x = ctx.relu(ctx.conv(x, "mid" + std::to_string(l), 1));
    if (l < c.levels) skips.push_back(x);
  }
  for (index_t l = c.levels; l >= 1; --l) {
    x = ctx.relu(ctx.conv(x, "up" + std::to_string(l) + ".reduce", 1));
    x = ctx.upsample(x);
    x = ctx.concat(x, skips[static_cast<std::size_t>(l - 1)]);
    x = ctx.relu(ctx.conv(x, "up" + std::to_string(l) + ".fuse", 1));
  }
  return ctx.softmax(ctx.conv(x, "head", 1));
}

struct EagerCtx {
  const ParameterSet& params;

  Tensor conv(const Tensor& in, const std::string& layer, index_t stride) {
    Tensor out;
    kernels::conv3d_forward(out, in, params.at(layer + ".w"), params.at(layer + ".b"), stride);
    return out;
  }
  Tensor relu(const Tensor& in) {
    Tensor out;
    kernels::relu_forward(out, in);
    return out;
  }
  Tensor upsample(const Tensor& in) {
    Tensor out;
    kernels::upsample2_forward(out, in);
    return out;
  }
  Tensor concat(const Tensor& a, const Tensor& b) {
    std::vector<index_t> dims = a.shape().dims();
    dims[0] += b.shape()[0];
    Tensor out{Shape(dims)};
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    return out;
  }
  Tensor softmax(const Tensor& in) {
    Tensor out;
    kernels::channel_softmax_forward(out, in);
    return out;
  }
};

struct TapeCtx {
  Tape& tape;
  const std::map<std::string, NodeId>& ids;

  NodeId conv(NodeId in, const std::string& layer, index_t stride) {
    return tape.conv3d(in, ids.at(layer + ".w"), ids.at(layer + ".b"), stride);
  }
  NodeId relu(NodeId in) { return tape.relu(in); }
  NodeId upsample(NodeId in) { return tape.upsample2(in); }
  NodeId concat(NodeId a, NodeId b) { return tape.concat_channels(a, b); }
  NodeId softmax(NodeId in) { return tape.channel_softmax(in); }
};

}  // namespace

Tensor segnet_forward(const SegNetConfig& config, const ParameterSet& params,
                      const Tensor& volume) {
  check_divisible(config, volume.shape());
  EagerCtx ctx{params};
  return segnet_graph<EagerCtx, Tensor>(config, ctx, volume);
}

std::map<std::string, NodeId> segnet_register(const SegNetConfig& config, Tape& tape,
                                              const ParameterSet& params) {
  (void)config;
  std::map<std::string, NodeId> ids;
  for (const auto& [name, tensor] : params.entries()) {
    ids[name] = tape.parameter(name, tensor);
  }
  return ids;
}

NodeId segnet_forward(const SegNetConfig& config, Tape& tape,
                      const std::map<std::string, NodeId>& param_ids, const Tensor& volume) {
  check_divisible(config, volume.shape());
  TapeCtx ctx{tape, param_ids};
  return segnet_graph<TapeCtx, NodeId>(config, ctx, tape.constant(volume));
}

}  // namespace bss
