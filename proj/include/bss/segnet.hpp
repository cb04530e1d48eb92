#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bss/rng.hpp"
#include "bss/tape.hpp"
#include "bss/tensor.hpp"

namespace bss {

/// Compact encoder-decoder volumetric segmentation network: stride-2 conv
/// downsampling, nearest-up x2 + conv decoding, one skip concat per level,
/// channel-softmax head.
struct SegNetConfig {
  index_t in_channels = 1;
  index_t base_channels = 8;
  index_t levels = 2;
  index_t num_classes = 2;
  index_t kernel = 3;

  index_t downsample_factor() const { return index_t{1} << levels; }
  void validate() const;
};

/// Named parameter tensors in definition order. Two sets built from the same
/// config are shape-congruent, which the EMA teacher update relies on.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  bool congruent(const ParameterSet& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// He-uniform conv weights (|w| <= sqrt(6 / fan_in)), zero biases.
ParameterSet segnet_init(const SegNetConfig& config, Rng& rng);

/// Gradient-free forward pass (teacher mode): records nothing, returns the
/// (num_classes, D, H, W) probability volume.
Tensor segnet_forward(const SegNetConfig& config, const ParameterSet& params,
                      const Tensor& volume);

/// Registers every parameter on the tape; returns name -> node id.
std::map<std::string, NodeId> segnet_register(const SegNetConfig& config, Tape& tape,
                                              const ParameterSet& params);

/// Tape forward pass (student mode) against previously registered parameters.
NodeId segnet_forward(const SegNetConfig& config, Tape& tape,
                      const std::map<std::string, NodeId>& param_ids, const Tensor& volume);

}  // namespace bss
