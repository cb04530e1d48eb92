#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bss/tensor.hpp"
#include "bss/volume.hpp"

namespace bss {

/// One named record of a container file: a text header (magic, name, dtype,
/// axes, shape, endianness, payload size) followed by raw little-endian
/// row-major scalars. Round trips are bit-exact.
struct VolumeRecord {
  std::string name = "volume";
  std::string dtype;  // "f64" | "i32"
  std::string axes;   // "CDHW", "DHW", or free-form for generic tensors
  std::vector<index_t> shape;
  index_t num_classes = 0;  // label records only
  std::vector<double> f64;
  std::vector<std::int32_t> i32;

  index_t numel() const {
    index_t n = 1;
    for (index_t d : shape) n *= d;
    return n;
  }
};

VolumeRecord to_record(const Volume& v, const std::string& name = "volume");
VolumeRecord to_record(const LabelVolume& l, const std::string& name = "label");
VolumeRecord to_record(const Tensor& t, const std::string& name);

Volume volume_from_record(const VolumeRecord& r);
LabelVolume label_from_record(const VolumeRecord& r);
Tensor tensor_from_record(const VolumeRecord& r);

void write_records(const std::string& path, const std::vector<VolumeRecord>& records);
std::vector<VolumeRecord> read_records(const std::string& path);

void save_volume(const std::string& path, const Volume& v);
void save_volume(const std::string& path, const LabelVolume& l);
Volume load_volume(const std::string& path);
LabelVolume load_label_volume(const std::string& path);

}  // namespace bss
