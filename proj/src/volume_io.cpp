#include "bss/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bss {

static_assert(std::endian::native == std::endian::little,
              "volume files are little-endian; big-endian hosts are unsupported");

namespace {
constexpr const char* kMagic = "BSSVOL1";
}

VolumeRecord to_record(const Volume& v, const std::string& name) {
  VolumeRecord r;
  r.name = name;
  r.dtype = "f64";
  r.axes = "CDHW";
  r.shape = {v.channels, v.depth, v.height, v.width};
  r.f64 = v.voxels;
  return r;
}

VolumeRecord to_record(const LabelVolume& l, const std::string& name) {
  VolumeRecord r;
  r.name = name;
  r.dtype = "i32";
  r.axes = "DHW";
  r.shape = {l.depth, l.height, l.width};
  r.num_classes = l.num_classes;
  r.i32 = l.classes;
  return r;
}

VolumeRecord to_record(const Tensor& t, const std::string& name) {
  VolumeRecord r;
  r.name = name;
  r.dtype = "f64";
  r.axes = "TENSOR";
  r.shape = t.shape().dims();
  r.f64 = t.vec();
  return r;
}

Volume volume_from_record(const VolumeRecord& r) {
  if (r.dtype != "f64") {
    throw DtypeError("record '" + r.name + "' has dtype " + r.dtype +
                     ", cannot load as a real-valued volume");
  }
  if (r.shape.size() != 4) {
    throw MalformedHeaderError("record '" + r.name + "' is not a (C,D,H,W) volume");
  }
  Volume v(r.shape[0], r.shape[1], r.shape[2], r.shape[3]);
  v.voxels = r.f64;
  return v;
}

LabelVolume label_from_record(const VolumeRecord& r) {
  if (r.dtype != "i32") {
    throw DtypeError("record '" + r.name + "' has dtype " + r.dtype +
                     ", cannot load as a class grid");
  }
  if (r.shape.size() != 3) {
    throw MalformedHeaderError("record '" + r.name + "' is not a (D,H,W) label grid");
  }
  LabelVolume l(r.shape[0], r.shape[1], r.shape[2], r.num_classes > 0 ? r.num_classes : 2);
  l.classes = r.i32;
  return l;
}

Tensor tensor_from_record(const VolumeRecord& r) {
  if (r.dtype != "f64") {
    throw DtypeError("record '" + r.name + "' has dtype " + r.dtype +
                     ", cannot load as a tensor");
  }
  return Tensor(Shape(r.shape), r.f64);
}

void write_records(const std::string& path, const std::vector<VolumeRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const VolumeRecord& r : records) {
    if (r.dtype != "f64" && r.dtype != "i32") {
      throw DtypeError("record '" + r.name + "': unknown dtype tag '" + r.dtype + "'");
    }
    const index_t n = r.numel();
    const index_t expect = r.dtype == "f64" ? static_cast<index_t>(r.f64.size())
                                            : static_cast<index_t>(r.i32.size());
    if (n != expect) {
      throw IoError("record '" + r.name + "': payload length does not match shape");
    }
    const index_t nbytes = n * (r.dtype == "f64" ? 8 : 4);
    out << kMagic << "\n";
    out << "record " << r.name << "\n";
    out << "dtype " << r.dtype << "\n";
    out << "axes " << r.axes << "\n";
    out << "shape";
    for (index_t d : r.shape) out << " " << d;
    out << "\n";
    if (r.num_classes > 0) out << "classes " << r.num_classes << "\n";
    out << "endian little\n";
    out << "payload " << nbytes << "\n\n";
    if (r.dtype == "f64") {
      out.write(reinterpret_cast<const char*>(r.f64.data()), nbytes);
    } else {
      out.write(reinterpret_cast<const char*>(r.i32.data()), nbytes);
    }
    out << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

namespace {

std::string read_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw MalformedHeaderError("'" + path + "': unexpected end of file in header");
  }
  return line;
}

}  // namespace

std::vector<VolumeRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<VolumeRecord> records;

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line != kMagic) {
      throw MalformedHeaderError("'" + path + "': bad magic '" + line + "'");
    }
    VolumeRecord r;
    index_t payload_bytes = -1;
    bool saw_endian = false;
    // header lines until the blank separator; payload is read only after the
    // whole header has been validated
    while (true) {
      line = read_line(in, path);
      if (line.empty()) break;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "record") {
        ls >> r.name;
      } else if (key == "dtype") {
        ls >> r.dtype;
      } else if (key == "axes") {
        ls >> r.axes;
      } else if (key == "shape") {
        index_t d;
        while (ls >> d) {
          if (d < 1) throw MalformedHeaderError("'" + path + "': non-positive shape dim");
          r.shape.push_back(d);
        }
      } else if (key == "classes") {
        ls >> r.num_classes;
      } else if (key == "endian") {
        std::string e;
        ls >> e;
        if (e != "little") throw MalformedHeaderError("'" + path + "': unsupported endianness");
        saw_endian = true;
      } else if (key == "payload") {
        ls >> payload_bytes;
      } else {
        throw MalformedHeaderError("'" + path + "': unknown header key '" + key + "'");
      }
    }
    if (r.dtype != "f64" && r.dtype != "i32") {
      throw DtypeError("'" + path + "': unknown dtype tag '" + r.dtype + "'");
    }
    if (r.shape.empty() || !saw_endian || payload_bytes < 0) {
      throw MalformedHeaderError("'" + path + "': incomplete header for record '" + r.name + "'");
    }
    const index_t n = r.numel();
    const index_t expect_bytes = n * (r.dtype == "f64" ? 8 : 4);
    if (payload_bytes != expect_bytes) {
      throw MalformedHeaderError("'" + path + "': payload size " + std::to_string(payload_bytes) +
                                 " does not match shape (" + std::to_string(expect_bytes) +
                                 " expected)");
    }
    if (r.dtype == "f64") {
      r.f64.resize(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(r.f64.data()), expect_bytes);
    } else {
      r.i32.resize(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(r.i32.data()), expect_bytes);
    }
    if (in.gcount() != expect_bytes) {
      throw TruncatedPayloadError("'" + path + "': record '" + r.name + "' payload truncated (" +
                                  std::to_string(in.gcount()) + " of " +
                                  std::to_string(expect_bytes) + " bytes)");
    }
    std::getline(in, line);  // trailing newline after payload
    records.push_back(std::move(r));
  }
  if (records.empty()) throw MalformedHeaderError("'" + path + "': no records");
  return records;
}

void save_volume(const std::string& path, const Volume& v) {
  write_records(path, {to_record(v)});
}

void save_volume(const std::string& path, const LabelVolume& l) {
  write_records(path, {to_record(l)});
}

Volume load_volume(const std::string& path) {
  return volume_from_record(read_records(path).at(0));
}

LabelVolume load_label_volume(const std::string& path) {
  return label_from_record(read_records(path).at(0));
}

}  // namespace bss
