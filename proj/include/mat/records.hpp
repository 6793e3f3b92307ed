#pragma once

#include <cstring>
#include <fstream>

#include "mat/tensor.hpp"

// Length-prefixed binary record container: magic "MATC", u32 version, u64
// record count, then per record (u32 name_len, name, u8 dtype, u32 ndim,
// i64 dims..., u64 byte_len, raw little-endian payload). Checkpoints and
// serialized feature sets both use it. Writing is fully deterministic, so
// save -> load -> save round-trips byte-identically.

namespace mat {

enum class RecordType : uint8_t { kF32 = 0, kF64 = 1, kBytes = 2 };

struct Record {
  std::string name;
  RecordType dtype = RecordType::kBytes;
  Shape shape;
  std::vector<uint8_t> raw;

  static Record from_f32(const std::string& name, const Shape& shape,
                         std::span<const float> data) {
    Record r;
    r.name = name;
    r.dtype = RecordType::kF32;
    r.shape = shape;
    r.raw.resize(data.size() * sizeof(float));
    std::memcpy(r.raw.data(), data.data(), r.raw.size());
    return r;
  }

  static Record from_f64(const std::string& name, const Shape& shape,
                         std::span<const double> data) {
    Record r;
    r.name = name;
    r.dtype = RecordType::kF64;
    r.shape = shape;
    r.raw.resize(data.size() * sizeof(double));
    std::memcpy(r.raw.data(), data.data(), r.raw.size());
    return r;
  }

  static Record from_bytes(const std::string& name, const std::string& payload) {
    Record r;
    r.name = name;
    r.dtype = RecordType::kBytes;
    r.shape = {static_cast<int64_t>(payload.size())};
    r.raw.assign(payload.begin(), payload.end());
    return r;
  }

  static Record from_u64(const std::string& name, uint64_t v) {
    Record r;
    r.name = name;
    r.dtype = RecordType::kBytes;
    r.shape = {8};
    r.raw.resize(8);
    std::memcpy(r.raw.data(), &v, 8);
    return r;
  }

  uint64_t as_u64() const {
    check(raw.size() == 8, "record " + name + ": not a u64 payload");
    uint64_t v;
    std::memcpy(&v, raw.data(), 8);
    return v;
  }

  std::string as_string() const { return std::string(raw.begin(), raw.end()); }

  std::vector<float> as_f32() const {
    check(dtype == RecordType::kF32, "record " + name + ": not f32");
    std::vector<float> v(raw.size() / sizeof(float));
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
  }

  std::vector<double> as_f64() const {
    check(dtype == RecordType::kF64, "record " + name + ": not f64");
    std::vector<double> v(raw.size() / sizeof(double));
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
  }
};

namespace recdetail {

template <typename V>
void write_pod(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v;
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw IoError("record stream: truncated file");
  return v;
}

}  // namespace recdetail

inline void write_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("MATC", 4);
  recdetail::write_pod<uint32_t>(os, 1);
  recdetail::write_pod<uint64_t>(os, records.size());
  for (const auto& r : records) {
    recdetail::write_pod<uint32_t>(os, static_cast<uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    recdetail::write_pod<uint8_t>(os, static_cast<uint8_t>(r.dtype));
    recdetail::write_pod<uint32_t>(os, static_cast<uint32_t>(r.shape.size()));
    for (int64_t d : r.shape) recdetail::write_pod<int64_t>(os, d);
    recdetail::write_pod<uint64_t>(os, r.raw.size());
    os.write(reinterpret_cast<const char*>(r.raw.data()),
             static_cast<std::streamsize>(r.raw.size()));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<Record> read_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MATC", 4) != 0)
    throw IoError(path + ": not a MATC record file");
  const uint32_t version = recdetail::read_pod<uint32_t>(is);
  if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version));
  const uint64_t count = recdetail::read_pod<uint64_t>(is);
  std::vector<Record> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Record r;
    const uint32_t name_len = recdetail::read_pod<uint32_t>(is);
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    r.dtype = static_cast<RecordType>(recdetail::read_pod<uint8_t>(is));
    const uint32_t ndim = recdetail::read_pod<uint32_t>(is);
    r.shape.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) r.shape[d] = recdetail::read_pod<int64_t>(is);
    const uint64_t nbytes = recdetail::read_pod<uint64_t>(is);
    r.raw.resize(nbytes);
    is.read(reinterpret_cast<char*>(r.raw.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw IoError(path + ": truncated record " + r.name);
    out.push_back(std::move(r));
  }
  return out;
}

inline const Record& find_record(const std::vector<Record>& records, const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw IoError("record not found: " + name);
}

}  // namespace mat
