#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dmt/tensor.hpp"

namespace dmt {

// One named f32 array. Training runs in f64; arrays narrow to f32 on save and
// widen back on load, so a save/load/save cycle is byte-stable.
struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  long count() const;
};

// Binary container: magic "DMT1", u32 entry count, manifest of
// (name, dtype tag, shape) records, then the raw arrays little-endian in
// manifest order. Round-trips bit-exactly.
class Checkpoint {
 public:
  std::vector<CheckpointEntry> entries;

  void add(std::string name, const Tensor& t);
  void add_raw(std::string name, std::vector<int> shape, std::vector<float> data);
  void add_scalar(std::string name, float value);

  bool has(std::string_view name) const;
  const CheckpointEntry& at(std::string_view name) const;
  float scalar(std::string_view name) const;
  Tensor tensor(std::string_view name, bool requires_grad = false) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace dmt
