#pragma once

#include "signmotion/types.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace signmotion {

// Binary container of named float64 arrays plus an optional JSON metadata
// string. Used for pose sequences, detections, prior and model checkpoints.
//
// Layout (little-endian):
//   magic   "SMC1" (4 bytes)
//   u32     format version (currently 1)
//   u64     metadata byte count, followed by that many UTF-8 bytes
//   u32     array count
//   per array:
//     u32   name byte count, followed by the name
//     u64   rows, u64 cols
//     rows*cols f64 values, row-major
class ArrayContainer {
 public:
  std::string metadata;

  void add(const std::string& name, const Mat& value);
  void add(const std::string& name, const Vec& value);  // stored as n x 1
  void add_scalar(const std::string& name, Scalar value);

  bool has(const std::string& name) const;
  const Mat& at(const std::string& name) const;
  Vec vector_at(const std::string& name) const;
  Scalar scalar_at(const std::string& name) const;

  const std::vector<std::pair<std::string, Mat>>& arrays() const { return arrays_; }

  void save(const std::filesystem::path& path) const;
  static ArrayContainer load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Mat>> arrays_;
};

}  // namespace signmotion
