#pragma once

#include "cae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace cae {

// Flat binary tensor container:
//   "CAE1" | version:u32 | { name_len:u32 | name | rank:u32 | dims:u64[rank] | f64[numel] }*
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CorruptCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnsupportedVersion : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};


struct NamedTensor {
  Shape shape;
  Eigen::VectorXd values;
};

void write_tensors(const std::filesystem::path& path, const std::map<std::string, NamedTensor>& tensors);
std::map<std::string, NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace cae
