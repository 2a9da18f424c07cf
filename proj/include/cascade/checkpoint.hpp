#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

// Flat parameter container written to disk. Payloads are little-endian 32-bit
// floats; see docs/FORMATS.md for the exact byte layout.
struct Checkpoint {
  std::uint32_t version = 1;
  std::uint32_t channels = 0;
  std::uint32_t samples = 0;
  std::uint32_t filters = 0;
  std::vector<std::string> order;          // entry order as written
  std::map<std::string, Tensor> tensors;   // identifier -> values

  void put(const std::string& name, const Tensor& t);
  const Tensor& get(const std::string& name) const;  // throws DataError when absent
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cascade
