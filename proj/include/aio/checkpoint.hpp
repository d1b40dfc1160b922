#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aio/tensor.hpp"

namespace aio::ckpt {

// Named-array archive with a JSON metadata header. Array payloads are raw
// little-endian doubles, so save/load round-trips are bit-exact.
struct Archive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, ad::Tensor>> arrays;

  void put(const std::string& name, const ad::Tensor& t);
  bool has(const std::string& name) const;
  const ad::Tensor& get(const std::string& name) const;
};

void save_archive(const Archive& a, const std::string& path);
Archive load_archive(const std::string& path);

}  // namespace aio::ckpt
