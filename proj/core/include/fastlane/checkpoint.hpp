#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastlane/autodiff.hpp"
#include "fastlane/tensor.hpp"

namespace fastlane {

// Named-tensor archive: magic "FLCK", version u32, JSON header (u32 length +
// UTF-8), tensor count u64, then per tensor a length-prefixed name followed
// by an FLT1 tensor.
struct Archive {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_archive(const std::string& path, const nlohmann::json& header, const ParameterStore& params);
Archive load_archive(const std::string& path);

// Registers every archived tensor in `store` (requires_grad on).
void load_into(const Archive& archive, ParameterStore& store);

}  // namespace fastlane
