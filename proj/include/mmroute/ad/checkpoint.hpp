#pragma once

#include "mmroute/ad/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mmroute::ad {

inline constexpr int kCheckpointVersion = 1;

template <typename TensorPtr>
struct BasicSection {
  std::string key;  // e.g. "expert/T2/MTL"
  std::vector<TensorPtr> tensors;
};

using ConstSection = BasicSection<const Tensor*>;
using Section = BasicSection<Tensor*>;

// {"format": "mmroute-checkpoint", "version": 1, "sections": {key: [{name,
// shape: [rows, cols], values: row-major}]}}
nlohmann::json checkpoint_json(const std::vector<ConstSection>& sections);
void save_checkpoint(const std::filesystem::path& path, const std::vector<ConstSection>& sections);

// Tensors are matched by section key and tensor name; shapes must agree.
void load_checkpoint(const nlohmann::json& doc, const std::vector<Section>& sections);
void load_checkpoint(const std::filesystem::path& path, const std::vector<Section>& sections);

}  // namespace mmroute::ad
