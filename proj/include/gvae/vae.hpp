#pragma once

#include "gvae/jets.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace gvae {

struct VaeModel {
  MlpModel encoder;  // N -> 2m (mean, logvar)
  MlpModel decoder;  // m -> N
  int latent_dim = 0;

  int data_dim() const { return encoder.input_dim(); }
  void validate() const;
};

// Checkpoint schema:
//   {"version":1, "latent_dim":m, "activation":"softplus",
//    "encoder":{"dims":[...], "weights":[[row-major]...], "biases":[[...]...]},
//    "decoder":{...}}
nlohmann::json checkpoint_to_json(const VaeModel& model);
VaeModel checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gvae
