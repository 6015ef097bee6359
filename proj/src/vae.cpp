#include "gvae/vae.hpp"

#include "gvae/error.hpp"
#include "gvae/io.hpp"

#include <fstream>
#include <sstream>

namespace gvae {

using nlohmann::json;

namespace {

json mlp_to_json(const MlpModel& model) {
  json weights = json::array();
  json biases = json::array();
  for (const auto& layer : model.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index k = 0; k < layer.weight.cols(); ++k) w.push_back(layer.weight(i, k));
    weights.push_back(std::move(w));
    biases.push_back(std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
  }
  return {{"dims", model.layer_dims}, {"weights", weights}, {"biases", biases}};
}

MlpModel mlp_from_json(const json& j, Role role, Activation hidden) {
  MlpModel model;
  model.role = role;
  model.hidden_activation = hidden;
  model.layer_dims = j.at("dims").get<std::vector<int>>();
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (model.layer_dims.size() < 2 || weights.size() + 1 != model.layer_dims.size() ||
      biases.size() != weights.size())
    throw ParseError("checkpoint " + to_string(role) + ": layer count does not match dims");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const int rows = model.layer_dims[l + 1];
    const int cols = model.layer_dims[l];
    const auto w = weights[l].get<std::vector<double>>();
    const auto b = biases[l].get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(rows) * cols || b.size() != static_cast<std::size_t>(rows)) {
      std::ostringstream os;
      os << "checkpoint " << to_string(role) << " layer " << l << ": expected " << rows << "x"
         << cols << " weights";
      throw ParseError(os.str());
    }
    Layer layer{Matrix(rows, cols), Vector(rows)};
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) layer.weight(i, k) = w[static_cast<std::size_t>(i) * cols + k];
    for (int i = 0; i < rows; ++i) layer.bias(i) = b[i];
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace

void VaeModel::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.role != Role::kEncoder || decoder.role != Role::kDecoder)
    throw ShapeError("vae: encoder/decoder roles swapped");
  if (encoder.output_dim() != 2 * latent_dim)
    throw ShapeError("vae: encoder output must be 2 * latent_dim");
  if (decoder.input_dim() != latent_dim) throw ShapeError("vae: decoder input must be latent_dim");
  if (decoder.output_dim() != encoder.input_dim())
    throw ShapeError("vae: decoder output must match encoder input");
}

json checkpoint_to_json(const VaeModel& model) {
  return {{"version", 1},
          {"latent_dim", model.latent_dim},
          {"activation", to_string(model.decoder.hidden_activation)},
          {"encoder", mlp_to_json(model.encoder)},
          {"decoder", mlp_to_json(model.decoder)}};
}

VaeModel checkpoint_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
    const std::string act = j.at("activation").get<std::string>();
    Activation hidden;
    if (act == "softplus")
      hidden = Activation::kSoftplus;
    else if (act == "identity")
      hidden = Activation::kIdentity;
    else
      throw ParseError("unknown activation '" + act + "'");
    VaeModel model;
    model.latent_dim = j.at("latent_dim").get<int>();
    model.encoder = mlp_from_json(j.at("encoder"), Role::kEncoder, hidden);
    model.decoder = mlp_from_json(j.at("decoder"), Role::kDecoder, hidden);
    try {
      model.validate();
    } catch (const ShapeError& e) {
      throw ParseError(std::string("checkpoint: ") + e.what());
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const VaeModel& model, const std::filesystem::path& path) {
  write_text_atomic(path, checkpoint_to_json(model).dump() + "\n");
}

VaeModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace gvae
