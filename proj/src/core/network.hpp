#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "core/linalg.hpp"

namespace cpinn {

// Fully connected tanh network with a linear scalar output. Weights are
// stored per layer; the canonical flat layout (used by optimizers, the tape
// and checkpoints) is: for each layer, W row-major then b.
struct MlpParameters {
  std::vector<int> layer_dims;  // input, hidden..., output
  std::vector<Mat> weights;     // weights[l]: layer_dims[l+1] x layer_dims[l]
  std::vector<Vec> biases;      // biases[l]:  layer_dims[l+1]
  std::uint64_t seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int n_weight_layers() const { return static_cast<int>(weights.size()); }
  int last_hidden_width() const { return layer_dims[layer_dims.size() - 2]; }

  std::size_t parameter_count() const;
  Vec flatten() const;
  void set_from_flat(const Vec& flat);
};

// Inverted-dropout mask over hidden activations: entries are 0 or 1/keep_prob.
struct DropoutMask {
  std::vector<Vec> layer_masks;  // one per hidden layer
  double keep_prob = 1.0;
  std::uint64_t seed = 0;
};

MlpParameters init_xavier(const std::vector<int>& layer_dims, std::uint64_t seed);

DropoutMask sample_dropout_mask(const MlpParameters& params, double keep_prob,
                                std::uint64_t seed);

double forward(const MlpParameters& params, const Vec& x,
               const DropoutMask* mask = nullptr);

// Activations of the last hidden layer (post-tanh, no dropout).
Vec latent(const MlpParameters& params, const Vec& x);

// Column-per-point batched variants.
RowVec forward_batch(const MlpParameters& params, const Mat& X,
                     const DropoutMask* mask = nullptr);
Mat latent_batch(const MlpParameters& params, const Mat& X);

nlohmann::ordered_json params_to_json(const MlpParameters& params);
MlpParameters params_from_json(const nlohmann::json& j);
void save_params(const MlpParameters& params, const std::string& path);
MlpParameters load_params(const std::string& path);

}  // namespace cpinn
