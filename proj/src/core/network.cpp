#include "core/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace cpinn {

namespace {

void check_dims(const std::vector<int>& dims) {
  require(dims.size() >= 2, ErrorCode::invalid_argument,
          "network needs at least an input and an output layer, got " +
              std::to_string(dims.size()) + " dims");
  for (int d : dims) {
    require(d >= 1, ErrorCode::invalid_argument,
            "layer widths must be positive, got " + std::to_string(d));
  }
}

void check_input(const MlpParameters& p, const Vec& x) {
  require(x.size() == p.input_dim(), ErrorCode::dimension_mismatch,
          "input has dimension " + std::to_string(x.size()) + ", network expects " +
              std::to_string(p.input_dim()));
}

void check_mask(const MlpParameters& p, const DropoutMask& m) {
  const std::size_t n_hidden = p.layer_dims.size() - 2;
  require(m.layer_masks.size() == n_hidden, ErrorCode::dimension_mismatch,
          "dropout mask covers " + std::to_string(m.layer_masks.size()) +
              " layers, network has " + std::to_string(n_hidden) + " hidden layers");
  for (std::size_t l = 0; l < n_hidden; ++l) {
    require(m.layer_masks[l].size() == p.layer_dims[l + 1], ErrorCode::dimension_mismatch,
            "dropout mask width mismatch at hidden layer " + std::to_string(l));
  }
}

}  // namespace

std::size_t MlpParameters::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += static_cast<std::size_t>(layer_dims[l]) * layer_dims[l + 1] + layer_dims[l + 1];
  }
  return n;
}

Vec MlpParameters::flatten() const {
  Vec out(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Mat& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) out[k++] = W(r, c);
    }
    const Vec& b = biases[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) out[k++] = b[r];
  }
  return out;
}

void MlpParameters::set_from_flat(const Vec& flat) {
  require(static_cast<std::size_t>(flat.size()) == parameter_count(),
          ErrorCode::dimension_mismatch,
          "flat parameter vector has length " + std::to_string(flat.size()) +
              ", expected " + std::to_string(parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat& W = weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[k++];
    }
    Vec& b = biases[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = flat[k++];
  }
}

MlpParameters init_xavier(const std::vector<int>& layer_dims, std::uint64_t seed) {
  check_dims(layer_dims);
  MlpParameters p;
  p.layer_dims = layer_dims;
  p.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Mat W(fan_out, fan_in);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(W));
    p.biases.push_back(Vec::Zero(fan_out));
  }
  return p;
}

DropoutMask sample_dropout_mask(const MlpParameters& params, double keep_prob,
                                std::uint64_t seed) {
  require(keep_prob > 0.0 && keep_prob <= 1.0, ErrorCode::invalid_argument,
          "keep_prob must lie in (0, 1], got " + std::to_string(keep_prob));
  DropoutMask m;
  m.keep_prob = keep_prob;
  m.seed = seed;
  Rng rng(seed);
  const double scale = 1.0 / keep_prob;
  for (std::size_t l = 1; l + 1 < params.layer_dims.size(); ++l) {
    Vec mask(params.layer_dims[l]);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask[i] = rng.uniform() < keep_prob ? scale : 0.0;
    }
    m.layer_masks.push_back(std::move(mask));
  }
  return m;
}

double forward(const MlpParameters& params, const Vec& x, const DropoutMask* mask) {
  check_input(params, x);
  require(params.output_dim() == 1, ErrorCode::invalid_argument,
          "forward expects a scalar-output network");
  if (mask) check_mask(params, *mask);
  Vec a = x;
  const int L = params.n_weight_layers();
  for (int l = 0; l < L; ++l) {
    Vec z = params.weights[l] * a + params.biases[l];
    if (l + 1 < L) {
      a = z.array().tanh();
      if (mask) a.array() *= mask->layer_masks[l].array();
    } else {
      return z[0];
    }
  }
  return 0.0;  // unreachable
}

Vec latent(const MlpParameters& params, const Vec& x) {
  check_input(params, x);
  require(params.layer_dims.size() >= 3, ErrorCode::invalid_argument,
          "latent extraction needs at least one hidden layer");
  Vec a = x;
  const int L = params.n_weight_layers();
  for (int l = 0; l < L - 1; ++l) {
    a = (params.weights[l] * a + params.biases[l]).array().tanh();
  }
  return a;
}

RowVec forward_batch(const MlpParameters& params, const Mat& X, const DropoutMask* mask) {
  require(X.rows() == params.input_dim(), ErrorCode::dimension_mismatch,
          "batch input has dimension " + std::to_string(X.rows()) +
              ", network expects " + std::to_string(params.input_dim()));
  require(params.output_dim() == 1, ErrorCode::invalid_argument,
          "forward expects a scalar-output network");
  if (mask) check_mask(params, *mask);
  Mat a = X;
  const int L = params.n_weight_layers();
  for (int l = 0; l < L; ++l) {
    Mat z = (params.weights[l] * a).colwise() + params.biases[l];
    if (l + 1 < L) {
      a = z.array().tanh();
      if (mask) a.array().colwise() *= mask->layer_masks[l].array();
    } else {
      return z.row(0);
    }
  }
  return RowVec();
}

Mat latent_batch(const MlpParameters& params, const Mat& X) {
  require(X.rows() == params.input_dim(), ErrorCode::dimension_mismatch,
          "batch input dimension mismatch");
  Mat a = X;
  const int L = params.n_weight_layers();
  for (int l = 0; l < L - 1; ++l) {
    a = ((params.weights[l] * a).colwise() + params.biases[l]).array().tanh();
  }
  return a;
}

nlohmann::ordered_json params_to_json(const MlpParameters& params) {
  nlohmann::ordered_json j;
  j["layer_dims"] = params.layer_dims;
  j["seed"] = params.seed;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    nlohmann::ordered_json layer;
    std::vector<double> w;  // row-major
    const Mat& W = params.weights[l];
    w.reserve(static_cast<std::size_t>(W.size()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.push_back(W(r, c));
    }
    layer["weights"] = w;
    layer["biases"] = std::vector<double>(params.biases[l].data(),
                                          params.biases[l].data() + params.biases[l].size());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpParameters params_from_json(const nlohmann::json& j) {
  MlpParameters p;
  try {
    p.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    check_dims(p.layer_dims);
    const auto& layers = j.at("layers");
    require(layers.size() == p.layer_dims.size() - 1, ErrorCode::parse_error,
            "checkpoint has " + std::to_string(layers.size()) + " layers, dims imply " +
                std::to_string(p.layer_dims.size() - 1));
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
      const int rows = p.layer_dims[l + 1];
      const int cols = p.layer_dims[l];
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      require(static_cast<int>(w.size()) == rows * cols, ErrorCode::parse_error,
              "weight count mismatch in checkpoint layer " + std::to_string(l));
      require(static_cast<int>(b.size()) == rows, ErrorCode::parse_error,
              "bias count mismatch in checkpoint layer " + std::to_string(l));
      Mat W(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) W(r, c) = w[static_cast<std::size_t>(r) * cols + c];
      }
      p.weights.push_back(std::move(W));
      p.biases.push_back(Eigen::Map<const Vec>(b.data(), rows));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("malformed network checkpoint: ") + e.what());
  }
  return p;
}

void save_params(const MlpParameters& params, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  out << params_to_json(params).dump(2) << "\n";
  require(out.good(), ErrorCode::io_error, "failed writing " + path);
}

MlpParameters load_params(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, path + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace cpinn
