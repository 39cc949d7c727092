#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "acan/matrix.hpp"
#include "acan/rng.hpp"
#include "acan/scheme.hpp"

namespace acan {

struct LinearLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // length out

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct LinearGrads {
  Matrix weight;
  std::vector<double> bias;
};

// Feature extractor (MLP, ReLU between all but the last layer) plus a linear
// camera discriminator on top of the embedding.
struct Network {
  std::vector<LinearLayer> extractor;
  LinearLayer discriminator;  // embedding_dim -> num_cameras
  std::size_t input_dim = 0;
  std::size_t embedding_dim = 0;
  std::size_t num_cameras = 0;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::kNone;

  friend bool operator==(const Network&, const Network&) = default;
};

// Builds a network with uniform [-s, s] weights, s = sqrt(6/(fan_in+fan_out)),
// drawn from the "init" stream of `seed`; biases start at zero.
Network make_network(std::size_t input_dim, const std::vector<std::size_t>& hidden_widths,
                     std::size_t embedding_dim, std::size_t num_cameras, std::uint64_t seed,
                     Scheme scheme);

struct NetworkGrads {
  std::vector<LinearGrads> extractor;
  LinearGrads discriminator;
};

NetworkGrads zero_grads(const Network& net);

// Activation record produced by forward_extractor and consumed by
// backward_extractor. layer_inputs[l] feeds layer l; pre_activations[l] is the
// affine output of layer l before ReLU.
struct ExtractorCache {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
};

// batch is N x input_dim; returns N x embedding_dim. Fills `cache` when given.
Matrix forward_extractor(const Network& net, const Matrix& batch,
                         ExtractorCache* cache = nullptr);

struct DiscriminatorOut {
  Matrix logits;  // N x C
  Matrix probs;   // row-wise softmax of logits
};

DiscriminatorOut forward_discriminator(const Network& net, const Matrix& embeddings);

// Row-wise softmax with max subtraction; rows sum to 1.
Matrix softmax_rows(const Matrix& logits);

Matrix linear_forward(const LinearLayer& layer, const Matrix& input);

// grad_output is N x out. Returns grad wrt input (N x in) and fills `grads`.
Matrix linear_backward(const LinearLayer& layer, const Matrix& input, const Matrix& grad_output,
                       LinearGrads& grads);

// Backpropagates grad_embeddings (N x embedding_dim) through the extractor,
// accumulating parameter gradients into `grads` (so several loss terms can
// share one SGD step). Returns grad wrt the input batch.
Matrix backward_extractor(const Network& net, const ExtractorCache& cache,
                          const Matrix& grad_embeddings, NetworkGrads& grads);

// theta <- theta - lr * grad
void sgd_step(LinearLayer& layer, const LinearGrads& grads, double learning_rate);
void sgd_step_extractor(Network& net, const NetworkGrads& grads, double learning_rate);

// Model persistence (JSON). Round-trips bit-exactly for finite values.
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

// The same document as a string, for embedding in other files (checkpoints).
std::string model_to_json_string(const Network& net);
Network model_from_json_string(const std::string& text, const std::string& context);

}  // namespace acan
