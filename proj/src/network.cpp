#include "acan/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "acan/errors.hpp"

namespace acan {

namespace {

using nlohmann::json;

LinearLayer init_layer(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer layer;
  layer.weight = Matrix(out, in);
  layer.bias.assign(out, 0.0);
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.values()) w = rng.uniform(-s, s);
  return layer;
}

json layer_to_json(const LinearLayer& layer) {
  return json{{"rows", layer.weight.rows()},
              {"cols", layer.weight.cols()},
              {"weights", layer.weight.values()},
              {"bias", layer.bias}};
}

LinearLayer layer_from_json(const json& j) {
  LinearLayer layer;
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  layer.weight = Matrix(rows, cols);
  const auto weights = j.at("weights").get<std::vector<double>>();
  if (weights.size() != rows * cols) {
    throw IoError("model layer: weights length " + std::to_string(weights.size()) +
                  " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  layer.weight.values() = weights;
  layer.bias = j.at("bias").get<std::vector<double>>();
  if (layer.bias.size() != rows) {
    throw IoError("model layer: bias length does not match rows");
  }
  return layer;
}

}  // namespace

Network make_network(std::size_t input_dim, const std::vector<std::size_t>& hidden_widths,
                     std::size_t embedding_dim, std::size_t num_cameras, std::uint64_t seed,
                     Scheme scheme) {
  if (num_cameras < 2) throw ConfigError("make_network: num_cameras must be >= 2");
  if (input_dim == 0 || embedding_dim == 0) {
    throw ConfigError("make_network: zero input or embedding dimension");
  }
  Network net;
  net.input_dim = input_dim;
  net.embedding_dim = embedding_dim;
  net.num_cameras = num_cameras;
  net.seed = seed;
  net.scheme = scheme;
  Rng rng(derive_stream_seed(seed, "init"));
  std::size_t in = input_dim;
  for (std::size_t w : hidden_widths) {
    net.extractor.push_back(init_layer(in, w, rng));
    in = w;
  }
  net.extractor.push_back(init_layer(in, embedding_dim, rng));
  net.discriminator = init_layer(embedding_dim, num_cameras, rng);
  return net;
}

NetworkGrads zero_grads(const Network& net) {
  NetworkGrads g;
  for (const auto& layer : net.extractor) {
    g.extractor.push_back({Matrix(layer.out_dim(), layer.in_dim()),
                           std::vector<double>(layer.out_dim(), 0.0)});
  }
  g.discriminator = {Matrix(net.discriminator.out_dim(), net.discriminator.in_dim()),
                     std::vector<double>(net.discriminator.out_dim(), 0.0)};
  return g;
}

Matrix linear_forward(const LinearLayer& layer, const Matrix& input) {
  if (input.cols() != layer.in_dim()) {
    throw DimensionError("linear_forward: input " + shape_string(input) + " vs weight " +
                         shape_string(layer.weight));
  }
  Matrix out = matmul(input, transpose(layer.weight));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += layer.bias[j];
  }
  return out;
}

Matrix forward_extractor(const Network& net, const Matrix& batch, ExtractorCache* cache) {
  if (batch.cols() != net.input_dim) {
    throw DimensionError("forward_extractor: batch " + shape_string(batch) +
                         " does not match input_dim " + std::to_string(net.input_dim));
  }
  if (cache) {
    cache->layer_inputs.clear();
    cache->pre_activations.clear();
  }
  Matrix x = batch;
  for (std::size_t l = 0; l < net.extractor.size(); ++l) {
    if (cache) cache->layer_inputs.push_back(x);
    Matrix z = linear_forward(net.extractor[l], x);
    if (cache) cache->pre_activations.push_back(z);
    if (l + 1 < net.extractor.size()) {
      for (double& v : z.values()) v = v > 0.0 ? v : 0.0;  // ReLU
    }
    x = std::move(z);
  }
  check_finite(x, "forward_extractor");
  return x;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const double e = std::exp(logits(i, j) - mx);
      probs(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) probs(i, j) /= sum;
  }
  return probs;
}

DiscriminatorOut forward_discriminator(const Network& net, const Matrix& embeddings) {
  if (embeddings.cols() != net.embedding_dim) {
    throw DimensionError("forward_discriminator: embeddings " + shape_string(embeddings) +
                         " vs embedding_dim " + std::to_string(net.embedding_dim));
  }
  DiscriminatorOut out;
  out.logits = linear_forward(net.discriminator, embeddings);
  check_finite(out.logits, "forward_discriminator");
  out.probs = softmax_rows(out.logits);
  return out;
}

Matrix linear_backward(const LinearLayer& layer, const Matrix& input, const Matrix& grad_output,
                       LinearGrads& grads) {
  if (grad_output.rows() != input.rows() || grad_output.cols() != layer.out_dim() ||
      input.cols() != layer.in_dim()) {
    throw DimensionError("linear_backward: grad " + shape_string(grad_output) + ", input " +
                         shape_string(input) + ", weight " + shape_string(layer.weight));
  }
  // dW = g^T x, db = column sums of g, dx = g W
  Matrix gw = matmul(transpose(grad_output), input);
  if (grads.weight.size() == 0) {
    grads.weight = std::move(gw);
    grads.bias.assign(layer.out_dim(), 0.0);
  } else {
    add_scaled(grads.weight, gw, 1.0);
  }
  for (std::size_t i = 0; i < grad_output.rows(); ++i) {
    for (std::size_t j = 0; j < grad_output.cols(); ++j) grads.bias[j] += grad_output(i, j);
  }
  return matmul(grad_output, layer.weight);
}

Matrix backward_extractor(const Network& net, const ExtractorCache& cache,
                          const Matrix& grad_embeddings, NetworkGrads& grads) {
  const std::size_t L = net.extractor.size();
  if (cache.layer_inputs.size() != L || cache.pre_activations.size() != L) {
    throw DimensionError("backward_extractor: cache does not match network depth");
  }
  if (grad_embeddings.cols() != net.embedding_dim ||
      grad_embeddings.rows() != cache.layer_inputs[0].rows()) {
    throw DimensionError("backward_extractor: grad " + shape_string(grad_embeddings) +
                         " does not match cached batch of " +
                         shape_string(cache.layer_inputs[0]));
  }
  if (grads.extractor.size() != L) {
    throw DimensionError("backward_extractor: grads accumulator does not match network depth");
  }
  Matrix g = grad_embeddings;
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) {
      // ReLU backward; subgradient 0 at exactly 0.
      const Matrix& z = cache.pre_activations[l];
      if (z.rows() != g.rows() || z.cols() != g.cols()) {
        throw DimensionError("backward_extractor: stale cache at layer " + std::to_string(l));
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (z.values()[i] <= 0.0) g.values()[i] = 0.0;
      }
    }
    g = linear_backward(net.extractor[l], cache.layer_inputs[l], g, grads.extractor[l]);
  }
  return g;
}

void sgd_step(LinearLayer& layer, const LinearGrads& grads, double learning_rate) {
  if (learning_rate <= 0.0) throw ConfigError("sgd_step: learning_rate must be positive");
  if (grads.weight.rows() != layer.weight.rows() || grads.weight.cols() != layer.weight.cols() ||
      grads.bias.size() != layer.bias.size()) {
    throw DimensionError("sgd_step: gradient shape " + shape_string(grads.weight) +
                         " does not match parameters " + shape_string(layer.weight));
  }
  add_scaled(layer.weight, grads.weight, -learning_rate);
  for (std::size_t i = 0; i < layer.bias.size(); ++i) {
    layer.bias[i] -= learning_rate * grads.bias[i];
  }
}

void sgd_step_extractor(Network& net, const NetworkGrads& grads, double learning_rate) {
  if (grads.extractor.size() != net.extractor.size()) {
    throw DimensionError("sgd_step_extractor: layer count mismatch");
  }
  for (std::size_t l = 0; l < net.extractor.size(); ++l) {
    sgd_step(net.extractor[l], grads.extractor[l], learning_rate);
  }
}

std::string model_to_json_string(const Network& net) {
  if (!std::all_of(net.extractor.begin(), net.extractor.end(),
                   [](const LinearLayer& l) { return l.weight.all_finite(); }) ||
      !net.discriminator.weight.all_finite()) {
    throw IoError("save_model: refusing to write non-finite parameters");
  }
  json doc;
  doc["format"] = "acan-model-v1";
  doc["embedding_dim"] = net.embedding_dim;
  doc["num_cameras"] = net.num_cameras;
  doc["seed"] = net.seed;
  doc["scheme"] = to_string(net.scheme);
  doc["layers"] = json::array();
  for (const auto& layer : net.extractor) doc["layers"].push_back(layer_to_json(layer));
  doc["discriminator"] = layer_to_json(net.discriminator);
  return doc.dump(2);
}

Network model_from_json_string(const std::string& text, const std::string& context) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("load_model: " + context + ": " + e.what());
  }
  if (doc.value("format", "") != "acan-model-v1") {
    throw IoError("load_model: " + context + ": unknown or missing format tag");
  }
  Network net;
  try {
    net.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
    net.num_cameras = doc.at("num_cameras").get<std::size_t>();
    net.seed = doc.at("seed").get<std::uint64_t>();
    net.scheme = scheme_from_string(doc.at("scheme").get<std::string>());
    for (const auto& jl : doc.at("layers")) net.extractor.push_back(layer_from_json(jl));
    net.discriminator = layer_from_json(doc.at("discriminator"));
  } catch (const json::exception& e) {
    throw IoError("load_model: " + context + ": " + e.what());
  }
  if (net.extractor.empty()) throw IoError("load_model: no extractor layers");
  net.input_dim = net.extractor.front().in_dim();
  if (net.extractor.back().out_dim() != net.embedding_dim ||
      net.discriminator.in_dim() != net.embedding_dim ||
      net.discriminator.out_dim() != net.num_cameras) {
    throw IoError("load_model: inconsistent layer shapes in " + context);
  }
  for (std::size_t l = 0; l + 1 < net.extractor.size(); ++l) {
    if (net.extractor[l].out_dim() != net.extractor[l + 1].in_dim()) {
      throw IoError("load_model: layer " + std::to_string(l) + " output does not feed layer " +
                    std::to_string(l + 1));
    }
  }
  return net;
}

void save_model(const Network& net, const std::filesystem::path& path) {
  const std::string doc = model_to_json_string(net);
  std::ofstream os(path);
  if (!os) throw IoError("save_model: cannot open " + path.string());
  os << doc << "\n";
  if (!os) throw IoError("save_model: write failed for " + path.string());
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_model: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return model_from_json_string(text, path.string());
}

}  // namespace acan
