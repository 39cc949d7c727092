#include "acan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "acan/errors.hpp"
#include "acan/losses.hpp"
#include "acan/network.hpp"
#include "acan/rng.hpp"

namespace acan {

GradCheckReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> analytic_grad, std::span<const double> point, double step,
    double tolerance, const std::string& op_name) {
  if (analytic_grad.size() != point.size()) {
    throw DimensionError("finite_difference_check: gradient size " +
                         std::to_string(analytic_grad.size()) + " vs point size " +
                         std::to_string(point.size()));
  }
  std::vector<double> x(point.begin(), point.end());
  GradCheckReport report;
  report.op_name = op_name;
  report.step = step;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x);
    x[i] = saved - step;
    const double fm = f(x);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw DimensionError("finite_difference_check(" + op_name +
                           "): non-finite value at probe for coordinate " + std::to_string(i));
    }
    const double fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic_grad[i]), 1e-8});
    const double rel = std::abs(fd - analytic_grad[i]) / denom;
    report.max_relative_error = std::max(report.max_relative_error, rel);
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

std::vector<int> random_labels(std::size_t n, int num_classes, Rng& rng) {
  std::vector<int> labels(n);
  for (int& z : labels) z = static_cast<int>(rng.below(num_classes));
  return labels;
}

std::vector<double> flatten(const Matrix& m) { return m.values(); }

Matrix unflatten(std::span<const double> v, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

double weighted_sum(const Matrix& m, const Matrix& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.values()[i] * weights.values()[i];
  return s;
}

// Flattened view over all extractor parameters of a network.
std::vector<double> pack_extractor(const Network& net) {
  std::vector<double> out;
  for (const auto& layer : net.extractor) {
    out.insert(out.end(), layer.weight.values().begin(), layer.weight.values().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

void unpack_extractor(Network& net, std::span<const double> v) {
  std::size_t pos = 0;
  for (auto& layer : net.extractor) {
    std::copy(v.begin() + pos, v.begin() + pos + layer.weight.size(),
              layer.weight.values().begin());
    pos += layer.weight.size();
    std::copy(v.begin() + pos, v.begin() + pos + layer.bias.size(), layer.bias.begin());
    pos += layer.bias.size();
  }
}

std::vector<double> pack_extractor_grads(const NetworkGrads& grads) {
  std::vector<double> out;
  for (const auto& g : grads.extractor) {
    out.insert(out.end(), g.weight.values().begin(), g.weight.values().end());
    out.insert(out.end(), g.bias.begin(), g.bias.end());
  }
  return out;
}

// Mining must not flip under the probe perturbations: selected pairs clear of
// runner-ups, hinges clear of zero, selected distances clear of zero.
bool triplet_mining_stable(const Matrix& embeddings, std::span<const int> ids,
                           std::span<const int> cams, double margin, double gap) {
  const Matrix d = pairwise_distances(embeddings);
  const auto mined = mine_hard_triplets(d, ids, cams, margin);
  if (mined.empty()) return false;
  for (const auto& t : mined) {
    const double d_ap = d(t.anchor, t.positive);
    const double d_an = d(t.anchor, t.negative);
    if (d_ap < gap || d_an < gap) return false;
    if (std::abs(margin + d_ap - d_an) < gap) return false;
    for (std::size_t j = 0; j < d.rows(); ++j) {
      if (j == t.anchor || cams[j] != cams[t.anchor]) continue;
      if (ids[j] == ids[t.anchor]) {
        if (j != t.positive && std::abs(d(t.anchor, j) - d_ap) < gap) return false;
      } else {
        if (j != t.negative && std::abs(d(t.anchor, j) - d_an) < gap) return false;
      }
    }
  }
  return true;
}

GradCheckReport merge(const std::string& name, double step, double tolerance,
                      const std::vector<GradCheckReport>& parts) {
  GradCheckReport out;
  out.op_name = name;
  out.step = step;
  for (const auto& p : parts) {
    out.max_relative_error = std::max(out.max_relative_error, p.max_relative_error);
  }
  out.passed = out.max_relative_error <= tolerance;
  return out;
}

GradCheckReport check_linear_layer(Rng& rng, double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    const std::size_t in = 3 + rng.below(4);
    const std::size_t out_dim = 2 + rng.below(4);
    const std::size_t n = 2 + rng.below(4);
    LinearLayer layer{random_matrix(out_dim, in, rng), {}};
    layer.bias.resize(out_dim);
    for (double& b : layer.bias) b = rng.normal();
    const Matrix input = random_matrix(n, in, rng);
    const Matrix loss_weights = random_matrix(n, out_dim, rng);

    LinearGrads grads;
    const Matrix grad_input = linear_backward(layer, input, loss_weights, grads);

    // Check d loss / d weight, bias, and input in one packed vector.
    std::vector<double> point = flatten(layer.weight);
    point.insert(point.end(), layer.bias.begin(), layer.bias.end());
    auto input_flat = flatten(input);
    point.insert(point.end(), input_flat.begin(), input_flat.end());
    std::vector<double> analytic = flatten(grads.weight);
    analytic.insert(analytic.end(), grads.bias.begin(), grads.bias.end());
    auto gi = flatten(grad_input);
    analytic.insert(analytic.end(), gi.begin(), gi.end());

    auto f = [&](std::span<const double> v) {
      LinearLayer l2{unflatten(v.subspan(0, out_dim * in), out_dim, in), {}};
      l2.bias.assign(v.begin() + out_dim * in, v.begin() + out_dim * in + out_dim);
      const Matrix x = unflatten(v.subspan(out_dim * in + out_dim), n, in);
      return weighted_sum(linear_forward(l2, x), loss_weights);
    };
    parts.push_back(finite_difference_check(f, analytic, point, step, tol, "linear_layer"));
  }
  return merge("linear_layer", step, tol, parts);
}

GradCheckReport check_extractor_mlp(Rng& rng, double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    Network net = make_network(4, {5}, 3, 2, rng.next_u64(), Scheme::kNone);
    const std::size_t n = 3;
    const Matrix input = random_matrix(n, 4, rng);
    const Matrix loss_weights = random_matrix(n, 3, rng);

    ExtractorCache cache;
    forward_extractor(net, input, &cache);
    NetworkGrads grads = zero_grads(net);
    backward_extractor(net, cache, loss_weights, grads);

    std::vector<double> point = pack_extractor(net);
    std::vector<double> analytic = pack_extractor_grads(grads);
    auto f = [&](std::span<const double> v) {
      Network n2 = net;
      unpack_extractor(n2, v);
      return weighted_sum(forward_extractor(n2, input), loss_weights);
    };
    parts.push_back(finite_difference_check(f, analytic, point, step, tol, "extractor_mlp"));
  }
  return merge("extractor_mlp", step, tol, parts);
}

using LossFn = std::function<LossGrad(const Matrix& probs, std::span<const int> labels)>;

GradCheckReport check_logit_loss(const std::string& name, const LossFn& loss_fn, Rng& rng,
                                 double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    const std::size_t C = 2 + rng.below(5);
    const std::size_t n = 2 + rng.below(5);
    const Matrix logits = random_matrix(n, C, rng);
    const auto labels = random_labels(n, static_cast<int>(C), rng);

    const LossGrad lg = loss_fn(softmax_rows(logits), labels);
    auto f = [&](std::span<const double> v) {
      return loss_fn(softmax_rows(unflatten(v, n, C)), labels).loss;
    };
    parts.push_back(
        finite_difference_check(f, lg.grad_logits.values(), logits.values(), step, tol, name));
  }
  return merge(name, step, tol, parts);
}

GradCheckReport check_triplet(Rng& rng, double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 8;
    const std::size_t dim = 3;
    // Two cameras, two identities each; redraw until mining is stable.
    std::vector<int> cams = {0, 0, 0, 0, 1, 1, 1, 1};
    std::vector<int> ids = {0, 0, 1, 1, 0, 0, 1, 1};
    const double margin = 0.3;
    Matrix emb;
    do {
      emb = random_matrix(n, dim, rng);
    } while (!triplet_mining_stable(emb, ids, cams, margin, 1e-3));

    const TripletResult tr = batch_hard_triplet(emb, ids, cams, margin);
    auto f = [&](std::span<const double> v) {
      return batch_hard_triplet(unflatten(v, n, dim), ids, cams, margin).loss;
    };
    parts.push_back(finite_difference_check(f, tr.grad_embeddings.values(), emb.values(), step,
                                            tol, "triplet_batch_hard"));
  }
  return merge("triplet_batch_hard", step, tol, parts);
}

// GRL generator objective through the discriminator layer, checked wrt the
// embeddings: the analytic path is grl_backward of the cross-entropy gradient
// chained through the linear discriminator.
GradCheckReport check_grl_generator(Rng& rng, double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    const std::size_t C = 2 + rng.below(4);
    const std::size_t dim = 3 + rng.below(3);
    const std::size_t n = 3;
    const double lambda = 0.25 + rng.uniform();
    LinearLayer disc{random_matrix(C, dim, rng), {}};
    disc.bias.resize(C);
    for (double& b : disc.bias) b = rng.normal();
    const Matrix emb = random_matrix(n, dim, rng);
    const auto labels = random_labels(n, static_cast<int>(C), rng);

    const Matrix probs = softmax_rows(linear_forward(disc, emb));
    const LossGrad adv = generator_adversarial_loss(Scheme::kGrl, probs, labels, lambda);
    LinearGrads unused;
    const Matrix grad_emb = linear_backward(disc, emb, adv.grad_logits, unused);

    auto f = [&](std::span<const double> v) {
      const Matrix e = unflatten(v, n, dim);
      const Matrix p = softmax_rows(linear_forward(disc, e));
      return generator_adversarial_loss(Scheme::kGrl, p, labels, lambda).loss;
    };
    parts.push_back(
        finite_difference_check(f, grad_emb.values(), emb.values(), step, tol, "grl_generator"));
  }
  return merge("grl_generator", step, tol, parts);
}

// Full extractor objective (triplet + lambda * OCE through the discriminator)
// checked wrt every extractor parameter, on a small network.
GradCheckReport check_combined_objective(Rng& rng, double step, double tol, int instances) {
  std::vector<GradCheckReport> parts;
  for (int k = 0; k < instances; ++k) {
    Network net = make_network(4, {6}, 5, 3, rng.next_u64(), Scheme::kOce);
    const double lambda = 1.0;
    const double margin = 0.3;
    std::vector<int> cams = {0, 0, 0, 0, 0, 0};
    std::vector<int> ids = {0, 0, 1, 1, 2, 2};
    const auto adv_labels = random_labels(6, 3, rng);

    Matrix input;
    auto stable = [&](const Matrix& x) {
      return triplet_mining_stable(forward_extractor(net, x), ids, cams, margin, 1e-3);
    };
    do {
      input = random_matrix(6, 4, rng);
    } while (!stable(input));

    auto objective = [&](const Network& n2) {
      const Matrix emb = forward_extractor(n2, input);
      const double triplet = batch_hard_triplet(emb, ids, cams, margin).loss;
      const auto d_out = forward_discriminator(n2, emb);
      return triplet + generator_adversarial_loss(Scheme::kOce, d_out.probs, adv_labels, lambda).loss;
    };

    ExtractorCache cache;
    const Matrix emb = forward_extractor(net, input, &cache);
    const TripletResult tr = batch_hard_triplet(emb, ids, cams, margin);
    const auto d_out = forward_discriminator(net, emb);
    const LossGrad adv = generator_adversarial_loss(Scheme::kOce, d_out.probs, adv_labels, lambda);
    LinearGrads disc_unused;
    Matrix grad_emb = linear_backward(net.discriminator, emb, adv.grad_logits, disc_unused);
    add_scaled(grad_emb, tr.grad_embeddings, 1.0);
    NetworkGrads grads = zero_grads(net);
    backward_extractor(net, cache, grad_emb, grads);

    std::vector<double> point = pack_extractor(net);
    std::vector<double> analytic = pack_extractor_grads(grads);
    auto f = [&](std::span<const double> v) {
      Network n2 = net;
      unpack_extractor(n2, v);
      return objective(n2);
    };
    parts.push_back(
        finite_difference_check(f, analytic, point, step, tol, "combined_objective"));
  }
  return merge("combined_objective", step, tol, parts);
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, double tolerance,
                                                 int instances, double step) {
  Rng rng(derive_stream_seed(seed, "gradcheck"));
  std::vector<GradCheckReport> reports;
  reports.push_back(check_linear_layer(rng, step, tolerance, instances));
  reports.push_back(check_extractor_mlp(rng, step, tolerance, instances));
  reports.push_back(check_logit_loss(
      "softmax_cross_entropy",
      [](const Matrix& p, std::span<const int> z) { return discriminator_loss(p, z); }, rng,
      step, tolerance, instances));
  reports.push_back(check_logit_loss(
      "oce",
      [](const Matrix& p, std::span<const int> z) { return oce_loss(p, z); }, rng, step,
      tolerance, instances));
  reports.push_back(check_logit_loss(
      "ace",
      [](const Matrix& p, std::span<const int>) { return ace_loss(p); }, rng, step, tolerance,
      instances));
  reports.push_back(check_triplet(rng, step, tolerance, instances));
  reports.push_back(check_grl_generator(rng, step, tolerance, instances));
  reports.push_back(check_combined_objective(rng, step, tolerance, instances));
  return reports;
}

bool all_passed(const std::vector<GradCheckReport>& reports) {
  for (const auto& r : reports) {
    if (!r.passed) return false;
  }
  return true;
}

}  // namespace acan
