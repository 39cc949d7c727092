#include "acan/losses.hpp"

#include <cmath>
#include <string>

#include "acan/errors.hpp"

namespace acan {

namespace {

void check_probs_labels(const Matrix& probs, std::span<const int> labels, const char* op) {
  if (probs.rows() != labels.size()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(probs.rows()) + " rows");
  }
  const int C = static_cast<int>(probs.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= C) {
      throw DimensionError(std::string(op) + ": camera label " + std::to_string(labels[i]) +
                           " out of range [0, " + std::to_string(C) + ")");
    }
  }
}

double safe_log(double p) { return std::log(p < kLogEps ? kLogEps : p); }

}  // namespace

LossGrad discriminator_loss(const Matrix& probs, std::span<const int> camera_labels) {
  check_probs_labels(probs, camera_labels, "discriminator_loss");
  const std::size_t n = probs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossGrad out;
  out.grad_logits = Matrix(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = static_cast<std::size_t>(camera_labels[i]);
    out.loss -= safe_log(probs(i, z));
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      out.grad_logits(i, j) = (probs(i, j) - (j == z ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

Matrix grl_forward(const Matrix& x) { return x; }

Matrix grl_backward(const Matrix& upstream_grad, double lambda) {
  if (lambda <= 0.0) throw ConfigError("grl_backward: lambda must be positive");
  return scaled(upstream_grad, -lambda);
}

LossGrad oce_loss(const Matrix& probs, std::span<const int> camera_labels) {
  if (probs.cols() < 2) throw ConfigError("oce_loss: undefined for fewer than 2 cameras");
  check_probs_labels(probs, camera_labels, "oce_loss");
  const std::size_t n = probs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double w = 1.0 / static_cast<double>(probs.cols() - 1);
  LossGrad out;
  out.grad_logits = Matrix(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = static_cast<std::size_t>(camera_labels[i]);
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      if (j != z) out.loss -= w * safe_log(probs(i, j));
      // Soft-target CE gradient: probs minus the uniform-over-others target.
      out.grad_logits(i, j) = (probs(i, j) - (j == z ? 0.0 : w)) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

LossGrad ace_loss(const Matrix& probs) {
  const std::size_t n = probs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double w = 1.0 / static_cast<double>(probs.cols());
  LossGrad out;
  out.grad_logits = Matrix(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      out.loss -= w * safe_log(probs(i, j));
      out.grad_logits(i, j) = (probs(i, j) - w) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

Matrix pairwise_distances(const Matrix& embeddings) {
  const std::size_t n = embeddings.rows();
  std::vector<double> sq_norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : embeddings.row(i)) sq_norms[i] += v * v;
  }
  const Matrix gram = matmul(embeddings, transpose(embeddings));
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double sq = std::max(0.0, sq_norms[i] + sq_norms[j] - 2.0 * gram(i, j));
      const double dist = std::sqrt(sq);
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

std::vector<MinedTriplet> mine_hard_triplets(const Matrix& distances,
                                             std::span<const int> identity_labels,
                                             std::span<const int> camera_labels, double margin) {
  const std::size_t n = distances.rows();
  if (distances.cols() != n || identity_labels.size() != n || camera_labels.size() != n) {
    throw DimensionError("mine_hard_triplets: labels do not match distance matrix " +
                         shape_string(distances));
  }
  std::vector<MinedTriplet> mined;
  for (std::size_t a = 0; a < n; ++a) {
    bool has_pos = false;
    bool has_neg = false;
    std::size_t hardest_pos = 0;
    std::size_t hardest_neg = 0;
    double max_pos = -1.0;
    double min_neg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a || camera_labels[j] != camera_labels[a]) continue;
      if (identity_labels[j] == identity_labels[a]) {
        if (!has_pos || distances(a, j) > max_pos) {
          max_pos = distances(a, j);
          hardest_pos = j;
          has_pos = true;
        }
      } else {
        if (!has_neg || distances(a, j) < min_neg) {
          min_neg = distances(a, j);
          hardest_neg = j;
          has_neg = true;
        }
      }
    }
    if (!has_pos || !has_neg) continue;
    MinedTriplet t;
    t.anchor = a;
    t.positive = hardest_pos;
    t.negative = hardest_neg;
    t.active = margin + max_pos - min_neg > 0.0;
    mined.push_back(t);
  }
  return mined;
}

TripletResult batch_hard_triplet(const Matrix& embeddings, std::span<const int> identity_labels,
                                 std::span<const int> camera_labels, double margin) {
  const std::size_t n = embeddings.rows();
  if (margin <= 0.0) throw ConfigError("batch_hard_triplet: margin must be positive");
  const Matrix d = pairwise_distances(embeddings);
  TripletResult out;
  out.triplets = mine_hard_triplets(d, identity_labels, camera_labels, margin);
  out.skipped_anchors = n - out.triplets.size();
  if (out.triplets.empty()) {
    throw ConfigError("batch_hard_triplet: no anchor has both a positive and a negative");
  }
  out.grad_embeddings = Matrix(embeddings.rows(), embeddings.cols());
  const double inv_valid = 1.0 / static_cast<double>(out.triplets.size());
  const std::size_t dim = embeddings.cols();
  for (const MinedTriplet& t : out.triplets) {
    const double d_ap = d(t.anchor, t.positive);
    const double d_an = d(t.anchor, t.negative);
    const double hinge = margin + d_ap - d_an;
    if (hinge <= 0.0) continue;
    out.loss += hinge * inv_valid;
    out.active_anchors += 1;
    // Subgradient through the selected pair; distances of zero contribute none.
    if (d_ap > 0.0) {
      const double s = inv_valid / d_ap;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = embeddings(t.anchor, k) - embeddings(t.positive, k);
        out.grad_embeddings(t.anchor, k) += s * diff;
        out.grad_embeddings(t.positive, k) -= s * diff;
      }
    }
    if (d_an > 0.0) {
      const double s = inv_valid / d_an;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = embeddings(t.anchor, k) - embeddings(t.negative, k);
        out.grad_embeddings(t.anchor, k) -= s * diff;
        out.grad_embeddings(t.negative, k) += s * diff;
      }
    }
  }
  return out;
}

LossGrad generator_adversarial_loss(Scheme scheme, const Matrix& probs,
                                    std::span<const int> camera_labels, double lambda) {
  if (scheme == Scheme::kNone) {
    throw ConfigError("generator_adversarial_loss: scheme NONE has no adversarial term");
  }
  if (lambda == 0.0) {
    return {0.0, Matrix(probs.rows(), probs.cols())};
  }
  switch (scheme) {
    case Scheme::kOce: {
      LossGrad g = oce_loss(probs, camera_labels);
      g.loss *= lambda;
      for (double& v : g.grad_logits.values()) v *= lambda;
      return g;
    }
    case Scheme::kAce: {
      LossGrad g = ace_loss(probs);
      g.loss *= lambda;
      for (double& v : g.grad_logits.values()) v *= lambda;
      return g;
    }
    case Scheme::kGrl: {
      // Maximize the discriminator loss: reverse its gradient.
      LossGrad ce = discriminator_loss(probs, camera_labels);
      LossGrad g;
      g.loss = -lambda * ce.loss;
      g.grad_logits = grl_backward(ce.grad_logits, lambda);
      return g;
    }
    case Scheme::kNone:
      throw ConfigError("generator_adversarial_loss: scheme NONE has no adversarial term");
  }
  throw ConfigError("generator_adversarial_loss: unknown scheme tag");
}

}  // namespace acan
