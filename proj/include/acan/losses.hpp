#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "acan/matrix.hpp"
#include "acan/scheme.hpp"

namespace acan {

// Floor for log arguments. The camera objectives actively push probabilities
// toward structured values (including zeros), so logs are clamped to stay
// finite without materially moving the optima.
inline constexpr double kLogEps = 1e-12;

struct LossGrad {
  double loss = 0.0;
  Matrix grad_logits;  // gradient of the batch-mean loss wrt logits
};

// Mean cross-entropy of the camera discriminator: -log probs[i, z_i] averaged
// over the batch. Gradient is the softmax-CE gradient (probs - onehot) / N.
LossGrad discriminator_loss(const Matrix& probs, std::span<const int> camera_labels);

// Gradient reversal: forward is the identity, backward flips sign and scales.
Matrix grl_forward(const Matrix& x);
Matrix grl_backward(const Matrix& upstream_grad, double lambda);

// Other-camera equiprobability: per sample -(1/(C-1)) * sum_{i != z} log p_i,
// averaged over the batch. Requires C >= 2.
LossGrad oce_loss(const Matrix& probs, std::span<const int> camera_labels);

// All-camera equiprobability: per sample -(1/C) * sum_i log p_i, batch mean.
LossGrad ace_loss(const Matrix& probs);

// N x N Euclidean distances; squared form clamped at zero before the sqrt.
Matrix pairwise_distances(const Matrix& embeddings);

struct MinedTriplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  bool active = false;  // hinge > 0, i.e. the anchor contributes gradient
};

// Hardest positive / hardest negative per anchor from a precomputed distance
// matrix, candidates restricted to the anchor's own camera. Ties resolve to
// the lowest index. Anchors without a positive or negative are omitted.
std::vector<MinedTriplet> mine_hard_triplets(const Matrix& distances,
                                             std::span<const int> identity_labels,
                                             std::span<const int> camera_labels, double margin);

struct TripletResult {
  double loss = 0.0;
  Matrix grad_embeddings;
  std::vector<MinedTriplet> triplets;   // one per valid anchor
  std::size_t skipped_anchors = 0;      // anchors lacking a positive or negative
  std::size_t active_anchors = 0;
};

// Batch-hard triplet loss with within-camera mining: per anchor
// [margin + max_p d(a,p) - min_n d(a,n)]_+, averaged over valid anchors.
// Gradient flows only through the selected pair of each active anchor.
// Throws ConfigError when no anchor in the batch is valid.
TripletResult batch_hard_triplet(const Matrix& embeddings, std::span<const int> identity_labels,
                                 std::span<const int> camera_labels, double margin);

// Generator-side objective of the chosen adversarial scheme, scaled by lambda.
// GRL returns the reversed discriminator-loss gradient (grl_backward applied to
// the cross-entropy gradient); OCE/ACE return their own loss gradients.
// scheme must not be kNone.
LossGrad generator_adversarial_loss(Scheme scheme, const Matrix& probs,
                                    std::span<const int> camera_labels, double lambda);

}  // namespace acan
