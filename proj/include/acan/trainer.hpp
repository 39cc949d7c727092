#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "acan/data.hpp"
#include "acan/network.hpp"
#include "acan/scheme.hpp"

namespace acan {

struct TrainConfig {
  Scheme scheme = Scheme::kNone;
  double lambda = 1.0;
  double margin = 0.3;
  int persons = 32;           // P
  int images_per_person = 4;  // K
  int adversarial_batch_base = 64;
  int epochs = 300;
  double learning_rate = 0.01;
  std::vector<int> lr_decay_epochs = {100, 200};
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_widths = {64, 64};
  std::size_t embedding_dim = 128;
  std::optional<std::filesystem::path> log_path;  // JSONL stream, one entry per line

  // Throws ConfigError when values are invalid or infeasible for the dataset.
  void validate(const Dataset& ds) const;
};

struct TrainLogEntry {
  int epoch = 0;
  int iteration = 0;
  double triplet_loss = 0.0;
  std::optional<double> discriminator_loss;  // absent when scheme is NONE
  std::optional<double> adversarial_loss;    // absent when scheme is NONE
  double learning_rate = 0.0;
  double active_anchor_fraction = 0.0;  // anchors with a live hinge / valid anchors
};

std::string log_entry_to_json_line(const TrainLogEntry& entry);

// One iteration = one discriminator SGD step on a camera-balanced batch
// (cross-entropy over camera labels), then one extractor SGD step on the sum
// of the per-camera triplet losses (one PK batch per camera, averaged) and the
// lambda-weighted adversarial term evaluated on the same camera-balanced
// batch. Scheme NONE runs the triplet term only and never touches the
// discriminator. Batch sampling uses two independent seed-derived streams
// ("pk" and "adv"), so schemes that skip the adversarial batch still see the
// same PK draws. Learning rate is multiplied by lr_decay_factor at the start
// of each epoch listed in lr_decay_epochs (0-based).
class Trainer {
public:
  Trainer(const Dataset& ds, TrainConfig cfg);

  // Resumes from a checkpoint written by save_checkpoint; the dataset and
  // config must match the original run for the continuation to reproduce it.
  Trainer(const Dataset& ds, TrainConfig cfg, const std::filesystem::path& checkpoint_path);

  // Trains through the remaining epochs (or `n` of them). Throws
  // DivergenceError with the offending iteration when any loss is non-finite.
  void run();
  void run_epochs(int n);

  const Network& network() const { return net_; }
  const std::vector<TrainLogEntry>& log() const { return log_; }
  int epochs_completed() const { return epoch_; }
  int iterations_per_epoch() const { return iterations_per_epoch_; }
  double current_learning_rate() const;

  // Model JSON plus both RNG stream states and the epoch counter. Writing the
  // same state twice produces byte-identical files.
  void save_checkpoint(const std::filesystem::path& path) const;

private:
  void run_one_epoch();

  const Dataset& ds_;
  TrainConfig cfg_;
  Network net_;
  Rng rng_pk_;
  Rng rng_adv_;
  int epoch_ = 0;
  int iterations_per_epoch_ = 0;
  std::vector<TrainLogEntry> log_;
};

// Convenience wrapper: train to completion on a fresh network.
std::pair<Network, std::vector<TrainLogEntry>> train(const Dataset& ds, const TrainConfig& cfg);

}  // namespace acan
