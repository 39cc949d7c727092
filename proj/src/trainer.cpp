#include "acan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "acan/errors.hpp"
#include "acan/losses.hpp"

namespace acan {

namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "acan-checkpoint-v1";

}  // namespace

void TrainConfig::validate(const Dataset& ds) const {
  if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
  if (margin <= 0.0) throw ConfigError("train: margin must be positive");
  if (persons < 2 || images_per_person < 2) {
    throw ConfigError("train: persons and images_per_person must be >= 2");
  }
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("train: lr_decay_factor must be positive");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] >= epochs || lr_decay_epochs[i] < 0) {
      throw ConfigError("train: decay epoch " + std::to_string(lr_decay_epochs[i]) +
                        " outside [0, " + std::to_string(epochs) + ")");
    }
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      throw ConfigError("train: decay epochs must be strictly increasing");
    }
  }
  if (embedding_dim == 0) throw ConfigError("train: embedding_dim must be positive");
  for (int c = 0; c < ds.num_cameras(); ++c) {
    if (static_cast<int>(ds.train_identities(c).size()) < persons) {
      throw ConfigError("train: camera " + std::to_string(c) + " has " +
                        std::to_string(ds.train_identities(c).size()) +
                        " identities, need persons=" + std::to_string(persons));
    }
  }
  const int quota = adversarial_batch_base / ds.num_cameras();
  if (scheme != Scheme::kNone) {
    if (quota < 1) {
      throw ConfigError("train: adversarial_batch_base " +
                        std::to_string(adversarial_batch_base) + " gives zero per-camera quota");
    }
    for (int c = 0; c < ds.num_cameras(); ++c) {
      if (static_cast<int>(ds.train_indices(c).size()) < quota) {
        throw ConfigError("train: camera " + std::to_string(c) +
                          " too small for adversarial quota " + std::to_string(quota));
      }
    }
  }
}

std::string log_entry_to_json_line(const TrainLogEntry& entry) {
  json j;
  j["epoch"] = entry.epoch;
  j["iteration"] = entry.iteration;
  j["triplet_loss"] = entry.triplet_loss;
  if (entry.discriminator_loss) j["discriminator_loss"] = *entry.discriminator_loss;
  if (entry.adversarial_loss) j["adversarial_loss"] = *entry.adversarial_loss;
  j["learning_rate"] = entry.learning_rate;
  j["active_anchor_fraction"] = entry.active_anchor_fraction;
  return j.dump();
}

Trainer::Trainer(const Dataset& ds, TrainConfig cfg)
    : ds_(ds),
      cfg_(std::move(cfg)),
      net_(make_network(ds.input_dim(), cfg_.hidden_widths, cfg_.embedding_dim,
                        ds.num_cameras(), cfg_.seed, cfg_.scheme)),
      rng_pk_(derive_stream_seed(cfg_.seed, "pk")),
      rng_adv_(derive_stream_seed(cfg_.seed, "adv")) {
  cfg_.validate(ds_);
  const auto n = ds_.train_indices().size();
  const auto batch = static_cast<std::size_t>(cfg_.persons) * cfg_.images_per_person;
  iterations_per_epoch_ = static_cast<int>((n + batch - 1) / batch);
}

Trainer::Trainer(const Dataset& ds, TrainConfig cfg, const std::filesystem::path& checkpoint_path)
    : Trainer(ds, std::move(cfg)) {
  std::ifstream is(checkpoint_path);
  if (!is) throw IoError("checkpoint: cannot open " + checkpoint_path.string());
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw IoError("checkpoint: " + checkpoint_path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kCheckpointFormat) {
    throw IoError("checkpoint: " + checkpoint_path.string() + ": unknown or missing format tag");
  }
  try {
    net_ = model_from_json_string(doc.at("model").dump(), checkpoint_path.string());
    rng_pk_.set_state(doc.at("rng_pk").get<std::string>());
    rng_adv_.set_state(doc.at("rng_adv").get<std::string>());
    epoch_ = doc.at("epochs_completed").get<int>();
  } catch (const json::exception& e) {
    throw IoError("checkpoint: " + checkpoint_path.string() + ": " + e.what());
  }
  if (net_.input_dim != static_cast<std::size_t>(ds_.input_dim()) ||
      net_.num_cameras != static_cast<std::size_t>(ds_.num_cameras())) {
    throw ConfigError("checkpoint: model dimensions do not match the dataset");
  }
}

double Trainer::current_learning_rate() const {
  double lr = cfg_.learning_rate;
  for (int d : cfg_.lr_decay_epochs) {
    if (epoch_ >= d) lr *= cfg_.lr_decay_factor;
  }
  return lr;
}

void Trainer::run() { run_epochs(cfg_.epochs - epoch_); }

void Trainer::run_epochs(int n) {
  std::ofstream log_stream;
  if (cfg_.log_path) {
    log_stream.open(*cfg_.log_path, std::ios::app);
    if (!log_stream) throw IoError("train: cannot open log " + cfg_.log_path->string());
  }
  const std::size_t log_start = log_.size();
  for (int e = 0; e < n && epoch_ < cfg_.epochs; ++e) {
    run_one_epoch();
    if (cfg_.log_path) {
      for (std::size_t i = log_start + static_cast<std::size_t>(e) * iterations_per_epoch_;
           i < log_.size(); ++i) {
        log_stream << log_entry_to_json_line(log_[i]) << "\n";
      }
      log_stream.flush();
    }
  }
}

void Trainer::run_one_epoch() {
  const double lr = current_learning_rate();
  const bool adversarial = cfg_.scheme != Scheme::kNone;
  const int C = ds_.num_cameras();

  for (int it = 0; it < iterations_per_epoch_; ++it) {
    TrainLogEntry entry;
    entry.epoch = epoch_;
    entry.iteration = it;
    entry.learning_rate = lr;

    // Discriminator step on a camera-balanced batch (Scheme NONE skips the
    // adversarial task entirely).
    CameraBalancedBatch adv_batch;
    Matrix adv_embeddings;
    ExtractorCache adv_cache;
    std::vector<int> adv_cams;
    if (adversarial) {
      adv_batch = sample_camera_balanced(ds_, cfg_.adversarial_batch_base, rng_adv_);
      adv_cams = camera_labels(ds_, adv_batch.indices);
      adv_embeddings = forward_extractor(ds_ptr_features(adv_batch), &adv_cache);
      const DiscriminatorOut d_out = forward_discriminator(net_, adv_embeddings);
      const LossGrad d_loss = discriminator_loss(d_out.probs, adv_cams);
      if (!std::isfinite(d_loss.loss)) {
        throw DivergenceError("discriminator loss non-finite", epoch_, it);
      }
      entry.discriminator_loss = d_loss.loss;
      LinearGrads d_grads;
      linear_backward(net_.discriminator, adv_embeddings, d_loss.grad_logits, d_grads);
      sgd_step(net_.discriminator, d_grads, lr);
    }

    // Extractor step: mean triplet loss over one PK batch per camera, plus the
    // adversarial term through the freshly updated discriminator.
    NetworkGrads f_grads = zero_grads(net_);
    double triplet_sum = 0.0;
    std::size_t valid_anchors = 0;
    std::size_t active_anchors = 0;
    const double camera_weight = 1.0 / static_cast<double>(C);
    for (int c = 0; c < C; ++c) {
      const PKBatch pk = sample_pk_batch(ds_, cfg_.persons, cfg_.images_per_person, c, rng_pk_);
      const Matrix batch = feature_matrix(ds_, pk.indices);
      ExtractorCache cache;
      const Matrix embeddings = forward_extractor(net_, batch, &cache);
      const TripletResult tr =
          batch_hard_triplet(embeddings, identity_labels(ds_, pk.indices),
                             camera_labels(ds_, pk.indices), cfg_.margin);
      if (!std::isfinite(tr.loss)) {
        throw DivergenceError("triplet loss non-finite on camera " + std::to_string(c), epoch_,
                              it);
      }
      triplet_sum += tr.loss;
      valid_anchors += tr.triplets.size();
      active_anchors += tr.active_anchors;
      backward_extractor(net_, cache, scaled(tr.grad_embeddings, camera_weight), f_grads);
    }
    entry.triplet_loss = triplet_sum * camera_weight;
    entry.active_anchor_fraction =
        valid_anchors ? static_cast<double>(active_anchors) / static_cast<double>(valid_anchors)
                      : 0.0;

    if (adversarial && cfg_.lambda > 0.0) {
      const DiscriminatorOut d_out = forward_discriminator(net_, adv_embeddings);
      const LossGrad adv =
          generator_adversarial_loss(cfg_.scheme, d_out.probs, adv_cams, cfg_.lambda);
      if (!std::isfinite(adv.loss)) {
        throw DivergenceError("adversarial loss non-finite", epoch_, it);
      }
      entry.adversarial_loss = adv.loss;
      LinearGrads disc_sink;  // discriminator parameters are not updated here
      const Matrix grad_emb =
          linear_backward(net_.discriminator, adv_embeddings, adv.grad_logits, disc_sink);
      backward_extractor(net_, adv_cache, grad_emb, f_grads);
    } else if (adversarial) {
      entry.adversarial_loss = 0.0;
    }
    sgd_step_extractor(net_, f_grads, lr);
    log_.push_back(entry);
  }
  epoch_ += 1;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  json doc;
  doc["format"] = kCheckpointFormat;
  json model;
  model["format"] = "acan-model-v1";
  model["embedding_dim"] = net_.embedding_dim;
  model["num_cameras"] = net_.num_cameras;
  model["seed"] = net_.seed;
  model["scheme"] = to_string(net_.scheme);
  model["layers"] = json::array();
  for (const auto& layer : net_.extractor) model["layers"].push_back(layer_to_json(layer));
  model["discriminator"] = layer_to_json(net_.discriminator);
  doc["model"] = std::move(model);
  doc["rng_pk"] = rng_pk_.state();
  doc["rng_adv"] = rng_adv_.state();
  doc["epochs_completed"] = epoch_;
  std::ofstream os(path);
  if (!os) throw IoError("checkpoint: cannot open " + path.string());
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

std::pair<Network, std::vector<TrainLogEntry>> train(const Dataset& ds, const TrainConfig& cfg) {
  Trainer trainer(ds, cfg);
  trainer.run();
  return {trainer.network(), trainer.log()};
}

}  // namespace acan
