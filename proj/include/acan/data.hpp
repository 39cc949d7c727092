#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acan/matrix.hpp"
#include "acan/rng.hpp"

namespace acan {

enum class Split { kTrain, kQuery, kGallery };

std::string to_string(Split s);
Split split_from_string(std::string_view s);

// One feature vector with its (camera, identity) label pair. Identity values
// are camera-local in the train split; in the query/gallery splits the same
// identity value across cameras marks the same person (the retrieval ground
// truth).
struct Sample {
  std::vector<double> features;
  int camera_id = 0;
  int identity = 0;
  Split split = Split::kTrain;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct SynthConfig {
  int cameras = 4;
  int identities_per_camera = 32;
  int samples_per_identity = 8;
  int input_dim = 16;
  double identity_spread = 0.5;     // within-identity noise sigma
  double camera_shift_scale = 3.0;  // norm of the per-camera translation
  int cross_camera_overlap = 16;    // eval identities rendered in every camera
  std::uint64_t seed = 7;

  void validate() const;  // throws ConfigError

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Provenance {
  std::optional<SynthConfig> synth;
  std::optional<std::string> source_path;
  std::uint64_t seed = 0;
  std::string generator_id;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// Immutable after construction; construction validates the schema invariants
// (camera range, constant feature length, and per-camera train structure:
// at least 2 identities per camera, at least 2 samples per train identity).
class Dataset {
public:
  static Dataset from_samples(std::vector<Sample> samples, int num_cameras, int input_dim,
                              Provenance provenance);

  const std::vector<Sample>& samples() const { return samples_; }
  int num_cameras() const { return num_cameras_; }
  int input_dim() const { return input_dim_; }
  const Provenance& provenance() const { return provenance_; }

  const std::vector<std::size_t>& train_indices() const { return train_indices_; }
  const std::vector<std::size_t>& query_indices() const { return query_indices_; }
  const std::vector<std::size_t>& gallery_indices() const { return gallery_indices_; }
  const std::vector<std::size_t>& train_indices(int camera) const;
  // Sorted camera-local identity values present in the camera's train split.
  const std::vector<int>& train_identities(int camera) const;
  const std::vector<std::size_t>& train_samples_of(int camera, int identity) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.samples_ == b.samples_ && a.num_cameras_ == b.num_cameras_ &&
           a.input_dim_ == b.input_dim_;
  }

private:
  Dataset() = default;

  std::vector<Sample> samples_;
  int num_cameras_ = 0;
  int input_dim_ = 0;
  Provenance provenance_;

  std::vector<std::size_t> train_indices_, query_indices_, gallery_indices_;
  std::vector<std::vector<std::size_t>> train_by_camera_;
  std::vector<std::vector<int>> train_identities_;
  std::vector<std::map<int, std::vector<std::size_t>>> train_by_camera_identity_;
};

// Clustered multi-camera data: each identity is a latent prototype; a sample
// is the prototype plus Gaussian noise pushed through its camera's affine
// transform (a rotation blended toward the identity matrix, plus a translation
// of norm camera_shift_scale). Train identities are private to their camera;
// the overlap identities are rendered in every camera and split into
// query/gallery (first sample per camera is the query). Deterministic in seed.
Dataset generate_synthetic(const SynthConfig& cfg);

// CSV schema: header `camera,identity,split,f0,...,f{d-1}`, one sample per
// row, floats in shortest round-trip form. A JSON sidecar at <path>.meta.json
// carries {num_cameras, input_dim, seed, generator_id, synth?}.
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

struct PKBatch {
  std::vector<std::size_t> indices;  // P*K dataset indices, one camera
  int camera_id = 0;
  int persons = 0;
  int images_per_person = 0;
  bool used_replacement = false;  // some identity had fewer than K samples
};

// P identities drawn uniformly without replacement from one camera's train
// split; K samples per identity (without replacement when the identity has at
// least K).
PKBatch sample_pk_batch(const Dataset& ds, int persons, int images_per_person, int camera_id,
                        Rng& rng);

struct CameraBalancedBatch {
  std::vector<std::size_t> indices;  // grouped by camera, floor(base/C) each
  int per_camera = 0;
};

CameraBalancedBatch sample_camera_balanced(const Dataset& ds, int base, Rng& rng);

// Gathers rows into a feature matrix / label vectors.
Matrix feature_matrix(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> camera_labels(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> identity_labels(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace acan
