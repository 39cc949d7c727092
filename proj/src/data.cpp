#include "acan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "acan/errors.hpp"

namespace acan {

namespace {

using nlohmann::json;

// Internal geometry of the generator. Prototypes are drawn at a fixed scale;
// the camera mixing strength grows with the shift scale and vanishes with it,
// so shift 0 means untransformed cameras.
constexpr double kPrototypeScale = 1.5;
constexpr double kMixMax = 0.75;
constexpr double kMixSoftness = 2.0;

double mixing_strength(double shift_scale) {
  return kMixMax * shift_scale / (shift_scale + kMixSoftness);
}

std::vector<double> random_unit_vector(int dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm_sq += x * x;
    }
  } while (norm_sq < 1e-12);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

// Random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix.
Matrix random_orthogonal(int dim, Rng& rng) {
  Matrix q(dim, dim);
  for (double& v : q.values()) v = rng.normal();
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < dim; ++k) dot += q(i, k) * q(j, k);
      for (int k = 0; k < dim; ++k) q(i, k) -= dot * q(j, k);
    }
    double norm_sq = 0.0;
    for (int k = 0; k < dim; ++k) norm_sq += q(i, k) * q(i, k);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (int k = 0; k < dim; ++k) q(i, k) *= inv;
  }
  return q;
}

struct CameraTransform {
  Matrix mix;                  // dim x dim
  std::vector<double> offset;  // dim

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(offset);
    for (std::size_t i = 0; i < out.size(); ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) acc += mix(i, k) * x[k];
      out[i] += acc;
    }
    return out;
  }
};

std::string double_to_string(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json synth_to_json(const SynthConfig& c) {
  return json{{"cameras", c.cameras},
              {"identities_per_camera", c.identities_per_camera},
              {"samples_per_identity", c.samples_per_identity},
              {"input_dim", c.input_dim},
              {"identity_spread", c.identity_spread},
              {"camera_shift_scale", c.camera_shift_scale},
              {"cross_camera_overlap", c.cross_camera_overlap},
              {"seed", c.seed}};
}

SynthConfig synth_from_json(const json& j) {
  SynthConfig c;
  c.cameras = j.at("cameras").get<int>();
  c.identities_per_camera = j.at("identities_per_camera").get<int>();
  c.samples_per_identity = j.at("samples_per_identity").get<int>();
  c.input_dim = j.at("input_dim").get<int>();
  c.identity_spread = j.at("identity_spread").get<double>();
  c.camera_shift_scale = j.at("camera_shift_scale").get<double>();
  c.cross_camera_overlap = j.at("cross_camera_overlap").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".meta.json");
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  throw ConfigError("to_string: unknown split");
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train|query|gallery)");
}

void SynthConfig::validate() const {
  if (cameras < 2) throw ConfigError("synth: cameras must be >= 2");
  if (identities_per_camera < 2) throw ConfigError("synth: identities_per_camera must be >= 2");
  if (samples_per_identity < 2) throw ConfigError("synth: samples_per_identity must be >= 2");
  if (input_dim < 2) throw ConfigError("synth: input_dim must be >= 2");
  if (cross_camera_overlap < 1) throw ConfigError("synth: cross_camera_overlap must be >= 1");
  if (!(identity_spread > 0.0)) throw ConfigError("synth: identity_spread must be positive");
  if (camera_shift_scale < 0.0) throw ConfigError("synth: camera_shift_scale must be >= 0");
}

Dataset Dataset::from_samples(std::vector<Sample> samples, int num_cameras, int input_dim,
                              Provenance provenance) {
  if (num_cameras < 2) throw ConfigError("dataset: num_cameras must be >= 2");
  if (samples.empty()) throw ConfigError("dataset: no samples");
  Dataset ds;
  ds.samples_ = std::move(samples);
  ds.num_cameras_ = num_cameras;
  ds.input_dim_ = input_dim;
  ds.provenance_ = std::move(provenance);
  ds.train_by_camera_.resize(num_cameras);
  ds.train_identities_.resize(num_cameras);
  ds.train_by_camera_identity_.resize(num_cameras);
  for (std::size_t i = 0; i < ds.samples_.size(); ++i) {
    const Sample& s = ds.samples_[i];
    if (s.camera_id < 0 || s.camera_id >= num_cameras) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " has camera_id " +
                        std::to_string(s.camera_id) + " outside [0, " +
                        std::to_string(num_cameras) + ")");
    }
    if (static_cast<int>(s.features.size()) != input_dim) {
      throw ConfigError("dataset: sample " + std::to_string(i) + " has " +
                        std::to_string(s.features.size()) + " features, expected " +
                        std::to_string(input_dim));
    }
    switch (s.split) {
      case Split::kTrain:
        ds.train_indices_.push_back(i);
        ds.train_by_camera_[s.camera_id].push_back(i);
        ds.train_by_camera_identity_[s.camera_id][s.identity].push_back(i);
        break;
      case Split::kQuery: ds.query_indices_.push_back(i); break;
      case Split::kGallery: ds.gallery_indices_.push_back(i); break;
    }
  }
  for (int c = 0; c < num_cameras; ++c) {
    const auto& by_id = ds.train_by_camera_identity_[c];
    if (by_id.size() < 2) {
      throw ConfigError("dataset: camera " + std::to_string(c) + " has " +
                        std::to_string(by_id.size()) +
                        " train identities, need >= 2 for triplet mining");
    }
    for (const auto& [id, idxs] : by_id) {
      if (idxs.size() < 2) {
        throw ConfigError("dataset: camera " + std::to_string(c) + " identity " +
                          std::to_string(id) + " has " + std::to_string(idxs.size()) +
                          " train samples, need >= 2");
      }
      ds.train_identities_[c].push_back(id);
    }
  }
  return ds;
}

const std::vector<std::size_t>& Dataset::train_indices(int camera) const {
  if (camera < 0 || camera >= num_cameras_) {
    throw ConfigError("train_indices: camera " + std::to_string(camera) + " out of range");
  }
  return train_by_camera_[camera];
}

const std::vector<int>& Dataset::train_identities(int camera) const {
  if (camera < 0 || camera >= num_cameras_) {
    throw ConfigError("train_identities: camera " + std::to_string(camera) + " out of range");
  }
  return train_identities_[camera];
}

const std::vector<std::size_t>& Dataset::train_samples_of(int camera, int identity) const {
  const auto& by_id = train_by_camera_identity_.at(camera);
  const auto it = by_id.find(identity);
  if (it == by_id.end()) {
    throw ConfigError("train_samples_of: no identity " + std::to_string(identity) +
                      " in camera " + std::to_string(camera));
  }
  return it->second;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_stream_seed(cfg.seed, "synth"));
  const int d = cfg.input_dim;
  const double gamma = mixing_strength(cfg.camera_shift_scale);

  std::vector<CameraTransform> cams(cfg.cameras);
  for (auto& cam : cams) {
    cam.offset = random_unit_vector(d, rng);
    for (double& x : cam.offset) x *= cfg.camera_shift_scale;
    const Matrix q = random_orthogonal(d, rng);
    cam.mix = Matrix(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        cam.mix(i, j) = (1.0 - gamma) * (i == j ? 1.0 : 0.0) + gamma * q(i, j);
      }
    }
  }

  auto draw_prototype = [&] {
    std::vector<double> p(d);
    for (double& x : p) x = kPrototypeScale * rng.normal();
    return p;
  };
  std::vector<std::vector<std::vector<double>>> train_protos(cfg.cameras);
  for (int c = 0; c < cfg.cameras; ++c) {
    for (int i = 0; i < cfg.identities_per_camera; ++i) {
      train_protos[c].push_back(draw_prototype());
    }
  }
  std::vector<std::vector<double>> overlap_protos;
  for (int v = 0; v < cfg.cross_camera_overlap; ++v) overlap_protos.push_back(draw_prototype());

  auto render = [&](const std::vector<double>& proto, int camera) {
    std::vector<double> x(proto);
    for (double& e : x) e += cfg.identity_spread * rng.normal();
    return cams[camera].apply(x);
  };

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.cameras) * cfg.identities_per_camera *
                      cfg.samples_per_identity +
                  static_cast<std::size_t>(cfg.cross_camera_overlap) * cfg.cameras *
                      cfg.samples_per_identity);
  for (int c = 0; c < cfg.cameras; ++c) {
    for (int i = 0; i < cfg.identities_per_camera; ++i) {
      for (int s = 0; s < cfg.samples_per_identity; ++s) {
        samples.push_back({render(train_protos[c][i], c), c, i, Split::kTrain});
      }
    }
  }
  for (int v = 0; v < cfg.cross_camera_overlap; ++v) {
    for (int c = 0; c < cfg.cameras; ++c) {
      for (int s = 0; s < cfg.samples_per_identity; ++s) {
        samples.push_back({render(overlap_protos[v], c), c, v,
                           s == 0 ? Split::kQuery : Split::kGallery});
      }
    }
  }

  Provenance prov;
  prov.synth = cfg;
  prov.seed = cfg.seed;
  prov.generator_id = Rng::kGeneratorId;
  return Dataset::from_samples(std::move(samples), cfg.cameras, d, std::move(prov));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_csv: cannot open " + path.string());
  os << "camera,identity,split";
  for (int j = 0; j < ds.input_dim(); ++j) os << ",f" << j;
  os << "\n";
  for (const Sample& s : ds.samples()) {
    os << s.camera_id << "," << s.identity << "," << to_string(s.split);
    for (double v : s.features) os << "," << double_to_string(v);
    os << "\n";
  }
  if (!os) throw IoError("save_csv: write failed for " + path.string());

  json meta;
  meta["num_cameras"] = ds.num_cameras();
  meta["input_dim"] = ds.input_dim();
  meta["seed"] = ds.provenance().seed;
  meta["generator_id"] = ds.provenance().generator_id;
  if (ds.provenance().synth) {
    meta["synth"] = synth_to_json(*ds.provenance().synth);
  }
  std::ofstream ms(sidecar_path(path));
  if (!ms) throw IoError("save_csv: cannot open " + sidecar_path(path).string());
  ms << meta.dump(2) << "\n";
  if (!ms) throw IoError("save_csv: write failed for " + sidecar_path(path).string());
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

int parse_int(std::string_view s, std::size_t line, const char* what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoError(std::string("load_csv: malformed ") + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoError("load_csv: malformed float '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream ms(sidecar_path(path));
  if (!ms) throw IoError("load_csv: missing metadata sidecar " + sidecar_path(path).string());
  json meta;
  try {
    ms >> meta;
  } catch (const json::exception& e) {
    throw IoError("load_csv: bad metadata " + sidecar_path(path).string() + ": " + e.what());
  }
  Provenance prov;
  int num_cameras = 0;
  int input_dim = 0;
  try {
    num_cameras = meta.at("num_cameras").get<int>();
    input_dim = meta.at("input_dim").get<int>();
    prov.seed = meta.at("seed").get<std::uint64_t>();
    prov.generator_id = meta.at("generator_id").get<std::string>();
    if (meta.contains("synth")) prov.synth = synth_from_json(meta.at("synth"));
  } catch (const json::exception& e) {
    throw IoError("load_csv: bad metadata " + sidecar_path(path).string() + ": " + e.what());
  }
  prov.source_path = path.string();

  std::ifstream is(path);
  if (!is) throw IoError("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("load_csv: no samples in " + path.string());
  std::size_t line_no = 1;
  {
    const auto header = split_fields(line);
    if (header.size() != static_cast<std::size_t>(3 + input_dim) || header[0] != "camera" ||
        header[1] != "identity" || header[2] != "split") {
      throw IoError("load_csv: bad header, expected camera,identity,split,f0..f" +
                        std::to_string(input_dim - 1),
                    line_no);
    }
  }
  std::vector<Sample> samples;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(3 + input_dim)) {
      throw IoError("load_csv: row has " + std::to_string(fields.size() - 3) +
                        " features in a " + std::to_string(input_dim) + "-dim dataset",
                    line_no);
    }
    Sample s;
    s.camera_id = parse_int(fields[0], line_no, "camera");
    if (s.camera_id < 0 || s.camera_id >= num_cameras) {
      throw IoError("load_csv: camera_id " + std::to_string(s.camera_id) +
                        " outside declared [0, " + std::to_string(num_cameras) + ")",
                    line_no);
    }
    s.identity = parse_int(fields[1], line_no, "identity");
    try {
      s.split = split_from_string(fields[2]);
    } catch (const ConfigError& e) {
      throw IoError(std::string("load_csv: ") + e.what(), line_no);
    }
    s.features.reserve(input_dim);
    for (int j = 0; j < input_dim; ++j) s.features.push_back(parse_double(fields[3 + j], line_no));
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw IoError("load_csv: no samples in " + path.string());
  try {
    return Dataset::from_samples(std::move(samples), num_cameras, input_dim, std::move(prov));
  } catch (const ConfigError& e) {
    throw IoError("load_csv: " + path.string() + ": " + e.what());
  }
}

namespace {

// First `take` elements of a partial Fisher-Yates pass over a copy of `pool`.
template <typename T>
std::vector<T> choose_without_replacement(const std::vector<T>& pool, std::size_t take,
                                          Rng& rng) {
  std::vector<T> v = pool;
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(v[i], v[i + rng.below(v.size() - i)]);
  }
  v.resize(take);
  return v;
}

}  // namespace

PKBatch sample_pk_batch(const Dataset& ds, int persons, int images_per_person, int camera_id,
                        Rng& rng) {
  if (persons < 2 || images_per_person < 2) {
    throw ConfigError("sample_pk_batch: persons and images_per_person must be >= 2");
  }
  const auto& ids = ds.train_identities(camera_id);
  if (static_cast<int>(ids.size()) < persons) {
    throw ConfigError("sample_pk_batch: camera " + std::to_string(camera_id) + " has " +
                      std::to_string(ids.size()) + " identities, need " +
                      std::to_string(persons));
  }
  PKBatch batch;
  batch.camera_id = camera_id;
  batch.persons = persons;
  batch.images_per_person = images_per_person;
  const auto chosen = choose_without_replacement(ids, persons, rng);
  for (int id : chosen) {
    const auto& pool = ds.train_samples_of(camera_id, id);
    if (pool.size() >= static_cast<std::size_t>(images_per_person)) {
      const auto picks = choose_without_replacement(pool, images_per_person, rng);
      batch.indices.insert(batch.indices.end(), picks.begin(), picks.end());
    } else {
      batch.used_replacement = true;
      for (int k = 0; k < images_per_person; ++k) {
        batch.indices.push_back(pool[rng.below(pool.size())]);
      }
    }
  }
  return batch;
}

CameraBalancedBatch sample_camera_balanced(const Dataset& ds, int base, Rng& rng) {
  const int quota = base / ds.num_cameras();
  if (quota < 1) {
    throw ConfigError("sample_camera_balanced: base " + std::to_string(base) +
                      " gives zero quota for " + std::to_string(ds.num_cameras()) + " cameras");
  }
  CameraBalancedBatch batch;
  batch.per_camera = quota;
  for (int c = 0; c < ds.num_cameras(); ++c) {
    const auto& pool = ds.train_indices(c);
    if (pool.size() < static_cast<std::size_t>(quota)) {
      throw ConfigError("sample_camera_balanced: camera " + std::to_string(c) + " has " +
                        std::to_string(pool.size()) + " train samples, need " +
                        std::to_string(quota));
    }
    const auto picks = choose_without_replacement(pool, quota, rng);
    batch.indices.insert(batch.indices.end(), picks.begin(), picks.end());
  }
  return batch;
}

Matrix feature_matrix(const Dataset& ds, std::span<const std::size_t> indices) {
  Matrix m(indices.size(), ds.input_dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = ds.samples()[indices[r]].features;
    std::copy(f.begin(), f.end(), m.values().begin() + r * ds.input_dim());
  }
  return m;
}

std::vector<int> camera_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) out[r] = ds.samples()[indices[r]].camera_id;
  return out;
}

std::vector<int> identity_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) out[r] = ds.samples()[indices[r]].identity;
  return out;
}

}  // namespace acan
