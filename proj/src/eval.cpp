#include "acan/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "acan/errors.hpp"

namespace acan {

namespace {

using nlohmann::json;

double euclidean(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::string double_to_string(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> split_sample_indices(const Dataset& ds, EvalSplit split) {
  std::vector<std::size_t> idx;
  if (split == EvalSplit::kTrain) {
    idx = ds.train_indices();
  } else {
    idx = ds.query_indices();
    idx.insert(idx.end(), ds.gallery_indices().begin(), ds.gallery_indices().end());
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

RankingResult rank_queries(const Matrix& query_embeddings, const Matrix& gallery_embeddings,
                           std::span<const int> query_identities,
                           std::span<const int> query_cameras,
                           std::span<const int> gallery_identities,
                           std::span<const int> gallery_cameras) {
  const std::size_t nq = query_embeddings.rows();
  const std::size_t ng = gallery_embeddings.rows();
  if (query_identities.size() != nq || query_cameras.size() != nq ||
      gallery_identities.size() != ng || gallery_cameras.size() != ng) {
    throw DimensionError("rank_queries: label lengths do not match embedding rows");
  }
  if (query_embeddings.cols() != gallery_embeddings.cols()) {
    throw DimensionError("rank_queries: query dim " + shape_string(query_embeddings) +
                         " vs gallery dim " + shape_string(gallery_embeddings));
  }
  RankingResult rr;
  for (std::size_t q = 0; q < nq; ++q) {
    QueryRanking qr;
    qr.query = q;
    std::vector<std::pair<double, std::size_t>> entries;
    entries.reserve(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      const bool same_identity = gallery_identities[g] == query_identities[q];
      // Standard cross-camera exclusion: the query's own-camera captures of the
      // same identity never count, as hits or as distractors.
      if (same_identity && gallery_cameras[g] == query_cameras[q]) continue;
      entries.emplace_back(euclidean(query_embeddings.row(q), gallery_embeddings.row(g)), g);
    }
    std::sort(entries.begin(), entries.end());
    for (const auto& [dist, g] : entries) {
      const bool rel = gallery_identities[g] == query_identities[q];
      qr.order.push_back(g);
      qr.distances.push_back(dist);
      qr.relevant.push_back(rel);
      qr.num_relevant += rel ? 1 : 0;
    }
    if (qr.num_relevant == 0) {
      rr.excluded_queries += 1;
      continue;
    }
    rr.rankings.push_back(std::move(qr));
  }
  return rr;
}

CmcMapResult cmc_map(const RankingResult& rr, std::size_t max_rank) {
  if (rr.rankings.empty()) throw ConfigError("cmc_map: no queries with relevant entries");
  if (max_rank == 0) throw ConfigError("cmc_map: max_rank must be positive");
  CmcMapResult out;
  out.cmc.assign(max_rank, 0.0);
  double ap_sum = 0.0;
  for (const QueryRanking& qr : rr.rankings) {
    std::size_t first_hit = max_rank;  // 0-based position of the first relevant
    std::size_t seen_relevant = 0;
    double ap = 0.0;
    for (std::size_t pos = 0; pos < qr.order.size(); ++pos) {
      if (!qr.relevant[pos]) continue;
      if (seen_relevant == 0) first_hit = pos;
      seen_relevant += 1;
      ap += static_cast<double>(seen_relevant) / static_cast<double>(pos + 1);
    }
    ap_sum += ap / static_cast<double>(qr.num_relevant);
    for (std::size_t r = first_hit; r < max_rank; ++r) out.cmc[r] += 1.0;
  }
  const double nq = static_cast<double>(rr.rankings.size());
  for (double& v : out.cmc) v /= nq;
  out.map = ap_sum / nq;
  return out;
}

double inter_camera_discrepancy(const Matrix& embeddings, std::span<const int> cameras,
                                int num_cameras) {
  if (embeddings.rows() != cameras.size()) {
    throw DimensionError("inter_camera_discrepancy: " + std::to_string(cameras.size()) +
                         " labels for " + std::to_string(embeddings.rows()) + " rows");
  }
  const std::size_t dim = embeddings.cols();
  std::vector<std::vector<double>> camera_sums(num_cameras, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(num_cameras, 0);
  std::vector<double> global_sum(dim, 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const int c = cameras[i];
    if (c < 0 || c >= num_cameras) {
      throw DimensionError("inter_camera_discrepancy: camera label " + std::to_string(c) +
                           " out of range");
    }
    for (std::size_t k = 0; k < dim; ++k) {
      camera_sums[c][k] += embeddings(i, k);
      global_sum[k] += embeddings(i, k);
    }
    counts[c] += 1;
  }
  const double n = static_cast<double>(embeddings.rows());
  double total = 0.0;
  for (int c = 0; c < num_cameras; ++c) {
    if (counts[c] == 0) {
      throw ConfigError("inter_camera_discrepancy: camera " + std::to_string(c) +
                        " has no samples");
    }
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = camera_sums[c][k] / static_cast<double>(counts[c]) - global_sum[k] / n;
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(num_cameras);
}

Matrix camera_confusion(const Network& net, const Dataset& ds, EvalSplit split) {
  const auto idx = split_sample_indices(ds, split);
  if (idx.empty()) throw ConfigError("camera_confusion: selected split has no samples");
  const Matrix features = feature_matrix(ds, idx);
  const Matrix embeddings = forward_extractor(net, features);
  const Matrix probs = forward_discriminator(net, embeddings).probs;
  const int C = ds.num_cameras();
  Matrix confusion(C, C);
  std::vector<std::size_t> counts(C, 0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int c = ds.samples()[idx[i]].camera_id;
    for (int j = 0; j < C; ++j) confusion(c, j) += probs(i, j);
    counts[c] += 1;
  }
  for (int c = 0; c < C; ++c) {
    if (counts[c] == 0) {
      throw ConfigError("camera_confusion: camera " + std::to_string(c) +
                        " has no samples in the selected split");
    }
    for (int j = 0; j < C; ++j) confusion(c, j) /= static_cast<double>(counts[c]);
  }
  return confusion;
}

double offdiag_uniformity(const Matrix& confusion) {
  const std::size_t C = confusion.rows();
  if (confusion.cols() != C || C < 2) {
    throw DimensionError("offdiag_uniformity: need a square matrix with C >= 2, got " +
                         shape_string(confusion));
  }
  const double target = 1.0 / static_cast<double>(C - 1);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double off_sum = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      if (j != c) off_sum += confusion(c, j);
    }
    double l1 = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      if (j == c) continue;
      // A row that puts everything on the diagonal counts as maximally
      // non-uniform rather than dividing by zero.
      const double renorm = off_sum > 0.0 ? confusion(c, j) / off_sum : 0.0;
      l1 += std::abs(renorm - target);
    }
    total += l1;
  }
  return total / static_cast<double>(C);
}

void export_embeddings(const Network& net, const Dataset& ds,
                       const std::filesystem::path& path) {
  std::vector<std::size_t> all(ds.samples().size());
  std::iota(all.begin(), all.end(), 0);
  const Matrix embeddings = forward_extractor(net, feature_matrix(ds, all));
  std::ofstream os(path);
  if (!os) throw IoError("export_embeddings: cannot open " + path.string());
  os << "camera,identity,split";
  for (std::size_t j = 0; j < net.embedding_dim; ++j) os << ",e" << j;
  os << "\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Sample& s = ds.samples()[i];
    os << s.camera_id << "," << s.identity << "," << to_string(s.split);
    for (double v : embeddings.row(i)) os << "," << double_to_string(v);
    os << "\n";
  }
  if (!os) throw IoError("export_embeddings: write failed for " + path.string());
}

EvalReport evaluate(const Network& net, const Dataset& ds, const EvalOptions& options) {
  if (ds.query_indices().empty() || ds.gallery_indices().empty()) {
    throw ConfigError("evaluate: dataset has no query/gallery samples");
  }
  const Matrix query_emb =
      forward_extractor(net, feature_matrix(ds, ds.query_indices()));
  const Matrix gallery_emb =
      forward_extractor(net, feature_matrix(ds, ds.gallery_indices()));
  const auto q_ids = identity_labels(ds, ds.query_indices());
  const auto q_cams = camera_labels(ds, ds.query_indices());
  const auto g_ids = identity_labels(ds, ds.gallery_indices());
  const auto g_cams = camera_labels(ds, ds.gallery_indices());

  const RankingResult rr = rank_queries(query_emb, gallery_emb, q_ids, q_cams, g_ids, g_cams);
  const CmcMapResult cm = cmc_map(rr, options.max_rank);

  EvalReport report;
  report.protocol_tag = rr.protocol_tag;
  report.num_queries = rr.rankings.size();
  report.excluded_queries = rr.excluded_queries;
  report.map = cm.map;
  report.cmc = cm.cmc;

  const auto d_idx = split_sample_indices(ds, options.discrepancy_split);
  const Matrix d_emb = forward_extractor(net, feature_matrix(ds, d_idx));
  report.d_inter_camera =
      inter_camera_discrepancy(d_emb, camera_labels(ds, d_idx), ds.num_cameras());
  report.d_inter_split = options.discrepancy_split == EvalSplit::kTest ? "test" : "train";
  report.confusion = camera_confusion(net, ds, options.discrepancy_split);
  return report;
}

void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  json doc;
  doc["protocol"] = report.protocol_tag;
  doc["num_queries"] = report.num_queries;
  doc["excluded_queries"] = report.excluded_queries;
  doc["map"] = report.map;
  doc["cmc"] = report.cmc;
  doc["d_inter_camera"] = report.d_inter_camera;
  doc["d_inter_split"] = report.d_inter_split;
  doc["num_cameras"] = report.confusion.rows();
  doc["confusion"] = report.confusion.values();
  std::ofstream os(path);
  if (!os) throw IoError("save_eval_report: cannot open " + path.string());
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("save_eval_report: write failed for " + path.string());
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_eval_report: cannot open " + path.string());
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw IoError("load_eval_report: " + path.string() + ": " + e.what());
  }
  EvalReport report;
  try {
    report.protocol_tag = doc.at("protocol").get<std::string>();
    report.num_queries = doc.at("num_queries").get<std::size_t>();
    report.excluded_queries = doc.at("excluded_queries").get<std::size_t>();
    report.map = doc.at("map").get<double>();
    report.cmc = doc.at("cmc").get<std::vector<double>>();
    report.d_inter_camera = doc.at("d_inter_camera").get<double>();
    report.d_inter_split = doc.at("d_inter_split").get<std::string>();
    const auto C = doc.at("num_cameras").get<std::size_t>();
    report.confusion = Matrix(C, C);
    report.confusion.values() = doc.at("confusion").get<std::vector<double>>();
    if (report.confusion.values().size() != C * C) {
      throw IoError("load_eval_report: confusion length does not match num_cameras");
    }
  } catch (const json::exception& e) {
    throw IoError("load_eval_report: " + path.string() + ": " + e.what());
  }
  return report;
}

}  // namespace acan
