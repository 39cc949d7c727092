#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "acan/data.hpp"
#include "acan/matrix.hpp"
#include "acan/network.hpp"

namespace acan {

inline constexpr const char* kCrossCameraProtocol = "cross-camera-single-query";

// One query's ranked gallery after protocol filtering.
struct QueryRanking {
  std::size_t query = 0;              // row in the query embedding matrix
  std::vector<std::size_t> order;     // gallery rows, ascending distance
  std::vector<double> distances;      // parallel to order, non-decreasing
  std::vector<bool> relevant;         // parallel to order
  std::size_t num_relevant = 0;
};

struct RankingResult {
  std::vector<QueryRanking> rankings;   // queries that kept >= 1 relevant entry
  std::size_t excluded_queries = 0;     // queries with no relevant entry left
  std::string protocol_tag = kCrossCameraProtocol;
};

// Cross-camera single-query protocol: gallery entries sharing the query's
// identity AND camera are removed before ranking; remaining same-identity
// entries are the relevant set. Ties break toward the lower gallery index.
RankingResult rank_queries(const Matrix& query_embeddings, const Matrix& gallery_embeddings,
                           std::span<const int> query_identities,
                           std::span<const int> query_cameras,
                           std::span<const int> gallery_identities,
                           std::span<const int> gallery_cameras);

struct CmcMapResult {
  std::vector<double> cmc;  // cmc[r-1] = fraction of queries with a hit in top r
  double map = 0.0;
};

// CMC at ranks 1..max_rank and mAP; AP per query is the mean over its relevant
// positions k of (relevant entries in top k) / k. Throws on an empty result.
CmcMapResult cmc_map(const RankingResult& rr, std::size_t max_rank);

// (1/C) * sum_c || mean(camera c) - mean(all) ||_2
double inter_camera_discrepancy(const Matrix& embeddings, std::span<const int> cameras,
                                int num_cameras);

enum class EvalSplit { kTest, kTrain };  // kTest = query + gallery samples

// Row c = mean discriminator probability vector over samples of camera c.
Matrix camera_confusion(const Network& net, const Dataset& ds,
                        EvalSplit split = EvalSplit::kTest);

// Mean L1 distance between each row's off-diagonal entries (renormalized to
// sum 1) and the uniform distribution over the C-1 other cameras. 0 means the
// discriminator confuses every camera evenly.
double offdiag_uniformity(const Matrix& confusion);

// CSV `camera,identity,split,e0..e{d-1}` of extractor outputs for all samples.
void export_embeddings(const Network& net, const Dataset& ds,
                       const std::filesystem::path& path);

struct EvalReport {
  std::string protocol_tag;
  std::size_t num_queries = 0;  // queries that entered the metrics
  std::size_t excluded_queries = 0;
  double map = 0.0;
  std::vector<double> cmc;
  double d_inter_camera = 0.0;
  std::string d_inter_split;  // which samples fed d_inter and the confusion
  Matrix confusion;           // C x C, row-stochastic
};

struct EvalOptions {
  std::size_t max_rank = 20;
  EvalSplit discrepancy_split = EvalSplit::kTest;
};

// Full evaluation of a trained network on a dataset's query/gallery splits.
EvalReport evaluate(const Network& net, const Dataset& ds, const EvalOptions& options = {});

void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

}  // namespace acan
