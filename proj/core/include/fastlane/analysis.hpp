#pragma once

// Token redundancy: cosine similarity between the views of one matrix and
// agglomerative clustering of those views.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fastlane/view_matrix.hpp"

namespace fastlane {

struct SimilarityMatrix {
  std::string owner_id;
  std::vector<std::size_t> views;     // source rows kept, in order
  std::vector<std::size_t> excluded;  // valid rows dropped for zero norm
  Tensor values;                      // views.size() squared; symmetric, unit diagonal
};

// Cosine similarity over the valid, non-zero rows.
SimilarityMatrix similarity_matrix(const ViewMatrix& v);

enum class Linkage { average, complete };
std::string to_string(Linkage l);
Linkage linkage_from_string(const std::string& s);

struct ClusterReport {
  double threshold = 0.95;
  Linkage linkage = Linkage::average;
  std::vector<std::size_t> assignment;  // cluster of each kept view; labels by first appearance
  std::size_t n_clusters = 0;
};

// Repeatedly merges the two clusters with the highest linkage similarity
// while it is >= threshold.
ClusterReport agglomerative_cluster(const SimilarityMatrix& sim, double threshold = 0.95,
                                    Linkage linkage = Linkage::average);

struct RedundancyRow {
  std::string owner_id;
  std::size_t n_clusters = 0;
  std::size_t views = 0;
};

struct RedundancyStats {
  std::vector<RedundancyRow> rows;
  double mean = 0.0;
  double median = 0.0;
  std::map<std::size_t, std::size_t> histogram;  // n_clusters -> matrices
};

RedundancyStats summarize(std::vector<RedundancyRow> rows);
RedundancyStats redundancy_report(std::span<const ViewMatrix> matrices, double threshold = 0.95,
                                  Linkage linkage = Linkage::average);

// `owner_id,n_clusters,views` with a header line.
void write_redundancy_csv(const std::string& path, const RedundancyStats& stats);
RedundancyStats read_redundancy_csv(const std::string& path);

}  // namespace fastlane
