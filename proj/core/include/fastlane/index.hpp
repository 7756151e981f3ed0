#pragma once

// Multi-view vector index over every (doc_id, view_id) vector of a corpus.
// Search deduplicates by document, keeping the best view, which is the
// per-document max of late interaction evaluated at index level.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fastlane/router.hpp"
#include "fastlane/view_matrix.hpp"

namespace fastlane {

enum class IndexKind : std::uint8_t { flat = 0, ivf = 1 };

std::string to_string(IndexKind k);
IndexKind index_kind_from_string(const std::string& s);

struct IndexedView {
  std::string doc_id;
  std::uint32_t view_id = 0;
  std::vector<float> vector;
};

// Valid rows of each matrix, view_id = row index.
std::vector<IndexedView> views_from_matrices(std::span<const ViewMatrix> docs);

struct SearchHit {
  std::string doc_id;
  double score = 0.0;
  std::uint32_t view_id = 0;  // contributing document view
};

struct SearchResult {
  std::vector<SearchHit> hits;  // score desc, doc_id asc on ties
  std::size_t probes_done = 0;
  std::size_t vectors_scanned = 0;  // inner products computed, centroids included
};

struct KMeansOptions {
  std::size_t k = 64;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 50;
  double tolerance = 1e-6;  // max centroid movement
};

class MultiViewIndex {
 public:
  virtual ~MultiViewIndex() = default;

  virtual IndexKind kind() const noexcept = 0;
  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return count_; }
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  std::size_t list_count() const noexcept { return lists_.size(); }
  std::size_t list_size(std::size_t list) const { return lists_.at(list).docs.size(); }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  // (doc_id, view_id) pairs stored in one posting list.
  std::vector<std::pair<std::string, std::uint32_t>> list_members(std::size_t list) const;

  // Single-vector search; `nprobe` is ignored by the flat index and clamped
  // to the list count by IVF.
  SearchResult search(std::span<const double> query, std::size_t top_k, std::size_t nprobe) const;
  // One search per valid query view, per-document sums of per-view maxima.
  SearchResult search_sum_max(const ViewMatrix& q, std::size_t top_k, std::size_t nprobe) const;
  // One search per valid query view, per-document max of per-view maxima.
  SearchResult search_max_max(const ViewMatrix& q, std::size_t top_k, std::size_t nprobe) const;
  // Exactly one search with the routed view.
  SearchResult search_routed(const ViewMatrix& q, const RoutingOutput& r, std::size_t top_k, std::size_t nprobe) const;

  void save(const std::string& path) const;

 protected:
  struct PostingList {
    std::vector<std::uint32_t> docs;   // document ordinals
    std::vector<std::uint32_t> views;  // view ids
    std::vector<float> vectors;        // row-major, dims per entry
  };
  struct Scratch;

  MultiViewIndex() = default;
  // Fills doc table + ordinals; validates uniqueness and dims.
  void init_docs(const std::vector<IndexedView>& views);
  std::uint32_t ordinal(const std::string& doc_id) const;

  // Lists to scan for `query`; adds centroid comparisons to `scanned`.
  virtual std::vector<std::size_t> select_lists(std::span<const double> query, std::size_t nprobe,
                                                std::size_t& scanned) const = 0;
  virtual void write_centroids(std::ostream& out) const = 0;
  virtual std::size_t centroid_count() const noexcept = 0;

  // Per-document max over the probed lists.
  void scan(std::span<const double> query, std::size_t nprobe, Scratch& s, SearchResult& acc) const;
  void check_query(std::span<const double> query, std::size_t top_k) const;
  SearchResult top_hits(Scratch& s, std::span<const double> totals, std::size_t top_k, SearchResult acc) const;

  static void read_payload(std::istream& in, std::size_t lists, std::size_t dims, std::size_t count,
                           MultiViewIndex& into);

  std::size_t dims_ = 0;
  std::size_t count_ = 0;
  std::vector<std::string> doc_ids_;  // sorted ascending; index = ordinal
  std::vector<PostingList> lists_;
};

class FlatIndex final : public MultiViewIndex {
 public:
  static FlatIndex build(const std::vector<IndexedView>& views);
  static FlatIndex load(const std::string& path);
  IndexKind kind() const noexcept override { return IndexKind::flat; }

 private:
  std::vector<std::size_t> select_lists(std::span<const double>, std::size_t, std::size_t&) const override;
  void write_centroids(std::ostream&) const override {}
  std::size_t centroid_count() const noexcept override { return 0; }
  friend std::unique_ptr<MultiViewIndex> load_index(const std::string&);
};

class IvfIndex final : public MultiViewIndex {
 public:
  static IvfIndex build(const std::vector<IndexedView>& views, const KMeansOptions& opts);
  static IvfIndex load(const std::string& path);
  IndexKind kind() const noexcept override { return IndexKind::ivf; }

  std::size_t k() const noexcept { return centroids_.size() / std::max<std::size_t>(dims_, 1); }
  std::span<const float> centroid(std::size_t c) const {
    return std::span<const float>(centroids_).subspan(c * dims_, dims_);
  }
  std::size_t kmeans_iterations() const noexcept { return iterations_; }

 private:
  std::vector<std::size_t> select_lists(std::span<const double> query, std::size_t nprobe,
                                        std::size_t& scanned) const override;
  void write_centroids(std::ostream& out) const override;
  std::size_t centroid_count() const noexcept override { return k(); }
  friend std::unique_ptr<MultiViewIndex> load_index(const std::string&);

  std::vector<float> centroids_;  // K x dims
  std::size_t iterations_ = 0;
};

// Index file: magic "FLIX", version u32, kind u8, dims/count/K as u64, the
// K x dims f32 centroid block, then one posting-list block per list (one for
// flat): u64 entry count, then per entry a length-prefixed UTF-8 doc_id,
// view_id u32 and the f32 vector.
std::unique_ptr<MultiViewIndex> load_index(const std::string& path);

struct KMeansResult {
  std::vector<double> centroids;  // k x dims
  std::vector<std::uint32_t> assignment;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding over `n` row-major f32 vectors.
KMeansResult kmeans(std::span<const float> data, std::size_t n, std::size_t dims, const KMeansOptions& opts);

}  // namespace fastlane
