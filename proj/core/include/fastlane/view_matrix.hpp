#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fastlane/tensor.hpp"

namespace fastlane {

// Token-level embeddings of one query or document: one row per view, row 0
// being the CLS view. Padding rows are zero and flagged invalid.
struct ViewMatrix {
  std::string owner_id;
  Tensor rows;                      // views x dims
  std::vector<std::uint8_t> valid;  // one flag per view

  static ViewMatrix from_rows(std::string owner_id, Tensor rows, std::vector<std::uint8_t> valid = {});

  std::size_t views() const noexcept { return rows.rank() == 2 ? rows.shape()[0] : 0; }
  std::size_t dims() const noexcept { return rows.rank() == 2 ? rows.shape()[1] : 0; }
  bool is_valid(std::size_t i) const noexcept { return valid[i] != 0; }
  std::size_t valid_count() const noexcept;
  std::vector<std::size_t> valid_indices() const;
  std::span<const double> view(std::size_t i) const { return rows.row(i); }

  // Throws DimensionError on shape/mask inconsistencies.
  void validate() const;
};

// Row 0.
std::span<const double> cls_view(const ViewMatrix& v);

// Copy of `v` restricted to the given rows (in order), all marked valid.
ViewMatrix restrict_views(const ViewMatrix& v, std::span<const std::size_t> rows);

// Embedding dump: <dir>/manifest.jsonl with one record per matrix
// ({"owner_id", "views", "dims", "offset"[, "mask"]}) and <dir>/embeddings.flt
// holding every row stacked into one [total_rows x dims] tensor.
void dump_embeddings(const std::string& dir, std::span<const ViewMatrix> matrices);

// Accepts the dump directory or the manifest path. Errors name the first bad
// record (0-based).
std::vector<ViewMatrix> ingest_embeddings(const std::string& path);

}  // namespace fastlane
