#include "fastlane/view_matrix.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace fs = std::filesystem;
using nlohmann::json;

ViewMatrix ViewMatrix::from_rows(std::string owner_id, Tensor rows, std::vector<std::uint8_t> valid) {
  ViewMatrix v{std::move(owner_id), std::move(rows), std::move(valid)};
  if (v.valid.empty()) v.valid.assign(v.views(), 1);
  v.validate();
  return v;
}

std::size_t ViewMatrix::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto f) { return f != 0; }));
}

std::vector<std::size_t> ViewMatrix::valid_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(i);
  return out;
}

void ViewMatrix::validate() const {
  if (rows.rank() != 2) throw DimensionError("view matrix '" + owner_id + "' must be rank 2, got " + shape_to_string(rows.shape()));
  if (views() == 0) throw DimensionError("view matrix '" + owner_id + "' has no views");
  if (valid.size() != views()) {
    throw DimensionError("view matrix '" + owner_id + "': mask has " + std::to_string(valid.size()) + " entries for " +
                         std::to_string(views()) + " views");
  }
}

std::span<const double> cls_view(const ViewMatrix& v) {
  if (v.views() == 0) throw DimensionError("cls_view: empty view matrix");
  return v.view(0);
}

ViewMatrix restrict_views(const ViewMatrix& v, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), v.dims()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v.views()) throw DimensionError("restrict_views: row out of range");
    std::copy(v.view(rows[i]).begin(), v.view(rows[i]).end(), out.row(i).begin());
  }
  return ViewMatrix::from_rows(v.owner_id, std::move(out));
}

void dump_embeddings(const std::string& dir, std::span<const ViewMatrix> matrices) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw FormatError("cannot write manifest in " + dir);
  std::size_t dims = matrices.empty() ? 0 : matrices.front().dims();
  std::size_t total = 0;
  for (const auto& m : matrices) {
    m.validate();
    if (m.dims() != dims) throw DimensionError("dump_embeddings: mixed dims in one dump");
    json rec = {{"owner_id", m.owner_id}, {"views", m.views()}, {"dims", m.dims()}, {"offset", total}};
    if (m.valid_count() != m.views()) rec["mask"] = m.valid;
    manifest << rec.dump() << '\n';
    total += m.views();
  }
  if (matrices.empty()) return;
  std::ofstream payload(fs::path(dir) / "embeddings.flt", std::ios::binary);
  if (!payload) throw FormatError("cannot write payload in " + dir);
  io::write_magic(payload, "FLT1");
  io::write_u64(payload, 2);
  io::write_u64(payload, total);
  io::write_u64(payload, dims);
  for (const auto& m : matrices)
    for (double v : m.rows.data()) io::write_f64(payload, v);
}

std::vector<ViewMatrix> ingest_embeddings(const std::string& path) {
  fs::path manifest_path = path;
  if (fs::is_directory(manifest_path)) manifest_path /= "manifest.jsonl";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IngestError("cannot open manifest " + manifest_path.string());

  std::vector<json> records;
  std::string line;
  for (std::size_t lineno = 1; std::getline(manifest, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw IngestError("manifest record " + std::to_string(records.size()) + ": " + e.what());
    }
  }
  if (records.empty()) return {};

  const fs::path payload_path = manifest_path.parent_path() / "embeddings.flt";
  std::ifstream payload(payload_path, std::ios::binary);
  if (!payload) throw IngestError("cannot open payload " + payload_path.string());
  io::expect_magic(payload, "FLT1", payload_path.string());
  if (io::read_u64(payload) != 2) throw IngestError("payload must be a rank-2 tensor");
  const auto declared_rows = io::read_u64(payload);
  const auto dims = io::read_u64(payload);
  // Read whatever rows are actually present so a truncated payload is reported
  // against the first record that needs missing data.
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(declared_rows * dims));
  for (std::uint64_t i = 0; i < declared_rows * dims; ++i) {
    double v;
    try {
      v = io::read_f64(payload);
    } catch (const FormatError&) {
      break;
    }
    values.push_back(v);
  }
  const std::size_t available_rows = dims ? values.size() / dims : 0;

  std::vector<ViewMatrix> out;
  out.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    auto fail = [&](const std::string& why) {
      return IngestError("manifest record " + std::to_string(r) + " (owner '" + rec.value("owner_id", std::string("?")) +
                         "'): " + why);
    };
    if (!rec.contains("owner_id") || !rec.contains("views") || !rec.contains("dims") || !rec.contains("offset")) {
      throw fail("missing one of owner_id/views/dims/offset");
    }
    const auto views = rec["views"].get<std::size_t>();
    const auto rdims = rec["dims"].get<std::size_t>();
    const auto offset = rec["offset"].get<std::size_t>();
    if (rdims != dims) throw fail("dims " + std::to_string(rdims) + " != payload dims " + std::to_string(dims));
    if (views == 0) throw fail("zero views");
    if (offset + views > available_rows) {
      throw fail("rows [" + std::to_string(offset) + ", " + std::to_string(offset + views) + ") exceed the " +
                 std::to_string(available_rows) + " rows present in the payload");
    }
    std::vector<std::uint8_t> mask(views, 1);
    if (rec.contains("mask")) {
      mask = rec["mask"].get<std::vector<std::uint8_t>>();
      if (mask.size() != views) throw fail("mask length does not match views");
    }
    std::vector<double> data(values.begin() + static_cast<std::ptrdiff_t>(offset * dims),
                             values.begin() + static_cast<std::ptrdiff_t>((offset + views) * dims));
    out.push_back(ViewMatrix::from_rows(rec["owner_id"].get<std::string>(), Tensor({views, dims}, std::move(data)),
                                        std::move(mask)));
  }
  return out;
}

}  // namespace fastlane
