#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fastlane/errors.hpp"
#include "fastlane/tensor.hpp"
#include "fastlane/view_matrix.hpp"

using namespace fastlane;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fastlane_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 1.5);
}

TEST(Tensor, RoundTripIsBitExact) {
  Tensor t({3, 2}, {1.0, -0.0, 1e-300, 3.25, -7.5, 0.1});
  std::stringstream ss;
  write_tensor(ss, t);
  EXPECT_EQ(read_tensor(ss), t);
}

TEST(Tensor, BadMagicIsFormatError) {
  std::stringstream ss("XXXX0000");
  EXPECT_THROW(read_tensor(ss), FormatError);
}

TEST(Tensor, TruncatedPayloadIsFormatError) {
  std::stringstream ss;
  write_tensor(ss, Tensor({4, 4}, 2.0));
  auto s = ss.str();
  std::stringstream cut(s.substr(0, s.size() - 9));
  EXPECT_THROW(read_tensor(cut), FormatError);
}

TEST(ViewMatrix, DumpIngestRoundTrip) {
  auto dir = temp_dir("dump");
  std::vector<ViewMatrix> ms;
  ms.push_back(ViewMatrix::from_rows("a", Tensor({2, 3}, {1, 2, 3, 4, 5, 6})));
  ms.push_back(ViewMatrix::from_rows("b", Tensor({3, 3}, {0, 1, 0, 1, 0, 0, 0, 0, 0}), {1, 1, 0}));
  dump_embeddings(dir.string(), ms);
  const auto back = ingest_embeddings(dir.string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].owner_id, "a");
  EXPECT_EQ(back[0].rows, ms[0].rows);
  EXPECT_EQ(back[1].valid, ms[1].valid);
  EXPECT_EQ(ingest_embeddings((dir / "manifest.jsonl").string()).size(), 2u);
}

TEST(ViewMatrix, EmptyManifestIsEmptyCollection) {
  auto dir = temp_dir("empty_dump");
  dump_embeddings(dir.string(), {});
  EXPECT_TRUE(ingest_embeddings(dir.string()).empty());
}

TEST(ViewMatrix, TruncatedPayloadNamesRecord) {
  auto dir = temp_dir("trunc_dump");
  std::vector<ViewMatrix> ms;
  for (int i = 0; i < 3; ++i) ms.push_back(ViewMatrix::from_rows("m" + std::to_string(i), Tensor({2, 4}, 1.0)));
  dump_embeddings(dir.string(), ms);
  // Header (28 bytes) + four full rows + a partial fifth.
  fs::resize_file(dir / "embeddings.flt", 28 + 4 * 32 + 10);
  try {
    ingest_embeddings(dir.string());
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(ViewMatrix, InconsistentDimsRejected) {
  auto dir = temp_dir("dims_dump");
  dump_embeddings(dir.string(), std::vector<ViewMatrix>{ViewMatrix::from_rows("a", Tensor({2, 4}, 1.0))});
  std::ofstream(dir / "manifest.jsonl") << R"({"owner_id":"a","views":2,"dims":5,"offset":0})" << '\n';
  EXPECT_THROW(ingest_embeddings(dir.string()), IngestError);
}
