#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fastlane/data_io.hpp"
#include "fastlane/errors.hpp"

using namespace fastlane;
namespace fs = std::filesystem;

namespace {

std::string write_file(const std::string& name, const std::string& body) {
  const auto p = (fs::temp_directory_path() / name).string();
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(DataIo, JsonlAndTsvCorpora) {
  auto j = load_corpus(write_file("fl_c.jsonl", "{\"id\":\"a\",\"text\":\"x y\"}\n\n{\"id\":7,\"text\":\"z\"}\n"));
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j.get("7").text, "z");
  EXPECT_EQ(j.ordinal("a"), 0u);
  auto t = load_corpus(write_file("fl_c.tsv", "a\tx y\nb\tz\tw\n"));
  EXPECT_EQ(t.get("b").text, "z\tw");
  EXPECT_FALSE(t.ordinal("nope").has_value());
}

TEST(DataIo, DuplicateIdNamesLine) {
  std::string body;
  for (int i = 0; i < 6; ++i) body += "d" + std::to_string(i) + "\ttext\n";
  body += "d2\tagain\n";
  try {
    load_corpus(write_file("fl_dup.tsv", body));
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos) << e.what();
  }
}

TEST(DataIo, MalformedRecords) {
  EXPECT_THROW(load_corpus(write_file("fl_bad1.jsonl", "{\"id\":\"a\"}\n")), IngestError);
  EXPECT_THROW(load_corpus(write_file("fl_bad2.jsonl", "{\"id\":\"a\",\n")), IngestError);
  EXPECT_THROW(load_corpus(write_file("fl_bad3.tsv", "no tab here\n")), IngestError);
  EXPECT_THROW(load_corpus("/nonexistent/corpus.tsv"), IngestError);
}

TEST(DataIo, CorpusRoundTrip) {
  Corpus c;
  c.add("a", "hello \"world\"");
  c.add("b", "tab\tinside");
  const auto p = (fs::temp_directory_path() / "fl_rt.jsonl").string();
  write_corpus(p, c);
  auto back = load_corpus(p);
  EXPECT_EQ(back.get("a").text, "hello \"world\"");
  EXPECT_EQ(back.get("b").text, "tab\tinside");
}

TEST(DataIo, Triplets) {
  auto text = load_triplets(write_file("fl_t.tsv", "q one\tpos text\tneg text\n"));
  ASSERT_EQ(text.size(), 1u);
  EXPECT_EQ(text[0].negative, "neg text");

  Corpus c;
  c.add("d1", "first");
  c.add("d2", "second");
  std::vector<Query> qs{{"q1", "query"}};
  auto ids = load_triplets(write_file("fl_ti.tsv", "q1\td1\td2\n"), &c, &qs);
  EXPECT_EQ(ids[0].query, "query");
  EXPECT_EQ(ids[0].positive, "first");
  EXPECT_EQ(ids[0].negative_id, "d2");
  EXPECT_THROW(load_triplets(write_file("fl_ti2.tsv", "q1\td1\td1\n"), &c, &qs), IngestError);
  EXPECT_THROW(load_triplets(write_file("fl_ti3.tsv", "q1\td1\td9\n"), &c, &qs), IngestError);
  EXPECT_THROW(load_triplets(write_file("fl_ti4.tsv", "q1\td1\n"), &c, &qs), IngestError);

  const auto p = (fs::temp_directory_path() / "fl_ti_rt.tsv").string();
  write_id_triplets(p, ids);
  EXPECT_EQ(load_triplets(p, &c, &qs)[0].positive_id, "d1");
}

TEST(DataIo, QueriesRoundTrip) {
  std::vector<Query> qs{{"q1", "a b"}, {"q2", "c"}};
  const auto p = (fs::temp_directory_path() / "fl_q.tsv").string();
  write_queries(p, qs);
  auto back = load_queries(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].text, "c");
  EXPECT_THROW(load_queries(write_file("fl_qdup.tsv", "q1\ta\nq1\tb\n")), IngestError);
}
