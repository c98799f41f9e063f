#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "graderag/index.hpp"
#include "gtest_util.hpp"
#include "test_util.hpp"

using namespace graderag;
using testutil::TempDir;
using testutil::throws_errc;

namespace {

EmbeddingProviderConfig local_cfg() {
  EmbeddingProviderConfig cfg;
  cfg.kind = ProviderKind::LOCAL;
  cfg.dim = 64;
  return cfg;
}

DocumentChunk kd2_chunk(const std::string& id, Dimension dim, int level,
                        const std::string& text) {
  DocumentChunk c;
  c.chunk_id = id;
  c.index_kind = IndexKind::KD2;
  c.dimension = dim;
  c.level = level;
  c.text = text;
  c.token_count = count_tokens(text);
  return c;
}

IndexRecord record(const std::string& id, std::vector<double> values) {
  IndexRecord rec;
  rec.record_id = id;
  rec.vector.values = std::move(values);
  return rec;
}

VectorIndex ten_mixed_chunks() {
  std::vector<DocumentChunk> chunks;
  chunks.push_back(kd2_chunk("dci-1a", Dimension::DCI, 1, "substances react"));
  chunks.push_back(kd2_chunk("dci-1b", Dimension::DCI, 1, "gas forms quickly"));
  chunks.push_back(kd2_chunk("dci-2a", Dimension::DCI, 2, "properties change"));
  chunks.push_back(kd2_chunk("dci-4a", Dimension::DCI, 4, "atoms rearrange"));
  chunks.push_back(kd2_chunk("dci-5a", Dimension::DCI, 5, "mass is conserved"));
  chunks.push_back(kd2_chunk("sep-1a", Dimension::SEP, 1, "make a claim"));
  chunks.push_back(kd2_chunk("sep-2a", Dimension::SEP, 2, "cite your evidence"));
  chunks.push_back(kd2_chunk("ccc-1a", Dimension::CCC, 1, "observe patterns"));
  chunks.push_back(kd2_chunk("ccc-2a", Dimension::CCC, 2, "track energy flow"));
  chunks.push_back(kd2_chunk("ccc-3a", Dimension::CCC, 3, "scale and quantity"));
  return build_index(IndexKind::KD2, chunks, local_cfg());
}

}  // namespace

TEST(FilterMatches, EmptyFilterMatchesAnything) {
  Metadata meta;
  meta.text = "x";
  EXPECT_TRUE(filter_matches(MetadataFilter{}, meta));
  meta.dimension = Dimension::CCC;
  meta.level = 3;
  meta.task = "Q2";
  EXPECT_TRUE(filter_matches(MetadataFilter{}, meta));
}

TEST(FilterMatches, LevelSetMembership) {
  MetadataFilter filter;
  filter.levels = std::vector<int>{4, 5, 6};
  Metadata meta;
  meta.level = 5;
  EXPECT_TRUE(filter_matches(filter, meta));
  meta.level = 2;
  EXPECT_FALSE(filter_matches(filter, meta));
  meta.level.reset();
  EXPECT_FALSE(filter_matches(filter, meta));
}

TEST(FilterMatches, DimensionAndTask) {
  MetadataFilter filter;
  filter.dimension = Dimension::SEP;
  Metadata meta;
  meta.dimension = Dimension::CCC;
  EXPECT_FALSE(filter_matches(filter, meta));
  meta.dimension = Dimension::SEP;
  EXPECT_TRUE(filter_matches(filter, meta));

  filter.task = "Q1";
  meta.task = "Q2";
  EXPECT_FALSE(filter_matches(filter, meta));
  meta.task = "Q1";
  EXPECT_TRUE(filter_matches(filter, meta));
}

TEST(BuildIndex, ThreeFineChunks) {
  std::vector<DocumentChunk> chunks = {
      kd2_chunk("c1", Dimension::DCI, 1, "one"),
      kd2_chunk("c2", Dimension::DCI, 2, "two"),
      kd2_chunk("c3", Dimension::SEP, 1, "three")};
  VectorIndex index = build_index(IndexKind::KD2, chunks, local_cfg());
  EXPECT_EQ(index.kind(), IndexKind::KD2);
  EXPECT_EQ(index.size(), 3u);
  EXPECT_EQ(index.dim(), 64u);
  EXPECT_EQ(index.records()[1].record_id, "c2");
  EXPECT_EQ(index.records()[1].metadata.level, 2);
  EXPECT_EQ(index.records()[1].metadata.index_kind, IndexKind::KD2);
}

TEST(BuildIndex, DuplicateRecordIdFails) {
  std::vector<DocumentChunk> chunks = {
      kd2_chunk("c1", Dimension::DCI, 1, "one"),
      kd2_chunk("c1", Dimension::DCI, 2, "two")};
  EXPECT_TRUE(throws_errc(Errc::DuplicateId, [&] {
    build_index(IndexKind::KD2, chunks, local_cfg());
  }));
}

TEST(BuildIndex, ExemplarMetadataCarriesTaskDimensionScore) {
  Exemplar e;
  e.exemplar_id = "ex-1";
  e.task = "Q1";
  e.dimension = Dimension::SEP;
  e.response_text = "the gas proves a new substance formed";
  e.rationale = "claims plus evidence";
  e.score = 2;
  VectorIndex index = build_index({e}, local_cfg());

  EXPECT_EQ(index.kind(), IndexKind::KE);
  ASSERT_EQ(index.size(), 1u);
  const IndexRecord& rec = index.records()[0];
  EXPECT_EQ(rec.record_id, "ex-1");
  EXPECT_EQ(rec.metadata.task, "Q1");
  EXPECT_EQ(rec.metadata.dimension, Dimension::SEP);
  EXPECT_EQ(rec.metadata.score, 2);
  EXPECT_EQ(rec.metadata.text, e.response_text);
  EXPECT_EQ(rec.metadata.rationale, e.rationale);
  EXPECT_EQ(rec.vector.values, local_embed(e.response_text, 64).values);
}

TEST(BuildIndex, EmptyRecordSetYieldsEmptyIndex) {
  VectorIndex index = VectorIndex::build(IndexKind::KD1, {});
  EXPECT_EQ(index.size(), 0u);
  EmbeddingVector q;
  q.values.assign(64, 0.5);
  EXPECT_TRUE(index.search(q, 5).empty());
}

TEST(Search, ZeroKYieldsEmpty) {
  VectorIndex index = ten_mixed_chunks();
  auto q = local_embed("substances react", 64);
  EXPECT_TRUE(index.search(q, 0).empty());
}

TEST(Search, DimensionAndLevelFilter) {
  VectorIndex index = ten_mixed_chunks();
  MetadataFilter filter;
  filter.dimension = Dimension::DCI;
  filter.levels = std::vector<int>{1, 2};

  auto hits = index.search(local_embed("gas and properties", 64), 10, filter);
  ASSERT_EQ(hits.size(), 3u);
  for (const auto& h : hits) {
    EXPECT_EQ(h.metadata.dimension, Dimension::DCI);
    ASSERT_TRUE(h.metadata.level.has_value());
    EXPECT_TRUE(*h.metadata.level == 1 || *h.metadata.level == 2);
  }
}

TEST(Search, FullScanReturnsEveryEntryOnce) {
  VectorIndex index = ten_mixed_chunks();
  auto hits = index.search(local_embed("claim evidence energy", 64), 100);
  ASSERT_EQ(hits.size(), index.size());
  std::set<std::string> ids;
  for (const auto& h : hits) {
    EXPECT_TRUE(ids.insert(h.record_id).second);
    EXPECT_LE(std::abs(h.score), 1.0 + 1e-9);
  }
  for (std::size_t i = 1; i < hits.size(); ++i)
    EXPECT_GE(hits[i - 1].score, hits[i].score);
}

TEST(Search, QueryDimensionMismatchFails) {
  VectorIndex index = ten_mixed_chunks();
  EmbeddingVector q;
  q.values.assign(32, 0.1);
  EXPECT_TRUE(throws_errc(Errc::DimensionMismatch, [&] { index.search(q, 3); }));
}

TEST(Search, MatchesBruteForceOracle) {
  std::mt19937 rng(991u);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const std::size_t dim = 16;

  std::vector<IndexRecord> records;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> values;
    for (std::size_t d = 0; d < dim; ++d) values.push_back(dist(rng));
    char id[16];
    std::snprintf(id, sizeof id, "r%03d", i);
    records.push_back(record(id, std::move(values)));
  }
  // Force a similarity tie so id ordering matters.
  records[50].vector = records[150].vector;
  VectorIndex index = VectorIndex::build(IndexKind::KD1, records);

  EmbeddingVector q;
  for (std::size_t d = 0; d < dim; ++d) q.values.push_back(dist(rng));

  struct Scored {
    std::string id;
    double score;
  };
  std::vector<Scored> oracle;
  for (const auto& rec : records)
    oracle.push_back({rec.record_id, cosine(q, rec.vector)});
  std::sort(oracle.begin(), oracle.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });

  for (std::size_t k : {1u, 5u, 17u, 200u}) {
    auto hits = index.search(q, k);
    ASSERT_EQ(hits.size(), std::min<std::size_t>(k, oracle.size()));
    for (std::size_t i = 0; i < hits.size(); ++i) {
      EXPECT_EQ(hits[i].record_id, oracle[i].id);
      EXPECT_DOUBLE_EQ(hits[i].score, oracle[i].score);
    }
  }
}

TEST(Persistence, RoundTripPreservesSearchResults) {
  TempDir tmp;
  VectorIndex index = ten_mixed_chunks();
  auto path = tmp.file("kd2.jsonl").string();
  save_index(index, path);
  VectorIndex loaded = load_index(path);

  EXPECT_EQ(loaded.kind(), index.kind());
  EXPECT_EQ(loaded.dim(), index.dim());
  EXPECT_EQ(loaded.size(), index.size());

  std::mt19937 rng(5u);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingVector q;
    for (std::size_t d = 0; d < index.dim(); ++d) q.values.push_back(dist(rng));
    auto a = index.search(q, 4);
    auto b = loaded.search(q, 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].record_id, b[i].record_id);
      EXPECT_DOUBLE_EQ(a[i].score, b[i].score);
    }
  }
}

TEST(Persistence, SavedFileIsByteDeterministic) {
  TempDir tmp;
  VectorIndex index = ten_mixed_chunks();
  auto p1 = tmp.file("a.jsonl").string();
  auto p2 = tmp.file("b.jsonl").string();
  save_index(index, p1);
  save_index(index, p2);
  EXPECT_EQ(testutil::read_file(p1), testutil::read_file(p2));
  EXPECT_NE(testutil::read_file(p1), "");
}

TEST(Persistence, ExemplarMetadataSurvivesRoundTrip) {
  TempDir tmp;
  Exemplar e;
  e.exemplar_id = "ex-1";
  e.task = "Q2";
  e.dimension = Dimension::DCI;
  e.response_text = "copper oxide forms on the wire";
  e.rationale = "names the product";
  e.score = 5;
  VectorIndex index = build_index({e}, local_cfg());
  auto path = tmp.file("ke.jsonl").string();
  save_index(index, path);
  VectorIndex loaded = load_index(path);

  ASSERT_EQ(loaded.size(), 1u);
  const Metadata& meta = loaded.records()[0].metadata;
  EXPECT_EQ(meta.task, "Q2");
  EXPECT_EQ(meta.dimension, Dimension::DCI);
  EXPECT_EQ(meta.score, 5);
  EXPECT_EQ(meta.rationale, "names the product");
  EXPECT_EQ(meta.index_kind, IndexKind::KE);
}

TEST(Persistence, MissingHeaderFails) {
  TempDir tmp;
  auto path = tmp.file("empty.jsonl").string();
  testutil::write_file(path, "");
  EXPECT_TRUE(throws_errc(Errc::ParseError, [&] { load_index(path); }));
}

TEST(Persistence, MissingFileFails) {
  TempDir tmp;
  EXPECT_TRUE(throws_errc(Errc::IoError,
                          [&] { load_index(tmp.file("absent").string()); }));
}
