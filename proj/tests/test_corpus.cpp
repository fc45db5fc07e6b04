#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "test_util.hpp"
#include "vocabsel/corpus.hpp"
#include "vocabsel/error.hpp"

using namespace vocabsel;

TEST_CASE("build_vocab ranks by frequency and truncates to unk") {
  const auto v = build_vocab(testutil::lines({"a b a", "b c"}), 2);
  REQUIRE(v.size() == 3);
  CHECK(v.word_count() == 2);
  CHECK(v.token(0) == "a");
  CHECK(v.token(1) == "b");
  CHECK(v.freq(0) == 2);
  CHECK(v.freq(1) == 2);
  CHECK(v.id("c") == v.unk_id());
  CHECK(v.freq(v.unk_id()) == 1);
  CHECK_FALSE(v.contains("c"));
  CHECK(v.contains("a"));
}

TEST_CASE("build_vocab on a single token") {
  const auto v = build_vocab(testutil::lines({"x"}), 10);
  REQUIRE(v.size() == 2);
  CHECK(v.token(0) == "x");
  CHECK(v.is_unk(1));
  CHECK(v.unk_symbol() == "<unk>");
}

TEST_CASE("build_vocab rejects bad input") {
  CHECK_THROWS_AS(build_vocab(testutil::lines({}), 5), Error);
  CHECK_THROWS_AS(build_vocab(testutil::lines({"", "  "}), 5), Error);
  CHECK_THROWS_AS(build_vocab(testutil::lines({"a"}), 0), Error);
}

TEST_CASE("build_vocab matches a brute-force count") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> word(0, 30), len(1, 12);
  std::vector<std::string> text;
  for (int i = 0; i < 200; ++i) {
    std::string line;
    for (int j = 0, n = len(rng); j < n; ++j) line += "w" + std::to_string(word(rng) * word(rng) % 40) + " ";
    text.push_back(line);
  }
  std::map<std::string, std::uint64_t> counts;
  for (const auto& l : testutil::lines(text))
    for (const auto& t : l) ++counts[t];
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.second > b.second; });

  for (std::size_t max : {1u, 5u, 17u, 1000u}) {
    const auto v = build_vocab(testutil::lines(text), max);
    const auto n = std::min<std::size_t>(max, ranked.size());
    REQUIRE(v.word_count() == n);
    std::uint64_t dropped = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (i < n) {
        CHECK(v.token(static_cast<TokenId>(i)) == ranked[i].first);
        CHECK(v.freq(static_cast<TokenId>(i)) == ranked[i].second);
      } else {
        dropped += ranked[i].second;
        CHECK(v.id(ranked[i].first) == v.unk_id());
      }
    }
    CHECK(v.freq(v.unk_id()) == dropped);
  }
}

TEST_CASE("vocab TSV round trip and validation") {
  testutil::TempDir dir("vocab");
  const auto v = build_vocab(testutil::lines({"the cat the dog", "a cat"}), 100);
  v.write_tsv(dir / "v.tsv");
  const auto r = Vocab::read_tsv(dir / "v.tsv");
  REQUIRE(r.size() == v.size());
  for (TokenId i = 0; i < v.size(); ++i) {
    CHECK(r.token(i) == v.token(i));
    CHECK(r.freq(i) == v.freq(i));
  }

  std::ofstream(dir / "bad.tsv") << "0\ta\t1\n1\tb\t5\n2\t<unk>\t0\n";
  CHECK_THROWS_AS(Vocab::read_tsv(dir / "bad.tsv"), Error);
  std::ofstream(dir / "dup.tsv") << "0\ta\t5\n1\ta\t1\n2\t<unk>\t0\n";
  CHECK_THROWS_AS(Vocab::read_tsv(dir / "dup.tsv"), Error);
  std::ofstream(dir / "short.tsv") << "0\ta\n";
  CHECK_THROWS_AS(Vocab::read_tsv(dir / "short.tsv"), Error);
  try {
    Vocab::read_tsv(dir / "missing.tsv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingFile);
  }
}

TEST_CASE("encode maps tokens and checks line counts") {
  const auto src = testutil::lines({"a b", "b c"});
  const auto tgt = testutil::lines({"x", "y y"});
  auto sv = std::make_shared<const Vocab>(build_vocab(testutil::lines({"a b"}), 10));
  auto tv = std::make_shared<const Vocab>(build_vocab(tgt, 10));
  const auto b = encode(src, tgt, sv, tv);
  REQUIRE(b.size() == 2);
  CHECK(decode_sentence(b.pairs[0].src, *sv) == src[0]);
  CHECK(b.pairs[1].src[1] == sv->unk_id());

  const auto three = testutil::lines({"a", "b", "a"});
  try {
    encode(three, tgt, sv, tv);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("encode drops pairs with an empty side") {
  EncodeStats stats;
  const auto src = testutil::lines({"a", "", "b"});
  const auto tgt = testutil::lines({"x", "y", ""});
  auto sv = std::make_shared<const Vocab>(build_vocab(src, 10));
  auto tv = std::make_shared<const Vocab>(build_vocab(tgt, 10));
  const auto b = encode(src, tgt, sv, tv, &stats);
  CHECK(b.size() == 1);
  CHECK(stats.dropped_empty == 2);
}

TEST_CASE("filter_by_length keeps pairs within the bound on both sides") {
  std::string long_line;
  for (int i = 0; i < 51; ++i) long_line += "w ";
  const auto b = testutil::make_bitext({"a b", long_line, "c"}, {"x", "y", long_line});
  CHECK(filter_by_length(b, 50).size() == 1);
  CHECK(filter_by_length(b, 51).size() == 3);
  CHECK(filter_by_length(b, 2).size() == 1);
  const auto all_long = filter_by_length(testutil::make_bitext({"a b c"}, {"x y"}), 1);
  CHECK(all_long.empty());
}

TEST_CASE("bucket_batch chunks runs of equal target length") {
  const auto b = testutil::make_bitext({"a", "a b", "a", "a"}, {"x y z", "x y z", "x y z", "x y z v w"});
  const auto batches = bucket_batch(b, 2);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].indices.size() == 2);
  CHECK(batches[1].indices.size() == 1);
  CHECK(batches[2].indices == std::vector<std::size_t>{3});
  // Within the length-3 bucket, shorter sources come first.
  CHECK(batches[0].indices == std::vector<std::size_t>{0, 2});
  CHECK(batches[1].indices == std::vector<std::size_t>{1});

  CHECK(bucket_batch(b, 1).size() == 4);
}

TEST_CASE("bucket_batch on a single bucket") {
  std::vector<std::string> src(32, "a b"), tgt(32, "w x y z");
  const auto batches = bucket_batch(testutil::make_bitext(src, tgt), 32);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].indices.size() == 32);
}

TEST_CASE("bucket_batch partitions the corpus with equal target lengths") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = testutil::random_bitext(rng, 150, 20, 20, 9);
    for (std::size_t size : {1u, 3u, 32u}) {
      const auto batches = bucket_batch(b, size);
      std::set<std::size_t> seen;
      for (const auto& batch : batches) {
        REQUIRE(!batch.indices.empty());
        CHECK(batch.indices.size() <= size);
        const auto len = b.pairs[batch.indices[0]].tgt.size();
        for (auto i : batch.indices) {
          CHECK(b.pairs[i].tgt.size() == len);
          CHECK(seen.insert(i).second);
        }
      }
      CHECK(seen.size() == b.size());
    }
  }
}

TEST_CASE("sequential_batch and shuffle_split") {
  const auto batches = sequential_batch(5, 2);
  REQUIRE(batches.size() == 3);
  CHECK(batches[2].indices == std::vector<std::size_t>{4});

  std::mt19937_64 rng(11);
  const auto b = testutil::random_bitext(rng, 100, 10, 10, 5);
  const auto [train, held] = shuffle_split(b, 10, 42);
  CHECK(train.size() == 90);
  CHECK(held.size() == 10);
  const auto [train2, held2] = shuffle_split(b, 10, 42);
  for (std::size_t i = 0; i < held.size(); ++i) CHECK(held.pairs[i].src == held2.pairs[i].src);
  CHECK_THROWS_AS(shuffle_split(b, 101, 1), Error);
}

TEST_CASE("reversed swaps sides and vocabularies") {
  const auto b = testutil::make_bitext({"a b"}, {"x"});
  const auto r = b.reversed();
  CHECK(r.pairs[0].src == b.pairs[0].tgt);
  CHECK(r.pairs[0].tgt == b.pairs[0].src);
  CHECK(r.src_vocab == b.tgt_vocab);
}
