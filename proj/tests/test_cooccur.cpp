#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "test_util.hpp"
#include "vocabsel/cooccur.hpp"
#include "vocabsel/error.hpp"

using namespace vocabsel;

namespace {

// Independent count oracle: walk every position pair.
std::map<std::pair<TokenId, TokenId>, std::uint64_t> brute_counts(const Bitext& b) {
  std::map<std::pair<TokenId, TokenId>, std::uint64_t> m;
  for (const auto& p : b.pairs)
    for (TokenId s : p.src)
      for (TokenId t : p.tgt)
        if (!b.src_vocab->is_unk(s) && !b.tgt_vocab->is_unk(t)) ++m[{s, t}];
  return m;
}

std::vector<TokenId> brute_rank(std::vector<std::pair<TokenId, double>> scored, std::size_t k) {
  std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].first);
  return out;
}

}  // namespace

TEST_CASE("counts for a two-word source") {
  const auto b = testutil::make_bitext({"a b"}, {"x"});
  const auto t = count_cooccurrences(b);
  const auto a = b.src_vocab->id("a"), bb = b.src_vocab->id("b"), x = b.tgt_vocab->id("x");
  CHECK(t.count(a, x) == 1);
  CHECK(t.count(bb, x) == 1);
  CHECK(t.grand_total() == 2);
  CHECK(joint_prob(t, a, x) == doctest::Approx(0.5));
  CHECK(joint_prob(t, a, b.tgt_vocab->unk_id()) == 0.0);
}

TEST_CASE("repeated source word counts per position") {
  const auto b = testutil::make_bitext({"a a"}, {"x"});
  const auto t = count_cooccurrences(b);
  CHECK(t.count(b.src_vocab->id("a"), b.tgt_vocab->id("x")) == 2);
  CHECK(t.grand_total() == 2);
}

TEST_CASE("unknown words are excluded") {
  const auto s = testutil::lines({"a b c", "a"});
  const auto tt = testutil::lines({"x y", "x"});
  auto sv = std::make_shared<const Vocab>(build_vocab(s, 1));
  auto tv = std::make_shared<const Vocab>(build_vocab(tt, 1));
  const auto t = count_cooccurrences(encode(s, tt, sv, tv));
  CHECK(t.grand_total() == 2);
  CHECK(t.src_marginal(sv->unk_id()) == 0);
  CHECK(t.tgt_marginal(tv->unk_id()) == 0);
}

TEST_CASE("counts, marginals and normalization match a brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto b = testutil::random_bitext(rng, 20, 12, 15, 8);
    const auto threads = static_cast<std::size_t>(1 + trial % 3);
    const auto t = count_cooccurrences(b, threads);
    const auto oracle = brute_counts(b);
    std::uint64_t total = 0;
    std::size_t nnz = 0;
    for (const auto& [key, c] : oracle) {
      CHECK(t.count(key.first, key.second) == c);
      total += c;
      ++nnz;
    }
    CHECK(t.nnz() == nnz);
    CHECK(t.grand_total() == total);
    double psum = 0;
    for (TokenId s = 0; s < t.num_src(); ++s) {
      std::uint64_t row = 0;
      for (const auto& e : t.row(s)) {
        row += e.count;
        psum += joint_prob(t, s, e.tgt);
      }
      CHECK(row == t.src_marginal(s));
    }
    CHECK(std::abs(psum - 1.0) < 1e-12);
    for (TokenId x = 0; x < t.num_tgt(); ++x) {
      std::uint64_t col = 0;
      for (TokenId s = 0; s < t.num_src(); ++s) col += t.count(s, x);
      CHECK(col == t.tgt_marginal(x));
    }
    // Threaded counting is identical to the single-threaded table.
    CHECK(t == count_cooccurrences(b, 1));
  }
}

TEST_CASE("PairCounter folds weighted and repeated events") {
  PairCounter c(4);
  for (int i = 0; i < 10; ++i) c.add(1, 2);
  c.add(0, 5, 7);
  PairCounter d;
  d.add(1, 2, 3);
  c.merge(std::move(d));
  auto [keys, counts] = std::move(c).finish();
  REQUIRE(keys.size() == 2);
  CHECK(keys[0] == PairCounter::pack(0, 5));
  CHECK(counts[0] == 7);
  CHECK(counts[1] == 13);
  CHECK(PairCounter::src_of(keys[1]) == 1);
  CHECK(PairCounter::tgt_of(keys[1]) == 2);
}

TEST_CASE("pmi of a perfectly correlated pair is 1/p") {
  // s and t only ever co-occur with each other; the rest is filler.
  std::vector<std::string> src(20, "f"), tgt(20, "g");
  for (int i = 0; i < 10; ++i) {
    src.push_back("s");
    tgt.push_back("t");
  }
  const auto b = testutil::make_bitext(src, tgt);
  const auto table = count_cooccurrences(b);
  const auto s = b.src_vocab->id("s"), t = b.tgt_vocab->id("t");
  const double p = 10.0 / 30.0;
  REQUIRE(pmi(table, s, t, 1).has_value());
  CHECK(*pmi(table, s, t, 1) == doctest::Approx(1.0 / p));
  CHECK_FALSE(pmi(table, s, t, 11).has_value());
  CHECK_FALSE(pmi(table, s, b.tgt_vocab->id("g"), 1).has_value());
}

TEST_CASE("pmi under independence is 1") {
  const auto b = testutil::make_bitext({"a b", "a b"}, {"x y", "x y"});
  const auto table = count_cooccurrences(b);
  for (TokenId s = 0; s < 2; ++s)
    for (TokenId t = 0; t < 2; ++t) CHECK(*pmi(table, s, t, 0) == doctest::Approx(1.0));
}

TEST_CASE("topk equals an exhaustive score sort and is prefix-monotone") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const auto b = testutil::random_bitext(rng, 1 + trial % 20, 8, 10, 6);
    const auto table = count_cooccurrences(b);
    const auto oracle = brute_counts(b);
    for (Statistic stat : {Statistic::kJoint, Statistic::kPmi}) {
      const std::uint64_t floor = trial % 3;
      for (std::size_t k : {1u, 3u, 50u}) {
        const auto lists = topk(table, k, stat, floor);
        CHECK(lists.k == k);
        CHECK(lists.provenance == stat);
        for (TokenId s = 0; s < table.num_src(); ++s) {
          std::vector<std::pair<TokenId, double>> scored;
          for (const auto& [key, c] : oracle) {
            if (key.first != s) continue;
            if (stat == Statistic::kJoint) {
              scored.emplace_back(key.second, static_cast<double>(c) / static_cast<double>(table.grand_total()));
            } else {
              const double tm = static_cast<double>(table.tgt_marginal(key.second));
              if (tm < static_cast<double>(floor)) continue;
              // Exact integers divided once, so equal ratios tie exactly.
              const double n = static_cast<double>(table.grand_total());
              scored.emplace_back(key.second, static_cast<double>(c) * n /
                                                  (static_cast<double>(table.src_marginal(s)) * tm));
            }
          }
          const auto expect = brute_rank(scored, k);
          const auto got = lists.list(s);
          CHECK(std::vector<TokenId>(got.begin(), got.end()) == expect);
          const auto longer_table = topk(table, k + 2, stat, floor);
          const auto longer = longer_table.list(s);
          CHECK(std::equal(got.begin(), got.end(), longer.begin()));
        }
      }
    }
  }
}

TEST_CASE("source with fewer candidates than k") {
  const auto b = testutil::make_bitext({"a", "a", "a"}, {"x", "y", "z"});
  CHECK(topk(count_cooccurrences(b), 50, Statistic::kJoint).list(0).size() == 3);
}

TEST_CASE("rank_candidates breaks ties by lower id") {
  CHECK(rank_candidates({{5, 1.0}, {2, 1.0}, {9, 2.0}, {1, 0.5}}, 3) == std::vector<TokenId>{9, 2, 5});
  CHECK(rank_candidates({{5, 1.0}}, 0).empty());
}

TEST_CASE("table and shortlist serialization round trip") {
  testutil::TempDir dir("cooc");
  std::mt19937_64 rng(2);
  const auto b = testutil::random_bitext(rng, 30, 10, 10, 6);
  const auto table = count_cooccurrences(b);
  table.save(dir / "t.bin");
  CHECK(CooccurTable::load(dir / "t.bin") == table);
  table.write_tsv(dir / "t.tsv", *b.src_vocab, *b.tgt_vocab);
  CHECK(std::filesystem::file_size(dir / "t.tsv") > 0);

  const auto lists = topk(table, 4, Statistic::kJoint);
  lists.write_tsv(dir / "s.tsv", *b.src_vocab, *b.tgt_vocab);
  const auto back = ShortlistTable::read_tsv(dir / "s.tsv", *b.src_vocab, *b.tgt_vocab, Statistic::kJoint);
  for (TokenId s = 0; s < table.num_src(); ++s) {
    const auto x = lists.list(s), y = back.list(s);
    CHECK(std::vector<TokenId>(x.begin(), x.end()) == std::vector<TokenId>(y.begin(), y.end()));
  }

  std::ofstream(dir / "garbage.bin") << "not a table";
  CHECK_THROWS_AS(CooccurTable::load(dir / "garbage.bin"), Error);
  std::ofstream(dir / "bad.tsv") << "no tab here\n";
  CHECK_THROWS_AS(ShortlistTable::read_tsv(dir / "bad.tsv", *b.src_vocab, *b.tgt_vocab, Statistic::kJoint), Error);
}
