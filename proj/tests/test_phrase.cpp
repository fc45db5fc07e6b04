#include <doctest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "test_util.hpp"
#include "vocabsel/error.hpp"
#include "vocabsel/phrase.hpp"

using namespace vocabsel;

namespace {

// Every rectangle with a link inside and no link crossing its border.
std::set<PhraseSpan> brute_spans(std::size_t n, std::size_t m, const SentenceAlignment& a, std::size_t max_len) {
  std::set<PhraseSpan> out;
  for (std::uint32_t i1 = 0; i1 < n; ++i1)
    for (std::uint32_t i2 = i1; i2 < n && i2 - i1 < max_len; ++i2)
      for (std::uint32_t j1 = 0; j1 < m; ++j1)
        for (std::uint32_t j2 = j1; j2 < m && j2 - j1 < max_len; ++j2) {
          bool inside = false, crossing = false;
          for (auto l : a.links) {
            const bool in_src = l.src >= i1 && l.src <= i2;
            const bool in_tgt = l.tgt >= j1 && l.tgt <= j2;
            if (in_src && in_tgt) inside = true;
            if (in_src != in_tgt) crossing = true;
          }
          if (inside && !crossing) out.insert({i1, i2, j1, j2});
        }
  return out;
}

SentenceAlignment random_alignment(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> dens(0.0, 0.4);
  std::bernoulli_distribution keep(dens(rng));
  std::vector<Link> links;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < m; ++j)
      if (keep(rng)) links.push_back({i, j});
  return SentenceAlignment(links);
}

}  // namespace

TEST_CASE("monotone two-word pair") {
  const auto spans = consistent_spans(2, 2, SentenceAlignment({{0, 0}, {1, 1}}), 5);
  CHECK(spans == std::vector<PhraseSpan>{{0, 0, 0, 0}, {0, 1, 0, 1}, {1, 1, 1, 1}});
}

TEST_CASE("empty alignment yields nothing") {
  CHECK(consistent_spans(3, 3, SentenceAlignment(), 5).empty());
}

TEST_CASE("crossing alignment keeps both one-word pairs and the block") {
  // Each single link is its own consistent rectangle: row 0 only links to
  // column 1 and column 1 only to row 0.
  const auto spans = consistent_spans(2, 2, SentenceAlignment({{0, 1}, {1, 0}}), 5);
  CHECK(spans == std::vector<PhraseSpan>{{0, 0, 1, 1}, {0, 1, 0, 1}, {1, 1, 0, 0}});
}

TEST_CASE("unaligned target words extend spans up to max_len") {
  // x0 aligned to s0, x1 unaligned, x2 aligned to s1.
  const SentenceAlignment a({{0, 0}, {1, 2}});
  const auto spans = consistent_spans(2, 3, a, 5);
  const std::set<PhraseSpan> got(spans.begin(), spans.end());
  CHECK(got.count({0, 0, 0, 0}));
  CHECK(got.count({0, 0, 0, 1}));
  CHECK(got.count({1, 1, 1, 2}));
  CHECK(got.count({0, 1, 0, 2}));
  const auto capped = consistent_spans(2, 3, a, 1);
  CHECK(std::set<PhraseSpan>(capped.begin(), capped.end()) == std::set<PhraseSpan>{{0, 0, 0, 0}, {1, 1, 2, 2}});
}

TEST_CASE("out-of-range links are rejected") {
  CHECK_THROWS_AS(consistent_spans(2, 2, SentenceAlignment({{2, 0}}), 5), Error);
  CHECK_THROWS_AS(consistent_spans(2, 2, SentenceAlignment({{0, 3}}), 5), Error);
}

TEST_CASE("extraction equals brute-force rectangles on random pairs") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(1, 8), ml(1, 6);
  for (int trial = 0; trial < 1500; ++trial) {
    const auto n = len(rng), m = len(rng), max_len = ml(rng);
    const auto a = random_alignment(rng, n, m);
    const auto spans = consistent_spans(n, m, a, max_len);
    CHECK(std::is_sorted(spans.begin(), spans.end()));
    CHECK(std::set<PhraseSpan>(spans.begin(), spans.end()) == brute_spans(n, m, a, max_len));
    CHECK(std::set<PhraseSpan>(spans.begin(), spans.end()).size() == spans.size());
  }
}

TEST_CASE("extract_phrases counts span occurrences over the corpus") {
  std::mt19937_64 rng(103);
  const auto b = testutil::random_bitext(rng, 60, 5, 5, 6);
  std::vector<SentenceAlignment> al;
  std::map<std::pair<Phrase, Phrase>, std::uint64_t> oracle;
  for (const auto& p : b.pairs) {
    al.push_back(random_alignment(rng, p.src.size(), p.tgt.size()));
    for (const auto& s : brute_spans(p.src.size(), p.tgt.size(), al.back(), 3)) {
      Phrase sp(p.src.begin() + s.src_begin, p.src.begin() + s.src_end + 1);
      Phrase tp(p.tgt.begin() + s.tgt_begin, p.tgt.begin() + s.tgt_end + 1);
      ++oracle[{sp, tp}];
    }
  }
  const auto table = extract_phrases(b, al, 3);
  std::map<std::pair<Phrase, Phrase>, std::uint64_t> got;
  for (const auto& [src, targets] : table.entries) {
    CHECK(src.size() <= 3);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      got[{src, targets[i].tgt}] = targets[i].count;
      if (i > 0) CHECK(targets[i - 1].count >= targets[i].count);
    }
  }
  CHECK(got == oracle);
  CHECK(table.pair_count() == oracle.size());
  CHECK_THROWS_AS(extract_phrases(b, std::span(al).first(3), 3), Error);
}

TEST_CASE("prune and cap") {
  PhraseTable t;
  t.entries[{1}] = {{{7}, 9}, {{8}, 4}, {{7, 8}, 1}};
  t.entries[{2}] = {{{9}, 2}};
  CHECK(prune(t, 1).entries == t.entries);
  const auto p5 = prune(t, 5);
  REQUIRE(p5.entries.size() == 1);
  CHECK(p5.entries.at({1}).size() == 1);
  CHECK(p5.min_count == 5);
  CHECK(prune(t, 100).entries.empty());
  CHECK_THROWS_AS(prune(t, 0), Error);
  CHECK(cap_targets(t, 1).entries.at({1}).size() == 1);
  CHECK(cap_targets(t, 0).entries.empty());
}

TEST_CASE("select_phrase unions the targets of every matching n-gram") {
  PhraseTable t;
  t.max_len = 3;
  t.tgt_unk = 99;
  t.entries[{1, 2}] = {{{10, 11}, 3}};   // multi-word source and target
  t.entries[{2}] = {{{12}, 5}, {{13}, 1}};
  t.entries[{4}] = {{{99, 14}, 1}};
  CHECK(select_phrase(t, Sentence{5, 6}).empty());
  CHECK(select_phrase(t, Sentence{1, 2}) == std::vector<TokenId>{10, 11, 12, 13});
  CHECK(select_phrase(t, Sentence{1, 2}, 1) == std::vector<TokenId>{10, 11, 12});
  CHECK(select_phrase(t, Sentence{4}) == std::vector<TokenId>{14});
  CHECK(select_phrase(t, Sentence{1, 2}, 0).empty());
}

TEST_CASE("select_phrase matches a brute-force n-gram scan and is monotone") {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<TokenId> tok(0, 5);
  std::uniform_int_distribution<std::size_t> len(1, 3), cnt(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    PhraseTable t;
    t.max_len = 3;
    for (int e = 0; e < 15; ++e) {
      Phrase s(len(rng)), g(len(rng));
      for (auto& x : s) x = tok(rng);
      for (auto& x : g) x = tok(rng) + 100;
      t.entries[s].push_back({g, cnt(rng)});
    }
    for (auto& [s, targets] : t.entries) {
      std::sort(targets.begin(), targets.end(), [](auto& a, auto& b) {
        return a.count != b.count ? a.count > b.count : a.tgt < b.tgt;
      });
    }
    Sentence sent(8);
    for (auto& x : sent) x = tok(rng);
    std::set<TokenId> oracle;
    for (std::size_t i = 0; i < sent.size(); ++i)
      for (std::size_t j = i; j < sent.size() && j - i < 3; ++j)
        for (const auto& [s, targets] : t.entries)
          if (s == Phrase(sent.begin() + i, sent.begin() + j + 1))
            for (const auto& g : targets) oracle.insert(g.tgt.begin(), g.tgt.end());
    const auto got = select_phrase(t, sent);
    CHECK(std::set<TokenId>(got.begin(), got.end()) == oracle);

    const auto loose = select_phrase(prune(t, 2), sent);
    const auto strict = select_phrase(prune(t, 5), sent);
    CHECK(std::includes(loose.begin(), loose.end(), strict.begin(), strict.end()));
    CHECK(std::includes(got.begin(), got.end(), loose.begin(), loose.end()));
    for (std::size_t k = 1; k < 4; ++k) {
      const auto a = select_phrase(t, sent, k), c = select_phrase(t, sent, k + 1);
      CHECK(std::includes(c.begin(), c.end(), a.begin(), a.end()));
    }
  }
}

TEST_CASE("phrase table TSV round trip") {
  const auto b = testutil::make_bitext({"a b c", "a b"}, {"x y z", "x y"});
  std::vector<SentenceAlignment> al{SentenceAlignment({{0, 0}, {1, 1}, {2, 2}}), SentenceAlignment({{0, 0}, {1, 1}})};
  const auto table = extract_phrases(b, al, 3);
  testutil::TempDir dir("phrase");
  table.write_tsv(dir / "p.tsv", *b.src_vocab, *b.tgt_vocab);
  const auto back = PhraseTable::read_tsv(dir / "p.tsv", *b.src_vocab, *b.tgt_vocab, 3);
  CHECK(back.entries == table.entries);
  CHECK(back.tgt_unk == b.tgt_vocab->unk_id());
  std::ofstream(dir / "bad.tsv") << "a ||| x\n";
  CHECK_THROWS_AS(PhraseTable::read_tsv(dir / "bad.tsv", *b.src_vocab, *b.tgt_vocab, 3), Error);
}
