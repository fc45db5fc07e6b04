#include <doctest.h>

#include <fstream>
#include <sstream>

#include "selection_properties.hpp"
#include "test_util.hpp"
#include "vocabsel/error.hpp"
#include "vocabsel/select.hpp"

using namespace vocabsel;

namespace {

selprops::World fixed_world() {
  selprops::World w;
  w.src = selprops::toy_vocab('s', 4);
  w.tgt = selprops::toy_vocab('t', 6);
  ShortlistTable t;
  t.provenance = Statistic::kAlignment;
  t.k = 3;
  t.lists = {{5, 2, 4}, {2, 0}, {3}, {}, {}};
  w.shortlist = std::make_shared<const ShortlistTable>(t);
  return w;
}

std::vector<TokenId> ids(const VocabSubset& s) { return {s.global_ids().begin(), s.global_ids().end()}; }

}  // namespace

TEST_CASE("strategy names round trip") {
  for (auto s : {Strategy::kCooccur, Strategy::kPmi, Strategy::kPca, Strategy::kWordAlign, Strategy::kPhrase,
                 Strategy::kSvm})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS_AS(parse_strategy("magic"), Error);
  CHECK(is_word_level(Strategy::kPca));
  CHECK_FALSE(is_word_level(Strategy::kSvm));
}

TEST_CASE("VocabSubset keeps sorted ids and first tags") {
  VocabSubset s({5, 1, 5, 3}, Origin::kSelected);
  CHECK(ids(s) == std::vector<TokenId>{1, 3, 5});
  CHECK(s.local_of(3) == 1u);
  CHECK_FALSE(s.local_of(4).has_value());
  const TokenId more[] = {3, 4};
  s.add(more, Origin::kReference);
  CHECK(s.origin_of(3) == Origin::kSelected);
  CHECK(s.origin_of(4) == Origin::kReference);
  s.merge(VocabSubset({0, 4}, Origin::kCommon));
  CHECK(ids(s) == std::vector<TokenId>{0, 1, 3, 4, 5});
  CHECK(s.origin_of(0) == Origin::kCommon);
  CHECK(s.origin_of(4) == Origin::kReference);
  CHECK_THROWS_AS(s.origin_of(9), Error);
}

TEST_CASE("add_common unions the most frequent ids") {
  const auto v = selprops::toy_vocab('t', 6);
  const VocabSubset base({1, 4}, Origin::kSelected);
  CHECK(add_common(base, *v, 0) == base);
  const auto c = add_common(base, *v, 3);
  CHECK(ids(c) == std::vector<TokenId>{0, 1, 2, 4});
  CHECK(c.origin_of(1) == Origin::kSelected);
  CHECK(c.origin_of(2) == Origin::kCommon);
  CHECK(add_common(base, *v, v->size()).size() == v->word_count());
  CHECK_THROWS_AS(add_common(base, *v, v->size() + 1), Error);
}

TEST_CASE("remap of a singleton") {
  const auto m = remap(VocabSubset({7}, Origin::kSelected));
  CHECK(m.gather == std::vector<TokenId>{7});
  CHECK(m.local_of.at(7) == 0);
}

TEST_CASE("word, sentence and batch selection on a fixed table") {
  const auto w = fixed_world();
  const auto sel = selprops::selector(w, 2, 0);
  CHECK(sel.select_word(0) == std::vector<TokenId>{5, 2});
  CHECK(sel.select_word(w.src->unk_id()).empty());
  CHECK(sel.with(0, 0).select_word(0).empty());
  CHECK(ids(sel.select_sentence(Sentence{0, 1, 2})) == std::vector<TokenId>{0, 2, 3, 5});
  CHECK(ids(sel.select_sentence(Sentence{2, 2})) == std::vector<TokenId>{3});
  CHECK(ids(sel.with(2, 2).select_sentence(Sentence{2})) == std::vector<TokenId>{0, 1, 3});
  const std::vector<Sentence> batch{{0}, {2}};
  CHECK(ids(sel.select_batch(batch)) == std::vector<TokenId>{2, 3, 5});

  const std::vector<Sentence> refs{{1, w.tgt->unk_id()}, {3}};
  const auto tr = sel.select_training(batch, refs);
  CHECK(ids(tr.subset) == std::vector<TokenId>{1, 2, 3, 5});
  CHECK(tr.oov_tokens == 1);
  CHECK(tr.subset.origin_of(1) == Origin::kReference);
  CHECK(tr.subset.origin_of(3) == Origin::kSelected);
  CHECK_THROWS_AS(sel.select_training(batch, std::span(refs).first(1)), Error);
}

TEST_CASE("selector validates its resources") {
  auto w = fixed_world();
  CHECK_THROWS_AS(Selector({Strategy::kCooccur, 5, 0}, {w.src, w.tgt, w.shortlist, nullptr, nullptr}), Error);
  CHECK_THROWS_AS(Selector({Strategy::kWordAlign, 5, 0}, {w.src, w.tgt, nullptr, nullptr, nullptr}), Error);
  CHECK_THROWS_AS(Selector({Strategy::kPhrase, 5, 0}, {w.src, w.tgt, nullptr, nullptr, nullptr}), Error);
  CHECK_THROWS_AS(Selector({Strategy::kSvm, 5, 0}, {w.src, w.tgt, nullptr, nullptr, nullptr}), Error);
  CHECK_THROWS_AS(selprops::selector(w, 5, w.tgt->size() + 1), Error);
  auto phrase = std::make_shared<PhraseTable>();
  const Selector p({Strategy::kPhrase, 5, 0}, {w.src, w.tgt, nullptr, phrase, nullptr});
  CHECK_THROWS_AS(p.select_word(0), Error);
}

TEST_CASE("selection algebra holds on random worlds") {
  const auto rep = selprops::run(77, 300);
  INFO(rep.first_failure);
  CHECK(rep.checks > 3000);
  CHECK(rep.failures == 0);
}

TEST_CASE("selector config parsing") {
  const auto spec = parse_selector_spec(
      "# comment\nstrategy = pca\nk = 50  # trailing\ncommon_n=10\nsrc_vocab = v/s.tsv\ntgt_vocab = /abs/t.tsv\n"
      "shortlist = l.tsv\n",
      "/base");
  CHECK(spec.config.strategy == Strategy::kPca);
  CHECK(spec.config.k == 50);
  CHECK(spec.config.common_n == 10);
  CHECK(spec.src_vocab == std::filesystem::path("/base/v/s.tsv"));
  CHECK(spec.tgt_vocab == std::filesystem::path("/abs/t.tsv"));
  try {
    parse_selector_spec("k = 3\ncolour = red\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedFormat);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_selector_spec("k = -1\n"), Error);
  CHECK_THROWS_AS(parse_selector_spec("just words\n"), Error);
  CHECK_THROWS_AS(read_selector_spec("/nonexistent/selector.conf"), Error);
}

TEST_CASE("load_selector from files and selection dump") {
  const auto w = fixed_world();
  testutil::TempDir dir("select");
  w.src->write_tsv(dir / "s.tsv");
  w.tgt->write_tsv(dir / "t.tsv");
  w.shortlist->write_tsv(dir / "l.tsv", *w.src, *w.tgt);
  std::ofstream(dir / "sel.conf") << "strategy = word_align\nk = 2\nsrc_vocab = s.tsv\ntgt_vocab = t.tsv\nshortlist = l.tsv\n";
  const auto sel = load_selector(read_selector_spec(dir / "sel.conf"));
  const auto subset = sel.select_sentence(Sentence{0, 1});
  CHECK(ids(subset) == std::vector<TokenId>{0, 2, 5});
  std::ostringstream out;
  write_selection_line(out, subset, *w.tgt);
  CHECK(out.str() == "t0 t2 t5\n");
}
