#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "vocabsel/align.hpp"
#include "vocabsel/corpus.hpp"

namespace vocabsel {

using Phrase = std::vector<TokenId>;

struct PhraseTarget {
  Phrase tgt;
  std::uint64_t count = 0;

  friend bool operator==(const PhraseTarget&, const PhraseTarget&) = default;
};

/// Half-open-free span description: source [src_begin, src_end] and target
/// [tgt_begin, tgt_end], inclusive.
struct PhraseSpan {
  std::uint32_t src_begin, src_end, tgt_begin, tgt_end;

  friend auto operator<=>(const PhraseSpan&, const PhraseSpan&) = default;
};

/// Source n-gram -> target n-grams with extraction counts. Each target list is
/// kept ordered by descending count, then by token ids.
struct PhraseTable {
  std::map<Phrase, std::vector<PhraseTarget>> entries;
  std::size_t max_len = 5;
  std::uint64_t min_count = 1;
  /// Target unknown-word id, never returned by selection.
  TokenId tgt_unk = std::numeric_limits<TokenId>::max();

  std::size_t pair_count() const;
  const std::vector<PhraseTarget>* find(std::span<const TokenId> src) const;

  /// `src tokens ||| tgt tokens ||| count`, one line per phrase pair.
  void write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const;
  static PhraseTable read_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab,
                              std::size_t max_len);
};

/// All phrase spans of one sentence pair consistent with `alignment`, with
/// both sides at most `max_len` long; target spans are extended over
/// adjacent unaligned target words. Throws on out-of-range links.
std::vector<PhraseSpan> consistent_spans(std::size_t src_len, std::size_t tgt_len,
                                         const SentenceAlignment& alignment, std::size_t max_len);

PhraseTable extract_phrases(const Bitext& bitext, std::span<const SentenceAlignment> alignments,
                            std::size_t max_len = 5);

/// Drops pairs seen fewer than `min_count` times, then empty source entries.
PhraseTable prune(const PhraseTable& table, std::uint64_t min_count);

/// Keeps the `k` most frequent target phrases of every source phrase.
PhraseTable cap_targets(const PhraseTable& table, std::size_t k);

/// Union of target tokens over all matching source n-grams; `cap` limits how
/// many target phrases (best first) each match contributes. Sorted ids.
std::vector<TokenId> select_phrase(const PhraseTable& table, std::span<const TokenId> src_sentence,
                                   std::size_t cap = std::numeric_limits<std::size_t>::max());

}  // namespace vocabsel
