#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vocabsel {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;
using TokenizedLine = std::vector<std::string>;

inline constexpr std::string_view kDefaultUnk = "<unk>";

/// Frequency-ranked token <-> id mapping for one side of a bitext.
///
/// Real words occupy ids 0..word_count()-1 in order of non-increasing
/// frequency (ties broken by byte-wise token order). The unknown-word symbol
/// always takes the last id, so the first n ids are exactly the n most
/// frequent words.
class Vocab {
 public:
  Vocab() = default;

  /// Builds from explicit ranked entries; used by the TSV reader. Throws if
  /// tokens repeat or the ranking is not frequency-ordered.
  static Vocab from_ranked(std::vector<std::pair<std::string, std::uint64_t>> words,
                           std::string unk_symbol, std::uint64_t unk_freq);

  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::uint64_t freq(TokenId id) const { return freq_.at(id); }

  TokenId unk_id() const { return static_cast<TokenId>(tokens_.size() - 1); }
  const std::string& unk_symbol() const { return tokens_.back(); }
  bool is_unk(TokenId id) const { return id == unk_id(); }

  /// Entries including the unknown-word symbol.
  std::size_t size() const { return tokens_.size(); }
  /// Real words only.
  std::size_t word_count() const { return tokens_.empty() ? 0 : tokens_.size() - 1; }

  /// TSV rows `rank<TAB>token<TAB>frequency`; the last row is the unknown symbol.
  void write_tsv(const std::filesystem::path& path) const;
  static Vocab read_tsv(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, TokenId> id_of_;
};

Vocab build_vocab(std::span<const TokenizedLine> lines, std::size_t max_size,
                  std::string_view unk_symbol = kDefaultUnk);

struct SentencePair {
  Sentence src;
  Sentence tgt;
};

struct Bitext {
  std::vector<SentencePair> pairs;
  std::shared_ptr<const Vocab> src_vocab;
  std::shared_ptr<const Vocab> tgt_vocab;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// Same vocabularies, no pairs.
  Bitext empty_like() const { return Bitext{{}, src_vocab, tgt_vocab}; }
  /// Source and target roles exchanged.
  Bitext reversed() const;
  Bitext subset(std::span<const std::size_t> indices) const;
};

struct Batch {
  std::vector<std::size_t> indices;
};

/// Whitespace tokenization of a pre-tokenized line.
TokenizedLine split_tokens(std::string_view line);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<TokenizedLine> read_tokenized(const std::filesystem::path& path);

Sentence encode_sentence(const TokenizedLine& tokens, const Vocab& vocab);
TokenizedLine decode_sentence(std::span<const TokenId> ids, const Vocab& vocab);

struct EncodeStats {
  std::size_t dropped_empty = 0;
};

/// Pairs with an empty side are dropped (counted in `stats`); order of the
/// remaining pairs is preserved.
Bitext encode(std::span<const TokenizedLine> lines_src, std::span<const TokenizedLine> lines_tgt,
              std::shared_ptr<const Vocab> src_vocab, std::shared_ptr<const Vocab> tgt_vocab,
              EncodeStats* stats = nullptr);

Bitext filter_by_length(const Bitext& bitext, std::size_t max_len);

/// Raw-text variant of the length filter, applied before vocabularies exist.
void filter_lines_by_length(std::vector<TokenizedLine>& src, std::vector<TokenizedLine>& tgt,
                            std::size_t max_len);

/// Orders pairs by (target length, source length, original index) and cuts
/// each run of equal target length into batches of at most `batch_size`.
std::vector<Batch> bucket_batch(const Bitext& bitext, std::size_t batch_size);

/// Consecutive chunks in corpus order; the last may be partial.
std::vector<Batch> sequential_batch(std::size_t n_pairs, std::size_t batch_size);

/// Seeded shuffle, then the first `heldout` pairs go to the second element.
std::pair<Bitext, Bitext> shuffle_split(const Bitext& bitext, std::size_t heldout,
                                        std::uint64_t seed);

void write_text(const std::filesystem::path& path, std::span<const TokenizedLine> lines);

}  // namespace vocabsel
