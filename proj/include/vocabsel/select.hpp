#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vocabsel/cooccur.hpp"
#include "vocabsel/corpus.hpp"
#include "vocabsel/phrase.hpp"
#include "vocabsel/svm.hpp"

namespace vocabsel {

enum class Strategy { kCooccur, kPmi, kPca, kWordAlign, kPhrase, kSvm };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_word_level(Strategy s);
/// Shortlist provenance a word-level strategy expects.
Statistic strategy_statistic(Strategy s);

struct SelectorConfig {
  Strategy strategy = Strategy::kWordAlign;
  /// Candidates per source word (word-level strategies) or target phrases per
  /// matched source phrase (phrase strategy). Ignored by svm.
  std::size_t k = 100;
  std::size_t common_n = 0;
};

enum class Origin : std::uint8_t { kSelected, kCommon, kReference };

/// Sorted set of target ids with a provenance tag per id. The local index of
/// an id is its position in the sorted order.
class VocabSubset {
 public:
  VocabSubset() = default;
  /// Tags every id with `origin`; duplicates are collapsed.
  VocabSubset(std::vector<TokenId> ids, Origin origin);

  std::span<const TokenId> global_ids() const { return ids_; }
  std::span<const Origin> origins() const { return origins_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool contains(TokenId id) const;
  std::optional<std::size_t> local_of(TokenId id) const;
  Origin origin_of(TokenId id) const;

  /// Union; ids already present keep their tag, new ids take `origin`.
  void add(std::span<const TokenId> ids, Origin origin);
  /// Union with another subset, keeping existing tags.
  void merge(const VocabSubset& other);

  friend bool operator==(const VocabSubset&, const VocabSubset&) = default;

 private:
  std::vector<TokenId> ids_;
  std::vector<Origin> origins_;
};

/// Unions in the n most frequent target words (ids 0..n-1), tagged common.
VocabSubset add_common(VocabSubset subset, const Vocab& tgt_vocab, std::size_t n);

struct Remap {
  std::vector<TokenId> gather;  // local index -> global id
  std::unordered_map<TokenId, std::uint32_t> local_of;
};

Remap remap(const VocabSubset& subset);

struct TrainingSelection {
  VocabSubset subset;
  /// Reference tokens with no vocabulary id; they cannot be added.
  std::size_t oov_tokens = 0;
};

struct SelectorResources {
  std::shared_ptr<const Vocab> src_vocab;
  std::shared_ptr<const Vocab> tgt_vocab;
  std::shared_ptr<const ShortlistTable> shortlist;
  std::shared_ptr<const PhraseTable> phrases;
  std::shared_ptr<const SvmEnsemble> svm;
};

/// Immutable selection function for one strategy and its resources.
class Selector {
 public:
  Selector(SelectorConfig config, SelectorResources resources);

  const SelectorConfig& config() const { return config_; }
  const SelectorResources& resources() const { return resources_; }
  /// Same resources, different k / common_n.
  Selector with(std::size_t k, std::size_t common_n) const;

  /// Word-level shortlist of length <= k; empty for unknown words.
  std::vector<TokenId> select_word(TokenId s) const;
  /// Strategy selection for a sentence before common words are added.
  std::vector<TokenId> select_raw(std::span<const TokenId> src_sentence) const;
  VocabSubset select_sentence(std::span<const TokenId> src_sentence) const;
  VocabSubset select_batch(std::span<const Sentence> sentences) const;
  VocabSubset select_batch(const Bitext& bitext, const Batch& batch) const;
  TrainingSelection select_training(std::span<const Sentence> sentences, std::span<const Sentence> references) const;
  TrainingSelection select_training(const Bitext& bitext, const Batch& batch) const;

 private:
  SelectorConfig config_;
  SelectorResources resources_;
};

/// Key-value selector description: strategy, k, common_n and resource paths.
struct SelectorSpec {
  SelectorConfig config;
  std::filesystem::path src_vocab;
  std::filesystem::path tgt_vocab;
  std::filesystem::path shortlist;
  std::filesystem::path phrase_table;
  std::size_t phrase_max_len = 5;
  std::filesystem::path svm;
};

/// Parses `key = value` lines; '#' starts a comment. Relative paths are
/// resolved against the file's directory.
SelectorSpec read_selector_spec(const std::filesystem::path& path);
SelectorSpec parse_selector_spec(std::string_view text, const std::filesystem::path& base_dir = {});
Selector load_selector(const SelectorSpec& spec);

/// Selection dump: space-separated target tokens of the subset.
void write_selection_line(std::ostream& out, const VocabSubset& subset, const Vocab& tgt_vocab);

}  // namespace vocabsel
