#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vocabsel/corpus.hpp"

namespace vocabsel {

/// Accumulates (source id, target id) events into sorted, reduced counts.
/// Events are buffered and folded in periodically so memory stays bounded by
/// the number of distinct pairs.
class PairCounter {
 public:
  explicit PairCounter(std::size_t flush_threshold = std::size_t{1} << 24);

  void add(TokenId s, TokenId t, std::uint64_t n = 1) {
    if (n == 1) {
      pending_.push_back(pack(s, t));
    } else {
      weighted_.emplace_back(pack(s, t), n);
    }
    if (pending_.size() + weighted_.size() >= flush_threshold_) flush();
  }

  /// Adds everything from another counter.
  void merge(PairCounter&& other);

  /// Sorted unique keys with their counts.
  std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> finish() &&;

  static std::uint64_t pack(TokenId s, TokenId t) { return (std::uint64_t{s} << 32) | t; }
  static TokenId src_of(std::uint64_t key) { return static_cast<TokenId>(key >> 32); }
  static TokenId tgt_of(std::uint64_t key) { return static_cast<TokenId>(key & 0xffffffffu); }

 private:
  void flush();

  std::size_t flush_threshold_;
  std::vector<std::uint64_t> pending_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> weighted_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint64_t> counts_;
};

struct CooccurEntry {
  TokenId tgt;
  std::uint64_t count;

  friend bool operator==(const CooccurEntry&, const CooccurEntry&) = default;
};

/// Sparse joint counts c(s,t) stored row-wise by source id, with marginals.
class CooccurTable {
 public:
  CooccurTable() = default;
  CooccurTable(std::size_t num_src, std::size_t num_tgt, std::span<const std::uint64_t> keys,
               std::span<const std::uint64_t> counts);

  std::size_t num_src() const { return src_marginal_.size(); }
  std::size_t num_tgt() const { return tgt_marginal_.size(); }
  std::size_t nnz() const { return entries_.size(); }

  std::span<const CooccurEntry> row(TokenId s) const {
    if (s >= num_src()) return {};
    return std::span<const CooccurEntry>(entries_).subspan(row_ptr_[s], row_ptr_[s + 1] - row_ptr_[s]);
  }
  std::uint64_t count(TokenId s, TokenId t) const;
  std::uint64_t src_marginal(TokenId s) const { return s < num_src() ? src_marginal_[s] : 0; }
  std::uint64_t tgt_marginal(TokenId t) const { return t < num_tgt() ? tgt_marginal_[t] : 0; }
  std::uint64_t grand_total() const { return grand_total_; }

  void save(const std::filesystem::path& path) const;
  static CooccurTable load(const std::filesystem::path& path);
  /// `src_token<TAB>tgt_token<TAB>count` per nonzero entry.
  void write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const;

  friend bool operator==(const CooccurTable&, const CooccurTable&) = default;

 private:
  std::vector<std::uint64_t> row_ptr_;
  std::vector<CooccurEntry> entries_;
  std::vector<std::uint64_t> src_marginal_;
  std::vector<std::uint64_t> tgt_marginal_;
  std::uint64_t grand_total_ = 0;
};

/// Every (source position, target position) pair of every sentence pair adds
/// one count; unknown-word ids on either side are skipped.
CooccurTable count_cooccurrences(const Bitext& bitext, std::size_t threads = 1);

double joint_prob(const CooccurTable& table, TokenId s, TokenId t);

inline constexpr std::uint64_t kDefaultPmiFloor = 10;

/// P(s,t) / (P(s) P(t)). Empty when the pair is unseen, a marginal is zero,
/// or the target marginal is below `floor`; such pairs are never ranked.
std::optional<double> pmi(const CooccurTable& table, TokenId s, TokenId t,
                          std::uint64_t floor = kDefaultPmiFloor);

enum class Statistic { kJoint, kPmi, kPca, kAlignment };

std::string_view statistic_name(Statistic stat);

/// Per-source-word ranked target candidates.
struct ShortlistTable {
  std::vector<std::vector<TokenId>> lists;
  std::size_t k = 0;
  Statistic provenance = Statistic::kJoint;

  std::span<const TokenId> list(TokenId s) const {
    if (s >= lists.size()) return {};
    return lists[s];
  }

  /// `src_token<TAB>t1 t2 ... tk`; source words with empty lists are omitted.
  void write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const;
  static ShortlistTable read_tsv(const std::filesystem::path& path, const Vocab& src_vocab,
                                 const Vocab& tgt_vocab, Statistic provenance);
};

/// Sorts candidates by descending score, ascending id on ties, and keeps k.
std::vector<TokenId> rank_candidates(std::vector<std::pair<TokenId, double>> scored, std::size_t k);

ShortlistTable topk(const CooccurTable& table, std::size_t k, Statistic statistic,
                    std::uint64_t pmi_floor = kDefaultPmiFloor);

}  // namespace vocabsel
