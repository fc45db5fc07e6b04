#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vocabsel/cooccur.hpp"
#include "vocabsel/corpus.hpp"

namespace vocabsel {

enum class Direction : std::uint8_t { kSourceToTarget = 0, kTargetToSource = 1 };

struct Link {
  std::uint32_t src;  // source position, 0-based
  std::uint32_t tgt;  // target position, 0-based

  friend auto operator<=>(const Link&, const Link&) = default;
};

/// Sorted, duplicate-free set of links for one sentence pair.
struct SentenceAlignment {
  std::vector<Link> links;

  SentenceAlignment() = default;
  explicit SentenceAlignment(std::vector<Link> l);

  bool contains(Link l) const;
  friend bool operator==(const SentenceAlignment&, const SentenceAlignment&) = default;
};

/// Probability that target position `tgt_pos` (of m) links to source
/// position `src_pos` (of n): (1 - p0) * exp(-lambda |i/m - j/n|) / Z, with
/// the null word taking the remaining p0.
double diagonal_prior(std::size_t tgt_pos, std::size_t src_pos, std::size_t m, std::size_t n, double lambda,
                      double p0);

/// Translation table theta(t|s) over a sparse support, with a null source row,
/// plus the fixed diagonal-prior parameters. "Source" here is the conditioning
/// side of whichever direction the model was trained in.
class AlignmentModel {
 public:
  AlignmentModel() = default;

  std::size_t num_src() const { return num_src_; }
  std::size_t num_tgt() const { return num_tgt_; }
  std::size_t support_size() const { return tgt_ids_.size(); }
  double lambda() const { return lambda_; }
  double p0() const { return p0_; }
  Direction direction() const { return direction_; }

  double prob(TokenId s, TokenId t) const;
  double null_prob(TokenId t) const;
  /// Row of (target, probability) for a source id, or the null row when
  /// `s == num_src()`.
  std::span<const TokenId> row_targets(std::size_t s) const;
  std::span<const double> row_probs(std::size_t s) const;

  void save(const std::filesystem::path& path) const;
  static AlignmentModel load(const std::filesystem::path& path);

 private:
  friend struct AlignTrainer;

  std::ptrdiff_t find(std::size_t row, TokenId t) const;

  std::size_t num_src_ = 0;
  std::size_t num_tgt_ = 0;
  std::vector<std::uint64_t> row_ptr_;  // num_src_ + 2 entries; last row is null
  std::vector<TokenId> tgt_ids_;
  std::vector<double> probs_;
  double lambda_ = 4.0;
  double p0_ = 0.08;
  Direction direction_ = Direction::kSourceToTarget;
};

struct AlignOptions {
  std::size_t iterations = 5;
  double lambda = 4.0;
  double p0 = 0.08;
  std::size_t threads = 1;
  /// Sentences per E-step accumulation chunk. Results depend on this value
  /// but not on the thread count.
  std::size_t chunk_size = 16384;
};

struct AlignTrainResult {
  AlignmentModel model;
  /// Corpus log-likelihood under the parameters entering each iteration.
  std::vector<double> log_likelihood;
};

/// EM for the diagonal-prior IBM Model 2. The bitext is taken in the
/// direction being modelled: targets are generated from sources.
AlignTrainResult train_em(const Bitext& bitext, const AlignOptions& options,
                          Direction direction = Direction::kSourceToTarget);

/// Viterbi links of one pair, in the model's own orientation (`src` is the
/// conditioning side). Null links are omitted; ties go to the null word, then
/// to the smaller source position.
SentenceAlignment viterbi_align(const AlignmentModel& model, std::span<const TokenId> src,
                                std::span<const TokenId> tgt);

/// Aligns every pair of a source->target bitext. A target->source model is
/// run on the swapped pair and its links are flipped back, so the result is
/// always in (source position, target position) form.
std::vector<SentenceAlignment> align_corpus(const AlignmentModel& model, const Bitext& bitext);

/// grow-diag-final-and over two alignments of the same pair, both given as
/// (source position, target position) links.
SentenceAlignment symmetrize_gdfa(const SentenceAlignment& fwd, const SentenceAlignment& rev);

SentenceAlignment intersect(const SentenceAlignment& a, const SentenceAlignment& b);
SentenceAlignment unite(const SentenceAlignment& a, const SentenceAlignment& b);

/// One count per link (src[i], tgt[j]); links touching unknown words are skipped.
CooccurTable count_links(const Bitext& bitext, std::span<const SentenceAlignment> alignments);

/// Ranks targets by c(s,t) / c(s) from link counts.
ShortlistTable topk_aligned(const CooccurTable& table, std::size_t k);

SentenceAlignment parse_pharaoh_line(std::string_view line, std::size_t line_no = 0);
std::string format_pharaoh_line(const SentenceAlignment& alignment);
std::vector<SentenceAlignment> read_pharaoh(const std::filesystem::path& path);
void write_pharaoh(std::span<const SentenceAlignment> alignments, const std::filesystem::path& path);

}  // namespace vocabsel
