#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vocabsel/corpus.hpp"
#include "vocabsel/select.hpp"

namespace vocabsel {

struct Coverage {
  std::uint64_t covered = 0;
  std::uint64_t total = 0;

  double ratio() const { return total == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(total); }
  Coverage& operator+=(const Coverage& o) {
    covered += o.covered;
    total += o.total;
    return *this;
  }
  friend bool operator==(const Coverage&, const Coverage&) = default;
};

/// Reference token occurrences found in the subset. Unknown-word occurrences
/// count toward the total but are never covered.
Coverage coverage(const VocabSubset& subset, std::span<const TokenId> reference, TokenId tgt_unk);

/// Same count against a system output, with unknown-word tokens left out of
/// the total.
Coverage coverage_vs_output(const VocabSubset& subset, std::span<const TokenId> output, TokenId tgt_unk);

struct SentenceCoverage {
  std::size_t subset_size = 0;  // size of the subset the sentence was scored with
  std::uint64_t covered = 0;
  std::uint64_t reference = 0;

  friend bool operator==(const SentenceCoverage&, const SentenceCoverage&) = default;
};

struct CoverageReport {
  std::vector<SentenceCoverage> per_sentence;
  /// Mean subset size per sentence (a batch's subset counts once per member).
  double avg_vocab = 0.0;
  /// Mean subset size per batch.
  double avg_batch_vocab = 0.0;
  double coverage = 0.0;
  std::size_t batch_size = 1;
};

/// Selection on consecutive batches of `batch_size` sentences, each scored
/// against its own reference with its batch's subset.
CoverageReport evaluate(const Selector& selector, const Bitext& bitext, std::size_t batch_size);

struct SweepConfig {
  Strategy strategy = Strategy::kWordAlign;
  std::size_t k = 0;
  std::size_t common_n = 0;
};

struct SweepRow {
  SweepConfig config;
  CoverageReport report;
  /// Wall time of selection per batch; not reproducible across runs.
  double mean_time_ms = 0.0;
};

/// Evaluates every config with `selectors[strategy].with(k, common_n)`.
/// Configs run in parallel; row order follows `configs`.
std::vector<SweepRow> sweep(const std::map<Strategy, Selector>& selectors, std::span<const SweepConfig> configs,
                            const Bitext& bitext, std::size_t batch_size, std::size_t threads = 1);

/// Header `strategy,k,common_n,batch_size,avg_vocab,coverage,mean_time_ms,avg_batch_vocab`.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

struct TimingRow {
  std::size_t vocab_size = 0;
  /// Milliseconds per scoring step (median over blocks of the block mean).
  double mean_time_ms = 0.0;
  std::size_t steps = 0;
  std::size_t dim = 0;
  /// False for the full-vocabulary baseline, which scores without a gather.
  bool gathered = true;
};

struct TimingReport {
  std::vector<TimingRow> rows;  // gathered rows sorted by vocab size, then the baseline
  std::string hardware_note;
};

struct ScoringOptions {
  std::size_t steps = 100;
  std::size_t blocks = 10;
  std::size_t warmup = 10;
  std::uint64_t seed = 1;
};

/// Output-layer stand-in: a random V x d embedding matrix scored against a
/// stream of random hidden states.
class ScoringBench {
 public:
  ScoringBench(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

  std::size_t vocab_size() const { return static_cast<std::size_t>(embeddings_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }

  /// One step: gather the rows of `ids`, multiply by a hidden state, argmax.
  /// Returns the winning global id.
  TokenId step(std::span<const TokenId> ids, std::size_t hidden_index);
  /// One step over the whole matrix without a gather.
  TokenId step_full(std::size_t hidden_index);

  /// Milliseconds per step.
  double time_subset(std::span<const TokenId> ids, const ScoringOptions& options);
  double time_full(const ScoringOptions& options);

 private:
  template <typename Step>
  double time_steps(Step&& step, const ScoringOptions& options);

  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> embeddings_;
  Eigen::MatrixXf hidden_;  // d x n_hidden
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gathered_;
  Eigen::VectorXf logits_;
};

/// Times a random subset of every size plus the full baseline. Throws when a
/// size exceeds `vocab_size` or steps < blocks.
TimingReport scoring_bench(std::size_t vocab_size, std::size_t dim, std::span<const std::size_t> subset_sizes,
                           const ScoringOptions& options);

void write_timing_csv(std::ostream& out, const TimingReport& report);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept.
LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys);

}  // namespace vocabsel
