#include "vocabsel/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "vocabsel/error.hpp"

namespace vocabsel {

Coverage coverage(const VocabSubset& subset, std::span<const TokenId> reference, TokenId tgt_unk) {
  Coverage c;
  c.total = reference.size();
  for (TokenId t : reference)
    if (t != tgt_unk && subset.contains(t)) ++c.covered;
  return c;
}

Coverage coverage_vs_output(const VocabSubset& subset, std::span<const TokenId> output, TokenId tgt_unk) {
  Coverage c;
  for (TokenId t : output) {
    if (t == tgt_unk) continue;
    ++c.total;
    if (subset.contains(t)) ++c.covered;
  }
  return c;
}

CoverageReport evaluate(const Selector& selector, const Bitext& bitext, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorKind::kInvalidParameter, "batch size must be positive");
  CoverageReport report;
  report.batch_size = batch_size;
  report.per_sentence.resize(bitext.size());
  const TokenId unk = bitext.tgt_vocab->unk_id();
  const auto batches = sequential_batch(bitext.size(), batch_size);
  Coverage total;
  double vocab_sum = 0.0;
  double batch_vocab_sum = 0.0;
  for (const auto& batch : batches) {
    const auto subset = selector.select_batch(bitext, batch);
    batch_vocab_sum += static_cast<double>(subset.size());
    for (auto i : batch.indices) {
      const auto c = coverage(subset, bitext.pairs[i].tgt, unk);
      report.per_sentence[i] = {subset.size(), c.covered, c.total};
      vocab_sum += static_cast<double>(subset.size());
      total += c;
    }
  }
  if (!bitext.empty()) {
    report.avg_vocab = vocab_sum / static_cast<double>(bitext.size());
    report.avg_batch_vocab = batch_vocab_sum / static_cast<double>(batches.size());
  }
  report.coverage = total.ratio();
  return report;
}

std::vector<SweepRow> sweep(const std::map<Strategy, Selector>& selectors, std::span<const SweepConfig> configs,
                            const Bitext& bitext, std::size_t batch_size, std::size_t threads) {
  for (const auto& c : configs) {
    if (!selectors.contains(c.strategy)) {
      throw Error(ErrorKind::kInvalidParameter,
                  "sweep has no resources for strategy " + std::string(strategy_name(c.strategy)));
    }
  }
  std::vector<SweepRow> rows(configs.size());
  const std::size_t n_batches = bitext.empty() ? 0 : (bitext.size() + batch_size - 1) / batch_size;
  auto run = [&](std::size_t i) {
    const auto& c = configs[i];
    const auto selector = selectors.at(c.strategy).with(c.k, c.common_n);
    const auto start = std::chrono::steady_clock::now();
    rows[i].report = evaluate(selector, bitext, batch_size);
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
    rows[i].config = c;
    rows[i].mean_time_ms = n_batches == 0 ? 0.0 : elapsed.count() / static_cast<double>(n_batches);
  };
  threads = std::max<std::size_t>(1, std::min(threads, configs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) run(i);
      });
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "strategy,k,common_n,batch_size,avg_vocab,coverage,mean_time_ms,avg_batch_vocab\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.4f,%.6f,%.4f,%.4f\n",
                  std::string(strategy_name(r.config.strategy)).c_str(), r.config.k, r.config.common_n,
                  r.report.batch_size, r.report.avg_vocab, r.report.coverage, r.mean_time_ms,
                  r.report.avg_batch_vocab);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Scoring microbenchmark

namespace {

constexpr std::size_t kHiddenStates = 64;

std::vector<TokenId> random_subset(std::size_t vocab_size, std::size_t size, std::mt19937_64& rng) {
  std::vector<TokenId> ids(vocab_size);
  std::iota(ids.begin(), ids.end(), TokenId{0});
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, vocab_size - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(size);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

ScoringBench::ScoringBench(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  if (vocab_size == 0 || dim == 0) throw Error(ErrorKind::kInvalidParameter, "scoring bench needs V >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  embeddings_.resize(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < embeddings_.size(); ++i) embeddings_.data()[i] = normal(rng);
  hidden_.resize(static_cast<Eigen::Index>(dim), kHiddenStates);
  for (Eigen::Index i = 0; i < hidden_.size(); ++i) hidden_.data()[i] = normal(rng);
}

TokenId ScoringBench::step(std::span<const TokenId> ids, std::size_t hidden_index) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n == 0) throw Error(ErrorKind::kInvalidParameter, "cannot score an empty subset");
  gathered_.resize(n, embeddings_.cols());
  for (Eigen::Index i = 0; i < n; ++i) gathered_.row(i) = embeddings_.row(ids[static_cast<std::size_t>(i)]);
  logits_.noalias() = gathered_ * hidden_.col(static_cast<Eigen::Index>(hidden_index % kHiddenStates));
  Eigen::Index best = 0;
  logits_.maxCoeff(&best);
  return ids[static_cast<std::size_t>(best)];
}

TokenId ScoringBench::step_full(std::size_t hidden_index) {
  logits_.noalias() = embeddings_ * hidden_.col(static_cast<Eigen::Index>(hidden_index % kHiddenStates));
  Eigen::Index best = 0;
  logits_.maxCoeff(&best);
  return static_cast<TokenId>(best);
}

template <typename Step>
double ScoringBench::time_steps(Step&& step, const ScoringOptions& options) {
  if (options.blocks == 0 || options.steps < options.blocks) {
    throw Error(ErrorKind::kInvalidParameter, "timing needs steps >= blocks >= 1 (steps " +
                                                  std::to_string(options.steps) + ", blocks " +
                                                  std::to_string(options.blocks) + ")");
  }
  std::uint64_t sink = 0;
  std::size_t h = 0;
  for (std::size_t i = 0; i < options.warmup; ++i) sink += step(h++);
  const std::size_t per_block = options.steps / options.blocks;
  std::vector<double> means;
  for (std::size_t b = 0; b < options.blocks; ++b) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < per_block; ++i) sink += step(h++);
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
    means.push_back(elapsed.count() / static_cast<double>(per_block));
  }
  // Keeps the argmax results observable.
  static std::atomic<std::uint64_t> observed{0};
  observed.fetch_add(sink, std::memory_order_relaxed);
  std::sort(means.begin(), means.end());
  const auto m = means.size();
  return m % 2 == 1 ? means[m / 2] : 0.5 * (means[m / 2 - 1] + means[m / 2]);
}

double ScoringBench::time_subset(std::span<const TokenId> ids, const ScoringOptions& options) {
  for (TokenId id : ids) {
    if (id >= vocab_size()) {
      throw Error(ErrorKind::kInvalidParameter,
                  "subset id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size()));
    }
  }
  return time_steps([&](std::size_t h) { return step(ids, h); }, options);
}

double ScoringBench::time_full(const ScoringOptions& options) {
  return time_steps([&](std::size_t h) { return step_full(h); }, options);
}

TimingReport scoring_bench(std::size_t vocab_size, std::size_t dim, std::span<const std::size_t> subset_sizes,
                           const ScoringOptions& options) {
  std::vector<std::size_t> sizes(subset_sizes.begin(), subset_sizes.end());
  std::sort(sizes.begin(), sizes.end());
  for (auto v : sizes) {
    if (v == 0 || v > vocab_size) {
      throw Error(ErrorKind::kInvalidParameter, "subset size " + std::to_string(v) + " outside [1, " +
                                                    std::to_string(vocab_size) + "]");
    }
  }
  Eigen::setNbThreads(1);
  ScoringBench bench(vocab_size, dim, options.seed);
  std::mt19937_64 rng(options.seed ^ 0x5bd1e995ULL);
  TimingReport report;
  for (auto v : sizes) {
    const auto ids = random_subset(vocab_size, v, rng);
    report.rows.push_back({v, bench.time_subset(ids, options), options.steps, dim, true});
  }
  report.rows.push_back({vocab_size, bench.time_full(options), options.steps, dim, false});
  report.hardware_note = "single thread, " + std::to_string(std::thread::hardware_concurrency()) +
                         " hardware threads; scoring only (gather, matrix-vector product, argmax), "
                         "no decoder";
  return report;
}

void write_timing_csv(std::ostream& out, const TimingReport& report) {
  out << "# " << report.hardware_note << '\n';
  out << "vocab_size,mean_time_ms,steps,dim,gathered\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%zu,%zu,%d\n", r.vocab_size, r.mean_time_ms, r.steps, r.dim,
                  r.gathered ? 1 : 0);
    out << buf;
  }
}

LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw Error(ErrorKind::kInvalidParameter, "linear fit needs at least two paired points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::kInvalidParameter, "linear fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (f.slope * xs[i] + f.intercept);
    ss_res += r * r;
  }
  f.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

}  // namespace vocabsel
