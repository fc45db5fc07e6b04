#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "vocabsel/cooccur.hpp"
#include "vocabsel/corpus.hpp"

namespace vocabsel {

/// H[t][s] = sqrt(P(t|s)), stored sparse with one column per source id.
struct HellingerMatrix {
  Eigen::SparseMatrix<double> entries;  // num_tgt x num_src

  std::size_t num_tgt() const { return static_cast<std::size_t>(entries.rows()); }
  std::size_t num_src() const { return static_cast<std::size_t>(entries.cols()); }
};

HellingerMatrix hellinger_transform(const CooccurTable& table);

/// Rank-d factorization H ~= tgt_vecs * diag(singular_values) * src_vecs^T.
struct BilingualEmbedding {
  Eigen::MatrixXd src_vecs;  // num_src x d
  Eigen::MatrixXd tgt_vecs;  // num_tgt x d
  Eigen::VectorXd singular_values;

  std::size_t dim() const { return static_cast<std::size_t>(singular_values.size()); }
  std::size_t num_src() const { return static_cast<std::size_t>(src_vecs.rows()); }
  std::size_t num_tgt() const { return static_cast<std::size_t>(tgt_vecs.rows()); }

  Eigen::MatrixXd reconstruct() const;

  /// Header (num_src, num_tgt, d), then row-major src and tgt matrices, then
  /// singular values.
  void save(const std::filesystem::path& path) const;
  static BilingualEmbedding load(const std::filesystem::path& path);
  /// `src|tgt<TAB>token<TAB>v1 v2 ... vd` with vectors scaled by sqrt(sigma).
  void write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const;
};

struct FactorizeOptions {
  /// Exact Gram-matrix eigendecomposition when min(dims) is at most this.
  std::size_t exact_limit = 3000;
  /// Subspace iteration budget for larger matrices.
  std::size_t max_iterations = 100;
  std::size_t oversample = 10;
  /// Stop early once the leading d singular value estimates move less than
  /// this (relative) between iterations; 0 runs the full budget.
  double tolerance = 1e-10;
  std::uint64_t seed = 1;
};

/// Truncated SVD without centering. Each source singular vector is sign-fixed
/// so its largest-magnitude entry (first on ties) is positive.
BilingualEmbedding factorize(const HellingerMatrix& h, std::size_t d, const FactorizeOptions& options = {});

double relative_frobenius_error(const HellingerMatrix& h, const BilingualEmbedding& emb);

enum class PcaMetric {
  /// Reconstructed co-occurrence value, higher is closer.
  kReconstruction,
  /// Euclidean distance between sqrt(sigma)-scaled source and target vectors.
  kEuclidean,
};

struct NearestOptions {
  PcaMetric metric = PcaMetric::kReconstruction;
  /// Scores are compared after rounding to this grid so that values equal up
  /// to floating-point noise tie and fall back to the lower id.
  double quantum = 1e-9;
  /// Optional candidate mask over target ids; empty allows every target.
  std::span<const char> allowed_targets = {};
};

std::vector<TokenId> nearest_targets(const BilingualEmbedding& emb, TokenId s, std::size_t k,
                                     const NearestOptions& options = {});

/// Shortlists for the listed sources (others stay empty), scored in blocks.
ShortlistTable pca_shortlists(const BilingualEmbedding& emb, std::span<const TokenId> sources, std::size_t k,
                              const NearestOptions& options = {});

/// Sources and targets with nonzero marginals, excluding the unknown ids.
std::vector<TokenId> seen_sources(const CooccurTable& table);
std::vector<char> seen_target_mask(const CooccurTable& table);

}  // namespace vocabsel
