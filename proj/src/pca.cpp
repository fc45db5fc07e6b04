#include "vocabsel/pca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "vocabsel/binio.hpp"
#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr std::string_view kEmbeddingMagic = "VSEMBED1";

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

// Flips each component so the largest-magnitude source entry is positive.
void fix_signs(BilingualEmbedding& emb) {
  for (Eigen::Index r = 0; r < emb.src_vecs.cols(); ++r) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < emb.src_vecs.rows(); ++i) {
      const double a = std::abs(emb.src_vecs(i, r));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (emb.src_vecs(best, r) < 0.0) {
      emb.src_vecs.col(r) *= -1.0;
      emb.tgt_vecs.col(r) *= -1.0;
    }
  }
}

// Given orthonormal right-side basis V (num_src x b) and sigma^2 estimates,
// completes U = H V / sigma for the leading d components.
BilingualEmbedding from_right_vectors(const HellingerMatrix& h, const Eigen::MatrixXd& v, const Eigen::VectorXd& sigma,
                                      std::size_t d) {
  BilingualEmbedding emb;
  const auto dd = static_cast<Eigen::Index>(d);
  emb.src_vecs = v.leftCols(dd);
  emb.singular_values = sigma.head(dd);
  emb.tgt_vecs = h.entries * emb.src_vecs;
  const double cutoff = (sigma.size() > 0 ? sigma(0) : 0.0) * 1e-12;
  for (Eigen::Index r = 0; r < dd; ++r) {
    if (emb.singular_values(r) > cutoff) {
      emb.tgt_vecs.col(r) /= emb.singular_values(r);
    } else {
      emb.tgt_vecs.col(r).setZero();
      emb.singular_values(r) = 0.0;
    }
  }
  return emb;
}

BilingualEmbedding from_left_vectors(const HellingerMatrix& h, const Eigen::MatrixXd& u, const Eigen::VectorXd& sigma,
                                     std::size_t d) {
  BilingualEmbedding emb;
  const auto dd = static_cast<Eigen::Index>(d);
  emb.tgt_vecs = u.leftCols(dd);
  emb.singular_values = sigma.head(dd);
  emb.src_vecs = h.entries.transpose() * emb.tgt_vecs;
  const double cutoff = (sigma.size() > 0 ? sigma(0) : 0.0) * 1e-12;
  for (Eigen::Index r = 0; r < dd; ++r) {
    if (emb.singular_values(r) > cutoff) {
      emb.src_vecs.col(r) /= emb.singular_values(r);
    } else {
      emb.src_vecs.col(r).setZero();
      emb.singular_values(r) = 0.0;
    }
  }
  return emb;
}

// Eigenpairs of a symmetric PSD matrix sorted by descending eigenvalue;
// returns sqrt of the eigenvalues.
void sorted_eigen(const Eigen::MatrixXd& gram, Eigen::MatrixXd& vectors, Eigen::VectorXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::kInvalidInput, "eigendecomposition failed");
  const auto n = gram.rows();
  vectors.resize(n, n);
  sigma.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
    sigma(i) = std::sqrt(std::max(0.0, solver.eigenvalues()(n - 1 - i)));
  }
}

BilingualEmbedding factorize_exact(const HellingerMatrix& h, std::size_t d) {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd sigma;
  if (h.num_src() <= h.num_tgt()) {
    Eigen::MatrixXd gram = Eigen::MatrixXd(h.entries.transpose() * h.entries);
    sorted_eigen(gram, vectors, sigma);
    return from_right_vectors(h, vectors, sigma, d);
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd(h.entries * h.entries.transpose());
  sorted_eigen(gram, vectors, sigma);
  return from_left_vectors(h, vectors, sigma, d);
}

BilingualEmbedding factorize_subspace(const HellingerMatrix& h, std::size_t d, const FactorizeOptions& opt) {
  const auto n_src = static_cast<Eigen::Index>(h.num_src());
  const auto block = static_cast<Eigen::Index>(std::min(d + opt.oversample, std::min(h.num_src(), h.num_tgt())));
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd q(n_src, block);
  for (Eigen::Index c = 0; c < block; ++c) {
    for (Eigen::Index r = 0; r < n_src; ++r) q(r, c) = gauss(rng);
  }
  q = orthonormalize(q);

  Eigen::VectorXd previous = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Eigen::MatrixXd z = h.entries.transpose() * (h.entries * q);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
    if (opt.tolerance > 0.0) {
      // |diag(R)| tracks sigma^2 once the subspace settles.
      Eigen::VectorXd est = qr.matrixQR().diagonal().cwiseAbs();
      std::sort(est.data(), est.data() + est.size(), std::greater<>());
      Eigen::VectorXd head = est.head(static_cast<Eigen::Index>(d));
      const double change = ((head - previous).cwiseAbs().array() / head.array().max(1e-300)).maxCoeff();
      previous = head;
      if (it > 0 && change < opt.tolerance) break;
    }
  }

  // Rayleigh-Ritz on the converged subspace.
  Eigen::MatrixXd b = h.entries * q;
  Eigen::MatrixXd w;
  Eigen::VectorXd sigma;
  sorted_eigen(b.transpose() * b, w, sigma);
  Eigen::MatrixXd v = q * w;
  return from_right_vectors(h, v, sigma, d);
}

}  // namespace

HellingerMatrix hellinger_transform(const CooccurTable& table) {
  if (table.nnz() == 0) throw Error(ErrorKind::kInvalidInput, "cannot transform an empty co-occurrence table");
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(table.nnz());
  for (std::size_t s = 0; s < table.num_src(); ++s) {
    const auto marginal = static_cast<double>(table.src_marginal(static_cast<TokenId>(s)));
    if (marginal <= 0.0) continue;
    for (const auto& e : table.row(static_cast<TokenId>(s))) {
      triplets.emplace_back(static_cast<int>(e.tgt), static_cast<int>(s), std::sqrt(static_cast<double>(e.count) / marginal));
    }
  }
  HellingerMatrix h;
  h.entries.resize(static_cast<Eigen::Index>(table.num_tgt()), static_cast<Eigen::Index>(table.num_src()));
  h.entries.setFromTriplets(triplets.begin(), triplets.end());
  h.entries.makeCompressed();
  return h;
}

BilingualEmbedding factorize(const HellingerMatrix& h, std::size_t d, const FactorizeOptions& options) {
  const std::size_t max_d = std::min(h.num_src(), h.num_tgt());
  if (d < 1 || d > max_d) {
    throw Error(ErrorKind::kInvalidParameter,
                "PCA dimension " + std::to_string(d) + " outside [1, " + std::to_string(max_d) + "]");
  }
  BilingualEmbedding emb = max_d <= options.exact_limit ? factorize_exact(h, d) : factorize_subspace(h, d, options);
  fix_signs(emb);
  return emb;
}

Eigen::MatrixXd BilingualEmbedding::reconstruct() const {
  return tgt_vecs * singular_values.asDiagonal() * src_vecs.transpose();
}

double relative_frobenius_error(const HellingerMatrix& h, const BilingualEmbedding& emb) {
  const Eigen::MatrixXd dense = Eigen::MatrixXd(h.entries);
  const double norm = dense.norm();
  const double err = (dense - emb.reconstruct()).norm();
  return norm > 0.0 ? err / norm : err;
}

void BilingualEmbedding::save(const std::filesystem::path& path) const {
  binio::Writer w(path, kEmbeddingMagic);
  w.put<std::uint64_t>(num_src());
  w.put<std::uint64_t>(num_tgt());
  w.put<std::uint64_t>(dim());
  auto put_rows = [&](const Eigen::MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    w.put_raw(rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double));
  };
  put_rows(src_vecs);
  put_rows(tgt_vecs);
  w.put_raw(singular_values.data(), dim() * sizeof(double));
  w.close();
}

BilingualEmbedding BilingualEmbedding::load(const std::filesystem::path& path) {
  binio::Reader r(path, kEmbeddingMagic);
  const auto n_src = r.get<std::uint64_t>();
  const auto n_tgt = r.get<std::uint64_t>();
  const auto d = r.get<std::uint64_t>();
  if (d > std::min(n_src, n_tgt) || n_src * d > (std::uint64_t{1} << 34) || n_tgt * d > (std::uint64_t{1} << 34)) {
    throw Error(ErrorKind::kMalformedFormat, path.string() + ": implausible embedding dimensions");
  }
  auto get_rows = [&](std::uint64_t rows) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Eigen::Index>(rows),
                                                                              static_cast<Eigen::Index>(d));
    r.get_raw(rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double));
    return Eigen::MatrixXd(rm);
  };
  BilingualEmbedding emb;
  emb.src_vecs = get_rows(n_src);
  emb.tgt_vecs = get_rows(n_tgt);
  emb.singular_values.resize(static_cast<Eigen::Index>(d));
  r.get_raw(emb.singular_values.data(), d * sizeof(double));
  return emb;
}

void BilingualEmbedding::write_tsv(const std::filesystem::path& path, const Vocab& src_vocab,
                                   const Vocab& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  out.precision(9);
  const Eigen::VectorXd scale = singular_values.cwiseSqrt();
  auto dump = [&](const char* side, const Eigen::MatrixXd& m, const Vocab& vocab) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << side << '\t' << vocab.token(static_cast<TokenId>(i)) << '\t';
      for (Eigen::Index r = 0; r < m.cols(); ++r) {
        if (r) out << ' ';
        out << m(i, r) * scale(r);
      }
      out << '\n';
    }
  };
  dump("src", src_vecs, src_vocab);
  dump("tgt", tgt_vecs, tgt_vocab);
}

namespace {

std::vector<TokenId> rank_scores(const Eigen::Ref<const Eigen::VectorXd>& scores, std::size_t k,
                                 const NearestOptions& opt) {
  std::vector<std::pair<TokenId, double>> scored;
  scored.reserve(static_cast<std::size_t>(scores.size()));
  const bool masked = !opt.allowed_targets.empty();
  for (Eigen::Index t = 0; t < scores.size(); ++t) {
    if (masked && (static_cast<std::size_t>(t) >= opt.allowed_targets.size() || !opt.allowed_targets[static_cast<std::size_t>(t)])) {
      continue;
    }
    double v = scores(t);
    if (opt.quantum > 0.0) v = std::round(v / opt.quantum) * opt.quantum;
    scored.emplace_back(static_cast<TokenId>(t), v);
  }
  return rank_candidates(std::move(scored), k);
}

// Column j of the result scores every target for sources[first + j]; larger is closer.
Eigen::MatrixXd score_block(const BilingualEmbedding& emb, std::span<const TokenId> sources, PcaMetric metric,
                            const Eigen::VectorXd& tgt_sq_norms) {
  const auto d = static_cast<Eigen::Index>(emb.dim());
  Eigen::MatrixXd src(d, static_cast<Eigen::Index>(sources.size()));
  for (std::size_t j = 0; j < sources.size(); ++j) {
    src.col(static_cast<Eigen::Index>(j)) =
        emb.src_vecs.row(static_cast<Eigen::Index>(sources[j])).transpose().cwiseProduct(emb.singular_values);
  }
  Eigen::MatrixXd scores = emb.tgt_vecs * src;
  if (metric == PcaMetric::kEuclidean) {
    // -||a - b||^2 with a = sqrt(sigma) u, b = sqrt(sigma) v.
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const auto row = emb.src_vecs.row(static_cast<Eigen::Index>(sources[j]));
      const double src_sq = (row.transpose().cwiseProduct(row.transpose()).cwiseProduct(emb.singular_values)).sum();
      auto col = scores.col(static_cast<Eigen::Index>(j));
      col = (2.0 * col.array() - tgt_sq_norms.array() - src_sq).matrix();
    }
  }
  return scores;
}

Eigen::VectorXd target_sq_norms(const BilingualEmbedding& emb) {
  return emb.tgt_vecs.cwiseProduct(emb.tgt_vecs) * emb.singular_values;
}

}  // namespace

std::vector<TokenId> nearest_targets(const BilingualEmbedding& emb, TokenId s, std::size_t k,
                                     const NearestOptions& options) {
  if (s >= emb.num_src()) throw Error(ErrorKind::kInvalidParameter, "source id out of range");
  const TokenId one[] = {s};
  const Eigen::VectorXd norms = options.metric == PcaMetric::kEuclidean ? target_sq_norms(emb) : Eigen::VectorXd();
  Eigen::MatrixXd scores = score_block(emb, one, options.metric, norms);
  return rank_scores(scores.col(0), k, options);
}

ShortlistTable pca_shortlists(const BilingualEmbedding& emb, std::span<const TokenId> sources, std::size_t k,
                              const NearestOptions& options) {
  ShortlistTable out;
  out.k = k;
  out.provenance = Statistic::kPca;
  out.lists.resize(emb.num_src());
  for (TokenId s : sources) {
    if (s >= emb.num_src()) throw Error(ErrorKind::kInvalidParameter, "source id out of range");
  }
  const Eigen::VectorXd norms = options.metric == PcaMetric::kEuclidean ? target_sq_norms(emb) : Eigen::VectorXd();
  constexpr std::size_t kBlock = 256;
  for (std::size_t first = 0; first < sources.size(); first += kBlock) {
    auto part = sources.subspan(first, std::min(kBlock, sources.size() - first));
    Eigen::MatrixXd scores = score_block(emb, part, options.metric, norms);
    for (std::size_t j = 0; j < part.size(); ++j) {
      out.lists[part[j]] = rank_scores(scores.col(static_cast<Eigen::Index>(j)), k, options);
    }
  }
  return out;
}

std::vector<TokenId> seen_sources(const CooccurTable& table) {
  std::vector<TokenId> out;
  for (std::size_t s = 0; s < table.num_src(); ++s) {
    if (table.src_marginal(static_cast<TokenId>(s)) > 0) out.push_back(static_cast<TokenId>(s));
  }
  return out;
}

std::vector<char> seen_target_mask(const CooccurTable& table) {
  std::vector<char> mask(table.num_tgt(), 0);
  for (std::size_t t = 0; t < table.num_tgt(); ++t) mask[t] = table.tgt_marginal(static_cast<TokenId>(t)) > 0;
  return mask;
}

}  // namespace vocabsel
