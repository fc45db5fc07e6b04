#include "vocabsel/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "vocabsel/binio.hpp"
#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr std::string_view kModelMagic = "VSALIGN1";

// Unnormalized diagonal weights exp(-lambda |i/m - j/n|) for one target
// position over all source positions, plus their sum.
double diagonal_weights(std::size_t tgt_pos, std::size_t m, std::size_t n, double lambda, std::vector<double>& out) {
  out.resize(n);
  const double ti = static_cast<double>(tgt_pos) / static_cast<double>(m);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(-lambda * std::abs(ti - static_cast<double>(j) / static_cast<double>(n)));
    z += out[j];
  }
  return z;
}

}  // namespace

SentenceAlignment::SentenceAlignment(std::vector<Link> l) : links(std::move(l)) {
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
}

bool SentenceAlignment::contains(Link l) const { return std::binary_search(links.begin(), links.end(), l); }

double diagonal_prior(std::size_t tgt_pos, std::size_t src_pos, std::size_t m, std::size_t n, double lambda,
                      double p0) {
  if (m == 0 || n == 0 || tgt_pos >= m || src_pos >= n) {
    throw Error(ErrorKind::kInvalidParameter, "alignment position outside sentence");
  }
  if (!(lambda > 0.0)) throw Error(ErrorKind::kInvalidParameter, "diagonal tension must be > 0");
  if (!(p0 >= 0.0 && p0 < 1.0)) throw Error(ErrorKind::kInvalidParameter, "null probability must be in [0,1)");
  std::vector<double> w;
  const double z = diagonal_weights(tgt_pos, m, n, lambda, w);
  return (1.0 - p0) * w[src_pos] / z;
}

std::ptrdiff_t AlignmentModel::find(std::size_t row, TokenId t) const {
  if (row > num_src_) return -1;
  auto b = tgt_ids_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row]);
  auto e = tgt_ids_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row + 1]);
  auto it = std::lower_bound(b, e, t);
  if (it == e || *it != t) return -1;
  return it - tgt_ids_.begin();
}

double AlignmentModel::prob(TokenId s, TokenId t) const {
  if (s >= num_src_) return 0.0;
  auto idx = find(s, t);
  return idx < 0 ? 0.0 : probs_[static_cast<std::size_t>(idx)];
}

double AlignmentModel::null_prob(TokenId t) const {
  auto idx = find(num_src_, t);
  return idx < 0 ? 0.0 : probs_[static_cast<std::size_t>(idx)];
}

std::span<const TokenId> AlignmentModel::row_targets(std::size_t s) const {
  if (s > num_src_) return {};
  return std::span<const TokenId>(tgt_ids_).subspan(row_ptr_[s], row_ptr_[s + 1] - row_ptr_[s]);
}

std::span<const double> AlignmentModel::row_probs(std::size_t s) const {
  if (s > num_src_) return {};
  return std::span<const double>(probs_).subspan(row_ptr_[s], row_ptr_[s + 1] - row_ptr_[s]);
}

void AlignmentModel::save(const std::filesystem::path& path) const {
  binio::Writer w(path, kModelMagic);
  w.put<std::uint64_t>(num_src_);
  w.put<std::uint64_t>(num_tgt_);
  w.put<double>(lambda_);
  w.put<double>(p0_);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(direction_));
  w.put_vector(row_ptr_);
  w.put_vector(tgt_ids_);
  w.put_vector(probs_);
  w.close();
}

AlignmentModel AlignmentModel::load(const std::filesystem::path& path) {
  binio::Reader r(path, kModelMagic);
  AlignmentModel m;
  m.num_src_ = r.get<std::uint64_t>();
  m.num_tgt_ = r.get<std::uint64_t>();
  m.lambda_ = r.get<double>();
  m.p0_ = r.get<double>();
  auto dir = r.get<std::uint8_t>();
  if (dir > 1) throw Error(ErrorKind::kMalformedFormat, path.string() + ": bad direction flag");
  m.direction_ = static_cast<Direction>(dir);
  m.row_ptr_ = r.get_vector<std::uint64_t>();
  m.tgt_ids_ = r.get_vector<TokenId>();
  m.probs_ = r.get_vector<double>();
  if (m.row_ptr_.size() != m.num_src_ + 2 || m.row_ptr_.back() != m.tgt_ids_.size() ||
      m.probs_.size() != m.tgt_ids_.size()) {
    throw Error(ErrorKind::kMalformedFormat, path.string() + ": inconsistent model arrays");
  }
  return m;
}

// Owns the EM loop; a friend of AlignmentModel so it can fill the CSR arrays.
struct AlignTrainer {
  const Bitext& bitext;
  const AlignOptions& opt;
  AlignmentModel model;

  void build_support() {
    const std::size_t num_src = bitext.src_vocab->size();
    const std::size_t num_tgt = bitext.tgt_vocab->size();
    PairCounter counter;
    std::vector<char> seen_tgt(num_tgt, 0);
    for (const auto& p : bitext.pairs) {
      for (auto s : p.src) {
        for (auto t : p.tgt) counter.add(s, t);
      }
      for (auto t : p.tgt) seen_tgt[t] = 1;
    }
    auto [keys, counts] = std::move(counter).finish();
    model.num_src_ = num_src;
    model.num_tgt_ = num_tgt;
    model.row_ptr_.assign(num_src + 2, 0);
    model.tgt_ids_.reserve(keys.size() + num_tgt);
    for (auto key : keys) {
      ++model.row_ptr_[PairCounter::src_of(key) + 1];
      model.tgt_ids_.push_back(PairCounter::tgt_of(key));
    }
    for (std::size_t t = 0; t < num_tgt; ++t) {
      if (seen_tgt[t]) {
        ++model.row_ptr_[num_src + 1];
        model.tgt_ids_.push_back(static_cast<TokenId>(t));
      }
    }
    for (std::size_t s = 0; s <= num_src; ++s) model.row_ptr_[s + 1] += model.row_ptr_[s];
    model.probs_.assign(model.tgt_ids_.size(), 0.0);
    for (std::size_t s = 0; s <= num_src; ++s) {
      const auto b = model.row_ptr_[s];
      const auto e = model.row_ptr_[s + 1];
      if (e == b) continue;
      const double u = 1.0 / static_cast<double>(e - b);
      for (auto i = b; i < e; ++i) model.probs_[i] = u;
    }
  }

  // Accumulates expected link counts for sentences [begin, end) into `counts`
  // (indexed like model.probs_); returns the log-likelihood contribution.
  double e_step(std::size_t begin, std::size_t end, std::vector<double>& counts) const {
    double loglik = 0.0;
    std::vector<double> diag;
    std::vector<std::ptrdiff_t> idx;
    std::vector<double> post;
    const std::size_t null_row = model.num_src_;
    for (std::size_t p = begin; p < end; ++p) {
      const auto& src = bitext.pairs[p].src;
      const auto& tgt = bitext.pairs[p].tgt;
      const std::size_t n = src.size();
      const std::size_t m = tgt.size();
      idx.resize(n + 1);
      post.resize(n + 1);
      for (std::size_t i = 0; i < m; ++i) {
        const double z = diagonal_weights(i, m, n, opt.lambda, diag);
        const double real_mass = (1.0 - opt.p0) / z;
        idx[n] = model.find(null_row, tgt[i]);
        post[n] = idx[n] < 0 ? 0.0 : model.probs_[static_cast<std::size_t>(idx[n])] * opt.p0;
        double total = post[n];
        for (std::size_t j = 0; j < n; ++j) {
          idx[j] = model.find(src[j], tgt[i]);
          post[j] = idx[j] < 0 ? 0.0 : model.probs_[static_cast<std::size_t>(idx[j])] * diag[j] * real_mass;
          total += post[j];
        }
        if (!(total > 0.0)) continue;
        loglik += std::log(total);
        const double inv = 1.0 / total;
        for (std::size_t j = 0; j <= n; ++j) {
          if (idx[j] >= 0) counts[static_cast<std::size_t>(idx[j])] += post[j] * inv;
        }
      }
    }
    return loglik;
  }

  void m_step(const std::vector<double>& counts) {
    for (std::size_t s = 0; s <= model.num_src_; ++s) {
      const auto b = model.row_ptr_[s];
      const auto e = model.row_ptr_[s + 1];
      double z = 0.0;
      for (auto i = b; i < e; ++i) z += counts[i];
      if (z > 0.0) {
        for (auto i = b; i < e; ++i) model.probs_[i] = counts[i] / z;
      }
    }
  }

  AlignTrainResult run() {
    build_support();
    model.lambda_ = opt.lambda;
    model.p0_ = opt.p0;
    AlignTrainResult result;
    const std::size_t chunk = std::max<std::size_t>(opt.chunk_size, 1);
    const std::size_t n_chunks = (bitext.size() + chunk - 1) / chunk;
    const std::size_t threads = std::clamp<std::size_t>(opt.threads, 1, std::max<std::size_t>(n_chunks, 1));
    std::vector<double> totals(model.probs_.size());
    std::vector<std::vector<double>> buffers(threads, std::vector<double>(model.probs_.size()));
    std::vector<double> chunk_loglik(threads);

    for (std::size_t it = 0; it < opt.iterations; ++it) {
      std::fill(totals.begin(), totals.end(), 0.0);
      double loglik = 0.0;
      for (std::size_t first = 0; first < n_chunks; first += threads) {
        const std::size_t round = std::min(threads, n_chunks - first);
        auto work = [&](std::size_t w) {
          std::fill(buffers[w].begin(), buffers[w].end(), 0.0);
          const std::size_t b = (first + w) * chunk;
          chunk_loglik[w] = e_step(b, std::min(bitext.size(), b + chunk), buffers[w]);
        };
        if (round == 1) {
          work(0);
        } else {
          std::vector<std::jthread> workers;
          for (std::size_t w = 0; w < round; ++w) workers.emplace_back(work, w);
        }
        // Merge in chunk order so the sums do not depend on the thread count.
        for (std::size_t w = 0; w < round; ++w) {
          for (std::size_t i = 0; i < totals.size(); ++i) totals[i] += buffers[w][i];
          loglik += chunk_loglik[w];
        }
      }
      result.log_likelihood.push_back(loglik);
      m_step(totals);
    }
    result.model = std::move(model);
    return result;
  }

  static void set_direction(AlignmentModel& model, Direction d) { model.direction_ = d; }
};

AlignTrainResult train_em(const Bitext& bitext, const AlignOptions& options, Direction direction) {
  if (options.iterations < 1) throw Error(ErrorKind::kInvalidParameter, "EM iterations must be >= 1");
  if (!(options.lambda > 0.0)) throw Error(ErrorKind::kInvalidParameter, "diagonal tension must be > 0");
  if (!(options.p0 >= 0.0 && options.p0 < 1.0)) {
    throw Error(ErrorKind::kInvalidParameter, "null probability must be in [0,1)");
  }
  if (bitext.empty()) throw Error(ErrorKind::kInvalidInput, "cannot train an aligner on an empty bitext");
  AlignTrainer trainer{bitext, options, {}};
  auto result = trainer.run();
  AlignTrainer::set_direction(result.model, direction);
  return result;
}

SentenceAlignment viterbi_align(const AlignmentModel& model, std::span<const TokenId> src,
                                std::span<const TokenId> tgt) {
  std::vector<Link> links;
  const std::size_t n = src.size();
  const std::size_t m = tgt.size();
  if (n == 0 || m == 0) return {};
  std::vector<double> diag;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = diagonal_weights(i, m, n, model.lambda(), diag);
    const double real_mass = (1.0 - model.p0()) / z;
    double best = model.null_prob(tgt[i]) * model.p0();
    std::ptrdiff_t best_j = -1;
    for (std::size_t j = 0; j < n; ++j) {
      const double score = model.prob(src[j], tgt[i]) * diag[j] * real_mass;
      if (score > best) {
        best = score;
        best_j = static_cast<std::ptrdiff_t>(j);
      }
    }
    if (best_j >= 0) links.push_back({static_cast<std::uint32_t>(best_j), static_cast<std::uint32_t>(i)});
  }
  return SentenceAlignment(std::move(links));
}

std::vector<SentenceAlignment> align_corpus(const AlignmentModel& model, const Bitext& bitext) {
  std::vector<SentenceAlignment> out;
  out.reserve(bitext.size());
  for (const auto& p : bitext.pairs) {
    if (model.direction() == Direction::kSourceToTarget) {
      out.push_back(viterbi_align(model, p.src, p.tgt));
    } else {
      auto rev = viterbi_align(model, p.tgt, p.src);
      std::vector<Link> flipped;
      flipped.reserve(rev.links.size());
      for (auto l : rev.links) flipped.push_back({l.tgt, l.src});
      out.emplace_back(std::move(flipped));
    }
  }
  return out;
}

SentenceAlignment intersect(const SentenceAlignment& a, const SentenceAlignment& b) {
  std::vector<Link> out;
  std::set_intersection(a.links.begin(), a.links.end(), b.links.begin(), b.links.end(), std::back_inserter(out));
  return SentenceAlignment(std::move(out));
}

SentenceAlignment unite(const SentenceAlignment& a, const SentenceAlignment& b) {
  std::vector<Link> out;
  std::set_union(a.links.begin(), a.links.end(), b.links.begin(), b.links.end(), std::back_inserter(out));
  return SentenceAlignment(std::move(out));
}

SentenceAlignment symmetrize_gdfa(const SentenceAlignment& fwd, const SentenceAlignment& rev) {
  const auto uni = unite(fwd, rev);
  if (uni.links.empty()) return {};
  std::size_t n = 0, m = 0;
  for (auto l : uni.links) {
    n = std::max<std::size_t>(n, l.src + 1);
    m = std::max<std::size_t>(m, l.tgt + 1);
  }
  std::vector<char> in_union(n * m, 0);
  for (auto l : uni.links) in_union[l.src * m + l.tgt] = 1;

  std::vector<char> aligned(n * m, 0);
  std::vector<char> src_aligned(n, 0);
  std::vector<char> tgt_aligned(m, 0);
  auto add = [&](std::size_t i, std::size_t j) {
    aligned[i * m + j] = 1;
    src_aligned[i] = 1;
    tgt_aligned[j] = 1;
  };
  for (auto l : intersect(fwd, rev).links) add(l.src, l.tgt);

  constexpr int kNeighbors[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  bool added = true;
  while (added) {
    added = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (!aligned[i * m + j]) continue;
        for (const auto& d : kNeighbors) {
          const auto ni = static_cast<std::ptrdiff_t>(i) + d[0];
          const auto nj = static_cast<std::ptrdiff_t>(j) + d[1];
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(n) || nj >= static_cast<std::ptrdiff_t>(m)) continue;
          const auto ui = static_cast<std::size_t>(ni);
          const auto uj = static_cast<std::size_t>(nj);
          if (aligned[ui * m + uj] || !in_union[ui * m + uj]) continue;
          if (!src_aligned[ui] || !tgt_aligned[uj]) {
            add(ui, uj);
            added = true;
          }
        }
      }
    }
  }

  auto final_and = [&](const SentenceAlignment& directional) {
    for (auto l : directional.links) {
      if (!src_aligned[l.src] && !tgt_aligned[l.tgt]) add(l.src, l.tgt);
    }
  };
  final_and(fwd);
  final_and(rev);

  std::vector<Link> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (aligned[i * m + j]) out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
  return SentenceAlignment(std::move(out));
}

CooccurTable count_links(const Bitext& bitext, std::span<const SentenceAlignment> alignments) {
  if (alignments.size() != bitext.size()) {
    throw Error(ErrorKind::kInvalidInput, "alignment count " + std::to_string(alignments.size()) +
                                              " does not match bitext size " + std::to_string(bitext.size()));
  }
  const TokenId src_unk = bitext.src_vocab->unk_id();
  const TokenId tgt_unk = bitext.tgt_vocab->unk_id();
  PairCounter counter;
  for (std::size_t p = 0; p < bitext.size(); ++p) {
    const auto& pair = bitext.pairs[p];
    for (auto l : alignments[p].links) {
      if (l.src >= pair.src.size() || l.tgt >= pair.tgt.size()) {
        throw Error(ErrorKind::kInvalidInput, "alignment link " + std::to_string(l.src) + "-" + std::to_string(l.tgt) +
                                                  " out of range in pair " + std::to_string(p));
      }
      const TokenId s = pair.src[l.src];
      const TokenId t = pair.tgt[l.tgt];
      if (s != src_unk && t != tgt_unk) counter.add(s, t);
    }
  }
  auto [keys, counts] = std::move(counter).finish();
  return CooccurTable(bitext.src_vocab->size(), bitext.tgt_vocab->size(), keys, counts);
}

ShortlistTable topk_aligned(const CooccurTable& table, std::size_t k) { return topk(table, k, Statistic::kAlignment); }

SentenceAlignment parse_pharaoh_line(std::string_view line, std::size_t line_no) {
  std::vector<Link> links;
  for (const auto& tok : split_tokens(line)) {
    const auto dash = tok.find('-');
    auto bad = [&] {
      return Error(ErrorKind::kMalformedFormat,
                   "line " + std::to_string(line_no) + ": malformed alignment token '" + tok + "'");
    };
    if (dash == std::string::npos || dash == 0 || dash + 1 == tok.size()) throw bad();
    auto all_digits = [](std::string_view v) {
      return std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    const std::string_view a(tok.data(), dash);
    const std::string_view b(tok.data() + dash + 1, tok.size() - dash - 1);
    if (!all_digits(a) || !all_digits(b) || a.size() > 9 || b.size() > 9) throw bad();
    links.push_back({static_cast<std::uint32_t>(std::stoul(std::string(a))),
                     static_cast<std::uint32_t>(std::stoul(std::string(b)))});
  }
  return SentenceAlignment(std::move(links));
}

std::string format_pharaoh_line(const SentenceAlignment& alignment) {
  std::string out;
  for (std::size_t i = 0; i < alignment.links.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(alignment.links[i].src);
    out += '-';
    out += std::to_string(alignment.links[i].tgt);
  }
  return out;
}

std::vector<SentenceAlignment> read_pharaoh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  std::vector<SentenceAlignment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      out.push_back(parse_pharaoh_line(line, line_no));
    } catch (const Error& e) {
      throw Error(ErrorKind::kMalformedFormat, path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_pharaoh(std::span<const SentenceAlignment> alignments, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (const auto& a : alignments) out << format_pharaoh_line(a) << '\n';
}

}  // namespace vocabsel
