#include "vocabsel/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <numeric>
#include <random>
#include <thread>

#include "vocabsel/binio.hpp"
#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr std::string_view kEnsembleMagic = "VSSVMEN1";

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SgdState {
  std::vector<double> w;
  double wscale = 1.0;
  double bias = 0.0;

  double dot(std::span<const TokenId> x) const {
    double s = 0.0;
    for (auto f : x) s += w[f];
    return s * wscale;
  }

  void renormalize() {
    if (wscale != 1.0) {
      for (auto& v : w) v *= wscale;
      wscale = 1.0;
    }
  }
};

// One pass over `order`; `t` is the running step counter.
void sgd_epoch(SgdState& st, std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys,
               std::span<const std::size_t> order, const SvmTrainOptions& opt, double t0, double& t) {
  for (auto i : order) {
    const double eta = 1.0 / (opt.reg * (t + t0));
    const double y = ys[i];
    const double z = y * (st.dot(xs[i]) + st.bias);
    st.wscale *= 1.0 - eta * opt.reg;
    if (st.wscale < 1e-9) st.renormalize();
    if (z < 1.0) {
      const double step = eta * y / st.wscale;
      for (auto f : xs[i]) st.w[f] += step;
      st.bias += eta * y * opt.bias_rate;
    }
    t += 1.0;
  }
}

double state_objective(const SgdState& st, std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys,
                       std::span<const std::size_t> subset, double reg) {
  double loss = 0.0;
  for (auto i : subset) loss += std::max(0.0, 1.0 - ys[i] * (st.dot(xs[i]) + st.bias));
  double norm = 0.0;
  for (auto v : st.w) norm += v * v;
  norm *= st.wscale * st.wscale;
  return loss / static_cast<double>(subset.size()) + 0.5 * reg * norm;
}

// Tries learning rates on a subsample for one epoch and keeps the one with
// the lowest objective.
double pick_eta0(std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys, std::size_t num_features,
                 const SvmTrainOptions& opt, std::mt19937_64& rng) {
  std::vector<std::size_t> sample(xs.size());
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  std::shuffle(sample.begin(), sample.end(), rng);
  sample.resize(std::min<std::size_t>(sample.size(), 1000));
  double best_eta = 1.0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int e = -8; e <= 3; ++e) {
    const double eta = std::ldexp(1.0, e);
    SgdState st{std::vector<double>(num_features, 0.0)};
    double t = 0.0;
    sgd_epoch(st, xs, ys, sample, opt, 1.0 / (eta * opt.reg), t);
    const double cost = state_objective(st, xs, ys, sample, opt.reg);
    if (cost < best_cost) {
      best_cost = cost;
      best_eta = eta;
    }
  }
  return best_eta;
}

}  // namespace

SparseFeatures featurize(std::span<const TokenId> src_sentence, TokenId unk_id) {
  SparseFeatures out;
  out.reserve(src_sentence.size());
  for (auto id : src_sentence) {
    if (id != unk_id) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double SvmModel::score(std::span<const TokenId> features) const {
  double acc = 0.0;
  auto w = weights.begin();
  for (auto f : features) {
    while (w != weights.end() && w->first < f) ++w;
    if (w == weights.end()) break;
    if (w->first == f) acc += w->second;
  }
  return acc + bias;
}

double SvmModel::weight(TokenId feature) const {
  auto it = std::lower_bound(weights.begin(), weights.end(), feature,
                             [](const std::pair<TokenId, double>& p, TokenId f) { return p.first < f; });
  return (it != weights.end() && it->first == feature) ? it->second : 0.0;
}

double svm_objective(const SvmModel& model, std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys,
                     double reg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) loss += std::max(0.0, 1.0 - ys[i] * model.score(xs[i]));
  double norm = 0.0;
  for (const auto& [f, w] : model.weights) norm += w * w;
  return (xs.empty() ? 0.0 : loss / static_cast<double>(xs.size())) + 0.5 * reg * norm;
}

SvmModel train_one(std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys, std::size_t num_features,
                   const SvmTrainOptions& options, TokenId target_id) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::kInvalidInput, "feature/label count mismatch");
  if (!(options.reg > 0.0)) throw Error(ErrorKind::kInvalidParameter, "SVM regularization must be > 0");
  if (options.epochs < 1) throw Error(ErrorKind::kInvalidParameter, "SVM epochs must be >= 1");
  bool has_pos = false, has_neg = false;
  for (auto y : ys) {
    if (y != 1 && y != -1) throw Error(ErrorKind::kInvalidInput, "labels must be +1 or -1");
    (y > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw Error(ErrorKind::kInvalidInput,
                "target word " + std::to_string(target_id) + " has single-class training data");
  }
  for (const auto& x : xs) {
    if (!x.empty() && x.back() >= num_features) throw Error(ErrorKind::kInvalidInput, "feature id out of range");
  }

  std::mt19937_64 rng(options.seed);
  const double eta0 = options.eta0 > 0.0 ? options.eta0 : pick_eta0(xs, ys, num_features, options, rng);
  const double t0 = 1.0 / (eta0 * options.reg);

  SgdState st{std::vector<double>(num_features, 0.0)};
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double t = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    sgd_epoch(st, xs, ys, order, options, t0, t);
  }
  st.renormalize();

  SvmModel model;
  model.target_id = target_id;
  model.bias = st.bias;
  for (std::size_t f = 0; f < num_features; ++f) {
    if (st.w[f] != 0.0) model.weights.emplace_back(static_cast<TokenId>(f), st.w[f]);
  }
  return model;
}

SvmEnsemble::SvmEnsemble(std::vector<SvmModel> models, double reg, std::size_t epochs)
    : models_(std::move(models)), reg_(reg), epochs_(epochs) {
  std::sort(models_.begin(), models_.end(), [](const SvmModel& a, const SvmModel& b) { return a.target_id < b.target_id; });
  reindex();
}

const SvmModel* SvmEnsemble::find(TokenId target) const {
  auto it = std::lower_bound(models_.begin(), models_.end(), target,
                             [](const SvmModel& m, TokenId t) { return m.target_id < t; });
  return (it != models_.end() && it->target_id == target) ? &*it : nullptr;
}

void SvmEnsemble::reindex() {
  TokenId max_feature = 0;
  bool any = false;
  for (const auto& m : models_) {
    if (!m.weights.empty()) {
      max_feature = std::max(max_feature, m.weights.back().first);
      any = true;
    }
  }
  const std::size_t num_features = any ? std::size_t{max_feature} + 1 : 0;
  index_ptr_.assign(num_features + 1, 0);
  for (const auto& m : models_) {
    for (const auto& [f, w] : m.weights) ++index_ptr_[f + 1];
  }
  for (std::size_t f = 0; f < num_features; ++f) index_ptr_[f + 1] += index_ptr_[f];
  index_.assign(index_ptr_.back(), {});
  std::vector<std::uint64_t> fill(index_ptr_.begin(), index_ptr_.end() - 1);
  for (std::size_t mi = 0; mi < models_.size(); ++mi) {
    for (const auto& [f, w] : models_[mi].weights) index_[fill[f]++] = {static_cast<std::uint32_t>(mi), w};
  }
}

std::vector<double> SvmEnsemble::scores(std::span<const TokenId> features) const {
  std::vector<double> acc(models_.size(), 0.0);
  const std::size_t num_features = index_ptr_.empty() ? 0 : index_ptr_.size() - 1;
  for (auto f : features) {
    if (f >= num_features) continue;
    for (auto i = index_ptr_[f]; i < index_ptr_[f + 1]; ++i) acc[index_[i].first] += index_[i].second;
  }
  for (std::size_t mi = 0; mi < models_.size(); ++mi) acc[mi] += models_[mi].bias;
  return acc;
}

void SvmEnsemble::save(const std::filesystem::path& path) const {
  binio::Writer w(path, kEnsembleMagic);
  w.put<double>(reg_);
  w.put<std::uint64_t>(epochs_);
  w.put<std::uint64_t>(models_.size());
  for (const auto& m : models_) {
    w.put<TokenId>(m.target_id);
    w.put<double>(m.bias);
    w.put<double>(m.threshold);
    w.put<std::uint64_t>(m.weights.size());
    for (const auto& [f, v] : m.weights) {
      w.put<TokenId>(f);
      w.put<double>(v);
    }
  }
  w.close();
}

SvmEnsemble SvmEnsemble::load(const std::filesystem::path& path) {
  binio::Reader r(path, kEnsembleMagic);
  const double reg = r.get<double>();
  const auto epochs = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > (std::uint64_t{1} << 32)) throw Error(ErrorKind::kMalformedFormat, path.string() + ": implausible model count");
  std::vector<SvmModel> models(n);
  for (auto& m : models) {
    m.target_id = r.get<TokenId>();
    m.bias = r.get<double>();
    m.threshold = r.get<double>();
    const auto nw = r.get<std::uint64_t>();
    if (nw > (std::uint64_t{1} << 32)) throw Error(ErrorKind::kMalformedFormat, path.string() + ": implausible weight count");
    m.weights.resize(nw);
    for (auto& [f, v] : m.weights) {
      f = r.get<TokenId>();
      v = r.get<double>();
    }
  }
  return SvmEnsemble(std::move(models), reg, epochs);
}

void SvmEnsemble::write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  out.precision(17);
  for (const auto& m : models_) {
    out << tgt_vocab.token(m.target_id) << '\t' << m.bias << '\t' << m.threshold << '\t';
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      if (i) out << ' ';
      out << src_vocab.token(m.weights[i].first) << ':' << m.weights[i].second;
    }
    out << '\n';
  }
}

EnsembleTrainResult train_ensemble(const Bitext& bitext, std::span<const TokenId> targets,
                                   const EnsembleOptions& options) {
  const std::size_t n = bitext.size();
  const TokenId src_unk = bitext.src_vocab->unk_id();
  const TokenId tgt_unk = bitext.tgt_vocab->unk_id();
  std::vector<SparseFeatures> features(n);
  std::vector<std::vector<std::uint32_t>> occurs(bitext.tgt_vocab->size());
  for (std::size_t p = 0; p < n; ++p) {
    features[p] = featurize(bitext.pairs[p].src, src_unk);
    auto tgt_set = featurize(bitext.pairs[p].tgt, tgt_unk);
    for (auto t : tgt_set) occurs[t].push_back(static_cast<std::uint32_t>(p));
  }

  std::vector<TokenId> wanted(targets.begin(), targets.end());
  if (wanted.empty()) {
    wanted.resize(bitext.tgt_vocab->word_count());
    std::iota(wanted.begin(), wanted.end(), TokenId{0});
  }
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  std::vector<std::optional<SvmModel>> trained(wanted.size());
  std::vector<std::string> reasons(wanted.size());
  const std::size_t num_features = bitext.src_vocab->size();

  auto train_word = [&](std::size_t wi, std::vector<char>& mark) {
    const TokenId t = wanted[wi];
    if (t >= occurs.size() || t == tgt_unk) {
      reasons[wi] = "not a target vocabulary word";
      return;
    }
    const auto& pos = occurs[t];
    if (pos.size() < options.min_positives) {
      reasons[wi] = "only " + std::to_string(pos.size()) + " positive sentences";
      return;
    }
    if (pos.size() == n) {
      reasons[wi] = "occurs in every sentence (single class)";
      return;
    }
    std::mt19937_64 rng(mix_seed(options.train.seed, t));
    const std::size_t available = n - pos.size();
    const auto wanted_neg = static_cast<std::size_t>(std::ceil(options.negative_ratio * static_cast<double>(pos.size())));
    const std::size_t n_neg = std::max<std::size_t>(1, std::min(available, wanted_neg));
    for (auto p : pos) mark[p] = 1;
    std::vector<std::uint32_t> neg;
    neg.reserve(n_neg);
    if (n_neg * 2 >= available) {
      for (std::size_t p = 0; p < n; ++p) {
        if (!mark[p]) neg.push_back(static_cast<std::uint32_t>(p));
      }
      std::shuffle(neg.begin(), neg.end(), rng);
      neg.resize(n_neg);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      while (neg.size() < n_neg) {
        const auto p = pick(rng);
        if (mark[p]) continue;
        mark[p] = 2;
        neg.push_back(static_cast<std::uint32_t>(p));
      }
      std::sort(neg.begin(), neg.end());
    }
    for (auto p : pos) mark[p] = 0;
    for (auto p : neg) mark[p] = 0;

    std::vector<SparseFeatures> xs;
    std::vector<std::int8_t> ys;
    xs.reserve(pos.size() + neg.size());
    for (auto p : pos) {
      xs.push_back(features[p]);
      ys.push_back(1);
    }
    for (auto p : neg) {
      xs.push_back(features[p]);
      ys.push_back(-1);
    }
    SvmTrainOptions opt = options.train;
    opt.seed = mix_seed(options.train.seed ^ 0x5f5f5f5fULL, t);
    trained[wi] = train_one(xs, ys, num_features, opt, t);
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(wanted.size(), 1));
  if (threads == 1) {
    std::vector<char> mark(n, 0);
    for (std::size_t wi = 0; wi < wanted.size(); ++wi) train_word(wi, mark);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        std::vector<char> mark(n, 0);
        for (std::size_t wi = w; wi < wanted.size(); wi += threads) train_word(wi, mark);
      });
    }
  }

  EnsembleTrainResult result;
  std::vector<SvmModel> models;
  for (std::size_t wi = 0; wi < wanted.size(); ++wi) {
    if (trained[wi]) {
      models.push_back(std::move(*trained[wi]));
    } else {
      result.skipped.push_back({wanted[wi], reasons[wi]});
    }
  }
  result.ensemble = SvmEnsemble(std::move(models), options.train.reg, options.train.epochs);
  return result;
}

CalibrationResult calibrate_scores(std::span<const double> scores, std::span<const std::int8_t> labels,
                                   const CalibrationMode& mode) {
  if (scores.empty()) throw Error(ErrorKind::kInvalidInput, "calibration needs a non-empty validation set");
  if (scores.size() != labels.size()) throw Error(ErrorKind::kInvalidInput, "score/label count mismatch");
  constexpr double kAlways = -std::numeric_limits<double>::infinity();
  constexpr double kNever = std::numeric_limits<double>::infinity();

  if (mode.kind == CalibrationMode::Kind::kRecall) {
    if (!(mode.value > 0.0 && mode.value <= 1.0)) {
      throw Error(ErrorKind::kInvalidParameter, "recall target must be in (0, 1]");
    }
    std::vector<double> pos;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] > 0) pos.push_back(scores[i]);
    }
    if (pos.empty()) return {kAlways, true};
    std::sort(pos.begin(), pos.end(), std::greater<>());
    // Smallest number of positives c with c / P >= r.
    const auto total = static_cast<double>(pos.size());
    auto needed = static_cast<std::size_t>(std::ceil(mode.value * total));
    needed = std::clamp<std::size_t>(needed, 1, pos.size());
    while (needed > 1 && static_cast<double>(needed - 1) / total >= mode.value) --needed;
    while (needed < pos.size() && static_cast<double>(needed) / total < mode.value) ++needed;
    return {pos[needed - 1], false};
  }

  if (!(mode.value >= 0.0)) throw Error(ErrorKind::kInvalidParameter, "frequency multiplier must be >= 0");
  std::size_t positives = 0;
  for (auto y : labels) positives += y > 0;
  const auto fire = static_cast<std::size_t>(std::llround(mode.value * static_cast<double>(positives)));
  if (fire == 0) return {kNever, false};
  if (fire >= scores.size()) return {kAlways, fire > scores.size()};
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return {sorted[fire - 1], false};
}

CalibrationResult calibrate(const SvmModel& model, const Bitext& validation, const CalibrationMode& mode) {
  std::vector<double> scores;
  std::vector<std::int8_t> labels;
  for (const auto& p : validation.pairs) {
    scores.push_back(model.score(featurize(p.src, validation.src_vocab->unk_id())));
    labels.push_back(std::find(p.tgt.begin(), p.tgt.end(), model.target_id) != p.tgt.end() ? 1 : -1);
  }
  return calibrate_scores(scores, labels, mode);
}

std::vector<TokenId> calibrate_ensemble(SvmEnsemble& ensemble, const Bitext& validation, const CalibrationMode& mode) {
  if (validation.empty()) throw Error(ErrorKind::kInvalidInput, "calibration needs a non-empty validation set");
  const auto& models = ensemble.models();
  const std::size_t n = validation.size();
  std::vector<double> all(models.size() * n);
  std::vector<std::int8_t> labels(models.size() * n, -1);
  const TokenId src_unk = validation.src_vocab->unk_id();
  for (std::size_t p = 0; p < n; ++p) {
    const auto sc = ensemble.scores(featurize(validation.pairs[p].src, src_unk));
    for (std::size_t mi = 0; mi < models.size(); ++mi) all[mi * n + p] = sc[mi];
    auto tgt = featurize(validation.pairs[p].tgt, validation.tgt_vocab->unk_id());
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      if (std::binary_search(tgt.begin(), tgt.end(), models[mi].target_id)) labels[mi * n + p] = 1;
    }
  }
  std::vector<TokenId> flagged;
  auto& mut = ensemble.mutable_models();
  for (std::size_t mi = 0; mi < mut.size(); ++mi) {
    auto res = calibrate_scores(std::span<const double>(all).subspan(mi * n, n),
                                std::span<const std::int8_t>(labels).subspan(mi * n, n), mode);
    mut[mi].threshold = res.threshold;
    if (res.flagged) flagged.push_back(mut[mi].target_id);
  }
  return flagged;
}

std::vector<TokenId> select_svm(const SvmEnsemble& ensemble, std::span<const TokenId> src_sentence, TokenId src_unk) {
  const auto sc = ensemble.scores(featurize(src_sentence, src_unk));
  std::vector<TokenId> out;
  const auto& models = ensemble.models();
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    if (sc[mi] >= models[mi].threshold) out.push_back(models[mi].target_id);
  }
  return out;
}

}  // namespace vocabsel
