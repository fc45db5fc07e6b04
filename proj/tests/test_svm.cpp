#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "test_util.hpp"
#include "vocabsel/error.hpp"
#include "vocabsel/svm.hpp"

using namespace vocabsel;

namespace {

// Dense evaluation over every feature id in ascending order.
double dense_score(const SvmModel& m, const SparseFeatures& x, std::size_t num_features) {
  std::vector<double> w(num_features, 0.0), v(num_features, 0.0);
  for (auto [f, val] : m.weights) w[f] = val;
  for (auto f : x) v[f] = 1.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < num_features; ++j) acc += w[j] * v[j];
  return acc + m.bias;
}

struct Dataset {
  std::vector<SparseFeatures> xs;
  std::vector<std::int8_t> ys;
};

// Positive exactly when feature `key` is present.
Dataset separable(std::mt19937_64& rng, std::size_t n, std::size_t num_features, TokenId key) {
  Dataset d;
  std::bernoulli_distribution on(0.2), pos(0.3);
  for (std::size_t i = 0; i < n; ++i) {
    SparseFeatures x;
    const bool y = pos(rng);
    for (TokenId f = 0; f < num_features; ++f) {
      if (f == key ? y : on(rng)) x.push_back(f);
    }
    d.xs.push_back(x);
    d.ys.push_back(y ? 1 : -1);
  }
  return d;
}

std::size_t training_errors(const SvmModel& m, const Dataset& d) {
  std::size_t err = 0;
  for (std::size_t i = 0; i < d.xs.size(); ++i) err += (m.score(d.xs[i]) > 0.0) != (d.ys[i] > 0);
  return err;
}

}  // namespace

TEST_CASE("featurize keeps distinct in-vocabulary ids") {
  CHECK(featurize(Sentence{3, 1, 3, 9}, 9) == SparseFeatures{1, 3});
  CHECK(featurize(Sentence{9, 9}, 9).empty());
  CHECK(featurize(Sentence{}, 9).empty());
}

TEST_CASE("separable data trains to zero error with a positive key weight") {
  std::mt19937_64 rng(51);
  const auto d = separable(rng, 400, 30, 7);
  SvmTrainOptions opt;
  opt.epochs = 50;
  const auto m = train_one(d.xs, d.ys, 30, opt, 4);
  CHECK(m.target_id == 4);
  CHECK(training_errors(m, d) == 0);
  CHECK(m.weight(7) > 0.0);
  SvmModel zero;
  CHECK(svm_objective(m, d.xs, d.ys, opt.reg) < svm_objective(zero, d.xs, d.ys, opt.reg));
}

TEST_CASE("training is deterministic and rejects single-class data") {
  std::mt19937_64 rng(53);
  const auto d = separable(rng, 100, 10, 2);
  const auto a = train_one(d.xs, d.ys, 10, {});
  const auto b = train_one(d.xs, d.ys, 10, {});
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  std::vector<std::int8_t> ones(d.xs.size(), 1);
  try {
    train_one(d.xs, ones, 10, {}, 42);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("strong regularization shrinks the weights") {
  std::mt19937_64 rng(57);
  const auto d = separable(rng, 200, 20, 3);
  SvmTrainOptions weak, strong;
  weak.reg = 1e-4;
  strong.reg = 10.0;
  auto norm = [](const SvmModel& m) {
    double s = 0;
    for (auto [f, w] : m.weights) s += w * w;
    return std::sqrt(s);
  };
  CHECK(norm(train_one(d.xs, d.ys, 20, strong)) < 0.1 * norm(train_one(d.xs, d.ys, 20, weak)));
}

TEST_CASE("duplicating the training set keeps the decision boundary") {
  std::mt19937_64 rng(59);
  const auto d = separable(rng, 300, 15, 5);
  Dataset twice = d;
  twice.xs.insert(twice.xs.end(), d.xs.begin(), d.xs.end());
  twice.ys.insert(twice.ys.end(), d.ys.begin(), d.ys.end());
  SvmTrainOptions opt;
  opt.epochs = 30;
  const auto a = train_one(d.xs, d.ys, 15, opt), b = train_one(twice.xs, twice.ys, 15, opt);
  const auto probe = separable(rng, 200, 15, 5);
  for (const auto& x : probe.xs) CHECK((a.score(x) > 0) == (b.score(x) > 0));
}

TEST_CASE("sparse scoring is bit-equal to dense scoring") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> nw(0, 12);
  std::vector<SvmModel> models;
  for (TokenId t = 0; t < 20; ++t) {
    SvmModel m;
    m.target_id = t * 3;
    std::set<TokenId> fs;
    for (int i = 0, n = nw(rng); i < n; ++i) fs.insert(static_cast<TokenId>(rng() % 40));
    for (auto f : fs) m.weights.emplace_back(f, g(rng));
    m.bias = g(rng);
    models.push_back(m);
  }
  SvmEnsemble ens(models, 1e-4, 1);
  for (int trial = 0; trial < 500; ++trial) {
    SparseFeatures x;
    for (TokenId f = 0; f < 45; ++f)
      if (rng() % 4 == 0) x.push_back(f);
    const auto sc = ens.scores(x);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const double dense = dense_score(models[i], x, 45);
      CHECK(std::memcmp(&sc[i], &dense, sizeof(double)) == 0);
      CHECK(models[i].score(x) == dense);
    }
  }
}

TEST_CASE("recall calibration matches an exhaustive threshold scan") {
  std::mt19937_64 rng(67);
  std::uniform_int_distribution<int> score(-20, 20);
  std::bernoulli_distribution lab(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> s(1 + rng() % 30);
    std::vector<std::int8_t> y(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = score(rng) / 4.0;
      y[i] = lab(rng) ? 1 : -1;
    }
    const double r = (1 + rng() % 10) / 10.0;
    const auto res = calibrate_scores(s, y, {CalibrationMode::Kind::kRecall, r});
    std::size_t p = 0;
    for (auto v : y) p += v > 0;
    if (p == 0) {
      CHECK(res.flagged);
      continue;
    }
    double best = -INFINITY;
    for (double th : s) {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < s.size(); ++i) hit += y[i] > 0 && s[i] >= th;
      if (static_cast<double>(hit) / static_cast<double>(p) >= r) best = std::max(best, th);
    }
    CHECK_FALSE(res.flagged);
    CHECK(res.threshold == best);
  }
}

TEST_CASE("recall one puts the threshold at or below the lowest positive") {
  const std::vector<double> s{0.5, -1.0, 2.0, -3.0};
  const std::vector<std::int8_t> y{1, 1, -1, -1};
  CHECK(calibrate_scores(s, y, {CalibrationMode::Kind::kRecall, 1.0}).threshold <= -1.0);
  CHECK_THROWS_AS(calibrate_scores(s, y, {CalibrationMode::Kind::kRecall, 0.0}), Error);
  CHECK_THROWS_AS(calibrate_scores({}, {}, {}), Error);
}

TEST_CASE("frequency calibration fires at the requested rate") {
  const std::vector<double> s{0.9, 0.1, 0.8, 0.2, 0.7, 0.3};
  const std::vector<std::int8_t> y{1, -1, 1, -1, -1, -1};
  auto fires = [&](double th) {
    std::size_t n = 0;
    for (double v : s) n += v >= th;
    return n;
  };
  CHECK(fires(calibrate_scores(s, y, {CalibrationMode::Kind::kFrequency, 1.0}).threshold) == 2);
  CHECK(fires(calibrate_scores(s, y, {CalibrationMode::Kind::kFrequency, 2.0}).threshold) == 4);
  CHECK(fires(calibrate_scores(s, y, {CalibrationMode::Kind::kFrequency, 0.0}).threshold) == 0);
  CHECK(calibrate_scores(s, y, {CalibrationMode::Kind::kFrequency, 10.0}).flagged);
}

TEST_CASE("ensemble training, calibration and selection") {
  // Target x appears whenever source a does, y whenever b does; z is everywhere.
  std::vector<std::string> src, tgt;
  std::mt19937_64 rng(71);
  for (int i = 0; i < 300; ++i) {
    const bool a = rng() % 2, b = rng() % 3 == 0;
    std::string s = "c", t = "z";
    if (a) s += " a", t += " x";
    if (b) s += " b", t += " y";
    src.push_back(s);
    tgt.push_back(t);
  }
  const auto bt = testutil::make_bitext(src, tgt);
  EnsembleOptions opt;
  opt.train.epochs = 30;
  auto res = train_ensemble(bt, {}, opt);
  const auto& tv = *bt.tgt_vocab;
  const auto& sv = *bt.src_vocab;
  CHECK(res.ensemble.find(tv.id("x")) != nullptr);
  CHECK(res.ensemble.find(tv.id("y")) != nullptr);
  CHECK(res.ensemble.find(tv.id("z")) == nullptr);
  REQUIRE(res.skipped.size() == 1);
  CHECK(res.skipped[0].target == tv.id("z"));

  opt.threads = 3;
  const auto threaded = train_ensemble(bt, {}, opt);
  for (std::size_t i = 0; i < threaded.ensemble.models().size(); ++i) {
    CHECK(threaded.ensemble.models()[i].weights == res.ensemble.models()[i].weights);
  }

  const auto flagged = calibrate_ensemble(res.ensemble, bt, {CalibrationMode::Kind::kRecall, 1.0});
  CHECK(flagged.empty());
  CHECK(select_svm(res.ensemble, Sentence{sv.id("a"), sv.id("c")}, sv.unk_id()) == std::vector<TokenId>{tv.id("x")});
  CHECK(select_svm(res.ensemble, Sentence{sv.id("b")}, sv.unk_id()) == std::vector<TokenId>{tv.id("y")});

  // Lowering every threshold can only grow the selection.
  const Sentence probe{sv.id("c")};
  const auto before = select_svm(res.ensemble, probe, sv.unk_id());
  for (auto& m : res.ensemble.mutable_models()) m.threshold -= 1.0;
  const auto after = select_svm(res.ensemble, probe, sv.unk_id());
  CHECK(std::includes(after.begin(), after.end(), before.begin(), before.end()));

  testutil::TempDir dir("svm");
  res.ensemble.save(dir / "e.bin");
  const auto back = SvmEnsemble::load(dir / "e.bin");
  REQUIRE(back.models().size() == res.ensemble.models().size());
  for (std::size_t i = 0; i < back.models().size(); ++i) {
    CHECK(back.models()[i].weights == res.ensemble.models()[i].weights);
    CHECK(back.models()[i].threshold == res.ensemble.models()[i].threshold);
  }
  res.ensemble.write_tsv(dir / "e.tsv", sv, tv);
  CHECK(std::filesystem::file_size(dir / "e.tsv") > 0);
}
