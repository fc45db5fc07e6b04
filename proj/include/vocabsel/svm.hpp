#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vocabsel/corpus.hpp"

namespace vocabsel {

/// Binary bag-of-words: sorted, distinct, in-vocabulary source ids.
using SparseFeatures = std::vector<TokenId>;

SparseFeatures featurize(std::span<const TokenId> src_sentence, TokenId unk_id);

/// Linear classifier predicting whether one target word occurs in the
/// translation of a source sentence.
struct SvmModel {
  TokenId target_id = 0;
  std::vector<std::pair<TokenId, double>> weights;  // sorted by source id, nonzero only
  double bias = 0.0;
  double threshold = 0.0;

  /// Sum of the weights of present features in ascending id order, plus bias.
  double score(std::span<const TokenId> features) const;
  double weight(TokenId feature) const;
};

struct SvmTrainOptions {
  std::size_t epochs = 10;
  double reg = 1e-4;
  /// Initial learning rate; 0 picks one on a subsample of the data.
  double eta0 = 0.0;
  /// Bias updates are scaled by this factor.
  double bias_rate = 0.01;
  std::uint64_t seed = 1;
};

/// Regularized hinge objective: mean hinge loss + reg/2 |w|^2.
double svm_objective(const SvmModel& model, std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys,
                     double reg);

/// SGD on the L2-regularized hinge loss with eta_t = 1/(reg (t + t0)).
/// `ys` holds +1/-1 labels. Throws if only one class is present.
SvmModel train_one(std::span<const SparseFeatures> xs, std::span<const std::int8_t> ys, std::size_t num_features,
                   const SvmTrainOptions& options, TokenId target_id = 0);

/// All models plus an inverted index (source feature -> model weights) so a
/// sentence is scored touching only the features it contains.
class SvmEnsemble {
 public:
  SvmEnsemble() = default;
  SvmEnsemble(std::vector<SvmModel> models, double reg, std::size_t epochs);

  const std::vector<SvmModel>& models() const { return models_; }
  std::vector<SvmModel>& mutable_models() { return models_; }
  const SvmModel* find(TokenId target) const;
  double reg() const { return reg_; }
  std::size_t epochs() const { return epochs_; }

  /// Rebuilds the inverted index; call after editing weights.
  void reindex();

  /// One score per model (in models() order).
  std::vector<double> scores(std::span<const TokenId> features) const;

  void save(const std::filesystem::path& path) const;
  static SvmEnsemble load(const std::filesystem::path& path);
  /// `target<TAB>bias<TAB>threshold<TAB>src:w src:w ...`
  void write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const;

 private:
  std::vector<SvmModel> models_;
  double reg_ = 0.0;
  std::size_t epochs_ = 0;
  std::vector<std::uint64_t> index_ptr_;
  std::vector<std::pair<std::uint32_t, double>> index_;  // (model index, weight)
};

struct EnsembleOptions {
  SvmTrainOptions train;
  /// Negatives sampled per positive sentence.
  double negative_ratio = 10.0;
  std::size_t min_positives = 5;
  std::size_t threads = 1;
};

struct SkippedWord {
  TokenId target;
  std::string reason;
};

struct EnsembleTrainResult {
  SvmEnsemble ensemble;
  std::vector<SkippedWord> skipped;
};

/// Trains one model per eligible target word. `targets` empty means every
/// real target word. Per-word seeds derive from the target id, so the result
/// does not depend on scheduling or thread count.
EnsembleTrainResult train_ensemble(const Bitext& bitext, std::span<const TokenId> targets,
                                   const EnsembleOptions& options);

struct CalibrationMode {
  enum class Kind { kRecall, kFrequency } kind = Kind::kRecall;
  /// Recall target r in (0,1] or frequency multiplier m >= 0.
  double value = 1.0;
};

struct CalibrationResult {
  double threshold = 0.0;
  /// True when the target could not be met and the model always fires.
  bool flagged = false;
};

/// Threshold from validation scores and labels (+1 = word present).
CalibrationResult calibrate_scores(std::span<const double> scores, std::span<const std::int8_t> labels,
                                   const CalibrationMode& mode);

CalibrationResult calibrate(const SvmModel& model, const Bitext& validation, const CalibrationMode& mode);

/// Calibrates every model in place; returns the flagged target ids.
std::vector<TokenId> calibrate_ensemble(SvmEnsemble& ensemble, const Bitext& validation, const CalibrationMode& mode);

/// Targets whose score reaches their threshold. Sorted ids.
std::vector<TokenId> select_svm(const SvmEnsemble& ensemble, std::span<const TokenId> src_sentence, TokenId src_unk);

}  // namespace vocabsel
