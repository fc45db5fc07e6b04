#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>

#include "vocabsel/align.hpp"
#include "vocabsel/bench.hpp"
#include "vocabsel/cooccur.hpp"
#include "vocabsel/corpus.hpp"
#include "vocabsel/error.hpp"
#include "vocabsel/pca.hpp"
#include "vocabsel/phrase.hpp"
#include "vocabsel/select.hpp"
#include "vocabsel/svm.hpp"
#include "vocabsel/synth.hpp"

namespace vocabsel {

namespace {

using Path = std::filesystem::path;

struct Context {
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  bool quiet = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  void log(const std::string& msg) const {
    if (!quiet) *err << "vocabsel: " << msg << '\n';
  }
};

std::ofstream open_out(const Path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  return out;
}

void require_positive(std::size_t v, const std::string& what) {
  if (v == 0) throw Error(ErrorKind::kInvalidParameter, what + " must be positive");
}

struct BitextPaths {
  Path src, tgt, src_vocab, tgt_vocab;

  void add_to(CLI::App* app) {
    app->add_option("--src", src, "Source text, one tokenized sentence per line")->required();
    app->add_option("--tgt", tgt, "Target text, parallel to --src")->required();
    app->add_option("--src-vocab", src_vocab, "Source vocabulary TSV")->required();
    app->add_option("--tgt-vocab", tgt_vocab, "Target vocabulary TSV")->required();
  }

  Bitext load(const Context& ctx) const {
    auto sv = std::make_shared<const Vocab>(Vocab::read_tsv(src_vocab));
    auto tv = std::make_shared<const Vocab>(Vocab::read_tsv(tgt_vocab));
    EncodeStats stats;
    auto bitext = encode(read_tokenized(src), read_tokenized(tgt), sv, tv, &stats);
    if (stats.dropped_empty > 0) ctx.log("dropped " + std::to_string(stats.dropped_empty) + " pairs with an empty side");
    return bitext;
  }
};

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::string item;
  auto flush = [&] {
    if (item.empty()) return;
    std::size_t used = 0;
    std::size_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-' || item[0] == '+')
      throw Error(ErrorKind::kInvalidParameter, what + ": bad integer '" + item + "'");
    out.push_back(v);
    item.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ' ') {
      flush();
    } else {
      item.push_back(c);
    }
  }
  flush();
  if (out.empty()) throw Error(ErrorKind::kInvalidParameter, what + " must list at least one value");
  return out;
}

// Each subcommand owns its option storage; run() executes after parsing.
struct Command {
  virtual ~Command() = default;
  virtual void run(const Context& ctx) = 0;
};

struct BuildVocab : Command {
  Path input, output;
  std::size_t max_size = 100000;
  std::string unk{kDefaultUnk};

  explicit BuildVocab(CLI::App* app) {
    app->add_option("--input", input, "Tokenized text")->required();
    app->add_option("--output", output, "Vocabulary TSV")->required();
    app->add_option("--max-size", max_size, "Real words kept")->capture_default_str();
    app->add_option("--unk", unk, "Unknown-word symbol")->capture_default_str();
  }
  void run(const Context& ctx) override {
    const auto vocab = build_vocab(read_tokenized(input), max_size, unk);
    vocab.write_tsv(output);
    ctx.log(std::to_string(vocab.word_count()) + " words written to " + output.string());
  }
};

struct CountCooccur : Command {
  BitextPaths data;
  Path output, tsv, shortlist;
  std::string statistic = "joint";
  std::size_t k = 100;
  std::uint64_t pmi_floor = kDefaultPmiFloor;

  explicit CountCooccur(CLI::App* app) {
    data.add_to(app);
    app->add_option("--output", output, "Binary count table")->required();
    app->add_option("--tsv", tsv, "Also write the counts as TSV");
    app->add_option("--shortlist", shortlist, "Write per-word top-k shortlists");
    app->add_option("--statistic", statistic, "Shortlist ranking: joint | pmi")->capture_default_str();
    app->add_option("--k", k, "Shortlist length")->capture_default_str();
    app->add_option("--pmi-floor", pmi_floor, "Minimum target count for PMI ranking")->capture_default_str();
  }
  void run(const Context& ctx) override {
    Statistic stat;
    if (statistic == "joint") {
      stat = Statistic::kJoint;
    } else if (statistic == "pmi") {
      stat = Statistic::kPmi;
    } else {
      throw Error(ErrorKind::kInvalidParameter, "unknown statistic '" + statistic + "' (joint, pmi)");
    }
    const auto bitext = data.load(ctx);
    const auto table = count_cooccurrences(bitext, ctx.threads);
    table.save(output);
    if (!tsv.empty()) table.write_tsv(tsv, *bitext.src_vocab, *bitext.tgt_vocab);
    if (!shortlist.empty()) topk(table, k, stat, pmi_floor).write_tsv(shortlist, *bitext.src_vocab, *bitext.tgt_vocab);
    ctx.log(std::to_string(table.nnz()) + " distinct pairs, " + std::to_string(table.grand_total()) + " events");
  }
};

struct TrainPca : Command {
  Path cooccur, src_vocab, tgt_vocab, output, tsv, shortlist;
  std::size_t dim = 100, k = 100, iterations = 100;
  std::string metric = "reconstruction";

  explicit TrainPca(CLI::App* app) {
    app->add_option("--cooccur", cooccur, "Binary count table")->required();
    app->add_option("--src-vocab", src_vocab, "Source vocabulary TSV")->required();
    app->add_option("--tgt-vocab", tgt_vocab, "Target vocabulary TSV")->required();
    app->add_option("--dim", dim, "Embedding dimension")->capture_default_str();
    app->add_option("--iterations", iterations, "Subspace iteration budget")->capture_default_str();
    app->add_option("--output", output, "Binary embedding file")->required();
    app->add_option("--tsv", tsv, "Also write the embeddings as TSV");
    app->add_option("--shortlist", shortlist, "Write per-word top-k shortlists");
    app->add_option("--k", k, "Shortlist length")->capture_default_str();
    app->add_option("--metric", metric, "reconstruction | euclidean")->capture_default_str();
  }
  void run(const Context& ctx) override {
    PcaMetric m;
    if (metric == "reconstruction") {
      m = PcaMetric::kReconstruction;
    } else if (metric == "euclidean") {
      m = PcaMetric::kEuclidean;
    } else {
      throw Error(ErrorKind::kInvalidParameter, "unknown metric '" + metric + "' (reconstruction, euclidean)");
    }
    const auto sv = Vocab::read_tsv(src_vocab);
    const auto tv = Vocab::read_tsv(tgt_vocab);
    const auto table = CooccurTable::load(cooccur);
    if (table.num_src() != sv.size() || table.num_tgt() != tv.size())
      throw Error(ErrorKind::kInvalidInput, "count table dimensions do not match the vocabularies");
    FactorizeOptions fo;
    fo.max_iterations = iterations;
    fo.seed = ctx.seed;
    const auto h = hellinger_transform(table);
    const auto emb = factorize(h, dim, fo);
    emb.save(output);
    if (!tsv.empty()) emb.write_tsv(tsv, sv, tv);
    if (!shortlist.empty()) {
      const auto mask = seen_target_mask(table);
      NearestOptions no;
      no.metric = m;
      no.allowed_targets = mask;
      pca_shortlists(emb, seen_sources(table), k, no).write_tsv(shortlist, sv, tv);
    }
    ctx.log("rank-" + std::to_string(dim) + " factorization, relative error " +
            std::to_string(relative_frobenius_error(h, emb)));
  }
};

struct TrainAlign : Command {
  BitextPaths data;
  Path output, loglik;
  std::string direction = "fwd";
  AlignOptions opts;

  explicit TrainAlign(CLI::App* app) {
    data.add_to(app);
    app->add_option("--output", output, "Binary model file")->required();
    app->add_option("--direction", direction, "fwd (target given source) | rev")->capture_default_str();
    app->add_option("--iterations", opts.iterations, "EM iterations")->capture_default_str();
    app->add_option("--lambda", opts.lambda, "Diagonal tension")->capture_default_str();
    app->add_option("--p0", opts.p0, "Null-word probability")->capture_default_str();
    app->add_option("--loglik", loglik, "Write the log-likelihood entering each iteration");
  }
  void run(const Context& ctx) override {
    if (direction != "fwd" && direction != "rev")
      throw Error(ErrorKind::kInvalidParameter, "unknown direction '" + direction + "' (fwd, rev)");
    opts.threads = ctx.threads;
    auto bitext = data.load(ctx);
    const bool rev = direction == "rev";
    const auto result = train_em(rev ? bitext.reversed() : bitext, opts,
                                 rev ? Direction::kTargetToSource : Direction::kSourceToTarget);
    result.model.save(output);
    if (!loglik.empty()) {
      auto f = open_out(loglik);
      char buf[64];
      for (std::size_t i = 0; i < result.log_likelihood.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu\t%.10g\n", i + 1, result.log_likelihood[i]);
        f << buf;
      }
    }
    ctx.log("trained " + direction + " model with " + std::to_string(result.model.support_size()) + " parameters");
  }
};

/// Shortlists from alignment link counts, shared by align-viterbi and symmetrize.
void write_link_shortlist(const Bitext& bitext, std::span<const SentenceAlignment> al, const Path& path,
                          std::size_t k) {
  topk_aligned(count_links(bitext, al), k).write_tsv(path, *bitext.src_vocab, *bitext.tgt_vocab);
}

struct AlignViterbi : Command {
  BitextPaths data;
  Path model, output, shortlist;
  std::size_t k = 100;

  explicit AlignViterbi(CLI::App* app) {
    data.add_to(app);
    app->add_option("--model", model, "Model from train-align")->required();
    app->add_option("--output", output, "Alignments, one `i-j ...` line per pair")->required();
    app->add_option("--shortlist", shortlist, "Write top-k shortlists from the link counts");
    app->add_option("--k", k, "Shortlist length")->capture_default_str();
  }
  void run(const Context& ctx) override {
    const auto bitext = data.load(ctx);
    const auto m = AlignmentModel::load(model);
    const auto al = align_corpus(m, bitext);
    write_pharaoh(al, output);
    if (!shortlist.empty()) write_link_shortlist(bitext, al, shortlist, k);
    ctx.log("aligned " + std::to_string(al.size()) + " pairs");
  }
};

struct Symmetrize : Command {
  Path fwd, rev, output, shortlist;
  BitextPaths data;
  std::string method = "gdfa";
  std::size_t k = 100;

  explicit Symmetrize(CLI::App* app) {
    app->add_option("--fwd", fwd, "Source-to-target alignments")->required();
    app->add_option("--rev", rev, "Target-to-source alignments, as (source, target) links")->required();
    app->add_option("--output", output, "Symmetrized alignments")->required();
    app->add_option("--method", method, "gdfa | intersect | union")->capture_default_str();
    app->add_option("--shortlist", shortlist, "Write top-k shortlists (needs the bitext flags)");
    app->add_option("--k", k, "Shortlist length")->capture_default_str();
    app->add_option("--src", data.src, "Source text (for --shortlist)");
    app->add_option("--tgt", data.tgt, "Target text (for --shortlist)");
    app->add_option("--src-vocab", data.src_vocab, "Source vocabulary (for --shortlist)");
    app->add_option("--tgt-vocab", data.tgt_vocab, "Target vocabulary (for --shortlist)");
  }
  void run(const Context& ctx) override {
    SentenceAlignment (*combine)(const SentenceAlignment&, const SentenceAlignment&);
    if (method == "gdfa") {
      combine = symmetrize_gdfa;
    } else if (method == "intersect") {
      combine = intersect;
    } else if (method == "union") {
      combine = unite;
    } else {
      throw Error(ErrorKind::kInvalidParameter, "unknown method '" + method + "' (gdfa, intersect, union)");
    }
    const auto a = read_pharaoh(fwd);
    const auto b = read_pharaoh(rev);
    if (a.size() != b.size()) {
      throw Error(ErrorKind::kInvalidInput, "alignment files differ in length: " + std::to_string(a.size()) +
                                                " vs " + std::to_string(b.size()));
    }
    std::vector<SentenceAlignment> sym;
    sym.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sym.push_back(combine(a[i], b[i]));
    write_pharaoh(sym, output);
    if (!shortlist.empty()) {
      if (data.src.empty() || data.tgt.empty() || data.src_vocab.empty() || data.tgt_vocab.empty())
        throw Error(ErrorKind::kInvalidParameter, "--shortlist needs --src, --tgt, --src-vocab and --tgt-vocab");
      const auto bitext = data.load(ctx);
      if (bitext.size() != sym.size())
        throw Error(ErrorKind::kInvalidInput, "alignment count does not match the bitext");
      write_link_shortlist(bitext, sym, shortlist, k);
    }
    ctx.log("symmetrized " + std::to_string(sym.size()) + " pairs");
  }
};

struct ExtractPhrases : Command {
  BitextPaths data;
  Path alignment, output;
  std::size_t max_len = 5;
  std::uint64_t min_count = 5;

  explicit ExtractPhrases(CLI::App* app) {
    data.add_to(app);
    app->add_option("--alignment", alignment, "Alignments for the bitext")->required();
    app->add_option("--output", output, "Phrase table")->required();
    app->add_option("--max-len", max_len, "Longest phrase on either side")->capture_default_str();
    app->add_option("--min-count", min_count, "Drop pairs extracted fewer times")->capture_default_str();
  }
  void run(const Context& ctx) override {
    require_positive(max_len, "--max-len");
    const auto bitext = data.load(ctx);
    const auto al = read_pharaoh(alignment);
    if (al.size() != bitext.size())
      throw Error(ErrorKind::kInvalidInput, "alignment count does not match the bitext");
    const auto table = prune(extract_phrases(bitext, al, max_len), min_count);
    table.write_tsv(output, *bitext.src_vocab, *bitext.tgt_vocab);
    ctx.log(std::to_string(table.pair_count()) + " phrase pairs");
  }
};

struct TrainSvm : Command {
  BitextPaths data;
  Path output, tsv;
  std::size_t max_targets = 0;
  EnsembleOptions opts;

  explicit TrainSvm(CLI::App* app) {
    data.add_to(app);
    app->add_option("--output", output, "Binary ensemble file")->required();
    app->add_option("--tsv", tsv, "Also write the weights as TSV");
    app->add_option("--epochs", opts.train.epochs, "SGD epochs")->capture_default_str();
    app->add_option("--reg", opts.train.reg, "L2 regularization")->capture_default_str();
    app->add_option("--eta0", opts.train.eta0, "Initial learning rate, 0 = automatic")->capture_default_str();
    app->add_option("--negative-ratio", opts.negative_ratio, "Negatives per positive")->capture_default_str();
    app->add_option("--min-positives", opts.min_positives, "Positive sentences needed")->capture_default_str();
    app->add_option("--max-targets", max_targets, "Only the n most frequent target words, 0 = all")
        ->capture_default_str();
  }
  void run(const Context& ctx) override {
    opts.threads = ctx.threads;
    opts.train.seed = ctx.seed;
    const auto bitext = data.load(ctx);
    std::vector<TokenId> targets;
    if (max_targets > 0) {
      const auto n = std::min(max_targets, bitext.tgt_vocab->word_count());
      for (std::size_t t = 0; t < n; ++t) targets.push_back(static_cast<TokenId>(t));
    }
    const auto result = train_ensemble(bitext, targets, opts);
    result.ensemble.save(output);
    if (!tsv.empty()) result.ensemble.write_tsv(tsv, *bitext.src_vocab, *bitext.tgt_vocab);
    ctx.log(std::to_string(result.ensemble.models().size()) + " classifiers, " +
            std::to_string(result.skipped.size()) + " words skipped");
  }
};

struct CalibrateSvm : Command {
  BitextPaths data;
  Path model, output;
  std::string mode = "recall";
  double value = 0.9;

  explicit CalibrateSvm(CLI::App* app) {
    data.add_to(app);
    app->add_option("--model", model, "Ensemble from train-svm")->required();
    app->add_option("--output", output, "Calibrated ensemble")->required();
    app->add_option("--mode", mode, "recall | frequency")->capture_default_str();
    app->add_option("--value", value, "Recall target or frequency multiplier")->capture_default_str();
  }
  void run(const Context& ctx) override {
    CalibrationMode cm;
    if (mode == "recall") {
      cm.kind = CalibrationMode::Kind::kRecall;
    } else if (mode == "frequency") {
      cm.kind = CalibrationMode::Kind::kFrequency;
    } else {
      throw Error(ErrorKind::kInvalidParameter, "unknown mode '" + mode + "' (recall, frequency)");
    }
    cm.value = value;
    const auto validation = data.load(ctx);
    auto ensemble = SvmEnsemble::load(model);
    const auto flagged = calibrate_ensemble(ensemble, validation, cm);
    ensemble.save(output);
    ctx.log("calibrated " + std::to_string(ensemble.models().size()) + " classifiers, " +
            std::to_string(flagged.size()) + " flagged");
  }
};

/// Selector flags; values given on the command line override the config file.
struct SelectorFlags {
  Path config;
  std::optional<std::string> strategy;
  std::optional<std::size_t> k, common_n, phrase_max_len;
  std::optional<Path> src_vocab, tgt_vocab, shortlist, phrase_table, svm;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "Selector config file (key = value lines)");
    app->add_option("--strategy", strategy, "cooccur | pmi | pca | word_align | phrase | svm");
    app->add_option("--k", k, "Candidates per source word, or target phrases per matched source phrase");
    app->add_option("--common", common_n, "Most frequent target words always included");
    app->add_option("--src-vocab", src_vocab, "Source vocabulary TSV");
    app->add_option("--tgt-vocab", tgt_vocab, "Target vocabulary TSV");
    app->add_option("--shortlist", shortlist, "Word-level shortlist TSV");
    app->add_option("--phrase-table", phrase_table, "Phrase table");
    app->add_option("--phrase-max-len", phrase_max_len, "Longest source phrase in the table");
    app->add_option("--svm", svm, "Classifier ensemble");
  }

  SelectorSpec spec() const {
    SelectorSpec s = config.empty() ? SelectorSpec{} : read_selector_spec(config);
    if (strategy) s.config.strategy = parse_strategy(*strategy);
    if (k) s.config.k = *k;
    if (common_n) s.config.common_n = *common_n;
    if (phrase_max_len) s.phrase_max_len = *phrase_max_len;
    if (src_vocab) s.src_vocab = *src_vocab;
    if (tgt_vocab) s.tgt_vocab = *tgt_vocab;
    if (shortlist) s.shortlist = *shortlist;
    if (phrase_table) s.phrase_table = *phrase_table;
    if (svm) s.svm = *svm;
    return s;
  }
};

struct Select : Command {
  SelectorFlags flags;
  Path input, reference, output;
  std::size_t batch_size = 1;

  explicit Select(CLI::App* app) {
    flags.add_to(app);
    app->add_option("--input", input, "Source sentences")->required();
    app->add_option("--reference", reference, "Target references; adds them to each selection");
    app->add_option("--batch-size", batch_size, "Consecutive sentences per selection")->capture_default_str();
    app->add_option("--output", output, "Selection dump, one line per batch (default stdout)");
  }
  void run(const Context& ctx) override {
    require_positive(batch_size, "--batch-size");
    const auto selector = load_selector(flags.spec());
    const auto& sv = *selector.resources().src_vocab;
    const auto& tv = *selector.resources().tgt_vocab;
    const auto src = load_sentences(input, sv);
    std::vector<Sentence> ref;
    if (!reference.empty()) {
      ref = load_sentences(reference, tv);
      if (ref.size() != src.size()) {
        throw Error(ErrorKind::kInvalidInput, "--reference has " + std::to_string(ref.size()) +
                                                  " lines but --input has " + std::to_string(src.size()));
      }
    }
    std::ofstream file;
    if (!output.empty()) file = open_out(output);
    std::ostream& dump = output.empty() ? *ctx.out : file;
    std::size_t oov = 0;
    double total = 0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < src.size(); b += batch_size) {
      const auto e = std::min(src.size(), b + batch_size);
      const std::span<const Sentence> part(src.data() + b, e - b);
      VocabSubset subset;
      if (ref.empty()) {
        subset = selector.select_batch(part);
      } else {
        auto t = selector.select_training(part, std::span<const Sentence>(ref.data() + b, e - b));
        oov += t.oov_tokens;
        subset = std::move(t.subset);
      }
      write_selection_line(dump, subset, tv);
      total += static_cast<double>(subset.size());
      ++n;
    }
    ctx.log(std::to_string(n) + " selections, mean size " + std::to_string(n ? total / static_cast<double>(n) : 0.0) +
            (ref.empty() ? "" : ", " + std::to_string(oov) + " reference tokens out of vocabulary"));
  }

  static std::vector<Sentence> load_sentences(const Path& path, const Vocab& vocab) {
    std::vector<Sentence> out;
    for (const auto& line : read_tokenized(path)) out.push_back(encode_sentence(line, vocab));
    return out;
  }
};

/// Test bitext encoded with a selector's vocabularies.
Bitext load_eval_bitext(const Selector& selector, const Path& src, const Path& tgt, const Context& ctx) {
  EncodeStats stats;
  auto bitext = encode(read_tokenized(src), read_tokenized(tgt), selector.resources().src_vocab,
                       selector.resources().tgt_vocab, &stats);
  if (stats.dropped_empty > 0) ctx.log("dropped " + std::to_string(stats.dropped_empty) + " pairs with an empty side");
  return bitext;
}

struct BenchCoverage : Command {
  SelectorFlags flags;
  Path src, tgt, output, per_sentence;
  std::size_t batch_size = 1;

  explicit BenchCoverage(CLI::App* app) {
    flags.add_to(app);
    app->add_option("--src", src, "Source side of the test set")->required();
    app->add_option("--tgt", tgt, "Reference side of the test set")->required();
    app->add_option("--batch-size", batch_size, "Sentences per selection")->capture_default_str();
    app->add_option("--output", output, "CSV report (default stdout)");
    app->add_option("--per-sentence", per_sentence, "Write `subset_size covered reference` per sentence");
  }
  void run(const Context& ctx) override {
    require_positive(batch_size, "--batch-size");
    const auto spec = flags.spec();
    const auto selector = load_selector(spec);
    const auto bitext = load_eval_bitext(selector, src, tgt, ctx);
    std::map<Strategy, Selector> selectors{{spec.config.strategy, selector}};
    const SweepConfig cfg{spec.config.strategy, spec.config.k, spec.config.common_n};
    const auto rows = sweep(selectors, std::span(&cfg, 1), bitext, batch_size, 1);
    std::ofstream file;
    if (!output.empty()) file = open_out(output);
    write_sweep_csv(output.empty() ? *ctx.out : file, rows);
    if (!per_sentence.empty()) {
      auto f = open_out(per_sentence);
      for (const auto& s : rows[0].report.per_sentence) f << s.subset_size << ' ' << s.covered << ' ' << s.reference << '\n';
    }
  }
};

struct BenchSpeed : Command {
  std::size_t vocab_size = 100000, dim = 512;
  std::string sizes = "500,1000,2000,5000,10000,100000";
  ScoringOptions opts;
  Path output;

  explicit BenchSpeed(CLI::App* app) {
    app->add_option("--vocab-size", vocab_size, "Full vocabulary size")->capture_default_str();
    app->add_option("--dim", dim, "Hidden dimension")->capture_default_str();
    app->add_option("--sizes", sizes, "Comma-separated subset sizes")->capture_default_str();
    app->add_option("--steps", opts.steps, "Timed steps per size (>= 100)")->capture_default_str();
    app->add_option("--output", output, "CSV report (default stdout)");
  }
  void run(const Context& ctx) override {
    if (opts.steps < 100) throw Error(ErrorKind::kInvalidParameter, "--steps must be at least 100");
    opts.seed = ctx.seed;
    const auto list = parse_size_list(sizes, "--sizes");
    const auto report = scoring_bench(vocab_size, dim, list, opts);
    std::ofstream file;
    if (!output.empty()) file = open_out(output);
    write_timing_csv(output.empty() ? *ctx.out : file, report);
    std::vector<double> xs, ys;
    for (const auto& r : report.rows) {
      if (!r.gathered) continue;
      xs.push_back(static_cast<double>(r.vocab_size));
      ys.push_back(r.mean_time_ms);
    }
    if (xs.size() >= 2) {
      const auto fit = fit_linear(xs, ys);
      ctx.log("time = " + std::to_string(fit.slope) + " * v + " + std::to_string(fit.intercept) +
              " ms, R^2 = " + std::to_string(fit.r2));
    }
  }
};

struct Sweep : Command {
  std::vector<Path> configs;
  Path src, tgt, output;
  std::string ks = "10,20,50", commons = "0,1000,2000", batch_sizes = "1";

  explicit Sweep(CLI::App* app) {
    app->add_option("--config", configs, "Selector config file per strategy (repeatable)")->required();
    app->add_option("--src", src, "Source side of the test set")->required();
    app->add_option("--tgt", tgt, "Reference side of the test set")->required();
    app->add_option("--k", ks, "Comma-separated k values")->capture_default_str();
    app->add_option("--common", commons, "Comma-separated common_n values")->capture_default_str();
    app->add_option("--batch-size", batch_sizes, "Comma-separated batch sizes")->capture_default_str();
    app->add_option("--output", output, "CSV report (default stdout)");
  }
  void run(const Context& ctx) override {
    const auto k_list = parse_size_list(ks, "--k");
    const auto c_list = parse_size_list(commons, "--common");
    const auto b_list = parse_size_list(batch_sizes, "--batch-size");
    for (auto b : b_list) require_positive(b, "--batch-size");
    std::map<Strategy, Selector> selectors;
    std::vector<Strategy> order;
    for (const auto& path : configs) {
      auto sel = load_selector(read_selector_spec(path));
      const auto st = sel.config().strategy;
      if (selectors.contains(st))
        throw Error(ErrorKind::kInvalidParameter, "two configs for strategy " + std::string(strategy_name(st)));
      order.push_back(st);
      selectors.emplace(st, std::move(sel));
    }
    const auto& first = selectors.at(order.front());
    for (const auto& [st, sel] : selectors) {
      if (sel.resources().tgt_vocab->size() != first.resources().tgt_vocab->size() ||
          sel.resources().src_vocab->size() != first.resources().src_vocab->size())
        throw Error(ErrorKind::kInvalidInput, "sweep configs use different vocabularies");
    }
    const auto bitext = load_eval_bitext(first, src, tgt, ctx);
    std::vector<SweepRow> rows;
    for (auto b : b_list) {
      std::vector<SweepConfig> cfgs;
      for (auto st : order)
        for (auto k : k_list)
          for (auto c : c_list) cfgs.push_back({st, k, c});
      auto part = sweep(selectors, cfgs, bitext, b, ctx.threads);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    std::ofstream file;
    if (!output.empty()) file = open_out(output);
    write_sweep_csv(output.empty() ? *ctx.out : file, rows);
    ctx.log(std::to_string(rows.size()) + " configurations evaluated");
  }
};

struct Split : Command {
  Path src, tgt, out_prefix;
  std::size_t heldout = 1000, max_len = 0;

  explicit Split(CLI::App* app) {
    app->add_option("--src", src, "Source text")->required();
    app->add_option("--tgt", tgt, "Target text")->required();
    app->add_option("--heldout", heldout, "Pairs moved to the held-out part")->capture_default_str();
    app->add_option("--max-len", max_len, "Drop pairs longer than this on either side, 0 = keep all")
        ->capture_default_str();
    app->add_option("--output-prefix", out_prefix, "Writes PREFIX.{train,heldout}.{src,tgt}")->required();
  }
  void run(const Context& ctx) override {
    auto s = read_tokenized(src);
    auto t = read_tokenized(tgt);
    if (s.size() != t.size()) {
      throw Error(ErrorKind::kInvalidInput, "line counts differ: " + std::to_string(s.size()) + " source vs " +
                                                std::to_string(t.size()) + " target");
    }
    if (max_len > 0) filter_lines_by_length(s, t, max_len);
    if (heldout > s.size())
      throw Error(ErrorKind::kInvalidParameter, "--heldout exceeds the " + std::to_string(s.size()) + " pairs");
    std::vector<std::size_t> idx(s.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(ctx.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<TokenizedLine> hs, ht, ts, tt;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto& ds = i < heldout ? hs : ts;
      auto& dt = i < heldout ? ht : tt;
      ds.push_back(std::move(s[idx[i]]));
      dt.push_back(std::move(t[idx[i]]));
    }
    const auto p = out_prefix.string();
    write_text(p + ".train.src", ts);
    write_text(p + ".train.tgt", tt);
    write_text(p + ".heldout.src", hs);
    write_text(p + ".heldout.tgt", ht);
    ctx.log(std::to_string(ts.size()) + " training and " + std::to_string(hs.size()) + " held-out pairs");
  }
};

struct GenSynthetic : Command {
  SynthOptions opts;
  Path out_src, out_tgt;
  bool copy = false;
  std::size_t symbols = 50;

  explicit GenSynthetic(CLI::App* app) {
    app->add_option("--pairs", opts.pairs, "Sentence pairs")->capture_default_str();
    app->add_option("--concepts", opts.concepts, "Content words per side")->capture_default_str();
    app->add_option("--topics", opts.topics, "Topic clusters")->capture_default_str();
    app->add_option("--min-len", opts.min_len, "Shortest source sentence")->capture_default_str();
    app->add_option("--max-len", opts.max_len, "Longest source sentence")->capture_default_str();
    app->add_flag("--copy", copy, "Identical source and target lines instead");
    app->add_option("--symbols", symbols, "Alphabet size with --copy")->capture_default_str();
    app->add_option("--output-src", out_src, "Source text")->required();
    app->add_option("--output-tgt", out_tgt, "Target text")->required();
  }
  void run(const Context& ctx) override {
    opts.seed = ctx.seed;
    const auto corpus = copy ? generate_copy(opts.pairs, symbols, opts.min_len, opts.max_len, ctx.seed)
                             : generate_parallel(opts);
    write_text(out_src, corpus.src);
    write_text(out_tgt, corpus.tgt);
    ctx.log(std::to_string(corpus.src.size()) + " pairs written");
  }
};

template <typename T>
std::unique_ptr<Command> make(CLI::App* sub) {
  return std::make_unique<T>(sub);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target vocabulary selection for neural machine translation", "vocabsel"};
  app.require_subcommand(1);
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  app.add_option("--threads", ctx.threads, "Worker threads for shardable stages")->capture_default_str();
  app.add_option("--seed", ctx.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_flag("--quiet", ctx.quiet, "No progress messages on stderr");

  using Factory = std::unique_ptr<Command> (*)(CLI::App*);
  const std::pair<const char*, std::pair<const char*, Factory>> table[] = {
      {"build-vocab", {"Frequency-ranked vocabulary from tokenized text", make<BuildVocab>}},
      {"count-cooccur", {"Sentence-level co-occurrence counts and shortlists", make<CountCooccur>}},
      {"train-pca", {"Hellinger PCA embeddings and nearest-target shortlists", make<TrainPca>}},
      {"train-align", {"Diagonal-prior IBM Model 2 by EM", make<TrainAlign>}},
      {"align-viterbi", {"Viterbi alignments from a trained model", make<AlignViterbi>}},
      {"symmetrize", {"Combine two alignment directions", make<Symmetrize>}},
      {"extract-phrases", {"Phrase table from aligned sentence pairs", make<ExtractPhrases>}},
      {"train-svm", {"One linear classifier per target word", make<TrainSvm>}},
      {"calibrate-svm", {"Set classifier thresholds on held-out data", make<CalibrateSvm>}},
      {"select", {"Dump vocabulary selections for source sentences", make<Select>}},
      {"bench-coverage", {"Coverage and average vocabulary size of one selector", make<BenchCoverage>}},
      {"bench-speed", {"Output-layer scoring time versus vocabulary size", make<BenchSpeed>}},
      {"sweep", {"Coverage report over strategies, k, common_n and batch sizes", make<Sweep>}},
      {"split", {"Seeded train / held-out split of a bitext", make<Split>}},
      {"gen-synthetic", {"Generate a synthetic parallel corpus", make<GenSynthetic>}},
  };
  std::vector<std::pair<CLI::App*, std::unique_ptr<Command>>> commands;
  for (const auto& [name, entry] : table) {
    auto* sub = app.add_subcommand(name, entry.first);
    commands.emplace_back(sub, entry.second(sub));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << kind_name(ErrorKind::kInvalidParameter) << ": " << e.what() << '\n';
    return 2;
  }
  try {
    for (auto& [sub, cmd] : commands) {
      if (sub->parsed()) cmd->run(ctx);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << kind_name(ErrorKind::kInvalidInput) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vocabsel
