#include "vocabsel/select.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr std::pair<Strategy, std::string_view> kStrategyNames[] = {
    {Strategy::kCooccur, "cooccur"},     {Strategy::kPmi, "pmi"},       {Strategy::kPca, "pca"},
    {Strategy::kWordAlign, "word_align"}, {Strategy::kPhrase, "phrase"}, {Strategy::kSvm, "svm"},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::kMalformedFormat,
                "selector config: " + std::string(key) + " expects a non-negative integer, got '" +
                    std::string(value) + "'");
  }
  return out;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (const auto& [st, name] : kStrategyNames)
    if (st == s) return name;
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (const auto& [st, n] : kStrategyNames)
    if (n == name) return st;
  throw Error(ErrorKind::kInvalidParameter,
              "unknown strategy '" + std::string(name) + "' (cooccur, pmi, pca, word_align, phrase, svm)");
}

bool is_word_level(Strategy s) { return s != Strategy::kPhrase && s != Strategy::kSvm; }

Statistic strategy_statistic(Strategy s) {
  switch (s) {
    case Strategy::kCooccur:
      return Statistic::kJoint;
    case Strategy::kPmi:
      return Statistic::kPmi;
    case Strategy::kPca:
      return Statistic::kPca;
    case Strategy::kWordAlign:
      return Statistic::kAlignment;
    default:
      throw Error(ErrorKind::kInvalidParameter,
                  "strategy " + std::string(strategy_name(s)) + " has no word-level shortlist");
  }
}

// ---------------------------------------------------------------------------
// VocabSubset

VocabSubset::VocabSubset(std::vector<TokenId> ids, Origin origin) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  origins_.assign(ids_.size(), origin);
}

bool VocabSubset::contains(TokenId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

std::optional<std::size_t> VocabSubset::local_of(TokenId id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

Origin VocabSubset::origin_of(TokenId id) const {
  const auto local = local_of(id);
  if (!local) throw Error(ErrorKind::kInvalidInput, "id " + std::to_string(id) + " is not in the subset");
  return origins_[*local];
}

void VocabSubset::add(std::span<const TokenId> ids, Origin origin) {
  merge(VocabSubset(std::vector<TokenId>(ids.begin(), ids.end()), origin));
}

void VocabSubset::merge(const VocabSubset& other) {
  if (other.empty()) return;
  std::vector<TokenId> ids;
  std::vector<Origin> origins;
  ids.reserve(ids_.size() + other.ids_.size());
  origins.reserve(ids.capacity());
  std::size_t i = 0, j = 0;
  while (i < ids_.size() || j < other.ids_.size()) {
    if (j == other.ids_.size() || (i < ids_.size() && ids_[i] < other.ids_[j])) {
      ids.push_back(ids_[i]);
      origins.push_back(origins_[i++]);
    } else if (i == ids_.size() || other.ids_[j] < ids_[i]) {
      ids.push_back(other.ids_[j]);
      origins.push_back(other.origins_[j++]);
    } else {
      ids.push_back(ids_[i]);
      origins.push_back(origins_[i++]);
      ++j;
    }
  }
  ids_ = std::move(ids);
  origins_ = std::move(origins);
}

VocabSubset add_common(VocabSubset subset, const Vocab& tgt_vocab, std::size_t n) {
  if (n > tgt_vocab.size()) {
    throw Error(ErrorKind::kInvalidParameter, "common_n " + std::to_string(n) + " exceeds the target vocabulary size " +
                                                  std::to_string(tgt_vocab.size()));
  }
  // The unknown word is never a selection candidate.
  n = std::min(n, tgt_vocab.word_count());
  std::vector<TokenId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<TokenId>(i);
  subset.merge(VocabSubset(std::move(ids), Origin::kCommon));
  return subset;
}

Remap remap(const VocabSubset& subset) {
  Remap r;
  r.gather.assign(subset.global_ids().begin(), subset.global_ids().end());
  r.local_of.reserve(r.gather.size());
  for (std::size_t i = 0; i < r.gather.size(); ++i) r.local_of.emplace(r.gather[i], static_cast<std::uint32_t>(i));
  return r;
}

// ---------------------------------------------------------------------------
// Selector

Selector::Selector(SelectorConfig config, SelectorResources resources)
    : config_(config), resources_(std::move(resources)) {
  if (!resources_.src_vocab || !resources_.tgt_vocab)
    throw Error(ErrorKind::kInvalidParameter, "selector needs source and target vocabularies");
  if (config_.common_n > resources_.tgt_vocab->size()) {
    throw Error(ErrorKind::kInvalidParameter, "common_n " + std::to_string(config_.common_n) +
                                                  " exceeds the target vocabulary size " +
                                                  std::to_string(resources_.tgt_vocab->size()));
  }
  const auto strategy = std::string(strategy_name(config_.strategy));
  if (is_word_level(config_.strategy)) {
    if (!resources_.shortlist) throw Error(ErrorKind::kInvalidParameter, strategy + " selection needs a shortlist table");
    if (resources_.shortlist->provenance != strategy_statistic(config_.strategy)) {
      throw Error(ErrorKind::kInvalidParameter,
                  strategy + " selection given a " +
                      std::string(statistic_name(resources_.shortlist->provenance)) + " shortlist");
    }
  } else if (config_.strategy == Strategy::kPhrase && !resources_.phrases) {
    throw Error(ErrorKind::kInvalidParameter, "phrase selection needs a phrase table");
  } else if (config_.strategy == Strategy::kSvm && !resources_.svm) {
    throw Error(ErrorKind::kInvalidParameter, "svm selection needs a classifier ensemble");
  }
}

Selector Selector::with(std::size_t k, std::size_t common_n) const {
  SelectorConfig c = config_;
  c.k = k;
  c.common_n = common_n;
  return Selector(c, resources_);
}

std::vector<TokenId> Selector::select_word(TokenId s) const {
  if (!is_word_level(config_.strategy)) {
    throw Error(ErrorKind::kInvalidParameter,
                "select_word is undefined for " + std::string(strategy_name(config_.strategy)));
  }
  if (resources_.src_vocab->is_unk(s)) return {};
  const auto list = resources_.shortlist->list(s);
  const auto n = std::min(list.size(), config_.k);
  return {list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<TokenId> Selector::select_raw(std::span<const TokenId> src_sentence) const {
  switch (config_.strategy) {
    case Strategy::kPhrase:
      return select_phrase(*resources_.phrases, src_sentence, config_.k);
    case Strategy::kSvm:
      return select_svm(*resources_.svm, src_sentence, resources_.src_vocab->unk_id());
    default:
      break;
  }
  std::vector<TokenId> out;
  std::vector<TokenId> seen(src_sentence.begin(), src_sentence.end());
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (TokenId s : seen) {
    const auto w = select_word(s);
    out.insert(out.end(), w.begin(), w.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

VocabSubset Selector::select_sentence(std::span<const TokenId> src_sentence) const {
  return add_common(VocabSubset(select_raw(src_sentence), Origin::kSelected), *resources_.tgt_vocab,
                    config_.common_n);
}

VocabSubset Selector::select_batch(std::span<const Sentence> sentences) const {
  std::vector<TokenId> ids;
  for (const auto& s : sentences) {
    const auto sel = select_raw(s);
    ids.insert(ids.end(), sel.begin(), sel.end());
  }
  return add_common(VocabSubset(std::move(ids), Origin::kSelected), *resources_.tgt_vocab, config_.common_n);
}

VocabSubset Selector::select_batch(const Bitext& bitext, const Batch& batch) const {
  std::vector<Sentence> sentences;
  sentences.reserve(batch.indices.size());
  for (auto i : batch.indices) sentences.push_back(bitext.pairs.at(i).src);
  return select_batch(sentences);
}

TrainingSelection Selector::select_training(std::span<const Sentence> sentences,
                                            std::span<const Sentence> references) const {
  if (sentences.size() != references.size()) {
    throw Error(ErrorKind::kInvalidInput, "select_training: " + std::to_string(sentences.size()) +
                                              " sentences but " + std::to_string(references.size()) +
                                              " references");
  }
  TrainingSelection out{select_batch(sentences), 0};
  const TokenId unk = resources_.tgt_vocab->unk_id();
  std::vector<TokenId> ref_ids;
  for (const auto& ref : references) {
    for (TokenId t : ref) {
      if (t == unk || t >= resources_.tgt_vocab->size()) {
        ++out.oov_tokens;
      } else {
        ref_ids.push_back(t);
      }
    }
  }
  out.subset.add(ref_ids, Origin::kReference);
  return out;
}

TrainingSelection Selector::select_training(const Bitext& bitext, const Batch& batch) const {
  std::vector<Sentence> src, ref;
  src.reserve(batch.indices.size());
  ref.reserve(batch.indices.size());
  for (auto i : batch.indices) {
    src.push_back(bitext.pairs.at(i).src);
    ref.push_back(bitext.pairs.at(i).tgt);
  }
  return select_training(src, ref);
}

// ---------------------------------------------------------------------------
// Config file

SelectorSpec parse_selector_spec(std::string_view text, const std::filesystem::path& base_dir) {
  SelectorSpec spec;
  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kMalformedFormat,
                  "selector config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "strategy") {
      spec.config.strategy = parse_strategy(value);
    } else if (key == "k") {
      spec.config.k = parse_count(key, value);
    } else if (key == "common_n") {
      spec.config.common_n = parse_count(key, value);
    } else if (key == "src_vocab") {
      spec.src_vocab = resolve(value);
    } else if (key == "tgt_vocab") {
      spec.tgt_vocab = resolve(value);
    } else if (key == "shortlist") {
      spec.shortlist = resolve(value);
    } else if (key == "phrase_table") {
      spec.phrase_table = resolve(value);
    } else if (key == "phrase_max_len") {
      spec.phrase_max_len = parse_count(key, value);
    } else if (key == "svm") {
      spec.svm = resolve(value);
    } else {
      throw Error(ErrorKind::kMalformedFormat, "selector config line " + std::to_string(line_no) +
                                                   ": unknown key '" + std::string(key) + "'");
    }
  }
  return spec;
}

SelectorSpec read_selector_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_selector_spec(ss.str(), path.parent_path());
}

Selector load_selector(const SelectorSpec& spec) {
  if (spec.src_vocab.empty() || spec.tgt_vocab.empty())
    throw Error(ErrorKind::kInvalidParameter, "selector config needs src_vocab and tgt_vocab");
  SelectorResources r;
  r.src_vocab = std::make_shared<const Vocab>(Vocab::read_tsv(spec.src_vocab));
  r.tgt_vocab = std::make_shared<const Vocab>(Vocab::read_tsv(spec.tgt_vocab));
  const auto strategy = spec.config.strategy;
  if (is_word_level(strategy)) {
    if (spec.shortlist.empty()) throw Error(ErrorKind::kInvalidParameter, "selector config needs shortlist");
    r.shortlist = std::make_shared<const ShortlistTable>(
        ShortlistTable::read_tsv(spec.shortlist, *r.src_vocab, *r.tgt_vocab, strategy_statistic(strategy)));
  } else if (strategy == Strategy::kPhrase) {
    if (spec.phrase_table.empty()) throw Error(ErrorKind::kInvalidParameter, "selector config needs phrase_table");
    auto table = PhraseTable::read_tsv(spec.phrase_table, *r.src_vocab, *r.tgt_vocab, spec.phrase_max_len);
    r.phrases = std::make_shared<const PhraseTable>(std::move(table));
  } else {
    if (spec.svm.empty()) throw Error(ErrorKind::kInvalidParameter, "selector config needs svm");
    r.svm = std::make_shared<const SvmEnsemble>(SvmEnsemble::load(spec.svm));
  }
  return Selector(spec.config, std::move(r));
}

void write_selection_line(std::ostream& out, const VocabSubset& subset, const Vocab& tgt_vocab) {
  bool first = true;
  for (TokenId t : subset.global_ids()) {
    if (!first) out << ' ';
    out << tgt_vocab.token(t);
    first = false;
  }
  out << '\n';
}

}  // namespace vocabsel
