#include "vocabsel/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

bool rank_before(const std::pair<std::string, std::uint64_t>& a,
                 const std::pair<std::string, std::uint64_t>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  return in;
}

}  // namespace

Vocab Vocab::from_ranked(std::vector<std::pair<std::string, std::uint64_t>> words,
                         std::string unk_symbol, std::uint64_t unk_freq) {
  Vocab v;
  v.tokens_.reserve(words.size() + 1);
  v.freq_.reserve(words.size() + 1);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && rank_before(words[i], words[i - 1])) {
      throw Error(ErrorKind::kMalformedFormat,
                  "vocabulary not frequency-ranked at token '" + words[i].first + "'");
    }
    auto [it, inserted] = v.id_of_.emplace(words[i].first, static_cast<TokenId>(i));
    if (!inserted || words[i].first == unk_symbol) {
      throw Error(ErrorKind::kMalformedFormat, "duplicate token '" + words[i].first + "'");
    }
    v.tokens_.push_back(std::move(words[i].first));
    v.freq_.push_back(words[i].second);
  }
  v.id_of_.emplace(unk_symbol, static_cast<TokenId>(v.tokens_.size()));
  v.tokens_.push_back(std::move(unk_symbol));
  v.freq_.push_back(unk_freq);
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  return it == id_of_.end() ? unk_id() : it->second;
}

bool Vocab::contains(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  return it != id_of_.end() && it->second != unk_id();
}

void Vocab::write_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << i << '\t' << tokens_[i] << '\t' << freq_[i] << '\n';
  }
}

Vocab Vocab::read_tsv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::uint64_t>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(ErrorKind::kMalformedFormat,
                  path.string() + ":" + std::to_string(line_no) + ": expected rank<TAB>token<TAB>frequency");
    }
    std::size_t rank = 0;
    std::uint64_t freq = 0;
    try {
      rank = std::stoull(line.substr(0, t1));
      freq = std::stoull(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kMalformedFormat,
                  path.string() + ":" + std::to_string(line_no) + ": non-numeric rank or frequency");
    }
    if (rank != rows.size()) {
      throw Error(ErrorKind::kMalformedFormat,
                  path.string() + ":" + std::to_string(line_no) + ": ranks must be 0,1,2,...");
    }
    rows.emplace_back(line.substr(t1 + 1, t2 - t1 - 1), freq);
  }
  if (rows.empty()) throw Error(ErrorKind::kMalformedFormat, path.string() + ": empty vocabulary");
  auto unk = std::move(rows.back());
  rows.pop_back();
  return from_ranked(std::move(rows), std::move(unk.first), unk.second);
}

Vocab build_vocab(std::span<const TokenizedLine> lines, std::size_t max_size,
                  std::string_view unk_symbol) {
  if (max_size < 1) throw Error(ErrorKind::kInvalidParameter, "max_size must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& line : lines) {
    for (const auto& tok : line) ++counts[tok];
  }
  counts.erase(std::string(unk_symbol));
  if (counts.empty()) throw Error(ErrorKind::kInvalidInput, "cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), rank_before);
  std::uint64_t unk_freq = 0;
  if (ranked.size() > max_size) {
    for (std::size_t i = max_size; i < ranked.size(); ++i) unk_freq += ranked[i].second;
    ranked.resize(max_size);
  }
  return Vocab::from_ranked(std::move(ranked), std::string(unk_symbol), unk_freq);
}

Bitext Bitext::reversed() const {
  Bitext out{{}, tgt_vocab, src_vocab};
  out.pairs.reserve(pairs.size());
  for (const auto& p : pairs) out.pairs.push_back({p.tgt, p.src});
  return out;
}

Bitext Bitext::subset(std::span<const std::size_t> indices) const {
  Bitext out = empty_like();
  out.pairs.reserve(indices.size());
  for (auto i : indices) out.pairs.push_back(pairs.at(i));
  return out;
}

TokenizedLine split_tokens(std::string_view line) {
  TokenizedLine out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<TokenizedLine> read_tokenized(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<TokenizedLine> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_tokens(line));
  return out;
}

Sentence encode_sentence(const TokenizedLine& tokens, const Vocab& vocab) {
  Sentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.id(t));
  return out;
}

TokenizedLine decode_sentence(std::span<const TokenId> ids, const Vocab& vocab) {
  TokenizedLine out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(vocab.token(id));
  return out;
}

Bitext encode(std::span<const TokenizedLine> lines_src, std::span<const TokenizedLine> lines_tgt,
              std::shared_ptr<const Vocab> src_vocab, std::shared_ptr<const Vocab> tgt_vocab,
              EncodeStats* stats) {
  if (lines_src.size() != lines_tgt.size()) {
    throw Error(ErrorKind::kInvalidInput, "line count mismatch: " + std::to_string(lines_src.size()) +
                                              " source lines vs " + std::to_string(lines_tgt.size()) +
                                              " target lines");
  }
  Bitext out{{}, std::move(src_vocab), std::move(tgt_vocab)};
  out.pairs.reserve(lines_src.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < lines_src.size(); ++i) {
    if (lines_src[i].empty() || lines_tgt[i].empty()) {
      ++dropped;
      continue;
    }
    out.pairs.push_back({encode_sentence(lines_src[i], *out.src_vocab),
                         encode_sentence(lines_tgt[i], *out.tgt_vocab)});
  }
  if (stats) stats->dropped_empty = dropped;
  return out;
}

Bitext filter_by_length(const Bitext& bitext, std::size_t max_len) {
  if (max_len < 1) throw Error(ErrorKind::kInvalidParameter, "max_len must be >= 1");
  Bitext out = bitext.empty_like();
  for (const auto& p : bitext.pairs) {
    if (p.src.size() <= max_len && p.tgt.size() <= max_len) out.pairs.push_back(p);
  }
  return out;
}

void filter_lines_by_length(std::vector<TokenizedLine>& src, std::vector<TokenizedLine>& tgt,
                            std::size_t max_len) {
  if (max_len < 1) throw Error(ErrorKind::kInvalidParameter, "max_len must be >= 1");
  if (src.size() != tgt.size()) {
    throw Error(ErrorKind::kInvalidInput, "line count mismatch: " + std::to_string(src.size()) +
                                              " source lines vs " + std::to_string(tgt.size()) +
                                              " target lines");
  }
  std::size_t w = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].size() <= max_len && tgt[i].size() <= max_len) {
      if (w != i) {
        src[w] = std::move(src[i]);
        tgt[w] = std::move(tgt[i]);
      }
      ++w;
    }
  }
  src.resize(w);
  tgt.resize(w);
}

std::vector<Batch> bucket_batch(const Bitext& bitext, std::size_t batch_size) {
  if (batch_size < 1) throw Error(ErrorKind::kInvalidParameter, "batch_size must be >= 1");
  std::vector<std::size_t> order(bitext.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = bitext.pairs[a];
    const auto& pb = bitext.pairs[b];
    if (pa.tgt.size() != pb.tgt.size()) return pa.tgt.size() < pb.tgt.size();
    return pa.src.size() < pb.src.size();
  });

  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto len = bitext.pairs[order[i]].tgt.size();
    if (batches.empty() || batches.back().indices.size() == batch_size ||
        bitext.pairs[batches.back().indices.front()].tgt.size() != len) {
      batches.emplace_back();
    }
    batches.back().indices.push_back(order[i]);
  }
  return batches;
}

std::vector<Batch> sequential_batch(std::size_t n_pairs, std::size_t batch_size) {
  if (batch_size < 1) throw Error(ErrorKind::kInvalidParameter, "batch_size must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < n_pairs; i += batch_size) {
    Batch b;
    for (std::size_t j = i; j < std::min(n_pairs, i + batch_size); ++j) b.indices.push_back(j);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::pair<Bitext, Bitext> shuffle_split(const Bitext& bitext, std::size_t heldout, std::uint64_t seed) {
  if (heldout > bitext.size()) {
    throw Error(ErrorKind::kInvalidParameter, "held-out size " + std::to_string(heldout) +
                                                  " exceeds corpus size " + std::to_string(bitext.size()));
  }
  std::vector<std::size_t> order(bitext.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::span<const std::size_t> all(order);
  return {bitext.subset(all.subspan(heldout)), bitext.subset(all.first(heldout))};
}

void write_text(const std::filesystem::path& path, std::span<const TokenizedLine> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (const auto& line : lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out << ' ';
      out << line[i];
    }
    out << '\n';
  }
}

}  // namespace vocabsel
