#include "vocabsel/phrase.hpp"

#include <algorithm>
#include <fstream>
#include <string>
#include <unordered_map>

#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr char32_t kSeparator = 0xFFFFFFFFu;

void sort_targets(std::vector<PhraseTarget>& targets) {
  std::sort(targets.begin(), targets.end(), [](const PhraseTarget& a, const PhraseTarget& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.tgt < b.tgt;
  });
}

std::string join_tokens(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace

std::size_t PhraseTable::pair_count() const {
  std::size_t n = 0;
  for (const auto& [src, targets] : entries) n += targets.size();
  return n;
}

const std::vector<PhraseTarget>* PhraseTable::find(std::span<const TokenId> src) const {
  auto it = entries.find(Phrase(src.begin(), src.end()));
  return it == entries.end() ? nullptr : &it->second;
}

std::vector<PhraseSpan> consistent_spans(std::size_t src_len, std::size_t tgt_len, const SentenceAlignment& alignment,
                                         std::size_t max_len) {
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> tgt_min_src(tgt_len, kNone);
  std::vector<std::uint32_t> tgt_max_src(tgt_len, 0);
  std::vector<std::vector<std::uint32_t>> src_links(src_len);
  for (auto l : alignment.links) {
    if (l.src >= src_len || l.tgt >= tgt_len) {
      throw Error(ErrorKind::kInvalidInput, "alignment link " + std::to_string(l.src) + "-" + std::to_string(l.tgt) +
                                                " outside a " + std::to_string(src_len) + "x" +
                                                std::to_string(tgt_len) + " sentence pair");
    }
    tgt_min_src[l.tgt] = std::min(tgt_min_src[l.tgt], l.src);
    tgt_max_src[l.tgt] = std::max(tgt_max_src[l.tgt], l.src);
    src_links[l.src].push_back(l.tgt);
  }

  std::vector<PhraseSpan> spans;
  for (std::size_t i1 = 0; i1 < src_len; ++i1) {
    std::size_t jmin = tgt_len;
    std::size_t jmax = 0;
    bool any = false;
    for (std::size_t i2 = i1; i2 < std::min(src_len, i1 + max_len); ++i2) {
      for (auto j : src_links[i2]) {
        jmin = std::min<std::size_t>(jmin, j);
        jmax = std::max<std::size_t>(jmax, j);
        any = true;
      }
      if (!any) continue;
      if (jmax - jmin + 1 > max_len) break;

      bool consistent = true;
      for (std::size_t j = jmin; j <= jmax && consistent; ++j) {
        if (tgt_min_src[j] != kNone && (tgt_min_src[j] < i1 || tgt_max_src[j] > i2)) consistent = false;
      }
      if (!consistent) continue;

      // Extend over unaligned target neighbours; the length cap below bounds it.
      std::size_t lo = jmin;
      while (lo > 0 && tgt_min_src[lo - 1] == kNone) --lo;
      std::size_t hi = jmax;
      while (hi + 1 < tgt_len && tgt_min_src[hi + 1] == kNone) ++hi;
      for (std::size_t j1 = jmin + 1; j1-- > lo;) {
        if (jmax - j1 + 1 > max_len) break;
        for (std::size_t j2 = jmax; j2 <= hi; ++j2) {
          if (j2 - j1 + 1 > max_len) break;
          spans.push_back({static_cast<std::uint32_t>(i1), static_cast<std::uint32_t>(i2),
                           static_cast<std::uint32_t>(j1), static_cast<std::uint32_t>(j2)});
        }
      }
    }
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

PhraseTable extract_phrases(const Bitext& bitext, std::span<const SentenceAlignment> alignments, std::size_t max_len) {
  if (max_len < 1) throw Error(ErrorKind::kInvalidParameter, "phrase max_len must be >= 1");
  if (alignments.size() != bitext.size()) {
    throw Error(ErrorKind::kInvalidInput, "alignment count " + std::to_string(alignments.size()) +
                                              " does not match bitext size " + std::to_string(bitext.size()));
  }
  std::unordered_map<std::u32string, std::uint64_t> counts;
  std::u32string key;
  for (std::size_t p = 0; p < bitext.size(); ++p) {
    const auto& pair = bitext.pairs[p];
    for (const auto& sp : consistent_spans(pair.src.size(), pair.tgt.size(), alignments[p], max_len)) {
      key.clear();
      for (auto i = sp.src_begin; i <= sp.src_end; ++i) key.push_back(static_cast<char32_t>(pair.src[i]));
      key.push_back(kSeparator);
      for (auto j = sp.tgt_begin; j <= sp.tgt_end; ++j) key.push_back(static_cast<char32_t>(pair.tgt[j]));
      ++counts[key];
    }
  }

  PhraseTable table;
  table.max_len = max_len;
  table.min_count = 1;
  table.tgt_unk = bitext.tgt_vocab ? bitext.tgt_vocab->unk_id() : table.tgt_unk;
  for (auto& [k, count] : counts) {
    const auto sep = k.find(kSeparator);
    Phrase src(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(sep));
    Phrase tgt(k.begin() + static_cast<std::ptrdiff_t>(sep) + 1, k.end());
    table.entries[std::move(src)].push_back({std::move(tgt), count});
  }
  for (auto& [src, targets] : table.entries) sort_targets(targets);
  return table;
}

PhraseTable prune(const PhraseTable& table, std::uint64_t min_count) {
  if (min_count < 1) throw Error(ErrorKind::kInvalidParameter, "min_count must be >= 1");
  PhraseTable out;
  out.max_len = table.max_len;
  out.min_count = std::max(min_count, table.min_count);
  out.tgt_unk = table.tgt_unk;
  for (const auto& [src, targets] : table.entries) {
    std::vector<PhraseTarget> kept;
    for (const auto& t : targets) {
      if (t.count >= min_count) kept.push_back(t);
    }
    if (!kept.empty()) out.entries.emplace(src, std::move(kept));
  }
  return out;
}

PhraseTable cap_targets(const PhraseTable& table, std::size_t k) {
  PhraseTable out;
  out.max_len = table.max_len;
  out.min_count = table.min_count;
  out.tgt_unk = table.tgt_unk;
  for (const auto& [src, targets] : table.entries) {
    if (k == 0) break;
    std::vector<PhraseTarget> kept(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(std::min(k, targets.size())));
    out.entries.emplace(src, std::move(kept));
  }
  return out;
}

std::vector<TokenId> select_phrase(const PhraseTable& table, std::span<const TokenId> src_sentence, std::size_t cap) {
  std::vector<TokenId> out;
  if (cap == 0) return out;
  Phrase probe;
  for (std::size_t i = 0; i < src_sentence.size(); ++i) {
    probe.clear();
    for (std::size_t len = 1; len <= table.max_len && i + len <= src_sentence.size(); ++len) {
      probe.push_back(src_sentence[i + len - 1]);
      auto it = table.entries.find(probe);
      if (it == table.entries.end()) continue;
      const auto n = std::min(cap, it->second.size());
      for (std::size_t r = 0; r < n; ++r) {
        for (auto t : it->second[r].tgt) {
          if (t != table.tgt_unk) out.push_back(t);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void PhraseTable::write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (const auto& [src, targets] : entries) {
    const auto src_text = join_tokens(src, src_vocab);
    for (const auto& t : targets) {
      out << src_text << " ||| " << join_tokens(t.tgt, tgt_vocab) << " ||| " << t.count << '\n';
    }
  }
}

PhraseTable PhraseTable::read_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab,
                                  std::size_t max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  PhraseTable table;
  table.max_len = max_len;
  table.tgt_unk = tgt_vocab.unk_id();
  table.min_count = std::numeric_limits<std::uint64_t>::max();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find("|||");
    const auto b = a == std::string::npos ? std::string::npos : line.find("|||", a + 3);
    auto bad = [&](const std::string& why) {
      return Error(ErrorKind::kMalformedFormat, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (b == std::string::npos) throw bad("expected 'src ||| tgt ||| count'");
    const auto src_tokens = split_tokens(std::string_view(line).substr(0, a));
    const auto tgt_tokens = split_tokens(std::string_view(line).substr(a + 3, b - a - 3));
    const auto count_tokens = split_tokens(std::string_view(line).substr(b + 3));
    if (src_tokens.empty() || tgt_tokens.empty() || count_tokens.size() != 1) throw bad("empty field");
    std::uint64_t count = 0;
    try {
      std::size_t used = 0;
      count = std::stoull(count_tokens[0], &used);
      if (used != count_tokens[0].size()) throw bad("non-numeric count");
    } catch (const std::logic_error&) {
      throw bad("non-numeric count");
    }
    if (src_tokens.size() > max_len) continue;
    table.entries[encode_sentence(src_tokens, src_vocab)].push_back({encode_sentence(tgt_tokens, tgt_vocab), count});
    table.min_count = std::min(table.min_count, count);
  }
  if (table.entries.empty()) table.min_count = 1;
  for (auto& [src, targets] : table.entries) sort_targets(targets);
  return table;
}

}  // namespace vocabsel
