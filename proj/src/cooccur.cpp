#include "vocabsel/cooccur.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "vocabsel/binio.hpp"
#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

constexpr std::string_view kTableMagic = "VSCOOC01";

// Merges two sorted (key, count) runs, summing counts of equal keys.
void merge_runs(std::vector<std::uint64_t>& keys, std::vector<std::uint64_t>& counts,
                const std::vector<std::uint64_t>& add_keys, const std::vector<std::uint64_t>& add_counts) {
  if (add_keys.empty()) return;
  if (keys.empty()) {
    keys = add_keys;
    counts = add_counts;
    return;
  }
  std::vector<std::uint64_t> out_keys;
  std::vector<std::uint64_t> out_counts;
  out_keys.reserve(keys.size() + add_keys.size());
  out_counts.reserve(keys.size() + add_keys.size());
  std::size_t i = 0, j = 0;
  while (i < keys.size() || j < add_keys.size()) {
    if (j == add_keys.size() || (i < keys.size() && keys[i] < add_keys[j])) {
      out_keys.push_back(keys[i]);
      out_counts.push_back(counts[i++]);
    } else if (i == keys.size() || add_keys[j] < keys[i]) {
      out_keys.push_back(add_keys[j]);
      out_counts.push_back(add_counts[j++]);
    } else {
      out_keys.push_back(keys[i]);
      out_counts.push_back(counts[i++] + add_counts[j++]);
    }
  }
  keys = std::move(out_keys);
  counts = std::move(out_counts);
}

}  // namespace

PairCounter::PairCounter(std::size_t flush_threshold) : flush_threshold_(std::max<std::size_t>(flush_threshold, 1)) {}

void PairCounter::flush() {
  if (pending_.empty() && weighted_.empty()) return;
  std::sort(pending_.begin(), pending_.end());
  std::sort(weighted_.begin(), weighted_.end());
  std::vector<std::uint64_t> run_keys;
  std::vector<std::uint64_t> run_counts;
  std::size_t i = 0, j = 0;
  auto push = [&](std::uint64_t key, std::uint64_t n) {
    if (!run_keys.empty() && run_keys.back() == key) {
      run_counts.back() += n;
    } else {
      run_keys.push_back(key);
      run_counts.push_back(n);
    }
  };
  while (i < pending_.size() || j < weighted_.size()) {
    if (j == weighted_.size() || (i < pending_.size() && pending_[i] <= weighted_[j].first)) {
      push(pending_[i++], 1);
    } else {
      push(weighted_[j].first, weighted_[j].second);
      ++j;
    }
  }
  pending_.clear();
  weighted_.clear();
  merge_runs(keys_, counts_, run_keys, run_counts);
}

void PairCounter::merge(PairCounter&& other) {
  flush();
  other.flush();
  merge_runs(keys_, counts_, other.keys_, other.counts_);
  other.keys_.clear();
  other.counts_.clear();
}

std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> PairCounter::finish() && {
  flush();
  return {std::move(keys_), std::move(counts_)};
}

CooccurTable::CooccurTable(std::size_t num_src, std::size_t num_tgt, std::span<const std::uint64_t> keys,
                           std::span<const std::uint64_t> counts)
    : row_ptr_(num_src + 1, 0), src_marginal_(num_src, 0), tgt_marginal_(num_tgt, 0) {
  if (keys.size() != counts.size()) throw Error(ErrorKind::kInvalidInput, "key/count length mismatch");
  entries_.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i > 0 && keys[i] <= keys[i - 1]) throw Error(ErrorKind::kInvalidInput, "table keys must be strictly increasing");
    const TokenId s = PairCounter::src_of(keys[i]);
    const TokenId t = PairCounter::tgt_of(keys[i]);
    if (s >= num_src || t >= num_tgt) throw Error(ErrorKind::kInvalidInput, "table key out of range");
    if (counts[i] == 0) continue;
    entries_.push_back({t, counts[i]});
    ++row_ptr_[s + 1];
    src_marginal_[s] += counts[i];
    tgt_marginal_[t] += counts[i];
    grand_total_ += counts[i];
  }
  for (std::size_t s = 0; s < num_src; ++s) row_ptr_[s + 1] += row_ptr_[s];
}

std::uint64_t CooccurTable::count(TokenId s, TokenId t) const {
  auto r = row(s);
  auto it = std::lower_bound(r.begin(), r.end(), t, [](const CooccurEntry& e, TokenId v) { return e.tgt < v; });
  return (it != r.end() && it->tgt == t) ? it->count : 0;
}

void CooccurTable::save(const std::filesystem::path& path) const {
  binio::Writer w(path, kTableMagic);
  w.put<std::uint64_t>(num_src());
  w.put<std::uint64_t>(num_tgt());
  std::vector<std::uint64_t> keys;
  std::vector<std::uint64_t> counts;
  keys.reserve(nnz());
  counts.reserve(nnz());
  for (std::size_t s = 0; s < num_src(); ++s) {
    for (const auto& e : row(static_cast<TokenId>(s))) {
      keys.push_back(PairCounter::pack(static_cast<TokenId>(s), e.tgt));
      counts.push_back(e.count);
    }
  }
  w.put_vector(keys);
  w.put_vector(counts);
  w.close();
}

CooccurTable CooccurTable::load(const std::filesystem::path& path) {
  binio::Reader r(path, kTableMagic);
  auto num_src = r.get<std::uint64_t>();
  auto num_tgt = r.get<std::uint64_t>();
  auto keys = r.get_vector<std::uint64_t>();
  auto counts = r.get_vector<std::uint64_t>();
  try {
    return CooccurTable(num_src, num_tgt, keys, counts);
  } catch (const Error& e) {
    throw Error(ErrorKind::kMalformedFormat, path.string() + ": " + e.what());
  }
}

void CooccurTable::write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (std::size_t s = 0; s < num_src(); ++s) {
    for (const auto& e : row(static_cast<TokenId>(s))) {
      out << src_vocab.token(static_cast<TokenId>(s)) << '\t' << tgt_vocab.token(e.tgt) << '\t' << e.count << '\n';
    }
  }
}

CooccurTable count_cooccurrences(const Bitext& bitext, std::size_t threads) {
  if (bitext.empty()) throw Error(ErrorKind::kInvalidInput, "cannot count co-occurrences of an empty bitext");
  const TokenId src_unk = bitext.src_vocab->unk_id();
  const TokenId tgt_unk = bitext.tgt_vocab->unk_id();
  threads = std::clamp<std::size_t>(threads, 1, bitext.size());

  auto count_range = [&](std::size_t begin, std::size_t end, PairCounter& counter) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto& pair = bitext.pairs[p];
      for (auto s : pair.src) {
        if (s == src_unk) continue;
        for (auto t : pair.tgt) {
          if (t != tgt_unk) counter.add(s, t);
        }
      }
    }
  };

  std::vector<PairCounter> shards(threads);
  if (threads == 1) {
    count_range(0, bitext.size(), shards[0]);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t per = (bitext.size() + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
      const std::size_t b = std::min(bitext.size(), w * per);
      const std::size_t e = std::min(bitext.size(), b + per);
      workers.emplace_back([&, b, e, w] { count_range(b, e, shards[w]); });
    }
  }
  for (std::size_t w = 1; w < threads; ++w) shards[0].merge(std::move(shards[w]));
  auto [keys, counts] = std::move(shards[0]).finish();
  return CooccurTable(bitext.src_vocab->size(), bitext.tgt_vocab->size(), keys, counts);
}

double joint_prob(const CooccurTable& table, TokenId s, TokenId t) {
  if (table.grand_total() == 0) throw Error(ErrorKind::kInvalidInput, "joint probability of an empty table");
  return static_cast<double>(table.count(s, t)) / static_cast<double>(table.grand_total());
}

std::optional<double> pmi(const CooccurTable& table, TokenId s, TokenId t, std::uint64_t floor) {
  const auto c = table.count(s, t);
  const auto cs = table.src_marginal(s);
  const auto ct = table.tgt_marginal(t);
  if (c == 0 || cs == 0 || ct == 0 || ct < floor) return std::nullopt;
  // P(s,t) / (P(s) P(t)) = c * N / (c_s * c_t)
  return static_cast<double>(c) * static_cast<double>(table.grand_total()) /
         (static_cast<double>(cs) * static_cast<double>(ct));
}

std::string_view statistic_name(Statistic stat) {
  switch (stat) {
    case Statistic::kJoint: return "joint";
    case Statistic::kPmi: return "pmi";
    case Statistic::kPca: return "pca";
    case Statistic::kAlignment: return "word_align";
  }
  return "unknown";
}

std::vector<TokenId> rank_candidates(std::vector<std::pair<TokenId, double>> scored, std::size_t k) {
  auto better = [](const std::pair<TokenId, double>& a, const std::pair<TokenId, double>& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
  std::vector<TokenId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].first);
  return out;
}

ShortlistTable topk(const CooccurTable& table, std::size_t k, Statistic statistic, std::uint64_t pmi_floor) {
  if (k < 1) throw Error(ErrorKind::kInvalidParameter, "k must be >= 1");
  if (statistic != Statistic::kJoint && statistic != Statistic::kPmi && statistic != Statistic::kAlignment) {
    throw Error(ErrorKind::kInvalidParameter, "co-occurrence top-k supports joint, pmi and alignment statistics");
  }
  ShortlistTable out;
  out.k = k;
  out.provenance = statistic;
  out.lists.resize(table.num_src());
  std::vector<std::pair<TokenId, double>> scored;
  for (std::size_t si = 0; si < table.num_src(); ++si) {
    const auto s = static_cast<TokenId>(si);
    scored.clear();
    for (const auto& e : table.row(s)) {
      double score = 0.0;
      if (statistic == Statistic::kPmi) {
        auto v = pmi(table, s, e.tgt, pmi_floor);
        if (!v) continue;
        score = *v;
      } else if (statistic == Statistic::kJoint) {
        score = static_cast<double>(e.count) / static_cast<double>(table.grand_total());
      } else {
        score = static_cast<double>(e.count) / static_cast<double>(table.src_marginal(s));
      }
      scored.emplace_back(e.tgt, score);
    }
    out.lists[si] = rank_candidates(std::move(scored), k);
    scored = {};
  }
  return out;
}

void ShortlistTable::write_tsv(const std::filesystem::path& path, const Vocab& src_vocab, const Vocab& tgt_vocab) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
  for (std::size_t s = 0; s < lists.size(); ++s) {
    if (lists[s].empty()) continue;
    out << src_vocab.token(static_cast<TokenId>(s)) << '\t';
    for (std::size_t i = 0; i < lists[s].size(); ++i) {
      if (i) out << ' ';
      out << tgt_vocab.token(lists[s][i]);
    }
    out << '\n';
  }
}

ShortlistTable ShortlistTable::read_tsv(const std::filesystem::path& path, const Vocab& src_vocab,
                                        const Vocab& tgt_vocab, Statistic provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
  ShortlistTable table;
  table.provenance = provenance;
  table.lists.resize(src_vocab.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::kMalformedFormat, path.string() + ":" + std::to_string(line_no) + ": missing tab");
    }
    const std::string src = line.substr(0, tab);
    if (!src_vocab.contains(src)) continue;
    auto& list = table.lists[src_vocab.id(src)];
    for (const auto& tok : split_tokens(std::string_view(line).substr(tab + 1))) {
      if (tgt_vocab.contains(tok)) list.push_back(tgt_vocab.id(tok));
    }
    table.k = std::max(table.k, list.size());
  }
  return table;
}

}  // namespace vocabsel
