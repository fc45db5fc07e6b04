#include "vocabsel/synth.hpp"

#include <cmath>
#include <random>
#include <string>

#include "vocabsel/error.hpp"

namespace vocabsel {

namespace {

std::discrete_distribution<std::size_t> zipf(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
  return {w.begin(), w.end()};
}

struct Concept {
  bool alternate = false;
  bool compound = false;
  bool sense = false;
};

}  // namespace

SynthCorpus generate_parallel(const SynthOptions& o) {
  if (o.concepts == 0 || o.topics == 0 || o.topics > o.concepts || o.src_function == 0 || o.tgt_function == 0)
    throw Error(ErrorKind::kInvalidParameter, "synthetic corpus needs concepts >= topics >= 1 and function words");
  if (o.min_len == 0 || o.min_len > o.max_len)
    throw Error(ErrorKind::kInvalidParameter, "synthetic corpus needs 1 <= min_len <= max_len");

  std::mt19937_64 rng(o.seed);
  std::bernoulli_distribution coin_alt(o.alternate_rate), coin_comp(o.compound_rate), coin_sense(o.sense_rate);
  std::vector<Concept> concepts(o.concepts);
  for (auto& c : concepts) {
    c.alternate = coin_alt(rng);
    c.compound = !c.alternate && coin_comp(rng);
    c.sense = !c.alternate && !c.compound && coin_sense(rng);
  }

  // Topic t owns the concepts c with c % topics == t, in global rank order.
  const std::size_t per_topic = (o.concepts + o.topics - 1) / o.topics;
  auto global = zipf(o.concepts, o.zipf);
  auto local = zipf(per_topic, o.zipf);
  auto src_fw = zipf(o.src_function, o.zipf);
  auto tgt_fw = zipf(o.tgt_function, o.zipf);
  std::uniform_int_distribution<std::size_t> length(o.min_len, o.max_len);
  std::uniform_int_distribution<std::size_t> topic_pick(0, o.topics - 1);
  std::bernoulli_distribution is_function(o.function_rate), from_topic(o.topic_rate), keep_fw(o.function_keep),
      drop(o.drop_rate), insert(o.insert_rate), swap(o.swap_rate), primary(0.65);

  SynthCorpus out;
  out.src.reserve(o.pairs);
  out.tgt.reserve(o.pairs);
  for (std::size_t p = 0; p < o.pairs; ++p) {
    const std::size_t topic = topic_pick(rng);
    const std::size_t len = length(rng);
    TokenizedLine src, tgt;
    for (std::size_t i = 0; i < len; ++i) {
      if (insert(rng)) tgt.push_back("g" + std::to_string(tgt_fw(rng)));
      if (is_function(rng)) {
        const std::size_t f = src_fw(rng);
        src.push_back("f" + std::to_string(f));
        if (keep_fw(rng)) tgt.push_back("g" + std::to_string(f % o.tgt_function));
        continue;
      }
      std::size_t c;
      do {
        c = from_topic(rng) ? local(rng) * o.topics + topic : global(rng);
      } while (c >= o.concepts);
      const auto name = std::to_string(c);
      src.push_back("s" + name);
      if (drop(rng)) continue;
      const auto& k = concepts[c];
      if (k.alternate && !primary(rng)) {
        tgt.push_back("t" + name + "_b");
      } else if (k.sense && topic % 2 == 1) {
        tgt.push_back("t" + name + "_s");
      } else {
        tgt.push_back("t" + name);
        if (k.compound) tgt.push_back("t" + name + "_c");
      }
    }
    for (std::size_t j = 0; j + 1 < tgt.size(); ++j) {
      if (swap(rng)) {
        std::swap(tgt[j], tgt[j + 1]);
        ++j;
      }
    }
    if (tgt.empty()) tgt.push_back("g0");
    out.src.push_back(std::move(src));
    out.tgt.push_back(std::move(tgt));
  }
  return out;
}

SynthCorpus generate_copy(std::size_t pairs, std::size_t symbols, std::size_t min_len, std::size_t max_len,
                          std::uint64_t seed) {
  if (symbols == 0 || min_len == 0 || min_len > max_len)
    throw Error(ErrorKind::kInvalidParameter, "copy corpus needs symbols >= 1 and 1 <= min_len <= max_len");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(min_len, max_len), symbol(0, symbols - 1);
  SynthCorpus out;
  for (std::size_t p = 0; p < pairs; ++p) {
    TokenizedLine line(length(rng));
    for (auto& tok : line) tok = "w" + std::to_string(symbol(rng));
    out.src.push_back(line);
    out.tgt.push_back(std::move(line));
  }
  return out;
}

}  // namespace vocabsel
