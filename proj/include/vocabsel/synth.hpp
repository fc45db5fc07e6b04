#pragma once

#include <cstdint>
#include <vector>

#include "vocabsel/corpus.hpp"

namespace vocabsel {

/// Parameters of the generated translation-like bitext. Source words express
/// Zipf-distributed concepts grouped into topics; each concept has a primary
/// target word and possibly an inflected alternate, a two-token compound or a
/// topic-dependent second sense. Function words map loosely across sides and
/// the target gets insertions, drops and local swaps.
struct SynthOptions {
  std::size_t pairs = 100000;
  std::size_t concepts = 6000;
  std::size_t topics = 40;
  std::size_t src_function = 50;
  std::size_t tgt_function = 70;
  std::size_t min_len = 4;
  std::size_t max_len = 30;
  double zipf = 1.05;
  /// Share of source positions holding function words.
  double function_rate = 0.35;
  /// Share of content words drawn from the sentence topic.
  double topic_rate = 0.6;
  double alternate_rate = 0.3;
  double compound_rate = 0.05;
  double sense_rate = 0.1;
  /// Probability that a source function word has a target counterpart.
  double function_keep = 0.5;
  double drop_rate = 0.03;
  /// Target function words inserted per source position.
  double insert_rate = 0.25;
  double swap_rate = 0.15;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::vector<TokenizedLine> src;
  std::vector<TokenizedLine> tgt;
};

SynthCorpus generate_parallel(const SynthOptions& options);

/// Identical source and target lines over `symbols` distinct tokens, lengths
/// uniform in [min_len, max_len].
SynthCorpus generate_copy(std::size_t pairs, std::size_t symbols, std::size_t min_len, std::size_t max_len,
                          std::uint64_t seed);

}  // namespace vocabsel
