#pragma once

#include <unistd.h>

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vocabsel/corpus.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vocabsel_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<vocabsel::TokenizedLine> lines(const std::vector<std::string>& text) {
  std::vector<vocabsel::TokenizedLine> out;
  for (const auto& t : text) out.push_back(vocabsel::split_tokens(t));
  return out;
}

/// Bitext over vocabularies built from the text itself (no truncation).
inline vocabsel::Bitext make_bitext(const std::vector<std::string>& src, const std::vector<std::string>& tgt,
                                    std::size_t max_vocab = 1000000) {
  const auto s = lines(src);
  const auto t = lines(tgt);
  auto sv = std::make_shared<const vocabsel::Vocab>(vocabsel::build_vocab(s, max_vocab));
  auto tv = std::make_shared<const vocabsel::Vocab>(vocabsel::build_vocab(t, max_vocab));
  return vocabsel::encode(s, t, sv, tv);
}

/// Random bitext with ids drawn uniformly from small vocabularies.
inline vocabsel::Bitext random_bitext(std::mt19937_64& rng, std::size_t pairs, std::size_t src_words,
                                      std::size_t tgt_words, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len), sw(0, src_words - 1), tw(0, tgt_words - 1);
  std::vector<std::string> src, tgt;
  for (std::size_t p = 0; p < pairs; ++p) {
    std::string a, b;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) a += (i ? " s" : "s") + std::to_string(sw(rng));
    for (std::size_t i = 0, n = len(rng); i < n; ++i) b += (i ? " t" : "t") + std::to_string(tw(rng));
    src.push_back(a);
    tgt.push_back(b);
  }
  return make_bitext(src, tgt);
}

}  // namespace testutil
