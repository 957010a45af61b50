#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbxt/transducer.hpp"

namespace cbxt {

// Character-template feature synthesis: every character owns a fixed random
// unit vector, so acoustically "similar" transcripts share frames by
// construction. Word boundaries emit one clean silence frame.
struct SyntheticSpec {
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz'";
  int frames_per_char = 4;
  int feature_dim = 16;
  double noise_std = 0.1;
  std::map<char, std::vector<double>> templates;
  std::vector<double> silence;

  static SyntheticSpec build(const std::string& alphabet, int feature_dim, int frames_per_char,
                             double noise_std, std::uint64_t seed);
};

AudioFeatures synthesize_features(const std::string& transcript, const SyntheticSpec& spec,
                                  std::mt19937& rng);

// Concatenate each frame with `left` previous frames (zero-padded at the
// start), then keep every factor-th frame.
AudioFeatures stack_and_downsample(const AudioFeatures& features, int left = 2, int factor = 3);

struct Utterance {
  std::string id;
  std::string transcript;
};

struct Corpus {
  std::vector<Utterance> utterances;

  std::vector<std::string> transcripts() const;
  size_t size() const { return utterances.size(); }
};

// Deterministic per-utterance feature synthesis: the rng is derived from the
// corpus seed and the utterance id.
AudioFeatures utterance_features(const Utterance& utt, const SyntheticSpec& spec,
                                 std::uint64_t corpus_seed);

std::uint64_t fnv1a(const std::string& s);

// id<TAB>transcript per line.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

void save_word_list(std::span<const std::string> words, const std::string& path);
std::vector<std::string> load_word_list(const std::string& path);

struct RareWordList {
  std::vector<std::string> words;  // lexicographically ordered
  int top_n_removed = 0;

  bool contains(const std::string& w) const;
};

// Frequency count over whitespace words; the top_n most frequent are removed
// (ties at the boundary break lexicographically); the rest are rare.
RareWordList build_rare_word_list(std::span<const std::string> transcripts, int top_n);

struct ZeroShotSplit {
  Corpus train;
  Corpus zs_test;
  std::vector<std::string> zs_words;
};

// Hold out a seeded fraction of the rare vocabulary; every utterance that
// mentions a held-out word moves to the zero-shot testset.
ZeroShotSplit make_zero_shot_split(const Corpus& corpus, const RareWordList& rare,
                                   double holdout_fraction, std::uint64_t seed);

// Synthetic text generation for the desk-scale experiments.
struct CorpusGenConfig {
  int vocab_words = 300;
  int min_word_len = 3;
  int max_word_len = 8;
  int utterances = 2300;
  int min_words = 2;
  int max_words = 6;
  double zipf_exponent = 1.0;
};

std::vector<std::string> generate_vocabulary(const CorpusGenConfig& cfg, std::mt19937& rng);
Corpus generate_corpus(const CorpusGenConfig& cfg, std::span<const std::string> vocabulary,
                       const std::string& id_prefix, std::mt19937& rng);

}  // namespace cbxt
