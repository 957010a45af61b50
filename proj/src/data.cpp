#include "cbxt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cbxt/tokenizer.hpp"

namespace cbxt {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

SyntheticSpec SyntheticSpec::build(const std::string& alphabet, int feature_dim,
                                   int frames_per_char, double noise_std, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.alphabet = alphabet;
  spec.feature_dim = feature_dim;
  spec.frames_per_char = frames_per_char;
  spec.noise_std = noise_std;

  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto unit_vector = [&]() {
    std::vector<double> v(static_cast<size_t>(feature_dim));
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : v) {
        x = gauss(rng);
        norm += x * x;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
  auto distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d);
  };

  std::vector<std::vector<double>> taken;
  auto fresh_template = [&]() {
    // Regenerate on near-collision so distinct symbols stay separable.
    for (;;) {
      std::vector<double> v = unit_vector();
      bool ok = true;
      for (const auto& t : taken) {
        if (distance(v, t) <= 0.1) {
          ok = false;
          break;
        }
      }
      if (ok) {
        taken.push_back(v);
        return v;
      }
    }
  };

  spec.silence = fresh_template();
  for (char c : alphabet) {
    if (!spec.templates.count(c)) spec.templates[c] = fresh_template();
  }
  return spec;
}

AudioFeatures synthesize_features(const std::string& transcript, const SyntheticSpec& spec,
                                  std::mt19937& rng) {
  std::string norm = normalize_text(transcript);
  if (norm.empty()) throw DomainError("cannot synthesize features for an empty transcript");

  int frames = 0;
  for (char c : norm) frames += c == ' ' ? 1 : spec.frames_per_char;

  AudioFeatures out;
  out.frames = Tensor({frames, spec.feature_dim});
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  int row = 0;
  for (char c : norm) {
    if (c == ' ') {
      for (int j = 0; j < spec.feature_dim; ++j) out.frames.at(row, j) = spec.silence[static_cast<size_t>(j)];
      ++row;
      continue;
    }
    auto it = spec.templates.find(c);
    if (it == spec.templates.end()) {
      throw DomainError("character '" + std::string(1, c) + "' outside the synthesis alphabet");
    }
    for (int f = 0; f < spec.frames_per_char; ++f, ++row) {
      for (int j = 0; j < spec.feature_dim; ++j) {
        double n = spec.noise_std > 0.0 ? noise(rng) : 0.0;
        out.frames.at(row, j) = it->second[static_cast<size_t>(j)] + n;
      }
    }
  }
  return out;
}

AudioFeatures stack_and_downsample(const AudioFeatures& features, int left, int factor) {
  if (left < 0 || factor < 1) throw ContractError("stack_and_downsample: invalid left/factor");
  int T = features.num_frames();
  int F = features.feature_dim();
  if (T < 1) throw DomainError("stack_and_downsample on empty features");

  int out_t = (T + factor - 1) / factor;
  AudioFeatures out;
  out.utterance_id = features.utterance_id;
  out.frames = Tensor({out_t, F * (left + 1)});
  for (int o = 0; o < out_t; ++o) {
    int t = o * factor;
    for (int l = 0; l <= left; ++l) {
      int src = t - (left - l);  // chronological order, current frame last
      for (int j = 0; j < F; ++j) {
        out.frames.at(o, l * F + j) = src < 0 ? 0.0 : features.frames.at(src, j);
      }
    }
  }
  return out;
}

std::vector<std::string> Corpus::transcripts() const {
  std::vector<std::string> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(u.transcript);
  return out;
}

AudioFeatures utterance_features(const Utterance& utt, const SyntheticSpec& spec,
                                 std::uint64_t corpus_seed) {
  std::mt19937 rng(static_cast<std::uint32_t>(fnv1a(utt.id) ^ corpus_seed));
  AudioFeatures f = synthesize_features(utt.transcript, spec, rng);
  f.utterance_id = utt.id;
  return f;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot write corpus file: " + path);
  for (const auto& u : corpus.utterances) os << u.id << '\t' << u.transcript << '\n';
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot read corpus file: " + path);
  Corpus corpus;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw LoadError("malformed corpus line in " + path + ": " + line);
    corpus.utterances.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return corpus;
}

void save_word_list(std::span<const std::string> words, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot write word list: " + path);
  for (const auto& w : words) os << w << '\n';
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot read word list: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

bool RareWordList::contains(const std::string& w) const {
  return std::binary_search(words.begin(), words.end(), w);
}

RareWordList build_rare_word_list(std::span<const std::string> transcripts, int top_n) {
  if (top_n < 0) throw ContractError("top_n must be >= 0");
  std::map<std::string, long> freq;
  for (const auto& t : transcripts) {
    for (const auto& w : split_words(t)) ++freq[w];
  }
  if (freq.empty()) throw DomainError("empty corpus for rare-word construction");

  std::vector<std::pair<std::string, long>> by_freq(freq.begin(), freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  RareWordList rare;
  rare.top_n_removed = top_n;
  for (size_t i = static_cast<size_t>(std::min<long>(top_n, static_cast<long>(by_freq.size())));
       i < by_freq.size(); ++i) {
    rare.words.push_back(by_freq[i].first);
  }
  std::sort(rare.words.begin(), rare.words.end());
  return rare;
}

ZeroShotSplit make_zero_shot_split(const Corpus& corpus, const RareWordList& rare,
                                   double holdout_fraction, std::uint64_t seed) {
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
    throw ContractError("holdout fraction must lie in (0, 1)");
  }
  std::vector<std::string> pool = rare.words;
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::shuffle(pool.begin(), pool.end(), rng);
  size_t take = static_cast<size_t>(holdout_fraction * static_cast<double>(pool.size()));
  pool.resize(take);
  std::set<std::string> zs(pool.begin(), pool.end());

  ZeroShotSplit split;
  for (const auto& u : corpus.utterances) {
    bool has_zs = false;
    for (const auto& w : split_words(u.transcript)) {
      if (zs.count(w)) {
        has_zs = true;
        break;
      }
    }
    (has_zs ? split.zs_test : split.train).utterances.push_back(u);
  }
  if (split.train.utterances.empty()) {
    throw DomainError("zero-shot holdout fraction leaves the training corpus empty");
  }

  // The held-out vocabulary must be absent from the remaining training text.
  std::set<std::string> train_vocab;
  for (const auto& u : split.train.utterances) {
    for (const auto& w : split_words(u.transcript)) train_vocab.insert(w);
  }
  for (const auto& w : zs) {
    if (train_vocab.count(w)) {
      throw VerificationError("zero-shot word leaked into the training corpus: " + w);
    }
  }
  split.zs_words.assign(zs.begin(), zs.end());
  return split;
}

std::vector<std::string> generate_vocabulary(const CorpusGenConfig& cfg, std::mt19937& rng) {
  std::set<std::string> words;
  std::uniform_int_distribution<int> len_dist(cfg.min_word_len, cfg.max_word_len);
  std::uniform_int_distribution<int> ch_dist(0, 25);
  while (static_cast<int>(words.size()) < cfg.vocab_words) {
    int len = len_dist(rng);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + ch_dist(rng)));
    words.insert(w);
  }
  return {words.begin(), words.end()};
}

Corpus generate_corpus(const CorpusGenConfig& cfg, std::span<const std::string> vocabulary,
                       const std::string& id_prefix, std::mt19937& rng) {
  if (vocabulary.empty()) throw DomainError("empty vocabulary for corpus generation");
  // Zipf-like weights over the vocabulary in its given order.
  std::vector<double> weights(vocabulary.size());
  for (size_t i = 0; i < vocabulary.size(); ++i) {
    weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), cfg.zipf_exponent);
  }
  std::discrete_distribution<int> word_dist(weights.begin(), weights.end());
  std::uniform_int_distribution<int> count_dist(cfg.min_words, cfg.max_words);

  Corpus corpus;
  for (int i = 0; i < cfg.utterances; ++i) {
    int n = count_dist(rng);
    std::string text;
    for (int w = 0; w < n; ++w) {
      if (w) text += ' ';
      text += vocabulary[static_cast<size_t>(word_dist(rng))];
    }
    corpus.utterances.push_back({id_prefix + std::to_string(i), text});
  }
  return corpus;
}

}  // namespace cbxt
