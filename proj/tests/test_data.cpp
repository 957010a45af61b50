#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "cbxt/data.hpp"
#include "cbxt/tokenizer.hpp"

using namespace cbxt;

TEST_CASE("zero-noise synthesis repeats the character template") {
  SyntheticSpec spec = SyntheticSpec::build("ab", 8, 4, 0.0, 11);
  std::mt19937 rng(1);
  AudioFeatures f = synthesize_features("a", spec, rng);
  REQUIRE(f.num_frames() == 4);
  for (int t = 0; t < 4; ++t) {
    for (int j = 0; j < 8; ++j) CHECK(f.frames.at(t, j) == spec.templates.at('a')[static_cast<size_t>(j)]);
  }
}

TEST_CASE("synthesis frame count follows the transcript") {
  SyntheticSpec spec = SyntheticSpec::build("abc", 6, 3, 0.1, 12);
  std::mt19937 rng(2);
  // 6 characters * 3 frames + 1 boundary
  AudioFeatures f = synthesize_features("abc cba", spec, rng);
  CHECK(f.num_frames() == 6 * 3 + 1);
}

TEST_CASE("synthesis is deterministic per seed and rejects unknown characters") {
  SyntheticSpec spec = SyntheticSpec::build("ab", 6, 2, 0.2, 13);
  Utterance utt{"u1", "ab ba"};
  AudioFeatures a = utterance_features(utt, spec, 99);
  AudioFeatures b = utterance_features(utt, spec, 99);
  CHECK(a.frames.data() == b.frames.data());
  AudioFeatures c = utterance_features(utt, spec, 100);
  CHECK(a.frames.data() != c.frames.data());

  std::mt19937 rng(3);
  CHECK_THROWS_AS(synthesize_features("xyz", spec, rng), DomainError);
  CHECK_THROWS_AS(synthesize_features("", spec, rng), DomainError);
}

TEST_CASE("templates are pairwise separated") {
  SyntheticSpec spec = SyntheticSpec::build("abcdefghijklmnopqrstuvwxyz", 16, 4, 0.1, 14);
  std::vector<const std::vector<double>*> all;
  for (const auto& [c, t] : spec.templates) all.push_back(&t);
  all.push_back(&spec.silence);
  for (size_t i = 0; i < all.size(); ++i) {
    for (size_t j = i + 1; j < all.size(); ++j) {
      double d = 0.0;
      for (size_t k = 0; k < all[i]->size(); ++k) {
        double diff = (*all[i])[k] - (*all[j])[k];
        d += diff * diff;
      }
      CHECK(std::sqrt(d) > 0.1);
    }
  }
}

TEST_CASE("zero-noise synthesis separates distinct transcripts") {
  SyntheticSpec spec = SyntheticSpec::build("ab", 8, 2, 0.0, 15);
  std::mt19937 rng(4);
  AudioFeatures a = synthesize_features("ab", spec, rng);
  AudioFeatures b = synthesize_features("ba", spec, rng);
  CHECK(a.frames.data() != b.frames.data());
}

TEST_CASE("stacking matches the documented dimensions") {
  AudioFeatures f;
  f.frames = Tensor({7, 64});
  for (int i = 0; i < f.frames.size(); ++i) f.frames[i] = static_cast<double>(i);
  AudioFeatures out = stack_and_downsample(f, 2, 3);
  CHECK(out.feature_dim() == 192);
  CHECK(out.num_frames() == 3);  // ceil(7/3)

  AudioFeatures id = stack_and_downsample(f, 0, 1);
  CHECK(id.frames.data() == f.frames.data());

  // chronological stacking with zero padding at the start
  AudioFeatures g;
  g.frames = Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  AudioFeatures s = stack_and_downsample(g, 2, 2);
  REQUIRE(s.num_frames() == 2);
  REQUIRE(s.feature_dim() == 6);
  // frame 0: [x_-2, x_-1, x_0] = [0 0 | 0 0 | 1 2]
  CHECK(s.frames.at(0, 0) == 0.0);
  CHECK(s.frames.at(0, 3) == 0.0);
  CHECK(s.frames.at(0, 4) == 1.0);
  CHECK(s.frames.at(0, 5) == 2.0);
  // frame 1 covers x_0, x_1, x_2
  CHECK(s.frames.at(1, 0) == 1.0);
  CHECK(s.frames.at(1, 2) == 3.0);
  CHECK(s.frames.at(1, 4) == 5.0);

  AudioFeatures empty;
  CHECK_THROWS_AS(stack_and_downsample(empty, 2, 3), DomainError);
  CHECK_THROWS_AS(stack_and_downsample(g, -1, 3), ContractError);
}

TEST_CASE("rare word list removes the most frequent words") {
  std::vector<std::string> corpus = {"a a a b b c"};
  RareWordList rare = build_rare_word_list(corpus, 1);
  CHECK(rare.words == std::vector<std::string>{"b", "c"});

  RareWordList all = build_rare_word_list(corpus, 0);
  CHECK(all.words == std::vector<std::string>{"a", "b", "c"});

  RareWordList none = build_rare_word_list(corpus, 10);
  CHECK(none.words.empty());

  std::vector<std::string> empty;
  CHECK_THROWS_AS(build_rare_word_list(empty, 5), DomainError);
}

TEST_CASE("frequency ties at the boundary break lexicographically") {
  // b and c both occur twice; top_n = 2 must keep a (3x) and then b over c
  std::vector<std::string> corpus = {"a a a c c b b"};
  RareWordList rare = build_rare_word_list(corpus, 2);
  CHECK(rare.words == std::vector<std::string>{"c"});
}

TEST_CASE("zero-shot split keeps held-out words away from training") {
  CorpusGenConfig gen;
  gen.vocab_words = 40;
  gen.utterances = 300;
  std::mt19937 rng(5);
  std::vector<std::string> vocab = generate_vocabulary(gen, rng);
  Corpus corpus = generate_corpus(gen, vocab, "u", rng);
  std::vector<std::string> text = corpus.transcripts();
  RareWordList rare = build_rare_word_list(text, 10);

  ZeroShotSplit split = make_zero_shot_split(corpus, rare, 0.25, 77);
  CHECK(!split.zs_words.empty());
  CHECK(split.train.size() + split.zs_test.size() == corpus.size());

  std::set<std::string> train_vocab;
  for (const auto& u : split.train.utterances) {
    for (const auto& w : split_words(u.transcript)) train_vocab.insert(w);
  }
  for (const auto& w : split.zs_words) CHECK(!train_vocab.count(w));

  ZeroShotSplit again = make_zero_shot_split(corpus, rare, 0.25, 77);
  CHECK(again.zs_words == split.zs_words);
  CHECK(again.train.size() == split.train.size());

  // tiny fractions hold out nothing
  ZeroShotSplit tiny = make_zero_shot_split(corpus, rare, 1e-9, 77);
  CHECK(tiny.zs_words.empty());
  CHECK(tiny.zs_test.size() == 0);

  CHECK_THROWS_AS(make_zero_shot_split(corpus, rare, 0.0, 1), ContractError);
  CHECK_THROWS_AS(make_zero_shot_split(corpus, rare, 1.0, 1), ContractError);
}

TEST_CASE("corpus files round trip") {
  Corpus corpus;
  corpus.utterances = {{"u0", "hello there"}, {"u1", "more text"}};
  std::string path = "test_corpus_roundtrip.tsv";
  save_corpus(corpus, path);
  Corpus loaded = load_corpus(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.utterances[0].id == "u0");
  CHECK(loaded.utterances[1].transcript == "more text");
  std::remove(path.c_str());

  std::vector<std::string> words = {"aa", "bb"};
  save_word_list(words, "test_words.txt");
  CHECK(load_word_list("test_words.txt") == words);
  std::remove("test_words.txt");

  CHECK_THROWS_AS(load_corpus("missing_file.tsv"), LoadError);
}

TEST_CASE("generated corpora are deterministic") {
  CorpusGenConfig gen;
  gen.vocab_words = 25;
  gen.utterances = 50;
  std::mt19937 r1(9), r2(9);
  std::vector<std::string> v1 = generate_vocabulary(gen, r1);
  std::vector<std::string> v2 = generate_vocabulary(gen, r2);
  CHECK(v1 == v2);
  Corpus c1 = generate_corpus(gen, v1, "u", r1);
  Corpus c2 = generate_corpus(gen, v2, "u", r2);
  REQUIRE(c1.size() == c2.size());
  for (size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1.utterances[i].transcript == c2.utterances[i].transcript);
  }
}
