#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbxt/biasing.hpp"

namespace cbxt {

// Every knob of an experiment run. Defaults are the documented values; an
// INI file overrides them and the effective config is echoed back out (and
// into checkpoints) via to_ini().
struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 42;
  std::string data_dir = "data";
  std::string out_dir = "out";
  int threads = 2;

  // [data]
  int vocab_words = 300;
  int utterances = 2300;
  int min_words = 2;
  int max_words = 6;
  int min_word_len = 3;
  int max_word_len = 8;
  double zipf_exponent = 1.0;
  int feature_dim = 16;
  int frames_per_char = 4;
  double noise_std = 0.1;
  int stack_left = 2;
  int downsample = 3;
  int rare_top_n = 50;
  double zs_fraction = 0.2;
  double test_fraction = 0.08;
  int plm_corpus_factor = 3;

  // [tokenizer]
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz'";
  int subword_vocab = 160;

  // [model]
  int encoder_layers = 2;
  int encoder_hidden = 64;
  int model_dim = 64;
  int embed_dim = 32;
  int pred_hidden = 64;
  int joint_hidden = 64;

  // [plm]
  int plm_embed = 32;
  int plm_hidden = 48;
  int plm_layers = 2;
  int plm_epochs = 6;
  double plm_lr = 3e-3;
  double plm_holdout = 0.1;
  int plm_batch = 16;

  // [biasing]
  int char_embed = 16;
  int char_hidden = 24;
  int char_depth = 1;
  int sub_embed = 24;
  int sub_hidden = 24;
  int sub_depth = 1;
  int attn_dim = 32;
  int heads = 2;
  int train_k = 50;
  std::vector<int> eval_k = {50, 100, 500, 1000};
  std::string variant = "baseline";

  // [training]
  double lr = 5e-4;
  int epochs = 10;
  int batch = 8;
  double adapter_lr = 5e-4;
  int adapter_epochs = 6;
  int max_symbols_per_frame = 3;

  static ExperimentConfig from_ini(const std::string& path);
  static ExperimentConfig from_ini_text(const std::string& text);
  std::string to_ini() const;

  BiasingDims biasing_dims() const;
  // Derived file locations.
  std::string train_tsv() const { return data_dir + "/train.tsv"; }
  std::string test_tsv() const { return data_dir + "/test.tsv"; }
  std::string zs_tsv() const { return data_dir + "/zs_test.tsv"; }
  std::string plm_txt() const { return data_dir + "/plm_corpus.txt"; }
  std::string rare_words_path() const { return data_dir + "/rare_words.txt"; }
  std::string zs_words_path() const { return data_dir + "/zs_words.txt"; }
  std::string char_vocab_path() const { return out_dir + "/char.vocab"; }
  std::string subword_vocab_path() const { return out_dir + "/subword.vocab"; }
  std::string plm_ckpt() const { return out_dir + "/plm.ckpt"; }
  std::string base_ckpt() const { return out_dir + "/base.ckpt"; }
  std::string variant_ckpt(const std::string& v) const { return out_dir + "/" + v + ".ckpt"; }
};

// Seed derivation so each pipeline stage draws from its own stream.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);
std::mt19937 seeded_rng(std::uint64_t seed, const std::string& tag);

}  // namespace cbxt
