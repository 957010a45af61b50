#pragma once

#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbxt/layers.hpp"
#include "cbxt/tokenizer.hpp"
#include "cbxt/transducer.hpp"

namespace cbxt {

enum class ContextSource { chars, subwords, plm, prednet };

const char* to_string(ContextSource s);

struct BiasEntry {
  std::string text;
  TokenSequence char_ids;
  TokenSequence subword_ids;
  bool is_no_bias = false;
};

struct BiasingList {
  std::vector<BiasEntry> entries;        // index 0 is always `<no-bias>`
  std::vector<int> correct_indices;      // positions of ground-truth entities,
                                         // ordered by first appearance in the transcript
  int correct_index() const { return correct_indices.empty() ? -1 : correct_indices.front(); }
  bool has_correct() const { return !correct_indices.empty(); }
  int num_entities() const { return static_cast<int>(entries.size()) - 1; }  // excludes no-bias

  void save(std::ostream& os) const;
};

enum class ListMode { train, eval };

// Correct entities are the rare words of the transcript (transcript order);
// distractors are drawn without replacement from the rest of the rare list
// until the list holds K entities besides `<no-bias>`. Entry order after
// index 0 is shuffled by rng.
BiasingList build_biasing_list(const std::string& transcript,
                               std::span<const std::string> rare_words, int k,
                               std::mt19937& rng, ListMode mode, const CharVocab& char_vocab,
                               const SubwordVocab& subword_vocab);

// Keys/values over the biasing entries; row 0 is the `<no-bias>` row.
struct ContextEmbeddings {
  Val keys;    // [(K+1) x D_key]
  Val values;  // [(K+1) x D_val]
  ContextSource key_source = ContextSource::subwords;
  ContextSource value_source = ContextSource::subwords;
};

// Embedding + BiLSTM over entry tokens, with a learned `<no-bias>` vector
// that bypasses the BiLSTM.
class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(int vocab_size, int embed_dim, int hidden_dim, int depth, std::mt19937& rng);
  int output_dim() const { return bilstm.output_dim(); }
  // One row per list entry, row 0 = no-bias vector.
  Val encode(Tape& tp, const BiasingList& list, TokenLevel level);
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  EmbeddingLayer embedding;
  BiLstmEncoder bilstm;
  Tensor no_bias_vec;
};

Val encode_context_char(Tape& tp, const BiasingList& list, ContextEncoder& encoder);
Val encode_context_subword(Tape& tp, const BiasingList& list, ContextEncoder& encoder);

// LSTM language model; pretrained, then frozen while adapters train.
struct PlmConfig {
  int vocab_size = 0;
  int embed_dim = 32;
  int hidden = 48;
  int layers = 2;
  int bos_id = 1;
};

class PlmEncoder {
 public:
  PlmEncoder() = default;
  PlmEncoder(const PlmConfig& cfg, std::mt19937& rng);

  struct Cursor {
    std::vector<LstmState> lstm;
    Val state;  // last layer hidden
  };
  Cursor start(Tape& tp);                            // after `<bos>` only
  Cursor advance(Tape& tp, const Cursor& cur, int token);

  // Hidden state after `<bos>` then every token: [(n+1) x D_p].
  Val prefix_states(Tape& tp, std::span<const int> tokens);
  // State after consuming `<bos>` + all tokens: [D_p].
  Val final_state(Tape& tp, std::span<const int> tokens);
  // Next-token distribution for language-model training.
  Val next_token_log_probs(Tape& tp, const Val& state);

  int state_dim() const { return cfg_.hidden; }
  const PlmConfig& config() const { return cfg_; }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  EmbeddingLayer embedding;
  std::vector<LstmLayer> lstm;
  Tensor out_w, out_b;

 private:
  PlmConfig cfg_;
};

Val plm_prefix_state(Tape& tp, std::span<const int> decoded_prefix, PlmEncoder& plm);
Val encode_context_plm(Tape& tp, const BiasingList& list, PlmEncoder& plm, Tensor& no_bias_vec);

// Table of supported adapter wirings. Key/value sources for the encoder-side
// adapter, and query/key/value sources for the prediction-side adapter.
struct VariantConfig {
  std::string name = "baseline";
  ContextSource eba_key = ContextSource::subwords;
  ContextSource eba_value = ContextSource::subwords;
  bool pnba_enabled = false;
  ContextSource pnba_query = ContextSource::prednet;
  ContextSource pnba_key = ContextSource::subwords;
  ContextSource pnba_value = ContextSource::subwords;

  static VariantConfig named(const std::string& name);
  static const std::vector<std::string>& names();
};

struct BiasingDims {
  int char_embed = 16;
  int char_hidden = 24;
  int char_depth = 1;
  int sub_embed = 24;
  int sub_hidden = 24;
  int sub_depth = 1;
  int attn_dim = 32;
  int heads = 2;
};

struct AcousticBiasResult {
  EncoderStates states;
  Val scores;  // [T x (K+1)]
};

struct SemanticBiasResult {
  PredStates states;
  Val scores;  // [(U+1) x (K+1)]
};

// h_t^context = h_t + attention(query=h_t) over the context embeddings.
AcousticBiasResult acoustic_bias(Tape& tp, const EncoderStates& enc,
                                 const ContextEmbeddings& ctx, AttentionParams& adapter);

// g_u^context = g_u + attention(query = g_u or the language-model prefix
// state) over the context embeddings. plm_states must be row-aligned with g
// when the query source is the language model.
SemanticBiasResult semantic_bias(Tape& tp, const PredStates& pred, ContextSource query_source,
                                 const ContextEmbeddings& ctx, const Val* plm_states,
                                 AttentionParams& adapter);

// Adapter parameters and the context encoders a variant needs.
class BiasingModel {
 public:
  BiasingModel() = default;
  BiasingModel(const VariantConfig& variant, const BiasingDims& dims, int char_vocab_size,
               int sub_vocab_size, int model_dim, const PlmEncoder* plm, std::mt19937& rng);

  const VariantConfig& variant() const { return variant_; }
  bool uses_char() const;
  bool uses_sub() const;
  bool uses_plm() const;
  void register_params(ParamRegistry& reg, const std::string& prefix);  // all adapter-tagged

  ContextEncoder char_encoder;  // present when uses_char()
  ContextEncoder sub_encoder;   // present when uses_sub()
  Tensor plm_no_bias;           // present when uses_plm()
  AttentionParams eba;
  AttentionParams pnba;         // valid when variant.pnba_enabled

 private:
  VariantConfig variant_;
};

// What the decoder needs to run one utterance with biasing.
struct BiasingSetup {
  BiasingModel* model = nullptr;
  PlmEncoder* plm = nullptr;  // required only by language-model variants
  const BiasingList* list = nullptr;
};

// Per-utterance wiring of one biasing list on one tape: encodes the list
// once, shares E_sub rows between both adapters, and serves both the
// full-sequence training path and the incremental decode path.
struct BiasingRuntime {
  BiasingModel* model = nullptr;
  PlmEncoder* plm = nullptr;
  const BiasingList* list = nullptr;
  Val char_rows, sub_rows, plm_rows;
  ContextEmbeddings eba_ctx;
  ContextEmbeddings pnba_ctx;
  AttentionContext eba_attn;   // projected once, queried per frame
  AttentionContext pnba_attn;  // projected once, queried per step

  static BiasingRuntime prepare(Tape& tp, BiasingModel& model, PlmEncoder* plm,
                                const BiasingList& list);

  AcousticBiasResult apply_acoustic(Tape& tp, const EncoderStates& enc);
  SemanticBiasResult apply_semantic(Tape& tp, const PredStates& pred, const Val* plm_states);
  // Single-step contextualization used by the decoder; appends the score row.
  Val bias_pred_step(Tape& tp, const Val& g_u, const Val* plm_state,
                     std::vector<double>* score_row);
};

}  // namespace cbxt
