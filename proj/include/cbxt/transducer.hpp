#pragma once

#include <span>
#include <string>
#include <vector>

#include "cbxt/layers.hpp"
#include "cbxt/tensor.hpp"

namespace cbxt {

struct AudioFeatures {
  std::string utterance_id;
  Tensor frames;  // [T x F]

  int num_frames() const { return frames.rank() == 2 ? frames.rows() : 0; }
  int feature_dim() const { return frames.rank() == 2 ? frames.cols() : 0; }
};

struct EncoderStates {
  Val h;  // [T x D]
  bool contextualized = false;
};

struct PredStates {
  Val g;  // [(U+1) x D], row 0 is the start-of-sequence state
  bool contextualized = false;
};

// Per-(t,u) normalized log-distributions over the output vocabulary.
struct JointLattice {
  Val log_probs;  // [T x (U+1) x V]
  int frames = 0;
  int steps = 0;  // U+1
  int vocab = 0;

  Val at(Tape& tp, int t, int u, int v) const {
    return tp.pick(log_probs, (t * steps + u) * vocab + v);
  }
};

struct Hypothesis {
  std::vector<int> tokens;  // non-blank subword ids
  // One row per prediction-network state used while decoding (start state
  // plus one per emission); columns are biasing-entry scores. Empty when
  // the prediction-side adapter is off.
  std::vector<std::vector<double>> attention_rows;
};

struct TransducerConfig {
  int feature_dim = 48;
  int encoder_layers = 2;
  int encoder_hidden = 64;
  int model_dim = 64;    // common dim of encoder and prediction states
  int embed_dim = 32;
  int pred_hidden = 64;
  int joint_hidden = 64;
  int vocab_size = 0;    // includes blank
  int blank_id = 0;
  int bos_id = 1;
};

class Transducer {
 public:
  Transducer() = default;
  Transducer(const TransducerConfig& cfg, std::mt19937& rng);

  // Causal stacked unidirectional LSTM over (already stacked/downsampled)
  // feature frames, projected to model_dim.
  EncoderStates encode_audio(Tape& tp, const AudioFeatures& features);

  // States g_0..g_U where g_0 is computed from the start token alone and
  // g_u depends only on tokens[0..u-1].
  PredStates predict(Tape& tp, std::span<const int> tokens);

  // Incremental prediction-network interface for decoding.
  struct PredCursor {
    LstmState lstm;
    Val g;  // projected state, before any contextualization
  };
  PredCursor pred_start(Tape& tp);
  PredCursor pred_advance(Tape& tp, const PredCursor& cur, int token);

  // log_softmax(FFN(h_t + g_u)) for one cell.
  Val joint_row(Tape& tp, const Val& h_t, const Val& g_u);
  JointLattice joint(Tape& tp, const EncoderStates& enc, const PredStates& pred);

  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);
  const TransducerConfig& config() const { return cfg_; }

  std::vector<LstmLayer> encoder_layers;
  Tensor encoder_proj_w, encoder_proj_b;
  EmbeddingLayer embedding;
  LstmLayer pred_lstm;
  Tensor pred_proj_w, pred_proj_b;
  FeedForward joint_ffn;

 private:
  TransducerConfig cfg_;
};

// Negative log-likelihood of the target under the monotonic-alignment
// lattice, computed by the forward recursion in log space.
Val rnnt_loss(Tape& tp, const JointLattice& lattice, std::span<const int> target, int blank_id);

struct BiasingSetup;  // defined in biasing.hpp

// Standard transducer greedy search: argmax per cell, stay on the frame for
// up to max_symbols_per_frame non-blank emissions, advance on blank.
Hypothesis greedy_decode(Transducer& model, const AudioFeatures& features,
                         const BiasingSetup* biasing = nullptr,
                         int max_symbols_per_frame = 3);

}  // namespace cbxt
