#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbxt/tensor.hpp"

namespace cbxt {

// Which training phase owns a parameter. Frozen phases keep their tensors
// bitwise unchanged while other phases train.
enum class ParamTag : std::uint8_t { base = 0, adapter = 1, plm = 2 };

const char* to_string(ParamTag tag);

struct ParamEntry {
  std::string name;
  Tensor* tensor;
  ParamTag tag;
};

class ParamRegistry {
 public:
  void add(const std::string& name, Tensor& t, ParamTag tag);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<Tensor*> tensors(std::optional<ParamTag> tag = std::nullopt) const;
  Tensor* find(const std::string& name) const;
  void set_requires_grad(ParamTag tag, bool b);
  void set_requires_grad_all(bool b);
  void zero_grad();
  // Raw byte snapshot of every tensor with the given tag, for freeze checks.
  std::vector<double> snapshot(ParamTag tag) const;

 private:
  std::vector<ParamEntry> entries_;
};

class EmbeddingLayer {
 public:
  EmbeddingLayer() = default;
  EmbeddingLayer(int vocab_size, int dim, std::mt19937& rng);
  Val embed(Tape& tp, std::span<const int> ids);  // [n x D]
  Val embed_one(Tape& tp, int id);                // [D]
  int vocab_size() const { return table.rows(); }
  int dim() const { return table.cols(); }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  Tensor table;  // [V x D]
};

struct LstmState {
  Val h, c;
};

// Standard LSTM cell: sigmoid input/forget/output gates, tanh candidate.
// Gate order along the 4H axis is [input, forget, candidate, output].
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(int input_dim, int hidden_dim, std::mt19937& rng);
  LstmState initial_state(Tape& tp) const;
  LstmState step(Tape& tp, const Val& x, const LstmState& prev);
  Val forward(Tape& tp, const Val& seq);  // [n x D] -> [n x H]
  int input_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  Tensor w_x;  // [D x 4H]
  Tensor w_h;  // [H x 4H]
  Tensor bias; // [4H]

 private:
  int in_ = 0, hidden_ = 0;
};

// Stacked bidirectional LSTM used as a sequence-to-vector encoder.
class BiLstmEncoder {
 public:
  BiLstmEncoder() = default;
  BiLstmEncoder(int input_dim, int hidden_dim, int depth, std::mt19937& rng);
  // Concatenation of the last forward state and the backward state that has
  // consumed the whole reversed sequence. Output dim 2H.
  Val final_state(Tape& tp, const Val& seq);
  int output_dim() const { return 2 * hidden_; }
  int depth() const { return static_cast<int>(fwd.size()); }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  std::vector<LstmLayer> fwd, bwd;

 private:
  int hidden_ = 0;
};

// Affine stack with tanh between layers and a linear output layer.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::vector<int> dims, std::mt19937& rng);  // dims = in, hidden..., out
  Val apply(Tape& tp, const Val& x);  // [in] -> [out]
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

  std::vector<Tensor> weights;  // [d_i x d_{i+1}]
  std::vector<Tensor> biases;   // [d_{i+1}]

 private:
  std::vector<int> dims_;
};

struct AttentionParams {
  Tensor w_q;  // [D_q x d]
  Tensor w_k;  // [D_k x d]
  Tensor w_v;  // [D_v x d_v]
  int heads = 1;

  AttentionParams() = default;
  // zero_value_proj starts W_v at zero so the attention output begins as a
  // no-op on the residual path.
  AttentionParams(int query_dim, int key_dim, int value_dim, int proj_dim,
                  int out_dim, int heads, std::mt19937& rng, bool zero_value_proj = false);
  int proj_dim() const { return w_q.cols(); }
  int out_dim() const { return w_v.cols(); }
  void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);
};

// Per-tape projected keys/values so many queries can share one projection.
struct AttentionContext {
  std::vector<Val> keys_h;    // per head [K x d/h]
  std::vector<Val> values_h;  // per head [K x d_v/h]
  int entries = 0;
};

struct AttentionResult {
  Val context;  // [d_v]
  Val scores;   // [K], head-averaged, sums to 1
};

AttentionContext attention_precompute(Tape& tp, const Val& keys, const Val& values,
                                      AttentionParams& params);
AttentionResult attention_query(Tape& tp, const Val& query, const AttentionContext& ctx,
                                AttentionParams& params);
AttentionResult scaled_dot_attention(Tape& tp, const Val& query, const Val& keys,
                                     const Val& values, AttentionParams& params);

}  // namespace cbxt
