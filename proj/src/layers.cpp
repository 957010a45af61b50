#include "cbxt/layers.hpp"

#include <algorithm>
#include <cmath>

namespace cbxt {

const char* to_string(ParamTag tag) {
  switch (tag) {
    case ParamTag::base: return "base";
    case ParamTag::adapter: return "adapter";
    case ParamTag::plm: return "plm";
  }
  return "?";
}

void ParamRegistry::add(const std::string& name, Tensor& t, ParamTag tag) {
  if (find(name)) throw ContractError("duplicate parameter name: " + name);
  entries_.push_back({name, &t, tag});
}

std::vector<Tensor*> ParamRegistry::tensors(std::optional<ParamTag> tag) const {
  std::vector<Tensor*> out;
  for (const auto& e : entries_) {
    if (!tag || e.tag == *tag) out.push_back(e.tensor);
  }
  return out;
}

Tensor* ParamRegistry::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  return nullptr;
}

void ParamRegistry::set_requires_grad(ParamTag tag, bool b) {
  for (const auto& e : entries_) {
    if (e.tag == tag) e.tensor->set_requires_grad(b);
  }
}

void ParamRegistry::set_requires_grad_all(bool b) {
  for (const auto& e : entries_) e.tensor->set_requires_grad(b);
}

void ParamRegistry::zero_grad() {
  for (const auto& e : entries_) e.tensor->zero_grad();
}

std::vector<double> ParamRegistry::snapshot(ParamTag tag) const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    if (e.tag != tag) continue;
    out.insert(out.end(), e.tensor->data().begin(), e.tensor->data().end());
  }
  return out;
}

// --- EmbeddingLayer --------------------------------------------------------

EmbeddingLayer::EmbeddingLayer(int vocab_size, int dim, std::mt19937& rng)
    : table(Tensor::xavier({vocab_size, dim}, rng)) {
  table.set_requires_grad(true);
}

Val EmbeddingLayer::embed(Tape& tp, std::span<const int> ids) {
  if (ids.empty()) throw DomainError("embed of an empty id sequence");
  return tp.gather_rows(tp.param(table), ids);
}

Val EmbeddingLayer::embed_one(Tape& tp, int id) {
  int ids[1] = {id};
  return tp.row(tp.gather_rows(tp.param(table), ids), 0);
}

void EmbeddingLayer::register_params(ParamRegistry& reg, const std::string& prefix,
                                     ParamTag tag) {
  reg.add(prefix + ".table", table, tag);
}

// --- LstmLayer ---------------------------------------------------------------

LstmLayer::LstmLayer(int input_dim, int hidden_dim, std::mt19937& rng)
    : w_x(Tensor::xavier({input_dim, 4 * hidden_dim}, rng)),
      w_h(Tensor::xavier({hidden_dim, 4 * hidden_dim}, rng)),
      bias(Tensor::zeros({4 * hidden_dim})),
      in_(input_dim),
      hidden_(hidden_dim) {
  w_x.set_requires_grad(true);
  w_h.set_requires_grad(true);
  bias.set_requires_grad(true);
}

LstmState LstmLayer::initial_state(Tape& tp) const {
  return {tp.constant(Tensor::zeros({hidden_})), tp.constant(Tensor::zeros({hidden_}))};
}

LstmState LstmLayer::step(Tape& tp, const Val& x, const LstmState& prev) {
  Val z = tp.add(tp.add(tp.vecmat(x, tp.param(w_x)), tp.vecmat(prev.h, tp.param(w_h))),
                 tp.param(bias));
  int H = hidden_;
  Val gi = tp.sigmoid(tp.slice(z, 0, H));
  Val gf = tp.sigmoid(tp.slice(z, H, H));
  Val gc = tp.tanh(tp.slice(z, 2 * H, H));
  Val go = tp.sigmoid(tp.slice(z, 3 * H, H));
  Val c = tp.add(tp.mul(gf, prev.c), tp.mul(gi, gc));
  Val h = tp.mul(go, tp.tanh(c));
  return {h, c};
}

Val LstmLayer::forward(Tape& tp, const Val& seq) {
  const Tensor& t = tp.value(seq);
  if (t.rank() != 2) throw DimensionError("lstm forward expects [n x D], got " + t.shape_str());
  LstmState s = initial_state(tp);
  std::vector<Val> hs;
  hs.reserve(static_cast<size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    s = step(tp, tp.row(seq, i), s);
    hs.push_back(s.h);
  }
  return tp.stack_rows(hs);
}

void LstmLayer::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
  reg.add(prefix + ".w_x", w_x, tag);
  reg.add(prefix + ".w_h", w_h, tag);
  reg.add(prefix + ".bias", bias, tag);
}

// --- BiLstmEncoder -----------------------------------------------------------

BiLstmEncoder::BiLstmEncoder(int input_dim, int hidden_dim, int depth, std::mt19937& rng)
    : hidden_(hidden_dim) {
  if (depth < 1) throw ContractError("bilstm depth must be >= 1");
  int in = input_dim;
  for (int l = 0; l < depth; ++l) {
    fwd.emplace_back(in, hidden_dim, rng);
    bwd.emplace_back(in, hidden_dim, rng);
    in = 2 * hidden_dim;
  }
}

Val BiLstmEncoder::final_state(Tape& tp, const Val& seq) {
  const Tensor& t = tp.value(seq);
  if (t.rank() != 2) throw DimensionError("bilstm expects [n x D], got " + t.shape_str());
  int n = t.rows();
  if (n < 1) throw DomainError("bilstm on an empty sequence");

  Val input = seq;
  Val fwd_last, bwd_last;
  for (size_t l = 0; l < fwd.size(); ++l) {
    LstmState fs = fwd[l].initial_state(tp);
    LstmState bs = bwd[l].initial_state(tp);
    std::vector<Val> fh(static_cast<size_t>(n)), bh(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      fs = fwd[l].step(tp, tp.row(input, i), fs);
      fh[static_cast<size_t>(i)] = fs.h;
    }
    for (int i = n - 1; i >= 0; --i) {
      bs = bwd[l].step(tp, tp.row(input, i), bs);
      bh[static_cast<size_t>(i)] = bs.h;  // aligned with position i
    }
    fwd_last = fh.back();
    bwd_last = bh.front();
    if (l + 1 < fwd.size()) {
      std::vector<Val> joined(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        Val parts[2] = {fh[static_cast<size_t>(i)], bh[static_cast<size_t>(i)]};
        joined[static_cast<size_t>(i)] = tp.concat(parts);
      }
      input = tp.stack_rows(joined);
    }
  }
  Val parts[2] = {fwd_last, bwd_last};
  return tp.concat(parts);
}

void BiLstmEncoder::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
  for (size_t l = 0; l < fwd.size(); ++l) {
    fwd[l].register_params(reg, prefix + ".fwd" + std::to_string(l), tag);
    bwd[l].register_params(reg, prefix + ".bwd" + std::to_string(l), tag);
  }
}

// --- FeedForward ---------------------------------------------------------------

FeedForward::FeedForward(std::vector<int> dims, std::mt19937& rng) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ContractError("feed_forward needs at least in/out dims");
  for (size_t i = 0; i + 1 < dims_.size(); ++i) {
    weights.push_back(Tensor::xavier({dims_[i], dims_[i + 1]}, rng));
    biases.push_back(Tensor::zeros({dims_[i + 1]}));
    weights.back().set_requires_grad(true);
    biases.back().set_requires_grad(true);
  }
}

Val FeedForward::apply(Tape& tp, const Val& x) {
  Val cur = x;
  for (size_t i = 0; i < weights.size(); ++i) {
    cur = tp.add(tp.vecmat(cur, tp.param(weights[i])), tp.param(biases[i]));
    if (i + 1 < weights.size()) cur = tp.tanh(cur);
  }
  return cur;
}

void FeedForward::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
  for (size_t i = 0; i < weights.size(); ++i) {
    reg.add(prefix + ".w" + std::to_string(i), weights[i], tag);
    reg.add(prefix + ".b" + std::to_string(i), biases[i], tag);
  }
}

// --- attention -------------------------------------------------------------------

AttentionParams::AttentionParams(int query_dim, int key_dim, int value_dim, int proj_dim,
                                 int out_dim, int heads_in, std::mt19937& rng,
                                 bool zero_value_proj)
    : w_q(Tensor::xavier({query_dim, proj_dim}, rng)),
      w_k(Tensor::xavier({key_dim, proj_dim}, rng)),
      w_v(zero_value_proj ? Tensor::zeros({value_dim, out_dim})
                          : Tensor::xavier({value_dim, out_dim}, rng)),
      heads(heads_in) {
  if (heads < 1 || proj_dim % heads != 0 || out_dim % heads != 0) {
    throw ContractError("attention dims " + std::to_string(proj_dim) + "/" +
                        std::to_string(out_dim) + " not divisible by heads " +
                        std::to_string(heads));
  }
  w_q.set_requires_grad(true);
  w_k.set_requires_grad(true);
  w_v.set_requires_grad(true);
}

void AttentionParams::register_params(ParamRegistry& reg, const std::string& prefix,
                                      ParamTag tag) {
  reg.add(prefix + ".w_q", w_q, tag);
  reg.add(prefix + ".w_k", w_k, tag);
  reg.add(prefix + ".w_v", w_v, tag);
}

AttentionContext attention_precompute(Tape& tp, const Val& keys, const Val& values,
                                      AttentionParams& params) {
  const Tensor& tk = tp.value(keys);
  const Tensor& tv = tp.value(values);
  if (tk.rank() != 2 || tv.rank() != 2 || tk.rows() != tv.rows()) {
    throw DimensionError("attention keys/values mismatch: " + tk.shape_str() + " vs " +
                         tv.shape_str());
  }
  if (tk.rows() < 1) throw ContractError("attention over an empty entry list");
  Val pk = tp.matmul(keys, tp.param(params.w_k));
  Val pv = tp.matmul(values, tp.param(params.w_v));
  int dh = params.proj_dim() / params.heads;
  int dvh = params.out_dim() / params.heads;
  AttentionContext ctx;
  ctx.entries = tk.rows();
  for (int h = 0; h < params.heads; ++h) {
    ctx.keys_h.push_back(tp.cols(pk, h * dh, dh));
    ctx.values_h.push_back(tp.cols(pv, h * dvh, dvh));
  }
  return ctx;
}

AttentionResult attention_query(Tape& tp, const Val& query, const AttentionContext& ctx,
                                AttentionParams& params) {
  Val pq = tp.vecmat(query, tp.param(params.w_q));
  int dh = params.proj_dim() / params.heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Val> contexts;
  Val score_sum;
  for (int h = 0; h < params.heads; ++h) {
    Val qh = tp.slice(pq, h * dh, dh);
    Val logits = tp.scale(tp.matvec(ctx.keys_h[static_cast<size_t>(h)], qh), inv_sqrt);
    Val scores = tp.softmax(logits);
    contexts.push_back(tp.vecmat(scores, ctx.values_h[static_cast<size_t>(h)]));
    score_sum = h == 0 ? scores : tp.add(score_sum, scores);
  }
  AttentionResult res;
  res.context = tp.concat(contexts);
  res.scores = params.heads == 1 ? score_sum : tp.scale(score_sum, 1.0 / params.heads);
  return res;
}

AttentionResult scaled_dot_attention(Tape& tp, const Val& query, const Val& keys,
                                     const Val& values, AttentionParams& params) {
  AttentionContext ctx = attention_precompute(tp, keys, values, params);
  return attention_query(tp, query, ctx, params);
}

}  // namespace cbxt
