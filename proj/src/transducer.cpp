#include "cbxt/transducer.hpp"

#include <algorithm>

namespace cbxt {

Transducer::Transducer(const TransducerConfig& cfg, std::mt19937& rng) : cfg_(cfg) {
  if (cfg.vocab_size < 2) throw ContractError("transducer vocab must include blank and labels");
  int in = cfg.feature_dim;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    encoder_layers.emplace_back(in, cfg.encoder_hidden, rng);
    in = cfg.encoder_hidden;
  }
  encoder_proj_w = Tensor::xavier({cfg.encoder_hidden, cfg.model_dim}, rng);
  encoder_proj_b = Tensor::zeros({cfg.model_dim});
  embedding = EmbeddingLayer(cfg.vocab_size, cfg.embed_dim, rng);
  pred_lstm = LstmLayer(cfg.embed_dim, cfg.pred_hidden, rng);
  pred_proj_w = Tensor::xavier({cfg.pred_hidden, cfg.model_dim}, rng);
  pred_proj_b = Tensor::zeros({cfg.model_dim});
  joint_ffn = FeedForward({cfg.model_dim, cfg.joint_hidden, cfg.vocab_size}, rng);
  for (Tensor* t : {&encoder_proj_w, &encoder_proj_b, &pred_proj_w, &pred_proj_b})
    t->set_requires_grad(true);
}

EncoderStates Transducer::encode_audio(Tape& tp, const AudioFeatures& features) {
  if (features.num_frames() < 1) throw DomainError("encode_audio on empty features");
  if (features.feature_dim() != cfg_.feature_dim) {
    throw DimensionError("feature dim " + std::to_string(features.feature_dim()) +
                         " does not match configured " + std::to_string(cfg_.feature_dim));
  }
  Val seq = tp.constant(features.frames);
  for (auto& layer : encoder_layers) seq = layer.forward(tp, seq);
  Val h = tp.add_rowvec(tp.matmul(seq, tp.param(encoder_proj_w)), tp.param(encoder_proj_b));
  return {h, false};
}

PredStates Transducer::predict(Tape& tp, std::span<const int> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(cfg_.bos_id);
  for (int t : tokens) {
    if (t == cfg_.blank_id) throw ContractError("blank id in prediction-network input");
    ids.push_back(t);
  }
  Val emb = embedding.embed(tp, ids);
  Val hs = pred_lstm.forward(tp, emb);
  Val g = tp.add_rowvec(tp.matmul(hs, tp.param(pred_proj_w)), tp.param(pred_proj_b));
  return {g, false};
}

Transducer::PredCursor Transducer::pred_start(Tape& tp) {
  PredCursor cur;
  cur.lstm = pred_lstm.initial_state(tp);
  cur.lstm = pred_lstm.step(tp, embedding.embed_one(tp, cfg_.bos_id), cur.lstm);
  cur.g = tp.add(tp.vecmat(cur.lstm.h, tp.param(pred_proj_w)), tp.param(pred_proj_b));
  return cur;
}

Transducer::PredCursor Transducer::pred_advance(Tape& tp, const PredCursor& cur, int token) {
  if (token == cfg_.blank_id) throw ContractError("blank id in prediction-network input");
  PredCursor next;
  next.lstm = pred_lstm.step(tp, embedding.embed_one(tp, token), cur.lstm);
  next.g = tp.add(tp.vecmat(next.lstm.h, tp.param(pred_proj_w)), tp.param(pred_proj_b));
  return next;
}

Val Transducer::joint_row(Tape& tp, const Val& h_t, const Val& g_u) {
  return tp.log_softmax(joint_ffn.apply(tp, tp.add(h_t, g_u)));
}

JointLattice Transducer::joint(Tape& tp, const EncoderStates& enc, const PredStates& pred) {
  const Tensor& th = tp.value(enc.h);
  const Tensor& tg = tp.value(pred.g);
  if (th.cols() != tg.cols()) {
    throw DimensionError("joint dims disagree: encoder " + th.shape_str() + " vs prediction " +
                         tg.shape_str());
  }
  int T = th.rows(), U1 = tg.rows();
  std::vector<Val> rows;
  rows.reserve(static_cast<size_t>(T) * static_cast<size_t>(U1));
  for (int t = 0; t < T; ++t) {
    Val h_t = tp.row(enc.h, t);
    for (int u = 0; u < U1; ++u) {
      rows.push_back(joint_row(tp, h_t, tp.row(pred.g, u)));
    }
  }
  JointLattice lat;
  lat.log_probs = tp.stack_rows3(rows, T, U1);
  lat.frames = T;
  lat.steps = U1;
  lat.vocab = cfg_.vocab_size;
  return lat;
}

void Transducer::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
  for (size_t l = 0; l < encoder_layers.size(); ++l) {
    encoder_layers[l].register_params(reg, prefix + ".encoder" + std::to_string(l), tag);
  }
  reg.add(prefix + ".encoder_proj_w", encoder_proj_w, tag);
  reg.add(prefix + ".encoder_proj_b", encoder_proj_b, tag);
  embedding.register_params(reg, prefix + ".embedding", tag);
  pred_lstm.register_params(reg, prefix + ".pred_lstm", tag);
  reg.add(prefix + ".pred_proj_w", pred_proj_w, tag);
  reg.add(prefix + ".pred_proj_b", pred_proj_b, tag);
  joint_ffn.register_params(reg, prefix + ".joint", tag);
}

Val rnnt_loss(Tape& tp, const JointLattice& lattice, std::span<const int> target, int blank_id) {
  int T = lattice.frames;
  int U = static_cast<int>(target.size());
  if (T < 1) throw DomainError("rnnt_loss needs at least one frame");
  if (lattice.steps != U + 1) {
    throw ContractError("lattice has " + std::to_string(lattice.steps) +
                        " prediction steps for a target of length " + std::to_string(U));
  }
  for (int y : target) {
    if (y == blank_id) throw ContractError("target contains the blank id");
    if (y < 0 || y >= lattice.vocab)
      throw ContractError("target id " + std::to_string(y) + " outside vocabulary");
  }

  auto blank_at = [&](int t, int u) { return lattice.at(tp, t, u, blank_id); };
  auto label_at = [&](int t, int u) { return lattice.at(tp, t, u, target[static_cast<size_t>(u)]); };

  // alpha(t, u): log-probability of consuming t frames and emitting u labels.
  std::vector<Val> prev(static_cast<size_t>(U + 1)), cur(static_cast<size_t>(U + 1));
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) {
        cur[0] = tp.scalar(0.0);
        continue;
      }
      Val from_blank, from_label;
      if (t > 0) from_blank = tp.add(prev[static_cast<size_t>(u)], blank_at(t - 1, u));
      if (u > 0) from_label = tp.add(cur[static_cast<size_t>(u - 1)], label_at(t, u - 1));
      if (from_blank.valid() && from_label.valid()) {
        cur[static_cast<size_t>(u)] = tp.logaddexp(from_blank, from_label);
      } else {
        cur[static_cast<size_t>(u)] = from_blank.valid() ? from_blank : from_label;
      }
    }
    std::swap(prev, cur);
  }
  Val total = tp.add(prev[static_cast<size_t>(U)], blank_at(T - 1, U));
  return tp.scale(total, -1.0);
}

}  // namespace cbxt
