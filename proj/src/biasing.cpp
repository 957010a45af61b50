#include "cbxt/biasing.hpp"

#include <algorithm>
#include <iostream>
#include <ostream>
#include <set>

namespace cbxt {

const char* to_string(ContextSource s) {
  switch (s) {
    case ContextSource::chars: return "char";
    case ContextSource::subwords: return "sub";
    case ContextSource::plm: return "plm";
    case ContextSource::prednet: return "prednet";
  }
  return "?";
}

void BiasingList::save(std::ostream& os) const {
  std::set<int> correct(correct_indices.begin(), correct_indices.end());
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].is_no_bias) {
      os << SubwordVocab::kNoBias << '\n';
    } else {
      os << (correct.count(static_cast<int>(i)) ? "*" : "") << entries[i].text << '\n';
    }
  }
}

BiasingList build_biasing_list(const std::string& transcript,
                               std::span<const std::string> rare_words, int k,
                               std::mt19937& rng, ListMode /*mode: eval lists are built
                               the same way as training lists*/,
                               const CharVocab& char_vocab, const SubwordVocab& subword_vocab) {
  if (k < 0) throw ContractError("biasing list size must be >= 0");
  std::set<std::string> rare_set(rare_words.begin(), rare_words.end());

  // Ground-truth entities: rare transcript words, first-appearance order.
  std::vector<std::string> correct;
  for (const auto& w : split_words(transcript)) {
    if (rare_set.count(w) && std::find(correct.begin(), correct.end(), w) == correct.end()) {
      correct.push_back(w);
    }
  }

  std::vector<std::string> pool;
  pool.reserve(rare_words.size());
  for (const auto& w : rare_words) {
    if (std::find(correct.begin(), correct.end(), w) == correct.end()) pool.push_back(w);
  }
  int want_distractors = std::max(0, k - static_cast<int>(correct.size()));
  if (want_distractors > static_cast<int>(pool.size())) {
    std::cerr << "warning: biasing list size " << k << " exceeds available rare words; capping "
              << "distractors at " << pool.size() << "\n";
    want_distractors = static_cast<int>(pool.size());
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<size_t>(want_distractors));

  std::vector<std::string> content = correct;
  content.insert(content.end(), pool.begin(), pool.end());
  std::shuffle(content.begin(), content.end(), rng);

  BiasingList list;
  BiasEntry no_bias;
  no_bias.text = SubwordVocab::kNoBias;
  no_bias.is_no_bias = true;
  list.entries.push_back(std::move(no_bias));
  for (const auto& w : content) {
    BiasEntry e;
    e.text = w;
    e.char_ids = char_vocab.encode(w);
    e.subword_ids = subword_vocab.encode(w);
    e.is_no_bias = false;
    list.entries.push_back(std::move(e));
  }
  for (const auto& w : correct) {
    for (size_t i = 1; i < list.entries.size(); ++i) {
      if (list.entries[i].text == w) {
        list.correct_indices.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return list;
}

// --- context encoders ------------------------------------------------------

ContextEncoder::ContextEncoder(int vocab_size, int embed_dim, int hidden_dim, int depth,
                               std::mt19937& rng)
    : embedding(vocab_size, embed_dim, rng),
      bilstm(embed_dim, hidden_dim, depth, rng),
      no_bias_vec(Tensor::xavier({2 * hidden_dim}, rng)) {
  no_bias_vec.set_requires_grad(true);
}

Val ContextEncoder::encode(Tape& tp, const BiasingList& list, TokenLevel level) {
  if (list.entries.empty() || !list.entries[0].is_no_bias) {
    throw ContractError("biasing list must start with the <no-bias> entry");
  }
  std::vector<Val> rows;
  rows.reserve(list.entries.size());
  rows.push_back(tp.param(no_bias_vec));
  for (size_t i = 1; i < list.entries.size(); ++i) {
    const TokenSequence& seq =
        level == TokenLevel::character ? list.entries[i].char_ids : list.entries[i].subword_ids;
    if (seq.empty()) throw ContractError("bias entry '" + list.entries[i].text + "' has no tokens");
    rows.push_back(bilstm.final_state(tp, embedding.embed(tp, seq.ids)));
  }
  return tp.stack_rows(rows);
}

void ContextEncoder::register_params(ParamRegistry& reg, const std::string& prefix,
                                     ParamTag tag) {
  embedding.register_params(reg, prefix + ".embedding", tag);
  bilstm.register_params(reg, prefix + ".bilstm", tag);
  reg.add(prefix + ".no_bias", no_bias_vec, tag);
}

Val encode_context_char(Tape& tp, const BiasingList& list, ContextEncoder& encoder) {
  return encoder.encode(tp, list, TokenLevel::character);
}

Val encode_context_subword(Tape& tp, const BiasingList& list, ContextEncoder& encoder) {
  return encoder.encode(tp, list, TokenLevel::subword);
}

// --- language-model encoder ---------------------------------------------------

PlmEncoder::PlmEncoder(const PlmConfig& cfg, std::mt19937& rng) : cfg_(cfg) {
  if (cfg.vocab_size < 2) throw ContractError("language model vocab too small");
  embedding = EmbeddingLayer(cfg.vocab_size, cfg.embed_dim, rng);
  int in = cfg.embed_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    lstm.emplace_back(in, cfg.hidden, rng);
    in = cfg.hidden;
  }
  out_w = Tensor::xavier({cfg.hidden, cfg.vocab_size}, rng);
  out_b = Tensor::zeros({cfg.vocab_size});
  out_w.set_requires_grad(true);
  out_b.set_requires_grad(true);
}

PlmEncoder::Cursor PlmEncoder::start(Tape& tp) {
  Cursor cur;
  for (auto& layer : lstm) cur.lstm.push_back(layer.initial_state(tp));
  Val x = embedding.embed_one(tp, cfg_.bos_id);
  for (size_t l = 0; l < lstm.size(); ++l) {
    cur.lstm[l] = lstm[l].step(tp, x, cur.lstm[l]);
    x = cur.lstm[l].h;
  }
  cur.state = x;
  return cur;
}

PlmEncoder::Cursor PlmEncoder::advance(Tape& tp, const Cursor& prev, int token) {
  Cursor cur = prev;
  Val x = embedding.embed_one(tp, token);
  for (size_t l = 0; l < lstm.size(); ++l) {
    cur.lstm[l] = lstm[l].step(tp, x, cur.lstm[l]);
    x = cur.lstm[l].h;
  }
  cur.state = x;
  return cur;
}

Val PlmEncoder::prefix_states(Tape& tp, std::span<const int> tokens) {
  Cursor cur = start(tp);
  std::vector<Val> rows{cur.state};
  rows.reserve(tokens.size() + 1);
  for (int t : tokens) {
    cur = advance(tp, cur, t);
    rows.push_back(cur.state);
  }
  return tp.stack_rows(rows);
}

Val PlmEncoder::final_state(Tape& tp, std::span<const int> tokens) {
  Cursor cur = start(tp);
  for (int t : tokens) cur = advance(tp, cur, t);
  return cur.state;
}

Val PlmEncoder::next_token_log_probs(Tape& tp, const Val& state) {
  return tp.log_softmax(tp.add(tp.vecmat(state, tp.param(out_w)), tp.param(out_b)));
}

void PlmEncoder::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
  embedding.register_params(reg, prefix + ".embedding", tag);
  for (size_t l = 0; l < lstm.size(); ++l) {
    lstm[l].register_params(reg, prefix + ".lstm" + std::to_string(l), tag);
  }
  reg.add(prefix + ".out_w", out_w, tag);
  reg.add(prefix + ".out_b", out_b, tag);
}

Val plm_prefix_state(Tape& tp, std::span<const int> decoded_prefix, PlmEncoder& plm) {
  return plm.final_state(tp, decoded_prefix);
}

Val encode_context_plm(Tape& tp, const BiasingList& list, PlmEncoder& plm, Tensor& no_bias_vec) {
  if (list.entries.empty() || !list.entries[0].is_no_bias) {
    throw ContractError("biasing list must start with the <no-bias> entry");
  }
  std::vector<Val> rows;
  rows.reserve(list.entries.size());
  rows.push_back(tp.param(no_bias_vec));
  for (size_t i = 1; i < list.entries.size(); ++i) {
    rows.push_back(plm.final_state(tp, list.entries[i].subword_ids.ids));
  }
  return tp.stack_rows(rows);
}

// --- variants ----------------------------------------------------------------

const std::vector<std::string>& VariantConfig::names() {
  static const std::vector<std::string> kNames = {"baseline",     "char-i",      "char-ii",
                                                  "char-subword", "subword-plm", "char-plm"};
  return kNames;
}

VariantConfig VariantConfig::named(const std::string& name) {
  VariantConfig v;
  v.name = name;
  if (name == "baseline") {
    v.eba_key = ContextSource::subwords;
    v.eba_value = ContextSource::subwords;
    v.pnba_enabled = false;
  } else if (name == "char-i") {
    v.eba_key = ContextSource::chars;
    v.eba_value = ContextSource::chars;
    v.pnba_enabled = false;
  } else if (name == "char-ii") {
    v.eba_key = ContextSource::chars;
    v.eba_value = ContextSource::subwords;
    v.pnba_enabled = false;
  } else if (name == "char-subword") {
    v.eba_key = ContextSource::chars;
    v.eba_value = ContextSource::subwords;
    v.pnba_enabled = true;
    v.pnba_query = ContextSource::prednet;
    v.pnba_key = ContextSource::subwords;
    v.pnba_value = ContextSource::subwords;
  } else if (name == "subword-plm") {
    v.eba_key = ContextSource::subwords;
    v.eba_value = ContextSource::subwords;
    v.pnba_enabled = true;
    v.pnba_query = ContextSource::prednet;
    v.pnba_key = ContextSource::subwords;
    v.pnba_value = ContextSource::subwords;
  } else if (name == "char-plm") {
    v.eba_key = ContextSource::chars;
    v.eba_value = ContextSource::subwords;
    v.pnba_enabled = true;
    v.pnba_query = ContextSource::plm;
    v.pnba_key = ContextSource::plm;
    v.pnba_value = ContextSource::subwords;
  } else {
    throw ContractError("unknown variant: " + name);
  }
  return v;
}

// --- adapters ------------------------------------------------------------------

AcousticBiasResult acoustic_bias(Tape& tp, const EncoderStates& enc,
                                 const ContextEmbeddings& ctx, AttentionParams& adapter) {
  AttentionContext attn = attention_precompute(tp, ctx.keys, ctx.values, adapter);
  const Tensor& th = tp.value(enc.h);
  std::vector<Val> rows, score_rows;
  rows.reserve(static_cast<size_t>(th.rows()));
  score_rows.reserve(static_cast<size_t>(th.rows()));
  for (int t = 0; t < th.rows(); ++t) {
    Val h_t = tp.row(enc.h, t);
    AttentionResult res = attention_query(tp, h_t, attn, adapter);
    rows.push_back(tp.add(h_t, res.context));
    score_rows.push_back(res.scores);
  }
  AcousticBiasResult out;
  out.states = {tp.stack_rows(rows), true};
  out.scores = tp.stack_rows(score_rows);
  return out;
}

SemanticBiasResult semantic_bias(Tape& tp, const PredStates& pred, ContextSource query_source,
                                 const ContextEmbeddings& ctx, const Val* plm_states,
                                 AttentionParams& adapter) {
  const Tensor& tg = tp.value(pred.g);
  if (query_source == ContextSource::plm) {
    if (plm_states == nullptr || !plm_states->valid()) {
      throw ContractError("semantic biasing with a language-model query needs prefix states");
    }
    if (tp.value(*plm_states).rows() != tg.rows()) {
      throw ContractError("language-model prefix states not row-aligned with prediction states");
    }
  }
  AttentionContext attn = attention_precompute(tp, ctx.keys, ctx.values, adapter);
  std::vector<Val> rows, score_rows;
  rows.reserve(static_cast<size_t>(tg.rows()));
  for (int u = 0; u < tg.rows(); ++u) {
    Val g_u = tp.row(pred.g, u);
    Val query = query_source == ContextSource::plm ? tp.row(*plm_states, u) : g_u;
    AttentionResult res = attention_query(tp, query, attn, adapter);
    rows.push_back(tp.add(g_u, res.context));
    score_rows.push_back(res.scores);
  }
  SemanticBiasResult out;
  out.states = {tp.stack_rows(rows), true};
  out.scores = tp.stack_rows(score_rows);
  return out;
}

// --- BiasingModel ----------------------------------------------------------------

BiasingModel::BiasingModel(const VariantConfig& variant, const BiasingDims& dims,
                           int char_vocab_size, int sub_vocab_size, int model_dim,
                           const PlmEncoder* plm, std::mt19937& rng)
    : variant_(variant) {
  if (uses_char()) {
    char_encoder = ContextEncoder(char_vocab_size, dims.char_embed, dims.char_hidden,
                                  dims.char_depth, rng);
  }
  if (uses_sub()) {
    sub_encoder = ContextEncoder(sub_vocab_size, dims.sub_embed, dims.sub_hidden,
                                 dims.sub_depth, rng);
  }
  if (uses_plm()) {
    if (plm == nullptr) throw ContractError("variant " + variant.name + " needs a language model");
    plm_no_bias = Tensor::xavier({plm->state_dim()}, rng);
    plm_no_bias.set_requires_grad(true);
  }

  auto source_dim = [&](ContextSource s) {
    switch (s) {
      case ContextSource::chars: return 2 * dims.char_hidden;
      case ContextSource::subwords: return 2 * dims.sub_hidden;
      case ContextSource::plm: return plm->state_dim();
      case ContextSource::prednet: return model_dim;
    }
    return 0;
  };

  eba = AttentionParams(model_dim, source_dim(variant.eba_key), source_dim(variant.eba_value),
                        dims.attn_dim, model_dim, dims.heads, rng, /*zero_value_proj=*/true);
  if (variant.pnba_enabled) {
    pnba = AttentionParams(source_dim(variant.pnba_query), source_dim(variant.pnba_key),
                           source_dim(variant.pnba_value), dims.attn_dim, model_dim, dims.heads,
                           rng, /*zero_value_proj=*/true);
  }
}

bool BiasingModel::uses_char() const {
  return variant_.eba_key == ContextSource::chars || variant_.eba_value == ContextSource::chars;
}

bool BiasingModel::uses_sub() const {
  if (variant_.eba_key == ContextSource::subwords || variant_.eba_value == ContextSource::subwords)
    return true;
  return variant_.pnba_enabled && (variant_.pnba_key == ContextSource::subwords ||
                                   variant_.pnba_value == ContextSource::subwords);
}

bool BiasingModel::uses_plm() const {
  return variant_.pnba_enabled && (variant_.pnba_query == ContextSource::plm ||
                                   variant_.pnba_key == ContextSource::plm);
}

void BiasingModel::register_params(ParamRegistry& reg, const std::string& prefix) {
  if (uses_char()) char_encoder.register_params(reg, prefix + ".char_encoder", ParamTag::adapter);
  if (uses_sub()) sub_encoder.register_params(reg, prefix + ".sub_encoder", ParamTag::adapter);
  if (uses_plm()) reg.add(prefix + ".plm_no_bias", plm_no_bias, ParamTag::adapter);
  eba.register_params(reg, prefix + ".eba", ParamTag::adapter);
  if (variant_.pnba_enabled) pnba.register_params(reg, prefix + ".pnba", ParamTag::adapter);
}

// --- BiasingRuntime ----------------------------------------------------------------

BiasingRuntime BiasingRuntime::prepare(Tape& tp, BiasingModel& model, PlmEncoder* plm,
                                       const BiasingList& list) {
  BiasingRuntime rt;
  rt.model = &model;
  rt.plm = plm;
  rt.list = &list;

  if (model.uses_char()) rt.char_rows = encode_context_char(tp, list, model.char_encoder);
  if (model.uses_sub()) rt.sub_rows = encode_context_subword(tp, list, model.sub_encoder);
  if (model.uses_plm()) {
    if (plm == nullptr) throw ContractError("variant needs a language model at runtime");
    rt.plm_rows = encode_context_plm(tp, list, *plm, model.plm_no_bias);
  }

  auto rows_for = [&rt](ContextSource s) -> Val {
    switch (s) {
      case ContextSource::chars: return rt.char_rows;
      case ContextSource::subwords: return rt.sub_rows;
      case ContextSource::plm: return rt.plm_rows;
      case ContextSource::prednet: break;
    }
    throw ContractError("prediction states cannot serve as context rows");
  };

  const VariantConfig& v = model.variant();
  rt.eba_ctx = {rows_for(v.eba_key), rows_for(v.eba_value), v.eba_key, v.eba_value};
  rt.eba_attn = attention_precompute(tp, rt.eba_ctx.keys, rt.eba_ctx.values, model.eba);
  if (v.pnba_enabled) {
    rt.pnba_ctx = {rows_for(v.pnba_key), rows_for(v.pnba_value), v.pnba_key, v.pnba_value};
    rt.pnba_attn = attention_precompute(tp, rt.pnba_ctx.keys, rt.pnba_ctx.values, model.pnba);
  }
  return rt;
}

AcousticBiasResult BiasingRuntime::apply_acoustic(Tape& tp, const EncoderStates& enc) {
  const Tensor& th = tp.value(enc.h);
  std::vector<Val> rows, score_rows;
  rows.reserve(static_cast<size_t>(th.rows()));
  for (int t = 0; t < th.rows(); ++t) {
    Val h_t = tp.row(enc.h, t);
    AttentionResult res = attention_query(tp, h_t, eba_attn, model->eba);
    rows.push_back(tp.add(h_t, res.context));
    score_rows.push_back(res.scores);
  }
  AcousticBiasResult out;
  out.states = {tp.stack_rows(rows), true};
  out.scores = tp.stack_rows(score_rows);
  return out;
}

SemanticBiasResult BiasingRuntime::apply_semantic(Tape& tp, const PredStates& pred,
                                                  const Val* plm_states) {
  const VariantConfig& v = model->variant();
  if (!v.pnba_enabled) throw ContractError("semantic adapter disabled for variant " + v.name);
  const Tensor& tg = tp.value(pred.g);
  if (v.pnba_query == ContextSource::plm) {
    if (plm_states == nullptr || !plm_states->valid()) {
      throw ContractError("semantic biasing with a language-model query needs prefix states");
    }
    if (tp.value(*plm_states).rows() != tg.rows()) {
      throw ContractError("language-model prefix states not row-aligned with prediction states");
    }
  }
  std::vector<Val> rows, score_rows;
  rows.reserve(static_cast<size_t>(tg.rows()));
  for (int u = 0; u < tg.rows(); ++u) {
    Val g_u = tp.row(pred.g, u);
    Val query = v.pnba_query == ContextSource::plm ? tp.row(*plm_states, u) : g_u;
    AttentionResult res = attention_query(tp, query, pnba_attn, model->pnba);
    rows.push_back(tp.add(g_u, res.context));
    score_rows.push_back(res.scores);
  }
  SemanticBiasResult out;
  out.states = {tp.stack_rows(rows), true};
  out.scores = tp.stack_rows(score_rows);
  return out;
}

Val BiasingRuntime::bias_pred_step(Tape& tp, const Val& g_u, const Val* plm_state,
                                   std::vector<double>* score_row) {
  const VariantConfig& v = model->variant();
  if (!v.pnba_enabled) {
    if (score_row) score_row->clear();
    return g_u;
  }
  Val query = g_u;
  if (v.pnba_query == ContextSource::plm) {
    if (plm_state == nullptr || !plm_state->valid()) {
      throw ContractError("semantic biasing with a language-model query needs the prefix state");
    }
    query = *plm_state;
  }
  AttentionResult res = attention_query(tp, query, pnba_attn, model->pnba);
  if (score_row) *score_row = tp.value(res.scores).data();
  return tp.add(g_u, res.context);
}

}  // namespace cbxt
