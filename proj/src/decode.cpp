#include <algorithm>
#include <optional>

#include "cbxt/biasing.hpp"
#include "cbxt/transducer.hpp"

namespace cbxt {

Hypothesis greedy_decode(Transducer& model, const AudioFeatures& features,
                         const BiasingSetup* biasing, int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) throw ContractError("max_symbols_per_frame must be >= 1");

  Tape tape(/*grad_enabled=*/false);
  EncoderStates enc = model.encode_audio(tape, features);

  std::optional<BiasingRuntime> rt;
  bool pnba = false, plm_query = false;
  if (biasing != nullptr && biasing->model != nullptr) {
    rt = BiasingRuntime::prepare(tape, *biasing->model, biasing->plm, *biasing->list);
    enc = rt->apply_acoustic(tape, enc).states;
    pnba = biasing->model->variant().pnba_enabled;
    plm_query = pnba && biasing->model->variant().pnba_query == ContextSource::plm;
  }

  Transducer::PredCursor cursor = model.pred_start(tape);
  std::optional<PlmEncoder::Cursor> plm_cur;
  if (plm_query) plm_cur = biasing->plm->start(tape);

  Hypothesis hyp;
  std::vector<double> score_row;
  auto contextualize = [&](const Val& g) {
    if (!rt) return g;
    Val out = rt->bias_pred_step(tape, g, plm_cur ? &plm_cur->state : nullptr, &score_row);
    if (pnba) hyp.attention_rows.push_back(score_row);
    return out;
  };

  Val g_ctx = contextualize(cursor.g);
  int blank = model.config().blank_id;
  int T = tape.value(enc.h).rows();
  for (int t = 0; t < T; ++t) {
    Val h_t = tape.row(enc.h, t);
    for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
      Val lp = model.joint_row(tape, h_t, g_ctx);
      const auto& probs = tape.value(lp).data();
      int best = static_cast<int>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
      if (best == blank) break;
      hyp.tokens.push_back(best);
      cursor = model.pred_advance(tape, cursor, best);
      if (plm_cur) plm_cur = biasing->plm->advance(tape, *plm_cur, best);
      g_ctx = contextualize(cursor.g);
    }
  }
  return hyp;
}

}  // namespace cbxt
