#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cbxt/biasing.hpp"
#include "cbxt/checkpoint.hpp"
#include "cbxt/config.hpp"
#include "cbxt/data.hpp"
#include "cbxt/metrics.hpp"
#include "cbxt/optim.hpp"
#include "cbxt/transducer.hpp"

namespace cbxt {

// A fully assembled model plus the tokenizers and feature synthesis that go
// with it. Parameter names are stable across runs: "transducer.*" (base),
// "plm.*", "biasing.*" (adapter).
struct ModelBundle {
  ExperimentConfig cfg;
  CharVocab char_vocab;
  SubwordVocab subword_vocab;
  SyntheticSpec synth;
  Transducer transducer;
  std::optional<PlmEncoder> plm;
  std::optional<BiasingModel> biasing;
  ParamRegistry registry;

  AudioFeatures features_for(const Utterance& utt) const;
  std::vector<int> target_ids(const std::string& transcript) const;
};

// Builds tokenizers from the saved vocab files and a freshly initialized
// model; `variant` empty means no biasing components.
std::unique_ptr<ModelBundle> build_model(const ExperimentConfig& cfg, bool with_plm,
                                         const std::string& variant);

// Loss of one utterance under an optional biasing list; all adapters of the
// bundle's variant are applied when `list` is present.
Val utterance_loss(Tape& tp, ModelBundle& bundle, const Utterance& utt,
                   const BiasingList* list);

struct SynthDataSummary {
  int train_utterances = 0;
  int test_utterances = 0;
  int zs_utterances = 0;
  int rare_words = 0;
  int zs_words = 0;
  int plm_lines = 0;
};
SynthDataSummary synth_data(const ExperimentConfig& cfg);

void tokenizer_train(const ExperimentConfig& cfg);

struct PlmTrainResult {
  std::vector<double> perplexity;  // index 0 = before training, then per epoch
};
PlmTrainResult train_plm(const ExperimentConfig& cfg);

struct TrainResult {
  std::vector<double> epoch_loss;
  long steps = 0;
};
TrainResult train_base(const ExperimentConfig& cfg);
// Trains only adapter-tagged parameters on the mixed corpus with the base
// transducer (and language model) frozen; verifies the freeze bitwise.
TrainResult train_adapters(const ExperimentConfig& cfg, const std::string& variant);

struct EvalOptions {
  std::vector<int> k_list;
  std::string testset = "test";  // test | zs | train
  bool exclude_correct = false;  // distractor-only lists
  std::string row_label;         // defaults to the checkpoint's variant
};

std::vector<ReportRow> evaluate(const ExperimentConfig& cfg, const std::string& ckpt_path,
                                const EvalOptions& opt);

// Named finite-difference checks over layers and the full losses; each entry
// is (description, max relative error).
std::vector<std::pair<std::string, double>> run_gradient_checks(std::uint64_t seed);

// Fills `werr` on every row against the row of `baseline_variant` at the
// same K (when present).
void fill_werr(std::vector<ReportRow>& rows, const std::string& baseline_variant);

}  // namespace cbxt
