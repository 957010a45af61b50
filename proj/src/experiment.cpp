#include "cbxt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace cbxt {

namespace fs = std::filesystem;

// --- bundle -----------------------------------------------------------------

AudioFeatures ModelBundle::features_for(const Utterance& utt) const {
  AudioFeatures raw = utterance_features(utt, synth, derive_seed(cfg.seed, "features"));
  return stack_and_downsample(raw, cfg.stack_left, cfg.downsample);
}

std::vector<int> ModelBundle::target_ids(const std::string& transcript) const {
  return subword_vocab.encode(transcript).ids;
}

std::unique_ptr<ModelBundle> build_model(const ExperimentConfig& cfg, bool with_plm,
                                         const std::string& variant) {
  auto bundle = std::make_unique<ModelBundle>();
  bundle->cfg = cfg;
  {
    std::ifstream cis(cfg.char_vocab_path());
    if (!cis) throw LoadError("missing char vocabulary (run tokenizer-train): " + cfg.char_vocab_path());
    bundle->char_vocab = CharVocab::load(cis);
    std::ifstream sis(cfg.subword_vocab_path());
    if (!sis) throw LoadError("missing subword vocabulary (run tokenizer-train): " + cfg.subword_vocab_path());
    bundle->subword_vocab = SubwordVocab::load(sis);
  }
  bundle->synth = SyntheticSpec::build(cfg.alphabet, cfg.feature_dim, cfg.frames_per_char,
                                       cfg.noise_std, derive_seed(cfg.seed, "synth-spec"));

  TransducerConfig tcfg;
  tcfg.feature_dim = cfg.feature_dim * (cfg.stack_left + 1);
  tcfg.encoder_layers = cfg.encoder_layers;
  tcfg.encoder_hidden = cfg.encoder_hidden;
  tcfg.model_dim = cfg.model_dim;
  tcfg.embed_dim = cfg.embed_dim;
  tcfg.pred_hidden = cfg.pred_hidden;
  tcfg.joint_hidden = cfg.joint_hidden;
  tcfg.vocab_size = bundle->subword_vocab.size();
  tcfg.blank_id = bundle->subword_vocab.blank_id();
  tcfg.bos_id = bundle->subword_vocab.bos_id();

  std::mt19937 rng_t = seeded_rng(cfg.seed, "init-transducer");
  bundle->transducer = Transducer(tcfg, rng_t);
  bundle->transducer.register_params(bundle->registry, "transducer", ParamTag::base);

  if (with_plm) {
    PlmConfig pcfg;
    pcfg.vocab_size = bundle->subword_vocab.size();
    pcfg.embed_dim = cfg.plm_embed;
    pcfg.hidden = cfg.plm_hidden;
    pcfg.layers = cfg.plm_layers;
    pcfg.bos_id = bundle->subword_vocab.bos_id();
    std::mt19937 rng_p = seeded_rng(cfg.seed, "init-plm");
    bundle->plm = PlmEncoder(pcfg, rng_p);
    bundle->plm->register_params(bundle->registry, "plm", ParamTag::plm);
  }

  if (!variant.empty()) {
    VariantConfig vc = VariantConfig::named(variant);
    std::mt19937 rng_b = seeded_rng(cfg.seed, "init-biasing");
    bundle->biasing = BiasingModel(vc, cfg.biasing_dims(), bundle->char_vocab.size(),
                                   bundle->subword_vocab.size(), cfg.model_dim,
                                   bundle->plm ? &*bundle->plm : nullptr, rng_b);
    bundle->biasing->register_params(bundle->registry, "biasing");
  }
  return bundle;
}

Val utterance_loss(Tape& tp, ModelBundle& bundle, const Utterance& utt,
                   const BiasingList* list) {
  AudioFeatures f = bundle.features_for(utt);
  EncoderStates enc = bundle.transducer.encode_audio(tp, f);
  std::vector<int> targets = bundle.target_ids(utt.transcript);

  std::optional<BiasingRuntime> rt;
  if (list != nullptr && bundle.biasing) {
    rt = BiasingRuntime::prepare(tp, *bundle.biasing, bundle.plm ? &*bundle.plm : nullptr, *list);
    enc = rt->apply_acoustic(tp, enc).states;
  }
  PredStates pred = bundle.transducer.predict(tp, targets);
  if (rt && bundle.biasing->variant().pnba_enabled) {
    Val plm_states;
    const Val* plm_ptr = nullptr;
    if (bundle.biasing->variant().pnba_query == ContextSource::plm) {
      plm_states = bundle.plm->prefix_states(tp, targets);
      plm_ptr = &plm_states;
    }
    pred = rt->apply_semantic(tp, pred, plm_ptr).states;
  }
  JointLattice lat = bundle.transducer.joint(tp, enc, pred);
  return rnnt_loss(tp, lat, targets, bundle.transducer.config().blank_id);
}

// --- data + tokenizers ------------------------------------------------------

SynthDataSummary synth_data(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.data_dir);

  CorpusGenConfig gen;
  gen.vocab_words = cfg.vocab_words;
  gen.min_word_len = cfg.min_word_len;
  gen.max_word_len = cfg.max_word_len;
  gen.utterances = cfg.utterances;
  gen.min_words = cfg.min_words;
  gen.max_words = cfg.max_words;
  gen.zipf_exponent = cfg.zipf_exponent;

  std::mt19937 vocab_rng = seeded_rng(cfg.seed, "vocab");
  std::vector<std::string> vocab = generate_vocabulary(gen, vocab_rng);
  {
    // Zipf weights follow a seeded permutation, not the sorted order.
    std::mt19937 perm_rng = seeded_rng(cfg.seed, "vocab-perm");
    std::shuffle(vocab.begin(), vocab.end(), perm_rng);
  }

  std::mt19937 corpus_rng = seeded_rng(cfg.seed, "corpus");
  Corpus pool = generate_corpus(gen, vocab, "u", corpus_rng);

  std::vector<std::string> pool_text = pool.transcripts();
  RareWordList rare = build_rare_word_list(pool_text, cfg.rare_top_n);
  ZeroShotSplit split = make_zero_shot_split(pool, rare, cfg.zs_fraction,
                                             derive_seed(cfg.seed, "zs-split"));

  // General testset sampled from the remaining pool.
  Corpus train, test;
  {
    std::vector<size_t> idx(split.train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937 test_rng = seeded_rng(cfg.seed, "test-split");
    std::shuffle(idx.begin(), idx.end(), test_rng);
    size_t n_test = static_cast<size_t>(cfg.test_fraction * static_cast<double>(idx.size()));
    std::set<size_t> test_idx(idx.begin(), idx.begin() + static_cast<long>(n_test));
    for (size_t i = 0; i < split.train.size(); ++i) {
      (test_idx.count(i) ? test : train).utterances.push_back(split.train.utterances[i]);
    }
  }

  CorpusGenConfig plm_gen = gen;
  plm_gen.utterances = cfg.plm_corpus_factor * cfg.utterances;
  std::mt19937 plm_rng = seeded_rng(cfg.seed, "plm-corpus");
  Corpus plm_corpus = generate_corpus(plm_gen, vocab, "p", plm_rng);
  {
    std::ofstream os(cfg.plm_txt());
    if (!os) throw LoadError("cannot write " + cfg.plm_txt());
    for (const auto& u : plm_corpus.utterances) os << u.transcript << '\n';
  }

  save_corpus(train, cfg.train_tsv());
  save_corpus(test, cfg.test_tsv());
  save_corpus(split.zs_test, cfg.zs_tsv());
  save_word_list(rare.words, cfg.rare_words_path());
  save_word_list(split.zs_words, cfg.zs_words_path());

  SynthDataSummary s;
  s.train_utterances = static_cast<int>(train.size());
  s.test_utterances = static_cast<int>(test.size());
  s.zs_utterances = static_cast<int>(split.zs_test.size());
  s.rare_words = static_cast<int>(rare.words.size());
  s.zs_words = static_cast<int>(split.zs_words.size());
  s.plm_lines = static_cast<int>(plm_corpus.size());
  return s;
}

void tokenizer_train(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  Corpus train = load_corpus(cfg.train_tsv());
  std::vector<std::string> text = train.transcripts();

  CharVocab cv = CharVocab::build(cfg.alphabet);
  SubwordVocab sv = SubwordVocab::train(text, cfg.subword_vocab);

  std::ofstream cos(cfg.char_vocab_path());
  if (!cos) throw LoadError("cannot write " + cfg.char_vocab_path());
  cv.save(cos);
  std::ofstream sos(cfg.subword_vocab_path());
  if (!sos) throw LoadError("cannot write " + cfg.subword_vocab_path());
  sv.save(sos);
}

// --- parallel batches -------------------------------------------------------

namespace {

void run_parallel(size_t n, int threads, const std::function<void(size_t)>& fn) {
  int use = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (use == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(use));
  for (int t = 0; t < use; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

struct UttTask {
  const Utterance* utt = nullptr;
  std::optional<BiasingList> list;
};

// Forward+backward every task on its own tape, then fold the per-utterance
// gradients into the parameters in task order (deterministic regardless of
// thread count), scaled by 1/batch.
double process_batch(ModelBundle& bundle, std::vector<UttTask>& tasks, int threads,
                     long step_index) {
  size_t n = tasks.size();
  std::vector<std::unique_ptr<Tape>> tapes(n);
  std::vector<double> losses(n, 0.0);
  std::vector<std::string> errors(n);

  run_parallel(n, threads, [&](size_t i) {
    try {
      tapes[i] = std::make_unique<Tape>(true);
      Val loss = utterance_loss(*tapes[i], bundle, *tasks[i].utt,
                                tasks[i].list ? &*tasks[i].list : nullptr);
      losses[i] = loss.scalar();
      tapes[i]->backward(loss, /*accumulate=*/false);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  double scale = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw TrainingError(errors[i]);
    if (!std::isfinite(losses[i])) {
      throw TrainingError("non-finite loss at step " + std::to_string(step_index) +
                          " (utterance " + tasks[i].utt->id + ")");
    }
    sum += losses[i];
    for (auto& [tensor, grad] : tapes[i]->param_grads()) {
      auto& dst = tensor->grad();
      for (size_t j = 0; j < grad.size(); ++j) dst[j] += grad[j] * scale;
    }
    tapes[i].reset();
  }
  return sum * scale;
}

bool has_rare_word(const Utterance& utt, const std::set<std::string>& rare) {
  for (const auto& w : split_words(utt.transcript)) {
    if (rare.count(w)) return true;
  }
  return false;
}

// All rare-word utterances plus an equal-sized seeded sample of general ones.
std::vector<const Utterance*> mixed_epoch(const Corpus& corpus, const std::set<std::string>& rare,
                                          std::mt19937& rng) {
  std::vector<const Utterance*> with_rare, general;
  for (const auto& u : corpus.utterances) {
    (has_rare_word(u, rare) ? with_rare : general).push_back(&u);
  }
  std::shuffle(general.begin(), general.end(), rng);
  size_t keep = std::min(general.size(), with_rare.size());
  general.resize(keep);
  std::vector<const Utterance*> out = with_rare;
  out.insert(out.end(), general.begin(), general.end());
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

// --- language-model pretraining ----------------------------------------------

PlmTrainResult train_plm(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ifstream sis(cfg.subword_vocab_path());
  if (!sis) throw LoadError("missing subword vocabulary: " + cfg.subword_vocab_path());
  SubwordVocab sv = SubwordVocab::load(sis);

  std::ifstream is(cfg.plm_txt());
  if (!is) throw LoadError("cannot read " + cfg.plm_txt());
  std::vector<std::vector<int>> lines;
  std::string line;
  while (std::getline(is, line)) {
    TokenSequence seq = sv.encode(line);
    if (!seq.empty()) lines.push_back(seq.ids);
  }
  if (lines.empty()) throw DomainError("language-model corpus is empty");

  std::mt19937 split_rng = seeded_rng(cfg.seed, "plm-split");
  std::shuffle(lines.begin(), lines.end(), split_rng);
  size_t n_held = std::max<size_t>(1, static_cast<size_t>(cfg.plm_holdout *
                                                          static_cast<double>(lines.size())));
  std::vector<std::vector<int>> held(lines.begin(), lines.begin() + static_cast<long>(n_held));
  std::vector<std::vector<int>> train(lines.begin() + static_cast<long>(n_held), lines.end());
  if (train.empty()) throw DomainError("language-model holdout leaves no training lines");

  PlmConfig pcfg;
  pcfg.vocab_size = sv.size();
  pcfg.embed_dim = cfg.plm_embed;
  pcfg.hidden = cfg.plm_hidden;
  pcfg.layers = cfg.plm_layers;
  pcfg.bos_id = sv.bos_id();
  std::mt19937 init_rng = seeded_rng(cfg.seed, "init-plm");
  PlmEncoder plm(pcfg, init_rng);
  ParamRegistry reg;
  plm.register_params(reg, "plm", ParamTag::plm);

  auto line_nll = [&](Tape& tp, const std::vector<int>& toks) {
    PlmEncoder::Cursor cur = plm.start(tp);
    Val nll;
    for (int tok : toks) {
      Val lp = plm.next_token_log_probs(tp, cur.state);
      Val term = tp.scale(tp.pick(lp, tok), -1.0);
      nll = nll.valid() ? tp.add(nll, term) : term;
      cur = plm.advance(tp, cur, tok);
    }
    return nll;
  };

  auto heldout_ppl = [&]() {
    std::vector<double> nll(held.size(), 0.0);
    std::vector<long> count(held.size(), 0);
    run_parallel(held.size(), cfg.threads, [&](size_t i) {
      Tape tp(false);
      nll[i] = line_nll(tp, held[i]).scalar();
      count[i] = static_cast<long>(held[i].size());
    });
    double total = 0.0;
    long tokens = 0;
    for (size_t i = 0; i < held.size(); ++i) {
      total += nll[i];
      tokens += count[i];
    }
    return std::exp(total / static_cast<double>(tokens));
  };

  PlmTrainResult result;
  result.perplexity.push_back(heldout_ppl());

  AdamOptimizer opt(reg.tensors(), cfg.plm_lr);
  long step = 0;
  for (int epoch = 0; epoch < cfg.plm_epochs; ++epoch) {
    std::mt19937 epoch_rng = seeded_rng(cfg.seed, "plm-epoch-" + std::to_string(epoch));
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), epoch_rng);

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.plm_batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.plm_batch));
      size_t n = end - start;
      std::vector<std::unique_ptr<Tape>> tapes(n);
      std::vector<double> losses(n, 0.0);
      std::vector<long> counts(n, 0);
      std::vector<std::string> errors(n);
      run_parallel(n, cfg.threads, [&](size_t i) {
        try {
          const auto& toks = train[order[start + i]];
          tapes[i] = std::make_unique<Tape>(true);
          Val nll = line_nll(*tapes[i], toks);
          losses[i] = nll.scalar();
          counts[i] = static_cast<long>(toks.size());
          tapes[i]->backward(nll, false);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
      long total_tokens = 0;
      for (size_t i = 0; i < n; ++i) total_tokens += counts[i];
      double scale = 1.0 / static_cast<double>(std::max<long>(1, total_tokens));
      reg.zero_grad();
      for (size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) throw TrainingError(errors[i]);
        if (!std::isfinite(losses[i])) {
          throw TrainingError("non-finite language-model loss at step " + std::to_string(step));
        }
        for (auto& [tensor, grad] : tapes[i]->param_grads()) {
          auto& dst = tensor->grad();
          for (size_t j = 0; j < grad.size(); ++j) dst[j] += grad[j] * scale;
        }
        tapes[i].reset();
      }
      opt.step();
      ++step;
    }
    result.perplexity.push_back(heldout_ppl());
  }

  if (!(result.perplexity.back() < result.perplexity.front())) {
    throw TrainingError("language-model perplexity did not improve: " +
                        std::to_string(result.perplexity.front()) + " -> " +
                        std::to_string(result.perplexity.back()));
  }

  Checkpoint ckpt = Checkpoint::from_registry(reg, cfg.to_ini());
  save_checkpoint(ckpt, cfg.plm_ckpt());
  {
    std::ofstream os(cfg.out_dir + "/plm_ppl.tsv");
    os << "epoch\tperplexity\n";
    for (size_t i = 0; i < result.perplexity.size(); ++i) {
      os << i << '\t' << result.perplexity[i] << '\n';
    }
  }
  return result;
}

// --- transducer training ------------------------------------------------------

TrainResult train_base(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  Corpus train = load_corpus(cfg.train_tsv());
  if (train.utterances.empty()) throw DomainError("training corpus is empty");
  auto bundle = build_model(cfg, /*with_plm=*/false, /*variant=*/"");
  bundle->registry.set_requires_grad_all(true);

  AdamOptimizer opt(bundle->registry.tensors(), cfg.lr);
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937 epoch_rng = seeded_rng(cfg.seed, "base-epoch-" + std::to_string(epoch));
    std::vector<const Utterance*> order;
    order.reserve(train.size());
    for (const auto& u : train.utterances) order.push_back(&u);
    std::shuffle(order.begin(), order.end(), epoch_rng);

    double epoch_sum = 0.0;
    long epoch_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<UttTask> tasks;
      for (size_t i = start; i < end; ++i) tasks.push_back({order[i], std::nullopt});
      bundle->registry.zero_grad();
      epoch_sum += process_batch(*bundle, tasks, cfg.threads, step);
      opt.step();
      ++step;
      ++epoch_batches;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
    std::cerr << "base epoch " << epoch << " loss " << result.epoch_loss.back() << "\n";
  }
  result.steps = step;

  Checkpoint ckpt = Checkpoint::from_registry(bundle->registry, cfg.to_ini());
  save_checkpoint(ckpt, cfg.base_ckpt());
  {
    std::ofstream os(cfg.out_dir + "/base_loss.tsv");
    os << "epoch\tloss\n";
    for (size_t i = 0; i < result.epoch_loss.size(); ++i) {
      os << i << '\t' << result.epoch_loss[i] << '\n';
    }
  }
  return result;
}

TrainResult train_adapters(const ExperimentConfig& cfg, const std::string& variant) {
  fs::create_directories(cfg.out_dir);
  VariantConfig vc = VariantConfig::named(variant);
  bool needs_plm = vc.pnba_enabled && (vc.pnba_query == ContextSource::plm ||
                                       vc.pnba_key == ContextSource::plm);

  Corpus train = load_corpus(cfg.train_tsv());
  std::vector<std::string> rare_words = load_word_list(cfg.rare_words_path());
  std::set<std::string> rare_set(rare_words.begin(), rare_words.end());

  auto bundle = build_model(cfg, needs_plm, variant);
  load_checkpoint(cfg.base_ckpt()).apply_to(bundle->registry);
  if (needs_plm) load_checkpoint(cfg.plm_ckpt()).apply_to(bundle->registry);

  std::vector<double> base_before = bundle->registry.snapshot(ParamTag::base);
  std::vector<double> plm_before = bundle->registry.snapshot(ParamTag::plm);

  bundle->registry.set_requires_grad(ParamTag::base, false);
  bundle->registry.set_requires_grad(ParamTag::plm, false);
  bundle->registry.set_requires_grad(ParamTag::adapter, true);

  AdamOptimizer opt(bundle->registry.tensors(ParamTag::adapter), cfg.adapter_lr);
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.adapter_epochs; ++epoch) {
    std::mt19937 epoch_rng = seeded_rng(cfg.seed, variant + "-adapter-epoch-" + std::to_string(epoch));
    std::vector<const Utterance*> order = mixed_epoch(train, rare_set, epoch_rng);

    double epoch_sum = 0.0;
    long epoch_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<UttTask> tasks;
      for (size_t i = start; i < end; ++i) {
        const Utterance* u = order[i];
        std::mt19937 list_rng = seeded_rng(
            cfg.seed, variant + "-list-" + std::to_string(epoch) + "-" + u->id);
        tasks.push_back({u, build_biasing_list(u->transcript, rare_words, cfg.train_k, list_rng,
                                               ListMode::train, bundle->char_vocab,
                                               bundle->subword_vocab)});
      }
      bundle->registry.zero_grad();
      epoch_sum += process_batch(*bundle, tasks, cfg.threads, step);
      opt.step();
      ++step;
      ++epoch_batches;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
    std::cerr << variant << " adapter epoch " << epoch << " loss " << result.epoch_loss.back()
              << "\n";
  }
  result.steps = step;

  if (bundle->registry.snapshot(ParamTag::base) != base_before ||
      bundle->registry.snapshot(ParamTag::plm) != plm_before) {
    throw TrainingError("frozen parameters changed during adapter training");
  }

  ExperimentConfig effective = cfg;
  effective.variant = variant;
  Checkpoint ckpt = Checkpoint::from_registry(bundle->registry, effective.to_ini());
  save_checkpoint(ckpt, cfg.variant_ckpt(variant));
  return result;
}

// --- evaluation -----------------------------------------------------------------

namespace {

struct DecodedUtterance {
  std::vector<std::string> ref_words;
  std::vector<std::string> hyp_words;
  std::optional<AttentionRecord> attention;
  std::string error;
};

}  // namespace

std::vector<ReportRow> evaluate(const ExperimentConfig& cli_cfg, const std::string& ckpt_path,
                                const EvalOptions& opt) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  ExperimentConfig cfg = ExperimentConfig::from_ini_text(ckpt.config_text);
  cfg.data_dir = cli_cfg.data_dir;
  cfg.out_dir = cli_cfg.out_dir;
  cfg.threads = cli_cfg.threads;

  bool has_biasing = false, has_plm = false;
  for (const auto& p : ckpt.params) {
    if (p.name.rfind("biasing.", 0) == 0) has_biasing = true;
    if (p.name.rfind("plm.", 0) == 0) has_plm = true;
  }
  auto bundle = build_model(cfg, has_plm, has_biasing ? cfg.variant : "");
  ckpt.apply_to(bundle->registry);

  std::string corpus_path = opt.testset == "zs"      ? cfg.zs_tsv()
                            : opt.testset == "train" ? cfg.train_tsv()
                                                     : cfg.test_tsv();
  Corpus testset = load_corpus(corpus_path);
  if (testset.utterances.empty()) throw DomainError("empty testset: " + corpus_path);

  std::vector<std::string> rare_words = load_word_list(cfg.rare_words_path());
  std::vector<std::string> zs_words = load_word_list(cfg.zs_words_path());
  std::set<std::string> rare_set(rare_words.begin(), rare_words.end());
  std::set<std::string> zs_set(zs_words.begin(), zs_words.end());
  auto classify = [&](const std::string& w) {
    if (zs_set.count(w)) return WordClass::zero_shot_rare;
    if (rare_set.count(w)) return WordClass::rare;
    return WordClass::non_rare;
  };

  std::string label = !opt.row_label.empty() ? opt.row_label
                      : has_biasing          ? cfg.variant
                                             : "base";

  std::vector<ReportRow> rows;
  for (int k : opt.k_list) {
    std::vector<DecodedUtterance> slots(testset.size());
    run_parallel(testset.size(), cfg.threads, [&](size_t i) {
      try {
        const Utterance& utt = testset.utterances[i];
        DecodedUtterance& out = slots[i];
        out.ref_words = split_words(utt.transcript);

        std::optional<BiasingList> list;
        BiasingSetup setup;
        if (has_biasing) {
          std::mt19937 list_rng =
              seeded_rng(cfg.seed, "eval-" + std::to_string(k) + "-" + utt.id);
          if (opt.exclude_correct) {
            std::set<std::string> transcript_words;
            for (const auto& w : out.ref_words) transcript_words.insert(w);
            std::vector<std::string> pool;
            for (const auto& w : rare_words) {
              if (!transcript_words.count(w)) pool.push_back(w);
            }
            list = build_biasing_list(utt.transcript, pool, k, list_rng, ListMode::eval,
                                      bundle->char_vocab, bundle->subword_vocab);
          } else {
            list = build_biasing_list(utt.transcript, rare_words, k, list_rng, ListMode::eval,
                                      bundle->char_vocab, bundle->subword_vocab);
          }
          setup.model = &*bundle->biasing;
          setup.plm = bundle->plm ? &*bundle->plm : nullptr;
          setup.list = &*list;
        }
        AudioFeatures f = bundle->features_for(utt);
        Hypothesis hyp = greedy_decode(bundle->transducer, f, has_biasing ? &setup : nullptr,
                                       cfg.max_symbols_per_frame);
        TokenSequence seq;
        seq.ids = hyp.tokens;
        out.hyp_words = split_words(bundle->subword_vocab.decode(seq));
        if (has_biasing && bundle->biasing->variant().pnba_enabled && list->has_correct() &&
            !hyp.attention_rows.empty()) {
          AttentionRecord rec;
          rec.rows = hyp.attention_rows;
          rec.correct_index = list->correct_index();
          out.attention = std::move(rec);
        }
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    });

    MetricsReport report;
    std::vector<AttentionRecord> records;
    for (auto& slot : slots) {
      if (!slot.error.empty()) throw TrainingError("evaluation failed: " + slot.error);
      WordAlignment alignment = align(slot.ref_words, slot.hyp_words);
      accumulate_alignment(report, alignment, slot.ref_words, classify);
      if (slot.attention) records.push_back(std::move(*slot.attention));
    }
    if (!records.empty()) {
      AttentionMetrics am = attention_metrics(records);
      report.aa = am.aa;
      report.aas = am.aas;
    }
    rows.push_back({label, k, std::move(report)});
  }
  return rows;
}

void fill_werr(std::vector<ReportRow>& rows, const std::string& baseline_variant) {
  for (auto& row : rows) {
    if (row.variant == baseline_variant) continue;
    for (const auto& base : rows) {
      if (base.variant == baseline_variant && base.k == row.k && base.metrics.total.ref_words) {
        double b = base.metrics.wer();
        if (b > 0.0 && row.metrics.total.ref_words) {
          row.metrics.werr = werr(b, row.metrics.wer());
          row.metrics.werr_baseline = baseline_variant;
        }
      }
    }
  }
}

// --- gradient checks ----------------------------------------------------------

std::vector<std::pair<std::string, double>> run_gradient_checks(std::uint64_t seed) {
  std::vector<std::pair<std::string, double>> results;
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random_tensor = [&](std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = unit(rng);
    t.set_requires_grad(true);
    return t;
  };

  {  // embedding: gradient scatters into looked-up rows
    EmbeddingLayer emb(5, 3, rng);
    std::vector<int> ids = {1, 3, 1};
    auto f = [&](bool grad) {
      Tape tp(grad);
      Val out = emb.embed(tp, ids);
      Val loss = tp.sum(tp.mul(out, out));
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    Tensor* params[] = {&emb.table};
    results.emplace_back("embedding", finite_diff_check(f, params, 1e-5, 15));
  }
  {  // lstm over a short sequence
    LstmLayer lstm(3, 4, rng);
    Tensor seq = random_tensor({5, 3});
    seq.set_requires_grad(false);
    auto f = [&](bool grad) {
      Tape tp(grad);
      Val out = lstm.forward(tp, tp.constant(seq));
      Val loss = tp.sum(tp.mul(out, out));
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    Tensor* params[] = {&lstm.w_x, &lstm.w_h, &lstm.bias};
    results.emplace_back("lstm", finite_diff_check(f, params, 1e-5, 8));
  }
  {  // stacked bilstm final state
    BiLstmEncoder enc(3, 3, 2, rng);
    Tensor seq = random_tensor({4, 3});
    auto f = [&](bool grad) {
      Tape tp(grad);
      Val out = enc.final_state(tp, tp.constant(seq));
      Val loss = tp.sum(tp.mul(out, out));
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    ParamRegistry reg;
    enc.register_params(reg, "bilstm", ParamTag::base);
    auto params = reg.tensors();
    results.emplace_back("bilstm", finite_diff_check(f, params, 1e-5, 6));
  }
  {  // multi-head attention, context and scores both on the loss path
    AttentionParams attn(4, 3, 3, 4, 4, 2, rng);
    Tensor query = random_tensor({4});
    Tensor keys = random_tensor({3, 3});
    Tensor values = random_tensor({3, 3});
    Tensor probe = random_tensor({3});
    probe.set_requires_grad(false);
    auto f = [&](bool grad) {
      Tape tp(grad);
      AttentionResult res = scaled_dot_attention(tp, tp.param(query), tp.param(keys),
                                                 tp.param(values), attn);
      Val loss = tp.add(tp.sum(tp.mul(res.context, res.context)),
                        tp.dot(res.scores, tp.constant(probe)));
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    Tensor* params[] = {&attn.w_q, &attn.w_k, &attn.w_v, &query, &keys, &values};
    results.emplace_back("attention", finite_diff_check(f, params, 1e-5, 8));
  }
  {  // feed-forward stack
    FeedForward ffn({3, 5, 2}, rng);
    Tensor x = random_tensor({3});
    auto f = [&](bool grad) {
      Tape tp(grad);
      Val out = ffn.apply(tp, tp.param(x));
      Val loss = tp.sum(tp.mul(out, out));
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    Tensor* params[] = {&ffn.weights[0], &ffn.biases[0], &ffn.weights[1], &ffn.biases[1], &x};
    results.emplace_back("feed_forward", finite_diff_check(f, params, 1e-5, 8));
  }

  // Full unbiased transducer loss on a 3-frame, 2-label instance.
  {
    TransducerConfig tcfg;
    tcfg.feature_dim = 4;
    tcfg.encoder_layers = 1;
    tcfg.encoder_hidden = 5;
    tcfg.model_dim = 5;
    tcfg.embed_dim = 3;
    tcfg.pred_hidden = 4;
    tcfg.joint_hidden = 5;
    tcfg.vocab_size = 6;
    Transducer model(tcfg, rng);
    AudioFeatures feat;
    feat.frames = random_tensor({3, 4});
    std::vector<int> target = {2, 4};
    auto f = [&](bool grad) {
      Tape tp(grad);
      EncoderStates enc = model.encode_audio(tp, feat);
      PredStates pred = model.predict(tp, target);
      JointLattice lat = model.joint(tp, enc, pred);
      Val loss = rnnt_loss(tp, lat, target, tcfg.blank_id);
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    ParamRegistry reg;
    model.register_params(reg, "transducer", ParamTag::base);
    auto params = reg.tensors();
    results.emplace_back("transducer_loss", finite_diff_check(f, params, 1e-3, 4));
  }

  // Full biased loss with char keys and language-model query/keys.
  {
    TransducerConfig tcfg;
    tcfg.feature_dim = 4;
    tcfg.encoder_layers = 1;
    tcfg.encoder_hidden = 4;
    tcfg.model_dim = 4;
    tcfg.embed_dim = 3;
    tcfg.pred_hidden = 4;
    tcfg.joint_hidden = 4;
    tcfg.vocab_size = 6;
    Transducer model(tcfg, rng);

    PlmConfig pcfg;
    pcfg.vocab_size = 6;
    pcfg.embed_dim = 3;
    pcfg.hidden = 4;
    pcfg.layers = 1;
    PlmEncoder plm(pcfg, rng);

    BiasingDims dims;
    dims.char_embed = 3;
    dims.char_hidden = 3;
    dims.sub_embed = 3;
    dims.sub_hidden = 3;
    dims.attn_dim = 4;
    dims.heads = 2;
    BiasingModel biasing(VariantConfig::named("char-plm"), dims, /*char_vocab=*/8,
                         /*sub_vocab=*/6, tcfg.model_dim, &plm, rng);
    // Start the value projections away from zero so the adapters are live.
    biasing.eba.w_v = random_tensor(biasing.eba.w_v.shape());
    biasing.pnba.w_v = random_tensor(biasing.pnba.w_v.shape());

    BiasingList list;
    BiasEntry nb;
    nb.text = SubwordVocab::kNoBias;
    nb.is_no_bias = true;
    list.entries.push_back(nb);
    BiasEntry e1;
    e1.text = "ab";
    e1.char_ids = {{1, 2}, TokenLevel::character};
    e1.subword_ids = {{3}, TokenLevel::subword};
    list.entries.push_back(e1);
    BiasEntry e2;
    e2.text = "ba";
    e2.char_ids = {{2, 1}, TokenLevel::character};
    e2.subword_ids = {{4, 5}, TokenLevel::subword};
    list.entries.push_back(e2);
    list.correct_indices = {1};

    AudioFeatures feat;
    feat.frames = random_tensor({3, 4});
    std::vector<int> target = {3, 5};

    auto f = [&](bool grad) {
      Tape tp(grad);
      BiasingRuntime rt = BiasingRuntime::prepare(tp, biasing, &plm, list);
      EncoderStates enc = model.encode_audio(tp, feat);
      enc = rt.apply_acoustic(tp, enc).states;
      PredStates pred = model.predict(tp, target);
      Val plm_states = plm.prefix_states(tp, target);
      pred = rt.apply_semantic(tp, pred, &plm_states).states;
      JointLattice lat = model.joint(tp, enc, pred);
      Val loss = rnnt_loss(tp, lat, target, tcfg.blank_id);
      if (grad) tp.backward(loss);
      return loss.scalar();
    };
    ParamRegistry reg;
    model.register_params(reg, "transducer", ParamTag::base);
    plm.register_params(reg, "plm", ParamTag::plm);
    biasing.register_params(reg, "biasing");
    reg.set_requires_grad_all(true);
    auto params = reg.tensors();
    results.emplace_back("biased_loss", finite_diff_check(f, params, 1e-3, 3));
  }

  return results;
}

}  // namespace cbxt
