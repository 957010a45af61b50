#include "cbxt/config.hpp"

#include <fstream>
#include <sstream>

#include "cbxt/data.hpp"

namespace cbxt {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::string int_list_to_string(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_ini(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot read config file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return from_ini_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_ini_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw LoadError("malformed section at line " + std::to_string(line_no));
      section = line.substr(1, line.size() - 2);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw LoadError("expected key = value at line " + std::to_string(line_no) + ": " + line);
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;

    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };

    if (full == "experiment.seed") cfg.seed = std::stoull(value);
    else if (full == "experiment.data_dir") cfg.data_dir = value;
    else if (full == "experiment.out_dir") cfg.out_dir = value;
    else if (full == "experiment.threads") cfg.threads = as_int();
    else if (full == "data.vocab_words") cfg.vocab_words = as_int();
    else if (full == "data.utterances") cfg.utterances = as_int();
    else if (full == "data.min_words") cfg.min_words = as_int();
    else if (full == "data.max_words") cfg.max_words = as_int();
    else if (full == "data.min_word_len") cfg.min_word_len = as_int();
    else if (full == "data.max_word_len") cfg.max_word_len = as_int();
    else if (full == "data.zipf_exponent") cfg.zipf_exponent = as_double();
    else if (full == "data.feature_dim") cfg.feature_dim = as_int();
    else if (full == "data.frames_per_char") cfg.frames_per_char = as_int();
    else if (full == "data.noise_std") cfg.noise_std = as_double();
    else if (full == "data.stack_left") cfg.stack_left = as_int();
    else if (full == "data.downsample") cfg.downsample = as_int();
    else if (full == "data.rare_top_n") cfg.rare_top_n = as_int();
    else if (full == "data.zs_fraction") cfg.zs_fraction = as_double();
    else if (full == "data.test_fraction") cfg.test_fraction = as_double();
    else if (full == "data.plm_corpus_factor") cfg.plm_corpus_factor = as_int();
    else if (full == "tokenizer.alphabet") cfg.alphabet = value;
    else if (full == "tokenizer.subword_vocab") cfg.subword_vocab = as_int();
    else if (full == "model.encoder_layers") cfg.encoder_layers = as_int();
    else if (full == "model.encoder_hidden") cfg.encoder_hidden = as_int();
    else if (full == "model.model_dim") cfg.model_dim = as_int();
    else if (full == "model.embed_dim") cfg.embed_dim = as_int();
    else if (full == "model.pred_hidden") cfg.pred_hidden = as_int();
    else if (full == "model.joint_hidden") cfg.joint_hidden = as_int();
    else if (full == "plm.embed_dim") cfg.plm_embed = as_int();
    else if (full == "plm.hidden") cfg.plm_hidden = as_int();
    else if (full == "plm.layers") cfg.plm_layers = as_int();
    else if (full == "plm.epochs") cfg.plm_epochs = as_int();
    else if (full == "plm.lr") cfg.plm_lr = as_double();
    else if (full == "plm.holdout") cfg.plm_holdout = as_double();
    else if (full == "plm.batch") cfg.plm_batch = as_int();
    else if (full == "biasing.char_embed") cfg.char_embed = as_int();
    else if (full == "biasing.char_hidden") cfg.char_hidden = as_int();
    else if (full == "biasing.char_depth") cfg.char_depth = as_int();
    else if (full == "biasing.sub_embed") cfg.sub_embed = as_int();
    else if (full == "biasing.sub_hidden") cfg.sub_hidden = as_int();
    else if (full == "biasing.sub_depth") cfg.sub_depth = as_int();
    else if (full == "biasing.attn_dim") cfg.attn_dim = as_int();
    else if (full == "biasing.heads") cfg.heads = as_int();
    else if (full == "biasing.train_k") cfg.train_k = as_int();
    else if (full == "biasing.eval_k") cfg.eval_k = parse_int_list(value);
    else if (full == "biasing.variant") cfg.variant = value;
    else if (full == "training.lr") cfg.lr = as_double();
    else if (full == "training.epochs") cfg.epochs = as_int();
    else if (full == "training.batch") cfg.batch = as_int();
    else if (full == "training.adapter_lr") cfg.adapter_lr = as_double();
    else if (full == "training.adapter_epochs") cfg.adapter_epochs = as_int();
    else if (full == "training.max_symbols_per_frame") cfg.max_symbols_per_frame = as_int();
    else throw LoadError("unknown config key: " + full);
  }
  if (cfg.eval_k.empty()) throw LoadError("eval_k list must not be empty");
  return cfg;
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "seed = " << seed << "\n";
  os << "data_dir = " << data_dir << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "threads = " << threads << "\n";
  os << "\n[data]\n";
  os << "vocab_words = " << vocab_words << "\n";
  os << "utterances = " << utterances << "\n";
  os << "min_words = " << min_words << "\n";
  os << "max_words = " << max_words << "\n";
  os << "min_word_len = " << min_word_len << "\n";
  os << "max_word_len = " << max_word_len << "\n";
  os << "zipf_exponent = " << fmt_double(zipf_exponent) << "\n";
  os << "feature_dim = " << feature_dim << "\n";
  os << "frames_per_char = " << frames_per_char << "\n";
  os << "noise_std = " << fmt_double(noise_std) << "\n";
  os << "stack_left = " << stack_left << "\n";
  os << "downsample = " << downsample << "\n";
  os << "rare_top_n = " << rare_top_n << "\n";
  os << "zs_fraction = " << fmt_double(zs_fraction) << "\n";
  os << "test_fraction = " << fmt_double(test_fraction) << "\n";
  os << "plm_corpus_factor = " << plm_corpus_factor << "\n";
  os << "\n[tokenizer]\n";
  os << "alphabet = " << alphabet << "\n";
  os << "subword_vocab = " << subword_vocab << "\n";
  os << "\n[model]\n";
  os << "encoder_layers = " << encoder_layers << "\n";
  os << "encoder_hidden = " << encoder_hidden << "\n";
  os << "model_dim = " << model_dim << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "pred_hidden = " << pred_hidden << "\n";
  os << "joint_hidden = " << joint_hidden << "\n";
  os << "\n[plm]\n";
  os << "embed_dim = " << plm_embed << "\n";
  os << "hidden = " << plm_hidden << "\n";
  os << "layers = " << plm_layers << "\n";
  os << "epochs = " << plm_epochs << "\n";
  os << "lr = " << fmt_double(plm_lr) << "\n";
  os << "holdout = " << fmt_double(plm_holdout) << "\n";
  os << "batch = " << plm_batch << "\n";
  os << "\n[biasing]\n";
  os << "char_embed = " << char_embed << "\n";
  os << "char_hidden = " << char_hidden << "\n";
  os << "char_depth = " << char_depth << "\n";
  os << "sub_embed = " << sub_embed << "\n";
  os << "sub_hidden = " << sub_hidden << "\n";
  os << "sub_depth = " << sub_depth << "\n";
  os << "attn_dim = " << attn_dim << "\n";
  os << "heads = " << heads << "\n";
  os << "train_k = " << train_k << "\n";
  os << "eval_k = " << int_list_to_string(eval_k) << "\n";
  os << "variant = " << variant << "\n";
  os << "\n[training]\n";
  os << "lr = " << fmt_double(lr) << "\n";
  os << "epochs = " << epochs << "\n";
  os << "batch = " << batch << "\n";
  os << "adapter_lr = " << fmt_double(adapter_lr) << "\n";
  os << "adapter_epochs = " << adapter_epochs << "\n";
  os << "max_symbols_per_frame = " << max_symbols_per_frame << "\n";
  return os.str();
}

BiasingDims ExperimentConfig::biasing_dims() const {
  BiasingDims d;
  d.char_embed = char_embed;
  d.char_hidden = char_hidden;
  d.char_depth = char_depth;
  d.sub_embed = sub_embed;
  d.sub_hidden = sub_hidden;
  d.sub_depth = sub_depth;
  d.attn_dim = attn_dim;
  d.heads = heads;
  return d;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + fnv1a(tag);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::mt19937 seeded_rng(std::uint64_t seed, const std::string& tag) {
  return std::mt19937(static_cast<std::uint32_t>(derive_seed(seed, tag)));
}

}  // namespace cbxt
