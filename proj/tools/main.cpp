// Experiment driver: data synthesis, tokenizer/base/adapter training,
// evaluation sweeps, and report generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cbxt/experiment.hpp"

namespace {

cbxt::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return cbxt::ExperimentConfig::from_ini(path);
}

void write_rows(const std::string& path, const std::vector<cbxt::ReportRow>& rows) {
  std::ofstream os(path);
  if (!os) throw cbxt::LoadError("cannot write " + path);
  cbxt::write_report_tsv(os, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual-biasing transducer experiments"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "INI config file (defaults apply when omitted)");

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic corpora and word lists");
  auto* tok = app.add_subcommand("tokenizer-train", "train char + subword tokenizers");
  auto* plm = app.add_subcommand("plm-train", "pretrain the language-model encoder");
  auto* base = app.add_subcommand("train-base", "train the core transducer");

  auto* adapters = app.add_subcommand("train-adapters", "train biasing adapters on a frozen base");
  std::string variant;
  adapters->add_option("--variant", variant, "variant name")->required();

  auto* eval = app.add_subcommand("evaluate", "decode a testset and report metrics");
  std::string ckpt_path, k_arg, testset = "test", out_tsv, row_label;
  bool exclude_correct = false;
  eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  eval->add_option("--k", k_arg, "comma-separated biasing list sizes (default: config eval_k)");
  eval->add_option("--testset", testset, "test | zs | train");
  eval->add_option("--out", out_tsv, "metrics TSV path");
  eval->add_option("--label", row_label, "row label override");
  eval->add_flag("--exclude-correct", exclude_correct, "use distractor-only biasing lists");

  auto* report = app.add_subcommand("report", "aggregate metric TSVs into one table");
  std::vector<std::string> tsv_inputs;
  std::string baseline_label = "baseline";
  std::string report_out;
  report->add_option("files", tsv_inputs, "metrics TSV files")->required();
  report->add_option("--baseline", baseline_label, "variant used as the relative baseline");
  report->add_option("--out", report_out, "write combined TSV here");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks on layers and losses");
  std::uint64_t gc_seed = 1234;
  gradcheck->add_option("--seed", gc_seed, "seed for the check instances");

  CLI11_PARSE(app, argc, argv);

  try {
    cbxt::ExperimentConfig cfg = load_config(config_path);

    if (synth->parsed()) {
      cbxt::SynthDataSummary s = cbxt::synth_data(cfg);
      std::cout << "train " << s.train_utterances << ", test " << s.test_utterances << ", zs "
                << s.zs_utterances << ", rare words " << s.rare_words << ", zs words "
                << s.zs_words << ", lm lines " << s.plm_lines << "\n";
    } else if (tok->parsed()) {
      cbxt::tokenizer_train(cfg);
      std::cout << "tokenizers written to " << cfg.out_dir << "\n";
    } else if (plm->parsed()) {
      cbxt::PlmTrainResult r = cbxt::train_plm(cfg);
      std::cout << "perplexity " << r.perplexity.front() << " -> " << r.perplexity.back() << "\n";
    } else if (base->parsed()) {
      cbxt::TrainResult r = cbxt::train_base(cfg);
      std::cout << "final loss " << r.epoch_loss.back() << " after " << r.steps << " steps\n";
    } else if (adapters->parsed()) {
      cbxt::TrainResult r = cbxt::train_adapters(cfg, variant);
      std::cout << "final adapter loss " << r.epoch_loss.back() << " after " << r.steps
                << " steps\n";
    } else if (eval->parsed()) {
      cbxt::EvalOptions opt;
      opt.k_list = cfg.eval_k;
      if (!k_arg.empty()) {
        opt.k_list.clear();
        std::istringstream is(k_arg);
        std::string item;
        while (std::getline(is, item, ',')) opt.k_list.push_back(std::stoi(item));
      }
      opt.testset = testset;
      opt.exclude_correct = exclude_correct;
      opt.row_label = row_label;
      std::vector<cbxt::ReportRow> rows = cbxt::evaluate(cfg, ckpt_path, opt);
      cbxt::write_report_table(std::cout, rows);
      if (!out_tsv.empty()) write_rows(out_tsv, rows);
    } else if (report->parsed()) {
      std::vector<cbxt::ReportRow> rows;
      for (const auto& f : tsv_inputs) {
        std::ifstream is(f);
        if (!is) throw cbxt::LoadError("cannot read " + f);
        auto part = cbxt::read_report_tsv(is);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      cbxt::fill_werr(rows, baseline_label);
      cbxt::write_report_table(std::cout, rows);
      if (!report_out.empty()) write_rows(report_out, rows);
    } else if (gradcheck->parsed()) {
      bool ok = true;
      for (const auto& [name, err] : cbxt::run_gradient_checks(gc_seed)) {
        bool pass = err < 1e-4;
        ok = ok && pass;
        std::cout << (pass ? "[ok]   " : "[FAIL] ") << name << "  max rel err " << err << "\n";
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
