#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbxt/error.hpp"

namespace cbxt {

enum class EditOp { match, substitution, deletion, insertion };

struct AlignedOp {
  EditOp op;
  int ref_index;  // -1 for insertions
  int hyp_index;  // -1 for deletions
};

struct WordAlignment {
  std::vector<AlignedOp> ops;
  int errors() const;
  int ref_len() const;
};

// Minimal edit-distance alignment; ties prefer match over substitution over
// deletion over insertion.
WordAlignment align(std::span<const std::string> ref, std::span<const std::string> hyp);

enum class WordClass { non_rare, rare, zero_shot_rare };

struct ErrorCounts {
  long errors = 0;     // substitutions + deletions + insertions
  long ref_words = 0;

  double rate() const { return ref_words > 0 ? static_cast<double>(errors) / ref_words : 0.0; }
};

// Corpus-level tallies; rates are sums of errors over sums of reference
// words, not per-utterance averages.
struct MetricsReport {
  ErrorCounts total;
  ErrorCounts rare;       // includes zero-shot-rare
  ErrorCounts non_rare;
  ErrorCounts zs_rare;
  std::optional<double> werr;  // vs a named baseline, when provided
  std::string werr_baseline;
  std::optional<double> aa;
  std::optional<double> aas;
  int utterances = 0;

  double wer() const;
  std::optional<double> r_wer() const;
  std::optional<double> nr_wer() const;
  std::optional<double> zsr_wer() const;
};

// Accumulates one aligned utterance into the report. Substitutions and
// deletions belong to the reference word's class; insertions inherit the
// class of the preceding aligned reference word (non-rare at sentence start).
void accumulate_alignment(MetricsReport& report, const WordAlignment& alignment,
                          std::span<const std::string> ref,
                          const std::function<WordClass(const std::string&)>& classify);

double wer(const MetricsReport& report);  // DomainError when no reference words

struct ClassedRates {
  std::optional<double> r_wer, nr_wer, zsr_wer;
};
ClassedRates classed_wer(const MetricsReport& report);

// (baseline - model) / baseline; positive means the model improved.
double werr(double wer_baseline, double wer_model);

struct AttentionRecord {
  std::vector<std::vector<double>> rows;  // (U+1) x (K+1) scores
  int correct_index = -1;
};

struct AttentionMetrics {
  double aa = 0.0;
  double aas = 0.0;
  int utterances = 0;
};

// Per utterance the entity score is the mean over prediction steps; AA counts
// utterances whose argmax entity (ties toward the lower index) is the correct
// one, AAS averages the correct entity's score.
AttentionMetrics attention_metrics(std::span<const AttentionRecord> records);

// Presentation: aligned text table and machine-readable TSV rows.
struct ReportRow {
  std::string variant;
  int k = 0;
  MetricsReport metrics;
};

void write_report_tsv(std::ostream& os, std::span<const ReportRow> rows, bool header = true);
std::vector<ReportRow> read_report_tsv(std::istream& is);
void write_report_table(std::ostream& os, std::span<const ReportRow> rows);

}  // namespace cbxt
