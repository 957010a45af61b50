#include "cbxt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace cbxt {

int WordAlignment::errors() const {
  int e = 0;
  for (const auto& op : ops) {
    if (op.op != EditOp::match) ++e;
  }
  return e;
}

int WordAlignment::ref_len() const {
  int n = 0;
  for (const auto& op : ops) {
    if (op.op != EditOp::insertion) ++n;
  }
  return n;
}

WordAlignment align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  int m = static_cast<int>(ref.size());
  int n = static_cast<int>(hyp.size());
  std::vector<std::vector<int>> cost(static_cast<size_t>(m + 1),
                                     std::vector<int>(static_cast<size_t>(n + 1), 0));
  for (int i = 1; i <= m; ++i) cost[static_cast<size_t>(i)][0] = i;
  for (int j = 1; j <= n; ++j) cost[0][static_cast<size_t>(j)] = j;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= n; ++j) {
      int sub = cost[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] +
                (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
      int del = cost[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] + 1;
      int ins = cost[static_cast<size_t>(i)][static_cast<size_t>(j - 1)] + 1;
      cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = std::min({sub, del, ins});
    }
  }

  WordAlignment out;
  int i = m, j = n;
  while (i > 0 || j > 0) {
    int c = cost[static_cast<size_t>(i)][static_cast<size_t>(j)];
    bool same = i > 0 && j > 0 && ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)];
    if (same && c == cost[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)]) {
      out.ops.push_back({EditOp::match, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && j > 0 && !same &&
               c == cost[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] + 1) {
      out.ops.push_back({EditOp::substitution, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && c == cost[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] + 1) {
      out.ops.push_back({EditOp::deletion, i - 1, -1});
      --i;
    } else {
      out.ops.push_back({EditOp::insertion, -1, j - 1});
      --j;
    }
  }
  std::reverse(out.ops.begin(), out.ops.end());
  return out;
}

double MetricsReport::wer() const {
  if (total.ref_words == 0) throw DomainError("word error rate over zero reference words");
  return total.rate();
}

std::optional<double> MetricsReport::r_wer() const {
  if (rare.ref_words == 0) return std::nullopt;
  return rare.rate();
}

std::optional<double> MetricsReport::nr_wer() const {
  if (non_rare.ref_words == 0) return std::nullopt;
  return non_rare.rate();
}

std::optional<double> MetricsReport::zsr_wer() const {
  if (zs_rare.ref_words == 0) return std::nullopt;
  return zs_rare.rate();
}

void accumulate_alignment(MetricsReport& report, const WordAlignment& alignment,
                          std::span<const std::string> ref,
                          const std::function<WordClass(const std::string&)>& classify) {
  auto bump_ref = [&](WordClass cls) {
    ++report.total.ref_words;
    if (cls == WordClass::non_rare) {
      ++report.non_rare.ref_words;
    } else {
      ++report.rare.ref_words;
      if (cls == WordClass::zero_shot_rare) ++report.zs_rare.ref_words;
    }
  };
  auto bump_err = [&](WordClass cls) {
    ++report.total.errors;
    if (cls == WordClass::non_rare) {
      ++report.non_rare.errors;
    } else {
      ++report.rare.errors;
      if (cls == WordClass::zero_shot_rare) ++report.zs_rare.errors;
    }
  };

  WordClass prev_ref_class = WordClass::non_rare;  // sentence-initial insertions
  for (const auto& op : alignment.ops) {
    if (op.op == EditOp::insertion) {
      bump_err(prev_ref_class);
      continue;
    }
    WordClass cls = classify(ref[static_cast<size_t>(op.ref_index)]);
    bump_ref(cls);
    if (op.op != EditOp::match) bump_err(cls);
    prev_ref_class = cls;
  }
  ++report.utterances;
}

double wer(const MetricsReport& report) { return report.wer(); }

ClassedRates classed_wer(const MetricsReport& report) {
  return {report.r_wer(), report.nr_wer(), report.zsr_wer()};
}

double werr(double wer_baseline, double wer_model) {
  if (wer_baseline <= 0.0) throw DomainError("relative improvement needs a positive baseline");
  return (wer_baseline - wer_model) / wer_baseline;
}

AttentionMetrics attention_metrics(std::span<const AttentionRecord> records) {
  if (records.empty()) throw DomainError("attention metrics over zero utterances");
  AttentionMetrics out;
  for (const auto& rec : records) {
    if (rec.correct_index < 0) throw ContractError("attention record without a correct entity");
    if (rec.rows.empty()) throw ContractError("attention record with no score rows");
    size_t k = rec.rows[0].size();
    std::vector<double> entity(k, 0.0);
    for (const auto& row : rec.rows) {
      if (row.size() != k) throw ContractError("ragged attention score matrix");
      for (size_t i = 0; i < k; ++i) entity[i] += row[i];
    }
    for (double& e : entity) e /= static_cast<double>(rec.rows.size());
    if (static_cast<size_t>(rec.correct_index) >= k) {
      throw ContractError("correct entity index outside the score row");
    }
    // argmax with ties toward the lower index
    size_t best = 0;
    for (size_t i = 1; i < k; ++i) {
      if (entity[i] > entity[best]) best = i;
    }
    if (static_cast<int>(best) == rec.correct_index) out.aa += 1.0;
    out.aas += entity[static_cast<size_t>(rec.correct_index)];
    ++out.utterances;
  }
  out.aa /= static_cast<double>(out.utterances);
  out.aas /= static_cast<double>(out.utterances);
  return out;
}

// --- reporting ---------------------------------------------------------------

namespace {

std::string fmt_rate(const std::optional<double>& r) {
  if (!r) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << *r;
  return os.str();
}

std::optional<double> parse_rate(const std::string& s) {
  if (s == "-") return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_report_tsv(std::ostream& os, std::span<const ReportRow> rows, bool header) {
  if (header) {
    os << "variant\tk\twer\tr_wer\tnr_wer\tzsr_wer\twerr\taa\taas\tutterances"
       << "\tref_words\terrors\tr_ref\tr_err\tnr_ref\tnr_err\tzsr_ref\tzsr_err\n";
  }
  for (const auto& row : rows) {
    const MetricsReport& m = row.metrics;
    os << row.variant << '\t' << row.k << '\t'
       << fmt_rate(m.total.ref_words ? std::optional(m.wer()) : std::nullopt) << '\t'
       << fmt_rate(m.r_wer()) << '\t' << fmt_rate(m.nr_wer()) << '\t' << fmt_rate(m.zsr_wer())
       << '\t' << fmt_rate(m.werr) << '\t' << fmt_rate(m.aa) << '\t' << fmt_rate(m.aas) << '\t'
       << m.utterances << '\t' << m.total.ref_words << '\t' << m.total.errors << '\t'
       << m.rare.ref_words << '\t' << m.rare.errors << '\t' << m.non_rare.ref_words << '\t'
       << m.non_rare.errors << '\t' << m.zs_rare.ref_words << '\t' << m.zs_rare.errors << '\n';
  }
}

std::vector<ReportRow> read_report_tsv(std::istream& is) {
  std::vector<ReportRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("variant\t", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (cells.size() < 18) throw LoadError("malformed report row: " + line);
    ReportRow row;
    row.variant = cells[0];
    row.k = std::stoi(cells[1]);
    row.metrics.werr = parse_rate(cells[6]);
    row.metrics.aa = parse_rate(cells[7]);
    row.metrics.aas = parse_rate(cells[8]);
    row.metrics.utterances = std::stoi(cells[9]);
    row.metrics.total.ref_words = std::stol(cells[10]);
    row.metrics.total.errors = std::stol(cells[11]);
    row.metrics.rare.ref_words = std::stol(cells[12]);
    row.metrics.rare.errors = std::stol(cells[13]);
    row.metrics.non_rare.ref_words = std::stol(cells[14]);
    row.metrics.non_rare.errors = std::stol(cells[15]);
    row.metrics.zs_rare.ref_words = std::stol(cells[16]);
    row.metrics.zs_rare.errors = std::stol(cells[17]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_table(std::ostream& os, std::span<const ReportRow> rows) {
  std::vector<std::string> variants;
  std::vector<int> ks;
  for (const auto& r : rows) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end())
      variants.push_back(r.variant);
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
  }
  std::sort(ks.begin(), ks.end());

  auto find_row = [&](const std::string& v, int k) -> const ReportRow* {
    for (const auto& r : rows) {
      if (r.variant == v && r.k == k) return &r;
    }
    return nullptr;
  };

  auto grid = [&](const std::string& title,
                  const std::function<std::optional<double>(const MetricsReport&)>& get) {
    os << title << "\n";
    os << std::left << std::setw(16) << "variant";
    for (int k : ks) os << std::right << std::setw(10) << ("K=" + std::to_string(k));
    os << "\n";
    for (const auto& v : variants) {
      os << std::left << std::setw(16) << v;
      for (int k : ks) {
        const ReportRow* r = find_row(v, k);
        std::optional<double> val = r ? get(r->metrics) : std::nullopt;
        std::ostringstream cell;
        if (val) {
          cell << std::fixed << std::setprecision(2) << *val * 100.0;
        } else {
          cell << "-";
        }
        os << std::right << std::setw(10) << cell.str();
      }
      os << "\n";
    }
    os << "\n";
  };

  grid("WER (%)", [](const MetricsReport& m) -> std::optional<double> {
    return m.total.ref_words ? std::optional(m.wer()) : std::nullopt;
  });
  grid("R-WER (%)", [](const MetricsReport& m) { return m.r_wer(); });
  grid("NR-WER (%)", [](const MetricsReport& m) { return m.nr_wer(); });
  grid("ZSR-WER (%)", [](const MetricsReport& m) { return m.zsr_wer(); });

  bool any_attention = std::any_of(rows.begin(), rows.end(),
                                   [](const ReportRow& r) { return r.metrics.aa.has_value(); });
  if (any_attention) {
    grid("Attention accuracy (%)", [](const MetricsReport& m) { return m.aa; });
    grid("Avg attention score (%)", [](const MetricsReport& m) { return m.aas; });
  }
}

}  // namespace cbxt
