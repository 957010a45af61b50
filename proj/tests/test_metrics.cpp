#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "cbxt/metrics.hpp"
#include "oracles.hpp"

using namespace cbxt;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> ws) {
  std::vector<std::string> out;
  for (const char* w : ws) out.emplace_back(w);
  return out;
}

WordClass classify_none(const std::string&) { return WordClass::non_rare; }

}  // namespace

TEST_CASE("alignment of identical sequences is all matches") {
  auto ref = words({"a", "b", "c"});
  WordAlignment al = align(ref, ref);
  CHECK(al.errors() == 0);
  CHECK(al.ref_len() == 3);
  for (const auto& op : al.ops) CHECK(op.op == EditOp::match);
}

TEST_CASE("single substitution and pure insertion cases") {
  auto ref = words({"a", "b", "c"});
  auto hyp = words({"a", "x", "c"});
  WordAlignment al = align(ref, hyp);
  CHECK(al.errors() == 1);
  CHECK(al.ops[1].op == EditOp::substitution);

  std::vector<std::string> empty;
  auto one = words({"a"});
  WordAlignment ins = align(empty, one);
  REQUIRE(ins.ops.size() == 1);
  CHECK(ins.ops[0].op == EditOp::insertion);
}

TEST_CASE("alignment replays both sequences and matches the recursive oracle") {
  std::vector<std::string> alphabet = {"x", "y", "z"};
  std::mt19937 rng(5);
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<std::string> ref, hyp;
    int lr = static_cast<int>(rng() % 7);
    int lh = static_cast<int>(rng() % 7);
    for (int i = 0; i < lr; ++i) ref.push_back(alphabet[rng() % 3]);
    for (int i = 0; i < lh; ++i) hyp.push_back(alphabet[rng() % 3]);

    WordAlignment al = align(ref, hyp);
    CHECK(al.errors() == oracles::edit_distance_recursive(ref, hyp));

    // replaying the ops reconstructs both sequences
    std::vector<std::string> rref, rhyp;
    for (const auto& op : al.ops) {
      if (op.op != EditOp::insertion) rref.push_back(ref[static_cast<size_t>(op.ref_index)]);
      if (op.op != EditOp::deletion) rhyp.push_back(hyp[static_cast<size_t>(op.hyp_index)]);
    }
    CHECK(rref == ref);
    CHECK(rhyp == hyp);
  }
}

TEST_CASE("corpus WER is summed not averaged") {
  MetricsReport report;
  auto r1 = words({"a", "b"});
  auto h1 = words({"a", "x"});
  accumulate_alignment(report, align(r1, h1), r1, classify_none);
  CHECK(report.wer() == Catch::Approx(0.5));

  auto r2 = words({"c", "d", "e", "f"});
  accumulate_alignment(report, align(r2, r2), r2, classify_none);
  // 1 error over 6 words, not mean(0.5, 0)
  CHECK(report.wer() == Catch::Approx(1.0 / 6));

  MetricsReport empty;
  CHECK_THROWS_AS(empty.wer(), DomainError);
}

TEST_CASE("insertions can push WER above one") {
  MetricsReport report;
  auto ref = words({"a"});
  auto hyp = words({"x", "y", "z"});
  accumulate_alignment(report, align(ref, hyp), ref, classify_none);
  CHECK(report.wer() > 1.0);
}

TEST_CASE("class attribution follows the reference word") {
  auto classify = [](const std::string& w) {
    return w == "songname" ? WordClass::rare : WordClass::non_rare;
  };
  MetricsReport report;
  auto ref = words({"play", "songname"});
  auto hyp = words({"play", "songnome"});
  accumulate_alignment(report, align(ref, hyp), ref, classify);
  REQUIRE(report.r_wer());
  REQUIRE(report.nr_wer());
  CHECK(*report.r_wer() == Catch::Approx(1.0));
  CHECK(*report.nr_wer() == Catch::Approx(0.0));

  // counts reconcile
  CHECK(report.rare.ref_words + report.non_rare.ref_words == report.total.ref_words);
  CHECK(report.rare.errors + report.non_rare.errors == report.total.errors);
}

TEST_CASE("insertions inherit the class of the preceding reference word") {
  auto classify = [](const std::string& w) {
    return w == "rare" ? WordClass::rare : WordClass::non_rare;
  };
  MetricsReport report;
  auto ref = words({"rare"});
  auto hyp = words({"rare", "extra"});
  accumulate_alignment(report, align(ref, hyp), ref, classify);
  CHECK(report.rare.errors == 1);
  CHECK(report.non_rare.errors == 0);

  // sentence-initial insertions count as non-rare
  MetricsReport r2;
  auto ref2 = words({"rare"});
  auto hyp2 = words({"extra", "rare"});
  accumulate_alignment(r2, align(ref2, hyp2), ref2, classify);
  CHECK(r2.non_rare.errors == 1);
  CHECK(r2.rare.errors == 0);
}

TEST_CASE("zero-shot errors count inside the rare class") {
  auto classify = [](const std::string& w) {
    if (w == "zs") return WordClass::zero_shot_rare;
    if (w == "r") return WordClass::rare;
    return WordClass::non_rare;
  };
  MetricsReport report;
  auto ref = words({"zs", "r", "common"});
  auto hyp = words({"x", "y", "common"});
  accumulate_alignment(report, align(ref, hyp), ref, classify);
  CHECK(report.zs_rare.errors == 1);
  CHECK(report.rare.errors == 2);
  CHECK(report.zs_rare.ref_words == 1);
  CHECK(report.rare.ref_words == 2);
  REQUIRE(report.zsr_wer());
  CHECK(*report.zsr_wer() == Catch::Approx(1.0));
}

TEST_CASE("a corpus without rare words reports the rate as absent") {
  MetricsReport report;
  auto ref = words({"a", "b"});
  accumulate_alignment(report, align(ref, ref), ref, classify_none);
  CHECK(!report.r_wer());
  CHECK(!report.zsr_wer());
  CHECK(report.nr_wer());
  CHECK(*report.nr_wer() == 0.0);
}

TEST_CASE("relative improvement matches the published numbers") {
  CHECK(werr(4.75, 4.31) == Catch::Approx(0.0926).margin(0.0001));
  CHECK(werr(5.19, 4.95) == Catch::Approx(0.0462).margin(0.0001));
  CHECK(werr(3.3, 3.3) == 0.0);
  // antisymmetric in sign around equal inputs
  CHECK(werr(4.0, 3.0) == Catch::Approx(-werr(4.0, 5.0)));
  CHECK_THROWS_AS(werr(0.0, 1.0), DomainError);
}

TEST_CASE("attention metrics on crafted score matrices") {
  // concentrated on the correct entity
  AttentionRecord hit;
  hit.rows = {{0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}};
  hit.correct_index = 1;

  std::vector<AttentionRecord> one = {hit};
  AttentionMetrics m = attention_metrics(one);
  CHECK(m.aa == 1.0);
  CHECK(m.aas == 1.0);

  // uniform scores over 4 entries: ties resolve toward no-bias, counted wrong
  AttentionRecord uniform;
  uniform.rows = {{0.25, 0.25, 0.25, 0.25}};
  uniform.correct_index = 2;
  std::vector<AttentionRecord> u = {uniform};
  AttentionMetrics mu = attention_metrics(u);
  CHECK(mu.aa == 0.0);
  CHECK(mu.aas == Catch::Approx(0.25));

  // mean over decoding steps
  AttentionRecord steps;
  steps.rows = {{0.2, 0.8}, {0.6, 0.4}};
  steps.correct_index = 1;
  std::vector<AttentionRecord> s = {steps};
  AttentionMetrics ms = attention_metrics(s);
  CHECK(ms.aas == Catch::Approx(0.6));
  CHECK(ms.aa == 1.0);  // 0.6 > 0.4

  std::vector<AttentionRecord> none;
  CHECK_THROWS_AS(attention_metrics(none), DomainError);

  AttentionRecord missing;
  missing.rows = {{1.0}};
  missing.correct_index = -1;
  std::vector<AttentionRecord> bad = {missing};
  CHECK_THROWS_AS(attention_metrics(bad), ContractError);
}

TEST_CASE("relative attention reporting matches the presentation format") {
  double aa_base = 0.534, aa_new = 0.574;
  double rel = (aa_new - aa_base) / aa_base * 100.0;
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << (rel >= 0 ? "+" : "") << rel;
  CHECK(os.str() == "+7.49");
}

TEST_CASE("report TSV round trips") {
  MetricsReport m;
  m.total = {3, 50};
  m.rare = {2, 10};
  m.non_rare = {1, 40};
  m.zs_rare = {1, 4};
  m.aa = 0.5;
  m.aas = 0.25;
  m.utterances = 12;
  std::vector<ReportRow> rows = {{"char-ii", 20, m}};
  std::ostringstream os;
  write_report_tsv(os, rows);
  std::istringstream is(os.str());
  auto back = read_report_tsv(is);
  REQUIRE(back.size() == 1);
  CHECK(back[0].variant == "char-ii");
  CHECK(back[0].k == 20);
  CHECK(back[0].metrics.total.errors == 3);
  CHECK(back[0].metrics.rare.ref_words == 10);
  CHECK(back[0].metrics.zs_rare.errors == 1);
  CHECK(back[0].metrics.aa == Catch::Approx(0.5));

  std::ostringstream table;
  write_report_table(table, back);
  CHECK(table.str().find("WER") != std::string::npos);
  CHECK(table.str().find("char-ii") != std::string::npos);
}
