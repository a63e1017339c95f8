#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vlmt/datasynth.hpp"
#include "vlmt/metrics.hpp"

using namespace vlmt;
using namespace vlmt::metrics;

namespace {

std::vector<TriggerOutcome> outcomes_from_counts(size_t tp, size_t fp,
                                                 size_t fn, size_t tn) {
  std::vector<TriggerOutcome> out;
  auto push = [&](bool expected, bool fired, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      out.push_back({"s" + std::to_string(out.size()), expected, fired,
                     fired ? std::vector<int32_t>{9} : std::vector<int32_t>{}});
    }
  };
  push(true, true, tp);
  push(false, true, fp);
  push(true, false, fn);
  push(false, false, tn);
  return out;
}

std::vector<int32_t> toks(std::initializer_list<int32_t> ids) { return ids; }

}  // namespace

TEST_CASE("trigger metrics on the published confusion counts") {
  // TP=13 FP=2 FN=3 gives P=13/15, R=13/16
  auto m = trigger_metrics(outcomes_from_counts(13, 2, 3, 10));
  CHECK(m.precision == doctest::Approx(13.0 / 15.0).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(13.0 / 16.0).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(0.83871).epsilon(1e-4));
  CHECK(m.counts.tp == 13);
  CHECK(m.counts.tn == 10);

  auto perfect = trigger_metrics(outcomes_from_counts(5, 0, 0, 0));
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("published table rows reproduce their F1 column at 3 decimals") {
  // Published values are quantized to three decimals, so the comparison is
  // made after rounding the recomputed harmonic mean the same way.
  struct Row {
    double p, r, f1;
  };
  for (const Row& row : {Row{0.867, 0.813, 0.838}, Row{0.625, 0.667, 0.645},
                         Row{0.734, 0.734, 0.734}}) {
    double f1 = f1_score(row.p, row.r);
    double rounded = std::round(f1 * 1000.0) / 1000.0;
    CHECK(std::abs(rounded - row.f1) <= 0.001 + 1e-12);
  }
}

TEST_CASE("zero-denominator conventions") {
  // nothing expected, nothing fired: vacuously perfect
  auto clean = trigger_metrics(outcomes_from_counts(0, 0, 0, 4));
  CHECK(clean.precision == 1.0);
  CHECK(clean.recall == 1.0);
  CHECK(clean.f1 == 1.0);

  // misses but no fires: P has a zero denominator and collapses to 0
  auto missed = trigger_metrics(outcomes_from_counts(0, 0, 3, 2));
  CHECK(missed.precision == 0.0);
  CHECK(missed.recall == 0.0);
  CHECK(missed.f1 == 0.0);

  CHECK_THROWS_AS(trigger_metrics({}), ContractError);
}

TEST_CASE("trigger metrics equal a brute-force recount on random lists") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 1 + rng.index(40);
    std::vector<TriggerOutcome> outcomes;
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < n; ++i) {
      bool expected = rng.uniform() < 0.5;
      bool fired = rng.uniform() < 0.5;
      outcomes.push_back({"s", expected, fired, {}});
      if (expected && fired) ++tp;
      if (!expected && fired) ++fp;
      if (expected && !fired) ++fn;
      if (!expected && !fired) ++tn;
    }
    auto m = trigger_metrics(outcomes);
    CHECK(m.counts.tp == tp);
    CHECK(m.counts.fp == fp);
    CHECK(m.counts.fn == fn);
    CHECK(m.counts.tn == tn);
    double p = tp + fp == 0 ? (tp == 0 && fp == 0 && fn == 0 ? 1.0 : 0.0)
                            : double(tp) / double(tp + fp);
    double r = tp + fn == 0 ? (tp == 0 && fp == 0 && fn == 0 ? 1.0 : 0.0)
                            : double(tp) / double(tp + fn);
    CHECK(m.precision == doctest::Approx(p).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(r).epsilon(1e-12));
    CHECK(m.counts.tp + m.counts.fp + m.counts.fn + m.counts.tn == n);
  }
}

TEST_CASE("bleu identity corpus scores exactly one") {
  std::vector<std::vector<int32_t>> cands = {toks({5, 6, 7, 8, 9}),
                                             toks({10, 11, 12, 13})};
  auto r = bleu(cands, cands);
  CHECK(r.bleu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.brevity_penalty == 1.0);
  for (double p : r.precisions) CHECK(p == 1.0);
}

TEST_CASE("bleu clips repeated unigrams against the reference") {
  // candidate: the*7; reference: "the cat is on the mat" (two "the")
  std::vector<std::vector<int32_t>> cands = {
      toks({5, 5, 5, 5, 5, 5, 5})};
  std::vector<std::vector<int32_t>> refs = {toks({5, 6, 7, 8, 5, 9})};
  auto r = bleu(cands, refs);
  CHECK(r.matches[0] == 2);
  CHECK(r.totals[0] == 7);
  CHECK(r.precisions[0] == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("bleu brevity penalty on the four-vs-five token case") {
  std::vector<std::vector<int32_t>> cands = {toks({1, 2, 3, 4})};
  std::vector<std::vector<int32_t>> refs = {toks({1, 2, 3, 4, 5})};
  auto r = bleu(cands, refs);
  for (size_t n = 0; n < 4; ++n) {
    CHECK(r.precisions[n] == 1.0);
    CHECK(r.matches[n] == 4 - n);
  }
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(-0.25)).epsilon(1e-12));
  CHECK(r.bleu == doctest::Approx(0.7788).epsilon(1e-4));
}

TEST_CASE("bleu is order-invariant, bounded, and 1 only on exact corpora") {
  Rng rng(15);
  std::vector<std::vector<int32_t>> cands, refs;
  for (int i = 0; i < 12; ++i) {
    std::vector<int32_t> c, r;
    size_t len = 3 + rng.index(6);
    for (size_t j = 0; j < len; ++j) {
      c.push_back(static_cast<int32_t>(rng.index(10)));
      r.push_back(static_cast<int32_t>(rng.index(10)));
    }
    cands.push_back(c);
    refs.push_back(r);
  }
  auto forward = bleu(cands, refs);
  CHECK(forward.bleu >= 0.0);
  CHECK(forward.bleu <= 1.0);
  std::vector<std::vector<int32_t>> cands_r(cands.rbegin(), cands.rend());
  std::vector<std::vector<int32_t>> refs_r(refs.rbegin(), refs.rend());
  auto backward = bleu(cands_r, refs_r);
  CHECK(forward.bleu == doctest::Approx(backward.bleu).epsilon(1e-12));

  // not all equal -> strictly below 1 (single-reference corpora)
  if (cands != refs) CHECK(forward.bleu < 1.0);
}

TEST_CASE("bleu edge handling: empty candidate, empty corpus, smoothing flag") {
  std::vector<std::vector<int32_t>> cands = {{}, toks({1, 2, 3})};
  std::vector<std::vector<int32_t>> refs = {toks({1, 2}), toks({1, 2, 3})};
  auto r = bleu(cands, refs);
  CHECK(r.bleu > 0.0);  // brevity penalty applies, no error
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 5.0 / 3.0)));

  CHECK_THROWS_AS(bleu({}, std::vector<std::vector<int32_t>>{}),
                  ContractError);

  // zero higher-order matches: smoothed stays positive, unsmoothed collapses
  std::vector<std::vector<int32_t>> c2 = {toks({1, 9, 2, 9})};
  std::vector<std::vector<int32_t>> r2 = {toks({1, 2, 3, 4})};
  CHECK(bleu(c2, r2, 4, true).bleu > 0.0);
  CHECK(bleu(c2, r2, 4, false).bleu == 0.0);
}

TEST_CASE("bleu accepts multi-reference clipping") {
  std::vector<std::vector<int32_t>> cands = {toks({1, 1, 2})};
  std::vector<std::vector<std::vector<int32_t>>> refs = {
      {toks({1, 2}), toks({1, 1, 3})}};
  auto r = bleu(cands, refs);
  // "1" clips at max count 2 (second reference), "2" matches the first
  CHECK(r.matches[0] == 3);
  CHECK(r.totals[0] == 3);
}

TEST_CASE("split_at_suggest separates description from suggestion") {
  using V = frontend::Vocabulary;
  auto s = split_at_suggest(
      {V::kBos, 7, 8, V::kSuggest, 9, 10, V::kEos});
  CHECK(s.fired);
  CHECK(s.description == toks({7, 8}));
  CHECK(s.suggestion == toks({9, 10}));

  auto plain = split_at_suggest({V::kBos, 7, 8, V::kEos});
  CHECK_FALSE(plain.fired);
  CHECK(plain.description == toks({7, 8}));
  CHECK(plain.suggestion.empty());
}

TEST_CASE("evaluate produces a well-formed, ablation-faithful report") {
  auto corpus = datasynth::generate(datasynth::default_world_spec(), 30, 3);
  relgraph::OccurrenceCounts counts(12);
  for (const auto& f : datasynth::build_history(corpus)) {
    relgraph::observe_frame(counts, f);
  }
  auto graph = relgraph::build_matrix(counts);
  model::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_coattn_layers = 1;
  cfg.n_decoder_layers = 1;
  cfg.d_ff = 32;
  cfg.d_v = 8;
  cfg.d_r = 4;
  cfg.vocab_size = corpus.vocab.size();
  cfg.n_classes = 12;
  cfg.max_len = 32;
  cfg.dropout = 0.0;
  auto params = model::init_params<float>(cfg, 2);

  auto report = evaluate(params, cfg, corpus.val, corpus.vocab, graph, false);
  CHECK(report.n_scenes == corpus.val.size());
  for (double v : {report.precision, report.recall, report.f1, report.bleu,
                   report.suggestion_exact}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(report.counts.tp + report.counts.fp + report.counts.fn +
            report.counts.tn ==
        report.n_scenes);

  // report JSON round trip
  auto doc = report.to_json();
  CHECK(doc.at("format_version") == 1);
  auto back = EvalReport::from_json(doc);
  CHECK(back.f1 == report.f1);
  CHECK(back.counts.fn == report.counts.fn);

  // ablated evaluation ignores the graph contents entirely
  relgraph::OccurrenceCounts other(12);
  relgraph::observe_frame(other, {3, 4, 5});
  auto g2 = relgraph::build_matrix(other);
  auto r1 = evaluate(params, cfg, corpus.val, corpus.vocab, graph, true);
  auto r2 = evaluate(params, cfg, corpus.val, corpus.vocab, g2, true);
  CHECK(r1.f1 == r2.f1);
  CHECK(r1.bleu == r2.bleu);
  CHECK(r1.counts.tp == r2.counts.tp);

  auto table = report_table({{"full", report}, {"ablated", r1}});
  CHECK(table.find("Precision") != std::string::npos);
  CHECK(table.find("BLEU") != std::string::npos);
  CHECK(table.find("full") != std::string::npos);
}
