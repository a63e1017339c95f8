#include "vlmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace vlmt::metrics {

using nlohmann::json;

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

TriggerMetrics trigger_metrics(const std::vector<TriggerOutcome>& outcomes) {
  if (outcomes.empty()) {
    throw ContractError("trigger_metrics: empty outcome list");
  }
  TriggerMetrics m;
  for (const auto& o : outcomes) {
    if (o.expected && o.fired) ++m.counts.tp;
    if (!o.expected && o.fired) ++m.counts.fp;
    if (o.expected && !o.fired) ++m.counts.fn;
    if (!o.expected && !o.fired) ++m.counts.tn;
  }
  bool all_zero = m.counts.tp == 0 && m.counts.fp == 0 && m.counts.fn == 0;
  auto ratio = [all_zero](size_t num, size_t denom) {
    if (denom == 0) return all_zero ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(denom);
  };
  m.precision = ratio(m.counts.tp, m.counts.tp + m.counts.fp);
  m.recall = ratio(m.counts.tp, m.counts.tp + m.counts.fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

// --- BLEU -------------------------------------------------------------------

namespace {

using Ngram = std::vector<int32_t>;

std::map<Ngram, size_t> ngram_counts(const std::vector<int32_t>& tokens,
                                     size_t n) {
  std::map<Ngram, size_t> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)] += 1;
  }
  return counts;
}

/// Effective reference length: closest to the candidate length, shorter on
/// ties.
size_t effective_ref_len(size_t cand_len,
                         const std::vector<std::vector<int32_t>>& refs) {
  size_t best = refs.front().size();
  for (const auto& r : refs) {
    size_t diff_r = r.size() > cand_len ? r.size() - cand_len
                                        : cand_len - r.size();
    size_t diff_b = best > cand_len ? best - cand_len : cand_len - best;
    if (diff_r < diff_b || (diff_r == diff_b && r.size() < best)) {
      best = r.size();
    }
  }
  return best;
}

}  // namespace

BleuReport bleu(const std::vector<std::vector<int32_t>>& candidates,
                const std::vector<std::vector<std::vector<int32_t>>>& references,
                size_t max_n, bool smooth) {
  if (candidates.empty()) {
    throw ContractError("bleu: empty corpus");
  }
  if (candidates.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(candidates.size()) +
                        " candidates vs " + std::to_string(references.size()) +
                        " reference sets");
  }
  if (max_n < 1 || max_n > 4) throw ContractError("bleu: max_n must be 1..4");
  BleuReport report;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) {
      throw ContractError("bleu: candidate " + std::to_string(i) +
                          " has no reference");
    }
    report.cand_len += cand.size();
    report.ref_len += effective_ref_len(cand.size(), refs);
    for (size_t n = 1; n <= max_n; ++n) {
      auto cand_counts = ngram_counts(cand, n);
      std::map<Ngram, size_t> ref_max;
      for (const auto& ref : refs) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) {
          ref_max[gram] = std::max(ref_max[gram], count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_max.find(gram);
        size_t clipped = it == ref_max.end() ? 0 : std::min(count, it->second);
        report.matches[n - 1] += clipped;
        report.totals[n - 1] += count;
      }
    }
  }
  for (size_t n = 0; n < max_n; ++n) {
    report.precisions[n] =
        report.totals[n] == 0
            ? 0.0
            : static_cast<double>(report.matches[n]) /
                  static_cast<double>(report.totals[n]);
  }
  if (report.cand_len == 0) {
    report.brevity_penalty = 0.0;
    report.bleu = 0.0;
    return report;
  }
  double ratio = static_cast<double>(report.ref_len) /
                 static_cast<double>(report.cand_len);
  report.brevity_penalty = std::exp(std::min(0.0, 1.0 - ratio));
  double log_sum = 0.0;
  size_t orders = 0;
  for (size_t n = 0; n < max_n; ++n) {
    if (report.totals[n] == 0) continue;  // no candidate n-grams at this order
    double p = report.precisions[n];
    if (report.matches[n] == 0) {
      if (!smooth) {
        report.bleu = 0.0;
        return report;
      }
      p = 1.0 / (static_cast<double>(report.totals[n]) + 1.0);
    }
    log_sum += std::log(p);
    ++orders;
  }
  if (orders == 0) {
    report.bleu = 0.0;
    return report;
  }
  report.bleu = report.brevity_penalty *
                std::exp(log_sum / static_cast<double>(orders));
  return report;
}

BleuReport bleu(const std::vector<std::vector<int32_t>>& candidates,
                const std::vector<std::vector<int32_t>>& references,
                size_t max_n, bool smooth) {
  std::vector<std::vector<std::vector<int32_t>>> wrapped;
  wrapped.reserve(references.size());
  for (const auto& r : references) wrapped.push_back({r});
  return bleu(candidates, wrapped, max_n, smooth);
}

// --- evaluation ---------------------------------------------------------------

SuggestSplit split_at_suggest(const std::vector<int32_t>& tokens) {
  SuggestSplit out;
  bool after = false;
  for (int32_t id : tokens) {
    if (id == frontend::Vocabulary::kPad || id == frontend::Vocabulary::kBos ||
        id == frontend::Vocabulary::kEos) {
      continue;
    }
    if (id == frontend::Vocabulary::kSuggest && !after) {
      after = true;
      out.fired = true;
      continue;
    }
    (after ? out.suggestion : out.description).push_back(id);
  }
  return out;
}

json EvalReport::to_json() const {
  return json{{"format_version", 1},
              {"precision", precision},
              {"recall", recall},
              {"f1", f1},
              {"bleu", bleu},
              {"counts",
               {{"tp", counts.tp},
                {"fp", counts.fp},
                {"fn", counts.fn},
                {"tn", counts.tn}}},
              {"n_scenes", n_scenes},
              {"suggestion_exact", suggestion_exact},
              {"ablate_graph", ablate_graph},
              {"split", split}};
}

EvalReport EvalReport::from_json(const json& doc) {
  EvalReport r;
  try {
    r.precision = doc.at("precision").get<double>();
    r.recall = doc.at("recall").get<double>();
    r.f1 = doc.at("f1").get<double>();
    r.bleu = doc.at("bleu").get<double>();
    r.counts.tp = doc.at("counts").at("tp").get<size_t>();
    r.counts.fp = doc.at("counts").at("fp").get<size_t>();
    r.counts.fn = doc.at("counts").at("fn").get<size_t>();
    r.counts.tn = doc.at("counts").at("tn").get<size_t>();
    r.n_scenes = doc.at("n_scenes").get<size_t>();
    r.suggestion_exact = doc.at("suggestion_exact").get<double>();
    r.ablate_graph = doc.at("ablate_graph").get<bool>();
    r.split = doc.at("split").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("eval report: ") + e.what());
  }
  return r;
}

EvalReport evaluate(const ParamStore<float>& params,
                    const model::ModelConfig& config,
                    const std::vector<frontend::Scene>& scenes,
                    const frontend::Vocabulary& vocab,
                    const relgraph::RelationMatrix& graph, bool ablate) {
  if (scenes.empty()) throw ContractError("evaluate: no scenes");
  model::ModelConfig eval_config = config;
  eval_config.ablate_graph = ablate;
  BoundParams<float> bound = bind_constants(params);
  Tensor<float> r_emb;
  if (!eval_config.ablate_graph) {
    if (graph.n != eval_config.n_classes) {
      throw ValidationError("evaluate: graph over " + std::to_string(graph.n) +
                            " classes, config expects " +
                            std::to_string(eval_config.n_classes));
    }
    r_emb = model::relation_embedding(graph, bound);
  }
  std::vector<TriggerOutcome> outcomes;
  std::vector<std::vector<int32_t>> cand_descriptions;
  std::vector<std::vector<int32_t>> ref_descriptions;
  size_t exact = 0;
  for (const auto& scene : scenes) {
    model::SceneInputs<float> inputs =
        model::prepare_scene<float>(scene, vocab, eval_config);
    model::FusedContext<float> ctx =
        model::encode(inputs, r_emb, bound, eval_config);
    std::vector<int32_t> generated =
        model::generate(ctx, bound, eval_config, eval_config.max_len);
    SuggestSplit got = split_at_suggest(generated);
    SuggestSplit ref = split_at_suggest(inputs.target_tokens);
    TriggerOutcome outcome;
    outcome.scene_id = scene.scene_id;
    outcome.expected = scene.expects_trigger;
    outcome.fired = got.fired;
    outcome.suggestion_tokens = got.suggestion;
    if (outcome.expected && outcome.fired &&
        got.suggestion == ref.suggestion) {
      ++exact;
    }
    outcomes.push_back(std::move(outcome));
    cand_descriptions.push_back(std::move(got.description));
    ref_descriptions.push_back(std::move(ref.description));
  }
  TriggerMetrics tm = trigger_metrics(outcomes);
  EvalReport report;
  report.precision = tm.precision;
  report.recall = tm.recall;
  report.f1 = tm.f1;
  report.counts = tm.counts;
  report.bleu = bleu(cand_descriptions, ref_descriptions).bleu;
  report.n_scenes = scenes.size();
  report.suggestion_exact =
      tm.counts.tp == 0
          ? 1.0
          : static_cast<double>(exact) / static_cast<double>(tm.counts.tp);
  report.ablate_graph = ablate;
  return report;
}

std::string report_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  size_t name_w = 5;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  os << std::left << std::setw(static_cast<int>(name_w)) << "Model"
     << "  Precision  Recall  F1     BLEU\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << "  "
       << std::setw(9) << r.precision << "  " << std::setw(6) << r.recall
       << "  " << std::setw(5) << r.f1 << "  " << r.bleu << "\n";
  }
  return os.str();
}

}  // namespace vlmt::metrics
