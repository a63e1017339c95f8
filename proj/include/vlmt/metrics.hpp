#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlmt/datasynth.hpp"
#include "vlmt/model.hpp"
#include "vlmt/relgraph.hpp"

namespace vlmt::metrics {

/// One scene's proactive-trigger outcome: whether a suggestion was expected,
/// whether the generated sequence fired one, and its tokens if so.
struct TriggerOutcome {
  std::string scene_id;
  bool expected = false;
  bool fired = false;
  std::vector<int32_t> suggestion_tokens;  // empty iff not fired
};

struct TriggerCounts {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct TriggerMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  TriggerCounts counts;
};

/// Precision/recall/F1 of trigger firing. A zero denominator yields 1.0 when
/// TP=FP=FN=0 (nothing expected, nothing fired) and 0.0 otherwise.
TriggerMetrics trigger_metrics(const std::vector<TriggerOutcome>& outcomes);

/// Harmonic mean, 0 when both inputs are 0.
double f1_score(double precision, double recall);

struct BleuReport {
  double bleu = 0.0;
  double brevity_penalty = 1.0;
  std::array<double, 4> precisions{};  // raw clipped precisions, no smoothing
  std::array<size_t, 4> matches{};
  std::array<size_t, 4> totals{};
  size_t cand_len = 0;
  size_t ref_len = 0;
};

/// Corpus-level BLEU-4: geometric mean of clipped modified n-gram precisions
/// over corpus totals, times the brevity penalty exp(min(0, 1-r/c)). With
/// `smooth`, orders with zero matches use add-one smoothing inside the mean;
/// the reported precisions stay raw either way.
BleuReport bleu(const std::vector<std::vector<int32_t>>& candidates,
                const std::vector<std::vector<std::vector<int32_t>>>& references,
                size_t max_n = 4, bool smooth = true);

/// Single-reference convenience form (this corpus has one target per scene).
BleuReport bleu(const std::vector<std::vector<int32_t>>& candidates,
                const std::vector<std::vector<int32_t>>& references,
                size_t max_n = 4, bool smooth = true);

/// Token sequence split at the suggestion marker, with PAD/BOS/EOS dropped.
struct SuggestSplit {
  std::vector<int32_t> description;
  std::vector<int32_t> suggestion;
  bool fired = false;
};
SuggestSplit split_at_suggest(const std::vector<int32_t>& tokens);

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double bleu = 0.0;
  TriggerCounts counts;
  size_t n_scenes = 0;
  double suggestion_exact = 1.0;  // exact-match rate of fired+expected texts
  bool ablate_graph = false;
  std::string split;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
};

/// Greedy-generates every scene, scores trigger firing against the gold
/// labels and description BLEU against the reference descriptions.
EvalReport evaluate(const ParamStore<float>& params,
                    const model::ModelConfig& config,
                    const std::vector<frontend::Scene>& scenes,
                    const frontend::Vocabulary& vocab,
                    const relgraph::RelationMatrix& graph, bool ablate);

/// Text table in the published layout: Precision | Recall | F1 | BLEU.
std::string report_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace vlmt::metrics
