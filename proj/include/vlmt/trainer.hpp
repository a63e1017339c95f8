#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlmt/datasynth.hpp"
#include "vlmt/model.hpp"
#include "vlmt/relgraph.hpp"

namespace vlmt::trainer {

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  size_t batch_size = 16;
  size_t max_steps = 500;
  size_t eval_every = 100;
  uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// Mean cross-entropy over the teacher-forced positions of all scenes in the
/// batch, pooled by position count. The relation embedding is computed once
/// per batch from `graph` (skipped entirely under ablation).
template <typename T>
Tensor<T> loss_on_batch(const std::vector<model::SceneInputs<T>>& batch,
                        const relgraph::RelationMatrix& graph,
                        const BoundParams<T>& params,
                        const model::ModelConfig& config,
                        model::DropoutCtx* dropout = nullptr);

/// Adam accumulators and step counter. Accumulator shapes mirror the params.
struct AdamState {
  size_t step = 0;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

/// Global-norm clip followed by a bias-corrected Adam update, in place.
/// Non-finite gradients abort with the offending tensor named.
void adam_step(ParamStore<float>& params, AdamState& state,
               const std::map<std::string, std::vector<float>>& grads,
               const TrainConfig& config,
               const std::vector<std::string>& frozen = {});

/// Global L2 norm across all gradient buffers.
double global_grad_norm(const std::map<std::string, std::vector<float>>& grads);

struct TraceRow {
  size_t step = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  ParamStore<float> params;
  std::vector<TraceRow> trace;
};

/// Deterministic single-threaded training loop: shuffled full batches,
/// teacher forcing, Adam with clipping. When out_dir is non-empty, writes
/// trace.csv, periodic checkpoints and a final model.ckpt there. The graph
/// is frozen throughout; only the relation-matrix encoder weights train.
TrainResult train(const datasynth::Corpus& corpus,
                  const relgraph::RelationMatrix& graph,
                  const model::ModelConfig& model_config,
                  const TrainConfig& train_config,
                  const std::string& out_dir = "");

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace);

}  // namespace vlmt::trainer
