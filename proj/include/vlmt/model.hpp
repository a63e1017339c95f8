#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlmt/frontend.hpp"
#include "vlmt/params.hpp"
#include "vlmt/relgraph.hpp"
#include "vlmt/tensor.hpp"

namespace vlmt::model {

constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
  size_t d_model = 64;
  size_t n_heads = 4;
  size_t n_coattn_layers = 2;
  size_t n_decoder_layers = 2;
  size_t d_ff = 128;
  size_t d_v = 512;
  size_t d_r = 16;
  size_t vocab_size = 0;   // set from the corpus
  size_t n_classes = 0;    // set from the corpus
  size_t max_len = 32;
  double dropout = 0.1;
  double jitter_sigma = 0.05;
  bool ablate_graph = false;          // replace the relation token
  bool coattn_self_attention = false; // optional intra-modal sublayer
  bool train_prototypes = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

/// Expected parameter tensors for a config, in creation order.
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig&);

/// Fresh parameters: Xavier-normal matrices, zero biases, unit layer-norm
/// gains, unit-variance prototype and token embeddings.
template <typename T>
ParamStore<T> init_params(const ModelConfig& config, uint64_t seed);

/// Collects attention-row statistics when passed to a forward; used by
/// normalization checks.
struct AttnProbe {
  struct Row {
    size_t unmasked;
    double row_sum;
  };
  std::vector<Row> rows;
};

/// Dropout context for training passes; evaluation passes use nullptr.
struct DropoutCtx {
  Rng rng;
  double rate;
};

/// One scene turned into model-ready buffers. Region noise is derived from
/// the scene id, so preparation is pure.
template <typename T>
struct SceneInputs {
  std::string scene_id;
  std::vector<int32_t> class_ids;      // one entry per region
  Tensor<T> region_noise;              // [R, d_v]
  Tensor<T> region_pos;                // [R, d_v]
  std::vector<int32_t> enc_tokens;     // instruction, BOS..EOS
  std::vector<int32_t> target_tokens;  // reference output, BOS..EOS
  bool expects_trigger = false;
};

template <typename T>
SceneInputs<T> prepare_scene(const frontend::Scene& scene,
                             const frontend::Vocabulary& vocab,
                             const ModelConfig& config);

/// Fused encoder output: visual-stream rows (relation token first, then one
/// row per region) followed by text-stream rows.
template <typename T>
struct FusedContext {
  Tensor<T> seq;          // [(R+1) + n_text, d_model]
  size_t visual_len = 0;  // R + 1
};

/// Scaled dot-product multi-head attention. Query/key/value/output
/// projections are read from `q_prefix` (wq/bq/wo/bo) and `kv_prefix`
/// (wk/bk/wv/bv); the two prefixes differ only in the co-attention layers,
/// where each stream's keys and values come from the other stream's block.
/// mask, when given, is a row-major [n_q, n_kv] keep-mask; fully masked
/// query rows produce zero output.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                               const BoundParams<T>& params,
                               const std::string& q_prefix,
                               const std::string& kv_prefix, size_t n_heads,
                               const std::vector<uint8_t>* mask,
                               AttnProbe* probe);

/// Single-prefix convenience overload (self- and cross-attention blocks).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                               const BoundParams<T>& params,
                               const std::string& prefix, size_t n_heads,
                               const std::vector<uint8_t>* mask,
                               AttnProbe* probe);

/// One co-attention layer: each stream cross-attends the other (both
/// directions computed from the same layer inputs), then per-stream
/// feed-forward; add&norm around both sublayers.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> coattention_layer(
    const Tensor<T>& visual, const Tensor<T>& text,
    const BoundParams<T>& params, const std::string& prefix,
    const ModelConfig& config, DropoutCtx* dropout, AttnProbe* probe);

/// Two-stream encoder. The visual stream is [relation token] ++ projected
/// region features (+ projected 2D position); the text stream is token
/// embedding + sinusoidal position. With ablate_graph the relation token is
/// a learned constant and r_emb is ignored.
template <typename T>
FusedContext<T> encode(const SceneInputs<T>& inputs, const Tensor<T>& r_emb,
                       const BoundParams<T>& params, const ModelConfig& config,
                       DropoutCtx* dropout = nullptr,
                       AttnProbe* probe = nullptr);

/// Teacher-forced decoder logits over the whole prefix: causal self-attention
/// plus cross-attention into the fused context, then the output projection.
/// Returns [|prefix|, vocab].
template <typename T>
Tensor<T> decoder_logits(const std::vector<int32_t>& prefix,
                         const FusedContext<T>& ctx,
                         const BoundParams<T>& params,
                         const ModelConfig& config,
                         DropoutCtx* dropout = nullptr,
                         AttnProbe* probe = nullptr);

/// Next-token distribution given the prefix: softmax of the last logit row.
template <typename T>
std::vector<T> decode_step(const std::vector<int32_t>& prefix,
                           const FusedContext<T>& ctx,
                           const BoundParams<T>& params,
                           const ModelConfig& config);

/// Greedy decoding from BOS until EOS or max_len tokens (BOS included in the
/// budget); argmax ties break toward the lowest token id.
template <typename T>
std::vector<int32_t> generate(const FusedContext<T>& ctx,
                              const BoundParams<T>& params,
                              const ModelConfig& config, size_t max_len);

/// Sum over positions of log p(target[i] | target[<i], ctx). target must be
/// BOS-wrapped; equals -(len-1) * cross_entropy on the same pair.
template <typename T>
T sequence_log_prob(const std::vector<int32_t>& target,
                    const FusedContext<T>& ctx, const BoundParams<T>& params,
                    const ModelConfig& config);

/// Relation embedding for a graph under bound parameters ([1, d_r] row).
template <typename T>
Tensor<T> relation_embedding(const relgraph::RelationMatrix& graph,
                             const BoundParams<T>& params);

/// Argmax with ties broken toward the lowest index.
template <typename T>
size_t argmax_lowest(const std::vector<T>& v);

}  // namespace vlmt::model
