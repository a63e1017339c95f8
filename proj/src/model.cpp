#include "vlmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace vlmt::model {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_ff == 0 || d_v == 0 || d_r == 0 ||
      n_coattn_layers == 0 || n_decoder_layers == 0) {
    throw ContractError("config: all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ContractError("config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (d_model % 2 != 0) {
    throw ContractError("config: d_model must be even for position encodings");
  }
  if (d_v % 4 != 0) {
    throw ContractError("config: d_v must be divisible by 4");
  }
  if (max_len < 2) throw ContractError("config: max_len must be >= 2");
  if (vocab_size <= frontend::Vocabulary::kNumReserved) {
    throw ContractError("config: vocab_size not set from a corpus");
  }
  if (n_classes == 0) throw ContractError("config: n_classes not set");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ContractError("config: dropout must be in [0,1)");
  }
  if (jitter_sigma < 0.0) throw ContractError("config: jitter_sigma < 0");
}

json ModelConfig::to_json() const {
  return json{{"d_model", d_model},
              {"n_heads", n_heads},
              {"n_coattn_layers", n_coattn_layers},
              {"n_decoder_layers", n_decoder_layers},
              {"d_ff", d_ff},
              {"d_v", d_v},
              {"d_r", d_r},
              {"vocab_size", vocab_size},
              {"n_classes", n_classes},
              {"max_len", max_len},
              {"dropout", dropout},
              {"jitter_sigma", jitter_sigma},
              {"ablate_graph", ablate_graph},
              {"coattn_self_attention", coattn_self_attention},
              {"train_prototypes", train_prototypes}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  ModelConfig c;
  try {
    c.d_model = doc.at("d_model").get<size_t>();
    c.n_heads = doc.at("n_heads").get<size_t>();
    c.n_coattn_layers = doc.at("n_coattn_layers").get<size_t>();
    c.n_decoder_layers = doc.at("n_decoder_layers").get<size_t>();
    c.d_ff = doc.at("d_ff").get<size_t>();
    c.d_v = doc.at("d_v").get<size_t>();
    c.d_r = doc.at("d_r").get<size_t>();
    c.vocab_size = doc.at("vocab_size").get<size_t>();
    c.n_classes = doc.at("n_classes").get<size_t>();
    c.max_len = doc.at("max_len").get<size_t>();
    c.dropout = doc.at("dropout").get<double>();
    c.jitter_sigma = doc.at("jitter_sigma").get<double>();
    c.ablate_graph = doc.at("ablate_graph").get<bool>();
    c.coattn_self_attention = doc.at("coattn_self_attention").get<bool>();
    c.train_prototypes = doc.at("train_prototypes").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

// --- parameters ---------------------------------------------------------------

namespace {

struct ShapeList {
  std::vector<std::pair<std::string, Shape>> items;
  void mat(const std::string& name, size_t r, size_t c) {
    items.push_back({name, Shape{r, c}});
  }
  void vec(const std::string& name, size_t n) {
    items.push_back({name, Shape{n}});
  }
  void attention(const std::string& prefix, size_t d) {
    mat(prefix + ".wq", d, d);
    vec(prefix + ".bq", d);
    mat(prefix + ".wk", d, d);
    vec(prefix + ".bk", d);
    mat(prefix + ".wv", d, d);
    vec(prefix + ".bv", d);
    mat(prefix + ".wo", d, d);
    vec(prefix + ".bo", d);
  }
  void layer_norm(const std::string& prefix, size_t d) {
    vec(prefix + ".g", d);
    vec(prefix + ".b", d);
  }
  void ffn(const std::string& prefix, size_t d, size_t ff) {
    mat(prefix + ".w1", d, ff);
    vec(prefix + ".b1", ff);
    mat(prefix + ".w2", ff, d);
    vec(prefix + ".b2", d);
  }
};

}  // namespace

std::vector<std::pair<std::string, Shape>> param_shapes(
    const ModelConfig& c) {
  ShapeList s;
  s.mat("frontend.prototypes", c.n_classes, c.d_v);
  s.mat("relenc.w", c.n_classes * c.n_classes, c.d_r);
  s.vec("relenc.b", c.d_r);
  s.mat("enc.rel_proj.w", c.d_r, c.d_model);
  s.vec("enc.rel_proj.b", c.d_model);
  s.mat("enc.vis_proj.w", c.d_v, c.d_model);
  s.vec("enc.vis_proj.b", c.d_model);
  s.mat("enc.pos_proj.w", c.d_v, c.d_model);
  s.vec("enc.pos_proj.b", c.d_model);
  s.mat("enc.ablation_token", 1, c.d_model);
  s.mat("emb.token", c.vocab_size, c.d_model);
  for (size_t i = 0; i < c.n_coattn_layers; ++i) {
    for (const char* stream : {"vis", "txt"}) {
      std::string p = "coattn" + std::to_string(i) + "." + stream;
      s.attention(p + ".attn", c.d_model);
      s.layer_norm(p + ".ln1", c.d_model);
      if (c.coattn_self_attention) {
        s.attention(p + ".self", c.d_model);
        s.layer_norm(p + ".ln_self", c.d_model);
      }
      s.ffn(p + ".ffn", c.d_model, c.d_ff);
      s.layer_norm(p + ".ln2", c.d_model);
    }
  }
  for (size_t i = 0; i < c.n_decoder_layers; ++i) {
    std::string p = "dec" + std::to_string(i);
    s.attention(p + ".self", c.d_model);
    s.layer_norm(p + ".ln1", c.d_model);
    s.attention(p + ".cross", c.d_model);
    s.layer_norm(p + ".ln2", c.d_model);
    s.ffn(p + ".ffn", c.d_model, c.d_ff);
    s.layer_norm(p + ".ln3", c.d_model);
  }
  s.mat("out.w", c.d_model, c.vocab_size);
  s.vec("out.b", c.vocab_size);
  return s.items;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(Rng::mix(seed, 0x9d0def1));
  ParamStore<T> store;
  for (const auto& [name, shape] : param_shapes(config)) {
    bool is_gain = name.size() > 2 && name.substr(name.size() - 2) == ".g" &&
                   name.find(".ln") != std::string::npos;
    bool is_bias_like =
        shape.size() == 1 && !is_gain;  // biases and layer-norm shifts
    std::vector<T> v(shape_numel(shape));
    if (is_gain) {
      std::fill(v.begin(), v.end(), T(1));
    } else if (is_bias_like) {
      std::fill(v.begin(), v.end(), T(0));
    } else if (name == "frontend.prototypes" || name == "emb.token") {
      for (auto& x : v) x = static_cast<T>(rng.normal());
    } else {
      double stddev =
          std::sqrt(2.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
    }
    store.add(name, Tensor<T>(shape, std::move(v)));
  }
  return store;
}

// --- scene preparation ----------------------------------------------------------

template <typename T>
SceneInputs<T> prepare_scene(const frontend::Scene& scene,
                             const frontend::Vocabulary& vocab,
                             const ModelConfig& config) {
  if (config.vocab_size != vocab.size()) {
    throw ValidationError("prepare_scene: config vocab_size " +
                          std::to_string(config.vocab_size) +
                          " != vocabulary size " +
                          std::to_string(vocab.size()));
  }
  SceneInputs<T> out;
  out.scene_id = scene.scene_id;
  out.expects_trigger = scene.expects_trigger;
  size_t n_regions = scene.objects.size();
  uint64_t noise_seed = frontend::scene_noise_seed(scene.scene_id);
  std::vector<T> noise(n_regions * config.d_v);
  std::vector<T> pos(n_regions * config.d_v);
  for (size_t r = 0; r < n_regions; ++r) {
    const auto& obj = scene.objects[r];
    if (obj.class_id < 0 ||
        static_cast<size_t>(obj.class_id) >= config.n_classes) {
      throw IndexError("prepare_scene: class id " +
                       std::to_string(obj.class_id) + " outside " +
                       std::to_string(config.n_classes) + " classes (scene " +
                       scene.scene_id + ")");
    }
    out.class_ids.push_back(obj.class_id);
    std::vector<T> jitter = frontend::region_jitter<T>(
        noise_seed, r, config.d_v, config.jitter_sigma);
    std::vector<double> p2d = frontend::pos2d_embedding(obj.bbox, config.d_v);
    for (size_t j = 0; j < config.d_v; ++j) {
      noise[r * config.d_v + j] = jitter[j];
      pos[r * config.d_v + j] = static_cast<T>(p2d[j]);
    }
  }
  out.region_noise = Tensor<T>(Shape{n_regions, config.d_v}, std::move(noise));
  out.region_pos = Tensor<T>(Shape{n_regions, config.d_v}, std::move(pos));
  out.enc_tokens = frontend::tokenize(scene.instruction, vocab);
  out.target_tokens = frontend::tokenize(scene.target, vocab);
  return out;
}

// --- attention ----------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, DropoutCtx* ctx) {
  if (ctx == nullptr || ctx->rate == 0.0) return x;
  return dropout(x, ctx->rate, ctx->rng);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const BoundParams<T>& p,
                 const std::string& w, const std::string& b) {
  return add(matmul(x, p.at(w)), p.at(b));
}

template <typename T>
void probe_attention(AttnProbe* probe, const Tensor<T>& attn,
                     const std::vector<uint8_t>* mask) {
  if (!probe) return;
  size_t rows = attn.rows(), cols = attn.cols();
  const auto& av = attn.values();
  for (size_t r = 0; r < rows; ++r) {
    AttnProbe::Row row{cols, 0.0};
    if (mask) {
      row.unmasked = 0;
      for (size_t c = 0; c < cols; ++c) {
        if ((*mask)[r * cols + c]) ++row.unmasked;
      }
    }
    for (size_t c = 0; c < cols; ++c) {
      row.row_sum += static_cast<double>(av[r * cols + c]);
    }
    probe->rows.push_back(row);
  }
}

}  // namespace

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                               const BoundParams<T>& params,
                               const std::string& q_prefix,
                               const std::string& kv_prefix, size_t n_heads,
                               const std::vector<uint8_t>* mask,
                               AttnProbe* probe) {
  if (q_in.ndim() != 2 || kv_in.ndim() != 2) {
    throw DimensionError("attention: streams must be rank-2");
  }
  size_t d = q_in.cols();
  if (kv_in.cols() != d) {
    throw DimensionError("attention: stream widths differ: " +
                         shape_str(q_in.shape()) + " vs " +
                         shape_str(kv_in.shape()));
  }
  if (q_in.rows() == 0 || kv_in.rows() == 0) {
    throw ContractError("attention: empty stream");
  }
  if (d % n_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(n_heads) +
                         " heads");
  }
  if (mask && mask->size() != q_in.rows() * kv_in.rows()) {
    throw DimensionError("attention: mask size " +
                         std::to_string(mask->size()) + " != " +
                         std::to_string(q_in.rows() * kv_in.rows()));
  }
  Tensor<T> q = linear(q_in, params, q_prefix + ".wq", q_prefix + ".bq");
  Tensor<T> k = linear(kv_in, params, kv_prefix + ".wk", kv_prefix + ".bk");
  Tensor<T> v = linear(kv_in, params, kv_prefix + ".wv", kv_prefix + ".bv");
  size_t dk = d / n_heads;
  T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (size_t h = 0; h < n_heads; ++h) {
    Tensor<T> qh = slice_cols(q, h * dk, (h + 1) * dk);
    Tensor<T> kh = slice_cols(k, h * dk, (h + 1) * dk);
    Tensor<T> vh = slice_cols(v, h * dk, (h + 1) * dk);
    Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    Tensor<T> attn =
        mask ? masked_softmax(scores, *mask) : softmax(scores, 1);
    probe_attention(probe, attn, mask);
    heads.push_back(matmul(attn, vh));
  }
  Tensor<T> ctx = concat_cols(heads);
  return linear(ctx, params, q_prefix + ".wo", q_prefix + ".bo");
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                               const BoundParams<T>& params,
                               const std::string& prefix, size_t n_heads,
                               const std::vector<uint8_t>* mask,
                               AttnProbe* probe) {
  return multi_head_attention(q_in, kv_in, params, prefix, prefix, n_heads,
                              mask, probe);
}

namespace {

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const BoundParams<T>& p,
                       const std::string& prefix) {
  Tensor<T> h = relu(linear(x, p, prefix + ".w1", prefix + ".b1"));
  return linear(h, p, prefix + ".w2", prefix + ".b2");
}

template <typename T>
Tensor<T> add_norm(const Tensor<T>& residual, const Tensor<T>& sublayer,
                   const BoundParams<T>& p, const std::string& ln_prefix,
                   DropoutCtx* drop) {
  return layer_norm(add(residual, maybe_dropout(sublayer, drop)),
                    p.at(ln_prefix + ".g"), p.at(ln_prefix + ".b"),
                    static_cast<T>(kLayerNormEps));
}

/// Per-stream second half of a co-attention layer (optional self-attention,
/// then feed-forward).
template <typename T>
Tensor<T> coattn_stream_tail(const Tensor<T>& x, const BoundParams<T>& p,
                             const std::string& stream_prefix,
                             const ModelConfig& cfg, DropoutCtx* drop,
                             AttnProbe* probe) {
  Tensor<T> h = x;
  if (cfg.coattn_self_attention) {
    Tensor<T> sa = multi_head_attention(h, h, p, stream_prefix + ".self",
                                        cfg.n_heads, nullptr, probe);
    h = add_norm(h, sa, p, stream_prefix + ".ln_self", drop);
  }
  Tensor<T> ff = feed_forward(h, p, stream_prefix + ".ffn");
  return add_norm(h, ff, p, stream_prefix + ".ln2", drop);
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> coattention_layer(
    const Tensor<T>& visual, const Tensor<T>& text,
    const BoundParams<T>& params, const std::string& prefix,
    const ModelConfig& config, DropoutCtx* dropout, AttnProbe* probe) {
  std::string vis = prefix + ".vis";
  std::string txt = prefix + ".txt";
  // Keys/values are exchanged: each stream's queries attend projections of
  // the other stream, computed with the other stream's k/v blocks. Both
  // directions read the same layer inputs.
  Tensor<T> v_att =
      multi_head_attention(visual, text, params, vis + ".attn", txt + ".attn",
                           config.n_heads, nullptr, probe);
  Tensor<T> t_att =
      multi_head_attention(text, visual, params, txt + ".attn", vis + ".attn",
                           config.n_heads, nullptr, probe);
  Tensor<T> v1 = add_norm(visual, v_att, params, vis + ".ln1", dropout);
  Tensor<T> t1 = add_norm(text, t_att, params, txt + ".ln1", dropout);
  Tensor<T> v2 = coattn_stream_tail(v1, params, vis, config, dropout, probe);
  Tensor<T> t2 = coattn_stream_tail(t1, params, txt, config, dropout, probe);
  return {v2, t2};
}

// --- encoder --------------------------------------------------------------------

template <typename T>
Tensor<T> relation_embedding(const relgraph::RelationMatrix& graph,
                             const BoundParams<T>& params) {
  return relgraph::encode_relations(graph, params.at("relenc.w"),
                                    params.at("relenc.b"));
}

template <typename T>
FusedContext<T> encode(const SceneInputs<T>& inputs, const Tensor<T>& r_emb,
                       const BoundParams<T>& params, const ModelConfig& config,
                       DropoutCtx* dropout, AttnProbe* probe) {
  for (int32_t id : inputs.enc_tokens) {
    if (id < 0 || static_cast<size_t>(id) >= config.vocab_size) {
      throw IndexError("encode: token id " + std::to_string(id) +
                       " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
  }
  Tensor<T> rel_token;
  if (config.ablate_graph) {
    rel_token = params.at("enc.ablation_token");
  } else {
    if (!r_emb.valid()) {
      throw ContractError("encode: relation embedding required");
    }
    rel_token = add(matmul(r_emb, params.at("enc.rel_proj.w")),
                    params.at("enc.rel_proj.b"));
  }
  Tensor<T> visual = rel_token;
  if (!inputs.class_ids.empty()) {
    Tensor<T> feats = add(
        gather_rows(params.at("frontend.prototypes"), inputs.class_ids),
        inputs.region_noise);
    Tensor<T> region_rows =
        add(linear(feats, params, "enc.vis_proj.w", "enc.vis_proj.b"),
            linear(inputs.region_pos, params, "enc.pos_proj.w",
                   "enc.pos_proj.b"));
    visual = concat_rows<T>({rel_token, region_rows});
  }
  Tensor<T> text =
      add(gather_rows(params.at("emb.token"), inputs.enc_tokens),
          frontend::pe_matrix<T>(inputs.enc_tokens.size(), config.d_model));
  for (size_t i = 0; i < config.n_coattn_layers; ++i) {
    std::tie(visual, text) =
        coattention_layer(visual, text, params, "coattn" + std::to_string(i),
                          config, dropout, probe);
  }
  FusedContext<T> out;
  out.visual_len = inputs.class_ids.size() + 1;
  out.seq = concat_rows<T>({visual, text});
  return out;
}

// --- decoder --------------------------------------------------------------------

namespace {

std::vector<uint8_t> causal_mask(size_t n) {
  std::vector<uint8_t> mask(n * n, 0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
  return mask;
}

}  // namespace

template <typename T>
Tensor<T> decoder_logits(const std::vector<int32_t>& prefix,
                         const FusedContext<T>& ctx,
                         const BoundParams<T>& params,
                         const ModelConfig& config, DropoutCtx* dropout,
                         AttnProbe* probe) {
  if (prefix.empty() || prefix.size() > config.max_len) {
    throw ContractError("decoder: prefix length " +
                        std::to_string(prefix.size()) +
                        " outside [1, max_len=" +
                        std::to_string(config.max_len) + "]");
  }
  for (int32_t id : prefix) {
    if (id < 0 || static_cast<size_t>(id) >= config.vocab_size) {
      throw IndexError("decoder: token id " + std::to_string(id) +
                       " outside vocabulary");
    }
  }
  size_t n = prefix.size();
  Tensor<T> h = add(gather_rows(params.at("emb.token"), prefix),
                    frontend::pe_matrix<T>(n, config.d_model));
  std::vector<uint8_t> mask = causal_mask(n);
  for (size_t i = 0; i < config.n_decoder_layers; ++i) {
    std::string p = "dec" + std::to_string(i);
    Tensor<T> sa = multi_head_attention(h, h, params, p + ".self",
                                        config.n_heads, &mask, probe);
    h = add_norm(h, sa, params, p + ".ln1", dropout);
    Tensor<T> ca = multi_head_attention(h, ctx.seq, params, p + ".cross",
                                        config.n_heads, nullptr, probe);
    h = add_norm(h, ca, params, p + ".ln2", dropout);
    Tensor<T> ff = feed_forward(h, params, p + ".ffn");
    h = add_norm(h, ff, params, p + ".ln3", dropout);
  }
  return linear(h, params, "out.w", "out.b");
}

template <typename T>
std::vector<T> decode_step(const std::vector<int32_t>& prefix,
                           const FusedContext<T>& ctx,
                           const BoundParams<T>& params,
                           const ModelConfig& config) {
  Tensor<T> logits = decoder_logits(prefix, ctx, params, config);
  Tensor<T> last = slice_rows(logits, prefix.size() - 1, prefix.size());
  return softmax(last, 1).values();
}

template <typename T>
size_t argmax_lowest(const std::vector<T>& v) {
  if (v.empty()) throw ContractError("argmax: empty vector");
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

template <typename T>
std::vector<int32_t> generate(const FusedContext<T>& ctx,
                              const BoundParams<T>& params,
                              const ModelConfig& config, size_t max_len) {
  std::vector<int32_t> out{frontend::Vocabulary::kBos};
  size_t budget = std::min(max_len, config.max_len);
  while (out.size() < budget) {
    std::vector<T> probs = decode_step(out, ctx, params, config);
    int32_t next = static_cast<int32_t>(argmax_lowest(probs));
    out.push_back(next);
    if (next == frontend::Vocabulary::kEos) break;
  }
  return out;
}

template <typename T>
T sequence_log_prob(const std::vector<int32_t>& target,
                    const FusedContext<T>& ctx, const BoundParams<T>& params,
                    const ModelConfig& config) {
  if (target.size() < 2 || target.front() != frontend::Vocabulary::kBos ||
      target.back() != frontend::Vocabulary::kEos) {
    throw ContractError("sequence_log_prob: target must be BOS ... EOS");
  }
  std::vector<int32_t> input(target.begin(), target.end() - 1);
  std::vector<int32_t> next(target.begin() + 1, target.end());
  Tensor<T> logits = decoder_logits(input, ctx, params, config);
  Tensor<T> ce = cross_entropy(logits, next);
  return -static_cast<T>(next.size()) * ce.value();
}

// --- explicit instantiations -------------------------------------------------------

#define VLMT_INSTANTIATE_MODEL(T)                                              \
  template ParamStore<T> init_params(const ModelConfig&, uint64_t);            \
  template SceneInputs<T> prepare_scene(const frontend::Scene&,                \
                                        const frontend::Vocabulary&,           \
                                        const ModelConfig&);                   \
  template Tensor<T> multi_head_attention(                                     \
      const Tensor<T>&, const Tensor<T>&, const BoundParams<T>&,               \
      const std::string&, const std::string&, size_t,                          \
      const std::vector<uint8_t>*, AttnProbe*);                                \
  template Tensor<T> multi_head_attention(                                     \
      const Tensor<T>&, const Tensor<T>&, const BoundParams<T>&,               \
      const std::string&, size_t, const std::vector<uint8_t>*, AttnProbe*);    \
  template std::pair<Tensor<T>, Tensor<T>> coattention_layer(                  \
      const Tensor<T>&, const Tensor<T>&, const BoundParams<T>&,               \
      const std::string&, const ModelConfig&, DropoutCtx*, AttnProbe*);        \
  template FusedContext<T> encode(const SceneInputs<T>&, const Tensor<T>&,     \
                                  const BoundParams<T>&, const ModelConfig&,   \
                                  DropoutCtx*, AttnProbe*);                    \
  template Tensor<T> decoder_logits(const std::vector<int32_t>&,               \
                                    const FusedContext<T>&,                    \
                                    const BoundParams<T>&, const ModelConfig&, \
                                    DropoutCtx*, AttnProbe*);                  \
  template std::vector<T> decode_step(const std::vector<int32_t>&,             \
                                      const FusedContext<T>&,                  \
                                      const BoundParams<T>&,                   \
                                      const ModelConfig&);                     \
  template size_t argmax_lowest(const std::vector<T>&);                        \
  template std::vector<int32_t> generate(const FusedContext<T>&,               \
                                         const BoundParams<T>&,                \
                                         const ModelConfig&, size_t);          \
  template T sequence_log_prob(const std::vector<int32_t>&,                    \
                               const FusedContext<T>&, const BoundParams<T>&,  \
                               const ModelConfig&);                            \
  template Tensor<T> relation_embedding(const relgraph::RelationMatrix&,       \
                                        const BoundParams<T>&);

VLMT_INSTANTIATE_MODEL(float)
VLMT_INSTANTIATE_MODEL(double)

}  // namespace vlmt::model
