#include "vlmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vlmt/checkpoint.hpp"

namespace vlmt::trainer {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("train config: lr must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("train config: betas must be in (0,1)");
  }
  if (!(eps > 0.0)) throw ContractError("train config: eps must be > 0");
  if (!(clip_norm > 0.0)) {
    throw ContractError("train config: clip_norm must be > 0");
  }
  if (batch_size == 0) throw ContractError("train config: batch_size == 0");
  if (max_steps == 0) throw ContractError("train config: max_steps == 0");
  if (eval_every == 0) throw ContractError("train config: eval_every == 0");
}

json TrainConfig::to_json() const {
  return json{{"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"eps", eps},
              {"clip_norm", clip_norm},
              {"batch_size", batch_size},
              {"max_steps", max_steps},
              {"eval_every", eval_every},
              {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  try {
    c.lr = doc.at("lr").get<double>();
    c.beta1 = doc.at("beta1").get<double>();
    c.beta2 = doc.at("beta2").get<double>();
    c.eps = doc.at("eps").get<double>();
    c.clip_norm = doc.at("clip_norm").get<double>();
    c.batch_size = doc.at("batch_size").get<size_t>();
    c.max_steps = doc.at("max_steps").get<size_t>();
    c.eval_every = doc.at("eval_every").get<size_t>();
    c.seed = doc.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  return c;
}

// --- loss -------------------------------------------------------------------

template <typename T>
Tensor<T> loss_on_batch(const std::vector<model::SceneInputs<T>>& batch,
                        const relgraph::RelationMatrix& graph,
                        const BoundParams<T>& params,
                        const model::ModelConfig& config,
                        model::DropoutCtx* dropout) {
  if (batch.empty()) throw ContractError("loss_on_batch: empty batch");
  Tensor<T> r_emb;
  if (!config.ablate_graph) {
    r_emb = model::relation_embedding(graph, params);
  }
  size_t total_positions = 0;
  std::vector<std::pair<Tensor<T>, size_t>> scene_losses;
  scene_losses.reserve(batch.size());
  for (const auto& inputs : batch) {
    if (inputs.target_tokens.size() < 2) {
      throw ContractError("loss_on_batch: degenerate target for scene " +
                          inputs.scene_id);
    }
    if (inputs.target_tokens.size() > config.max_len) {
      throw ContractError("loss_on_batch: target of scene " + inputs.scene_id +
                          " has " + std::to_string(inputs.target_tokens.size()) +
                          " tokens, max_len is " +
                          std::to_string(config.max_len));
    }
    model::FusedContext<T> ctx =
        model::encode(inputs, r_emb, params, config, dropout);
    std::vector<int32_t> dec_in(inputs.target_tokens.begin(),
                                inputs.target_tokens.end() - 1);
    std::vector<int32_t> dec_out(inputs.target_tokens.begin() + 1,
                                 inputs.target_tokens.end());
    Tensor<T> logits =
        model::decoder_logits(dec_in, ctx, params, config, dropout);
    scene_losses.emplace_back(cross_entropy(logits, dec_out), dec_out.size());
    total_positions += dec_out.size();
  }
  Tensor<T> loss;
  for (const auto& [ce, positions] : scene_losses) {
    Tensor<T> weighted = scale(
        ce, static_cast<T>(static_cast<double>(positions) /
                           static_cast<double>(total_positions)));
    loss = loss.valid() ? add(loss, weighted) : weighted;
  }
  return loss;
}

template Tensor<float> loss_on_batch(const std::vector<model::SceneInputs<float>>&,
                                     const relgraph::RelationMatrix&,
                                     const BoundParams<float>&,
                                     const model::ModelConfig&,
                                     model::DropoutCtx*);
template Tensor<double> loss_on_batch(
    const std::vector<model::SceneInputs<double>>&,
    const relgraph::RelationMatrix&, const BoundParams<double>&,
    const model::ModelConfig&, model::DropoutCtx*);

// --- optimizer ----------------------------------------------------------------

double global_grad_norm(
    const std::map<std::string, std::vector<float>>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (float x : g) sq += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(sq);
}

void adam_step(ParamStore<float>& params, AdamState& state,
               const std::map<std::string, std::vector<float>>& grads,
               const TrainConfig& config,
               const std::vector<std::string>& frozen) {
  for (const auto& [name, g] : grads) {
    for (float x : g) {
      if (!std::isfinite(x)) {
        throw NumericError("adam_step: non-finite gradient in '" + name + "'");
      }
    }
  }
  double norm = global_grad_norm(grads);
  double clip_scale =
      norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  state.step += 1;
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    if (std::find(frozen.begin(), frozen.end(), name) != frozen.end()) {
      continue;
    }
    const Tensor<float>& p = params.at(name);
    std::vector<float>& m = state.m[name];
    std::vector<float>& v = state.v[name];
    if (m.empty()) m.assign(p.numel(), 0.0f);
    if (v.empty()) v.assign(p.numel(), 0.0f);
    std::vector<float> next = p.values();
    for (size_t i = 0; i < next.size(); ++i) {
      double gi = static_cast<double>(g[i]) * clip_scale;
      double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double update =
          config.lr * (mi / bc1) / (std::sqrt(vi / bc2) + config.eps);
      next[i] = static_cast<float>(static_cast<double>(next[i]) - update);
    }
    params.set(name, Tensor<float>(p.shape(), std::move(next)));
  }
}

// --- training loop ---------------------------------------------------------------

namespace {

double eval_split_loss(const std::vector<model::SceneInputs<float>>& inputs,
                       const relgraph::RelationMatrix& graph,
                       const ParamStore<float>& params,
                       const model::ModelConfig& config) {
  if (inputs.empty()) return 0.0;
  BoundParams<float> bound = bind_constants(params);
  double weighted = 0.0;
  size_t positions = 0;
  // Scenes are scored one by one to keep memory flat on large splits.
  for (const auto& in : inputs) {
    Tensor<float> loss =
        loss_on_batch<float>({in}, graph, bound, config, nullptr);
    size_t t = in.target_tokens.size() - 1;
    weighted += static_cast<double>(loss.value()) * static_cast<double>(t);
    positions += t;
  }
  return weighted / static_cast<double>(positions);
}

}  // namespace

TrainResult train(const datasynth::Corpus& corpus,
                  const relgraph::RelationMatrix& graph,
                  const model::ModelConfig& model_config,
                  const TrainConfig& train_config, const std::string& out_dir) {
  model_config.validate();
  train_config.validate();
  if (corpus.train.empty()) throw ContractError("train: empty training split");
  if (model_config.vocab_size != corpus.vocab.size()) {
    throw ValidationError("train: config vocab_size " +
                          std::to_string(model_config.vocab_size) +
                          " != corpus vocabulary " +
                          std::to_string(corpus.vocab.size()));
  }
  if (!model_config.ablate_graph && graph.n != model_config.n_classes) {
    throw ValidationError("train: graph over " + std::to_string(graph.n) +
                          " classes, config expects " +
                          std::to_string(model_config.n_classes));
  }

  std::vector<model::SceneInputs<float>> train_inputs;
  train_inputs.reserve(corpus.train.size());
  for (const auto& s : corpus.train) {
    train_inputs.push_back(
        model::prepare_scene<float>(s, corpus.vocab, model_config));
  }
  std::vector<model::SceneInputs<float>> val_inputs;
  val_inputs.reserve(corpus.val.size());
  for (const auto& s : corpus.val) {
    val_inputs.push_back(
        model::prepare_scene<float>(s, corpus.vocab, model_config));
  }

  ParamStore<float> params =
      model::init_params<float>(model_config, train_config.seed);
  std::vector<std::string> frozen;
  if (!model_config.train_prototypes) frozen.push_back("frontend.prototypes");

  AdamState opt;
  Rng shuffle_rng(Rng::mix(train_config.seed, 0x5bf3a0));
  Rng dropout_rng(Rng::mix(train_config.seed, 0xd30b0a));

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<size_t> order(train_inputs.size());
  size_t cursor = order.size();  // forces a shuffle on first use
  auto next_batch = [&]() {
    size_t want = std::min(train_config.batch_size, train_inputs.size());
    if (cursor + want > order.size()) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.index(i)]);
      }
      cursor = 0;
    }
    std::vector<model::SceneInputs<float>> batch;
    batch.reserve(want);
    for (size_t i = 0; i < want; ++i) {
      batch.push_back(train_inputs[order[cursor++]]);
    }
    return batch;
  };

  TrainResult result{std::move(params), {}};
  for (size_t step = 1; step <= train_config.max_steps; ++step) {
    std::vector<model::SceneInputs<float>> batch = next_batch();
    Tape<float> tape;
    BoundParams<float> bound = bind(tape, result.params);
    model::DropoutCtx drop{dropout_rng.fork(step), model_config.dropout};
    model::DropoutCtx* drop_ptr = model_config.dropout > 0.0 ? &drop : nullptr;
    Tensor<float> loss =
        loss_on_batch(batch, graph, bound, model_config, drop_ptr);
    tape.backward(loss);
    std::map<std::string, std::vector<float>> grads;
    for (const auto& name : result.params.names()) {
      grads.emplace(name, tape.grad(bound.at(name)));
    }
    adam_step(result.params, opt, grads, train_config, frozen);

    TraceRow row{step, static_cast<double>(loss.value()), std::nullopt};
    if (step % train_config.eval_every == 0 || step == train_config.max_steps) {
      row.val_loss = eval_split_loss(val_inputs, graph, result.params,
                                     model_config);
      if (!out_dir.empty()) {
        std::ostringstream name;
        name << out_dir << "/ckpt_" << std::setw(6) << std::setfill('0')
             << step << ".ckpt";
        model::save_checkpoint(name.str(), model_config, result.params);
      }
    }
    result.trace.push_back(row);
  }
  if (!out_dir.empty()) {
    model::save_checkpoint(out_dir + "/model.ckpt", model_config,
                           result.params);
    write_trace_csv(out_dir + "/trace.csv", result.trace);
  }
  return result;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("trace: cannot write " + path);
  out << "step,loss,val_loss\n";
  out << std::setprecision(9);
  for (const auto& row : trace) {
    out << row.step << "," << row.loss << ",";
    if (row.val_loss) out << *row.val_loss;
    out << "\n";
  }
}

}  // namespace vlmt::trainer
