#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "vlmt/datasynth.hpp"
#include "vlmt/trainer.hpp"

using namespace vlmt;
using namespace vlmt::trainer;

namespace {

struct Fixture {
  datasynth::Corpus corpus;
  relgraph::RelationMatrix graph;
  model::ModelConfig config;

  explicit Fixture(size_t n_scenes = 24, uint64_t seed = 7) {
    corpus = datasynth::generate(datasynth::default_world_spec(), n_scenes,
                                 seed);
    relgraph::OccurrenceCounts counts(12);
    for (const auto& f : datasynth::build_history(corpus)) {
      relgraph::observe_frame(counts, f);
    }
    graph = relgraph::build_matrix(counts);
    config.d_model = 32;
    config.n_heads = 4;
    config.n_coattn_layers = 1;
    config.n_decoder_layers = 1;
    config.d_ff = 64;
    config.d_v = 16;
    config.d_r = 8;
    config.vocab_size = corpus.vocab.size();
    config.n_classes = 12;
    config.max_len = 32;
    config.dropout = 0.0;
  }
};

std::vector<model::SceneInputs<float>> prepare_all(const Fixture& fx,
                                                   size_t limit) {
  std::vector<model::SceneInputs<float>> out;
  for (size_t i = 0; i < std::min(limit, fx.corpus.train.size()); ++i) {
    out.push_back(model::prepare_scene<float>(fx.corpus.train[i],
                                              fx.corpus.vocab, fx.config));
  }
  return out;
}

}  // namespace

TEST_CASE("untrained batch loss starts near the uniform bound ln V") {
  Fixture fx;
  auto params = model::init_params<float>(fx.config, 3);
  auto batch = prepare_all(fx, 8);
  Tape<float> tape;
  auto bound = bind(tape, params);
  auto loss = loss_on_batch(batch, fx.graph, bound, fx.config);
  double ln_v = std::log(static_cast<double>(fx.config.vocab_size));
  CHECK(std::abs(static_cast<double>(loss.value()) - ln_v) < 0.5);
}

TEST_CASE("duplicating a scene leaves the pooled mean loss unchanged") {
  Fixture fx;
  auto params = model::init_params<float>(fx.config, 5);
  auto one = prepare_all(fx, 1);
  auto twice = one;
  twice.push_back(one[0]);
  auto bound = bind_constants(params);
  auto l1 = loss_on_batch(one, fx.graph, bound, fx.config).value();
  auto l2 = loss_on_batch(twice, fx.graph, bound, fx.config).value();
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-6));
}

TEST_CASE("batch loss is invariant to scene order") {
  Fixture fx;
  auto params = model::init_params<float>(fx.config, 5);
  auto batch = prepare_all(fx, 6);
  auto reversed = batch;
  std::reverse(reversed.begin(), reversed.end());
  auto bound = bind_constants(params);
  auto a = loss_on_batch(batch, fx.graph, bound, fx.config).value();
  auto b = loss_on_batch(reversed, fx.graph, bound, fx.config).value();
  CHECK(std::abs(a - b) <= 1e-6);
}

TEST_CASE("overlong target names the scene") {
  Fixture fx;
  fx.config.max_len = 6;
  auto params = model::init_params<float>(fx.config, 5);
  auto batch = prepare_all(fx, 1);
  auto bound = bind_constants(params);
  try {
    loss_on_batch(batch, fx.graph, bound, fx.config);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find(batch[0].scene_id) != std::string::npos);
  }
}

TEST_CASE("adam first step moves by at most lr per coordinate") {
  TrainConfig tc;
  tc.lr = 1e-3;
  ParamStore<float> params;
  params.add("w", Tensor<float>({4}, {1.0f, -2.0f, 0.5f, 3.0f}));
  AdamState state;
  std::map<std::string, std::vector<float>> grads{
      {"w", {0.2f, -0.1f, 0.0f, 0.4f}}};
  auto before = params.at("w").values();
  adam_step(params, state, grads, tc);
  auto after = params.at("w").values();
  for (size_t i = 0; i < 4; ++i) {
    double delta = static_cast<double>(after[i]) - before[i];
    CHECK(std::abs(delta) <= tc.lr * (1.0 + 1e-6));
    if (grads.at("w")[i] > 0) CHECK(delta < 0);
    if (grads.at("w")[i] < 0) CHECK(delta > 0);
    if (grads.at("w")[i] == 0.0f) CHECK(delta == 0.0);
    if (grads.at("w")[i] != 0.0f) {
      // bias-corrected first step approaches -lr * sign(g)
      CHECK(std::abs(std::abs(delta) - tc.lr) <= tc.lr * 1e-3);
    }
  }
  CHECK(state.step == 1);
}

TEST_CASE("zero gradients leave parameters untouched") {
  TrainConfig tc;
  ParamStore<float> params;
  params.add("w", Tensor<float>({3}, {1.0f, 2.0f, 3.0f}));
  AdamState state;
  std::map<std::string, std::vector<float>> grads{{"w", {0.0f, 0.0f, 0.0f}}};
  adam_step(params, state, grads, tc);
  CHECK(params.at("w").values() == std::vector<float>{1.0f, 2.0f, 3.0f});
}

TEST_CASE("scaling gradients above the clip threshold changes nothing") {
  TrainConfig tc;
  tc.clip_norm = 1.0;
  auto run = [&](float scale_factor) {
    ParamStore<float> params;
    params.add("w", Tensor<float>({2}, {1.0f, -1.0f}));
    AdamState state;
    std::map<std::string, std::vector<float>> grads{
        {"w", {3.0f * scale_factor, 4.0f * scale_factor}}};
    adam_step(params, state, grads, tc);
    return params.at("w").values();
  };
  // norm 5 >= clip already; x10 must clip back to the same direction vector
  CHECK(run(1.0f) == run(10.0f));

  // post-clip global norm respects the bound
  std::map<std::string, std::vector<float>> grads{{"a", {30.0f, 40.0f}}};
  double norm = global_grad_norm(grads);
  double clip_scale = tc.clip_norm / norm;
  std::map<std::string, std::vector<float>> clipped{
      {"a",
       {static_cast<float>(30.0 * clip_scale),
        static_cast<float>(40.0 * clip_scale)}}};
  CHECK(global_grad_norm(clipped) <= tc.clip_norm + 1e-6);
}

TEST_CASE("non-finite gradients abort naming the tensor") {
  TrainConfig tc;
  ParamStore<float> params;
  params.add("bad", Tensor<float>({2}, {1.0f, 1.0f}));
  AdamState state;
  std::map<std::string, std::vector<float>> grads{
      {"bad", {std::numeric_limits<float>::quiet_NaN(), 0.0f}}};
  try {
    adam_step(params, state, grads, tc);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("training is seed-deterministic and seed-sensitive") {
  Fixture fx(16, 13);
  TrainConfig tc;
  tc.max_steps = 8;
  tc.batch_size = 4;
  tc.eval_every = 4;
  tc.seed = 42;
  auto r1 = train(fx.corpus, fx.graph, fx.config, tc);
  auto r2 = train(fx.corpus, fx.graph, fx.config, tc);
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].loss == r2.trace[i].loss);
  }
  for (const auto& name : r1.params.names()) {
    CHECK(r1.params.at(name).values() == r2.params.at(name).values());
  }
  tc.seed = 43;
  auto r3 = train(fx.corpus, fx.graph, fx.config, tc);
  bool differs = false;
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    if (r1.trace[i].loss != r3.trace[i].loss) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("dropout training is still seed-deterministic") {
  Fixture fx(16, 13);
  fx.config.dropout = 0.1;
  TrainConfig tc;
  tc.max_steps = 4;
  tc.batch_size = 4;
  tc.seed = 9;
  auto r1 = train(fx.corpus, fx.graph, fx.config, tc);
  auto r2 = train(fx.corpus, fx.graph, fx.config, tc);
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].loss == r2.trace[i].loss);
  }
}

TEST_CASE("a tiny corpus is memorized: loss falls and windows trend down") {
  Fixture fx(10, 21);  // 8 training scenes
  TrainConfig tc;
  tc.max_steps = 150;
  tc.batch_size = 8;
  tc.eval_every = 50;
  tc.seed = 1;
  auto result = train(fx.corpus, fx.graph, fx.config, tc);
  REQUIRE(result.trace.size() == 150);
  CHECK(result.trace.back().loss < 0.5);
  // 50-step windows of the (dropout-free) trace decrease monotonically
  auto window_mean = [&](size_t begin) {
    double s = 0.0;
    for (size_t i = begin; i < begin + 50; ++i) s += result.trace[i].loss;
    return s / 50.0;
  };
  CHECK(window_mean(0) > window_mean(50));
  CHECK(window_mean(50) > window_mean(100));

  // trace file layout
  auto dir = std::filesystem::temp_directory_path() / "vlmt_trace_test";
  std::filesystem::create_directories(dir);
  write_trace_csv((dir / "trace.csv").string(), result.trace);
  std::ifstream in(dir / "trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,loss,val_loss");
  std::filesystem::remove_all(dir);
}

TEST_CASE("train writes checkpoints and a final model") {
  Fixture fx(12, 31);
  TrainConfig tc;
  tc.max_steps = 4;
  tc.batch_size = 4;
  tc.eval_every = 2;
  auto dir = std::filesystem::temp_directory_path() / "vlmt_train_out";
  std::filesystem::remove_all(dir);
  auto result = train(fx.corpus, fx.graph, fx.config, tc, dir.string());
  CHECK(std::filesystem::exists(dir / "model.ckpt"));
  CHECK(std::filesystem::exists(dir / "trace.csv"));
  CHECK(std::filesystem::exists(dir / "ckpt_000002.ckpt"));
  CHECK(std::filesystem::exists(dir / "ckpt_000004.ckpt"));
  // val loss recorded on eval steps only
  CHECK_FALSE(result.trace[0].val_loss.has_value());
  CHECK(result.trace[1].val_loss.has_value());
  std::filesystem::remove_all(dir);
}
