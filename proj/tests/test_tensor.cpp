#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "vlmt/gradcheck.hpp"
#include "vlmt/params.hpp"
#include "vlmt/tensor.hpp"

using namespace vlmt;

namespace {

template <typename T>
Tensor<T> make(Shape shape, std::vector<T> values) {
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
void check_close(const std::vector<T>& got, const std::vector<double>& want,
                 double tol) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(static_cast<double>(got[i]) - want[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("matmul identity, hand case, annihilator") {
  auto x = make<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto eye = make<double>({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(eye, x).values() == x.values());

  auto a = make<double>({2, 2}, {1, 2, 3, 4});
  auto ones21 = make<double>({2, 1}, {1, 1});
  auto prod = matmul(a, ones21);
  check_close(prod.values(), {3.0, 7.0}, 0.0);

  auto z = matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::ones({3, 2}));
  check_close(z.values(), {0, 0, 0, 0}, 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor<double>::ones({2, 3});
  auto b = Tensor<double>::ones({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("softmax trivial, stability and frozen scalar case") {
  auto u = softmax(make<double>({3}, {0, 0, 0}), 0);
  check_close(u.values(), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-12);

  auto s = softmax(make<double>({2}, {1000, 0}), 0);
  CHECK(s.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.values()[1] == doctest::Approx(0.0).epsilon(1e-9));

  // exp(1)/Z, exp(2)/Z, exp(3)/Z with Z = e + e^2 + e^3
  auto p = softmax(make<double>({3}, {1, 2, 3}), 0);
  check_close(p.values(), {0.09003057, 0.24472847, 0.66524096}, 1e-5);
}

TEST_CASE("softmax rejects bad axis") {
  CHECK_THROWS_AS(softmax(Tensor<double>::ones({2, 3}), 2), DimensionError);
}

TEST_CASE("softmax slices sum to one for random shapes up to 4 axes") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    size_t rank = 1 + rng.index(4);
    Shape shape;
    for (size_t i = 0; i < rank; ++i) shape.push_back(1 + rng.index(5));
    auto x = Tensor<float>::randn(shape, rng, 3.0);
    size_t axis = rng.index(rank);
    auto y = softmax(x, axis);
    size_t outer = 1, inner = 1, n = shape[axis];
    for (size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (size_t i = axis + 1; i < rank; ++i) inner *= shape[i];
    for (size_t o = 0; o < outer; ++o) {
      for (size_t in = 0; in < inner; ++in) {
        double total = 0.0;
        for (size_t j = 0; j < n; ++j) {
          total += y.values()[o * n * inner + j * inner + in];
        }
        CHECK(std::abs(total - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("layer_norm constant slice, two-point slice, zero gain") {
  auto gain = Tensor<double>::ones({4});
  auto bias = Tensor<double>::zeros({4});
  auto c = layer_norm(make<double>({1, 4}, {5, 5, 5, 5}), gain, bias, 1e-5);
  check_close(c.values(), {0, 0, 0, 0}, 1e-9);

  auto two = layer_norm(make<double>({1, 2}, {1, 3}), Tensor<double>::ones({2}),
                        Tensor<double>::zeros({2}), 1e-12);
  check_close(two.values(), {-1.0, 1.0}, 1e-5);

  auto b2 = make<double>({2}, {7, -2});
  auto broadcast = layer_norm(make<double>({2, 2}, {0.3, 9, -4, 2}),
                              Tensor<double>::zeros({2}), b2, 1e-5);
  check_close(broadcast.values(), {7, -2, 7, -2}, 1e-12);
}

TEST_CASE("cross_entropy uniform, frozen margin case, limit") {
  auto uniform = cross_entropy(Tensor<double>::zeros({3, 7}), {0, 3, 6});
  CHECK(uniform.value() == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  // -log softmax([10,-10])[0] = log1p(exp(-20))
  auto two = cross_entropy(make<double>({1, 2}, {10, -10}), {0});
  CHECK(two.value() == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(two.value() > 0.0);

  double prev = 1.0;
  for (double margin : {5.0, 10.0, 20.0}) {
    auto ce = cross_entropy(make<double>({1, 2}, {margin, 0.0}), {0});
    CHECK(ce.value() < prev);
    prev = ce.value();
  }
  CHECK(prev < 1e-8);

  CHECK_THROWS_AS(cross_entropy(Tensor<double>::zeros({2, 4}), {0, 4}),
                  IndexError);
}

TEST_CASE("backward: sum, square, reuse accumulation") {
  {
    Tape<double> tape;
    auto x = tape.leaf({2, 2}, {1, 2, 3, 4});
    tape.backward(sum(x));
    check_close(tape.grad(x), {1, 1, 1, 1}, 0.0);
  }
  {
    Tape<double> tape;
    auto x = tape.leaf({3}, {1.5, -2, 4});
    tape.backward(sum(mul(x, x)));
    check_close(tape.grad(x), {3.0, -4.0, 8.0}, 1e-12);
  }
  {
    Tape<double> tape;
    auto y = tape.leaf({2}, {5, 6});
    tape.backward(add(sum(y), sum(y)));
    check_close(tape.grad(y), {2, 2}, 0.0);
  }
}

TEST_CASE("backward contract violations") {
  Tape<double> tape;
  auto x = tape.leaf({2}, {1, 2});
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  auto s = sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ContractError);

  Tape<double> other;
  auto y = other.leaf({2}, {1, 2});
  CHECK_THROWS_AS(add(x, y), ContractError);
}

namespace {

/// Central-difference check of one op output w.r.t. one leaf input.
template <typename BuildFn>
void check_input_gradient(Shape shape, std::vector<double> x0, BuildFn build,
                          double tol = 1e-5) {
  Tape<double> tape;
  auto x = tape.leaf(shape, x0);
  Tensor<double> loss = build(x);
  tape.backward(loss);
  std::vector<double> autodiff = tape.grad(x);
  auto f = [&](const std::vector<double>& v) {
    Tape<double> t2;
    auto xv = t2.leaf(shape, v);
    return build(xv).value();
  };
  for (size_t i = 0; i < x0.size(); ++i) {
    double fd = oracle::central_diff(f, x0, i, 1e-6);
    double denom = std::max({std::abs(fd), std::abs(autodiff[i]), 1e-8});
    CHECK(std::abs(fd - autodiff[i]) / denom <= tol);
  }
}

}  // namespace

TEST_CASE("backward of matmul, softmax, layer_norm match central differences") {
  Rng rng(7);
  std::vector<double> a0, b0;
  for (int i = 0; i < 6; ++i) a0.push_back(rng.normal());
  for (int i = 0; i < 12; ++i) b0.push_back(rng.normal());

  check_input_gradient({2, 3}, a0, [&](const Tensor<double>& x) {
    auto b = Tensor<double>(Shape{3, 4}, b0);
    // weigh the entries unevenly so the gradient is not uniform
    auto w = Tensor<double>(Shape{2, 4}, {1, -2, 0.5, 3, -1, 2, 0.25, -0.75});
    return sum(mul(matmul(x, b), w));
  });

  check_input_gradient({3, 4}, b0, [&](const Tensor<double>& x) {
    auto a = Tensor<double>(Shape{2, 3}, a0);
    auto w = Tensor<double>(Shape{2, 4}, {1, -2, 0.5, 3, -1, 2, 0.25, -0.75});
    return sum(mul(matmul(a, x), w));
  });

  std::vector<double> s0;
  for (int i = 0; i < 8; ++i) s0.push_back(rng.normal());
  check_input_gradient({2, 4}, s0, [&](const Tensor<double>& x) {
    auto w = Tensor<double>(Shape{2, 4}, {2, -1, 0.5, 1, -0.5, 1.5, 2.5, -2});
    return sum(mul(softmax(x, 1), w));
  });

  check_input_gradient({2, 4}, s0, [&](const Tensor<double>& x) {
    auto g = Tensor<double>(Shape{4}, {1.2, 0.8, -0.5, 2.0});
    auto b = Tensor<double>(Shape{4}, {0.1, -0.2, 0.3, 0.0});
    auto w = Tensor<double>(Shape{2, 4}, {2, -1, 0.5, 1, -0.5, 1.5, 2.5, -2});
    return sum(mul(layer_norm(x, g, b, 1e-5), w));
  });

  check_input_gradient({2, 5}, {0.5, -1, 2, 0.1, -0.4, 1, 0.3, -2, 0.7, 0.2},
                       [&](const Tensor<double>& x) {
                         return cross_entropy(x, {3, 0});
                       });
}

TEST_CASE("composite graph gradient check covers the remaining ops") {
  Rng rng(99);
  ParamStore<double> params;
  params.add("a", Tensor<double>::randn({3, 4}, rng));
  params.add("w", Tensor<double>::randn({4, 4}, rng, 0.5));
  params.add("bias", Tensor<double>::randn({4}, rng, 0.2));
  params.add("gain", Tensor<double>::randn({4}, rng, 0.3));
  params.add("table", Tensor<double>::randn({5, 4}, rng));

  // masked softmax over a causal-ish pattern plus gather/concat/slice paths
  std::vector<uint8_t> mask = {1, 0, 0, 1, 1, 0, 1, 1, 1};
  ScalarFn f = [mask](Tape<double>&, const BoundParams<double>& p) {
    auto h = relu(add(matmul(p.at("a"), p.at("w")), p.at("bias")));
    h = layer_norm(h, p.at("gain"), p.at("bias"), 1e-5);
    auto picked = gather_rows(p.at("table"), {4, 0, 2});
    auto scores = matmul(h, transpose(picked));
    auto attn = masked_softmax(scores, mask);
    auto mixed = matmul(attn, picked);
    auto both = concat_cols<double>({mixed, h});
    auto top = slice_rows(concat_rows<double>({both, scale(both, -0.5)}), 1, 4);
    auto logits = slice_cols(top, 2, 7);
    return add(cross_entropy(logits, {0, 3, 2}),
               scale(mean(sub(mixed, h)), 0.25));
  };
  GradCheckOptions opts;
  opts.min_coords = 60;
  GradCheckReport report = grad_check(f, params, opts);
  INFO(report.summary());
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("masked softmax: fully masked row is zero, not NaN") {
  auto x = make<double>({2, 3}, {5, 1, -2, 3, 3, 3});
  std::vector<uint8_t> mask = {0, 0, 0, 1, 1, 0};
  auto y = masked_softmax(x, mask);
  check_close(y.values(), {0, 0, 0, 0.5, 0.5, 0}, 1e-12);

  Tape<double> tape;
  auto xl = tape.leaf({2, 3}, {5.0, 1, -2, 3, 3, 3});
  tape.backward(sum(masked_softmax(xl, mask)));
  auto g = tape.grad(xl);
  for (size_t i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("ops are deterministic and finite in the documented range") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Shape shape{1 + rng.index(4), 1 + rng.index(6)};
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1e4, 1e4));
    auto t = Tensor<float>(shape, v);
    auto s1 = softmax(t, 1);
    auto s2 = softmax(t, 1);
    CHECK(std::memcmp(s1.values().data(), s2.values().data(),
                      s1.numel() * sizeof(float)) == 0);
    auto g = Tensor<float>::ones({shape[1]});
    auto b = Tensor<float>::zeros({shape[1]});
    auto ln = layer_norm(t, g, b, static_cast<float>(1e-5));
    for (float x : ln.values()) CHECK(std::isfinite(x));
    for (float x : s1.values()) CHECK(std::isfinite(x));
  }
}

TEST_CASE("non-finite op outputs raise NumericError naming the op") {
  auto big = Tensor<double>::full({1, 2}, 1e308);
  try {
    matmul(big, Tensor<double>::full({2, 2}, 1e308));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("bias broadcast add matches per-element loop and routes gradient") {
  Tape<double> tape;
  auto x = tape.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = tape.leaf({3}, {10, 20, 30});
  auto y = add(x, b);
  check_close(y.values(), {11, 22, 33, 14, 25, 36}, 0.0);
  tape.backward(sum(y));
  check_close(tape.grad(b), {2, 2, 2}, 0.0);

  CHECK_THROWS_AS(add(Tensor<double>::ones({2, 3}), Tensor<double>::ones({2})),
                  DimensionError);
}

TEST_CASE("grad_check analytic cases") {
  ParamStore<double> params;
  params.add("theta", Tensor<double>(Shape{1}, {3.0}));
  ScalarFn square = [](Tape<double>&, const BoundParams<double>& p) {
    auto t = p.at("theta");
    return sum(mul(t, t));
  };
  GradCheckOptions opts;
  opts.min_coords = 1;
  opts.coords_per_tensor = 1;
  GradCheckReport r = grad_check(square, params, opts);
  CHECK(r.pass);
  REQUIRE(r.worst.size() == 1);
  CHECK(r.worst[0].autodiff == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(r.worst[0].central == doctest::Approx(6.0).epsilon(1e-9));

  ScalarFn constant = [](Tape<double>& tape, const BoundParams<double>&) {
    return tape.leaf(Shape{}, {42.0});
  };
  CHECK(grad_check(constant, params, opts).pass);

  GradCheckOptions bad;
  bad.h = 1e-2;
  CHECK_THROWS_AS(grad_check(square, params, bad), ContractError);
}

TEST_CASE("grad_check flags a corrupted backward") {
  ParamStore<double> params;
  Rng rng(5);
  params.add("a", Tensor<double>::randn({2, 2}, rng));
  params.add("b", Tensor<double>::randn({2, 2}, rng));
  ScalarFn f = [](Tape<double>&, const BoundParams<double>& p) {
    return sum(matmul(p.at("a"), p.at("b")));
  };
  GradCheckOptions opts;
  opts.min_coords = 8;
  CHECK(grad_check(f, params, opts).pass);
  testhook::corrupt_matmul_backward = true;
  GradCheckReport bad = grad_check(f, params, opts);
  testhook::corrupt_matmul_backward = false;
  CHECK_FALSE(bad.pass);
}

TEST_CASE("dropout scales survivors and is exact at rate zero") {
  Rng rng(11);
  auto x = Tensor<double>::ones({1000});
  Rng drop_rng(42);
  auto y = dropout(x, 0.25, drop_rng);
  size_t kept = 0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 600);
  CHECK(kept < 900);
  auto same = dropout(x, 0.0, rng);
  CHECK(same.values() == x.values());
}
