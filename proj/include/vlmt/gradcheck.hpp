#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vlmt/params.hpp"
#include "vlmt/tensor.hpp"

namespace vlmt {

struct GradCheckOptions {
  double h = 1e-5;       // central-difference step, must be in [1e-6, 1e-4]
  double tol = 1e-4;     // max allowed relative error
  size_t coords_per_tensor = 3;
  size_t min_coords = 200;  // raise per-tensor sampling until reached
  size_t report_worst = 10;
  uint64_t seed = 17;
  // Relative error uses max(|a|, |b|, floor) as denominator so that
  // coordinates whose true gradient sits below finite-difference noise do
  // not produce spurious failures.
  double floor = 1e-5;
};

struct GradCheckEntry {
  std::string tensor;
  size_t index = 0;
  double autodiff = 0.0;
  double central = 0.0;
  double rel_err = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  size_t n_coords = 0;
  std::vector<GradCheckEntry> worst;  // sorted, largest error first
  std::string summary() const;
};

/// Scalar function of a parameter set, evaluated either on a tape (for the
/// reverse-mode pass) or against constants (for the +/- h probes).
using ScalarFn =
    std::function<Tensor<double>(Tape<double>&, const BoundParams<double>&)>;

/// Compares reverse-mode gradients of f against central differences
/// (f(p+h)-f(p-h))/2h on a sampled subset of coordinates covering every
/// tensor in `params`. Runs at 64-bit precision only.
GradCheckReport grad_check(const ScalarFn& f, const ParamStore<double>& params,
                           const GradCheckOptions& opts = {});

}  // namespace vlmt
