#include "vlmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace vlmt {

namespace {

double eval_at(const ScalarFn& f, const ParamStore<double>& params) {
  Tape<double> tape;
  BoundParams<double> bound = bind(tape, params);
  Tensor<double> y = f(tape, bound);
  return y.value();
}

ParamStore<double> with_coord(const ParamStore<double>& params,
                              const std::string& name, size_t index,
                              double delta) {
  ParamStore<double> out;
  for (const auto& n : params.names()) {
    const Tensor<double>& t = params.at(n);
    if (n == name) {
      std::vector<double> v = t.values();
      v[index] += delta;
      out.add(n, Tensor<double>(t.shape(), std::move(v)));
    } else {
      out.add(n, t);
    }
  }
  return out;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << ": max relative error " << max_rel_err
     << " over " << n_coords << " coordinates";
  if (!worst.empty()) {
    os << "; worst:";
    for (const auto& e : worst) {
      os << " " << e.tensor << "[" << e.index << "]="
         << (e.finite ? std::to_string(e.rel_err) : std::string("non-finite"));
    }
  }
  return os.str();
}

GradCheckReport grad_check(const ScalarFn& f, const ParamStore<double>& params,
                           const GradCheckOptions& opts) {
  if (opts.h < 1e-6 || opts.h > 1e-4) {
    throw ContractError("grad_check: h must be in [1e-6, 1e-4]");
  }
  if (params.names().empty()) {
    throw ContractError("grad_check: empty parameter set");
  }

  // Reverse-mode gradients in one pass.
  Tape<double> tape;
  BoundParams<double> bound = bind(tape, params);
  Tensor<double> loss = f(tape, bound);
  tape.backward(loss);

  // Sample coordinates: a fixed quota per tensor, then round-robin extras
  // until min_coords is reached (or every coordinate is taken).
  Rng rng(opts.seed);
  std::vector<std::pair<std::string, size_t>> coords;
  std::vector<std::set<size_t>> taken(params.names().size());
  size_t total_available = 0;
  for (const auto& name : params.names()) total_available += params.at(name).numel();
  size_t quota = opts.coords_per_tensor;
  while (true) {
    for (size_t ti = 0; ti < params.names().size(); ++ti) {
      const std::string& name = params.names()[ti];
      size_t n = params.at(name).numel();
      while (taken[ti].size() < std::min(quota, n)) {
        size_t idx = rng.index(n);
        if (taken[ti].insert(idx).second) coords.emplace_back(name, idx);
      }
    }
    if (coords.size() >= opts.min_coords || coords.size() >= total_available) {
      break;
    }
    ++quota;
  }

  GradCheckReport report;
  report.n_coords = coords.size();
  std::vector<GradCheckEntry> entries;
  entries.reserve(coords.size());
  bool any_bad = false;
  for (const auto& [name, idx] : coords) {
    GradCheckEntry e;
    e.tensor = name;
    e.index = idx;
    e.autodiff = tape.grad(bound.at(name))[idx];
    double fp, fm;
    try {
      fp = eval_at(f, with_coord(params, name, idx, opts.h));
      fm = eval_at(f, with_coord(params, name, idx, -opts.h));
    } catch (const NumericError&) {
      e.finite = false;
      e.rel_err = std::numeric_limits<double>::infinity();
      any_bad = true;
      entries.push_back(e);
      continue;
    }
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      e.finite = false;
      e.rel_err = std::numeric_limits<double>::infinity();
      any_bad = true;
      entries.push_back(e);
      continue;
    }
    e.central = (fp - fm) / (2.0 * opts.h);
    double denom =
        std::max({std::abs(e.autodiff), std::abs(e.central), opts.floor});
    e.rel_err = std::abs(e.autodiff - e.central) / denom;
    report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
    entries.push_back(e);
  }
  report.pass = !any_bad && report.max_rel_err <= opts.tol;
  std::sort(entries.begin(), entries.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) {
              return a.rel_err > b.rel_err;
            });
  size_t keep = std::min(opts.report_worst, entries.size());
  report.worst.assign(entries.begin(), entries.begin() + keep);
  return report;
}

}  // namespace vlmt
