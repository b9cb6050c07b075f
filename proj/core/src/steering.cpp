#include "conva/steering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conva/error.hpp"
#include "conva/probe_trainer.hpp"

namespace conva::steer {

double sigmoid_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorKind::kPrecondition, "sigmoid_inverse needs p in (0,1), got " + std::to_string(p));
  }
  return std::log(p) - std::log1p(-p);
}

namespace {

void check_dims(const ValueProbe& probe, const ValueVector& v, std::span<const double> e) {
  if (probe.w.size() != v.v.size()) {
    throw Error(ErrorKind::kDimension, "probe and value vector dimensions differ");
  }
  if (e.size() != probe.w.size()) {
    throw Error(ErrorKind::kDimension, "embedding has length " + std::to_string(e.size()) +
                                           ", probe expects " + std::to_string(probe.w.size()));
  }
}

void shift(std::span<const double> e, std::span<const double> v, double eps,
           std::vector<double>& out) {
  out.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = std::fma(eps, v[i], e[i]);
}

// Returns epsilon and, when applied, leaves e + epsilon * v in `steered`.
double solve(const ValueProbe& probe, const ValueVector& v, std::span<const double> e, double p0,
             bool gate_open, double pre_probability, std::vector<double>& steered) {
  if (!gate_open) return 0.0;
  if (!(p0 >= kMinP0 && p0 <= kMaxP0)) {
    throw Error(ErrorKind::kPrecondition, "p0 must lie in [1e-15, 1 - 1e-15], got " + std::to_string(p0));
  }
  for (double x : e) {
    if (!std::isfinite(x)) throw Error(ErrorKind::kNumeric, "embedding contains non-finite values");
  }
  if (pre_probability >= p0) return 0.0;

  double wv = 0.0;
  for (std::size_t i = 0; i < v.v.size(); ++i) wv += probe.w[i] * v.v[i];
  if (!(wv > 0.0) || !std::isfinite(wv)) {
    throw Error(ErrorKind::kInvariant,
                "inconsistent probe/vector pair: w.v = " + std::to_string(wv) + " must be positive");
  }

  const double target = sigmoid_inverse(p0);
  const double raw = (target - probe::logit(probe, e)) / wv;
  if (!std::isfinite(raw)) throw Error(ErrorKind::kNumeric, "non-finite epsilon");

  // The closed form is exact in real arithmetic; in floating point the
  // steered logit can land a little short. Nudge upward until classify
  // agrees, starting from the observed shortfall.
  double eps = std::max(raw, 0.0);
  shift(e, v.v, eps, steered);
  if (probe::classify(probe, steered) >= p0 && eps > 0.0) return eps;
  const double shortfall = (target - probe::logit(probe, steered)) / wv;
  double step = std::max({std::isfinite(shortfall) ? shortfall : 0.0,
                          eps * std::numeric_limits<double>::epsilon(),
                          std::numeric_limits<double>::min()});
  for (int i = 0; i < 2200; ++i) {
    const double candidate = eps + step;
    shift(e, v.v, candidate, steered);
    if (probe::classify(probe, steered) >= p0) return candidate;
    step *= 2.0;
    if (!std::isfinite(step)) break;
  }
  throw Error(ErrorKind::kNumeric, "could not satisfy the probability constraint");
}

}  // namespace

double compute_epsilon(const ValueProbe& probe, const ValueVector& v, std::span<const double> e,
                       double p0, bool gate_open) {
  check_dims(probe, v, e);
  if (!gate_open) return 0.0;
  std::vector<double> scratch;
  return solve(probe, v, e, p0, gate_open, probe::classify(probe, e), scratch);
}

SteerResult steer(const ValueProbe& probe, const ValueVector& v, std::span<const double> e,
                  double p0, bool gate_open) {
  check_dims(probe, v, e);
  SteerResult result;
  result.pre_probability = probe::classify(probe, e);
  result.epsilon = solve(probe, v, e, p0, gate_open, result.pre_probability, result.steered);
  result.applied = result.epsilon != 0.0;
  if (result.applied) {
    result.post_probability = probe::classify(probe, result.steered);
  } else {
    result.steered.assign(e.begin(), e.end());
    result.post_probability = result.pre_probability;
  }
  return result;
}

std::vector<SteerResult> steer_layer_batch(const ValueProbe& probe, const ValueVector& v,
                                           std::span<const std::vector<double>> embeddings,
                                           double p0, bool gate_open) {
  std::vector<SteerResult> results;
  results.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    try {
      results.push_back(steer(probe, v, embeddings[i], p0, gate_open));
    } catch (const Error& e) {
      throw Error(e.kind(), "position " + std::to_string(i) + ": " + e.what());
    }
  }
  return results;
}

PlanExecutor::PlanExecutor(ControlPlan plan, std::span<const ValueProbe> probes,
                           std::span<const ValueVector> vectors)
    : plan_(std::move(plan)) {
  if (!(plan_.p0 > 0.0 && plan_.p0 < 1.0)) {
    throw Error(ErrorKind::kPlan, "plan p0 must lie in (0,1)");
  }
  for (const auto& p : probes) {
    if (!all_probes_.emplace(p.layer, p).second) {
      throw Error(ErrorKind::kPlan, "duplicate probe for layer " + std::to_string(p.layer));
    }
  }
  std::map<std::size_t, const ValueVector*> by_layer;
  for (const auto& v : vectors) {
    if (!by_layer.emplace(v.layer, &v).second) {
      throw Error(ErrorKind::kPlan, "duplicate value vector for layer " + std::to_string(v.layer));
    }
  }
  for (auto layer : plan_.selected_layers) {
    const auto p = all_probes_.find(layer);
    if (p == all_probes_.end()) {
      throw Error(ErrorKind::kPlan, "plan selects layer " + std::to_string(layer) +
                                        " but no probe was supplied for it");
    }
    const auto v = by_layer.find(layer);
    if (v == by_layer.end()) {
      throw Error(ErrorKind::kPlan, "plan selects layer " + std::to_string(layer) +
                                        " but no value vector was supplied for it");
    }
    if (v->second->v.size() != p->second.w.size()) {
      throw Error(ErrorKind::kPlan, "probe/vector dimension mismatch at layer " +
                                        std::to_string(layer));
    }
    selected_.emplace(layer, Entry{p->second, *v->second});
  }
}

bool PlanExecutor::is_selected(std::size_t layer) const noexcept {
  return selected_.contains(layer);
}

const ValueProbe* PlanExecutor::probe(std::size_t layer) const noexcept {
  const auto it = all_probes_.find(layer);
  return it == all_probes_.end() ? nullptr : &it->second;
}

std::vector<SteerResult> PlanExecutor::apply_detailed(
    std::size_t layer, std::span<const std::vector<double>> embeddings, bool gate_open) const {
  const auto it = selected_.find(layer);
  if (it == selected_.end()) return {};
  return steer_layer_batch(it->second.probe, it->second.vector, embeddings, plan_.p0, gate_open);
}

std::vector<std::vector<double>> PlanExecutor::apply(
    std::size_t layer, std::span<const std::vector<double>> embeddings, bool gate_open) const {
  if (!is_selected(layer)) return {embeddings.begin(), embeddings.end()};
  auto results = apply_detailed(layer, embeddings, gate_open);
  std::vector<std::vector<double>> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(r.steered));
  return out;
}

PlanExecutor make_plan_executor(const ControlPlan& plan, std::span<const ValueProbe> probes,
                                std::span<const ValueVector> vectors) {
  return PlanExecutor(plan, probes, vectors);
}

}  // namespace conva::steer
