#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "conva/probe_types.hpp"

namespace conva::steer {

/// Largest accepted target probability. Anything closer to 1 is rejected
/// rather than clamped; the lower bound mirrors it.
inline constexpr double kMaxP0 = 1.0 - 1e-15;
inline constexpr double kMinP0 = 1e-15;

/// ln(p / (1 - p)). Throws Error(kPrecondition) outside (0, 1).
double sigmoid_inverse(double p);

struct SteerResult {
  double epsilon = 0.0;
  std::vector<double> steered;
  double pre_probability = 0.5;
  double post_probability = 0.5;
  bool applied = false;
};

/// Smallest epsilon >= 0 such that classify(e + epsilon * v) >= p0.
///
/// Zero when the gate is closed or e already meets p0 (strict indicator
/// P(e) < p0). Otherwise the closed form
///   (sigmoid_inverse(p0) - w.e - b) / (w.v)
/// refined by at most a few ulps so that the steered embedding, evaluated by
/// classify, actually satisfies the constraint. That makes a second
/// application return exactly zero.
double compute_epsilon(const ValueProbe& probe, const ValueVector& v,
                       std::span<const double> e, double p0, bool gate_open);

/// e_hat = e + epsilon * v. When not applied the output is a copy of e.
SteerResult steer(const ValueProbe& probe, const ValueVector& v,
                  std::span<const double> e, double p0, bool gate_open);

/// Each position independently, order preserved. A failure is rethrown as
/// Error naming the offending position.
std::vector<SteerResult> steer_layer_batch(const ValueProbe& probe, const ValueVector& v,
                                           std::span<const std::vector<double>> embeddings,
                                           double p0, bool gate_open);

/// Immutable after construction; apply() is reentrant and lock-free.
class PlanExecutor {
 public:
  /// Throws Error(kPlan) if a selected layer lacks a probe or vector.
  PlanExecutor(ControlPlan plan, std::span<const ValueProbe> probes,
               std::span<const ValueVector> vectors);

  const ControlPlan& plan() const noexcept { return plan_; }
  bool is_selected(std::size_t layer) const noexcept;
  /// Probe for a layer if one was supplied (selected or not).
  const ValueProbe* probe(std::size_t layer) const noexcept;

  /// Steered copies of the embeddings. Layers outside the plan pass through.
  /// The caller runs layers in ascending order during the forward pass.
  std::vector<std::vector<double>> apply(std::size_t layer,
                                         std::span<const std::vector<double>> embeddings,
                                         bool gate_open) const;

  /// As apply(), with per-position results. Empty for pass-through layers.
  std::vector<SteerResult> apply_detailed(std::size_t layer,
                                          std::span<const std::vector<double>> embeddings,
                                          bool gate_open) const;

 private:
  struct Entry {
    ValueProbe probe;
    ValueVector vector;
  };

  ControlPlan plan_;
  std::map<std::size_t, Entry> selected_;
  std::map<std::size_t, ValueProbe> all_probes_;
};

PlanExecutor make_plan_executor(const ControlPlan& plan, std::span<const ValueProbe> probes,
                                std::span<const ValueVector> vectors);

}  // namespace conva::steer
