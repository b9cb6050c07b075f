#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "conva/dataset_io.hpp"
#include "conva/probe_types.hpp"

namespace conva::probe {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t max_iterations = 10000;
  double loss_tolerance = 1e-7;
  double l2_penalty = 0.0;
  std::uint64_t rng_seed = 0;
  double test_fraction = 0.2;
  /// Worker threads for train_value; 0 picks hardware concurrency.
  std::size_t threads = 1;
};

/// Throws Error(kPrecondition) when a bound is violated.
void validate(const TrainConfig& config);

/// Borrowed view of an n x d row-major sample matrix with 0/1 labels.
/// Values are upcast to double on access.
class LabeledMatrix {
 public:
  LabeledMatrix(std::span<const float> values, std::span<const std::uint8_t> labels,
                std::size_t dim);
  LabeledMatrix(std::span<const double> values, std::span<const std::uint8_t> labels,
                std::size_t dim);

  std::size_t rows() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::uint8_t label(std::size_t i) const noexcept { return labels_[i]; }
  double at(std::size_t i, std::size_t j) const noexcept {
    return f32_.empty() ? f64_[i * dim_ + j] : static_cast<double>(f32_[i * dim_ + j]);
  }

 private:
  std::span<const float> f32_;
  std::span<const double> f64_;
  std::span<const std::uint8_t> labels_;
  std::size_t dim_;
};

/// Mean binary cross-entropy over `rows`, plus 0.5 * l2 * |w|^2.
double loss(const LabeledMatrix& data, std::span<const std::size_t> rows,
            std::span<const double> w, double b, double l2);

/// Analytic gradient of loss(); grad_w must have length dim.
void gradient(const LabeledMatrix& data, std::span<const std::size_t> rows,
              std::span<const double> w, double b, double l2,
              std::span<double> grad_w, double& grad_b);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified, seed-determined shuffle split. Each class keeps at least one
/// training row.
Split stratified_split(std::span<const std::uint8_t> labels, double test_fraction,
                       std::uint64_t seed);

/// Full-batch gradient descent from w = 0, b = 0. Deterministic per
/// (data, config). Aborts with Error(kTraining) if the loss ever rises.
ValueProbe fit_probe(const LabeledMatrix& data, const TrainConfig& config,
                     std::size_t layer = 0);

double sigmoid(double z) noexcept;
/// w.e + b, with a dimension check.
double logit(const ValueProbe& probe, std::span<const double> e);
/// sigmoid(w.e + b); throws Error(kDimension) on length mismatch.
double classify(const ValueProbe& probe, std::span<const double> e);

/// v = w / |w|. Throws Error(kDegenerateProbe) for a zero w.
ValueVector value_vector(const ValueProbe& probe);

/// Layers with test_accuracy strictly above the threshold, excluding the
/// last `excluded_tail_layers`. Input order does not matter; an empty result
/// is not an error. Probes must cover a contiguous range starting at 0.
std::vector<std::size_t> select_layers(std::span<const ValueProbe> probes,
                                       double accuracy_threshold,
                                       std::size_t excluded_tail_layers);

struct SelectionPolicy {
  double accuracy_threshold = 0.9;
  std::size_t excluded_tail_layers = 5;
  double p0 = 0.9;
  double g0 = 0.5;
};

struct TrainedValue {
  io::ProbeStore store;
  std::vector<ValueVector> vectors;
  ControlPlan plan;
};

/// One probe per layer, vectors for the selected layers only.
TrainedValue train_value(const io::ActivationDump& dump, const std::string& value_id,
                         const TrainConfig& config, const SelectionPolicy& policy);

}  // namespace conva::probe
