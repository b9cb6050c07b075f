#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace conva {

/// Logistic probe P(e) = sigmoid(w.e + b) over one layer's embeddings.
struct ValueProbe {
  std::string value_id;
  std::size_t layer = 0;
  std::vector<double> w;
  double b = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  bool operator==(const ValueProbe&) const = default;
};

/// Unit-norm steering direction at one layer.
struct ValueVector {
  std::string value_id;
  std::size_t layer = 0;
  std::vector<double> v;

  bool operator==(const ValueVector&) const = default;
};

struct ControlPlan {
  std::string value_id;
  std::vector<std::size_t> selected_layers;  // ascending
  double p0 = 0.9;
  double g0 = 0.5;
  double accuracy_threshold = 0.9;
  std::size_t excluded_tail_layers = 5;
  /// Set when no layer passed selection.
  bool empty_selection = false;

  bool operator==(const ControlPlan&) const = default;
};

}  // namespace conva
