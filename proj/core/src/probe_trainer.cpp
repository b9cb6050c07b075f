#include "conva/probe_trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

#include "conva/error.hpp"
#include "conva/logging.hpp"

namespace conva::probe {

void validate(const TrainConfig& c) {
  auto fail = [](const char* what) { throw Error(ErrorKind::kPrecondition, what); };
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be positive");
  if (c.max_iterations == 0) fail("max_iterations must be positive");
  if (!(c.loss_tolerance > 0.0)) fail("loss_tolerance must be positive");
  if (!(c.l2_penalty >= 0.0) || !std::isfinite(c.l2_penalty)) fail("l2_penalty must be non-negative");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) fail("test_fraction must lie in (0,1)");
}

LabeledMatrix::LabeledMatrix(std::span<const float> values, std::span<const std::uint8_t> labels,
                             std::size_t dim)
    : f32_(values), labels_(labels), dim_(dim) {
  if (values.size() != labels.size() * dim) {
    throw Error(ErrorKind::kDimension, "sample matrix size does not match labels x dim");
  }
}

LabeledMatrix::LabeledMatrix(std::span<const double> values, std::span<const std::uint8_t> labels,
                             std::size_t dim)
    : f64_(values), labels_(labels), dim_(dim) {
  if (values.size() != labels.size() * dim) {
    throw Error(ErrorKind::kDimension, "sample matrix size does not match labels x dim");
  }
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double dot_row(const LabeledMatrix& data, std::size_t row, std::span<const double> w) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += data.at(row, j) * w[j];
  return acc;
}

double squared_norm(std::span<const double> w) {
  double acc = 0.0;
  for (double x : w) acc += x * x;
  return acc;
}

// Contiguous double copy of the training rows, so each GD pass is a dense sweep.
struct DenseRows {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t dim = 0;

  DenseRows(const LabeledMatrix& data, std::span<const std::size_t> rows) : dim(data.dim()) {
    x.reserve(rows.size() * dim);
    for (auto r : rows) {
      for (std::size_t j = 0; j < dim; ++j) x.push_back(data.at(r, j));
      y.push_back(static_cast<double>(data.label(r)));
    }
  }
  std::size_t n() const { return y.size(); }
};

// Loss and gradient at (w, b) in one sweep.
double loss_and_gradient(const DenseRows& d, std::span<const double> w, double b, double l2,
                         std::span<double> gw, double& gb) {
  std::fill(gw.begin(), gw.end(), 0.0);
  gb = 0.0;
  double total = 0.0;
  const std::size_t n = d.n();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = d.x.data() + i * d.dim;
    double z = b;
    for (std::size_t j = 0; j < d.dim; ++j) z += xi[j] * w[j];
    total += softplus(z) - d.y[i] * z;
    const double r = sigmoid(z) - d.y[i];
    for (std::size_t j = 0; j < d.dim; ++j) gw[j] += r * xi[j];
    gb += r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d.dim; ++j) gw[j] = gw[j] * inv_n + l2 * w[j];
  gb *= inv_n;
  return total * inv_n + 0.5 * l2 * squared_norm(w);
}

double accuracy(const LabeledMatrix& data, std::span<const std::size_t> rows,
                std::span<const double> w, double b) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (auto r : rows) {
    const bool predicted = sigmoid(dot_row(data, r, w) + b) >= 0.5;
    correct += predicted == (data.label(r) == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

double loss(const LabeledMatrix& data, std::span<const std::size_t> rows,
            std::span<const double> w, double b, double l2) {
  double total = 0.0;
  for (auto r : rows) {
    const double z = dot_row(data, r, w) + b;
    total += softplus(z) - static_cast<double>(data.label(r)) * z;
  }
  return total / static_cast<double>(rows.size()) + 0.5 * l2 * squared_norm(w);
}

void gradient(const LabeledMatrix& data, std::span<const std::size_t> rows,
              std::span<const double> w, double b, double l2, std::span<double> grad_w,
              double& grad_b) {
  if (grad_w.size() != data.dim() || w.size() != data.dim()) {
    throw Error(ErrorKind::kDimension, "gradient buffers must have length dim");
  }
  DenseRows dense(data, rows);
  loss_and_gradient(dense, w, b, l2, grad_w, grad_b);
}

Split stratified_split(std::span<const std::uint8_t> labels, double test_fraction,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Split split;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    if (idx.empty()) continue;
    // Fisher-Yates on raw engine output; std::shuffle's draw sequence is
    // library-specific.
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(idx[i], idx[j]);
    }
    auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::min(n_test, idx.size() - 1);
    split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

ValueProbe fit_probe(const LabeledMatrix& data, const TrainConfig& config, std::size_t layer) {
  validate(config);
  const std::size_t n = data.rows();
  const std::size_t d = data.dim();
  if (d == 0) throw Error(ErrorKind::kPrecondition, "zero-dimensional data");
  if (n < 2) throw Error(ErrorKind::kPrecondition, "need at least two samples");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    positives += data.label(i) == 1;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(data.at(i, j))) {
        throw Error(ErrorKind::kNumeric, "non-finite value at sample " + std::to_string(i) +
                                             ", component " + std::to_string(j));
      }
    }
  }
  if (positives == 0 || positives == n) {
    throw Error(ErrorKind::kPrecondition, "single-class data: need both labels to train");
  }

  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = data.label(i);
  const auto parts = stratified_split(labels, config.test_fraction, config.rng_seed);

  DenseRows train(data, parts.train);
  std::vector<double> w(d, 0.0), gw(d, 0.0);
  double b = 0.0, gb = 0.0;
  double prev = loss_and_gradient(train, w, b, config.l2_penalty, gw, gb);
  std::size_t iterations = 0;
  for (; iterations < config.max_iterations; ++iterations) {
    for (std::size_t j = 0; j < d; ++j) w[j] -= config.learning_rate * gw[j];
    b -= config.learning_rate * gb;
    const double cur = loss_and_gradient(train, w, b, config.l2_penalty, gw, gb);
    if (!std::isfinite(cur)) {
      throw Error(ErrorKind::kNumeric, "loss became non-finite at iteration " +
                                           std::to_string(iterations + 1));
    }
    if (std::abs(prev - cur) < config.loss_tolerance) {
      ++iterations;
      break;
    }
    if (cur > prev) {
      throw Error(ErrorKind::kTraining,
                  "loss increased at iteration " + std::to_string(iterations + 1) + " (" +
                      std::to_string(prev) + " -> " + std::to_string(cur) +
                      "); lower learning_rate");
    }
    prev = cur;
  }

  ValueProbe probe;
  probe.layer = layer;
  probe.w = std::move(w);
  probe.b = b;
  probe.train_accuracy = accuracy(data, parts.train, probe.w, b);
  probe.test_accuracy = parts.test.empty() ? probe.train_accuracy
                                           : accuracy(data, parts.test, probe.w, b);
  log::debug("fitted probe", {{"layer", layer},
                              {"iterations", iterations},
                              {"loss", prev},
                              {"train_accuracy", probe.train_accuracy},
                              {"test_accuracy", probe.test_accuracy}});
  return probe;
}

double logit(const ValueProbe& probe, std::span<const double> e) {
  if (e.size() != probe.w.size()) {
    throw Error(ErrorKind::kDimension, "embedding has length " + std::to_string(e.size()) +
                                           ", probe expects " + std::to_string(probe.w.size()));
  }
  double z = probe.b;
  for (std::size_t j = 0; j < e.size(); ++j) z += probe.w[j] * e[j];
  return z;
}

double classify(const ValueProbe& probe, std::span<const double> e) {
  return sigmoid(logit(probe, e));
}

ValueVector value_vector(const ValueProbe& probe) {
  // Scale before squaring so huge or tiny weights neither overflow nor vanish.
  double scale = 0.0;
  for (double x : probe.w) scale = std::max(scale, std::abs(x));
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::kDegenerateProbe,
                "probe at layer " + std::to_string(probe.layer) + " has zero-norm weights");
  }
  double acc = 0.0;
  for (double x : probe.w) acc += (x / scale) * (x / scale);
  const double norm = scale * std::sqrt(acc);

  ValueVector v;
  v.value_id = probe.value_id;
  v.layer = probe.layer;
  v.v.reserve(probe.w.size());
  for (double x : probe.w) v.v.push_back(x / norm);
  return v;
}

std::vector<std::size_t> select_layers(std::span<const ValueProbe> probes,
                                       double accuracy_threshold,
                                       std::size_t excluded_tail_layers) {
  std::vector<const ValueProbe*> sorted;
  sorted.reserve(probes.size());
  for (const auto& p : probes) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const ValueProbe* a, const ValueProbe* b) { return a->layer < b->layer; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i]->layer != i) {
      throw Error(ErrorKind::kPrecondition,
                  "probes must cover layers 0..L-1 exactly once (gap or duplicate at layer " +
                      std::to_string(sorted[i]->layer) + ")");
    }
  }
  const std::size_t layer_count = sorted.size();
  std::vector<std::size_t> selected;
  if (layer_count <= excluded_tail_layers) return selected;
  const std::size_t limit = layer_count - excluded_tail_layers;
  for (const auto* p : sorted) {
    if (p->layer < limit && p->test_accuracy > accuracy_threshold) selected.push_back(p->layer);
  }
  return selected;
}

TrainedValue train_value(const io::ActivationDump& dump, const std::string& value_id,
                         const TrainConfig& config, const SelectionPolicy& policy) {
  io::validate(dump);
  validate(config);

  const std::size_t layers = dump.layer_count;
  std::vector<ValueProbe> probes(layers);
  std::vector<std::exception_ptr> failures(layers);

  auto work = [&](std::size_t l) {
    try {
      LabeledMatrix data(std::span<const float>(dump.layers[l]), dump.labels, dump.dim);
      probes[l] = fit_probe(data, config, l);
      probes[l].value_id = value_id;
    } catch (...) {
      failures[l] = std::current_exception();
    }
  };

  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::clamp<std::size_t>(threads, 1, layers);
  if (threads == 1) {
    for (std::size_t l = 0; l < layers; ++l) work(l);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (auto l = next.fetch_add(1); l < layers; l = next.fetch_add(1)) work(l);
      });
    }
  }

  for (std::size_t l = 0; l < layers; ++l) {
    if (!failures[l]) continue;
    try {
      std::rethrow_exception(failures[l]);
    } catch (const Error& e) {
      throw Error(e.kind(), "layer " + std::to_string(l) + ": " + e.what());
    }
  }

  TrainedValue out;
  out.store.value_id = value_id;
  out.store.model_id = dump.model_id;
  out.store.dim = dump.dim;
  out.store.entries = probes;

  auto& plan = out.plan;
  plan.value_id = value_id;
  plan.accuracy_threshold = policy.accuracy_threshold;
  plan.excluded_tail_layers = policy.excluded_tail_layers;
  plan.p0 = policy.p0;
  plan.g0 = policy.g0;
  plan.selected_layers = select_layers(probes, policy.accuracy_threshold,
                                       policy.excluded_tail_layers);
  plan.empty_selection = plan.selected_layers.empty();
  if (plan.empty_selection) {
    log::warn("no layer passed selection", {{"value_id", value_id},
                                            {"layer_count", layers},
                                            {"threshold", policy.accuracy_threshold},
                                            {"excluded_tail_layers", policy.excluded_tail_layers}});
  }
  for (auto l : plan.selected_layers) out.vectors.push_back(value_vector(probes[l]));
  return out;
}

}  // namespace conva::probe
