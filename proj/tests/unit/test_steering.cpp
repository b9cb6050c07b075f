#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "conva/error.hpp"
#include "conva/probe_trainer.hpp"
#include "conva/steering.hpp"
#include "test_support.hpp"

using namespace conva;
using namespace conva::steer;
using conva::testing::oracle_epsilon;
using conva::testing::oracle_unit;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

const ValueProbe kScalar{"v", 0, {5.0}, 0.0, 1.0, 1.0};
const ValueVector kUnit{"v", 0, {1.0}};

}  // namespace

TEST_CASE("sigmoid_inverse examples") {
  CHECK(sigmoid_inverse(0.5) == 0.0);
  CHECK(sigmoid_inverse(0.9) == doctest::Approx(std::log(9.0)).epsilon(1e-14));
  CHECK(sigmoid_inverse(0.975) == doctest::Approx(std::log(39.0)).epsilon(1e-14));
  CHECK_THROWS_AS(sigmoid_inverse(0.0), Error);
  CHECK_THROWS_AS(sigmoid_inverse(1.0), Error);
}

TEST_CASE("scalar steering example") {
  const auto r = steer::steer(kScalar, kUnit, std::vector<double>{0.0}, 0.9, true);
  CHECK(r.applied);
  CHECK(std::abs(r.epsilon - std::log(9.0) / 5.0) < 1e-9);
  CHECK(r.pre_probability == 0.5);
  CHECK(r.post_probability >= 0.9);
  CHECK(r.post_probability - 0.9 < 1e-12);

  const auto closed = steer::steer(kScalar, kUnit, std::vector<double>{0.0}, 0.9, false);
  CHECK(closed.epsilon == 0.0);
  CHECK_FALSE(closed.applied);
  CHECK(closed.steered == std::vector<double>{0.0});

  const auto above = steer::steer(kScalar, kUnit, std::vector<double>{1.0}, 0.9, true);
  CHECK(above.epsilon == 0.0);
  CHECK(above.steered == std::vector<double>{1.0});
}

TEST_CASE("batch of three positions") {
  const std::vector<std::vector<double>> batch{{0.0}, {1.0}, {-1.0}};
  const auto rs = steer_layer_batch(kScalar, kUnit, batch, 0.9, true);
  REQUIRE(rs.size() == 3);
  const double ln9 = std::log(9.0);
  CHECK(std::abs(rs[0].epsilon - ln9 / 5) < 1e-9);
  CHECK(rs[1].epsilon == 0.0);
  CHECK(std::abs(rs[2].epsilon - (ln9 + 5) / 5) < 1e-9);
  CHECK(steer_layer_batch(kScalar, kUnit, {}, 0.9, true).empty());
}

TEST_CASE("steering errors") {
  CHECK_THROWS_AS(steer::steer(kScalar, kUnit, std::vector<double>{0.0, 1.0}, 0.9, true), Error);
  CHECK_THROWS_AS(steer::steer(kScalar, kUnit, std::vector<double>{0.0, 1.0}, 0.9, false), Error);
  CHECK_THROWS_AS(steer::steer(kScalar, kUnit, std::vector<double>{0.0}, 1.0, true), Error);
  CHECK_THROWS_AS(steer::steer(kScalar, kUnit, std::vector<double>{0.0}, 0.0, true), Error);
  CHECK_NOTHROW(steer::steer(kScalar, kUnit, std::vector<double>{0.0}, kMaxP0, true));

  const ValueVector flipped{"v", 0, {-1.0}};
  try {
    steer::steer(kScalar, flipped, std::vector<double>{0.0}, 0.9, true);
    FAIL("expected an invariant error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvariant);
  }

  const std::vector<std::vector<double>> batch{{0.0}, {0.0, 1.0}};
  try {
    steer_layer_batch(kScalar, kUnit, batch, 0.9, true);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
}

TEST_CASE("random steering agrees with the oracle and meets the constraint") {
  std::mt19937_64 rng(31);
  const double p0s[] = {0.88, 0.9, 0.975};
  const std::size_t dims[] = {2, 16, 256};
  for (int trial = 0; trial < 600; ++trial) {
    const auto d = dims[trial % 3];
    const double p0 = p0s[(trial / 3) % 3];
    auto probe = conva::testing::random_probe(rng, d);
    const auto v = oracle_unit(probe);
    const auto e = conva::testing::gaussian_vector(rng, d, 0.5);
    const bool gate = trial % 7 != 0;

    const auto r = steer::steer(probe, v, e, p0, gate);
    const double expected = static_cast<double>(oracle_epsilon(probe, e, p0, gate));
    CHECK(std::abs(r.epsilon - expected) <= 1e-9 * std::max(1.0, std::abs(expected)));
    CHECK(r.epsilon >= 0.0);
    if (gate) {
      CHECK(probe::classify(probe, r.steered) >= p0);
    } else {
      CHECK(bit_equal(r.steered, e));
    }
  }
}

TEST_CASE("second application is a no-op") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + trial % 64;
    auto probe = conva::testing::random_probe(rng, d);
    const auto v = probe::value_vector(probe);
    const auto e = conva::testing::gaussian_vector(rng, d);
    const auto first = steer::steer(probe, v, e, 0.9, true);
    const auto second = steer::steer(probe, v, first.steered, 0.9, true);
    CHECK(second.epsilon == 0.0);
    CHECK(bit_equal(second.steered, first.steered));
  }
}

TEST_CASE("closed gate returns the input bit for bit") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + trial % 32;
    auto probe = conva::testing::random_probe(rng, d);
    const auto v = probe::value_vector(probe);
    std::vector<double> e(d);
    for (auto& x : e) {
      // Arbitrary finite doubles, negative zero included.
      do {
        const auto raw = bits(rng);
        std::memcpy(&x, &raw, sizeof x);
      } while (!std::isfinite(x));
    }
    const auto r = steer::steer(probe, v, e, 0.9, false);
    CHECK(r.epsilon == 0.0);
    CHECK(bit_equal(r.steered, e));
  }
}

TEST_CASE("steering leaves the orthogonal complement alone") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + trial % 30;
    auto probe = conva::testing::random_probe(rng, d);
    const auto v = probe::value_vector(probe);
    const auto e = conva::testing::gaussian_vector(rng, d);
    const auto r = steer::steer(probe, v, e, 0.9, true);
    auto u = conva::testing::gaussian_vector(rng, d);
    const auto uv = conva::testing::oracle_dot(u, v.v);
    for (std::size_t j = 0; j < d; ++j) u[j] -= static_cast<double>(uv * v.v[j]);
    const auto before = conva::testing::oracle_dot(u, e);
    const auto after = conva::testing::oracle_dot(u, r.steered);
    CHECK(std::abs(static_cast<double>(after - before)) <= 1e-9 * (1.0 + r.epsilon));
  }
}

TEST_CASE("epsilon is minimal") {
  std::mt19937_64 rng(53);
  int applied = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + trial % 16;
    auto probe = conva::testing::random_probe(rng, d);
    const auto v = probe::value_vector(probe);
    const auto e = conva::testing::gaussian_vector(rng, d);
    const auto r = steer::steer(probe, v, e, 0.9, true);
    if (!r.applied) continue;
    ++applied;
    const double smaller = r.epsilon * (1.0 - 1e-9);
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = e[j] + smaller * v.v[j];
    CHECK(probe::classify(probe, x) < 0.9);
  }
  CHECK(applied > 50);
}

TEST_CASE("plan executor") {
  ControlPlan plan;
  plan.value_id = "v";
  plan.selected_layers = {1, 2};
  plan.p0 = 0.9;
  std::vector<ValueProbe> probes;
  std::vector<ValueVector> vectors;
  for (std::size_t l = 0; l < 4; ++l) {
    probes.push_back({"v", l, {5.0}, 0.0, 1.0, 1.0});
    if (l == 1 || l == 2) vectors.push_back({"v", l, {1.0}});
  }
  const auto exec = make_plan_executor(plan, probes, vectors);
  CHECK(exec.is_selected(1));
  CHECK_FALSE(exec.is_selected(0));
  REQUIRE(exec.probe(3) != nullptr);
  CHECK(exec.probe(9) == nullptr);

  const std::vector<std::vector<double>> batch{{0.0}, {2.0}};
  const auto passed = exec.apply(0, batch, true);
  CHECK(passed == batch);
  CHECK(exec.apply_detailed(3, batch, true).empty());

  const auto steered = exec.apply(1, batch, true);
  CHECK(std::abs(steered[0][0] - std::log(9.0) / 5) < 1e-9);
  CHECK(steered[1][0] == 2.0);
  CHECK(exec.apply(2, batch, false) == batch);

  // Applying each selected layer in ascending order converges: layer 2 sees
  // layer 1's output and has nothing left to do.
  const auto detail = exec.apply_detailed(2, steered, true);
  CHECK(detail[0].epsilon == 0.0);

  auto missing = vectors;
  missing.pop_back();
  try {
    PlanExecutor bad(plan, probes, missing);
    FAIL("expected a plan error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kPlan);
  }
  std::vector<ValueProbe> dup = probes;
  dup.push_back(probes[1]);
  CHECK_THROWS_AS(PlanExecutor(plan, dup, vectors), Error);
}
