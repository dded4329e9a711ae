#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "rex/decoder_math.hpp"
#include "rex/error.hpp"

using namespace rex::decoder;

namespace {

// Softmax straight from the definition, no max subtraction.
std::vector<double> softmax_oracle(const std::vector<double>& z) {
  double s = 0;
  for (double v : z) s += std::exp(v);
  std::vector<double> out;
  for (double v : z) out.push_back(std::exp(v) / s);
  return out;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

InstanceShape random_shape(std::mt19937_64& rng) {
  auto draw = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  InstanceShape s;
  s.regions = draw(1, 5);
  s.vocab = draw(s.regions + 1, 12);
  s.features = draw(1, 8);
  s.steps = draw(2, 5);
  return s;
}

rex::ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const rex::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return rex::ErrorKind::ConfigError;
}

}  // namespace

TEST_CASE("softmax of (1,2,3)") {
  const auto want = softmax_oracle({1, 2, 3});
  CHECK(want[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(want[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(want[2] == doctest::Approx(0.66524).epsilon(1e-4));
  // regions with unit basis rows and T = (1,2,3) give those logits
  Matrix v = Matrix::Identity(3, 3);
  auto s = grounding_distribution(vec({1, 2, 3}), v);
  CHECK(std::abs(s(0) - 0.09003) < 1e-5);
  CHECK(std::abs(s(1) - 0.24473) < 1e-5);
  CHECK(std::abs(s(2) - 0.66524) < 1e-5);
  for (int i = 0; i < 3; ++i) CHECK(s(i) == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("grounding distribution symmetry, stability and dims") {
  Matrix same(4, 3);
  same.rowwise() = vec({0.3, -1, 2}).transpose();
  auto s = grounding_distribution(vec({5, 1, -2}), same);
  for (int i = 0; i < 4; ++i) CHECK(s(i) == doctest::Approx(0.25).epsilon(1e-15));

  Matrix ortho(2, 2);
  ortho << 0, 1, 0, 2;
  auto z = grounding_distribution(vec({3, 0}), ortho);
  CHECK(z(0) == doctest::Approx(0.5));

  Matrix big(2, 1);
  big << 1000, 999;
  auto b = grounding_distribution(vec({1}), big);
  CHECK(std::isfinite(b(0)));
  CHECK(b.sum() == doctest::Approx(1.0));

  CHECK(kind_of([] { grounding_distribution(vec({1, 2}), Matrix::Identity(3, 3)); }) ==
        rex::ErrorKind::DimMismatch);
}

TEST_CASE("grounding distribution is shift invariant") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix v = Matrix::NullaryExpr(4, 3, [&] { return nd(rng); });
    Vector t = Vector::NullaryExpr(3, [&] { return nd(rng); });
    // add a vector u to every V_n: each logit moves by the same u.T
    Vector u = Vector::NullaryExpr(3, [&] { return nd(rng); });
    Matrix shifted = v.rowwise() + u.transpose();
    auto a = grounding_distribution(t, v), b = grounding_distribution(t, shifted);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("grounding_to_vocab routes mass to region tokens") {
  Matrix m = Matrix::Zero(2, 7);
  m(0, 5) = 1;
  m(1, 2) = 1;
  auto y = grounding_to_vocab(vec({1, 0}), m);
  for (int k = 0; k < 7; ++k) CHECK(y(k) == (k == 5 ? 1.0 : 0.0));

  Matrix m4 = Matrix::Zero(4, 9);
  const int cols[] = {8, 0, 3, 6};
  for (int n = 0; n < 4; ++n) m4(n, cols[n]) = 1;
  auto u = grounding_to_vocab(vec({0.25, 0.25, 0.25, 0.25}), m4);
  for (int k = 0; k < 9; ++k) {
    const bool region = k == 8 || k == 0 || k == 3 || k == 6;
    CHECK(u(k) == (region ? 0.25 : 0.0));
  }

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng, random_shape(rng));
    Vector s = softmax(Vector::NullaryExpr(inst.regions.rows(), [&] {
      return std::uniform_real_distribution<double>(-3, 3)(rng);
    }));
    auto y = grounding_to_vocab(s, inst.grounding_map);
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      double hand = 0;
      for (Eigen::Index n = 0; n < s.size(); ++n) hand += s(n) * inst.grounding_map(n, k);
      CHECK(y(k) == doctest::Approx(hand).epsilon(1e-15));
    }
    CHECK(std::abs(y.sum() - 1.0) < 1e-12);
  }
  CHECK(kind_of([] { grounding_to_vocab(vec({1, 0, 0}), Matrix::Zero(2, 5)); }) ==
        rex::ErrorKind::DimMismatch);
}

TEST_CASE("gate") {
  CHECK(gate(vec({0, 0}), vec({1, 1})) == 0.5);
  // sigmoid(ln 3) = 3 / (3 + 1)
  const double x = std::log(3.0);
  CHECK(1.0 / (1.0 + std::exp(-x)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(gate(vec({x}), vec({1})) == doctest::Approx(0.75).epsilon(1e-14));
  const double high = gate(vec({1e300}), vec({1e10}));
  CHECK(high < 1.0);
  CHECK(std::isfinite(high));
  const double low = gate(vec({-1e300}), vec({1e10}));
  CHECK(low > 0.0);
  CHECK(kind_of([] { gate(vec({1, 2}), vec({1})); }) == rex::ErrorKind::DimMismatch);
}

TEST_CASE("mix is a convex combination") {
  auto a = vec({0.2, 0.8, 0.0}), b = vec({0.5, 0.25, 0.25});
  CHECK(mix(1.0, a, b) == a);
  CHECK(mix(0.0, a, b) == b);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vector p = softmax(Vector::NullaryExpr(6, [&] { return std::normal_distribution<double>()(rng); }));
    Vector q = softmax(Vector::NullaryExpr(6, [&] { return std::normal_distribution<double>()(rng); }));
    auto y = mix(0.3, p, q);
    for (int k = 0; k < 6; ++k) {
      CHECK(y(k) == doctest::Approx(0.3 * p(k) + 0.7 * q(k)).epsilon(1e-15));
      CHECK(y(k) >= std::min(p(k), q(k)) - 1e-15);
      CHECK(y(k) <= std::max(p(k), q(k)) + 1e-15);
    }
    CHECK(std::abs(y.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("gate loss") {
  const std::vector<double> g{1, 0}, half{0.5, 0.5};
  // -[(1/2) ln 0.5 + (1/2) ln 0.5]
  const double hand = -(0.5 * std::log(0.5) + 0.5 * std::log(0.5));
  CHECK(hand == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(gate_loss(g, half) - 0.6931471805599453) < 1e-9);
  CHECK(gate_loss(g, g) < 1e-11);
  CHECK(gate_loss(std::vector<double>{1, 1}, std::vector<double>{0.1, 0.7}) == 0.0);
  CHECK(gate_loss(std::vector<double>{0, 0, 0}, std::vector<double>{0.9, 0.2, 0.6}) == 0.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> gs, ps;
    for (int i = 0; i < 6; ++i) {
      gs.push_back(u(rng) < 0.5 ? 1.0 : 0.0);
      ps.push_back(u(rng));
    }
    CHECK(gate_loss(gs, ps) >= 0.0);
  }
  CHECK(kind_of([] { gate_loss(std::vector<double>{1}, std::vector<double>{0.5, 0.5}); }) ==
        rex::ErrorKind::DimMismatch);
}

TEST_CASE("total loss") {
  CHECK(total_loss(0, 0, 0) == 0.0);
  CHECK(total_loss(1, 2, 3) == 6.0);
  CHECK(total_loss(0.25, 1.5, 0.125) == 1.875);
  CHECK(kind_of([] { total_loss(std::numeric_limits<double>::infinity(), 0, 0); }) ==
        rex::ErrorKind::NonFinite);
  CHECK(kind_of([] { total_loss(0, std::nan(""), 0); }) == rex::ErrorKind::NonFinite);
}

TEST_CASE("forward step distributions sum to one") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(rng, random_shape(rng));
    inst.validate();
    for (std::size_t i = 0; i < inst.steps(); ++i) {
      auto out = forward_step(inst, i);
      CHECK(std::abs(out.grounding.sum() - 1.0) < 1e-9);
      CHECK(std::abs(out.from_grounding.sum() - 1.0) < 1e-9);
      CHECK(std::abs(out.from_text.sum() - 1.0) < 1e-9);
      CHECK(std::abs(out.mixed.sum() - 1.0) < 1e-9);
      CHECK(out.gate > 0.0);
      CHECK(out.gate < 1.0);
    }
  }
}

TEST_CASE("instance validation") {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng, {3, 8, 4, 2});
  auto broken = inst;
  broken.grounding_map(0, 0) = broken.grounding_map(0, 0) == 1 ? 0 : 1;
  CHECK(kind_of([&] { broken.validate(); }) == rex::ErrorKind::DimMismatch);
  auto narrow = inst;
  narrow.gate_weights = Vector::Zero(3);
  CHECK(kind_of([&] { narrow.validate(); }) == rex::ErrorKind::DimMismatch);
  CHECK(kind_of([&] { random_instance(rng, {3, 3, 4, 2}); }) == rex::ErrorKind::DimMismatch);
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, random_shape(rng));
    auto targets = random_targets(rng, inst);
    auto report = check_gradients(inst, targets);
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked == static_cast<std::size_t>(inst.text.size() + inst.gate_weights.size() +
                                                     inst.output_weights.size()));
  }
}

TEST_CASE("symmetric construction has zero gradient") {
  const Eigen::Index n = 3, k = 7, d = 4;
  DecoderInstance inst;
  inst.text = Matrix::Zero(3, d);
  inst.regions = Matrix::Zero(n, d);
  inst.regions.rowwise() = vec({0.4, -0.2, 0.9, 0.1}).transpose();
  inst.output_weights = Matrix::Zero(k, d);
  inst.output_weights.rowwise() = vec({-0.3, 0.6, 0.2, 0.5}).transpose();
  inst.gate_weights = Vector::Zero(d);
  inst.grounding_map = Matrix::Zero(n, k);
  for (Eigen::Index r = 0; r < n; ++r) inst.grounding_map(r, r + 2) = 1;
  Targets t{{2, 0, 5}, {1, 0, 0}, {0.5, 0.5}, 0};

  auto grad = loss_gradients(inst, t);
  CHECK(grad.text.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(grad.gate_weights.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(grad.output_weights.cwiseAbs().maxCoeff() < 1e-6);
  auto report = check_gradients(inst, t);
  CHECK(report.max_abs_error < 1e-6);
}

TEST_CASE("gradient sign predicts the direction of loss change") {
  std::mt19937_64 rng(12);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, random_shape(rng));
    auto targets = random_targets(rng, inst);
    auto grad = loss_gradients(inst, targets);
    const double base = loss(inst, targets).total;
    for (Eigen::Index j = 0; j < inst.output_weights.size(); ++j) {
      const double gj = grad.output_weights(j);
      if (std::abs(gj) < 1e-3) continue;
      auto up = inst, down = inst;
      up.output_weights(j) += h;
      down.output_weights(j) -= h;
      const double lu = loss(up, targets).total, ld = loss(down, targets).total;
      CHECK((lu > base) == (gj > 0));
      CHECK((ld < base) == (gj > 0));
      ++checked;
    }
    for (Eigen::Index j = 0; j < inst.gate_weights.size(); ++j) {
      const double gj = grad.gate_weights(j);
      if (std::abs(gj) < 1e-3) continue;
      auto up = inst;
      up.gate_weights(j) += h;
      CHECK((loss(up, targets).total > base) == (gj > 0));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("loss terms") {
  std::mt19937_64 rng(13);
  auto inst = random_instance(rng, {2, 5, 3, 4});
  auto t = random_targets(rng, inst);
  auto terms = loss(inst, t);
  CHECK(terms.answer == doctest::Approx(-std::log(t.answer_probs[t.answer])));
  double exp = 0;
  std::vector<double> gates;
  for (std::size_t i = 0; i < inst.steps(); ++i) {
    auto out = forward_step(inst, i);
    exp -= std::log(out.mixed(static_cast<Eigen::Index>(t.tokens[i])));
    gates.push_back(out.gate);
  }
  CHECK(terms.explanation == doctest::Approx(exp).epsilon(1e-12));
  CHECK(terms.gate == doctest::Approx(gate_loss(t.grounded, gates)).epsilon(1e-12));
  CHECK(terms.total == doctest::Approx(terms.answer + terms.explanation + terms.gate).epsilon(1e-12));
  t.tokens[0] = 99;
  CHECK(kind_of([&] { loss(inst, t); }) == rex::ErrorKind::DimMismatch);
}
