#include "rex/decoder_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "rex/error.hpp"

namespace rex::decoder {

namespace {

[[noreturn]] void dim_fail(const std::string& what) {
  throw Error(ErrorKind::DimMismatch, what);
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Column index of the single 1 in each row of M.
std::vector<std::size_t> region_columns(const Matrix& m) {
  std::vector<std::size_t> cols(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index n = 0; n < m.rows(); ++n) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (m(n, k) == 1.0) cols[static_cast<std::size_t>(n)] = static_cast<std::size_t>(k);
    }
  }
  return cols;
}

}  // namespace

void DecoderInstance::validate() const {
  const auto n = regions.rows();
  const auto d = regions.cols();
  const auto k = grounding_map.cols();
  if (n < 1) dim_fail("need at least one region");
  if (d < 1) dim_fail("feature dimension must be positive");
  if (k <= n) dim_fail(fmt::format("vocabulary ({}) must exceed region count ({})", k, n));
  if (text.cols() != d) dim_fail(fmt::format("text features have {} dims, regions {}", text.cols(), d));
  if (grounding_map.rows() != n) dim_fail("grounding map rows must equal region count");
  if (output_weights.rows() != k || output_weights.cols() != d) {
    dim_fail(fmt::format("W_f must be {}x{}, is {}x{}", k, d, output_weights.rows(),
                         output_weights.cols()));
  }
  if (gate_weights.size() != d) dim_fail("W_g length must equal feature dimension");
  for (Eigen::Index r = 0; r < n; ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double v = grounding_map(r, c);
      if (v != 0.0 && v != 1.0) dim_fail("grounding map must be binary");
      ones += v == 1.0;
    }
    if (ones != 1) dim_fail(fmt::format("grounding map row {} has {} ones", r, ones));
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (grounding_map.col(c).sum() > 1.0) {
      dim_fail(fmt::format("vocab token {} names more than one region", c));
    }
  }
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

Vector grounding_distribution(const Vector& text, const Matrix& regions) {
  if (regions.cols() != text.size()) {
    dim_fail(fmt::format("text has {} dims, regions {}", text.size(), regions.cols()));
  }
  if (regions.rows() == 0) dim_fail("need at least one region");
  return softmax(regions * text);
}

Vector grounding_to_vocab(const Vector& grounding, const Matrix& grounding_map) {
  if (grounding_map.rows() != grounding.size()) {
    dim_fail(fmt::format("distribution over {} regions, map has {} rows", grounding.size(),
                         grounding_map.rows()));
  }
  return grounding_map.transpose() * grounding;
}

double gate(const Vector& text, const Vector& gate_weights) {
  if (gate_weights.size() != text.size()) {
    dim_fail(fmt::format("W_g has {} dims, text {}", gate_weights.size(), text.size()));
  }
  return clamp_prob(stable_sigmoid(gate_weights.dot(text)));
}

Vector mix(double gate_prob, const Vector& from_grounding, const Vector& from_text) {
  return gate_prob * from_grounding + (1.0 - gate_prob) * from_text;
}

double gate_loss(std::span<const double> grounded, std::span<const double> predicted) {
  if (grounded.size() != predicted.size()) dim_fail("gate targets and predictions differ in length");
  const double total = static_cast<double>(grounded.size());
  if (total == 0) return 0.0;
  const double positives = std::accumulate(grounded.begin(), grounded.end(), 0.0);
  const double negatives = total - positives;
  const double w_pos = negatives / total;
  const double w_neg = positives / total;
  double sum = 0;
  for (std::size_t i = 0; i < grounded.size(); ++i) {
    const double p = clamp_prob(predicted[i]);
    sum += w_pos * grounded[i] * std::log(p) + w_neg * (1.0 - grounded[i]) * std::log(1.0 - p);
  }
  return -sum;
}

double total_loss(double answer_loss, double explanation_loss, double gate_loss_value) {
  if (!std::isfinite(answer_loss) || !std::isfinite(explanation_loss) ||
      !std::isfinite(gate_loss_value)) {
    throw Error(ErrorKind::NonFinite,
                fmt::format("loss terms ({}, {}, {})", answer_loss, explanation_loss,
                            gate_loss_value));
  }
  return answer_loss + explanation_loss + gate_loss_value;
}

StepOutput forward_step(const DecoderInstance& inst, std::size_t step) {
  const Vector t = inst.text.row(static_cast<Eigen::Index>(step)).transpose();
  StepOutput out;
  out.grounding = grounding_distribution(t, inst.regions);
  out.from_grounding = grounding_to_vocab(out.grounding, inst.grounding_map);
  out.gate = gate(t, inst.gate_weights);
  out.from_text = softmax(inst.output_weights * t);
  out.mixed = mix(out.gate, out.from_grounding, out.from_text);
  return out;
}

namespace {

void check_targets(const DecoderInstance& inst, const Targets& targets) {
  inst.validate();
  if (targets.tokens.size() != inst.steps() || targets.grounded.size() != inst.steps()) {
    dim_fail(fmt::format("{} decoder steps but {} token / {} gate targets", inst.steps(),
                         targets.tokens.size(), targets.grounded.size()));
  }
  for (auto t : targets.tokens) {
    if (t >= inst.vocab_size()) dim_fail(fmt::format("target token {} outside vocabulary", t));
  }
  if (!targets.answer_probs.empty() && targets.answer >= targets.answer_probs.size()) {
    dim_fail("answer index outside answer distribution");
  }
}

double answer_loss(const Targets& targets) {
  if (targets.answer_probs.empty()) return 0.0;
  return -std::log(clamp_prob(targets.answer_probs[targets.answer]));
}

}  // namespace

LossTerms loss(const DecoderInstance& inst, const Targets& targets) {
  check_targets(inst, targets);
  LossTerms terms;
  std::vector<double> gates;
  for (std::size_t i = 0; i < inst.steps(); ++i) {
    const auto out = forward_step(inst, i);
    terms.explanation -= std::log(clamp_prob(out.mixed(static_cast<Eigen::Index>(targets.tokens[i]))));
    gates.push_back(out.gate);
  }
  terms.gate = gate_loss(targets.grounded, gates);
  terms.answer = answer_loss(targets);
  terms.total = total_loss(terms.answer, terms.explanation, terms.gate);
  return terms;
}

Gradients loss_gradients(const DecoderInstance& inst, const Targets& targets) {
  check_targets(inst, targets);
  const auto steps = static_cast<Eigen::Index>(inst.steps());
  Gradients grad{Matrix::Zero(inst.text.rows(), inst.text.cols()),
                 Vector::Zero(inst.gate_weights.size()),
                 Matrix::Zero(inst.output_weights.rows(), inst.output_weights.cols())};

  const double total = static_cast<double>(inst.steps());
  const double positives = std::accumulate(targets.grounded.begin(), targets.grounded.end(), 0.0);
  const double w_pos = (total - positives) / total;
  const double w_neg = positives / total;

  for (Eigen::Index i = 0; i < steps; ++i) {
    const Vector t = inst.text.row(i).transpose();
    const auto out = forward_step(inst, static_cast<std::size_t>(i));
    const auto target = static_cast<Eigen::Index>(targets.tokens[static_cast<std::size_t>(i)]);
    const double g = targets.grounded[static_cast<std::size_t>(i)];
    const double p = out.mixed(target);

    Vector d_text = Vector::Zero(t.size());
    double d_gate = 0;

    // Explanation cross-entropy, -log y_hat[target].
    if (p > kProbEpsilon && p < 1.0 - kProbEpsilon) {
      const double d_p = -1.0 / p;
      d_gate += d_p * (out.from_grounding(target) - out.from_text(target));

      // through y_f = softmax(W_f T)
      Vector one_hot = Vector::Zero(out.from_text.size());
      one_hot(target) = 1.0;
      const Vector d_logits_f =
          d_p * (1.0 - out.gate) * out.from_text(target) * (one_hot - out.from_text);
      grad.output_weights += d_logits_f * t.transpose();
      d_text += inst.output_weights.transpose() * d_logits_f;

      // through y_g = S M, S = softmax(V T)
      const Vector route = inst.grounding_map.col(target);
      const Vector weighted = out.grounding.cwiseProduct(route);
      const Vector d_logits_s = d_p * out.gate * (weighted - out.grounding * weighted.sum());
      d_text += inst.regions.transpose() * d_logits_s;
    }

    // Balanced gate cross-entropy.
    const double gh = out.gate;
    if (gh > kProbEpsilon && gh < 1.0 - kProbEpsilon) {
      d_gate += -w_pos * g / gh + w_neg * (1.0 - g) / (1.0 - gh);
    }

    const double d_score = d_gate * gh * (1.0 - gh);
    grad.gate_weights += d_score * t;
    d_text += d_score * inst.gate_weights;
    grad.text.row(i) = d_text.transpose();
  }
  return grad;
}

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Central differences over every entry of `param`, which aliases into `inst`.
template <typename Param>
void check_entries(DecoderInstance& inst, const Targets& targets, Param& param,
                   const Param& analytic, double h, double& max_rel, GradientReport& report) {
  for (Eigen::Index j = 0; j < param.size(); ++j) {
    const double saved = param(j);
    param(j) = saved + h;
    const double up = loss(inst, targets).total;
    param(j) = saved - h;
    const double down = loss(inst, targets).total;
    param(j) = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(j);
    const double rel = rel_error(a, numeric);
    max_rel = std::max(max_rel, rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
    ++report.checked;
  }
}

}  // namespace

GradientReport check_gradients(const DecoderInstance& instance, const Targets& targets,
                               double h) {
  const auto analytic = loss_gradients(instance, targets);
  DecoderInstance inst = instance;
  GradientReport report;
  check_entries(inst, targets, inst.text, analytic.text, h, report.max_rel_text, report);
  check_entries(inst, targets, inst.gate_weights, analytic.gate_weights, h,
                report.max_rel_gate_weights, report);
  check_entries(inst, targets, inst.output_weights, analytic.output_weights, h,
                report.max_rel_output_weights, report);
  return report;
}

DecoderInstance random_instance(std::mt19937_64& rng, const InstanceShape& shape) {
  if (shape.regions < 1 || shape.features < 1 || shape.vocab <= shape.regions ||
      shape.steps < 1) {
    dim_fail("random instance shape violates N >= 1, K > N, D >= 1");
  }
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = unit(rng);
    return m;
  };
  const auto n = static_cast<Eigen::Index>(shape.regions);
  const auto k = static_cast<Eigen::Index>(shape.vocab);
  const auto d = static_cast<Eigen::Index>(shape.features);

  DecoderInstance inst;
  inst.text = fill(static_cast<Eigen::Index>(shape.steps), d);
  inst.regions = fill(n, d);
  inst.output_weights = fill(k, d);
  inst.gate_weights = fill(d, 1).col(0);

  std::vector<Eigen::Index> columns(static_cast<std::size_t>(k));
  std::iota(columns.begin(), columns.end(), 0);
  std::shuffle(columns.begin(), columns.end(), rng);
  inst.grounding_map = Matrix::Zero(n, k);
  for (Eigen::Index r = 0; r < n; ++r) inst.grounding_map(r, columns[static_cast<std::size_t>(r)]) = 1.0;
  return inst;
}

Targets random_targets(std::mt19937_64& rng, const DecoderInstance& inst) {
  const auto region_cols = region_columns(inst.grounding_map);
  std::vector<std::size_t> word_cols;
  for (std::size_t k = 0; k < inst.vocab_size(); ++k) {
    if (std::find(region_cols.begin(), region_cols.end(), k) == region_cols.end()) {
      word_cols.push_back(k);
    }
  }
  auto pick = [&](const std::vector<std::size_t>& from) {
    return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
  };
  Targets t;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < inst.steps(); ++i) {
    const bool grounded = coin(rng);
    t.grounded.push_back(grounded ? 1.0 : 0.0);
    t.tokens.push_back(grounded ? pick(region_cols) : pick(word_cols));
  }
  std::uniform_real_distribution<double> pos(0.05, 1.0);
  t.answer_probs = {pos(rng), pos(rng), pos(rng)};
  const double s = t.answer_probs[0] + t.answer_probs[1] + t.answer_probs[2];
  for (auto& p : t.answer_probs) p /= s;
  t.answer = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  return t;
}

}  // namespace rex::decoder
