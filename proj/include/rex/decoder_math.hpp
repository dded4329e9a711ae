#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rex::decoder {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-12;

// Tensors of the grounding-gated output head for a short explanation.
// Row i of `text` is the decoder state T_i used to predict word i.
struct DecoderInstance {
  Matrix text;            // L x D
  Matrix regions;         // V: N x D
  Matrix grounding_map;   // M: N x K, M(n, k) = 1 iff token k is `#n`
  Matrix output_weights;  // W_f: K x D
  Vector gate_weights;    // W_g: D

  std::size_t region_count() const { return static_cast<std::size_t>(regions.rows()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(grounding_map.cols()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(regions.cols()); }
  std::size_t steps() const { return static_cast<std::size_t>(text.rows()); }

  // Throws DimMismatch when shapes disagree or M is not a valid routing.
  void validate() const;
};

struct StepOutput {
  Vector grounding;       // S_i over N regions
  double gate = 0;        // g_hat_i
  Vector from_grounding;  // y_g over K tokens
  Vector from_text;       // y_f over K tokens
  Vector mixed;           // y_hat over K tokens
};

// Supervision for one instance: target token and grounded flag per step, plus
// the answer distribution whose cross-entropy forms L_ans.
struct Targets {
  std::vector<std::size_t> tokens;
  std::vector<double> grounded;  // 0 or 1
  std::vector<double> answer_probs;
  std::size_t answer = 0;
};

struct LossTerms {
  double answer = 0;
  double explanation = 0;
  double gate = 0;
  double total = 0;
};

struct Gradients {
  Matrix text;            // dL/dT
  Vector gate_weights;    // dL/dW_g
  Matrix output_weights;  // dL/dW_f
};

struct GradientReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  double max_rel_text = 0;
  double max_rel_gate_weights = 0;
  double max_rel_output_weights = 0;
  std::size_t checked = 0;
};

Vector softmax(const Vector& logits);

// S_i[n] = softmax_n(T_i . V_n), max-subtracted.
Vector grounding_distribution(const Vector& text, const Matrix& regions);
// y_g = S_i M.
Vector grounding_to_vocab(const Vector& grounding, const Matrix& grounding_map);
// sigmoid(W_g . T_i), kept inside (0, 1).
double gate(const Vector& text, const Vector& gate_weights);
// g_hat y_g + (1 - g_hat) y_f.
Vector mix(double gate_prob, const Vector& from_grounding, const Vector& from_text);

// Class-balanced binary cross-entropy over one explanation's gate decisions.
double gate_loss(std::span<const double> grounded, std::span<const double> predicted);
// Unit-weight sum; NonFinite if any term is not finite.
double total_loss(double answer_loss, double explanation_loss, double gate_loss_value);

StepOutput forward_step(const DecoderInstance& inst, std::size_t step);
LossTerms loss(const DecoderInstance& inst, const Targets& targets);
Gradients loss_gradients(const DecoderInstance& inst, const Targets& targets);

// Analytic gradients against central differences with step `h`. Relative
// error is |a - n| / max(1, |a|, |n|).
GradientReport check_gradients(const DecoderInstance& inst, const Targets& targets,
                               double h = 1e-5);

struct InstanceShape {
  std::size_t regions = 3;
  std::size_t vocab = 8;
  std::size_t features = 4;
  std::size_t steps = 4;
};

// Entries uniform in [-1, 1]; region tokens placed at random vocab columns.
DecoderInstance random_instance(std::mt19937_64& rng, const InstanceShape& shape);
// Grounded steps target region tokens, others target plain words.
Targets random_targets(std::mt19937_64& rng, const DecoderInstance& inst);

}  // namespace rex::decoder
