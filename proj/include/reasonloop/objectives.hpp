#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace reasonloop {

// Framework-free loss kernels over toy parametric models, double precision
// throughout so every line is checkable against the formulas by hand.

struct TokenBatch {
  std::vector<std::vector<int>> sequences;
  int vocab_size = 0;
};

void validate(const TokenBatch& b, const std::string& path = "token_batch");

// Models expose their parameters as one flat vector so the finite-difference
// checker and the stage harness treat them uniformly.
class ParametricModel {
 public:
  virtual ~ParametricModel() = default;
  virtual std::vector<double> get_parameters() const = 0;
  virtual void set_parameters(const std::vector<double>& p) = 0;
  size_t parameter_count() const { return get_parameters().size(); }
};

// Toy token model: a learned logit table over (previous token | BOS) rows,
// softmax per row. Closed-form gradients exist for cross entropy.
class BigramTokenModel : public ParametricModel {
 public:
  BigramTokenModel(int vocab_size, std::uint64_t init_seed = 0);

  int vocab_size() const { return vocab_; }
  // p(token | previous); previous = -1 selects the BOS row. Sums to 1.
  std::vector<double> predict(int previous) const;

  std::vector<double> get_parameters() const override { return logits_; }
  void set_parameters(const std::vector<double>& p) override;

  double& logit(int previous, int token);  // previous = -1 for BOS

 private:
  int row_of(int previous) const;
  int vocab_;
  std::vector<double> logits_;  // (V+1) x V, row-major, last row = BOS
};

// Mean over sequences of -sum_k log p(t_k | prefix). Throws on a zero
// probability for an observed token (naming sequence and position).
double ntp_loss(const TokenBatch& batch, const BigramTokenModel& model);

// Loss plus analytic d loss / d logits.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGrad ntp_loss_grad(const TokenBatch& batch, const BigramTokenModel& model);

// --- flow matching ---------------------------------------------------------

struct FlowBatch {
  std::vector<std::vector<double>> x0;  // data points
  std::vector<std::vector<double>> x1;  // standard Gaussian draws
  std::vector<double> t;                // uniform on [0,1]
  std::vector<std::vector<double>> c;   // conditioning vectors
};

void validate(const FlowBatch& b, const std::string& path = "flow_batch");

struct FlowSample {
  std::vector<double> x_t;       // (1-t) x0 + t x1
  std::vector<double> v_target;  // x1 - x0
};

FlowSample flow_sample(const std::vector<double>& x0,
                       const std::vector<double>& x1, double t);

// Toy vector field: affine map of the concatenated (x_t, t, c).
class AffineVectorFieldModel : public ParametricModel {
 public:
  AffineVectorFieldModel(int x_dim, int c_dim, std::uint64_t init_seed = 0);

  int x_dim() const { return x_dim_; }
  int c_dim() const { return c_dim_; }
  std::vector<double> evaluate(const std::vector<double>& x_t, double t,
                               const std::vector<double>& c) const;

  std::vector<double> get_parameters() const override { return params_; }
  void set_parameters(const std::vector<double>& p) override;

 private:
  int x_dim_, c_dim_, in_dim_;
  std::vector<double> params_;  // x_dim rows of (in_dim weights + bias)
};

// Mean over the batch of || u(x_t, t, c) - (x1 - x0) ||^2.
double flow_matching_loss(const FlowBatch& batch,
                          const AffineVectorFieldModel& model);
LossGrad flow_matching_loss_grad(const FlowBatch& batch,
                                 const AffineVectorFieldModel& model);

// --- joint objective -------------------------------------------------------

struct ObjectiveWeights {
  double ntp_weight = 0.1;
};

double joint_loss(double fm, double ntp, const ObjectiveWeights& weights);

// --- verification harness --------------------------------------------------

// Central finite differences at step epsilon against the supplied analytic
// gradient; returns the maximum relative error over all parameters. Throws
// on a non-finite gradient entry (naming the parameter index).
double grad_check(ParametricModel& model,
                  const std::function<double()>& loss_fn,
                  const std::vector<double>& analytic_grad, double epsilon);

// Stage scheduling contract: which component trains in each phase.
//   reasoning - NTP only, vector field frozen
//   edit      - flow matching only, token model frozen
//   unified   - joint loss, both train
enum class TrainingStage { reasoning, edit, unified };

// One plain gradient-descent step under the stage's freezing rules.
void stage_step(BigramTokenModel& token_model, AffineVectorFieldModel& vf_model,
                const TokenBatch& token_batch, const FlowBatch& flow_batch,
                const ObjectiveWeights& weights, double learning_rate,
                TrainingStage stage);

// Runs the whole numeric verification suite, printing one line per check.
// Returns the number of failed checks.
int verify_objectives(std::ostream& out);

}  // namespace reasonloop
