#include "reasonloop/objectives.hpp"

#include <cmath>
#include <ostream>

#include "reasonloop/errors.hpp"
#include "reasonloop/util.hpp"

namespace reasonloop {

void validate(const TokenBatch& b, const std::string& path) {
  if (b.vocab_size <= 1)
    throw ValidationError(path + ".vocab_size", "must be > 1");
  if (b.sequences.empty())
    throw ValidationError(path + ".sequences", "must be non-empty");
  for (size_t i = 0; i < b.sequences.size(); ++i)
    for (size_t k = 0; k < b.sequences[i].size(); ++k) {
      int id = b.sequences[i][k];
      if (id < 0 || id >= b.vocab_size)
        throw ValidationError(path + ".sequences[" + std::to_string(i) + "][" +
                                  std::to_string(k) + "]",
                              "token id out of range");
    }
}

BigramTokenModel::BigramTokenModel(int vocab_size, std::uint64_t init_seed)
    : vocab_(vocab_size),
      logits_(static_cast<size_t>(vocab_size + 1) * vocab_size, 0.0) {
  if (vocab_size <= 1) throw ValidationError("vocab_size", "must be > 1");
  if (init_seed != 0) {
    for (size_t i = 0; i < logits_.size(); ++i)
      logits_[i] = 0.1 * hash_normal(mix_hash(init_seed, "logit",
                                              std::to_string(i)));
  }
}

int BigramTokenModel::row_of(int previous) const {
  if (previous == -1) return vocab_;  // BOS row
  if (previous < 0 || previous >= vocab_)
    throw ValidationError("previous", "token id out of range");
  return previous;
}

std::vector<double> BigramTokenModel::predict(int previous) const {
  const double* row = &logits_[static_cast<size_t>(row_of(previous)) * vocab_];
  double max_logit = row[0];
  for (int j = 1; j < vocab_; ++j) max_logit = std::max(max_logit, row[j]);
  std::vector<double> p(static_cast<size_t>(vocab_));
  double z = 0.0;
  for (int j = 0; j < vocab_; ++j) {
    p[static_cast<size_t>(j)] = std::exp(row[j] - max_logit);
    z += p[static_cast<size_t>(j)];
  }
  for (auto& v : p) v /= z;
  return p;
}

void BigramTokenModel::set_parameters(const std::vector<double>& p) {
  if (p.size() != logits_.size())
    throw ValidationError("parameters", "size mismatch");
  logits_ = p;
}

double& BigramTokenModel::logit(int previous, int token) {
  return logits_[static_cast<size_t>(row_of(previous)) * vocab_ + token];
}

double ntp_loss(const TokenBatch& batch, const BigramTokenModel& model) {
  return ntp_loss_grad(batch, model).loss;
}

LossGrad ntp_loss_grad(const TokenBatch& batch, const BigramTokenModel& model) {
  validate(batch);
  if (model.vocab_size() != batch.vocab_size)
    throw ValidationError("token_batch.vocab_size",
                          "does not match the model");
  int vocab = model.vocab_size();
  LossGrad out;
  out.grad.assign(model.get_parameters().size(), 0.0);
  double per_seq_weight = 1.0 / static_cast<double>(batch.sequences.size());

  for (size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    for (size_t k = 0; k < seq.size(); ++k) {
      int prev = k == 0 ? -1 : seq[k - 1];
      std::vector<double> p = model.predict(prev);
      double pk = p[static_cast<size_t>(seq[k])];
      if (pk <= 0.0)
        throw Error("ntp_loss: zero probability for observed token at "
                    "sequence " + std::to_string(s) + ", position " +
                    std::to_string(k));
      out.loss -= per_seq_weight * std::log(pk);
      // d(-log softmax_t)/d logit_j = p_j - 1{j = t}
      size_t row = static_cast<size_t>(prev == -1 ? vocab : prev) *
                   static_cast<size_t>(vocab);
      for (int j = 0; j < vocab; ++j)
        out.grad[row + static_cast<size_t>(j)] +=
            per_seq_weight * p[static_cast<size_t>(j)];
      out.grad[row + static_cast<size_t>(seq[k])] -= per_seq_weight;
    }
  }
  return out;
}

void validate(const FlowBatch& b, const std::string& path) {
  if (b.x0.empty()) throw ValidationError(path + ".x0", "must be non-empty");
  size_t n = b.x0.size();
  if (b.x1.size() != n || b.t.size() != n || b.c.size() != n)
    throw ValidationError(path, "x0, x1, t, c must have equal length");
  size_t x_dim = b.x0.front().size();
  size_t c_dim = b.c.front().size();
  for (size_t i = 0; i < n; ++i) {
    if (b.x0[i].size() != x_dim || b.x1[i].size() != x_dim)
      throw ValidationError(path + "[" + std::to_string(i) + "]",
                            "inconsistent x dimension");
    if (b.c[i].size() != c_dim)
      throw ValidationError(path + ".c[" + std::to_string(i) + "]",
                            "inconsistent conditioning dimension");
    if (!(b.t[i] >= 0.0 && b.t[i] <= 1.0))
      throw ValidationError(path + ".t[" + std::to_string(i) + "]",
                            "must be in [0,1]");
  }
}

FlowSample flow_sample(const std::vector<double>& x0,
                       const std::vector<double>& x1, double t) {
  if (x0.size() != x1.size())
    throw ValidationError("flow_sample", "x0 and x1 dimensions differ");
  if (!(t >= 0.0 && t <= 1.0))
    throw ValidationError("flow_sample.t", "must be in [0,1]");
  FlowSample s;
  s.x_t.resize(x0.size());
  s.v_target.resize(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) {
    s.x_t[i] = (1.0 - t) * x0[i] + t * x1[i];
    s.v_target[i] = x1[i] - x0[i];
  }
  return s;
}

AffineVectorFieldModel::AffineVectorFieldModel(int x_dim, int c_dim,
                                               std::uint64_t init_seed)
    : x_dim_(x_dim), c_dim_(c_dim), in_dim_(x_dim + 1 + c_dim) {
  if (x_dim <= 0) throw ValidationError("x_dim", "must be > 0");
  if (c_dim < 0) throw ValidationError("c_dim", "must be >= 0");
  params_.assign(static_cast<size_t>(x_dim_) * (in_dim_ + 1), 0.0);
  if (init_seed != 0) {
    for (size_t i = 0; i < params_.size(); ++i)
      params_[i] = 0.1 * hash_normal(mix_hash(init_seed, "weight",
                                              std::to_string(i)));
  }
}

std::vector<double> AffineVectorFieldModel::evaluate(
    const std::vector<double>& x_t, double t,
    const std::vector<double>& c) const {
  if (static_cast<int>(x_t.size()) != x_dim_ ||
      static_cast<int>(c.size()) != c_dim_)
    throw ValidationError("evaluate", "input dimension mismatch");
  std::vector<double> in;
  in.reserve(static_cast<size_t>(in_dim_));
  in.insert(in.end(), x_t.begin(), x_t.end());
  in.push_back(t);
  in.insert(in.end(), c.begin(), c.end());

  std::vector<double> out(static_cast<size_t>(x_dim_), 0.0);
  for (int r = 0; r < x_dim_; ++r) {
    const double* row = &params_[static_cast<size_t>(r) * (in_dim_ + 1)];
    double acc = row[in_dim_];  // bias
    for (int j = 0; j < in_dim_; ++j) acc += row[j] * in[static_cast<size_t>(j)];
    out[static_cast<size_t>(r)] = acc;
    if (!std::isfinite(acc))
      throw ValidationError("evaluate", "non-finite output");
  }
  return out;
}

void AffineVectorFieldModel::set_parameters(const std::vector<double>& p) {
  if (p.size() != params_.size())
    throw ValidationError("parameters", "size mismatch");
  params_ = p;
}

double flow_matching_loss(const FlowBatch& batch,
                          const AffineVectorFieldModel& model) {
  return flow_matching_loss_grad(batch, model).loss;
}

LossGrad flow_matching_loss_grad(const FlowBatch& batch,
                                 const AffineVectorFieldModel& model) {
  validate(batch);
  if (static_cast<int>(batch.x0.front().size()) != model.x_dim() ||
      static_cast<int>(batch.c.front().size()) != model.c_dim())
    throw ValidationError("flow_batch", "dimension mismatch with the model");

  int x_dim = model.x_dim();
  int in_dim = x_dim + 1 + model.c_dim();
  size_t n = batch.x0.size();
  LossGrad out;
  out.grad.assign(model.get_parameters().size(), 0.0);
  double inv_n = 1.0 / static_cast<double>(n);

  for (size_t i = 0; i < n; ++i) {
    FlowSample s = flow_sample(batch.x0[i], batch.x1[i], batch.t[i]);
    std::vector<double> u = model.evaluate(s.x_t, batch.t[i], batch.c[i]);
    std::vector<double> in;
    in.reserve(static_cast<size_t>(in_dim));
    in.insert(in.end(), s.x_t.begin(), s.x_t.end());
    in.push_back(batch.t[i]);
    in.insert(in.end(), batch.c[i].begin(), batch.c[i].end());
    for (int r = 0; r < x_dim; ++r) {
      double res = u[static_cast<size_t>(r)] - s.v_target[static_cast<size_t>(r)];
      out.loss += inv_n * res * res;
      size_t row = static_cast<size_t>(r) * (in_dim + 1);
      for (int j = 0; j < in_dim; ++j)
        out.grad[row + static_cast<size_t>(j)] +=
            inv_n * 2.0 * res * in[static_cast<size_t>(j)];
      out.grad[row + static_cast<size_t>(in_dim)] += inv_n * 2.0 * res;
    }
  }
  return out;
}

double joint_loss(double fm, double ntp, const ObjectiveWeights& weights) {
  if (!std::isfinite(fm) || !std::isfinite(ntp))
    throw ValidationError("joint_loss", "losses must be finite");
  if (!(weights.ntp_weight >= 0.0) || !std::isfinite(weights.ntp_weight))
    throw ValidationError("joint_loss.ntp_weight", "must be finite and >= 0");
  return fm + weights.ntp_weight * ntp;
}

double grad_check(ParametricModel& model,
                  const std::function<double()>& loss_fn,
                  const std::vector<double>& analytic_grad, double epsilon) {
  std::vector<double> params = model.get_parameters();
  if (analytic_grad.size() != params.size())
    throw ValidationError("analytic_grad", "size mismatch");
  double max_rel = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(analytic_grad[i]))
      throw Error("grad_check: non-finite gradient at parameter " +
                  std::to_string(i));
    double saved = params[i];
    params[i] = saved + epsilon;
    model.set_parameters(params);
    double hi = loss_fn();
    params[i] = saved - epsilon;
    model.set_parameters(params);
    double lo = loss_fn();
    params[i] = saved;
    double numeric = (hi - lo) / (2.0 * epsilon);
    double denom = std::max({std::fabs(numeric), std::fabs(analytic_grad[i]),
                             1e-8});
    max_rel = std::max(max_rel, std::fabs(numeric - analytic_grad[i]) / denom);
  }
  model.set_parameters(params);
  return max_rel;
}

void stage_step(BigramTokenModel& token_model,
                AffineVectorFieldModel& vf_model, const TokenBatch& token_batch,
                const FlowBatch& flow_batch, const ObjectiveWeights& weights,
                double learning_rate, TrainingStage stage) {
  bool train_token = stage != TrainingStage::edit;
  bool train_vf = stage != TrainingStage::reasoning;
  double token_scale =
      stage == TrainingStage::unified ? weights.ntp_weight : 1.0;

  if (train_token) {
    LossGrad g = ntp_loss_grad(token_batch, token_model);
    std::vector<double> p = token_model.get_parameters();
    for (size_t i = 0; i < p.size(); ++i)
      p[i] -= learning_rate * token_scale * g.grad[i];
    token_model.set_parameters(p);
  }
  if (train_vf) {
    LossGrad g = flow_matching_loss_grad(flow_batch, vf_model);
    std::vector<double> p = vf_model.get_parameters();
    for (size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g.grad[i];
    vf_model.set_parameters(p);
  }
}

namespace {

FlowBatch small_flow_batch(std::uint64_t seed, size_t n, int x_dim,
                           int c_dim) {
  FlowBatch b;
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> x0(static_cast<size_t>(x_dim)),
        x1(static_cast<size_t>(x_dim)), c(static_cast<size_t>(c_dim));
    for (int d = 0; d < x_dim; ++d) {
      x0[static_cast<size_t>(d)] = hash_normal(
          mix_hash(seed, "x0", std::to_string(i) + ":" + std::to_string(d)));
      x1[static_cast<size_t>(d)] = hash_normal(
          mix_hash(seed, "x1", std::to_string(i) + ":" + std::to_string(d)));
    }
    for (int d = 0; d < c_dim; ++d)
      c[static_cast<size_t>(d)] = hash_normal(
          mix_hash(seed, "c", std::to_string(i) + ":" + std::to_string(d)));
    b.x0.push_back(std::move(x0));
    b.x1.push_back(std::move(x1));
    b.c.push_back(std::move(c));
    b.t.push_back(hash_uniform(mix_hash(seed, "t", std::to_string(i))));
  }
  return b;
}

}  // namespace

int verify_objectives(std::ostream& out) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    out << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
    if (!ok) ++failures;
  };

  // Uniform model closed form: loss = L * ln V.
  {
    BigramTokenModel model(4);
    TokenBatch batch{{{0, 1, 2}}, 4};
    double loss = ntp_loss(batch, model);
    check("ntp uniform = L*ln(V)", std::fabs(loss - 3.0 * std::log(4.0)) < 1e-12);
  }
  // Perfect prediction -> 0 loss.
  {
    BigramTokenModel model(3);
    TokenBatch batch{{{2, 0, 1}}, 3};
    model.logit(-1, 2) = 200.0;
    model.logit(2, 0) = 200.0;
    model.logit(0, 1) = 200.0;
    check("ntp perfect prediction ~ 0", ntp_loss(batch, model) < 1e-9);
  }
  // flow_sample endpoints.
  {
    FlowSample a = flow_sample({0.0}, {1.0}, 0.0);
    FlowSample b = flow_sample({0.0}, {1.0}, 1.0);
    FlowSample m = flow_sample({0.0}, {1.0}, 0.5);
    check("flow_sample endpoints and midpoint",
          a.x_t[0] == 0.0 && b.x_t[0] == 1.0 && m.x_t[0] == 0.5 &&
              m.v_target[0] == 1.0);
  }
  // Zero-model on a single sample: loss = ||x1 - x0||^2.
  {
    AffineVectorFieldModel model(2, 0);
    FlowBatch batch{{{0.0, 0.0}}, {{3.0, 4.0}}, {0.25}, {{}}};
    check("fm constant-zero single-sample = 25",
          std::fabs(flow_matching_loss(batch, model) - 25.0) < 1e-12);
  }
  // Gradient checks.
  {
    BigramTokenModel model(5, 11);
    TokenBatch batch{{{0, 3, 1, 4}, {2, 2, 0}}, 5};
    LossGrad g = ntp_loss_grad(batch, model);
    double err = grad_check(
        model, [&] { return ntp_loss(batch, model); }, g.grad, 1e-5);
    check("ntp grad check <= 1e-4", err <= 1e-4);
  }
  {
    AffineVectorFieldModel model(3, 2, 7);
    FlowBatch batch = small_flow_batch(21, 6, 3, 2);
    LossGrad g = flow_matching_loss_grad(batch, model);
    double err = grad_check(
        model, [&] { return flow_matching_loss(batch, model); }, g.grad, 1e-5);
    check("fm grad check <= 1e-4", err <= 1e-4);
  }
  // Joint linearity with the default weight.
  {
    ObjectiveWeights w;
    bool ok = std::fabs(joint_loss(2.0, 5.0, w) - 2.5) < 1e-12 &&
              joint_loss(3.25, 7.0, ObjectiveWeights{0.0}) == 3.25 &&
              joint_loss(0.0, 0.0, w) == 0.0;
    check("joint loss linearity (w = 0.1)", ok);
  }
  // Stage-freezing contract over 100 steps.
  {
    BigramTokenModel token(4, 3);
    AffineVectorFieldModel vf(2, 1, 5);
    TokenBatch tb{{{0, 1, 3, 2}}, 4};
    FlowBatch fb = small_flow_batch(9, 4, 2, 1);
    ObjectiveWeights w;
    bool ok = true;
    for (TrainingStage stage : {TrainingStage::reasoning, TrainingStage::edit,
                                TrainingStage::unified}) {
      BigramTokenModel tm = token;
      AffineVectorFieldModel vm = vf;
      auto t0 = tm.get_parameters();
      auto v0 = vm.get_parameters();
      for (int i = 0; i < 100; ++i)
        stage_step(tm, vm, tb, fb, w, 0.05, stage);
      bool token_frozen = tm.get_parameters() == t0;
      bool vf_frozen = vm.get_parameters() == v0;
      switch (stage) {
        case TrainingStage::reasoning: ok &= !token_frozen && vf_frozen; break;
        case TrainingStage::edit: ok &= token_frozen && !vf_frozen; break;
        case TrainingStage::unified: ok &= !token_frozen && !vf_frozen; break;
      }
    }
    check("stage freezing contract (100 steps each)", ok);
  }
  return failures;
}

}  // namespace reasonloop
