// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Teacher and student objectives, Adam with global-norm clipping, and the
// alternating teacher/student schedule with early stopping.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ram/checkpoint.hpp"
#include "ram/model.hpp"

namespace ram {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 32;
  double lambda = 1.0;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::size_t eval_every = 0;  // steps between validation checks; 0 = once per epoch
  double clip_norm = 5.0;      // <= 0 disables clipping
  std::uint64_t seed = 1;
  double divergence_factor = 10.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  }
};

enum class Phase { kTeacher, kStudent, kBase };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kTeacher: return "teacher";
    case Phase::kStudent: return "student";
    case Phase::kBase: return "base";
  }
  return "?";
}

inline char phase_letter(Phase p) { return p == Phase::kTeacher ? 'T' : p == Phase::kStudent ? 'S' : 'B'; }

inline TagSet active_tags(Phase p) {
  switch (p) {
    case Phase::kTeacher: return {ParamTag::kBase, ParamTag::kTeacher};
    case Phase::kStudent: return {ParamTag::kStudent};
    case Phase::kBase: return {ParamTag::kBase};
  }
  return {};
}

/// Scales all gradients in `params` so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
inline double clip_gradients(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (double g : p.grad().data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad().data()) g *= s;
  }
  return norm;
}

/// Adam update of every entry whose tag is active, after global clipping.
/// Returns the pre-clip gradient norm.
inline double optimizer_update(ParamStore& store, const TagSet& active, const TrainConfig& cfg) {
  std::vector<Tensor> params = store.tensors(active);
  const double norm = clip_gradients(params, cfg.clip_norm);
  for (auto& e : store.entries()) {
    if (!active.contains(e.tag)) continue;
    Matrix& w = e.tensor.mutable_value();
    if (e.first_moment.size() != w.size()) {
      e.first_moment = Matrix(w.rows(), w.cols());
      e.second_moment = Matrix(w.rows(), w.cols());
      e.steps = 0;
    }
    ++e.steps;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(e.steps));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(e.steps));
    const bool has = e.tensor.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? e.tensor.grad()[i] : 0.0;
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
      v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
      w[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
    }
  }
  return norm;
}

struct LogRecord {
  Phase phase;
  std::size_t step;
  double loss;
  std::optional<double> mse;
  std::optional<double> val_loss;
};

struct PhaseReport {
  Phase phase;
  std::size_t round = 0;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  double initial_val = 0.0;
  double best_val = 0.0;
};

struct TrainingHooks {
  std::function<void(Phase)> before_step;
  std::function<void(Phase)> after_step;
  std::function<void(Phase, std::size_t round)> on_phase_start;
  std::function<void(const PhaseReport&)> on_phase_end;
  std::function<void(const LogRecord&)> on_log;
  std::string checkpoint_dir;  // empty: no checkpoints
};

struct AlternateResult {
  std::vector<Phase> transcript;
  std::vector<PhaseReport> phases;

  std::string transcript_string() const {
    std::string s;
    for (auto p : transcript) s.push_back(phase_letter(p));
    return s;
  }
};

class Trainer {
 public:
  Trainer(Model& model, TrainConfig config) : model_(model), config_(config), rng_(config.seed) {
    config_.validate();
  }

  Rng& rng() { return rng_; }
  const TrainConfig& config() const { return config_; }
  Model& model() { return model_; }

  /// Enables gradients for the phase's tags. Moments of tensors that were
  /// frozen in the previous phase are discarded.
  void begin_phase(Phase phase) {
    const TagSet next = active_tags(phase);
    for (auto& e : model_.params().entries()) {
      const bool was = active_ && active_->contains(e.tag);
      if (next.contains(e.tag) && !was) {
        e.first_moment = Matrix();
        e.second_moment = Matrix();
        e.steps = 0;
      }
    }
    active_ = next;
    model_.params().set_trainable(next);
  }

  /// One update of phi and theta_t on the response-aware objective.
  double teacher_step(const Batch& batch) { return loss_step(Phase::kTeacher, batch).first; }

  /// One update of phi on the base (all-ones weights) objective.
  double base_step(const Batch& batch) { return loss_step(Phase::kBase, batch).first; }

  /// One update of theta_s; returns (mean nll, mean mse).
  std::pair<double, double> student_step(const Batch& batch) { return loss_step(Phase::kStudent, batch); }

  /// Mean per-sample validation objective in prediction mode.
  double validation_loss(Phase phase, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    auto& store = model_.params();
    std::vector<bool> previous;
    for (const auto& e : store.entries()) previous.push_back(e.tensor.requires_grad());
    store.set_trainable({});
    Rng eval_rng(config_.seed ^ 0x5EED5EEDULL);
    ForwardContext ctx{false, &eval_rng, false};
    double total = 0.0;
    for (const auto& s : samples) {
      const auto view = SampleView::from(s);
      switch (phase) {
        case Phase::kTeacher: total += model_.teacher_loss(view, ctx).item(); break;
        case Phase::kBase: total += model_.base_loss(view, ctx).item(); break;
        case Phase::kStudent: total += model_.student_loss(view, ctx, config_.lambda).total.item(); break;
      }
    }
    for (std::size_t i = 0; i < previous.size(); ++i)
      store.entries()[i].tensor.set_requires_grad(previous[i]);
    return total / static_cast<double>(samples.size());
  }

  /// Mean distillation error MSE(teacher importance, student estimate).
  double distillation_mse(std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    auto& store = model_.params();
    std::vector<bool> previous;
    for (const auto& e : store.entries()) previous.push_back(e.tensor.requires_grad());
    store.set_trainable({});
    ForwardContext ctx;
    double total = 0.0;
    for (const auto& s : samples) {
      const auto view = SampleView::from(s);
      EncodedInputs in = model_.encode_inputs(view, ctx);
      total += mse(model_.student_importance(in), model_.distillation_target(in, view),
                   model_.importance_mask(in.D.mask))
                   .item();
    }
    for (std::size_t i = 0; i < previous.size(); ++i)
      store.entries()[i].tensor.set_requires_grad(previous[i]);
    return total / static_cast<double>(samples.size());
  }

  /// Trains one phase until validation stops improving for `patience`
  /// checks or `max_epochs` is reached, then restores the best parameters
  /// of the active tags.
  PhaseReport run_phase(Phase phase, std::span<const Sample> train, std::span<const Sample> valid,
                        const TrainingHooks& hooks = {}, std::size_t round = 0) {
    if (train.empty()) throw DataError("training split is empty");
    begin_phase(phase);
    if (hooks.on_phase_start) hooks.on_phase_start(phase, round);
    auto& store = model_.params();
    const TagSet active = active_tags(phase);

    PhaseReport report{phase, round, 0, 0, 0.0, 0.0};
    report.initial_val = validation_loss(phase, valid);
    report.best_val = report.initial_val;
    std::vector<Matrix> best = store.snapshot();
    std::size_t bad_checks = 0;
    auto abort_with = [&](const std::string& why) {
      store.restore(best, active);
      if (!hooks.checkpoint_dir.empty()) save_checkpoint(store, hooks.checkpoint_dir + "/last_good.ckpt");
      throw DivergenceError(why);
    };

    auto check = [&](double loss, std::optional<double> err) {
      const double val = validation_loss(phase, valid);
      if (val < report.best_val) {
        report.best_val = val;
        best = store.snapshot();
        bad_checks = 0;
      } else {
        ++bad_checks;
      }
      log(hooks, {phase, report.steps, loss, err, val});
    };

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config_.max_epochs && bad_checks < config_.patience; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_() % i]);
      double last_loss = 0.0;
      std::optional<double> last_err;
      for (std::size_t start = 0; start < order.size() && bad_checks < config_.patience;
           start += config_.batch_size) {
        std::vector<Sample> chunk;
        for (std::size_t i = start; i < std::min(order.size(), start + config_.batch_size); ++i)
          chunk.push_back(train[order[i]]);
        Batch batch = make_batch(chunk);
        if (hooks.before_step) hooks.before_step(phase);
        double loss = 0.0, err = 0.0;
        try {
          std::tie(loss, err) = loss_step(phase, batch);
        } catch (const DivergenceError& e) {
          abort_with(e.what());
        }
        if (hooks.after_step) hooks.after_step(phase);
        ++report.steps;
        last_loss = loss;
        last_err = phase == Phase::kStudent ? std::optional<double>(err) : std::nullopt;
        // The reference is the first loss this phase kind ever produced, not
        // the first of the current round: a converged model's minibatch loss
        // is near zero and fluctuates by far more than 10x.
        const auto [it, fresh] = initial_loss_.try_emplace(phase, loss);
        if (!fresh && loss > config_.divergence_factor * std::abs(it->second)) {
          abort_with(std::string(phase_name(phase)) + " loss " + std::to_string(loss) + " exceeded " +
                     std::to_string(config_.divergence_factor) + "x the initial loss " +
                     std::to_string(it->second));
        }
        if (config_.eval_every > 0 && report.steps % config_.eval_every == 0) {
          check(loss, last_err);
        } else {
          log(hooks, {phase, report.steps, loss, last_err, std::nullopt});
        }
      }
      ++report.epochs;
      if (config_.eval_every == 0) check(last_loss, last_err);
    }
    store.restore(best, active);
    if (!hooks.checkpoint_dir.empty()) {
      save_checkpoint(store, hooks.checkpoint_dir + "/round" + std::to_string(round) + "_" +
                                 phase_name(phase) + ".ckpt");
    }
    if (hooks.on_phase_end) hooks.on_phase_end(report);
    return report;
  }

  /// `rounds` repetitions of (teacher to convergence, student to convergence).
  AlternateResult alternate(std::span<const Sample> train, std::span<const Sample> valid,
                            std::size_t rounds, const TrainingHooks& hooks = {}) {
    AlternateResult result;
    for (std::size_t r = 0; r < rounds; ++r) {
      for (Phase p : {Phase::kTeacher, Phase::kStudent}) {
        result.transcript.push_back(p);
        result.phases.push_back(run_phase(p, train, valid, hooks, r));
      }
    }
    return result;
  }

 private:
  void log(const TrainingHooks& hooks, const LogRecord& rec) {
    if (hooks.on_log) hooks.on_log(rec);
  }

  std::pair<double, double> loss_step(Phase phase, const Batch& batch) {
    if (batch.size() == 0) throw DataError("empty batch");
    if (!active_ || !(*active_ == active_tags(phase))) begin_phase(phase);
    auto& store = model_.params();
    store.zero_grad();
    ForwardContext ctx{true, &rng_, false};
    std::vector<Tensor> totals;
    double nll_sum = 0.0, mse_sum = 0.0;
    for (const auto& row : batch.rows) {
      switch (phase) {
        case Phase::kTeacher: totals.push_back(model_.teacher_loss(row, ctx)); break;
        case Phase::kBase: totals.push_back(model_.base_loss(row, ctx)); break;
        case Phase::kStudent: {
          auto l = model_.student_loss(row, ctx, config_.lambda);
          mse_sum += l.mse.item();
          totals.push_back(l.total);
          nll_sum += l.nll.item();
          continue;
        }
      }
      nll_sum += totals.back().item();
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    Tensor loss = scale(sum(stack_rows(totals)), inv);
    backward(loss);
    if (!std::isfinite(loss.item())) throw DivergenceError(non_finite_report(phase, loss.item()));
    optimizer_update(store, active_tags(phase), config_);
    return {nll_sum * inv, mse_sum * inv};
  }

  std::string non_finite_report(Phase phase, double loss) const {
    std::vector<std::pair<double, std::string>> worst;
    for (const auto& e : model_.params().entries()) {
      if (!e.tensor.has_grad()) continue;
      double mx = 0.0;
      for (double g : e.tensor.grad().data()) mx = std::isfinite(g) ? std::max(mx, std::abs(g)) : INFINITY;
      worst.emplace_back(mx, e.name);
    }
    std::sort(worst.rbegin(), worst.rend());
    std::ostringstream os;
    os << phase_name(phase) << " loss is non-finite (" << loss << "); largest |grad|:";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, worst.size()); ++i)
      os << ' ' << worst[i].second << '=' << worst[i].first;
    return os.str();
  }

  Model& model_;
  TrainConfig config_;
  Rng rng_;
  std::optional<TagSet> active_;
  std::map<Phase, double> initial_loss_;
};

}  // namespace ram
