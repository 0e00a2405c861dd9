// Copyright 2026 The RAM-CbR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient suites and weight-matrix invariant suites, run
// by the `selfcheck` command and by the test suites.

#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ram/model.hpp"
#include "ram/tensor.hpp"

namespace ram {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selfcheck {

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = lo + (hi - lo) * uniform01(rng);
  return m;
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

/// Small configuration used for composite checks (k <= 8, |D| <= 6,
/// |X|, |R| <= 4); dropout off.
inline ModelConfig toy_config(const Variant& variant, std::uint64_t seed) {
  ModelConfig c;
  c.vocab_size = 10;
  c.embed_dim = 3;
  c.hidden = 3;
  c.width = 4;
  c.dropout = 0.0;
  c.variant = variant;
  c.tau = 1.0;
  c.init_seed = seed;
  return c;
}

inline Sample toy_sample(Rng& rng, std::size_t vocab) {
  auto tokens = [&](std::size_t n) {
    std::vector<int> ids(n);
    for (auto& id : ids) id = static_cast<int>(kReservedTokens + rng() % (vocab - kReservedTokens));
    return ids;
  };
  std::vector<int> resp = tokens(dim(rng, 1, 3));
  resp.push_back(kEosId);
  return {tokens(dim(rng, 2, 6)), tokens(dim(rng, 1, 4)), resp};
}

/// Weighted sum with fixed random weights: a scalar with a non-degenerate
/// gradient for any op output.
inline Tensor probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed ^ 0xC0FFEEULL);
  return sum(mul(out, constant(random_matrix(rng, out.rows(), out.cols()))));
}

struct OpCase {
  std::string name;
  // Builds leaf inputs from the RNG and returns them plus the forward map.
  std::function<std::pair<std::vector<Tensor>, std::function<Tensor()>>(Rng&)> make;
};

inline std::vector<bool> random_prefix_mask(Rng& rng, std::size_t n) {
  const std::size_t valid = dim(rng, 1, n);
  std::vector<bool> m(n, false);
  for (std::size_t i = 0; i < valid; ++i) m[i] = true;
  return m;
}

inline std::vector<OpCase> op_cases() {
  using Inputs = std::vector<Tensor>;
  using Fn = std::function<Tensor()>;
  auto leaf = [](Rng& rng, std::size_t r, std::size_t c) { return parameter(random_matrix(rng, r, c)); };
  std::vector<OpCase> cases;
  auto binary_same = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    cases.push_back({name, [=](Rng& rng) {
                       const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
                       Tensor a = leaf(rng, r, c), b = leaf(rng, r, c);
                       return std::pair<Inputs, Fn>{{a, b}, [=] { return op(a, b); }};
                     }});
  };
  cases.push_back({"matmul", [=](Rng& rng) {
                     const auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
                     Tensor a = leaf(rng, m, k), b = leaf(rng, k, n);
                     return std::pair<Inputs, Fn>{{a, b}, [=] { return matmul(a, b); }};
                   }});
  cases.push_back({"matmul_nt", [=](Rng& rng) {
                     const auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
                     Tensor a = leaf(rng, m, k), b = leaf(rng, n, k);
                     return std::pair<Inputs, Fn>{{a, b}, [=] { return matmul_nt(a, b); }};
                   }});
  cases.push_back({"transpose", [=](Rng& rng) {
                     Tensor a = leaf(rng, dim(rng, 1, 4), dim(rng, 1, 4));
                     return std::pair<Inputs, Fn>{{a}, [=] { return transpose(a); }};
                   }});
  binary_same("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary_same("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  binary_same("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  binary_same("mse", [](const Tensor& a, const Tensor& b) { return mse(a, b); });
  cases.push_back({"add_row", [=](Rng& rng) {
                     const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
                     Tensor a = leaf(rng, r, c), b = leaf(rng, 1, c);
                     return std::pair<Inputs, Fn>{{a, b}, [=] { return add_row(a, b); }};
                   }});
  cases.push_back({"concat", [=](Rng& rng) {
                     const auto r = dim(rng, 1, 4);
                     Tensor a = leaf(rng, r, dim(rng, 1, 3)), b = leaf(rng, r, dim(rng, 1, 3));
                     return std::pair<Inputs, Fn>{{a, b}, [=] { return concat_cols(a, b); }};
                   }});
  cases.push_back({"slice_and_stack", [=](Rng& rng) {
                     Tensor a = leaf(rng, dim(rng, 2, 4), dim(rng, 2, 4));
                     return std::pair<Inputs, Fn>{{a}, [=] {
                                                    return stack_rows({slice_cols(row(a, 1), 1, a.cols() - 1),
                                                                       slice_cols(row(a, 0), 0, a.cols() - 1)});
                                                  }};
                   }});
  cases.push_back({"gather_rows", [=](Rng& rng) {
                     Tensor t = leaf(rng, 5, dim(rng, 1, 3));
                     std::vector<int> ids{1, 3, 0, 1, 4};
                     return std::pair<Inputs, Fn>{{t}, [=] { return gather_rows(t, ids, 0); }};
                   }});
  cases.push_back({"affine", [=](Rng& rng) {
                     Tensor a = leaf(rng, dim(rng, 1, 4), dim(rng, 1, 4));
                     return std::pair<Inputs, Fn>{{a}, [=] { return affine(a, -1.5, 0.25); }};
                   }});
  cases.push_back({"mul_const", [=](Rng& rng) {
                     const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
                     Tensor a = leaf(rng, r, c);
                     Matrix m = random_matrix(rng, r, c);
                     return std::pair<Inputs, Fn>{{a}, [=] { return mul_const(a, m); }};
                   }});
  for (auto kind : {NonlinearKind::kSigmoid, NonlinearKind::kTanh, NonlinearKind::kRelu}) {
    const char* names[] = {"sigmoid", "tanh", "relu"};
    cases.push_back({names[static_cast<int>(kind)], [=](Rng& rng) {
                       Matrix v = random_matrix(rng, dim(rng, 1, 4), dim(rng, 1, 4));
                       // keep ReLU inputs away from the kink
                       for (auto& x : v.data()) x = x < 0 ? x - 0.05 : x + 0.05;
                       Tensor a = parameter(v);
                       return std::pair<Inputs, Fn>{{a}, [=] { return nonlinear(a, kind); }};
                     }});
  }
  cases.push_back({"masked_row_softmax", [=](Rng& rng) {
                     const auto r = dim(rng, 1, 4), c = dim(rng, 1, 5);
                     Tensor a = parameter(random_matrix(rng, r, c, -3.0, 3.0));
                     auto cm = random_prefix_mask(rng, c), rm = random_prefix_mask(rng, r);
                     return std::pair<Inputs, Fn>{{a}, [=] { return masked_row_softmax(a, cm, rm); }};
                   }});
  cases.push_back({"mean", [=](Rng& rng) {
                     Tensor a = leaf(rng, dim(rng, 1, 4), dim(rng, 1, 4));
                     return std::pair<Inputs, Fn>{{a}, [=] { return mean(a); }};
                   }});
  cases.push_back({"nll_softmax", [=](Rng& rng) {
                     const auto r = dim(rng, 1, 4), v = dim(rng, 2, 6);
                     Tensor a = parameter(random_matrix(rng, r, v, -2.0, 2.0));
                     std::vector<int> t(r);
                     for (auto& x : t) x = static_cast<int>(rng() % v);
                     return std::pair<Inputs, Fn>{{a}, [=] { return nll_softmax(a, t); }};
                   }});
  cases.push_back({"lstm_step", [=](Rng& rng) {
                     const auto d = dim(rng, 1, 3), h = dim(rng, 1, 3);
                     LstmParams p{leaf(rng, d, 4 * h), leaf(rng, h, 4 * h), leaf(rng, 1, 4 * h)};
                     Tensor x = leaf(rng, 1, d), h0 = leaf(rng, 1, h), c0 = leaf(rng, 1, h);
                     return std::pair<Inputs, Fn>{{p.input_weight, p.hidden_weight, p.bias, x, h0, c0}, [=] {
                                                    auto s = lstm_step(p, x, {h0, c0});
                                                    return concat_cols(s.h, s.c);
                                                  }};
                   }});
  cases.push_back({"gru_unrolled_3", [=](Rng& rng) {
                     const auto d = dim(rng, 1, 3), h = dim(rng, 1, 3);
                     GruParams p{leaf(rng, d, h), leaf(rng, h, h), leaf(rng, 1, h),
                                 leaf(rng, d, h), leaf(rng, h, h), leaf(rng, 1, h),
                                 leaf(rng, d, h), leaf(rng, h, h), leaf(rng, 1, h)};
                     Tensor x = leaf(rng, 3, d), h0 = leaf(rng, 1, h);
                     Inputs in{p.w_update, p.u_update, p.b_update, p.w_reset, p.u_reset, p.b_reset,
                               p.w_candidate, p.u_candidate, p.b_candidate, x, h0};
                     return std::pair<Inputs, Fn>{in, [=] {
                                                    Tensor s = h0;
                                                    for (std::size_t t = 0; t < 3; ++t) s = gru_step(p, row(x, t), s);
                                                    return s;
                                                  }};
                   }});
  cases.push_back({"gumbel_sigmoid", [=](Rng& rng) {
                     const auto c = dim(rng, 1, 5);
                     Tensor b = leaf(rng, 1, c);
                     Matrix noise(1, c);
                     for (auto& v : noise.data()) v = std::log(uniform01(rng)) - std::log1p(-uniform01(rng));
                     return std::pair<Inputs, Fn>{{b}, [=] { return gumbel_sigmoid(b, noise, 0.7); }};
                   }});
  cases.push_back({"refine_memory_rti", [=](Rng& rng) {
                     const auto n = dim(rng, 2, 6), k = dim(rng, 1, 4), r = dim(rng, 1, 4);
                     Tensor d = leaf(rng, n, k), resp = leaf(rng, r, k), fin = leaf(rng, 1, k);
                     auto mask = random_prefix_mask(rng, n);
                     return std::pair<Inputs, Fn>{{d, fin}, [=] {
                                                    ContextAwareDoc D{mask_rows(d, mask), mask};
                                                    EncodedSequence e{resp, std::vector<bool>(r, true), fin};
                                                    return refine_memory(D, rti_weights(D, e)).M;
                                                  }};
                   }});
  cases.push_back({"refine_memory_rpi", [=](Rng& rng) {
                     const auto n = dim(rng, 2, 6), k = dim(rng, 1, 4), r = dim(rng, 1, 4);
                     Tensor d = leaf(rng, n, k), resp = leaf(rng, r, k), fin = leaf(rng, 1, k);
                     auto mask = random_prefix_mask(rng, n);
                     auto rmask = random_prefix_mask(rng, r);
                     return std::pair<Inputs, Fn>{{d, resp}, [=] {
                                                    ContextAwareDoc D{mask_rows(d, mask), mask};
                                                    EncodedSequence e{mask_rows(resp, rmask), rmask, fin};
                                                    return refine_memory(D, rpi_weights(D, e)).M;
                                                  }};
                   }});
  cases.push_back({"student_beta", [=](Rng& rng) {
                     const auto n = dim(rng, 2, 6), k = dim(rng, 1, 4), x = dim(rng, 1, 4);
                     Tensor d = leaf(rng, n, k), xs = leaf(rng, x, k), W = leaf(rng, k, k);
                     Tensor w1 = leaf(rng, k, k), b1 = leaf(rng, 1, k), w2 = leaf(rng, k, 1), b2 = leaf(rng, 1, 1);
                     return std::pair<Inputs, Fn>{{d, xs, W, w1, b1, w2, b2}, [=] {
                                                    ContextAwareDoc D{d, std::vector<bool>(n, true)};
                                                    EncodedSequence X{xs, std::vector<bool>(x, true), row(xs, 0)};
                                                    Tensor H = Student::student_hidden(D, X, W);
                                                    return Student::estimate_beta(H, D.mask, w1, b1, w2, b2);
                                                  }};
                   }});
  cases.push_back({"student_B", [=](Rng& rng) {
                     const auto n = dim(rng, 2, 6), k = dim(rng, 1, 4), x = dim(rng, 1, 4);
                     Tensor d = leaf(rng, n, k), xs = leaf(rng, x, k), W = leaf(rng, k, k), Wa = leaf(rng, k, k);
                     return std::pair<Inputs, Fn>{{d, xs, W, Wa}, [=] {
                                                    ContextAwareDoc D{d, std::vector<bool>(n, true)};
                                                    EncodedSequence X{xs, std::vector<bool>(x, true), row(xs, 0)};
                                                    Tensor H = Student::student_hidden(D, X, W);
                                                    return Student::estimate_B(H, D.mask, Wa);
                                                  }};
                   }});
  return cases;
}

/// Every op in `op_cases` over `seeds` random shapes/inputs.
inline std::vector<CheckOutcome> gradient_op_checks(std::size_t seeds, double eps = 1e-4, double tol = 1e-4) {
  std::vector<CheckOutcome> out;
  for (const auto& c : op_cases()) {
    double worst = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(1000 + s);
      auto [inputs, f] = c.make(rng);
      auto scalar = [f = f, s] { return probe(f(), s); };
      worst = std::max(worst, finite_difference_check(scalar, inputs, eps).max_rel_error);
    }
    std::ostringstream os;
    os << "max rel err " << worst << " over " << seeds << " seeds";
    out.push_back({"grad/" + c.name, worst < tol, os.str()});
  }
  return out;
}

enum class CompositeLoss { kTeacher, kStudent, kBase };

/// Full-model losses on toy samples: teacher objective w.r.t. phi and
/// theta_t, student objective w.r.t. theta_s (the distillation target is a
/// constant). Gumbel noise is frozen by reseeding the RNG on every call.
struct CompositeCheck {
  GradCheckResult result;
  // Violations re-measured at 10x the step: agreement there separates FD
  // round-off on near-zero gradients from a wrong backward.
  std::size_t coarse_agree = 0;
  double largest_violating_grad = 0.0;
};

inline CompositeCheck composite_check(CompositeLoss which, const Variant& variant, std::uint64_t seed,
                                      double eps = 1e-4, double tol = 1e-4,
                                      double scale = 0.8660254037844386) {
  Model model(toy_config(variant, seed));
  // Default init bounds shrink signals through the stacked layers until the
  // gradients sit at FD round-off level; redraw every weight from U(-1, 1).
  Rng data_rng(seed * 7919 + 13);
  for (auto& e : model.params().entries()) {
    auto& v = e.tensor.mutable_value();
    const bool pad_row = e.name == "embedding";
    for (std::size_t i = pad_row ? v.cols() : 0; i < v.size(); ++i) v[i] = scale * (2.0 * uniform01(data_rng) - 1.0);
  }
  const Sample sample = toy_sample(data_rng, model.config().vocab_size);
  const auto view = SampleView::from(sample);
  TagSet tags = which == CompositeLoss::kStudent ? TagSet{ParamTag::kStudent}
                : which == CompositeLoss::kBase  ? TagSet{ParamTag::kBase}
                                                 : TagSet{ParamTag::kBase, ParamTag::kTeacher};
  model.params().set_trainable(tags);
  const Model& m = model;
  auto f = [&m, view, which, seed] {
    Rng noise(seed + 99);
    ForwardContext ctx{true, &noise, false};
    switch (which) {
      case CompositeLoss::kTeacher: return m.teacher_loss(view, ctx);
      case CompositeLoss::kStudent: return m.student_loss(view, ctx, 1.0).total;
      case CompositeLoss::kBase: return m.base_loss(view, ctx);
    }
    return Tensor();
  };
  auto xs = model.params().tensors(tags);
  CompositeCheck c{finite_difference_check(f, xs, eps, tol), 0, 0.0};
  for (const auto& v : c.result.violations) {
    c.largest_violating_grad = std::max({c.largest_violating_grad, std::abs(v.analytic), std::abs(v.numeric)});
    Matrix& x = xs[v.tensor].mutable_value();
    const double orig = x[v.index], coarse = 10.0 * eps;
    x[v.index] = orig + coarse;
    const double fp = f().item();
    x[v.index] = orig - coarse;
    const double fm = f().item();
    x[v.index] = orig;
    const double numeric = (fp - fm) / (2.0 * coarse);
    if (std::abs(numeric - v.analytic) < tol * std::max({std::abs(numeric), std::abs(v.analytic), 1e-8}))
      ++c.coarse_agree;
  }
  return c;
}

inline std::vector<CheckOutcome> gradient_composite_checks(std::size_t seeds, double eps = 1e-4,
                                                           double tol = 1e-4) {
  std::vector<CheckOutcome> out;
  struct Item {
    const char* name;
    CompositeLoss loss;
    Variant variant;
  };
  const std::vector<Item> items{
      {"teacher-rti-cont", CompositeLoss::kTeacher, {Importance::kToken, false}},
      {"teacher-rti-binary", CompositeLoss::kTeacher, {Importance::kToken, true}},
      {"teacher-rpi-cont", CompositeLoss::kTeacher, {Importance::kPairwise, false}},
      {"teacher-rpi-binary", CompositeLoss::kTeacher, {Importance::kPairwise, true}},
      {"student-rti-cont", CompositeLoss::kStudent, {Importance::kToken, false}},
      {"student-rti-binary", CompositeLoss::kStudent, {Importance::kToken, true}},
      {"student-rpi-cont", CompositeLoss::kStudent, {Importance::kPairwise, false}},
      {"student-rpi-binary", CompositeLoss::kStudent, {Importance::kPairwise, true}},
      {"base", CompositeLoss::kBase, {}},
  };
  for (const auto& it : items) {
    double worst = 0.0, largest = 0.0;
    std::size_t checked = 0, violations = 0, agree = 0, failed_seeds = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      auto c = composite_check(it.loss, it.variant, 500 + s, eps, tol);
      worst = std::max(worst, c.result.max_rel_error);
      checked += c.result.checked;
      violations += c.result.violations.size();
      failed_seeds += c.result.violations.empty() ? 0 : 1;
      agree += c.coarse_agree;
      largest = std::max(largest, c.largest_violating_grad);
    }
    std::ostringstream os;
    os << "max rel err " << worst << " over " << seeds << " seeds, " << checked << " coordinates";
    if (violations > 0) {
      os << "; " << violations << " coordinates in " << failed_seeds << " seeds exceed " << tol
         << ", all with |grad| <= " << largest << ", " << agree << " of them within " << tol << " at eps "
         << 10.0 * eps;
    }
    out.push_back({std::string("grad/") + it.name, worst < tol, os.str()});
  }
  return out;
}

/// Smallest eigenvalue of the valid n x n block of a symmetric matrix.
inline double min_eigenvalue(const Matrix& m, std::size_t n) {
  Eigen::MatrixXd e(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) e(i, j) = m(i, j);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// Structural properties of G on random inputs with random padding.
inline std::vector<CheckOutcome> weight_invariant_checks(std::size_t trials) {
  std::size_t rti_bad = 0, sym_bad = 0, psd_bad = 0, binary_bad = 0, unit_bad = 0;
  double min_eig = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(77 + t);
    const auto n = dim(rng, 1, 6), k = dim(rng, 1, 5), r = dim(rng, 1, 4);
    const auto mask = random_prefix_mask(rng, n);
    const auto valid = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    ContextAwareDoc D{mask_rows(constant(random_matrix(rng, n, k, -2, 2)), mask), mask};
    EncodedSequence R{constant(random_matrix(rng, r, k, -2, 2)), std::vector<bool>(r, true),
                      constant(random_matrix(rng, 1, k, -2, 2))};
    const WeightMatrix rti = rti_weights(D, R);
    const Matrix& G = rti.G.value();
    for (std::size_t i = 1; i < valid; ++i)
      for (std::size_t j = 0; j < valid; ++j)
        if (G(i, j) != G(0, j)) ++rti_bad;
    const WeightMatrix rpi = rpi_weights(D, R);
    const Matrix& B = rpi.B->value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (std::abs(B(i, j) - B(j, i)) > 1e-6) ++sym_bad;
    const double eig = min_eigenvalue(B, valid);
    min_eig = std::min(min_eig, eig);
    if (eig < -1e-8) ++psd_bad;
    const auto rb = rti_binarize(*rti.beta, mask, BinarizeMode::kPredict, 1.0, rng);
    const auto pb = rpi_binarize(*rpi.B, mask, BinarizeMode::kPredict, 1.0, rng);
    for (const Matrix* m : {&rb.G.value(), &pb.G.value()})
      for (double v : m->data())
        if (v != 0.0 && v != 1.0) ++binary_bad;
    if (!bitwise_equal(refine_memory(D, unit_weights(mask)).M.value(), self_attention(D).M.value())) ++unit_bad;
  }
  auto mk = [](const char* name, std::size_t bad, std::string extra = {}) {
    return CheckOutcome{name, bad == 0, std::to_string(bad) + " violations" + extra};
  };
  std::ostringstream eig;
  eig << ", min eigenvalue " << min_eig;
  return {mk("invariant/rti-constant-columns", rti_bad), mk("invariant/rpi-symmetric", sym_bad),
          mk("invariant/rpi-psd", psd_bad, eig.str()), mk("invariant/binary-predict-support", binary_bad),
          mk("invariant/unit-g-is-base", unit_bad)};
}

}  // namespace selfcheck

inline std::vector<CheckOutcome> run_selfcheck(std::size_t seeds = 20) {
  auto out = selfcheck::gradient_op_checks(seeds);
  auto comp = selfcheck::gradient_composite_checks(seeds);
  auto inv = selfcheck::weight_invariant_checks(1000);
  out.insert(out.end(), comp.begin(), comp.end());
  out.insert(out.end(), inv.begin(), inv.end());
  return out;
}

}  // namespace ram
