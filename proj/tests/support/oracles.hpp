#pragma once

// Reference computations shared by the unit tests and the acceptance suite.
// Everything here is written independently of the library code paths it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalcollab/dataset.hpp"
#include "causalcollab/discrete_scm.hpp"
#include "causalcollab/g_engine.hpp"
#include "causalcollab/random.hpp"

namespace oracle {

using namespace causalcollab;

inline Dataset random_dataset(int n, int T, int d, std::uint64_t seed, Split split = Split::observational) {
  Rng rng = make_rng(seed, {99});
  std::vector<Trajectory> trs;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    tr.id = "r" + std::to_string(i);
    tr.split = split;
    tr.y = uniform01(rng) < 0.5 ? 1 : 0;
    if (i % 3 != 0) tr.x = i % 2;
    for (int t = 0; t < T; ++t) {
      Step s;
      s.l.resize(d);
      s.a.resize(d);
      fill_standard_normal(rng, s.l);
      fill_standard_normal(rng, s.a);
      s.a *= 1e-3 * (i + 1);
      tr.steps.push_back(s);
    }
    trs.push_back(std::move(tr));
  }
  DatasetMeta meta;
  meta.T = T;
  meta.d = d;
  meta.seed = static_cast<std::int64_t>(seed);
  meta.source = "unit";
  return Dataset(meta, std::move(trs));
}

/// T = 1 data from a conditional PPCA model: a = B l + W s + noise, s ~ N(0, scale^2 I_K).
inline Dataset conditional_ppca_dataset(int n, int d, int K, double scale, std::uint64_t seed,
                                        Eigen::MatrixXd* W_out = nullptr) {
  Rng rng = make_rng(seed, {7, 7});
  Eigen::MatrixXd W(d, K), B(d, d);
  fill_standard_normal(rng, W);
  fill_standard_normal(rng, B);
  B *= 0.5;
  std::vector<Trajectory> trs;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    tr.id = "p" + std::to_string(i);
    Step st;
    st.l.resize(d);
    fill_standard_normal(rng, st.l);
    Eigen::VectorXd s(K), e(d);
    fill_standard_normal(rng, s);
    fill_standard_normal(rng, e);
    st.a = B * st.l + scale * W * s + e;
    tr.steps.push_back(st);
    trs.push_back(std::move(tr));
  }
  if (W_out) *W_out = W;
  DatasetMeta meta;
  meta.T = 1;
  meta.d = d;
  meta.source = "ppca";
  return Dataset(meta, std::move(trs));
}

/// Maximum-likelihood conditional PPCA subspace: the top-K eigenvectors of
/// the covariance of the residuals of a least-squares fit of a_1 on [l_1, 1].
inline Eigen::MatrixXd conditional_ppca_subspace(const Dataset& ds, int K) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const int d = ds.d();
  Eigen::MatrixXd C(n, d + 1), A(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    C.row(i).head(d) = ds[static_cast<std::size_t>(i)].steps[0].l.transpose();
    C(i, d) = 1.0;
    A.row(i) = ds[static_cast<std::size_t>(i)].steps[0].a.transpose();
  }
  const Eigen::MatrixXd coef = C.colPivHouseholderQr().solve(A);
  const Eigen::MatrixXd R = A - C * coef;
  const Eigen::MatrixXd S = R.transpose() * R / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  return es.eigenvectors().rightCols(K);
}

/// Largest principal angle in degrees, from the singular values of Qa^T Qb.
inline double largest_angle_degrees(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd Qa = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd Qb = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() * Eigen::MatrixXd::Identity(B.rows(), B.cols());
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(Qa.transpose() * Qb).singularValues();
  return std::acos(std::clamp(s.minCoeff(), -1.0, 1.0)) * 180.0 / 3.14159265358979323846;
}

template <class F>
Eigen::VectorXd numeric_gradient(F&& f, Eigen::VectorXd x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||).
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

/// Classical g-formula with every conditional read off the joint by brute
/// force: sum over l of E[Y | a, l] prod_t P(l_t | l_<t, a_<t).
inline double classical_gformula(const DiscreteScm& scm, const std::vector<int>& actions) {
  const int T = scm.T();
  std::map<std::vector<int>, double> mass;
  const auto joint = scm.joint();
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const auto v = scm.decode(i);
    for (std::size_t len = 0; len <= v.size(); ++len) mass[std::vector<int>(v.begin(), v.begin() + static_cast<long>(len))] += joint[i];
  }
  double total = 0.0;
  std::vector<int> l(static_cast<std::size_t>(T), 0);
  while (true) {
    double weight = 1.0;
    std::vector<int> prefix;
    for (int t = 0; t < T; ++t) {
      const double den = mass[prefix];
      prefix.push_back(l[static_cast<std::size_t>(t)]);
      weight *= mass[prefix] / den;
      prefix.push_back(actions[static_cast<std::size_t>(t)]);
    }
    total += weight * scm.spec().outcome[scm.encode_prefix(prefix)];
    int t = T - 1;
    while (t >= 0 && ++l[static_cast<std::size_t>(t)] == scm.spec().l_card[static_cast<std::size_t>(t)]) l[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) break;
  }
  return total;
}

template <class F>
void for_each_label_sequence(const DiscreteScm& scm, F&& f) {
  std::vector<int> c(static_cast<std::size_t>(scm.T()), 0);
  while (true) {
    f(c);
    int t = scm.T() - 1;
    while (t >= 0 && ++c[static_cast<std::size_t>(t)] == scm.spec().style_card[static_cast<std::size_t>(t)]) c[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) return;
  }
}

inline int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

inline Eigen::VectorXd one_hot(int value, int dim) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v[value] = 1.0;
  return v;
}

/// A discrete SCM embedded in vectors: contexts and style labels become
/// one-hot vectors and the exact observational conditionals serve as the
/// outcome and transition models.
struct EmbeddedScm {
  const DiscreteScm& scm;
  FeatureLayout layout;
  std::map<std::vector<int>, StyleConditionals> conditionals;
  L1Pool pool;
  CategoricalTransition transition;
  FunctionOutcome outcome;

  EmbeddedScm(const DiscreteScm& s, int act_dim)
      : scm(s),
        layout(make_layout(s, act_dim)),
        conditionals(all_conditionals(s)),
        pool(make_pool(s, layout.d)),
        transition([this](int t, const Eigen::VectorXd& cond) { return transition_probs(t, cond); }),
        outcome([this](const Eigen::VectorXd& phi) { return outcome_prob(phi); }) {}

  EvaluationUnit unit(const std::vector<int>& labels, std::uint64_t key = 0) const {
    EvaluationUnit u;
    for (int c : labels) u.act.push_back(one_hot(c, layout.act_dim));
    u.key = key;
    return u;
  }

 private:
  static FeatureLayout make_layout(const DiscreteScm& s, int act_dim) {
    FeatureLayout L;
    L.T = s.T();
    L.act_dim = act_dim;
    L.d = *std::max_element(s.spec().l_card.begin(), s.spec().l_card.end());
    return L;
  }
  static std::map<std::vector<int>, StyleConditionals> all_conditionals(const DiscreteScm& s) {
    std::map<std::vector<int>, StyleConditionals> out;
    for_each_label_sequence(s, [&](const std::vector<int>& c) { out.emplace(c, s.conditionals_given_styles(c)); });
    return out;
  }
  L1Pool make_pool(const DiscreteScm& s, int d) const {
    const int c1 = s.spec().l_card[0];
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, c1);
    Eigen::VectorXd w(c1);
    const auto& any = conditionals.begin()->second;
    for (int l = 0; l < c1; ++l) {
      v(l, l) = 1.0;
      w[l] = any.context[0][static_cast<std::size_t>(l)];
    }
    return L1Pool(v, w);
  }
  std::size_t context_index(const std::vector<int>& l) const {
    std::size_t idx = 0;
    for (std::size_t t = 0; t < l.size(); ++t) idx = idx * static_cast<std::size_t>(scm.spec().l_card[t]) + static_cast<std::size_t>(l[t]);
    return idx;
  }
  // Any completion of the label sequence gives the same conditionals for earlier steps.
  const StyleConditionals& lookup(std::vector<int> labels) const {
    labels.resize(static_cast<std::size_t>(scm.T()), 0);
    return conditionals.at(labels);
  }
  Eigen::VectorXd transition_probs(int t, const Eigen::VectorXd& cond) const {
    const int ad = layout.act_dim, d = layout.d;
    std::vector<int> labels, l;
    for (int s = 1; s < t; ++s) {
      labels.push_back(argmax(cond.segment((s - 1) * ad, ad)));
      l.push_back(argmax(cond.segment((t - 1) * ad + (s - 1) * d, d)));
    }
    const auto& c = lookup(labels);
    const int card = scm.spec().l_card[static_cast<std::size_t>(t - 1)];
    Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
    const std::size_t base = context_index(l) * static_cast<std::size_t>(card);
    for (int v = 0; v < card; ++v) p[v] = c.context[static_cast<std::size_t>(t - 1)][base + static_cast<std::size_t>(v)];
    return p;
  }
  double outcome_prob(const Eigen::VectorXd& phi) const {
    std::vector<int> labels, l;
    for (int t = 1; t <= layout.T; ++t) {
      labels.push_back(argmax(phi.segment(layout.act_offset(t), layout.act_dim)));
      l.push_back(argmax(phi.segment(layout.l_offset(t), layout.d)));
    }
    return conditionals.at(labels).outcome[context_index(l)];
  }
};

}  // namespace oracle
