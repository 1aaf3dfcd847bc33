#include "causalcollab/discrete_scm.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "causalcollab/errors.hpp"
#include "causalcollab/random.hpp"

namespace causalcollab {

namespace {

constexpr double kRowTolerance = 1e-12;

std::string describe_prefix(const DiscreteScm& scm, std::size_t prefix, int length) {
  std::vector<int> vals(static_cast<std::size_t>(length));
  for (int p = length - 1; p >= 0; --p) {
    vals[static_cast<std::size_t>(p)] = static_cast<int>(prefix % static_cast<std::size_t>(scm.radix(p)));
    prefix /= static_cast<std::size_t>(scm.radix(p));
  }
  std::ostringstream os;
  os << '(';
  for (int p = 0; p < length; ++p) {
    if (p) os << ", ";
    os << (p % 2 == 0 ? "L" : "A") << (p / 2 + 1) << '=' << vals[static_cast<std::size_t>(p)];
  }
  os << ')';
  return os.str();
}

}  // namespace

DiscreteScm DiscreteScm::build(DiscreteScmSpec spec) {
  const int T = spec.T;
  if (T < 1) throw std::invalid_argument("discrete SCM: T must be >= 1");
  auto check_cards = [&](const std::vector<int>& c, const char* name) {
    if (static_cast<int>(c.size()) != T) throw std::invalid_argument(std::string("discrete SCM: ") + name + " needs T entries");
    for (int v : c)
      if (v < 1 || v > kMaxCard)
        throw std::invalid_argument(std::string("discrete SCM: ") + name + " entries must lie in [1, 8]");
  };
  check_cards(spec.l_card, "l_card");
  check_cards(spec.a_card, "a_card");
  check_cards(spec.style_card, "style_card");

  DiscreteScm scm;
  for (int t = 0; t < T; ++t) {
    scm.radices_.push_back(spec.l_card[static_cast<std::size_t>(t)]);
    scm.radices_.push_back(spec.a_card[static_cast<std::size_t>(t)]);
  }
  scm.prefix_counts_.push_back(1);
  for (int r : scm.radices_) scm.prefix_counts_.push_back(scm.prefix_counts_.back() * static_cast<std::size_t>(r));

  const int P = 2 * T;
  if (static_cast<int>(spec.tables.size()) != P) throw std::invalid_argument("discrete SCM: need 2T conditional tables");
  for (int p = 0; p < P; ++p) {
    const auto& tab = spec.tables[static_cast<std::size_t>(p)];
    if (tab.size() != scm.prefix_counts_[static_cast<std::size_t>(p)])
      throw std::invalid_argument("discrete SCM: table " + std::to_string(p) + " has wrong row count");
    for (std::size_t h = 0; h < tab.size(); ++h) {
      if (static_cast<int>(tab[h].size()) != scm.radices_[static_cast<std::size_t>(p)])
        throw std::invalid_argument("discrete SCM: table " + std::to_string(p) + " row has wrong width");
      double sum = 0.0;
      for (double v : tab[h]) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("discrete SCM: probability outside [0, 1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "discrete SCM: row " << describe_prefix(scm, h, p) << " of table " << p << " sums to " << sum
           << " (not normalized)";
        throw std::invalid_argument(os.str());
      }
    }
  }
  if (spec.outcome.size() != scm.prefix_counts_.back())
    throw std::invalid_argument("discrete SCM: outcome table has wrong size");
  for (double v : spec.outcome)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("discrete SCM: outcome probability outside [0, 1]");
  if (static_cast<int>(spec.style.size()) != T) throw std::invalid_argument("discrete SCM: need T style maps");
  for (int t = 0; t < T; ++t) {
    const auto& f = spec.style[static_cast<std::size_t>(t)];
    if (f.size() != scm.prefix_counts_[static_cast<std::size_t>(2 * t + 2)])
      throw std::invalid_argument("discrete SCM: style map " + std::to_string(t) + " has wrong size");
    for (int c : f)
      if (c < 0 || c >= spec.style_card[static_cast<std::size_t>(t)])
        throw std::invalid_argument("discrete SCM: style label out of range");
  }
  scm.spec_ = std::move(spec);

  // Observational joint by forward products over prefixes.
  std::vector<double> prefix_prob{1.0};
  std::vector<std::vector<double>> prefix_probs{prefix_prob};
  for (int p = 0; p < P; ++p) {
    const int r = scm.radices_[static_cast<std::size_t>(p)];
    std::vector<double> next(prefix_prob.size() * static_cast<std::size_t>(r));
    for (std::size_t h = 0; h < prefix_prob.size(); ++h)
      for (int v = 0; v < r; ++v)
        next[h * static_cast<std::size_t>(r) + static_cast<std::size_t>(v)] =
            prefix_prob[h] * scm.spec_.tables[static_cast<std::size_t>(p)][h][static_cast<std::size_t>(v)];
    prefix_prob = std::move(next);
    prefix_probs.push_back(prefix_prob);
  }
  scm.joint_ = prefix_prob;

  // Positivity: every label with positive marginal must be reachable from every reachable history.
  for (int t = 0; t < T; ++t) {
    const int pa = 2 * t + 1;
    const int r = scm.radices_[static_cast<std::size_t>(pa)];
    const int nc = scm.spec_.style_card[static_cast<std::size_t>(t)];
    const auto& through = prefix_probs[static_cast<std::size_t>(pa + 1)];
    std::vector<double> marginal(static_cast<std::size_t>(nc), 0.0);
    for (std::size_t k = 0; k < through.size(); ++k)
      marginal[static_cast<std::size_t>(scm.spec_.style[static_cast<std::size_t>(t)][k])] += through[k];
    const auto& hist = prefix_probs[static_cast<std::size_t>(pa)];
    for (std::size_t h = 0; h < hist.size(); ++h) {
      if (hist[h] <= 0.0) continue;
      std::vector<double> cond(static_cast<std::size_t>(nc), 0.0);
      for (int a = 0; a < r; ++a) {
        const std::size_t k = h * static_cast<std::size_t>(r) + static_cast<std::size_t>(a);
        cond[static_cast<std::size_t>(scm.spec_.style[static_cast<std::size_t>(t)][k])] +=
            scm.spec_.tables[static_cast<std::size_t>(pa)][h][static_cast<std::size_t>(a)];
      }
      for (int c = 0; c < nc; ++c)
        if (marginal[static_cast<std::size_t>(c)] > 0.0 && cond[static_cast<std::size_t>(c)] <= 0.0)
          throw PositivityError("positivity violated at step " + std::to_string(t + 1) + ": style label " +
                                std::to_string(c) + " has probability 0 given history " +
                                describe_prefix(scm, h, pa));
    }
  }
  return scm;
}

std::vector<int> DiscreteScm::decode(std::size_t full_index) const {
  const int P = positions();
  std::vector<int> vals(static_cast<std::size_t>(P));
  for (int p = P - 1; p >= 0; --p) {
    const auto r = static_cast<std::size_t>(radices_[static_cast<std::size_t>(p)]);
    vals[static_cast<std::size_t>(p)] = static_cast<int>(full_index % r);
    full_index /= r;
  }
  return vals;
}

std::size_t DiscreteScm::encode_prefix(std::span<const int> values) const {
  std::size_t idx = 0;
  for (std::size_t p = 0; p < values.size(); ++p) idx = idx * static_cast<std::size_t>(radices_[p]) + static_cast<std::size_t>(values[p]);
  return idx;
}

int DiscreteScm::style_of_prefix(int t, std::size_t prefix_index) const {
  return spec_.style[static_cast<std::size_t>(t)][prefix_index];
}

void DiscreteScm::check_labels(std::span<const int> labels) const {
  if (static_cast<int>(labels.size()) != spec_.T) throw std::invalid_argument("style sequence must have T labels");
  for (int t = 0; t < spec_.T; ++t)
    if (labels[static_cast<std::size_t>(t)] < 0 || labels[static_cast<std::size_t>(t)] >= spec_.style_card[static_cast<std::size_t>(t)])
      throw std::invalid_argument("style label out of range");
}

double DiscreteScm::exact_interventional_mean(std::span<const int> labels) const {
  check_labels(labels);
  const int P = positions();
  double total = 0.0;
  // Depth-first over the interventional law: contexts follow their tables,
  // actions are redrawn from P(A_t | history, f_t = c_t).
  std::function<void(int, std::size_t, double)> visit = [&](int p, std::size_t prefix, double w) {
    if (p == P) {
      total += w * spec_.outcome[prefix];
      return;
    }
    const auto r = static_cast<std::size_t>(radices_[static_cast<std::size_t>(p)]);
    const auto& row = spec_.tables[static_cast<std::size_t>(p)][prefix];
    if (p % 2 == 0) {
      for (std::size_t v = 0; v < r; ++v)
        if (row[v] > 0.0) visit(p + 1, prefix * r + v, w * row[v]);
      return;
    }
    const int t = p / 2;
    const int c = labels[static_cast<std::size_t>(t)];
    const auto& f = spec_.style[static_cast<std::size_t>(t)];
    double mass = 0.0;
    for (std::size_t a = 0; a < r; ++a)
      if (f[prefix * r + a] == c) mass += row[a];
    if (mass <= 0.0)
      throw PositivityError("style label " + std::to_string(c) + " has probability 0 at step " +
                            std::to_string(t + 1) + " given history " + describe_prefix(*this, prefix, p));
    for (std::size_t a = 0; a < r; ++a)
      if (f[prefix * r + a] == c && row[a] > 0.0) visit(p + 1, prefix * r + a, w * row[a] / mass);
  };
  visit(0, 0, 1.0);
  return total;
}

StyleConditionals DiscreteScm::conditionals_given_styles(std::span<const int> labels) const {
  check_labels(labels);
  const int T = spec_.T;
  std::vector<std::size_t> lcount{1};
  for (int t = 0; t < T; ++t) lcount.push_back(lcount.back() * static_cast<std::size_t>(spec_.l_card[static_cast<std::size_t>(t)]));

  // Accumulate joint masses P(c_<t, l_1..l_t) and P(c_1..c_T, l_1..l_T) from the joint alone.
  std::vector<std::vector<double>> ctx_mass(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) ctx_mass[static_cast<std::size_t>(t)].assign(lcount[static_cast<std::size_t>(t + 1)], 0.0);
  std::vector<double> y_num(lcount.back(), 0.0), y_den(lcount.back(), 0.0);

  std::vector<std::size_t> suffix(static_cast<std::size_t>(2 * T + 1), 1);
  for (int p = 2 * T - 1; p >= 0; --p) suffix[static_cast<std::size_t>(p)] = suffix[static_cast<std::size_t>(p + 1)] * static_cast<std::size_t>(radices_[static_cast<std::size_t>(p)]);

  for (std::size_t idx = 0; idx < joint_.size(); ++idx) {
    const double J = joint_[idx];
    if (J <= 0.0) continue;
    const std::vector<int> vals = decode(idx);
    std::size_t lidx = 0;
    bool match = true;
    for (int t = 0; t < T; ++t) {
      lidx = lidx * static_cast<std::size_t>(spec_.l_card[static_cast<std::size_t>(t)]) + static_cast<std::size_t>(vals[static_cast<std::size_t>(2 * t)]);
      if (match) ctx_mass[static_cast<std::size_t>(t)][lidx] += J;
      const std::size_t through = idx / suffix[static_cast<std::size_t>(2 * t + 2)];
      if (spec_.style[static_cast<std::size_t>(t)][through] != labels[static_cast<std::size_t>(t)]) match = false;
    }
    if (match) {
      y_num[lidx] += J * spec_.outcome[idx];
      y_den[lidx] += J;
    }
  }

  StyleConditionals out;
  out.labels.assign(labels.begin(), labels.end());
  out.context.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto r = static_cast<std::size_t>(spec_.l_card[static_cast<std::size_t>(t)]);
    const auto& mass = ctx_mass[static_cast<std::size_t>(t)];
    auto& cond = out.context[static_cast<std::size_t>(t)];
    cond.assign(mass.size(), 0.0);
    for (std::size_t h = 0; h < mass.size() / r; ++h) {
      double den = 0.0;
      for (std::size_t v = 0; v < r; ++v) den += mass[h * r + v];
      if (den > 0.0)
        for (std::size_t v = 0; v < r; ++v) cond[h * r + v] = mass[h * r + v] / den;
      else
        for (std::size_t v = 0; v < r; ++v) cond[h * r + v] = std::nan("");
    }
  }
  out.outcome.assign(y_num.size(), std::nan(""));
  for (std::size_t k = 0; k < y_num.size(); ++k)
    if (y_den[k] > 0.0) out.outcome[k] = y_num[k] / y_den[k];
  out.outcome_support = y_den;
  return out;
}

double DiscreteScm::exact_gformula_rhs(std::span<const int> labels) const {
  const StyleConditionals cond = conditionals_given_styles(labels);
  const int T = spec_.T;
  double total = 0.0;
  std::function<void(int, std::size_t, double)> visit = [&](int t, std::size_t lidx, double w) {
    if (t == T) {
      const double ey = cond.outcome[lidx];
      if (std::isnan(ey))
        throw PositivityError("conditioning event {f = c, L = l} has probability 0 with positive weight");
      total += w * ey;
      return;
    }
    const auto r = static_cast<std::size_t>(spec_.l_card[static_cast<std::size_t>(t)]);
    for (std::size_t v = 0; v < r; ++v) {
      const double p = cond.context[static_cast<std::size_t>(t)][lidx * r + v];
      if (std::isnan(p))
        throw PositivityError("conditioning event for L_" + std::to_string(t + 1) + " has probability 0");
      if (p > 0.0) visit(t + 1, lidx * r + v, w * p);
    }
  };
  visit(0, 0, 1.0);
  return total;
}

bool DiscreteScm::style_sufficient(std::string* reason) const {
  const int T = spec_.T;
  for (int t = 1; t < T; ++t) {
    const int pa = 2 * t + 1;
    const auto r = static_cast<std::size_t>(radices_[static_cast<std::size_t>(pa)]);
    const auto nc = static_cast<std::size_t>(spec_.style_card[static_cast<std::size_t>(t)]);
    std::map<std::pair<std::vector<int>, std::vector<int>>, std::vector<double>> seen;
    for (std::size_t h = 0; h < prefix_counts_[static_cast<std::size_t>(pa)]; ++h) {
      // history values
      std::vector<int> vals(static_cast<std::size_t>(pa));
      std::size_t rest = h;
      for (int p = pa - 1; p >= 0; --p) {
        vals[static_cast<std::size_t>(p)] = static_cast<int>(rest % static_cast<std::size_t>(radices_[static_cast<std::size_t>(p)]));
        rest /= static_cast<std::size_t>(radices_[static_cast<std::size_t>(p)]);
      }
      // skip unreachable histories
      double prob = 1.0;
      for (int p = 0; p < pa && prob > 0.0; ++p)
        prob *= spec_.tables[static_cast<std::size_t>(p)][encode_prefix(std::span<const int>(vals).first(static_cast<std::size_t>(p)))][static_cast<std::size_t>(vals[static_cast<std::size_t>(p)])];
      if (prob <= 0.0) continue;
      std::vector<int> ls, cs;
      for (int s = 0; s <= t; ++s) ls.push_back(vals[static_cast<std::size_t>(2 * s)]);
      for (int s = 0; s < t; ++s)
        cs.push_back(spec_.style[static_cast<std::size_t>(s)][encode_prefix(std::span<const int>(vals).first(static_cast<std::size_t>(2 * s + 2)))]);
      std::vector<double> law(nc, 0.0);
      for (std::size_t a = 0; a < r; ++a)
        law[static_cast<std::size_t>(spec_.style[static_cast<std::size_t>(t)][h * r + a])] += spec_.tables[static_cast<std::size_t>(pa)][h][a];
      auto [it, inserted] = seen.try_emplace({ls, cs}, law);
      if (!inserted) {
        for (std::size_t c = 0; c < nc; ++c)
          if (std::abs(it->second[c] - law[c]) > 1e-12) {
            if (reason)
              *reason = "style law at step " + std::to_string(t + 1) + " depends on earlier actions beyond their labels, history " +
                        describe_prefix(*this, h, pa);
            return false;
          }
      }
    }
  }
  return true;
}

DiscreteScmSpec random_discrete_scm(std::uint64_t seed, const RandomScmOptions& opts) {
  if (opts.T < 1) throw std::invalid_argument("random SCM: T must be >= 1");
  const int T = opts.T;
  Rng rng = make_rng(seed, {0x73636dULL});
  auto draw_card = [&](int max_card) { return 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, max_card - 1))); };

  DiscreteScmSpec spec;
  spec.T = T;
  for (int t = 0; t < T; ++t) {
    spec.l_card.push_back(draw_card(opts.max_l_card));
    spec.a_card.push_back(draw_card(opts.max_a_card));
    if (opts.style_map == StyleMapKind::identity) {
      spec.style_card.push_back(spec.a_card.back());
    } else {
      const int hi = std::min(opts.max_style_card, spec.a_card.back());
      spec.style_card.push_back(2 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, hi - 1))));
    }
  }
  std::vector<int> radices;
  for (int t = 0; t < T; ++t) {
    radices.push_back(spec.l_card[static_cast<std::size_t>(t)]);
    radices.push_back(spec.a_card[static_cast<std::size_t>(t)]);
  }
  auto random_row = [](Rng& r, int width) {
    std::vector<double> row(static_cast<std::size_t>(width));
    double sum = 0.0;
    for (auto& v : row) sum += (v = 0.05 + uniform01(r));
    for (auto& v : row) v /= sum;
    return row;
  };

  std::size_t count = 1;
  spec.tables.resize(static_cast<std::size_t>(2 * T));
  spec.style.resize(static_cast<std::size_t>(T));
  for (int p = 0; p < 2 * T; ++p) {
    const int r = radices[static_cast<std::size_t>(p)];
    auto& tab = spec.tables[static_cast<std::size_t>(p)];
    tab.resize(count);
    if (p % 2 == 0) {
      for (std::size_t h = 0; h < count; ++h) tab[h] = random_row(rng, r);
    } else {
      const int t = p / 2;
      const int nc = spec.style_card[static_cast<std::size_t>(t)];
      auto& f = spec.style[static_cast<std::size_t>(t)];
      f.resize(count * static_cast<std::size_t>(r));
      for (std::size_t h = 0; h < count; ++h) {
        // Key: the contexts plus earlier style labels, or the whole history.
        std::uint64_t key = h;
        if (opts.style_sufficient) {
          std::vector<int> vals(static_cast<std::size_t>(p));
          std::size_t rest = h;
          for (int q = p - 1; q >= 0; --q) {
            vals[static_cast<std::size_t>(q)] = static_cast<int>(rest % static_cast<std::size_t>(radices[static_cast<std::size_t>(q)]));
            rest /= static_cast<std::size_t>(radices[static_cast<std::size_t>(q)]);
          }
          key = 0x9e37ULL;
          for (int s = 0; s <= t; ++s) key = mix64(key ^ static_cast<std::uint64_t>(vals[static_cast<std::size_t>(2 * s)] + 1));
          for (int s = 0; s < t; ++s) {
            std::size_t pre = 0;
            for (int q = 0; q < 2 * s + 2; ++q) pre = pre * static_cast<std::size_t>(radices[static_cast<std::size_t>(q)]) + static_cast<std::size_t>(vals[static_cast<std::size_t>(q)]);
            key = mix64(key ^ static_cast<std::uint64_t>(spec.style[static_cast<std::size_t>(s)][pre] + 101));
          }
        }
        Rng row_rng = make_rng(seed, {static_cast<std::uint64_t>(p), key});
        tab[h] = random_row(row_rng, r);
        if (opts.style_map == StyleMapKind::identity) {
          for (int a = 0; a < r; ++a) f[h * static_cast<std::size_t>(r) + static_cast<std::size_t>(a)] = a;
        } else {
          std::vector<int> perm(static_cast<std::size_t>(r));
          for (int a = 0; a < r; ++a) perm[static_cast<std::size_t>(a)] = a;
          std::shuffle(perm.begin(), perm.end(), row_rng);
          for (int a = 0; a < r; ++a) {
            const int pos = perm[static_cast<std::size_t>(a)];
            f[h * static_cast<std::size_t>(r) + static_cast<std::size_t>(a)] =
                pos < nc ? pos : static_cast<int>(row_rng() % static_cast<std::uint64_t>(nc));
          }
        }
      }
    }
    count *= static_cast<std::size_t>(r);
  }
  spec.outcome.resize(count);
  for (auto& v : spec.outcome) v = 0.05 + 0.9 * uniform01(rng);
  return spec;
}

}  // namespace causalcollab
