#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace causalcollab {

/// Tabular sequential model over finite contexts L_t, actions A_t and a style
/// map f_t. Variables are laid out in the interleaved order
/// L_1, A_1, L_2, A_2, ..., L_T, A_T; the table for position p has one row per
/// prefix (values at positions [0, p)), indexed big-endian in mixed radix.
struct DiscreteScmSpec {
  int T = 0;
  std::vector<int> l_card;
  std::vector<int> a_card;
  std::vector<int> style_card;
  std::vector<std::vector<std::vector<double>>> tables;  // [position][prefix][value]
  std::vector<double> outcome;                           // P(Y=1 | full sequence)
  std::vector<std::vector<int>> style;                   // [t][prefix through A_t] -> label
};

/// Observational conditionals given a fixed style-label sequence, indexed by
/// the mixed-radix index of the context prefix l_1..l_t.
struct StyleConditionals {
  std::vector<int> labels;
  std::vector<std::vector<double>> context;  // [t][l_1..l_t] -> P(L_t = l_t | c_<t, l_<t)
  std::vector<double> outcome;               // [l_1..l_T] -> E[Y | c_1..c_T, l_1..l_T]
  std::vector<double> outcome_support;       // [l_1..l_T] -> P(c_1..c_T, l_1..l_T)
};

class DiscreteScm {
 public:
  static constexpr int kMaxCard = 8;

  /// Validates tables (rows sum to 1 within 1e-12, entries in [0, 1]) and the
  /// positivity of the style maps; caches the observational joint.
  /// Throws std::invalid_argument or PositivityError.
  static DiscreteScm build(DiscreteScmSpec spec);

  const DiscreteScmSpec& spec() const { return spec_; }
  int T() const { return spec_.T; }
  int positions() const { return 2 * spec_.T; }
  int radix(int position) const { return radices_[static_cast<std::size_t>(position)]; }
  std::size_t prefix_count(int length) const { return prefix_counts_[static_cast<std::size_t>(length)]; }
  std::span<const double> joint() const { return joint_; }

  /// Values at every position of a full-sequence index.
  std::vector<int> decode(std::size_t full_index) const;
  std::size_t encode_prefix(std::span<const int> values) const;
  /// Style label of step t (0-based) for a prefix covering positions [0, 2t+2).
  int style_of_prefix(int t, std::size_t prefix_index) const;

  /// E[Y(f_1 = c_1, ..., f_T = c_T)] by enumeration under the intervention that
  /// replaces each action draw with P(A_t | history, f_t = c_t).
  double exact_interventional_mean(std::span<const int> labels) const;

  /// Generalized g-formula evaluated from observational conditionals only.
  double exact_gformula_rhs(std::span<const int> labels) const;

  /// The conditionals exact_gformula_rhs integrates against.
  StyleConditionals conditionals_given_styles(std::span<const int> labels) const;

  /// Whether each step's style law given history depends on earlier actions
  /// only through their style labels. Under this condition the two exact
  /// functions above agree; without it they generally differ.
  bool style_sufficient(std::string* reason = nullptr) const;

 private:
  DiscreteScm() = default;
  void check_labels(std::span<const int> labels) const;

  DiscreteScmSpec spec_;
  std::vector<int> radices_;
  std::vector<std::size_t> prefix_counts_;
  std::vector<double> joint_;
};

enum class StyleMapKind { random_surjection, identity };

struct RandomScmOptions {
  int T = 2;
  int max_l_card = 4;
  int max_a_card = 4;
  int max_style_card = 3;
  StyleMapKind style_map = StyleMapKind::random_surjection;
  /// When false, action policies and style maps may depend on the full
  /// earlier action history (breaks style sufficiency).
  bool style_sufficient = true;
};

/// Seeded random spec with strictly positive tables; positivity holds by
/// construction because each history maps some action onto every label.
DiscreteScmSpec random_discrete_scm(std::uint64_t seed, const RandomScmOptions& opts);

}  // namespace causalcollab
