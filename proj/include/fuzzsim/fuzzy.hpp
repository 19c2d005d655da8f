#pragma once

// Mamdani fuzzy inference: piecewise-linear membership functions, linguistic
// variables, complete rule bases, and centroid defuzzification.

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fuzzsim::fuzzy {

inline constexpr int kDefaultResolution = 1001;
inline constexpr std::size_t kMaxTerms = 16;
inline constexpr std::size_t kMaxInputs = 4;

struct Breakpoint {
  double x = 0.0;
  double degree = 0.0;
};

/// Piecewise-linear membership function. Outside the breakpoint span the
/// function extends flat from the first/last degree (a shoulder when that
/// degree is nonzero, zero otherwise).
class MembershipFunction {
 public:
  MembershipFunction() = default;
  /// Throws InputError unless x is strictly increasing, degrees lie in
  /// [0,1] and at least one degree equals 1.
  explicit MembershipFunction(std::vector<Breakpoint> points);

  static MembershipFunction triangle(double left, double peak, double right);
  static MembershipFunction trapezoid(double a, double b, double c, double d);
  /// Degree 1 for x <= top, falling to 0 at x = zero_at.
  static MembershipFunction left_shoulder(double top, double zero_at);
  /// Degree 0 for x <= zero_at, rising to 1 at x = top and staying there.
  static MembershipFunction right_shoulder(double zero_at, double top);

  double degree(double x) const noexcept;
  std::span<const Breakpoint> breakpoints() const noexcept { return points_; }
  /// Centre of the first degree-1 plateau.
  double peak() const noexcept;

 private:
  std::vector<Breakpoint> points_;
};

struct Term {
  std::string name;
  MembershipFunction mf;
};

class FuzzyVariable {
 public:
  FuzzyVariable() = default;
  FuzzyVariable(std::string name, double lo, double hi, std::vector<Term> terms,
                std::string unit = {});

  /// Terms with equally spaced peaks from lo to hi, 50% overlap between
  /// neighbours, shoulders at both ends. `names` are in ascending-x order.
  static FuzzyVariable uniform_partition(std::string name, double lo, double hi,
                                         const std::vector<std::string>& names,
                                         std::string unit = {});
  /// Symmetric triangles with the given ascending peaks; half-width equals the
  /// peak spacing. Every triangle must lie inside [lo, hi].
  static FuzzyVariable inner_triangles(std::string name, double lo, double hi,
                                       const std::vector<std::string>& names,
                                       const std::vector<double>& peaks,
                                       std::string unit = {});

  const std::string& name() const noexcept { return name_; }
  const std::string& unit() const noexcept { return unit_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double width() const noexcept { return hi_ - lo_; }
  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  const Term& term(std::size_t i) const { return terms_.at(i); }
  /// Throws InputError for unknown names.
  std::size_t term_index(const std::string& term_name) const;
  double peak(const std::string& term_name) const { return terms_[term_index(term_name)].mf.peak(); }

  double clamp(double x) const noexcept;
  /// Degrees of every term at clamp(x), written in term order. Throws
  /// InputError for non-finite x.
  void fuzzify_into(double x, std::span<double> out) const;
  std::map<std::string, double> fuzzify(double x) const;

  /// True when the summed degree exceeds `min_sum` everywhere on the universe.
  bool covers(double min_sum = 0.0) const;

 private:
  std::string name_;
  std::string unit_;
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<Term> terms_;
};

struct Antecedent {
  std::string variable;
  std::string term;
};

/// Antecedents are AND-combined; the consequent names a term of the rule
/// base's output variable.
struct FuzzyRule {
  std::vector<Antecedent> antecedents;
  std::string consequent;
};

/// Output of Mamdani inference: per-output-term activation. The membership of
/// y is max over terms of min(activation, mf(y)). Holds a pointer into the
/// owning RuleBase, which must outlive it.
class AggregatedSet {
 public:
  AggregatedSet(const FuzzyVariable& output, std::span<const double> activation);

  const FuzzyVariable& variable() const noexcept { return *var_; }
  double activation(std::size_t term) const noexcept { return act_[term]; }
  double degree(double y) const noexcept;
  bool empty() const noexcept;

 private:
  const FuzzyVariable* var_;
  std::array<double, kMaxTerms> act_{};
};

/// Centroid over a uniform grid of `resolution` points spanning the output
/// universe. Evaluated exactly per linear piece of the aggregated set.
/// Throws DefuzzificationError for an all-zero set.
double defuzzify_centroid(const AggregatedSet& agg, int resolution = kDefaultResolution);

class RuleBase {
 public:
  /// Validates references, uniqueness and completeness over every input-term
  /// combination; throws ValidationError listing all problems.
  RuleBase(std::vector<FuzzyVariable> inputs, FuzzyVariable output, std::vector<FuzzyRule> rules);

  const std::vector<FuzzyVariable>& inputs() const noexcept { return inputs_; }
  const FuzzyVariable& output() const noexcept { return output_; }
  const std::vector<FuzzyRule>& rules() const noexcept { return rules_; }
  std::size_t input_index(const std::string& name) const;

  /// Consequent term index for a combination of input term indices.
  std::size_t consequent(std::span<const std::size_t> term_indices) const;

  /// Crisp inputs in input-variable order.
  AggregatedSet infer(std::span<const double> crisp) const;
  AggregatedSet infer(const std::map<std::string, double>& crisp) const;
  double infer_crisp(std::span<const double> crisp, int resolution = kDefaultResolution) const;
  double infer_crisp(const std::map<std::string, double>& crisp,
                     int resolution = kDefaultResolution) const;

 private:
  std::vector<FuzzyVariable> inputs_;
  FuzzyVariable output_;
  std::vector<FuzzyRule> rules_;
  std::vector<std::size_t> table_;  // mixed-radix over input terms
  std::vector<std::size_t> stride_;
};

/// Builds the rule list for a two-input grid where rule (i, j) maps to
/// output term index `table[i][j]`.
std::vector<FuzzyRule> grid_rules(const FuzzyVariable& a, const FuzzyVariable& b,
                                  const FuzzyVariable& out,
                                  const std::vector<std::vector<std::size_t>>& table);

}  // namespace fuzzsim::fuzzy
