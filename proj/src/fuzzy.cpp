#include "fuzzsim/fuzzy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::fuzzy {

// ---------------------------------------------------------------------------
// MembershipFunction

MembershipFunction::MembershipFunction(std::vector<Breakpoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw InputError("membership function needs at least one breakpoint");
  bool normal = false;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.degree))
      throw InputError("membership breakpoint is not finite");
    if (p.degree < 0.0 || p.degree > 1.0) throw InputError("membership degree outside [0,1]");
    if (i > 0 && !(p.x > points_[i - 1].x))
      throw InputError("membership breakpoints must be strictly increasing in x");
    normal = normal || p.degree == 1.0;
  }
  if (!normal) throw InputError("membership function is not normal (no degree-1 breakpoint)");
}

MembershipFunction MembershipFunction::triangle(double left, double peak, double right) {
  return MembershipFunction({{left, 0.0}, {peak, 1.0}, {right, 0.0}});
}

MembershipFunction MembershipFunction::trapezoid(double a, double b, double c, double d) {
  return MembershipFunction({{a, 0.0}, {b, 1.0}, {c, 1.0}, {d, 0.0}});
}

MembershipFunction MembershipFunction::left_shoulder(double top, double zero_at) {
  return MembershipFunction({{top, 1.0}, {zero_at, 0.0}});
}

MembershipFunction MembershipFunction::right_shoulder(double zero_at, double top) {
  return MembershipFunction({{zero_at, 0.0}, {top, 1.0}});
}

double MembershipFunction::degree(double x) const noexcept {
  if (x <= points_.front().x) return points_.front().degree;
  if (x >= points_.back().x) return points_.back().degree;
  auto hi = std::upper_bound(points_.begin(), points_.end(), x,
                             [](double v, const Breakpoint& b) { return v < b.x; });
  const Breakpoint& b = *hi;
  const Breakpoint& a = *(hi - 1);
  // Weighted form keeps mirrored functions bitwise mirrored.
  return (a.degree * (b.x - x) + b.degree * (x - a.x)) / (b.x - a.x);
}

double MembershipFunction::peak() const noexcept {
  std::size_t first = 0;
  while (first < points_.size() && points_[first].degree != 1.0) ++first;
  std::size_t last = first;
  while (last + 1 < points_.size() && points_[last + 1].degree == 1.0) ++last;
  return 0.5 * (points_[first].x + points_[last].x);
}

// ---------------------------------------------------------------------------
// FuzzyVariable

FuzzyVariable::FuzzyVariable(std::string name, double lo, double hi, std::vector<Term> terms,
                             std::string unit)
    : name_(std::move(name)), unit_(std::move(unit)), lo_(lo), hi_(hi), terms_(std::move(terms)) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw InputError("variable '" + name_ + "': universe must satisfy lo < hi");
  if (terms_.empty() || terms_.size() > kMaxTerms)
    throw InputError("variable '" + name_ + "': term count must be in [1, 16]");
  std::set<std::string> seen;
  for (const auto& t : terms_)
    if (!seen.insert(t.name).second)
      throw InputError("variable '" + name_ + "': duplicate term '" + t.name + "'");
}

FuzzyVariable FuzzyVariable::uniform_partition(std::string name, double lo, double hi,
                                               const std::vector<std::string>& names,
                                               std::string unit) {
  const std::size_t n = names.size();
  if (n == 0) throw InputError("uniform partition needs terms");
  std::vector<Term> terms;
  if (n == 1) {
    terms.push_back({names[0], MembershipFunction({{lo, 1.0}, {hi, 1.0}})});
    return FuzzyVariable(std::move(name), lo, hi, std::move(terms), std::move(unit));
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  auto peak = [&](std::size_t k) { return k + 1 == n ? hi : lo + static_cast<double>(k) * step; };
  for (std::size_t k = 0; k < n; ++k) {
    MembershipFunction mf;
    if (k == 0)
      mf = MembershipFunction::left_shoulder(peak(0), peak(1));
    else if (k + 1 == n)
      mf = MembershipFunction::right_shoulder(peak(k - 1), peak(k));
    else
      mf = MembershipFunction::triangle(peak(k - 1), peak(k), peak(k + 1));
    terms.push_back({names[k], std::move(mf)});
  }
  return FuzzyVariable(std::move(name), lo, hi, std::move(terms), std::move(unit));
}

FuzzyVariable FuzzyVariable::inner_triangles(std::string name, double lo, double hi,
                                             const std::vector<std::string>& names,
                                             const std::vector<double>& peaks, std::string unit) {
  if (names.size() != peaks.size() || peaks.size() < 2)
    throw InputError("inner_triangles: need matching names/peaks, at least two");
  const double half = peaks[1] - peaks[0];
  std::vector<Term> terms;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    const double a = peaks[k] - half;
    const double b = peaks[k] + half;
    if (a < lo || b > hi) throw InputError("inner_triangles: triangle leaves the universe");
    terms.push_back({names[k], MembershipFunction::triangle(a, peaks[k], b)});
  }
  return FuzzyVariable(std::move(name), lo, hi, std::move(terms), std::move(unit));
}

std::size_t FuzzyVariable::term_index(const std::string& term_name) const {
  for (std::size_t i = 0; i < terms_.size(); ++i)
    if (terms_[i].name == term_name) return i;
  throw InputError("variable '" + name_ + "' has no term '" + term_name + "'");
}

double FuzzyVariable::clamp(double x) const noexcept { return std::clamp(x, lo_, hi_); }

void FuzzyVariable::fuzzify_into(double x, std::span<double> out) const {
  if (!std::isfinite(x)) throw InputError("non-finite input for variable '" + name_ + "'");
  const double c = clamp(x);
  for (std::size_t i = 0; i < terms_.size(); ++i) out[i] = terms_[i].mf.degree(c);
}

std::map<std::string, double> FuzzyVariable::fuzzify(double x) const {
  std::array<double, kMaxTerms> deg{};
  fuzzify_into(x, deg);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < terms_.size(); ++i) out[terms_[i].name] = deg[i];
  return out;
}

bool FuzzyVariable::covers(double min_sum) const {
  // The summed degree is piecewise linear, so its minimum over the universe
  // sits at a breakpoint or a universe end.
  std::vector<double> xs{lo_, hi_};
  for (const auto& t : terms_)
    for (const auto& b : t.mf.breakpoints())
      if (b.x > lo_ && b.x < hi_) xs.push_back(b.x);
  for (double x : xs) {
    double sum = 0.0;
    for (const auto& t : terms_) sum += t.mf.degree(x);
    if (!(sum > min_sum)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// AggregatedSet / defuzzification

AggregatedSet::AggregatedSet(const FuzzyVariable& output, std::span<const double> activation)
    : var_(&output) {
  for (std::size_t i = 0; i < output.size() && i < activation.size(); ++i)
    act_[i] = std::clamp(activation[i], 0.0, 1.0);
}

double AggregatedSet::degree(double y) const noexcept {
  double d = 0.0;
  for (std::size_t i = 0; i < var_->size(); ++i)
    if (act_[i] > 0.0) d = std::max(d, std::min(act_[i], var_->terms()[i].mf.degree(y)));
  return d;
}

bool AggregatedSet::empty() const noexcept {
  return std::none_of(act_.begin(), act_.begin() + static_cast<std::ptrdiff_t>(var_->size()),
                      [](double a) { return a > 0.0; });
}

namespace {

// Sums over integer grid indices i in [a, b] of 1, i, i^2.
struct IndexSums {
  double count = 0, s1 = 0, s2 = 0;
};

IndexSums index_sums(long long a, long long b) {
  IndexSums s;
  if (b < a) return s;
  auto sq = [](long long m) {
    return static_cast<double>(m) * static_cast<double>(m + 1) * static_cast<double>(2 * m + 1) / 6.0;
  };
  s.count = static_cast<double>(b - a + 1);
  s.s1 = static_cast<double>(a + b) * s.count / 2.0;
  s.s2 = sq(b) - (a > 0 ? sq(a - 1) : 0.0);  // indices are non-negative
  return s;
}

}  // namespace

double defuzzify_centroid(const AggregatedSet& agg, int resolution) {
  if (resolution < 2) throw InputError("defuzzification resolution must be >= 2");
  const FuzzyVariable& var = agg.variable();
  const std::size_t nterms = var.size();

  const double n = resolution;
  const double h = var.width() / (n - 1.0);
  const double mid = 0.5 * (var.lo() + var.hi());
  const double c = 0.5 * (n - 1.0);  // grid offset k = i - c, y = mid + k*h

  std::vector<std::size_t> active;
  for (std::size_t t = 0; t < nterms; ++t)
    if (agg.activation(t) > 0.0) active.push_back(t);
  if (active.empty()) throw DefuzzificationError("aggregated fuzzy set is empty");

  auto to_k = [&](double x) { return (x - mid) / h; };
  auto clipped = [&](std::size_t t, double k) {
    return std::min(agg.activation(t), var.terms()[t].mf.degree(mid + k * h));
  };

  std::vector<double> cuts{-c, c};
  for (std::size_t t : active) {
    const auto bps = var.terms()[t].mf.breakpoints();
    const double a = agg.activation(t);
    for (std::size_t i = 0; i < bps.size(); ++i) {
      cuts.push_back(to_k(bps[i].x));
      if (i + 1 < bps.size()) {
        const double d0 = bps[i].degree - a;
        const double d1 = bps[i + 1].degree - a;
        if (d0 * d1 < 0.0) {
          const double x = bps[i].x + (a - bps[i].degree) * (bps[i + 1].x - bps[i].x) /
                                          (bps[i + 1].degree - bps[i].degree);
          cuts.push_back(to_k(x));
        }
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double k) { return k < -c || k > c; }),
             cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const long long last_index = resolution - 1;
  double num = 0.0;
  double den = 0.0;
  std::vector<double> va(active.size()), vb(active.size()), sub;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double ka = cuts[p];
    const double kb = cuts[p + 1];
    bool any = false;
    for (std::size_t j = 0; j < active.size(); ++j) {
      va[j] = clipped(active[j], ka);
      vb[j] = clipped(active[j], kb);
      any = any || va[j] > 0.0 || vb[j] > 0.0;
    }
    if (!any) continue;

    // Every clipped term is linear on [ka, kb]; split where the upper
    // envelope switches between terms.
    sub.assign({ka, kb});
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double da = va[i] - va[j];
        const double db = vb[i] - vb[j];
        if (da * db < 0.0) sub.push_back(ka + da / (da - db) * (kb - ka));
      }
    std::sort(sub.begin(), sub.end());

    auto line = [&](std::size_t j, double k) { return va[j] + (vb[j] - va[j]) * (k - ka) / (kb - ka); };
    for (std::size_t s = 0; s + 1 < sub.size(); ++s) {
      const double lo = sub[s];
      const double hi = sub[s + 1];
      if (!(hi > lo)) continue;
      const double m = 0.5 * (lo + hi);
      std::size_t best = 0;
      for (std::size_t j = 1; j < active.size(); ++j)
        if (line(j, m) > line(best, m)) best = j;
      const double flo = line(best, lo);
      const double fhi = line(best, hi);
      if (flo == 0.0 && fhi == 0.0) continue;
      const double slope = (fhi - flo) / (hi - lo);
      const double icpt = flo - slope * lo;  // f(k) = icpt + slope*k

      const bool closing = hi >= c;
      long long i0 = static_cast<long long>(std::ceil(lo + c));
      long long i1 = closing ? static_cast<long long>(std::floor(hi + c))
                             : static_cast<long long>(std::ceil(hi + c)) - 1;
      i0 = std::max(i0, 0LL);
      i1 = std::min(i1, last_index);
      const IndexSums is = index_sums(i0, i1);
      if (is.count == 0) continue;
      // k = i - c
      const double sk = is.s1 - c * is.count;
      const double skk = is.s2 - 2.0 * c * is.s1 + c * c * is.count;
      den += icpt * is.count + slope * sk;
      num += icpt * sk + slope * skk;
    }
  }
  if (!(den > 0.0)) throw DefuzzificationError("aggregated fuzzy set is zero on the grid");
  const double offset = num / den;
  if (std::abs(offset) < 1e-9) return mid;
  return mid + offset * h;
}

// ---------------------------------------------------------------------------
// RuleBase

RuleBase::RuleBase(std::vector<FuzzyVariable> inputs, FuzzyVariable output, std::vector<FuzzyRule> rules)
    : inputs_(std::move(inputs)), output_(std::move(output)), rules_(std::move(rules)) {
  std::vector<std::string> problems;
  if (inputs_.empty() || inputs_.size() > kMaxInputs) problems.push_back("rule base needs 1..4 inputs");
  std::set<std::string> names;
  for (const auto& v : inputs_) {
    if (!names.insert(v.name()).second) problems.push_back("duplicate input variable '" + v.name() + "'");
    if (!v.covers()) problems.push_back("input variable '" + v.name() + "' does not cover its universe");
  }
  if (names.count(output_.name())) problems.push_back("output variable must differ from inputs");
  if (!problems.empty()) throw ValidationError(problems);

  stride_.assign(inputs_.size(), 1);
  std::size_t total = 1;
  for (std::size_t i = inputs_.size(); i-- > 0;) {
    stride_[i] = total;
    total *= inputs_[i].size();
  }
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  table_.assign(total, kUnset);

  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const auto& rule = rules_[r];
    std::ostringstream tag;
    tag << "rule " << r;
    if (rule.antecedents.size() != inputs_.size()) {
      problems.push_back(tag.str() + ": must reference every input exactly once");
      continue;
    }
    std::size_t slot = 0;
    bool ok = true;
    std::set<std::size_t> used;
    for (const auto& a : rule.antecedents) {
      auto it = std::find_if(inputs_.begin(), inputs_.end(),
                             [&](const FuzzyVariable& v) { return v.name() == a.variable; });
      if (it == inputs_.end()) {
        problems.push_back(tag.str() + ": unknown variable '" + a.variable + "'");
        ok = false;
        continue;
      }
      const auto vi = static_cast<std::size_t>(it - inputs_.begin());
      if (!used.insert(vi).second) {
        problems.push_back(tag.str() + ": variable '" + a.variable + "' repeated");
        ok = false;
        continue;
      }
      try {
        slot += it->term_index(a.term) * stride_[vi];
      } catch (const InputError& e) {
        problems.push_back(tag.str() + ": " + e.what());
        ok = false;
      }
    }
    std::size_t cons = 0;
    try {
      cons = output_.term_index(rule.consequent);
    } catch (const InputError& e) {
      problems.push_back(tag.str() + ": " + e.what());
      ok = false;
    }
    if (!ok) continue;
    if (table_[slot] != kUnset) {
      problems.push_back(tag.str() + ": duplicates an earlier antecedent combination");
      continue;
    }
    table_[slot] = cons;
  }
  for (std::size_t slot = 0; slot < total; ++slot) {
    if (table_[slot] != kUnset) continue;
    std::string combo;
    std::size_t rem = slot;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      const std::size_t ti = rem / stride_[i];
      rem %= stride_[i];
      combo += (combo.empty() ? "" : " AND ") + inputs_[i].name() + "=" + inputs_[i].term(ti).name;
    }
    problems.push_back("incomplete rule base: no rule for " + combo);
  }
  if (!problems.empty()) throw ValidationError(problems);
}

std::size_t RuleBase::input_index(const std::string& name) const {
  for (std::size_t i = 0; i < inputs_.size(); ++i)
    if (inputs_[i].name() == name) return i;
  throw InputError("rule base has no input '" + name + "'");
}

std::size_t RuleBase::consequent(std::span<const std::size_t> term_indices) const {
  if (term_indices.size() != inputs_.size()) throw InputError("term index count mismatch");
  std::size_t slot = 0;
  for (std::size_t i = 0; i < inputs_.size(); ++i) slot += term_indices[i] * stride_[i];
  return table_.at(slot);
}

AggregatedSet RuleBase::infer(std::span<const double> crisp) const {
  if (crisp.size() != inputs_.size()) throw InputError("expected one crisp value per input variable");
  const std::size_t nin = inputs_.size();
  std::array<std::array<double, kMaxTerms>, kMaxInputs> deg{};
  std::array<std::array<std::size_t, kMaxTerms>, kMaxInputs> nz{};
  std::array<std::size_t, kMaxInputs> nzc{};
  for (std::size_t i = 0; i < nin; ++i) {
    inputs_[i].fuzzify_into(crisp[i], deg[i]);
    for (std::size_t t = 0; t < inputs_[i].size(); ++t)
      if (deg[i][t] > 0.0) nz[i][nzc[i]++] = t;
  }
  std::array<double, kMaxTerms> act{};
  for (std::size_t i = 0; i < nin; ++i)
    if (nzc[i] == 0) return AggregatedSet(output_, act);

  // Odometer over the nonzero terms of every input.
  std::array<std::size_t, kMaxInputs> pos{};
  while (true) {
    double strength = 1.0;
    std::size_t slot = 0;
    for (std::size_t i = 0; i < nin; ++i) {
      const std::size_t t = nz[i][pos[i]];
      strength = std::min(strength, deg[i][t]);
      slot += t * stride_[i];
    }
    double& a = act[table_[slot]];
    a = std::max(a, strength);
    std::size_t i = nin;
    while (i-- > 0) {
      if (++pos[i] < nzc[i]) break;
      pos[i] = 0;
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  return AggregatedSet(output_, act);
}

AggregatedSet RuleBase::infer(const std::map<std::string, double>& crisp) const {
  std::array<double, kMaxInputs> values{};
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    auto it = crisp.find(inputs_[i].name());
    if (it == crisp.end()) throw InputError("missing crisp input for '" + inputs_[i].name() + "'");
    values[i] = it->second;
  }
  return infer(std::span<const double>(values.data(), inputs_.size()));
}

double RuleBase::infer_crisp(std::span<const double> crisp, int resolution) const {
  return defuzzify_centroid(infer(crisp), resolution);
}

double RuleBase::infer_crisp(const std::map<std::string, double>& crisp, int resolution) const {
  return defuzzify_centroid(infer(crisp), resolution);
}

std::vector<FuzzyRule> grid_rules(const FuzzyVariable& a, const FuzzyVariable& b,
                                  const FuzzyVariable& out,
                                  const std::vector<std::vector<std::size_t>>& table) {
  std::vector<FuzzyRule> rules;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      rules.push_back({{{a.name(), a.term(i).name}, {b.name(), b.term(j).name}},
                       out.term(table.at(i).at(j)).name});
  return rules;
}

}  // namespace fuzzsim::fuzzy
