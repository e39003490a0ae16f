#pragma once

#include "qshe/tree.hpp"

#include <set>
#include <string>

namespace qshe {

// Predicate for symbols with vanishing renormalisation constant.
struct NullPredicate {
  bool positive_degree = true;  // degree >= 0
  bool odd_noise_count = true;  // centered (Gaussian) noise
  bool x_parity = true;         // symmetric mollifier: odd #primes + spatial X
  std::set<std::string> explicit_keys; // canonical keys of listed trees

  void add_explicit(const Tree& t) { explicit_keys.insert(t.key()); }
};

struct NullVerdict {
  bool null = false;
  std::string reason; // first firing flag
  explicit operator bool() const { return null; }
};

inline NullVerdict is_null(const Tree& t, const NullPredicate& np, const DegreeConfig& cfg = {}) {
  if (np.positive_degree && !(degree(t, cfg) < 0)) return {true, "positive_degree"};
  if (np.odd_noise_count && t.noise_count() % 2 == 1) return {true, "odd_noise_count"};
  if (np.x_parity && (t.prime_count() + t.x_space_total()) % 2 == 1) return {true, "x_parity"};
  // symbols outside the support of g: fewer than two noises or X decorations
  if (t.noise_count() < 2) return {true, "support"};
  if (t.has_x()) return {true, "support"};
  if (np.explicit_keys.count(t.key())) return {true, "explicit_list"};
  return {false, ""};
}

// The six four-noise symbols killed by Gaussianity.
inline const std::vector<Tree>& gaussian_null_list() {
  static const std::vector<Tree> list = [] {
    std::vector<Tree> v;
    v.push_back(parse_tree("Xi*I[Xi*I[Xi]*I[Xi]]"));           // <AMA>
    v.push_back(parse_tree("Ip[Xi]*Ip[Xi*I[Xi]*I[Xi]]"));      // <AMB>
    v.push_back(parse_tree("Xi*I[Xi]*I[Xi]*I[Xi]"));           // <AMM>
    v.push_back(parse_tree("Xi*I[Ip[Xi]*Ip[Xi]*I[Xi]]"));      // <BMA>
    v.push_back(parse_tree("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]*I[Xi]]")); // <BMB>
    v.push_back(parse_tree("Ip[Xi]*Ip[Xi]*I[Xi]*I[Xi]"));      // <BMM>
    return v;
  }();
  return list;
}

// Nullity configuration used when generating the pipeline relations.
inline NullPredicate pipeline_null_predicate() {
  NullPredicate np;
  for (const auto& t : gaussian_null_list()) np.add_explicit(t);
  return np;
}

// Nullity assumptions of the worked example: only positivity and the three
// explicitly assumed symbols; no centering or symmetry assumption.
inline NullPredicate example_null_predicate() {
  NullPredicate np;
  np.odd_noise_count = false;
  np.x_parity = false;
  np.add_explicit(parse_tree("Ip[Xi]*I[Xi]"));      // <4>
  np.add_explicit(parse_tree("Xi*I[Ip[Xi]]"));      // <5>
  np.add_explicit(parse_tree("Ip[Ip[Xi]]*Ip[Xi]")); // <7>
  return np;
}

} // namespace qshe
