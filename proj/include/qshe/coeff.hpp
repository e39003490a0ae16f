#pragma once

#include "qshe/rat.hpp"
#include "qshe/tree.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace qshe {

// Generator alphabet of the scalar coefficient ring.
enum Gen : int {
  GA = 0,   // a
  GA1 = 1,  // a'
  GA2 = 2,  // a''
  GA3 = 3,  // a'''
  GQ = 4,   // q = 1 - v_c a'
  GQI = 5,  // q^{-1}
  GVC = 6,  // v_c
  GVCC = 7, // v_cc
  GVCCC = 8,// v_ccc
  GPC = 9,  // p_c
  GPCC = 10,// p_cc
  GPHC = 11 // \hat p_c
};
inline constexpr int kGenCount = 12;
inline const char* gen_name(int g) {
  static const char* names[kGenCount] = {"a",  "a1", "a2",  "a3",  "q",   "qi",
                                         "vc", "vcc", "vccc", "pc", "pcc", "phc"};
  return names[g];
}

struct ScalarMonomial {
  std::array<std::uint8_t, kGenCount> e{};

  static ScalarMonomial unit() { return {}; }
  static ScalarMonomial gen(int g, int k = 1) {
    ScalarMonomial m;
    m.e[g] = static_cast<std::uint8_t>(k);
    return m;
  }

  bool operator==(const ScalarMonomial& o) const { return e == o.e; }
  bool operator<(const ScalarMonomial& o) const { return e < o.e; }

  // q and q^{-1} never both positive after normalization
  void normalize() {
    std::uint8_t c = std::min(e[GQ], e[GQI]);
    e[GQ] -= c;
    e[GQI] -= c;
  }
  ScalarMonomial operator*(const ScalarMonomial& o) const {
    ScalarMonomial m;
    for (int i = 0; i < kGenCount; ++i) {
      int v = e[i] + o.e[i];
      if (v > 255) throw std::overflow_error("monomial exponent overflow");
      m.e[i] = static_cast<std::uint8_t>(v);
    }
    m.normalize();
    return m;
  }
  bool is_unit() const {
    for (int i = 0; i < kGenCount; ++i)
      if (e[i]) return false;
    return true;
  }
  std::string str() const {
    std::string s;
    for (int i = 0; i < kGenCount; ++i) {
      if (!e[i]) continue;
      if (!s.empty()) s += "*";
      s += gen_name(i);
      if (e[i] > 1) s += "^" + std::to_string(int(e[i]));
    }
    return s.empty() ? "1" : s;
  }
};

// Derivative orders on the integration edges of a tree, canonical edge order.
using DerivTuple = std::vector<std::uint8_t>;

inline std::string tuple_str(const DerivTuple& t) {
  std::string s = "<";
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(int(t[i]));
  }
  return s + ">";
}

// canonical key of the subtree at node u (matches Tree::key of that subtree)
inline std::string sub_key(const Tree& t, int u) {
  std::string s = "(";
  const auto& nd = t.node(u);
  if (nd.noise) s += 'N';
  if (nd.tpow) s += "T" + std::to_string(nd.tpow);
  if (nd.xpow) s += "X" + std::to_string(nd.xpow);
  std::vector<std::pair<int, std::string>> ks;
  for (int ei : nd.kid_edges)
    ks.push_back({static_cast<int>(t.edge(ei).kind), sub_key(t, t.edge(ei).child)});
  std::sort(ks.begin(), ks.end());
  for (auto& [k, kk] : ks) {
    s += k == 0 ? 'I' : 'J';
    s += kk;
  }
  s += ')';
  return s;
}

// Canonical representative of a tuple under the automorphisms of its tree.
// Children of a node that agree in (edge kind, subtree shape) are
// interchangeable; within such a block the decorated branches are sorted.
inline DerivTuple canonical_tuple(const Tree& t, const DerivTuple& tup) {
  if (tup.size() != static_cast<size_t>(t.edge_count()))
    throw std::invalid_argument("tuple length does not match tree edge count");
  // returns decorated vector for subtree at node u (its edges in preorder)
  auto rec = [&](auto&& self, int u) -> std::vector<std::uint8_t> {
    struct Branch {
      int kind;
      std::string key;
      std::vector<std::uint8_t> vec;
    };
    std::vector<Branch> branches;
    for (int ei : t.node(u).kid_edges) {
      Branch b;
      b.kind = static_cast<int>(t.edge(ei).kind);
      b.key = sub_key(t, t.edge(ei).child);
      b.vec.push_back(tup[ei]);
      auto inner = self(self, t.edge(ei).child);
      b.vec.insert(b.vec.end(), inner.begin(), inner.end());
      branches.push_back(std::move(b));
    }
    std::sort(branches.begin(), branches.end(), [](const Branch& a, const Branch& b) {
      if (a.kind != b.kind) return a.kind < b.kind;
      if (a.key != b.key) return a.key < b.key;
      return a.vec < b.vec;
    });
    std::vector<std::uint8_t> out;
    for (auto& b : branches) out.insert(out.end(), b.vec.begin(), b.vec.end());
    return out;
  };
  return rec(rec, 0);
}

// ---------------------------------------------------------------------------
// CoeffPoly: exact linear combination of (monomial, tuple) pairs.

class CoeffPoly {
public:
  using Key = std::pair<ScalarMonomial, DerivTuple>;
  std::map<Key, Rat> terms;

  CoeffPoly() = default;
  static CoeffPoly zero() { return {}; }
  static CoeffPoly constant(const Rat& r) {
    CoeffPoly p;
    p.add_term(ScalarMonomial::unit(), {}, r);
    return p;
  }
  static CoeffPoly from_gen(int g) {
    CoeffPoly p;
    p.add_term(ScalarMonomial::gen(g), {}, 1);
    return p;
  }
  static CoeffPoly tuple1(const DerivTuple& t, const Rat& r = 1) {
    CoeffPoly p;
    p.add_term(ScalarMonomial::unit(), t, r);
    return p;
  }

  bool is_zero() const { return terms.empty(); }
  size_t size() const { return terms.size(); }

  void add_term(const ScalarMonomial& m, const DerivTuple& t, const Rat& r) {
    if (r == 0) return;
    auto it = terms.find({m, t});
    if (it == terms.end()) {
      terms.emplace(Key{m, t}, r);
    } else {
      it->second += r;
      if (it->second == 0) terms.erase(it);
    }
  }

  CoeffPoly& operator+=(const CoeffPoly& o) {
    for (const auto& [k, v] : o.terms) add_term(k.first, k.second, v);
    return *this;
  }
  CoeffPoly& operator-=(const CoeffPoly& o) {
    for (const auto& [k, v] : o.terms) add_term(k.first, k.second, -v);
    return *this;
  }
  CoeffPoly operator+(const CoeffPoly& o) const {
    CoeffPoly p = *this;
    p += o;
    return p;
  }
  CoeffPoly operator-(const CoeffPoly& o) const {
    CoeffPoly p = *this;
    p -= o;
    return p;
  }
  CoeffPoly operator-() const {
    CoeffPoly p;
    for (const auto& [k, v] : terms) p.terms.emplace(k, -v);
    return p;
  }
  CoeffPoly scaled(const Rat& r) const {
    CoeffPoly p;
    if (r == 0) return p;
    for (const auto& [k, v] : terms) p.terms.emplace(k, v * r);
    return p;
  }
  CoeffPoly scaled(const ScalarMonomial& m, const Rat& r = 1) const {
    CoeffPoly p;
    if (r == 0) return p;
    for (const auto& [k, v] : terms) p.add_term(k.first * m, k.second, v * r);
    return p;
  }

  // product, concatenating tuples (this ++ other)
  CoeffPoly operator*(const CoeffPoly& o) const {
    CoeffPoly p;
    for (const auto& [k1, v1] : terms)
      for (const auto& [k2, v2] : o.terms) {
        DerivTuple t = k1.second;
        t.insert(t.end(), k2.second.begin(), k2.second.end());
        p.add_term(k1.first * k2.first, t, v1 * v2);
      }
    return p;
  }

  // reindex tuples: new_tuple[i] = old_tuple[perm[i]]
  CoeffPoly permuted(const std::vector<int>& perm) const {
    CoeffPoly p;
    for (const auto& [k, v] : terms) {
      if (k.second.size() != perm.size()) throw std::invalid_argument("permutation length mismatch");
      DerivTuple t(perm.size());
      for (size_t i = 0; i < perm.size(); ++i) t[i] = k.second[perm[i]];
      p.add_term(k.first, t, v);
    }
    return p;
  }

  // canonicalize all tuples against a tree (quotient by tree automorphisms)
  CoeffPoly tree_canonical(const Tree& t) const {
    CoeffPoly p;
    for (const auto& [k, v] : terms) p.add_term(k.first, canonical_tuple(t, k.second), v);
    return p;
  }

  int max_order() const {
    int m = 0;
    for (const auto& [k, v] : terms) {
      (void)v;
      for (auto o : k.second) m = std::max(m, int(o));
    }
    return m;
  }

  std::string str() const {
    if (terms.empty()) return "0";
    // sort by (tuple, monomial) for readability
    std::vector<std::pair<Key, Rat>> v(terms.begin(), terms.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.first.second != b.first.second) return a.first.second < b.first.second;
      return a.first.first < b.first.first;
    });
    std::string s;
    for (const auto& [k, r] : v) {
      Rat ar = r < 0 ? Rat(-r) : r;
      s += s.empty() ? (r < 0 ? "- " : "") : (r < 0 ? " - " : " + ");
      bool need_num = (ar != 1) || k.first.is_unit();
      if (need_num) s += rat_str(ar);
      if (!k.first.is_unit()) {
        if (need_num) s += "*";
        s += k.first.str();
      }
      if (!k.second.empty()) s += " " + tuple_str(k.second);
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Multinomial sums <<k>>_l

inline Rat factorial(int n) {
  Rat r = 1;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// sum over compositions a_1+...+a_l = k of k!/a! <a_1,...,a_l>
inline CoeffPoly sangle(int k, int l) {
  if (k < 0 || l < 1) throw std::invalid_argument("sangle requires k >= 0, l >= 1");
  CoeffPoly p;
  DerivTuple cur(l, 0);
  Rat kf = factorial(k);
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == l - 1) {
      cur[pos] = static_cast<std::uint8_t>(rem);
      Rat w = kf;
      for (int i = 0; i < l; ++i) w /= factorial(cur[i]);
      p.add_term(ScalarMonomial::unit(), cur, w);
      return;
    }
    for (int v = 0; v <= rem; ++v) {
      cur[pos] = static_cast<std::uint8_t>(v);
      self(self, pos + 1, rem - v);
    }
  };
  rec(rec, 0, k);
  return p;
}

// ---------------------------------------------------------------------------
// Normal form on the v-basis {a..a''', v_c, v_cc, v_ccc, q^{-1}} modulo
// q = 1 - v_c a'  and  q^{-1} (1 - v_c a') = 1.
// This is the equality oracle for symbolic comparisons.

namespace detail {
inline void normalize_term(ScalarMonomial m, const DerivTuple& t, Rat r, CoeffPoly& out);

inline void expand_with(const ScalarMonomial& m, const DerivTuple& t, const Rat& r, int gen,
                        const std::vector<std::pair<ScalarMonomial, Rat>>& subst, CoeffPoly& out) {
  // replace one power of `gen` by `subst`
  ScalarMonomial base = m;
  base.e[gen] -= 1;
  for (const auto& [sm, sr] : subst) normalize_term(base * sm, t, r * sr, out);
}

inline void normalize_term(ScalarMonomial m, const DerivTuple& t, Rat r, CoeffPoly& out) {
  using P = std::vector<std::pair<ScalarMonomial, Rat>>;
  static const P pc_sub = {{ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVC) * ScalarMonomial::gen(GA2), 1},
                           {ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVCC) * ScalarMonomial::gen(GA1, 2), 1}};
  static const P pcc_sub = {{ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVCC) * ScalarMonomial::gen(GA2), 1},
                            {ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVCCC) * ScalarMonomial::gen(GA1, 2), 1}};
  static const P phc_sub = {{ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVCC) * ScalarMonomial::gen(GA1) *
                                 ScalarMonomial::gen(GA2),
                             2},
                            {ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GVC) * ScalarMonomial::gen(GA3), 1}};
  static const P q_sub = {{ScalarMonomial::unit(), 1},
                          {ScalarMonomial::gen(GVC) * ScalarMonomial::gen(GA1), -1}};

  if (m.e[GPC]) return expand_with(m, t, r, GPC, pc_sub, out);
  if (m.e[GPCC]) return expand_with(m, t, r, GPCC, pcc_sub, out);
  if (m.e[GPHC]) return expand_with(m, t, r, GPHC, phc_sub, out);
  if (m.e[GQ]) return expand_with(m, t, r, GQ, q_sub, out);
  if (m.e[GQI] && m.e[GVC] && m.e[GA1]) {
    // q^{-1} v_c a' = q^{-1} - 1
    ScalarMonomial base = m;
    base.e[GQI] -= 1;
    base.e[GVC] -= 1;
    base.e[GA1] -= 1;
    normalize_term(base * ScalarMonomial::gen(GQI), t, r, out);
    normalize_term(base, t, -r, out);
    return;
  }
  out.add_term(m, t, r);
}
} // namespace detail

inline CoeffPoly normalize_to_v_basis(const CoeffPoly& p) {
  CoeffPoly out;
  for (const auto& [k, v] : p.terms) detail::normalize_term(k.first, k.second, v, out);
  return out;
}

inline bool equal_normalized(const CoeffPoly& a, const CoeffPoly& b) {
  return normalize_to_v_basis(a).terms == normalize_to_v_basis(b).terms;
}

} // namespace qshe
