#pragma once

#include "qshe/coeff.hpp"
#include "qshe/dectree.hpp"
#include "qshe/nullity.hpp"
#include "qshe/tree.hpp"

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qshe {

enum class Family : int { Sym1 = 1, Sym2 = 2, Sym3 = 3 };

struct RenormSymbol {
  Tree tree;
  DerivTuple tup;
  bool operator<(const RenormSymbol& o) const {
    if (tree != o.tree) return tree < o.tree;
    return tup < o.tup;
  }
};

struct MembershipError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompositeCheck {
  Tree tree;
  std::string reason; // nullity reason, empty if not null
  std::string what;   // description of the composite
};

struct Certificate {
  bool ok = false;
  std::vector<CompositeCheck> checks;
  std::string failure;
};

// Tuple data of a relation: tau0 with its distinguished node, then tau_1..n.
struct TupleData {
  Family family = Family::Sym1;
  std::vector<Tree> taus;
  std::optional<Tree> tau0;
  int dist = 0;
};

struct Relation {
  std::map<Tree, CoeffPoly> lhs; // interpreted as: sum of g(poly (x) tree) = 0
  TupleData data;
  int deriv_order = 0;
  Certificate cert;
  std::vector<std::pair<Tree, std::string>> dropped_null; // symbols removed at generation

  bool has(const Tree& t) const { return lhs.count(t) != 0; }

  Relation scaled(const Rat& r) const {
    Relation out = *this;
    for (auto& [t, p] : out.lhs) p = p.scaled(r);
    return out;
  }
  Relation& operator+=(const Relation& o) {
    for (const auto& [t, p] : o.lhs) {
      auto it = lhs.find(t);
      if (it == lhs.end()) {
        lhs.emplace(t, p);
      } else {
        it->second += p;
        if (it->second.is_zero()) lhs.erase(it);
      }
    }
    return *this;
  }

  // substitute a := 1 (the worked-example normalisation c = 1)
  Relation with_a_one() const {
    Relation out = *this;
    for (auto& [t, p] : out.lhs) {
      CoeffPoly np;
      for (const auto& [k, v] : p.terms) {
        ScalarMonomial m = k.first;
        m.e[GA] = 0;
        np.add_term(m, k.second, v);
      }
      p = np;
    }
    return out;
  }

  std::string str() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [t, p] : lhs) {
      if (!first) os << "  ;;  ";
      first = false;
      os << t.render() << " :: " << p.str();
    }
    os << "  == 0";
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Membership in the admissible sets

namespace detail {

// (I' tbar_{i1}) prod_{s in rest} I tbar_s
inline Tree prong(const Tree& t1, const std::vector<Tree>& rest) {
  Tree acc = integrate(t1, EdgeKind::Prime);
  for (const auto& r : rest) acc = product(acc, integrate(r, EdgeKind::Plain));
  return acc;
}

inline std::string describe_indices(int i1, const std::vector<int>& rest) {
  std::string s = "i(1)=" + std::to_string(i1 + 1);
  for (size_t j = 0; j < rest.size(); ++j) s += ",i(" + std::to_string(j + 2) + ")=" + std::to_string(rest[j] + 1);
  return s;
}

} // namespace detail

// Exhaustive check of the admissibility conditions; all composite symbols that
// the lemma requires to vanish are listed with their nullity reasons.
inline Certificate in_A(const TupleData& data, const NullPredicate& np, const DegreeConfig& cfg = {}) {
  Certificate cert;
  const int n = static_cast<int>(data.taus.size());
  if (n < 2) {
    cert.failure = "need n >= 2";
    return cert;
  }
  for (const auto& t : data.taus) {
    if (t.has_x()) {
      cert.failure = "tau with X decoration";
      return cert;
    }
  }
  if (data.family != Family::Sym1 && !data.tau0) {
    cert.failure = "tau0 with distinguished node required";
    return cert;
  }

  // per-tau root-including subtrees
  std::vector<std::vector<Tree>> rsubs(n);
  for (int i = 0; i < n; ++i) rsubs[i] = root_subtrees(data.taus[i]);
  std::vector<std::pair<Tree, int>> t0subs;
  if (data.tau0) t0subs = subtrees_through(*data.tau0, data.dist);

  std::set<std::string> seen; // dedupe composites
  auto require_null = [&](const Tree& composite, const std::string& what) -> bool {
    if (!seen.insert(composite.key()).second) return true;
    NullVerdict v = is_null(composite, np, cfg);
    cert.checks.push_back({composite, v.reason, what});
    if (!v.null) {
      cert.failure = "composite not null: " + composite.render() + "  (" + what + ")";
      return false;
    }
    return true;
  };

  // iterate ell, choice of distinct indices, and root-including subtrees
  auto for_each_prong = [&](int ell_min, int ell_max, auto&& fn) -> bool {
    for (int ell = ell_min; ell <= ell_max; ++ell) {
      // i1 plus an unordered set of (ell-1) further distinct indices
      std::vector<int> rest_idx;
      std::function<bool(int, int)> pick = [&](int start, int need) -> bool {
        if (need == 0) {
          // iterate subtree choices
          for (int i1 = 0; i1 < n; ++i1) {
            bool used = false;
            for (int r : rest_idx) used = used || (r == i1);
            if (used) continue;
            // product over subtree choices of i1 and rest
            std::vector<int> all{i1};
            all.insert(all.end(), rest_idx.begin(), rest_idx.end());
            std::vector<size_t> choice(all.size(), 0);
            while (true) {
              Tree t1 = rsubs[i1][choice[0]];
              std::vector<Tree> rest;
              for (size_t j = 1; j < all.size(); ++j) rest.push_back(rsubs[all[j]][choice[j]]);
              if (!fn(t1, rest, i1, rest_idx)) return false;
              size_t pos = 0;
              while (pos < all.size()) {
                if (++choice[pos] < rsubs[all[pos]].size()) break;
                choice[pos] = 0;
                ++pos;
              }
              if (pos == all.size()) break;
            }
          }
          return true;
        }
        for (int i = start; i < n; ++i) {
          rest_idx.push_back(i);
          if (!pick(i + 1, need - 1)) return false;
          rest_idx.pop_back();
        }
        return true;
      };
      if (!pick(0, ell - 1)) return false;
    }
    return true;
  };

  // A1 condition (always required)
  bool ok = for_each_prong(2, n - 1, [&](const Tree& t1, const std::vector<Tree>& rest, int i1,
                                         const std::vector<int>& ridx) {
    Tree composite;
    try {
      composite = detail::prong(t1, rest);
    } catch (const GrammarError& e) {
      cert.failure = std::string("composite construction failed: ") + e.what();
      return false;
    }
    return require_null(composite, "A1 ell=" + std::to_string(1 + (int)rest.size()) + " " +
                                       detail::describe_indices(i1, ridx));
  });
  if (!ok) return cert;

  if (data.family != Family::Sym1) {
    EdgeKind outer = data.family == Family::Sym2 ? EdgeKind::Plain : EdgeKind::Prime;
    ok = for_each_prong(1, n - 1, [&](const Tree& t1, const std::vector<Tree>& rest, int i1,
                                      const std::vector<int>& ridx) {
      Tree inner;
      try {
        inner = detail::prong(t1, rest);
      } catch (const GrammarError& e) {
        cert.failure = std::string("composite construction failed: ") + e.what();
        return false;
      }
      Tree wrapped = integrate(inner, outer);
      for (const auto& [sub0, d0] : t0subs) {
        Tree composite;
        try {
          composite = glue(wrapped, sub0, d0);
        } catch (const GrammarError&) {
          // the merged node cannot host the guest: such a symbol does not
          // exist in the structure, so nothing is required of it
          continue;
        }
        if (!require_null(composite,
                          (data.family == Family::Sym2 ? "A2" : "A3") +
                              std::string(" ell=") + std::to_string(1 + (int)rest.size()) + " " +
                              detail::describe_indices(i1, ridx) + " tau0bar=" + sub0.render()))
          return false;
      }
      return true;
    });
    if (!ok) return cert;
  }

  cert.ok = true;
  return cert;
}

// ---------------------------------------------------------------------------
// Relation generation (the integration-by-parts identities)

struct GenSpec {
  TupleData data;
  std::vector<DerivTuple> spect; // per tau: orders on its internal edges
  DerivTuple spect0;             // orders on tau0's internal edges
  int k = 0;                     // differentiate k times in the parameter
  NullPredicate np;
  DegreeConfig cfg;
  int order_cap = 3;
};

namespace detail {

// decorated factor I^kind[tau], spectator orders inside, `o` on the new edge
inline std::pair<Tree, CoeffPoly> dec_factor(const Tree& tau, const DerivTuple& spect, EdgeKind kind,
                                             int o) {
  return dec_integrate(tau, CoeffPoly::tuple1(spect), kind, o);
}

// enumerate compositions of k into m slots, with multinomial weight k!/a!
inline void compositions(int k, int m, const std::function<void(const std::vector<int>&, const Rat&)>& fn) {
  std::vector<int> cur(m, 0);
  Rat kf = factorial(k);
  std::function<void(int, int)> rec = [&](int pos, int rem) {
    if (pos == m - 1) {
      cur[pos] = rem;
      Rat w = kf;
      for (int v : cur) w /= factorial(v);
      fn(cur, w);
      return;
    }
    for (int v = 0; v <= rem; ++v) {
      cur[pos] = v;
      rec(pos + 1, rem - v);
    }
  };
  if (m == 0) {
    if (k == 0) fn(cur, 1);
    return;
  }
  rec(0, k);
}

} // namespace detail

inline Relation gen_relation(const GenSpec& spec) {
  const auto& data = spec.data;
  const int n = static_cast<int>(data.taus.size());
  Relation rel;
  rel.data = data;
  rel.deriv_order = spec.k;
  rel.cert = in_A(data, spec.np, spec.cfg);
  if (!rel.cert.ok) throw MembershipError("admissibility failed: " + rel.cert.failure);

  std::vector<DerivTuple> spect = spec.spect;
  if (spect.empty()) {
    for (const auto& t : data.taus) spect.push_back(DerivTuple(t.edge_count(), 0));
  }
  if (spect.size() != data.taus.size()) throw std::invalid_argument("spectator tuple count mismatch");
  for (int i = 0; i < n; ++i)
    if (spect[i].size() != static_cast<size_t>(data.taus[i].edge_count()))
      throw std::invalid_argument("spectator tuple length mismatch for tau_" + std::to_string(i + 1));
  DerivTuple spect0 = spec.spect0;
  if (data.tau0 && spect0.empty()) spect0.assign(data.tau0->edge_count(), 0);

  auto add_symbol = [&](const Tree& t, const CoeffPoly& p, const Rat& w, bool with_a, int extra_k) {
    // extra_k: 0 for the plain term; on the c-side we add both c * (k-dist)
    // and k * (k-1 dist) variants via two calls
    ScalarMonomial m = with_a ? ScalarMonomial::gen(GA) : ScalarMonomial::unit();
    NullVerdict v = is_null(t, spec.np, spec.cfg);
    if (v.null) {
      rel.dropped_null.emplace_back(t, v.reason);
      return;
    }
    (void)extra_k;
    auto it = rel.lhs.find(t);
    if (it == rel.lhs.end()) it = rel.lhs.emplace(t, CoeffPoly{}).first;
    it->second += p.scaled(m, w);
    if (it->second.is_zero()) rel.lhs.erase(it);
  };

  // assemble a term: product of decorated factors, optionally wrapped and glued
  // factors: list of (tau index or -2 for "bare tau_i factor", kind, playing order)
  struct Piece {
    int tau;      // index into taus
    bool integrated;
    EdgeKind kind; // if integrated
    int order;     // playing order on the new edge
  };
  auto build = [&](const std::vector<Piece>& pieces, std::optional<EdgeKind> wrap, int wrap_order,
                   bool glue_t0) -> std::pair<Tree, CoeffPoly> {
    Tree t = Tree::one();
    CoeffPoly p = CoeffPoly::tuple1({});
    bool started = false;
    for (const auto& pc : pieces) {
      std::pair<Tree, CoeffPoly> f =
          pc.integrated
              ? detail::dec_factor(data.taus[pc.tau], spect[pc.tau], pc.kind, pc.order)
              : std::make_pair(data.taus[pc.tau], CoeffPoly::tuple1(spect[pc.tau]));
      if (!started) {
        t = f.first;
        p = f.second;
        started = true;
      } else {
        auto [nt, np2] = dec_product(t, p, f.first, f.second);
        t = nt;
        p = np2;
      }
    }
    if (wrap) {
      auto [nt, np2] = dec_integrate(t, p, *wrap, wrap_order);
      t = nt;
      p = np2;
    }
    if (glue_t0) {
      auto [nt, np2] = dec_glue(t, p, *data.tau0, CoeffPoly::tuple1(spect0), data.dist);
      t = nt;
      p = np2;
    }
    return {t, p};
  };

  // distribute derivative orders over the playing slots of a term shape.
  // `assemble(alpha, wrap_order)` builds the decorated term given slot orders.
  // For the plain sums the weight is the multinomial; the c-sums get
  // a * (k over m slots) + k * (k-1 over m slots).
  auto emit_plain = [&](int m, const std::function<std::pair<Tree, CoeffPoly>(const std::vector<int>&)>& assemble,
                        const Rat& sign) {
    detail::compositions(spec.k, m, [&](const std::vector<int>& alpha, const Rat& w) {
      for (int a : alpha)
        if (a > spec.order_cap) throw std::runtime_error("derivative order cap exceeded");
      auto [t, p] = assemble(alpha);
      add_symbol(t, p, sign * w, false, 0);
    });
  };
  auto emit_cterm = [&](int m, const std::function<std::pair<Tree, CoeffPoly>(const std::vector<int>&)>& assemble,
                        const Rat& sign) {
    detail::compositions(spec.k, m, [&](const std::vector<int>& alpha, const Rat& w) {
      for (int a : alpha)
        if (a > spec.order_cap) throw std::runtime_error("derivative order cap exceeded");
      auto [t, p] = assemble(alpha);
      add_symbol(t, p, sign * w, true, 0);
    });
    if (spec.k >= 1) {
      detail::compositions(spec.k - 1, m, [&](const std::vector<int>& alpha, const Rat& w) {
        auto [t, p] = assemble(alpha);
        add_symbol(t, p, sign * Rat(spec.k) * w, false, 0);
      });
    }
  };

  const Rat plus = 1, minus = -1;
  if (data.family == Family::Sym1) {
    for (int i = 0; i < n; ++i) {
      // sigma^i = tau_i prod_{k != i} I tau_k ; playing: the n-1 plain edges
      emit_plain(n - 1, [&](const std::vector<int>& alpha) {
        std::vector<Piece> pieces{{i, false, EdgeKind::Plain, 0}};
        int s = 0;
        for (int k2 = 0; k2 < n; ++k2)
          if (k2 != i) pieces.push_back({k2, true, EdgeKind::Plain, alpha[s++]});
        return build(pieces, std::nullopt, 0, false);
      }, plus);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        // sigma_ij = (I'tau_i)(I'tau_j) prod I tau_k ; playing: all n edges
        emit_cterm(n, [&](const std::vector<int>& alpha) {
          std::vector<Piece> pieces{{i, true, EdgeKind::Prime, alpha[0]},
                                    {j, true, EdgeKind::Prime, alpha[1]}};
          int s = 2;
          for (int k2 = 0; k2 < n; ++k2)
            if (k2 != i && k2 != j) pieces.push_back({k2, true, EdgeKind::Plain, alpha[s++]});
          return build(pieces, std::nullopt, 0, false);
        }, minus);
      }
  } else {
    EdgeKind outer = data.family == Family::Sym2 ? EdgeKind::Plain : EdgeKind::Prime;
    // first sum: I/I'( tau_i prod I tau_k ) o tau0 ; playing: outer edge + n-1
    for (int i = 0; i < n; ++i) {
      emit_plain(n, [&](const std::vector<int>& alpha) {
        std::vector<Piece> pieces{{i, false, EdgeKind::Plain, 0}};
        int s = 1;
        for (int k2 = 0; k2 < n; ++k2)
          if (k2 != i) pieces.push_back({k2, true, EdgeKind::Plain, alpha[s++]});
        return build(pieces, outer, alpha[0], true);
      }, plus);
    }
    if (data.family == Family::Sym2) {
      // - ( prod_k I tau_k ) o tau0 ; playing: the n plain edges
      emit_plain(n, [&](const std::vector<int>& alpha) {
        std::vector<Piece> pieces;
        for (int k2 = 0; k2 < n; ++k2) pieces.push_back({k2, true, EdgeKind::Plain, alpha[k2]});
        return build(pieces, std::nullopt, 0, true);
      }, minus);
    } else {
      // - sum_i ( (I'tau_i) prod I tau_k ) o tau0
      for (int i = 0; i < n; ++i) {
        emit_plain(n, [&](const std::vector<int>& alpha) {
          std::vector<Piece> pieces{{i, true, EdgeKind::Prime, alpha[0]}};
          int s = 1;
          for (int k2 = 0; k2 < n; ++k2)
            if (k2 != i) pieces.push_back({k2, true, EdgeKind::Plain, alpha[s++]});
          return build(pieces, std::nullopt, 0, true);
        }, minus);
      }
    }
    // - c sum_{i != j} I/I'( (I'tau_i)(I'tau_j) prod I tau_k ) o tau0
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        emit_cterm(n + 1, [&](const std::vector<int>& alpha) {
          std::vector<Piece> pieces{{i, true, EdgeKind::Prime, alpha[1]},
                                    {j, true, EdgeKind::Prime, alpha[2]}};
          int s = 3;
          for (int k2 = 0; k2 < n; ++k2)
            if (k2 != i && k2 != j) pieces.push_back({k2, true, EdgeKind::Plain, alpha[s++]});
          return build(pieces, outer, alpha[0], true);
        }, minus);
      }
  }

  return rel;
}

// diff_relation: regenerate with the derivative order raised by k.
inline Relation diff_relation(const Relation& r, int k, const NullPredicate& np,
                              const DegreeConfig& cfg = {}, int order_cap = 3) {
  GenSpec spec;
  spec.data = r.data;
  spec.k = r.deriv_order + k;
  spec.np = np;
  spec.cfg = cfg;
  spec.order_cap = order_cap;
  return gen_relation(spec);
}

} // namespace qshe
