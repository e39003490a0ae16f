#pragma once

#include "qshe/coeff.hpp"
#include "qshe/dectree.hpp"
#include "qshe/nullity.hpp"
#include "qshe/tree.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace qshe {

// ---------------------------------------------------------------------------
// Coefficient tables of the abstract fixed-point system.

struct SeriesTable {
  std::map<Tree, CoeffPoly> u, f, vc, vcc, vccc, vcx;
  int truncation = 4;

  static const char* unknown_name(int i) {
    static const char* names[] = {"U", "F", "Vc", "Vcc", "Vccc", "Vcx"};
    return names[i];
  }
  const std::map<Tree, CoeffPoly>& table(int i) const {
    switch (i) {
      case 0: return u;
      case 1: return f;
      case 2: return vc;
      case 3: return vcc;
      case 4: return vccc;
      default: return vcx;
    }
  }
};

namespace detail {

// modelled distribution: constant part (coefficient of the unit symbol) plus
// tree components with full-length derivative tuples
struct MD {
  CoeffPoly constant; // empty tuples
  std::map<Tree, CoeffPoly> comp;

  static MD unit() {
    MD m;
    m.constant = CoeffPoly::constant(1);
    return m;
  }
  bool is_zero() const { return constant.is_zero() && comp.empty(); }
  void add(const Tree& t, const CoeffPoly& p) {
    if (p.is_zero()) return;
    auto it = comp.find(t);
    if (it == comp.end()) {
      comp.emplace(t, p);
    } else {
      it->second += p;
      if (it->second.is_zero()) comp.erase(it);
    }
  }
  MD& operator+=(const MD& o) {
    constant += o.constant;
    for (const auto& [t, p] : o.comp) add(t, p);
    return *this;
  }
  MD scaled(const Rat& r) const {
    MD m;
    m.constant = constant.scaled(r);
    for (const auto& [t, p] : comp) m.comp.emplace(t, p.scaled(r));
    return m;
  }
  MD scaled_gen(const ScalarMonomial& g, const Rat& r = 1) const {
    MD m;
    m.constant = constant.scaled(g, r);
    for (const auto& [t, p] : comp) {
      CoeffPoly q = p.scaled(g, r);
      if (!q.is_zero()) m.comp.emplace(t, q);
    }
    return m;
  }
};

inline MD md_mul(const MD& a, const MD& b, int noise_cap) {
  MD m;
  m.constant = a.constant * b.constant;
  if (!b.constant.is_zero())
    for (const auto& [t, p] : a.comp) m.add(t, p * b.constant);
  if (!a.constant.is_zero())
    for (const auto& [t, p] : b.comp) m.add(t, a.constant * p);
  for (const auto& [t1, p1] : a.comp)
    for (const auto& [t2, p2] : b.comp) {
      if (t1.noise_count() + t2.noise_count() > noise_cap) continue;
      auto [t, p] = dec_product(t1, p1, t2, p2);
      m.add(t, p);
    }
  return m;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Engine 1: genuine fixed-point iteration of the abstract system.
//
// The system is solved level by level in the noise count.  The only
// self-referential coefficient pattern, u_tau = (...) + a' v_c u_tau, is
// resolved by the geometric resummation that introduces q^{-1}.

class FixedPointEngine {
public:
  explicit FixedPointEngine(int max_noises = 4, DegreeConfig cfg = {})
      : maxn_(max_noises), cfg_(cfg) {
    if (max_noises > 4) throw std::invalid_argument("truncation above four noises not supported");
    for (const auto& t : gaussian_null_list()) skip_.insert(t.key());
  }

  SeriesTable run() {
    SeriesTable out;
    out.truncation = maxn_;
    for (int level = 1; level <= maxn_; ++level) {
      assemble_f(level, out);
      if (level <= maxn_ - 1) assemble_uv(level, out);
    }
    verify_stable(out);
    return out;
  }

  // Open question guard: products of three or more integral factors in U may
  // only feed Gaussian-null or overweight symbols.  Returns offending trees.
  std::vector<Tree> heavy_product_check(const SeriesTable& st) const {
    std::vector<Tree> bad;
    for (const auto& [t, p] : st.u) {
      (void)p;
      if (t.node(0).kid_edges.size() < 3) continue;
      std::vector<Tree> feeds;
      try {
        feeds.push_back(product(Tree::noise(), t));
      } catch (const GrammarError&) {
      }
      try {
        feeds.push_back(product(parse_tree("Ip[Xi]*Ip[Xi]"), t));
      } catch (const GrammarError&) {
      }
      for (const auto& c : feeds) {
        if (c.noise_count() > maxn_) continue;
        if (!c.equation_shape()) continue;
        if (!(degree(c, cfg_) < 0)) continue;
        if (skip_.count(c.key())) continue;
        bad.push_back(c);
      }
    }
    return bad;
  }

private:
  int maxn_;
  DegreeConfig cfg_;
  std::set<std::string> skip_; // Gaussian-null four-noise symbols
  static constexpr int kOrderCap = 3;

  using MD = detail::MD;

  // caps per table (what can still feed a tracked right-hand-side symbol)
  int ucap() const { return maxn_ - 1; }
  int vccap() const { return maxn_ - 1; }
  int vcccap() const { return maxn_ - 2; }
  int vccccap() const { return 1; }
  int vcxcap() const { return maxn_ - 1; }

  MD md_of(const std::map<Tree, CoeffPoly>& table, const CoeffPoly& constant) const {
    MD m;
    m.constant = constant;
    for (const auto& [t, p] : table) m.comp.emplace(t, p);
    return m;
  }

  MD uhat(const SeriesTable& st) const { return md_of(st.u, CoeffPoly::zero()); }

  // a^{(d)}(U) composed with the solution; exact since only derivatives up to
  // a''' can reach tracked symbols
  MD a_comp(int d, const MD& uh, int cap) const {
    MD res;
    res.constant = CoeffPoly::from_gen(GA + d); // a, a1, a2, a3 are consecutive
    MD pw = MD::unit();
    Rat fact = 1;
    for (int k = 1; d + k <= 3; ++k) {
      pw = detail::md_mul(pw, uh, cap);
      if (pw.comp.empty()) break;
      fact *= k;
      res += pw.scaled_gen(ScalarMonomial::gen(GA + d + k), Rat(1) / fact);
    }
    return res;
  }

  MD bhat(const SeriesTable& st, int cap) const {
    MD a0 = a_comp(0, uhat(st), cap);
    a0.constant = CoeffPoly::zero(); // \hat b = a(U) - a(u) 1
    return a0;
  }

  // K^{(k)} applied to F (one plain or prime edge of derivative order k);
  // the constant part of K^{(k)}F is the corresponding v generator
  MD kop(const SeriesTable& st, int k, EdgeKind kind, int cap) const {
    MD m;
    if (kind == EdgeKind::Plain) {
      if (k == 1) m.constant = CoeffPoly::from_gen(GVC);
      if (k == 2) m.constant = CoeffPoly::from_gen(GVCC);
      if (k == 3) m.constant = CoeffPoly::from_gen(GVCCC);
    }
    for (const auto& [t, p] : st.f) {
      if (t.noise_count() > cap) continue;
      auto [it, ip] = dec_integrate(t, p, kind, k);
      m.add(it, ip);
    }
    return m;
  }

  // the lifted integration maps: sum_l bhat^l / l! K^{k+l} F, optionally with
  // a spatial derivative on the kernel factor
  MD frI(const SeriesTable& st, int k, bool xderiv, int cap) const {
    MD res;
    MD bh = bhat(st, cap);
    MD pw = MD::unit();
    Rat fact = 1;
    for (int l = 0; k + l <= kOrderCap; ++l) {
      if (l > 0) {
        pw = detail::md_mul(pw, bh, cap);
        if (pw.is_zero()) break;
        fact *= l;
      }
      MD kf = kop(st, k + l, xderiv ? EdgeKind::Prime : EdgeKind::Plain, cap);
      res += detail::md_mul(pw, kf, cap).scaled(Rat(1) / fact);
    }
    return res;
  }

  MD du(const SeriesTable& st, int cap) const {
    MD m;
    for (const auto& [t, p] : st.u) {
      if (t.noise_count() > cap) continue;
      if (t.node(0).noise) throw std::logic_error("U component with a noise at the root");
      for (int e : t.node(0).kid_edges) {
        auto [ft, fp] = dec_flip_root_edge(t, p, e);
        m.add(ft, fp);
      }
    }
    return m;
  }

  MD assemble_F_md(const SeriesTable& st) const {
    const int cap = maxn_;
    MD Uh = uhat(st);
    MD A0 = a_comp(0, Uh, cap);
    MD A1 = a_comp(1, Uh, cap);
    MD A2 = a_comp(2, Uh, cap);
    MD Vc = md_of(st.vc, CoeffPoly::from_gen(GVC));
    MD Vcc = md_of(st.vcc, CoeffPoly::from_gen(GVCC));
    MD Vcx = md_of(st.vcx, CoeffPoly::zero());
    MD DU = du(st, cap);

    MD F;
    // (1 - V_c a'(U)) Xi
    MD m1 = MD::unit();
    MD vca1 = detail::md_mul(Vc, A1, cap - 1);
    m1.constant -= vca1.constant;
    for (const auto& [t, p] : vca1.comp) m1.add(t, p.scaled(Rat(-1)));
    Tree xi = Tree::noise();
    F.add(xi, m1.constant);
    for (const auto& [t, p] : m1.comp) {
      if (t.noise_count() + 1 > cap) continue;
      auto [xt, xp] = dec_product(xi, CoeffPoly::tuple1({}), t, p);
      F.add(xt, xp);
    }
    // + 2 V_cx a(U) a'(U) DU
    F += detail::md_mul(detail::md_mul(detail::md_mul(Vcx, A0, cap), A1, cap), DU, cap).scaled(2);
    // + V_cc a(U) a'(U)^2 (DU)^2
    MD du2 = detail::md_mul(DU, DU, cap);
    F += detail::md_mul(detail::md_mul(detail::md_mul(Vcc, A0, cap), detail::md_mul(A1, A1, cap), cap),
                        du2, cap);
    // + V_c a(U) a''(U) (DU)^2
    F += detail::md_mul(detail::md_mul(detail::md_mul(Vc, A0, cap), A2, cap), du2, cap);
    return F;
  }

  void assemble_f(int level, SeriesTable& st) const {
    MD F = assemble_F_md(st);
    for (auto& [t, p] : F.comp) {
      if (t.noise_count() != level) continue;
      if (!t.equation_shape()) continue;
      if (skip_.count(t.key())) continue;
      if (p.is_zero()) continue;
      st.f[t] = p;
    }
  }

  void assemble_uv(int level, SeriesTable& st) const {
    // U: resum the self-referential a' v_c u_tau term
    MD Umd = frI(st, 0, false, ucap());
    ScalarMonomial qinv = ScalarMonomial::gen(GQI);
    for (auto& [t, p] : Umd.comp) {
      if (t.noise_count() != level || t.noise_count() > ucap()) continue;
      CoeffPoly v = p.scaled(qinv);
      if (!v.is_zero()) st.u[t] = v;
    }
    auto store = [&](std::map<Tree, CoeffPoly>& table, MD md, int cap) {
      for (auto& [t, p] : md.comp) {
        if (t.noise_count() != level || t.noise_count() > cap) continue;
        if (!p.is_zero()) table[t] = p;
      }
    };
    store(st.vc, frI(st, 1, false, vccap()), vccap());
    store(st.vcc, frI(st, 2, false, vcccap()), vcccap());
    store(st.vccc, frI(st, 3, false, vccccap()), vccccap());
    store(st.vcx, frI(st, 1, true, vcxcap()), vcxcap());
  }

  // Re-derive every stored component from the finished tables; the result
  // must reproduce the tables exactly (fixed point reached).
  void verify_stable(const SeriesTable& st) const {
    SeriesTable re = st;
    re.u.clear();
    re.vc.clear();
    re.vcc.clear();
    re.vccc.clear();
    re.vcx.clear();
    re.f.clear();
    for (int level = 1; level <= maxn_; ++level) {
      // recompute from the *final* tables rather than the partial ones
      SeriesTable probe = st;
      MD F = assemble_F_md(probe);
      for (auto& [t, p] : F.comp) {
        if (t.noise_count() != level || !t.equation_shape() || skip_.count(t.key())) continue;
        if (!p.is_zero()) re.f[t] = p;
      }
      if (level <= maxn_ - 1) {
        MD Umd = frI(probe, 0, false, ucap());
        for (auto& [t, p] : Umd.comp) {
          if (t.noise_count() != level) continue;
          // remove the self term a' v_c u_tau before resumming
          CoeffPoly self;
          auto it = st.u.find(t);
          if (it != st.u.end())
            self = it->second.scaled(ScalarMonomial::gen(GA1) * ScalarMonomial::gen(GVC));
          CoeffPoly v = (p + self.scaled(Rat(-1))).scaled(ScalarMonomial::gen(GQI));
          // note: p was computed with u_tau already present in the table
          if (!v.is_zero()) re.u[t] = v;
        }
        auto redo = [&](std::map<Tree, CoeffPoly>& table, MD md, int cap) {
          for (auto& [t, p] : md.comp)
            if (t.noise_count() == level && t.noise_count() <= cap && !p.is_zero()) table[t] = p;
        };
        redo(re.vc, frI(probe, 1, false, vccap()), vccap());
        redo(re.vcc, frI(probe, 2, false, vcccap()), vcccap());
        redo(re.vccc, frI(probe, 3, false, vccccap()), vccccap());
        redo(re.vcx, frI(probe, 1, true, vcxcap()), vcxcap());
      }
    }
    auto cmp = [&](const std::map<Tree, CoeffPoly>& A, const std::map<Tree, CoeffPoly>& B,
                   const char* which) {
      if (A.size() != B.size()) throw std::logic_error(std::string("fixed point not reached: ") + which);
      for (const auto& [t, p] : A) {
        auto it = B.find(t);
        if (it == B.end() || !equal_normalized(p, it->second))
          throw std::logic_error(std::string("fixed point not reached at ") + which + " " + t.render());
      }
    };
    cmp(st.f, re.f, "F");
    cmp(st.u, re.u, "U");
    cmp(st.vc, re.vc, "Vc");
    cmp(st.vcc, re.vcc, "Vcc");
    cmp(st.vccc, re.vccc, "Vccc");
    cmp(st.vcx, re.vcx, "Vcx");
  }
};

inline SeriesTable fixed_point_expand(int max_noises = 4, DegreeConfig cfg = {}) {
  return FixedPointEngine(max_noises, cfg).run();
}

// ---------------------------------------------------------------------------
// Engine 2: the transcribed closed-form recursions.
//
// Every coefficient is assembled from the displayed recursion formulae,
// with tensor slots carried structurally by the decorated-tree operations.

class Recursions {
public:
  explicit Recursions(DegreeConfig cfg = {}) : cfg_(cfg) {
    xi_ = Tree::noise();
    t3_ = parse_tree("Xi*I[Xi]");
    t2_ = parse_tree("Ip[Xi]*Ip[Xi]");
    f_[xi_] = CoeffPoly::from_gen(GQ);
    // two noises
    f_[t3_] = rec_A(xi_);
    f_[t2_] = rec_B(xi_, xi_);
    // three noises
    store(rec_A_tree(t3_), rec_A(t3_));
    store(rec_A_tree(t2_), rec_A(t2_));
    store(rec_AM_tree(xi_), rec_AM(xi_));
    store(rec_BM_tree(xi_), rec_BM(xi_));
    store(rec_B_tree(xi_, t3_), rec_B(xi_, t3_));
    store(rec_B_tree(xi_, t2_), rec_B(xi_, t2_));
    // four noises: the seventeen target symbols
    Tree a3 = rec_A_tree(t3_), a2 = rec_A_tree(t2_);
    Tree b3 = rec_B_tree(xi_, t3_), b2 = rec_B_tree(xi_, t2_);
    store(rec_A_tree(a3), rec_A(a3));   // AAA
    store(rec_A_tree(a2), rec_A(a2));   // BAA
    store(rec_A_tree(b3), rec_A(b3));   // ABA
    store(rec_A_tree(b2), rec_A(b2));   // BBA
    store(rec_B_tree(xi_, a3), rec_B(xi_, a3)); // AAB
    store(rec_B_tree(xi_, a2), rec_B(xi_, a2)); // BAB
    store(rec_B_tree(xi_, b3), rec_B(xi_, b3)); // ABB
    store(rec_B_tree(xi_, b2), rec_B(xi_, b2)); // BBB
    store(rec_B_tree(t3_, t3_), rec_B(t3_, t3_)); // S1
    store(rec_B_tree(t3_, t2_), rec_B(t3_, t2_)); // S2
    store(rec_B_tree(t2_, t2_), rec_B(t2_, t2_)); // S3
    store(rec_AM_tree(t3_), rec_AM(t3_)); // AAM
    store(rec_AM_tree(t2_), rec_AM(t2_)); // BAM
    store(rec_BM_tree(t3_), rec_BM(t3_)); // ABM
    store(rec_BM_tree(t2_), rec_BM(t2_)); // BBM
    store(rec_S_tree(t3_), rec_S(t3_));   // S4
    store(rec_S_tree(t2_), rec_S(t2_));   // S5
  }

  const std::map<Tree, CoeffPoly>& f_table() const { return f_; }
  const CoeffPoly& f(const Tree& t) const {
    auto it = f_.find(t);
    if (it == f_.end()) throw std::out_of_range("no transcribed coefficient for " + t.render());
    return it->second;
  }

  // ---- trees of the schematic operations ----
  Tree rec_A_tree(const Tree& z) const { return product(Tree::noise(), integrate(z, EdgeKind::Plain)); }
  Tree rec_B_tree(const Tree& z, const Tree& z2) const {
    return product(integrate(z, EdgeKind::Prime), integrate(z2, EdgeKind::Prime));
  }
  Tree rec_AM_tree(const Tree& z) const {
    return product(rec_A_tree(z), integrate(Tree::noise(), EdgeKind::Plain));
  }
  Tree rec_BM_tree(const Tree& z) const {
    return product(rec_B_tree(xi_, z), integrate(Tree::noise(), EdgeKind::Plain));
  }
  Tree rec_S_tree(const Tree& z) const {
    return product(t2_, integrate(z, EdgeKind::Plain));
  }

  // ---- helper coefficients (the displayed u / v entries) ----

  using DP = std::pair<Tree, CoeffPoly>; // decorated pair

  DP I_of(const Tree& z, int order, EdgeKind kind = EdgeKind::Plain) const {
    return dec_integrate(z, f(z), kind, order);
  }

  // u_{<ZI>} = (1/q) fhat_Z (x) <0>
  DP u_ZI(const Tree& z) const {
    auto [t, p] = I_of(z, 0);
    return {t, p.scaled(ScalarMonomial::gen(GQI))};
  }
  // (v_c)_{<ZI>} = fhat_Z (x) ( <1> + (1/q) a' v_cc <0> )
  DP vc_ZI(const Tree& z) const {
    auto [t1, p1] = I_of(z, 1);
    auto [t0, p0] = I_of(z, 0);
    (void)t0;
    ScalarMonomial m = ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GA1) * ScalarMonomial::gen(GVCC);
    return {t1, p1 + p0.scaled(m)};
  }
  // (v_cc)_{<ZI>} = fhat_Z (x) ( <2> + (1/q) a' v_ccc <0> )
  DP vcc_ZI(const Tree& z) const {
    auto [t2, p2] = I_of(z, 2);
    auto [t0, p0] = I_of(z, 0);
    (void)t0;
    ScalarMonomial m = ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GA1) * ScalarMonomial::gen(GVCCC);
    return {t2, p2 + p0.scaled(m)};
  }
  // (v_cx)_{<ZJ>} = fhat_Z (x) <1> on the derivative edge
  DP vcx_ZJ(const Tree& z) const { return I_of(z, 1, EdgeKind::Prime); }

  // u at the pair I[Z] I[Z2]: (1/q^2)(2*/2) fZ (x) fZ2 (x) (a' <<1>>_2 + p_c <<0>>_2)
  DP u_pair(const Tree& z, const Tree& z2) const {
    Rat twostar = z == z2 ? 1 : 2;
    auto a10 = dec_product(I_of(z, 1).first, I_of(z, 1).second, I_of(z2, 0).first, I_of(z2, 0).second);
    auto a01 = dec_product(I_of(z, 0).first, I_of(z, 0).second, I_of(z2, 1).first, I_of(z2, 1).second);
    auto c00 = dec_product(I_of(z, 0).first, I_of(z, 0).second, I_of(z2, 0).first, I_of(z2, 0).second);
    ScalarMonomial q2 = ScalarMonomial::gen(GQI, 2);
    CoeffPoly p = (a10.second + a01.second).scaled(q2 * ScalarMonomial::gen(GA1), twostar / 2) +
                  c00.second.scaled(q2 * ScalarMonomial::gen(GPC), twostar / 2);
    return {c00.first, p};
  }

  // (v_cx) at I[Z] I'[Z2] = (1/q) a' fZ (x) fZ2 (x) <0,2>
  DP vcx_pair(const Tree& z, const Tree& z2) const {
    auto t = dec_product(I_of(z, 0).first, I_of(z, 0).second, I_of(z2, 2, EdgeKind::Prime).first,
                         I_of(z2, 2, EdgeKind::Prime).second);
    return {t.first, t.second.scaled(ScalarMonomial::gen(GQI) * ScalarMonomial::gen(GA1))};
  }

  // (v_c) at the pair I[Z] I[Z2]:
  //   a' u_{ZI} (x) fZ2 <2> + a' fZ <2> (x) u_{Z2I} + a' u_pair v_cc
  //   + (2*/2) ( a'' u_{ZI} u_{Z2I} v_cc + (a')^2 u_{ZI} u_{Z2I} v_ccc )
  DP vc_pair(const Tree& z, const Tree& z2) const {
    Rat twostar = z == z2 ? 1 : 2;
    auto uz = u_ZI(z), uz2 = u_ZI(z2);
    auto l1 = dec_product(uz.first, uz.second, I_of(z2, 2).first, I_of(z2, 2).second);
    auto l2 = dec_product(I_of(z, 2).first, I_of(z, 2).second, uz2.first, uz2.second);
    auto up = u_pair(z, z2);
    auto uu = dec_product(uz.first, uz.second, uz2.first, uz2.second);
    CoeffPoly p = (l1.second + l2.second).scaled(ScalarMonomial::gen(GA1), twostar / 2);
    p += up.second.scaled(ScalarMonomial::gen(GA1) * ScalarMonomial::gen(GVCC));
    p += uu.second.scaled(ScalarMonomial::gen(GA2) * ScalarMonomial::gen(GVCC), twostar / 2);
    p += uu.second.scaled(ScalarMonomial::gen(GA1, 2) * ScalarMonomial::gen(GVCCC), twostar / 2);
    return {l1.first, p};
  }

  // ---- the recursions ----

  // fhat_{<ZA>} = -p_c fhat_Z <0> - a' fhat_Z <1>
  CoeffPoly rec_A(const Tree& z) const {
    auto [t0, p0] = I_of(z, 0);
    auto [t1, p1] = I_of(z, 1);
    (void)t1;
    auto a0 = dec_product(xi_, CoeffPoly::tuple1({}), t0,
                          p0.scaled(ScalarMonomial::gen(GPC), -1) + p1.scaled(ScalarMonomial::gen(GA1), -1));
    return a0.second;
  }

  // fhat_{<ZZ2>} = (2*/q) fZ (x) fZ2 (x) ( a a' <<1>>_2 + a p_c <<0>>_2 )
  CoeffPoly rec_B(const Tree& z, const Tree& z2) const {
    Rat twostar = z == z2 ? 1 : 2;
    auto j = [&](const Tree& w, int o) { return I_of(w, o, EdgeKind::Prime); };
    auto a10 = dec_product(j(z, 1).first, j(z, 1).second, j(z2, 0).first, j(z2, 0).second);
    auto a01 = dec_product(j(z, 0).first, j(z, 0).second, j(z2, 1).first, j(z2, 1).second);
    auto c00 = dec_product(j(z, 0).first, j(z, 0).second, j(z2, 0).first, j(z2, 0).second);
    ScalarMonomial qi = ScalarMonomial::gen(GQI);
    CoeffPoly p = (a10.second + a01.second)
                      .scaled(qi * ScalarMonomial::gen(GA) * ScalarMonomial::gen(GA1), twostar);
    p += c00.second.scaled(qi * ScalarMonomial::gen(GA) * ScalarMonomial::gen(GPC), twostar);
    return p;
  }

  // fhat_{<ZAM>} = -a''(v_c)_{ZI} u_1 - a'' u_{ZI} (v_c)_1 - v_c a'' u_{pair}
  //                - a' (v_c)_{pair} - v_c a''' u_{ZI} u_1
  CoeffPoly rec_AM(const Tree& z) const {
    auto u1 = u_ZI(xi_), vc1 = vc_ZI(xi_);
    auto uz = u_ZI(z), vcz = vc_ZI(z);
    auto up = u_pair(z, xi_), vcp = vc_pair(z, xi_);
    Rat sym = z == xi_ ? Rat(1, 2) : Rat(1); // identical factors are one split
    CoeffPoly acc;
    acc += dec_product(vcz.first, vcz.second, u1.first, u1.second)
               .second.scaled(ScalarMonomial::gen(GA2), -sym);
    acc += dec_product(uz.first, uz.second, vc1.first, vc1.second)
               .second.scaled(ScalarMonomial::gen(GA2), -sym);
    acc += up.second.scaled(ScalarMonomial::gen(GVC) * ScalarMonomial::gen(GA2), -1);
    acc += vcp.second.scaled(ScalarMonomial::gen(GA1), -1);
    acc += dec_product(uz.first, uz.second, u1.first, u1.second)
               .second.scaled(ScalarMonomial::gen(GVC) * ScalarMonomial::gen(GA3), -sym);
    auto whole = dec_product(xi_, CoeffPoly::tuple1({}), up.first, acc);
    return whole.second;
  }

  // fhat_{<SZ>}: component of the right-hand side at <2> I[Z]
  CoeffPoly rec_S(const Tree& z) const { return b_type_component(z, /*s_type=*/true); }

  // fhat_{<ZBM>}: component at Ip[Xi] Ip[Z] I[Xi]
  CoeffPoly rec_BM(const Tree& z) const { return b_type_component(z, /*s_type=*/false); }

  CoeffPoly u_second_order(const Tree& z, const Tree& z2) const { return u_pair(z, z2).second; }

private:
  DegreeConfig cfg_;
  Tree xi_, t3_, t2_;
  std::map<Tree, CoeffPoly> f_;

  void store(const Tree& t, const CoeffPoly& p) { f_[t] = p; }

  // Common assembly for the two-derivative symbols.  The target tree has
  // prime factors {Ip[Xi], Ip[Xi]} (s_type) or {Ip[Xi], Ip[Z]} (else) plus a
  // plain factor I[Z] resp. I[Xi].  All displayed contributions are sums
  // over the ways V_cx / DU / (DU)^2 own the prime factors, with the V_cc
  // and V_c blocks providing q a p_c, q a' p_c, q a phat_c and composition
  // coefficients; here they are assembled from the v and u entries directly.
  CoeffPoly b_type_component(const Tree& z, bool s_type) const;
};

inline CoeffPoly Recursions::b_type_component(const Tree& z, bool s_type) const {
  // factor data
  const Tree& plain_tree = s_type ? z : xi_;
  const Tree& primed_tree = s_type ? xi_ : z;
  // DU components: flip of u entries
  auto du_of = [&](const Tree& zz) {
    auto u = u_ZI(zz);
    return dec_flip_root_edge(u.first, u.second, 0);
  };
  // derivative of the pair entry u at I[A] I[B] on the A factor: Leibniz sums
  // over every root edge carrying an A subtree (two flips when A = B)
  auto du_pair = [&](const Tree& a, const Tree& b) {
    auto up = u_pair(a, b);
    std::pair<Tree, CoeffPoly> out;
    bool first = true;
    for (int e : up.first.node(0).kid_edges) {
      if (up.first.edge(e).kind != EdgeKind::Plain) continue;
      if (sub_key(up.first, up.first.edge(e).child) != a.key()) continue;
      auto flipped = dec_flip_root_edge(up.first, up.second, e);
      if (first) {
        out = flipped;
        first = false;
      } else {
        out.second += flipped.second;
      }
    }
    if (first) throw std::logic_error("du_pair: factor not found");
    return out;
  };
  ScalarMonomial A = ScalarMonomial::gen(GA), A1 = ScalarMonomial::gen(GA1),
                 A2 = ScalarMonomial::gen(GA2), A3 = ScalarMonomial::gen(GA3),
                 VC = ScalarMonomial::gen(GVC), VCC = ScalarMonomial::gen(GVCC),
                 VCCC = ScalarMonomial::gen(GVCCC);

  auto mul3 = [&](const DP& x, const DP& y) { return dec_product(x.first, x.second, y.first, y.second); };

  CoeffPoly acc;
  Tree target = s_type ? rec_S_tree(z) : rec_BM_tree(z);

  auto add = [&](const std::pair<Tree, CoeffPoly>& made, const ScalarMonomial& m, const Rat& w) {
    if (made.first != target)
      throw std::logic_error("component tree mismatch: " + made.first.render() + " vs " + target.render());
    acc += made.second.scaled(m, w);
  };

  DP u1 = u_ZI(xi_);
  DP du1 = du_of(xi_);
  DP duz = du_of(primed_tree);
  DP vcx_r1 = vcx_ZJ(xi_);
  DP vcx_zj = vcx_ZJ(primed_tree);

  if (s_type) {
    // 2 V_cx a a' DU splits
    add(mul3(vcx_pair(z, xi_), du1), A * A1, 2);                       // V_cx at I[Z] Ip[Xi]
    add(mul3(mul3(vcx_r1, u_ZI(z)), du1), A1 * A1, 2);                 // (a')^2 part of [a a']_{IZ}
    add(mul3(mul3(vcx_r1, u_ZI(z)), du1), A * A2, 2);                  // a a'' part
    add(mul3(vcx_r1, du_pair(xi_, z)), A * A1, 2);                     // DU owns Ip[Xi] I[Z]
    // V_cc a (a')^2 (DU)^2  +  V_c a a'' (DU)^2
    add(mul3(du1, du_pair(xi_, z)), VCC * A * A1 * A1, 2);
    add(mul3(du1, du_pair(xi_, z)), VC * A * A2, 2);
    add(mul3(mul3(du1, du1), vcc_ZI(z)), A * A1 * A1, 1);
    add(mul3(mul3(du1, du1), u_ZI(z)), VCC * A1 * A1 * A1, 1);
    add(mul3(mul3(du1, du1), u_ZI(z)), VCC * A * A1 * A2, 2);
    add(mul3(mul3(du1, du1), vc_ZI(z)), A * A2, 1);
    add(mul3(mul3(du1, du1), u_ZI(z)), VC * A1 * A2, 1);
    add(mul3(mul3(du1, du1), u_ZI(z)), VC * A * A3, 1);
  } else {
    // 2 V_cx a a' DU splits
    add(mul3(vcx_pair(xi_, z), du1), A * A1, 2);     // V_cx at I[Xi] Ip[Z], DU at Ip[Xi]
    add(mul3(vcx_pair(xi_, xi_), duz), A * A1, 2);   // V_cx at I[Xi] Ip[Xi], DU at Ip[Z]
    add(mul3(mul3(vcx_zj, u1), du1), A1 * A1, 2);    // V_cx at Ip[Z], a a' at I[Xi]
    add(mul3(mul3(vcx_zj, u1), du1), A * A2, 2);
    add(mul3(vcx_zj, du_pair(xi_, xi_)), A * A1, 2); // DU owns Ip[Xi] I[Xi]
    add(mul3(mul3(vcx_r1, u1), duz), A1 * A1, 2);    // V_cx at Ip[Xi], a a' at I[Xi]... DU at Ip[Z]
    add(mul3(mul3(vcx_r1, u1), duz), A * A2, 2);
    add(mul3(vcx_r1, du_pair(z, xi_)), A * A1, 2);   // DU owns Ip[Z] I[Xi]
    // V_cc a (a')^2 (DU)^2 + V_c a a'' (DU)^2:
    // (DU)^2 owns {Ip[Xi], Ip[Z]} and the I[Xi] factor sits in the
    // composition or V block, or (DU)^2 owns a flipped pair
    add(mul3(duz, du_pair(xi_, xi_)), VCC * A * A1 * A1, 2);
    add(mul3(du1, du_pair(z, xi_)), VCC * A * A1 * A1, 2);
    add(mul3(duz, du_pair(xi_, xi_)), VC * A * A2, 2);
    add(mul3(du1, du_pair(z, xi_)), VC * A * A2, 2);
    add(mul3(mul3(duz, du1), vcc_ZI(xi_)), A * A1 * A1, 2);
    add(mul3(mul3(duz, du1), u1), VCC * A1 * A1 * A1, 2);
    add(mul3(mul3(duz, du1), u1), VCC * A * A1 * A2, 4);
    add(mul3(mul3(duz, du1), vc_ZI(xi_)), A * A2, 2);
    add(mul3(mul3(duz, du1), u1), VC * A1 * A2, 2);
    add(mul3(mul3(duz, du1), u1), VC * A * A3, 2);
    // degenerate instance: with Z the noise itself the two derivative factors
    // coincide and every split above was enumerated twice
    if (z == xi_) acc = acc.scaled(Rat(1, 2));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Cross-check report between the two engines.

struct CrossCheckRow {
  std::string table;
  Tree tree;
  bool ok;
};

struct CrossCheckReport {
  std::vector<CrossCheckRow> rows;
  bool all_ok() const {
    for (const auto& r : rows)
      if (!r.ok) return false;
    return true;
  }
};

inline CrossCheckReport cross_check(const SeriesTable& fixed, const Recursions& rec) {
  CrossCheckReport rep;
  const int maxn = fixed.truncation;
  // every transcribed coefficient within the truncation must match exactly
  for (const auto& [t, p] : rec.f_table()) {
    if (t.noise_count() > maxn) continue;
    auto it = fixed.f.find(t);
    bool ok = it != fixed.f.end() && equal_normalized(p, it->second);
    rep.rows.push_back({"F", t, ok});
  }
  // and vice versa: the engines must cover the same trees
  for (const auto& [t, p] : fixed.f) {
    (void)p;
    if (!rec.f_table().count(t)) rep.rows.push_back({"F(extra)", t, false});
  }
  // u / v entries with transcribed counterparts
  std::vector<Tree> zs = {Tree::noise(), parse_tree("Xi*I[Xi]"), parse_tree("Ip[Xi]*Ip[Xi]")};
  for (const auto& z : zs) {
    if (z.noise_count() + 0 > maxn - 1) continue;
    {
      auto [t, p] = rec.u_ZI(z);
      auto it = fixed.u.find(t);
      rep.rows.push_back({"U", t, it != fixed.u.end() && equal_normalized(p, it->second)});
    }
    {
      auto [tv, pv] = rec.vc_ZI(z);
      auto itv = fixed.vc.find(tv);
      rep.rows.push_back({"Vc", tv, itv != fixed.vc.end() && equal_normalized(pv, itv->second)});
    }
    if (z.noise_count() <= maxn - 2) {
      auto [tc, pc] = rec.vcc_ZI(z);
      auto itc = fixed.vcc.find(tc);
      rep.rows.push_back({"Vcc", tc, itc != fixed.vcc.end() && equal_normalized(pc, itc->second)});
    }
    {
      auto [tx, px] = rec.vcx_ZJ(z);
      auto itx = fixed.vcx.find(tx);
      rep.rows.push_back({"Vcx", tx, itx != fixed.vcx.end() && equal_normalized(px, itx->second)});
    }
  }
  for (const auto& z : zs)
    for (const auto& z2 : zs) {
      if (z.noise_count() + z2.noise_count() > maxn - 1) continue;
      if (z2 < z) continue;
      {
        auto [t, p] = rec.u_pair(z, z2);
        auto it = fixed.u.find(t);
        rep.rows.push_back({"U2", t, it != fixed.u.end() && equal_normalized(p, it->second)});
      }
      {
        auto [t, p] = rec.vcx_pair(z, z2);
        auto it = fixed.vcx.find(t);
        rep.rows.push_back({"Vcx2", t, it != fixed.vcx.end() && equal_normalized(p, it->second)});
      }
      {
        auto [t, p] = rec.vc_pair(z, z2);
        auto it = fixed.vc.find(t);
        rep.rows.push_back({"Vc2", t, it != fixed.vc.end() && equal_normalized(p, it->second)});
      }
    }
  return rep;
}

} // namespace qshe
