#include <catch2/catch_amalgamated.hpp>

#include "qshe/nullity.hpp"
#include "qshe/relation.hpp"

using namespace qshe;

namespace {

const DegreeConfig cfg;

Tree T(const char* s) { return parse_tree(s); }

CoeffPoly poly_of(const Relation& r, const Tree& t) {
  auto it = r.lhs.find(t);
  REQUIRE(it != r.lhs.end());
  return it->second;
}

// the inner bare node of <7> = Ip[Ip[Xi]]*Ip[Xi] (one prime child, not root)
int inner_bare_node(const Tree& t) {
  for (int i = 1; i < t.node_count(); ++i)
    if (!t.node(i).noise && t.node(i).kid_edges.size() == 1) return i;
  return -1;
}

} // namespace

TEST_CASE("nullity flags") {
  NullPredicate np = pipeline_null_predicate();
  CHECK(is_null(T("I[Xi]*I[Xi]"), np, cfg).reason == "positive_degree");
  CHECK(is_null(T("Ip[Xi]*I[Xi]"), np, cfg).reason == "x_parity");
  CHECK_FALSE(is_null(T("Ip[Xi]*Ip[Xi]"), np, cfg).null);
  CHECK_FALSE(is_null(T("Xi*I[Xi]"), np, cfg).null);
  CHECK(is_null(T("Xi*I[Xi]*I[Xi]"), np, cfg).reason == "odd_noise_count");
  CHECK(is_null(T("Xi*I[Xi]*I[Xi]*I[Xi]"), np, cfg).reason == "explicit_list");
  CHECK(is_null(T("Xi"), np, cfg).reason == "odd_noise_count");
  // X decorations: X*Xi*I[Xi] has odd spatial parity
  CHECK(is_null(T("X{0,1}*Xi*I[Xi]"), np, cfg).reason == "x_parity");

  NullPredicate ex = example_null_predicate();
  CHECK(is_null(T("Ip[Xi]*I[Xi]"), ex, cfg).reason == "explicit_list");
  CHECK(is_null(T("Xi"), ex, cfg).reason == "support");
  CHECK_FALSE(is_null(T("Xi*I[Xi]*I[Xi]"), ex, cfg).null);
}

TEST_CASE("admissible set membership") {
  NullPredicate ex = example_null_predicate();

  // (Xi,Xi) in A1 is automatic (empty ell range)
  TupleData d1{Family::Sym1, {T("Xi"), T("Xi")}, std::nullopt, 0};
  CHECK(in_A(d1, ex, cfg).ok);

  // (Xi,Xi,Xi,Xi) in A1: ell=2 gives <4>, ell=3 gives a positive symbol
  TupleData d4{Family::Sym1, {T("Xi"), T("Xi"), T("Xi"), T("Xi")}, std::nullopt, 0};
  Certificate c4 = in_A(d4, ex, cfg);
  CHECK(c4.ok);
  bool saw4 = false, saw9 = false;
  for (const auto& chk : c4.checks) {
    if (chk.tree == T("Ip[Xi]*I[Xi]")) {
      saw4 = true;
      CHECK(chk.reason == "explicit_list");
    }
    if (chk.tree == T("Ip[Xi]*I[Xi]*I[Xi]")) {
      saw9 = true;
      CHECK(chk.reason == "positive_degree");
    }
  }
  CHECK(saw4);
  CHECK(saw9);

  // without the assumption on <4> the tuple is not admissible
  NullPredicate bare;
  bare.odd_noise_count = false;
  bare.x_parity = false;
  CHECK_FALSE(in_A(d4, bare, cfg).ok);

  // (<7> with the inner bare node distinguished, Xi, Xi) in A3
  Tree t7 = T("Ip[Ip[Xi]]*Ip[Xi]");
  int mid = inner_bare_node(t7);
  REQUIRE(mid >= 1);
  TupleData d7{Family::Sym3, {T("Xi"), T("Xi")}, t7, mid};
  CHECK(in_A(d7, ex, cfg).ok);
}

TEST_CASE("identity (i) and its derivatives") {
  NullPredicate np = pipeline_null_predicate();
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi")}, std::nullopt, 0};
  s.np = np;
  s.cfg = cfg;
  Relation r = gen_relation(s);
  REQUIRE(r.lhs.size() == 2);
  // 2 <0> on <3>, -2a <0,0> on <2>
  CHECK(poly_of(r, T("Xi*I[Xi]")).terms == CoeffPoly::tuple1({0}, 2).terms);
  CoeffPoly expect2;
  expect2.add_term(ScalarMonomial::gen(GA), {0, 0}, -2);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi]")).terms == expect2.terms);

  // k = 1: <3> gets 2<1>; <2> gets -2a <<1>>_2 - 2 <0,0>, with <<1>>_2
  // collapsing to twice the canonical representative
  Relation r1 = diff_relation(r, 1, np, cfg);
  CHECK(poly_of(r1, T("Xi*I[Xi]")).terms == CoeffPoly::tuple1({1}, 2).terms);
  CoeffPoly e2;
  e2.add_term(ScalarMonomial::gen(GA), canonical_tuple(T("Ip[Xi]*Ip[Xi]"), {1, 0}), -4);
  e2.add_term(ScalarMonomial::unit(), {0, 0}, -2);
  CHECK(poly_of(r1, T("Ip[Xi]*Ip[Xi]")).terms == e2.terms);

  // k = 0 regeneration is the identity
  Relation r0 = diff_relation(r, 0, np, cfg);
  CHECK(r0.str() == r.str());
}

TEST_CASE("example line 1: g(AMM) = 3 g(BMM)") {
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi"), T("Xi"), T("Xi")}, std::nullopt, 0};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 2);
  CHECK(poly_of(r, T("Xi*I[Xi]*I[Xi]*I[Xi]")).terms == CoeffPoly::tuple1({0, 0, 0}, 4).terms);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi]*I[Xi]*I[Xi]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0}, -12).terms);
}

TEST_CASE("example line 2: g(AMM) = 2 g(AMB) - g(AMA)") {
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi*I[Xi]*I[Xi]")}, std::nullopt, 0};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 3);
  CHECK(poly_of(r, T("Xi*I[Xi*I[Xi]*I[Xi]]")).terms == CoeffPoly::tuple1({0, 0, 0}, 1).terms);
  CHECK(poly_of(r, T("Xi*I[Xi]*I[Xi]*I[Xi]")).terms == CoeffPoly::tuple1({0, 0, 0}, 1).terms);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi*I[Xi]*I[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0}, -2).terms);
}

TEST_CASE("example line 3: g(AMM) = 4 g(ABM) + 2 g(S4) - 2 g(AAM)") {
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi"), T("Xi*I[Xi]")}, std::nullopt, 0};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 4);
  CHECK(poly_of(r, T("Xi*I[Xi]*I[Xi*I[Xi]]")).terms == CoeffPoly::tuple1({0, 0, 0}, 2).terms);
  CHECK(poly_of(r, T("Xi*I[Xi]*I[Xi]*I[Xi]")).terms == CoeffPoly::tuple1({0, 0, 0}, 1).terms);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi]*I[Xi*I[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0}, -2).terms);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi*I[Xi]]*I[Xi]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0}, -4).terms);
}

TEST_CASE("example line 4: 6 g(BMA) = 3 g(AMA) - g(AMM)") {
  GenSpec s;
  s.data = {Family::Sym2, {T("Xi"), T("Xi"), T("Xi")}, T("Xi"), 0};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 3);
  CHECK(poly_of(r, T("Xi*I[Xi*I[Xi]*I[Xi]]")).terms == CoeffPoly::tuple1({0, 0, 0}, 3).terms);
  CHECK(poly_of(r, T("Xi*I[Xi]*I[Xi]*I[Xi]")).terms == CoeffPoly::tuple1({0, 0, 0}, -1).terms);
  CHECK(poly_of(r, T("Xi*I[Ip[Xi]*Ip[Xi]*I[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0}, -6).terms);
}

TEST_CASE("example line 5: 2 g(BBB) = g(BAB) + g(BMB) - g(BBM) - g(S5)") {
  GenSpec s;
  s.data = {Family::Sym3, {T("Xi"), T("Ip[Xi]*Ip[Xi]")}, T("Ip[Xi]"), 0};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 5);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi*I[Ip[Xi]*Ip[Xi]]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, 1).terms); // BAB
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]*I[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, 1).terms); // BMB
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Xi]*I[Ip[Xi]*Ip[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, -1).terms); // S5
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]]*I[Xi]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, -1).terms); // BBM
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0, 0}, -2).terms); // BBB
}

TEST_CASE("example line 6: 2 g(BBB) = 2 g(ABB) - 2 g(BMB)") {
  Tree t7 = T("Ip[Ip[Xi]]*Ip[Xi]");
  int mid = inner_bare_node(t7);
  REQUIRE(mid >= 1);
  GenSpec s;
  s.data = {Family::Sym3, {T("Xi"), T("Xi")}, t7, mid};
  s.np = example_null_predicate();
  s.cfg = cfg;
  Relation r = gen_relation(s).with_a_one();
  REQUIRE(r.lhs.size() == 3);
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi*I[Xi]]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, 2).terms); // ABB
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]*I[Xi]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0}, -2).terms); // BMB
  CHECK(poly_of(r, T("Ip[Xi]*Ip[Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]]]")).terms ==
        CoeffPoly::tuple1({0, 0, 0, 0, 0, 0}, -2).terms); // BBB
}

TEST_CASE("relation symmetry under permutation of taus") {
  NullPredicate np = example_null_predicate();
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi"), T("Xi*I[Xi]")}, std::nullopt, 0};
  s.np = np;
  s.cfg = cfg;
  Relation a = gen_relation(s);
  s.data.taus = {T("Xi*I[Xi]"), T("Xi"), T("Xi")};
  Relation b = gen_relation(s);
  CHECK(a.str() == b.str());
}

TEST_CASE("gaussian flags drop symbols and differentiation commutes with dropping") {
  // the (Xi,Xi,Z) relation with Z = <3>: the sigma^3 term is Gaussian-null
  NullPredicate np = pipeline_null_predicate();
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi"), T("Xi*I[Xi]")}, std::nullopt, 0};
  s.np = np;
  s.cfg = cfg;
  Relation r = gen_relation(s);
  CHECK(r.lhs.count(T("Xi*I[Xi]*I[Xi]*I[Xi]")) == 0); // dropped AMM
  bool found = false;
  for (const auto& [t, why] : r.dropped_null)
    if (t == T("Xi*I[Xi]*I[Xi]*I[Xi]")) {
      found = true;
      CHECK(why == "explicit_list");
    }
  CHECK(found);
  // every surviving symbol has an even noise count
  for (const auto& [t, p] : r.lhs) {
    (void)p;
    CHECK(t.noise_count() % 2 == 0);
  }
  // differentiation never resurrects a null symbol
  Relation r2 = diff_relation(r, 2, np, cfg);
  CHECK(r2.lhs.count(T("Xi*I[Xi]*I[Xi]*I[Xi]")) == 0);
  CHECK(r2.lhs.size() == r.lhs.size());
}

TEST_CASE("membership failure raises") {
  NullPredicate bare;
  bare.odd_noise_count = false;
  bare.x_parity = false;
  GenSpec s;
  s.data = {Family::Sym1, {T("Xi"), T("Xi"), T("Xi"), T("Xi")}, std::nullopt, 0};
  s.np = bare;
  s.cfg = cfg;
  CHECK_THROWS_AS(gen_relation(s), MembershipError);
}
