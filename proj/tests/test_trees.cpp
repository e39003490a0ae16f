#include <catch2/catch_amalgamated.hpp>

#include "qshe/coeff.hpp"
#include "qshe/dectree.hpp"
#include "qshe/tree.hpp"

#include <algorithm>
#include <random>

using namespace qshe;

namespace {

RawTree random_raw(std::mt19937& rng, int depth, int max_kids) {
  std::uniform_int_distribution<int> coin(0, 1);
  RawTree r;
  r.noise = coin(rng) == 1;
  int primes_allowed = r.noise ? 0 : 2;
  if (depth > 0) {
    std::uniform_int_distribution<int> nk(0, max_kids);
    int kids = nk(rng);
    for (int i = 0; i < kids; ++i) {
      EdgeKind k = (primes_allowed > 0 && coin(rng)) ? EdgeKind::Prime : EdgeKind::Plain;
      if (k == EdgeKind::Prime) --primes_allowed;
      r.kids.emplace_back(k, random_raw(rng, depth - 1, max_kids));
    }
  }
  if (!r.noise && r.kids.empty() && coin(rng)) r.noise = true;
  return r;
}

void shuffle_raw(RawTree& r, std::mt19937& rng) {
  std::shuffle(r.kids.begin(), r.kids.end(), rng);
  for (auto& [k, c] : r.kids) shuffle_raw(c, rng);
}

} // namespace

TEST_CASE("parse and render basics") {
  Tree t = parse_tree("Xi*I[Xi]");
  CHECK(t.noise_count() == 2);
  CHECK(t.plain_count() == 1);
  CHECK(t.prime_count() == 0);
  CHECK(t.edge_count() == 1);

  Tree u = parse_tree("Ip[Xi]*Ip[Xi]");
  CHECK(u.noise_count() == 2);
  CHECK(u.prime_count() == 2);
  CHECK(u.edge_count() == 2);

  CHECK(parse_tree("I[Xi]*Xi") == t);
  CHECK(parse_tree("(Xi)*I[(Xi)]") == t);

  // parse-render-parse is a fixed point
  for (const char* s : {"Xi", "Xi*I[Xi]", "Ip[Xi]*Ip[Xi]", "Ip[Ip[Xi]]*Ip[Xi]",
                        "Xi*I[Xi*I[Xi]]*I[Xi]", "X{0,1}*Xi", "One", "I[Xi*X{1,2}]"}) {
    Tree a = parse_tree(s);
    CHECK(parse_tree(a.render()) == a);
  }

  CHECK_THROWS_AS(parse_tree("Xi*Ip[Xi"), ParseError);
  CHECK_THROWS_AS(parse_tree("Xi*Xi"), ParseError);
  CHECK_THROWS_AS(parse_tree("Xi*Ip[Xi]"), GrammarError); // noise with a Prime child
  CHECK_THROWS_AS(parse_tree("Ip[Xi]*Ip[Xi]*Ip[Xi]"), GrammarError);
}

TEST_CASE("degrees") {
  DegreeConfig cfg;
  Rat k = cfg.kappa;
  CHECK(degree(parse_tree("Xi"), cfg) == Rat(-3, 2) - k);
  CHECK(degree(parse_tree("I[Xi]"), cfg) == Rat(1, 2) - k);
  CHECK(degree(parse_tree("Ip[Xi]*Ip[Xi]"), cfg) == Rat(-1) - 2 * k);
  CHECK(degree(parse_tree("Xi*I[Xi]"), cfg) == Rat(-1) - 2 * k);
  CHECK(degree(parse_tree("Ip[Xi]*I[Xi]"), cfg) == -2 * k);
  CHECK(degree(parse_tree("X{1,1}"), cfg) == Rat(3));
}

TEST_CASE("enumeration census") {
  DegreeConfig cfg;
  EnumerateFilter f;
  f.min_noises = 2;
  auto all = enumerate_trees(4, cfg, f);
  int n2 = 0, n3 = 0, n4 = 0;
  for (const auto& t : all) {
    if (t.noise_count() == 2) ++n2;
    if (t.noise_count() == 3) ++n3;
    if (t.noise_count() == 4) ++n4;
  }
  CHECK(n2 == 2);
  CHECK(n3 == 6);
  CHECK(n4 == 23);

  std::set<std::string> two;
  for (const auto& t : all)
    if (t.noise_count() == 2) two.insert(t.render());
  CHECK(two == std::set<std::string>{parse_tree("Xi*I[Xi]").render(),
                                     parse_tree("Ip[Xi]*Ip[Xi]").render()});

  // degree window (-2, 0) for the four-noise list
  for (const auto& t : all) {
    CHECK(degree(t, cfg) < 0);
    CHECK(degree(t, cfg) > Rat(-2));
  }
}

TEST_CASE("embeddings") {
  Tree xi = parse_tree("Xi");
  Tree t3 = parse_tree("Xi*I[Xi]");
  CHECK(embeddings(xi, t3, EmbedMode::Any).size() == 2);
  CHECK(embeddings(xi, t3, EmbedMode::RootIncluding).size() == 1);
  CHECK(embeddings(parse_tree("Ip[Xi]*Ip[Xi]"), t3, EmbedMode::Any).empty());

  // distinguished mode
  Tree host = parse_tree("Ip[Ip[Xi]]*Ip[Xi]");
  int bare_mid = -1;
  for (int i = 1; i < host.node_count(); ++i)
    if (!host.node(i).noise && !host.node(i).kid_edges.empty()) bare_mid = i;
  REQUIRE(bare_mid != -1);
  auto embs = embeddings(parse_tree("Ip[Xi]"), host, EmbedMode::DistinguishedIncluding, bare_mid);
  CHECK(embs.size() == 1);
  CHECK_THROWS_AS(embeddings(xi, t3, EmbedMode::DistinguishedIncluding, 99), std::invalid_argument);
}

TEST_CASE("contract") {
  Tree t3 = parse_tree("Xi*I[Xi]");
  auto whole = embeddings(t3, t3, EmbedMode::RootIncluding);
  REQUIRE(whole.size() == 1);
  CHECK(contract(t3, whole[0]) == Tree::one());

  auto leaf = embeddings(parse_tree("Xi"), t3, EmbedMode::Any);
  REQUIRE(leaf.size() == 2);
  for (const auto& e : leaf) {
    Tree c = contract(t3, e);
    if (e.node_map[0] == 0) {
      CHECK(c == parse_tree("I[Xi]")); // root noise collapsed to a bare node
    } else {
      CHECK(c == parse_tree("Xi*I[One]"));
    }
  }

  // degree(contract) = degree(host) - degree(guest) for X-free trees
  DegreeConfig cfg;
  Tree host = parse_tree("Ip[Xi]*Ip[Xi*I[Xi]]*I[Xi]");
  Tree guest = parse_tree("Xi*I[Xi]");
  for (const auto& e : embeddings(guest, host, EmbedMode::Any)) {
    CHECK(degree(contract(host, e), cfg) == degree(host, cfg) - degree(guest, cfg));
  }
}

TEST_CASE("glue") {
  Tree t3 = parse_tree("Xi*I[Xi]");
  // root gluing is the node product
  CHECK(glue(parse_tree("I[Xi]"), parse_tree("Xi"), 0) == t3);
  // gluing a noise onto a noise node errors
  Tree host = t3;
  int leaf = -1;
  for (int i = 0; i < host.node_count(); ++i)
    if (i != 0 && host.node(i).noise) leaf = i;
  REQUIRE(leaf != -1);
  CHECK_THROWS_AS(glue(parse_tree("Xi"), host, leaf), GrammarError);
  // more than two Prime edges on the merged node errors
  CHECK_THROWS_AS(glue(parse_tree("Ip[Xi]"), parse_tree("Ip[Xi]*Ip[Xi]"), 0), GrammarError);
  // plain child onto a noise node is allowed
  Tree g = glue(parse_tree("I[Xi]"), host, leaf);
  CHECK(g == parse_tree("Xi*I[Xi*I[Xi]]"));

  // degree additivity under gluing at the root
  DegreeConfig cfg;
  Tree a = parse_tree("Ip[Xi]*Ip[Xi]");
  Tree b = parse_tree("I[Xi*I[Xi]]");
  CHECK(degree(glue(b, a, 0), cfg) == degree(a, cfg) + degree(b, cfg));
}

TEST_CASE("canonicalization is isomorphism invariant") {
  std::mt19937 rng(12345);
  for (int iter = 0; iter < 2000; ++iter) {
    RawTree r = random_raw(rng, 3, 3);
    Tree t(r);
    RawTree shuffled = r;
    shuffle_raw(shuffled, rng);
    Tree u(shuffled);
    REQUIRE(t == u);
    // idempotence: rebuilding from the canonical form is stable
    Tree v(t.to_raw());
    REQUIRE(v == t);
    REQUIRE(v.render() == t.render());
  }
}

TEST_CASE("enumeration closed under conforming root subtrees") {
  DegreeConfig cfg;
  EnumerateFilter f;
  f.min_noises = 2;
  auto all = enumerate_trees(4, cfg, f);
  std::set<std::string> keys;
  for (const auto& t : all) keys.insert(t.key());
  for (const auto& t : all) {
    for (const auto& sub : root_subtrees(t)) {
      if (!sub.equation_shape()) continue;
      if (sub.noise_count() < 2) continue;
      if (!(degree(sub, cfg) < 0)) continue;
      CHECK(keys.count(sub.key()) == 1);
    }
  }
}

TEST_CASE("decorated products track edges") {
  Tree t3 = parse_tree("Xi*I[Xi]");
  CoeffPoly p3 = CoeffPoly::tuple1({1});
  Tree i1 = parse_tree("I[Xi]");
  CoeffPoly pi = CoeffPoly::tuple1({2});
  auto [t, p] = dec_product(t3, p3, i1, pi);
  CHECK(t == parse_tree("Xi*I[Xi]*I[Xi]"));
  REQUIRE(p.terms.size() == 1);
  // the two plain edges carry {1,2} in some canonical order; the canonical
  // representative is unique
  DerivTuple got = p.terms.begin()->first.second;
  std::multiset<int> vals(got.begin(), got.end());
  CHECK(vals == std::multiset<int>{1, 2});
  CHECK(got == canonical_tuple(t, got));

  auto [ti, pi2] = dec_integrate(t3, p3, EdgeKind::Prime, 2);
  CHECK(ti == parse_tree("Ip[Xi*I[Xi]]"));
  REQUIRE(pi2.terms.size() == 1);
  CHECK(pi2.terms.begin()->first.second == DerivTuple{2, 1});
}
