#include <catch2/catch_amalgamated.hpp>

#include "qshe/coeff.hpp"

#include <random>

using namespace qshe;

namespace {

CoeffPoly random_poly(std::mt19937& rng, int tuple_len, int max_terms = 4) {
  std::uniform_int_distribution<int> nt(1, max_terms);
  std::uniform_int_distribution<int> gexp(0, 2);
  std::uniform_int_distribution<int> ord(0, 2);
  std::uniform_int_distribution<int> num(-3, 3);
  CoeffPoly p;
  int n = nt(rng);
  for (int i = 0; i < n; ++i) {
    ScalarMonomial m;
    // a few generators with small exponents, including p's and q's
    for (int g : {GA, GA1, GA2, GQ, GQI, GVC, GVCC, GPC, GPHC})
      if (gexp(rng) == 2) m.e[g] = static_cast<std::uint8_t>(gexp(rng));
    m.normalize();
    DerivTuple t(tuple_len);
    for (auto& o : t) o = static_cast<std::uint8_t>(ord(rng));
    int c = num(rng);
    if (c == 0) c = 1;
    p.add_term(m, t, Rat(c, 1 + (i % 2)));
  }
  return p;
}

Rat binom(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

} // namespace

TEST_CASE("sangle examples") {
  CHECK(sangle(0, 2).str() == "1 <0,0>");
  CoeffPoly s12 = sangle(1, 2);
  CHECK(s12.terms.size() == 2);
  CHECK(s12.terms.at({ScalarMonomial::unit(), {1, 0}}) == 1);
  CHECK(s12.terms.at({ScalarMonomial::unit(), {0, 1}}) == 1);
  CoeffPoly s22 = sangle(2, 2);
  CHECK(s22.terms.at({ScalarMonomial::unit(), {2, 0}}) == 1);
  CHECK(s22.terms.at({ScalarMonomial::unit(), {1, 1}}) == 2);
  CHECK(s22.terms.at({ScalarMonomial::unit(), {0, 2}}) == 1);
}

TEST_CASE("sangle counting identities") {
  for (int k = 0; k <= 3; ++k)
    for (int l = 1; l <= 6; ++l) {
      CoeffPoly s = sangle(k, l);
      CHECK(Rat(static_cast<int>(s.terms.size())) == binom(k + l - 1, l - 1));
      Rat total = 0;
      for (const auto& [key, w] : s.terms) {
        (void)key;
        total += w;
      }
      Rat lk = 1;
      for (int i = 0; i < k; ++i) lk *= l;
      CHECK(total == lk);
    }
}

TEST_CASE("normalization golden identities") {
  CoeffPoly qpc = CoeffPoly::from_gen(GQ) * CoeffPoly::from_gen(GPC);
  CoeffPoly expect = CoeffPoly::from_gen(GVC) * CoeffPoly::from_gen(GA2) +
                     CoeffPoly::from_gen(GVCC) * CoeffPoly::from_gen(GA1) * CoeffPoly::from_gen(GA1);
  CHECK(normalize_to_v_basis(qpc).terms == normalize_to_v_basis(expect).terms);

  CoeffPoly qphc = CoeffPoly::from_gen(GQ) * CoeffPoly::from_gen(GPHC);
  CoeffPoly expect2 =
      (CoeffPoly::from_gen(GVCC) * CoeffPoly::from_gen(GA1) * CoeffPoly::from_gen(GA2)).scaled(Rat(2)) +
      CoeffPoly::from_gen(GVC) * CoeffPoly::from_gen(GA3);
  CHECK(normalize_to_v_basis(qphc).terms == normalize_to_v_basis(expect2).terms);

  CoeffPoly a1 = CoeffPoly::from_gen(GA1);
  CHECK(normalize_to_v_basis(a1).terms == a1.terms);

  // q * q^{-1} = 1
  CoeffPoly qq = CoeffPoly::from_gen(GQ) * CoeffPoly::from_gen(GQI);
  CHECK(normalize_to_v_basis(qq).terms == CoeffPoly::constant(1).terms);
}

TEST_CASE("normalization is idempotent and a ring homomorphism") {
  std::mt19937 rng(777);
  for (int iter = 0; iter < 1000; ++iter) {
    CoeffPoly p = random_poly(rng, 0);
    CoeffPoly q = random_poly(rng, 0);
    CoeffPoly np = normalize_to_v_basis(p);
    CHECK(normalize_to_v_basis(np).terms == np.terms);
    CHECK(normalize_to_v_basis(p * q).terms ==
          normalize_to_v_basis(normalize_to_v_basis(p) * normalize_to_v_basis(q)).terms);
    CHECK(normalize_to_v_basis(p + q).terms ==
          (normalize_to_v_basis(p) + normalize_to_v_basis(q)).terms);
  }
}

TEST_CASE("ring laws") {
  std::mt19937 rng(42);
  for (int iter = 0; iter < 400; ++iter) {
    CoeffPoly a = random_poly(rng, 1);
    CoeffPoly b = random_poly(rng, 1);
    CoeffPoly c = random_poly(rng, 1);
    CHECK((a + b).terms == (b + a).terms);
    CHECK(((a + b) + c).terms == (a + (b + c)).terms);
    CHECK(((a * b) * c).terms == (a * (b * c)).terms);
    CHECK((a * (b + c)).terms == (a * b + a * c).terms);
    CHECK((a - a).is_zero());
  }
}

TEST_CASE("tuple permutation") {
  CoeffPoly p = CoeffPoly::tuple1({1, 0});
  CoeffPoly swapped = p.permuted({1, 0});
  CHECK(swapped.terms.begin()->first.second == DerivTuple{0, 1});

  // <<k>>_l is symmetric under any permutation
  std::mt19937 rng(5);
  for (int k = 0; k <= 3; ++k) {
    CoeffPoly s = sangle(k, 4);
    std::vector<int> perm{0, 1, 2, 3};
    for (int it = 0; it < 5; ++it) {
      std::shuffle(perm.begin(), perm.end(), rng);
      CHECK(s.permuted(perm).terms == s.terms);
    }
  }
  CHECK_THROWS_AS(p.permuted({0, 1, 2}), std::invalid_argument);
}

TEST_CASE("derivative order cap tracking") {
  CoeffPoly p = CoeffPoly::tuple1({3, 0});
  CHECK(p.max_order() == 3);
}
