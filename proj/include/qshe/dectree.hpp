#pragma once

#include "qshe/coeff.hpp"
#include "qshe/tree.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace qshe {

// Tree operations that also transport derivative tuples. Edge provenance is
// tracked with tags through canonicalization, and the resulting tuples are
// reduced to their automorphism-canonical representatives.

namespace detail {
inline RawTree raw_tagged(const Tree& t, std::int64_t base, int root = 0) {
  RawTree r;
  r.noise = t.node(root).noise;
  r.tpow = t.node(root).tpow;
  r.xpow = t.node(root).xpow;
  for (int ei : t.node(root).kid_edges) {
    RawTree child = raw_tagged(t, base, t.edge(ei).child);
    child.tag = base + ei;
    r.kids.emplace_back(t.edge(ei).kind, std::move(child));
  }
  return r;
}
} // namespace detail

// product tree plus edge map: source[e] = (0, i) for edge i of a, (1, j) for b
inline std::pair<Tree, std::vector<std::pair<int, int>>> product_with_map(const Tree& a,
                                                                          const Tree& b) {
  RawTree ra = detail::raw_tagged(a, 0);
  RawTree rb = detail::raw_tagged(b, a.edge_count());
  if (ra.noise && rb.noise) throw GrammarError("product would put two noises on the root node");
  RawTree r;
  r.noise = ra.noise || rb.noise;
  r.tpow = ra.tpow + rb.tpow;
  r.xpow = ra.xpow + rb.xpow;
  r.kids = std::move(ra.kids);
  for (auto& kc : rb.kids) r.kids.push_back(std::move(kc));
  std::vector<std::int64_t> tags;
  Tree t(r, tags);
  std::vector<std::pair<int, int>> src(tags.size());
  for (size_t e = 0; e < tags.size(); ++e) {
    std::int64_t g = tags[e];
    src[e] = g < a.edge_count() ? std::make_pair(0, int(g)) : std::make_pair(1, int(g - a.edge_count()));
  }
  return {t, src};
}

// glue guest onto host at `dist`; map as above with (0,·) = guest, (1,·) = host
inline std::pair<Tree, std::vector<std::pair<int, int>>> glue_with_map(const Tree& guest,
                                                                       const Tree& host, int dist) {
  if (dist < 0 || dist >= host.node_count()) throw std::invalid_argument("unknown distinguished node id");
  RawTree rg = detail::raw_tagged(guest, 0);
  auto walk = [&](auto&& self, int v) -> RawTree {
    RawTree r;
    r.noise = host.node(v).noise;
    r.tpow = host.node(v).tpow;
    r.xpow = host.node(v).xpow;
    for (int ei : host.node(v).kid_edges) {
      RawTree child = self(self, host.edge(ei).child);
      child.tag = guest.edge_count() + ei;
      r.kids.emplace_back(host.edge(ei).kind, std::move(child));
    }
    if (v == dist) {
      if (r.noise && rg.noise) throw GrammarError("glue puts two noises on the merged node");
      r.noise = r.noise || rg.noise;
      r.tpow += rg.tpow;
      r.xpow += rg.xpow;
      for (auto& kc : rg.kids) r.kids.push_back(kc);
    }
    return r;
  };
  RawTree r = walk(walk, 0);
  std::vector<std::int64_t> tags;
  Tree t(r, tags);
  std::vector<std::pair<int, int>> src(tags.size());
  for (size_t e = 0; e < tags.size(); ++e) {
    std::int64_t g = tags[e];
    src[e] = g < guest.edge_count() ? std::make_pair(0, int(g))
                                    : std::make_pair(1, int(g - guest.edge_count()));
  }
  return {t, src};
}

// Combine two full-length coefficient polys along an edge map.
inline CoeffPoly combine_polys(const Tree& result, const std::vector<std::pair<int, int>>& src,
                               const CoeffPoly& pa, const CoeffPoly& pb) {
  CoeffPoly out;
  for (const auto& [ka, va] : pa.terms)
    for (const auto& [kb, vb] : pb.terms) {
      DerivTuple t(src.size());
      for (size_t e = 0; e < src.size(); ++e)
        t[e] = src[e].first == 0 ? ka.second[src[e].second] : kb.second[src[e].second];
      out.add_term(ka.first * kb.first, canonical_tuple(result, t), va * vb);
    }
  return out;
}

// decorated product of (tree, poly) pairs; tuples must have full length
inline std::pair<Tree, CoeffPoly> dec_product(const Tree& a, const CoeffPoly& pa, const Tree& b,
                                              const CoeffPoly& pb) {
  auto [t, src] = product_with_map(a, b);
  return {t, combine_polys(t, src, pa, pb)};
}

// decorated integration: new root edge of the given kind carrying `order`
inline std::pair<Tree, CoeffPoly> dec_integrate(const Tree& a, const CoeffPoly& pa, EdgeKind kind,
                                                int order) {
  Tree t = integrate(a, kind);
  CoeffPoly out;
  for (const auto& [k, v] : pa.terms) {
    DerivTuple tup;
    tup.reserve(k.second.size() + 1);
    tup.push_back(static_cast<std::uint8_t>(order));
    tup.insert(tup.end(), k.second.begin(), k.second.end());
    out.add_term(k.first, canonical_tuple(t, tup), v);
  }
  return {t, out};
}

inline std::pair<Tree, CoeffPoly> dec_glue(const Tree& guest, const CoeffPoly& pg, const Tree& host,
                                           const CoeffPoly& ph, int dist) {
  auto [t, src] = glue_with_map(guest, host, dist);
  std::string why;
  if (!t.grammar_ok(&why)) throw GrammarError("glue result violates grammar: " + why);
  return {t, combine_polys(t, src, pg, ph)};
}

// flip the kind of a root child-edge (spatial differentiation of one factor)
inline std::pair<Tree, CoeffPoly> dec_flip_root_edge(const Tree& a, const CoeffPoly& pa, int edge) {
  if (edge < 0 || edge >= a.edge_count() || a.edge(edge).parent != 0)
    throw std::invalid_argument("dec_flip_root_edge: not a root edge");
  RawTree r = detail::raw_tagged(a, 0);
  for (auto& [kind, kid] : r.kids)
    if (kid.tag == edge) kind = kind == EdgeKind::Plain ? EdgeKind::Prime : EdgeKind::Plain;
  std::vector<std::int64_t> tags;
  Tree t(r, tags);
  CoeffPoly out;
  for (const auto& [k, v] : pa.terms) {
    DerivTuple tup(tags.size());
    for (size_t e = 0; e < tags.size(); ++e) tup[e] = k.second[tags[e]];
    out.add_term(k.first, canonical_tuple(t, tup), v);
  }
  return {t, out};
}

} // namespace qshe
