#pragma once

#include "qshe/rat.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace qshe {

enum class EdgeKind : std::uint8_t { Plain = 0, Prime = 1 };

struct GrammarError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mutable node used while assembling a tree; Tree canonicalizes on construction.
// `tag` survives canonicalization and lets callers track where an edge went.
struct RawTree {
  bool noise = false;
  int tpow = 0;
  int xpow = 0;
  std::vector<std::pair<EdgeKind, RawTree>> kids;
  std::int64_t tag = -1; // tag of the edge pointing to this node (root: unused)
};

// Decorated rooted tree in canonical form. Nodes are stored in preorder;
// edge i points from nodes_[parent(i)] to the node visited i+1-th.
class Tree {
public:
  struct Node {
    bool noise = false;
    int tpow = 0;
    int xpow = 0;
    std::vector<int> kid_edges; // edge indices, in canonical order
  };
  struct Edge {
    EdgeKind kind;
    int parent; // node index
    int child;  // node index
  };

  Tree() { *this = one(); }

  static Tree one() {
    RawTree r;
    return Tree(r);
  }
  static Tree noise() {
    RawTree r;
    r.noise = true;
    return Tree(r);
  }
  static Tree xmono(int tp, int xp) {
    RawTree r;
    r.tpow = tp;
    r.xpow = xp;
    return Tree(r);
  }

  explicit Tree(const RawTree& raw) { build(raw, nullptr); }
  // Also returns, for every canonical edge, the tag attached to it in `raw`.
  Tree(const RawTree& raw, std::vector<std::int64_t>& tags_out) { build(raw, &tags_out); }

  const std::string& key() const { return key_; }
  bool operator==(const Tree& o) const { return key_ == o.key_; }
  bool operator!=(const Tree& o) const { return key_ != o.key_; }
  bool operator<(const Tree& o) const { return key_ < o.key_; }

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  const Edge& edge(int i) const { return edges_[i]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  bool is_one() const {
    return nodes_.size() == 1 && !nodes_[0].noise && nodes_[0].tpow == 0 && nodes_[0].xpow == 0;
  }

  int noise_count() const {
    int n = 0;
    for (const auto& nd : nodes_) n += nd.noise ? 1 : 0;
    return n;
  }
  int prime_count() const {
    int n = 0;
    for (const auto& e : edges_) n += e.kind == EdgeKind::Prime ? 1 : 0;
    return n;
  }
  int plain_count() const { return edge_count() - prime_count(); }
  int x_time_total() const {
    int n = 0;
    for (const auto& nd : nodes_) n += nd.tpow;
    return n;
  }
  int x_space_total() const {
    int n = 0;
    for (const auto& nd : nodes_) n += nd.xpow;
    return n;
  }
  bool has_x() const { return x_time_total() != 0 || x_space_total() != 0; }

  // Grammar of the abstract equation: a node carries a noise and then has no
  // Prime child-edges, or is bare with at most two Prime child-edges.
  bool grammar_ok(std::string* why = nullptr) const {
    for (int i = 0; i < node_count(); ++i) {
      int primes = 0;
      for (int e : nodes_[i].kid_edges)
        if (edges_[e].kind == EdgeKind::Prime) ++primes;
      if (nodes_[i].noise && primes > 0) {
        if (why) *why = "node " + std::to_string(i) + " carries a noise and a Prime child-edge";
        return false;
      }
      if (!nodes_[i].noise && primes > 2) {
        if (why) *why = "node " + std::to_string(i) + " has " + std::to_string(primes) + " Prime child-edges";
        return false;
      }
    }
    return true;
  }

  // Shape of right-hand-side symbols: every node either carries a noise (only
  // Plain children) or is bare with exactly two Prime children; leaves carry
  // noises (no X anywhere).
  bool equation_shape() const {
    if (has_x()) return false;
    for (int i = 0; i < node_count(); ++i) {
      int primes = 0;
      for (int e : nodes_[i].kid_edges)
        if (edges_[e].kind == EdgeKind::Prime) ++primes;
      if (nodes_[i].noise) {
        if (primes != 0) return false;
      } else {
        if (primes != 2) return false;
      }
    }
    return true;
  }

  RawTree to_raw(int root = 0) const {
    RawTree r;
    r.noise = nodes_[root].noise;
    r.tpow = nodes_[root].tpow;
    r.xpow = nodes_[root].xpow;
    for (int e : nodes_[root].kid_edges) r.kids.emplace_back(edges_[e].kind, to_raw(edges_[e].child));
    return r;
  }

  std::string render() const { return render_node(0); }

private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::string key_;

  struct CanonKid {
    EdgeKind kind;
    std::string key;
    const RawTree* node;
  };

  static std::string canon_key(const RawTree& r) {
    std::string s = "(";
    if (r.noise) s += 'N';
    if (r.tpow) s += "T" + std::to_string(r.tpow);
    if (r.xpow) s += "X" + std::to_string(r.xpow);
    std::vector<std::pair<std::pair<int, std::string>, const RawTree*>> ks;
    ks.reserve(r.kids.size());
    for (const auto& [k, c] : r.kids)
      ks.push_back({{static_cast<int>(k), canon_key(c)}, &c});
    std::sort(ks.begin(), ks.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [kk, c] : ks) {
      s += kk.first == 0 ? 'I' : 'J';
      s += kk.second;
    }
    s += ')';
    return s;
  }

  void emit(const RawTree& r, int my_index, std::vector<std::int64_t>* tags) {
    nodes_[my_index].noise = r.noise;
    nodes_[my_index].tpow = r.tpow;
    nodes_[my_index].xpow = r.xpow;
    std::vector<std::pair<std::pair<int, std::string>, const RawTree*>> ks;
    for (const auto& [k, c] : r.kids)
      ks.push_back({{static_cast<int>(k), canon_key(c)}, &c});
    std::stable_sort(ks.begin(), ks.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [kk, c] : ks) {
      int ei = static_cast<int>(edges_.size());
      int ci = static_cast<int>(nodes_.size());
      edges_.push_back({kk.first == 0 ? EdgeKind::Plain : EdgeKind::Prime, my_index, ci});
      nodes_.emplace_back();
      nodes_[my_index].kid_edges.push_back(ei);
      if (tags) tags->push_back(c->tag);
      emit(*c, ci, tags);
    }
  }

  void build(const RawTree& raw, std::vector<std::int64_t>* tags) {
    nodes_.clear();
    edges_.clear();
    nodes_.emplace_back();
    if (tags) tags->clear();
    emit(raw, 0, tags);
    key_ = canon_key(raw);
  }

  std::string render_node(int i) const {
    const Node& n = nodes_[i];
    std::vector<std::string> parts;
    if (n.noise) parts.push_back("Xi");
    if (n.tpow || n.xpow)
      parts.push_back("X{" + std::to_string(n.tpow) + "," + std::to_string(n.xpow) + "}");
    for (int e : n.kid_edges) {
      std::string inner = render_node(edges_[e].child);
      parts.push_back((edges_[e].kind == EdgeKind::Plain ? "I[" : "Ip[") + inner + "]");
    }
    if (parts.empty()) return "One";
    std::string s = parts[0];
    for (size_t k = 1; k < parts.size(); ++k) s += "*" + parts[k];
    return s;
  }
};

// ---------------------------------------------------------------------------
// Degrees

struct DegreeConfig {
  Rat kappa = Rat(1, 100);
  Rat noise_degree() const { return Rat(-3, 2) - kappa; }
  Rat plain_edge_gain = Rat(2);
  Rat prime_edge_gain = Rat(1);
  Rat x_time_degree = Rat(2); // parabolic scaling
  Rat x_space_degree = Rat(1);
};

inline Rat degree(const Tree& t, const DegreeConfig& cfg = {}) {
  Rat d = 0;
  d += Rat(t.noise_count()) * cfg.noise_degree();
  d += Rat(t.plain_count()) * cfg.plain_edge_gain;
  d += Rat(t.prime_count()) * cfg.prime_edge_gain;
  d += Rat(t.x_time_total()) * cfg.x_time_degree;
  d += Rat(t.x_space_total()) * cfg.x_space_degree;
  return d;
}

// ---------------------------------------------------------------------------
// Constructors on whole trees

inline Tree integrate(const Tree& t, EdgeKind k) {
  RawTree r;
  r.kids.emplace_back(k, t.to_raw());
  return Tree(r);
}

inline Tree product(const Tree& a, const Tree& b) {
  RawTree ra = a.to_raw(), rb = b.to_raw();
  if (ra.noise && rb.noise) throw GrammarError("product would put two noises on the root node");
  RawTree r;
  r.noise = ra.noise || rb.noise;
  r.tpow = ra.tpow + rb.tpow;
  r.xpow = ra.xpow + rb.xpow;
  r.kids = ra.kids;
  for (auto& kc : rb.kids) r.kids.push_back(kc);
  return Tree(r);
}

// ---------------------------------------------------------------------------
// Parsing:  Xi | I[expr] | Ip[expr] | X{a,b} | One | expr*expr | (expr)

namespace detail {
class Parser {
public:
  explicit Parser(const std::string& s) : s_(s) {}
  RawTree parse() {
    RawTree r = parse_product();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing input");
    return r;
  }

private:
  const std::string& s_;
  size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError("parse error at position " + std::to_string(pos_) + ": " + msg);
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool eat(const std::string& lit) {
    skip_ws();
    if (s_.compare(pos_, lit.size(), lit) == 0) {
      pos_ += lit.size();
      return true;
    }
    return false;
  }
  int parse_int() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < s_.size() && isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer");
    return std::stoi(s_.substr(start, pos_ - start));
  }

  RawTree parse_product() {
    RawTree acc = parse_atom();
    while (true) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '*') {
        ++pos_;
        RawTree rhs = parse_atom();
        if (acc.noise && rhs.noise) fail("product puts two noises on one node");
        acc.noise = acc.noise || rhs.noise;
        acc.tpow += rhs.tpow;
        acc.xpow += rhs.xpow;
        for (auto& kc : rhs.kids) acc.kids.push_back(std::move(kc));
      } else {
        return acc;
      }
    }
  }

  RawTree parse_atom() {
    skip_ws();
    if (eat("(")) {
      RawTree r = parse_product();
      if (!eat(")")) fail("expected ')'");
      return r;
    }
    if (eat("Xi")) {
      RawTree r;
      r.noise = true;
      return r;
    }
    if (eat("Ip[")) {
      RawTree inner = parse_product();
      if (!eat("]")) fail("expected ']'");
      RawTree r;
      r.kids.emplace_back(EdgeKind::Prime, std::move(inner));
      return r;
    }
    if (eat("I[")) {
      RawTree inner = parse_product();
      if (!eat("]")) fail("expected ']'");
      RawTree r;
      r.kids.emplace_back(EdgeKind::Plain, std::move(inner));
      return r;
    }
    if (eat("X{")) {
      RawTree r;
      r.tpow = parse_int();
      if (!eat(",")) fail("expected ','");
      r.xpow = parse_int();
      if (!eat("}")) fail("expected '}'");
      return r;
    }
    if (eat("One")) return RawTree{};
    fail("expected Xi, I[...], Ip[...], X{a,b}, One or '('");
  }
};
} // namespace detail

inline Tree parse_tree(const std::string& text) {
  detail::Parser p(text);
  Tree t(p.parse());
  std::string why;
  if (!t.grammar_ok(&why)) throw GrammarError("grammar violation: " + why);
  return t;
}

// ---------------------------------------------------------------------------
// Embeddings (subtrees keep node decorations; children may be pruned)

enum class EmbedMode { Any, RootIncluding, DistinguishedIncluding };

struct Embedding {
  std::vector<int> node_map;   // guest node index -> host node index
  std::vector<int> image;      // sorted host node indices
  std::vector<int> edge_image; // host edge index per guest edge index
};

namespace detail {

inline bool node_content_matches(const Tree::Node& g, const Tree::Node& h) {
  return g.noise == h.noise && g.tpow == h.tpow && g.xpow == h.xpow;
}

// Try to map guest subtree rooted at gn onto host node hn (children of gn map
// injectively into children of hn with matching kinds). Invokes `emit` for
// every complete assignment below gn.
inline void match_down(const Tree& guest, const Tree& host, int gn, int hn,
                       std::vector<int>& node_map, std::vector<int>& edge_map,
                       const std::function<void()>& emit) {
  if (!node_content_matches(guest.node(gn), host.node(hn))) return;
  node_map[gn] = hn;
  const auto& gkids = guest.node(gn).kid_edges;
  const auto& hkids = host.node(hn).kid_edges;
  if (gkids.empty()) {
    emit();
    node_map[gn] = -1;
    return;
  }
  std::vector<int> used(hkids.size(), 0);
  // assign guest child edges one by one to distinct host child edges
  std::function<void(size_t)> rec = [&](size_t gi) {
    if (gi == gkids.size()) {
      emit();
      return;
    }
    int ge = gkids[gi];
    for (size_t hi = 0; hi < hkids.size(); ++hi) {
      if (used[hi]) continue;
      int he = hkids[hi];
      if (host.edge(he).kind != guest.edge(ge).kind) continue;
      used[hi] = 1;
      edge_map[ge] = he;
      match_down(guest, host, guest.edge(ge).child, host.edge(he).child, node_map, edge_map,
                 [&]() { rec(gi + 1); });
      edge_map[ge] = -1;
      used[hi] = 0;
    }
  };
  rec(0);
  node_map[gn] = -1;
}

} // namespace detail

inline std::vector<Embedding> embeddings(const Tree& guest, const Tree& host, EmbedMode mode,
                                         std::optional<int> distinguished = std::nullopt) {
  if (mode == EmbedMode::DistinguishedIncluding) {
    if (!distinguished || *distinguished < 0 || *distinguished >= host.node_count())
      throw std::invalid_argument("unknown distinguished node id");
  }
  std::vector<Embedding> out;
  std::set<std::vector<int>> seen_images;
  std::vector<int> node_map(guest.node_count(), -1);
  std::vector<int> edge_map(guest.edge_count(), -1);
  auto consider = [&](int anchor) {
    detail::match_down(guest, host, 0, anchor, node_map, edge_map, [&]() {
      Embedding e;
      e.node_map = node_map;
      e.edge_image = edge_map;
      e.image = node_map;
      std::sort(e.image.begin(), e.image.end());
      if (mode == EmbedMode::DistinguishedIncluding &&
          !std::binary_search(e.image.begin(), e.image.end(), *distinguished))
        return;
      if (seen_images.insert(e.image).second) out.push_back(std::move(e));
    });
  };
  if (mode == EmbedMode::RootIncluding) {
    consider(0);
  } else {
    for (int v = 0; v < host.node_count(); ++v) consider(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contraction: collapse the image of an embedding to a single bare node.

inline Tree contract(const Tree& host, const Embedding& e) {
  std::vector<char> in_image(host.node_count(), 0);
  for (int v : e.image) in_image[v] = 1;
  int top = e.node_map[0]; // image of the guest root
  // rebuild: replace the subtree at `top` by a bare node carrying the
  // out-of-image children of all image nodes
  auto rebuild = [&](auto&& self, int v) -> RawTree {
    if (in_image[v]) {
      // collapsed node: gather non-image children across the whole image
      RawTree r; // bare, contracted decorations disappear
      auto gather = [&](auto&& g, int u) -> void {
        for (int ei : host.node(u).kid_edges) {
          int c = host.edge(ei).child;
          if (in_image[c]) {
            g(g, c);
          } else {
            r.kids.emplace_back(host.edge(ei).kind, self(self, c));
          }
        }
      };
      gather(gather, v);
      return r;
    }
    RawTree r;
    r.noise = host.node(v).noise;
    r.tpow = host.node(v).tpow;
    r.xpow = host.node(v).xpow;
    for (int ei : host.node(v).kid_edges)
      r.kids.emplace_back(host.edge(ei).kind, self(self, host.edge(ei).child));
    return r;
  };
  if (top == 0) return Tree(rebuild(rebuild, 0));
  // general: rebuild from the root, collapsing when we reach `top`
  auto walk = [&](auto&& self, int v) -> RawTree {
    if (v == top) return rebuild(rebuild, v);
    RawTree r;
    r.noise = host.node(v).noise;
    r.tpow = host.node(v).tpow;
    r.xpow = host.node(v).xpow;
    for (int ei : host.node(v).kid_edges)
      r.kids.emplace_back(host.edge(ei).kind, self(self, host.edge(ei).child));
    return r;
  };
  return Tree(walk(walk, 0));
}

// ---------------------------------------------------------------------------
// Gluing t onto t0 by identifying root(t) with the distinguished node of t0.

inline Tree glue(const Tree& t, const Tree& t0, int distinguished) {
  if (distinguished < 0 || distinguished >= t0.node_count())
    throw std::invalid_argument("unknown distinguished node id");
  RawTree guest = t.to_raw();
  auto walk = [&](auto&& self, int v) -> RawTree {
    RawTree r;
    r.noise = t0.node(v).noise;
    r.tpow = t0.node(v).tpow;
    r.xpow = t0.node(v).xpow;
    for (int ei : t0.node(v).kid_edges)
      r.kids.emplace_back(t0.edge(ei).kind, self(self, t0.edge(ei).child));
    if (v == distinguished) {
      if (r.noise && guest.noise) throw GrammarError("glue puts two noises on the merged node");
      r.noise = r.noise || guest.noise;
      r.tpow += guest.tpow;
      r.xpow += guest.xpow;
      for (auto& kc : guest.kids) r.kids.push_back(kc);
    }
    return r;
  };
  Tree res(walk(walk, 0));
  std::string why;
  if (!res.grammar_ok(&why)) throw GrammarError("glue result violates grammar: " + why);
  return res;
}

// ---------------------------------------------------------------------------
// Enumeration of right-hand-side symbols (equation_shape), by noise count.

namespace detail {
inline void multisets(const std::vector<std::vector<Tree>>& pool_by_noise, int budget, int min_idx,
                      std::vector<Tree>& cur, std::vector<std::vector<Tree>>& out) {
  out.push_back(cur);
  // choose the next factor with noise count >= 1, nondecreasing (by key) to
  // avoid duplicates
  for (int n = 1; n <= budget; ++n) {
    for (size_t i = 0; i < pool_by_noise[n].size(); ++i) {
      const Tree& cand = pool_by_noise[n][i];
      if (!cur.empty()) {
        const Tree& last = cur.back();
        int last_n = last.noise_count();
        if (n < last_n) continue;
        if (n == last_n && cand.key() < last.key()) continue;
      }
      (void)min_idx;
      cur.push_back(cand);
      multisets(pool_by_noise, budget - n, 0, cur, out);
      cur.pop_back();
    }
  }
}
} // namespace detail

// All equation-shape trees with exactly `n` noises (n >= 1).
inline const std::vector<Tree>& equation_trees(int n) {
  static std::map<int, std::vector<Tree>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n <= 0) {
    static std::vector<Tree> empty;
    return empty;
  }
  // ensure lower levels
  std::vector<std::vector<Tree>> pool(n + 1);
  for (int k = 1; k < n; ++k) pool[k] = equation_trees(k);

  std::set<std::string> seen;
  std::vector<Tree> result;
  auto add = [&](const Tree& t) {
    if (seen.insert(t.key()).second) result.push_back(t);
  };

  if (n == 1) {
    add(Tree::noise());
  }
  // (A) noise root with plain children summing to n-1
  {
    std::vector<std::vector<Tree>> packs;
    std::vector<Tree> cur;
    detail::multisets(pool, n - 1, 0, cur, packs);
    for (const auto& pack : packs) {
      int total = 0;
      for (const auto& f : pack) total += f.noise_count();
      if (total != n - 1) continue;
      RawTree r;
      r.noise = true;
      for (const auto& f : pack) r.kids.emplace_back(EdgeKind::Plain, f.to_raw());
      add(Tree(r));
    }
  }
  // (B) bare root with exactly two prime children and plain children
  for (int n1 = 1; n1 < n; ++n1) {
    for (const auto& p1 : pool[n1]) {
      for (int n2 = n1; n2 + n1 <= n; ++n2) {
        for (const auto& p2 : pool[n2]) {
          if (n2 == n1 && p2.key() < p1.key()) continue;
          int rest = n - n1 - n2;
          std::vector<std::vector<Tree>> packs;
          std::vector<Tree> cur;
          detail::multisets(pool, rest, 0, cur, packs);
          for (const auto& pack : packs) {
            int total = 0;
            for (const auto& f : pack) total += f.noise_count();
            if (total != rest) continue;
            RawTree r;
            r.kids.emplace_back(EdgeKind::Prime, p1.to_raw());
            r.kids.emplace_back(EdgeKind::Prime, p2.to_raw());
            for (const auto& f : pack) r.kids.emplace_back(EdgeKind::Plain, f.to_raw());
            add(Tree(r));
          }
        }
      }
    }
  }
  auto [pos, ok] = cache.emplace(n, std::move(result));
  (void)ok;
  return pos->second;
}

struct EnumerateFilter {
  bool negative_degree = true;
  bool no_x = true; // equation_shape trees are X-free anyway
  int min_noises = 1;
};

// Grammar-conforming right-hand-side trees with <= max_noises noises,
// deduplicated, degree-sorted (then by canonical key).
inline std::vector<Tree> enumerate_trees(int max_noises, const DegreeConfig& cfg = {},
                                         const EnumerateFilter& f = {}) {
  std::vector<Tree> out;
  for (int n = std::max(1, f.min_noises); n <= max_noises; ++n) {
    for (const auto& t : equation_trees(n)) {
      if (f.negative_degree && !(degree(t, cfg) < 0)) continue;
      if (f.no_x && t.has_x()) continue;
      out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end(), [&](const Tree& a, const Tree& b) {
    Rat da = degree(a, cfg), db = degree(b, cfg);
    if (da != db) return da < db;
    return a.key() < b.key();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Subtrees (connected subgraphs keeping decorations, children prunable)

// All subtrees containing node v, as (tree, node id of v's copy) pairs.
inline std::vector<std::pair<Tree, int>> subtrees_through(const Tree& t, int v) {
  // shapes at node u: every subset of child branches, each branch with any
  // shape of the child; if u must contain v (v below u), the branch towards v
  // is mandatory.
  std::vector<int> parent_edge(t.node_count(), -1);
  for (int e = 0; e < t.edge_count(); ++e) parent_edge[t.edge(e).child] = e;

  // path from root to v as set of nodes
  std::vector<char> on_path(t.node_count(), 0);
  {
    int u = v;
    on_path[u] = 1;
    while (parent_edge[u] != -1) {
      u = t.edge(parent_edge[u]).parent;
      on_path[u] = 1;
    }
  }

  // enumerate shapes rooted at u; must_v: shape must contain v's branch
  auto shapes = [&](auto&& self, int u, bool must_v) -> std::vector<RawTree> {
    std::vector<std::vector<RawTree>> kid_opts; // per child: list of optional picks
    std::vector<char> kid_mandatory;
    std::vector<EdgeKind> kid_kind;
    for (int ei : t.node(u).kid_edges) {
      int c = t.edge(ei).child;
      bool mand = must_v && on_path[c];
      auto sub = self(self, c, mand);
      for (auto& s : sub) s.tag = ei;
      kid_opts.push_back(std::move(sub));
      kid_mandatory.push_back(mand ? 1 : 0);
      kid_kind.push_back(t.edge(ei).kind);
    }
    std::vector<RawTree> acc;
    RawTree base;
    base.noise = t.node(u).noise;
    base.tpow = t.node(u).tpow;
    base.xpow = t.node(u).xpow;
    // mark v by tag on the node itself (tags on kids track edges)
    acc.push_back(base);
    for (size_t i = 0; i < kid_opts.size(); ++i) {
      std::vector<RawTree> next;
      for (const auto& partial : acc) {
        if (!kid_mandatory[i]) next.push_back(partial);
        for (const auto& opt : kid_opts[i]) {
          RawTree ext = partial;
          ext.kids.emplace_back(kid_kind[i], opt);
          next.push_back(std::move(ext));
        }
      }
      acc = std::move(next);
    }
    return acc;
  };

  std::vector<std::pair<Tree, int>> out;
  std::set<std::string> seen; // dedupe by (key, dist-position) pair string
  // top node u ranges over ancestors of v (inclusive)
  for (int u = 0; u < t.node_count(); ++u) {
    if (!on_path[u]) continue;
    for (auto& raw : shapes(shapes, u, true)) {
      // locate v's copy by following original edge indices stored as tags
      std::vector<std::int64_t> tags;
      Tree sub2(raw, tags);
      // path edges from u to v in original tree
      std::vector<int> path_edges;
      {
        int w = v;
        while (w != u) {
          path_edges.push_back(parent_edge[w]);
          w = t.edge(parent_edge[w]).parent;
        }
        std::reverse(path_edges.begin(), path_edges.end());
      }
      int cur = 0; // node index in sub2
      bool ok = true;
      for (int pe : path_edges) {
        int next = -1;
        for (int ei : sub2.node(cur).kid_edges) {
          if (tags[ei] == pe) {
            next = sub2.edge(ei).child;
            break;
          }
        }
        if (next == -1) {
          ok = false;
          break;
        }
        cur = next;
      }
      if (!ok) continue;
      std::string id = sub2.key() + "@" + std::to_string(cur);
      if (seen.insert(id).second) out.emplace_back(sub2, cur);
    }
  }
  return out;
}

// All root-including subtrees.
inline std::vector<Tree> root_subtrees(const Tree& t) {
  std::vector<Tree> out;
  std::set<std::string> seen;
  for (auto& [sub, pos] : subtrees_through(t, 0)) {
    (void)pos;
    if (seen.insert(sub.key()).second) out.push_back(sub);
  }
  return out;
}

} // namespace qshe
