#pragma once

#include "qshe/nullity.hpp"
#include "qshe/relation.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qshe {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
inline std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t hit = s.find(sep, pos);
    if (hit == std::string::npos) {
      out.push_back(trim(s.substr(pos)));
      return out;
    }
    out.push_back(trim(s.substr(pos, hit - pos)));
    pos = hit + sep.size();
  }
}
inline DerivTuple parse_tuple(const std::string& s) {
  std::string t = trim(s);
  if (t.size() < 2 || t.front() != '<' || t.back() != '>') throw DataError("bad tuple: " + s);
  DerivTuple out;
  if (t == "<>") return out;
  for (const auto& p : split(t.substr(1, t.size() - 2), ","))
    out.push_back(static_cast<std::uint8_t>(std::stoi(p)));
  return out;
}
} // namespace detail

// ---------------------------------------------------------------------------
// Glyph table

struct GlyphEntry {
  std::string name;
  Tree tree;
  std::optional<int> dist;
  std::string confidence;
  std::vector<std::string> notes;
  std::map<std::string, std::vector<int>> perms; // presentation-order permutations
};

class GlyphTable {
public:
  std::map<std::string, GlyphEntry> entries;

  static GlyphTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open glyph table: " + path);
    GlyphTable gt;
    std::string line;
    GlyphEntry* cur = nullptr;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = detail::trim(line);
      if (s.empty() || s[0] == '#') continue;
      std::istringstream is(s);
      std::string kw;
      is >> kw;
      try {
        if (kw == "glyph") {
          std::string name, eq;
          is >> name >> eq;
          if (eq != "=") throw DataError("expected '='");
          std::string rest;
          std::getline(is, rest);
          auto at = detail::split(rest, "@");
          GlyphEntry e;
          e.name = name;
          e.tree = parse_tree(at[0]);
          if (at.size() > 1) e.dist = std::stoi(at[1]);
          cur = &gt.entries.emplace(name, std::move(e)).first->second;
        } else if (kw == "conf") {
          std::string c;
          is >> c;
          if (cur) cur->confidence = c;
        } else if (kw == "note") {
          std::string rest;
          std::getline(is, rest);
          if (cur) cur->notes.push_back(detail::trim(rest));
        } else if (kw == "perm") {
          std::string which, eq, rest;
          is >> which >> eq;
          std::getline(is, rest);
          std::vector<int> p;
          for (const auto& tok : detail::split(rest, ",")) p.push_back(std::stoi(tok));
          if (cur) cur->perms[which] = p;
        } else {
          throw DataError("unknown keyword: " + kw);
        }
      } catch (const std::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return gt;
  }

  const GlyphEntry& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw DataError("unknown glyph: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return entries.count(name) != 0; }

  // resolve a spec that is either a glyph name or a constructor expression,
  // with an optional trailing "@ idx" distinguished-node override
  std::pair<Tree, std::optional<int>> resolve(const std::string& spec) const {
    auto at_parts = detail::split(spec, "@");
    std::string base = detail::trim(at_parts[0]);
    std::optional<int> dist;
    if (at_parts.size() > 1) dist = std::stoi(at_parts[1]);
    if (has(base)) {
      const GlyphEntry& e = at(base);
      if (!dist) dist = e.dist;
      return {e.tree, dist};
    }
    return {parse_tree(base), dist};
  }

  // reverse lookup for rendering
  std::string name_of(const Tree& t) const {
    for (const auto& [n, e] : entries)
      if (e.tree == t) return n;
    return t.render();
  }
};

// ---------------------------------------------------------------------------
// Identity registry: named identities regenerated from their tuple data and
// certified against stored canonical renderings.

struct IdentityExpect {
  std::string z;      // binding for the $Z placeholder, empty if none
  int k = 0;          // parameter-derivative order
  std::vector<DerivTuple> spect; // spectator tuples per tau (optional)
  DerivTuple spect0;
  std::string rendered; // expected canonical rendering of the relation
};

struct IdentityEntry {
  std::string name;
  Family family = Family::Sym1;
  std::vector<std::string> tau_specs; // may contain $Z
  std::optional<std::string> tau0_spec;
  std::string np_mode = "pipeline"; // pipeline | example
  bool a_one = false;               // render with a := 1 (worked example)
  std::string paper;                // the display this transcribes
  std::vector<IdentityExpect> expects;
};

struct CertResult {
  std::string name;
  bool ok = true;
  std::vector<std::string> messages;
};

class Registry {
public:
  GlyphTable glyphs;
  std::map<std::string, IdentityEntry> identities;
  DegreeConfig cfg;

  static Registry load(const std::string& glyph_path, const std::string& identity_path,
                       DegreeConfig cfg_ = {}) {
    Registry reg;
    reg.cfg = cfg_;
    reg.glyphs = GlyphTable::load(glyph_path);
    std::ifstream in(identity_path);
    if (!in) throw DataError("cannot open identity registry: " + identity_path);
    std::string line;
    IdentityEntry cur;
    bool open = false;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = detail::trim(line);
      if (s.empty() || s[0] == '#') continue;
      std::istringstream is(s);
      std::string kw;
      is >> kw;
      try {
        if (kw == "identity") {
          if (open) throw DataError("nested identity");
          cur = IdentityEntry{};
          is >> cur.name;
          open = true;
        } else if (kw == "family") {
          int f;
          is >> f;
          cur.family = static_cast<Family>(f);
        } else if (kw == "taus") {
          std::string rest;
          std::getline(is, rest);
          cur.tau_specs = detail::split(rest, ";");
        } else if (kw == "tau0") {
          std::string rest;
          std::getline(is, rest);
          cur.tau0_spec = detail::trim(rest);
        } else if (kw == "np") {
          is >> cur.np_mode;
        } else if (kw == "aone") {
          cur.a_one = true;
        } else if (kw == "paper") {
          std::string rest;
          std::getline(is, rest);
          cur.paper = detail::trim(rest);
        } else if (kw == "expect") {
          std::string rest;
          std::getline(is, rest);
          auto main = detail::split(rest, "::");
          if (main.size() < 2) throw DataError("expect needs ':: relation'");
          IdentityExpect ex;
          std::istringstream hs(main[0]);
          std::string tok;
          while (hs >> tok) {
            auto kv = detail::split(tok, "=");
            if (kv.size() != 2) throw DataError("bad expect binding: " + tok);
            if (kv[0] == "k") {
              ex.k = std::stoi(kv[1]);
            } else if (kv[0] == "Z") {
              ex.z = kv[1];
            } else if (kv[0] == "spect0") {
              ex.spect0 = detail::parse_tuple(kv[1]);
            } else if (kv[0] == "spect") {
              for (const auto& p : detail::split(kv[1], ";")) ex.spect.push_back(detail::parse_tuple(p));
            } else {
              throw DataError("unknown expect binding: " + kv[0]);
            }
          }
          // rendered relation: everything after the first '::'
          std::string rendered = rest.substr(rest.find("::") + 2);
          ex.rendered = detail::trim(rendered);
          cur.expects.push_back(std::move(ex));
        } else if (kw == "end") {
          if (!open) throw DataError("end without identity");
          reg.identities.emplace(cur.name, cur);
          open = false;
        } else {
          throw DataError("unknown keyword: " + kw);
        }
      } catch (const std::exception& e) {
        throw DataError(identity_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (open) throw DataError("unterminated identity entry");
    return reg;
  }

  NullPredicate np_for(const std::string& mode) const {
    if (mode == "pipeline") return pipeline_null_predicate();
    if (mode == "example") return example_null_predicate();
    throw DataError("unknown np mode: " + mode);
  }

  GenSpec make_spec(const IdentityEntry& e, const std::string& z, int k,
                    const std::vector<DerivTuple>& spect, const DerivTuple& spect0) const {
    GenSpec s;
    s.data.family = e.family;
    for (const auto& ts : e.tau_specs) {
      std::string spec = ts;
      if (spec == "$Z") {
        if (z.empty()) throw DataError("identity " + e.name + " needs a Z binding");
        spec = z;
      }
      s.data.taus.push_back(glyphs.resolve(spec).first);
    }
    if (e.tau0_spec) {
      auto [t0, d0] = glyphs.resolve(*e.tau0_spec);
      s.data.tau0 = t0;
      s.data.dist = d0.value_or(0);
    }
    s.k = k;
    s.spect = spect;
    s.spect0 = spect0;
    s.np = np_for(e.np_mode);
    s.cfg = cfg;
    return s;
  }

  Relation instantiate(const std::string& name, const std::string& z = "", int k = 0,
                       const std::vector<DerivTuple>& spect = {},
                       const DerivTuple& spect0 = {}) const {
    auto it = identities.find(name);
    if (it == identities.end()) throw DataError("unknown identity: " + name);
    return gen_relation(make_spec(it->second, z, k, spect, spect0));
  }

  // Regenerate every stored instance and compare against the stored rendering.
  std::vector<CertResult> certify_all() const {
    std::vector<CertResult> out;
    for (const auto& [name, e] : identities) {
      CertResult res;
      res.name = name;
      for (const auto& ex : e.expects) {
        try {
          Relation r = gen_relation(make_spec(e, ex.z, ex.k, ex.spect, ex.spect0));
          if (e.a_one) r = r.with_a_one();
          std::string got = r.str();
          if (got != ex.rendered) {
            res.ok = false;
            res.messages.push_back("mismatch at Z=" + ex.z + " k=" + std::to_string(ex.k) +
                                   "\n  expected: " + ex.rendered + "\n  got:      " + got);
          }
        } catch (const std::exception& err) {
          res.ok = false;
          res.messages.push_back(std::string("generation failed: ") + err.what());
        }
      }
      if (e.expects.empty()) {
        res.ok = false;
        res.messages.push_back("no stored instances");
      }
      out.push_back(std::move(res));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Search for relations connecting only Gaussian-null four-noise symbols.

struct GaussianRelation {
  TupleData data;
  std::string description;
};

inline std::vector<GaussianRelation> search_gaussian_relations(const DegreeConfig& cfg = {}) {
  // nullity with the Gaussian list disabled, so the symbols stay visible
  NullPredicate np;
  std::set<std::string> wg;
  for (const auto& t : gaussian_null_list()) wg.insert(t.key());

  // candidate building blocks: subtrees of the four-noise symbols
  std::vector<Tree> pool = {parse_tree("Xi"), parse_tree("Xi*I[Xi]"), parse_tree("Ip[Xi]*Ip[Xi]"),
                            parse_tree("Xi*I[Xi]*I[Xi]"), parse_tree("Ip[Xi]*Ip[Xi]*I[Xi]"),
                            parse_tree("Xi*I[Xi*I[Xi]]"), parse_tree("Xi*I[Ip[Xi]*Ip[Xi]]"),
                            parse_tree("Ip[Xi]*Ip[Xi*I[Xi]]"), parse_tree("Ip[Xi]*Ip[Ip[Xi]*Ip[Xi]]")};
  std::vector<std::pair<Tree, int>> hosts; // (tau0, dist)
  {
    std::vector<Tree> host_trees = {parse_tree("Xi"),     parse_tree("I[Xi]"),
                                    parse_tree("Ip[Xi]"),  parse_tree("Xi*I[Xi]"),
                                    parse_tree("Ip[Xi]*Ip[Xi]"), parse_tree("Ip[Xi]*I[Xi]"),
                                    parse_tree("Ip[Ip[Xi]]*Ip[Xi]"), parse_tree("Xi*I[Ip[Xi]]")};
    for (const auto& h : host_trees)
      for (int v = 0; v < h.node_count(); ++v) hosts.emplace_back(h, v);
  }

  std::vector<GaussianRelation> found;
  std::set<std::string> seen;
  auto try_spec = [&](const TupleData& data) {
    int total = 0;
    for (const auto& t : data.taus) total += t.noise_count();
    if (data.tau0) total += data.tau0->noise_count();
    if (total != 4) return;
    GenSpec s;
    s.data = data;
    s.np = np;
    s.cfg = cfg;
    Relation r;
    try {
      r = gen_relation(s);
    } catch (const std::exception&) {
      return;
    }
    if (r.lhs.size() < 2) return;
    for (const auto& [t, p] : r.lhs) {
      (void)p;
      if (!wg.count(t.key())) return;
    }
    if (!seen.insert(r.str()).second) return;
    GaussianRelation g;
    g.data = data;
    std::ostringstream os;
    os << "family " << static_cast<int>(data.family) << ", taus:";
    for (const auto& t : data.taus) os << " " << t.render();
    if (data.tau0) os << ", tau0 " << data.tau0->render() << " @" << data.dist;
    os << "  ->  " << r.str();
    g.description = os.str();
    found.push_back(std::move(g));
  };

  // family 1: multisets of pool elements, n in [2,4]
  std::function<void(std::vector<Tree>&, size_t, int)> rec = [&](std::vector<Tree>& cur, size_t start,
                                                                 int noises) {
    if (cur.size() >= 2 && noises == 4) try_spec({Family::Sym1, cur, std::nullopt, 0});
    if (cur.size() == 4 || noises >= 4) return;
    for (size_t i = start; i < pool.size(); ++i) {
      int nn = noises + pool[i].noise_count();
      if (nn > 4) continue;
      cur.push_back(pool[i]);
      rec(cur, i, nn);
      cur.pop_back();
    }
  };
  std::vector<Tree> cur;
  rec(cur, 0, 0);

  // families 2 and 3 with hosts
  for (const auto& [h, v] : hosts) {
    std::function<void(std::vector<Tree>&, size_t, int)> rec23 = [&](std::vector<Tree>& c, size_t start,
                                                                     int noises) {
      if (c.size() >= 2 && noises + h.noise_count() == 4) {
        try_spec({Family::Sym2, c, h, v});
        try_spec({Family::Sym3, c, h, v});
      }
      if (c.size() == 4 || noises + h.noise_count() >= 4) return;
      for (size_t i = start; i < pool.size(); ++i) {
        int nn = noises + pool[i].noise_count();
        if (nn + h.noise_count() > 4) continue;
        c.push_back(pool[i]);
        rec23(c, i, nn);
        c.pop_back();
      }
    };
    std::vector<Tree> c;
    rec23(c, 0, 0);
  }
  return found;
}

} // namespace qshe
