#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kad/relstruct.hpp"
#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace kad {

/// One conjunct of a state condition: requires-D(term) when positive,
/// requires-A(term) otherwise.
struct SignedAtom {
  TermPtr term;
  bool positive = true;
};

/// NFA with epsilon transitions whose states carry conditions: a run visiting
/// a state at a structure vertex is admissible only if every atom of the
/// state's condition holds at that vertex.
struct ConditionAutomaton {
  std::vector<std::string> alphabet;
  int num_states = 0;
  std::vector<int> initial, accepting;
  struct Transition {
    int from;
    std::optional<std::string> label;  // nullopt = epsilon
    int to;
  };
  std::vector<Transition> transitions;
  std::vector<std::vector<SignedAtom>> conditions;  // per state

  int add_state() {
    conditions.emplace_back();
    return num_states++;
  }
};

namespace detail {

inline void compile_into(const TermPtr& t, ConditionAutomaton& a,
                         std::vector<int>& initial, std::vector<int>& accepting) {
  switch (t->op) {
    case Op::Var: {
      int p = a.add_state();
      int q = a.add_state();
      a.transitions.push_back({p, t->name, q});
      initial = {p};
      accepting = {q};
      return;
    }
    case Op::One: {
      int p = a.add_state();
      initial = accepting = {p};
      return;
    }
    case Op::Zero: {
      int p = a.add_state();
      int q = a.add_state();
      initial = {p};
      accepting = {q};  // unreachable
      return;
    }
    case Op::Comp: {
      std::vector<int> li, lf, ri, rf;
      compile_into(t->left, a, li, lf);
      compile_into(t->right, a, ri, rf);
      for (int f : lf)
        for (int i : ri) a.transitions.push_back({f, std::nullopt, i});
      initial = li;
      accepting = rf;
      return;
    }
    case Op::Union: {
      std::vector<int> li, lf, ri, rf;
      compile_into(t->left, a, li, lf);
      compile_into(t->right, a, ri, rf);
      initial = li;
      initial.insert(initial.end(), ri.begin(), ri.end());
      accepting = lf;
      accepting.insert(accepting.end(), rf.begin(), rf.end());
      return;
    }
    case Op::Star: {
      std::vector<int> bi, bf;
      compile_into(t->left, a, bi, bf);
      int z = a.add_state();
      for (int i : bi) a.transitions.push_back({z, std::nullopt, i});
      for (int f : bf) a.transitions.push_back({f, std::nullopt, z});
      initial = accepting = {z};
      return;
    }
    case Op::Dom:
    case Op::Antidom: {
      int q = a.add_state();
      a.conditions[q].push_back({t->left, t->op == Op::Dom});
      initial = accepting = {q};
      return;
    }
  }
}

}  // namespace detail

/// Compiles a term into a condition automaton accepting, in any relational
/// structure, exactly the paths whose endpoints satisfy the term.  D(u) and
/// A(u) become single initial-final states carrying the signed atom.
inline ConditionAutomaton compile(const TermPtr& t) {
  ConditionAutomaton a;
  a.alphabet = vars_of(t);
  detail::compile_into(t, a, a.initial, a.accepting);
  std::sort(a.initial.begin(), a.initial.end());
  std::sort(a.accepting.begin(), a.accepting.end());
  return a;
}

/// Distinct condition atoms of an automaton, ordered by first appearance.
inline std::vector<TermPtr> condition_atoms(const ConditionAutomaton& a) {
  std::vector<TermPtr> out;
  for (const auto& cond : a.conditions)
    for (const SignedAtom& atom : cond) {
      bool seen = false;
      for (const TermPtr& u : out)
        if (equal(u, atom.term)) {
          seen = true;
          break;
        }
      if (!seen) out.push_back(atom.term);
    }
  return out;
}

struct PathStep {
  std::string label;
  int to = 0;
};

/// Acceptance of a concrete path in a structure: an accepting run must exist
/// whose state conditions all hold at the vertices where they are visited.
inline bool accepts(const ConditionAutomaton& a, const RelStruct& m, int start,
                    const std::vector<PathStep>& steps) {
  {
    int x = start;
    for (const PathStep& s : steps) {
      if (!m.has_edge(s.label, x, s.to))
        throw std::invalid_argument("path edge missing from structure");
      x = s.to;
    }
  }
  // Truth of each distinct atom per vertex.
  std::vector<TermPtr> atoms = condition_atoms(a);
  std::vector<std::vector<bool>> atom_true(atoms.size());
  for (size_t i = 0; i < atoms.size(); ++i) {
    EvalRelation r = eval(atoms[i], m);
    atom_true[i].resize(m.vertex_count);
    for (int x = 0; x < m.vertex_count; ++x) {
      bool any = false;
      for (int y = 0; y < m.vertex_count; ++y)
        if (r.contains(x, y)) {
          any = true;
          break;
        }
      atom_true[i][x] = any;
    }
  }
  auto atom_index = [&](const TermPtr& u) {
    for (size_t i = 0; i < atoms.size(); ++i)
      if (equal(atoms[i], u)) return i;
    return atoms.size();
  };
  auto usable = [&](int q, int x) {
    for (const SignedAtom& atom : a.conditions[q]) {
      bool holds = atom_true[atom_index(atom.term)][x];
      if (holds != atom.positive) return false;
    }
    return true;
  };
  auto closure = [&](std::vector<bool> in, int x) {
    std::queue<int> work;
    for (int q = 0; q < a.num_states; ++q)
      if (in[q]) {
        if (!usable(q, x))
          in[q] = false;
        else
          work.push(q);
      }
    while (!work.empty()) {
      int q = work.front();
      work.pop();
      for (const auto& tr : a.transitions)
        if (tr.from == q && !tr.label && !in[tr.to] && usable(tr.to, x)) {
          in[tr.to] = true;
          work.push(tr.to);
        }
    }
    return in;
  };
  std::vector<bool> cur(a.num_states, false);
  for (int q : a.initial) cur[q] = true;
  cur = closure(std::move(cur), start);
  for (const PathStep& s : steps) {
    std::vector<bool> next(a.num_states, false);
    for (const auto& tr : a.transitions)
      if (tr.label && *tr.label == s.label && cur[tr.from]) next[tr.to] = true;
    cur = closure(std::move(next), s.to);
  }
  for (int q : a.accepting)
    if (cur[q]) return true;
  return false;
}

/// Debug dump: transitions, per-state conditions, initial/accepting markers.
inline std::string dump(const ConditionAutomaton& a) {
  std::string out;
  for (const auto& tr : a.transitions)
    out += "q" + std::to_string(tr.from) + " --" +
           (tr.label ? *tr.label : std::string("eps")) + "--> q" +
           std::to_string(tr.to) + "\n";
  for (int q = 0; q < a.num_states; ++q) {
    if (a.conditions[q].empty()) continue;
    out += "q" + std::to_string(q) + " ?";
    for (const SignedAtom& atom : a.conditions[q])
      out += std::string(" ") + (atom.positive ? "+D(" : "-A(") +
             render(atom.term) + ")";
    out += "\n";
  }
  out += "initial:";
  for (int q : a.initial) out += " q" + std::to_string(q);
  out += "\naccepting:";
  for (int q : a.accepting) out += " q" + std::to_string(q);
  out += "\n";
  return out;
}

/// Classical NFA over an explicit alternating alphabet: valuation symbols
/// (one per sign assignment to the guard list) interleaved with letters.
/// Well-formed words are val (letter val)*.  Symbols are indices: masks
/// [0, 2^|guards|) are valuations, the rest letters.
struct GuardedNFA {
  std::vector<TermPtr> guards;
  std::vector<std::string> letters;
  int num_states = 0;
  std::vector<int> initial, accepting;
  std::vector<std::map<int, std::vector<int>>> delta;  // state -> symbol -> targets

  int num_valuations() const { return 1 << guards.size(); }
  int num_symbols() const {
    return num_valuations() + static_cast<int>(letters.size());
  }
  int letter_symbol(const std::string& l) const {
    for (size_t i = 0; i < letters.size(); ++i)
      if (letters[i] == l) return num_valuations() + static_cast<int>(i);
    return -1;
  }
  bool is_valuation(int sym) const { return sym < num_valuations(); }

  int add_state() {
    delta.emplace_back();
    return num_states++;
  }
  void add_edge(int from, int sym, int to) {
    auto& v = delta[from][sym];
    if (std::find(v.begin(), v.end(), to) == v.end()) v.push_back(to);
  }
};

namespace detail {

inline bool same_symbol_space(const GuardedNFA& a, const GuardedNFA& b) {
  if (a.guards.size() != b.guards.size() || a.letters != b.letters)
    return false;
  for (size_t i = 0; i < a.guards.size(); ++i)
    if (!equal(a.guards[i], b.guards[i])) return false;
  return true;
}

}  // namespace detail

/// Lifts a condition automaton over an explicit guard list.  Epsilon moves
/// collapse into the valuation transitions: a valuation step from q reaches
/// every state epsilon-reachable through states consistent with the
/// valuation, so accumulated conditions act as conjunctions at one vertex.
inline GuardedNFA to_guarded(const ConditionAutomaton& a,
                             const std::vector<TermPtr>& guards) {
  if (guards.size() > 20)
    throw std::invalid_argument("guard list too large for explicit valuations");
  GuardedNFA n;
  n.guards = guards;
  n.letters = a.alphabet;
  const int nv = n.num_valuations();
  // Signed atom masks per state.
  std::vector<uint32_t> pos(a.num_states, 0), neg(a.num_states, 0);
  for (int q = 0; q < a.num_states; ++q) {
    for (const SignedAtom& atom : a.conditions[q]) {
      int gi = -1;
      for (size_t i = 0; i < guards.size(); ++i)
        if (equal(guards[i], atom.term)) gi = static_cast<int>(i);
      if (gi < 0)
        throw std::invalid_argument("condition atom missing from guard list: " +
                                    render(atom.term));
      (atom.positive ? pos[q] : neg[q]) |= uint32_t{1} << gi;
    }
  }
  auto consistent = [&](int q, uint32_t v) {
    return (pos[q] & ~v) == 0 && (neg[q] & v) == 0;
  };
  // Epsilon adjacency.
  std::vector<std::vector<int>> eps(a.num_states);
  for (const auto& tr : a.transitions)
    if (!tr.label) eps[tr.from].push_back(tr.to);
  auto closure = [&](const std::vector<int>& from, uint32_t v) {
    std::vector<bool> seen(a.num_states, false);
    std::queue<int> work;
    std::vector<int> out;
    for (int q : from)
      if (consistent(q, v) && !seen[q]) {
        seen[q] = true;
        work.push(q);
        out.push_back(q);
      }
    while (!work.empty()) {
      int q = work.front();
      work.pop();
      for (int r : eps[q])
        if (!seen[r] && consistent(r, v)) {
          seen[r] = true;
          work.push(r);
          out.push_back(r);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  // States: iota, then post_q, then pre_q.
  const int iota = 0;
  auto post = [&](int q) { return 1 + q; };
  auto pre = [&](int q) { return 1 + a.num_states + q; };
  n.num_states = 1 + 2 * a.num_states;
  n.delta.resize(n.num_states);
  n.initial = {iota};
  for (int q : a.accepting) n.accepting.push_back(post(q));
  std::sort(n.accepting.begin(), n.accepting.end());
  for (uint32_t v = 0; v < static_cast<uint32_t>(nv); ++v) {
    for (int r : closure(a.initial, v)) n.add_edge(iota, static_cast<int>(v), post(r));
    for (int q = 0; q < a.num_states; ++q)
      for (int r : closure({q}, v)) n.add_edge(pre(q), static_cast<int>(v), post(r));
  }
  for (const auto& tr : a.transitions)
    if (tr.label) {
      int sym = n.letter_symbol(*tr.label);
      n.add_edge(post(tr.from), sym, pre(tr.to));
    }
  return n;
}

inline bool accepts_word(const GuardedNFA& n, const std::vector<int>& word) {
  std::vector<bool> cur(n.num_states, false);
  for (int q : n.initial) cur[q] = true;
  for (int sym : word) {
    std::vector<bool> next(n.num_states, false);
    bool any = false;
    for (int q = 0; q < n.num_states; ++q) {
      if (!cur[q]) continue;
      auto it = n.delta[q].find(sym);
      if (it == n.delta[q].end()) continue;
      for (int r : it->second) {
        next[r] = true;
        any = true;
      }
    }
    if (!any) return false;
    cur = std::move(next);
  }
  for (int q : n.accepting)
    if (cur[q]) return true;
  return false;
}

/// Keeps only states reachable from an initial state and co-reachable to an
/// accepting state.
inline GuardedNFA trim(const GuardedNFA& n) {
  std::vector<bool> fwd(n.num_states, false), bwd(n.num_states, false);
  {
    std::queue<int> work;
    for (int q : n.initial)
      if (!fwd[q]) {
        fwd[q] = true;
        work.push(q);
      }
    while (!work.empty()) {
      int q = work.front();
      work.pop();
      for (const auto& [sym, targets] : n.delta[q])
        for (int r : targets)
          if (!fwd[r]) {
            fwd[r] = true;
            work.push(r);
          }
    }
  }
  {
    std::vector<std::vector<int>> back(n.num_states);
    for (int q = 0; q < n.num_states; ++q)
      for (const auto& [sym, targets] : n.delta[q])
        for (int r : targets) back[r].push_back(q);
    std::queue<int> work;
    for (int q : n.accepting)
      if (!bwd[q]) {
        bwd[q] = true;
        work.push(q);
      }
    while (!work.empty()) {
      int q = work.front();
      work.pop();
      for (int r : back[q])
        if (!bwd[r]) {
          bwd[r] = true;
          work.push(r);
        }
    }
  }
  std::vector<int> remap(n.num_states, -1);
  GuardedNFA out;
  out.guards = n.guards;
  out.letters = n.letters;
  for (int q = 0; q < n.num_states; ++q)
    if (fwd[q] && bwd[q]) remap[q] = out.add_state();
  for (int q = 0; q < n.num_states; ++q) {
    if (remap[q] < 0) continue;
    for (const auto& [sym, targets] : n.delta[q])
      for (int r : targets)
        if (remap[r] >= 0) out.add_edge(remap[q], sym, remap[r]);
  }
  for (int q : n.initial)
    if (remap[q] >= 0) out.initial.push_back(remap[q]);
  for (int q : n.accepting)
    if (remap[q] >= 0) out.accepting.push_back(remap[q]);
  std::sort(out.initial.begin(), out.initial.end());
  std::sort(out.accepting.begin(), out.accepting.end());
  return out;
}

/// Subset construction; the result has at most one target per symbol and
/// omits the dead subset.
inline GuardedNFA determinize(const GuardedNFA& n) {
  GuardedNFA out;
  out.guards = n.guards;
  out.letters = n.letters;
  std::map<std::vector<int>, int> ids;
  std::queue<std::vector<int>> work;
  std::vector<int> start = n.initial;
  std::sort(start.begin(), start.end());
  start.erase(std::unique(start.begin(), start.end()), start.end());
  ids[start] = out.add_state();
  out.initial = {0};
  work.push(start);
  while (!work.empty()) {
    std::vector<int> cur = work.front();
    work.pop();
    int cid = ids[cur];
    std::map<int, std::set<int>> bysym;
    for (int q : cur)
      for (const auto& [sym, targets] : n.delta[q])
        bysym[sym].insert(targets.begin(), targets.end());
    for (const auto& [sym, tset] : bysym) {
      std::vector<int> tv(tset.begin(), tset.end());
      auto it = ids.find(tv);
      if (it == ids.end()) {
        it = ids.emplace(tv, out.add_state()).first;
        work.push(tv);
      }
      out.add_edge(cid, sym, it->second);
    }
  }
  for (const auto& [states, id] : ids) {
    bool acc = false;
    for (int q : states)
      if (std::binary_search(n.accepting.begin(), n.accepting.end(), q)) {
        acc = true;
        break;
      }
    if (acc) out.accepting.push_back(id);
  }
  std::sort(out.accepting.begin(), out.accepting.end());
  return out;
}

/// Product automaton: accepts words accepted by both operands.
inline GuardedNFA product(const GuardedNFA& a, const GuardedNFA& b) {
  if (!detail::same_symbol_space(a, b))
    throw std::invalid_argument("product requires a common guard/letter space");
  GuardedNFA out;
  out.guards = a.guards;
  out.letters = a.letters;
  std::map<std::pair<int, int>, int> ids;
  std::queue<std::pair<int, int>> work;
  for (int p : a.initial)
    for (int q : b.initial) {
      std::pair<int, int> s{p, q};
      if (!ids.count(s)) {
        ids[s] = out.add_state();
        out.initial.push_back(ids[s]);
        work.push(s);
      }
    }
  while (!work.empty()) {
    auto [p, q] = work.front();
    work.pop();
    int cid = ids[{p, q}];
    for (const auto& [sym, ptargets] : a.delta[p]) {
      auto it = b.delta[q].find(sym);
      if (it == b.delta[q].end()) continue;
      for (int pr : ptargets)
        for (int qr : it->second) {
          std::pair<int, int> s{pr, qr};
          auto found = ids.find(s);
          if (found == ids.end()) {
            found = ids.emplace(s, out.add_state()).first;
            work.push(s);
          }
          out.add_edge(cid, sym, found->second);
        }
    }
  }
  for (const auto& [pq, id] : ids)
    if (std::binary_search(a.accepting.begin(), a.accepting.end(), pq.first) &&
        std::binary_search(b.accepting.begin(), b.accepting.end(), pq.second))
      out.accepting.push_back(id);
  std::sort(out.initial.begin(), out.initial.end());
  std::sort(out.accepting.begin(), out.accepting.end());
  return out;
}

namespace detail {

/// DFA for the well-formed alternating words val (letter val)*.
inline GuardedNFA alternation_universe(const std::vector<TermPtr>& guards,
                                       const std::vector<std::string>& letters) {
  GuardedNFA u;
  u.guards = guards;
  u.letters = letters;
  int expect_val = u.add_state();
  int after_val = u.add_state();
  u.initial = {expect_val};
  u.accepting = {after_val};
  for (int v = 0; v < u.num_valuations(); ++v)
    u.add_edge(expect_val, v, after_val);
  for (size_t i = 0; i < letters.size(); ++i)
    u.add_edge(after_val, u.num_valuations() + static_cast<int>(i), expect_val);
  return u;
}

}  // namespace detail

/// Complement with respect to the well-formed alternating words.
inline GuardedNFA complement(const GuardedNFA& n) {
  GuardedNFA d = determinize(n);
  // Complete with a dead state so flipping acceptance is total.
  int dead = d.add_state();
  for (int q = 0; q < d.num_states; ++q)
    for (int sym = 0; sym < d.num_symbols(); ++sym)
      if (!d.delta[q].count(sym)) d.add_edge(q, sym, dead);
  std::vector<int> flipped;
  for (int q = 0; q < d.num_states; ++q)
    if (!std::binary_search(d.accepting.begin(), d.accepting.end(), q))
      flipped.push_back(q);
  d.accepting = std::move(flipped);
  return product(d, detail::alternation_universe(n.guards, n.letters));
}

inline GuardedNFA difference(const GuardedNFA& a, const GuardedNFA& b) {
  return trim(product(a, complement(b)));
}

// ---- state elimination ------------------------------------------------------

namespace detail {

inline bool is_test_factor(const TermPtr& t) {
  return t->op == Op::Dom || t->op == Op::Antidom;
}

inline void flatten_plus(const TermPtr& t, std::vector<TermPtr>& out) {
  if (t->op == Op::Union) {
    flatten_plus(t->left, out);
    flatten_plus(t->right, out);
  } else if (t->op != Op::Zero) {
    out.push_back(t);
  }
}

inline void flatten_comp(const TermPtr& t, std::vector<TermPtr>& out) {
  if (t->op == Op::Comp) {
    flatten_comp(t->left, out);
    flatten_comp(t->right, out);
  } else if (t->op != Op::One) {
    out.push_back(t);
  }
}

inline TermPtr simp_plus(const TermPtr& a, const TermPtr& b) {
  std::vector<TermPtr> parts;
  flatten_plus(a, parts);
  flatten_plus(b, parts);
  if (parts.empty()) return zero();
  std::vector<std::pair<std::string, TermPtr>> keyed;
  keyed.reserve(parts.size());
  for (const TermPtr& p : parts) keyed.emplace_back(render(p), p);
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  keyed.erase(std::unique(keyed.begin(), keyed.end(),
                          [](const auto& x, const auto& y) {
                            return x.first == y.first;
                          }),
              keyed.end());
  TermPtr acc = keyed[0].second;
  for (size_t i = 1; i < keyed.size(); ++i) acc = plus(acc, keyed[i].second);
  return acc;
}

// Composition with unit/annihilator laws plus normalization of consecutive
// test factors (subidentities commute and are idempotent; a contradictory
// D(u), A(u) pair empties the whole composition).
inline TermPtr simp_comp(const TermPtr& a, const TermPtr& b) {
  if (a->op == Op::Zero || b->op == Op::Zero) return zero();
  std::vector<TermPtr> factors;
  flatten_comp(a, factors);
  flatten_comp(b, factors);
  if (factors.empty()) return one();
  std::vector<TermPtr> out;
  size_t i = 0;
  while (i < factors.size()) {
    if (!is_test_factor(factors[i])) {
      out.push_back(factors[i++]);
      continue;
    }
    size_t j = i;
    std::vector<std::pair<std::string, TermPtr>> run;
    while (j < factors.size() && is_test_factor(factors[j])) {
      run.emplace_back(render(factors[j]), factors[j]);
      ++j;
    }
    std::sort(run.begin(), run.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    run.erase(std::unique(run.begin(), run.end(),
                          [](const auto& x, const auto& y) {
                            return x.first == y.first;
                          }),
              run.end());
    for (size_t k = 0; k < run.size(); ++k)
      for (size_t l = k + 1; l < run.size(); ++l) {
        const TermPtr& x = run[k].second;
        const TermPtr& y = run[l].second;
        if (x->op != y->op && equal(x->left, y->left)) return zero();
      }
    for (const auto& [key, f] : run) out.push_back(f);
    i = j;
  }
  if (out.empty()) return one();
  TermPtr acc = out[0];
  for (size_t k = 1; k < out.size(); ++k) acc = comp(acc, out[k]);
  return acc;
}

inline TermPtr simp_star(const TermPtr& a) {
  if (a->op == Op::Zero || a->op == Op::One) return one();
  if (a->op == Op::Star) return a;
  return star(a);
}

inline TermPtr symbol_term(const GuardedNFA& n, int sym) {
  if (!n.is_valuation(sym))
    return var(n.letters[sym - n.num_valuations()]);
  TermPtr acc;
  for (size_t i = 0; i < n.guards.size(); ++i) {
    TermPtr lit = (sym >> i) & 1 ? dom(n.guards[i]) : antidom(n.guards[i]);
    acc = acc ? simp_comp(acc, lit) : lit;
  }
  return acc ? acc : one();
}

}  // namespace detail

/// State elimination: rewrites the automaton into a term over
/// {;, +, *, 0, 1, D, A}; valuation symbols become compositions of D/A tests,
/// letters become variables.  The term's satisfaction relation on pointed
/// trees equals the automaton's acceptance of their guarded path words.
inline TermPtr extract_term(const GuardedNFA& n0) {
  GuardedNFA n = trim(n0);
  if (n.accepting.empty()) return zero();
  const int start = n.num_states;
  const int end = n.num_states + 1;
  std::map<std::pair<int, int>, TermPtr> edges;
  auto add = [&](int i, int j, const TermPtr& t) {
    auto it = edges.find({i, j});
    if (it == edges.end())
      edges[{i, j}] = t;
    else
      it->second = detail::simp_plus(it->second, t);
  };
  for (int q = 0; q < n.num_states; ++q)
    for (const auto& [sym, targets] : n.delta[q])
      for (int r : targets) add(q, r, detail::symbol_term(n, sym));
  for (int q : n.initial) add(start, q, one());
  for (int q : n.accepting) add(q, end, one());
  std::vector<int> remaining(n.num_states);
  for (int q = 0; q < n.num_states; ++q) remaining[q] = q;
  while (!remaining.empty()) {
    // Rip the state with the fewest in*out edge pairs to limit term growth.
    size_t best = 0;
    long best_score = -1;
    for (size_t k = 0; k < remaining.size(); ++k) {
      long ins = 0, outs = 0;
      for (const auto& [pair, t] : edges) {
        if (pair.second == remaining[k] && pair.first != remaining[k]) ++ins;
        if (pair.first == remaining[k] && pair.second != remaining[k]) ++outs;
      }
      long score = ins * outs;
      if (best_score < 0 || score < best_score) {
        best_score = score;
        best = k;
      }
    }
    int victim = remaining[best];
    remaining.erase(remaining.begin() + best);
    TermPtr self;
    std::vector<std::pair<int, TermPtr>> in, out;
    for (auto it = edges.begin(); it != edges.end();) {
      const auto& [pair, t] = *it;
      if (pair.first == victim && pair.second == victim) {
        self = t;
        it = edges.erase(it);
      } else if (pair.second == victim) {
        in.emplace_back(pair.first, t);
        it = edges.erase(it);
      } else if (pair.first == victim) {
        out.emplace_back(pair.second, t);
        it = edges.erase(it);
      } else {
        ++it;
      }
    }
    TermPtr loop = self ? detail::simp_star(self) : one();
    for (const auto& [i, ti] : in)
      for (const auto& [j, tj] : out)
        add(i, j, detail::simp_comp(detail::simp_comp(ti, loop), tj));
  }
  auto it = edges.find({start, end});
  return it == edges.end() ? zero() : it->second;
}

/// Guarded word spelled by the root-to-point path of T: the actual valuation
/// of every guard at each path vertex, interleaved with the path labels.
/// Absent when a path label is not among the automaton's letters.
inline std::optional<std::vector<int>> guarded_path_word(
    const Tree& T, const std::vector<TermPtr>& guards,
    const std::vector<std::string>& letters) {
  TreeStruct ts = tree_to_struct(T);
  for (const TermPtr& g : guards)
    for (const std::string& v : vars_of(g)) ts.structure.ensure_label(v);
  std::vector<EvalRelation> grels;
  grels.reserve(guards.size());
  for (const TermPtr& g : guards) grels.push_back(eval(g, ts.structure));
  auto valuation = [&](int x) {
    int mask = 0;
    for (size_t i = 0; i < guards.size(); ++i) {
      bool any = false;
      for (int y = 0; y < ts.structure.vertex_count; ++y)
        if (grels[i].contains(x, y)) {
          any = true;
          break;
        }
      if (any) mask |= 1 << i;
    }
    return mask;
  };
  const int nv = 1 << guards.size();
  auto letter_symbol = [&](const std::string& l) -> int {
    for (size_t i = 0; i < letters.size(); ++i)
      if (letters[i] == l) return nv + static_cast<int>(i);
    return -1;
  };
  // Walk the path through the flattened structure indices.
  detail::FlatTree f = detail::flatten(T);
  std::vector<int> parent(f.v.size(), -1);
  std::vector<std::string> incoming(f.v.size());
  for (size_t i = 0; i < f.v.size(); ++i)
    for (const auto& [label, c] : f.v[i].kids) {
      parent[c] = static_cast<int>(i);
      incoming[c] = label;
    }
  std::vector<int> path;
  for (int cur = f.point_vertex; cur != -1; cur = parent[cur])
    path.push_back(cur);
  std::reverse(path.begin(), path.end());
  std::vector<int> word;
  word.push_back(valuation(path[0]));
  for (size_t i = 1; i < path.size(); ++i) {
    int sym = letter_symbol(incoming[path[i]]);
    if (sym < 0) return std::nullopt;
    word.push_back(sym);
    word.push_back(valuation(path[i]));
  }
  return word;
}

}  // namespace kad
