#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kad/relstruct.hpp"
#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace kad {

/// Finite set of pairwise <=-incomparable reduced pointed trees, sorted by
/// canonical key.  Represents the downward-closed set of trees below it.
class Antichain {
 public:
  Antichain() = default;

  const std::vector<Tree>& trees() const { return trees_; }
  bool empty() const { return trees_.empty(); }
  size_t size() const { return trees_.size(); }

  bool operator==(const Antichain& o) const { return trees_ == o.trees_; }
  bool operator!=(const Antichain& o) const { return !(*this == o); }

  /// Membership in the represented downset: some element lies above T.
  bool down_contains(const Tree& T) const {
    for (const Tree& S : trees_)
      if (leq(T, S)) return true;
    return false;
  }

  std::string to_text() const {
    std::string out;
    for (const Tree& t : trees_) {
      out += t.key();
      out += '\n';
    }
    return out;
  }

 private:
  friend Antichain maximal(std::vector<Tree> trees);
  std::vector<Tree> trees_;
};

/// Keeps exactly the <=-maximal elements; the downset is unchanged.
inline Antichain maximal(std::vector<Tree> trees) {
  Antichain out;
  if (trees.empty()) return out;
  if (trees.size() == 1) {
    out.trees_ = std::move(trees);
    return out;
  }
  std::sort(trees.begin(), trees.end());
  trees.erase(std::unique(trees.begin(), trees.end()), trees.end());
  std::vector<Tree> kept;
  kept.reserve(trees.size());
  for (size_t i = 0; i < trees.size(); ++i) {
    bool below = false;
    for (size_t j = 0; j < trees.size(); ++j) {
      if (i == j) continue;
      if (leq(trees[i], trees[j])) {
        below = true;  // strictly, by antisymmetry on reduced trees
        break;
      }
    }
    if (!below) kept.push_back(trees[i]);
  }
  out.trees_ = std::move(kept);
  return out;
}

inline Antichain antichain_of(const Tree& t) { return maximal({t}); }

/// Single-tree interpretation of a {;, 1, D}-term.
inline Tree single_interp(const TermPtr& t) {
  switch (t->op) {
    case Op::Var: return edge(t->name);
    case Op::One: return trivial();
    case Op::Comp:
      return concat(single_interp(t->left), single_interp(t->right));
    case Op::Dom: return dom(single_interp(t->left));
    default:
      throw FragmentError("term is outside the {;, 1, D} fragment: " +
                          render(t));
  }
}

/// Inverse of single_interp up to interpretation: builds a {;, 1, D}-term
/// whose single-tree interpretation is T.  The branches of the root become
/// D(a_i ; t_i) factors; the branch holding the point contributes a bare
/// a_n ; t_n tail.
inline TermPtr realize(const Tree& T) {
  std::vector<TermPtr> factors;
  const std::pair<std::string, Tree>* point_branch = nullptr;
  for (const auto& entry : T.children()) {
    if (!T.point_here() && entry.second.has_point()) {
      point_branch = &entry;
      continue;
    }
    TermPtr sub = realize(Tree::make(true, entry.second.children()));
    TermPtr inner = sub->op == Op::One ? var(entry.first)
                                       : comp(var(entry.first), sub);
    factors.push_back(dom(inner));
  }
  if (point_branch) {
    TermPtr sub = realize(point_branch->second);
    factors.push_back(sub->op == Op::One
                          ? var(point_branch->first)
                          : comp(var(point_branch->first), sub));
  }
  if (factors.empty()) return one();
  TermPtr acc = factors[0];
  for (size_t i = 1; i < factors.size(); ++i) acc = comp(acc, factors[i]);
  return acc;
}

namespace detail {

inline Antichain lift_concat(const Antichain& a, const Antichain& b) {
  std::vector<Tree> out;
  out.reserve(a.size() * b.size());
  for (const Tree& x : a.trees())
    for (const Tree& y : b.trees()) out.push_back(concat(x, y));
  return maximal(std::move(out));
}

inline Antichain lift_dom(const Antichain& a) {
  std::vector<Tree> out;
  out.reserve(a.size());
  for (const Tree& x : a.trees()) out.push_back(dom(x));
  return maximal(std::move(out));
}

inline Antichain lift_union(const Antichain& a, const Antichain& b) {
  std::vector<Tree> out = a.trees();
  out.insert(out.end(), b.trees().begin(), b.trees().end());
  return maximal(std::move(out));
}

}  // namespace detail

/// Truncated star: accumulates maximal({1} ∪ L ∪ L² ∪ ...) up to `cap`
/// powers.  `converged` is true iff one extra power added nothing new, which
/// is a sound fixpoint by monotonicity of concatenation under <=.
inline std::pair<Antichain, bool> star_iter(const Antichain& L, int cap) {
  if (cap < 1) throw std::invalid_argument("star cap must be >= 1");
  std::vector<Tree> acc_trees = L.trees();
  acc_trees.push_back(trivial());  // identity contribution: 0* = 1, a* >= 1
  Antichain acc = maximal(std::move(acc_trees));
  Antichain power = maximal(L.trees());
  for (int i = 2; i <= cap + 1; ++i) {
    power = detail::lift_concat(power, L);
    bool contained = true;
    for (const Tree& t : power.trees())
      if (!acc.down_contains(t)) {
        contained = false;
        break;
      }
    if (contained) return {acc, true};
    if (i == cap + 1) break;  // cap powers accumulated, the extra one grew
    acc = detail::lift_union(acc, power);
  }
  return {acc, false};
}

/// Standard tree interpretation of a star-free term ({;, +, 0, 1, D});
/// always a finite antichain.
inline Antichain interp_star_free(const TermPtr& t) {
  switch (t->op) {
    case Op::Var: return antichain_of(edge(t->name));
    case Op::Zero: return Antichain();
    case Op::One: return antichain_of(trivial());
    case Op::Comp:
      return detail::lift_concat(interp_star_free(t->left),
                                 interp_star_free(t->right));
    case Op::Union:
      return detail::lift_union(interp_star_free(t->left),
                                interp_star_free(t->right));
    case Op::Dom: return detail::lift_dom(interp_star_free(t->left));
    case Op::Star:
    case Op::Antidom:
      throw FragmentError("term is outside the star-free fragment: " +
                          render(t));
  }
  throw FragmentError("unreachable");
}

/// Standard interpretation with star truncated at `cap` powers.  The bool is
/// true iff every star subterm reached its fixpoint, making the result exact.
inline std::pair<Antichain, bool> interp_truncated(const TermPtr& t, int cap) {
  switch (t->op) {
    case Op::Var: return {antichain_of(edge(t->name)), true};
    case Op::Zero: return {Antichain(), true};
    case Op::One: return {antichain_of(trivial()), true};
    case Op::Comp: {
      auto [l, lc] = interp_truncated(t->left, cap);
      auto [r, rc] = interp_truncated(t->right, cap);
      return {detail::lift_concat(l, r), lc && rc};
    }
    case Op::Union: {
      auto [l, lc] = interp_truncated(t->left, cap);
      auto [r, rc] = interp_truncated(t->right, cap);
      return {detail::lift_union(l, r), lc && rc};
    }
    case Op::Dom: {
      auto [l, lc] = interp_truncated(t->left, cap);
      return {detail::lift_dom(l), lc};
    }
    case Op::Star: {
      auto [l, lc] = interp_truncated(t->left, cap);
      auto [s, converged] = star_iter(l, cap);
      return {s, lc && converged};
    }
    case Op::Antidom:
      throw FragmentError("antidomain has no tree interpretation: " +
                          render(t));
  }
  throw FragmentError("unreachable");
}

/// Validity over Rel(;, 1, D): s = t holds in all relational models iff the
/// single-tree interpretations coincide.
inline bool decide_cd1(const TermPtr& s, const TermPtr& t) {
  if (classify(s) != Fragment::CD1 || classify(t) != Fragment::CD1)
    throw FragmentError("decide_cd1 requires {;, 1, D}-terms");
  return single_interp(s) == single_interp(t);
}

/// Validity over Rel(;, +, 0, 1, D) via antichain equality.
inline bool decide_star_free(const TermPtr& s, const TermPtr& t) {
  if (static_cast<int>(classify(s)) > static_cast<int>(Fragment::StarFree) ||
      static_cast<int>(classify(t)) > static_cast<int>(Fragment::StarFree))
    throw FragmentError("decide_star_free requires star-free terms");
  return interp_star_free(s) == interp_star_free(t);
}

/// Signature variant {;, D} + optional constants: in that fragment a term
/// containing 0 denotes the empty relation outright, so interpretation is
/// either "zero" or a single tree.
inline std::optional<Tree> interp_cd1_with_zero(const TermPtr& t) {
  switch (t->op) {
    case Op::Zero: return std::nullopt;
    case Op::Var:
    case Op::One: return single_interp(t);
    case Op::Comp: {
      auto l = interp_cd1_with_zero(t->left);
      auto r = interp_cd1_with_zero(t->right);
      if (!l || !r) return std::nullopt;
      return concat(*l, *r);
    }
    case Op::Dom: {
      auto l = interp_cd1_with_zero(t->left);
      if (!l) return std::nullopt;
      return dom(*l);
    }
    default:
      throw FragmentError("term is outside the {;, 0, 1, D} fragment: " +
                          render(t));
  }
}

/// True iff (root, point) of T satisfies t with T viewed as a relational
/// structure; equivalently T lies in the downset of the standard
/// interpretation of t.  Star is evaluated exactly (T is finite).
inline bool member_down(const Tree& T, const TermPtr& t) {
  TreeStruct ts = tree_to_struct(T);
  for (const std::string& v : vars_of(t)) ts.structure.ensure_label(v);
  return satisfies(ts.root, ts.point, t, ts.structure);
}

namespace detail {

/// Greatest common lower bound of two pointed trees, if any: exists iff the
/// root-to-point label words coincide, and is then the overlay identifying
/// the two point paths vertexwise.
inline std::optional<Tree> glue_at_point_raw(const Tree& a, const Tree& b) {
  if (a.point_here() != b.point_here()) return std::nullopt;
  if (a.point_here()) {
    std::vector<std::pair<std::string, Tree>> kids = a.children();
    for (const auto& e : b.children()) kids.push_back(e);
    return Tree::make(true, std::move(kids));
  }
  const std::pair<std::string, Tree>* pa = nullptr;
  const std::pair<std::string, Tree>* pb = nullptr;
  for (const auto& e : a.children())
    if (e.second.has_point()) pa = &e;
  for (const auto& e : b.children())
    if (e.second.has_point()) pb = &e;
  if (pa->first != pb->first) return std::nullopt;
  auto merged_point = glue_at_point_raw(pa->second, pb->second);
  if (!merged_point) return std::nullopt;
  std::vector<std::pair<std::string, Tree>> kids;
  for (const auto& e : a.children())
    if (&e != pa) kids.push_back(e);
  for (const auto& e : b.children())
    if (&e != pb) kids.push_back(e);
  kids.emplace_back(pa->first, *merged_point);
  return Tree::make(false, std::move(kids));
}

/// Memoized reduced glue; the meet law regroups the same element pairs
/// across many antichain pairs.
inline std::optional<Tree> glue_reduced(const Tree& a, const Tree& b) {
  thread_local std::unordered_map<std::pair<const void*, const void*>,
                                  std::optional<Tree>, PtrPairHash>
      memo;
  if (memo.size() > 4'000'000) memo.clear();
  std::pair<const void*, const void*> k{a.id(), b.id()};
  auto it = memo.find(k);
  if (it != memo.end()) return it->second;
  std::optional<Tree> g = glue_at_point_raw(a, b);
  if (g) g = reduce(*g);
  memo.emplace(k, g);
  return g;
}

/// Interned id of a tree's root-to-point label word; trees can only share a
/// lower bound when these match.
inline int point_word_id(const Tree& t) {
  thread_local std::unordered_map<const void*, int> by_node;
  thread_local std::unordered_map<std::string, int> by_word;
  auto it = by_node.find(t.id());
  if (it != by_node.end()) return it->second;
  std::string w;
  for (const std::string& l : point_word(t)) {
    w += l;
    w += '.';
  }
  auto [wit, inserted] = by_word.emplace(std::move(w), by_word.size());
  by_node.emplace(t.id(), wit->second);
  return wit->second;
}

}  // namespace detail

/// Meet of finite antichains: maximal(downset(L1) ∩ downset(L2)), computed
/// by overlaying each pair of elements along their point paths.  Most
/// element pairs have mismatched point words and contribute nothing, so the
/// empty and singleton outcomes avoid the scratch vector.
inline Antichain meet_finite(const Antichain& L1, const Antichain& L2) {
  // Element pairs with different point words have no common lower bound, so
  // compare interned word ids first and only glue the matches.
  int w1_stack[16], w2_stack[16];
  std::vector<int> w1_heap, w2_heap;
  int* w1 = w1_stack;
  int* w2 = w2_stack;
  if (L1.size() > 16) {
    w1_heap.resize(L1.size());
    w1 = w1_heap.data();
  }
  if (L2.size() > 16) {
    w2_heap.resize(L2.size());
    w2 = w2_heap.data();
  }
  for (size_t i = 0; i < L1.size(); ++i)
    w1[i] = detail::point_word_id(L1.trees()[i]);
  for (size_t i = 0; i < L2.size(); ++i)
    w2[i] = detail::point_word_id(L2.trees()[i]);
  std::optional<Tree> single;
  int count = 0;
  for (size_t i = 0; i < L1.size() && count <= 1; ++i)
    for (size_t j = 0; j < L2.size(); ++j) {
      if (w1[i] != w2[j]) continue;
      if (auto g = detail::glue_reduced(L1.trees()[i], L2.trees()[j])) {
        if (++count > 1) break;
        single = *g;
      }
    }
  if (count == 0) return Antichain();
  if (count == 1) return antichain_of(*single);
  // General case: collect every glue (memoized, so the second pass is
  // lookups) and prune to the maximal elements.
  std::vector<Tree> out;
  out.reserve(L1.size() * L2.size());
  for (size_t i = 0; i < L1.size(); ++i)
    for (size_t j = 0; j < L2.size(); ++j)
      if (w1[i] == w2[j])
        if (auto g = detail::glue_reduced(L1.trees()[i], L2.trees()[j]))
          out.push_back(*g);
  return maximal(std::move(out));
}

}  // namespace kad
