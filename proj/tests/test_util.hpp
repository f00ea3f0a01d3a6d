#pragma once

// Shared deterministic generators and fixtures for the test suites.

#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kad/freealg.hpp"
#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace kadtest {

/// Random term with exactly `ops` operator occurrences drawn from the given
/// fragment, over the given variables.
inline kad::TermPtr random_term(std::mt19937& rng, int ops,
                                kad::Fragment frag,
                                const std::vector<std::string>& vars) {
  using kad::Fragment;
  if (ops == 0) {
    // Atoms: variables weighted over constants.
    int choices = static_cast<int>(vars.size()) * 3 +
                  (frag == Fragment::CD1 ? 1 : 2);
    int pick = std::uniform_int_distribution<int>(0, choices - 1)(rng);
    if (pick < static_cast<int>(vars.size()) * 3)
      return kad::var(vars[pick % vars.size()]);
    pick -= static_cast<int>(vars.size()) * 3;
    if (pick == 0) return kad::one();
    return kad::zero();
  }
  enum { Comp, Dom, Union, Star };
  std::vector<int> allowed{Comp, Comp, Dom};  // comp twice as likely
  if (frag != Fragment::CD1) {
    allowed.push_back(Union);
    allowed.push_back(Union);
  }
  if (static_cast<int>(frag) >= static_cast<int>(Fragment::Full))
    allowed.push_back(Star);
  int op = allowed[std::uniform_int_distribution<size_t>(
      0, allowed.size() - 1)(rng)];
  if (op == Dom) return kad::dom(random_term(rng, ops - 1, frag, vars));
  if (op == Star) return kad::star(random_term(rng, ops - 1, frag, vars));
  int left_ops = std::uniform_int_distribution<int>(0, ops - 1)(rng);
  kad::TermPtr l = random_term(rng, left_ops, frag, vars);
  kad::TermPtr r = random_term(rng, ops - 1 - left_ops, frag, vars);
  return op == Comp ? kad::comp(l, r) : kad::plus(l, r);
}

/// Random CD1 term (never contains 0).
inline kad::TermPtr random_cd1(std::mt19937& rng, int ops,
                               const std::vector<std::string>& vars) {
  return random_term(rng, ops, kad::Fragment::CD1, vars);
}

/// Random possibly-unreduced canonical tree: random unpointed shape, then a
/// point placed at a random vertex.
inline kad::Tree random_unpointed(std::mt19937& rng, int budget,
                                  const std::vector<std::string>& alphabet) {
  if (budget == 0) return kad::Tree::leaf(false);
  int nkids = std::uniform_int_distribution<int>(0, std::min(budget, 3))(rng);
  std::vector<std::pair<std::string, kad::Tree>> kids;
  int remaining = budget;
  for (int i = 0; i < nkids && remaining > 0; ++i) {
    int sub = std::uniform_int_distribution<int>(0, remaining - 1)(rng);
    const std::string& label = alphabet[std::uniform_int_distribution<size_t>(
        0, alphabet.size() - 1)(rng)];
    kids.emplace_back(label, random_unpointed(rng, sub, alphabet));
    remaining -= 1 + sub;
  }
  return kad::Tree::make(false, std::move(kids));
}

inline kad::Tree place_point(const kad::Tree& t, int& countdown) {
  if (countdown == 0) {
    --countdown;
    return kad::Tree::make(true, t.children());
  }
  --countdown;
  std::vector<std::pair<std::string, kad::Tree>> kids;
  for (const auto& [label, c] : t.children()) {
    if (countdown >= 0 && countdown < c.vertex_count())
      kids.emplace_back(label, place_point(c, countdown));
    else {
      countdown -= c.vertex_count();
      kids.emplace_back(label, c);
    }
  }
  return kad::Tree::make(t.point_here(), std::move(kids));
}

inline kad::Tree random_tree(std::mt19937& rng, int max_edges,
                             const std::vector<std::string>& alphabet) {
  kad::Tree shape = random_unpointed(rng, max_edges, alphabet);
  int idx = std::uniform_int_distribution<int>(0, shape.vertex_count() - 1)(rng);
  return place_point(shape, idx);
}

inline kad::TermPtr substitute(
    const kad::TermPtr& t,
    const std::map<std::string, kad::TermPtr>& subst) {
  switch (t->op) {
    case kad::Op::Var: {
      auto it = subst.find(t->name);
      return it == subst.end() ? t : it->second;
    }
    case kad::Op::Zero:
    case kad::Op::One:
      return t;
    case kad::Op::Comp:
      return kad::comp(substitute(t->left, subst), substitute(t->right, subst));
    case kad::Op::Union:
      return kad::plus(substitute(t->left, subst), substitute(t->right, subst));
    case kad::Op::Star:
      return kad::star(substitute(t->left, subst));
    case kad::Op::Dom:
      return kad::dom(substitute(t->left, subst));
    case kad::Op::Antidom:
      return kad::antidom(substitute(t->left, subst));
  }
  return t;
}

/// Domain-semiring axioms plus the idempotent-semiring base, as (lhs, rhs)
/// pairs over variables x, y, z.
inline std::vector<std::pair<kad::TermPtr, kad::TermPtr>>
domain_semiring_axioms() {
  auto P = [](const char* s) { return kad::parse(s); };
  return {
      {P("D(x);x"), P("x")},
      {P("D(x;y)"), P("D(x;D(y))")},
      {P("D(x + y)"), P("D(x) + D(y)")},
      {P("D(x) + 1"), P("1")},
      {P("D(0)"), P("0")},
      {P("D(1)"), P("1")},
      {P("x + (y + z)"), P("(x + y) + z")},
      {P("x + y"), P("y + x")},
      {P("x + x"), P("x")},
      {P("x + 0"), P("x")},
      {P("x;(y;z)"), P("(x;y);z")},
      {P("1;x"), P("x")},
      {P("x;1"), P("x")},
      {P("0;x"), P("0")},
      {P("x;0"), P("0")},
      {P("x;(y + z)"), P("x;y + x;z")},
      {P("(x + y);z"), P("x;z + y;z")},
  };
}

}  // namespace kadtest
