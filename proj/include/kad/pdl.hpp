#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kad/automata.hpp"
#include "kad/freealg.hpp"
#include "kad/relstruct.hpp"
#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace kad {

// ---- propositional dynamic logic, variable-free fragment --------------------

struct PdlFormula;
struct PdlProgram;
using PdlFormulaPtr = std::shared_ptr<const PdlFormula>;
using PdlProgramPtr = std::shared_ptr<const PdlProgram>;

enum class ProgKind { Atomic, Test, Comp, Union, Star };
struct PdlProgram {
  ProgKind kind = ProgKind::Atomic;
  std::string label;               // Atomic
  PdlFormulaPtr test;              // Test
  PdlProgramPtr left, right;       // Comp/Union; Star uses left
};

enum class FormKind { Top, Bottom, Not, And, Diamond };
struct PdlFormula {
  FormKind kind = FormKind::Top;
  PdlFormulaPtr left, right;  // Not/And
  PdlProgramPtr prog;         // Diamond
};

inline PdlProgramPtr atomic(std::string label) {
  auto p = std::make_shared<PdlProgram>();
  p->kind = ProgKind::Atomic;
  p->label = std::move(label);
  return p;
}
inline PdlProgramPtr test(PdlFormulaPtr f) {
  auto p = std::make_shared<PdlProgram>();
  p->kind = ProgKind::Test;
  p->test = std::move(f);
  return p;
}
inline PdlProgramPtr pcomp(PdlProgramPtr a, PdlProgramPtr b) {
  auto p = std::make_shared<PdlProgram>();
  p->kind = ProgKind::Comp;
  p->left = std::move(a);
  p->right = std::move(b);
  return p;
}
inline PdlProgramPtr punion(PdlProgramPtr a, PdlProgramPtr b) {
  auto p = std::make_shared<PdlProgram>();
  p->kind = ProgKind::Union;
  p->left = std::move(a);
  p->right = std::move(b);
  return p;
}
inline PdlProgramPtr pstar(PdlProgramPtr a) {
  auto p = std::make_shared<PdlProgram>();
  p->kind = ProgKind::Star;
  p->left = std::move(a);
  return p;
}
inline PdlFormulaPtr top() {
  auto f = std::make_shared<PdlFormula>();
  f->kind = FormKind::Top;
  return f;
}
inline PdlFormulaPtr bottom() {
  auto f = std::make_shared<PdlFormula>();
  f->kind = FormKind::Bottom;
  return f;
}
inline PdlFormulaPtr fnot(PdlFormulaPtr a) {
  auto f = std::make_shared<PdlFormula>();
  f->kind = FormKind::Not;
  f->left = std::move(a);
  return f;
}
inline PdlFormulaPtr fand(PdlFormulaPtr a, PdlFormulaPtr b) {
  auto f = std::make_shared<PdlFormula>();
  f->kind = FormKind::And;
  f->left = std::move(a);
  f->right = std::move(b);
  return f;
}
inline PdlFormulaPtr diamond(PdlProgramPtr p, PdlFormulaPtr a) {
  auto f = std::make_shared<PdlFormula>();
  f->kind = FormKind::Diamond;
  f->prog = std::move(p);
  f->left = std::move(a);
  return f;
}

inline std::string render_program(const PdlProgramPtr& p);

inline std::string render_formula(const PdlFormulaPtr& f) {
  switch (f->kind) {
    case FormKind::Top: return "T";
    case FormKind::Bottom: return "F";
    case FormKind::Not: return "~" + render_formula(f->left);
    case FormKind::And:
      return "(" + render_formula(f->left) + "&" + render_formula(f->right) +
             ")";
    case FormKind::Diamond:
      return "<" + render_program(f->prog) + ">" + render_formula(f->left);
  }
  return "?";
}

inline std::string render_program(const PdlProgramPtr& p) {
  switch (p->kind) {
    case ProgKind::Atomic: return p->label;
    case ProgKind::Test: return render_formula(p->test) + "?";
    case ProgKind::Comp:
      return "(" + render_program(p->left) + ";" + render_program(p->right) +
             ")";
    case ProgKind::Union:
      return "(" + render_program(p->left) + "+" + render_program(p->right) +
             ")";
    case ProgKind::Star: return render_program(p->left) + "*";
  }
  return "?";
}

/// Program translation: variables map to atomic programs, 0 and 1 to failing
/// and vacuous tests, D(t)/A(t) to tests of (non)existence of a t-step.
inline PdlProgramPtr translate_program(const TermPtr& t) {
  switch (t->op) {
    case Op::Var: return atomic(t->name);
    case Op::Comp:
      return pcomp(translate_program(t->left), translate_program(t->right));
    case Op::Union:
      return punion(translate_program(t->left), translate_program(t->right));
    case Op::Star: return pstar(translate_program(t->left));
    case Op::Zero: return test(bottom());
    case Op::One: return test(top());
    case Op::Antidom:
      return test(fnot(diamond(translate_program(t->left), top())));
    case Op::Dom:
      return test(diamond(translate_program(t->left), top()));
  }
  throw std::logic_error("unreachable");
}

/// A term is satisfiable by some pointed structure iff <P(t)>Top is.
inline PdlFormulaPtr translate(const TermPtr& t) {
  return diamond(translate_program(t), top());
}

/// Finite model produced by the satisfiability checker.
struct PdlModel {
  RelStruct structure;
  int witness = 0;  // world satisfying the goal formula
};

namespace detail {

// Fischer-Ladner style closure with a per-formula evaluation rule.  Diamonds
// over compound programs are derived from their decompositions; atomic and
// star diamonds are the free bits of a Hintikka type (star bits additionally
// obey the unfolding constraint and are discharged by fulfillment checks).
class PdlSolver {
 public:
  explicit PdlSolver(const PdlFormulaPtr& goal) {
    goal_id_ = intern(goal);
    if (free_.size() > 22)
      throw std::runtime_error(
          "PDL formula needs " + std::to_string(free_.size()) +
          " free diamond bits; too large for desk-scale type elimination");
    build_types();
    eliminate();
  }

  bool satisfiable() const {
    for (int s : alive_list())
      if (value(s, goal_id_)) return true;
    return false;
  }

  std::optional<PdlModel> model() {
    int g = -1;
    for (int s : alive_list())
      if (value(s, goal_id_)) {
        g = s;
        break;
      }
    if (g < 0) return std::nullopt;
    // Witness-closed submodel: BFS adding diamond witnesses and star
    // fulfillment paths; edges are all allowed pairs among included types.
    std::vector<int> world_of_type(types_.size(), -1);
    std::vector<int> worlds;
    std::queue<int> work;
    auto include = [&](int s) {
      if (world_of_type[s] < 0) {
        world_of_type[s] = static_cast<int>(worlds.size());
        worlds.push_back(s);
        work.push(s);
      }
    };
    include(g);
    while (!work.empty()) {
      int s = work.front();
      work.pop();
      for (const auto& ad : atomic_diamonds_) {
        if (!value(s, ad.id)) continue;
        TypeSet target = alive_with(ad.psi);
        int w = pick_step(s, ad.label_index, target);
        if (w >= 0) include(w);
      }
      for (const auto& sd : star_diamonds_) {
        if (!value(s, sd.id)) continue;
        TypeSet target = alive_with(sd.psi);
        std::vector<int> path;
        if (star_walk(s, sd.prog, target, path))
          for (int w : path) include(w);
      }
    }
    PdlModel out;
    out.structure = RelStruct(static_cast<int>(worlds.size()));
    for (const std::string& l : labels_) out.structure.ensure_label(l);
    for (size_t i = 0; i < worlds.size(); ++i)
      for (size_t j = 0; j < worlds.size(); ++j)
        for (size_t li = 0; li < labels_.size(); ++li)
          if (allowed(worlds[i], static_cast<int>(li), worlds[j]))
            out.structure.add_edge(labels_[li], static_cast<int>(i),
                                   static_cast<int>(j));
    out.witness = world_of_type[g];
    return out;
  }

  int type_count() const { return static_cast<int>(types_.size()); }
  int closure_size() const { return static_cast<int>(entries_.size()); }

 private:
  using TypeSet = std::vector<uint64_t>;  // bitset over types

  enum class Rule { True, False, Not, And, Or, Alias, Free };
  struct Entry {
    PdlFormulaPtr f;
    Rule rule = Rule::True;
    int dep1 = -1, dep2 = -1;
    int free_index = -1;
  };
  struct AtomicDiamond {
    int id;           // closure id of <a>psi
    int label_index;  // into labels_
    int psi;          // closure id
  };
  struct StarDiamond {
    int id;   // closure id of <alpha*>psi
    int psi;  // closure id
    int step;  // closure id of <alpha><alpha*>psi (unfolding constraint)
    PdlProgramPtr prog;  // alpha
  };

  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> ids_;
  std::vector<int> free_;  // closure ids of free bits, in order
  std::vector<AtomicDiamond> atomic_diamonds_;
  std::vector<StarDiamond> star_diamonds_;
  std::vector<std::string> labels_;
  int goal_id_ = -1;

  std::vector<std::vector<uint64_t>> types_;  // per type: bitset over entries
  std::vector<bool> alive_;
  // Per label: the closure ids under <a>. in D_a order, and per type the
  // signature/diamond masks used for the allowed-edge test.
  std::vector<std::vector<int>> da_psis_;
  std::vector<std::vector<uint32_t>> sig_, diam_;  // [label][type]

  int label_index(const std::string& l) {
    for (size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == l) return static_cast<int>(i);
    labels_.push_back(l);
    da_psis_.emplace_back();
    return static_cast<int>(labels_.size()) - 1;
  }

  int intern(const PdlFormulaPtr& f) {
    std::string key = render_formula(f);
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(entries_.size());
    ids_.emplace(std::move(key), id);
    entries_.push_back({f, Rule::True, -1, -1, -1});
    Entry e{f, Rule::True, -1, -1, -1};
    switch (f->kind) {
      case FormKind::Top: e.rule = Rule::True; break;
      case FormKind::Bottom: e.rule = Rule::False; break;
      case FormKind::Not:
        e.rule = Rule::Not;
        e.dep1 = intern(f->left);
        break;
      case FormKind::And:
        e.rule = Rule::And;
        e.dep1 = intern(f->left);
        e.dep2 = intern(f->right);
        break;
      case FormKind::Diamond: {
        const PdlProgramPtr& p = f->prog;
        switch (p->kind) {
          case ProgKind::Atomic: {
            e.rule = Rule::Free;
            e.free_index = static_cast<int>(free_.size());
            free_.push_back(id);
            int li = label_index(p->label);
            int psi = intern(f->left);
            atomic_diamonds_.push_back({id, li, psi});
            da_psis_[li].push_back(psi);
            break;
          }
          case ProgKind::Test:
            e.rule = Rule::And;
            e.dep1 = intern(p->test);
            e.dep2 = intern(f->left);
            break;
          case ProgKind::Comp:
            e.rule = Rule::Alias;
            e.dep1 = intern(diamond(p->left, diamond(p->right, f->left)));
            break;
          case ProgKind::Union:
            e.rule = Rule::Or;
            e.dep1 = intern(diamond(p->left, f->left));
            e.dep2 = intern(diamond(p->right, f->left));
            break;
          case ProgKind::Star: {
            e.rule = Rule::Free;
            e.free_index = static_cast<int>(free_.size());
            free_.push_back(id);
            int psi = intern(f->left);
            int step = intern(diamond(p->left, f));
            star_diamonds_.push_back({id, psi, step, p->left});
            break;
          }
        }
        break;
      }
    }
    entries_[id] = std::move(e);
    return id;
  }

  bool value(int type, int id) const {
    return (types_[type][id / 64] >> (id % 64)) & 1;
  }

  void build_types() {
    const size_t nf = free_.size();
    const size_t words = (entries_.size() + 63) / 64;
    // Topological order over the derivation DAG (dependencies may have
    // larger ids than dependents).
    std::vector<int> order;
    std::vector<int8_t> mark(entries_.size(), 0);
    std::vector<int> stack;
    for (int i = 0; i < static_cast<int>(entries_.size()); ++i) {
      if (mark[i]) continue;
      stack.push_back(i);
      while (!stack.empty()) {
        int id = stack.back();
        if (mark[id] == 2) {
          stack.pop_back();
          continue;
        }
        bool ready = true;
        for (int dep : {entries_[id].dep1, entries_[id].dep2})
          if (dep >= 0 && mark[dep] != 2) {
            stack.push_back(dep);
            ready = false;
          }
        if (ready) {
          if (mark[id] != 2) {
            mark[id] = 2;
            order.push_back(id);
          }
          stack.pop_back();
        } else {
          mark[id] = 1;
        }
      }
    }
    std::vector<char> val(entries_.size());
    for (uint64_t assignment = 0; assignment < (uint64_t{1} << nf);
         ++assignment) {
      for (int id : order) {
        const Entry& e = entries_[id];
        switch (e.rule) {
          case Rule::True: val[id] = 1; break;
          case Rule::False: val[id] = 0; break;
          case Rule::Not: val[id] = !val[e.dep1]; break;
          case Rule::And: val[id] = val[e.dep1] && val[e.dep2]; break;
          case Rule::Or: val[id] = val[e.dep1] || val[e.dep2]; break;
          case Rule::Alias: val[id] = val[e.dep1]; break;
          case Rule::Free:
            val[id] = (assignment >> e.free_index) & 1;
            break;
        }
      }
      // Star unfolding constraint: <a*>psi holds iff psi or <a><a*>psi does.
      bool consistent = true;
      for (const StarDiamond& sd : star_diamonds_)
        if (val[sd.id] != (val[sd.psi] || val[sd.step])) {
          consistent = false;
          break;
        }
      if (!consistent) continue;
      std::vector<uint64_t> bits(words, 0);
      for (size_t id = 0; id < entries_.size(); ++id)
        if (val[id]) bits[id / 64] |= uint64_t{1} << (id % 64);
      types_.push_back(std::move(bits));
    }
    alive_.assign(types_.size(), true);
    // Allowed-edge masks per label.
    sig_.assign(labels_.size(), {});
    diam_.assign(labels_.size(), {});
    for (size_t li = 0; li < labels_.size(); ++li) {
      auto& psis = da_psis_[li];
      std::sort(psis.begin(), psis.end());
      psis.erase(std::unique(psis.begin(), psis.end()), psis.end());
      if (psis.size() > 22)
        throw std::runtime_error("PDL label has too many diamonds for SOS");
      sig_[li].resize(types_.size());
      diam_[li].resize(types_.size());
    }
    for (size_t s = 0; s < types_.size(); ++s) {
      for (size_t li = 0; li < labels_.size(); ++li) {
        uint32_t sig = 0, dia = 0;
        for (size_t b = 0; b < da_psis_[li].size(); ++b)
          if (value(static_cast<int>(s), da_psis_[li][b]))
            sig |= uint32_t{1} << b;
        for (const AtomicDiamond& ad : atomic_diamonds_) {
          if (ad.label_index != static_cast<int>(li)) continue;
          if (value(static_cast<int>(s), ad.id)) {
            size_t b = std::lower_bound(da_psis_[li].begin(),
                                        da_psis_[li].end(), ad.psi) -
                       da_psis_[li].begin();
            dia |= uint32_t{1} << b;
          }
        }
        sig_[li][s] = sig;
        diam_[li][s] = dia;
      }
    }
  }

  bool allowed(int s, int li, int s2) const {
    // Every diamond the successor would force must already hold at s.
    return (sig_[li][s2] & ~diam_[li][s]) == 0;
  }

  std::vector<int> alive_list() const {
    std::vector<int> out;
    for (size_t s = 0; s < types_.size(); ++s)
      if (alive_[s]) out.push_back(static_cast<int>(s));
    return out;
  }

  TypeSet empty_set() const {
    return TypeSet((types_.size() + 63) / 64, 0);
  }
  static void set_bit(TypeSet& t, int i) {
    t[i / 64] |= uint64_t{1} << (i % 64);
  }
  static bool get_bit(const TypeSet& t, int i) {
    return (t[i / 64] >> (i % 64)) & 1;
  }
  static bool any_bit(const TypeSet& t) {
    for (uint64_t w : t)
      if (w) return true;
    return false;
  }
  static bool same(const TypeSet& a, const TypeSet& b) { return a == b; }

  TypeSet alive_with(int id) const {
    TypeSet out = empty_set();
    for (size_t s = 0; s < types_.size(); ++s)
      if (alive_[s] && value(static_cast<int>(s), id))
        set_bit(out, static_cast<int>(s));
    return out;
  }

  // Types with an allowed a-step into Y (sum-over-subsets on signatures).
  TypeSet pre_atomic(int li, const TypeSet& y) const {
    const size_t bits = da_psis_[li].size();
    std::vector<char> f(size_t{1} << bits, 0);
    for (size_t s = 0; s < types_.size(); ++s)
      if (alive_[s] && get_bit(y, static_cast<int>(s))) f[sig_[li][s]] = 1;
    for (size_t b = 0; b < bits; ++b)
      for (uint32_t m = 0; m < (uint32_t{1} << bits); ++m)
        if (m & (uint32_t{1} << b)) f[m] |= f[m ^ (uint32_t{1} << b)];
    TypeSet out = empty_set();
    for (size_t s = 0; s < types_.size(); ++s)
      if (alive_[s] && f[diam_[li][s]]) set_bit(out, static_cast<int>(s));
    return out;
  }

  TypeSet pre(const PdlProgramPtr& p, const TypeSet& y) const {
    switch (p->kind) {
      case ProgKind::Atomic: {
        int li = -1;
        for (size_t i = 0; i < labels_.size(); ++i)
          if (labels_[i] == p->label) li = static_cast<int>(i);
        if (li < 0) {
          // No diamond constrains this label, so any alive pair is an
          // allowed step: the preimage is everything alive if y is occupied.
          TypeSet out = empty_set();
          if (any_bit(y))
            for (size_t s = 0; s < types_.size(); ++s)
              if (alive_[s]) set_bit(out, static_cast<int>(s));
          return out;
        }
        return pre_atomic(li, y);
      }
      case ProgKind::Test: {
        int id = ids_.at(render_formula(p->test));
        TypeSet out = empty_set();
        for (size_t s = 0; s < types_.size(); ++s)
          if (alive_[s] && get_bit(y, static_cast<int>(s)) &&
              value(static_cast<int>(s), id))
            set_bit(out, static_cast<int>(s));
        return out;
      }
      case ProgKind::Comp: return pre(p->left, pre(p->right, y));
      case ProgKind::Union: {
        TypeSet a = pre(p->left, y);
        TypeSet b = pre(p->right, y);
        for (size_t i = 0; i < a.size(); ++i) a[i] |= b[i];
        return a;
      }
      case ProgKind::Star: {
        TypeSet z = y;
        for (;;) {
          TypeSet n = pre(p->left, z);
          for (size_t i = 0; i < n.size(); ++i) n[i] |= z[i];
          if (same(n, z)) return z;
          z = std::move(n);
        }
      }
    }
    return empty_set();
  }

  void eliminate() {
    for (;;) {
      bool changed = false;
      // Witness sets shared across all types this round.
      std::vector<TypeSet> atom_ok;
      atom_ok.reserve(atomic_diamonds_.size());
      for (const AtomicDiamond& ad : atomic_diamonds_)
        atom_ok.push_back(pre_atomic(ad.label_index, alive_with(ad.psi)));
      std::vector<TypeSet> star_ok;
      star_ok.reserve(star_diamonds_.size());
      for (const StarDiamond& sd : star_diamonds_) {
        TypeSet target = alive_with(sd.psi);
        // Zero or more alpha-steps to a psi-type.
        TypeSet z = target;
        for (;;) {
          TypeSet n = pre(sd.prog, z);
          for (size_t i = 0; i < n.size(); ++i) n[i] |= z[i];
          if (same(n, z)) break;
          z = std::move(n);
        }
        star_ok.push_back(std::move(z));
      }
      std::vector<int> kills;
      for (size_t s = 0; s < types_.size(); ++s) {
        if (!alive_[s]) continue;
        bool ok = true;
        for (size_t d = 0; d < atomic_diamonds_.size() && ok; ++d)
          if (value(static_cast<int>(s), atomic_diamonds_[d].id) &&
              !get_bit(atom_ok[d], static_cast<int>(s)))
            ok = false;
        for (size_t d = 0; d < star_diamonds_.size() && ok; ++d)
          if (value(static_cast<int>(s), star_diamonds_[d].id) &&
              !get_bit(star_ok[d], static_cast<int>(s)))
            ok = false;
        if (!ok) kills.push_back(static_cast<int>(s));
      }
      for (int s : kills) {
        alive_[s] = false;
        changed = true;
      }
      if (!changed) return;
    }
  }

  // One allowed a-step from s into the target set; lowest index for
  // determinism.
  int pick_step(int s, int li, const TypeSet& target) const {
    for (size_t s2 = 0; s2 < types_.size(); ++s2)
      if (alive_[s2] && get_bit(target, static_cast<int>(s2)) &&
          allowed(s, li, static_cast<int>(s2)))
        return static_cast<int>(s2);
    return -1;
  }

  // Executes one program step from s ending in `target`; appends every type
  // entered along the way (tests stay put).  Returns false if impossible.
  bool step_program(int s, const PdlProgramPtr& p, const TypeSet& target,
                    std::vector<int>& out) const {
    switch (p->kind) {
      case ProgKind::Atomic: {
        int li = -1;
        for (size_t i = 0; i < labels_.size(); ++i)
          if (labels_[i] == p->label) li = static_cast<int>(i);
        if (li < 0) return false;
        int s2 = pick_step(s, li, target);
        if (s2 < 0) return false;
        out.push_back(s2);
        return true;
      }
      case ProgKind::Test: {
        int id = ids_.at(render_formula(p->test));
        return value(s, id) && get_bit(target, s);
      }
      case ProgKind::Comp: {
        TypeSet mid = pre(p->right, target);
        size_t checkpoint = out.size();
        if (!step_program(s, p->left, mid, out)) return false;
        int cur = out.size() > checkpoint ? out.back() : s;
        if (!step_program(cur, p->right, target, out)) return false;
        return true;
      }
      case ProgKind::Union: {
        if (get_bit(pre(p->left, target), s))
          return step_program(s, p->left, target, out);
        return step_program(s, p->right, target, out);
      }
      case ProgKind::Star:
        return star_walk(s, p->left, target, out);
    }
    return false;
  }

  // Zero or more alpha-steps from s to a target type, via backward
  // reachability layers (layers are cumulative; the minimal layer index of
  // the current type strictly decreases per step).
  bool star_walk(int s, const PdlProgramPtr& alpha, const TypeSet& target,
                 std::vector<int>& out) const {
    std::vector<TypeSet> layers{target};
    while (!get_bit(layers.back(), s)) {
      TypeSet next = pre(alpha, layers.back());
      for (size_t i = 0; i < next.size(); ++i) next[i] |= layers.back()[i];
      if (same(next, layers.back())) return false;  // unreachable
      layers.push_back(std::move(next));
    }
    int cur = s;
    for (;;) {
      size_t k = 0;
      while (!get_bit(layers[k], cur)) ++k;
      if (k == 0) return true;  // cur satisfies the target
      size_t checkpoint = out.size();
      if (!step_program(cur, alpha, layers[k - 1], out)) return false;
      cur = out.size() > checkpoint ? out.back() : cur;
    }
  }
};

}  // namespace detail

/// Type-elimination satisfiability for variable-free PDL.  Builds the
/// closure of the goal, generates every locally consistent Hintikka type,
/// deletes types with unwitnessed diamonds or unfulfillable star
/// eventualities until a fixpoint, and reports whether a surviving type
/// contains the goal.  On success also returns a finite model.
inline std::pair<bool, std::optional<PdlModel>> satisfiable(
    const PdlFormulaPtr& f) {
  detail::PdlSolver solver(f);
  if (!solver.satisfiable()) return {false, std::nullopt};
  return {true, solver.model()};
}

/// Worlds of a finite model satisfying a variable-free PDL formula.
inline std::vector<bool> eval_formula(const PdlFormulaPtr& f,
                                      const RelStruct& m);

inline EvalRelation eval_program(const PdlProgramPtr& p, const RelStruct& m) {
  switch (p->kind) {
    case ProgKind::Atomic: {
      EvalRelation r(m.vertex_count);
      auto it = m.edges.find(p->label);
      if (it != m.edges.end())
        for (auto [x, y] : it->second) r.insert(x, y);
      return r;
    }
    case ProgKind::Test: {
      std::vector<bool> worlds = eval_formula(p->test, m);
      EvalRelation r(m.vertex_count);
      for (int x = 0; x < m.vertex_count; ++x)
        if (worlds[x]) r.insert(x, x);
      return r;
    }
    case ProgKind::Comp:
      return compose(eval_program(p->left, m), eval_program(p->right, m));
    case ProgKind::Union: {
      EvalRelation r = eval_program(p->left, m);
      r |= eval_program(p->right, m);
      return r;
    }
    case ProgKind::Star: return star(eval_program(p->left, m));
  }
  throw std::logic_error("unreachable");
}

inline std::vector<bool> eval_formula(const PdlFormulaPtr& f,
                                      const RelStruct& m) {
  switch (f->kind) {
    case FormKind::Top: return std::vector<bool>(m.vertex_count, true);
    case FormKind::Bottom: return std::vector<bool>(m.vertex_count, false);
    case FormKind::Not: {
      std::vector<bool> v = eval_formula(f->left, m);
      v.flip();
      return v;
    }
    case FormKind::And: {
      std::vector<bool> a = eval_formula(f->left, m);
      std::vector<bool> b = eval_formula(f->right, m);
      for (int i = 0; i < m.vertex_count; ++i) a[i] = a[i] && b[i];
      return a;
    }
    case FormKind::Diamond: {
      EvalRelation r = eval_program(f->prog, m);
      std::vector<bool> sub = eval_formula(f->left, m);
      std::vector<bool> out(m.vertex_count, false);
      for (int x = 0; x < m.vertex_count; ++x)
        for (int y = 0; y < m.vertex_count; ++y)
          if (r.contains(x, y) && sub[y]) {
            out[x] = true;
            break;
          }
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

// ---- full decision pipeline --------------------------------------------------

struct PipelineMetrics {
  std::vector<std::pair<std::string, long>> counters;
  void add(const std::string& name, long v) { counters.emplace_back(name, v); }
};

struct FullVerdict {
  bool valid = false;
  std::optional<Tree> witness;
  PipelineMetrics metrics;
};

/// First finite reduced tree discriminating s and t, in nondecreasing size.
/// Terminates whenever the equation is invalid: the standard interpretations
/// differ, and antichains are the maximal elements of their downsets, so a
/// finite discriminating tree exists.
inline Tree witness_search(const TermPtr& s, const TermPtr& t) {
  std::set<std::string> labels;
  collect_vars(s, labels);
  collect_vars(t, labels);
  TreeEnumerator e(std::vector<std::string>(labels.begin(), labels.end()));
  for (int k = 0;; ++k) {
    for (const Tree& T : e.reduced_with_edges(k))
      if (member_down(T, s) != member_down(T, t)) return T;
  }
}

inline int term_size(const TermPtr& t) {
  int n = 1;
  if (t->left) n += term_size(t->left);
  if (t->right) n += term_size(t->right);
  return n;
}

/// Decides s = t over relational semantics for the full {;, +, *, 0, 1, D}
/// signature: compile both sides to condition automata, take both guarded
/// differences, extract terms, and test the PDL translations for
/// satisfiability.  Valid iff both differences are unsatisfiable; otherwise
/// a verified finite counterexample tree is attached.
inline FullVerdict decide_full(const TermPtr& s, const TermPtr& t) {
  if (static_cast<int>(classify(s)) > static_cast<int>(Fragment::Full) ||
      static_cast<int>(classify(t)) > static_cast<int>(Fragment::Full))
    throw FragmentError("decide_full handles the {;, +, *, 0, 1, D} fragment");
  FullVerdict out;
  ConditionAutomaton as = compile(s);
  ConditionAutomaton at = compile(t);
  out.metrics.add("automaton_states_lhs", as.num_states);
  out.metrics.add("automaton_states_rhs", at.num_states);
  std::vector<TermPtr> guards = condition_atoms(as);
  for (const TermPtr& u : condition_atoms(at)) {
    bool seen = false;
    for (const TermPtr& g : guards)
      if (equal(g, u)) {
        seen = true;
        break;
      }
    if (!seen) guards.push_back(u);
  }
  out.metrics.add("guard_atoms", static_cast<long>(guards.size()));
  // Common letter alphabet.
  std::set<std::string> letters_set;
  collect_vars(s, letters_set);
  collect_vars(t, letters_set);
  std::vector<std::string> letters(letters_set.begin(), letters_set.end());
  as.alphabet = letters;
  at.alphabet = letters;
  GuardedNFA ns = to_guarded(as, guards);
  GuardedNFA nt = to_guarded(at, guards);
  out.metrics.add("guarded_states_lhs", ns.num_states);
  out.metrics.add("guarded_states_rhs", nt.num_states);
  GuardedNFA d1 = difference(ns, nt);
  GuardedNFA d2 = difference(nt, ns);
  out.metrics.add("difference_states_lhs_minus_rhs", d1.num_states);
  out.metrics.add("difference_states_rhs_minus_lhs", d2.num_states);
  TermPtr tau1 = extract_term(d1);
  TermPtr tau2 = extract_term(d2);
  out.metrics.add("extracted_size_lhs_minus_rhs", term_size(tau1));
  out.metrics.add("extracted_size_rhs_minus_lhs", term_size(tau2));
  // Check the smaller side first; one satisfiable difference settles it.
  if (term_size(tau2) < term_size(tau1)) std::swap(tau1, tau2);
  bool invalid = false;
  {
    detail::PdlSolver solver1(translate(tau1));
    out.metrics.add("pdl_closure_first", solver1.closure_size());
    out.metrics.add("pdl_types_first", solver1.type_count());
    invalid = solver1.satisfiable();
  }
  if (!invalid) {
    detail::PdlSolver solver2(translate(tau2));
    out.metrics.add("pdl_closure_second", solver2.closure_size());
    out.metrics.add("pdl_types_second", solver2.type_count());
    invalid = solver2.satisfiable();
  }
  out.valid = !invalid;
  if (invalid) out.witness = witness_search(s, t);
  return out;
}

}  // namespace kad
