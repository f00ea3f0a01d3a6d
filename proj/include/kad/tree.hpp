#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kad {

/// Canonical labelled rooted tree with an optional point marker.
///
/// A tree value is an immutable node: a point flag plus a duplicate-free
/// list of (label, subtree) pairs kept in a fixed canonical order, realizing
/// the recursive set-of-pairs encoding.  At most one vertex in a whole tree
/// carries the point flag; the algebra operates on trees with exactly one.
/// The canonical text encoding of a node doubles as its identity key, so
/// structural equality is a string comparison.
class Tree {
  struct Node {
    bool point = false;           // this vertex is the point
    bool contains_point = false;  // some vertex of the subtree is the point
    int edges = 0;
    std::vector<std::pair<std::string, Tree>> children;
    std::string key;
  };
  std::shared_ptr<const Node> n_;
  explicit Tree(std::shared_ptr<const Node> n) : n_(std::move(n)) {}

  // Per-thread hash-consing: one node per canonical key, kept alive for the
  // thread's lifetime so pointer pairs can key the relation caches below.
  static std::shared_ptr<const Node> intern(std::shared_ptr<Node> n) {
    thread_local std::unordered_map<std::string, std::shared_ptr<const Node>>
        table;
    auto it = table.find(n->key);
    if (it != table.end()) return it->second;
    std::shared_ptr<const Node> owned = std::move(n);
    table.emplace(owned->key, owned);
    return owned;
  }

 public:
  Tree() : Tree(leaf(false)) {}

  static Tree leaf(bool pointed) {
    auto n = std::make_shared<Node>();
    n->point = n->contains_point = pointed;
    n->key = pointed ? "{}!" : "{}";
    return Tree(intern(std::move(n)));
  }

  /// Canonical constructor: sorts children by (label, child key), merges
  /// exact duplicates (set semantics), and rejects a second point.
  static Tree make(bool point_here,
                   std::vector<std::pair<std::string, Tree>> children) {
    auto n = std::make_shared<Node>();
    n->point = point_here;
    std::sort(children.begin(), children.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first < b.first;
                return a.second.key() < b.second.key();
              });
    children.erase(std::unique(children.begin(), children.end(),
                               [](const auto& a, const auto& b) {
                                 return a.first == b.first &&
                                        a.second == b.second;
                               }),
                   children.end());
    int points = point_here ? 1 : 0;
    int edges = 0;
    for (const auto& [label, child] : children) {
      if (child.has_point()) ++points;
      edges += 1 + child.edge_count();
    }
    if (points > 1)
      throw std::invalid_argument("tree would contain more than one point");
    n->contains_point = points == 1;
    n->edges = edges;
    std::string key = "{";
    bool first = true;
    for (const auto& [label, child] : children) {
      if (!first) key += ", ";
      first = false;
      key += label;
      key += ':';
      key += child.key();
    }
    key += '}';
    if (point_here) key += '!';
    n->children = std::move(children);
    n->key = std::move(key);
    return Tree(intern(std::move(n)));
  }

  bool point_here() const { return n_->point; }
  bool has_point() const { return n_->contains_point; }
  const std::vector<std::pair<std::string, Tree>>& children() const {
    return n_->children;
  }
  /// Canonical text encoding; injective on canonical trees.
  const std::string& key() const { return n_->key; }
  int edge_count() const { return n_->edges; }
  int vertex_count() const { return n_->edges + 1; }

  /// Stable identity of the interned node; equal keys from the same thread
  /// share one identity.
  const void* id() const { return n_.get(); }

  bool operator==(const Tree& o) const {
    return n_ == o.n_ || n_->key == o.n_->key;
  }
  bool operator!=(const Tree& o) const { return !(*this == o); }
  bool operator<(const Tree& o) const {
    return n_ != o.n_ && n_->key < o.n_->key;
  }
};

/// The one-vertex pointed tree.
inline Tree trivial() { return Tree::leaf(true); }

/// Two vertices joined by an `a`-labelled edge, point at the child.
inline Tree edge(const std::string& a) {
  return Tree::make(false, {{a, Tree::leaf(true)}});
}

namespace detail {

struct PtrPairHash {
  size_t operator()(const std::pair<const void*, const void*>& p) const {
    uint64_t a = reinterpret_cast<uintptr_t>(p.first);
    uint64_t b = reinterpret_cast<uintptr_t>(p.second);
    uint64_t x = (a ^ (b << 1)) * 0x9E3779B97F4A7C15ull;
    return static_cast<size_t>(x ^ (x >> 29));
  }
};

// The relation caches are keyed on interned node identities and are
// thread-local: a thread's cache stays coherent because every node the
// thread creates is pinned by its intern table, and borrowed trees are
// pinned by the owning value for as long as the borrow lasts.
using LeqMemo =
    std::unordered_map<std::pair<const void*, const void*>, bool, PtrPairHash>;

inline bool leq_rec(const Tree& a, const Tree& b, LeqMemo& memo);

// True iff each child entry of b's root can be matched per the simulation
// recursion, assuming roots already checked.
inline bool leq_children(const Tree& a, const Tree& b, LeqMemo& memo) {
  const auto& ac = a.children();
  for (const auto& [label, bc] : b.children()) {
    bool found = false;
    auto lo = std::lower_bound(
        ac.begin(), ac.end(), label,
        [](const auto& entry, const std::string& l) { return entry.first < l; });
    for (auto it = lo; it != ac.end() && it->first == label; ++it) {
      if (leq_rec(it->second, bc, memo)) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

inline bool leq_rec(const Tree& a, const Tree& b, LeqMemo& memo) {
  if (b.point_here() && !a.point_here()) return false;
  if (a == b) return true;
  if (b.edge_count() == 0) return true;  // roots compatible, nothing to match
  std::pair<const void*, const void*> k{a.id(), b.id()};
  auto it = memo.find(k);
  if (it != memo.end()) return it->second;
  bool r = leq_children(a, b, memo);
  memo.emplace(k, r);
  return r;
}

inline LeqMemo& leq_memo() {
  thread_local LeqMemo memo;
  if (memo.size() > 16'000'000) memo.clear();
  return memo;
}

}  // namespace detail

/// Simulation preorder: t1 <= t2 iff a homomorphism t2 -> t1 exists mapping
/// root to root and, when t2 has a point, point to point.  t1 is the more
/// specific description.
inline bool leq(const Tree& t1, const Tree& t2) {
  return detail::leq_rec(t1, t2, detail::leq_memo());
}

namespace detail {

struct FlatTree {
  // Preorder layout: per vertex the point flag and the child slots.
  struct Vertex {
    bool point = false;
    std::vector<std::pair<std::string, int>> kids;
  };
  std::vector<Vertex> v;
  std::vector<int> depth;
  int point_vertex = -1;

  int add(const Tree& t, int d) {
    int id = static_cast<int>(v.size());
    v.emplace_back();
    depth.push_back(d);
    v[id].point = t.point_here();
    if (t.point_here()) point_vertex = id;
    for (const auto& [label, c] : t.children()) {
      int cid = add(c, d + 1);
      v[id].kids.emplace_back(label, cid);
    }
    return id;
  }
};

inline FlatTree flatten(const Tree& t) {
  FlatTree f;
  f.add(t, 0);
  return f;
}

inline bool hom_assign(const FlatTree& src, const FlatTree& tgt, int sv,
                       int tv, std::vector<int>& map) {
  if (src.v[sv].point && tv != tgt.point_vertex) return false;
  map[sv] = tv;
  for (const auto& [label, sc] : src.v[sv].kids) {
    bool ok = false;
    for (const auto& [tlabel, tc] : tgt.v[tv].kids) {
      if (tlabel != label) continue;
      if (hom_assign(src, tgt, sc, tc, map)) {
        ok = true;
        break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

/// Explicit homomorphism search from `source` into `target` (root to root,
/// point to point).  Returns the vertex map in preorder indexing, or absent.
/// leq(t1, t2) iff hom_search(t2, t1) is present.
inline std::optional<std::vector<int>> hom_search(const Tree& source,
                                                  const Tree& target) {
  if (source.has_point() && !target.has_point()) return std::nullopt;
  detail::FlatTree s = detail::flatten(source);
  detail::FlatTree t = detail::flatten(target);
  std::vector<int> map(s.v.size(), -1);
  if (detail::hom_assign(s, t, 0, 0, map)) return map;
  return std::nullopt;
}

/// Vertex depths in preorder indexing (root = 0).
inline std::vector<int> vertex_depths(const Tree& t) {
  return detail::flatten(t).depth;
}

/// Reduced form: every vertex keeps only the <=-minimal subtrees among its
/// same-label children, recursively.  Selects the canonical member of each
/// <=-equivalence class.
inline Tree reduce(const Tree& t) {
  thread_local std::unordered_map<const void*, Tree> memo;
  if (memo.size() > 4'000'000) memo.clear();
  auto found = memo.find(t.id());
  if (found != memo.end()) return found->second;
  std::vector<std::pair<std::string, Tree>> kids;
  kids.reserve(t.children().size());
  for (const auto& [label, c] : t.children()) kids.emplace_back(label, reduce(c));
  // Set semantics may merge entries that became equal after reduction.
  Tree merged = Tree::make(t.point_here(), std::move(kids));
  const auto& mk = merged.children();
  std::vector<std::pair<std::string, Tree>> kept;
  kept.reserve(mk.size());
  for (size_t i = 0; i < mk.size(); ++i) {
    bool dominated = false;
    for (size_t j = 0; j < mk.size(); ++j) {
      if (i == j || mk[j].first != mk[i].first) continue;
      if (leq(mk[j].second, mk[i].second)) {
        dominated = true;  // a strictly more specific sibling exists
        break;
      }
    }
    if (!dominated) kept.push_back(mk[i]);
  }
  Tree result = kept.size() == mk.size()
                    ? merged
                    : Tree::make(merged.point_here(), std::move(kept));
  memo.emplace(t.id(), result);
  return result;
}

inline bool is_reduced(const Tree& t) {
  thread_local std::unordered_map<const void*, bool> memo;
  auto found = memo.find(t.id());
  if (found != memo.end()) return found->second;
  bool ok = true;
  const auto& kids = t.children();
  for (size_t i = 0; i < kids.size() && ok; ++i) {
    if (!is_reduced(kids[i].second)) ok = false;
    for (size_t j = 0; j < kids.size() && ok; ++j) {
      if (i == j || kids[i].first != kids[j].first) continue;
      if (leq(kids[j].second, kids[i].second)) ok = false;
    }
  }
  memo.emplace(t.id(), ok);
  return ok;
}

namespace detail {

inline Tree graft_at_point(const Tree& t, const Tree& s) {
  if (t.point_here()) {
    // Identify t's point with s's root: child sets merge, the point flag
    // becomes s's root flag (s's point lies inside the grafted copy).
    std::vector<std::pair<std::string, Tree>> kids = t.children();
    for (const auto& e : s.children()) kids.push_back(e);
    return Tree::make(s.point_here(), std::move(kids));
  }
  std::vector<std::pair<std::string, Tree>> kids;
  kids.reserve(t.children().size());
  for (const auto& [label, c] : t.children()) {
    kids.emplace_back(label, c.has_point() ? graft_at_point(c, s) : c);
  }
  return Tree::make(false, std::move(kids));
}

inline Tree strip_point(const Tree& t) {
  if (!t.has_point()) return t;
  std::vector<std::pair<std::string, Tree>> kids;
  kids.reserve(t.children().size());
  for (const auto& [label, c] : t.children())
    kids.emplace_back(label, strip_point(c));
  return Tree::make(false, std::move(kids));
}

}  // namespace detail

/// Pointed tree concatenation: identify t's point with s's root, then reduce.
inline Tree concat(const Tree& t, const Tree& s) {
  if (!t.has_point() || !s.has_point())
    throw std::invalid_argument("concat requires pointed trees");
  return reduce(detail::graft_at_point(t, s));
}

/// Domain: move the point to the root, then reduce.
inline Tree dom(const Tree& t) {
  if (!t.has_point()) throw std::invalid_argument("dom requires a pointed tree");
  if (t.point_here()) return reduce(t);
  return reduce(Tree::make(true, detail::strip_point(t).children()));
}

/// Labels along the unique root-to-point path.
inline std::vector<std::string> point_word(const Tree& t) {
  std::vector<std::string> word;
  const Tree* cur = &t;
  while (!cur->point_here()) {
    bool found = false;
    for (const auto& [label, c] : cur->children()) {
      if (c.has_point()) {
        word.push_back(label);
        cur = &c;
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("tree has no point");
  }
  return word;
}

// ---- text format -----------------------------------------------------------
//
//   node := "{" entries "}" ["!"]
//   entries := (label ":" node) ("," label ":" node)*   (may be empty)
//
// "!" marks the point.  The canonical rendering of a tree is Tree::key().

struct TreeFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) : text_(text) {}

  Tree run() {
    Tree t = node();
    skip_ws();
    if (pos_ != text_.size())
      throw TreeFormatError("trailing input after tree");
    if (!t.has_point())
      throw TreeFormatError("tree must contain exactly one point marker '!'");
    return t;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c)
      throw TreeFormatError(std::string("expected '") + c + "' at position " +
                            std::to_string(pos_));
    ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string label() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size()) {
      char d = text_[pos_];
      if ((d >= 'a' && d <= 'z') || (d >= '0' && d <= '9') || d == '_')
        ++pos_;
      else
        break;
    }
    if (pos_ == start)
      throw TreeFormatError("expected label at position " +
                            std::to_string(start));
    return std::string(text_.substr(start, pos_ - start));
  }

  Tree node() {
    expect('{');
    std::vector<std::pair<std::string, Tree>> kids;
    if (!eat('}')) {
      do {
        std::string l = label();
        expect(':');
        kids.emplace_back(std::move(l), node());
      } while (eat(','));
      expect('}');
    }
    bool pointed = eat('!');
    try {
      return Tree::make(pointed, std::move(kids));
    } catch (const std::invalid_argument& e) {
      throw TreeFormatError(e.what());
    }
  }
};

}  // namespace detail

inline Tree parse_tree(std::string_view text) {
  return detail::TreeParser(text).run();
}

/// DOT export: edges parent->child labelled by symbol, root double-circled,
/// point filled.
inline std::string to_dot(const Tree& t) {
  detail::FlatTree f = detail::flatten(t);
  std::string out = "digraph tree {\n";
  out += "  n0 [shape=doublecircle";
  if (f.point_vertex == 0) out += ", style=filled";
  out += "];\n";
  if (f.point_vertex > 0)
    out += "  n" + std::to_string(f.point_vertex) + " [style=filled];\n";
  for (size_t i = 0; i < f.v.size(); ++i) {
    for (const auto& [label, c] : f.v[i].kids) {
      out += "  n" + std::to_string(i) + " -> n" + std::to_string(c) +
             " [label=\"" + label + "\"];\n";
    }
  }
  out += "}\n";
  return out;
}

// ---- enumeration -----------------------------------------------------------

/// Enumerates canonical trees over a fixed alphabet by edge count, with
/// cached catalogues.  Distinct labelled trees of any fixed size are finite,
/// so each catalogue is a finite sorted list.
class TreeEnumerator {
 public:
  explicit TreeEnumerator(std::vector<std::string> alphabet)
      : alphabet_(std::move(alphabet)) {
    std::sort(alphabet_.begin(), alphabet_.end());
    alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()),
                    alphabet_.end());
  }

  /// All canonical trees with exactly `edges` edges and the given number of
  /// points (0 or 1), sorted by key.
  const std::vector<Tree>& with_edges(int edges, bool pointed) {
    auto& cat = catalog_[pointed ? 1 : 0];
    while (static_cast<int>(cat.size()) <= edges)
      cat.push_back(build(static_cast<int>(cat.size()), pointed));
    return cat[edges];
  }

  /// Reduced pointed trees with exactly `edges` edges, sorted by key.
  const std::vector<Tree>& reduced_with_edges(int edges) {
    while (static_cast<int>(reduced_.size()) <= edges) {
      int k = static_cast<int>(reduced_.size());
      std::vector<Tree> out;
      for (const Tree& t : with_edges(k, true))
        if (is_reduced(t)) out.push_back(t);
      reduced_.push_back(std::move(out));
    }
    return reduced_[edges];
  }

 private:
  struct Item {
    std::string label;
    Tree tree;
    int cost;
    bool pointed;
  };

  std::vector<std::string> alphabet_;
  std::vector<std::vector<Tree>> catalog_[2];
  std::vector<std::vector<Tree>> reduced_;

  std::vector<Tree> build(int edges, bool pointed) {
    std::vector<Tree> out;
    if (edges == 0) {
      out.push_back(Tree::leaf(pointed));
      return out;
    }
    // Child slots cost 1 + subtree edges; gather every candidate in canonical
    // order so ascending index selection yields each child set exactly once.
    std::vector<Item> items;
    for (const std::string& a : alphabet_) {
      for (int sub = 0; sub <= edges - 1; ++sub) {
        for (const Tree& t : with_edges(sub, false))
          items.push_back({a, t, sub + 1, false});
        for (const Tree& t : with_edges(sub, true))
          items.push_back({a, t, sub + 1, true});
      }
    }
    std::sort(items.begin(), items.end(), [](const Item& x, const Item& y) {
      if (x.label != y.label) return x.label < y.label;
      return x.tree.key() < y.tree.key();
    });
    std::vector<std::pair<std::string, Tree>> current;
    // Root pointed: all children unpointed.  Root unpointed and pointed
    // target: exactly one pointed child.
    for (int root_point = pointed ? 1 : 0; root_point >= 0; --root_point) {
      if (root_point == 1 && !pointed) continue;
      int points_needed = pointed && root_point == 0 ? 1 : 0;
      pick(items, 0, edges, points_needed, root_point == 1, current, out);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void pick(const std::vector<Item>& items, size_t from, int budget,
            int points_needed, bool root_point,
            std::vector<std::pair<std::string, Tree>>& current,
            std::vector<Tree>& out) {
    if (budget == 0) {
      if (points_needed == 0 && !current.empty())
        out.push_back(Tree::make(root_point, current));
      return;
    }
    for (size_t i = from; i < items.size(); ++i) {
      const Item& it = items[i];
      if (it.cost > budget) continue;
      if (it.pointed && points_needed == 0) continue;
      current.emplace_back(it.label, it.tree);
      pick(items, i + 1, budget - it.cost, points_needed - (it.pointed ? 1 : 0),
           root_point, current, out);
      current.pop_back();
    }
  }
};

/// Every reduced pointed tree with at most `max_edges` edges, exactly once,
/// in nondecreasing edge count (ties sorted by key).
inline std::vector<Tree> enumerate_reduced(
    const std::vector<std::string>& alphabet, int max_edges) {
  TreeEnumerator e(alphabet);
  std::vector<Tree> out;
  for (int k = 0; k <= max_edges; ++k) {
    const auto& layer = e.reduced_with_edges(k);
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

}  // namespace kad
