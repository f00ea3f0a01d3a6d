#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace kad {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Finite relational structure: a vertex count and one binary relation per
/// label.
struct RelStruct {
  int vertex_count = 0;
  std::map<std::string, std::set<std::pair<int, int>>> edges;

  RelStruct() = default;
  explicit RelStruct(int n) : vertex_count(n) {}

  void ensure_label(const std::string& label) { edges[label]; }

  void add_edge(const std::string& label, int x, int y) {
    if (x < 0 || y < 0 || x >= vertex_count || y >= vertex_count)
      throw std::out_of_range("edge endpoint out of range");
    edges[label].insert({x, y});
  }

  bool has_edge(const std::string& label, int x, int y) const {
    auto it = edges.find(label);
    return it != edges.end() && it->second.count({x, y}) > 0;
  }
};

/// Binary relation on the vertices of a structure, stored as a dense bit
/// matrix (row x holds the successors of x).
class EvalRelation {
 public:
  explicit EvalRelation(int n)
      : n_(n), words_((n + 63) / 64), bits_(static_cast<size_t>(n) * words_, 0) {}

  static EvalRelation identity(int n) {
    EvalRelation r(n);
    for (int x = 0; x < n; ++x) r.insert(x, x);
    return r;
  }

  int size() const { return n_; }

  void insert(int x, int y) {
    bits_[static_cast<size_t>(x) * words_ + y / 64] |= uint64_t{1} << (y % 64);
  }

  bool contains(int x, int y) const {
    return (bits_[static_cast<size_t>(x) * words_ + y / 64] >>
            (y % 64)) & 1;
  }

  EvalRelation& operator|=(const EvalRelation& o) {
    for (size_t i = 0; i < bits_.size(); ++i) bits_[i] |= o.bits_[i];
    return *this;
  }

  bool operator==(const EvalRelation& o) const {
    return n_ == o.n_ && bits_ == o.bits_;
  }

  friend EvalRelation compose(const EvalRelation& r, const EvalRelation& s) {
    EvalRelation out(r.n_);
    for (int x = 0; x < r.n_; ++x) {
      for (int w = 0; w < r.words_; ++w) {
        uint64_t row = r.bits_[static_cast<size_t>(x) * r.words_ + w];
        while (row) {
          int z = w * 64 + __builtin_ctzll(row);
          row &= row - 1;
          for (int w2 = 0; w2 < r.words_; ++w2)
            out.bits_[static_cast<size_t>(x) * r.words_ + w2] |=
                s.bits_[static_cast<size_t>(z) * r.words_ + w2];
        }
      }
    }
    return out;
  }

  /// Reflexive transitive closure by iterated squaring of (identity | r).
  friend EvalRelation star(const EvalRelation& r) {
    EvalRelation m = identity(r.n_);
    m |= r;
    for (;;) {
      EvalRelation next = compose(m, m);
      if (next == m) return m;
      m = next;
    }
  }

  friend EvalRelation domain_diagonal(const EvalRelation& r) {
    EvalRelation out(r.n_);
    for (int x = 0; x < r.n_; ++x)
      for (int w = 0; w < r.words_; ++w)
        if (r.bits_[static_cast<size_t>(x) * r.words_ + w]) {
          out.insert(x, x);
          break;
        }
    return out;
  }

  friend EvalRelation antidomain_diagonal(const EvalRelation& r) {
    EvalRelation out(r.n_);
    for (int x = 0; x < r.n_; ++x) {
      bool any = false;
      for (int w = 0; w < r.words_; ++w)
        if (r.bits_[static_cast<size_t>(x) * r.words_ + w]) {
          any = true;
          break;
        }
      if (!any) out.insert(x, x);
    }
    return out;
  }

  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int x = 0; x < n_; ++x)
      for (int y = 0; y < n_; ++y)
        if (contains(x, y)) out.emplace_back(x, y);
    return out;
  }

 private:
  int n_;
  int words_;
  std::vector<uint64_t> bits_;
};

/// Model-theoretic interpretation of a term in a structure.
inline EvalRelation eval(const TermPtr& t, const RelStruct& m) {
  const int n = m.vertex_count;
  switch (t->op) {
    case Op::Var: {
      auto it = m.edges.find(t->name);
      if (it == m.edges.end())
        throw EvalError("unknown label '" + t->name + "'");
      EvalRelation r(n);
      for (auto [x, y] : it->second) r.insert(x, y);
      return r;
    }
    case Op::Zero:
      return EvalRelation(n);
    case Op::One:
      return EvalRelation::identity(n);
    case Op::Comp:
      return compose(eval(t->left, m), eval(t->right, m));
    case Op::Union: {
      EvalRelation r = eval(t->left, m);
      r |= eval(t->right, m);
      return r;
    }
    case Op::Star:
      return star(eval(t->left, m));
    case Op::Dom:
      return domain_diagonal(eval(t->left, m));
    case Op::Antidom:
      return antidomain_diagonal(eval(t->left, m));
  }
  throw EvalError("unreachable");
}

inline bool satisfies(int x, int y, const TermPtr& t, const RelStruct& m) {
  return eval(t, m).contains(x, y);
}

struct TreeStruct {
  RelStruct structure;
  int root = 0;
  int point = 0;
};

/// View a tree as a relational structure: vertices in preorder, one edge per
/// parent-child pair carrying its label.
inline TreeStruct tree_to_struct(const Tree& t) {
  detail::FlatTree f = detail::flatten(t);
  TreeStruct out;
  out.structure = RelStruct(static_cast<int>(f.v.size()));
  for (size_t i = 0; i < f.v.size(); ++i)
    for (const auto& [label, c] : f.v[i].kids)
      out.structure.add_edge(label, static_cast<int>(i), c);
  out.root = 0;
  out.point = f.point_vertex;
  return out;
}

namespace detail {

// Adjacency view of a structure for homomorphism search.
struct StructView {
  int n;
  std::vector<std::string> labels;
  std::vector<std::vector<std::vector<int>>> succ;  // [label][vertex] -> list

  explicit StructView(const RelStruct& m) : n(m.vertex_count) {
    for (const auto& [label, es] : m.edges) {
      labels.push_back(label);
      auto& per = succ.emplace_back(n);
      for (auto [x, y] : es) per[x].push_back(y);
    }
  }

  // From packed relation masks (bit (x, y) at 8x + y), reusing storage.
  StructView(int nn, std::vector<std::string> ls) : n(nn), labels(std::move(ls)) {
    succ.resize(labels.size());
    for (auto& per : succ) per.assign(n, {});
  }
  void rebind(int nn, const uint64_t* rels) {
    n = nn;
    for (size_t k = 0; k < labels.size(); ++k) {
      auto& per = succ[k];
      per.resize(n);
      for (int x = 0; x < n; ++x) {
        per[x].clear();
        uint64_t row = (rels[k] >> (8 * x)) & 0xFF;
        while (row) {
          per[x].push_back(__builtin_ctzll(row));
          row &= row - 1;
        }
      }
    }
  }

  int label_index(const std::string& l) const {
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == l) return static_cast<int>(i);
    return -1;
  }
};

/// Homomorphism search from a fixed pointed tree into structures, reusable
/// across structures and query pairs so hot loops can amortize the setup.
class TreeHomSearcher {
 public:
  explicit TreeHomSearcher(const Tree& T) : f_(flatten(T)) {
    if (f_.point_vertex < 0)
      throw std::invalid_argument("homomorphism search requires a pointed tree");
    labels_.resize(f_.v.size());
    std::vector<int> parent(f_.v.size(), -1);
    for (size_t i = 0; i < f_.v.size(); ++i)
      for (const auto& [label, c] : f_.v[i].kids) {
        labels_[c] = label;
        parent[c] = static_cast<int>(i);
      }
    for (int cur = f_.point_vertex; cur != -1; cur = parent[cur])
      path_.push_back(cur);
    std::reverse(path_.begin(), path_.end());
  }

  /// Binds a structure; resolves label indices and resets the memo table.
  void bind(const StructView& sv) {
    sv_ = &sv;
    vertex_label_.assign(f_.v.size(), -1);
    for (size_t i = 1; i < f_.v.size(); ++i)
      vertex_label_[i] = sv.label_index(labels_[i]);
    memo_.assign(f_.v.size() * static_cast<size_t>(sv.n), -1);
  }

  /// Root maps to x, point maps to y.
  bool hom(int x, int y) const {
    if (x < 0 || y < 0 || x >= sv_->n || y >= sv_->n) return false;
    return point_path(0, x, y);
  }

 private:
  FlatTree f_;
  std::vector<std::string> labels_;  // incoming edge label per vertex
  std::vector<int> path_;            // root-to-point preorder indices
  const StructView* sv_ = nullptr;
  std::vector<int> vertex_label_;
  mutable std::vector<int8_t> memo_;

  // Embedding of the unpointed subtree at tv starting from structure vertex
  // v; memoized per bound structure.
  bool embeds(int tv, int v) const {
    int8_t& slot = memo_[static_cast<size_t>(tv) * sv_->n + v];
    if (slot != -1) return slot != 0;
    bool ok = true;
    for (const auto& [label, child] : f_.v[tv].kids) {
      int li = vertex_label_[child];
      bool found = false;
      if (li >= 0) {
        for (int u : sv_->succ[li][v])
          if (embeds(child, u)) {
            found = true;
            break;
          }
      }
      if (!found) {
        ok = false;
        break;
      }
    }
    slot = ok ? 1 : 0;
    return ok;
  }

  // Walk the root-to-point path: off-path children must embed, the point
  // must land on y.
  bool point_path(size_t idx, int v, int y) const {
    int tv = path_[idx];
    for (const auto& [label, child] : f_.v[tv].kids) {
      if (idx + 1 < path_.size() && child == path_[idx + 1]) continue;
      int li = vertex_label_[child];
      bool found = false;
      if (li >= 0) {
        for (int u : sv_->succ[li][v])
          if (embeds(child, u)) {
            found = true;
            break;
          }
      }
      if (!found) return false;
    }
    if (idx + 1 == path_.size()) return v == y;
    int next = path_[idx + 1];
    int li = vertex_label_[next];
    if (li < 0) return false;
    for (int u : sv_->succ[li][v])
      if (point_path(idx + 1, u, y)) return true;
    return false;
  }
};

}  // namespace detail

/// True iff a homomorphism from the pointed tree T into m exists sending the
/// root to x and the point to y.
inline bool hom_into(const Tree& T, const RelStruct& m, int x, int y) {
  detail::TreeHomSearcher searcher(T);
  detail::StructView sv(m);
  searcher.bind(sv);
  return searcher.hom(x, y);
}

struct Refutation {
  RelStruct structure;
  int x = 0;
  int y = 0;
};

inline std::string to_text(const RelStruct& m) {
  std::string out = "vertices " + std::to_string(m.vertex_count) + "\n";
  for (const auto& [label, es] : m.edges)
    for (auto [x, y] : es)
      out += label + ": " + std::to_string(x) + " " + std::to_string(y) + "\n";
  return out;
}

inline RelStruct parse_struct(std::string_view text);

namespace detail {

// Packed evaluation for structures with at most 8 vertices: a relation is a
// single word with bit (x, y) at position 8*x + y.
struct PackedTerm {
  struct Ins {
    Op op;
    int label;  // Op::Var only
  };
  std::vector<Ins> code;  // postorder
  std::vector<std::string> labels;
};

inline void pack_term_rec(const TermPtr& t, PackedTerm& out) {
  switch (t->op) {
    case Op::Var: {
      int idx = -1;
      for (size_t i = 0; i < out.labels.size(); ++i)
        if (out.labels[i] == t->name) idx = static_cast<int>(i);
      if (idx < 0)
        throw EvalError("unknown label '" + t->name + "'");
      out.code.push_back({Op::Var, idx});
      return;
    }
    case Op::Zero:
    case Op::One:
      out.code.push_back({t->op, 0});
      return;
    case Op::Comp:
    case Op::Union:
      pack_term_rec(t->left, out);
      pack_term_rec(t->right, out);
      out.code.push_back({t->op, 0});
      return;
    case Op::Star:
    case Op::Dom:
    case Op::Antidom:
      pack_term_rec(t->left, out);
      out.code.push_back({t->op, 0});
      return;
  }
}

inline PackedTerm pack_term(const TermPtr& t,
                            const std::vector<std::string>& labels) {
  PackedTerm out;
  out.labels = labels;
  pack_term_rec(t, out);
  return out;
}

inline uint64_t packed_identity(int n) {
  uint64_t r = 0;
  for (int x = 0; x < n; ++x) r |= uint64_t{1} << (8 * x + x);
  return r;
}

inline uint64_t packed_compose(uint64_t r, uint64_t s, int n) {
  uint64_t out = 0;
  for (int x = 0; x < n; ++x) {
    uint64_t row = (r >> (8 * x)) & 0xFF;
    uint64_t orow = 0;
    while (row) {
      int z = __builtin_ctzll(row);
      row &= row - 1;
      orow |= (s >> (8 * z)) & 0xFF;
    }
    out |= orow << (8 * x);
  }
  return out;
}

inline uint64_t packed_star(uint64_t r, int n) {
  uint64_t m = packed_identity(n) | r;
  for (;;) {
    uint64_t next = packed_compose(m, m, n);
    if (next == m) return m;
    m = next;
  }
}

inline uint64_t packed_dom(uint64_t r, int n) {
  uint64_t out = 0;
  for (int x = 0; x < n; ++x)
    if ((r >> (8 * x)) & 0xFF) out |= uint64_t{1} << (8 * x + x);
  return out;
}

inline uint64_t packed_antidom(uint64_t r, int n) {
  uint64_t out = 0;
  for (int x = 0; x < n; ++x)
    if (!((r >> (8 * x)) & 0xFF)) out |= uint64_t{1} << (8 * x + x);
  return out;
}

inline uint64_t eval_packed(const PackedTerm& t, const uint64_t* rels, int n) {
  uint64_t stack[64];
  int sp = 0;
  for (const auto& ins : t.code) {
    switch (ins.op) {
      case Op::Var: stack[sp++] = rels[ins.label]; break;
      case Op::Zero: stack[sp++] = 0; break;
      case Op::One: stack[sp++] = packed_identity(n); break;
      case Op::Comp:
        --sp;
        stack[sp - 1] = packed_compose(stack[sp - 1], stack[sp], n);
        break;
      case Op::Union:
        --sp;
        stack[sp - 1] |= stack[sp];
        break;
      case Op::Star: stack[sp - 1] = packed_star(stack[sp - 1], n); break;
      case Op::Dom: stack[sp - 1] = packed_dom(stack[sp - 1], n); break;
      case Op::Antidom:
        stack[sp - 1] = packed_antidom(stack[sp - 1], n);
        break;
    }
  }
  return stack[0];
}

}  // namespace detail

/// Exhaustive countermodel search: scans every labelled digraph with up to
/// `max_vertices` vertices (labels = variables of s and t) in a fixed order
/// and returns the first structure and pair on which s and t disagree.
/// Absence does not certify validity.
///
/// Order: by vertex count, then by an ascending edge-bitmap counter whose low
/// bits hold the first label's row-major edge matrix.
inline std::optional<Refutation> refute(const TermPtr& s, const TermPtr& t,
                                        int max_vertices) {
  if (max_vertices < 1 || max_vertices > 5)
    throw std::invalid_argument("refute supports 1..5 vertices");
  std::set<std::string> labels_set;
  collect_vars(s, labels_set);
  collect_vars(t, labels_set);
  std::vector<std::string> labels(labels_set.begin(), labels_set.end());
  const int nl = static_cast<int>(labels.size());
  detail::PackedTerm ps = detail::pack_term(s, labels);
  detail::PackedTerm pt = detail::pack_term(t, labels);
  std::vector<uint64_t> rels(std::max(nl, 1), 0);
  for (int n = 1; n <= max_vertices; ++n) {
    const int bits_per_label = n * n;
    const int total_bits = nl * bits_per_label;
    if (total_bits >= 60)
      throw std::invalid_argument("refute search space too large");
    const uint64_t limit = uint64_t{1} << total_bits;
    for (uint64_t c = 0; c < limit; ++c) {
      for (int k = 0; k < nl; ++k) {
        uint64_t bitmap = (c >> (k * bits_per_label)) &
                          ((uint64_t{1} << bits_per_label) - 1);
        uint64_t rel = 0;
        while (bitmap) {
          int b = __builtin_ctzll(bitmap);
          bitmap &= bitmap - 1;
          rel |= uint64_t{1} << (8 * (b / n) + (b % n));
        }
        rels[k] = rel;
      }
      uint64_t vs = detail::eval_packed(ps, rels.data(), n);
      uint64_t vt = detail::eval_packed(pt, rels.data(), n);
      if (vs != vt) {
        Refutation out;
        out.structure = RelStruct(n);
        for (int k = 0; k < nl; ++k) {
          out.structure.ensure_label(labels[k]);
          for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y)
              if ((rels[k] >> (8 * x + y)) & 1)
                out.structure.add_edge(labels[k], x, y);
        }
        uint64_t diff = vs ^ vt;
        // First differing pair in row-major order.
        bool found = false;
        for (int x = 0; x < n && !found; ++x)
          for (int y = 0; y < n && !found; ++y)
            if ((diff >> (8 * x + y)) & 1) {
              out.x = x;
              out.y = y;
              found = true;
            }
        return out;
      }
    }
  }
  return std::nullopt;
}

/// Parses the structure text format: first line "vertices N", then one line
/// "label: x y" per edge.
inline RelStruct parse_struct(std::string_view text) {
  RelStruct m;
  size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= text.size()) return std::nullopt;
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };
  auto first = next_line();
  if (!first || first->substr(0, 9) != "vertices ")
    throw EvalError("structure text must start with 'vertices N'");
  m.vertex_count = std::stoi(std::string(first->substr(9)));
  while (auto line = next_line()) {
    if (line->empty()) continue;
    size_t colon = line->find(':');
    if (colon == std::string_view::npos)
      throw EvalError("bad edge line: " + std::string(*line));
    std::string label(line->substr(0, colon));
    std::string rest(line->substr(colon + 1));
    size_t sp = rest.find_first_not_of(' ');
    size_t sp2 = rest.find(' ', sp);
    int x = std::stoi(rest.substr(sp, sp2 - sp));
    int y = std::stoi(rest.substr(sp2 + 1));
    m.add_edge(label, x, y);
  }
  return m;
}

}  // namespace kad
