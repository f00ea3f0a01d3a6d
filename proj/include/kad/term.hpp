#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kad {

enum class Op { Var, Zero, One, Comp, Union, Star, Dom, Antidom };

struct Term;
using TermPtr = std::shared_ptr<const Term>;

/// Immutable term over the signature {;, +, *, 0, 1, D, A} with lowercase
/// variable names.  Terms are raw syntactic objects: equality means literal
/// equality of syntax trees, no background theory.
struct Term {
  Op op = Op::Zero;
  std::string name;     // Op::Var only
  TermPtr left, right;  // unary operators use `left`
};

namespace detail {
inline TermPtr term_node(Op op, TermPtr l = nullptr, TermPtr r = nullptr,
                         std::string name = {}) {
  auto t = std::make_shared<Term>();
  t->op = op;
  t->left = std::move(l);
  t->right = std::move(r);
  t->name = std::move(name);
  return t;
}
}  // namespace detail

inline TermPtr var(std::string name) {
  return detail::term_node(Op::Var, nullptr, nullptr, std::move(name));
}
inline TermPtr zero() { return detail::term_node(Op::Zero); }
inline TermPtr one() { return detail::term_node(Op::One); }
inline TermPtr comp(TermPtr l, TermPtr r) {
  return detail::term_node(Op::Comp, std::move(l), std::move(r));
}
inline TermPtr plus(TermPtr l, TermPtr r) {
  return detail::term_node(Op::Union, std::move(l), std::move(r));
}
inline TermPtr star(TermPtr body) {
  return detail::term_node(Op::Star, std::move(body));
}
inline TermPtr dom(TermPtr body) {
  return detail::term_node(Op::Dom, std::move(body));
}
inline TermPtr antidom(TermPtr body) {
  return detail::term_node(Op::Antidom, std::move(body));
}

inline bool equal(const TermPtr& a, const TermPtr& b) {
  if (a.get() == b.get()) return true;
  if (!a || !b) return false;
  if (a->op != b->op || a->name != b->name) return false;
  switch (a->op) {
    case Op::Var:
    case Op::Zero:
    case Op::One:
      return true;
    case Op::Star:
    case Op::Dom:
    case Op::Antidom:
      return equal(a->left, b->left);
    case Op::Comp:
    case Op::Union:
      return equal(a->left, b->left) && equal(a->right, b->right);
  }
  return false;
}

/// Signature fragments, ordered by inclusion:
///   CD1           {;, 1, D}
///   StarFree      {;, +, 0, 1, D}
///   Full          {;, +, *, 0, 1, D}
///   WithAntidomain  adds A
enum class Fragment { CD1 = 0, StarFree = 1, Full = 2, WithAntidomain = 3 };

inline const char* to_string(Fragment f) {
  switch (f) {
    case Fragment::CD1: return "cd1";
    case Fragment::StarFree: return "star-free";
    case Fragment::Full: return "full";
    case Fragment::WithAntidomain: return "with-antidomain";
  }
  return "?";
}

/// Smallest fragment containing every operator of `t`.
inline Fragment classify(const TermPtr& t) {
  Fragment f = Fragment::CD1;
  auto bump = [&f](Fragment g) {
    if (static_cast<int>(g) > static_cast<int>(f)) f = g;
  };
  switch (t->op) {
    case Op::Var:
    case Op::One:
      break;
    case Op::Zero:
      bump(Fragment::StarFree);
      break;
    case Op::Comp:
    case Op::Union:
      if (t->op == Op::Union) bump(Fragment::StarFree);
      bump(classify(t->left));
      bump(classify(t->right));
      break;
    case Op::Star:
      bump(Fragment::Full);
      bump(classify(t->left));
      break;
    case Op::Dom:
      bump(classify(t->left));
      break;
    case Op::Antidom:
      bump(Fragment::WithAntidomain);
      bump(classify(t->left));
      break;
  }
  return f;
}

inline bool in_fragment(const TermPtr& t, Fragment f) {
  return static_cast<int>(classify(t)) <= static_cast<int>(f);
}

inline void collect_vars(const TermPtr& t, std::set<std::string>& out) {
  if (t->op == Op::Var) out.insert(t->name);
  if (t->left) collect_vars(t->left, out);
  if (t->right) collect_vars(t->right, out);
}

/// Sorted, duplicate-free variable names of a term.
inline std::vector<std::string> vars_of(const TermPtr& t) {
  std::set<std::string> s;
  collect_vars(t, s);
  return {s.begin(), s.end()};
}

inline int count_operators(const TermPtr& t) {
  switch (t->op) {
    case Op::Var:
    case Op::Zero:
    case Op::One:
      return 0;
    case Op::Star:
    case Op::Dom:
    case Op::Antidom:
      return 1 + count_operators(t->left);
    case Op::Comp:
    case Op::Union:
      return 1 + count_operators(t->left) + count_operators(t->right);
  }
  return 0;
}

inline bool contains_op(const TermPtr& t, Op op) {
  if (t->op == op) return true;
  if (t->left && contains_op(t->left, op)) return true;
  if (t->right && contains_op(t->right, op)) return true;
  return false;
}

struct ParseError : std::runtime_error {
  size_t position;
  ParseError(const std::string& msg, size_t pos)
      : std::runtime_error(msg + " at position " + std::to_string(pos)),
        position(pos) {}
};

struct FragmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Recursive-descent parser for:
//   term := sum;  sum := prod ("+" prod)*;  prod := star (";" star)*;
//   star := atom "*"*;
//   atom := "0" | "1" | ident | "D(" term ")" | "A(" term ")" | "(" term ")"
//   ident := [a-z][a-z0-9_]*            whitespace insignificant
class TermParser {
 public:
  explicit TermParser(std::string_view text) : text_(text) {}

  TermPtr run() {
    TermPtr t = sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return t;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
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

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  TermPtr sum() {
    TermPtr t = prod();
    while (eat('+')) t = plus(t, prod());
    return t;
  }

  TermPtr prod() {
    TermPtr t = starred();
    while (eat(';')) t = comp(t, starred());
    return t;
  }

  TermPtr starred() {
    TermPtr t = atom();
    while (eat('*')) t = star(t);
    return t;
  }

  TermPtr atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '0') {
      ++pos_;
      return zero();
    }
    if (c == '1') {
      ++pos_;
      return one();
    }
    if (c == 'D' || c == 'A') {
      ++pos_;
      if (!eat('(')) fail("expected '(' after test operator");
      TermPtr t = sum();
      if (!eat(')')) fail("unbalanced parentheses");
      return c == 'D' ? dom(t) : antidom(t);
    }
    if (c == '(') {
      ++pos_;
      TermPtr t = sum();
      if (!eat(')')) fail("unbalanced parentheses");
      return t;
    }
    if (c >= 'a' && c <= 'z') {
      size_t start = pos_;
      ++pos_;
      while (pos_ < text_.size()) {
        char d = text_[pos_];
        if ((d >= 'a' && d <= 'z') || (d >= '0' && d <= '9') || d == '_')
          ++pos_;
        else
          break;
      }
      return var(std::string(text_.substr(start, pos_ - start)));
    }
    fail(std::string("unknown operator or symbol '") + c + "'");
  }
};

inline int precedence(Op op) {
  switch (op) {
    case Op::Union: return 1;
    case Op::Comp: return 2;
    case Op::Star: return 3;
    default: return 4;
  }
}

inline void render_into(const TermPtr& t, std::string& out, int min_prec) {
  const int p = precedence(t->op);
  const bool parens = p < min_prec;
  if (parens) out += '(';
  switch (t->op) {
    case Op::Var: out += t->name; break;
    case Op::Zero: out += '0'; break;
    case Op::One: out += '1'; break;
    case Op::Union:
      render_into(t->left, out, 1);
      out += " + ";
      render_into(t->right, out, 2);  // left-associative
      break;
    case Op::Comp:
      render_into(t->left, out, 2);
      out += ';';
      render_into(t->right, out, 3);
      break;
    case Op::Star:
      render_into(t->left, out, 3);
      out += '*';
      break;
    case Op::Dom:
      out += "D(";
      render_into(t->left, out, 0);
      out += ')';
      break;
    case Op::Antidom:
      out += "A(";
      render_into(t->left, out, 0);
      out += ')';
      break;
  }
  if (parens) out += ')';
}

}  // namespace detail

inline TermPtr parse(std::string_view text) {
  return detail::TermParser(text).run();
}

/// Minimal-parentheses rendering; parse(render(t)) == t for all terms.
inline std::string render(const TermPtr& t) {
  std::string out;
  detail::render_into(t, out, 0);
  return out;
}

}  // namespace kad
