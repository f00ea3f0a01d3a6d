// Command-line front end: decide equational validity, compute tree normal
// forms, meets, memberships, brute-force refutations, and DOT renderings.
//
// Exit codes: 0 = valid/true/no-witness, 1 = invalid/false/witness-found,
// 2 = usage or input error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "kad/automata.hpp"
#include "kad/freealg.hpp"
#include "kad/pdl.hpp"
#include "kad/relstruct.hpp"
#include "kad/term.hpp"
#include "kad/tree.hpp"

namespace {

kad::Tree tree_argument(const std::string& arg) {
  if (!arg.empty() && arg[0] == '{') return kad::parse_tree(arg);
  if (arg == "-") {
    std::stringstream buf;
    buf << std::cin.rdbuf();
    std::string text = buf.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
      text.pop_back();
    return kad::parse_tree(text);
  }
  std::ifstream in(arg);
  if (!in) throw std::runtime_error("cannot open tree file: " + arg);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
    text.pop_back();
  return kad::parse_tree(text);
}

int run_decide(const std::string& s_text, const std::string& t_text,
               const std::string& fragment, bool want_witness, bool metrics) {
  kad::TermPtr s = kad::parse(s_text);
  kad::TermPtr t = kad::parse(t_text);
  kad::Fragment fs = kad::classify(s);
  kad::Fragment ft = kad::classify(t);
  kad::Fragment joint = static_cast<int>(fs) > static_cast<int>(ft) ? fs : ft;
  std::string route = fragment;
  if (route == "auto") {
    switch (joint) {
      case kad::Fragment::CD1: route = "cd1"; break;
      case kad::Fragment::StarFree: route = "star-free"; break;
      case kad::Fragment::Full: route = "full"; break;
      case kad::Fragment::WithAntidomain:
        throw kad::FragmentError(
            "antidomain terms are not decided (A is internal to the pipeline)");
    }
  }
  bool valid = false;
  kad::PipelineMetrics pipeline;
  auto t0 = std::chrono::steady_clock::now();
  if (route == "cd1") {
    valid = kad::decide_cd1(s, t);
  } else if (route == "star-free") {
    valid = kad::decide_star_free(s, t);
  } else if (route == "full") {
    kad::FullVerdict v = kad::decide_full(s, t);
    valid = v.valid;
    pipeline = v.metrics;
  } else {
    throw std::runtime_error("unknown fragment: " + route);
  }
  auto ms = std::chrono::duration_cast<std::chrono::microseconds>(
                std::chrono::steady_clock::now() - t0)
                .count() /
            1000.0;
  if (metrics) {
    for (const auto& [name, value] : pipeline.counters)
      std::cerr << "metric " << name << " " << value << "\n";
    std::cerr << "metric wall_ms " << ms << "\n";
  }
  if (valid) {
    std::cout << "valid\n";
    return 0;
  }
  std::cout << "invalid\n";
  if (want_witness) std::cout << kad::witness_search(s, t).key() << "\n";
  return 1;
}

int run_normalize(const std::string& t_text, int cap) {
  kad::TermPtr t = kad::parse(t_text);
  kad::Fragment f = kad::classify(t);
  kad::Antichain result;
  if (f == kad::Fragment::WithAntidomain)
    throw kad::FragmentError("antidomain terms have no tree normal form");
  if (f == kad::Fragment::Full) {
    auto [a, converged] = kad::interp_truncated(t, cap);
    result = a;
    if (!converged)
      std::cerr << "note: star truncated after " << cap
                << " powers without convergence\n";
  } else {
    result = kad::interp_star_free(t);
  }
  std::cout << result.to_text();
  return 0;
}

int run_meet(const std::string& s_text, const std::string& t_text, int cap) {
  kad::TermPtr s = kad::parse(s_text);
  kad::TermPtr t = kad::parse(t_text);
  auto finite_antichain = [cap](const kad::TermPtr& u) {
    if (kad::classify(u) == kad::Fragment::WithAntidomain)
      throw kad::FragmentError("antidomain terms have no tree normal form");
    if (kad::classify(u) == kad::Fragment::Full) {
      auto [a, converged] = kad::interp_truncated(u, cap);
      if (!converged)
        throw std::runtime_error(
            "star did not converge to a finite antichain; meet undefined at "
            "this cap");
      return a;
    }
    return kad::interp_star_free(u);
  };
  kad::Antichain result = kad::meet_finite(finite_antichain(s),
                                           finite_antichain(t));
  std::cout << result.to_text();
  return 0;
}

int run_member(const std::string& tree_arg, const std::string& t_text) {
  kad::Tree T = tree_argument(tree_arg);
  kad::TermPtr t = kad::parse(t_text);
  if (kad::classify(t) == kad::Fragment::WithAntidomain)
    throw kad::FragmentError("membership is defined for the D fragment");
  return kad::member_down(T, t) ? 0 : 1;
}

int run_refute(const std::string& s_text, const std::string& t_text,
               int max_n) {
  kad::TermPtr s = kad::parse(s_text);
  kad::TermPtr t = kad::parse(t_text);
  auto witness = kad::refute(s, t, max_n);
  if (!witness) return 0;
  std::cout << kad::to_text(witness->structure);
  std::cout << "pair: " << witness->x << " " << witness->y << "\n";
  return 1;
}

int run_dot(const std::string& arg) {
  if (!arg.empty() && arg[0] == '{') {
    std::cout << kad::to_dot(kad::parse_tree(arg));
    return 0;
  }
  kad::TermPtr t = kad::parse(arg);
  if (static_cast<int>(kad::classify(t)) >
      static_cast<int>(kad::Fragment::StarFree))
    throw kad::FragmentError("dot requires a star-free term or a tree literal");
  kad::Antichain a = kad::interp_star_free(t);
  if (a.size() != 1)
    throw std::runtime_error("term denotes an antichain of " +
                             std::to_string(a.size()) +
                             " trees; pass a single tree");
  std::cout << kad::to_dot(a.trees()[0]);
  return 0;
}

int run_selftest() {
  int failures = 0;
  auto check = [&failures](const std::string& name, bool ok) {
    std::cout << (ok ? "ok " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };

  std::vector<kad::Tree> trees = kad::enumerate_reduced({"a", "b"}, 3);
  bool order_ok = true;
  for (const kad::Tree& x : trees) order_ok = order_ok && kad::leq(x, x);
  for (size_t i = 0; i < trees.size() && order_ok; ++i)
    for (size_t j = 0; j < trees.size() && order_ok; ++j)
      if (i != j && kad::leq(trees[i], trees[j]) &&
          kad::leq(trees[j], trees[i]))
        order_ok = false;
  check("simulation order reflexive and antisymmetric", order_ok);

  bool roundtrip_ok = true;
  for (const kad::Tree& x : trees)
    roundtrip_ok = roundtrip_ok && kad::single_interp(kad::realize(x)) == x;
  check("realize round trip", roundtrip_ok);

  check("domain law D(x);x = x",
        kad::decide_star_free(kad::parse("D(a;b);a;b"), kad::parse("a;b")));
  check("domain distributes over +",
        kad::decide_star_free(kad::parse("D(a+b)"),
                              kad::parse("D(a)+D(b)")));
  check("refuter finds a;b != b;a",
        kad::refute(kad::parse("a;b"), kad::parse("b;a"), 3).has_value());
  check("star unfolding valid",
        kad::decide_full(kad::parse("a*"), kad::parse("1 + a;a*")).valid);
  check("pdl: <T?>T satisfiable",
        kad::satisfiable(kad::translate(kad::parse("1"))).first);
  check("pdl: <F?>T unsatisfiable",
        !kad::satisfiable(kad::translate(kad::parse("0"))).first);
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equational reasoning for Kleene algebra with domain over "
               "relational semantics"};
  app.require_subcommand(1);

  std::string s_text, t_text, fragment = "auto", tree_arg, dot_arg;
  bool want_witness = false, metrics = false;
  int cap = 16, max_n = 3;

  CLI::App* decide = app.add_subcommand("decide", "decide validity of s = t");
  decide->add_option("s", s_text, "left term")->required();
  decide->add_option("t", t_text, "right term")->required();
  decide->add_option("--fragment", fragment,
                     "auto|cd1|star-free|full (default auto)");
  decide->add_flag("--witness", want_witness,
                   "print a discriminating tree when invalid");
  decide->add_flag("--metrics", metrics, "print pipeline metrics to stderr");

  CLI::App* normalize =
      app.add_subcommand("normalize", "print the tree normal form");
  normalize->add_option("t", t_text, "term")->required();
  normalize->add_option("--cap", cap, "star truncation bound (default 16)");

  CLI::App* meet = app.add_subcommand("meet", "meet of two normal forms");
  meet->add_option("s", s_text, "left term")->required();
  meet->add_option("t", t_text, "right term")->required();
  meet->add_option("--cap", cap, "star truncation bound (default 16)");

  CLI::App* member =
      app.add_subcommand("member", "does the tree satisfy the term?");
  member->add_option("tree", tree_arg, "tree literal, file, or '-'")
      ->required();
  member->add_option("t", t_text, "term")->required();

  CLI::App* refute = app.add_subcommand(
      "refute", "search small structures for a countermodel");
  refute->add_option("s", s_text, "left term")->required();
  refute->add_option("t", t_text, "right term")->required();
  refute->add_option("--max-n", max_n, "max structure size (default 3)");

  CLI::App* dotcmd = app.add_subcommand("dot", "DOT rendering of a tree");
  dotcmd->add_option("arg", dot_arg, "term or tree literal")->required();

  app.add_subcommand("selftest", "run the embedded invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (decide->parsed())
      return run_decide(s_text, t_text, fragment, want_witness, metrics);
    if (normalize->parsed()) return run_normalize(t_text, cap);
    if (meet->parsed()) return run_meet(s_text, t_text, cap);
    if (member->parsed()) return run_member(tree_arg, t_text);
    if (refute->parsed()) return run_refute(s_text, t_text, max_n);
    if (dotcmd->parsed()) return run_dot(dot_arg);
    return run_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
