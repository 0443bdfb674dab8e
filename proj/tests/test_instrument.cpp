#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fv/analysis.hpp"
#include "fv/instrument.hpp"
#include "fv/parser.hpp"
#include "fv/printer.hpp"

using namespace fv;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Program load(const std::string& name) {
  std::string path = std::string(FV_SOURCE_DIR) + "/benchmarks/" + name;
  return parse_program(slurp(path), name);
}

HeapFreeProgram translate(const Program& p, bool concurrent = false,
                          bool alias_opt = true) {
  SiteMap sm = analyze_sites(p);
  InstOpts o;
  o.concurrent = concurrent;
  o.alias_opt = alias_opt;
  return instrument(p, sm, o);
}

void collect_vars(const ExprP& e, std::set<std::string>& out) {
  if (!e) return;
  if (e->op == ExOp::Var) out.insert(e->var);
  for (auto& a : e->args) collect_vars(a, out);
}

std::set<std::string> uses(const Command& c) {
  std::set<std::string> u;
  collect_vars(c.expr, u);
  for (auto& a : c.args) collect_vars(a, u);
  return u;
}

}  // namespace

TEST_CASE("translated programs are heap free") {
  for (const char* f : {"sll.tl", "sll-data.tl", "list-filter.tl",
                        "dll-ins-del.tl", "tree-ins-del.tl", "two-lists.tl",
                        "conc-push-pop.tl", "conc-transfer.tl"}) {
    INFO("program " << f);
    Program p = load(f);
    HeapFreeProgram hf = translate(p, f[0] == 'c');
    for (auto& v : hf.vars) CHECK(!v.is_ptr);
    for (auto& e : hf.cfa.edges)
      for (auto& c : e.cmds) {
        CHECK(c.kind != CmdKind::Read);
        CHECK(c.kind != CmdKind::Write);
        CHECK(c.kind != CmdKind::Malloc);
        CHECK(c.kind != CmdKind::Free);
        CHECK(c.field.empty());
      }
    REQUIRE(!hf.invs.empty());
    // Inv_T(addr, fields.., free, flow)
    CHECK(hf.invs[0].arity ==
          (int)p.structs[0].fields.size() + 3);
  }
}

TEST_CASE("shadow state is defined before it is read") {
  for (const char* f : {"sll.tl", "list-filter.tl", "dll-ins-del.tl",
                        "tree-ins-del.tl", "conc-push-pop.tl"}) {
    INFO("program " << f);
    Program p = load(f);
    HeapFreeProgram hf = translate(p, f[0] == 'c');

    // shadow and backup slots of source pointer variables
    std::set<std::string> shadows;
    for (auto& v : p.vars) {
      if (!v.is_ptr) continue;
      const StructDecl* sd = p.find_struct(v.type);
      std::vector<std::string> slots;
      for (auto& fd : sd->fields) slots.push_back(fd.name);
      slots.push_back("free");
      slots.push_back("flow");
      for (auto& s : slots) {
        shadows.insert(v.name + "_" + s);
        shadows.insert(v.name + "0_" + s);
      }
    }

    // must-defined forward dataflow over the heap-free automaton
    int n = hf.cfa.nlocs;
    std::vector<std::set<std::string>> defined(n);
    std::vector<bool> init(n, false);
    init[hf.cfa.entry] = true;
    auto oe = hf.cfa.out_edges();
    bool changed = true;
    while (changed) {
      changed = false;
      for (int l = 0; l < n; ++l) {
        if (!init[l]) continue;
        for (int ei : oe[l]) {
          const Edge& e = hf.cfa.edges[ei];
          std::set<std::string> d = defined[l];
          for (auto& c : e.cmds) {
            for (auto& u : uses(c)) {
              INFO("edge " << ei << " command " << print_command(c));
              // v := ite(g, e, v) keeps an unmaterialised peer unchanged;
              // the stale else-value is never read
              if (c.kind == CmdKind::Assign && u == c.var) continue;
              if (shadows.count(u) && c.kind != CmdKind::AssumeInv)
                CHECK(defined[l].count(u) + d.count(u) > 0);
            }
            if (c.kind == CmdKind::Assign || c.kind == CmdKind::Havoc)
              d.insert(c.var);
            if (c.kind == CmdKind::AssumeInv)
              for (auto& a : c.args)
                if (a->op == ExOp::Var) d.insert(a->var);
          }
          bool was = init[e.dst];
          std::set<std::string> merged;
          if (!was) {
            merged = d;
          } else {
            for (auto& v : defined[e.dst])
              if (d.count(v)) merged.insert(v);
          }
          if (!was || merged != defined[e.dst]) {
            defined[e.dst] = merged;
            init[e.dst] = true;
            changed = true;
          }
        }
      }
    }
  }
}

TEST_CASE("pulls reconcile aliases exactly when enabled") {
  Program p = load("sll.tl");
  auto count_reconciles = [](const HeapFreeProgram& hf) {
    int found = 0;
    for (auto& e : hf.cfa.edges)
      for (auto& c : e.cmds) {
        if (c.kind != CmdKind::Assume || !c.expr ||
            c.expr->op != ExOp::Or)
          continue;
        // assume(x != q || <all shadow slots equal>)
        const ExprP& l = c.expr->args[0];
        const ExprP& r = c.expr->args[1];
        if (l->op != ExOp::Ne || l->args[0]->op != ExOp::Var ||
            l->args[1]->op != ExOp::Var)
          continue;
        std::set<std::string> eq_vars;
        collect_vars(r, eq_vars);
        std::string x = l->args[0]->var, q = l->args[1]->var;
        if (eq_vars.count(x + "_free") && eq_vars.count(q + "_free") &&
            eq_vars.count(x + "_flow") && eq_vars.count(q + "_flow"))
          ++found;
      }
    return found;
  };
  CHECK(count_reconciles(translate(p, false, true)) > 0);
  CHECK(count_reconciles(translate(p, false, false)) == 0);
}

TEST_CASE("translation snapshot of the list builder") {
  Program p = load("sll.tl");
  std::string got = print_heap_free(translate(p));
  std::string want =
      slurp(std::string(FV_SOURCE_DIR) + "/tests/golden/sll_instrumented.txt");
  CHECK(got == want);
}

TEST_CASE("lock discipline asserts on unprotected writes") {
  Program p = load("conc-push-pop.tl");
  HeapFreeProgram with = translate(p, true);
  bool has_protect = false;
  for (auto& e : with.cfa.edges)
    for (auto& c : e.cmds)
      if (c.tag == "unprotected-write") has_protect = true;
  // every shared write in the corpus program is under the lock
  CHECK(!has_protect);
}
