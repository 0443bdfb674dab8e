#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/stat.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fv/analysis.hpp"
#include "fv/chc.hpp"
#include "fv/instrument.hpp"
#include "fv/parser.hpp"
#include "fv/table.hpp"

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

HeapFreeProgram translate(const Program& p, bool concurrent = false) {
  SiteMap sm = analyze_sites(p);
  InstOpts o;
  o.concurrent = concurrent;
  return instrument(p, sm, o);
}

std::string write_script(const std::string& name, const std::string& body) {
  std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << "#!/bin/sh\n" << body;
  out.close();
  chmod(path.c_str(), 0755);
  return path;
}

// tiny hand-built heap-free programs for the explicit checker
HeapFreeProgram tiny(std::vector<Command> cmds,
                     std::vector<std::string> vars = {"a", "b"}) {
  HeapFreeProgram p;
  for (auto& v : vars) p.vars.push_back({v, false, "", {}});
  p.cfa.entry = 0;
  p.cfa.exit = 1;
  p.cfa.nlocs = 2;
  Edge e;
  e.src = 0;
  e.dst = 1;
  e.cmds = std::move(cmds);
  p.cfa.edges.push_back(e);
  return p;
}

Command assign(const std::string& v, ExprP e) {
  Command c;
  c.kind = CmdKind::Assign;
  c.var = v;
  c.expr = std::move(e);
  return c;
}

Command assert_(ExprP e) {
  Command c;
  c.kind = CmdKind::Assert;
  c.expr = std::move(e);
  return c;
}

Command havoc(const std::string& v) {
  Command c;
  c.kind = CmdKind::Havoc;
  c.var = v;
  return c;
}

ExprP V(const std::string& n) { return Expr::mkvar(n); }
ExprP L(long long v) { return Expr::lit(v); }

}  // namespace

TEST_CASE("horn encoding is well formed") {
  for (const char* f : {"sll.tl", "dll-ins-del.tl", "conc-push-pop.tl"}) {
    INFO("program " << f);
    Program p = load(f);
    HeapFreeProgram hf = translate(p, f[0] == 'c');
    std::string smt = encode_chc(hf, f);
    CHECK(smt.find("(set-logic HORN)") != std::string::npos);
    CHECK(smt.find("(declare-fun Inv_") != std::string::npos);
    CHECK(smt.find("(check-sat)") != std::string::npos);
    CHECK(smt.find("forall") != std::string::npos);
    int depth = 0, min_depth = 0;
    for (char c : smt) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (depth < min_depth) min_depth = depth;
    }
    CHECK(depth == 0);
    CHECK(min_depth == 0);
    // one location predicate per reachable control location
    size_t npred = 0, pos = 0;
    while ((pos = smt.find("(declare-fun L", pos)) != std::string::npos) {
      ++npred;
      ++pos;
    }
    CHECK(npred > 4);
  }
}

TEST_CASE("solver runner interprets the first output token") {
  std::string f = "/tmp/fv_chc_input.smt2";
  std::ofstream(f) << "(set-logic HORN)(check-sat)\n";

  std::string sat = write_script("fake_sat.sh", "echo sat\n");
  CHECK(run_solver({sat}, f, 5).kind == SolveResult::Sat);

  std::string unsat = write_script("fake_unsat.sh", "echo unsat\n");
  CHECK(run_solver({unsat}, f, 5).kind == SolveResult::Unsat);

  std::string unk = write_script("fake_unknown.sh", "echo unknown\n");
  CHECK(run_solver({unk}, f, 5).kind == SolveResult::Unknown);

  std::string slow = write_script("fake_slow.sh", "sleep 30\necho sat\n");
  CHECK(run_solver({slow}, f, 1).kind == SolveResult::Timeout);

  CHECK(run_solver({"/nonexistent/solver"}, f, 5).kind == SolveResult::Error);
  CHECK(run_solver({}, f, 5).kind == SolveResult::Error);

  // the file path is appended as the last argument
  std::string echoer =
      write_script("fake_echo.sh", "test \"$1\" = \"" + f + "\" && echo sat\n");
  CHECK(run_solver({echoer}, f, 5).kind == SolveResult::Sat);
}

TEST_CASE("explicit checker: passing and failing assertions") {
  TableOpts o;
  CHECK(check_with_table(tiny({assign("a", L(2)),
                               assert_(Expr::mk(ExOp::Eq, {V("a"), L(2)}))}),
                         {}, o)
            .kind == TableResult::Pass);
  auto r = check_with_table(
      tiny({assign("a", L(2)), assert_(Expr::mk(ExOp::Eq, {V("a"), L(3)}))}),
      {}, o);
  CHECK(r.kind == TableResult::Fail);
}

TEST_CASE("explicit checker: havocked variables are enumerated") {
  TableOpts o;  // havoc range -2..2, addresses 0..4
  // a havocked value can violate a tight bound
  CHECK(check_with_table(
            tiny({havoc("a"), assert_(Expr::mk(ExOp::Le, {V("a"), L(1)}))}),
            {}, o)
            .kind == TableResult::Fail);
  // ... but not one that covers the probe universe
  CHECK(check_with_table(
            tiny({havoc("a"), assert_(Expr::mk(ExOp::Le, {V("a"), L(4)}))}),
            {}, o)
            .kind == TableResult::Pass);
}

TEST_CASE("explicit checker: invariant rows bind unknown arguments") {
  InvTable t;
  t["T"] = {{1, 7}, {2, 9}};
  Command as;
  as.kind = CmdKind::AssumeInv;
  as.type_name = "T";
  as.args = {V("a"), V("b")};
  Command chk;
  chk.kind = CmdKind::AssertInv;
  chk.type_name = "T";
  chk.args = {V("a"), V("b")};
  TableOpts o;

  // assuming a row and asserting it back always succeeds
  CHECK(check_with_table(tiny({havoc("a"), havoc("b"), as, chk}), t, o).kind ==
        TableResult::Pass);

  // a mutated tuple is no longer in the table, and the miss is reported
  Command bump = assign("b", Expr::mk(ExOp::Add, {V("b"), L(1)}));
  auto r = check_with_table(tiny({havoc("a"), havoc("b"), as, bump, chk}), t, o);
  REQUIRE(r.kind == TableResult::Fail);
  CHECK(r.miss_type == "T");
  REQUIRE(r.miss_row.size() == 2);
  CHECK(r.miss_row[1] == (r.miss_row[0] == 1 ? 8 : 10));

  // binding constrains other uses of the bound variable
  Command pin = assert_(Expr::mk(ExOp::Eq, {V("b"), L(7)}));
  CHECK(check_with_table(tiny({havoc("a"), havoc("b"), as,
                               assert_(Expr::mk(ExOp::Eq, {V("a"), L(1)})),
                               pin}),
                         t, o)
            .kind == TableResult::Fail);  // row (2,9) also binds
}

TEST_CASE("explicit checker: allocation counter prunes at the budget") {
  TableOpts o;
  o.addr_budget = 2;
  // __ctr may reach the budget ...
  HeapFreeProgram p1 = tiny({assign("__ctr", L(2)),
                             assert_(Expr::mk(ExOp::Le, {V("__ctr"), L(2)}))},
                            {"__ctr"});
  CHECK(check_with_table(p1, {}, o).kind == TableResult::Pass);
  // ... and exceeding it prunes the path instead of failing the assert
  HeapFreeProgram p2 = tiny({assign("__ctr", L(3)), assert_(L(0))}, {"__ctr"});
  CHECK(check_with_table(p2, {}, o).kind == TableResult::BoundExhausted);
}

TEST_CASE("exhaustive tables enumerate the bounded universe") {
  StructDecl sd;
  sd.name = "N";
  sd.fields = {{"l", true, "N", FlowRole::Generate, {}},
               {"d", false, "", FlowRole::Propagate, {}}};
  InvTable t = exhaustive_table({sd}, 2, {0, 7}, 1);
  REQUIRE(t.count("N"));
  // addr in {1,2}, l in {0,1,2}, d in {0,7}, free in {0,1}, flow in {0,1}
  CHECK(t["N"].size() == 2u * 3u * 2u * 2u * 2u);
  for (auto& row : t["N"]) REQUIRE(row.size() == 5);
}

TEST_CASE("programs mention their literals") {
  Program p = load("sll-data.tl");
  auto lits = program_literals(p);
  CHECK(std::find(lits.begin(), lits.end(), 7) != lits.end());
  CHECK(std::find(lits.begin(), lits.end(), 0) != lits.end());
}
