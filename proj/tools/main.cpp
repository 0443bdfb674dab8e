#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fv/absint.hpp"
#include "fv/analysis.hpp"
#include "fv/chc.hpp"
#include "fv/concrete.hpp"
#include "fv/diag.hpp"
#include "fv/instrument.hpp"
#include "fv/parser.hpp"
#include "fv/printer.hpp"
#include "fv/table.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

// exit codes: 0 safe, 1 violation, 2 tool error, 3 unknown / bound exhausted
enum { kSafe = 0, kViolation = 1, kError = 2, kUnknown = 3 };

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fv::Program load(const std::string& path) {
  return fv::parse_program(slurp(path), path);
}

fv::FlowMode parse_mode(const std::string& s) {
  if (s == "global-roots") return fv::FlowMode::GlobalRoots;
  return fv::FlowMode::Roles;
}

json verdict_json(const fv::Verdict& v) {
  json j;
  j["verdict"] = v.kind == fv::Verdict::Safe        ? "safe"
                 : v.kind == fv::Verdict::Violation ? "violation"
                                                    : "bound-exhausted";
  if (v.kind == fv::Verdict::Violation) {
    j["kind"] = v.vkind;
    j["line"] = v.loc.line;
    j["trace"] = v.trace;
  }
  return j;
}

// Bounded verification without an external solver: concrete exploration for
// counterexamples, abstract interpretation + table check for safety.
int verify_bounded(const fv::Program& p, long long budget, bool concurrent,
                   bool alias_opt, json& out) {
  fv::RunOpts ro;
  ro.max_allocs = budget;
  fv::Verdict cv = fv::run_bounded(p, ro);
  if (cv.kind == fv::Verdict::Violation) {
    out = verdict_json(cv);
    out["method"] = "concrete";
    return kViolation;
  }
  fv::AbsOpts ao;
  ao.addr_budget = budget;
  fv::AbsResult ar = fv::analyze(p, ao);
  if (ar.top || ar.bound_exhausted) {
    out["verdict"] = "unknown";
    out["method"] = "abstract";
    if (ar.top) out["reason"] = ar.top_reason;
    return kUnknown;
  }
  fv::SiteMap sm = fv::analyze_sites(p);
  fv::InstOpts io;
  io.concurrent = concurrent;
  io.alias_opt = alias_opt;
  fv::HeapFreeProgram hf = fv::instrument(p, sm, io);
  // the invariant table: evicted rows, the view cells published by the exit
  // appendix, and the view cells of pointers the instrumentation pushes
  // mid-program (the abstract run keeps those cells in its views)
  std::vector<fv::HEntry> rows = ar.invariant;
  auto add_cell = [&rows](const fv::VState& vs, fv::Addr a) {
    auto ci = vs.heap.cells.find(a);
    if (a == 0 || ci == vs.heap.cells.end()) return;
    fv::HEntry h;
    h.addr = a;
    h.cell = ci->second;
    auto it = vs.flow.find(a);
    if (it != vs.flow.end()) h.flow = it->second;
    rows.push_back(h);
  };
  auto exit_it = ar.states.find(p.cfa.exit);
  if (exit_it != ar.states.end())
    for (auto& vs : exit_it->second)
      for (auto& [a, cell] : vs.heap.cells) add_cell(vs, a);
  for (size_t ei = 0; ei < p.cfa.edges.size(); ++ei) {
    auto push_at = [&](const std::vector<std::string>& xs, int loc) {
      auto si = ar.states.find(loc);
      if (xs.empty() || si == ar.states.end()) return;
      for (auto& vs : si->second)
        for (auto& x : xs) {
          auto vi = vs.stack.find(x);
          if (vi == vs.stack.end()) continue;
          // an aliased cell stays in the view: the eviction guard skips it
          bool aliased = false;
          for (auto& [q, a] : vs.stack)
            if (q != x && a == vi->second) aliased = true;
          if (!aliased) add_cell(vs, vi->second);
        }
    };
    push_at(sm.evict_before[ei], p.cfa.edges[ei].src);
    push_at(sm.evict_after[ei], p.cfa.edges[ei].dst);
  }
  fv::InvTable table = fv::table_from_invariant(p, rows);
  if (getenv("FV_DEBUG"))
    for (auto& [t, rs] : table)
      for (auto& r : rs) {
        fprintf(stderr, "row %s(", t.c_str());
        for (auto v : r) fprintf(stderr, " %lld", v);
        fprintf(stderr, " )\n");
      }
  fv::TableOpts to;
  to.addr_budget = budget;
  // saturate: a pushed tuple missing from the candidate table is not an
  // error, it means the table is not yet closed under the program
  fv::TableResult tr;
  for (int round = 0; round < 256; ++round) {
    tr = fv::check_with_table(hf, table, to);
    if (tr.kind != fv::TableResult::Fail || tr.miss_row.empty()) break;
    auto& tab = table[tr.miss_type];
    if (std::find(tab.begin(), tab.end(), tr.miss_row) != tab.end()) break;
    if (getenv("FV_DEBUG")) {
      fprintf(stderr, "saturate %s(", tr.miss_type.c_str());
      for (auto v : tr.miss_row) fprintf(stderr, " %lld", v);
      fprintf(stderr, " )\n");
    }
    tab.push_back(tr.miss_row);
  }
  if (tr.kind == fv::TableResult::Fail) {
    out["verdict"] = "unknown";
    out["method"] = "table";
    out["reason"] = tr.tag;
    out["line"] = tr.loc.line;
    return kUnknown;
  }
  out["verdict"] = "safe";
  out["method"] = cv.kind == fv::Verdict::Safe ? "concrete+abstract" : "abstract";
  out["bounded"] = true;
  return kSafe;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowview: memory-safety verification of heap programs via "
               "flow abstraction"};
  app.require_subcommand(1);

  std::string file, mode = "roles", domain = "flow-view", solver_cmd, out_path,
                    manifest;
  long long budget = 4;
  int timeout = 60;
  bool cfa = false, concurrent = false, no_alias = false, no_leak = false;

  auto add_file = [&](CLI::App* c) {
    c->add_option("file", file, "input program")->required();
  };

  auto* cparse = app.add_subcommand("parse", "parse and echo a program");
  add_file(cparse);
  cparse->add_flag("--cfa", cfa, "print the control-flow automaton");

  auto* crun = app.add_subcommand("run", "bounded concrete execution");
  add_file(crun);
  crun->add_option("--addr-budget", budget);
  crun->add_flag("--no-leak-check", no_leak);

  auto* cana = app.add_subcommand("analyze", "abstract interpretation");
  add_file(cana);
  cana->add_option("--domain", domain)
      ->check(CLI::IsMember({"view", "flow-view"}));
  cana->add_option("--addr-budget", budget);
  cana->add_option("--flow-mode", mode)
      ->check(CLI::IsMember({"roles", "global-roots"}));

  auto* cins = app.add_subcommand("instrument",
                                  "emit the heap-free integer program");
  add_file(cins);
  cins->add_flag("--concurrent", concurrent);
  cins->add_flag("--no-alias-opt", no_alias);

  auto* cchc = app.add_subcommand("emit-chc", "emit SMT-LIB 2 Horn clauses");
  add_file(cchc);
  cchc->add_flag("--concurrent", concurrent);
  cchc->add_flag("--no-alias-opt", no_alias);
  cchc->add_option("-o,--output", out_path);

  auto* cver = app.add_subcommand("verify", "verify a program");
  add_file(cver);
  cver->add_option("--solver", solver_cmd,
                   "external Horn solver command (reads SMT-LIB 2 file)");
  cver->add_option("--timeout", timeout, "solver timeout in seconds");
  cver->add_option("--addr-budget", budget);
  cver->add_flag("--concurrent", concurrent);
  cver->add_flag("--no-alias-opt", no_alias);

  auto* cben = app.add_subcommand("bench", "run a benchmark manifest");
  cben->add_option("manifest", manifest, "JSON manifest of expected verdicts")
      ->required();
  cben->add_option("--addr-budget", budget);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cparse->parsed()) {
      fv::Program p = load(file);
      std::cout << (cfa ? fv::print_cfa(p.cfa) : fv::print_program(p));
      return kSafe;
    }
    if (crun->parsed()) {
      fv::Program p = load(file);
      fv::RunOpts ro;
      ro.max_allocs = budget;
      ro.leak_check = !no_leak;
      fv::Verdict v = fv::run_bounded(p, ro);
      std::cout << verdict_json(v).dump(2) << "\n";
      return v.kind == fv::Verdict::Safe        ? kSafe
             : v.kind == fv::Verdict::Violation ? kViolation
                                                : kUnknown;
    }
    if (cana->parsed()) {
      fv::Program p = load(file);
      fv::AbsOpts ao;
      ao.domain = domain == "view" ? fv::Domain::View : fv::Domain::FlowView;
      ao.addr_budget = budget;
      ao.mode = parse_mode(mode);
      fv::AbsResult r = fv::analyze(p, ao);
      json j;
      j["top"] = r.top;
      if (r.top) {
        j["reason"] = r.top_reason;
        j["line"] = r.top_loc.line;
      }
      j["bound_exhausted"] = r.bound_exhausted;
      j["visited"] = r.visited;
      j["invariant_rows"] = r.invariant.size();
      std::cout << j.dump(2) << "\n";
      return r.top ? kUnknown : kSafe;
    }
    if (cins->parsed() || cchc->parsed()) {
      fv::Program p = load(file);
      fv::SiteMap sm = fv::analyze_sites(p);
      fv::InstOpts io;
      io.concurrent = concurrent;
      io.alias_opt = !no_alias;
      fv::HeapFreeProgram hf = fv::instrument(p, sm, io);
      if (cins->parsed()) {
        std::cout << fv::print_heap_free(hf);
        return kSafe;
      }
      std::string chc = fv::encode_chc(hf, file);
      if (out_path.empty()) {
        std::cout << chc;
      } else {
        std::ofstream o(out_path);
        o << chc;
      }
      return kSafe;
    }
    if (cver->parsed()) {
      fv::Program p = load(file);
      json j;
      if (!solver_cmd.empty()) {
        fv::SiteMap sm = fv::analyze_sites(p);
        fv::InstOpts io;
        io.concurrent = concurrent;
        io.alias_opt = !no_alias;
        fv::HeapFreeProgram hf = fv::instrument(p, sm, io);
        std::string tmp = "/tmp/flowview_chc.smt2";
        {
          std::ofstream o(tmp);
          o << fv::encode_chc(hf, file);
        }
        std::istringstream is(solver_cmd);
        std::vector<std::string> av;
        for (std::string w; is >> w;) av.push_back(w);
        fv::SolveResult sr = fv::run_solver(av, tmp, timeout);
        j["method"] = "chc";
        switch (sr.kind) {
          case fv::SolveResult::Sat:
            j["verdict"] = "safe";
            std::cout << j.dump(2) << "\n";
            return kSafe;
          case fv::SolveResult::Unsat:
            j["verdict"] = "violation";
            std::cout << j.dump(2) << "\n";
            return kViolation;
          case fv::SolveResult::Error:
            j["verdict"] = "error";
            j["detail"] = sr.detail;
            std::cout << j.dump(2) << "\n";
            return kError;
          default:
            j["verdict"] = "unknown";
            std::cout << j.dump(2) << "\n";
            return kUnknown;
        }
      }
      int rc = verify_bounded(p, budget, concurrent, !no_alias, j);
      std::cout << j.dump(2) << "\n";
      return rc;
    }
    if (cben->parsed()) {
      json m = json::parse(slurp(manifest));
      std::string dir = manifest.substr(0, manifest.find_last_of('/') + 1);
      // unsound = claiming safe for a violating program or vice versa;
      // an honest "unknown" on a safe program is reported but acceptable
      int unsound = 0, exact = 0, unknowns = 0;
      for (auto& entry : m["programs"]) {
        std::string f = dir + entry["file"].get<std::string>();
        std::string expect = entry["expect"];
        bool conc = entry.value("concurrent", false);
        fv::Program p = load(f);
        json j;
        int rc = verify_bounded(p, budget, conc, true, j);
        std::string got = rc == kSafe        ? "safe"
                          : rc == kViolation ? "violation"
                                             : "unknown";
        std::string status;
        if (got == expect) {
          status = "  ok   ";
          ++exact;
          if (expect == "violation" &&
              j.value("kind", "") != entry.value("kind", "")) {
            status = " WRONG ";
            ++unsound;
            --exact;
          }
        } else if (got == "unknown") {
          status = "unknown";
          ++unknowns;
        } else {
          status = " WRONG ";
          ++unsound;
        }
        std::cout << status << " " << entry["file"].get<std::string>()
                  << "  expect=" << expect << " got=" << got << "\n";
      }
      std::cout << exact << " exact, " << unknowns << " unknown, " << unsound
                << " unsound\n";
      return unsound ? kViolation : kSafe;
    }
  } catch (const fv::DiagError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
