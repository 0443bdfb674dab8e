#include "fv/concrete.hpp"

#include <deque>
#include <sstream>

#include "fv/printer.hpp"

namespace fv {

std::string CState::key() const {
  std::ostringstream os;
  os << loc << "|" << ctr << "|";
  for (auto& [n, v] : vars) os << n << "=" << v << ",";
  os << "|";
  for (auto& [a, c] : heap.cells) {
    os << a << ":" << c.type << ":" << c.free_ << ":";
    for (auto f : c.fields) os << f << ",";
    os << ";";
  }
  return os.str();
}

CState initial_state(const Program& p) {
  CState s;
  s.loc = p.cfa.entry;
  for (auto& v : p.vars) s.vars[v.name] = 0;
  s.heap.structs = &p.structs;
  s.heap.cells[kNull] = Heap::null_cell();
  return s;
}

namespace {

struct EvalCtx {
  const Program* prog;
  const CState* st;
  const RunOpts* opts;
  // havoc choices consumed left-to-right; expressions are re-evaluated per
  // choice vector by the caller
  const std::vector<long long>* havoc_vals;
  mutable size_t havoc_idx = 0;
  mutable bool violated = false;
  mutable std::string vkind;
  mutable SourceLoc vloc;
};

bool is_ptr_operand(const EvalCtx& cx, const ExprP& e) {
  if (e->op == ExOp::Null) return true;
  if (e->op == ExOp::Var) {
    const VarDecl* v = cx.prog->find_var(e->var);
    return v && v->is_ptr;
  }
  return false;
}

long long eval(const EvalCtx& cx, const ExprP& e) {
  if (cx.violated) return 0;
  switch (e->op) {
    case ExOp::IntLit: return e->value;
    case ExOp::Null: return 0;
    case ExOp::Var: return cx.st->vars.at(e->var);
    case ExOp::Havoc: return (*cx.havoc_vals)[cx.havoc_idx++];
    case ExOp::Eq:
    case ExOp::Ne: {
      // comparing a dangling pointer with anything but null is a violation
      long long l = eval(cx, e->args[0]);
      long long r = eval(cx, e->args[1]);
      for (int i = 0; i < 2 && !cx.violated; ++i) {
        const ExprP& a = e->args[i];
        long long other = i == 0 ? r : l;
        if (other == 0 || a->op != ExOp::Var || !is_ptr_operand(cx, a)) continue;
        long long v = cx.st->vars.at(a->var);
        if (v != 0 && cx.st->heap.cells.at(v).free_ != 0) {
          cx.violated = true;
          cx.vkind = "dangling-compare";
          cx.vloc = e->loc;
          return 0;
        }
      }
      if (cx.violated) return 0;
      return (e->op == ExOp::Eq) == (l == r) ? 1 : 0;
    }
    case ExOp::Add: return eval(cx, e->args[0]) + eval(cx, e->args[1]);
    case ExOp::Sub: return eval(cx, e->args[0]) - eval(cx, e->args[1]);
    case ExOp::Mul: return eval(cx, e->args[0]) * eval(cx, e->args[1]);
    case ExOp::Lt: return eval(cx, e->args[0]) < eval(cx, e->args[1]);
    case ExOp::Le: return eval(cx, e->args[0]) <= eval(cx, e->args[1]);
    case ExOp::Gt: return eval(cx, e->args[0]) > eval(cx, e->args[1]);
    case ExOp::Ge: return eval(cx, e->args[0]) >= eval(cx, e->args[1]);
    case ExOp::And: return eval(cx, e->args[0]) && eval(cx, e->args[1]);
    case ExOp::Or: return eval(cx, e->args[0]) || eval(cx, e->args[1]);
    case ExOp::Not: return !eval(cx, e->args[0]);
    case ExOp::Ite:
      return eval(cx, e->args[0]) ? eval(cx, e->args[1]) : eval(cx, e->args[2]);
    case ExOp::Nondet: return 1;  // handled at lowering; not evaluated
  }
  return 0;
}

int count_havocs(const ExprP& e) {
  if (!e) return 0;
  int n = e->op == ExOp::Havoc ? 1 : 0;
  for (auto& a : e->args) n += count_havocs(a);
  return n;
}

}  // namespace

StepResult step(const Program& p, const CState& s0, const Edge& e,
                const RunOpts& opts) {
  StepResult res;
  std::vector<CState> frontier{s0};
  for (auto& cmd : e.cmds) {
    std::vector<CState> next;
    for (auto& s : frontier) {
      int nh = count_havocs(cmd.expr);
      // enumerate havoc choices
      std::vector<std::vector<long long>> choices;
      choices.emplace_back();
      for (int i = 0; i < nh; ++i) {
        std::vector<std::vector<long long>> grown;
        for (auto& c : choices)
          for (long long v = opts.havoc_min; v <= opts.havoc_max; ++v) {
            grown.push_back(c);
            grown.back().push_back(v);
          }
        choices = std::move(grown);
      }
      for (auto& hv : choices) {
        EvalCtx cx{&p, &s, &opts, &hv};
        CState t = s;
        bool keep = true;
        switch (cmd.kind) {
          case CmdKind::Assign: {
            long long v = eval(cx, cmd.expr);
            if (!cx.violated) t.vars[cmd.var] = v;
            break;
          }
          case CmdKind::Read: {
            long long a = s.vars.at(cmd.var2);
            if (a == 0 || s.heap.cells.at(a).free_ != 0) {
              res.violated = true;
              res.vkind = "unsafe-access";
              res.loc = cmd.loc;
              return res;
            }
            const StructDecl& sd = p.structs[s.heap.cells.at(a).type];
            t.vars[cmd.var] = s.heap.cells.at(a).fields[sd.field_index(cmd.field)];
            break;
          }
          case CmdKind::Write: {
            long long a = s.vars.at(cmd.var);
            if (a == 0 || s.heap.cells.at(a).free_ != 0) {
              res.violated = true;
              res.vkind = "unsafe-access";
              res.loc = cmd.loc;
              return res;
            }
            long long v = eval(cx, cmd.expr);
            if (!cx.violated) {
              const StructDecl& sd = p.structs[s.heap.cells.at(a).type];
              t.heap.cells[a].fields[sd.field_index(cmd.field)] = v;
            }
            break;
          }
          case CmdKind::Malloc: {
            if (t.ctr >= opts.max_allocs) {
              res.alloc_bound_hit = true;
              keep = false;
              break;
            }
            long long a = ++t.ctr;
            Cell c;
            for (size_t i = 0; i < p.structs.size(); ++i)
              if (p.structs[i].name == cmd.type_name) c.type = (int)i;
            c.fields.assign(p.structs[c.type].fields.size(), 0);
            t.heap.cells[a] = c;
            t.vars[cmd.var] = a;
            break;
          }
          case CmdKind::Free: {
            long long a = s.vars.at(cmd.var);
            if (a == 0) {
              res.violated = true;
              res.vkind = "unsafe-access";
              res.loc = cmd.loc;
              return res;
            }
            if (s.heap.cells.at(a).free_ != 0) {
              res.violated = true;
              res.vkind = "double-free";
              res.loc = cmd.loc;
              return res;
            }
            t.heap.cells[a].free_ = 1;
            break;
          }
          case CmdKind::Assume: {
            long long v = eval(cx, cmd.expr);
            if (!cx.violated && v == 0) keep = false;
            break;
          }
          case CmdKind::Assert: {
            long long v = eval(cx, cmd.expr);
            if (!cx.violated && v == 0) {
              res.violated = true;
              res.vkind = cmd.tag.empty() ? "user" : cmd.tag;
              res.loc = cmd.loc;
              return res;
            }
            break;
          }
          case CmdKind::Lock:
          case CmdKind::Unlock:
            break;  // single-thread execution: no effect
          default:
            // heap-free-only commands never occur in surface programs
            keep = false;
            break;
        }
        if (cx.violated) {
          res.violated = true;
          res.vkind = cx.vkind;
          res.loc = cx.vloc;
          return res;
        }
        if (keep) next.push_back(std::move(t));
      }
    }
    frontier = std::move(next);
  }
  for (auto& s : frontier) {
    CState t = std::move(s);
    t.loc = e.dst;
    res.next.push_back(std::move(t));
  }
  return res;
}

namespace {

std::vector<std::string> rebuild_trace(
    const std::vector<std::pair<int, int>>& parent, int idx,
    const Program& p) {
  std::vector<int> edges;
  while (idx > 0) {
    edges.push_back(parent[idx].second);
    idx = parent[idx].first;
  }
  std::vector<std::string> tr;
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
    const Edge& e = p.cfa.edges[*it];
    std::ostringstream os;
    if (e.cmds.empty()) {
      os << e.src << " -> " << e.dst << " : skip";
      tr.push_back(os.str());
    } else {
      for (auto& c : e.cmds) {
        std::ostringstream l;
        l << e.src << " -> " << e.dst << " : " << print_command(c);
        tr.push_back(l.str());
      }
    }
  }
  return tr;
}

}  // namespace

Verdict run_bounded(const Program& p, const RunOpts& opts) {
  auto out = p.cfa.out_edges();
  std::vector<CState> states{initial_state(p)};
  std::vector<std::pair<int, int>> parent{{-1, -1}};  // (state idx, edge idx)
  std::set<std::string> seen{states[0].key()};
  bool exhausted = false;
  Verdict v;

  for (size_t i = 0; i < states.size(); ++i) {
    if (states.size() > opts.max_states) {
      exhausted = true;
      break;
    }
    CState s = states[i];
    if (s.loc == p.cfa.exit && opts.leak_check) {
      // a node is leaked if it is unfreed yet carries no flow
      FlowMap inflow;
      auto fl = compute_flow(s.heap, inflow, opts.mode);
      for (auto& [a, c] : s.heap.cells) {
        if (a == kNull || c.free_ != 0) continue;
        if (!fl || (*fl)[a] == 0) {
          v.kind = Verdict::Violation;
          v.vkind = "leak";
          v.trace = rebuild_trace(parent, (int)i, p);
          return v;
        }
      }
    }
    for (int ei : out[s.loc]) {
      StepResult r = step(p, s, p.cfa.edges[ei], opts);
      if (r.violated) {
        v.kind = Verdict::Violation;
        v.vkind = r.vkind;
        v.loc = r.loc;
        v.trace = rebuild_trace(parent, (int)i, p);
        const Edge& e = p.cfa.edges[ei];
        for (auto& c : e.cmds) {
          std::ostringstream l;
          l << e.src << " -> " << e.dst << " : " << print_command(c);
          v.trace.push_back(l.str());
        }
        return v;
      }
      // pruned allocations beyond the budget still count as safe-within-bound
      for (auto& t : r.next) {
        std::string k = t.key();
        if (seen.insert(k).second) {
          states.push_back(t);
          parent.push_back({(int)i, ei});
        }
      }
    }
  }
  v.kind = exhausted ? Verdict::BoundExhausted : Verdict::Safe;
  return v;
}

}  // namespace fv
