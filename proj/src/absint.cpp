#include "fv/absint.hpp"

#include <algorithm>
#include <sstream>

namespace fv {

std::string VState::key() const {
  std::ostringstream os;
  for (auto& [n, v] : stack) os << n << "=" << v << ",";
  os << "|";
  for (auto& [a, c] : heap.cells) {
    os << a << ":" << c.type << ":" << c.free_ << ":";
    for (auto f : c.fields) os << f << ",";
    auto it = flow.find(a);
    if (it != flow.end()) os << "~" << it->second.get_str();
    os << ";";
  }
  os << "|";
  for (auto a : fresh) os << a << ",";
  return os.str();
}

std::string HEntry::key(bool with_flow) const {
  std::ostringstream os;
  os << addr << ":" << cell.type << ":" << cell.free_ << ":";
  for (auto f : cell.fields) os << f << ",";
  if (with_flow) os << "~" << flow.get_str();
  return os.str();
}

namespace {

std::set<Addr> pointed(const VState& s, const Program& p) {
  std::set<Addr> r;
  for (auto& v : p.vars)
    if (v.is_ptr && s.stack.at(v.name) != 0) r.insert(s.stack.at(v.name));
  return r;
}

struct StepCtx {
  const Program* p;
  const AbsOpts* o;
  std::vector<HEntry>* H;
  std::set<std::string>* hkeys;
  bool h_grew = false;
  bool top = false;
  std::string reason;
  SourceLoc loc;
  bool exhausted = false;

  void go_top(const std::string& r, SourceLoc l) {
    if (!top) {
      top = true;
      reason = r;
      loc = l;
    }
  }
};

void push_state(StepCtx& cx, VState& s) {
  std::set<Addr> keep = pointed(s, *cx.p);
  bool with_flow = cx.o->domain == Domain::FlowView;
  for (auto it = s.heap.cells.begin(); it != s.heap.cells.end();) {
    if (keep.count(it->first)) {
      ++it;
      continue;
    }
    HEntry row;
    row.addr = it->first;
    row.cell = it->second;
    if (with_flow) row.flow = s.flow.at(it->first);
    if (cx.hkeys->insert(row.key(with_flow)).second) {
      cx.H->push_back(row);
      cx.h_grew = true;
    }
    s.flow.erase(it->first);
    s.fresh.erase(it->first);
    it = s.heap.cells.erase(it);
  }
}

// materialise a row for address a in every compatible way
std::vector<VState> pull(StepCtx& cx, const VState& s, Addr a, SourceLoc loc) {
  std::vector<VState> out;
  bool flowdom = cx.o->domain == Domain::FlowView;
  bool any_row = false;
  for (auto& row : *cx.H) {
    if (row.addr != a) continue;
    any_row = true;
    if (flowdom) {
      Nat o = outflow_to(s.heap, s.flow, a, cx.o->mode);
      if (o > row.flow) continue;  // no consistent completion uses this row
    }
    VState t = s;
    t.heap.cells[a] = row.cell;
    if (flowdom) t.flow[a] = row.flow;
    out.push_back(std::move(t));
  }
  if (!any_row) cx.go_top("pull: no invariant row for address", loc);
  return out;
}

struct AEval {
  const Program* p;
  const VState* s;
  const std::vector<long long>* havoc_vals;
  size_t havoc_idx = 0;
  bool violated = false;
  std::string vkind;
  SourceLoc vloc;

  bool is_ptr_operand(const ExprP& e) const {
    if (e->op == ExOp::Null) return true;
    if (e->op == ExOp::Var) {
      const VarDecl* v = p->find_var(e->var);
      return v && v->is_ptr;
    }
    return false;
  }

  long long eval(const ExprP& e) {
    if (violated) return 0;
    switch (e->op) {
      case ExOp::IntLit: return e->value;
      case ExOp::Null: return 0;
      case ExOp::Var: return s->stack.at(e->var);
      case ExOp::Havoc: return (*havoc_vals)[havoc_idx++];
      case ExOp::Eq:
      case ExOp::Ne: {
        long long l = eval(e->args[0]), r = eval(e->args[1]);
        for (int i = 0; i < 2 && !violated; ++i) {
          const ExprP& a = e->args[i];
          long long other = i == 0 ? r : l;
          if (other == 0 || a->op != ExOp::Var || !is_ptr_operand(a)) continue;
          long long v = s->stack.at(a->var);
          if (v != 0 && s->heap.cells.at(v).free_ != 0) {
            violated = true;
            vkind = "dangling-compare";
            vloc = e->loc;
            return 0;
          }
        }
        if (violated) return 0;
        return (e->op == ExOp::Eq) == (l == r) ? 1 : 0;
      }
      case ExOp::Add: return eval(e->args[0]) + eval(e->args[1]);
      case ExOp::Sub: return eval(e->args[0]) - eval(e->args[1]);
      case ExOp::Mul: return eval(e->args[0]) * eval(e->args[1]);
      case ExOp::Lt: return eval(e->args[0]) < eval(e->args[1]);
      case ExOp::Le: return eval(e->args[0]) <= eval(e->args[1]);
      case ExOp::Gt: return eval(e->args[0]) > eval(e->args[1]);
      case ExOp::Ge: return eval(e->args[0]) >= eval(e->args[1]);
      case ExOp::And: return eval(e->args[0]) && eval(e->args[1]);
      case ExOp::Or: return eval(e->args[0]) || eval(e->args[1]);
      case ExOp::Not: return !eval(e->args[0]);
      case ExOp::Ite:
        return eval(e->args[0]) ? eval(e->args[1]) : eval(e->args[2]);
      case ExOp::Nondet: return 1;
    }
    return 0;
  }
};

int count_havocs(const ExprP& e) {
  if (!e) return 0;
  int n = e->op == ExOp::Havoc ? 1 : 0;
  for (auto& a : e->args) n += count_havocs(a);
  return n;
}

std::vector<std::vector<long long>> havoc_choices(const ExprP& e,
                                                  const AbsOpts& o) {
  int nh = count_havocs(e);
  std::vector<std::vector<long long>> cs;
  cs.emplace_back();
  for (int i = 0; i < nh; ++i) {
    std::vector<std::vector<long long>> g;
    for (auto& c : cs)
      for (long long v = o.havoc_min; v <= o.havoc_max; ++v) {
        g.push_back(c);
        g.back().push_back(v);
      }
    cs = std::move(g);
  }
  return cs;
}

// Executes one command; resulting states are pushed (normalised).
std::vector<VState> exec_cmd(StepCtx& cx, const VState& s0, const Command& c) {
  const Program& p = *cx.p;
  bool flowdom = cx.o->domain == Domain::FlowView;
  std::vector<VState> out;

  auto finish = [&](VState&& t) {
    push_state(cx, t);
    out.push_back(std::move(t));
  };

  switch (c.kind) {
    case CmdKind::Assign: {
      for (auto& hv : havoc_choices(c.expr, *cx.o)) {
        AEval ev{&p, &s0, &hv};
        long long v = ev.eval(c.expr);
        if (ev.violated) {
          cx.go_top(ev.vkind, ev.vloc);
          return out;
        }
        VState t = s0;
        t.stack[c.var] = v;
        finish(std::move(t));
      }
      return out;
    }
    case CmdKind::Read: {
      long long a = s0.stack.at(c.var2);
      if (a == 0 || s0.heap.cells.at(a).free_ != 0) {
        cx.go_top("unsafe-access", c.loc);
        return out;
      }
      const StructDecl& sd = p.structs[s0.heap.cells.at(a).type];
      int fi = sd.field_index(c.field);
      long long v = s0.heap.cells.at(a).fields[fi];
      std::vector<VState> bases;
      if (sd.fields[fi].is_ptr && v != 0 && !s0.heap.has(v))
        bases = pull(cx, s0, v, c.loc);
      else
        bases.push_back(s0);
      if (cx.top) return out;
      for (auto& b : bases) {
        VState t = b;
        t.stack[c.var] = v;
        finish(std::move(t));
      }
      return out;
    }
    case CmdKind::Write: {
      long long a = s0.stack.at(c.var);
      if (a == 0 || s0.heap.cells.at(a).free_ != 0) {
        cx.go_top("unsafe-access", c.loc);
        return out;
      }
      const StructDecl& sd = p.structs[s0.heap.cells.at(a).type];
      int fi = sd.field_index(c.field);
      for (auto& hv : havoc_choices(c.expr, *cx.o)) {
        AEval ev{&p, &s0, &hv};
        long long v = ev.eval(c.expr);
        if (ev.violated) {
          cx.go_top(ev.vkind, ev.vloc);
          return out;
        }
        VState t = s0;
        t.heap.cells[a].fields[fi] = v;
        bool flow_edge = sd.fields[fi].is_ptr &&
                         (cx.o->mode == FlowMode::GlobalRoots ||
                          sd.fields[fi].role != FlowRole::Exclude);
        if (flowdom && flow_edge) {
          SyncResult r = sync_fp(s0.heap, s0.flow, t.heap, s0.fresh, cx.o->mode);
          if (r.status == SyncStatus::Inconsistent) continue;
          if (r.status == SyncStatus::Top) {
            cx.go_top("sync-locality", c.loc);
            return out;
          }
          t.flow = r.flow;
          t.fresh.clear();
        }
        finish(std::move(t));
      }
      return out;
    }
    case CmdKind::Malloc: {
      bool any = false;
      for (long long a = 1; a <= cx.o->addr_budget; ++a) {
        if (s0.heap.has(a)) continue;
        if (flowdom && outflow_to(s0.heap, s0.flow, a, cx.o->mode) != 0) continue;
        any = true;
        VState t = s0;
        Cell cell;
        for (size_t i = 0; i < p.structs.size(); ++i)
          if (p.structs[i].name == c.type_name) cell.type = (int)i;
        cell.fields.assign(p.structs[cell.type].fields.size(), 0);
        t.heap.cells[a] = cell;
        if (flowdom) {
          t.flow[a] = 0;
          t.fresh.insert(a);
        }
        t.stack[c.var] = a;
        finish(std::move(t));
      }
      if (!any) cx.exhausted = true;
      return out;
    }
    case CmdKind::Free: {
      long long a = s0.stack.at(c.var);
      if (a == 0) {
        cx.go_top("unsafe-access", c.loc);
        return out;
      }
      if (s0.heap.cells.at(a).free_ != 0) {
        cx.go_top("double-free", c.loc);
        return out;
      }
      VState t = s0;
      t.heap.cells[a].free_ = 1;
      finish(std::move(t));
      return out;
    }
    case CmdKind::Assume: {
      for (auto& hv : havoc_choices(c.expr, *cx.o)) {
        AEval ev{&p, &s0, &hv};
        long long v = ev.eval(c.expr);
        if (ev.violated) {
          cx.go_top(ev.vkind, ev.vloc);
          return out;
        }
        if (v != 0) {
          VState t = s0;
          finish(std::move(t));
        }
      }
      return out;
    }
    case CmdKind::Assert: {
      for (auto& hv : havoc_choices(c.expr, *cx.o)) {
        AEval ev{&p, &s0, &hv};
        long long v = ev.eval(c.expr);
        if (ev.violated) {
          cx.go_top(ev.vkind, ev.vloc);
          return out;
        }
        if (v == 0) {
          cx.go_top(c.tag.empty() ? "user" : c.tag, c.loc);
          return out;
        }
      }
      {
        VState t = s0;
        finish(std::move(t));
      }
      return out;
    }
    case CmdKind::Lock:
    case CmdKind::Unlock: {
      VState t = s0;
      finish(std::move(t));
      return out;
    }
    default:
      return out;  // heap-free-only commands cannot occur here
  }
}

}  // namespace

std::pair<VState, std::vector<HEntry>> alpha_view(const Program& p,
                                                  const CState& c, Domain dom,
                                                  FlowMode mode) {
  VState v;
  v.stack = c.vars;
  v.heap.structs = &p.structs;
  FlowMap global;
  if (dom == Domain::FlowView) {
    auto fl = compute_flow(c.heap, {}, mode);
    if (fl) global = *fl;
  }
  std::set<Addr> keep;
  for (auto& pv : p.vars)
    if (pv.is_ptr && c.vars.at(pv.name) != 0) keep.insert(c.vars.at(pv.name));
  std::vector<HEntry> rows;
  for (auto& [a, cell] : c.heap.cells) {
    if (a == kNull) continue;
    if (keep.count(a)) {
      v.heap.cells[a] = cell;
      if (dom == Domain::FlowView) v.flow[a] = global.count(a) ? global[a] : 0;
    } else {
      HEntry r;
      r.addr = a;
      r.cell = cell;
      if (dom == Domain::FlowView && global.count(a)) r.flow = global[a];
      rows.push_back(r);
    }
  }
  return {v, rows};
}

std::vector<Heap> gamma_view(const Program& p, const VState& v,
                             const std::vector<HEntry>& H, Domain dom,
                             long long budget, FlowMode mode) {
  std::vector<Addr> free_addrs;
  for (long long a = 1; a <= budget; ++a)
    if (!v.heap.has(a)) free_addrs.push_back(a);

  std::vector<Heap> result;
  // choose a subset of extra addresses and a row for each
  size_t nsub = (size_t)1 << free_addrs.size();
  for (size_t mask = 0; mask < nsub; ++mask) {
    std::vector<Addr> extra;
    for (size_t i = 0; i < free_addrs.size(); ++i)
      if (mask & (1u << i)) extra.push_back(free_addrs[i]);
    // candidate rows per extra address
    std::vector<std::vector<const HEntry*>> cand(extra.size());
    bool feasible = true;
    for (size_t i = 0; i < extra.size(); ++i) {
      for (auto& r : H)
        if (r.addr == extra[i]) cand[i].push_back(&r);
      if (cand[i].empty()) feasible = false;
    }
    if (!feasible) continue;
    std::vector<size_t> idx(extra.size(), 0);
    for (;;) {
      Heap h = v.heap;
      FlowMap fl = v.flow;
      h.cells[kNull] = Heap::null_cell();
      for (size_t i = 0; i < extra.size(); ++i) {
        h.cells[extra[i]] = cand[i][idx[i]]->cell;
        fl[extra[i]] = cand[i][idx[i]]->flow;
      }
      // closed: every pointer field target is in the heap
      bool closed = true;
      for (auto& [a, cell] : h.cells) {
        if (cell.type < 0) continue;
        const StructDecl& sd = p.structs[cell.type];
        for (size_t i = 0; i < sd.fields.size(); ++i)
          if (sd.fields[i].is_ptr && !h.has(cell.fields[i])) closed = false;
      }
      bool ok = closed;
      if (ok && dom == Domain::FlowView) {
        auto g = compute_flow(h, {}, mode);
        if (!g) {
          ok = false;
        } else {
          for (auto& [a, cell] : h.cells) {
            if (a == kNull) continue;
            if ((*g)[a] != fl[a]) ok = false;
          }
        }
      }
      if (ok) result.push_back(h);
      // next index vector
      size_t i = 0;
      while (i < extra.size() && ++idx[i] == cand[i].size()) idx[i++] = 0;
      if (extra.empty() || i == extra.size()) break;
    }
  }
  return result;
}

AbsResult analyze(const Program& p, const AbsOpts& opts) {
  AbsResult res;
  std::vector<HEntry> H;
  std::set<std::string> hkeys;
  std::map<int, std::vector<VState>> states;
  std::map<int, std::set<std::string>> skeys;

  VState init;
  for (auto& v : p.vars) init.stack[v.name] = 0;
  init.heap.structs = &p.structs;
  states[p.cfa.entry].push_back(init);
  skeys[p.cfa.entry].insert(init.key());

  StepCtx cx;
  cx.p = &p;
  cx.o = &opts;
  cx.H = &H;
  cx.hkeys = &hkeys;

  std::set<std::string> done;  // (edge, state-key) pairs; reset when H grows
  size_t total = 1;
  bool changed = true;
  while (changed && !cx.top) {
    changed = false;
    for (size_t ei = 0; ei < p.cfa.edges.size() && !cx.top; ++ei) {
      const Edge& e = p.cfa.edges[ei];
      auto& src_states = states[e.src];
      for (size_t si = 0; si < src_states.size() && !cx.top; ++si) {
        VState s = src_states[si];
        std::string dk = std::to_string(ei) + "#" + s.key();
        if (done.count(dk)) continue;
        done.insert(dk);
        std::vector<VState> frontier{s};
        for (auto& cmd : e.cmds) {
          std::vector<VState> next;
          for (auto& f : frontier) {
            auto succ = exec_cmd(cx, f, cmd);
            if (cx.top) break;
            for (auto& t : succ) next.push_back(std::move(t));
          }
          frontier = std::move(next);
          if (cx.top) break;
        }
        if (cx.top) break;
        if (cx.h_grew) {
          done.clear();
          cx.h_grew = false;
          changed = true;
        }
        for (auto& t : frontier) {
          std::string k = t.key();
          if (skeys[e.dst].insert(k).second) {
            states[e.dst].push_back(t);
            ++total;
            changed = true;
            if (total > opts.max_states) {
              cx.exhausted = true;
              changed = false;
              break;
            }
          }
        }
        if (cx.exhausted && total > opts.max_states) break;
      }
      if (cx.exhausted && total > opts.max_states) break;
    }
    if (cx.exhausted && total > opts.max_states) break;
  }

  if (!cx.top && opts.leak_check && opts.domain == Domain::FlowView &&
      !states[p.cfa.exit].empty()) {
    for (auto& s : states[p.cfa.exit]) {
      for (auto& [a, cell] : s.heap.cells)
        if (cell.free_ == 0 && s.flow.at(a) == 0)
          cx.go_top("leak", SourceLoc{});
    }
    for (auto& r : H)
      if (r.cell.free_ == 0 && r.flow == 0) cx.go_top("leak", SourceLoc{});
  }

  res.top = cx.top;
  res.top_reason = cx.reason;
  res.top_loc = cx.loc;
  res.bound_exhausted = cx.exhausted;
  res.states = std::move(states);
  res.invariant = std::move(H);
  res.visited = total;
  return res;
}

}  // namespace fv
