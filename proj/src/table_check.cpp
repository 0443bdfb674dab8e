#include "fv/table.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

namespace fv {
namespace {

using Val = std::optional<long long>;

struct TState {
  int loc = 0;
  std::vector<Val> vals;

  std::string key() const {
    std::ostringstream os;
    os << loc << "|";
    for (auto& v : vals)
      if (v)
        os << *v << ",";
      else
        os << "?,";
    return os.str();
  }
};

struct Checker {
  const HeapFreeProgram& p;
  const InvTable& table;
  const TableOpts& o;
  std::map<std::string, int> var_idx;
  std::vector<long long> universe;
  TableResult res;
  bool failed = false;
  size_t total = 0;

  Checker(const HeapFreeProgram& pr, const InvTable& t, const TableOpts& op)
      : p(pr), table(t), o(op) {
    for (size_t i = 0; i < p.vars.size(); ++i) var_idx[p.vars[i].name] = (int)i;
    std::set<long long> u;
    for (long long v = o.havoc_min; v <= o.havoc_max; ++v) u.insert(v);
    for (long long v = 0; v <= o.addr_budget; ++v) u.insert(v);
    for (auto& [t2, rows] : table)
      for (auto& r : rows)
        for (auto v : r) u.insert(v);
    universe.assign(u.begin(), u.end());
  }

  // Evaluates e; if an unknown variable blocks evaluation, reports it.
  Val eval(const TState& s, const ExprP& e, std::string* blocker) {
    switch (e->op) {
      case ExOp::IntLit: return e->value;
      case ExOp::Null: return 0LL;
      case ExOp::Var: {
        Val v = s.vals[var_idx.at(e->var)];
        if (!v && blocker && blocker->empty()) *blocker = e->var;
        return v;
      }
      case ExOp::Havoc:
        // havoc inside an expression: treated as a blocker on a pseudo var
        if (blocker && blocker->empty()) *blocker = "\x01havoc";
        return std::nullopt;
      default: break;
    }
    auto a0 = eval(s, e->args[0], blocker);
    if (e->op == ExOp::Not) return a0 ? Val(!*a0) : std::nullopt;
    if (e->op == ExOp::And) {
      if (a0 && !*a0) return 0LL;
      auto a1 = eval(s, e->args[1], blocker);
      if (a1 && !*a1) return 0LL;
      return (a0 && a1) ? Val(1LL) : std::nullopt;
    }
    if (e->op == ExOp::Or) {
      if (a0 && *a0) return 1LL;
      auto a1 = eval(s, e->args[1], blocker);
      if (a1 && *a1) return 1LL;
      return (a0 && a1) ? Val(0LL) : std::nullopt;
    }
    if (e->op == ExOp::Ite) {
      if (!a0) {
        eval(s, e->args[1], blocker);
        return std::nullopt;
      }
      return eval(s, e->args[*a0 ? 1 : 2], blocker);
    }
    auto a1 = eval(s, e->args[1], blocker);
    if (!a0 || !a1) return std::nullopt;
    long long x = *a0, y = *a1;
    switch (e->op) {
      case ExOp::Add: return x + y;
      case ExOp::Sub: return x - y;
      case ExOp::Mul: return x * y;
      case ExOp::Eq: return (long long)(x == y);
      case ExOp::Ne: return (long long)(x != y);
      case ExOp::Lt: return (long long)(x < y);
      case ExOp::Le: return (long long)(x <= y);
      case ExOp::Gt: return (long long)(x > y);
      case ExOp::Ge: return (long long)(x >= y);
      default: return std::nullopt;
    }
  }

  void fail(const Command& c) {
    failed = true;
    res.kind = TableResult::Fail;
    res.tag = c.tag.empty() ? "assert" : c.tag;
    res.loc = c.loc;
  }

  // Executes commands[i..] of edge e from s; appends final states to out.
  void run_cmds(TState s, const std::vector<Command>& cmds, size_t i,
                std::vector<TState>& out) {
    if (failed) return;
    if (i == cmds.size()) {
      out.push_back(std::move(s));
      return;
    }
    const Command& c = cmds[i];
    auto force = [&](const ExprP& e) -> bool {
      // enumerate one blocking unknown; returns true if enumeration happened
      std::string blocker;
      Val v = eval(s, e, &blocker);
      if (v || blocker.empty()) return false;
      if (blocker == "\x01havoc") {
        // expression-level havoc: substitute by enumerating the havoc range
        for (long long hv = o.havoc_min; hv <= o.havoc_max; ++hv) {
          TState t = s;
          // rewrite: evaluate with first Havoc fixed is awkward; instead bind
          // via a shadow pass below
          (void)t;
        }
        return false;  // handled by havoc_subst in exec below
      }
      for (long long uv : universe) {
        TState t = s;
        t.vals[var_idx.at(blocker)] = uv;
        run_cmds(std::move(t), cmds, i, out);
        if (failed) return true;
      }
      return true;
    };

    switch (c.kind) {
      case CmdKind::Assign: {
        if (has_havoc(c.expr)) {
          for (auto& e2 : substitutions(c.expr)) {
            TState t = s;
            Command c2 = c;
            c2.expr = e2;
            std::vector<Command> one{c2};
            std::vector<TState> mid;
            run_cmds(std::move(t), one, 0, mid);
            for (auto& m : mid) run_cmds(std::move(m), cmds, i + 1, out);
            if (failed) return;
          }
          return;
        }
        if (force(c.expr)) return;
        std::string b;
        Val v = eval(s, c.expr, &b);
        s.vals[var_idx.at(c.var)] = v;
        if (c.var == "__ctr" && v && *v > o.addr_budget) {
          res.kind = res.kind == TableResult::Fail ? res.kind
                                                   : TableResult::BoundExhausted;
          return;  // allocation budget exhausted: prune
        }
        run_cmds(std::move(s), cmds, i + 1, out);
        return;
      }
      case CmdKind::Havoc:
        s.vals[var_idx.at(c.var)] = std::nullopt;
        run_cmds(std::move(s), cmds, i + 1, out);
        return;
      case CmdKind::Assume: {
        if (has_havoc(c.expr)) {
          for (auto& e2 : substitutions(c.expr)) {
            TState t = s;
            Command c2 = c;
            c2.expr = e2;
            std::vector<Command> rest{c2};
            std::vector<TState> mid;
            run_cmds(std::move(t), rest, 0, mid);
            for (auto& m : mid) run_cmds(std::move(m), cmds, i + 1, out);
            if (failed) return;
          }
          return;
        }
        if (force(c.expr)) return;
        std::string b;
        Val v = eval(s, c.expr, &b);
        if (v && *v != 0) run_cmds(std::move(s), cmds, i + 1, out);
        return;
      }
      case CmdKind::Assert: {
        if (force(c.expr)) return;
        std::string b;
        Val v = eval(s, c.expr, &b);
        if (!v || *v == 0) {
          fail(c);
          return;
        }
        run_cmds(std::move(s), cmds, i + 1, out);
        return;
      }
      case CmdKind::AssumeInv: {
        auto it = table.find(c.type_name);
        if (it == table.end()) return;  // empty interpretation
        for (auto& row : it->second) {
          TState t = s;
          bool ok = row.size() == c.args.size();
          for (size_t k = 0; ok && k < row.size(); ++k) {
            const ExprP& a = c.args[k];
            if (a->op == ExOp::Var) {
              Val& slot = t.vals[var_idx.at(a->var)];
              if (!slot)
                slot = row[k];
              else if (*slot != row[k])
                ok = false;
            } else {
              std::string b;
              Val v = eval(t, a, &b);
              if (!v || *v != row[k]) ok = false;
            }
          }
          if (ok) {
            run_cmds(std::move(t), cmds, i + 1, out);
            if (failed) return;
          }
        }
        return;
      }
      case CmdKind::AssertInv: {
        std::vector<long long> vals;
        for (auto& a : c.args) {
          std::string b;
          Val v = eval(s, a, &b);
          if (!v) {
            if (b.empty()) return;
            for (long long uv : universe) {
              TState t = s;
              t.vals[var_idx.at(b)] = uv;
              run_cmds(std::move(t), cmds, i, out);
              if (failed) return;
            }
            return;
          }
          vals.push_back(*v);
        }
        auto it = table.find(c.type_name);
        bool found = false;
        if (it != table.end())
          for (auto& row : it->second)
            if (row == vals) found = true;
        if (!found) {
          fail(c);
          res.miss_type = c.type_name;
          res.miss_row = vals;
          return;
        }
        run_cmds(std::move(s), cmds, i + 1, out);
        return;
      }
      default:
        run_cmds(std::move(s), cmds, i + 1, out);
        return;
    }
  }

  static bool has_havoc(const ExprP& e) {
    if (!e) return false;
    if (e->op == ExOp::Havoc) return true;
    for (auto& a : e->args)
      if (has_havoc(a)) return true;
    return false;
  }

  // all expressions obtained by fixing each Havoc node to a range value
  std::vector<ExprP> substitutions(const ExprP& e) {
    std::vector<ExprP> out;
    for (long long hv = o.havoc_min; hv <= o.havoc_max; ++hv)
      out.push_back(subst_first(e, hv));
    // expressions with several havocs: expand repeatedly
    bool more = true;
    while (more) {
      more = false;
      std::vector<ExprP> nxt;
      for (auto& x : out) {
        if (has_havoc(x)) {
          more = true;
          for (long long hv = o.havoc_min; hv <= o.havoc_max; ++hv)
            nxt.push_back(subst_first(x, hv));
        } else {
          nxt.push_back(x);
        }
      }
      out = std::move(nxt);
    }
    return out;
  }

  static ExprP subst_first(const ExprP& e, long long v) {
    bool done = false;
    return subst_rec(e, v, done);
  }
  static ExprP subst_rec(const ExprP& e, long long v, bool& done) {
    if (done) return e;
    if (e->op == ExOp::Havoc) {
      done = true;
      return Expr::lit(v);
    }
    if (e->args.empty()) return e;
    auto n = std::make_shared<Expr>(*e);
    n->args.clear();
    for (auto& a : e->args) n->args.push_back(subst_rec(a, v, done));
    return n;
  }

  TableResult run() {
    auto out_edges = p.cfa.out_edges();
    TState init;
    init.loc = p.cfa.entry;
    init.vals.assign(p.vars.size(), 0LL);
    std::deque<TState> work{init};
    std::set<std::string> seen{init.key()};
    total = 1;
    while (!work.empty() && !failed) {
      TState s = work.front();
      work.pop_front();
      for (int ei : out_edges[s.loc]) {
        const Edge& e = p.cfa.edges[ei];
        std::vector<TState> nxt;
        run_cmds(s, e.cmds, 0, nxt);
        if (failed) break;
        for (auto& t : nxt) {
          t.loc = e.dst;
          if (seen.insert(t.key()).second) {
            work.push_back(t);
            ++total;
            if (total > o.max_states) {
              res.kind = TableResult::BoundExhausted;
              res.visited = total;
              return res;
            }
          }
        }
      }
    }
    res.visited = total;
    return res;
  }
};

}  // namespace

TableResult check_with_table(const HeapFreeProgram& p, const InvTable& table,
                             const TableOpts& opts) {
  Checker c(p, table, opts);
  return c.run();
}

InvTable exhaustive_table(const std::vector<StructDecl>& structs,
                          long long budget,
                          const std::vector<long long>& data_vals,
                          long long flow_max) {
  InvTable t;
  std::set<long long> dset(data_vals.begin(), data_vals.end());
  std::vector<long long> dv(dset.begin(), dset.end());
  for (auto& sd : structs) {
    std::vector<std::vector<long long>> rows;
    std::vector<std::vector<long long>> domains;
    {
      std::vector<long long> addrs;
      for (long long a = 1; a <= budget; ++a) addrs.push_back(a);
      domains.push_back(addrs);
    }
    for (auto& f : sd.fields) {
      std::vector<long long> d;
      if (f.is_ptr)
        for (long long a = 0; a <= budget; ++a) d.push_back(a);
      else
        d = dv;
      domains.push_back(d);
    }
    domains.push_back({0, 1});  // free
    {
      std::vector<long long> fl;
      for (long long v = 0; v <= flow_max; ++v) fl.push_back(v);
      domains.push_back(fl);
    }
    std::vector<size_t> idx(domains.size(), 0);
    for (;;) {
      std::vector<long long> row;
      for (size_t i = 0; i < domains.size(); ++i) row.push_back(domains[i][idx[i]]);
      rows.push_back(row);
      size_t i = 0;
      while (i < domains.size() && ++idx[i] == domains[i].size()) idx[i++] = 0;
      if (i == domains.size()) break;
    }
    t[sd.name] = std::move(rows);
  }
  return t;
}

std::vector<long long> program_literals(const Program& p) {
  std::set<long long> vals{0, 1};
  std::function<void(const ExprP&)> walk = [&](const ExprP& e) {
    if (!e) return;
    if (e->op == ExOp::IntLit) vals.insert(e->value);
    for (auto& a : e->args) walk(a);
  };
  for (auto& e : p.cfa.edges)
    for (auto& c : e.cmds) {
      walk(c.expr);
      for (auto& a : c.args) walk(a);
    }
  return std::vector<long long>(vals.begin(), vals.end());
}

InvTable table_from_invariant(const Program& p,
                              const std::vector<HEntry>& rows) {
  InvTable t;
  std::map<std::string, std::set<std::vector<long long>>> seen;
  for (auto& sd : p.structs) t[sd.name] = {};
  for (auto& r : rows) {
    if (r.cell.type < 0) continue;
    const StructDecl& sd = p.structs[r.cell.type];
    std::vector<long long> row{r.addr};
    for (auto v : r.cell.fields) row.push_back(v);
    row.push_back(r.cell.free_);
    row.push_back(r.flow.get_si());
    if (seen[sd.name].insert(row).second) t[sd.name].push_back(row);
  }
  return t;
}

}  // namespace fv
