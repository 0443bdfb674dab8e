#include "fv/instrument.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <set>
#include <sstream>

#include "fv/diag.hpp"

namespace fv {
namespace {

ExprP V(const std::string& n) { return Expr::mkvar(n); }
ExprP L(long long v) { return Expr::lit(v); }
ExprP bin(ExOp o, ExprP a, ExprP b) { return Expr::mk(o, {std::move(a), std::move(b)}); }
ExprP eq(ExprP a, ExprP b) { return bin(ExOp::Eq, a, b); }
ExprP ne(ExprP a, ExprP b) { return bin(ExOp::Ne, a, b); }
ExprP ge(ExprP a, ExprP b) { return bin(ExOp::Ge, a, b); }
ExprP gt(ExprP a, ExprP b) { return bin(ExOp::Gt, a, b); }
ExprP add(ExprP a, ExprP b) { return bin(ExOp::Add, a, b); }
ExprP sub(ExprP a, ExprP b) { return bin(ExOp::Sub, a, b); }
ExprP and_(ExprP a, ExprP b) { return bin(ExOp::And, a, b); }
ExprP or_(ExprP a, ExprP b) { return bin(ExOp::Or, a, b); }
ExprP not_(ExprP a) { return Expr::mk(ExOp::Not, {std::move(a)}); }
ExprP ite(ExprP c, ExprP t, ExprP f) {
  return Expr::mk(ExOp::Ite, {std::move(c), std::move(t), std::move(f)});
}

Command c_assign(const std::string& v, ExprP e, SourceLoc loc = {}) {
  Command c;
  c.kind = CmdKind::Assign;
  c.var = v;
  c.expr = std::move(e);
  c.loc = loc;
  return c;
}
Command c_havoc(const std::string& v, SourceLoc loc = {}) {
  Command c;
  c.kind = CmdKind::Havoc;
  c.var = v;
  c.loc = loc;
  return c;
}
Command c_assume(ExprP e, SourceLoc loc = {}) {
  Command c;
  c.kind = CmdKind::Assume;
  c.expr = std::move(e);
  c.loc = loc;
  return c;
}
Command c_assert(ExprP e, const std::string& tag, SourceLoc loc) {
  Command c;
  c.kind = CmdKind::Assert;
  c.expr = std::move(e);
  c.tag = tag;
  c.loc = loc;
  return c;
}
Command c_inv(CmdKind k, const std::string& type, std::vector<ExprP> args,
              SourceLoc loc = {}) {
  Command c;
  c.kind = k;
  c.type_name = type;
  c.args = std::move(args);
  c.loc = loc;
  return c;
}

struct Emitter {
  const Program& p;
  const SiteMap& sm;
  const InstOpts& o;
  HeapFreeProgram hf;
  int next_loc;
  std::vector<bool> dirty;  // per original location

  // linear builder
  int cur = 0;
  bool atomic = false;
  std::vector<Command> pending;

  Emitter(const Program& pr, const SiteMap& s, const InstOpts& op)
      : p(pr), sm(s), o(op), next_loc(pr.cfa.nlocs) {}

  // ---- naming ----
  static std::string shadow(const std::string& x, const std::string& f) {
    return x + "_" + f;
  }
  static std::string backup(const std::string& x, const std::string& f) {
    return x + "0_" + f;
  }
  const StructDecl* type_of(const std::string& x) const {
    const VarDecl* v = p.find_var(x);
    return v && v->is_ptr ? p.find_struct(v->type) : nullptr;
  }
  bool same_type(const std::string& a, const std::string& b) const {
    return type_of(a) == type_of(b);
  }
  // all per-cell slots: declared fields then free and flow
  std::vector<std::string> slots(const StructDecl* t) const {
    std::vector<std::string> r;
    for (auto& f : t->fields) r.push_back(f.name);
    r.push_back("free");
    r.push_back("flow");
    return r;
  }

  // ---- builder ----
  void emit(Command c) { pending.push_back(std::move(c)); }
  int cut() {
    int nl = next_loc++;
    hf.cfa.edges.push_back(Edge{cur, nl, std::move(pending), atomic});
    pending.clear();
    cur = nl;
    return nl;
  }
  void finish(int dst) {
    hf.cfa.edges.push_back(Edge{cur, dst, std::move(pending), atomic});
    pending.clear();
  }
  void guarded(ExprP g, std::vector<Command> body) {
    int a = cut();
    int join = next_loc++;
    std::vector<Command> thenc;
    thenc.push_back(c_assume(g));
    for (auto& c : body) thenc.push_back(std::move(c));
    hf.cfa.edges.push_back(Edge{a, join, std::move(thenc), atomic});
    hf.cfa.edges.push_back(Edge{a, join, {c_assume(not_(g))}, atomic});
    cur = join;
  }

  // ---- expression translation ----
  ExprP tr(const ExprP& e) {
    if (e->op == ExOp::Null) return L(0);
    if (e->args.empty()) return e;
    auto n = std::make_shared<Expr>(*e);
    n->args.clear();
    for (auto& a : e->args) n->args.push_back(tr(a));
    return n;
  }

  // ---- flow contribution expressions ----
  // Contribution of member q to target t: first non-excluded field of q whose
  // value equals t decides; generate yields 1 (never into null), propagate
  // yields qflow.
  ExprP contrib(const std::string& q, ExprP t, bool use_backup, ExprP qflow) {
    const StructDecl* T = type_of(q);
    ExprP acc = L(0);
    for (int i = (int)T->fields.size() - 1; i >= 0; --i) {
      const FieldDecl& f = T->fields[i];
      if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
      ExprP fv = V(use_backup ? backup(q, f.name) : shadow(q, f.name));
      ExprP cond = eq(fv, t);
      ExprP val;
      if (f.role == FlowRole::Generate) {
        cond = and_(cond, ne(t, L(0)));
        val = L(1);
      } else {
        val = qflow;
      }
      acc = ite(cond, val, acc);
    }
    return acc;
  }

  // active-member guard: not an alias of an earlier same-type member
  ExprP act(const std::vector<std::string>& m, size_t i) {
    ExprP g = L(1);
    bool any = false;
    for (size_t j = 0; j < i; ++j) {
      if (!same_type(m[j], m[i])) continue;
      ExprP c = ne(V(m[i]), V(m[j]));
      g = any ? and_(g, c) : c;
      any = true;
    }
    return g;
  }

  ExprP sum_contrib(const std::vector<std::string>& m, ExprP t, bool use_backup,
                    const std::vector<ExprP>& flows) {
    ExprP s = L(0);
    bool any = false;
    for (size_t j = 0; j < m.size(); ++j) {
      ExprP term = ite(act(m, j), contrib(m[j], t, use_backup, flows[j]), L(0));
      s = any ? add(s, term) : term;
      any = true;
    }
    return any ? s : L(0);
  }

  std::vector<ExprP> member_flows(const std::vector<std::string>& m,
                                  bool use_backup) {
    std::vector<ExprP> r;
    for (auto& q : m)
      r.push_back(V(use_backup ? backup(q, "flow") : shadow(q, "flow")));
    return r;
  }

  // some field of m[i] points at m[j]
  ExprP edge_exists(const std::vector<std::string>& m, size_t i, size_t j,
                    bool use_backup) {
    const StructDecl* T = type_of(m[i]);
    ExprP g;
    bool any = false;
    for (auto& f : T->fields) {
      if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
      ExprP c = eq(V(use_backup ? backup(m[i], f.name) : shadow(m[i], f.name)),
                   V(m[j]));
      g = any ? or_(g, c) : c;
      any = true;
    }
    if (!any) return L(0);
    return and_(and_(act(m, i), act(m, j)), g);
  }

  // all simple cycles over member indices, canonical (min index first)
  std::vector<std::vector<size_t>> cycles(size_t n) {
    std::vector<std::vector<size_t>> out;
    std::vector<size_t> seq;
    std::function<void(size_t)> rec = [&](size_t start) {
      out.push_back(seq);
      for (size_t k = start + 1; k < n; ++k) {
        if (std::find(seq.begin(), seq.end(), k) != seq.end()) continue;
        seq.push_back(k);
        rec(start);
        seq.pop_back();
      }
    };
    for (size_t s = 0; s < n; ++s) {
      seq = {s};
      rec(s);
    }
    // out currently holds all simple paths starting at their min element;
    // each represents the cycle closing back to its head
    return out;
  }

  void emit_cycle_constraints(const std::vector<std::string>& m,
                              bool use_backup, bool as_assert, SourceLoc loc) {
    for (auto& cyc : cycles(m.size())) {
      ExprP g;
      bool any = false;
      for (size_t k = 0; k < cyc.size(); ++k) {
        size_t a = cyc[k], b = cyc[(k + 1) % cyc.size()];
        ExprP e = edge_exists(m, a, b, use_backup);
        g = any ? and_(g, e) : e;
        any = true;
      }
      if (!any) continue;
      if (as_assert)
        emit(c_assert(not_(g), "sync-locality", loc));
      else
        emit(c_assume(not_(g)));
    }
  }

  // ---- footprint synchronisation (straight-line flow recomputation) ----
  void emit_sync(const std::vector<std::string>& m,
                 const std::set<std::string>& fresh, SourceLoc loc) {
    size_t n = m.size();
    if (n == 0) return;

    // 1. recover the footprint inflow; reject inconsistent completions
    std::vector<ExprP> flows0 = member_flows(m, true);
    for (size_t i = 0; i < n; ++i) {
      ExprP s = sum_contrib(m, V(m[i]), true, flows0);
      emit(c_assign("__in0_" + m[i], sub(V(backup(m[i], "flow")), s)));
      emit(c_assume(ge(V("__in0_" + m[i]), L(0))));
    }
    // 2. the pre-state footprint is acyclic (maintained global invariant)
    emit_cycle_constraints(m, true, false, loc);

    // 3. recompute flow: n Kleene rounds over the updated fields
    for (size_t i = 0; i < n; ++i)
      emit(c_assign("__fl0_" + m[i], V("__in0_" + m[i])));
    std::string banks[2] = {"__fl0_", "__fl1_"};
    int b = 0;
    for (size_t r = 0; r < n; ++r) {
      std::vector<ExprP> prev;
      for (auto& q : m) prev.push_back(V(banks[b] + q));
      for (size_t i = 0; i < n; ++i)
        emit(c_assign(banks[1 - b] + m[i],
                      add(V("__in0_" + m[i]), sum_contrib(m, V(m[i]), false, prev))));
      b = 1 - b;
    }
    for (size_t i = 0; i < n; ++i)
      emit(c_assign(shadow(m[i], "flow"), V(banks[b] + m[i])));

    // 4. the updated footprint must stay acyclic
    emit_cycle_constraints(m, false, true, loc);

    // 5. no new flow-carrying path from a surviving member out of the
    // footprint (freshly allocated members are exempt)
    auto emit_reach = [&](const std::string& pre, bool use_backup) {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          emit(c_assign(pre + m[i] + "_" + m[j],
                        ite(edge_exists(m, i, j, use_backup), L(1), L(0))));
        }
      for (size_t k = 0; k < n; ++k)
        for (size_t i = 0; i < n; ++i)
          for (size_t j = 0; j < n; ++j) {
            if (i == j || i == k || j == k) continue;
            std::string rij = pre + m[i] + "_" + m[j];
            emit(c_assign(rij,
                          ite(or_(eq(V(rij), L(1)),
                                  and_(eq(V(pre + m[i] + "_" + m[k]), L(1)),
                                       eq(V(pre + m[k] + "_" + m[j]), L(1)))),
                              L(1), L(0))));
          }
    };
    emit_reach("__r0_", true);
    emit_reach("__r_", false);
    auto reach = [&](const std::string& pre, size_t i, size_t j) -> ExprP {
      if (i == j) return L(1);
      return eq(V(pre + m[i] + "_" + m[j]), L(1));
    };
    for (size_t i = 0; i < n; ++i) {
      if (fresh.count(m[i])) continue;
      for (size_t j = 0; j < n; ++j) {
        const StructDecl* T = type_of(m[j]);
        for (auto& f : T->fields) {
          if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
          ExprP t = V(shadow(m[j], f.name));
          ExprP ext = ne(t, L(0));
          for (size_t l = 0; l < n; ++l)
            if (p.find_struct(f.target) == type_of(m[l]))
              ext = and_(ext, ne(t, V(m[l])));
          ExprP path_new = and_(and_(act(m, i), act(m, j)), reach("__r_", i, j));
          if (f.role == FlowRole::Generate)
            path_new = and_(path_new, ne(t, L(0)));
          ExprP path_old = L(0);
          bool any = false;
          for (size_t j2 = 0; j2 < n; ++j2) {
            const StructDecl* T2 = type_of(m[j2]);
            for (auto& f2 : T2->fields) {
              if (!f2.is_ptr || f2.role == FlowRole::Exclude) continue;
              ExprP c = and_(and_(act(m, j2), reach("__r0_", i, j2)),
                             eq(V(backup(m[j2], f2.name)), t));
              path_old = any ? or_(path_old, c) : c;
              any = true;
            }
          }
          emit(c_assert(or_(not_(and_(ext, path_new)), path_old),
                        "sync-locality", loc));
        }
      }
    }

    // 6. outflow into every external target is preserved
    std::vector<ExprP> flows1 = member_flows(m, false);
    std::set<std::string> seen;
    std::vector<ExprP> cands;
    for (size_t j = 0; j < n; ++j) {
      const StructDecl* T = type_of(m[j]);
      for (auto& f : T->fields) {
        if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
        for (auto& nme : {backup(m[j], f.name), shadow(m[j], f.name)})
          if (seen.insert(nme).second) cands.push_back(V(nme));
      }
    }
    for (auto& t : cands) {
      ExprP ext = ne(t, L(0));  // null is a sink, never an external target
      for (size_t l = 0; l < n; ++l) ext = and_(ext, ne(t, V(m[l])));
      ExprP ob = sum_contrib(m, t, true, flows0);
      ExprP oa = sum_contrib(m, t, false, flows1);
      emit(c_assert(or_(not_(ext), eq(ob, oa)), "sync-locality", loc));
    }

    // 7. refresh backups
    for (size_t i = 0; i < n; ++i)
      for (auto& s : slots(type_of(m[i])))
        emit(c_assign(backup(m[i], s), V(shadow(m[i], s))));
  }

  std::vector<ExprP> inv_args(const std::string& x) {
    std::vector<ExprP> args{V(x)};
    for (auto& s : slots(type_of(x))) args.push_back(V(shadow(x, s)));
    return args;
  }

  // Pushes x's row into the invariant. `keepers` are pointers that stay
  // materialised: when one of them aliases x the cell remains in the view and
  // nothing is pushed (guarded at runtime).
  void emit_evict(const std::string& x, const std::set<std::string>& owned,
                  SourceLoc loc,
                  const std::set<std::string>& keepers = {}) {
    std::vector<Command> body;
    if (owned.count(x))
      body.push_back(c_assert(or_(eq(V(shadow(x, "free")), L(1)),
                                  gt(V(shadow(x, "flow")), L(0))),
                              "leak", loc));
    body.push_back(c_inv(CmdKind::AssertInv, type_of(x)->name, inv_args(x), loc));
    ExprP guard;
    bool any = false;
    for (auto& q : keepers) {
      if (q == x || !same_type(q, x)) continue;
      ExprP c = ne(V(x), V(q));
      guard = any ? and_(guard, c) : c;
      any = true;
    }
    if (!any) {
      for (auto& c : body) emit(c);
    } else {
      guarded(guard, std::move(body));
    }
  }

  void emit_pull(const std::string& x, const std::set<std::string>& peers,
                 SourceLoc loc) {
    const StructDecl* T = type_of(x);
    emit(c_assert(ne(V(x), L(0)), "unsafe-access", loc));
    for (auto& s : slots(T)) emit(c_havoc(shadow(x, s), loc));
    emit(c_inv(CmdKind::AssumeInv, T->name, inv_args(x), loc));
    if (o.alias_opt) {
      for (auto& q : peers) {
        if (q == x || !same_type(q, x)) continue;
        ExprP all = L(1);
        bool any = false;
        for (auto& s : slots(T)) {
          ExprP c = eq(V(shadow(x, s)), V(shadow(q, s)));
          all = any ? and_(all, c) : c;
          any = true;
        }
        emit(c_assume(or_(ne(V(x), V(q)), all)));
      }
    }
    // the view's outflow into x bounds its path count from below
    std::vector<std::string> m(peers.begin(), peers.end());
    m.erase(std::remove(m.begin(), m.end(), x), m.end());
    if (!m.empty())
      emit(c_assume(ge(V(shadow(x, "flow")),
                       sum_contrib(m, V(x), false, member_flows(m, false)))));
    emit(c_assert(eq(V(shadow(x, "free")), L(0)), "unsafe-access", loc));
    for (auto& s : slots(T)) emit(c_assign(backup(x, s), V(shadow(x, s))));
  }

  // dangling checks for pointer comparisons inside an expression
  void emit_compare_checks(const ExprP& e, const std::set<std::string>& mat,
                           SourceLoc loc) {
    if (!e) return;
    if (e->op == ExOp::Eq || e->op == ExOp::Ne) {
      for (int i = 0; i < 2; ++i) {
        const ExprP& a = e->args[i];
        const ExprP& other = e->args[1 - i];
        if (a->op != ExOp::Var) continue;
        const VarDecl* v = p.find_var(a->var);
        if (!v || !v->is_ptr) continue;
        // comparison with null is always allowed
        if (other->op == ExOp::Null) continue;
        ExprP o = tr(other);
        if (mat.count(a->var)) {
          emit(c_assert(or_(or_(eq(V(a->var), L(0)), eq(o, L(0))),
                            eq(V(shadow(a->var, "free")), L(0))),
                        "dangling-compare", loc));
        } else {
          const StructDecl* T = p.find_struct(v->type);
          std::vector<Command> body;
          for (auto& s : slots(T)) body.push_back(c_havoc("__chk_" + T->name + "_" + s, loc));
          std::vector<ExprP> args{V(a->var)};
          for (auto& s : slots(T)) args.push_back(V("__chk_" + T->name + "_" + s));
          body.push_back(c_inv(CmdKind::AssumeInv, T->name, args, loc));
          body.push_back(c_assert(eq(V("__chk_" + T->name + "_free"), L(0)),
                                  "dangling-compare", loc));
          guarded(and_(ne(V(a->var), L(0)), ne(o, L(0))), std::move(body));
        }
      }
    }
    for (auto& a : e->args) emit_compare_checks(a, mat, loc);
  }

  void emit_interference(const std::set<std::string>& mat,
                         const std::set<std::string>& owned,
                         const std::set<std::string>& lockset) {
    if (!lockset.empty()) return;  // protected region: no interference
    std::vector<std::string> repulled;
    for (auto& x : mat) {
      if (owned.count(x)) continue;
      const StructDecl* T = type_of(x);
      for (auto& s : slots(T)) emit(c_havoc(shadow(x, s)));
      emit(c_inv(CmdKind::AssumeInv, T->name, inv_args(x)));
      repulled.push_back(x);
    }
    if (repulled.empty()) return;
    // reconcile aliases among materialised pointers
    std::vector<std::string> mv(mat.begin(), mat.end());
    for (size_t i = 0; i < mv.size(); ++i)
      for (size_t j = i + 1; j < mv.size(); ++j) {
        if (!same_type(mv[i], mv[j])) continue;
        bool touched = std::count(repulled.begin(), repulled.end(), mv[i]) ||
                       std::count(repulled.begin(), repulled.end(), mv[j]);
        if (!touched) continue;
        ExprP all = L(1);
        bool any = false;
        for (auto& s : slots(type_of(mv[i]))) {
          ExprP c = eq(V(shadow(mv[i], s)), V(shadow(mv[j], s)));
          all = any ? and_(all, c) : c;
          any = true;
        }
        emit(c_assume(or_(ne(V(mv[i]), V(mv[j])), all)));
      }
    for (auto& x : repulled)
      for (auto& s : slots(type_of(x)))
        emit(c_assign(backup(x, s), V(shadow(x, s))));
  }

  // ---- per-command translation ----
  void translate_cmd(const Command& c, std::set<std::string>& mat,
                     const std::set<std::string>& owned,
                     const std::set<std::string>& lockset, bool in_atomic,
                     bool& d, std::set<std::string>& fresh) {
    switch (c.kind) {
      case CmdKind::Assign: {
        emit_compare_checks(c.expr, mat, c.loc);
        emit(c_assign(c.var, tr(c.expr), c.loc));
        std::string src;
        if (alias_src(p, c, src) && mat.count(src)) {
          // aliasing keeps the cell materialised under the new name
          if (src != c.var) {
            for (auto& s : slots(type_of(c.var))) {
              emit(c_assign(shadow(c.var, s), V(shadow(src, s)), c.loc));
              emit(c_assign(backup(c.var, s), V(backup(src, s)), c.loc));
            }
            mat.insert(c.var);
            if (fresh.count(src))
              fresh.insert(c.var);
            else
              fresh.erase(c.var);
          }
        }
        break;
      }
      case CmdKind::Read: {
        emit(c_assert(ne(V(c.var2), L(0)), "unsafe-access", c.loc));
        emit(c_assert(eq(V(shadow(c.var2, "free")), L(0)), "unsafe-access", c.loc));
        emit(c_assign(c.var, V(shadow(c.var2, c.field)), c.loc));
        break;
      }
      case CmdKind::Write: {
        emit_compare_checks(c.expr, mat, c.loc);
        emit(c_assert(ne(V(c.var), L(0)), "unsafe-access", c.loc));
        emit(c_assert(eq(V(shadow(c.var, "free")), L(0)), "unsafe-access", c.loc));
        if (o.concurrent && !in_atomic && !owned.count(c.var) && lockset.empty())
          emit(c_assert(L(0), "unprotected-write", c.loc));
        emit(c_assign(shadow(c.var, c.field), tr(c.expr), c.loc));
        for (auto& v : p.vars) {
          if (!v.is_ptr || v.name == c.var || !same_type(v.name, c.var)) continue;
          emit(c_assign(shadow(v.name, c.field),
                        ite(eq(V(v.name), V(c.var)), V(shadow(c.var, c.field)),
                            V(shadow(v.name, c.field))),
                        c.loc));
        }
        const StructDecl* T = type_of(c.var);
        const FieldDecl& fd = T->fields[T->field_index(c.field)];
        if (fd.is_ptr && fd.role != FlowRole::Exclude) d = true;
        break;
      }
      case CmdKind::Malloc: {
        emit(c_assign("__ctr", add(V("__ctr"), L(1)), c.loc));
        emit(c_assign(c.var, V("__ctr"), c.loc));
        for (auto& s : slots(type_of(c.var)))
          emit(c_assign(shadow(c.var, s), L(0), c.loc));
        for (auto& s : slots(type_of(c.var)))
          emit(c_assign(backup(c.var, s), L(0), c.loc));
        mat.insert(c.var);
        fresh.insert(c.var);
        break;
      }
      case CmdKind::Free: {
        emit(c_assert(ne(V(c.var), L(0)), "unsafe-access", c.loc));
        emit(c_assert(eq(V(shadow(c.var, "free")), L(0)), "double-free", c.loc));
        if (o.concurrent && !in_atomic && !owned.count(c.var) && lockset.empty())
          emit(c_assert(L(0), "unprotected-write", c.loc));
        emit(c_assign(shadow(c.var, "free"), L(1), c.loc));
        for (auto& v : p.vars) {
          if (!v.is_ptr || v.name == c.var || !same_type(v.name, c.var)) continue;
          emit(c_assign(shadow(v.name, "free"),
                        ite(eq(V(v.name), V(c.var)), L(1),
                            V(shadow(v.name, "free"))),
                        c.loc));
        }
        break;
      }
      case CmdKind::Assume:
        emit_compare_checks(c.expr, mat, c.loc);
        emit(c_assume(tr(c.expr), c.loc));
        break;
      case CmdKind::Assert:
        emit_compare_checks(c.expr, mat, c.loc);
        emit(c_assert(tr(c.expr), c.tag.empty() ? "user" : c.tag, c.loc));
        break;
      case CmdKind::Lock:
      case CmdKind::Unlock:
        break;  // lockset effects are static
      default:
        break;
    }
  }

  // ---- main driver ----
  void run() {
    hf.cfa.entry = p.cfa.entry;
    hf.cfa.nlocs = p.cfa.nlocs;
    compute_dirty();

    for (size_t ei = 0; ei < p.cfa.edges.size(); ++ei) {
      const Edge& e = p.cfa.edges[ei];
      if (!sm.reachable[e.src]) continue;
      cur = e.src;
      atomic = e.atomic;
      pending.clear();

      std::set<std::string> mat = sm.mat[e.src];
      std::set<std::string> fresh = sm.fresh[e.src];
      const std::set<std::string>& owned = sm.owned[e.src];
      const std::set<std::string>& lockset = sm.locksets[e.src];
      bool d = dirty[e.src];

      if (o.concurrent && !e.atomic) emit_interference(mat, owned, lockset);

      assert(e.cmds.size() <= 1);
      for (auto& c : e.cmds) {
        bool publish = o.concurrent && c.kind == CmdKind::Unlock;
        bool want_sync = !sm.pulls[ei].empty() || !sm.evict_before[ei].empty() ||
                         publish;
        if (d && want_sync) {
          std::vector<std::string> mv(mat.begin(), mat.end());
          emit_sync(mv, fresh, c.loc);
          d = false;
          fresh.clear();
        }
        for (auto& x : sm.pulls[ei]) {
          emit_pull(x, mat, c.loc);
          mat.insert(x);
        }
        {
          std::set<std::string> keepers = mat;
          for (auto& x : sm.evict_before[ei]) keepers.erase(x);
          for (auto& x : sm.evict_before[ei]) {
            emit_evict(x, owned, c.loc, keepers);
            mat.erase(x);
            fresh.erase(x);
          }
        }
        if (publish)
          for (auto& x : mat)
            if (!owned.count(x)) emit_evict(x, {}, c.loc);
        translate_cmd(c, mat, owned, lockset, e.atomic, d, fresh);
        if (!sm.evict_after[ei].empty()) {
          if (d) {
            std::vector<std::string> mv(mat.begin(), mat.end());
            emit_sync(mv, fresh, c.loc);
            d = false;
            fresh.clear();
          }
          std::set<std::string> keepers = mat;
          for (auto& x : sm.evict_after[ei]) keepers.erase(x);
          for (auto& x : sm.evict_after[ei]) {
            emit_evict(x, owned, c.loc, keepers);
            mat.erase(x);
          }
        }
      }
      if (e.cmds.empty() && !sm.evict_after[ei].empty()) {
        // merge reconciliation on an empty edge
        if (d) {
          std::vector<std::string> mv(mat.begin(), mat.end());
          emit_sync(mv, fresh, SourceLoc{});
          d = false;
        }
        std::set<std::string> keepers = mat;
        for (auto& x : sm.evict_after[ei]) keepers.erase(x);
        for (auto& x : sm.evict_after[ei]) {
          emit_evict(x, sm.owned[e.src], SourceLoc{}, keepers);
          mat.erase(x);
        }
      }
      finish(e.dst);
    }

    // exit: evict everything, then the leak check per struct type
    int old_exit = p.cfa.exit;
    if (sm.reachable[old_exit]) {
      cur = old_exit;
      atomic = false;
      pending.clear();
      std::set<std::string> mat = sm.mat[old_exit];
      if (dirty[old_exit] && !mat.empty()) {
        std::vector<std::string> mv(mat.begin(), mat.end());
        emit_sync(mv, sm.fresh[old_exit], SourceLoc{});
      }
      for (auto& x : mat) emit_evict(x, sm.owned[old_exit], SourceLoc{});
      for (auto& T : p.structs) {
        std::string pre = "__lk_" + T.name + "_";
        emit(c_havoc(pre + "addr"));
        std::vector<ExprP> args{V(pre + "addr")};
        std::vector<std::string> ss;
        for (auto& f : T.fields) ss.push_back(f.name);
        ss.push_back("free");
        ss.push_back("flow");
        for (auto& s : ss) {
          emit(c_havoc(pre + s));
          args.push_back(V(pre + s));
        }
        emit(c_assume(ne(V(pre + "addr"), L(0))));
        emit(c_inv(CmdKind::AssumeInv, T.name, args));
        emit(c_assert(or_(gt(V(pre + "flow"), L(0)), eq(V(pre + "free"), L(1))),
                      "leak", SourceLoc{}));
      }
      int final_exit = next_loc++;
      finish(final_exit);
      hf.cfa.exit = final_exit;
    } else {
      hf.cfa.exit = old_exit;
    }
    hf.cfa.nlocs = next_loc;

    for (auto& T : p.structs)
      hf.invs.push_back(InvSig{T.name, 1 + (int)T.fields.size() + 2});

    declare_vars();
  }

  bool writes_flow_edge(const Command& c) const {
    if (c.kind != CmdKind::Write) return false;
    const StructDecl* T = type_of(c.var);
    const FieldDecl& fd = T->fields[T->field_index(c.field)];
    return fd.is_ptr && fd.role != FlowRole::Exclude;
  }

  void compute_dirty() {
    dirty.assign(p.cfa.nlocs, false);
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t ei = 0; ei < p.cfa.edges.size(); ++ei) {
        const Edge& e = p.cfa.edges[ei];
        if (!sm.reachable[e.src]) continue;
        bool d = dirty[e.src];
        for (auto& c : e.cmds) {
          bool publish = o.concurrent && c.kind == CmdKind::Unlock;
          if (d && (!sm.pulls[ei].empty() || !sm.evict_before[ei].empty() ||
                    publish))
            d = false;
          if (writes_flow_edge(c)) d = true;
          if (d && !sm.evict_after[ei].empty()) d = false;
        }
        if (e.cmds.empty() && !sm.evict_after[ei].empty()) d = false;
        if (d && !dirty[e.dst]) {
          dirty[e.dst] = true;
          changed = true;
        }
      }
    }
  }

  void collect_vars(const ExprP& e, std::set<std::string>& used) {
    if (!e) return;
    if (e->op == ExOp::Var) used.insert(e->var);
    for (auto& a : e->args) collect_vars(a, used);
  }

  void declare_vars() {
    std::set<std::string> used;
    for (auto& e : hf.cfa.edges)
      for (auto& c : e.cmds) {
        if (!c.var.empty()) used.insert(c.var);
        collect_vars(c.expr, used);
        for (auto& a : c.args) collect_vars(a, used);
      }
    // program variables always come first, in declaration order
    std::set<std::string> declared;
    for (auto& v : p.vars) {
      hf.vars.push_back(VarDecl{v.name, false, "", v.loc});
      declared.insert(v.name);
    }
    for (auto& n : used)
      if (!declared.count(n)) hf.vars.push_back(VarDecl{n, false, "", {}});
  }
};

}  // namespace

HeapFreeProgram instrument(const Program& p, const SiteMap& sm,
                           const InstOpts& opts) {
  if (opts.mode != FlowMode::Roles)
    throw DiagError(p.filename, SourceLoc{},
                    "instrumentation requires the field-role flow mode");
  Emitter em(p, sm, opts);
  em.run();
  return em.hf;
}

}  // namespace fv
