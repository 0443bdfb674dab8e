#include "fv/analysis.hpp"

#include <algorithm>

namespace fv {

namespace {

std::set<std::string> all_ptr_vars(const Program& p) {
  std::set<std::string> s;
  for (auto& v : p.vars)
    if (v.is_ptr) s.insert(v.name);
  return s;
}

bool is_ptr_var(const Program& p, const std::string& n) {
  const VarDecl* v = p.find_var(n);
  return v && v->is_ptr;
}

// does the command collect rhs pointer variables (publication)?
void rhs_ptr_vars(const ExprP& e, std::set<std::string>& out, const Program& p) {
  if (!e) return;
  if (e->op == ExOp::Var && is_ptr_var(p, e->var)) out.insert(e->var);
  for (auto& a : e->args) rhs_ptr_vars(a, out, p);
}

}  // namespace

// w := y where y is a pointer variable makes w an alias of y's cell; such an
// assignment keeps the cell materialised under the new name
bool alias_src(const Program& p, const Command& c, std::string& src) {
  if (c.kind != CmdKind::Assign || !is_ptr_var(p, c.var)) return false;
  if (c.expr && c.expr->op == ExOp::Var && is_ptr_var(p, c.expr->var)) {
    src = c.expr->var;
    return true;
  }
  return false;
}

std::set<std::string> derefs(const Program& p, const Command& c) {
  (void)p;
  switch (c.kind) {
    case CmdKind::Read: return {c.var2};
    case CmdKind::Write: return {c.var};
    case CmdKind::Free: return {c.var};
    default: return {};
  }
}

SiteMap analyze_sites(const Program& p) {
  const Cfa& g = p.cfa;
  size_t ne = g.edges.size();
  SiteMap sm;
  sm.pulls.assign(ne, {});
  sm.evict_before.assign(ne, {});
  sm.evict_after.assign(ne, {});
  sm.mat.assign(g.nlocs, {});
  sm.owned.assign(g.nlocs, {});
  sm.locksets.assign(g.nlocs, {});
  sm.fresh.assign(g.nlocs, {});
  sm.reachable.assign(g.nlocs, false);

  auto out = g.out_edges();
  auto in = g.in_edges();

  // reachability
  {
    std::vector<int> wl{g.entry};
    sm.reachable[g.entry] = true;
    while (!wl.empty()) {
      int u = wl.back();
      wl.pop_back();
      for (int ei : out[u]) {
        int v = g.edges[ei].dst;
        if (!sm.reachable[v]) {
          sm.reachable[v] = true;
          wl.push_back(v);
        }
      }
    }
  }

  std::set<std::string> top = all_ptr_vars(p);

  // Materialisation: forward must-analysis made definite by merge evictions.
  // Dereferenced pointers are pulled just before the command; assignments to
  // a pointer evict its old entry; at merges, pointers materialised on some
  // but not all incoming edges are evicted on those edges.
  std::vector<std::set<std::string>> mat(g.nlocs, top);
  mat[g.entry] = {};
  auto edge_out = [&](int ei, const std::set<std::string>& m_in) {
    std::set<std::string> m = m_in;
    for (auto& c : g.edges[ei].cmds) {
      for (auto& d : derefs(p, c)) m.insert(d);
      if ((c.kind == CmdKind::Assign || c.kind == CmdKind::Read) &&
          is_ptr_var(p, c.var)) {
        std::string src;
        if (alias_src(p, c, src) && m.count(src))
          m.insert(c.var);
        else
          m.erase(c.var);
      }
      if (c.kind == CmdKind::Malloc) m.insert(c.var);
    }
    return m;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int l = 0; l < g.nlocs; ++l) {
      if (!sm.reachable[l] || l == g.entry) continue;
      std::set<std::string> meet = top;
      bool any = false;
      for (int ei : in[l]) {
        if (!sm.reachable[g.edges[ei].src]) continue;
        std::set<std::string> mo = edge_out(ei, mat[g.edges[ei].src]);
        if (!any) {
          meet = mo;
          any = true;
        } else {
          std::set<std::string> inter;
          std::set_intersection(meet.begin(), meet.end(), mo.begin(), mo.end(),
                                std::inserter(inter, inter.begin()));
          meet = inter;
        }
      }
      if (any && meet != mat[l]) {
        mat[l] = meet;
        changed = true;
      }
    }
  }
  sm.mat.assign(mat.begin(), mat.end());

  for (size_t ei = 0; ei < ne; ++ei) {
    const Edge& e = g.edges[ei];
    if (!sm.reachable[e.src]) continue;
    std::set<std::string> m = mat[e.src];
    for (auto& c : e.cmds) {
      for (auto& d : derefs(p, c))
        if (!m.count(d)) {
          sm.pulls[ei].push_back(d);
          m.insert(d);
        }
      if ((c.kind == CmdKind::Assign || c.kind == CmdKind::Read) &&
          is_ptr_var(p, c.var)) {
        std::string src;
        bool alias = alias_src(p, c, src) && m.count(src);
        if (m.count(c.var) && !(alias && src == c.var))
          sm.evict_before[ei].push_back(c.var);
        if (alias)
          m.insert(c.var);
        else
          m.erase(c.var);
      }
      if (c.kind == CmdKind::Malloc) {
        if (m.count(c.var)) sm.evict_before[ei].push_back(c.var);
        m.insert(c.var);
      }
    }
    for (auto& x : m)
      if (!mat[e.dst].count(x)) sm.evict_after[ei].push_back(x);
  }

  // Ownership: a freshly allocated pointer stays thread-local until its
  // address is stored into the heap, copied, evicted, or reassigned.
  std::vector<std::set<std::string>> owned(g.nlocs, top);
  owned[g.entry] = {};
  auto owned_out = [&](int ei, const std::set<std::string>& o_in) {
    std::set<std::string> o = o_in;
    int k = (int)ei;
    for (auto& c : g.edges[k].cmds) {
      std::set<std::string> published;
      if (c.kind == CmdKind::Write || c.kind == CmdKind::Assign)
        rhs_ptr_vars(c.expr, published, p);
      for (auto& x : published) o.erase(x);
      if ((c.kind == CmdKind::Assign || c.kind == CmdKind::Read) &&
          is_ptr_var(p, c.var))
        o.erase(c.var);
      if (c.kind == CmdKind::Malloc) o.insert(c.var);
    }
    for (auto& x : sm.pushes(k)) o.erase(x);
    return o;
  };
  changed = true;
  while (changed) {
    changed = false;
    for (int l = 0; l < g.nlocs; ++l) {
      if (!sm.reachable[l] || l == g.entry) continue;
      std::set<std::string> meet;
      bool any = false;
      for (int ei : in[l]) {
        if (!sm.reachable[g.edges[ei].src]) continue;
        std::set<std::string> oo = owned_out(ei, owned[g.edges[ei].src]);
        if (!any) {
          meet = oo;
          any = true;
        } else {
          std::set<std::string> inter;
          std::set_intersection(meet.begin(), meet.end(), oo.begin(), oo.end(),
                                std::inserter(inter, inter.begin()));
          meet = inter;
        }
      }
      if (any && meet != owned[l]) {
        owned[l] = meet;
        changed = true;
      }
    }
  }
  sm.owned.assign(owned.begin(), owned.end());

  // Locksets: forward must-analysis, gen at lock, kill at unlock.
  std::vector<std::set<std::string>> ls(g.nlocs);
  for (int l = 0; l < g.nlocs; ++l)
    for (auto& m : p.locks) ls[l].insert(m);
  ls[g.entry] = {};
  auto ls_out = [&](int ei, const std::set<std::string>& s_in) {
    std::set<std::string> s = s_in;
    for (auto& c : g.edges[ei].cmds) {
      if (c.kind == CmdKind::Lock) s.insert(c.var);
      if (c.kind == CmdKind::Unlock) s.erase(c.var);
    }
    return s;
  };
  changed = true;
  while (changed) {
    changed = false;
    for (int l = 0; l < g.nlocs; ++l) {
      if (!sm.reachable[l] || l == g.entry) continue;
      std::set<std::string> meet;
      bool any = false;
      for (int ei : in[l]) {
        if (!sm.reachable[g.edges[ei].src]) continue;
        std::set<std::string> so = ls_out(ei, ls[g.edges[ei].src]);
        if (!any) {
          meet = so;
          any = true;
        } else {
          std::set<std::string> inter;
          std::set_intersection(meet.begin(), meet.end(), so.begin(), so.end(),
                                std::inserter(inter, inter.begin()));
          meet = inter;
        }
      }
      if (any && meet != ls[l]) {
        ls[l] = meet;
        changed = true;
      }
    }
  }
  sm.locksets.assign(ls.begin(), ls.end());

  // Fresh-since-sync: must-analysis; syncs run at pull/eviction edges.
  std::vector<std::set<std::string>> fr(g.nlocs, top);
  fr[g.entry] = {};
  auto fr_out = [&](int ei, const std::set<std::string>& f_in) {
    std::set<std::string> f = f_in;
    if (!sm.pulls[ei].empty() || !sm.evict_before[ei].empty()) f.clear();
    for (auto& c : g.edges[ei].cmds) {
      if ((c.kind == CmdKind::Assign || c.kind == CmdKind::Read) &&
          is_ptr_var(p, c.var)) {
        std::string src;
        if (alias_src(p, c, src) && f.count(src))
          f.insert(c.var);
        else
          f.erase(c.var);
      }
      if (c.kind == CmdKind::Malloc) f.insert(c.var);
    }
    if (!sm.evict_after[ei].empty()) f.clear();
    return f;
  };
  changed = true;
  while (changed) {
    changed = false;
    for (int l = 0; l < g.nlocs; ++l) {
      if (!sm.reachable[l] || l == g.entry) continue;
      std::set<std::string> meet;
      bool any = false;
      for (int ei : in[l]) {
        if (!sm.reachable[g.edges[ei].src]) continue;
        std::set<std::string> fo = fr_out(ei, fr[g.edges[ei].src]);
        if (!any) {
          meet = fo;
          any = true;
        } else {
          std::set<std::string> inter;
          std::set_intersection(meet.begin(), meet.end(), fo.begin(), fo.end(),
                                std::inserter(inter, inter.begin()));
          meet = inter;
        }
      }
      if (any && meet != fr[l]) {
        fr[l] = meet;
        changed = true;
      }
    }
  }
  sm.fresh.assign(fr.begin(), fr.end());

  return sm;
}

}  // namespace fv
