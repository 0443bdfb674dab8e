#include "fv/flow.hpp"

#include <algorithm>
#include <cassert>
#include <functional>

namespace fv {

EdgeLabel edge_label(const Heap& h, Addr a, Addr b, FlowMode mode) {
  if (a == kNull) return EdgeLabel::Zero;
  auto it = h.cells.find(a);
  if (it == h.cells.end() || it->second.type < 0) return EdgeLabel::Zero;
  const StructDecl& sd = (*h.structs)[it->second.type];
  for (size_t i = 0; i < sd.fields.size(); ++i) {
    const FieldDecl& f = sd.fields[i];
    if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
    if (it->second.fields[i] != b) continue;
    if (mode == FlowMode::GlobalRoots) return EdgeLabel::Id;
    if (f.role == FlowRole::Generate) {
      if (b == kNull) continue;  // no source edge into null
      return EdgeLabel::One;
    }
    return EdgeLabel::Id;
  }
  return EdgeLabel::Zero;
}

namespace {

struct EdgeSet {
  // adjacency over dom(h): (src, dst, label != Zero)
  std::vector<Addr> nodes;
  std::map<Addr, int> index;
  std::vector<std::vector<std::pair<int, EdgeLabel>>> out;  // by src index
  std::vector<std::vector<std::pair<int, EdgeLabel>>> in;   // by dst index
};

EdgeSet build_edges(const Heap& h, FlowMode mode) {
  EdgeSet es;
  for (auto& [a, c] : h.cells) {
    es.index[a] = (int)es.nodes.size();
    es.nodes.push_back(a);
  }
  es.out.resize(es.nodes.size());
  es.in.resize(es.nodes.size());
  for (auto& [a, c] : h.cells) {
    if (a == kNull || c.type < 0) continue;
    const StructDecl& sd = (*h.structs)[c.type];
    std::set<Addr> seen;  // first matching field wins per target
    for (size_t i = 0; i < sd.fields.size(); ++i) {
      const FieldDecl& f = sd.fields[i];
      if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
      Addr b = c.fields[i];
      if (seen.count(b)) continue;
      bool gen = mode == FlowMode::Roles && f.role == FlowRole::Generate;
      if (gen && b == kNull) continue;  // dropped, later fields may match
      seen.insert(b);
      if (!h.has(b)) continue;  // external target, not part of the fixpoint
      int si = es.index.at(a), di = es.index.at(b);
      EdgeLabel l = gen ? EdgeLabel::One : EdgeLabel::Id;
      es.out[si].push_back({di, l});
      es.in[di].push_back({si, l});
    }
  }
  return es;
}

// Kosaraju-style SCC over Id-edges only (the edges that can form divergent
// cycles). Returns the SCC id per node.
std::vector<int> id_sccs(const EdgeSet& es, int& nscc,
                         std::vector<bool>& nontrivial) {
  int n = (int)es.nodes.size();
  std::vector<int> order;
  std::vector<bool> vis(n, false);
  std::function<void(int)> dfs1 = [&](int u) {
    vis[u] = true;
    for (auto& [v, l] : es.out[u])
      if (l == EdgeLabel::Id && !vis[v]) dfs1(v);
    order.push_back(u);
  };
  for (int u = 0; u < n; ++u)
    if (!vis[u]) dfs1(u);
  std::vector<int> comp(n, -1);
  nscc = 0;
  std::function<void(int, int)> dfs2 = [&](int u, int c) {
    comp[u] = c;
    for (auto& [v, l] : es.in[u])
      if (l == EdgeLabel::Id && comp[v] < 0) dfs2(v, c);
  };
  for (int i = n - 1; i >= 0; --i)
    if (comp[order[i]] < 0) dfs2(order[i], nscc++);
  nontrivial.assign(nscc, false);
  std::vector<int> size(nscc, 0);
  for (int u = 0; u < n; ++u) ++size[comp[u]];
  for (int u = 0; u < n; ++u) {
    if (size[comp[u]] > 1) nontrivial[comp[u]] = true;
    for (auto& [v, l] : es.out[u])
      if (l == EdgeLabel::Id && v == u) nontrivial[comp[u]] = true;
  }
  return comp;
}

}  // namespace

std::optional<FlowMap> compute_flow(const Heap& h, const FlowMap& inflow,
                                    FlowMode mode) {
  EdgeSet es = build_edges(h, mode);
  int n = (int)es.nodes.size();

  // which nodes can carry nonzero flow
  std::vector<bool> nz(n, false);
  for (int u = 0; u < n; ++u) {
    auto it = inflow.find(es.nodes[u]);
    if (it != inflow.end() && it->second > 0) nz[u] = true;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int u = 0; u < n; ++u) {
      for (auto& [v, l] : es.out[u]) {
        bool add = l == EdgeLabel::One || (l == EdgeLabel::Id && nz[u]);
        if (add && !nz[v]) {
          nz[v] = true;
          changed = true;
        }
      }
    }
  }

  // the fixpoint diverges iff some propagation cycle carries nonzero flow
  int nscc = 0;
  std::vector<bool> nontrivial;
  std::vector<int> comp = id_sccs(es, nscc, nontrivial);
  for (int u = 0; u < n; ++u)
    if (nontrivial[comp[u]] && nz[u]) return std::nullopt;

  // topological order of the Id-edge condensation
  std::vector<int> indeg(nscc, 0);
  std::vector<std::vector<int>> cadj(nscc);
  for (int u = 0; u < n; ++u)
    for (auto& [v, l] : es.out[u])
      if (l == EdgeLabel::Id && comp[u] != comp[v]) {
        cadj[comp[u]].push_back(comp[v]);
        ++indeg[comp[v]];
      }
  std::vector<int> topo;
  for (int c = 0; c < nscc; ++c)
    if (indeg[c] == 0) topo.push_back(c);
  for (size_t i = 0; i < topo.size(); ++i)
    for (int d : cadj[topo[i]])
      if (--indeg[d] == 0) topo.push_back(d);

  std::vector<std::vector<int>> members(nscc);
  for (int u = 0; u < n; ++u) members[comp[u]].push_back(u);

  FlowMap fl;
  std::vector<Nat> val(n, 0);
  for (int c : topo) {
    for (int u : members[c]) {
      Nat v = 0;
      auto it = inflow.find(es.nodes[u]);
      if (it != inflow.end()) v += it->second;
      for (auto& [p, l] : es.in[u]) {
        if (l == EdgeLabel::One)
          v += 1;
        else if (comp[p] != c)  // same-SCC members are all zero here
          v += val[p];
      }
      val[u] = v;
    }
  }
  for (int u = 0; u < n; ++u) fl[es.nodes[u]] = val[u];
  return fl;
}

Nat outflow_to(const Heap& h, const FlowMap& flow, Addr target, FlowMode mode) {
  Nat v = 0;
  for (auto& [a, c] : h.cells) {
    EdgeLabel l = edge_label(h, a, target, mode);
    if (l == EdgeLabel::One)
      v += 1;
    else if (l == EdgeLabel::Id)
      v += flow.at(a);
  }
  return v;
}

FlowMap outflow(const Heap& h, const FlowMap& flow, FlowMode mode) {
  FlowMap out;
  std::set<Addr> targets;
  for (auto& [a, c] : h.cells) {
    if (c.type < 0) continue;
    const StructDecl& sd = (*h.structs)[c.type];
    for (size_t i = 0; i < sd.fields.size(); ++i)
      if (sd.fields[i].is_ptr && !h.has(c.fields[i]) && c.fields[i] != kNull)
        targets.insert(c.fields[i]);
  }
  for (Addr t : targets) {
    Nat v = outflow_to(h, flow, t, mode);
    if (v > 0) out[t] = v;
  }
  return out;
}

std::optional<std::pair<FlowMap, FlowMap>> decompose(const Heap& h,
                                                     const FlowMap& inflow,
                                                     const std::set<Addr>& dom0,
                                                     FlowMode mode) {
  auto fl = compute_flow(h, inflow, mode);
  if (!fl) return std::nullopt;
  FlowMap in0, in1;
  for (auto& [a, c] : h.cells) {
    bool in_h0 = dom0.count(a) != 0;
    Nat v = 0;
    auto it = inflow.find(a);
    if (it != inflow.end()) v += it->second;
    for (auto& [b, cb] : h.cells) {
      if ((dom0.count(b) != 0) == in_h0) continue;  // same part: internal edge
      EdgeLabel l = edge_label(h, b, a, mode);
      if (l == EdgeLabel::One)
        v += 1;
      else if (l == EdgeLabel::Id)
        v += fl->at(b);
    }
    (in_h0 ? in0 : in1)[a] = v;
  }
  return std::make_pair(in0, in1);
}

bool acyclic(const Heap& h, FlowMode mode) {
  EdgeSet es = build_edges(h, mode);
  int n = (int)es.nodes.size();
  // cycle over any non-zero-labelled edges
  std::vector<int> state(n, 0);
  std::function<bool(int)> dfs = [&](int u) -> bool {
    state[u] = 1;
    for (auto& [v, l] : es.out[u]) {
      if (state[v] == 1) return false;
      if (state[v] == 0 && !dfs(v)) return false;
    }
    state[u] = 2;
    return true;
  };
  for (int u = 0; u < n; ++u)
    if (state[u] == 0 && !dfs(u)) return false;
  return true;
}

namespace {

// Can a reach an edge leaving h towards target t (flow-carrying path of
// length >= 1 staying in h, then one exit edge)? Reflexive start: a path may
// leave directly from a.
std::set<std::pair<Addr, Addr>> external_paths(const Heap& h, FlowMode mode) {
  EdgeSet es = build_edges(h, mode);
  int n = (int)es.nodes.size();
  // internal reachability closure (reflexive)
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int u = 0; u < n; ++u) reach[u][u] = true;
  for (int u = 0; u < n; ++u)
    for (auto& [v, l] : es.out[u]) reach[u][v] = true;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (reach[i][k])
        for (int j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = true;
  std::set<std::pair<Addr, Addr>> out;
  for (int u = 0; u < n; ++u) {
    Addr a = es.nodes[u];
    auto& c = h.cells.at(a);
    if (a == kNull || c.type < 0) continue;
    const StructDecl& sd = (*h.structs)[c.type];
    for (size_t i = 0; i < sd.fields.size(); ++i) {
      const FieldDecl& f = sd.fields[i];
      if (!f.is_ptr || f.role == FlowRole::Exclude) continue;
      Addr t = c.fields[i];
      // null is a sink inside every footprint, never an external target
      if (h.has(t) || t == kNull) continue;
      if (edge_label(h, a, t, mode) == EdgeLabel::Zero) continue;
      for (int s = 0; s < n; ++s)
        if (reach[s][u]) out.insert({es.nodes[s], t});
    }
  }
  return out;
}

}  // namespace

bool view_local_acyc(const Heap& h0, const FlowMap& in0, const Heap& h1,
                     const std::set<Addr>& fresh, FlowMode mode) {
  auto f0 = compute_flow(h0, in0, mode);
  auto f1 = compute_flow(h1, in0, mode);
  if (!f0 || !f1) return false;
  if (!acyclic(h1, mode)) return false;
  // outflow preserved on every target either side can reach
  FlowMap o0 = outflow(h0, *f0, mode), o1 = outflow(h1, *f1, mode);
  std::set<Addr> targets;
  for (auto& [t, v] : o0) targets.insert(t);
  for (auto& [t, v] : o1) targets.insert(t);
  for (Addr t : targets) {
    Nat a = outflow_to(h0, *f0, t, mode);
    Nat b = outflow_to(h1, *f1, t, mode);
    if (a != b) return false;
  }
  // no new flow-carrying paths from surviving nodes out of the footprint
  auto p0 = external_paths(h0, mode);
  auto p1 = external_paths(h1, mode);
  for (auto& [a, t] : p1) {
    if (fresh.count(a)) continue;
    if (!h0.has(a)) continue;  // not a surviving node
    if (!p0.count({a, t})) return false;
  }
  return true;
}

SyncResult sync_fp(const Heap& before, const FlowMap& flow_before,
                   const Heap& after, const std::set<Addr>& fresh,
                   FlowMode mode) {
  SyncResult r;
  // recover the footprint inflow from stored flow values
  for (auto& [a, c] : before.cells) {
    Nat contrib = 0;
    for (auto& [b, cb] : before.cells) {
      EdgeLabel l = edge_label(before, b, a, mode);
      if (l == EdgeLabel::One)
        contrib += 1;
      else if (l == EdgeLabel::Id)
        contrib += flow_before.at(b);
    }
    Nat in = flow_before.at(a) - contrib;
    if (in < 0) {
      r.status = SyncStatus::Inconsistent;
      return r;
    }
    r.inflow[a] = in;
  }
  for (auto& [a, c] : after.cells)
    if (!before.has(a)) r.inflow[a] = 0;

  // stored flows must actually be the fixpoint under the recovered inflow
  auto f0 = compute_flow(before, r.inflow, mode);
  if (!f0 || *f0 != flow_before) {
    r.status = SyncStatus::Inconsistent;
    return r;
  }

  if (!view_local_acyc(before, r.inflow, after, fresh, mode)) {
    r.status = SyncStatus::Top;
    return r;
  }
  auto f1 = compute_flow(after, r.inflow, mode);
  assert(f1);
  r.status = SyncStatus::Ok;
  r.flow = *f1;
  return r;
}

}  // namespace fv
