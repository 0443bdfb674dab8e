#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fv/ast.hpp"
#include "fv/concrete.hpp"
#include "fv/flow.hpp"

namespace fv {

// A view state: the part of the heap referenced by pointer variables. In the
// flow-view domain every cell additionally carries its path-count ghost in
// `flow`. Null is never part of the view.
struct VState {
  std::map<std::string, long long> stack;
  Heap heap;
  FlowMap flow;
  // allocated since the last flow synchronisation; exempt from the
  // no-new-external-path locality condition
  std::set<Addr> fresh;

  std::string key() const;
};

// A row of the space invariant: a possible cell for an address outside every
// view. `flow` is meaningful in the flow-view domain only.
struct HEntry {
  Addr addr = 0;
  Cell cell;
  Nat flow = 0;

  std::string key(bool with_flow) const;
};

enum class Domain { View, FlowView };

struct AbsOpts {
  Domain domain = Domain::FlowView;
  long long addr_budget = 4;
  long long havoc_min = -2;
  long long havoc_max = 2;
  size_t max_states = 2000000;
  FlowMode mode = FlowMode::Roles;
  bool leak_check = true;
};

struct AbsResult {
  bool top = false;
  std::string top_reason;
  SourceLoc top_loc;
  bool bound_exhausted = false;
  std::map<int, std::vector<VState>> states;  // per location
  std::vector<HEntry> invariant;              // final space invariant H
  size_t visited = 0;
};

// Abstraction of a set of concrete states: per-state views plus the residual
// rows contributed to the space invariant.
std::pair<VState, std::vector<HEntry>> alpha_view(const Program& p,
                                                  const CState& c, Domain dom,
                                                  FlowMode mode);

// Bounded concretisation: all closed heaps over addresses 1..budget formed by
// completing the view with rows from H (flow-consistent ones in the flow-view
// domain).
std::vector<Heap> gamma_view(const Program& p, const VState& v,
                             const std::vector<HEntry>& H, Domain dom,
                             long long budget, FlowMode mode);

// Fixpoint of the abstract post over the chosen domain.
AbsResult analyze(const Program& p, const AbsOpts& opts);

}  // namespace fv
