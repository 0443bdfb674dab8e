#pragma once

#include <gmpxx.h>

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "fv/ast.hpp"

namespace fv {

using Addr = long long;
using Nat = mpz_class;  // flow quantities are unbounded naturals
using FlowMap = std::map<Addr, Nat>;

constexpr Addr kNull = 0;

// A heap cell. `fields` holds one value per declared field, in declaration
// order; pointer fields store addresses, data fields store integers.
struct Cell {
  int type = -1;
  std::vector<long long> fields;
  long long free_ = 0;
};

struct Heap {
  const std::vector<StructDecl>* structs = nullptr;
  std::map<Addr, Cell> cells;

  bool has(Addr a) const { return cells.count(a) != 0; }
  static Cell null_cell() {
    Cell c;
    c.type = -1;
    c.free_ = 1;
    return c;
  }
};

enum class FlowMode { Roles, GlobalRoots };

// Path-counting edge functions: constant zero, constant one (a marked source
// edge), or the identity (flow propagates unchanged).
enum class EdgeLabel { Zero, One, Id };

// Label of the edge from a to b. Matches the first non-excluded field of a
// whose value is b. Null is never a flow source, and source edges into null
// are dropped (an empty-collection marker points nowhere).
EdgeLabel edge_label(const Heap& h, Addr a, Addr b, FlowMode mode);

// Least fixpoint of the flow equations over dom(h) under the given inflow.
// Returns nullopt when the fixpoint does not exist (a flow-carrying cycle
// receives nonzero flow), i.e. the flow is UNDEFINED.
std::optional<FlowMap> compute_flow(const Heap& h, const FlowMap& inflow,
                                    FlowMode mode);

// Flow leaving h towards a single target (usually outside dom(h)).
Nat outflow_to(const Heap& h, const FlowMap& flow, Addr target, FlowMode mode);

// All external targets of h that receive nonzero outflow.
FlowMap outflow(const Heap& h, const FlowMap& flow, FlowMode mode);

// Splits the inflow of h = h0 ⊎ h1 into inflows for the two parts: each part
// receives the global inflow plus the flow crossing over from the other part.
// Returns nullopt when the global flow is undefined.
std::optional<std::pair<FlowMap, FlowMap>> decompose(const Heap& h,
                                                     const FlowMap& inflow,
                                                     const std::set<Addr>& dom0,
                                                     FlowMode mode);

// True when h contains no cycle along flow-carrying edges.
bool acyclic(const Heap& h, FlowMode mode);

// Locality check for an update of footprint h0 (with inflow in0) into h1:
// outflow is preserved on every target, h1 is acyclic, and no node of h0
// gains a flow-carrying path to an external target it could not reach
// before. Addresses in `fresh` (allocated during the update) are exempt from
// the path condition. Flows of both footprints must exist under in0.
bool view_local_acyc(const Heap& h0, const FlowMap& in0, const Heap& h1,
                     const std::set<Addr>& fresh, FlowMode mode);

enum class SyncStatus {
  Ok,            // locality holds; new footprint flow computed
  Inconsistent,  // stored flows admit no nonnegative inflow: state is spurious
  Top,           // locality violated: the update may affect the context
};

struct SyncResult {
  SyncStatus status;
  FlowMap flow;    // new flow for dom(after), valid when status == Ok
  FlowMap inflow;  // inflow recovered from the stored flows of `before`
};

// Footprint synchronisation: recovers the footprint inflow from the flow
// values stored in `before` (by cancellativity), checks locality of the
// update `before -> after`, and recomputes flow over dom(after).
// dom(after) must contain dom(before); fresh addresses get inflow 0.
SyncResult sync_fp(const Heap& before, const FlowMap& flow_before,
                   const Heap& after, const std::set<Addr>& fresh,
                   FlowMode mode);

}  // namespace fv
