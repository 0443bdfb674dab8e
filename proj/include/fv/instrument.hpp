#pragma once

#include "fv/analysis.hpp"
#include "fv/ast.hpp"
#include "fv/flow.hpp"

namespace fv {

struct InstOpts {
  bool concurrent = false;
  // emit alias reconciliation assumes at pulls (precision optimisation)
  bool alias_opt = true;
  FlowMode mode = FlowMode::Roles;
};

// Translates a heap program into a heap-free integer program over the
// per-pointer shadow variables <x>_<field>, <x>_free, <x>_flow, their
// backups <x>0_<field>, and the allocation counter __ctr. Heap cells are
// summarised by the uninterpreted per-struct invariant predicates Inv_T.
HeapFreeProgram instrument(const Program& p, const SiteMap& sm,
                           const InstOpts& opts);

}  // namespace fv
