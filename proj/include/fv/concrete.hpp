#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fv/ast.hpp"
#include "fv/flow.hpp"

namespace fv {

// A concrete machine state. Pointer variables hold addresses, data variables
// hold integers. Addresses are handed out by a monotonic counter starting at
// 1 and are never reused; 0 is null.
struct CState {
  int loc = 0;
  std::map<std::string, long long> vars;
  Heap heap;
  long long ctr = 0;

  std::string key() const;
};

struct RunOpts {
  long long max_allocs = 4;
  long long havoc_min = -2;
  long long havoc_max = 2;
  size_t max_states = 500000;
  bool leak_check = true;
  FlowMode mode = FlowMode::Roles;
};

struct Verdict {
  enum Kind { Safe, Violation, BoundExhausted } kind = Safe;
  std::string vkind;  // unsafe-access | leak | double-free | dangling-compare | user
  SourceLoc loc;
  std::vector<std::string> trace;  // "src -> dst : command" per executed command
};

// Result of one small step along an edge: either successor states, or a
// violation raised by one of the edge's commands.
struct StepResult {
  bool violated = false;
  std::string vkind;
  SourceLoc loc;
  std::vector<CState> next;
  bool alloc_bound_hit = false;
};

CState initial_state(const Program& p);

// Executes the command sequence of one edge from the given state.
StepResult step(const Program& p, const CState& s, const Edge& e,
                const RunOpts& opts);

// Exhaustive bounded exploration (breadth-first, deduplicated).
Verdict run_bounded(const Program& p, const RunOpts& opts);

}  // namespace fv
