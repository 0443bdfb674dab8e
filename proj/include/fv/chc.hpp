#pragma once

#include <string>
#include <vector>

#include "fv/ast.hpp"

namespace fv {

// SMT-LIB 2 constrained Horn clause encoding of a heap-free program: one
// predicate per control location over all program variables, one Boolean
// predicate per struct invariant, a goal clause per assertion. `sat` means
// no assertion is reachable.
std::string encode_chc(const HeapFreeProgram& p, const std::string& name);

struct SolveResult {
  enum Kind { Sat, Unsat, Unknown, Timeout, Error } kind = Error;
  std::string detail;
};

// Runs `argv` (argv[0] = executable) on the given file, appending the file
// path as the last argument, and interprets the first token of stdout.
SolveResult run_solver(const std::vector<std::string>& argv,
                       const std::string& file, int timeout_secs);

}  // namespace fv
