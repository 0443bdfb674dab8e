#pragma once

#include <string>

#include "fv/ast.hpp"

namespace fv {

std::string print_expr(const ExprP& e);
std::string print_command(const Command& c);

// Surface-syntax rendering; reparses to a structurally identical program.
std::string print_program(const Program& p);

// Edge-list rendering of a control-flow automaton, one line per command:
//   src -> dst : command
std::string print_cfa(const Cfa& g);

// Full rendering of a heap-free program: variable declarations, invariant
// signatures, then the edge list.
std::string print_heap_free(const HeapFreeProgram& p);

}  // namespace fv
