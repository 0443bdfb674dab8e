#pragma once

#include <map>
#include <string>
#include <vector>

#include "fv/absint.hpp"
#include "fv/ast.hpp"

namespace fv {

// A finite interpretation of the invariant predicates: one tuple list per
// struct type, each tuple (addr, field_1..field_k, free, flow).
using InvTable = std::map<std::string, std::vector<std::vector<long long>>>;

struct TableOpts {
  long long addr_budget = 4;
  long long havoc_min = -2;
  long long havoc_max = 2;
  size_t max_states = 2000000;
};

struct TableResult {
  enum Kind { Pass, Fail, BoundExhausted } kind = Pass;
  std::string tag;  // failed assertion category
  SourceLoc loc;
  size_t visited = 0;
  // when an assert_inv pushed a tuple absent from the table, the offending
  // tuple; callers may add it and re-check (table saturation)
  std::string miss_type;
  std::vector<long long> miss_row;
};

// Explicit-state bounded model check of a heap-free program, interpreting
// assume_inv/assert_inv against the finite table. Havocked values not
// constrained by a table row range over a finite probe universe (the havoc
// range, the address budget, and every value occurring in the table).
TableResult check_with_table(const HeapFreeProgram& p, const InvTable& table,
                             const TableOpts& opts);

// All tuples over the bounded universe: addresses 1..budget, pointer fields
// 0..budget, data fields over `data_vals`, free 0/1, flow 0..flow_max.
InvTable exhaustive_table(const std::vector<StructDecl>& structs,
                          long long budget,
                          const std::vector<long long>& data_vals,
                          long long flow_max);

// Integer literals appearing in a program (for the data-field universe).
std::vector<long long> program_literals(const Program& p);

// Table induced by the rows of an abstract fixpoint's space invariant.
InvTable table_from_invariant(const Program& p,
                              const std::vector<HEntry>& rows);

}  // namespace fv
