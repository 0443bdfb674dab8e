#pragma once

#include <set>
#include <string>
#include <vector>

#include "fv/ast.hpp"

namespace fv {

// Placement of materialisation/eviction sites over a lowered program.
// Pull/push entries are keyed by edge index; per-location facts by location.
// Evictions are inserted so that the set of materialised pointers at each
// location is definite (the same along every path into it).
struct SiteMap {
  std::vector<std::vector<std::string>> pulls;         // before the edge's commands
  std::vector<std::vector<std::string>> evict_before;  // overwritten pointers
  std::vector<std::vector<std::string>> evict_after;   // merge reconciliation
  std::vector<std::set<std::string>> mat;       // materialised pointers per location
  std::vector<std::set<std::string>> owned;     // thread-local pointers per location
  std::vector<std::set<std::string>> locksets;  // locks certainly held per location
  std::vector<std::set<std::string>> fresh;     // allocated since the last sync
  std::vector<bool> reachable;                  // per location

  // pushes(e) = evict_before(e) ∪ evict_after(e)
  std::vector<std::string> pushes(int edge) const {
    std::vector<std::string> r = evict_before[edge];
    r.insert(r.end(), evict_after[edge].begin(), evict_after[edge].end());
    return r;
  }
};

// Pointers dereferenced by a command (targets of field access or free).
std::set<std::string> derefs(const Program& p, const Command& c);

// true when c is `w := y` between pointer variables; src receives y
bool alias_src(const Program& p, const Command& c, std::string& src);

SiteMap analyze_sites(const Program& p);

}  // namespace fv
