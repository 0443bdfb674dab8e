#pragma once

#include <string>

#include "fv/ast.hpp"

namespace fv {

// Parses, type-checks and lowers a program in the surface syntax.
// Throws DiagError on malformed input.
Program parse_program(const std::string& src, const std::string& filename);

}  // namespace fv
