#pragma once

#include <stdexcept>
#include <string>

#include "fv/ast.hpp"

namespace fv {

// Error with a source position, formatted as file:line:col: message.
class DiagError : public std::runtime_error {
 public:
  DiagError(const std::string& file, SourceLoc loc, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(loc.line) + ":" +
                           std::to_string(loc.col) + ": " + msg),
        loc_(loc) {}
  SourceLoc loc() const { return loc_; }

 private:
  SourceLoc loc_;
};

}  // namespace fv
