#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fv {

struct SourceLoc {
  int line = 0;
  int col = 0;
};

// Role a pointer field plays in path counting.
enum class FlowRole { Generate, Propagate, Exclude };

struct FieldDecl {
  std::string name;
  bool is_ptr = false;
  std::string target;  // struct name the pointer refers to; empty for data
  FlowRole role = FlowRole::Propagate;
  SourceLoc loc;
};

struct StructDecl {
  std::string name;
  std::vector<FieldDecl> fields;
  SourceLoc loc;

  int field_index(const std::string& f) const {
    for (size_t i = 0; i < fields.size(); ++i)
      if (fields[i].name == f) return (int)i;
    return -1;
  }
};

struct Expr;
using ExprP = std::shared_ptr<const Expr>;

enum class ExOp {
  IntLit,
  Null,
  Var,
  Havoc,   // nondeterministic data value from the havoc range
  Nondet,  // '*' condition: either branch may be taken
  Add,
  Sub,
  Mul,
  Lt,
  Le,
  Gt,
  Ge,
  Eq,
  Ne,
  And,
  Or,
  Not,
  Ite,
};

struct Expr {
  ExOp op;
  long long value = 0;   // IntLit
  std::string var;       // Var
  std::vector<ExprP> args;
  SourceLoc loc;

  static ExprP lit(long long v) {
    auto e = std::make_shared<Expr>();
    e->op = ExOp::IntLit;
    e->value = v;
    return e;
  }
  static ExprP null_() {
    auto e = std::make_shared<Expr>();
    e->op = ExOp::Null;
    return e;
  }
  static ExprP mkvar(std::string n) {
    auto e = std::make_shared<Expr>();
    e->op = ExOp::Var;
    e->var = std::move(n);
    return e;
  }
  static ExprP mk(ExOp o, std::vector<ExprP> as) {
    auto e = std::make_shared<Expr>();
    e->op = o;
    e->args = std::move(as);
    return e;
  }
};

enum class CmdKind {
  Assign,     // var := expr
  Read,       // var := var2.field
  Write,      // var.field := expr
  Malloc,     // var := malloc(type_name)
  Free,       // free(var)
  Assume,     // assume(expr)
  Assert,     // assert(expr)
  Lock,       // lock(var)
  Unlock,     // unlock(var)
  Havoc,      // havoc var          (heap-free programs only)
  AssumeInv,  // assume Inv_T(args) (heap-free programs only)
  AssertInv,  // assert Inv_T(args) (heap-free programs only)
};

struct Command {
  CmdKind kind;
  std::string var;        // primary variable
  std::string var2;       // source variable for Read
  std::string field;
  std::string type_name;  // Malloc / AssumeInv / AssertInv
  ExprP expr;             // rhs or condition
  std::vector<ExprP> args;  // Inv arguments
  std::string tag;          // assertion category for diagnostics
  SourceLoc loc;
};

enum class StKind { Basic, While, If, Atomic };

struct Stmt;
using StmtP = std::shared_ptr<Stmt>;

struct Stmt {
  StKind kind;
  Command cmd;               // Basic
  ExprP cond;                // While / If; null means '*'
  std::vector<StmtP> body;   // While / If-then / Atomic
  std::vector<StmtP> els;    // If-else
  SourceLoc loc;
};

struct VarDecl {
  std::string name;
  bool is_ptr = false;
  std::string type;  // struct name for pointers; empty for data
  SourceLoc loc;
};

struct Edge {
  int src = 0;
  int dst = 0;
  std::vector<Command> cmds;  // executed in sequence; empty = skip
  bool atomic = false;
};

struct Cfa {
  int entry = 0;
  int exit = 0;
  int nlocs = 1;
  std::vector<Edge> edges;

  std::vector<std::vector<int>> out_edges() const {
    std::vector<std::vector<int>> o(nlocs);
    for (size_t i = 0; i < edges.size(); ++i) o[edges[i].src].push_back((int)i);
    return o;
  }
  std::vector<std::vector<int>> in_edges() const {
    std::vector<std::vector<int>> o(nlocs);
    for (size_t i = 0; i < edges.size(); ++i) o[edges[i].dst].push_back((int)i);
    return o;
  }
};

struct Program {
  std::string filename;
  std::vector<StructDecl> structs;
  std::vector<VarDecl> vars;
  std::vector<std::string> locks;
  std::vector<StmtP> body;
  Cfa cfa;  // filled in by lower()

  const StructDecl* find_struct(const std::string& n) const {
    for (auto& s : structs)
      if (s.name == n) return &s;
    return nullptr;
  }
  const VarDecl* find_var(const std::string& n) const {
    for (auto& v : vars)
      if (v.name == n) return &v;
    return nullptr;
  }
};

// Signature of a per-struct invariant predicate over integers:
// Inv_T(addr, field_1 .. field_k, free, flow).
struct InvSig {
  std::string type_name;
  int arity = 0;
};

struct HeapFreeProgram {
  std::vector<VarDecl> vars;  // all integer-valued
  Cfa cfa;
  std::vector<InvSig> invs;
};

}  // namespace fv
