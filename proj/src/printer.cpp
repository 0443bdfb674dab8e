#include "fv/printer.hpp"

#include <sstream>

namespace fv {
namespace {

int prec(ExOp op) {
  switch (op) {
    case ExOp::Or: return 1;
    case ExOp::And: return 2;
    case ExOp::Eq:
    case ExOp::Ne:
    case ExOp::Lt:
    case ExOp::Le:
    case ExOp::Gt:
    case ExOp::Ge: return 3;
    case ExOp::Add:
    case ExOp::Sub: return 4;
    case ExOp::Mul: return 5;
    case ExOp::Not: return 6;
    default: return 7;
  }
}

const char* op_sym(ExOp op) {
  switch (op) {
    case ExOp::Or: return "||";
    case ExOp::And: return "&&";
    case ExOp::Eq: return "==";
    case ExOp::Ne: return "!=";
    case ExOp::Lt: return "<";
    case ExOp::Le: return "<=";
    case ExOp::Gt: return ">";
    case ExOp::Ge: return ">=";
    case ExOp::Add: return "+";
    case ExOp::Sub: return "-";
    case ExOp::Mul: return "*";
    default: return "?";
  }
}

void pe(std::ostream& os, const ExprP& e, int parent_prec) {
  int p = prec(e->op);
  switch (e->op) {
    case ExOp::IntLit: os << e->value; return;
    case ExOp::Null: os << "null"; return;
    case ExOp::Var: os << e->var; return;
    case ExOp::Havoc: os << "havoc"; return;
    case ExOp::Nondet: os << "*"; return;
    case ExOp::Not:
      os << "!";
      pe(os, e->args[0], p);
      return;
    case ExOp::Ite:
      os << "ite(";
      pe(os, e->args[0], 0);
      os << ", ";
      pe(os, e->args[1], 0);
      os << ", ";
      pe(os, e->args[2], 0);
      os << ")";
      return;
    default: break;
  }
  bool paren = p < parent_prec;
  if (paren) os << "(";
  pe(os, e->args[0], p);
  os << " " << op_sym(e->op) << " ";
  pe(os, e->args[1], p + 1);
  if (paren) os << ")";
}

void inv_args(std::ostream& os, const Command& c) {
  os << "Inv_" << c.type_name << "(";
  for (size_t i = 0; i < c.args.size(); ++i) {
    if (i) os << ", ";
    pe(os, c.args[i], 0);
  }
  os << ")";
}

}  // namespace

std::string print_expr(const ExprP& e) {
  std::ostringstream os;
  pe(os, e, 0);
  return os.str();
}

std::string print_command(const Command& c) {
  std::ostringstream os;
  switch (c.kind) {
    case CmdKind::Assign:
      os << c.var << " := " << print_expr(c.expr);
      break;
    case CmdKind::Read:
      os << c.var << " := " << c.var2 << "." << c.field;
      break;
    case CmdKind::Write:
      os << c.var << "." << c.field << " := " << print_expr(c.expr);
      break;
    case CmdKind::Malloc:
      os << c.var << " := malloc(" << c.type_name << ")";
      break;
    case CmdKind::Free:
      os << "free(" << c.var << ")";
      break;
    case CmdKind::Assume:
      os << "assume(" << print_expr(c.expr) << ")";
      break;
    case CmdKind::Assert:
      os << "assert(" << print_expr(c.expr) << ")";
      break;
    case CmdKind::Lock:
      os << "lock(" << c.var << ")";
      break;
    case CmdKind::Unlock:
      os << "unlock(" << c.var << ")";
      break;
    case CmdKind::Havoc:
      os << "havoc " << c.var;
      break;
    case CmdKind::AssumeInv:
      os << "assume_inv ";
      inv_args(os, c);
      break;
    case CmdKind::AssertInv:
      os << "assert_inv ";
      inv_args(os, c);
      break;
  }
  return os.str();
}

namespace {

void print_stmts(std::ostream& os, const std::vector<StmtP>& ss, int ind) {
  std::string pad(ind * 2, ' ');
  for (auto& s : ss) {
    switch (s->kind) {
      case StKind::Basic:
        os << pad << print_command(s->cmd) << ";\n";
        break;
      case StKind::While:
        os << pad << "while ("
           << (s->cond->op == ExOp::Nondet ? "*" : print_expr(s->cond)) << ") {\n";
        print_stmts(os, s->body, ind + 1);
        os << pad << "}\n";
        break;
      case StKind::If:
        os << pad << "if ("
           << (s->cond->op == ExOp::Nondet ? "*" : print_expr(s->cond)) << ") {\n";
        print_stmts(os, s->body, ind + 1);
        os << pad << "}";
        if (!s->els.empty()) {
          os << " else {\n";
          print_stmts(os, s->els, ind + 1);
          os << pad << "}";
        }
        os << "\n";
        break;
      case StKind::Atomic:
        os << pad << "atomic {\n";
        print_stmts(os, s->body, ind + 1);
        os << pad << "}\n";
        break;
    }
  }
}

}  // namespace

std::string print_program(const Program& p) {
  std::ostringstream os;
  for (auto& sd : p.structs) {
    os << "node " << sd.name << " {\n";
    for (auto& f : sd.fields) {
      if (f.is_ptr) {
        os << "  ptr " << f.target << " " << f.name;
        if (f.role == FlowRole::Generate) os << " [generate]";
        else if (f.role == FlowRole::Exclude) os << " [exclude]";
        else os << " [propagate]";
      } else {
        os << "  data " << f.name;
      }
      os << ";\n";
    }
    os << "}\n";
  }
  for (auto& v : p.vars) {
    if (v.is_ptr)
      os << "ptr " << v.type << " " << v.name << ";\n";
    else
      os << "data " << v.name << ";\n";
  }
  for (auto& m : p.locks) os << "lock " << m << ";\n";
  print_stmts(os, p.body, 0);
  return os.str();
}

std::string print_cfa(const Cfa& g) {
  std::ostringstream os;
  for (auto& e : g.edges) {
    if (e.cmds.empty()) {
      os << e.src << " -> " << e.dst << " : skip\n";
      continue;
    }
    for (auto& c : e.cmds)
      os << e.src << " -> " << e.dst << " : " << print_command(c) << "\n";
  }
  return os.str();
}

std::string print_heap_free(const HeapFreeProgram& p) {
  std::ostringstream os;
  for (auto& v : p.vars) os << "data " << v.name << ";\n";
  for (auto& s : p.invs) os << "pred Inv_" << s.type_name << "/" << s.arity << ";\n";
  os << "entry " << p.cfa.entry << "; exit " << p.cfa.exit << ";\n";
  os << print_cfa(p.cfa);
  return os.str();
}

}  // namespace fv
