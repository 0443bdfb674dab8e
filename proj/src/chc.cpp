#include "fv/chc.hpp"

#include <map>
#include <sstream>

namespace fv {
namespace {

bool is_bool_op(ExOp o) {
  switch (o) {
    case ExOp::Eq:
    case ExOp::Ne:
    case ExOp::Lt:
    case ExOp::Le:
    case ExOp::Gt:
    case ExOp::Ge:
    case ExOp::And:
    case ExOp::Or:
    case ExOp::Not:
      return true;
    default:
      return false;
  }
}

struct ClauseCtx {
  std::map<std::string, std::string> cur;  // variable -> current term
  std::vector<std::string> bound;          // quantified symbols
  std::vector<std::string> body;           // constraints and Inv atoms
  int fresh_ctr = 0;

  std::string fresh(const std::string& hint) {
    std::string n = "h!" + std::to_string(fresh_ctr++) + "!" + hint;
    bound.push_back(n);
    return n;
  }

  std::string as_int(const ExprP& e) {
    switch (e->op) {
      case ExOp::IntLit:
      case ExOp::Null: {
        long long v = e->op == ExOp::Null ? 0 : e->value;
        if (v < 0) return "(- " + std::to_string(-v) + ")";
        return std::to_string(v);
      }
      case ExOp::Var: return cur.at(e->var);
      case ExOp::Havoc: return fresh("hv");
      case ExOp::Add: return "(+ " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Sub: return "(- " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Mul: return "(* " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Ite:
        return "(ite " + as_bool(e->args[0]) + " " + as_int(e->args[1]) + " " +
               as_int(e->args[2]) + ")";
      default:
        if (is_bool_op(e->op)) return "(ite " + as_bool(e) + " 1 0)";
        return "0";
    }
  }

  std::string as_bool(const ExprP& e) {
    switch (e->op) {
      case ExOp::Eq: return "(= " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Ne:
        return "(distinct " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Lt: return "(< " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Le: return "(<= " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Gt: return "(> " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::Ge: return "(>= " + as_int(e->args[0]) + " " + as_int(e->args[1]) + ")";
      case ExOp::And: return "(and " + as_bool(e->args[0]) + " " + as_bool(e->args[1]) + ")";
      case ExOp::Or: return "(or " + as_bool(e->args[0]) + " " + as_bool(e->args[1]) + ")";
      case ExOp::Not: return "(not " + as_bool(e->args[0]) + ")";
      default: return "(distinct " + as_int(e) + " 0)";
    }
  }

  std::string inv_atom(const Command& c) {
    std::string s = "(Inv_" + c.type_name;
    for (auto& a : c.args) s += " " + as_int(a);
    return s + ")";
  }
};

}  // namespace

std::string encode_chc(const HeapFreeProgram& p, const std::string& name) {
  std::ostringstream os;
  os << "; horn encoding of " << name << "\n(set-logic HORN)\n";
  for (auto& inv : p.invs) {
    os << "(declare-fun Inv_" << inv.type_name << " (";
    for (int i = 0; i < inv.arity; ++i) os << (i ? " Int" : "Int");
    os << ") Bool)\n";
  }
  size_t nv = p.vars.size();
  auto pred = [&](int loc) { return "L" + std::to_string(loc); };
  for (int l = 0; l < p.cfa.nlocs; ++l) {
    os << "(declare-fun " << pred(l) << " (";
    for (size_t i = 0; i < nv; ++i) os << (i ? " Int" : "Int");
    os << ") Bool)\n";
  }

  // initial clause: all variables zero
  os << "(assert (" << pred(p.cfa.entry);
  for (size_t i = 0; i < nv; ++i) os << " 0";
  os << "))\n";

  int goal_ctr = 0;
  for (auto& e : p.cfa.edges) {
    ClauseCtx cx;
    std::string head_args;
    for (auto& v : p.vars) {
      std::string s = "v!" + v.name;
      cx.cur[v.name] = s;
      cx.bound.push_back(s);
      head_args += " " + s;
    }
    std::string src_atom = "(" + pred(e.src) + head_args + ")";
    cx.body.push_back(src_atom);

    auto emit_clause = [&](const std::string& head) {
      os << "(assert (forall (";
      for (size_t i = 0; i < cx.bound.size(); ++i)
        os << (i ? " (" : "(") << cx.bound[i] << " Int)";
      os << ") (=> (and";
      for (auto& b : cx.body) os << " " << b;
      os << ") " << head << ")))\n";
    };

    for (auto& c : e.cmds) {
      switch (c.kind) {
        case CmdKind::Assign:
          cx.cur[c.var] = cx.as_int(c.expr);
          break;
        case CmdKind::Havoc:
          cx.cur[c.var] = cx.fresh(c.var);
          break;
        case CmdKind::Assume:
          cx.body.push_back(cx.as_bool(c.expr));
          break;
        case CmdKind::AssumeInv:
          cx.body.push_back(cx.inv_atom(c));
          break;
        case CmdKind::Assert: {
          ClauseCtx goal = cx;
          goal.body.push_back("(not " + goal.as_bool(c.expr) + ")");
          std::swap(goal, cx);
          emit_clause("false");
          std::swap(goal, cx);
          cx.body.push_back(cx.as_bool(c.expr));
          ++goal_ctr;
          break;
        }
        case CmdKind::AssertInv: {
          ClauseCtx goal = cx;
          goal.body.push_back("(not " + goal.inv_atom(c) + ")");
          std::swap(goal, cx);
          emit_clause("false");
          std::swap(goal, cx);
          cx.body.push_back(cx.inv_atom(c));
          ++goal_ctr;
          break;
        }
        default:
          break;  // no other command kinds occur in heap-free programs
      }
    }
    std::string dst_args;
    for (auto& v : p.vars) dst_args += " " + cx.cur.at(v.name);
    emit_clause("(" + pred(e.dst) + dst_args + ")");
  }
  os << "; " << goal_ctr << " goal clauses\n(check-sat)\n";
  return os.str();
}

}  // namespace fv
