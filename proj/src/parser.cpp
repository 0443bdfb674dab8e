#include "fv/parser.hpp"

#include <cctype>
#include <set>

#include "fv/diag.hpp"

namespace fv {
namespace {

struct Token {
  enum Kind { Ident, Int, Punct, Eof } kind;
  std::string text;
  long long value = 0;
  SourceLoc loc;
};

class Lexer {
 public:
  Lexer(const std::string& src, const std::string& file) : src_(src), file_(file) {
    next_token();
  }
  const Token& cur() const { return cur_; }
  Token take() {
    Token t = cur_;
    next_token();
    return t;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw DiagError(file_, cur_.loc, msg);
  }

 private:
  void next_token() {
    skip_ws();
    cur_.loc = {line_, col_};
    if (pos_ >= src_.size()) {
      cur_.kind = Token::Eof;
      cur_.text = "<eof>";
      return;
    }
    char c = src_[pos_];
    if (std::isalpha((unsigned char)c) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
        advance();
      cur_.kind = Token::Ident;
      cur_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (std::isdigit((unsigned char)c)) {
      size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) advance();
      cur_.kind = Token::Int;
      cur_.text = src_.substr(start, pos_ - start);
      cur_.value = std::stoll(cur_.text);
      return;
    }
    static const char* two_char[] = {":=", "==", "!=", "<=", ">=", "&&", "||"};
    if (pos_ + 1 < src_.size()) {
      std::string two = src_.substr(pos_, 2);
      for (auto* t : two_char)
        if (two == t) {
          advance();
          advance();
          cur_.kind = Token::Punct;
          cur_.text = two;
          return;
        }
    }
    static const std::string singles = "{}();,.<>+-*!=[]";
    if (singles.find(c) != std::string::npos) {
      advance();
      cur_.kind = Token::Punct;
      cur_.text = std::string(1, c);
      return;
    }
    throw DiagError(file_, cur_.loc, std::string("unexpected character '") + c + "'");
  }

  void skip_ws() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace((unsigned char)src_[pos_])) advance();
      if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      break;
    }
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& src_;
  std::string file_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_;
};

// Expression type: a pointer to a named struct, or integer data.
struct Ty {
  bool is_ptr = false;
  std::string target;  // empty for the null literal (compatible with any ptr)
};

class Parser {
 public:
  Parser(const std::string& src, const std::string& file) : lx_(src, file), file_(file) {}

  Program run() {
    while (lx_.cur().kind != Token::Eof) parse_item();
    lower();
    return std::move(prog_);
  }

 private:
  // ---- helpers ----
  bool is_punct(const std::string& p) const {
    return lx_.cur().kind == Token::Punct && lx_.cur().text == p;
  }
  bool is_kw(const std::string& k) const {
    return lx_.cur().kind == Token::Ident && lx_.cur().text == k;
  }
  void expect_punct(const std::string& p) {
    if (!is_punct(p)) lx_.fail("expected '" + p + "', found '" + lx_.cur().text + "'");
    lx_.take();
  }
  std::string expect_ident() {
    if (lx_.cur().kind != Token::Ident) lx_.fail("expected identifier");
    return lx_.take().text;
  }
  [[noreturn]] void fail_at(SourceLoc loc, const std::string& msg) const {
    throw DiagError(file_, loc, msg);
  }

  // ---- declarations ----
  void parse_item() {
    if (is_kw("node")) {
      parse_struct();
    } else if (is_kw("ptr") || is_kw("data")) {
      parse_var_decl();
    } else if (is_kw("lock") && peek_is_decl()) {
      parse_lock_decl();
    } else {
      prog_.body.push_back(parse_stmt());
    }
  }

  // 'lock' starts both declarations (lock m;) and statements (lock(m);).
  bool peek_is_decl() {
    // after 'lock', a declaration continues with an identifier
    Lexer probe = lx_;
    probe.take();
    return probe.cur().kind == Token::Ident;
  }

  void parse_struct() {
    SourceLoc loc = lx_.cur().loc;
    lx_.take();  // node
    StructDecl sd;
    sd.loc = loc;
    sd.name = expect_ident();
    if (prog_.find_struct(sd.name)) fail_at(loc, "duplicate struct '" + sd.name + "'");
    expect_punct("{");
    while (!is_punct("}")) {
      FieldDecl fd;
      fd.loc = lx_.cur().loc;
      if (is_kw("ptr")) {
        lx_.take();
        fd.is_ptr = true;
        std::string a = expect_ident();
        if (lx_.cur().kind == Token::Ident && lx_.cur().text != "propagate" &&
            lx_.cur().text != "generate" && lx_.cur().text != "exclude") {
          fd.target = a;
          fd.name = expect_ident();
        } else {
          fd.target = sd.name;
          fd.name = a;
        }
        if (is_punct("[")) {
          lx_.take();
          std::string r = expect_ident();
          if (r == "propagate")
            fd.role = FlowRole::Propagate;
          else if (r == "generate")
            fd.role = FlowRole::Generate;
          else if (r == "exclude")
            fd.role = FlowRole::Exclude;
          else
            lx_.fail("unknown flow role '" + r + "'");
          expect_punct("]");
        }
      } else if (is_kw("data")) {
        lx_.take();
        fd.is_ptr = false;
        fd.name = expect_ident();
      } else {
        lx_.fail("expected field declaration");
      }
      if (sd.field_index(fd.name) >= 0)
        fail_at(fd.loc, "duplicate field '" + fd.name + "'");
      expect_punct(";");
      sd.fields.push_back(fd);
    }
    lx_.take();  // }
    prog_.structs.push_back(sd);
  }

  void parse_var_decl() {
    SourceLoc loc = lx_.cur().loc;
    bool is_ptr = lx_.take().text == "ptr";
    std::string type;
    std::vector<std::pair<std::string, SourceLoc>> names;
    std::string first = expect_ident();
    if (is_ptr && lx_.cur().kind == Token::Ident) {
      type = first;
      names.emplace_back(expect_ident(), loc);
    } else {
      names.emplace_back(first, loc);
    }
    while (is_punct(",")) {
      lx_.take();
      SourceLoc l2 = lx_.cur().loc;
      names.emplace_back(expect_ident(), l2);
    }
    expect_punct(";");
    if (is_ptr) {
      if (type.empty()) fail_at(loc, "pointer declaration requires a struct name");
      if (!prog_.find_struct(type)) fail_at(loc, "unknown struct '" + type + "'");
    }
    for (auto& [n, l] : names) {
      if (prog_.find_var(n)) fail_at(l, "duplicate variable '" + n + "'");
      prog_.vars.push_back(VarDecl{n, is_ptr, type, l});
    }
  }

  void parse_lock_decl() {
    lx_.take();  // lock
    for (;;) {
      SourceLoc l = lx_.cur().loc;
      std::string n = expect_ident();
      for (auto& m : prog_.locks)
        if (m == n) fail_at(l, "duplicate lock '" + n + "'");
      prog_.locks.push_back(n);
      if (!is_punct(",")) break;
      lx_.take();
    }
    expect_punct(";");
  }

  // ---- statements ----
  std::vector<StmtP> parse_block() {
    expect_punct("{");
    std::vector<StmtP> out;
    while (!is_punct("}")) out.push_back(parse_stmt());
    lx_.take();
    return out;
  }

  StmtP parse_stmt() {
    auto st = std::make_shared<Stmt>();
    st->loc = lx_.cur().loc;
    if (is_kw("while")) {
      lx_.take();
      st->kind = StKind::While;
      expect_punct("(");
      st->cond = parse_cond();
      expect_punct(")");
      st->body = parse_block();
      return st;
    }
    if (is_kw("if")) {
      lx_.take();
      st->kind = StKind::If;
      expect_punct("(");
      st->cond = parse_cond();
      expect_punct(")");
      st->body = parse_block();
      if (is_kw("else")) {
        lx_.take();
        st->els = parse_block();
      }
      return st;
    }
    if (is_kw("atomic")) {
      lx_.take();
      st->kind = StKind::Atomic;
      st->body = parse_block();
      return st;
    }
    st->kind = StKind::Basic;
    st->cmd = parse_basic(st->loc);
    return st;
  }

  Command parse_basic(SourceLoc loc) {
    Command c;
    c.loc = loc;
    if (is_kw("skip")) {
      lx_.take();
      expect_punct(";");
      c.kind = CmdKind::Assume;
      c.expr = Expr::lit(1);
      return c;
    }
    if (is_kw("free")) {
      lx_.take();
      expect_punct("(");
      c.kind = CmdKind::Free;
      c.var = expect_ident();
      require_ptr_var(c.var, loc);
      expect_punct(")");
      expect_punct(";");
      return c;
    }
    if (is_kw("assume") || is_kw("assert")) {
      bool as = lx_.take().text == "assume";
      c.kind = as ? CmdKind::Assume : CmdKind::Assert;
      expect_punct("(");
      c.expr = parse_expr();
      check_data(c.expr);
      expect_punct(")");
      expect_punct(";");
      if (!as) c.tag = "user";
      return c;
    }
    if (is_kw("lock") || is_kw("unlock")) {
      bool lk = lx_.take().text == "lock";
      c.kind = lk ? CmdKind::Lock : CmdKind::Unlock;
      expect_punct("(");
      c.var = expect_ident();
      bool found = false;
      for (auto& m : prog_.locks) found |= (m == c.var);
      if (!found) fail_at(loc, "unknown lock '" + c.var + "'");
      expect_punct(")");
      expect_punct(";");
      return c;
    }
    // assignments: x := ..., x.f := ...
    std::string x = expect_ident();
    const VarDecl* xv = prog_.find_var(x);
    if (!xv) fail_at(loc, "unknown variable '" + x + "'");
    if (is_punct(".")) {
      lx_.take();
      std::string f = expect_ident();
      if (!xv->is_ptr) fail_at(loc, "field write through data variable");
      const StructDecl* sd = prog_.find_struct(xv->type);
      int fi = sd->field_index(f);
      if (fi < 0) fail_at(loc, "no field '" + f + "' in struct '" + sd->name + "'");
      expect_punct(":=");
      c.kind = CmdKind::Write;
      c.var = x;
      c.field = f;
      c.expr = parse_expr();
      const FieldDecl& fd = sd->fields[fi];
      if (fd.is_ptr)
        check_ptr(c.expr, fd.target);
      else
        check_data(c.expr);
      expect_punct(";");
      return c;
    }
    expect_punct(":=");
    if (is_kw("malloc")) {
      lx_.take();
      expect_punct("(");
      std::string t = expect_ident();
      expect_punct(")");
      expect_punct(";");
      if (!prog_.find_struct(t)) fail_at(loc, "unknown struct '" + t + "'");
      if (!xv->is_ptr || xv->type != t)
        fail_at(loc, "malloc type mismatch for '" + x + "'");
      c.kind = CmdKind::Malloc;
      c.var = x;
      c.type_name = t;
      return c;
    }
    // could be y.f read or an expression
    if (lx_.cur().kind == Token::Ident && prog_.find_var(lx_.cur().text)) {
      Lexer probe = lx_;
      probe.take();
      if (probe.cur().kind == Token::Punct && probe.cur().text == ".") {
        std::string y = lx_.take().text;
        lx_.take();  // .
        std::string f = expect_ident();
        expect_punct(";");
        const VarDecl* yv = prog_.find_var(y);
        if (!yv->is_ptr) fail_at(loc, "field read through data variable");
        const StructDecl* sd = prog_.find_struct(yv->type);
        int fi = sd->field_index(f);
        if (fi < 0) fail_at(loc, "no field '" + f + "' in struct '" + sd->name + "'");
        const FieldDecl& fd = sd->fields[fi];
        if (fd.is_ptr != xv->is_ptr || (fd.is_ptr && fd.target != xv->type))
          fail_at(loc, "type mismatch reading '" + y + "." + f + "'");
        c.kind = CmdKind::Read;
        c.var = x;
        c.var2 = y;
        c.field = f;
        return c;
      }
    }
    c.kind = CmdKind::Assign;
    c.var = x;
    c.expr = parse_expr();
    if (xv->is_ptr)
      check_ptr(c.expr, xv->type);
    else
      check_data(c.expr);
    expect_punct(";");
    return c;
  }

  void require_ptr_var(const std::string& n, SourceLoc loc) {
    const VarDecl* v = prog_.find_var(n);
    if (!v || !v->is_ptr) fail_at(loc, "'" + n + "' is not a pointer variable");
  }

  // ---- expressions ----
  ExprP parse_cond() {
    if (is_punct("*")) {
      SourceLoc loc = lx_.take().loc;
      auto e = std::make_shared<Expr>();
      e->op = ExOp::Nondet;
      e->loc = loc;
      return e;
    }
    ExprP e = parse_expr();
    check_data(e);
    return e;
  }

  ExprP parse_expr() { return parse_or(); }

  ExprP parse_or() {
    ExprP l = parse_and();
    while (is_punct("||")) {
      SourceLoc loc = lx_.take().loc;
      ExprP r = parse_and();
      l = Expr::mk(ExOp::Or, {l, r});
      const_cast<Expr*>(l.get())->loc = loc;
    }
    return l;
  }
  ExprP parse_and() {
    ExprP l = parse_cmp();
    while (is_punct("&&")) {
      SourceLoc loc = lx_.take().loc;
      ExprP r = parse_cmp();
      l = Expr::mk(ExOp::And, {l, r});
      const_cast<Expr*>(l.get())->loc = loc;
    }
    return l;
  }
  ExprP parse_cmp() {
    ExprP l = parse_add();
    static const std::pair<const char*, ExOp> ops[] = {
        {"==", ExOp::Eq}, {"!=", ExOp::Ne}, {"<=", ExOp::Le},
        {">=", ExOp::Ge}, {"<", ExOp::Lt},  {">", ExOp::Gt}};
    for (auto& [p, o] : ops) {
      if (is_punct(p)) {
        SourceLoc loc = lx_.take().loc;
        ExprP r = parse_add();
        ExprP e = Expr::mk(o, {l, r});
        const_cast<Expr*>(e.get())->loc = loc;
        return e;
      }
    }
    return l;
  }
  ExprP parse_add() {
    ExprP l = parse_mul();
    while (is_punct("+") || is_punct("-")) {
      ExOp o = lx_.cur().text == "+" ? ExOp::Add : ExOp::Sub;
      SourceLoc loc = lx_.take().loc;
      ExprP r = parse_mul();
      l = Expr::mk(o, {l, r});
      const_cast<Expr*>(l.get())->loc = loc;
    }
    return l;
  }
  ExprP parse_mul() {
    ExprP l = parse_unary();
    while (is_punct("*")) {
      SourceLoc loc = lx_.take().loc;
      ExprP r = parse_unary();
      l = Expr::mk(ExOp::Mul, {l, r});
      const_cast<Expr*>(l.get())->loc = loc;
    }
    return l;
  }
  ExprP parse_unary() {
    if (is_punct("!")) {
      SourceLoc loc = lx_.take().loc;
      ExprP e = Expr::mk(ExOp::Not, {parse_unary()});
      const_cast<Expr*>(e.get())->loc = loc;
      return e;
    }
    if (is_punct("-")) {
      SourceLoc loc = lx_.take().loc;
      ExprP e = Expr::mk(ExOp::Sub, {Expr::lit(0), parse_unary()});
      const_cast<Expr*>(e.get())->loc = loc;
      return e;
    }
    return parse_primary();
  }
  ExprP parse_primary() {
    SourceLoc loc = lx_.cur().loc;
    if (lx_.cur().kind == Token::Int) {
      ExprP e = Expr::lit(lx_.take().value);
      const_cast<Expr*>(e.get())->loc = loc;
      return e;
    }
    if (is_kw("null")) {
      lx_.take();
      ExprP e = Expr::null_();
      const_cast<Expr*>(e.get())->loc = loc;
      return e;
    }
    if (is_kw("havoc")) {
      lx_.take();
      auto e = std::make_shared<Expr>();
      e->op = ExOp::Havoc;
      e->loc = loc;
      return e;
    }
    if (lx_.cur().kind == Token::Ident) {
      std::string n = lx_.take().text;
      if (!prog_.find_var(n)) fail_at(loc, "unknown variable '" + n + "'");
      ExprP e = Expr::mkvar(n);
      const_cast<Expr*>(e.get())->loc = loc;
      return e;
    }
    if (is_punct("(")) {
      lx_.take();
      ExprP e = parse_expr();
      expect_punct(")");
      return e;
    }
    lx_.fail("expected expression");
  }

  // ---- type checking of expressions ----
  Ty type_of(const ExprP& e) {
    switch (e->op) {
      case ExOp::IntLit:
      case ExOp::Havoc:
        return {false, ""};
      case ExOp::Null:
        return {true, ""};
      case ExOp::Var: {
        const VarDecl* v = prog_.find_var(e->var);
        return {v->is_ptr, v->type};
      }
      case ExOp::Eq:
      case ExOp::Ne: {
        Ty a = type_of(e->args[0]), b = type_of(e->args[1]);
        if (a.is_ptr != b.is_ptr)
          fail_at(e->loc, "comparison mixes pointer and data operands");
        if (a.is_ptr && !a.target.empty() && !b.target.empty() && a.target != b.target)
          fail_at(e->loc, "comparison of incompatible pointer types");
        return {false, ""};
      }
      case ExOp::Nondet:
        return {false, ""};
      default: {
        for (auto& a : e->args) {
          Ty t = type_of(a);
          if (t.is_ptr) fail_at(a->loc, "pointer operand in arithmetic context");
        }
        return {false, ""};
      }
    }
  }

  void check_data(const ExprP& e) {
    Ty t = type_of(e);
    if (t.is_ptr) fail_at(e->loc, "expected data expression");
  }
  void check_ptr(const ExprP& e, const std::string& target) {
    Ty t = type_of(e);
    if (!t.is_ptr) fail_at(e->loc, "expected pointer expression");
    if (!t.target.empty() && t.target != target)
      fail_at(e->loc, "pointer type mismatch");
  }

  // ---- lowering to a control-flow automaton ----
  void lower() {
    Cfa& g = prog_.cfa;
    g.entry = 0;
    int cur = 0;
    nlocs_ = 1;
    cur = lower_seq(prog_.body, cur, false);
    g.exit = cur;
    g.nlocs = nlocs_;
  }

  int fresh_loc() { return nlocs_++; }

  int lower_seq(const std::vector<StmtP>& ss, int from, bool atomic) {
    for (auto& s : ss) from = lower_stmt(*s, from, atomic);
    return from;
  }

  void add_edge(int src, int dst, std::vector<Command> cmds, bool atomic) {
    prog_.cfa.edges.push_back(Edge{src, dst, std::move(cmds), atomic});
  }

  static ExprP negate(const ExprP& c) { return Expr::mk(ExOp::Not, {c}); }

  static Command assume_cmd(ExprP c, SourceLoc loc) {
    Command a;
    a.kind = CmdKind::Assume;
    a.expr = std::move(c);
    a.loc = loc;
    return a;
  }

  int lower_stmt(const Stmt& s, int from, bool atomic) {
    switch (s.kind) {
      case StKind::Basic: {
        int to = fresh_loc();
        add_edge(from, to, {s.cmd}, atomic);
        return to;
      }
      case StKind::While: {
        int body0 = fresh_loc();
        int after = fresh_loc();
        if (s.cond->op == ExOp::Nondet) {
          add_edge(from, body0, {}, atomic);
          add_edge(from, after, {}, atomic);
        } else {
          add_edge(from, body0, {assume_cmd(s.cond, s.loc)}, atomic);
          add_edge(from, after, {assume_cmd(negate(s.cond), s.loc)}, atomic);
        }
        int body_end = lower_seq(s.body, body0, atomic);
        add_edge(body_end, from, {}, atomic);
        return after;
      }
      case StKind::If: {
        int then0 = fresh_loc();
        int else0 = fresh_loc();
        if (s.cond->op == ExOp::Nondet) {
          add_edge(from, then0, {}, atomic);
          add_edge(from, else0, {}, atomic);
        } else {
          add_edge(from, then0, {assume_cmd(s.cond, s.loc)}, atomic);
          add_edge(from, else0, {assume_cmd(negate(s.cond), s.loc)}, atomic);
        }
        int then_end = lower_seq(s.body, then0, atomic);
        int else_end = lower_seq(s.els, else0, atomic);
        int join = fresh_loc();
        add_edge(then_end, join, {}, atomic);
        add_edge(else_end, join, {}, atomic);
        return join;
      }
      case StKind::Atomic:
        return lower_seq(s.body, from, true);
    }
    return from;
  }

  Lexer lx_;
  std::string file_;
  Program prog_;
  int nlocs_ = 1;
};

}  // namespace

Program parse_program(const std::string& src, const std::string& filename) {
  Parser p(src, filename);
  Program prog = p.run();
  prog.filename = filename;
  return prog;
}

}  // namespace fv
