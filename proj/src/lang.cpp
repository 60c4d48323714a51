#include "indeq/lang.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace indeq {

std::string type_name(const Type& t) {
  switch (t.kind) {
    case TypeKind::Int: return "Int";
    case TypeKind::Bool: return "Bool";
    case TypeKind::Adt: return t.adt;
  }
  return "?";
}

const char* op_symbol(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Le: return "<=";
    case Op::Lt: return "<";
    case Op::Eq: return "==";
    case Op::And: return "&&";
    case Op::Or: return "||";
    case Op::Not: return "!";
  }
  return "?";
}

int op_arity(Op op) { return op == Op::Not ? 1 : 2; }

Type op_arg_type(Op op) {
  switch (op) {
    case Op::And:
    case Op::Or:
    case Op::Not: return Type::boolean();
    default: return Type::integer();
  }
}

Type op_result_type(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul: return Type::integer();
    default: return Type::boolean();
  }
}

std::optional<Op> op_from_symbol(const std::string& sym) {
  static const std::map<std::string, Op> table = {
      {"+", Op::Add}, {"-", Op::Sub},  {"*", Op::Mul},
      {"<=", Op::Le}, {"<", Op::Lt},   {"==", Op::Eq},
      {"&&", Op::And}, {"||", Op::Or}, {"!", Op::Not}};
  auto it = table.find(sym);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------- terms

Term mk_var(std::string name) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Var;
  n->name = std::move(name);
  return n;
}

Term mk_int(BigInt v) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::IntConst;
  n->int_val = std::move(v);
  return n;
}

Term mk_int(long v) { return mk_int(BigInt(v)); }

Term mk_bool(bool v) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::BoolConst;
  n->bool_val = v;
  return n;
}

Term mk_op(Op op, std::vector<Term> args) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::BuiltinApp;
  n->op = op;
  n->args = std::move(args);
  return n;
}

Term mk_ctor(std::string name, std::vector<Term> args) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::CtorApp;
  n->name = std::move(name);
  n->args = std::move(args);
  return n;
}

Term mk_csr(std::string name, std::vector<Term> args) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::CsrApp;
  n->name = std::move(name);
  n->args = std::move(args);
  return n;
}

Term mk_ite(Term cond, Term then_branch, Term else_branch) {
  auto n = std::make_shared<TermNode>();
  n->kind = TermKind::Ite;
  n->args = {std::move(cond), std::move(then_branch), std::move(else_branch)};
  return n;
}

bool term_eq(const Term& a, const Term& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case TermKind::Var: return a->name == b->name;
    case TermKind::IntConst: return a->int_val == b->int_val;
    case TermKind::BoolConst: return a->bool_val == b->bool_val;
    case TermKind::BuiltinApp:
      if (a->op != b->op) return false;
      break;
    case TermKind::CtorApp:
    case TermKind::CsrApp:
      if (a->name != b->name) return false;
      break;
    case TermKind::Ite: break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!term_eq(a->args[i], b->args[i])) return false;
  return true;
}

std::size_t term_size(const Term& t) {
  std::size_t n = 1;
  for (const auto& a : t->args) n += term_size(a);
  return n;
}

static void hash_mix(std::size_t& h, std::size_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

std::size_t term_hash(const Term& t) {
  std::size_t h = static_cast<std::size_t>(t->kind) * 1315423911u;
  switch (t->kind) {
    case TermKind::Var:
    case TermKind::CtorApp:
    case TermKind::CsrApp:
      hash_mix(h, std::hash<std::string>{}(t->name));
      break;
    case TermKind::IntConst:
      hash_mix(h, std::hash<std::string>{}(t->int_val.str()));
      break;
    case TermKind::BoolConst:
      hash_mix(h, t->bool_val ? 7u : 3u);
      break;
    case TermKind::BuiltinApp:
      hash_mix(h, static_cast<std::size_t>(t->op));
      break;
    case TermKind::Ite:
      hash_mix(h, 0x17u);
      break;
  }
  for (const auto& a : t->args) hash_mix(h, term_hash(a));
  return h;
}

void collect_free_vars(const Term& t, std::set<std::string>& out) {
  if (t->kind == TermKind::Var) {
    out.insert(t->name);
    return;
  }
  for (const auto& a : t->args) collect_free_vars(a, out);
}

std::set<std::string> free_vars(const Term& t) {
  std::set<std::string> out;
  collect_free_vars(t, out);
  return out;
}

bool occurs_var(const Term& t, const std::string& name) {
  if (t->kind == TermKind::Var) return t->name == name;
  for (const auto& a : t->args)
    if (occurs_var(a, name)) return true;
  return false;
}

// -------------------------------------------------------------- program

std::optional<std::size_t> AdtDef::recursive_field(const Ctor& c) const {
  for (std::size_t i = 0; i < c.fields.size(); ++i)
    if (c.fields[i].is_adt() && c.fields[i].adt == name) return i;
  return std::nullopt;
}

const CsrBranch* CsrDef::branch_for(const std::string& ctor) const {
  for (const auto& b : branches)
    if (b.ctor == ctor) return &b;
  return nullptr;
}

const AdtDef* Spec::find_adt(const std::string& name) const {
  for (const auto& a : adts)
    if (a.name == name) return &a;
  return nullptr;
}

std::optional<std::pair<const AdtDef*, std::size_t>> Spec::find_ctor(
    const std::string& name) const {
  for (const auto& a : adts)
    for (std::size_t i = 0; i < a.ctors.size(); ++i)
      if (a.ctors[i].name == name) return std::make_pair(&a, i);
  return std::nullopt;
}

const CsrDef* Spec::find_csr(const std::string& name) const {
  for (const auto& c : csrs)
    if (c.name == name) return &c;
  return nullptr;
}

// ---------------------------------------------------------------- lexer

namespace {

enum class Tok {
  Ident,    // lowercase identifier
  UIdent,   // uppercase identifier
  Integer,
  Symbol,   // punctuation / operator
  End,
};

struct Token {
  Tok kind;
  std::string text;
  BigInt value;
  int line = 1, col = 1;
};

struct Lexer {
  const std::string& src;
  std::size_t pos = 0;
  int line = 1, col = 1;

  explicit Lexer(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "syntax error at " << line << ":" << col << ": " << msg;
    throw lang_error(ErrKind::Syntax, os.str(), line, col);
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos < src.size(); ++i, ++pos) {
      if (src[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  }

  void skip_ws() {
    while (pos < src.size()) {
      char c = src[pos];
      if (c == '-' && pos + 1 < src.size() && src[pos + 1] == '-') {
        while (pos < src.size() && src[pos] != '\n') advance(1);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else {
        break;
      }
    }
  }

  Token next() {
    skip_ws();
    Token t;
    t.line = line;
    t.col = col;
    if (pos >= src.size()) {
      t.kind = Tok::End;
      return t;
    }
    char c = src[pos];
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_' ||
              src[pos] == '\''))
        advance(1);
      t.text = src.substr(start, pos - start);
      t.kind = std::isupper(static_cast<unsigned char>(c)) ? Tok::UIdent : Tok::Ident;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = pos;
      while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos])))
        advance(1);
      t.kind = Tok::Integer;
      t.text = src.substr(start, pos - start);
      t.value = BigInt(t.text);
      return t;
    }
    // multi-char symbols first
    static const char* two[] = {"->", "<=", "==", "&&", "||"};
    for (const char* s : two) {
      if (src.compare(pos, 2, s) == 0) {
        t.kind = Tok::Symbol;
        t.text = s;
        advance(2);
        return t;
      }
    }
    static const std::string singles = "()=|.;:<+-*!";
    if (singles.find(c) != std::string::npos) {
      t.kind = Tok::Symbol;
      t.text = std::string(1, c);
      advance(1);
      return t;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

// --------------------------------------------------------------- parser

struct Parser {
  Lexer lex;
  Token cur;

  explicit Parser(const std::string& s) : lex(s) { cur = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "syntax error at " << cur.line << ":" << cur.col << ": " << msg;
    throw lang_error(ErrKind::Syntax, os.str(), cur.line, cur.col);
  }

  void bump() { cur = lex.next(); }

  bool at_symbol(const std::string& s) const {
    return cur.kind == Tok::Symbol && cur.text == s;
  }
  bool at_keyword(const std::string& s) const {
    return (cur.kind == Tok::Ident || cur.kind == Tok::UIdent) && cur.text == s;
  }

  void expect_symbol(const std::string& s) {
    if (!at_symbol(s)) fail("expected '" + s + "'");
    bump();
  }
  void expect_keyword(const std::string& s) {
    if (!at_keyword(s)) fail("expected '" + s + "'");
    bump();
  }

  std::string expect_lname() {
    if (cur.kind != Tok::Ident) fail("expected lowercase identifier");
    std::string s = cur.text;
    bump();
    return s;
  }
  std::string expect_uname() {
    if (cur.kind != Tok::UIdent) fail("expected uppercase identifier");
    std::string s = cur.text;
    bump();
    return s;
  }

  Type parse_typeatom() {
    if (cur.kind != Tok::UIdent) fail("expected type");
    std::string n = cur.text;
    bump();
    if (n == "Int") return Type::integer();
    if (n == "Bool") return Type::boolean();
    return Type::adt_ty(n);
  }

  std::pair<std::string, Type> parse_param() {
    expect_symbol("(");
    std::string n = expect_lname();
    expect_symbol(":");
    Type t = parse_typeatom();
    expect_symbol(")");
    return {n, t};
  }

  bool starts_atom() const {
    if (cur.kind == Tok::Ident)
      return cur.text != "then" && cur.text != "else" && cur.text != "with" &&
             cur.text != "end";
    return cur.kind == Tok::Integer || at_symbol("(");
  }

  // application operand or parenthesized expression
  Term parse_atom() {
    if (at_symbol("(")) {
      bump();
      Term e = parse_expr();
      expect_symbol(")");
      return e;
    }
    if (cur.kind == Tok::Integer) {
      Term e = mk_int(cur.value);
      bump();
      return e;
    }
    if (cur.kind == Tok::Ident) {
      if (cur.text == "true") {
        bump();
        return mk_bool(true);
      }
      if (cur.text == "false") {
        bump();
        return mk_bool(false);
      }
      std::string n = cur.text;
      bump();
      return mk_var(n);  // resolved to ctor/csr application later
    }
    fail("expected expression");
  }

  Term parse_app() {
    if (at_keyword("if")) {
      bump();
      Term c = parse_expr();
      expect_keyword("then");
      Term a = parse_expr();
      expect_keyword("else");
      Term b = parse_expr();
      return mk_ite(c, a, b);
    }
    // unary minus for integer literals
    if (at_symbol("-")) {
      bump();
      if (cur.kind != Tok::Integer) fail("expected integer after '-'");
      Term e = mk_int(BigInt(-cur.value));
      bump();
      return e;
    }
    if (cur.kind == Tok::Ident && cur.text != "true" && cur.text != "false" &&
        !at_keyword("if")) {
      std::string head = cur.text;
      int hl = cur.line, hc = cur.col;
      bump();
      std::vector<Term> args;
      while (starts_atom()) args.push_back(parse_atom());
      if (args.empty()) return mk_var(head);
      // head with arguments: a constructor or CSR application, resolved
      // against the spec after parsing
      Term app = mk_csr(head, std::move(args));
      (void)hl;
      (void)hc;
      return app;
    }
    return parse_atom();
  }

  static int binop_prec(const std::string& s) {
    if (s == "*") return 4;
    if (s == "+" || s == "-") return 3;
    if (s == "<=" || s == "<" || s == "==") return 2;
    if (s == "&&") return 1;
    if (s == "||") return 0;
    return -1;
  }

  Term parse_binop_rhs(int min_prec, Term lhs) {
    while (cur.kind == Tok::Symbol) {
      int prec = binop_prec(cur.text);
      if (prec < min_prec) break;
      std::string sym = cur.text;
      bump();
      Term rhs = parse_app();
      while (cur.kind == Tok::Symbol && binop_prec(cur.text) > prec)
        rhs = parse_binop_rhs(prec + 1, rhs);
      lhs = mk_op(*op_from_symbol(sym), {lhs, rhs});
    }
    return lhs;
  }

  Term parse_expr() { return parse_binop_rhs(0, parse_app()); }
};

// Applications are parsed headless (all as CsrApp); resolve each head
// against the declared constructors and CSRs.
Term resolve_apps(const Term& t, const Spec& spec, const std::string& self,
                  int self_arity) {
  std::vector<Term> args;
  args.reserve(t->args.size());
  for (const auto& a : t->args) args.push_back(resolve_apps(a, spec, self, self_arity));
  switch (t->kind) {
    case TermKind::Var: {
      // nullary constructors parse as bare variables
      if (spec.find_ctor(t->name)) return mk_ctor(t->name, {});
      return t;
    }
    case TermKind::CsrApp: {
      if (spec.find_ctor(t->name)) return mk_ctor(t->name, std::move(args));
      if (t->name == self || spec.find_csr(t->name)) return mk_csr(t->name, std::move(args));
      throw lang_error(ErrKind::Type, "unknown function or constructor '" + t->name + "'");
    }
    case TermKind::BuiltinApp: return mk_op(t->op, std::move(args));
    case TermKind::CtorApp: return mk_ctor(t->name, std::move(args));
    case TermKind::Ite: return mk_ite(args[0], args[1], args[2]);
    default: return t;
  }
}

}  // namespace

// --------------------------------------------------------- typecheck

namespace {

using Env = std::vector<std::pair<std::string, Type>>;

std::optional<Type> env_lookup(const Env& env, const std::string& n) {
  for (auto it = env.rbegin(); it != env.rend(); ++it)
    if (it->first == n) return it->second;
  return std::nullopt;
}

}  // namespace

Type type_of(const Term& t, const Env& env, const Spec& spec) {
  switch (t->kind) {
    case TermKind::Var: {
      auto ty = env_lookup(env, t->name);
      if (!ty) throw lang_error(ErrKind::Type, "unbound variable '" + t->name + "'");
      return *ty;
    }
    case TermKind::IntConst: return Type::integer();
    case TermKind::BoolConst: return Type::boolean();
    case TermKind::BuiltinApp: {
      if (static_cast<int>(t->args.size()) != op_arity(t->op))
        throw lang_error(ErrKind::Type,
                         std::string("operator '") + op_symbol(t->op) + "' arity mismatch");
      for (const auto& a : t->args) {
        Type at = type_of(a, env, spec);
        if (at != op_arg_type(t->op))
          throw lang_error(ErrKind::Type, std::string("operator '") + op_symbol(t->op) +
                                              "' expects " + type_name(op_arg_type(t->op)) +
                                              ", found " + type_name(at) + " in " + pretty(a));
      }
      return op_result_type(t->op);
    }
    case TermKind::CtorApp: {
      auto hit = spec.find_ctor(t->name);
      if (!hit) throw lang_error(ErrKind::Type, "unknown constructor '" + t->name + "'");
      const auto& ctor = hit->first->ctors[hit->second];
      if (t->args.size() != ctor.fields.size())
        throw lang_error(ErrKind::Type, "constructor '" + t->name + "' arity mismatch");
      for (std::size_t i = 0; i < t->args.size(); ++i) {
        Type at = type_of(t->args[i], env, spec);
        if (at != ctor.fields[i])
          throw lang_error(ErrKind::Type, "constructor '" + t->name + "' argument " +
                                              std::to_string(i + 1) + ": expected " +
                                              type_name(ctor.fields[i]) + ", found " +
                                              type_name(at));
      }
      return Type::adt_ty(hit->first->name);
    }
    case TermKind::CsrApp: {
      const CsrDef* f = spec.find_csr(t->name);
      if (!f) throw lang_error(ErrKind::Type, "unknown function '" + t->name + "'");
      if (t->args.size() != f->params.size())
        throw lang_error(ErrKind::Type, "function '" + t->name + "' arity mismatch");
      for (std::size_t i = 0; i < t->args.size(); ++i) {
        Type at = type_of(t->args[i], env, spec);
        if (at != f->params[i].second)
          throw lang_error(ErrKind::Type, "function '" + t->name + "' argument " +
                                              std::to_string(i + 1) + ": expected " +
                                              type_name(f->params[i].second) + ", found " +
                                              type_name(at));
      }
      return f->params.back().second.is_adt() ? result_type_of_csr(*f, spec)
                                              : Type::integer();
    }
    case TermKind::Ite: {
      Type ct = type_of(t->args[0], env, spec);
      if (ct != Type::boolean())
        throw lang_error(ErrKind::Type, "condition must be Bool, found " + type_name(ct));
      Type a = type_of(t->args[1], env, spec);
      Type b = type_of(t->args[2], env, spec);
      if (a != b)
        throw lang_error(ErrKind::Type, "branches of 'if' have different types: " +
                                            type_name(a) + " vs " + type_name(b));
      return a;
    }
  }
  throw lang_error(ErrKind::Type, "malformed term");
}

// Result type of a CSR: the type of any branch body. Cached per call via
// recomputation; CSR bodies are small.
Type result_type_of_csr(const CsrDef& f, const Spec& spec) {
  const AdtDef* adt = spec.find_adt(f.rec_adt());
  if (!adt) throw lang_error(ErrKind::Type, "unknown ADT '" + f.rec_adt() + "'");
  const CsrBranch& b = f.branches.front();
  auto hit = spec.find_ctor(b.ctor);
  Env env(f.params.begin(), f.params.end() - 1);
  const auto& ctor = hit->first->ctors[hit->second];
  for (std::size_t i = 0; i < b.binders.size(); ++i)
    env.emplace_back(b.binders[i], ctor.fields[i]);
  if (adt->recursive_field(ctor)) env.emplace_back(kRecResultVar, Type::integer());
  // provisional: infer without knowing the result type of recursive calls.
  // Branch bodies of base constructors never reference r, so use the first
  // base branch instead.
  for (const auto& br : f.branches) {
    auto h2 = spec.find_ctor(br.ctor);
    const auto& c2 = h2->first->ctors[h2->second];
    if (!adt->recursive_field(c2)) {
      Env e2(f.params.begin(), f.params.end() - 1);
      for (std::size_t i = 0; i < br.binders.size(); ++i)
        e2.emplace_back(br.binders[i], c2.fields[i]);
      return type_of(br.body, e2, spec);
    }
  }
  throw lang_error(ErrKind::Type, "CSR '" + f.name + "' has no base branch");
}

namespace {

void typecheck_csr(const CsrDef& f, const Spec& spec) {
  if (!f.params.back().second.is_adt())
    throw lang_error(ErrKind::Type,
                     "last parameter of '" + f.name + "' must have an ADT type");
  const AdtDef* adt = spec.find_adt(f.rec_adt());
  if (!adt) throw lang_error(ErrKind::Type, "unknown ADT '" + f.rec_adt() + "'");
  // exhaustive, non-duplicated match
  for (const auto& c : adt->ctors) {
    int n = 0;
    for (const auto& b : f.branches)
      if (b.ctor == c.name) ++n;
    if (n == 0)
      throw lang_error(ErrKind::NonExhaustiveMatch,
                       "match in '" + f.name + "' is missing constructor '" + c.name + "'");
    if (n > 1)
      throw lang_error(ErrKind::DuplicateName,
                       "match in '" + f.name + "' has duplicate branch for '" + c.name + "'");
  }
  Type result = result_type_of_csr(f, spec);
  for (const auto& b : f.branches) {
    auto hit = spec.find_ctor(b.ctor);
    if (!hit || hit->first != adt)
      throw lang_error(ErrKind::Type, "branch constructor '" + b.ctor +
                                          "' does not belong to ADT '" + adt->name + "'");
    const auto& ctor = hit->first->ctors[hit->second];
    if (b.binders.size() != ctor.fields.size())
      throw lang_error(ErrKind::Type,
                       "branch '" + b.ctor + "' in '" + f.name + "' binder count mismatch");
    Env env(f.params.begin(), f.params.end() - 1);
    for (std::size_t i = 0; i < b.binders.size(); ++i)
      env.emplace_back(b.binders[i], ctor.fields[i]);
    if (adt->recursive_field(ctor)) env.emplace_back(kRecResultVar, result);
    Type bt = type_of(b.body, env, spec);
    if (bt != result)
      throw lang_error(ErrKind::Type, "branch '" + b.ctor + "' in '" + f.name +
                                          "' has type " + type_name(bt) + ", expected " +
                                          type_name(result));
  }
}

void typecheck_equation(const Equation& eq, const Spec& spec) {
  std::set<std::string> seen;
  for (const auto& [n, t] : eq.binders) {
    if (!seen.insert(n).second)
      throw lang_error(ErrKind::DuplicateName, "duplicate binder '" + n + "'");
    if (t.is_adt() && !spec.find_adt(t.adt))
      throw lang_error(ErrKind::Type, "unknown ADT '" + t.adt + "'");
  }
  Env env(eq.binders.begin(), eq.binders.end());
  Type a = type_of(eq.lhs, env, spec);
  Type b = type_of(eq.rhs, env, spec);
  if (a != b)
    throw lang_error(ErrKind::Type, "equation sides have different types: " + type_name(a) +
                                        " vs " + type_name(b));
  std::set<std::string> fv = free_vars(eq.lhs);
  collect_free_vars(eq.rhs, fv);
  for (const auto& v : fv)
    if (!env_lookup(env, v))
      throw lang_error(ErrKind::Type, "unbound variable '" + v + "' in equation");
}

}  // namespace

void typecheck_spec(const Spec& spec) {
  std::set<std::string> names;
  for (const auto& a : spec.adts) {
    if (!names.insert(a.name).second)
      throw lang_error(ErrKind::DuplicateName, "duplicate type name '" + a.name + "'");
    bool has_base = false;
    for (const auto& c : a.ctors) {
      if (!names.insert(c.name).second)
        throw lang_error(ErrKind::DuplicateName, "duplicate constructor '" + c.name + "'");
      int rec = 0;
      for (const auto& f : c.fields) {
        if (f.is_adt() && !spec.find_adt(f.adt))
          throw lang_error(ErrKind::Type, "unknown ADT '" + f.adt + "' in constructor '" +
                                              c.name + "'");
        if (f.is_adt() && f.adt == a.name) ++rec;
      }
      if (rec > 1)
        throw lang_error(ErrKind::Type, "constructor '" + c.name +
                                            "' has more than one recursive field");
      if (rec == 0) has_base = true;
    }
    if (!has_base)
      throw lang_error(ErrKind::Type, "ADT '" + a.name + "' has no base constructor");
  }
  // CSRs may reference only earlier CSRs or themselves; check by
  // typechecking against a growing prefix spec.
  Spec prefix;
  prefix.adts = spec.adts;
  for (const auto& f : spec.csrs) {
    if (!names.insert(f.name).second)
      throw lang_error(ErrKind::DuplicateName, "duplicate function name '" + f.name + "'");
    std::set<std::string> pseen;
    for (const auto& [pn, pt] : f.params) {
      if (pn == kRecResultVar)
        throw lang_error(ErrKind::DuplicateName,
                         "'r' is reserved and cannot be a parameter of '" + f.name + "'");
      if (!pseen.insert(pn).second)
        throw lang_error(ErrKind::DuplicateName,
                         "duplicate parameter '" + pn + "' in '" + f.name + "'");
      if (pt.is_adt() && !spec.find_adt(pt.adt))
        throw lang_error(ErrKind::Type, "unknown ADT '" + pt.adt + "'");
    }
    for (const auto& b : f.branches)
      for (const auto& n : b.binders)
        if (n == kRecResultVar)
          throw lang_error(ErrKind::DuplicateName,
                           "'r' is reserved and cannot be a pattern binder in '" + f.name + "'");
    prefix.csrs.push_back(f);
    typecheck_csr(f, prefix);
  }
  typecheck_equation(spec.goal, spec);
}

// ------------------------------------------------------- canonicalize

namespace {

// replace legal self-calls by `r`, reject the rest
Term replace_self_calls(const Term& t, const RawCsr& raw, const std::string& rec_binder) {
  std::vector<Term> args;
  args.reserve(t->args.size());
  for (const auto& a : t->args) args.push_back(replace_self_calls(a, raw, rec_binder));
  if (t->kind == TermKind::CsrApp && t->name == raw.name) {
    if (t->args.size() != raw.params.size())
      throw lang_error(ErrKind::IllegalSelfCall,
                       "self-call of '" + raw.name + "' with wrong arity");
    bool ok = true;
    for (std::size_t i = 0; i + 1 < raw.params.size(); ++i) {
      const Term& a = t->args[i];
      if (a->kind != TermKind::Var || a->name != raw.params[i].first) ok = false;
    }
    const Term& last = t->args.back();
    if (last->kind != TermKind::Var || last->name != rec_binder) ok = false;
    if (!ok)
      throw lang_error(ErrKind::IllegalSelfCall,
                       "self-call in '" + raw.name + "' must keep the leading arguments and "
                       "recurse on the pattern binder: " + pretty(t));
    return mk_var(kRecResultVar);
  }
  switch (t->kind) {
    case TermKind::BuiltinApp: return mk_op(t->op, std::move(args));
    case TermKind::CtorApp: return mk_ctor(t->name, std::move(args));
    case TermKind::CsrApp: return mk_csr(t->name, std::move(args));
    case TermKind::Ite: return mk_ite(args[0], args[1], args[2]);
    default: return t;
  }
}

}  // namespace

CsrDef canonicalize_csr(const RawCsr& raw, const Spec& spec_so_far) {
  const AdtDef* adt = nullptr;
  if (raw.params.back().second.is_adt())
    adt = spec_so_far.find_adt(raw.params.back().second.adt);
  CsrDef out;
  out.name = raw.name;
  out.params = raw.params;
  for (const auto& b : raw.branches) {
    CsrBranch nb = b;
    bool recursive = false;
    std::string rec_binder;
    if (adt) {
      if (auto hit = spec_so_far.find_ctor(b.ctor); hit && hit->first == adt) {
        const auto& ctor = hit->first->ctors[hit->second];
        if (auto ri = adt->recursive_field(ctor);
            ri && b.binders.size() == ctor.fields.size()) {
          recursive = true;
          rec_binder = b.binders[*ri];
        }
      }
    }
    if (recursive) {
      nb.body = replace_self_calls(b.body, raw, rec_binder);
    } else if (occurs_var(b.body, raw.name) || contains_csr(b.body, raw.name)) {
      throw lang_error(ErrKind::IllegalSelfCall,
                       "self-call in non-recursive branch of '" + raw.name + "'");
    }
    out.branches.push_back(std::move(nb));
  }
  return out;
}

bool contains_csr(const Term& t, const std::string& name) {
  if (t->kind == TermKind::CsrApp && t->name == name) return true;
  for (const auto& a : t->args)
    if (contains_csr(a, name)) return true;
  return false;
}

// ----------------------------------------------------------- parse_spec

Spec parse_spec(const std::string& text) {
  Parser p(text);
  Spec spec;
  // ADTs
  while (p.at_keyword("Inductive")) {
    p.bump();
    AdtDef adt;
    adt.name = p.expect_uname();
    p.expect_symbol("=");
    for (;;) {
      AdtDef::Ctor c;
      c.name = p.expect_lname();
      while (p.cur.kind == Tok::UIdent) c.fields.push_back(p.parse_typeatom());
      adt.ctors.push_back(std::move(c));
      if (p.at_symbol("|")) {
        p.bump();
        continue;
      }
      break;
    }
    p.expect_symbol(";");
    spec.adts.push_back(std::move(adt));
  }
  // CSRs
  while (p.at_keyword("Let")) {
    p.bump();
    RawCsr raw;
    raw.name = p.expect_lname();
    while (p.at_symbol("(")) raw.params.push_back(p.parse_param());
    if (raw.params.empty()) p.fail("function '" + raw.name + "' needs parameters");
    p.expect_symbol("=");
    p.expect_keyword("match");
    std::string scrutinee = p.expect_lname();
    if (scrutinee != raw.params.back().first)
      throw lang_error(ErrKind::Type, "match in '" + raw.name +
                                          "' must inspect the last parameter '" +
                                          raw.params.back().first + "'");
    p.expect_keyword("with");
    while (p.at_symbol("|")) {
      p.bump();
      CsrBranch b;
      b.ctor = p.expect_lname();
      while (p.cur.kind == Tok::Ident && !p.at_symbol("->") &&
             p.cur.text != "->") {
        if (p.cur.text == "if" || p.cur.text == "then" || p.cur.text == "else") break;
        b.binders.push_back(p.expect_lname());
      }
      p.expect_symbol("->");
      b.body = p.parse_expr();
      raw.branches.push_back(std::move(b));
    }
    p.expect_keyword("end");
    p.expect_symbol(";");

    // resolve heads, canonicalize the self-calls, then record
    Spec prefix = spec;  // earlier CSRs + ADTs
    // provisional definition so self-references resolve
    for (auto& b : raw.branches) b.body = resolve_apps(b.body, with_self(prefix, raw), raw.name, (int)raw.params.size());
    CsrDef def = canonicalize_csr(raw, prefix);
    spec.csrs.push_back(std::move(def));
  }
  // goal
  p.expect_keyword("Goal");
  while (p.at_symbol("(")) spec.goal.binders.push_back(p.parse_param());
  p.expect_symbol(".");
  Term lhs = p.parse_expr();
  p.expect_symbol("=");
  Term rhs = p.parse_expr();
  p.expect_symbol(";");
  if (p.cur.kind != Tok::End) p.fail("trailing input after goal");
  spec.goal.lhs = resolve_apps(lhs, spec, "", 0);
  spec.goal.rhs = resolve_apps(rhs, spec, "", 0);
  typecheck_spec(spec);
  return spec;
}

// spec extended with a placeholder declaration of the CSR being parsed,
// so that self-applications resolve as CsrApp
Spec with_self(const Spec& spec, const RawCsr& raw) {
  Spec s = spec;
  CsrDef self;
  self.name = raw.name;
  self.params = raw.params;
  s.csrs.push_back(std::move(self));
  return s;
}

Term parse_term(const std::string& text, const Spec& spec,
                const std::vector<std::pair<std::string, Type>>& env) {
  Parser p(text);
  Term t = p.parse_expr();
  if (p.cur.kind != Tok::End) p.fail("trailing input after expression");
  t = resolve_apps(t, spec, "", 0);
  type_of(t, env, spec);
  return t;
}

// --------------------------------------------------------------- pretty

namespace {

int prec_of(const Term& t) {
  switch (t->kind) {
    case TermKind::BuiltinApp:
      switch (t->op) {
        case Op::Mul: return 4;
        case Op::Add:
        case Op::Sub: return 3;
        case Op::Le:
        case Op::Lt:
        case Op::Eq: return 2;
        case Op::And: return 1;
        case Op::Or: return 0;
        case Op::Not: return 5;
      }
      return 0;
    case TermKind::Ite: return -1;
    case TermKind::CtorApp:
    case TermKind::CsrApp: return t->args.empty() ? 100 : 5;
    default: return 100;
  }
}

void print_term(std::ostringstream& os, const Term& t, int parent_prec);

void print_atom(std::ostringstream& os, const Term& t) {
  // argument position: anything non-leaf gets parentheses
  if (prec_of(t) >= 100 &&
      !(t->kind == TermKind::IntConst && t->int_val < 0)) {
    print_term(os, t, 0);
  } else {
    os << "(";
    print_term(os, t, -2);
    os << ")";
  }
}

void print_term(std::ostringstream& os, const Term& t, int parent_prec) {
  switch (t->kind) {
    case TermKind::Var: os << t->name; return;
    case TermKind::IntConst:
      if (t->int_val < 0 && parent_prec > -2)
        os << "(" << t->int_val.str() << ")";
      else
        os << t->int_val.str();
      return;
    case TermKind::BoolConst: os << (t->bool_val ? "true" : "false"); return;
    case TermKind::CtorApp:
    case TermKind::CsrApp: {
      if (t->args.empty()) {
        os << t->name;
        return;
      }
      bool paren = parent_prec > 4;
      if (paren) os << "(";
      os << t->name;
      for (const auto& a : t->args) {
        os << " ";
        print_atom(os, a);
      }
      if (paren) os << ")";
      return;
    }
    case TermKind::BuiltinApp: {
      if (t->op == Op::Not) {
        os << "!";
        print_atom(os, t->args[0]);
        return;
      }
      int prec = prec_of(t);
      bool paren = parent_prec >= 0 && prec < parent_prec;
      // left-associative: right operand needs parens at equal precedence
      if (paren) os << "(";
      print_term(os, t->args[0], prec);
      os << " " << op_symbol(t->op) << " ";
      print_term(os, t->args[1], prec + 1);
      if (paren) os << ")";
      return;
    }
    case TermKind::Ite: {
      bool paren = parent_prec >= 0;
      if (paren) os << "(";
      os << "if ";
      print_term(os, t->args[0], -1);
      os << " then ";
      print_term(os, t->args[1], -1);
      os << " else ";
      print_term(os, t->args[2], -1);
      if (paren) os << ")";
      return;
    }
  }
}

}  // namespace

std::string pretty(const Term& t) {
  std::ostringstream os;
  print_term(os, t, -2);
  return os.str();
}

std::string pretty(const Equation& eq) {
  std::ostringstream os;
  os << pretty(eq.lhs) << " = " << pretty(eq.rhs);
  return os.str();
}

std::string pretty(const CsrDef& csr) {
  std::ostringstream os;
  os << "Let " << csr.name;
  for (const auto& [n, t] : csr.params) os << " (" << n << ": " << type_name(t) << ")";
  os << " =\nmatch " << csr.params.back().first << " with";
  for (const auto& b : csr.branches) {
    os << "\n| " << b.ctor;
    for (const auto& bn : b.binders) os << " " << bn;
    os << " -> ";
    // print the surface form: expand `r` back into the self-call
    Term body = b.body;
    if (occurs_var(body, kRecResultVar)) {
      std::vector<Term> args;
      for (std::size_t i = 0; i + 1 < csr.params.size(); ++i)
        args.push_back(mk_var(csr.params[i].first));
      // recursive binder: the branch binder at the recursive field
      args.push_back(mk_var(b.binders.empty() ? std::string("_") : b.binders.back()));
      body = expand_rec_result(body, mk_csr(csr.name, std::move(args)));
    }
    os << pretty(body);
  }
  os << "\nend;";
  return os.str();
}

Term expand_rec_result(const Term& t, const Term& call) {
  if (t->kind == TermKind::Var && t->name == kRecResultVar) return call;
  if (t->args.empty()) return t;
  std::vector<Term> args;
  args.reserve(t->args.size());
  for (const auto& a : t->args) args.push_back(expand_rec_result(a, call));
  switch (t->kind) {
    case TermKind::BuiltinApp: return mk_op(t->op, std::move(args));
    case TermKind::CtorApp: return mk_ctor(t->name, std::move(args));
    case TermKind::CsrApp: return mk_csr(t->name, std::move(args));
    case TermKind::Ite: return mk_ite(args[0], args[1], args[2]);
    default: return t;
  }
}

std::string pretty(const Spec& spec) {
  std::ostringstream os;
  for (const auto& a : spec.adts) {
    os << "Inductive " << a.name << " = ";
    for (std::size_t i = 0; i < a.ctors.size(); ++i) {
      if (i) os << " | ";
      os << a.ctors[i].name;
      for (const auto& f : a.ctors[i].fields) os << " " << type_name(f);
    }
    os << ";\n\n";
  }
  for (const auto& c : spec.csrs) os << pretty(c) << "\n\n";
  os << "Goal";
  for (const auto& [n, t] : spec.goal.binders) os << " (" << n << ": " << type_name(t) << ")";
  os << ". " << pretty(spec.goal.lhs) << " = " << pretty(spec.goal.rhs) << ";\n";
  return os.str();
}

// ---------------------------------------------------------- equality

bool equation_eq(const Equation& a, const Equation& b) {
  return a.binders == b.binders && term_eq(a.lhs, b.lhs) && term_eq(a.rhs, b.rhs);
}

namespace {

bool alpha_match(const Term& a, const Term& b, std::map<std::string, std::string>& fwd,
                 std::map<std::string, std::string>& bwd) {
  if (a->kind != b->kind) return false;
  if (a->kind == TermKind::Var) {
    auto f = fwd.find(a->name);
    auto g = bwd.find(b->name);
    if (f == fwd.end() && g == bwd.end()) {
      fwd[a->name] = b->name;
      bwd[b->name] = a->name;
      return true;
    }
    return f != fwd.end() && g != bwd.end() && f->second == b->name && g->second == a->name;
  }
  switch (a->kind) {
    case TermKind::IntConst: return a->int_val == b->int_val;
    case TermKind::BoolConst: return a->bool_val == b->bool_val;
    case TermKind::BuiltinApp:
      if (a->op != b->op) return false;
      break;
    case TermKind::CtorApp:
    case TermKind::CsrApp:
      if (a->name != b->name) return false;
      break;
    default: break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!alpha_match(a->args[i], b->args[i], fwd, bwd)) return false;
  return true;
}

}  // namespace

bool alpha_eq(const Equation& a, const Equation& b) {
  std::map<std::string, std::string> fwd, bwd;
  if (!alpha_match(a.lhs, b.lhs, fwd, bwd)) return false;
  if (!alpha_match(a.rhs, b.rhs, fwd, bwd)) return false;
  // the mapped binders must carry the same types
  auto type_in = [](const Equation& eq, const std::string& n) -> const Type* {
    for (const auto& [bn, bt] : eq.binders)
      if (bn == n) return &bt;
    return nullptr;
  };
  for (const auto& [x, y] : fwd) {
    const Type* ta = type_in(a, x);
    const Type* tb = type_in(b, y);
    if (!ta || !tb || !(*ta == *tb)) return false;
  }
  return true;
}

bool csr_alpha_eq(const CsrDef& a, const CsrDef& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i].second != b.params[i].second) return false;
  if (a.branches.size() != b.branches.size()) return false;
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    const auto& ba = a.branches[i];
    const auto& bb = b.branches[i];
    if (ba.ctor != bb.ctor || ba.binders.size() != bb.binders.size()) return false;
    std::map<std::string, std::string> fwd, bwd;
    for (std::size_t j = 0; j < a.params.size(); ++j) {
      fwd[a.params[j].first] = b.params[j].first;
      bwd[b.params[j].first] = a.params[j].first;
    }
    for (std::size_t j = 0; j < ba.binders.size(); ++j) {
      fwd[ba.binders[j]] = bb.binders[j];
      bwd[bb.binders[j]] = ba.binders[j];
    }
    fwd[kRecResultVar] = kRecResultVar;
    bwd[kRecResultVar] = kRecResultVar;
    if (!alpha_match(ba.body, bb.body, fwd, bwd)) return false;
  }
  return true;
}

}  // namespace indeq
