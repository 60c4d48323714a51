#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Core term language: algebraic data types, canonical structural
// recursions (CSRs), equations and whole problem specs, plus the
// parser, well-formedness checks and the printer.

namespace indeq {

using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------- types

enum class TypeKind { Int, Bool, Adt };

struct Type {
  TypeKind kind = TypeKind::Int;
  std::string adt;  // set iff kind == Adt

  static Type integer() { return {TypeKind::Int, {}}; }
  static Type boolean() { return {TypeKind::Bool, {}}; }
  static Type adt_ty(std::string name) { return {TypeKind::Adt, std::move(name)}; }

  bool is_adt() const { return kind == TypeKind::Adt; }
  bool operator==(const Type& o) const { return kind == o.kind && adt == o.adt; }
  bool operator!=(const Type& o) const { return !(*this == o); }
};

std::string type_name(const Type& t);

// ---------------------------------------------------------------- terms

enum class Op { Add, Sub, Mul, Le, Lt, Eq, And, Or, Not };

const char* op_symbol(Op op);
int op_arity(Op op);
// argument type (Int for arithmetic/comparisons, Bool for logic)
Type op_arg_type(Op op);
Type op_result_type(Op op);
std::optional<Op> op_from_symbol(const std::string& sym);

enum class TermKind { Var, IntConst, BoolConst, BuiltinApp, CtorApp, CsrApp, Ite };

struct TermNode;
using Term = std::shared_ptr<const TermNode>;

struct TermNode {
  TermKind kind;
  std::string name;  // Var / CtorApp / CsrApp
  Op op = Op::Add;   // BuiltinApp
  BigInt int_val;
  bool bool_val = false;
  std::vector<Term> args;  // Ite stores {cond, then, else}
};

Term mk_var(std::string name);
Term mk_int(BigInt v);
Term mk_int(long v);
Term mk_bool(bool v);
Term mk_op(Op op, std::vector<Term> args);
Term mk_ctor(std::string name, std::vector<Term> args);
Term mk_csr(std::string name, std::vector<Term> args);
Term mk_ite(Term cond, Term then_branch, Term else_branch);

bool term_eq(const Term& a, const Term& b);
std::size_t term_size(const Term& t);  // AST node count
std::size_t term_hash(const Term& t);
void collect_free_vars(const Term& t, std::set<std::string>& out);
std::set<std::string> free_vars(const Term& t);
bool occurs_var(const Term& t, const std::string& name);

// -------------------------------------------------------------- program

struct AdtDef {
  struct Ctor {
    std::string name;
    std::vector<Type> fields;
  };
  std::string name;
  std::vector<Ctor> ctors;

  // index of the field with the ADT's own type, if any
  std::optional<std::size_t> recursive_field(const Ctor& c) const;
  bool is_base(const Ctor& c) const { return !recursive_field(c).has_value(); }
};

// One match branch. For recursive constructors the body is canonical:
// the self-call has been replaced by the result variable `r`.
struct CsrBranch {
  std::string ctor;
  std::vector<std::string> binders;  // one per constructor field
  Term body;
};

struct CsrDef {
  std::string name;
  std::vector<std::pair<std::string, Type>> params;  // last one is the recursive argument
  std::vector<CsrBranch> branches;                   // in constructor order

  const std::string& rec_adt() const { return params.back().second.adt; }
  const CsrBranch* branch_for(const std::string& ctor) const;
};

// the distinguished recursive-result variable in comb bodies
inline const std::string kRecResultVar = "r";

struct Equation {
  std::vector<std::pair<std::string, Type>> binders;
  Term lhs;
  Term rhs;
};

struct Spec {
  std::vector<AdtDef> adts;
  std::vector<CsrDef> csrs;
  Equation goal;

  const AdtDef* find_adt(const std::string& name) const;
  // constructor lookup: returns (adt, ctor index)
  std::optional<std::pair<const AdtDef*, std::size_t>> find_ctor(const std::string& name) const;
  const CsrDef* find_csr(const std::string& name) const;
};

// --------------------------------------------------------------- errors

enum class ErrKind { Syntax, Type, NonExhaustiveMatch, IllegalSelfCall, DuplicateName };

struct lang_error : std::runtime_error {
  ErrKind err;
  int line = 0, col = 0;
  lang_error(ErrKind k, const std::string& msg, int line_ = 0, int col_ = 0)
      : std::runtime_error(msg), err(k), line(line_), col(col_) {}
};

// ----------------------------------------------------------- operations

// Pre-canonical CSR as written in the source: branch bodies may contain
// inline self-calls.
struct RawCsr {
  std::string name;
  std::vector<std::pair<std::string, Type>> params;
  std::vector<CsrBranch> branches;  // bodies still contain self-calls
};

// Replaces every self-call `f v1 .. v_{k-1} t` (unchanged prefix, recursive
// binder last) by the result variable `r`. Any other self-application is an
// IllegalSelfCall.
CsrDef canonicalize_csr(const RawCsr& raw, const Spec& spec_so_far);

Spec parse_spec(const std::string& text);

// Parses a single expression against the given binder environment; used by
// tests and the trace checker.
Term parse_term(const std::string& text, const Spec& spec,
                const std::vector<std::pair<std::string, Type>>& env);

void typecheck_spec(const Spec& spec);
// Returns the type of `t` under `env`, throwing lang_error on mismatch.
Type type_of(const Term& t, const std::vector<std::pair<std::string, Type>>& env,
             const Spec& spec);

std::string pretty(const Term& t);
std::string pretty(const Equation& eq);
std::string pretty(const Spec& spec);
std::string pretty(const CsrDef& csr);

bool equation_eq(const Equation& a, const Equation& b);
// Structural equality up to a bijective renaming of variables.
bool alpha_eq(const Equation& a, const Equation& b);
// Positional alpha-equivalence of definitions (params and branch binders
// renamed by position, bodies compared structurally).
bool csr_alpha_eq(const CsrDef& a, const CsrDef& b);

}  // namespace indeq
