//! Reference sort checker for a fragment of SMT-LIB 2.
//!
//! Deliberately independent of the fuzzer core: it has its own parser
//! and its own sort rules, so it can serve as an external well-typedness
//! oracle for generated scripts. Arithmetic follows a widening
//! discipline — `+`, `-`, `*`, `/` accept any numeric arguments and
//! yield `Real` — with `Int <: Real` subsumption at call sites.

use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sort {
    Bool,
    Int,
    Real,
    Other(String),
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Bool => write!(f, "Bool"),
            Sort::Int => write!(f, "Int"),
            Sort::Real => write!(f, "Real"),
            Sort::Other(name) => write!(f, "{name}"),
        }
    }
}

impl Sort {
    fn numeric(&self) -> bool {
        matches!(self, Sort::Int | Sort::Real)
    }

    /// Subsumption: Int fits where Real is expected.
    fn fits(&self, expected: &Sort) -> bool {
        self == expected || (*self == Sort::Int && *expected == Sort::Real)
    }
}

/// Least common supertype under Int <: Real, if one exists.
fn lub(a: &Sort, b: &Sort) -> Option<Sort> {
    if a == b {
        return Some(a.clone());
    }
    if a.numeric() && b.numeric() {
        return Some(Sort::Real);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckError {
    pub message: String,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CheckError {}

fn err<T>(message: impl Into<String>) -> Result<T, CheckError> {
    Err(CheckError {
        message: message.into(),
    })
}

// ---------------------------------------------------------------------
// S-expression parser
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s) => Some(s),
            Sexp::List(_) => None,
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Parser {
            bytes: input.as_bytes(),
            pos: 0,
        }
    }

    fn skip_trivia(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b';' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn parse_all(&mut self) -> Result<Vec<Sexp>, CheckError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            if self.pos >= self.bytes.len() {
                return Ok(out);
            }
            out.push(self.parse_one()?);
        }
    }

    fn parse_one(&mut self) -> Result<Sexp, CheckError> {
        self.skip_trivia();
        if self.pos >= self.bytes.len() {
            return err("unexpected end of input");
        }
        match self.bytes[self.pos] {
            b'(' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    if self.pos >= self.bytes.len() {
                        return err("unclosed parenthesis");
                    }
                    if self.bytes[self.pos] == b')' {
                        self.pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    items.push(self.parse_one()?);
                }
            }
            b')' => err(format!("unexpected ')' at byte {}", self.pos)),
            b'"' => {
                let start = self.pos;
                self.pos += 1;
                loop {
                    if self.pos >= self.bytes.len() {
                        return err("unterminated string literal");
                    }
                    if self.bytes[self.pos] == b'"' {
                        if self.bytes.get(self.pos + 1) == Some(&b'"') {
                            self.pos += 2;
                        } else {
                            self.pos += 1;
                            break;
                        }
                    } else {
                        self.pos += 1;
                    }
                }
                Ok(Sexp::Atom(
                    String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned(),
                ))
            }
            b'|' => {
                let start = self.pos;
                self.pos += 1;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'|' {
                    self.pos += 1;
                }
                if self.pos >= self.bytes.len() {
                    return err("unterminated quoted symbol");
                }
                self.pos += 1;
                Ok(Sexp::Atom(
                    String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned(),
                ))
            }
            _ => {
                let start = self.pos;
                while self.pos < self.bytes.len() {
                    let b = self.bytes[self.pos];
                    if b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b';' {
                        break;
                    }
                    self.pos += 1;
                }
                Ok(Sexp::Atom(
                    String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned(),
                ))
            }
        }
    }
}

// ---------------------------------------------------------------------
// Checker
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
struct FunSig {
    params: Vec<Sort>,
    ret: Sort,
}

#[derive(Default)]
struct Env {
    funs: HashMap<String, FunSig>,
    sorts: HashMap<String, usize>,
    /// lexical scopes for let / quantifier bindings
    locals: Vec<HashMap<String, Sort>>,
}

impl Env {
    fn lookup_local(&self, name: &str) -> Option<&Sort> {
        self.locals.iter().rev().find_map(|scope| scope.get(name))
    }
}

fn is_numeral(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_decimal(s: &str) -> bool {
    if let Some((whole, frac)) = s.split_once('.') {
        is_numeral(whole) && is_numeral(frac)
    } else {
        false
    }
}

fn parse_sort(sexp: &Sexp, env: &Env) -> Result<Sort, CheckError> {
    match sexp {
        Sexp::Atom(name) => match name.as_str() {
            "Bool" => Ok(Sort::Bool),
            "Int" => Ok(Sort::Int),
            "Real" => Ok(Sort::Real),
            "String" => Ok(Sort::Other("String".to_string())),
            other => {
                if env.sorts.contains_key(other) {
                    Ok(Sort::Other(other.to_string()))
                } else {
                    err(format!("unknown sort {other}"))
                }
            }
        },
        Sexp::List(_) => err("parameterized sorts are not supported"),
    }
}

/// Every argument pair must have a least common supertype; chained lub.
fn common_sort(sorts: &[Sort]) -> Option<Sort> {
    let mut acc = sorts.first()?.clone();
    for s in &sorts[1..] {
        acc = lub(&acc, s)?;
    }
    Some(acc)
}

fn check_term(sexp: &Sexp, env: &mut Env) -> Result<Sort, CheckError> {
    match sexp {
        Sexp::Atom(a) => {
            if a == "true" || a == "false" {
                return Ok(Sort::Bool);
            }
            if is_numeral(a) {
                return Ok(Sort::Int);
            }
            if is_decimal(a) {
                return Ok(Sort::Real);
            }
            if a.starts_with('"') {
                return Ok(Sort::Other("String".to_string()));
            }
            if let Some(sort) = env.lookup_local(a) {
                return Ok(sort.clone());
            }
            if let Some(sig) = env.funs.get(a) {
                if sig.params.is_empty() {
                    return Ok(sig.ret.clone());
                }
                return err(format!("{a} requires arguments"));
            }
            err(format!("unknown symbol {a}"))
        }
        Sexp::List(items) => {
            let Some(head) = items.first() else {
                return err("empty application");
            };
            let Some(op) = head.atom() else {
                return err("head of application must be a symbol");
            };
            let args = &items[1..];
            match op {
                "let" => check_let(args, env),
                "forall" | "exists" => check_quantifier(args, env),
                "!" => {
                    if args.is_empty() {
                        return err("! needs a term");
                    }
                    check_term(&args[0], env)
                }
                "ite" => {
                    if args.len() != 3 {
                        return err("ite takes three arguments");
                    }
                    let c = check_term(&args[0], env)?;
                    if c != Sort::Bool {
                        return err(format!("ite condition has sort {c}, expected Bool"));
                    }
                    let t = check_term(&args[1], env)?;
                    let e = check_term(&args[2], env)?;
                    lub(&t, &e).ok_or_else(|| CheckError {
                        message: format!("ite branches have incompatible sorts {t} and {e}"),
                    })
                }
                "not" => {
                    let sorts = check_args(args, env, 1, Some(1), op)?;
                    expect_all(&sorts, &Sort::Bool, op)?;
                    Ok(Sort::Bool)
                }
                "and" | "or" | "=>" | "xor" => {
                    let sorts = check_args(args, env, 2, None, op)?;
                    expect_all(&sorts, &Sort::Bool, op)?;
                    Ok(Sort::Bool)
                }
                "=" | "distinct" => {
                    let sorts = check_args(args, env, 2, None, op)?;
                    common_sort(&sorts).ok_or_else(|| CheckError {
                        message: format!("arguments of {op} have no common sort"),
                    })?;
                    Ok(Sort::Bool)
                }
                "<" | "<=" | ">" | ">=" => {
                    let sorts = check_args(args, env, 2, None, op)?;
                    expect_numeric(&sorts, op)?;
                    Ok(Sort::Bool)
                }
                "+" | "*" | "/" => {
                    let sorts = check_args(args, env, 2, None, op)?;
                    expect_numeric(&sorts, op)?;
                    Ok(Sort::Real)
                }
                "-" => {
                    let sorts = check_args(args, env, 1, None, op)?;
                    expect_numeric(&sorts, op)?;
                    Ok(Sort::Real)
                }
                "div" => {
                    let sorts = check_args(args, env, 2, None, op)?;
                    expect_all(&sorts, &Sort::Int, op)?;
                    Ok(Sort::Int)
                }
                "mod" => {
                    let sorts = check_args(args, env, 2, Some(2), op)?;
                    expect_all(&sorts, &Sort::Int, op)?;
                    Ok(Sort::Int)
                }
                "abs" => {
                    let sorts = check_args(args, env, 1, Some(1), op)?;
                    expect_all(&sorts, &Sort::Int, op)?;
                    Ok(Sort::Int)
                }
                "to_real" => {
                    let sorts = check_args(args, env, 1, Some(1), op)?;
                    expect_all(&sorts, &Sort::Int, op)?;
                    Ok(Sort::Real)
                }
                "to_int" => {
                    let sorts = check_args(args, env, 1, Some(1), op)?;
                    expect_numeric(&sorts, op)?;
                    Ok(Sort::Int)
                }
                _ => {
                    let Some(sig) = env.funs.get(op).cloned() else {
                        return err(format!("unknown function {op}"));
                    };
                    if args.len() != sig.params.len() {
                        return err(format!(
                            "{op} takes {} arguments, got {}",
                            sig.params.len(),
                            args.len()
                        ));
                    }
                    for (arg, expected) in args.iter().zip(&sig.params) {
                        let actual = check_term(arg, env)?;
                        if !actual.fits(expected) {
                            return err(format!(
                                "argument of {op} has sort {actual}, expected {expected}"
                            ));
                        }
                    }
                    Ok(sig.ret)
                }
            }
        }
    }
}

fn check_args(
    args: &[Sexp],
    env: &mut Env,
    min: usize,
    max: Option<usize>,
    op: &str,
) -> Result<Vec<Sort>, CheckError> {
    if args.len() < min {
        return err(format!("{op} needs at least {min} arguments"));
    }
    if let Some(max) = max {
        if args.len() > max {
            return err(format!("{op} takes at most {max} arguments"));
        }
    }
    args.iter().map(|a| check_term(a, env)).collect()
}

fn expect_all(sorts: &[Sort], expected: &Sort, op: &str) -> Result<(), CheckError> {
    for s in sorts {
        if !s.fits(expected) {
            return err(format!("argument of {op} has sort {s}, expected {expected}"));
        }
    }
    Ok(())
}

fn expect_numeric(sorts: &[Sort], op: &str) -> Result<(), CheckError> {
    for s in sorts {
        if !s.numeric() {
            return err(format!("argument of {op} has sort {s}, expected Int or Real"));
        }
    }
    Ok(())
}

fn check_let(args: &[Sexp], env: &mut Env) -> Result<Sort, CheckError> {
    let [bindings, body] = args else {
        return err("let takes a binding list and a body");
    };
    let Sexp::List(pairs) = bindings else {
        return err("let bindings must be a list");
    };
    let mut scope = HashMap::new();
    for pair in pairs {
        let Sexp::List(kv) = pair else {
            return err("let binding must be a pair");
        };
        let [name, value] = kv.as_slice() else {
            return err("let binding must be a pair");
        };
        let Some(name) = name.atom() else {
            return err("let binding name must be a symbol");
        };
        // parallel let: values are checked in the outer scope
        let sort = check_term(value, env)?;
        scope.insert(name.to_string(), sort);
    }
    env.locals.push(scope);
    let result = check_term(body, env);
    env.locals.pop();
    result
}

fn check_quantifier(args: &[Sexp], env: &mut Env) -> Result<Sort, CheckError> {
    let [bindings, body] = args else {
        return err("quantifier takes a binding list and a body");
    };
    let Sexp::List(pairs) = bindings else {
        return err("quantifier bindings must be a list");
    };
    if pairs.is_empty() {
        return err("quantifier needs at least one bound variable");
    }
    let mut scope = HashMap::new();
    for pair in pairs {
        let Sexp::List(kv) = pair else {
            return err("quantifier binding must be a pair");
        };
        let [name, sort] = kv.as_slice() else {
            return err("quantifier binding must be a pair");
        };
        let Some(name) = name.atom() else {
            return err("bound variable name must be a symbol");
        };
        scope.insert(name.to_string(), parse_sort(sort, env)?);
    }
    env.locals.push(scope);
    let body_sort = check_term(body, env);
    env.locals.pop();
    let body_sort = body_sort?;
    if body_sort != Sort::Bool {
        return err(format!("quantifier body has sort {body_sort}, expected Bool"));
    }
    Ok(Sort::Bool)
}

fn check_command(sexp: &Sexp, env: &mut Env) -> Result<(), CheckError> {
    let Sexp::List(items) = sexp else {
        return err("top-level form must be a command");
    };
    let Some(head) = items.first().and_then(Sexp::atom) else {
        return err("command must start with a symbol");
    };
    let args = &items[1..];
    match head {
        "set-logic" | "set-option" | "set-info" | "check-sat" | "get-model" | "get-value"
        | "get-unsat-core" | "exit" | "reset" | "push" | "pop" | "echo" => Ok(()),
        "declare-sort" => {
            let Some(name) = args.first().and_then(Sexp::atom) else {
                return err("declare-sort needs a name");
            };
            env.sorts.insert(name.to_string(), 0);
            Ok(())
        }
        "declare-const" => {
            let [name, sort] = args else {
                return err("declare-const takes a name and a sort");
            };
            let Some(name) = name.atom() else {
                return err("declare-const name must be a symbol");
            };
            let ret = parse_sort(sort, env)?;
            env.funs.insert(
                name.to_string(),
                FunSig {
                    params: Vec::new(),
                    ret,
                },
            );
            Ok(())
        }
        "declare-fun" => {
            let [name, params, ret] = args else {
                return err("declare-fun takes a name, parameter sorts, and a return sort");
            };
            let Some(name) = name.atom() else {
                return err("declare-fun name must be a symbol");
            };
            let Sexp::List(param_sexps) = params else {
                return err("declare-fun parameter sorts must be a list");
            };
            let params = param_sexps
                .iter()
                .map(|p| parse_sort(p, env))
                .collect::<Result<Vec<_>, _>>()?;
            let ret = parse_sort(ret, env)?;
            env.funs.insert(name.to_string(), FunSig { params, ret });
            Ok(())
        }
        "define-fun" => {
            let [name, params, ret, body] = args else {
                return err("define-fun takes a name, parameters, a return sort, and a body");
            };
            let Some(name) = name.atom() else {
                return err("define-fun name must be a symbol");
            };
            let Sexp::List(param_sexps) = params else {
                return err("define-fun parameters must be a list");
            };
            let mut scope = HashMap::new();
            let mut param_sorts = Vec::new();
            for pair in param_sexps {
                let Sexp::List(kv) = pair else {
                    return err("define-fun parameter must be a (name sort) pair");
                };
                let [pname, psort] = kv.as_slice() else {
                    return err("define-fun parameter must be a (name sort) pair");
                };
                let Some(pname) = pname.atom() else {
                    return err("parameter name must be a symbol");
                };
                let sort = parse_sort(psort, env)?;
                scope.insert(pname.to_string(), sort.clone());
                param_sorts.push(sort);
            }
            let ret = parse_sort(ret, env)?;
            env.locals.push(scope);
            let body_sort = check_term(body, env);
            env.locals.pop();
            let body_sort = body_sort?;
            if !body_sort.fits(&ret) {
                return err(format!(
                    "define-fun {name} body has sort {body_sort}, declared {ret}"
                ));
            }
            env.funs.insert(
                name.to_string(),
                FunSig {
                    params: param_sorts,
                    ret,
                },
            );
            Ok(())
        }
        "assert" => {
            let [term] = args else {
                return err("assert takes one term");
            };
            let sort = check_term(term, env)?;
            if sort != Sort::Bool {
                return err(format!("asserted term has sort {sort}, expected Bool"));
            }
            Ok(())
        }
        other => err(format!("unsupported command {other}")),
    }
}

/// Check a whole script; `Ok(())` means every command is well-sorted.
pub fn check_script(input: &str) -> Result<(), CheckError> {
    let forms = Parser::new(input).parse_all()?;
    let mut env = Env::default();
    for form in &forms {
        check_command(form, &mut env)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_basic_script() {
        let script = "(set-logic QF_LIA)\n(declare-fun x () Int)\n(assert (> x 0))\n(check-sat)";
        assert!(check_script(script).is_ok());
    }

    #[test]
    fn accepts_mixed_numeric_equality() {
        let script = "(declare-fun a () Real)\n(declare-fun n () Int)\n(assert (= a n 1))\n(check-sat)";
        assert!(check_script(script).is_ok());
    }

    #[test]
    fn rejects_bool_numeric_equality() {
        let script = "(assert (= 1 true))\n(check-sat)";
        assert!(check_script(script).is_err());
    }

    #[test]
    fn rejects_unknown_symbol() {
        assert!(check_script("(assert (> y 0))").is_err());
    }

    #[test]
    fn rejects_non_bool_assert() {
        assert!(check_script("(assert (+ 1 2))").is_err());
    }

    #[test]
    fn arithmetic_widens_to_real() {
        // (+ 1 2) has sort Real under the widening discipline,
        // so it cannot feed an Int-only operator.
        assert!(check_script("(assert (= (mod (+ 1 2) 2) 0))").is_err());
        assert!(check_script("(assert (= (+ 1 2) 3))").is_ok());
    }

    #[test]
    fn quantifiers_bind_variables() {
        let script = "(assert (forall ((a Int)) (exists ((b Int)) (distinct (* 2 b) a))))\n(check-sat)";
        assert!(check_script(script).is_ok());
    }

    #[test]
    fn quantifier_body_must_be_bool() {
        assert!(check_script("(assert (forall ((a Int)) (+ a 1)))").is_err());
    }

    #[test]
    fn let_is_parallel() {
        let script = "(declare-fun x () Int)\n(assert (let ((x true) (y x)) (and x (> y 0))))";
        assert!(check_script(script).is_ok());
        // sequential reading would give y sort Bool and fail on (> y 0)
    }

    #[test]
    fn div_requires_int() {
        assert!(check_script("(assert (= (div 7 2) 3))").is_ok());
        assert!(check_script("(assert (= (div 7.0 2) 3))").is_err());
    }

    #[test]
    fn defined_functions_apply() {
        let script = "(define-fun sq ((v Real)) Real (* v v))\n(assert (> (sq 2) 0))\n(check-sat)";
        assert!(check_script(script).is_ok());
        assert!(check_script("(define-fun f ((v Int)) Int (* v v))").is_err());
    }

    #[test]
    fn ite_needs_common_branch_sort() {
        assert!(check_script("(assert (> (ite true 1 2.5) 0))").is_ok());
        assert!(check_script("(assert (ite true 1 false))").is_err());
    }

    #[test]
    fn annotations_are_transparent() {
        let script = "(declare-fun p () Bool)\n(assert (! p :named a1))";
        assert!(check_script(script).is_ok());
    }

    #[test]
    fn strings_compare_with_strings_only() {
        assert!(check_script("(assert (= \"a\" \"b\"))").is_ok());
        assert!(check_script("(assert (= \"a\" 1))").is_err());
    }
}
