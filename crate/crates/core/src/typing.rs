//! The typing environment: operator signatures, the subtype relation, and
//! substitution-candidate lookup.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::smtlib::{FormulaDocument, OperatorOccurrence, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseType {
    Bool,
    Int,
    Real,
    Str,
    RegLan,
    BitVec(u32),
    /// Opaque tag carried by the quantifier row's binding-list slot. It sits
    /// outside the `<: Top` lattice so quantifiers only inter-substitute.
    Quantifier,
    Top,
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseType::Bool => write!(f, "Bool"),
            BaseType::Int => write!(f, "Int"),
            BaseType::Real => write!(f, "Real"),
            BaseType::Str => write!(f, "String"),
            BaseType::RegLan => write!(f, "RegLan"),
            BaseType::BitVec(n) => write!(f, "BitVec{n}"),
            BaseType::Quantifier => write!(f, "Quantifier"),
            BaseType::Top => write!(f, "Top"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeTerm {
    Base(BaseType),
    /// Fixed argument tuple.
    Product(Vec<TypeTerm>),
    /// Homogeneous variadic tuple `A x ... x A` with a minimum arity.
    VarProduct { elem: Box<TypeTerm>, min_arity: usize },
}

impl TypeTerm {
    pub fn base(b: BaseType) -> Self {
        TypeTerm::Base(b)
    }

    pub fn variadic(elem: BaseType, min_arity: usize) -> Self {
        TypeTerm::VarProduct {
            elem: Box::new(TypeTerm::Base(elem)),
            min_arity,
        }
    }

    fn replace_top(&self, with: BaseType) -> TypeTerm {
        match self {
            TypeTerm::Base(BaseType::Top) => TypeTerm::Base(with),
            TypeTerm::Base(b) => TypeTerm::Base(*b),
            TypeTerm::Product(elems) => {
                TypeTerm::Product(elems.iter().map(|e| e.replace_top(with)).collect())
            }
            TypeTerm::VarProduct { elem, min_arity } => TypeTerm::VarProduct {
                elem: Box::new(elem.replace_top(with)),
                min_arity: *min_arity,
            },
        }
    }
}

/// One row of the operator table: `name : arg_type -> ret_type`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSignature {
    pub name: String,
    pub arg_type: TypeTerm,
    pub ret_type: TypeTerm,
    /// True for the `=`/`distinct` row, whose element type is `A <: Top`
    /// and gets instantiated from the call-site context.
    pub polymorphic_over_top: bool,
}

impl OperatorSignature {
    /// Can this operator be applied to `arity` arguments?
    pub fn accepts_arity(&self, arity: usize) -> bool {
        match &self.arg_type {
            TypeTerm::Product(elems) => elems.len() == arity,
            TypeTerm::VarProduct { min_arity, .. } => arity >= *min_arity,
            TypeTerm::Base(_) => arity == 1,
        }
    }
}

fn base_subtype(b1: BaseType, b2: BaseType) -> bool {
    b1 == b2
        || (b1 == BaseType::Int && b2 == BaseType::Real)
        || (b2 == BaseType::Top && b1 != BaseType::Quantifier)
}

/// The subtype relation `t1 <: t2` over argument/return types: reflexivity,
/// Int <: Real, fixed tuples below variadic ones, and wider variadic
/// minimums below narrower ones.
pub fn is_subtype(t1: &TypeTerm, t2: &TypeTerm) -> bool {
    match (t1, t2) {
        (TypeTerm::Base(b1), TypeTerm::Base(b2)) => base_subtype(*b1, *b2),
        (TypeTerm::Product(e1), TypeTerm::Product(e2)) => {
            e1.len() == e2.len() && e1.iter().zip(e2).all(|(a, b)| is_subtype(a, b))
        }
        (TypeTerm::Product(elems), TypeTerm::VarProduct { elem, min_arity }) => {
            elems.len() >= *min_arity && elems.iter().all(|e| is_subtype(e, elem))
        }
        (
            TypeTerm::VarProduct {
                elem: e1,
                min_arity: m1,
            },
            TypeTerm::VarProduct {
                elem: e2,
                min_arity: m2,
            },
        ) => m1 >= m2 && is_subtype(e1, e2),
        // a variadic tuple admits arities a fixed tuple does not
        (TypeTerm::VarProduct { .. }, TypeTerm::Product(_)) => false,
        _ => false,
    }
}

/// Function subtyping: contravariant arguments, covariant return.
pub fn is_signature_subtype(sub: &OperatorSignature, sup: &OperatorSignature) -> bool {
    is_subtype(&sup.arg_type, &sub.arg_type) && is_subtype(&sub.ret_type, &sup.ret_type)
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("duplicate operator `{0}` in table")]
    DuplicateOperator(String),
    #[error("{path}:{line}: malformed signature: {msg}")]
    ParseError {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Call-site sort information for the polymorphic `=`/`distinct` row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgContext {
    Numeric,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct SignatureTable {
    signatures: BTreeMap<String, OperatorSignature>,
    /// name -> names of operators whose signature is a subtype.
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl SignatureTable {
    /// The core table: equality, quantifiers, boolean connectives,
    /// arithmetic relations and functions, integer division and modulo.
    pub fn core() -> Self {
        use BaseType::*;
        let rows = vec![
            sig("=", TypeTerm::variadic(Top, 2), TypeTerm::base(Bool), true),
            sig(
                "distinct",
                TypeTerm::variadic(Top, 2),
                TypeTerm::base(Bool),
                true,
            ),
            sig(
                "exists",
                TypeTerm::Product(vec![TypeTerm::base(Quantifier), TypeTerm::base(Bool)]),
                TypeTerm::base(Bool),
                false,
            ),
            sig(
                "forall",
                TypeTerm::Product(vec![TypeTerm::base(Quantifier), TypeTerm::base(Bool)]),
                TypeTerm::base(Bool),
                false,
            ),
            sig("and", TypeTerm::variadic(Bool, 2), TypeTerm::base(Bool), false),
            sig("or", TypeTerm::variadic(Bool, 2), TypeTerm::base(Bool), false),
            sig("=>", TypeTerm::variadic(Bool, 2), TypeTerm::base(Bool), false),
            sig("<=", TypeTerm::variadic(Real, 2), TypeTerm::base(Bool), false),
            sig(">=", TypeTerm::variadic(Real, 2), TypeTerm::base(Bool), false),
            sig("<", TypeTerm::variadic(Real, 2), TypeTerm::base(Bool), false),
            sig(">", TypeTerm::variadic(Real, 2), TypeTerm::base(Bool), false),
            sig("+", TypeTerm::variadic(Real, 2), TypeTerm::base(Real), false),
            sig("-", TypeTerm::variadic(Real, 2), TypeTerm::base(Real), false),
            sig("*", TypeTerm::variadic(Real, 2), TypeTerm::base(Real), false),
            sig("/", TypeTerm::variadic(Real, 2), TypeTerm::base(Real), false),
            sig("div", TypeTerm::variadic(Int, 2), TypeTerm::base(Int), false),
            sig(
                "mod",
                TypeTerm::Product(vec![TypeTerm::base(Int), TypeTerm::base(Int)]),
                TypeTerm::base(Int),
                false,
            ),
        ];
        Self::from_signatures(rows).expect("core table is well-formed")
    }

    pub fn from_signatures(rows: Vec<OperatorSignature>) -> Result<Self, TableError> {
        let mut signatures = BTreeMap::new();
        for row in rows {
            if signatures.insert(row.name.clone(), row.clone()).is_some() {
                return Err(TableError::DuplicateOperator(row.name));
            }
        }
        let mut table = SignatureTable {
            signatures,
            groups: BTreeMap::new(),
        };
        table.rebuild_groups();
        Ok(table)
    }

    fn rebuild_groups(&mut self) {
        self.groups.clear();
        for (name, sup) in &self.signatures {
            let subs: BTreeSet<String> = self
                .signatures
                .iter()
                .filter(|(other, sub)| *other != name && is_signature_subtype(sub, sup))
                .map(|(other, _)| other.clone())
                .collect();
            self.groups.insert(name.clone(), subs);
        }
    }

    /// Merge signatures from an extension file into the table.
    pub fn extend_from_str(&mut self, text: &str, path: &str) -> Result<(), TableError> {
        for row in parse_extension(text, path)? {
            if self.signatures.contains_key(&row.name) {
                return Err(TableError::DuplicateOperator(row.name));
            }
            self.signatures.insert(row.name.clone(), row);
        }
        self.rebuild_groups();
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&OperatorSignature> {
        self.signatures.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.signatures.contains_key(name)
    }

    pub fn operator_names(&self) -> BTreeSet<String> {
        self.signatures.keys().cloned().collect()
    }

    pub fn signatures(&self) -> impl Iterator<Item = &OperatorSignature> {
        self.signatures.values()
    }

    /// Precomputed subtype group of `name`.
    pub fn subtypes_of(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(name)
    }

    /// Every operator that may replace `op` at a call site with `arity`
    /// arguments, with the polymorphic row resolved per `context`.
    pub fn substitution_candidates_with_context(
        &self,
        op: &str,
        arity: usize,
        context: ArgContext,
    ) -> Result<BTreeSet<String>, TableError> {
        let target = self
            .get(op)
            .ok_or_else(|| TableError::UnknownOperator(op.to_string()))?;
        let mut out: BTreeSet<String> = self
            .groups
            .get(op)
            .into_iter()
            .flatten()
            .filter(|g| self.signatures[*g].accepts_arity(arity))
            .cloned()
            .collect();
        if target.polymorphic_over_top && context == ArgContext::Numeric {
            // instantiate A := Real and admit the arithmetic relations
            let inst = OperatorSignature {
                name: target.name.clone(),
                arg_type: target.arg_type.replace_top(BaseType::Real),
                ret_type: target.ret_type.replace_top(BaseType::Real),
                polymorphic_over_top: false,
            };
            for (name, sub) in &self.signatures {
                if name != op && sub.accepts_arity(arity) && is_signature_subtype(sub, &inst) {
                    out.insert(name.clone());
                }
            }
        }
        out.remove(op);
        Ok(out)
    }

    /// Context-free candidate set; the polymorphic row stays at its safe
    /// instantiation.
    pub fn substitution_candidates(
        &self,
        op: &str,
        arity: usize,
    ) -> Result<BTreeSet<String>, TableError> {
        self.substitution_candidates_with_context(op, arity, ArgContext::Inconclusive)
    }

    /// Candidates for a concrete occurrence, running the numeric probe on
    /// its first argument.
    pub fn candidates_for_occurrence(
        &self,
        doc: &FormulaDocument,
        occ: &OperatorOccurrence,
    ) -> Result<BTreeSet<String>, TableError> {
        let context = match self.get(&occ.operator) {
            Some(s) if s.polymorphic_over_top => probe_context(doc, occ),
            _ => ArgContext::Inconclusive,
        };
        self.substitution_candidates_with_context(&occ.operator, occ.arity, context)
    }
}

/// Cheap numeric probe: the first argument is a numeral/decimal literal, or
/// a plain variable declared with sort Int or Real.
fn probe_context(doc: &FormulaDocument, occ: &OperatorOccurrence) -> ArgContext {
    let args = doc.argument_slices(occ);
    let Some(first) = args.first().and_then(|a| a.first()) else {
        return ArgContext::Inconclusive;
    };
    match first.kind {
        TokenKind::Numeral | TokenKind::Decimal => ArgContext::Numeric,
        TokenKind::Symbol => match doc.declared_sort(&first.text) {
            Some("Int") | Some("Real") => ArgContext::Numeric,
            _ => ArgContext::Inconclusive,
        },
        _ => ArgContext::Inconclusive,
    }
}

fn sig(name: &str, arg_type: TypeTerm, ret_type: TypeTerm, poly: bool) -> OperatorSignature {
    OperatorSignature {
        name: name.to_string(),
        arg_type,
        ret_type,
        polymorphic_over_top: poly,
    }
}

/// Parse an operator-table extension file. One signature per line:
///
/// ```text
/// str.len    : String -> Int
/// str.++     : String ... -> String
/// str.substr : String x Int x Int -> String
/// ```
///
/// `T1 x T2 x ...` is a fixed argument tuple; `T ...` is a variadic tuple
/// with minimum arity 2 (`T ...k` overrides the minimum). `#` and `;` start
/// comments.
pub fn parse_extension(text: &str, path: &str) -> Result<Vec<OperatorSignature>, TableError> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| TableError::ParseError {
            path: path.to_string(),
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let (name, rest) = line.split_once(':').ok_or_else(|| err("missing `:`"))?;
        let (args, ret) = rest.split_once("->").ok_or_else(|| err("missing `->`"))?;
        let name = name.trim().to_string();
        if name.is_empty() {
            return Err(err("empty operator name"));
        }
        let ret_type = parse_base(ret.trim()).ok_or_else(|| err("bad return type"))?;
        let parts: Vec<&str> = args.trim().split_whitespace().collect();
        let arg_type = if parts.len() >= 2 && parts.last().unwrap().starts_with("...") {
            let min: usize = match parts.last().unwrap().trim_start_matches("...") {
                "" => 2,
                n => n.parse().map_err(|_| err("bad variadic minimum"))?,
            };
            if parts.len() != 2 {
                return Err(err("variadic form is `T ...` or `T ...k`"));
            }
            let elem = parse_base(parts[0]).ok_or_else(|| err("bad argument type"))?;
            TypeTerm::VarProduct {
                elem: Box::new(TypeTerm::Base(elem)),
                min_arity: min,
            }
        } else {
            let elems: Option<Vec<TypeTerm>> = parts
                .iter()
                .filter(|p| **p != "x")
                .map(|p| parse_base(p).map(TypeTerm::Base))
                .collect();
            TypeTerm::Product(elems.ok_or_else(|| err("bad argument type"))?)
        };
        rows.push(OperatorSignature {
            name,
            arg_type,
            ret_type: TypeTerm::Base(ret_type),
            polymorphic_over_top: false,
        });
    }
    Ok(rows)
}

fn parse_base(s: &str) -> Option<BaseType> {
    match s {
        "Bool" => Some(BaseType::Bool),
        "Int" => Some(BaseType::Int),
        "Real" => Some(BaseType::Real),
        "String" => Some(BaseType::Str),
        "RegLan" => Some(BaseType::RegLan),
        _ => s
            .strip_prefix("BitVec")
            .and_then(|n| n.parse().ok())
            .map(BaseType::BitVec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BaseType::*;

    fn names(set: &BTreeSet<String>) -> Vec<&str> {
        set.iter().map(|s| s.as_str()).collect()
    }

    #[test]
    fn div_below_mod_not_conversely() {
        let t = SignatureTable::core();
        let div = t.get("div").unwrap();
        let modulo = t.get("mod").unwrap();
        assert!(is_signature_subtype(div, modulo));
        assert!(!is_signature_subtype(modulo, div));
    }

    #[test]
    fn reflexivity_over_all_table_types() {
        let t = SignatureTable::core();
        for s in t.signatures() {
            assert!(is_subtype(&s.arg_type, &s.arg_type), "{}", s.name);
            assert!(is_subtype(&s.ret_type, &s.ret_type), "{}", s.name);
            assert!(is_signature_subtype(s, s), "{}", s.name);
        }
    }

    #[test]
    fn transitivity_by_enumeration() {
        let t = SignatureTable::core();
        let sigs: Vec<_> = t.signatures().collect();
        for a in &sigs {
            for b in &sigs {
                for c in &sigs {
                    if is_signature_subtype(a, b) && is_signature_subtype(b, c) {
                        assert!(
                            is_signature_subtype(a, c),
                            "{} <: {} <: {} broke transitivity",
                            a.name,
                            b.name,
                            c.name
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn greater_candidate_set_from_paper_list() {
        let t = SignatureTable::core();
        let cands = t.substitution_candidates(">", 2).unwrap();
        assert_eq!(names(&cands), vec!["<", "<=", "=", ">=", "distinct"]);
    }

    #[test]
    fn quantifier_row_only_inter_substitutes() {
        let t = SignatureTable::core();
        assert_eq!(
            names(&t.substitution_candidates("forall", 2).unwrap()),
            vec!["exists"]
        );
        assert_eq!(
            names(&t.substitution_candidates("exists", 2).unwrap()),
            vec!["forall"]
        );
    }

    #[test]
    fn mod_gains_div_but_not_at_wrong_arity() {
        let t = SignatureTable::core();
        assert!(t.substitution_candidates("mod", 2).unwrap().contains("div"));
        assert!(!t
            .substitution_candidates("div", 3)
            .unwrap()
            .contains("mod"));
    }

    #[test]
    fn equality_safe_without_context() {
        let t = SignatureTable::core();
        assert_eq!(
            names(&t.substitution_candidates("=", 2).unwrap()),
            vec!["distinct"]
        );
        assert_eq!(
            names(&t.substitution_candidates("distinct", 3).unwrap()),
            vec!["="]
        );
    }

    #[test]
    fn equality_numeric_context_admits_relations() {
        let t = SignatureTable::core();
        let cands = t
            .substitution_candidates_with_context("=", 2, ArgContext::Numeric)
            .unwrap();
        assert_eq!(names(&cands), vec!["<", "<=", ">", ">=", "distinct"]);
    }

    #[test]
    fn boolean_connectives_admit_equality() {
        let t = SignatureTable::core();
        let cands = t.substitution_candidates("and", 3).unwrap();
        assert_eq!(names(&cands), vec!["=", "=>", "distinct", "or"]);
    }

    #[test]
    fn candidate_soundness_by_enumeration() {
        // every candidate's signature is a subtype of the target's (with the
        // polymorphic row read at its numeric instantiation) and arity-feasible
        let t = SignatureTable::core();
        for op in t.operator_names() {
            for arity in 1..=6usize {
                for ctx in [ArgContext::Inconclusive, ArgContext::Numeric] {
                    let cands = t
                        .substitution_candidates_with_context(&op, arity, ctx)
                        .unwrap();
                    for g in &cands {
                        let sub = t.get(g).unwrap();
                        assert!(sub.accepts_arity(arity), "{g} for {op}/{arity}");
                        let sup = t.get(&op).unwrap();
                        let direct = is_signature_subtype(sub, sup);
                        let via_real = sup.polymorphic_over_top
                            && is_signature_subtype(
                                sub,
                                &OperatorSignature {
                                    name: sup.name.clone(),
                                    arg_type: sup.arg_type.replace_top(Real),
                                    ret_type: sup.ret_type.replace_top(Real),
                                    polymorphic_over_top: false,
                                },
                            );
                        assert!(direct || via_real, "{g} not a subtype of {op}");
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_operator_is_an_error() {
        let t = SignatureTable::core();
        assert!(matches!(
            t.substitution_candidates("bvadd", 2),
            Err(TableError::UnknownOperator(_))
        ));
    }

    #[test]
    fn extension_file_round_trip() {
        let mut t = SignatureTable::core();
        t.extend_from_str(
            "str.++ : String ... -> String\nstr.len : String -> Int  # length\nstr.substr : String x Int x Int -> String\n",
            "strings.table",
        )
        .unwrap();
        assert!(t.contains("str.len"));
        let cands = t.substitution_candidates("str.++", 2).unwrap();
        assert!(cands.is_empty());
        assert_eq!(
            t.get("str.substr").unwrap().arg_type,
            TypeTerm::Product(vec![
                TypeTerm::Base(Str),
                TypeTerm::Base(Int),
                TypeTerm::Base(Int)
            ])
        );
    }

    #[test]
    fn extension_parse_errors_carry_location() {
        let mut t = SignatureTable::core();
        let err = t.extend_from_str("foo Int -> Int", "bad.table").unwrap_err();
        assert!(matches!(err, TableError::ParseError { line: 1, .. }));
    }
}
