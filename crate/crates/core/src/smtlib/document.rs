//! Operator-occurrence indexing over token streams.
//!
//! Only enough structure is recovered to find head-position symbols, their
//! call-site arities, and the names that are shadowed by user declarations
//! or local binders. No AST is built.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use super::lexer::{tokenize, LexError, Token, TokenKind};

/// One enumerated operator occurrence: a Symbol token in head position
/// whose name is in the signature table and not user-declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorOccurrence {
    /// Dense index in document order, contiguous from 0.
    pub id: usize,
    /// Position of the head Symbol in the token stream.
    pub token_index: usize,
    pub operator: String,
    /// Number of sibling argument expressions at this call site.
    pub arity: usize,
}

#[derive(Debug, Clone)]
pub struct FormulaDocument {
    source: String,
    tokens: Vec<Token>,
    occurrences: Vec<OperatorOccurrence>,
    declared_symbols: HashSet<String>,
    /// Sorts of zero-arity user declarations, for cheap context probes.
    declared_sorts: HashMap<String, String>,
    logic: Option<String>,
    check_sat_count: usize,
    operator_names: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("unknown occurrence id {0}")]
    UnknownOccurrence(usize),
}

impl FormulaDocument {
    /// Tokenize `input` and index the operator occurrences of every name in
    /// `operator_names`.
    pub fn parse(input: &str, operator_names: &BTreeSet<String>) -> Result<Self, DocumentError> {
        let tokens = tokenize(input)?;
        Ok(Self::index(input.to_string(), tokens, operator_names.clone()))
    }

    fn index(source: String, tokens: Vec<Token>, operator_names: BTreeSet<String>) -> Self {
        let mut doc = FormulaDocument {
            source,
            tokens,
            occurrences: Vec::new(),
            declared_symbols: HashSet::new(),
            declared_sorts: HashMap::new(),
            logic: None,
            check_sat_count: 0,
            operator_names,
        };
        Indexer::run(&mut doc);
        doc
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn occurrences(&self) -> &[OperatorOccurrence] {
        &self.occurrences
    }

    pub fn occurrence(&self, id: usize) -> Option<&OperatorOccurrence> {
        self.occurrences.get(id)
    }

    pub fn declared_symbols(&self) -> &HashSet<String> {
        &self.declared_symbols
    }

    /// Sort of a zero-arity declared symbol, when the sort is a plain name.
    pub fn declared_sort(&self, name: &str) -> Option<&str> {
        self.declared_sorts.get(name).map(|s| s.as_str())
    }

    pub fn logic(&self) -> Option<&str> {
        self.logic.as_deref()
    }

    pub fn check_sat_count(&self) -> usize {
        self.check_sat_count
    }

    pub fn operator_names(&self) -> &BTreeSet<String> {
        &self.operator_names
    }

    /// Tokens of the argument expressions of an occurrence, split per
    /// argument. Used by context probes and the reducer.
    pub fn argument_slices(&self, occ: &OperatorOccurrence) -> Vec<&[Token]> {
        let mut args = Vec::with_capacity(occ.arity);
        let mut i = occ.token_index + 1;
        while i < self.tokens.len() {
            match self.tokens[i].kind {
                TokenKind::Comment => i += 1,
                TokenKind::RParen => break,
                TokenKind::LParen => {
                    let end = self.matching_rparen(i);
                    args.push(&self.tokens[i..=end]);
                    i = end + 1;
                }
                _ => {
                    args.push(&self.tokens[i..=i]);
                    i += 1;
                }
            }
        }
        args
    }

    fn matching_rparen(&self, lparen: usize) -> usize {
        let mut depth = 0usize;
        for (i, tok) in self.tokens.iter().enumerate().skip(lparen) {
            match tok.kind {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return i;
                    }
                }
                _ => {}
            }
        }
        self.tokens.len() - 1
    }

    /// Replace the head symbol at `occ_id` with `new_operator`, returning a
    /// re-indexed document. Every other byte is unchanged.
    pub fn substitute(&self, occ_id: usize, new_operator: &str) -> Result<Self, DocumentError> {
        let occ = self
            .occurrence(occ_id)
            .ok_or(DocumentError::UnknownOccurrence(occ_id))?;
        let span = self.tokens[occ.token_index].span;
        let mut text = String::with_capacity(self.source.len());
        text.push_str(&self.source[..span.offset]);
        text.push_str(new_operator);
        text.push_str(&self.source[span.end()..]);
        let tokens = tokenize(&text)?;
        Ok(Self::index(text, tokens, self.operator_names.clone()))
    }
}

/// Binder-aware walk assigning occurrence ids in document order.
struct Indexer<'a> {
    doc: &'a mut FormulaDocument,
    scopes: Vec<HashSet<String>>,
    occs: Vec<OperatorOccurrence>,
}

const COMMANDS: &[&str] = &[
    "assert",
    "check-sat",
    "check-sat-assuming",
    "declare-const",
    "declare-datatype",
    "declare-datatypes",
    "declare-fun",
    "declare-sort",
    "define-fun",
    "define-fun-rec",
    "define-funs-rec",
    "define-sort",
    "echo",
    "exit",
    "get-assertions",
    "get-assignment",
    "get-info",
    "get-model",
    "get-option",
    "get-proof",
    "get-unsat-assumptions",
    "get-unsat-core",
    "get-value",
    "maximize",
    "minimize",
    "pop",
    "push",
    "reset",
    "reset-assertions",
    "set-info",
    "set-logic",
    "set-option",
];

impl<'a> Indexer<'a> {
    fn run(doc: &'a mut FormulaDocument) {
        let mut ix = Indexer {
            doc,
            scopes: Vec::new(),
            occs: Vec::new(),
        };
        ix.top_level();
        ix.doc.occurrences = std::mem::take(&mut ix.occs);
    }

    fn tokens(&self) -> &[Token] {
        &self.doc.tokens
    }

    fn skip_comments(&self, mut i: usize) -> usize {
        while i < self.tokens().len() && self.tokens()[i].kind == TokenKind::Comment {
            i += 1;
        }
        i
    }

    /// Index just past a balanced group or atom starting at `i`, without
    /// recording anything.
    fn skip_expr(&self, i: usize) -> usize {
        let i = self.skip_comments(i);
        if i >= self.tokens().len() {
            return i;
        }
        if self.tokens()[i].kind != TokenKind::LParen {
            return i + 1;
        }
        let mut depth = 0usize;
        let mut j = i;
        while j < self.tokens().len() {
            match self.tokens()[j].kind {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return j + 1;
                    }
                }
                _ => {}
            }
            j += 1;
        }
        j
    }

    fn is_shadowed(&self, name: &str) -> bool {
        self.doc.declared_symbols.contains(name) || self.scopes.iter().any(|s| s.contains(name))
    }

    /// Count the sibling argument expressions following head position `i`
    /// until the enclosing RParen.
    fn count_args(&self, head: usize) -> usize {
        let mut count = 0usize;
        let mut i = head + 1;
        loop {
            let j = self.skip_comments(i);
            if j >= self.tokens().len() || self.tokens()[j].kind == TokenKind::RParen {
                break;
            }
            count += 1;
            i = self.skip_expr(j);
        }
        count
    }

    fn top_level(&mut self) {
        let mut i = 0usize;
        while i < self.tokens().len() {
            let j = self.skip_comments(i);
            if j >= self.tokens().len() {
                break;
            }
            if self.tokens()[j].kind == TokenKind::LParen {
                let h = self.skip_comments(j + 1);
                let head = (h < self.tokens().len() && self.tokens()[h].kind == TokenKind::Symbol)
                    .then(|| self.tokens()[h].text.clone());
                match head.as_deref() {
                    Some(cmd) if COMMANDS.contains(&cmd) => {
                        i = self.command(j, h, cmd);
                        continue;
                    }
                    _ => {
                        // bare expression at top level
                        i = self.expr(j);
                        continue;
                    }
                }
            }
            i = self.skip_expr(j);
        }
    }

    /// Handle one top-level command group whose LParen is at `lp` and head
    /// symbol at `h`. Returns the index past the group.
    fn command(&mut self, lp: usize, h: usize, cmd: &str) -> usize {
        let end = self.skip_expr(lp);
        match cmd {
            "assert" | "maximize" | "minimize" => {
                let mut i = h + 1;
                loop {
                    let j = self.skip_comments(i);
                    if j >= end - 1 {
                        break;
                    }
                    i = self.expr(j);
                }
            }
            "declare-fun" => {
                let n = self.skip_comments(h + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    let name = self.tokens()[n].text.clone();
                    // zero-arity declarations record their sort for probes
                    let args = self.skip_comments(n + 1);
                    if args < end && self.tokens()[args].kind == TokenKind::LParen {
                        let close = self.skip_comments(args + 1);
                        if close < end && self.tokens()[close].kind == TokenKind::RParen {
                            let ret = self.skip_comments(close + 1);
                            if ret < end && self.tokens()[ret].kind == TokenKind::Symbol {
                                self.doc
                                    .declared_sorts
                                    .insert(name.clone(), self.tokens()[ret].text.clone());
                            }
                        }
                    }
                    self.doc.declared_symbols.insert(name);
                }
            }
            "declare-const" => {
                let n = self.skip_comments(h + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    let name = self.tokens()[n].text.clone();
                    let sort = self.skip_comments(n + 1);
                    if sort < end && self.tokens()[sort].kind == TokenKind::Symbol {
                        self.doc
                            .declared_sorts
                            .insert(name.clone(), self.tokens()[sort].text.clone());
                    }
                    self.doc.declared_symbols.insert(name);
                }
            }
            "define-fun" | "define-fun-rec" => {
                let n = self.skip_comments(h + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    self.doc
                        .declared_symbols
                        .insert(self.tokens()[n].text.clone());
                    let params_at = self.skip_comments(n + 1);
                    let params = self.binding_names(params_at);
                    let ret_at = self.skip_expr(params_at);
                    let body_at = self.skip_expr(ret_at); // skip return sort
                    self.scopes.push(params);
                    let body_at = self.skip_comments(body_at);
                    if body_at < end - 1 {
                        self.expr(body_at);
                    }
                    self.scopes.pop();
                }
            }
            "declare-sort" | "define-sort" | "declare-datatype" | "declare-datatypes" => {
                let n = self.skip_comments(h + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    self.doc
                        .declared_symbols
                        .insert(self.tokens()[n].text.clone());
                }
            }
            "set-logic" => {
                let n = self.skip_comments(h + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    self.doc.logic = Some(self.tokens()[n].text.clone());
                }
            }
            "check-sat" | "check-sat-assuming" => {
                self.doc.check_sat_count += 1;
            }
            _ => {}
        }
        end
    }

    /// First symbol of each paren group inside the binding list at `i`.
    fn binding_names(&self, i: usize) -> HashSet<String> {
        let mut names = HashSet::new();
        let i = self.skip_comments(i);
        if i >= self.tokens().len() || self.tokens()[i].kind != TokenKind::LParen {
            return names;
        }
        let end = self.skip_expr(i);
        let mut j = i + 1;
        while j < end - 1 {
            let k = self.skip_comments(j);
            if k >= end - 1 {
                break;
            }
            if self.tokens()[k].kind == TokenKind::LParen {
                let n = self.skip_comments(k + 1);
                if n < end && self.tokens()[n].kind == TokenKind::Symbol {
                    names.insert(self.tokens()[n].text.clone());
                }
            }
            j = self.skip_expr(k);
        }
        names
    }

    /// Walk one expression starting at `i`, recording occurrences; returns
    /// the index past it.
    fn expr(&mut self, i: usize) -> usize {
        let i = self.skip_comments(i);
        if i >= self.tokens().len() || self.tokens()[i].kind != TokenKind::LParen {
            return self.skip_expr(i);
        }
        let end = self.skip_expr(i);
        let h = self.skip_comments(i + 1);
        if h >= end || self.tokens()[h].kind != TokenKind::Symbol {
            // ((...) ...) or empty group: walk children generically
            let mut j = i + 1;
            loop {
                let k = self.skip_comments(j);
                if k >= end - 1 {
                    break;
                }
                j = self.expr(k);
            }
            return end;
        }

        let head = self.tokens()[h].text.clone();
        match head.as_str() {
            "let" => {
                let bind_at = self.skip_comments(h + 1);
                let names = self.binding_names(bind_at);
                // bound values are expressions in the outer scope
                let bind_end = self.skip_expr(bind_at);
                if bind_at < end && self.tokens()[bind_at].kind == TokenKind::LParen {
                    let mut j = bind_at + 1;
                    while j < bind_end - 1 {
                        let k = self.skip_comments(j);
                        if k >= bind_end - 1 {
                            break;
                        }
                        if self.tokens()[k].kind == TokenKind::LParen {
                            let v = self.skip_comments(k + 1);
                            let v = self.skip_expr(v); // past bound name
                            let v = self.skip_comments(v);
                            if v < bind_end - 1 {
                                self.expr(v);
                            }
                        }
                        j = self.skip_expr(k);
                    }
                }
                self.scopes.push(names);
                let mut j = bind_end;
                loop {
                    let k = self.skip_comments(j);
                    if k >= end - 1 {
                        break;
                    }
                    j = self.expr(k);
                }
                self.scopes.pop();
                end
            }
            "forall" | "exists" => {
                if !self.is_shadowed(&head) && self.doc.operator_names.contains(&head) {
                    let arity = self.count_args(h);
                    if arity >= 1 {
                        self.occs.push(OperatorOccurrence {
                            id: self.occs.len(),
                            token_index: h,
                            operator: head.clone(),
                            arity,
                        });
                    }
                }
                let bind_at = self.skip_comments(h + 1);
                let names = self.binding_names(bind_at);
                let bind_end = self.skip_expr(bind_at);
                self.scopes.push(names);
                let mut j = bind_end;
                loop {
                    let k = self.skip_comments(j);
                    if k >= end - 1 {
                        break;
                    }
                    j = self.expr(k);
                }
                self.scopes.pop();
                end
            }
            "!" => {
                // annotated term: walk the term, skip attributes opaquely
                let t = self.skip_comments(h + 1);
                if t < end - 1 {
                    self.expr(t);
                }
                end
            }
            _ => {
                if self.doc.operator_names.contains(&head) && !self.is_shadowed(&head) {
                    let arity = self.count_args(h);
                    if arity >= 1 {
                        self.occs.push(OperatorOccurrence {
                            id: self.occs.len(),
                            token_index: h,
                            operator: head.clone(),
                            arity,
                        });
                    }
                }
                let mut j = h + 1;
                loop {
                    let k = self.skip_comments(j);
                    if k >= end - 1 {
                        break;
                    }
                    j = self.expr(k);
                }
                end
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> BTreeSet<String> {
        [
            "=", "distinct", "exists", "forall", "and", "or", "=>", "<=", ">=", "<", ">", "+",
            "-", "*", "/", "div", "mod",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn occ_names(doc: &FormulaDocument) -> Vec<(String, usize)> {
        doc.occurrences()
            .iter()
            .map(|o| (o.operator.clone(), o.arity))
            .collect()
    }

    #[test]
    fn enumeration_in_document_order() {
        let doc = FormulaDocument::parse("(+ (* 1 1) (- 2 (* 5 2)))", &table()).unwrap();
        assert_eq!(
            occ_names(&doc),
            vec![
                ("+".into(), 2),
                ("*".into(), 2),
                ("-".into(), 2),
                ("*".into(), 2)
            ]
        );
        let ids: Vec<_> = doc.occurrences().iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn user_declared_operator_is_shadowed() {
        let doc = FormulaDocument::parse(
            "(declare-fun mod (Int Int) Int) (assert (= (mod 1 1) 1))",
            &table(),
        )
        .unwrap();
        assert_eq!(occ_names(&doc), vec![("=".into(), 2)]);
    }

    #[test]
    fn quantified_formula_heads() {
        let src = "(assert (forall ((a Int)) (exists ((b Int)) (distinct (* 2 b) a))))\n(check-sat)";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        assert_eq!(
            occ_names(&doc),
            vec![
                ("forall".into(), 2),
                ("exists".into(), 2),
                ("distinct".into(), 2),
                ("*".into(), 2)
            ]
        );
    }

    #[test]
    fn let_binding_shadows_in_scope() {
        // `or` bound by let: the bound value is mutable, uses of the binder
        // are not heads anyway, and an inner shadowing name is excluded.
        let src = "(assert (let ((x (or p q)) (mod 3)) (= x (+ mod 1))))";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        assert_eq!(
            occ_names(&doc),
            vec![("or".into(), 2), ("=".into(), 2), ("+".into(), 2)]
        );
    }

    #[test]
    fn let_shadowed_head_excluded_in_body() {
        let src = "(assert (let ((and true)) (and p q)))";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        // `and` in the body is shadowed by the binder
        assert_eq!(occ_names(&doc), Vec::<(String, usize)>::new());
    }

    #[test]
    fn annotation_head_never_an_occurrence() {
        let src = "(assert (! (= a b) :named n1))";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        assert_eq!(occ_names(&doc), vec![("=".into(), 2)]);
    }

    #[test]
    fn substitute_changes_exactly_one_token() {
        let src = "(assert (> (* 2 a) 1))\n(check-sat)";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        let gt = doc
            .occurrences()
            .iter()
            .find(|o| o.operator == ">")
            .unwrap()
            .id;
        let mutant = doc.substitute(gt, "<=").unwrap();
        assert_eq!(mutant.source(), "(assert (<= (* 2 a) 1))\n(check-sat)");
        let differing = doc
            .tokens()
            .iter()
            .zip(mutant.tokens())
            .filter(|(a, b)| a.text != b.text)
            .count();
        assert_eq!(differing, 1);
    }

    #[test]
    fn identity_substitution_is_byte_identical() {
        let src = "(assert (> a 1))";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        let same = doc.substitute(0, ">").unwrap();
        assert_eq!(same.source(), src);
    }

    #[test]
    fn unknown_occurrence_rejected() {
        let doc = FormulaDocument::parse("(assert (> a 1))", &table()).unwrap();
        assert!(matches!(
            doc.substitute(7, "="),
            Err(DocumentError::UnknownOccurrence(7))
        ));
    }

    #[test]
    fn logic_and_check_sat_metadata() {
        let src = "(set-logic NRA)\n(declare-fun a () Real)\n(assert (> a 1))\n(check-sat)\n(check-sat)";
        let doc = FormulaDocument::parse(src, &table()).unwrap();
        assert_eq!(doc.logic(), Some("NRA"));
        assert_eq!(doc.check_sat_count(), 2);
        assert_eq!(doc.declared_sort("a"), Some("Real"));
    }
}
