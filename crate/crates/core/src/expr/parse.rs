//! Recursive-descent parser for the input DSL and the `D[..]` generator
//! notation.
//!
//! A document is a sequence of `;`-terminated statements with `#` line
//! comments:
//!
//! ```text
//! indep x, t;
//! dep u(x,t);
//! param a;
//! eq diff(u,t) = diff(u,x,x);
//! ```
//!
//! `diff(u,x,x)` maps to a jet coordinate when `u` is a declared dependent
//! variable and to a partial-derivative node when `u` is a declared unknown
//! coefficient function. Exponents must be rational constants.

use super::normalize::normalize;
use super::{ElemTag, Expr, PartialDeriv, Rat, UnknownFn};
use num_bigint::BigInt;
use num_traits::One;
use std::collections::BTreeMap;
use thiserror::Error;

/// Syntax or declaration error with source position (1-based).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

/// Declared symbols of a document: independent/dependent variables,
/// parameters and unknown coefficient functions with their argument lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Declarations {
    pub indep: Vec<String>,
    pub dep: Vec<String>,
    pub params: Vec<String>,
    pub unknowns: BTreeMap<String, Vec<String>>,
}

impl Declarations {
    pub fn is_declared(&self, name: &str) -> bool {
        self.indep.iter().any(|v| v == name)
            || self.dep.iter().any(|v| v == name)
            || self.params.iter().any(|v| v == name)
            || self.unknowns.contains_key(name)
    }

    pub fn is_indep(&self, name: &str) -> bool {
        self.indep.iter().any(|v| v == name)
    }

    pub fn is_dep(&self, name: &str) -> bool {
        self.dep.iter().any(|v| v == name)
    }

    /// All base variables, independent first.
    pub fn all_vars(&self) -> Vec<String> {
        self.indep.iter().chain(self.dep.iter()).cloned().collect()
    }

    /// Base variable as an expression atom, by name.
    pub fn var_expr(&self, name: &str) -> Option<Expr> {
        if self.is_indep(name) {
            Some(Expr::Indep(name.to_string()))
        } else if self.is_dep(name) {
            Some(Expr::Dep(name.to_string()))
        } else {
            None
        }
    }

    /// Register an unknown function, e.g. solver-generated ansatz unknowns.
    pub fn declare_unknown(&mut self, name: &str, args: &[String]) {
        self.unknowns.insert(name.to_string(), args.to_vec());
    }
}

/// Parsed document: declarations plus the equations, each stored as a single
/// canonical expression (`lhs - rhs`, interpreted as `= 0`).
#[derive(Debug, Clone)]
pub struct Document {
    pub decls: Declarations,
    pub eqs: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                bump(&mut chars);
                if c == '\n' {
                    break;
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    s.push(bump(&mut chars));
                } else {
                    break;
                }
            }
            let n: BigInt = s.parse().unwrap();
            out.push(Spanned { tok: Tok::Int(n), line: tline, col: tcol });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(bump(&mut chars));
                } else {
                    break;
                }
            }
            out.push(Spanned { tok: Tok::Ident(s), line: tline, col: tcol });
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '=' => Tok::Eq,
            other => {
                return Err(ParseError {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        };
        bump(&mut chars);
        out.push(Spanned { tok, line: tline, col: tcol });
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    decls: &'a Declarations,
    /// Accept `D[var]` atoms (generator notation).
    generator_mode: bool,
}

/// Internal marker name for a `D[var]` atom while parsing generators.
pub(crate) fn d_slot_name(var: &str) -> String {
    format!("D[{var}]")
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .or_else(|| self.toks.last().map(|s| (s.line, s.col + 1)))
            .unwrap_or((1, 1));
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.next() {
                Some(Tok::Ident(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => self.err(format!("expected {what}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.term()?;
                lhs = Expr::Sum(vec![lhs, rhs]);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.term()?;
                lhs = Expr::Sum(vec![lhs, Expr::Prod(vec![Expr::int(-1), rhs])]);
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(&Tok::Star) {
                let rhs = self.unary()?;
                lhs = Expr::Prod(vec![lhs, rhs]);
            } else if self.eat(&Tok::Slash) {
                let rhs = self.unary()?;
                lhs = Expr::Prod(vec![lhs, Expr::Pow(Box::new(rhs), -Rat::one())]);
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(Expr::Prod(vec![Expr::int(-1), e]));
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let at = self.pos;
            let exp = self.unary()?;
            let exp = normalize(&exp);
            let q = match exp {
                Expr::Rat(q) => q,
                _ => {
                    self.pos = at;
                    return self.err("exponent must be a rational constant");
                }
            };
            return Ok(Expr::Pow(Box::new(base), q));
        }
        Ok(base)
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "')' or ','")?;
            break;
        }
        Ok(args)
    }

    /// Remaining `diff` arguments must be plain variable identifiers.
    fn diff_vars(&mut self, args: &[Expr]) -> Result<Vec<String>, ParseError> {
        let mut vars = Vec::new();
        for a in args {
            match a {
                Expr::Indep(n) | Expr::Dep(n) => vars.push(n.clone()),
                _ => return self.err("diff expects variable names after the first argument"),
            }
        }
        if vars.is_empty() {
            return self.err("diff needs at least one differentiation variable");
        }
        Ok(vars)
    }

    fn apply_diff(&mut self, target: Expr, vars: Vec<String>) -> Result<Expr, ParseError> {
        match target {
            Expr::Dep(d) => {
                for v in &vars {
                    if !self.decls.is_indep(v) {
                        return self.err(format!(
                            "cannot differentiate dependent variable with respect to '{v}'"
                        ));
                    }
                }
                Ok(Expr::jet(d, vars))
            }
            Expr::Jet(j) => {
                let mut idx = j.idx;
                idx.extend(vars);
                Ok(Expr::jet(j.dep, idx))
            }
            Expr::Unknown(u) => {
                for v in &vars {
                    if !u.args.iter().any(|a| a == v) {
                        return self.err(format!(
                            "'{v}' is not an argument of unknown function '{}'",
                            u.name
                        ));
                    }
                }
                Ok(Expr::PDeriv(PartialDeriv::new(u.name, u.args, vars)))
            }
            Expr::PDeriv(p) => {
                for v in &vars {
                    if !p.args.iter().any(|a| a == v) {
                        return self.err(format!(
                            "'{v}' is not an argument of unknown function '{}'",
                            p.name
                        ));
                    }
                }
                let mut idx = p.idx;
                idx.extend(vars);
                Ok(Expr::PDeriv(PartialDeriv::new(p.name, p.args, idx)))
            }
            _ => self.err("diff applies to dependent variables or unknown functions"),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(_)) => match self.next() {
                Some(Tok::Int(n)) => Ok(Expr::Rat(Rat::from_integer(n))),
                _ => unreachable!(),
            },
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.ident_atom(name)
            }
            _ => self.err("expected an expression"),
        }
    }

    fn ident_atom(&mut self, name: String) -> Result<Expr, ParseError> {
        if self.generator_mode && name == "D" && self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            let var = self.ident("variable name inside D[..]")?;
            self.expect(Tok::RBracket, "']'")?;
            if self.decls.var_expr(&var).is_none() {
                return self.err(format!("D[{var}]: '{var}' is not a declared variable"));
            }
            return Ok(Expr::Unknown(UnknownFn::new(d_slot_name(&var), Vec::<String>::new())));
        }
        if name == "diff" {
            let args = self.call_args()?;
            if args.len() < 2 {
                return self.err("diff needs a function and at least one variable");
            }
            let vars = self.diff_vars(&args[1..])?;
            return self.apply_diff(args[0].clone(), vars);
        }
        if let Some(tag) = ElemTag::from_name(&name) {
            let args = self.call_args()?;
            if args.len() != 1 {
                return self.err(format!("{name} takes exactly one argument"));
            }
            return Ok(Expr::Elem(tag, Box::new(args.into_iter().next().unwrap())));
        }
        if self.decls.is_indep(&name) {
            return Ok(Expr::Indep(name));
        }
        if self.decls.is_dep(&name) {
            // accept the applied style u(x,t); arguments must match declaration
            if self.peek() == Some(&Tok::LParen) {
                let args = self.call_args()?;
                for a in &args {
                    if !matches!(a, Expr::Indep(_)) {
                        return self.err(format!(
                            "dependent variable '{name}' must be applied to independent variables"
                        ));
                    }
                }
            }
            return Ok(Expr::Dep(name));
        }
        if self.decls.params.iter().any(|p| p == &name) {
            return Ok(Expr::Param(name));
        }
        if let Some(fargs) = self.decls.unknowns.get(&name).cloned() {
            if self.peek() == Some(&Tok::LParen) {
                let args = self.call_args()?;
                let mut got = Vec::with_capacity(args.len());
                for a in &args {
                    match a {
                        Expr::Indep(n) | Expr::Dep(n) => got.push(n.clone()),
                        _ => {
                            return self.err(format!(
                                "unknown function '{name}' must be applied to declared variables"
                            ))
                        }
                    }
                }
                if got != fargs {
                    return self.err(format!(
                        "unknown function '{name}' must be applied to its declared arguments ({})",
                        fargs.join(",")
                    ));
                }
            }
            return Ok(Expr::Unknown(UnknownFn::new(name, fargs)));
        }
        self.err(format!("undeclared symbol '{name}'"))
    }
}

/// Parse a full DSL document.
pub fn parse_document(text: &str) -> Result<Document, ParseError> {
    let toks = lex(text)?;
    let mut decls = Declarations::default();
    let mut eqs = Vec::new();
    let mut pos = 0usize;
    while pos < toks.len() {
        let head = match &toks[pos].tok {
            Tok::Ident(s) => s.clone(),
            _ => {
                return Err(ParseError {
                    line: toks[pos].line,
                    col: toks[pos].col,
                    msg: "expected a statement keyword".into(),
                })
            }
        };
        // find statement end
        let mut end = pos;
        while end < toks.len() && toks[end].tok != Tok::Semi {
            end += 1;
        }
        if end == toks.len() {
            return Err(ParseError {
                line: toks[pos].line,
                col: toks[pos].col,
                msg: "missing ';' at end of statement".into(),
            });
        }
        let body = toks[pos + 1..end].to_vec();
        match head.as_str() {
            "indep" | "param" => {
                let mut p = Parser { toks: body, pos: 0, decls: &decls, generator_mode: false };
                let mut names = Vec::new();
                loop {
                    names.push(p.ident("variable name")?);
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
                if p.pos != p.toks.len() {
                    return p.err("unexpected tokens after declaration");
                }
                for n in names {
                    if decls.is_declared(&n) {
                        return Err(ParseError {
                            line: toks[pos].line,
                            col: toks[pos].col,
                            msg: format!("'{n}' is already declared"),
                        });
                    }
                    if head == "indep" {
                        decls.indep.push(n);
                    } else {
                        decls.params.push(n);
                    }
                }
            }
            "dep" | "unknown" => {
                let snapshot = decls.clone();
                let mut p =
                    Parser { toks: body, pos: 0, decls: &snapshot, generator_mode: false };
                loop {
                    let n = p.ident("function name")?;
                    let mut args = Vec::new();
                    if p.peek() == Some(&Tok::LParen) {
                        p.pos += 1;
                        loop {
                            args.push(p.ident("argument name")?);
                            if p.eat(&Tok::Comma) {
                                continue;
                            }
                            p.expect(Tok::RParen, "')'")?;
                            break;
                        }
                    }
                    if snapshot.is_declared(&n) || decls.is_declared(&n) {
                        return p.err(format!("'{n}' is already declared"));
                    }
                    if head == "dep" {
                        if args != snapshot.indep {
                            return p.err(format!(
                                "dependent variable '{n}' must list the independent variables ({})",
                                snapshot.indep.join(",")
                            ));
                        }
                        decls.dep.push(n);
                    } else {
                        for a in &args {
                            if !snapshot.is_indep(a) && !snapshot.is_dep(a) {
                                return p.err(format!(
                                    "unknown function argument '{a}' is not a declared variable"
                                ));
                            }
                        }
                        decls.unknowns.insert(n, args);
                    }
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
                if p.pos != p.toks.len() {
                    return p.err("unexpected tokens after declaration");
                }
            }
            "eq" => {
                let mut p = Parser { toks: body, pos: 0, decls: &decls, generator_mode: false };
                let lhs = p.expr()?;
                let e = if p.eat(&Tok::Eq) {
                    let rhs = p.expr()?;
                    Expr::Sum(vec![lhs, Expr::Prod(vec![Expr::int(-1), rhs])])
                } else {
                    lhs
                };
                if p.pos != p.toks.len() {
                    return p.err("unexpected tokens after equation");
                }
                eqs.push(normalize(&e));
            }
            other => {
                return Err(ParseError {
                    line: toks[pos].line,
                    col: toks[pos].col,
                    msg: format!("unknown statement '{other}'"),
                })
            }
        }
        pos = end + 1;
    }
    Ok(Document { decls, eqs })
}

/// Parse a single expression against existing declarations.
pub fn parse_expr(text: &str, decls: &Declarations) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, decls, generator_mode: false };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing tokens");
    }
    Ok(normalize(&e))
}

/// Parse a generator in `D`-notation, e.g. `(u*t-x)*D[u] - t^2*D[t]`, and
/// return the coefficient of each `D[var]` slot. The expression must be linear
/// homogeneous in the `D` slots.
pub fn parse_generator_coeffs(
    text: &str,
    decls: &Declarations,
) -> Result<BTreeMap<String, Expr>, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, decls, generator_mode: true };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing tokens");
    }
    let e = normalize(&e);
    let mut out = BTreeMap::new();
    let mut vars = decls.indep.clone();
    vars.extend(decls.dep.iter().cloned());
    let mut residual = e.clone();
    for v in &vars {
        let slot = Expr::Unknown(UnknownFn::new(d_slot_name(v), Vec::<String>::new()));
        let coeff = super::calculus::pdiff(&e, &slot);
        if !super::normalize::is_zero(&coeff) {
            residual = normalize(&Expr::Sum(vec![
                residual,
                Expr::Prod(vec![Expr::int(-1), coeff.clone(), slot]),
            ]));
            out.insert(v.clone(), coeff);
        }
    }
    if !super::normalize::is_zero(&residual) {
        return Err(ParseError {
            line: 1,
            col: 1,
            msg: "generator must be a combination of D[..] terms with coefficients free of D"
                .into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{prod_of, sum_of};

    fn heat_decls() -> Declarations {
        parse_document("indep x, t; dep u(x,t);").unwrap().decls
    }

    #[test]
    fn parses_heat_equation() {
        let doc = parse_document("indep x, t; dep u(x,t); eq diff(u,t) = diff(u,x,x);").unwrap();
        let expected = sum_of([
            Expr::jet("u", ["t"]),
            prod_of([Expr::int(-1), Expr::jet("u", ["x", "x"])]),
        ]);
        assert_eq!(doc.eqs, vec![expected]);
    }

    #[test]
    fn canonicalizes_on_parse() {
        let decls = heat_decls();
        let e = parse_expr("x*0 + u", &decls).unwrap();
        assert_eq!(e, Expr::dep("u"));
    }

    #[test]
    fn reports_position_of_bad_token() {
        let err = parse_document("indep x, t; dep u(x,t); eq 2*t*$u;").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.col > 25, "column {} should point into the statement", err.col);
        assert!(err.msg.contains("unexpected character"));
    }

    #[test]
    fn rejects_undeclared_symbols() {
        let decls = heat_decls();
        let err = parse_expr("x + q", &decls).unwrap_err();
        assert!(err.msg.contains("undeclared symbol 'q'"));
    }

    #[test]
    fn diff_on_unknown_gives_partial_deriv() {
        let doc = parse_document("indep x, t; dep u(x,t); unknown f(x,t); eq diff(f,x,t);")
            .unwrap();
        assert_eq!(
            doc.eqs[0],
            Expr::PDeriv(PartialDeriv::new("f", ["x", "t"], ["t", "x"]))
        );
    }

    #[test]
    fn applied_dependent_variable_style() {
        let decls = heat_decls();
        let a = parse_expr("diff(u(x,t),t)", &decls).unwrap();
        let b = parse_expr("diff(u,t)", &decls).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rational_exponent_and_division() {
        let decls = heat_decls();
        let e = parse_expr("x^(1/2) * x^(1/2) / x", &decls).unwrap();
        assert_eq!(e, Expr::one());
    }

    #[test]
    fn generator_notation_coefficients() {
        let doc = parse_document("indep x, t; dep u(x,t), v(x,t);").unwrap();
        let coeffs =
            parse_generator_coeffs("(u*t-x)*D[u] + (2*v*t-1)*D[v] - t^2*D[t] - t*x*D[x]", &doc.decls)
                .unwrap();
        assert_eq!(coeffs.len(), 4);
        let ut_minus_x = sum_of([
            prod_of([Expr::dep("u"), Expr::indep("t")]),
            prod_of([Expr::int(-1), Expr::indep("x")]),
        ]);
        assert_eq!(coeffs["u"], ut_minus_x);
        assert_eq!(coeffs["t"], prod_of([Expr::int(-1), Expr::powi(Expr::indep("t"), 2)]));
    }
}
