//! Partial differentiation and substitution on canonical expressions.

use super::normalize::normalize;
use super::{ElemTag, Expr, PartialDeriv, Rat};
use num_traits::One;
use std::collections::BTreeMap;

/// Derivative of an elementary function with respect to its argument,
/// expressed in atoms of the same transcendental family (so splitting stays
/// sound: `tan' = 1 + tan^2`, `tanh' = 1 - tanh^2`).
fn elem_chain(tag: ElemTag, arg: &Expr) -> Expr {
    let a = || Box::new(arg.clone());
    match tag {
        ElemTag::Exp => Expr::Elem(ElemTag::Exp, a()),
        ElemTag::Ln => Expr::Pow(a(), -Rat::one()),
        ElemTag::Sin => Expr::Elem(ElemTag::Cos, a()),
        ElemTag::Cos => Expr::Prod(vec![Expr::int(-1), Expr::Elem(ElemTag::Sin, a())]),
        ElemTag::Tan => Expr::Sum(vec![
            Expr::one(),
            Expr::Pow(Box::new(Expr::Elem(ElemTag::Tan, a())), Rat::from_integer(2.into())),
        ]),
        ElemTag::Sinh => Expr::Elem(ElemTag::Cosh, a()),
        ElemTag::Cosh => Expr::Elem(ElemTag::Sinh, a()),
        ElemTag::Tanh => Expr::Sum(vec![
            Expr::one(),
            Expr::Prod(vec![
                Expr::int(-1),
                Expr::Pow(Box::new(Expr::Elem(ElemTag::Tanh, a())), Rat::from_integer(2.into())),
            ]),
        ]),
    }
}

/// What we differentiate with respect to: either a plain variable known by
/// name (entering unknown-function argument lists), or an arbitrary atom such
/// as a jet coordinate or parameter.
enum Wrt<'a> {
    Var(&'a str),
    Atom(&'a Expr),
}

impl Wrt<'_> {
    fn matches(&self, e: &Expr) -> bool {
        match self {
            Wrt::Var(n) => matches!(e, Expr::Indep(m) | Expr::Dep(m) if m == n),
            Wrt::Atom(a) => e == *a,
        }
    }

    fn var_name(&self) -> Option<&str> {
        match self {
            Wrt::Var(n) => Some(n),
            Wrt::Atom(Expr::Indep(n)) | Wrt::Atom(Expr::Dep(n)) => Some(n),
            _ => None,
        }
    }
}

fn d(e: &Expr, v: &Wrt) -> Expr {
    if v.matches(e) {
        return Expr::one();
    }
    match e {
        Expr::Rat(_) | Expr::Param(_) | Expr::Indep(_) | Expr::Dep(_) | Expr::Jet(_) => {
            Expr::zero()
        }
        Expr::Unknown(u) => match v.var_name() {
            Some(n) if u.args.iter().any(|a| a == n) => {
                Expr::PDeriv(PartialDeriv::new(u.name.clone(), u.args.clone(), [n]))
            }
            _ => Expr::zero(),
        },
        Expr::PDeriv(p) => match v.var_name() {
            Some(n) if p.args.iter().any(|a| a == n) => {
                let mut idx = p.idx.clone();
                idx.push(n.to_string());
                idx.sort();
                Expr::PDeriv(PartialDeriv { name: p.name.clone(), args: p.args.clone(), idx })
            }
            _ => Expr::zero(),
        },
        Expr::Elem(tag, a) => Expr::Prod(vec![elem_chain(*tag, a), d(a, v)]),
        Expr::Pow(b, q) => Expr::Prod(vec![
            Expr::Rat(q.clone()),
            Expr::Pow(b.clone(), q.clone() - Rat::one()),
            d(b, v),
        ]),
        Expr::Prod(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for (i, f) in fs.iter().enumerate() {
                let mut prod: Vec<Expr> = fs.to_vec();
                prod[i] = d(f, v);
                terms.push(Expr::Prod(prod));
            }
            Expr::Sum(terms)
        }
        Expr::Sum(ts) => Expr::Sum(ts.iter().map(|t| d(t, v)).collect()),
    }
}

/// Partial derivative treating all other atoms as constants. When `v` is a
/// plain variable, unknown functions having it as an argument differentiate to
/// `PartialDeriv` nodes; everything else obeys the usual chain/product rules.
pub fn pdiff(e: &Expr, v: &Expr) -> Expr {
    let wrt = match v {
        Expr::Indep(n) | Expr::Dep(n) => Wrt::Var(n),
        other => Wrt::Atom(other),
    };
    normalize(&d(e, &wrt))
}

/// Partial derivative with respect to a variable known only by name.
pub fn pdiff_var(e: &Expr, name: &str) -> Expr {
    normalize(&d(e, &Wrt::Var(name)))
}

/// Iterated partial derivative along a multi-index of variable names.
pub fn pdiff_multi(e: &Expr, idx: &[String]) -> Expr {
    let mut out = e.clone();
    for v in idx {
        out = pdiff_var(&out, v);
    }
    out
}

fn sub(e: &Expr, rules: &BTreeMap<Expr, Expr>) -> Expr {
    if let Some(r) = rules.get(e) {
        return r.clone();
    }
    match e {
        Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| sub(x, rules)).collect()),
        Expr::Prod(xs) => Expr::Prod(xs.iter().map(|x| sub(x, rules)).collect()),
        Expr::Pow(b, q) => Expr::Pow(Box::new(sub(b, rules)), q.clone()),
        Expr::Elem(t, a) => Expr::Elem(*t, Box::new(sub(a, rules))),
        _ => e.clone(),
    }
}

/// Simultaneous substitution of atoms by expressions, followed by
/// normalization. Replacements are not re-substituted.
pub fn substitute(e: &Expr, rules: &BTreeMap<Expr, Expr>) -> Expr {
    if rules.is_empty() {
        return normalize(e);
    }
    normalize(&sub(e, rules))
}

fn sub_unknown(e: &Expr, name: &str, value: &Expr) -> Expr {
    match e {
        Expr::Unknown(u) if u.name == name => value.clone(),
        Expr::PDeriv(p) if p.name == name => pdiff_multi(value, &p.idx),
        Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| sub_unknown(x, name, value)).collect()),
        Expr::Prod(xs) => Expr::Prod(xs.iter().map(|x| sub_unknown(x, name, value)).collect()),
        Expr::Pow(b, q) => Expr::Pow(Box::new(sub_unknown(b, name, value)), q.clone()),
        Expr::Elem(t, a) => Expr::Elem(*t, Box::new(sub_unknown(a, name, value))),
        _ => e.clone(),
    }
}

/// Replace an unknown function by an expression, mapping its partial
/// derivatives to the corresponding derivatives of the value.
pub fn substitute_unknown(e: &Expr, name: &str, value: &Expr) -> Expr {
    normalize(&sub_unknown(e, name, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{prod_of, sum_of};

    fn x() -> Expr {
        Expr::indep("x")
    }

    fn u() -> Expr {
        Expr::dep("u")
    }

    fn ux() -> Expr {
        Expr::jet("u", ["x"])
    }

    #[test]
    fn power_rule_with_jet_atom() {
        // d/dx (x^2 u_x) = 2 x u_x
        let e = prod_of([Expr::powi(x(), 2), ux()]);
        assert_eq!(pdiff(&e, &x()), prod_of([Expr::int(2), x(), ux()]));
    }

    #[test]
    fn unknown_function_coefficient() {
        // d/du (f(x,t) u) = f(x,t)
        let f = Expr::unknown("f", ["x", "t"]);
        let e = prod_of([f.clone(), u()]);
        assert_eq!(pdiff(&e, &u()), f);
    }

    #[test]
    fn log_derivative() {
        let e = Expr::elem(ElemTag::Ln, x());
        assert_eq!(pdiff(&e, &x()), Expr::powi(x(), -1));
    }

    #[test]
    fn unknown_mixed_partials_sorted() {
        let f = Expr::unknown("f", ["x", "t"]);
        let fxt = pdiff(&pdiff(&f, &x()), &Expr::indep("t"));
        let ftx = pdiff(&pdiff(&f, &Expr::indep("t")), &x());
        assert_eq!(fxt, ftx);
    }

    #[test]
    fn substitute_jet_atom() {
        // u_t + u v with u_t -> u_xx
        let e = sum_of([Expr::jet("u", ["t"]), prod_of([u(), Expr::dep("v")])]);
        let mut rules = BTreeMap::new();
        rules.insert(Expr::jet("u", ["t"]), Expr::jet("u", ["x", "x"]));
        let got = substitute(&e, &rules);
        assert_eq!(got, sum_of([Expr::jet("u", ["x", "x"]), prod_of([u(), Expr::dep("v")])]));
    }

    #[test]
    fn substitute_empty_is_identity() {
        let e = sum_of([x(), Expr::indep("y")]);
        assert_eq!(substitute(&e, &BTreeMap::new()), e);
    }

    #[test]
    fn substitute_unknown_application() {
        let f = Expr::unknown("f", ["x", "t"]);
        let mut rules = BTreeMap::new();
        rules.insert(f.clone(), prod_of([x(), Expr::indep("t")]));
        assert_eq!(substitute(&f, &rules), prod_of([x(), Expr::indep("t")]));
    }

    #[test]
    fn substitute_unknown_maps_derivatives() {
        // f -> x^2 + t, then f_x -> 2x
        let value = sum_of([Expr::powi(x(), 2), Expr::indep("t")]);
        let fx = Expr::PDeriv(PartialDeriv::new("f", ["x", "t"], ["x"]));
        assert_eq!(substitute_unknown(&fx, "f", &value), prod_of([Expr::int(2), x()]));
    }
}
