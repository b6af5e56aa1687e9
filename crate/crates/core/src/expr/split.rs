//! Coefficient extraction for linear-independence splitting.
//!
//! An expression that is polynomial in a designated set of "splitting" atoms
//! (jet coordinates of positive order plus base variables that are not
//! arguments of any unknown function) decomposes uniquely as a sum of
//! monomial-times-coefficient products. Equating each coefficient to zero is
//! what turns the invariance condition into the determining system.

use super::normalize::normalize;
use super::parse::Declarations;
use super::{Expr, Rat};
use num_traits::{One, Signed};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// An atom outside the coefficient ring appeared in a non-polynomial context,
/// e.g. inside an exponent or a transcendental argument.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("expression is not polynomial in the splitting atoms: {context}")]
pub struct NonPolynomial {
    pub context: String,
}

pub(crate) enum AtomClass {
    Split,
    Coeff,
}

/// Partition each canonical term of `e` into (splitting monomial, coefficient)
/// according to the classifier, and collect coefficients of equal monomials.
/// Returned pairs are ordered by descending (total degree, monomial).
pub(crate) fn partition_terms(
    e: &Expr,
    classify: &dyn Fn(&Expr) -> Result<AtomClass, NonPolynomial>,
) -> Result<Vec<(Expr, Expr)>, NonPolynomial> {
    let e = normalize(e);
    let mut groups: BTreeMap<(u64, Expr), Vec<Expr>> = BTreeMap::new();
    for term in e.summands() {
        let (coeff_rat, factors) = match term {
            Expr::Rat(c) => (c.clone(), Vec::new()),
            Expr::Prod(fs) => {
                if let Some(Expr::Rat(c)) = fs.first() {
                    (c.clone(), fs[1..].to_vec())
                } else {
                    (Rat::one(), fs.clone())
                }
            }
            other => (Rat::one(), vec![other.clone()]),
        };
        let mut mono: Vec<Expr> = Vec::new();
        let mut degree: u64 = 0;
        let mut coeff: Vec<Expr> = vec![Expr::Rat(coeff_rat)];
        for f in factors {
            let (base, exp) = match &f {
                Expr::Pow(b, q) => ((**b).clone(), q.clone()),
                other => ((*other).clone(), Rat::one()),
            };
            match classify(&base)? {
                AtomClass::Split => {
                    if !exp.is_integer() || exp.is_negative() {
                        return Err(NonPolynomial {
                            context: format!("'{base}' raised to non-natural power {exp}"),
                        });
                    }
                    degree += num_traits::ToPrimitive::to_u64(exp.numer()).unwrap_or(u64::MAX);
                    mono.push(f);
                }
                AtomClass::Coeff => coeff.push(f),
            }
        }
        let mono_expr = normalize(&Expr::Prod(mono));
        groups
            .entry((degree, mono_expr))
            .or_default()
            .push(normalize(&Expr::Prod(coeff)));
    }
    let mut out: Vec<(Expr, Expr)> = groups
        .into_iter()
        .rev()
        .map(|((_, mono), coeffs)| (mono, normalize(&Expr::Sum(coeffs))))
        .collect();
    out.retain(|(_, c)| !super::normalize::is_zero(c));
    Ok(out)
}

/// Decompose `e` as a sum of distinct monomials in the splitting atoms times
/// coefficients in the unknowns. Splitting atoms are the jet coordinates of
/// positive order plus every base variable that is not an argument of any of
/// the given unknown functions.
pub fn split_coefficients(
    e: &Expr,
    decls: &Declarations,
    unknowns: &BTreeSet<String>,
) -> Result<Vec<(Expr, Expr)>, NonPolynomial> {
    let mut arg_union: BTreeSet<&str> = BTreeSet::new();
    for u in unknowns {
        if let Some(args) = decls.unknowns.get(u) {
            arg_union.extend(args.iter().map(|s| s.as_str()));
        }
    }
    let split_vars: BTreeSet<String> = decls
        .all_vars()
        .into_iter()
        .filter(|v| !arg_union.contains(v.as_str()))
        .collect();
    let is_split_var = |name: &str| split_vars.contains(name);

    let contains_split_material = |e: &Expr| {
        let mut found = false;
        e.walk(&mut |n| match n {
            Expr::Jet(_) => found = true,
            Expr::Indep(v) | Expr::Dep(v) if is_split_var(v) => found = true,
            _ => {}
        });
        found
    };

    let classify = |base: &Expr| -> Result<AtomClass, NonPolynomial> {
        match base {
            Expr::Jet(_) => Ok(AtomClass::Split),
            Expr::Indep(v) | Expr::Dep(v) if is_split_var(v) => Ok(AtomClass::Split),
            other => {
                if contains_split_material(other) {
                    Err(NonPolynomial { context: format!("atom '{other}'") })
                } else {
                    Ok(AtomClass::Coeff)
                }
            }
        }
    };
    partition_terms(e, &classify)
}
