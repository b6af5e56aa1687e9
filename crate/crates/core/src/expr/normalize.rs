//! Canonical normalization: expansion over the polynomial fragment and
//! collection of rational coefficients of identical monomials.
//!
//! Internally an expression is flattened into a polynomial over "atoms"
//! (variables, jet coordinates, parameters, unknown-function applications,
//! elementary-function applications with canonical arguments, and opaque
//! power bases). Power arithmetic is formal: exponents of equal bases add,
//! `(x^a)^q = x^{a q}` for single-atom bases. This matches the positive-orthant
//! semantics needed by the quasi-monomial calculus.

use super::{Expr, Rat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

/// Sorted factor list: (atom base, nonzero rational exponent).
type Factors = Vec<(Expr, Rat)>;

/// Monomial key ordered graded-lexicographically: total degree first, then the
/// factor list.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct MonoKey {
    deg: Rat,
    factors: Factors,
}

impl MonoKey {
    fn new(factors: Factors) -> MonoKey {
        let deg = factors.iter().fold(Rat::zero(), |d, (_, e)| d + e);
        MonoKey { deg, factors }
    }

    fn unit() -> MonoKey {
        MonoKey { deg: Rat::zero(), factors: Vec::new() }
    }
}

type Poly = BTreeMap<MonoKey, Rat>;

fn poly_const(c: Rat) -> Poly {
    let mut p = Poly::new();
    if !c.is_zero() {
        p.insert(MonoKey::unit(), c);
    }
    p
}

fn poly_atom(a: Expr) -> Poly {
    let mut p = Poly::new();
    p.insert(MonoKey::new(vec![(a, Rat::one())]), Rat::one());
    p
}

fn poly_add_term(p: &mut Poly, key: MonoKey, c: Rat) {
    if c.is_zero() {
        return;
    }
    use std::collections::btree_map::Entry;
    match p.entry(key) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            *o.get_mut() += c;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

fn poly_add(mut a: Poly, b: Poly) -> Poly {
    for (k, c) in b {
        poly_add_term(&mut a, k, c);
    }
    a
}

/// Merge two sorted factor lists, adding exponents of equal bases.
fn merge_factors(a: &Factors, b: &Factors) -> Factors {
    let mut out = Factors::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let e = a[i].1.clone() + b[j].1.clone();
                if !e.is_zero() {
                    out.push((a[i].0.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// True when exponent merging produced a factor that must be reworked: a sum
/// base raised to a positive integer power (expand) or to an integer power
/// below -1 (expand the magnitude, then invert).
fn needs_expansion(factors: &Factors) -> bool {
    factors.iter().any(|(b, e)| {
        matches!(b, Expr::Sum(_)) && e.is_integer() && *e != -Rat::one()
    })
}

fn term_to_poly(factors: Factors, coeff: Rat) -> Poly {
    if !needs_expansion(&factors) {
        let mut p = Poly::new();
        poly_add_term(&mut p, MonoKey::new(factors), coeff);
        return p;
    }
    let mut acc = poly_const(coeff);
    for (base, exp) in factors {
        let fp = if matches!(base, Expr::Sum(_)) && exp.is_integer() && exp != -Rat::one() {
            poly_pow(to_poly(&base), &exp)
        } else {
            let mut p = Poly::new();
            poly_add_term(&mut p, MonoKey::new(vec![(base, exp)]), Rat::one());
            p
        };
        acc = poly_mul(&acc, &fp);
    }
    acc
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            let factors = merge_factors(&ka.factors, &kb.factors);
            let c = ca.clone() * cb.clone();
            if needs_expansion(&factors) {
                out = poly_add(out, term_to_poly(factors, c));
            } else {
                poly_add_term(&mut out, MonoKey::new(factors), c);
            }
        }
    }
    out
}

fn rat_pow_int(c: &Rat, n: &BigInt) -> Rat {
    if n.is_zero() {
        return Rat::one();
    }
    let mag = n.magnitude().to_u32().expect("exponent magnitude too large");
    let mut r = Rat::one();
    for _ in 0..mag {
        r *= c.clone();
    }
    if n.is_negative() {
        r.recip()
    } else {
        r
    }
}

/// Exact `c^q` for rational `q` when the result is rational, else `None`.
fn rat_pow_rat(c: &Rat, q: &Rat) -> Option<Rat> {
    if q.is_integer() {
        return Some(rat_pow_int(c, q.numer()));
    }
    if c.is_one() {
        return Some(Rat::one());
    }
    let t = q.denom().to_u32()?;
    let root_int = |x: &BigInt| -> Option<BigInt> {
        if x.is_negative() {
            if t % 2 == 0 {
                return None;
            }
            let r = x.magnitude().nth_root(t);
            let r = BigInt::from(r);
            if (-&r).pow(t) == *x {
                Some(-r)
            } else {
                None
            }
        } else {
            let r = BigInt::from(x.magnitude().nth_root(t));
            if r.pow(t) == *x {
                Some(r)
            } else {
                None
            }
        }
    };
    let rn = root_int(c.numer())?;
    let rd = root_int(c.denom())?;
    Some(rat_pow_int(&Rat::new(rn, rd), q.numer()))
}

/// Factor out the rational content together with the sign of the leading term.
fn poly_content(p: &Poly) -> (Rat, Poly) {
    if p.is_empty() {
        return (Rat::zero(), Poly::new());
    }
    let mut num_gcd = BigInt::zero();
    let mut den_lcm = BigInt::one();
    for c in p.values() {
        num_gcd = num_gcd.gcd(c.numer());
        den_lcm = den_lcm.lcm(c.denom());
    }
    let mut content = Rat::new(num_gcd, den_lcm);
    // leading term = greatest monomial key; make its coefficient positive
    let leading = p.iter().next_back().unwrap().1;
    if leading.is_negative() {
        content = -content;
    }
    let prim = p
        .iter()
        .map(|(k, c)| (k.clone(), c.clone() / content.clone()))
        .collect();
    (content, prim)
}

fn poly_pow(p: Poly, q: &Rat) -> Poly {
    if q.is_zero() {
        return poly_const(Rat::one());
    }
    if p.is_empty() {
        // 0^q: zero for positive q; all negative powers collapse to the one
        // inert undefined atom 0^-1
        if q.is_positive() {
            return Poly::new();
        }
        return poly_atom(Expr::Pow(Box::new(Expr::zero()), -Rat::one()));
    }
    if p.len() == 1 {
        let (key, c) = p.iter().next().unwrap();
        let factors: Factors = key
            .factors
            .iter()
            .map(|(b, e)| (b.clone(), e.clone() * q.clone()))
            .filter(|(_, e)| !e.is_zero())
            .collect();
        let mut out = Poly::new();
        match rat_pow_rat(c, q) {
            Some(cq) => {
                if cq.is_zero() {
                    return Poly::new();
                }
                if needs_expansion(&factors) {
                    return term_to_poly(factors, cq);
                }
                poly_add_term(&mut out, MonoKey::new(factors), cq);
            }
            None => {
                // irrational scalar power stays as an inert factor, e.g. 2^(1/2)
                let mut factors = factors;
                factors.push((Expr::Rat(c.clone()), q.clone()));
                factors.sort_by(|a, b| a.0.cmp(&b.0));
                poly_add_term(&mut out, MonoKey::new(factors), Rat::one());
            }
        }
        return out;
    }
    // multi-term base
    if q.is_integer() && q.is_positive() {
        let n = q.numer().to_u64().expect("exponent too large") as usize;
        let mut acc = poly_const(Rat::one());
        let mut base = p;
        let mut n = n;
        loop {
            if n % 2 == 1 {
                acc = poly_mul(&acc, &base);
            }
            n /= 2;
            if n == 0 {
                break;
            }
            base = poly_mul(&base, &base);
        }
        return acc;
    }
    if q.is_integer() && q.is_negative() && *q != -Rat::one() {
        // canonicalize (sum)^-k as ((sum)^k)^-1 so both construction routes
        // agree on the expanded base
        let pos = poly_pow(p, &-q.clone());
        return poly_pow(pos, &-Rat::one());
    }
    // opaque power of a primitive multi-term base
    let (content, prim) = poly_content(&p);
    let base_expr = rebuild(&prim);
    let mut factors: Factors = vec![(base_expr, q.clone())];
    let mut coeff = Rat::one();
    if !content.is_one() {
        match rat_pow_rat(&content, q) {
            Some(cq) => coeff = cq,
            None => {
                factors.push((Expr::Rat(content), q.clone()));
                factors.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
    }
    let mut out = Poly::new();
    poly_add_term(&mut out, MonoKey::new(factors), coeff);
    out
}

fn to_poly(e: &Expr) -> Poly {
    match e {
        Expr::Rat(c) => poly_const(c.clone()),
        Expr::Param(_) | Expr::Indep(_) | Expr::Dep(_) | Expr::Unknown(_) | Expr::PDeriv(_) => {
            poly_atom(e.clone())
        }
        Expr::Jet(j) => {
            if j.idx.is_empty() {
                poly_atom(Expr::Dep(j.dep.clone()))
            } else {
                poly_atom(e.clone())
            }
        }
        Expr::Elem(tag, a) => poly_atom(Expr::Elem(*tag, Box::new(normalize(a)))),
        Expr::Sum(xs) => xs.iter().fold(Poly::new(), |acc, x| poly_add(acc, to_poly(x))),
        Expr::Prod(xs) => {
            let mut acc = poly_const(Rat::one());
            for x in xs {
                if acc.is_empty() {
                    return acc;
                }
                acc = poly_mul(&acc, &to_poly(x));
            }
            acc
        }
        Expr::Pow(b, q) => poly_pow(to_poly(b), q),
    }
}

fn rebuild_term(key: &MonoKey, c: &Rat) -> Expr {
    let factors: Vec<Expr> = key
        .factors
        .iter()
        .map(|(b, e)| {
            if e.is_one() {
                b.clone()
            } else {
                Expr::Pow(Box::new(b.clone()), e.clone())
            }
        })
        .collect();
    if factors.is_empty() {
        return Expr::Rat(c.clone());
    }
    if c.is_one() {
        if factors.len() == 1 {
            return factors.into_iter().next().unwrap();
        }
        return Expr::Prod(factors);
    }
    let mut fs = Vec::with_capacity(factors.len() + 1);
    fs.push(Expr::Rat(c.clone()));
    fs.extend(factors);
    Expr::Prod(fs)
}

fn rebuild(p: &Poly) -> Expr {
    if p.is_empty() {
        return Expr::zero();
    }
    let terms: Vec<Expr> = p.iter().rev().map(|(k, c)| rebuild_term(k, c)).collect();
    if terms.len() == 1 {
        terms.into_iter().next().unwrap()
    } else {
        Expr::Sum(terms)
    }
}

/// Canonical form: idempotent, expands products over sums for the polynomial
/// fragment and collects rational coefficients of identical monomials.
pub fn normalize(e: &Expr) -> Expr {
    rebuild(&to_poly(e))
}

/// Structural zero test on the canonical form.
pub fn is_zero(e: &Expr) -> bool {
    to_poly(e).is_empty()
}

/// `a / b` as a canonical expression (`b` formally nonzero).
pub fn div(a: &Expr, b: &Expr) -> Expr {
    normalize(&Expr::Prod(vec![
        a.clone(),
        Expr::Pow(Box::new(b.clone()), -Rat::one()),
    ]))
}

/// Split `e` into (rational content with leading sign, primitive part), so
/// that `e = content * primitive` and the primitive part has positive leading
/// coefficient and coprime integer coefficients. Returns content 0 for the
/// zero expression.
pub fn primitive(e: &Expr) -> (Rat, Expr) {
    let p = to_poly(e);
    let (content, prim) = poly_content(&p);
    (content, rebuild(&prim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{prod_of, sum_of, ElemTag};

    fn x() -> Expr {
        Expr::indep("x")
    }

    fn u() -> Expr {
        Expr::dep("u")
    }

    #[test]
    fn expands_difference_of_squares() {
        let e = prod_of([
            sum_of([x(), Expr::one()]),
            sum_of([x(), Expr::int(-1)]),
        ]);
        let expected = sum_of([Expr::powi(x(), 2), Expr::int(-1)]);
        assert_eq!(e, expected);
    }

    #[test]
    fn collects_like_terms() {
        let ux = Expr::jet("u", ["x"]);
        let e = sum_of([ux.clone(), ux.clone()]);
        assert_eq!(e, prod_of([Expr::int(2), ux]));
    }

    #[test]
    fn exp_atoms_multiply_as_powers() {
        let ex = Expr::elem(ElemTag::Exp, x());
        let e = prod_of([ex.clone(), ex.clone()]);
        assert_eq!(e, Expr::Pow(Box::new(ex), Rat::from_integer(2.into())));
    }

    #[test]
    fn zero_product_collapses() {
        let e = sum_of([prod_of([x(), Expr::zero()]), u()]);
        assert_eq!(e, u());
    }

    #[test]
    fn inverse_cancels() {
        let e = prod_of([x(), Expr::powi(x(), -1)]);
        assert_eq!(e, Expr::one());
    }

    #[test]
    fn rational_arithmetic_is_exact() {
        let e = sum_of([Expr::rat(1, 3), Expr::rat(1, 6)]);
        assert_eq!(e, Expr::rat(1, 2));
    }

    #[test]
    fn fractional_power_of_square() {
        let e = normalize(&Expr::pow(Expr::powi(x(), 2), Rat::new(1.into(), 2.into())));
        assert_eq!(e, x());
    }

    #[test]
    fn opaque_sum_base_roundtrip() {
        let base = sum_of([x(), Expr::one()]);
        let e = normalize(&Expr::pow(base.clone(), -Rat::one()));
        assert_eq!(e, Expr::pow(base.clone(), -Rat::one()));
        // (x+1)^(1/2) * (x+1)^(1/2) re-expands to x+1
        let half = Expr::pow(base.clone(), Rat::new(1.into(), 2.into()));
        assert_eq!(prod_of([half.clone(), half]), base);
    }

    #[test]
    fn primitive_clears_content_and_sign() {
        let e = sum_of([
            prod_of([Expr::int(-2), x()]),
            prod_of([Expr::int(-4), u()]),
        ]);
        let (content, prim) = primitive(&e);
        assert_eq!(content, Rat::from_integer((-2).into()));
        assert_eq!(prim, sum_of([x(), prod_of([Expr::int(2), u()])]));
    }
}
