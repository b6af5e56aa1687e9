//! Exact symbolic expression kernel.
//!
//! [`Expr`] is an immutable expression tree over arbitrary-precision rationals,
//! declared variables, jet coordinates, unknown coefficient functions and a
//! fixed set of elementary functions. [`normalize`] puts trees into a canonical
//! expanded form in which structural equality coincides with mathematical
//! equality for the polynomial-over-atoms fragment: sums are flat, products are
//! flat with at most one leading rational factor, powers of exponent one are
//! elided and rational coefficients of identical monomials are collected.
//!
//! Transcendental applications (`exp`, `ln`, trig, hyperbolics) are opaque
//! atoms keyed by their canonical argument; no functional rewrites such as
//! `exp(a)*exp(b) -> exp(a+b)` are performed.

mod calculus;
mod normalize;
mod parse;
mod print;
pub(crate) mod split;

pub use calculus::{pdiff, pdiff_multi, pdiff_var, substitute, substitute_unknown};
pub use normalize::{div, is_zero, normalize, primitive};
pub use parse::{parse_document, parse_expr, parse_generator_coeffs, Declarations, Document, ParseError};
pub use print::{to_dsl, to_json};
pub use split::{split_coefficients, NonPolynomial};

use num_traits::{One, Zero};
use std::fmt;

/// Exact rational scalar used throughout the kernel.
pub type Rat = num_rational::BigRational;

/// Tags for the supported elementary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemTag {
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
}

impl ElemTag {
    pub fn name(self) -> &'static str {
        match self {
            ElemTag::Exp => "exp",
            ElemTag::Ln => "ln",
            ElemTag::Sin => "sin",
            ElemTag::Cos => "cos",
            ElemTag::Tan => "tan",
            ElemTag::Sinh => "sinh",
            ElemTag::Cosh => "cosh",
            ElemTag::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<ElemTag> {
        Some(match s {
            "exp" => ElemTag::Exp,
            "ln" => ElemTag::Ln,
            "sin" => ElemTag::Sin,
            "cos" => ElemTag::Cos,
            "tan" => ElemTag::Tan,
            "sinh" => ElemTag::Sinh,
            "cosh" => ElemTag::Cosh,
            "tanh" => ElemTag::Tanh,
            _ => return None,
        })
    }
}

/// Jet coordinate `u_{jI}`: a dependent variable together with a symmetric
/// derivative multi-index. The multi-index is stored as a sorted multiset of
/// independent-variable names; mixed partials commute, so order is immaterial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetCoord {
    pub dep: String,
    pub idx: Vec<String>,
}

impl JetCoord {
    pub fn new(dep: impl Into<String>, idx: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut idx: Vec<String> = idx.into_iter().map(Into::into).collect();
        idx.sort();
        JetCoord { dep: dep.into(), idx }
    }

    /// Derivative order `|I|`.
    pub fn order(&self) -> usize {
        self.idx.len()
    }

    /// The coordinate obtained by one more differentiation with respect to `v`.
    pub fn extend(&self, v: &str) -> JetCoord {
        let mut idx = self.idx.clone();
        idx.push(v.to_string());
        idx.sort();
        JetCoord { dep: self.dep.clone(), idx }
    }
}

/// Application of an unknown coefficient function to its argument variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnknownFn {
    pub name: String,
    pub args: Vec<String>,
}

impl UnknownFn {
    pub fn new(name: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        UnknownFn { name: name.into(), args: args.into_iter().map(Into::into).collect() }
    }
}

/// Partial derivative of an unknown function with respect to a multiset of its
/// argument variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartialDeriv {
    pub name: String,
    pub args: Vec<String>,
    pub idx: Vec<String>,
}

impl PartialDeriv {
    pub fn new(
        name: impl Into<String>,
        args: impl IntoIterator<Item = impl Into<String>>,
        idx: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let mut idx: Vec<String> = idx.into_iter().map(Into::into).collect();
        idx.sort();
        PartialDeriv {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
            idx,
        }
    }

    pub fn order(&self) -> usize {
        self.idx.len()
    }
}

/// Immutable symbolic expression tree.
///
/// The variant (and field) order fixes the deterministic atom ordering used by
/// the canonical form: (kind, name, multi-index) lexicographic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// Exact rational constant.
    Rat(Rat),
    /// Declared named parameter.
    Param(String),
    /// Independent variable.
    Indep(String),
    /// Dependent variable (zeroth-order jet coordinate).
    Dep(String),
    /// Jet coordinate of positive order.
    Jet(JetCoord),
    /// Unknown coefficient function applied to its argument variables.
    Unknown(UnknownFn),
    /// Partial derivative of an unknown function.
    PDeriv(PartialDeriv),
    /// Elementary function application (opaque atom).
    Elem(ElemTag, Box<Expr>),
    /// Power with an exact rational exponent.
    Pow(Box<Expr>, Rat),
    /// Flat product; canonical form keeps at most one leading rational factor.
    Prod(Vec<Expr>),
    /// Flat sum of collected terms.
    Sum(Vec<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Rat(Rat::from_integer(n.into()))
    }

    pub fn rat(num: i64, den: i64) -> Expr {
        Expr::Rat(Rat::new(num.into(), den.into()))
    }

    pub fn zero() -> Expr {
        Expr::Rat(Rat::zero())
    }

    pub fn one() -> Expr {
        Expr::Rat(Rat::one())
    }

    pub fn indep(name: impl Into<String>) -> Expr {
        Expr::Indep(name.into())
    }

    pub fn dep(name: impl Into<String>) -> Expr {
        Expr::Dep(name.into())
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn jet(dep: impl Into<String>, idx: impl IntoIterator<Item = impl Into<String>>) -> Expr {
        let j = JetCoord::new(dep, idx);
        if j.idx.is_empty() {
            Expr::Dep(j.dep)
        } else {
            Expr::Jet(j)
        }
    }

    pub fn unknown(
        name: impl Into<String>,
        args: impl IntoIterator<Item = impl Into<String>>,
    ) -> Expr {
        Expr::Unknown(UnknownFn::new(name, args))
    }

    pub fn pow(base: Expr, exp: Rat) -> Expr {
        Expr::Pow(Box::new(base), exp)
    }

    pub fn powi(base: Expr, exp: i64) -> Expr {
        Expr::Pow(Box::new(base), Rat::from_integer(exp.into()))
    }

    pub fn elem(tag: ElemTag, arg: Expr) -> Expr {
        Expr::Elem(tag, Box::new(arg))
    }

    pub fn is_rat(&self) -> bool {
        matches!(self, Expr::Rat(_))
    }

    pub fn as_rat(&self) -> Option<&Rat> {
        match self {
            Expr::Rat(r) => Some(r),
            _ => None,
        }
    }

    /// Number of summands (1 for non-sums), the solver's notion of "terms".
    pub fn term_count(&self) -> usize {
        match self {
            Expr::Sum(ts) => ts.len(),
            _ => 1,
        }
    }

    pub fn summands(&self) -> &[Expr] {
        match self {
            Expr::Sum(ts) => ts,
            e => std::slice::from_ref(e),
        }
    }

    /// Depth-first traversal over all nodes of the tree.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Sum(xs) | Expr::Prod(xs) => {
                for x in xs {
                    x.walk(f);
                }
            }
            Expr::Pow(b, _) => b.walk(f),
            Expr::Elem(_, a) => a.walk(f),
            _ => {}
        }
    }

    /// All jet coordinates of positive order occurring in the tree.
    pub fn jets(&self) -> Vec<JetCoord> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Jet(j) = e {
                if !out.contains(j) {
                    out.push(j.clone());
                }
            }
        });
        out.sort();
        out
    }

    /// Highest jet order occurring in the tree (0 if none).
    pub fn max_jet_order(&self) -> usize {
        let mut k = 0;
        self.walk(&mut |e| {
            if let Expr::Jet(j) = e {
                k = k.max(j.order());
            }
        });
        k
    }

    /// Names of dependent variables occurring either as atoms or as arguments
    /// of unknown functions.
    pub fn dep_names(&self, dep: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |n: &str| {
            if dep.iter().any(|d| d == n) && !out.iter().any(|o| o == n) {
                out.push(n.to_string());
            }
        };
        self.walk(&mut |e| match e {
            Expr::Dep(d) => push(d),
            Expr::Jet(j) => push(&j.dep),
            Expr::Unknown(u) => u.args.iter().for_each(|a| push(a)),
            Expr::PDeriv(p) => p.args.iter().for_each(|a| push(a)),
            _ => {}
        });
        out.sort();
        out
    }

    /// Names of unknown functions occurring in the tree.
    pub fn unknown_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.walk(&mut |e| {
            let n = match e {
                Expr::Unknown(u) => Some(&u.name),
                Expr::PDeriv(p) => Some(&p.name),
                _ => None,
            };
            if let Some(n) = n {
                if !out.iter().any(|o| o == n) {
                    out.push(n.clone());
                }
            }
        });
        out.sort();
        out
    }

    pub fn contains(&self, atom: &Expr) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if e == atom {
                found = true;
            }
        });
        found
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::to_dsl(self))
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        normalize(&Expr::Sum(vec![self, rhs]))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        normalize(&Expr::Sum(vec![self, Expr::Prod(vec![Expr::int(-1), rhs])]))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        normalize(&Expr::Prod(vec![self, rhs]))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        normalize(&Expr::Prod(vec![Expr::int(-1), self]))
    }
}

/// Sum of an iterator of expressions, normalized.
pub fn sum_of(terms: impl IntoIterator<Item = Expr>) -> Expr {
    normalize(&Expr::Sum(terms.into_iter().collect()))
}

/// Product of an iterator of expressions, normalized.
pub fn prod_of(factors: impl IntoIterator<Item = Expr>) -> Expr {
    normalize(&Expr::Prod(factors.into_iter().collect()))
}
