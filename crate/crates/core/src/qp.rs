//! Quasi-polynomial formalism: the quasi-monomial embedding into
//! Lotka-Volterra form, Darboux polynomials (semi-invariants), and
//! quasi-polynomial / logarithmic first integrals and symmetries.
//!
//! A QP system is `xdot_i = x_i sum_j A_ij prod_k x_k^{B_jk}`. The change of
//! variables `y_j = prod_k x_k^{B_jk}` casts it into the quadratic
//! Lotka-Volterra form `ydot_i = y_i sum_j M_ij y_j` with `M = B A`. Searches
//! run in `y`-space with exact rational arithmetic; every candidate is
//! verified symbolically before it is returned.

use crate::expr::{
    is_zero, normalize, pdiff, prod_of, substitute, sum_of, ElemTag, Expr, Rat,
};
use crate::jet::JetSpace;
use crate::linalg::{nullspace_rat, solve_rat, solve_sym};
use crate::linsolve::clear_denominators;
use crate::prolong::Generator;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum QpError {
    #[error("matrix entries carry symbolic parameters; the branching search needs exact rationals")]
    ParameterBearing,
    #[error("input dimensions are inconsistent: {0}")]
    Shape(String),
    #[error("no decomposition of the flow over the given generators")]
    NoDecomposition,
    #[error("search space too large: degree {degree} has {monomials} candidate monomials")]
    SearchTooLarge { degree: usize, monomials: usize },
    #[error("invalid qp input: {0}")]
    Input(String),
}

/// First-order QP system with exact-rational (or parameter-bearing)
/// coefficient matrix `A` (n x m) and rational exponent matrix `B` (m x n).
#[derive(Debug, Clone)]
pub struct QPSystem {
    pub vars: Vec<String>,
    pub tvar: String,
    pub a: Vec<Vec<Expr>>,
    pub b: Vec<Vec<Rat>>,
}

impl QPSystem {
    pub fn new(
        vars: Vec<String>,
        tvar: String,
        a: Vec<Vec<Expr>>,
        b: Vec<Vec<Rat>>,
    ) -> Result<Self, QpError> {
        let n = vars.len();
        let m = b.len();
        if a.len() != n {
            return Err(QpError::Shape(format!("A has {} rows, expected {}", a.len(), n)));
        }
        if a.iter().any(|r| r.len() != m) {
            return Err(QpError::Shape(format!("A rows must have {m} entries")));
        }
        if b.iter().any(|r| r.len() != n) {
            return Err(QpError::Shape(format!("B rows must have {n} entries")));
        }
        if vars.iter().any(|v| *v == tvar) {
            return Err(QpError::Shape("time variable collides with a state variable".into()));
        }
        Ok(QPSystem { vars, tvar, a, b })
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn monomial_count(&self) -> usize {
        self.b.len()
    }

    fn xvar(&self, k: usize) -> Expr {
        Expr::dep(self.vars[k].clone())
    }

    /// Quasi-monomial `prod_k x_k^{B_jk}`.
    pub fn quasi_monomial(&self, j: usize) -> Expr {
        prod_of(
            (0..self.dim())
                .filter(|&k| !self.b[j][k].is_zero())
                .map(|k| Expr::pow(self.xvar(k), self.b[j][k].clone())),
        )
    }

    /// Right-hand side `xdot_i` as a symbolic expression.
    pub fn xdot(&self, i: usize) -> Expr {
        let terms = (0..self.monomial_count()).map(|j| {
            prod_of([self.xvar(i), self.a[i][j].clone(), self.quasi_monomial(j)])
        });
        sum_of(terms)
    }

    /// True when every entry of `A` is an exact rational.
    pub fn a_rational(&self) -> Option<Vec<Vec<Rat>>> {
        self.a
            .iter()
            .map(|row| row.iter().map(|e| e.as_rat().cloned()).collect())
            .collect()
    }

    /// Time derivative of `e` along the flow (including explicit time).
    pub fn time_derivative(&self, e: &Expr) -> Expr {
        let mut terms = vec![pdiff(e, &Expr::indep(&self.tvar))];
        for i in 0..self.dim() {
            let de = pdiff(e, &self.xvar(i));
            if !is_zero(&de) {
                terms.push(prod_of([de, self.xdot(i)]));
            }
        }
        sum_of(terms)
    }

    /// Index of the constant quasi-monomial (all-zero row of `B`), if any.
    pub fn constant_monomial(&self) -> Option<usize> {
        self.b.iter().position(|row| row.iter().all(Rat::is_zero))
    }
}

/// The Lotka-Volterra form of a QP system, together with the square extended
/// exponent matrix and its inverse when nonsingular.
#[derive(Debug, Clone)]
pub struct LVForm {
    pub yvars: Vec<String>,
    pub tvar: String,
    /// `M = B A`, may carry parameters.
    pub mmat: Vec<Vec<Expr>>,
    pub b_tilde: Vec<Vec<Rat>>,
    pub b_tilde_inv: Option<Vec<Vec<Rat>>>,
    /// Forward change of variables `y_j` expressed in `x`.
    pub y_in_x: Vec<Expr>,
    pub const_row: Option<usize>,
}

impl LVForm {
    pub fn dim(&self) -> usize {
        self.yvars.len()
    }

    pub fn yvar(&self, i: usize) -> Expr {
        Expr::dep(self.yvars[i].clone())
    }

    pub fn m_rational(&self) -> Option<Vec<Vec<Rat>>> {
        self.mmat
            .iter()
            .map(|row| row.iter().map(|e| e.as_rat().cloned()).collect())
            .collect()
    }

    /// `ydot_i = y_i sum_j M_ij y_j`.
    pub fn ydot(&self, i: usize) -> Expr {
        let terms = (0..self.dim())
            .map(|j| prod_of([self.yvar(i), self.mmat[i][j].clone(), self.yvar(j)]));
        sum_of(terms)
    }

    /// Time derivative along the LV flow of an expression in `y`.
    pub fn time_derivative(&self, e: &Expr) -> Expr {
        let mut terms = vec![pdiff(e, &Expr::indep(&self.tvar))];
        for i in 0..self.dim() {
            let de = pdiff(e, &self.yvar(i));
            if !is_zero(&de) {
                terms.push(prod_of([de, self.ydot(i)]));
            }
        }
        sum_of(terms)
    }

    /// Substitute the quasi-monomial change of variables, mapping an
    /// expression in `y` back to `x`.
    pub fn to_x(&self, e: &Expr) -> Expr {
        let mut rules = BTreeMap::new();
        for (i, yx) in self.y_in_x.iter().enumerate() {
            rules.insert(self.yvar(i), yx.clone());
        }
        substitute(e, &rules)
    }
}

fn rat_inverse(m: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = m.len();
    let mut aug: Vec<Vec<Rat>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j { Rat::one() } else { Rat::zero() });
            }
            r
        })
        .collect();
    let pivots = crate::linalg::rref(&mut aug);
    if pivots.len() != n || pivots.iter().enumerate().any(|(i, &p)| p != i) {
        return None;
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Quasi-monomial transformation into Lotka-Volterra form, `M = B A`.
pub fn to_lv(sys: &QPSystem) -> LVForm {
    let n = sys.dim();
    let m = sys.monomial_count();
    // extended square exponent matrix: B in the left n columns, identity
    // padding on the right
    let mut b_tilde = vec![vec![Rat::zero(); m]; m];
    for i in 0..m {
        for k in 0..m {
            if k < n {
                b_tilde[i][k] = sys.b[i][k].clone();
            } else if i == k {
                b_tilde[i][k] = Rat::one();
            }
        }
    }
    let b_tilde_inv = rat_inverse(&b_tilde);
    let mut mmat = vec![vec![Expr::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            let terms = (0..n).map(|k| {
                prod_of([Expr::Rat(sys.b[i][k].clone()), sys.a[k][j].clone()])
            });
            mmat[i][j] = sum_of(terms);
        }
    }
    let yvars: Vec<String> = (0..m).map(|i| format!("y{}", i + 1)).collect();
    let y_in_x: Vec<Expr> = (0..m).map(|j| sys.quasi_monomial(j)).collect();
    LVForm {
        yvars,
        tvar: sys.tvar.clone(),
        mmat,
        b_tilde,
        b_tilde_inv,
        y_in_x,
        const_row: sys.constant_monomial(),
    }
}

/// Darboux polynomial `f(y)` with `df/dt = (sum_j lambda_j y_j) f` along the
/// LV flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiInvariant {
    pub f: Expr,
    pub lambda: Vec<Rat>,
    pub degree: usize,
}

impl SemiInvariant {
    pub fn lambda_expr(&self, lv: &LVForm) -> Expr {
        sum_of(
            self.lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| !l.is_zero())
                .map(|(j, l)| prod_of([Expr::Rat(l.clone()), lv.yvar(j)])),
        )
    }
}

/// Exponent vectors of total degree `d` over `m` variables, in a fixed
/// descending lexicographic order.
fn monomials(m: usize, d: usize) -> Vec<Vec<u32>> {
    fn rec(m: usize, d: u32, out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>) {
        if m == 1 {
            cur.push(d);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=d).rev() {
            cur.push(k);
            rec(m - 1, d - k, out, cur);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    rec(m, d as u32, &mut out, &mut Vec::new());
    out
}

fn mono_expr(lv: &LVForm, alpha: &[u32]) -> Expr {
    prod_of(
        alpha
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| Expr::powi(lv.yvar(i), e as i64)),
    )
}

/// Tiny exact solver for the bilinear Darboux systems: propagates equations
/// that become linear in a single solver variable with rational coefficient,
/// after dividing out support variables that are known to be nonzero.
struct MiniSolver {
    eqs: Vec<Expr>,
    vars: Vec<String>,
    nonzero: BTreeSet<String>,
    values: BTreeMap<String, Expr>,
}

impl MiniSolver {
    fn assign(&mut self, name: &str, value: Expr) {
        let mut rules = BTreeMap::new();
        rules.insert(Expr::param(name), value.clone());
        for e in self.eqs.iter_mut() {
            *e = substitute(e, &rules);
        }
        for v in self.values.values_mut() {
            *v = substitute(v, &rules);
        }
        self.values.insert(name.to_string(), value);
    }

    /// Divide out solver variables known nonzero that divide every term.
    fn strip_nonzero(&self, e: &Expr) -> Expr {
        let mut common: Option<BTreeMap<String, Rat>> = None;
        for term in e.summands() {
            let mut counts: BTreeMap<String, Rat> = BTreeMap::new();
            let factors: Vec<&Expr> = match term {
                Expr::Prod(fs) => fs.iter().collect(),
                o => vec![o],
            };
            for f in factors {
                let (base, q) = match f {
                    Expr::Pow(b, q) => ((**b).clone(), q.clone()),
                    o => ((*o).clone(), Rat::one()),
                };
                if let Expr::Param(nm) = &base {
                    if self.nonzero.contains(nm) && q.is_positive() {
                        counts.insert(nm.clone(), q);
                    }
                }
            }
            common = Some(match common {
                None => counts,
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(k, v)| counts.get(&k).map(|w| (k, v.clone().min(w.clone()))))
                    .collect(),
            });
            if common.as_ref().map_or(false, BTreeMap::is_empty) {
                return e.clone();
            }
        }
        let Some(common) = common else { return e.clone() };
        if common.is_empty() {
            return e.clone();
        }
        let mut factors = vec![e.clone()];
        for (nm, q) in common {
            factors.push(Expr::pow(Expr::param(nm), -q));
        }
        normalize(&Expr::Prod(factors))
    }

    fn run(&mut self) -> bool {
        loop {
            self.eqs = self
                .eqs
                .iter()
                .map(|e| self.strip_nonzero(&normalize(e)))
                .filter(|e| !is_zero(e))
                .collect();
            // contradiction: no solver variables left but nonzero
            for e in &self.eqs {
                let mut has_var = false;
                e.walk(&mut |n| {
                    if let Expr::Param(nm) = n {
                        if self.vars.iter().any(|v| v == nm) {
                            has_var = true;
                        }
                    }
                });
                if !has_var {
                    return false;
                }
            }
            if self.eqs.is_empty() {
                break;
            }
            let mut progressed = false;
            'eqs: for (i, e) in self.eqs.clone().iter().enumerate() {
                for v in self.vars.clone() {
                    if self.values.contains_key(&v) {
                        continue;
                    }
                    let atom = Expr::param(&v);
                    if !e.contains(&atom) {
                        continue;
                    }
                    let coeff = pdiff(e, &atom);
                    if coeff.contains(&atom) {
                        continue;
                    }
                    let Some(c) = coeff.as_rat() else { continue };
                    if c.is_zero() {
                        continue;
                    }
                    let mut zero = BTreeMap::new();
                    zero.insert(atom.clone(), Expr::zero());
                    let rest = substitute(e, &zero);
                    let value =
                        normalize(&prod_of([Expr::Rat(-c.clone().recip()), rest]));
                    if self.nonzero.contains(&v) && is_zero(&value) {
                        return false;
                    }
                    self.eqs.remove(i);
                    self.assign(&v, value);
                    progressed = true;
                    break 'eqs;
                }
            }
            if !progressed {
                return false;
            }
        }
        // representatives for remaining free variables
        for v in self.vars.clone() {
            if !self.values.contains_key(&v) {
                self.assign(&v, Expr::one());
            }
        }
        true
    }
}

/// All semi-invariants with homogeneous components of degree `<= max_degree`:
/// for each degree and support choice the bilinear condition `df/dt = lambda f`
/// is solved with the support-minimal coefficient normalized to one, and every
/// result is verified by the identity before being returned.
pub fn darboux(lv: &LVForm, max_degree: usize) -> Result<Vec<SemiInvariant>, QpError> {
    let m = lv.dim();
    let mrat = lv.m_rational().ok_or(QpError::ParameterBearing)?;
    let mut out: Vec<SemiInvariant> = Vec::new();
    for d in 1..=max_degree {
        let monos = monomials(m, d);
        let n = monos.len();
        if n > 14 {
            return Err(QpError::SearchTooLarge { degree: d, monomials: n });
        }
        let uppers = monomials(m, d + 1);
        // alpha . M as a rational row vector
        let alpha_m = |alpha: &[u32]| -> Vec<Rat> {
            (0..m)
                .map(|j| {
                    (0..m)
                        .map(|i| Rat::from_integer(alpha[i].into()) * mrat[i][j].clone())
                        .fold(Rat::zero(), |a, b| a + b)
                })
                .collect()
        };
        let vs: Vec<Vec<Rat>> = monos.iter().map(|a| alpha_m(a)).collect();
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let head = support[0];
            let cname = |i: usize| format!("qc{i}");
            let lname = |j: usize| format!("ql{j}");
            let cvar = |i: usize| -> Expr {
                if i == head {
                    Expr::one()
                } else {
                    Expr::param(cname(i))
                }
            };
            let mut eqs = Vec::new();
            for beta in &uppers {
                let mut terms = Vec::new();
                for j in 0..m {
                    if beta[j] == 0 {
                        continue;
                    }
                    let mut alpha = beta.clone();
                    alpha[j] -= 1;
                    let Some(ai) = monos.iter().position(|mm| *mm == alpha) else {
                        continue;
                    };
                    if !support.contains(&ai) {
                        continue;
                    }
                    terms.push(prod_of([
                        cvar(ai),
                        sum_of([
                            Expr::Rat(vs[ai][j].clone()),
                            prod_of([Expr::int(-1), Expr::param(lname(j))]),
                        ]),
                    ]));
                }
                let eq = sum_of(terms);
                if !is_zero(&eq) {
                    eqs.push(eq);
                }
            }
            let mut vars: Vec<String> = (0..m).map(lname).collect();
            let mut nonzero = BTreeSet::new();
            for &i in &support {
                if i != head {
                    vars.push(cname(i));
                    nonzero.insert(cname(i));
                }
            }
            let mut solver = MiniSolver { eqs, vars, nonzero, values: BTreeMap::new() };
            if !solver.run() {
                continue;
            }
            let get_rat = |e: &Expr| e.as_rat().cloned();
            let mut lambda = Vec::with_capacity(m);
            let mut ok = true;
            for j in 0..m {
                match solver.values.get(&lname(j)).and_then(|v| get_rat(v)) {
                    Some(r) => lambda.push(r),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut fterms = Vec::new();
            for &i in &support {
                let c = if i == head {
                    Rat::one()
                } else {
                    match solver.values.get(&cname(i)).and_then(|v| get_rat(v)) {
                        Some(r) if !r.is_zero() => r,
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                };
                fterms.push(prod_of([Expr::Rat(c), mono_expr(lv, &monos[i])]));
            }
            if !ok {
                continue;
            }
            let cand = SemiInvariant { f: sum_of(fterms), lambda, degree: d };
            if out.iter().any(|s| s.f == cand.f) {
                continue;
            }
            if verify_semi_invariant(lv, &cand) {
                out.push(cand);
            }
        }
    }
    Ok(out)
}

/// Exact identity check `df/dt - lambda f = 0`.
pub fn verify_semi_invariant(lv: &LVForm, s: &SemiInvariant) -> bool {
    let fdot = lv.time_derivative(&s.f);
    let rhs = prod_of([s.lambda_expr(lv), s.f.clone()]);
    is_zero(&sum_of([fdot, prod_of([Expr::int(-1), rhs])]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntegralKind {
    /// Ratio/product of semi-invariants and quasi-monomial weighted forms.
    QpRatio,
    /// Semi-invariant times `exp(-lambda t)` for constant eigenvalue.
    ExpWeighted,
    /// Polynomial-plus-logarithm ansatz.
    LogType,
}

/// A verified first integral in the original variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstIntegral {
    pub expr: Expr,
    pub kind: IntegralKind,
}

/// A semi-invariant expressed in `x`, with its eigenvalue as a linear form
/// over the `y` slots (entries may carry parameters).
#[derive(Debug, Clone)]
struct PoolEntry {
    expr_x: Expr,
    lambda: Vec<Expr>,
}

/// Nonconstant part vanishes: the eigenvalue reduces to a constant through
/// the constant quasi-monomials (all-zero exponent rows).
fn lambda_constant_part(lambda: &[Expr], sys: &QPSystem) -> Option<Expr> {
    let mut constant_parts = Vec::new();
    for (j, l) in lambda.iter().enumerate() {
        let constant = sys.b[j].iter().all(Rat::is_zero);
        if constant {
            constant_parts.push(l.clone());
        } else if !is_zero(l) {
            return None;
        }
    }
    Some(sum_of(constant_parts))
}

fn finalize(sys: &QPSystem, expr_x: &Expr, lambda: &[Expr]) -> Option<FirstIntegral> {
    let rho = lambda_constant_part(lambda, sys)?;
    let (expr, kind) = if is_zero(&rho) {
        (expr_x.clone(), IntegralKind::QpRatio)
    } else {
        (
            prod_of([
                expr_x.clone(),
                Expr::elem(
                    ElemTag::Exp,
                    prod_of([Expr::int(-1), rho, Expr::indep(&sys.tvar)]),
                ),
            ]),
            IntegralKind::ExpWeighted,
        )
    };
    if expr.is_rat() {
        return None;
    }
    Some(FirstIntegral { expr, kind })
}

/// Verify `dI/dt = 0` along the flow.
pub fn verify_integral(sys: &QPSystem, i: &FirstIntegral) -> bool {
    is_zero(&sys.time_derivative(&i.expr))
}

/// QP first integrals assembled from semi-invariants: eigenvalue-cancelling
/// products and ratios, quasi-monomial prefactors solving `xi M = -lambda`,
/// and `exp(-lambda0 t)` weights for constant eigenvalues. Every returned
/// integral is verified symbolically.
pub fn qp_first_integrals(sys: &QPSystem, max_degree: usize) -> Vec<FirstIntegral> {
    let lv = to_lv(sys);
    let m = lv.dim();
    let mut pool: Vec<PoolEntry> = Vec::new();
    // coordinates are semi-invariants at the x level with lambda = A rows
    for i in 0..sys.dim() {
        pool.push(PoolEntry { expr_x: sys.xvar(i), lambda: sys.a[i].clone() });
    }
    if let Ok(semis) = darboux(&lv, max_degree) {
        for s in semis {
            pool.push(PoolEntry {
                expr_x: lv.to_x(&s.f),
                lambda: s.lambda.iter().map(|r| Expr::Rat(r.clone())).collect(),
            });
        }
    }
    let mut out: Vec<FirstIntegral> = Vec::new();
    let push = |cand: Option<FirstIntegral>, out: &mut Vec<FirstIntegral>| {
        if let Some(c) = cand {
            if !out.contains(&c) && verify_integral(sys, &c) {
                out.push(c);
            }
        }
    };
    // singles
    for e in &pool {
        push(finalize(sys, &e.expr_x, &e.lambda), &mut out);
    }
    // pairs: products cancel on lambda sum, ratios on lambda difference
    for (i, a) in pool.iter().enumerate() {
        for b in pool.iter().skip(i + 1) {
            let sum: Vec<Expr> = a
                .lambda
                .iter()
                .zip(&b.lambda)
                .map(|(x, y)| sum_of([x.clone(), y.clone()]))
                .collect();
            push(
                finalize(sys, &prod_of([a.expr_x.clone(), b.expr_x.clone()]), &sum),
                &mut out,
            );
            let diff: Vec<Expr> = a
                .lambda
                .iter()
                .zip(&b.lambda)
                .map(|(x, y)| sum_of([x.clone(), prod_of([Expr::int(-1), y.clone()])]))
                .collect();
            let ratio = prod_of([
                a.expr_x.clone(),
                Expr::pow(b.expr_x.clone(), -Rat::one()),
            ]);
            push(finalize(sys, &ratio, &diff), &mut out);
        }
    }
    // quasi-monomial prefactors: xi M = -lambda
    let mrat = lv.m_rational();
    for e in &pool {
        let lam_rat: Option<Vec<Rat>> = e.lambda.iter().map(|l| l.as_rat().cloned()).collect();
        let (Some(mrat), Some(lam)) = (&mrat, lam_rat) else { continue };
        // transpose: sum_j xi_j M_jk = -lambda_k
        let at: Vec<Vec<Rat>> =
            (0..m).map(|k| (0..m).map(|j| mrat[j][k].clone()).collect()).collect();
        let rhs: Vec<Rat> = lam.iter().map(|l| -l.clone()).collect();
        let Some(xi) = solve_rat(&at, &rhs) else { continue };
        if xi.iter().all(Rat::is_zero) {
            continue;
        }
        // y^xi in x coordinates: x^(B^T xi)
        let gamma: Vec<Rat> = (0..sys.dim())
            .map(|k| {
                (0..m)
                    .map(|j| xi[j].clone() * sys.b[j][k].clone())
                    .fold(Rat::zero(), |a, b| a + b)
            })
            .collect();
        let prefactor = prod_of(
            gamma
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.is_zero())
                .map(|(k, g)| Expr::pow(sys.xvar(k), g.clone())),
        );
        let zero_lambda = vec![Expr::zero(); m];
        push(
            finalize(sys, &prod_of([prefactor, e.expr_x.clone()]), &zero_lambda),
            &mut out,
        );
    }
    // pure quasi-monomial integrals from the nullspace of M^T
    if let Some(mrat) = &mrat {
        let at: Vec<Vec<Rat>> =
            (0..m).map(|k| (0..m).map(|j| mrat[j][k].clone()).collect()).collect();
        for nu in nullspace_rat(&at) {
            let gamma: Vec<Rat> = (0..sys.dim())
                .map(|k| {
                    (0..m)
                        .map(|j| nu[j].clone() * sys.b[j][k].clone())
                        .fold(Rat::zero(), |a, b| a + b)
                })
                .collect();
            if gamma.iter().all(Rat::is_zero) {
                continue;
            }
            let expr = prod_of(
                gamma
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| !g.is_zero())
                    .map(|(k, g)| Expr::pow(sys.xvar(k), g.clone())),
            );
            let zero_lambda = vec![Expr::zero(); m];
            push(finalize(sys, &expr, &zero_lambda), &mut out);
        }
    }
    out.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.expr.cmp(&b.expr)));
    out
}

/// First integrals of the form `P(x, ln x)`: polynomial of total degree
/// `<= max_degree` in `x` and degree `<= 1` in each `ln x_k` (which subsumes
/// `P1(x) + log(x^xi)`). The condition `dI/dt = 0` splits into a linear
/// system for the coefficients, solved exactly; parameters in `A` are allowed.
pub fn log_integrals(sys: &QPSystem, max_degree: usize) -> Vec<FirstIntegral> {
    let n = sys.dim();
    // ansatz terms x^alpha * prod_{k in K} ln x_k, excluding the constant
    let mut terms: Vec<Expr> = Vec::new();
    let mut alphas: Vec<Vec<u32>> = Vec::new();
    for d in 0..=max_degree {
        alphas.extend(monomials(n, d));
    }
    for alpha in &alphas {
        for kmask in 0u32..(1 << n) {
            if alpha.iter().all(|&e| e == 0) && kmask == 0 {
                continue;
            }
            let mut fs: Vec<Expr> = alpha
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(k, &e)| Expr::powi(sys.xvar(k), e as i64))
                .collect();
            for k in 0..n {
                if kmask & (1 << k) != 0 {
                    fs.push(Expr::elem(ElemTag::Ln, sys.xvar(k)));
                }
            }
            terms.push(prod_of(fs));
        }
    }
    if terms.len() > 512 {
        return Vec::new();
    }
    let qname = |i: usize| format!("qq{i}");
    let ansatz = sum_of(
        terms
            .iter()
            .enumerate()
            .map(|(i, t)| prod_of([Expr::param(qname(i)), t.clone()])),
    );
    let condition = sys.time_derivative(&ansatz);
    // split on monomials in x and ln x, keeping the q-coefficients linear
    let groups = group_by_non_params(&condition, "qq");
    let mut rows: Vec<Vec<Expr>> = Vec::new();
    for coeff in groups.values() {
        let row: Vec<Expr> =
            (0..terms.len()).map(|i| pdiff(coeff, &Expr::param(qname(i)))).collect();
        rows.push(row);
    }
    let mut out: Vec<FirstIntegral> = Vec::new();
    for vec in crate::linalg::nullspace_sym(&rows) {
        let expr = sum_of(
            vec.iter().zip(&terms).map(|(c, t)| prod_of([c.clone(), t.clone()])),
        );
        let expr = crate::expr::primitive(&clear_denominators(&expr)).1;
        if is_zero(&expr) || expr.is_rat() {
            continue;
        }
        let mut has_ln = false;
        expr.walk(&mut |e| {
            if matches!(e, Expr::Elem(ElemTag::Ln, _)) {
                has_ln = true;
            }
        });
        let cand = FirstIntegral {
            expr,
            kind: if has_ln { IntegralKind::LogType } else { IntegralKind::QpRatio },
        };
        if !out.contains(&cand) && verify_integral(sys, &cand) {
            out.push(cand);
        }
    }
    out.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.expr.cmp(&b.expr)));
    out
}

/// Group the terms of `e` by their non-solver-parameter monomial; the values
/// are the (linear) coefficient expressions in the solver parameters.
fn group_by_non_params(e: &Expr, prefix: &str) -> BTreeMap<Expr, Expr> {
    let e = normalize(e);
    let mut groups: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    for term in e.summands() {
        let factors: Vec<Expr> = match term {
            Expr::Prod(fs) => fs.clone(),
            o => vec![o.clone()],
        };
        let mut key: Vec<Expr> = Vec::new();
        let mut coeff: Vec<Expr> = Vec::new();
        for f in factors {
            let base = match &f {
                Expr::Pow(b, _) => (**b).clone(),
                o => o.clone(),
            };
            let _ = prefix;
            // parameters (solver unknowns and model constants alike) belong to
            // the coefficient; states and transcendental atoms form the key
            if matches!(&base, Expr::Param(_)) || matches!(f, Expr::Rat(_)) {
                coeff.push(f);
            } else {
                key.push(f);
            }
        }
        groups.entry(prod_of(key)).or_default().push(prod_of(coeff));
    }
    groups.into_iter().map(|(k, v)| (k, sum_of(v))).collect()
}

/// A polynomial semi-invariant vector field `T` with `[F, T] = lambda T`, its
/// quasi-monomial prefactor exponent, and the commuting generators in `y`
/// (and in `x` when the extended exponent matrix is invertible).
#[derive(Debug, Clone)]
pub struct QpSymmetry {
    pub t: Vec<Expr>,
    pub lambda: Vec<Rat>,
    pub xi: Vec<Rat>,
    pub gen_y: Generator,
    pub gen_x: Option<Generator>,
}

/// The LV flow as a vector field over `y`.
pub fn lv_flow(lv: &LVForm) -> Vec<Expr> {
    (0..lv.dim()).map(|i| lv.ydot(i)).collect()
}

/// Lie bracket of vector fields over the `y` variables.
pub fn bracket(lv: &LVForm, a: &[Expr], b: &[Expr]) -> Vec<Expr> {
    (0..lv.dim())
        .map(|i| {
            let mut terms = Vec::new();
            for k in 0..lv.dim() {
                let yk = lv.yvar(k);
                terms.push(prod_of([a[k].clone(), pdiff(&b[i], &yk)]));
                terms.push(prod_of([Expr::int(-1), b[k].clone(), pdiff(&a[i], &yk)]));
            }
            sum_of(terms)
        })
        .collect()
}

/// Search for polynomial vector fields `T` of component degree `<= max_degree`
/// with `[F, T] = lambda T` (lambda a linear form), attaching quasi-monomial
/// prefactors `y^xi` with `xi M = -lambda` so the combined field commutes with
/// the flow.
pub fn qp_symmetries(sys: &QPSystem, max_degree: usize) -> Result<Vec<QpSymmetry>, QpError> {
    let lv = to_lv(sys);
    let m = lv.dim();
    let mrat = lv.m_rational().ok_or(QpError::ParameterBearing)?;
    let flow = lv_flow(&lv);
    let mut monos: Vec<Vec<u32>> = Vec::new();
    for d in 0..=max_degree {
        monos.extend(monomials(m, d));
    }
    let support_slots: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..monos.len()).map(move |a| (i, a)))
        .collect();
    if support_slots.len() > 12 {
        return Err(QpError::SearchTooLarge {
            degree: max_degree,
            monomials: support_slots.len(),
        });
    }
    let mut found: Vec<(Vec<Expr>, Vec<Rat>)> = Vec::new();
    // the flow itself always commutes
    found.push((flow.clone(), vec![Rat::zero(); m]));
    let tname = |s: usize| format!("qt{s}");
    let lname = |j: usize| format!("ql{j}");
    for mask in 1u32..(1 << support_slots.len()) {
        let support: Vec<usize> =
            (0..support_slots.len()).filter(|s| mask & (1 << s) != 0).collect();
        let head = support[0];
        let tvarx = |s: usize| -> Expr {
            if s == head {
                Expr::one()
            } else {
                Expr::param(tname(s))
            }
        };
        // T components from the support
        let t: Vec<Expr> = (0..m)
            .map(|i| {
                sum_of(support.iter().filter(|&&s| support_slots[s].0 == i).map(|&s| {
                    prod_of([tvarx(s), mono_expr(&lv, &monos[support_slots[s].1])])
                }))
            })
            .collect();
        let lam_expr = sum_of(
            (0..m).map(|j| prod_of([Expr::param(lname(j)), lv.yvar(j)])),
        );
        let br = bracket(&lv, &flow, &t);
        let mut eqs: Vec<Expr> = Vec::new();
        for i in 0..m {
            let resid = sum_of([
                br[i].clone(),
                prod_of([Expr::int(-1), lam_expr.clone(), t[i].clone()]),
            ]);
            for coeff in group_by_non_params(&resid, "q").values() {
                if !is_zero(coeff) {
                    eqs.push(coeff.clone());
                }
            }
        }
        let mut vars: Vec<String> = (0..m).map(lname).collect();
        let mut nonzero = BTreeSet::new();
        for &s in &support {
            if s != head {
                vars.push(tname(s));
                nonzero.insert(tname(s));
            }
        }
        let mut solver = MiniSolver { eqs, vars, nonzero, values: BTreeMap::new() };
        if !solver.run() {
            continue;
        }
        let lam: Option<Vec<Rat>> = (0..m)
            .map(|j| solver.values.get(&lname(j)).and_then(|v| v.as_rat().cloned()))
            .collect();
        let Some(lam) = lam else { continue };
        let mut rules = BTreeMap::new();
        for (k, v) in &solver.values {
            rules.insert(Expr::param(k.clone()), v.clone());
        }
        let t_solved: Vec<Expr> = t.iter().map(|c| substitute(c, &rules)).collect();
        if t_solved.iter().all(is_zero) {
            continue;
        }
        // verify the bracket identity exactly
        let br = bracket(&lv, &flow, &t_solved);
        let lam_value = sum_of(
            lam.iter()
                .enumerate()
                .filter(|(_, l)| !l.is_zero())
                .map(|(j, l)| prod_of([Expr::Rat(l.clone()), lv.yvar(j)])),
        );
        let okay = (0..m).all(|i| {
            is_zero(&sum_of([
                br[i].clone(),
                prod_of([Expr::int(-1), lam_value.clone(), t_solved[i].clone()]),
            ]))
        });
        if !okay {
            continue;
        }
        if found.iter().any(|(tf, _)| *tf == t_solved) {
            continue;
        }
        found.push((t_solved, lam));
    }
    // attach prefactors and build generators
    let mut out = Vec::new();
    for (t, lam) in found {
        let at: Vec<Vec<Rat>> =
            (0..m).map(|k| (0..m).map(|j| mrat[j][k].clone()).collect()).collect();
        let rhs: Vec<Rat> = lam.iter().map(|l| -l.clone()).collect();
        let Some(xi) = solve_rat(&at, &rhs) else { continue };
        let prefactor = prod_of(
            xi.iter()
                .enumerate()
                .filter(|(_, g)| !g.is_zero())
                .map(|(j, g)| Expr::pow(lv.yvar(j), g.clone())),
        );
        let gy: Vec<Expr> =
            t.iter().map(|c| prod_of([prefactor.clone(), c.clone()])).collect();
        // [F, y^xi T] must vanish identically
        let br = bracket(&lv, &flow, &gy);
        if !br.iter().all(is_zero) {
            continue;
        }
        let space_y = JetSpace::new([lv.tvar.clone()], lv.yvars.clone());
        let gen_y = Generator::new(vec![Expr::zero()], gy.clone());
        let gen_x = lv.b_tilde_inv.as_ref().map(|inv| {
            // x_k = prod_i y_i^(inv_ki): dx_k/dy_i = x_k inv_ki / y_i
            let comps: Vec<Expr> = (0..sys.dim())
                .map(|k| {
                    let xk = sys.xvar(k);
                    let terms = (0..m).map(|i| {
                        prod_of([
                            xk.clone(),
                            Expr::Rat(inv[k][i].clone()),
                            Expr::pow(lv.yvar(i), -Rat::one()),
                            gy[i].clone(),
                        ])
                    });
                    lv.to_x(&sum_of(terms))
                })
                .collect();
            Generator::new(vec![Expr::zero()], comps)
        });
        let _ = space_y;
        out.push(QpSymmetry { t, lambda: lam, xi, gen_y, gen_x });
    }
    Ok(out)
}

/// Expand the flow (or one generator) as a function-coefficient combination of
/// the given generators; the coefficients of a successful expansion are first
/// integrals and are returned after verification.
pub fn flow_decomposition_integrals(
    lv: &LVForm,
    gens: &[Vec<Expr>],
    flow: &[Expr],
) -> Result<Vec<FirstIntegral>, QpError> {
    let m = lv.dim();
    let a: Vec<Vec<Expr>> =
        (0..m).map(|i| gens.iter().map(|g| g[i].clone()).collect()).collect();
    let b: Vec<Expr> = flow.to_vec();
    let h = solve_sym(&a, &b).ok_or(QpError::NoDecomposition)?;
    // confirm the pointwise expansion
    for i in 0..m {
        let rebuilt = sum_of(
            h.iter().zip(gens).map(|(hi, g)| prod_of([hi.clone(), g[i].clone()])),
        );
        if !is_zero(&sum_of([rebuilt, prod_of([Expr::int(-1), flow[i].clone()])])) {
            return Err(QpError::NoDecomposition);
        }
    }
    let mut out = Vec::new();
    for hi in h {
        if hi.is_rat() && !is_zero(&hi) {
            out.push(FirstIntegral { expr: hi, kind: IntegralKind::QpRatio });
            continue;
        }
        let deriv = lv.time_derivative(&hi);
        if is_zero(&deriv) && !is_zero(&hi) {
            out.push(FirstIntegral { expr: hi, kind: IntegralKind::QpRatio });
        }
    }
    Ok(out)
}

/// Parse a QP system from its JSON input document: variable names, optional
/// time variable, and the matrices `A` (n x m) and `B` (m x n) with entries
/// given as integers or exact-rational strings like `"1/2"`.
pub fn qp_from_json(v: &serde_json::Value) -> Result<QPSystem, QpError> {
    let obj = v.as_object().ok_or_else(|| QpError::Input("expected a JSON object".into()))?;
    let vars: Vec<String> = obj
        .get("vars")
        .and_then(|x| x.as_array())
        .ok_or_else(|| QpError::Input("missing \"vars\" array".into()))?
        .iter()
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| QpError::Input("variable names must be strings".into()))
        })
        .collect::<Result<_, _>>()?;
    let tvar = obj
        .get("time")
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| QpError::Input("\"time\" must be a string".into()))
        })
        .transpose()?
        .unwrap_or_else(|| "t".to_string());
    let params: Vec<String> = match obj.get("params") {
        None => Vec::new(),
        Some(x) => x
            .as_array()
            .ok_or_else(|| QpError::Input("\"params\" must be an array".into()))?
            .iter()
            .map(|p| {
                p.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| QpError::Input("parameter names must be strings".into()))
            })
            .collect::<Result<_, _>>()?,
    };
    let parse_rat = |x: &serde_json::Value| -> Result<Rat, QpError> {
        if let Some(i) = x.as_i64() {
            return Ok(Rat::from_integer(i.into()));
        }
        if let Some(s) = x.as_str() {
            let s = s.trim();
            let parts: Vec<&str> = s.split('/').collect();
            let parse_int = |p: &str| {
                p.trim()
                    .parse::<num_bigint::BigInt>()
                    .map_err(|_| QpError::Input(format!("bad rational '{s}'")))
            };
            return match parts.as_slice() {
                [a] => Ok(Rat::from_integer(parse_int(a)?)),
                [a, b] => Ok(Rat::new(parse_int(a)?, parse_int(b)?)),
                _ => Err(QpError::Input(format!("bad rational '{s}'"))),
            };
        }
        Err(QpError::Input(format!("bad numeric entry {x}")))
    };
    let parse_entry = |x: &serde_json::Value| -> Result<Expr, QpError> {
        if let Some(s) = x.as_str() {
            let st = s.trim();
            if params.iter().any(|p| p == st) {
                return Ok(Expr::param(st));
            }
            if let Some(rest) = st.strip_prefix('-') {
                if params.iter().any(|p| p == rest.trim()) {
                    return Ok(normalize(&Expr::Prod(vec![
                        Expr::int(-1),
                        Expr::param(rest.trim()),
                    ])));
                }
            }
        }
        parse_rat(x).map(Expr::Rat)
    };
    let matrix = |name: &str, f: &dyn Fn(&serde_json::Value) -> Result<Expr, QpError>|
     -> Result<Vec<Vec<Expr>>, QpError> {
        obj.get(name)
            .and_then(|x| x.as_array())
            .ok_or_else(|| QpError::Input(format!("missing \"{name}\" matrix")))?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| QpError::Input(format!("\"{name}\" rows must be arrays")))?
                    .iter()
                    .map(f)
                    .collect()
            })
            .collect()
    };
    let a = matrix("A", &parse_entry)?;
    let b_expr = matrix("B", &|x| parse_rat(x).map(Expr::Rat))?;
    let b: Vec<Vec<Rat>> = b_expr
        .into_iter()
        .map(|row| row.into_iter().map(|e| e.as_rat().cloned().unwrap()).collect())
        .collect();
    QPSystem::new(vars, tvar, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    /// The conservative two-species system ydot1 = y1 y2, ydot2 = -y1 y2.
    fn lv2() -> QPSystem {
        QPSystem::new(
            vec!["y1".into(), "y2".into()],
            "t".into(),
            vec![vec![Expr::zero(), Expr::one()], vec![Expr::int(-1), Expr::zero()]],
            vec![vec![r(1), r(0)], vec![r(0), r(1)]],
        )
        .unwrap()
    }

    /// Predator-prey xdot = x(a - b y), ydot = y(-c + d x) with numeric or
    /// symbolic coefficients.
    fn predator_prey(nums: Option<[i64; 4]>) -> QPSystem {
        let (a, b, c, d) = match nums {
            Some([a, b, c, d]) => {
                (Expr::int(a), Expr::int(b), Expr::int(c), Expr::int(d))
            }
            None => (
                Expr::param("a"),
                Expr::param("b"),
                Expr::param("c"),
                Expr::param("d"),
            ),
        };
        // quasimonomials: y (row 1), x (row 2)
        QPSystem::new(
            vec!["x".into(), "y".into()],
            "t".into(),
            vec![
                vec![normalize(&Expr::Prod(vec![Expr::int(-1), b])), Expr::zero(), a],
                vec![Expr::zero(), d, normalize(&Expr::Prod(vec![Expr::int(-1), c]))],
            ],
            vec![vec![r(0), r(1)], vec![r(1), r(0)], vec![r(0), r(0)]],
        )
        .unwrap()
    }

    #[test]
    fn identity_qmt_reproduces_equations() {
        let sys = lv2();
        let lv = to_lv(&sys);
        assert_eq!(lv.dim(), 2);
        // y_i = x_i, so the LV equations match the original ones
        for i in 0..2 {
            let back = lv.to_x(&lv.ydot(i));
            assert_eq!(back, sys.xdot(i));
        }
        assert!(lv.b_tilde_inv.is_some());
    }

    #[test]
    fn one_dimensional_riccati_monomial() {
        // xdot = x^2: A = [1], B = [1], M = [1]
        let sys = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::one()]],
            vec![vec![r(1)]],
        )
        .unwrap();
        let lv = to_lv(&sys);
        assert_eq!(lv.mmat, vec![vec![Expr::one()]]);
    }

    #[test]
    fn predator_prey_lv_expansion_matches() {
        let sys = predator_prey(Some([2, 1, 1, 1]));
        let lv = to_lv(&sys);
        // expanding the LV equations through y = x^B reproduces the QP system
        // for the state rows
        for j in 0..lv.dim() {
            let ydot_x = lv.to_x(&lv.ydot(j));
            // d/dt of y_j computed directly at x level
            let direct = sys.time_derivative(&lv.y_in_x[j]);
            assert!(is_zero(&sum_of([
                ydot_x,
                prod_of([Expr::int(-1), direct])
            ])));
        }
    }

    #[test]
    fn coordinates_are_semi_invariants() {
        let sys = lv2();
        let lv = to_lv(&sys);
        let semis = darboux(&lv, 1).unwrap();
        // y1 with lambda = M row 1, y2 with lambda = M row 2
        let y1 = semis.iter().find(|s| s.f == lv.yvar(0)).unwrap();
        assert_eq!(y1.lambda, vec![r(0), r(1)]);
        let y2 = semis.iter().find(|s| s.f == lv.yvar(1)).unwrap();
        assert_eq!(y2.lambda, vec![r(-1), r(0)]);
        for s in &semis {
            assert!(verify_semi_invariant(&lv, s));
        }
    }

    #[test]
    fn darboux_finds_conserved_sum() {
        let sys = lv2();
        let lv = to_lv(&sys);
        let semis = darboux(&lv, 2).unwrap();
        let sum = sum_of([lv.yvar(0), lv.yvar(1)]);
        let hit = semis.iter().find(|s| s.f == sum).expect("y1 + y2 not found");
        assert!(hit.lambda.iter().all(Rat::is_zero));
        // returned polynomials are homogeneous of the reported degree, so
        // each is its own homogeneous decomposition
        for s in &semis {
            for term in s.f.summands() {
                let mut degree = 0usize;
                term.walk(&mut |n| {
                    if let Expr::Dep(_) = n {
                        degree += 1;
                    }
                    if let Expr::Pow(b, q) = n {
                        if matches!(**b, Expr::Dep(_)) {
                            degree += num_traits::ToPrimitive::to_usize(q.numer())
                                .unwrap_or(0)
                                .saturating_sub(1);
                        }
                    }
                });
                assert_eq!(degree, s.degree, "term {term} of {}", s.f);
            }
        }
    }

    #[test]
    fn semi_invariant_products_stay_semi_invariant() {
        let sys = lv2();
        let lv = to_lv(&sys);
        let semis = darboux(&lv, 1).unwrap();
        for a in &semis {
            for b in &semis {
                let prod = SemiInvariant {
                    f: prod_of([a.f.clone(), b.f.clone()]),
                    lambda: a
                        .lambda
                        .iter()
                        .zip(&b.lambda)
                        .map(|(x, y)| x.clone() + y.clone())
                        .collect(),
                    degree: a.degree + b.degree,
                };
                assert!(verify_semi_invariant(&lv, &prod));
            }
        }
    }

    #[test]
    fn first_integral_of_conservative_pair() {
        let sys = lv2();
        let ints = qp_first_integrals(&sys, 2);
        let sum = sum_of([Expr::dep("y1"), Expr::dep("y2")]);
        assert!(
            ints.iter().any(|i| i.expr == sum),
            "missing y1+y2 in {:?}",
            ints.iter().map(|i| i.expr.to_string()).collect::<Vec<_>>()
        );
        for i in &ints {
            assert!(verify_integral(&sys, i));
        }
    }

    #[test]
    fn linear_decay_exp_weighted_integral() {
        // xdot = a x with symbolic a: I = x exp(-a t)
        let sys = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::param("a")]],
            vec![vec![r(0)]],
        )
        .unwrap();
        let ints = qp_first_integrals(&sys, 1);
        let expected = prod_of([
            Expr::dep("x"),
            Expr::elem(
                ElemTag::Exp,
                prod_of([Expr::int(-1), Expr::param("a"), Expr::indep("t")]),
            ),
        ]);
        assert!(ints.iter().any(|i| i.expr == expected && i.kind == IntegralKind::ExpWeighted));
    }

    #[test]
    fn predator_prey_log_integral_numeric() {
        // a,b,c,d = 2,1,1,1: I = x + y - ln x - 2 ln y (up to constant scale)
        let sys = predator_prey(Some([2, 1, 1, 1]));
        let ints = log_integrals(&sys, 1);
        let doc = crate::expr::parse_document("indep t; dep x(t), y(t);").unwrap();
        let expected = crate::expr::parse_expr("x + y - ln(x) - 2*ln(y)", &doc.decls).unwrap();
        // proportional expressions share the same primitive part
        let target = crate::expr::primitive(&expected).1;
        let found = ints.iter().any(|i| crate::expr::primitive(&i.expr).1 == target);
        assert!(
            found,
            "expected x + y - ln x - 2 ln y, got {:?}",
            ints.iter().map(|i| i.expr.to_string()).collect::<Vec<_>>()
        );
        for i in &ints {
            assert!(verify_integral(&sys, i));
        }
    }

    #[test]
    fn predator_prey_log_integral_symbolic() {
        // general parameters: I = d x + b y - c ln x - a ln y
        let sys = predator_prey(None);
        let ints = log_integrals(&sys, 1);
        let mut decls = crate::expr::parse_document("indep t; dep x(t), y(t);").unwrap().decls;
        for p in ["a", "b", "c", "d"] {
            decls.params.push(p.into());
        }
        let expected =
            crate::expr::parse_expr("d*x + b*y - c*ln(x) - a*ln(y)", &decls).unwrap();
        assert!(
            ints.iter().any(|i| i.expr == expected),
            "got {:?}",
            ints.iter().map(|i| i.expr.to_string()).collect::<Vec<_>>()
        );
        for i in &ints {
            assert!(verify_integral(&sys, i));
        }
    }

    #[test]
    fn log_integrals_trivial_and_empty_cases() {
        // xdot = 0: both x and ln x are integrals
        let sys = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::zero()]],
            vec![vec![r(0)]],
        )
        .unwrap();
        let ints = log_integrals(&sys, 1);
        assert!(ints.iter().any(|i| i.expr == Expr::dep("x")));
        assert!(ints
            .iter()
            .any(|i| i.expr == Expr::elem(ElemTag::Ln, Expr::dep("x"))));
        // xdot = x admits no log-type integral
        let sys2 = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::one()]],
            vec![vec![r(0)]],
        )
        .unwrap();
        assert!(log_integrals(&sys2, 2).is_empty());
    }

    #[test]
    fn qp_symmetries_scaling_field() {
        // ydot = y^2: T = d/dy satisfies [F, T] = -2 y T, T = y d/dy gives -y
        let sys = QPSystem::new(
            vec!["y".into()],
            "t".into(),
            vec![vec![Expr::one()]],
            vec![vec![r(1)]],
        )
        .unwrap();
        let syms = qp_symmetries(&sys, 1).unwrap();
        // flow itself present with lambda = 0
        assert!(syms
            .iter()
            .any(|s| s.lambda.iter().all(Rat::is_zero) && s.xi.iter().all(Rat::is_zero)));
        let lv = to_lv(&sys);
        let flow = lv_flow(&lv);
        for s in &syms {
            // commutation after prefactor attachment
            let br = bracket(&lv, &flow, &s.gen_y.etas);
            assert!(br.iter().all(is_zero));
        }
        // the scaling field y d/dy appears with lambda = -y, xi = 1
        assert!(syms.iter().any(|s| s.lambda == vec![r(-1)] && s.xi == vec![r(1)]));
    }

    #[test]
    fn qp_symmetries_reject_parameters() {
        let sys = predator_prey(None);
        assert!(matches!(qp_symmetries(&sys, 1), Err(QpError::ParameterBearing)));
    }

    #[test]
    fn flow_decomposition_proportional_generators() {
        let sys = lv2();
        let lv = to_lv(&sys);
        let g1 = vec![prod_of([Expr::dep("y1"), Expr::dep("y2")]), Expr::zero()];
        let g2: Vec<Expr> = g1
            .iter()
            .map(|e| prod_of([Expr::int(3), e.clone()]))
            .collect();
        let ints = flow_decomposition_integrals(&lv, &[g1], &g2).unwrap();
        assert_eq!(ints.len(), 1);
        assert_eq!(ints[0].expr, Expr::int(3));
    }

    #[test]
    fn flow_decomposition_recovers_conserved_coefficient() {
        // (y1+y2) F commutes with F because y1+y2 is a first integral;
        // expanding it over the flow recovers that integral as the
        // expansion coefficient
        let sys = lv2();
        let lv = to_lv(&sys);
        let flow = lv_flow(&lv);
        let sum = sum_of([Expr::dep("y1"), Expr::dep("y2")]);
        let weighted: Vec<Expr> =
            flow.iter().map(|c| prod_of([sum.clone(), c.clone()])).collect();
        let br = bracket(&lv, &flow, &weighted);
        assert!(br.iter().all(is_zero), "weighted flow must commute");
        let ints =
            flow_decomposition_integrals(&lv, &[flow.clone()], &weighted).unwrap();
        assert_eq!(ints.len(), 1);
        assert_eq!(ints[0].expr, sum);
        // a field with non-integral expansion coefficient yields nothing
        let g = vec![Expr::dep("y1"), prod_of([Expr::int(-1), Expr::dep("y1")])];
        let ints = flow_decomposition_integrals(&lv, &[g], &flow);
        assert!(ints.unwrap().is_empty());
        // independent generators: no decomposition at all
        let bad = vec![Expr::one(), Expr::one()];
        let res = flow_decomposition_integrals(&lv, &[bad], &flow);
        assert!(matches!(res, Err(QpError::NoDecomposition)));
    }

    #[test]
    fn degenerate_row_reports_constant_of_motion() {
        // ydot1 = y1 y2, ydot2 = 0: y2 is a constant of motion
        let sys = QPSystem::new(
            vec!["y1".into(), "y2".into()],
            "t".into(),
            vec![vec![Expr::one()], vec![Expr::zero()]],
            vec![vec![r(0), r(1)]],
        )
        .unwrap();
        let ints = qp_first_integrals(&sys, 1);
        assert!(ints.iter().any(|i| i.expr == Expr::dep("y2")));
    }

    #[test]
    fn standard_lv_has_no_low_degree_qp_integral() {
        // xdot1 = x1(1 - x2), xdot2 = x2(x1 - 1): the coordinates are
        // semi-invariants with eigenvalues 1 - x2 and x1 - 1, no ratio or
        // product cancels, and the xi-system yields nothing nontrivial
        let sys = QPSystem::new(
            vec!["x1".into(), "x2".into()],
            "t".into(),
            vec![
                vec![Expr::int(-1), Expr::zero(), Expr::one()],
                vec![Expr::zero(), Expr::one(), Expr::int(-1)],
            ],
            vec![vec![r(0), r(1)], vec![r(1), r(0)], vec![r(0), r(0)]],
        )
        .unwrap();
        let lv = to_lv(&sys);
        let semis = darboux(&lv, 1).unwrap();
        // y1 = x2 carries lambda = x1 - 1, y2 = x1 carries lambda = 1 - x2
        let y1 = semis.iter().find(|s| s.f == lv.yvar(0)).unwrap();
        assert_eq!(y1.lambda, vec![r(0), r(1), r(-1)]);
        let y2 = semis.iter().find(|s| s.f == lv.yvar(1)).unwrap();
        assert_eq!(y2.lambda, vec![r(-1), r(0), r(1)]);
        assert!(qp_first_integrals(&sys, 1).is_empty());
    }

    #[test]
    fn linear_system_translation_candidates() {
        // xdot = 2x written with the constant quasi-monomial: the translation
        // field d/dy1 is a semi-invariant field and its prefactored form
        // commutes with the flow, mapping back to a multiple of x D_x
        let sys = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::zero(), Expr::int(2)]],
            vec![vec![r(1)], vec![r(0)]],
        )
        .unwrap();
        let lv = to_lv(&sys);
        let syms = qp_symmetries(&sys, 1).unwrap();
        let translation = syms
            .iter()
            .find(|s| s.t == vec![Expr::one(), Expr::zero()])
            .expect("translation candidate missing");
        assert_eq!(translation.lambda, vec![r(0), r(-2)]);
        assert_eq!(translation.xi, vec![r(1), r(0)]);
        // bracket oracle: [F, y^xi T] = 0
        let flow = lv_flow(&lv);
        assert!(bracket(&lv, &flow, &translation.gen_y.etas).iter().all(is_zero));
        assert_eq!(
            translation.gen_x.as_ref().unwrap().etas,
            vec![Expr::dep("x")]
        );
        // exp-weighted integrals of the linear flow
        let ints = qp_first_integrals(&sys, 1);
        let expected = prod_of([
            Expr::dep("x"),
            Expr::elem(
                ElemTag::Exp,
                prod_of([Expr::int(-2), Expr::indep("t")]),
            ),
        ]);
        assert!(ints.iter().any(|i| i.expr == expected));
    }

    #[test]
    fn singular_exponent_matrix_degrades_to_forward_map() {
        // two copies of the zero exponent row make the extended matrix
        // singular; the forward embedding still works
        let sys = QPSystem::new(
            vec!["x".into()],
            "t".into(),
            vec![vec![Expr::one(), Expr::one()]],
            vec![vec![r(0)], vec![r(0)]],
        )
        .unwrap();
        let lv = to_lv(&sys);
        assert!(lv.b_tilde_inv.is_none());
        assert_eq!(lv.y_in_x, vec![Expr::one(), Expr::one()]);
        // integrals still come out of the x-level analysis: xdot = 2x
        let ints = qp_first_integrals(&sys, 1);
        assert!(!ints.is_empty());
        for i in &ints {
            assert!(verify_integral(&sys, i));
        }
    }

    #[test]
    fn json_roundtrip() {
        let v: serde_json::Value = serde_json::from_str(
            r#"{"vars": ["x", "y"], "time": "t", "params": ["a"],
                "A": [["a", 0], [0, "1/2"]],
                "B": [[1, 0], [0, 1]]}"#,
        )
        .unwrap();
        let sys = qp_from_json(&v).unwrap();
        assert_eq!(sys.vars, vec!["x", "y"]);
        assert_eq!(sys.a[0][0], Expr::param("a"));
        assert_eq!(sys.a[1][1], Expr::Rat(Rat::new(1.into(), 2.into())));
    }
}
