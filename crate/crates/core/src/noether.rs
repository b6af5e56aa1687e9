//! Euler-Lagrange equations, the variational-symmetry condition, and Noether
//! conserved currents.

use crate::expr::{
    is_zero, normalize, pdiff, prod_of, split_coefficients, sum_of, Declarations, Expr, UnknownFn,
};
use crate::jet::{orthonomic, DESystem, JetError, JetSpace};
use crate::linsolve::{solve_linear, SolverParams};
use crate::prolong::{DeterminingSystem, Generator};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NoetherError {
    #[error("only first-order Lagrangians are supported (found a derivative of order {0})")]
    HigherOrder(usize),
    #[error("the pair (generator, f) does not satisfy the variational symmetry condition")]
    NotVariationalSymmetry,
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    NonPolynomial(#[from] crate::expr::NonPolynomial),
}

/// First-order Lagrangian density over a jet space.
#[derive(Debug, Clone)]
pub struct Lagrangian {
    pub space: JetSpace,
    pub density: Expr,
}

impl Lagrangian {
    pub fn new(space: JetSpace, density: Expr) -> Result<Self, NoetherError> {
        let density = normalize(&density);
        let order = density.max_jet_order();
        if order > 1 {
            return Err(NoetherError::HigherOrder(order));
        }
        Ok(Lagrangian { space, density })
    }
}

/// Conserved current components, ordered by the independent-variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedCurrent {
    pub components: Vec<Expr>,
}

impl ConservedCurrent {
    /// Total divergence `sum_i D_i I_i`.
    pub fn divergence(&self, space: &JetSpace) -> Expr {
        sum_of(
            space
                .indep
                .iter()
                .zip(&self.components)
                .map(|(x, c)| space.total_derivative(c, x)),
        )
    }
}

/// Euler-Lagrange equations `dL/du_j - sum_i D_i dL/du_{j,i} = 0`.
pub fn euler_lagrange(lag: &Lagrangian) -> DESystem {
    let space = &lag.space;
    let eqs: Vec<Expr> = space
        .dep
        .iter()
        .map(|u| {
            let mut terms = vec![pdiff(&lag.density, &Expr::dep(u))];
            for x in &space.indep {
                let dl = pdiff(&lag.density, &Expr::jet(u.clone(), [x.clone()]));
                if !is_zero(&dl) {
                    terms.push(prod_of([Expr::int(-1), space.total_derivative(&dl, x)]));
                }
            }
            sum_of(terms)
        })
        .collect();
    DESystem::new(space.clone(), eqs)
}

/// The first-order part of the invariance operator applied to the Lagrangian:
/// `sum theta_i dL/dx_i + sum eta_j dL/du_j
///  + sum (D_i eta_j - sum_k u_{j,k} D_i theta_k) dL/du_{j,i}
///  + (sum_i D_i theta_i) L`.
fn invariance_operator(lag: &Lagrangian, g: &Generator) -> Expr {
    let space = &lag.space;
    let l = &lag.density;
    let mut terms = Vec::new();
    for (x, th) in space.indep.iter().zip(&g.thetas) {
        terms.push(prod_of([th.clone(), pdiff(l, &Expr::indep(x))]));
    }
    for (u, eta) in space.dep.iter().zip(&g.etas) {
        terms.push(prod_of([eta.clone(), pdiff(l, &Expr::dep(u))]));
    }
    for (u, eta) in space.dep.iter().zip(&g.etas) {
        for x in &space.indep {
            let dl = pdiff(l, &Expr::jet(u.clone(), [x.clone()]));
            if is_zero(&dl) {
                continue;
            }
            let mut inner = vec![space.total_derivative(eta, x)];
            for (xk, th) in space.indep.iter().zip(&g.thetas) {
                inner.push(prod_of([
                    Expr::int(-1),
                    Expr::jet(u.clone(), [xk.clone()]),
                    space.total_derivative(th, x),
                ]));
            }
            terms.push(prod_of([sum_of(inner), dl]));
        }
    }
    let div_theta = sum_of(
        space
            .indep
            .iter()
            .zip(&g.thetas)
            .map(|(x, th)| space.total_derivative(th, x)),
    );
    terms.push(prod_of([div_theta, l.clone()]));
    sum_of(terms)
}

/// Residual of the Noether condition `D L - sum_i D_i f_i` for concrete
/// generator coefficients and gauge terms `f_i`.
pub fn noether_residual(lag: &Lagrangian, g: &Generator, f: &[Expr]) -> Expr {
    let space = &lag.space;
    let mut terms = vec![invariance_operator(lag, g)];
    for (x, fi) in space.indep.iter().zip(f) {
        terms.push(prod_of([Expr::int(-1), space.total_derivative(fi, x)]));
    }
    sum_of(terms)
}

/// Determining system for variational symmetries: theta, eta and f are
/// unknown functions of all base variables, the condition is expanded and
/// split on jet monomials.
pub fn noether_condition(lag: &Lagrangian) -> Result<DeterminingSystem, NoetherError> {
    let space = &lag.space;
    let args: Vec<String> = space.indep.iter().chain(space.dep.iter()).cloned().collect();
    let mut unknowns: Vec<UnknownFn> = Vec::new();
    let thetas: Vec<Expr> = space
        .indep
        .iter()
        .map(|x| {
            let f = UnknownFn::new(format!("theta_{x}"), args.clone());
            unknowns.push(f.clone());
            Expr::Unknown(f)
        })
        .collect();
    let etas: Vec<Expr> = space
        .dep
        .iter()
        .map(|u| {
            let f = UnknownFn::new(format!("eta_{u}"), args.clone());
            unknowns.push(f.clone());
            Expr::Unknown(f)
        })
        .collect();
    let fs: Vec<Expr> = space
        .indep
        .iter()
        .map(|x| {
            let f = UnknownFn::new(format!("f_{x}"), args.clone());
            unknowns.push(f.clone());
            Expr::Unknown(f)
        })
        .collect();
    let g = Generator { thetas, etas };
    let condition = noether_residual(lag, &g, &fs);
    let mut decls = Declarations {
        indep: space.indep.clone(),
        dep: space.dep.clone(),
        params: Vec::new(),
        unknowns: BTreeMap::new(),
    };
    for u in &unknowns {
        decls.declare_unknown(&u.name, &u.args);
    }
    let names: BTreeSet<String> = unknowns.iter().map(|u| u.name.clone()).collect();
    let pairs = split_coefficients(&condition, &decls, &names)?;
    let mut eqs = Vec::new();
    for (_, coeff) in pairs {
        let (_, prim) = crate::expr::primitive(&coeff);
        if !is_zero(&prim) && !eqs.contains(&prim) {
            eqs.push(prim);
        }
    }
    Ok(DeterminingSystem { space: space.clone(), unknowns, decls, eqs })
}

/// Conserved current of a variational symmetry:
/// `I_i = L theta_i + sum_j dL/du_{j,i} (eta_j - sum_k u_{j,k} theta_k) - f_i`,
/// verified divergence-free modulo the Euler-Lagrange equations.
pub fn noether_current(
    lag: &Lagrangian,
    g: &Generator,
    f: &[Expr],
) -> Result<ConservedCurrent, NoetherError> {
    let space = &lag.space;
    let chars = g.evolutionary(space);
    let components: Vec<Expr> = space
        .indep
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut terms = vec![prod_of([lag.density.clone(), g.thetas[i].clone()])];
            for (u, q) in space.dep.iter().zip(&chars) {
                let dl = pdiff(&lag.density, &Expr::jet(u.clone(), [x.clone()]));
                if !is_zero(&dl) {
                    terms.push(prod_of([dl, q.clone()]));
                }
            }
            if let Some(fi) = f.get(i) {
                terms.push(prod_of([Expr::int(-1), fi.clone()]));
            }
            sum_of(terms)
        })
        .collect();
    let current = ConservedCurrent { components };
    let el = euler_lagrange(lag);
    let of = orthonomic(&el)?;
    if !is_zero(&of.reduce(&current.divergence(space))) {
        return Err(NoetherError::NotVariationalSymmetry);
    }
    Ok(current)
}

/// Monomials of total degree `<= d` in the base variables.
fn base_monomials(space: &JetSpace, d: usize) -> Vec<Expr> {
    let vars: Vec<Expr> = space
        .indep
        .iter()
        .map(|x| Expr::indep(x))
        .chain(space.dep.iter().map(|u| Expr::dep(u)))
        .collect();
    let mut out = vec![Expr::one()];
    let mut frontier = vec![Expr::one()];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &frontier {
            for v in &vars {
                let cand = prod_of([m.clone(), v.clone()]);
                if !out.contains(&cand) {
                    out.push(cand.clone());
                    next.push(cand);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Solve the Noether condition with a polynomial ansatz of degree `d` for
/// theta, eta and f in the base variables; returns the verified generator /
/// current pairs, with pure gauge shifts (zero generator) filtered out.
pub fn noether_solve(
    lag: &Lagrangian,
    d: usize,
) -> Result<Vec<(Generator, ConservedCurrent)>, NoetherError> {
    let space = &lag.space;
    let monos = base_monomials(space, d);
    let mut counter = 0usize;
    let mut unknowns: Vec<UnknownFn> = Vec::new();
    let mut poly = |unknowns: &mut Vec<UnknownFn>| -> Expr {
        let terms: Vec<Expr> = monos
            .iter()
            .map(|m| {
                counter += 1;
                let u = UnknownFn::new(format!("a{counter}"), Vec::<String>::new());
                unknowns.push(u.clone());
                prod_of([Expr::Unknown(u), m.clone()])
            })
            .collect();
        sum_of(terms)
    };
    let thetas: Vec<Expr> = (0..space.indep.len()).map(|_| poly(&mut unknowns)).collect();
    let etas: Vec<Expr> = (0..space.dep.len()).map(|_| poly(&mut unknowns)).collect();
    let fs: Vec<Expr> = (0..space.indep.len()).map(|_| poly(&mut unknowns)).collect();
    let g = Generator { thetas: thetas.clone(), etas: etas.clone() };
    let condition = noether_residual(lag, &g, &fs);
    let mut decls = Declarations {
        indep: space.indep.clone(),
        dep: space.dep.clone(),
        params: Vec::new(),
        unknowns: BTreeMap::new(),
    };
    for u in &unknowns {
        decls.declare_unknown(&u.name, &u.args);
    }
    let names: BTreeSet<String> = unknowns.iter().map(|u| u.name.clone()).collect();
    let pairs = split_coefficients(&condition, &decls, &names)?;
    let mut eqs = Vec::new();
    for (_, coeff) in pairs {
        let (_, prim) = crate::expr::primitive(&coeff);
        if !is_zero(&prim) && !eqs.contains(&prim) {
            eqs.push(prim);
        }
    }
    let det = DeterminingSystem {
        space: space.clone(),
        unknowns: unknowns.clone(),
        decls,
        eqs,
    };
    let state = solve_linear(&det, &SolverParams::default());
    let value_of = |u: &UnknownFn| state.found.get(&u.name).cloned().unwrap_or_else(Expr::zero);
    let el = euler_lagrange(lag);
    let of = orthonomic(&el)?;
    let mut out = Vec::new();
    for c in &state.arbitrary_constants {
        let atom = Expr::unknown(c.clone(), Vec::<String>::new());
        let sub = |template: &Expr| -> Expr {
            let mut e = template.clone();
            for u in &unknowns {
                e = crate::expr::substitute_unknown(&e, &u.name, &value_of(u));
            }
            pdiff(&e, &atom)
        };
        let gen = Generator::new(thetas.iter().map(&sub).collect(), etas.iter().map(&sub).collect());
        if gen.is_zero() {
            continue;
        }
        let f: Vec<Expr> = fs.iter().map(&sub).collect();
        let mut current = noether_current(lag, &gen, &f)?;
        // canonicalize: drop on-shell-vanishing parts of the components
        current.components = current.components.iter().map(|c| of.reduce(c)).collect();
        out.push((gen, current));
    }
    Ok(out)
}
