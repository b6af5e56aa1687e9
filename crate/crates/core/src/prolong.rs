//! Point-symmetry generators, prolongation to jet space, and generation of
//! the linear determining system.

use crate::expr::{
    is_zero, normalize, pdiff, primitive, prod_of, split_coefficients, sum_of, Declarations, Expr,
    JetCoord, UnknownFn,
};
use crate::jet::{orthonomic, DESystem, JetError, JetSpace, OrthonomicForm};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProlongError {
    #[error("prolongation order {have} is below the required order {need}")]
    InsufficientOrder { have: usize, need: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    NonPolynomial(#[from] crate::expr::NonPolynomial),
}

/// Point-symmetry generator `G = sum theta_i d/dx_i + sum eta_j d/du_j`; the
/// coefficient lists are aligned with the space's variable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub thetas: Vec<Expr>,
    pub etas: Vec<Expr>,
}

impl Generator {
    pub fn new(thetas: Vec<Expr>, etas: Vec<Expr>) -> Self {
        Generator {
            thetas: thetas.iter().map(normalize).collect(),
            etas: etas.iter().map(normalize).collect(),
        }
    }

    pub fn zero(space: &JetSpace) -> Self {
        Generator {
            thetas: vec![Expr::zero(); space.indep.len()],
            etas: vec![Expr::zero(); space.dep.len()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.thetas.iter().chain(self.etas.iter()).all(is_zero)
    }

    /// Build a generator from `D[..]` slot coefficients keyed by variable name.
    pub fn from_coeffs(space: &JetSpace, coeffs: &BTreeMap<String, Expr>) -> Self {
        let get = |v: &String| coeffs.get(v).cloned().unwrap_or_else(Expr::zero);
        Generator {
            thetas: space.indep.iter().map(get).collect(),
            etas: space.dep.iter().map(get).collect(),
        }
    }

    /// Apply the generator as a first-order differential operator on base
    /// variables.
    pub fn apply(&self, space: &JetSpace, e: &Expr) -> Expr {
        let mut terms = Vec::new();
        for (x, th) in space.indep.iter().zip(&self.thetas) {
            terms.push(Expr::Prod(vec![th.clone(), pdiff(e, &Expr::indep(x))]));
        }
        for (u, eta) in space.dep.iter().zip(&self.etas) {
            terms.push(Expr::Prod(vec![eta.clone(), pdiff(e, &Expr::dep(u))]));
        }
        normalize(&Expr::Sum(terms))
    }

    /// Evolutionary characteristics `Q_j = eta_j - sum_i u_{j,i} theta_i`.
    pub fn evolutionary(&self, space: &JetSpace) -> Vec<Expr> {
        space
            .dep
            .iter()
            .zip(&self.etas)
            .map(|(u, eta)| {
                let mut terms = vec![eta.clone()];
                for (x, th) in space.indep.iter().zip(&self.thetas) {
                    terms.push(Expr::Prod(vec![
                        Expr::int(-1),
                        Expr::jet(u.clone(), [x.clone()]),
                        th.clone(),
                    ]));
                }
                sum_of(terms)
            })
            .collect()
    }

    /// Render in `D`-notation, e.g. `(u*t-x)*D[u] - t^2*D[t]`.
    pub fn to_d_notation(&self, space: &JetSpace) -> String {
        let mut parts: Vec<(String, Expr)> = Vec::new();
        for (u, eta) in space.dep.iter().zip(&self.etas) {
            if !is_zero(eta) {
                parts.push((u.clone(), eta.clone()));
            }
        }
        for (x, th) in space.indep.iter().zip(&self.thetas) {
            if !is_zero(th) {
                parts.push((x.clone(), th.clone()));
            }
        }
        if parts.is_empty() {
            return "0".to_string();
        }
        let one = crate::expr::Rat::from_integer(1.into());
        let minus_one = -one.clone();
        let mut out = String::new();
        for (i, (v, c)) in parts.iter().enumerate() {
            let (negative, mag) = match c {
                Expr::Rat(r) if *r == minus_one => (true, None),
                Expr::Rat(r) if *r == one => (false, None),
                other => {
                    let (content, _) = primitive(other);
                    if content < crate::expr::Rat::from_integer(0.into()) {
                        (true, Some(prod_of([Expr::int(-1), other.clone()])))
                    } else {
                        (false, Some(other.clone()))
                    }
                }
            };
            if i == 0 {
                if negative {
                    out.push('-');
                }
            } else if negative {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            match mag {
                None => out.push_str(&format!("D[{v}]")),
                Some(m) => {
                    if m.term_count() > 1 {
                        out.push_str(&format!("({m})*D[{v}]"));
                    } else {
                        out.push_str(&format!("{m}*D[{v}]"));
                    }
                }
            }
        }
        out
    }
}

/// A generator together with its lazily computed, memoized prolongation
/// coefficients `eta^(l)_{j,I}`.
#[derive(Debug, Clone)]
pub struct ProlongedGenerator {
    pub base: Generator,
    pub space: JetSpace,
    pub order: usize,
    coeffs: BTreeMap<JetCoord, Expr>,
}

/// Prolong a generator to order `k`; coefficients are computed on demand.
pub fn prolong(g: &Generator, space: &JetSpace, k: usize) -> ProlongedGenerator {
    ProlongedGenerator { base: g.clone(), space: space.clone(), order: k, coeffs: BTreeMap::new() }
}

impl ProlongedGenerator {
    /// Prolongation coefficient for the jet `u_{j,I}`, by the recursion
    /// `eta_{j,I+i} = D_i eta_{j,I} - sum_l u_{j,I+l} D_i theta_l`.
    pub fn coeff(&mut self, jet: &JetCoord) -> Expr {
        if let Some(c) = self.coeffs.get(jet) {
            return c.clone();
        }
        let c = if jet.idx.is_empty() {
            let j = self
                .space
                .dep
                .iter()
                .position(|d| d == &jet.dep)
                .expect("jet over undeclared dependent variable");
            self.base.etas[j].clone()
        } else {
            let mut idx = jet.idx.clone();
            let last = idx.pop().unwrap();
            let prev = JetCoord { dep: jet.dep.clone(), idx };
            let prev_coeff = self.coeff(&prev);
            let mut terms = vec![self.space.total_derivative(&prev_coeff, &last)];
            let thetas = self.base.thetas.clone();
            let indep = self.space.indep.clone();
            for (l, x) in indep.iter().enumerate() {
                let dtheta = self.space.total_derivative(&thetas[l], &last);
                if !is_zero(&dtheta) {
                    terms.push(Expr::Prod(vec![
                        Expr::int(-1),
                        Expr::Jet(prev.extend(x)),
                        dtheta,
                    ]));
                }
            }
            sum_of(terms)
        };
        self.coeffs.insert(jet.clone(), c.clone());
        c
    }

    /// Apply the prolonged generator to an expression on the jet space.
    pub fn apply(&mut self, e: &Expr) -> Result<Expr, ProlongError> {
        let need = e.max_jet_order();
        if need > self.order {
            return Err(ProlongError::InsufficientOrder { have: self.order, need });
        }
        let mut terms = vec![self.base.apply(&self.space, e)];
        for j in e.jets() {
            let de = pdiff(e, &Expr::Jet(j.clone()));
            if !is_zero(&de) {
                terms.push(Expr::Prod(vec![self.coeff(&j), de]));
            }
        }
        Ok(sum_of(terms))
    }
}

/// Linear homogeneous determining system for the unknown generator
/// coefficients.
#[derive(Debug, Clone)]
pub struct DeterminingSystem {
    pub space: JetSpace,
    /// Ansatz unknowns: thetas (one per independent variable) then etas.
    pub unknowns: Vec<UnknownFn>,
    /// Declarations carrying the base variables and the ansatz unknowns.
    pub decls: Declarations,
    pub eqs: Vec<Expr>,
}

/// The generic point-symmetry ansatz: every theta and eta is an unknown
/// function of all base and dependent variables.
pub fn generic_ansatz(space: &JetSpace) -> (Generator, Vec<UnknownFn>) {
    let args: Vec<String> = space.indep.iter().chain(space.dep.iter()).cloned().collect();
    let mut unknowns = Vec::new();
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
    (Generator { thetas, etas }, unknowns)
}

/// Build the determining system: prolong the generic ansatz to the system
/// order, apply it to every equation, reduce modulo the orthonomic form with
/// its differential consequences, and split on independent jet monomials.
pub fn determining_system(sys: &DESystem) -> Result<DeterminingSystem, ProlongError> {
    let of = orthonomic(sys)?;
    determining_system_with(sys, &of)
}

fn determining_system_with(
    sys: &DESystem,
    of: &OrthonomicForm,
) -> Result<DeterminingSystem, ProlongError> {
    let k = sys.order();
    let (ansatz, unknowns) = generic_ansatz(&sys.space);
    let mut decls = Declarations {
        indep: sys.space.indep.clone(),
        dep: sys.space.dep.clone(),
        params: Vec::new(),
        unknowns: BTreeMap::new(),
    };
    for f in &unknowns {
        decls.declare_unknown(&f.name, &f.args);
    }
    let names: BTreeSet<String> = unknowns.iter().map(|f| f.name.clone()).collect();
    let mut prolonged = prolong(&ansatz, &sys.space, k);
    let mut eqs: Vec<Expr> = Vec::new();
    for f in &sys.eqs {
        let applied = prolonged.apply(f)?;
        let reduced = of.reduce(&applied);
        let pairs = split_coefficients(&reduced, &decls, &names)?;
        for (_, coeff) in pairs {
            let (_, prim) = primitive(&coeff);
            if !is_zero(&prim) && !eqs.contains(&prim) {
                eqs.push(prim);
            }
        }
    }
    Ok(DeterminingSystem { space: sys.space.clone(), unknowns, decls, eqs })
}

/// Residuals of the invariance condition `G^(k) F = 0` modulo the system;
/// all-zero means `g` is a Lie point symmetry.
pub fn check_symmetry(sys: &DESystem, g: &Generator) -> Result<Vec<Expr>, ProlongError> {
    let of = orthonomic(sys)?;
    let k = sys.order();
    let mut prolonged = prolong(g, &sys.space, k);
    let mut out = Vec::new();
    for f in &sys.eqs {
        let applied = prolonged.apply(f)?;
        out.push(of.reduce(&applied));
    }
    Ok(out)
}

/// Substitute concrete generator coefficients for the ansatz unknowns of a
/// determining system, returning the residual of each equation.
pub fn residuals_for(det: &DeterminingSystem, g: &Generator) -> Vec<Expr> {
    let mut out = Vec::new();
    for eq in &det.eqs {
        let mut e = eq.clone();
        for (x, th) in det.space.indep.iter().zip(&g.thetas) {
            e = crate::expr::substitute_unknown(&e, &format!("theta_{x}"), th);
        }
        for (u, eta) in det.space.dep.iter().zip(&g.etas) {
            e = crate::expr::substitute_unknown(&e, &format!("eta_{u}"), eta);
        }
        out.push(e);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_document, parse_expr, parse_generator_coeffs};

    fn heat() -> DESystem {
        let doc = parse_document("indep x, t; dep u(x,t); eq diff(u,t) = diff(u,x,x);").unwrap();
        DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs)
    }

    fn decls_heat() -> Declarations {
        parse_document("indep x, t; dep u(x,t); unknown F1(t,x);").unwrap().decls
    }

    #[test]
    fn first_prolongation_of_heat_scaling() {
        // g = 2t D_t + x D_x: eta^(1)_x = -u_x
        let space = JetSpace::new(["x", "t"], ["u"]);
        let g = Generator::new(
            vec![Expr::indep("x"), prod_of([Expr::int(2), Expr::indep("t")])],
            vec![Expr::zero()],
        );
        let mut p = prolong(&g, &space, 1);
        let got = p.coeff(&JetCoord::new("u", ["x"]));
        assert_eq!(got, prod_of([Expr::int(-1), Expr::jet("u", ["x"])]));
    }

    #[test]
    fn scaling_of_u_prolongs_to_all_jets() {
        let space = JetSpace::new(["x", "t"], ["u"]);
        let g = Generator::new(vec![Expr::zero(), Expr::zero()], vec![Expr::dep("u")]);
        let mut p = prolong(&g, &space, 2);
        for jet in [
            JetCoord::new("u", ["x"]),
            JetCoord::new("u", ["t"]),
            JetCoord::new("u", ["x", "x"]),
        ] {
            assert_eq!(p.coeff(&jet), Expr::Jet(jet.clone()));
        }
    }

    #[test]
    fn arbitrary_function_eta_prolongs_to_its_derivative() {
        let decls = decls_heat();
        let space = JetSpace::new(["x", "t"], ["u"]);
        let g = Generator::new(
            vec![Expr::zero(), Expr::zero()],
            vec![parse_expr("F1(t,x)", &decls).unwrap()],
        );
        let mut p = prolong(&g, &space, 1);
        assert_eq!(
            p.coeff(&JetCoord::new("u", ["x"])),
            parse_expr("diff(F1(t,x),x)", &decls).unwrap()
        );
    }

    #[test]
    fn evolutionary_characteristics() {
        let space = JetSpace::new(["x", "t"], ["u"]);
        // theta_x = 1 -> Q = -u_x
        let g = Generator::new(vec![Expr::one(), Expr::zero()], vec![Expr::zero()]);
        assert_eq!(
            g.evolutionary(&space),
            vec![prod_of([Expr::int(-1), Expr::jet("u", ["x"])])]
        );
        // eta = u -> Q = u
        let g = Generator::new(vec![Expr::zero(), Expr::zero()], vec![Expr::dep("u")]);
        assert_eq!(g.evolutionary(&space), vec![Expr::dep("u")]);
    }

    #[test]
    fn evolutionary_of_burgers_generator() {
        let doc = parse_document("indep x, t; dep u(x,t), v(x,t);").unwrap();
        let space = JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone());
        let coeffs = parse_generator_coeffs(
            "(u*t-x)*D[u] + (2*v*t-1)*D[v] - t^2*D[t] - t*x*D[x]",
            &doc.decls,
        )
        .unwrap();
        let g = Generator::from_coeffs(&space, &coeffs);
        let q = g.evolutionary(&space);
        let expected =
            parse_expr("u*t - x + t^2*diff(u,t) + t*x*diff(u,x)", &doc.decls).unwrap();
        assert_eq!(q[0], expected);
    }

    #[test]
    fn apply_prolonged_scaling_to_heat() {
        let sys = heat();
        let g = Generator::new(vec![Expr::zero(), Expr::zero()], vec![Expr::dep("u")]);
        let mut p = prolong(&g, &sys.space, 2);
        let got = p.apply(&sys.eqs[0]).unwrap();
        assert_eq!(got, sys.eqs[0]);
        // constants map to zero
        assert_eq!(p.apply(&Expr::int(7)).unwrap(), Expr::zero());
    }

    #[test]
    fn insufficient_order_reported() {
        let sys = heat();
        let g = Generator::new(vec![Expr::zero(), Expr::zero()], vec![Expr::dep("u")]);
        let mut p = prolong(&g, &sys.space, 1);
        assert!(matches!(
            p.apply(&sys.eqs[0]),
            Err(ProlongError::InsufficientOrder { have: 1, need: 2 })
        ));
    }

    #[test]
    fn heat_determining_system_has_nine_equations() {
        let det = determining_system(&heat()).unwrap();
        assert_eq!(det.eqs.len(), 9);
        // linear homogeneous: second derivative with respect to any pair of
        // unknown atoms vanishes structurally
        for eq in &det.eqs {
            let mut atoms = Vec::new();
            eq.walk(&mut |e| {
                if matches!(e, Expr::Unknown(_) | Expr::PDeriv(_)) {
                    atoms.push(e.clone());
                }
            });
            for a in &atoms {
                let d1 = pdiff(eq, a);
                for b in &atoms {
                    assert!(is_zero(&pdiff(&d1, b)));
                }
            }
        }
    }

    #[test]
    fn check_symmetry_heat_fixtures() {
        let sys = heat();
        let doc = parse_document("indep x, t; dep u(x,t);").unwrap();
        // D_x is a symmetry
        let dx = Generator::from_coeffs(
            &sys.space,
            &parse_generator_coeffs("D[x]", &doc.decls).unwrap(),
        );
        assert!(check_symmetry(&sys, &dx).unwrap().iter().all(is_zero));
        // u D_x is not
        let udx = Generator::from_coeffs(
            &sys.space,
            &parse_generator_coeffs("u*D[x]", &doc.decls).unwrap(),
        );
        assert!(!check_symmetry(&sys, &udx).unwrap().iter().all(is_zero));
        // the projective generator from the worked output
        let proj = Generator::from_coeffs(
            &sys.space,
            &parse_generator_coeffs(
                "t^2*D[t] + (1/4)*(-2*u*t - u*x^2)*D[u] + t*x*D[x]",
                &doc.decls,
            )
            .unwrap(),
        );
        assert!(check_symmetry(&sys, &proj).unwrap().iter().all(is_zero));
    }

    #[test]
    fn transport_determining_system_admits_translations_and_scaling() {
        let doc = parse_document("indep x, t; dep u(x,t); eq diff(u,t) = diff(u,x);").unwrap();
        let sys =
            DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs);
        let det = determining_system(&sys).unwrap();
        let gdoc = parse_document("indep x, t; dep u(x,t);").unwrap();
        for gen in ["D[x]", "D[t]", "u*D[u]"] {
            let g = Generator::from_coeffs(
                &sys.space,
                &parse_generator_coeffs(gen, &gdoc.decls).unwrap(),
            );
            assert!(
                residuals_for(&det, &g).iter().all(is_zero),
                "{gen} should satisfy the determining system"
            );
            assert!(check_symmetry(&sys, &g).unwrap().iter().all(is_zero));
        }
    }

    #[test]
    fn klein_gordon_boost_and_rotation() {
        let doc = parse_document(
            "indep x, y, z, t; dep phi(x,y,z,t); param lambda;
             eq diff(phi,x,x) + diff(phi,y,y) + diff(phi,z,z) - diff(phi,t,t) + lambda*phi^3 = 0;",
        )
        .unwrap();
        let sys =
            DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs);
        for gen in ["y*D[t] + t*D[y]", "z*D[x] - x*D[z]"] {
            let g = Generator::from_coeffs(
                &sys.space,
                &parse_generator_coeffs(gen, &doc.decls).unwrap(),
            );
            let res = check_symmetry(&sys, &g).unwrap();
            assert!(res.iter().all(is_zero), "{gen} residual {:?}", res);
        }
    }

    #[test]
    fn burgers_generator_is_a_symmetry() {
        let doc = parse_document(
            "indep x, t; dep u(x,t), v(x,t);
             eq diff(u,x) - v = 0;
             eq diff(u,t) + u*v - diff(v,x) = 0;",
        )
        .unwrap();
        let sys =
            DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs);
        let g = Generator::from_coeffs(
            &sys.space,
            &parse_generator_coeffs(
                "(u*t-x)*D[u] + (2*v*t-1)*D[v] - t^2*D[t] - t*x*D[x]",
                &doc.decls,
            )
            .unwrap(),
        );
        let res = check_symmetry(&sys, &g).unwrap();
        assert!(res.iter().all(is_zero), "residuals {:?}", res);
    }
}
