//! Jet-space bookkeeping: differential systems, orthonomic (solved) form,
//! total derivatives, and reduction modulo a system together with its
//! differential consequences.

use crate::expr::{is_zero, normalize, pdiff, substitute, Expr, JetCoord, Rat};
use num_traits::One;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum JetError {
    /// No ranking-leading derivative can be isolated linearly.
    #[error("system is not orthonomic: {0}")]
    NotOrthonomic(String),
}

/// The variable frame of a jet space: ordered independent and dependent
/// variable names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetSpace {
    pub indep: Vec<String>,
    pub dep: Vec<String>,
}

impl JetSpace {
    pub fn new(
        indep: impl IntoIterator<Item = impl Into<String>>,
        dep: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        JetSpace {
            indep: indep.into_iter().map(Into::into).collect(),
            dep: dep.into_iter().map(Into::into).collect(),
        }
    }

    /// Count vector of a multi-index over the independent-variable order.
    fn counts(&self, idx: &[String]) -> Vec<usize> {
        let mut c = vec![0usize; self.indep.len()];
        for v in idx {
            if let Some(i) = self.indep.iter().position(|w| w == v) {
                c[i] += 1;
            }
        }
        c
    }

    /// Orderly ranking: grade by total derivative order, tie-break by
    /// reverse-lexicographic multi-index, then by dependent-variable index.
    pub fn cmp_jets(&self, a: &JetCoord, b: &JetCoord) -> Ordering {
        match a.order().cmp(&b.order()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (ca, cb) = (self.counts(&a.idx), self.counts(&b.idx));
        for k in (0..ca.len()).rev() {
            if ca[k] != cb[k] {
                // smaller trailing exponent ranks higher (graded reverse lex)
                return cb[k].cmp(&ca[k]);
            }
        }
        let ia = self.dep.iter().position(|d| d == &a.dep);
        let ib = self.dep.iter().position(|d| d == &b.dep);
        ia.cmp(&ib)
    }

    /// Total derivative `D_i e = de/dx_i + sum u_{j,I+i} de/du_{jI}`, with the
    /// chain rule through unknown-function arguments.
    pub fn total_derivative(&self, e: &Expr, i: &str) -> Expr {
        let mut terms = vec![pdiff(e, &Expr::indep(i))];
        // dependent variables reachable either as atoms or as unknown args
        for d in e.dep_names(&self.dep) {
            let de = pdiff(e, &Expr::dep(&d));
            if !is_zero(&de) {
                terms.push(Expr::Prod(vec![de, Expr::jet(d, [i])]));
            }
        }
        for j in e.jets() {
            let de = pdiff(e, &Expr::Jet(j.clone()));
            if !is_zero(&de) {
                terms.push(Expr::Prod(vec![de, Expr::Jet(j.extend(i))]));
            }
        }
        normalize(&Expr::Sum(terms))
    }
}

/// A system of differential equations, each expression interpreted as `F = 0`.
#[derive(Debug, Clone)]
pub struct DESystem {
    pub space: JetSpace,
    pub eqs: Vec<Expr>,
}

impl DESystem {
    pub fn new(space: JetSpace, eqs: Vec<Expr>) -> Self {
        DESystem { space, eqs: eqs.iter().map(normalize).collect() }
    }

    /// Highest derivative order appearing in the system.
    pub fn order(&self) -> usize {
        self.eqs.iter().map(|e| e.max_jet_order()).max().unwrap_or(0)
    }
}

/// Inter-reduced solved form: leading jet coordinate mapped to a right-hand
/// side free of that derivative and of any of its derivatives.
#[derive(Debug, Clone)]
pub struct OrthonomicForm {
    pub space: JetSpace,
    pub rules: BTreeMap<JetCoord, Expr>,
}

impl OrthonomicForm {
    /// A jet is reducible when some rule leader divides it (same dependent
    /// variable, multi-index contained as a multiset).
    fn reducer_for(&self, j: &JetCoord) -> Option<(&JetCoord, &Expr)> {
        let mut best: Option<(&JetCoord, &Expr)> = None;
        for (lead, rhs) in &self.rules {
            if lead.dep == j.dep && multiset_contains(&j.idx, &lead.idx) {
                match best {
                    Some((b, _)) if self.space.cmp_jets(b, lead) != Ordering::Less => {}
                    _ => best = Some((lead, rhs)),
                }
            }
        }
        best
    }

    /// Reduce an expression modulo the rules and their lazily generated
    /// differential consequences until no reducible jet remains.
    pub fn reduce(&self, e: &Expr) -> Expr {
        let mut cur = normalize(e);
        loop {
            let mut jets = cur.jets();
            jets.sort_by(|a, b| self.space.cmp_jets(a, b));
            let target = jets
                .iter()
                .rev()
                .find_map(|j| self.reducer_for(j).map(|(l, r)| (j.clone(), l.clone(), r.clone())));
            let Some((jet, lead, rhs)) = target else {
                return cur;
            };
            let extra = multiset_difference(&jet.idx, &lead.idx);
            let mut repl = rhs;
            for v in extra {
                repl = self.space.total_derivative(&repl, &v);
            }
            let mut rules = BTreeMap::new();
            rules.insert(Expr::Jet(jet), repl);
            cur = substitute(&cur, &rules);
        }
    }
}

fn multiset_contains(big: &[String], small: &[String]) -> bool {
    multiset_diff_opt(big, small).is_some()
}

fn multiset_difference(big: &[String], small: &[String]) -> Vec<String> {
    multiset_diff_opt(big, small).expect("multiset not contained")
}

fn multiset_diff_opt(big: &[String], small: &[String]) -> Option<Vec<String>> {
    let mut rest = big.to_vec();
    for s in small {
        let pos = rest.iter().position(|r| r == s)?;
        rest.remove(pos);
    }
    Some(rest)
}

fn insert_equation(of: &mut OrthonomicForm, eq: &Expr, ctx: usize) -> Result<(), JetError> {
    let e = of.reduce(eq);
    if is_zero(&e) {
        return Ok(());
    }
    let mut jets = e.jets();
    jets.sort_by(|a, b| of.space.cmp_jets(a, b));
    let Some(lead) = jets.last().cloned() else {
        return Err(JetError::NotOrthonomic(format!(
            "equation {ctx} contains no derivative to solve for"
        )));
    };
    let lead_atom = Expr::Jet(lead.clone());
    let coeff = pdiff(&e, &lead_atom);
    if is_zero(&coeff) || coeff.contains(&lead_atom) {
        return Err(JetError::NotOrthonomic(format!(
            "leading derivative {lead_atom} does not occur linearly in equation {ctx}"
        )));
    }
    let mut zero_rules = BTreeMap::new();
    zero_rules.insert(lead_atom.clone(), Expr::zero());
    let rest = substitute(&e, &zero_rules);
    // lead = -rest / coeff
    let rhs = normalize(&Expr::Prod(vec![
        Expr::int(-1),
        rest,
        Expr::Pow(Box::new(coeff), -Rat::one()),
    ]));
    if rhs.contains(&lead_atom) {
        return Err(JetError::NotOrthonomic(format!(
            "leading derivative {lead_atom} cannot be isolated rationally"
        )));
    }
    of.rules.insert(lead, rhs);
    // a new rule can make an older leader reducible; re-solve such equations
    loop {
        let displaced = of
            .rules
            .keys()
            .find(|l| {
                of.rules.keys().any(|l2| {
                    *l2 != **l && l2.dep == l.dep && multiset_contains(&l.idx, &l2.idx)
                })
            })
            .cloned();
        let Some(d) = displaced else { break };
        let rhs_d = of.rules.remove(&d).unwrap();
        let eq_d = normalize(&Expr::Sum(vec![
            Expr::Jet(d),
            Expr::Prod(vec![Expr::int(-1), rhs_d]),
        ]));
        insert_equation(of, &eq_d, ctx)?;
    }
    // inter-reduce the right-hand sides against the enlarged set
    loop {
        let mut changed = false;
        let leads: Vec<JetCoord> = of.rules.keys().cloned().collect();
        for l in leads {
            let rhs = of.rules.remove(&l).unwrap();
            let reduced = of.reduce(&rhs);
            if reduced != rhs {
                changed = true;
            }
            of.rules.insert(l, reduced);
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

/// Reduce the system to inter-reduced orthonomic form by isolating each
/// equation's ranking-leading derivative. Only quasi-linear isolation is
/// implemented: the leading derivative must occur linearly with a nonzero
/// coefficient free of it.
pub fn orthonomic(sys: &DESystem) -> Result<OrthonomicForm, JetError> {
    let mut of = OrthonomicForm { space: sys.space.clone(), rules: BTreeMap::new() };
    for (k, eq) in sys.eqs.iter().enumerate() {
        insert_equation(&mut of, eq, k + 1)?;
    }
    // consistency: original equations must vanish modulo the rules
    for eq in &sys.eqs {
        if !is_zero(&of.reduce(eq)) {
            return Err(JetError::NotOrthonomic(
                "system is inconsistent with its solved form".into(),
            ));
        }
    }
    Ok(of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_document, parse_expr, prod_of, sum_of};

    fn heat() -> DESystem {
        let doc = parse_document("indep x, t; dep u(x,t); eq diff(u,t) = diff(u,x,x);").unwrap();
        DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs)
    }

    #[test]
    fn total_derivative_basics() {
        let space = JetSpace::new(["x", "t"], ["u"]);
        assert_eq!(space.total_derivative(&Expr::dep("u"), "x"), Expr::jet("u", ["x"]));
        let e = prod_of([Expr::indep("t"), Expr::jet("u", ["x"])]);
        assert_eq!(
            space.total_derivative(&e, "x"),
            prod_of([Expr::indep("t"), Expr::jet("u", ["x", "x"])])
        );
        let e = prod_of([Expr::indep("x"), Expr::dep("u")]);
        assert_eq!(
            space.total_derivative(&e, "t"),
            prod_of([Expr::indep("x"), Expr::jet("u", ["t"])])
        );
    }

    #[test]
    fn total_derivative_chain_rule_through_unknowns() {
        let space = JetSpace::new(["x", "t"], ["u"]);
        let f = Expr::unknown("f", ["x", "u"]);
        let got = space.total_derivative(&f, "x");
        let expected = sum_of([
            Expr::PDeriv(crate::expr::PartialDeriv::new("f", ["x", "u"], ["x"])),
            prod_of([
                Expr::PDeriv(crate::expr::PartialDeriv::new("f", ["x", "u"], ["u"])),
                Expr::jet("u", ["x"]),
            ]),
        ]);
        assert_eq!(got, expected);
    }

    #[test]
    fn heat_solved_for_uxx() {
        let of = orthonomic(&heat()).unwrap();
        let lead = crate::expr::JetCoord::new("u", ["x", "x"]);
        assert_eq!(of.rules.len(), 1);
        assert_eq!(of.rules[&lead], Expr::jet("u", ["t"]));
    }

    #[test]
    fn burgers_pair_solved_form() {
        let doc = parse_document(
            "indep x, t; dep u(x,t), v(x,t);
             eq diff(u,x) - v = 0;
             eq diff(u,t) + u*v - diff(v,x) = 0;",
        )
        .unwrap();
        let sys =
            DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs);
        let of = orthonomic(&sys).unwrap();
        assert_eq!(of.rules[&crate::expr::JetCoord::new("u", ["x"])], Expr::dep("v"));
        assert_eq!(
            of.rules[&crate::expr::JetCoord::new("v", ["x"])],
            parse_expr("diff(u,t) + u*v", &doc.decls).unwrap()
        );
    }

    #[test]
    fn non_quasilinear_is_rejected() {
        let doc = parse_document("indep x; dep u(x); eq diff(u,x)^2 - 1 = 0;").unwrap();
        let sys =
            DESystem::new(JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.eqs);
        assert!(matches!(orthonomic(&sys), Err(JetError::NotOrthonomic(_))));
    }

    #[test]
    fn reduce_simple_and_prolonged() {
        let of = orthonomic(&heat()).unwrap();
        assert_eq!(of.reduce(&Expr::jet("u", ["x", "x"])), Expr::jet("u", ["t"]));
        // u_xxx reduces through the differential consequence D_x(u_t)
        assert_eq!(of.reduce(&Expr::jet("u", ["x", "x", "x"])), Expr::jet("u", ["t", "x"]));
    }

    #[test]
    fn reduction_agrees_on_exact_solution() {
        // u = exp(t+x) solves the heat equation; evaluating any expression and
        // its reduction on the solution must agree.
        let of = orthonomic(&heat()).unwrap();
        let e = sum_of([
            Expr::jet("u", ["x", "x", "x"]),
            prod_of([Expr::indep("x"), Expr::jet("u", ["x", "x"])]),
        ]);
        let red = of.reduce(&e);
        let sol = Expr::elem(
            crate::expr::ElemTag::Exp,
            sum_of([Expr::indep("t"), Expr::indep("x")]),
        );
        let eval = |expr: &Expr| {
            let mut rules = BTreeMap::new();
            for j in expr.jets() {
                rules.insert(Expr::Jet(j.clone()), sol.clone());
            }
            rules.insert(Expr::dep("u"), sol.clone());
            substitute(expr, &rules)
        };
        assert_eq!(eval(&e), eval(&red));
    }

    #[test]
    fn generating_equations_reduce_to_zero() {
        let sys = heat();
        let of = orthonomic(&sys).unwrap();
        for eq in &sys.eqs {
            assert!(is_zero(&of.reduce(eq)));
        }
    }

    #[test]
    fn reduce_is_a_projection() {
        let of = orthonomic(&heat()).unwrap();
        let e = sum_of([
            Expr::jet("u", ["x", "x", "x", "x"]),
            prod_of([Expr::dep("u"), Expr::jet("u", ["x", "x"])]),
        ]);
        let once = of.reduce(&e);
        assert_eq!(of.reduce(&once), once);
    }

    #[test]
    fn total_derivatives_commute() {
        let space = JetSpace::new(["x", "t"], ["u"]);
        let e = prod_of([
            Expr::indep("x"),
            Expr::dep("u"),
            Expr::jet("u", ["x", "t"]),
        ]);
        let dxdt = space.total_derivative(&space.total_derivative(&e, "x"), "t");
        let dtdx = space.total_derivative(&space.total_derivative(&e, "t"), "x");
        assert_eq!(dxdt, dtdx);
    }
}
