//! Heuristic solver for linear overdetermined PDE systems.
//!
//! The staged loop mirrors the classical heuristic for determining systems:
//! solve short algebraic equations, integrate null-derivative equations,
//! split expansions in linearly independent functions, complete subsets to
//! involutive form (a Kolchin-Ritt-style cross-differentiation loop), solve
//! single-unknown ODE patterns, and separate unknowns with mismatched
//! argument lists. The loop repeats until the system is completely solved or
//! no additional simplification occurs.
//!
//! Unknowns solved along the way are expressed through fresh arbitrary
//! constants `c1, c2, ...` and arbitrary functions `F1(..), F2(..), ...`.
//! Whatever cannot be resolved is reported as an arbitrary-function part with
//! residual constraints, matching how symmetry packages report families like
//! `F1(t,x) D_u` with `F1_xx - F1_t = 0`.
//!
//! Set the `SYMKIT_TRACE` environment variable to trace substitutions and
//! step transitions on stderr.

use crate::expr::{
    is_zero, normalize, pdiff_multi, primitive, prod_of, substitute_unknown, sum_of, Expr, Rat,
    UnknownFn,
};
use crate::prolong::{DeterminingSystem, Generator};
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

/// Term-count thresholds of the staged heuristic; `n1` bounds the partial
/// involutive reduction, `n2..n3` the escalating ODE-integration window, and
/// `budget` the number of reduction steps a completion may spend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverParams {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub budget: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { n1: 5, n2: 5, n3: 8, budget: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The staged loop reached a fixpoint; leftovers are constraints on
    /// arbitrary functions.
    Complete,
    /// The step fuel ran out before a fixpoint was reached.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Indep,
    Dep,
}

/// Evolving partial solution of a linear determining system.
#[derive(Debug, Clone)]
pub struct SolutionState {
    /// Solved unknowns in terms of arbitrary constants and functions.
    pub found: BTreeMap<String, Expr>,
    /// Equations not yet used up by the solver (empty after packaging).
    pub remaining: Vec<Expr>,
    /// Residual constraints on the surviving arbitrary functions.
    pub constraints: Vec<Expr>,
    pub status: SolveStatus,
    /// Argument lists of every unknown, including fresh ones.
    pub unknown_args: BTreeMap<String, Vec<String>>,
    /// Base variables of the problem in declaration order.
    pub vars: Vec<(String, VarKind)>,
    /// Names of the surviving arbitrary constants, in introduction order.
    pub arbitrary_constants: Vec<String>,
    /// Names of the surviving arbitrary functions, in introduction order.
    pub arbitrary_functions: Vec<String>,
}

struct Solver {
    eqs: Vec<Expr>,
    found: BTreeMap<String, Expr>,
    active: BTreeSet<String>,
    original: Vec<String>,
    unknown_args: BTreeMap<String, Vec<String>>,
    vars: Vec<(String, VarKind)>,
    used_names: BTreeSet<String>,
    next_c: usize,
    next_f: usize,
    params: SolverParams,
}

/// One unknown-bearing atom of a linear term.
#[derive(Debug, Clone, PartialEq, Eq)]
struct UAtom {
    atom: Expr,
    name: String,
    idx: Vec<String>,
}

impl UAtom {
    fn order(&self) -> usize {
        self.idx.len()
    }
}

fn unknown_of(e: &Expr, active: &BTreeSet<String>) -> Option<UAtom> {
    match e {
        Expr::Unknown(u) if active.contains(&u.name) => {
            Some(UAtom { atom: e.clone(), name: u.name.clone(), idx: Vec::new() })
        }
        Expr::PDeriv(p) if active.contains(&p.name) => {
            Some(UAtom { atom: e.clone(), name: p.name.clone(), idx: p.idx.clone() })
        }
        _ => None,
    }
}

fn contains_active(e: &Expr, active: &BTreeSet<String>) -> bool {
    let mut found = false;
    e.walk(&mut |n| match n {
        Expr::Unknown(u) if active.contains(&u.name) => found = true,
        Expr::PDeriv(p) if active.contains(&p.name) => found = true,
        _ => {}
    });
    found
}

/// Decompose an equation as `sum coeff_k * atom_k + rest` with each `atom_k`
/// an active-unknown atom occurring linearly and all coefficients free of
/// active unknowns. `None` when the equation is not linear in the unknowns.
fn linear_decomposition(
    e: &Expr,
    active: &BTreeSet<String>,
) -> Option<(Vec<(UAtom, Expr)>, Expr)> {
    let mut coeffs: BTreeMap<Expr, (UAtom, Vec<Expr>)> = BTreeMap::new();
    let mut rest: Vec<Expr> = Vec::new();
    for term in e.summands() {
        let factors: Vec<Expr> = match term {
            Expr::Prod(fs) => fs.clone(),
            other => vec![other.clone()],
        };
        let mut hit: Option<UAtom> = None;
        let mut others: Vec<Expr> = Vec::new();
        for f in factors {
            let (base, exp) = match &f {
                Expr::Pow(b, q) => ((**b).clone(), q.clone()),
                o => (o.clone(), Rat::one()),
            };
            match unknown_of(&base, active) {
                Some(u) if exp.is_one() && hit.is_none() => hit = Some(u),
                Some(_) => return None,
                None => {
                    if contains_active(&base, active) {
                        return None;
                    }
                    others.push(f);
                }
            }
        }
        match hit {
            Some(u) => {
                coeffs
                    .entry(u.atom.clone())
                    .or_insert_with(|| (u, Vec::new()))
                    .1
                    .push(prod_of(others));
            }
            None => rest.push(term.clone()),
        }
    }
    let pairs = coeffs
        .into_values()
        .map(|(u, cs)| (u, sum_of(cs)))
        .filter(|(_, c)| !is_zero(c))
        .collect();
    Some((pairs, sum_of(rest)))
}

/// Ranking of unknown-derivative atoms: derivative order, then graded reverse
/// lexicographic multi-index over the variable order, then unknown name.
fn cmp_uatoms(a: &UAtom, b: &UAtom, vars: &[(String, VarKind)]) -> Ordering {
    match a.order().cmp(&b.order()) {
        Ordering::Equal => {}
        o => return o,
    }
    let counts = |idx: &[String]| -> Vec<usize> {
        vars.iter().map(|(v, _)| idx.iter().filter(|i| *i == v).count()).collect()
    };
    let (ca, cb) = (counts(&a.idx), counts(&b.idx));
    for k in (0..ca.len()).rev() {
        if ca[k] != cb[k] {
            return cb[k].cmp(&ca[k]);
        }
    }
    a.name.cmp(&b.name)
}

fn multiset_diff(big: &[String], small: &[String]) -> Option<Vec<String>> {
    let mut rest = big.to_vec();
    for s in small {
        let pos = rest.iter().position(|r| r == s)?;
        rest.remove(pos);
    }
    Some(rest)
}

/// Outcome of an involutive-form pass.
#[derive(Debug, Clone)]
pub struct InvolutiveOutcome {
    pub eqs: Vec<Expr>,
    pub changed: bool,
    pub budget_exceeded: bool,
}

/// Kolchin-Ritt-style completion of the subset of equations with at most
/// `max_terms` summands (all equations when `None`): bring equations into
/// solved form for their ranking-leading unknown derivative, reduce each
/// equation by the others together with their differential consequences, and
/// append every nonzero cross-derivative integrability condition, iterating
/// to a fixpoint. When the step budget is exhausted the input is returned
/// unchanged with the flag set.
pub fn involutive_reduce(
    eqs: &[Expr],
    active: &BTreeSet<String>,
    vars: &[(String, VarKind)],
    max_terms: Option<usize>,
    budget: usize,
) -> InvolutiveOutcome {
    let in_scope = |e: &Expr| max_terms.map_or(true, |m| e.term_count() <= m);
    let mut work: Vec<Expr> = eqs.iter().filter(|e| in_scope(e)).cloned().collect();
    let parked: Vec<Expr> = eqs.iter().filter(|e| !in_scope(e)).cloned().collect();
    let mut unsolvable: Vec<Expr> = Vec::new();
    let mut rules: Vec<(UAtom, Expr)> = Vec::new();
    let mut steps = 0usize;

    fn reduce_once(
        e: &Expr,
        rules: &[(UAtom, Expr)],
        active: &BTreeSet<String>,
        vars: &[(String, VarKind)],
        steps: &mut usize,
        budget: usize,
    ) -> Expr {
        let mut cur = normalize(e);
        'outer: loop {
            *steps += 1 + cur.term_count() / 8;
            if *steps > budget {
                return cur;
            }
            let mut atoms: Vec<UAtom> = Vec::new();
            cur.walk(&mut |n| {
                if let Some(u) = unknown_of(n, active) {
                    if !atoms.contains(&u) {
                        atoms.push(u);
                    }
                }
            });
            atoms.sort_by(|a, b| cmp_uatoms(a, b, vars));
            for a in atoms.iter().rev() {
                for (lead, rhs) in rules {
                    if lead.name == a.name {
                        if let Some(extra) = multiset_diff(&a.idx, &lead.idx) {
                            let repl = pdiff_multi(rhs, &extra);
                            let mut m = BTreeMap::new();
                            m.insert(a.atom.clone(), repl);
                            cur = crate::expr::substitute(&cur, &m);
                            continue 'outer;
                        }
                    }
                }
            }
            return cur;
        }
    }

    loop {
        steps += 1;
        if steps > budget {
            return InvolutiveOutcome { eqs: eqs.to_vec(), changed: false, budget_exceeded: true };
        }
        // smallest equation first
        work.sort_by(|a, b| cmp_eqs(b, a));
        let Some(eq) = work.pop() else { break };
        if eq.term_count() > 60 {
            unsolvable.push(eq);
            continue;
        }
        let e = reduce_once(&eq, &rules, active, vars, &mut steps, budget);
        if is_zero(&e) {
            continue;
        }
        let Some((pairs, _)) = linear_decomposition(&e, active) else {
            unsolvable.push(e);
            continue;
        };
        if pairs.is_empty() {
            unsolvable.push(e);
            continue;
        }
        let (lead, coeff) = pairs
            .iter()
            .max_by(|(a, _), (b, _)| cmp_uatoms(a, b, vars))
            .cloned()
            .unwrap();
        let mut zero = BTreeMap::new();
        zero.insert(lead.atom.clone(), Expr::zero());
        let rest = crate::expr::substitute(&e, &zero);
        let rhs = normalize(&Expr::Prod(vec![
            Expr::int(-1),
            rest,
            Expr::Pow(Box::new(coeff), -Rat::one()),
        ]));
        // existing rules whose leader became reducible go back to the queue
        let mut displaced: Vec<Expr> = Vec::new();
        rules.retain(|(l, r)| {
            let superseded =
                l.name == lead.name && multiset_diff(&l.idx, &lead.idx).is_some();
            if superseded {
                displaced.push(normalize(&Expr::Sum(vec![
                    l.atom.clone(),
                    Expr::Prod(vec![Expr::int(-1), r.clone()]),
                ])));
            }
            !superseded
        });
        work.extend(displaced);
        // cross-derivative consequences against rules for the same unknown
        for (l, r) in &rules {
            if l.name != lead.name {
                continue;
            }
            let join = multiset_join(&lead.idx, &l.idx);
            let da = multiset_diff(&join, &lead.idx).unwrap();
            let db = multiset_diff(&join, &l.idx).unwrap();
            if da.is_empty() || db.is_empty() {
                continue;
            }
            steps += da.len() + db.len();
            let cons = clear_denominators(&Expr::Sum(vec![
                pdiff_multi(&rhs, &da),
                Expr::Prod(vec![Expr::int(-1), pdiff_multi(r, &db)]),
            ]));
            if !is_zero(&cons) {
                work.push(cons);
            }
        }
        rules.push((lead, rhs));
    }

    let mut out: Vec<Expr> = Vec::new();
    for eq in rules
        .iter()
        .map(|(l, r)| {
            Expr::Sum(vec![l.atom.clone(), Expr::Prod(vec![Expr::int(-1), r.clone()])])
        })
        .chain(unsolvable.into_iter())
        .chain(parked)
    {
        let (_, prim) = primitive(&clear_denominators(&eq));
        if !is_zero(&prim) && !out.contains(&prim) {
            out.push(prim);
        }
    }
    out.sort_by(cmp_eqs);
    let mut input_sorted: Vec<Expr> = eqs.to_vec();
    input_sorted.sort_by(cmp_eqs);
    let changed = out != input_sorted;
    InvolutiveOutcome { eqs: out, changed, budget_exceeded: false }
}

fn multiset_join(a: &[String], b: &[String]) -> Vec<String> {
    let mut join = a.to_vec();
    let mut names: Vec<&String> = b.iter().collect();
    names.dedup();
    for v in b {
        let need = b.iter().filter(|w| *w == v).count();
        let have = join.iter().filter(|w| *w == v).count();
        for _ in have..need {
            join.push(v.clone());
        }
        let _ = &names;
    }
    join.sort();
    join
}

/// Multiply an equation by the least common multiple of the denominators of
/// its terms, turning rational-function equations into polynomial ones.
/// Denominators arise from isolating unknowns with non-constant coefficients
/// and are formally nonzero, so this preserves the solution set.
pub fn clear_denominators(e: &Expr) -> Expr {
    let e = normalize(e);
    let mut need: BTreeMap<Expr, Rat> = BTreeMap::new();
    for term in e.summands() {
        let factors: Vec<&Expr> = match term {
            Expr::Prod(fs) => fs.iter().collect(),
            o => vec![o],
        };
        for f in factors {
            if let Expr::Pow(b, q) = f {
                if q.is_negative() {
                    let entry = need.entry((**b).clone()).or_insert_with(Rat::zero);
                    if -q.clone() > *entry {
                        *entry = -q.clone();
                    }
                }
            }
        }
    }
    if need.is_empty() {
        return e;
    }
    let mut factors = vec![e];
    for (b, q) in need {
        factors.push(Expr::Pow(Box::new(b), q));
    }
    normalize(&Expr::Prod(factors))
}

fn cmp_eqs(a: &Expr, b: &Expr) -> Ordering {
    let (ta, tb) = (a.term_count(), b.term_count());
    ta.cmp(&tb).then_with(|| max_pd_order(a).cmp(&max_pd_order(b))).then_with(|| a.cmp(b))
}

fn max_pd_order(e: &Expr) -> usize {
    let mut k = 0;
    e.walk(&mut |n| {
        if let Expr::PDeriv(p) = n {
            k = k.max(p.idx.len());
        }
    });
    k
}

/// Split an equation as an expansion in linearly independent functions of the
/// variables that are not arguments of any unknown occurring in it; returns
/// the coefficient equations, or `None` when no splitting variable exists or
/// an atom mixes both sides.
pub fn li_split_equation(
    e: &Expr,
    active: &BTreeSet<String>,
    unknown_args: &BTreeMap<String, Vec<String>>,
    vars: &[(String, VarKind)],
) -> Option<Vec<Expr>> {
    let mut present: BTreeSet<String> = BTreeSet::new();
    e.walk(&mut |n| match n {
        Expr::Unknown(u) if active.contains(&u.name) => {
            present.insert(u.name.clone());
        }
        Expr::PDeriv(p) if active.contains(&p.name) => {
            present.insert(p.name.clone());
        }
        _ => {}
    });
    if present.is_empty() {
        return None;
    }
    let mut args: BTreeSet<&str> = BTreeSet::new();
    for u in &present {
        if let Some(a) = unknown_args.get(u) {
            args.extend(a.iter().map(|s| s.as_str()));
        }
    }
    let split_vars: BTreeSet<&str> =
        vars.iter().map(|(v, _)| v.as_str()).filter(|v| !args.contains(v)).collect();
    if split_vars.is_empty() && !has_jets(e) {
        return None;
    }

    let var_class = |name: &str| split_vars.contains(name);
    let atom_class = |base: &Expr| -> Option<bool> {
        // Some(true): splitting atom, Some(false): coefficient atom, None: mixed
        match base {
            Expr::Jet(_) => Some(true),
            Expr::Indep(v) | Expr::Dep(v) => Some(var_class(v)),
            other => {
                let mut has_split = false;
                let mut has_coeff = false;
                other.walk(&mut |n| match n {
                    Expr::Jet(_) => has_split = true,
                    Expr::Indep(v) | Expr::Dep(v) => {
                        if var_class(v) {
                            has_split = true;
                        } else {
                            has_coeff = true;
                        }
                    }
                    Expr::Unknown(_) | Expr::PDeriv(_) => has_coeff = true,
                    Expr::Param(_) => has_coeff = true,
                    _ => {}
                });
                match (has_split, has_coeff) {
                    (true, false) => Some(true),
                    (true, true) => None,
                    (false, _) => Some(false),
                }
            }
        }
    };

    let classify = |base: &Expr| -> Result<crate::expr::split::AtomClass, crate::expr::NonPolynomial> {
        match atom_class(base) {
            Some(true) => Ok(crate::expr::split::AtomClass::Split),
            Some(false) => Ok(crate::expr::split::AtomClass::Coeff),
            None => Err(crate::expr::NonPolynomial { context: format!("mixed atom '{base}'") }),
        }
    };
    let pairs = crate::expr::split::partition_terms(e, &classify).ok()?;
    if pairs.len() < 2 {
        // a single group only counts when it strips a nontrivial monomial
        match pairs.first() {
            Some((m, _)) if *m != Expr::one() => {}
            _ => return None,
        }
    }
    Some(pairs.into_iter().map(|(_, c)| c).collect())
}

fn has_jets(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| {
        if matches!(n, Expr::Jet(_)) {
            found = true;
        }
    });
    found
}

/// Antiderivative of `e` with respect to the variable named `v`, covering
/// polynomials in `v` and `poly(v) * exp(linear in v)` shapes; `None` when the
/// pattern is outside this fragment.
fn integrate_in(e: &Expr, v: &str, vkind: VarKind) -> Option<Expr> {
    let var = match vkind {
        VarKind::Indep => Expr::indep(v),
        VarKind::Dep => Expr::dep(v),
    };
    let e = normalize(e);
    let mut out: Vec<Expr> = Vec::new();
    for term in e.summands() {
        let factors: Vec<Expr> = match term {
            Expr::Prod(fs) => fs.clone(),
            o => vec![o.clone()],
        };
        let mut vpow = Rat::zero();
        let mut exp_arg: Option<Expr> = None;
        let mut rest: Vec<Expr> = Vec::new();
        for f in &factors {
            let (base, q) = match f {
                Expr::Pow(b, q) => ((**b).clone(), q.clone()),
                o => (o.clone(), Rat::one()),
            };
            if base == var {
                vpow += q;
                continue;
            }
            let depends = base.contains(&var);
            if !depends {
                rest.push(f.clone());
                continue;
            }
            match (&base, exp_arg.is_none(), q.is_one()) {
                (Expr::Elem(crate::expr::ElemTag::Exp, arg), true, true) => {
                    exp_arg = Some((**arg).clone());
                }
                _ => return None,
            }
        }
        let rest = prod_of(rest);
        match exp_arg {
            None => {
                if vpow == -Rat::one() {
                    out.push(prod_of([rest, Expr::elem(crate::expr::ElemTag::Ln, var.clone())]));
                } else {
                    let new_pow = vpow + Rat::one();
                    out.push(prod_of([
                        rest,
                        Expr::Rat(Rat::one() / new_pow.clone()),
                        Expr::pow(var.clone(), new_pow),
                    ]));
                }
            }
            Some(w) => {
                // w = c*v + d with c, d free of v
                let c = crate::expr::pdiff(&w, &var);
                if c.contains(&var) || is_zero(&c) {
                    return None;
                }
                if !vpow.is_integer() || vpow.is_negative() {
                    return None;
                }
                let k = num_traits::ToPrimitive::to_i64(vpow.numer())? as u32;
                // I(k) = v^k e^w / c - (k/c) I(k-1); I(0) = e^w / c
                let ew = Expr::elem(crate::expr::ElemTag::Exp, w.clone());
                let inv_c = Expr::pow(c.clone(), -Rat::one());
                let mut acc = prod_of([ew.clone(), inv_c.clone()]);
                for kk in 1..=k {
                    acc = sum_of([
                        prod_of([
                            Expr::powi(var.clone(), kk as i64),
                            ew.clone(),
                            inv_c.clone(),
                        ]),
                        prod_of([
                            Expr::int(-(kk as i64)),
                            inv_c.clone(),
                            acc,
                        ]),
                    ]);
                }
                out.push(prod_of([rest, acc]));
            }
        }
    }
    Some(sum_of(out))
}

/// Particular solution of `p' + a p = b` with `a` free of `v` and `b`
/// polynomial in `v`: matched coefficients, highest degree first.
fn poly_particular(b: &Expr, a: &Expr, vex: &Expr) -> Option<Expr> {
    // coefficients of b as a polynomial in v
    let b = normalize(b);
    let mut coeffs: BTreeMap<i64, Vec<Expr>> = BTreeMap::new();
    for term in b.summands() {
        let factors: Vec<Expr> = match term {
            Expr::Prod(fs) => fs.clone(),
            o => vec![o.clone()],
        };
        let mut deg: Option<i64> = Some(0);
        let mut rest: Vec<Expr> = Vec::new();
        for f in factors {
            let (base, q) = match &f {
                Expr::Pow(bx, qx) => ((**bx).clone(), qx.clone()),
                o => (o.clone(), Rat::one()),
            };
            if base == *vex {
                if !q.is_integer() || q.is_negative() {
                    return None;
                }
                deg = num_traits::ToPrimitive::to_i64(q.numer());
            } else {
                if base.contains(vex) {
                    return None;
                }
                rest.push(f);
            }
        }
        coeffs.entry(deg?).or_default().push(prod_of(rest));
    }
    let coeff = |k: i64| -> Expr {
        coeffs.get(&k).map(|v| sum_of(v.clone())).unwrap_or_else(Expr::zero)
    };
    let degree = *coeffs.keys().max().unwrap_or(&0);
    // q_k a = b_k - (k+1) q_{k+1}
    let inv_a = Expr::Pow(Box::new(a.clone()), -Rat::one());
    let mut q: BTreeMap<i64, Expr> = BTreeMap::new();
    for k in (0..=degree).rev() {
        let upper = q.get(&(k + 1)).cloned().unwrap_or_else(Expr::zero);
        let rhs = sum_of([
            coeff(k),
            prod_of([Expr::int(-(k + 1)), upper]),
        ]);
        q.insert(k, prod_of([rhs, inv_a.clone()]));
    }
    Some(sum_of(q.into_iter().map(|(k, c)| prod_of([c, Expr::powi(vex.clone(), k)]))))
}

impl Solver {
    fn new(sys: &DeterminingSystem, params: SolverParams) -> Solver {
        let mut vars: Vec<(String, VarKind)> = Vec::new();
        for x in &sys.space.indep {
            vars.push((x.clone(), VarKind::Indep));
        }
        for u in &sys.space.dep {
            vars.push((u.clone(), VarKind::Dep));
        }
        let mut unknown_args = BTreeMap::new();
        let mut active = BTreeSet::new();
        let mut original = Vec::new();
        let mut used_names: BTreeSet<String> =
            vars.iter().map(|(v, _)| v.clone()).collect();
        for f in &sys.unknowns {
            unknown_args.insert(f.name.clone(), f.args.clone());
            active.insert(f.name.clone());
            original.push(f.name.clone());
            used_names.insert(f.name.clone());
        }
        let mut solver = Solver {
            eqs: Vec::new(),
            found: BTreeMap::new(),
            active,
            original,
            unknown_args,
            vars,
            used_names,
            next_c: 1,
            next_f: 1,
            params,
        };
        solver.set_eqs(sys.eqs.clone());
        solver
    }

    fn set_eqs(&mut self, eqs: Vec<Expr>) {
        let mut out: Vec<Expr> = Vec::new();
        for e in eqs {
            let (_, prim) = primitive(&clear_denominators(&e));
            if !is_zero(&prim) && !out.contains(&prim) {
                out.push(prim);
            }
        }
        out.sort_by(cmp_eqs);
        self.eqs = out;
    }

    fn var_expr(&self, name: &str) -> Expr {
        match self.vars.iter().find(|(v, _)| v == name) {
            Some((_, VarKind::Indep)) => Expr::indep(name),
            Some((_, VarKind::Dep)) => Expr::dep(name),
            None => Expr::indep(name),
        }
    }

    fn var_kind(&self, name: &str) -> VarKind {
        match self.vars.iter().find(|(v, _)| v == name) {
            Some((_, k)) => *k,
            None => VarKind::Indep,
        }
    }

    fn fresh(&mut self, args: &[String]) -> Expr {
        loop {
            let name = if args.is_empty() {
                let n = format!("c{}", self.next_c);
                self.next_c += 1;
                n
            } else {
                let n = format!("F{}", self.next_f);
                self.next_f += 1;
                n
            };
            if self.used_names.contains(&name) {
                continue;
            }
            self.used_names.insert(name.clone());
            self.unknown_args.insert(name.clone(), args.to_vec());
            self.active.insert(name.clone());
            return Expr::Unknown(UnknownFn::new(name, args.to_vec()));
        }
    }

    fn trace(&self, msg: impl FnOnce() -> String) {
        if std::env::var_os("SYMKIT_TRACE").is_some() {
            eprintln!("[solve] {}", msg());
        }
    }

    /// Record `name := value` and substitute it everywhere.
    fn apply_subst(&mut self, name: &str, value: &Expr) {
        self.trace(|| format!("{name} := {value}"));
        let value = normalize(value);
        self.active.remove(name);
        for v in self.found.values_mut() {
            *v = substitute_unknown(v, name, &value);
        }
        self.found.insert(name.to_string(), value.clone());
        let eqs =
            self.eqs.iter().map(|e| substitute_unknown(e, name, &value)).collect::<Vec<_>>();
        self.set_eqs(eqs);
    }

    /// A solved value may only involve variables that are arguments of the
    /// unknown it replaces.
    fn value_fits(&self, name: &str, value: &Expr) -> bool {
        let args = &self.unknown_args[name];
        let mut ok = true;
        value.walk(&mut |n| {
            let check = |vs: &mut dyn Iterator<Item = &str>, ok: &mut bool| {
                for v in vs {
                    if self.vars.iter().any(|(w, _)| w == v) && !args.iter().any(|a| a == v) {
                        *ok = false;
                    }
                }
            };
            match n {
                Expr::Indep(v) | Expr::Dep(v) => {
                    check(&mut std::iter::once(v.as_str()), &mut ok)
                }
                Expr::Unknown(u) => {
                    check(&mut u.args.iter().map(|s| s.as_str()), &mut ok)
                }
                Expr::PDeriv(pd) => {
                    check(&mut pd.args.iter().map(|s| s.as_str()), &mut ok)
                }
                _ => {}
            }
        });
        ok
    }

    fn occurrences(&self, name: &str) -> usize {
        let mut n = 0;
        for e in &self.eqs {
            e.walk(&mut |node| match node {
                Expr::Unknown(u) if u.name == name => n += 1,
                Expr::PDeriv(p) if p.name == name => n += 1,
                _ => {}
            });
        }
        n
    }

    /// Steps 1, 3 and 15: solve algebraic (derivative-free) equations, one
    /// unknown per equation, fewest occurrences first.
    fn step_algebraic(&mut self, max_terms: Option<usize>, only_original: bool) -> bool {
        let mut any = false;
        'scan: loop {
            for eq in self.eqs.clone() {
                if let Some(m) = max_terms {
                    if eq.term_count() > m {
                        continue;
                    }
                }
                let Some((pairs, _)) = linear_decomposition(&eq, &self.active) else {
                    continue;
                };
                // a candidate occurs undifferentiated and none of its own
                // derivatives appear; derivatives of other unknowns are just
                // inhomogeneity
                let mut candidates: Vec<&(UAtom, Expr)> = pairs
                    .iter()
                    .filter(|(u, _)| {
                        u.order() == 0
                            && !pairs
                                .iter()
                                .any(|(w, _)| w.name == u.name && w.order() > 0)
                            && (!only_original
                                || self.original.iter().any(|o| o == &u.name))
                    })
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                candidates.sort_by_key(|(u, c)| {
                    (self.occurrences(&u.name), !c.is_rat(), u.atom.clone())
                });
                for (target, coeff) in candidates {
                    let mut zero = BTreeMap::new();
                    zero.insert(target.atom.clone(), Expr::zero());
                    let rest = crate::expr::substitute(&eq, &zero);
                    let value = normalize(&Expr::Prod(vec![
                        Expr::int(-1),
                        rest,
                        Expr::Pow(Box::new(coeff.clone()), -Rat::one()),
                    ]));
                    if !self.value_fits(&target.name, &value) {
                        continue;
                    }
                    self.apply_subst(&target.name.clone(), &value);
                    any = true;
                    continue 'scan;
                }
            }
            return any;
        }
    }

    /// Step 2: general solution of a single vanishing partial derivative,
    /// `d^k f / dv1..dvk = 0`.
    fn step_null_derivative(&mut self) -> bool {
        let mut any = false;
        'scan: loop {
            for eq in self.eqs.clone() {
                if eq.term_count() != 1 {
                    continue;
                }
                let Some((pairs, rest)) = linear_decomposition(&eq, &self.active) else {
                    continue;
                };
                if pairs.len() != 1 || !is_zero(&rest) {
                    continue;
                }
                let (u, _) = &pairs[0];
                if u.order() == 0 {
                    continue;
                }
                let args = self.unknown_args[&u.name].clone();
                let mut terms: Vec<Expr> = Vec::new();
                let mut seen: Vec<String> = Vec::new();
                for v in &u.idx {
                    if seen.contains(v) {
                        continue;
                    }
                    seen.push(v.clone());
                    let count = u.idx.iter().filter(|w| *w == v).count();
                    let others: Vec<String> =
                        args.iter().filter(|a| *a != v).cloned().collect();
                    for d in 0..count {
                        let head = self.fresh(&others);
                        terms.push(prod_of([
                            Expr::powi(self.var_expr(v), d as i64),
                            head,
                        ]));
                    }
                }
                let name = u.name.clone();
                self.apply_subst(&name, &sum_of(terms));
                any = true;
                continue 'scan;
            }
            return any;
        }
    }

    /// Steps 5 and 11: equate coefficients of linearly independent functions.
    fn step_li_split(&mut self) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            let mut next: Vec<Expr> = Vec::new();
            for eq in &self.eqs {
                match li_split_equation(eq, &self.active, &self.unknown_args, &self.vars) {
                    Some(parts) => {
                        changed = true;
                        next.extend(parts);
                    }
                    None => next.push(eq.clone()),
                }
            }
            if !changed {
                return any;
            }
            any = true;
            self.set_eqs(next);
        }
    }

    /// Steps 4, 7 and 16: involutive completion; partial passes restrict to
    /// equations with at most `max_terms` summands.
    fn step_involutive(&mut self, max_terms: Option<usize>) -> bool {
        let out =
            involutive_reduce(&self.eqs, &self.active, &self.vars, max_terms, self.params.budget);
        if out.budget_exceeded {
            return false;
        }
        let changed = out.changed;
        if changed {
            self.set_eqs(out.eqs);
        }
        changed
    }

    /// An equation that can be integrated as a linear ODE in one of the
    /// unknowns with respect to a single variable. Other unknowns may appear
    /// as inhomogeneity provided they do not depend on the integration
    /// variable; integration constants are fresh arbitrary functions of the
    /// remaining arguments.
    fn try_integrate(&mut self, eq: &Expr) -> Option<(String, Expr)> {
        let (pairs, rest) = linear_decomposition(eq, &self.active)?;
        let mut names: Vec<String> = Vec::new();
        for (u, _) in &pairs {
            if !names.contains(&u.name) {
                names.push(u.name.clone());
            }
        }
        names.sort();
        'cand: for name in names {
            let f_pairs: Vec<(UAtom, Expr)> =
                pairs.iter().filter(|(u, _)| u.name == name).cloned().collect();
            let others: Vec<(UAtom, Expr)> =
                pairs.iter().filter(|(u, _)| u.name != name).cloned().collect();
            // derivatives of f must be pure powers of a single variable
            let mut dvar: Option<String> = None;
            let mut max_order = 0usize;
            for (u, _) in &f_pairs {
                for v in &u.idx {
                    match &dvar {
                        None => dvar = Some(v.clone()),
                        Some(w) if w == v => {}
                        Some(_) => continue 'cand,
                    }
                }
                max_order = max_order.max(u.order());
            }
            let Some(v) = dvar else { continue };
            if max_order == 0 {
                continue;
            }
            // other unknowns act as constants only if free of v
            let mut inhom: Vec<Expr> = vec![rest.clone()];
            let mut ok = true;
            for (u, c) in &others {
                if self.unknown_args[&u.name].iter().any(|a| a == &v) {
                    ok = false;
                    break;
                }
                inhom.push(prod_of([c.clone(), u.atom.clone()]));
            }
            if !ok {
                continue;
            }
            let inhom = sum_of(inhom);
            if !self.value_fits(&name, &inhom) {
                continue;
            }
            let vkind = self.var_kind(&v);
            let vex = self.var_expr(&v);
            let args = self.unknown_args[&name].clone();
            let others_args: Vec<String> =
                args.iter().filter(|a| **a != v).cloned().collect();
            let coeff_of = |k: usize| -> Expr {
                f_pairs
                    .iter()
                    .find(|(u, _)| u.order() == k)
                    .map(|(_, c)| c.clone())
                    .unwrap_or_else(Expr::zero)
            };
            let lead = coeff_of(max_order);
            let a0 = coeff_of(0);
            let pure = (1..max_order).all(|k| is_zero(&coeff_of(k)));

            if pure && is_zero(&a0) {
                // d^K f / dv^K = g
                let g = normalize(&Expr::Prod(vec![
                    Expr::int(-1),
                    inhom,
                    Expr::Pow(Box::new(lead), -Rat::one()),
                ]));
                let mut particular = g;
                let mut integrable = true;
                for _ in 0..max_order {
                    match integrate_in(&particular, &v, vkind) {
                        Some(p) => particular = p,
                        None => {
                            integrable = false;
                            break;
                        }
                    }
                }
                if !integrable {
                    continue;
                }
                let mut terms = vec![particular];
                for d in 0..max_order {
                    let head = self.fresh(&others_args);
                    terms.push(prod_of([Expr::powi(vex.clone(), d as i64), head]));
                }
                return Some((name, sum_of(terms)));
            }
            if max_order == 1 && !is_zero(&a0) {
                // f' + a f = b
                let a = normalize(&Expr::Prod(vec![
                    a0,
                    Expr::Pow(Box::new(lead.clone()), -Rat::one()),
                ]));
                let b = normalize(&Expr::Prod(vec![
                    Expr::int(-1),
                    inhom,
                    Expr::Pow(Box::new(lead), -Rat::one()),
                ]));
                if !a.contains(&vex) {
                    // particular solution by polynomial coefficient matching
                    // (keeps exp atoms out of the particular part), homogeneous
                    // part F * exp(-a v)
                    let particular = if is_zero(&b) {
                        Some(Expr::zero())
                    } else {
                        poly_particular(&b, &a, &vex)
                    };
                    let Some(particular) = particular else { continue };
                    let head = self.fresh(&others_args);
                    let hom = prod_of([
                        head,
                        Expr::elem(
                            crate::expr::ElemTag::Exp,
                            prod_of([Expr::int(-1), a.clone(), vex.clone()]),
                        ),
                    ]);
                    return Some((name, sum_of([particular, hom])));
                }
                if is_zero(&b) {
                    // f' = -a(v) f with polynomial a
                    let Some(p) = integrate_in(&a, &v, vkind) else { continue };
                    let head = self.fresh(&others_args);
                    return Some((
                        name,
                        prod_of([
                            head,
                            Expr::elem(
                                crate::expr::ElemTag::Exp,
                                prod_of([Expr::int(-1), p]),
                            ),
                        ]),
                    ));
                }
            }
        }
        None
    }

    /// Steps 8, 14 and 18: integrate ODE-shaped equations with at most `n2`
    /// terms, escalating the bound by 3 up to `n3` when nothing fits.
    fn step_odes(&mut self) -> bool {
        let mut bound = self.params.n2;
        loop {
            let mut any = false;
            'scan: loop {
                for eq in self.eqs.clone() {
                    if eq.term_count() > bound {
                        continue;
                    }
                    if let Some((name, value)) = self.try_integrate(&eq) {
                        self.apply_subst(&name, &value);
                        any = true;
                        continue 'scan;
                    }
                }
                break;
            }
            if any {
                return true;
            }
            if bound >= self.params.n3 {
                return false;
            }
            bound = (bound + 3).min(self.params.n3);
        }
    }

    /// Step 9: solve one ODE of any size.
    fn step_one_ode(&mut self) -> bool {
        for eq in self.eqs.clone() {
            if let Some((name, value)) = self.try_integrate(&eq) {
                self.apply_subst(&name, &value);
                return true;
            }
        }
        false
    }

    /// Step 17: `f1(x1,x2) = f2(x1,x3)` forces both to be functions of the
    /// common arguments.
    fn step_separate_args(&mut self) -> bool {
        for eq in self.eqs.clone() {
            if eq.term_count() != 2 {
                continue;
            }
            let Some((pairs, rest)) = linear_decomposition(&eq, &self.active) else {
                continue;
            };
            if !is_zero(&rest) || pairs.len() != 2 {
                continue;
            }
            let ((u1, c1), (u2, c2)) = (pairs[0].clone(), pairs[1].clone());
            if u1.order() != 0 || u2.order() != 0 || u1.name == u2.name {
                continue;
            }
            let (Some(r1), Some(r2)) = (c1.as_rat(), c2.as_rat()) else {
                continue;
            };
            let args1 = self.unknown_args[&u1.name].clone();
            let args2 = self.unknown_args[&u2.name].clone();
            let common: Vec<String> =
                args1.iter().filter(|a| args2.contains(a)).cloned().collect();
            if common.len() == args1.len() || common.len() == args2.len() {
                continue;
            }
            let f3 = self.fresh(&common);
            // c1 f1 + c2 f2 = 0 with f1 = f3  =>  f2 = -(c1/c2) f3
            let scale = Expr::Rat(-(r1.clone() / r2.clone()));
            let n1 = u1.name.clone();
            let n2 = u2.name.clone();
            self.apply_subst(&n1, &f3);
            self.apply_subst(&n2, &prod_of([scale, f3.clone()]));
            return true;
        }
        false
    }

    /// Merge unknowns with identical argument lists that occur in an
    /// equation only through one fixed rational combination: substituting
    /// `f_ref := S - sum mu_i f_i` (an invertible change of unknowns) turns
    /// the equation into a single-unknown one that the other steps can
    /// integrate.
    fn step_combine_unknowns(&mut self) -> bool {
        'eqs: for eq in self.eqs.clone() {
            let Some((pairs, _)) = linear_decomposition(&eq, &self.active) else {
                continue;
            };
            let mut names: Vec<String> = Vec::new();
            for (u, _) in &pairs {
                if !names.contains(&u.name) {
                    names.push(u.name.clone());
                }
            }
            if names.len() < 2 {
                continue;
            }
            // group names by identical argument lists
            let mut groups: BTreeMap<Vec<String>, Vec<String>> = BTreeMap::new();
            for n in &names {
                groups.entry(self.unknown_args[n].clone()).or_default().push(n.clone());
            }
            for (args, group) in groups {
                if group.len() < 2 {
                    continue;
                }
                // require a differential occurrence; plain algebraic mixes are
                // the algebraic steps' business
                let has_deriv = pairs
                    .iter()
                    .any(|(u, _)| group.contains(&u.name) && u.order() > 0);
                if !has_deriv {
                    continue;
                }
                let reference = &group[0];
                let coeff_of = |name: &str, idx: &[String]| -> Expr {
                    pairs
                        .iter()
                        .find(|(u, _)| u.name == name && u.idx == idx)
                        .map(|(_, c)| c.clone())
                        .unwrap_or_else(Expr::zero)
                };
                let mut idxs: Vec<Vec<String>> = Vec::new();
                for (u, _) in &pairs {
                    if group.contains(&u.name) && !idxs.contains(&u.idx) {
                        idxs.push(u.idx.clone());
                    }
                }
                // one rational ratio per member, consistent across indices
                let mut mus: Vec<Rat> = Vec::new();
                let mut consistent = true;
                for member in &group[1..] {
                    let mut mu: Option<Rat> = None;
                    for idx in &idxs {
                        let cr = coeff_of(reference, idx);
                        let cm = coeff_of(member, idx);
                        match (is_zero(&cr), is_zero(&cm)) {
                            (true, true) => {}
                            (true, false) | (false, true) => {
                                consistent = false;
                                break;
                            }
                            (false, false) => {
                                let ratio = normalize(&Expr::Prod(vec![
                                    cm,
                                    Expr::Pow(Box::new(cr), -Rat::one()),
                                ]));
                                match (ratio.as_rat(), &mu) {
                                    (Some(q), None) => mu = Some(q.clone()),
                                    (Some(q), Some(m)) if q == m => {}
                                    _ => {
                                        consistent = false;
                                        break;
                                    }
                                }
                            }
                        }
                    }
                    match mu {
                        Some(m) if consistent => mus.push(m),
                        _ => {
                            consistent = false;
                            break;
                        }
                    }
                }
                if !consistent {
                    continue;
                }
                let fresh = self.fresh(&args);
                let mut value = vec![fresh];
                for (member, mu) in group[1..].iter().zip(&mus) {
                    value.push(prod_of([
                        Expr::Rat(-mu.clone()),
                        Expr::Unknown(UnknownFn::new(member.clone(), args.clone())),
                    ]));
                }
                let reference = reference.clone();
                self.apply_subst(&reference, &sum_of(value));
                return true;
            }
            continue 'eqs;
        }
        false
    }

    fn fingerprint(&self) -> (Vec<Expr>, BTreeSet<String>) {
        (self.eqs.clone(), self.active.clone())
    }

    /// The staged pass with its goto structure; fuel bounds the number of
    /// program-counter transitions.
    fn run(&mut self) -> SolveStatus {
        let mut fuel: usize = 10_000;
        let mut last = None;
        let mut pc = 1usize;
        loop {
            if fuel == 0 {
                return SolveStatus::Partial;
            }
            fuel -= 1;
            self.trace(|| {
                format!(
                    "pc={pc} eqs={} terms={}",
                    self.eqs.len(),
                    self.eqs.iter().map(|e| e.term_count()).sum::<usize>()
                )
            });
            match pc {
                1 => {
                    self.step_algebraic(Some(2), false);
                    pc = 2;
                }
                2 => {
                    self.step_null_derivative();
                    pc = 3;
                }
                3 => {
                    self.step_algebraic(None, true);
                    pc = 4;
                }
                4 => {
                    self.step_involutive(Some(self.params.n1));
                    pc = 5;
                }
                5 => {
                    self.step_li_split();
                    pc = 6;
                }
                6 => {
                    pc = if self.step_null_derivative() { 10 } else { 7 };
                }
                7 => {
                    pc = if self.step_involutive(None) { 10 } else { 8 };
                }
                8 => {
                    pc = if self.step_odes() { 10 } else { 9 };
                }
                9 => {
                    pc = if self.step_one_ode() { 1 } else { 10 };
                }
                10 => {
                    self.step_algebraic(Some(2), false);
                    pc = 11;
                }
                11 => {
                    self.step_li_split();
                    pc = 12;
                }
                12 => {
                    self.step_algebraic(Some(2), false);
                    pc = 13;
                }
                13 => {
                    self.step_null_derivative();
                    pc = 14;
                }
                14 => {
                    self.step_odes();
                    pc = 15;
                }
                15 => {
                    pc = if self.step_algebraic(None, false) { 10 } else { 16 };
                }
                16 => {
                    pc = if self.step_involutive(None) { 10 } else { 17 };
                }
                17 => {
                    pc = if self.step_separate_args() || self.step_combine_unknowns() {
                        10
                    } else {
                        18
                    };
                }
                18 => {
                    self.step_odes();
                    pc = 19;
                }
                _ => {
                    if self.eqs.is_empty() {
                        return SolveStatus::Complete;
                    }
                    let fp = self.fingerprint();
                    if last.as_ref() == Some(&fp) {
                        return SolveStatus::Complete;
                    }
                    last = Some(fp);
                    pc = 1;
                }
            }
        }
    }

    /// Freeze the final state: unresolved unknowns become arbitrary functions
    /// (renumbered `c1../F1..` in a canonical order), leftover equations
    /// become constraints on them.
    fn package(mut self, status: SolveStatus) -> SolutionState {
        for orig in self.original.clone() {
            if !self.found.contains_key(&orig) {
                let args = self.unknown_args[&orig].clone();
                let fresh = self.fresh(&args);
                self.apply_subst(&orig, &fresh);
            }
        }
        // survivors in deterministic first-occurrence order
        let mut order: Vec<String> = Vec::new();
        let visit = |e: &Expr, order: &mut Vec<String>| {
            e.walk(&mut |n| {
                let name = match n {
                    Expr::Unknown(u) => Some(&u.name),
                    Expr::PDeriv(p) => Some(&p.name),
                    _ => None,
                };
                if let Some(name) = name {
                    if self.active.contains(name) && !order.iter().any(|o| o == name) {
                        order.push(name.clone());
                    }
                }
            });
        };
        for orig in &self.original {
            let v = self.found[orig].clone();
            visit(&v, &mut order);
        }
        for e in &self.eqs.clone() {
            visit(e, &mut order);
        }
        let mut rename: BTreeMap<String, String> = BTreeMap::new();
        let mut n_c = 0usize;
        let mut n_f = 0usize;
        let mut constants = Vec::new();
        let mut functions = Vec::new();
        let mut final_args: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for name in &order {
            let args = self.unknown_args[name].clone();
            let new = if args.is_empty() {
                n_c += 1;
                let n = format!("c{n_c}");
                constants.push(n.clone());
                n
            } else {
                n_f += 1;
                let n = format!("F{n_f}");
                functions.push(n.clone());
                n
            };
            final_args.insert(new.clone(), args);
            rename.insert(name.clone(), new);
        }
        // two-phase rename so an old name equal to some new name is not
        // captured by a later substitution
        let apply_renames = |e: &Expr| -> Expr {
            let mut cur = e.clone();
            for (old, _) in &rename {
                let args = self.unknown_args[old].clone();
                cur = substitute_unknown(
                    &cur,
                    old,
                    &Expr::Unknown(UnknownFn::new(format!("__ren_{old}"), args)),
                );
            }
            for (old, new) in &rename {
                let args = self.unknown_args[old].clone();
                cur = substitute_unknown(
                    &cur,
                    &format!("__ren_{old}"),
                    &Expr::Unknown(UnknownFn::new(new.clone(), args)),
                );
            }
            cur
        };
        let mut found: BTreeMap<String, Expr> = BTreeMap::new();
        for orig in &self.original {
            found.insert(orig.clone(), apply_renames(&self.found[orig]));
        }
        let mut constraints: Vec<Expr> = Vec::new();
        for e in &self.eqs {
            let c = apply_renames(e);
            let (_, prim) = primitive(&c);
            if !is_zero(&prim) && !constraints.contains(&prim) {
                constraints.push(prim);
            }
        }
        for orig in &self.original {
            final_args
                .entry(orig.clone())
                .or_insert_with(|| self.unknown_args[orig].clone());
        }
        SolutionState {
            found,
            remaining: Vec::new(),
            constraints,
            status,
            unknown_args: final_args,
            vars: self.vars,
            arbitrary_constants: constants,
            arbitrary_functions: functions,
        }
    }
}

/// Run the staged heuristic on a linear homogeneous determining system.
pub fn solve_linear(sys: &DeterminingSystem, params: &SolverParams) -> SolutionState {
    let mut solver = Solver::new(sys, params.clone());
    let status = solver.run();
    solver.package(status)
}

/// Substitute the solved unknowns into expressions (typically the original
/// determining equations) and return the residuals.
pub fn back_substitute(state: &SolutionState, eqs: &[Expr]) -> Vec<Expr> {
    eqs.iter()
        .map(|e| {
            let mut cur = e.clone();
            for (name, value) in &state.found {
                cur = substitute_unknown(&cur, name, value);
            }
            cur
        })
        .collect()
}

/// True when `e` differentially reduces to zero modulo the constraint set
/// (each constraint solved for its leading derivative).
pub fn implied_by_constraints(e: &Expr, constraints: &[Expr], state: &SolutionState) -> bool {
    if is_zero(e) {
        return true;
    }
    let active: BTreeSet<String> = state.arbitrary_functions.iter().cloned().collect();
    let mut eqs = constraints.to_vec();
    eqs.push(normalize(e));
    let out = involutive_reduce(&eqs, &active, &state.vars, None, 10_000);
    // the residual reduces to zero iff adding it changes nothing
    let base = involutive_reduce(constraints, &active, &state.vars, None, 10_000);
    out.eqs == base.eqs
}

/// Collect the basis generators (coefficients of each arbitrary constant) and
/// the arbitrary-function families with their residual constraints.
#[derive(Debug, Clone)]
pub struct AssembledSymmetries {
    /// One generator per surviving arbitrary constant.
    pub basis: Vec<Generator>,
    /// Function families, e.g. `F1(t,x) D_u`, with the constraints mentioning
    /// that function attached.
    pub families: Vec<(Generator, String, Vec<Expr>)>,
    /// All residual constraints.
    pub constraints: Vec<Expr>,
}

pub fn assemble_generators(state: &SolutionState, det: &DeterminingSystem) -> AssembledSymmetries {
    let n_theta = det.space.indep.len();
    let values: Vec<Expr> = det
        .unknowns
        .iter()
        .map(|f| state.found.get(&f.name).cloned().unwrap_or_else(Expr::zero))
        .collect();
    let make_gen = |coeffs: Vec<Expr>| -> Generator {
        Generator::new(coeffs[..n_theta].to_vec(), coeffs[n_theta..].to_vec())
    };
    let constrained = |name: &str| {
        state.constraints.iter().any(|c| c.unknown_names().iter().any(|n| n == name))
    };
    let mut basis = Vec::new();
    let mut constrained_constants: Vec<String> = Vec::new();
    for c in &state.arbitrary_constants {
        if constrained(c) {
            // a constant tied into a residual constraint is not a free basis
            // parameter; report it as a constrained family instead
            constrained_constants.push(c.clone());
            continue;
        }
        let atom = Expr::Unknown(UnknownFn::new(c.clone(), Vec::<String>::new()));
        let coeffs: Vec<Expr> =
            values.iter().map(|v| crate::expr::pdiff(v, &atom)).collect();
        let g = make_gen(coeffs);
        if !g.is_zero() {
            basis.push(g);
        }
    }
    let mut families = Vec::new();
    for fname in state.arbitrary_functions.iter().chain(&constrained_constants) {
        let part = |v: &Expr| -> Expr {
            let terms: Vec<Expr> = v
                .summands()
                .iter()
                .filter(|t| t.unknown_names().iter().any(|n| n == fname))
                .cloned()
                .collect();
            sum_of(terms)
        };
        let coeffs: Vec<Expr> = values.iter().map(part).collect();
        let g = make_gen(coeffs);
        if g.is_zero() {
            continue;
        }
        let cons: Vec<Expr> = state
            .constraints
            .iter()
            .filter(|c| c.unknown_names().iter().any(|n| n == fname))
            .cloned()
            .collect();
        families.push((g, fname.clone(), cons));
    }
    AssembledSymmetries { basis, families, constraints: state.constraints.clone() }
}
