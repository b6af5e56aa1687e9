//! Lie-algebra structure of computed generators: commutators, commutation
//! tables, structure constants, derived series and solvability.
//!
//! All decompositions are taken over the field of rational constants:
//! generator coefficients are compared structurally after normalization, with
//! non-rational atoms (parameters, functions) treated as formal monomials.

use crate::expr::{is_zero, normalize, prod_of, sum_of, Expr, Rat};
use crate::jet::JetSpace;
use crate::linalg::{rref, solve_rat};
use crate::prolong::Generator;
use num_traits::{One, Signed, Zero};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LieError {
    /// A commutator does not decompose over the given basis.
    #[error("basis is not closed under commutation: [G{}, G{}] escapes the span", .a + 1, .b + 1)]
    NotClosed { a: usize, b: usize },
    /// The proposed basis is linearly dependent over the rationals.
    #[error("generators are not linearly independent")]
    DependentBasis,
}

/// An ordered set of pairwise independent generators over a common variable
/// frame.
#[derive(Debug, Clone)]
pub struct AlgebraBasis {
    pub space: JetSpace,
    pub gens: Vec<Generator>,
}

impl AlgebraBasis {
    pub fn new(space: JetSpace, gens: Vec<Generator>) -> Result<Self, LieError> {
        let basis = AlgebraBasis { space, gens };
        let vecs = basis.vectorize();
        let mut m = vecs.clone();
        let pivots = rref(&mut m);
        if pivots.len() != basis.gens.len() {
            return Err(LieError::DependentBasis);
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.gens.len()
    }

    /// Coefficient vectors of the generators over a common (slot, monomial)
    /// column index.
    fn vectorize(&self) -> Vec<Vec<Rat>> {
        vectorize_all(&self.gens, &self.space).1
    }
}

/// Split a canonical term into its rational coefficient and formal monomial.
fn term_parts(term: &Expr) -> (Rat, Expr) {
    match term {
        Expr::Rat(c) => (c.clone(), Expr::one()),
        Expr::Prod(fs) => {
            if let Some(Expr::Rat(c)) = fs.first() {
                (c.clone(), normalize(&Expr::Prod(fs[1..].to_vec())))
            } else {
                (Rat::one(), term.clone())
            }
        }
        other => (Rat::one(), other.clone()),
    }
}

/// Map a set of generators onto rational coefficient vectors over the union
/// of their (coefficient slot, monomial) supports.
fn vectorize_all(gens: &[Generator], space: &JetSpace) -> (Vec<(usize, Expr)>, Vec<Vec<Rat>>) {
    let mut columns: Vec<(usize, Expr)> = Vec::new();
    let slots = |g: &Generator| -> Vec<Expr> {
        g.thetas.iter().chain(g.etas.iter()).cloned().collect()
    };
    let _ = space;
    for g in gens {
        for (slot, coeff) in slots(g).iter().enumerate() {
            for term in coeff.summands() {
                if is_zero(term) {
                    continue;
                }
                let (_, mono) = term_parts(term);
                let key = (slot, mono);
                if !columns.contains(&key) {
                    columns.push(key);
                }
            }
        }
    }
    columns.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut vecs = Vec::with_capacity(gens.len());
    for g in gens {
        let mut v = vec![Rat::zero(); columns.len()];
        for (slot, coeff) in slots(g).iter().enumerate() {
            for term in coeff.summands() {
                if is_zero(term) {
                    continue;
                }
                let (c, mono) = term_parts(term);
                let idx = columns
                    .iter()
                    .position(|k| k.0 == slot && k.1 == mono)
                    .expect("column registered above");
                v[idx] += c;
            }
        }
        vecs.push(v);
    }
    (columns, vecs)
}

/// Commutator `[G1, G2] = G1 G2 - G2 G1` as a first-order operator.
pub fn commutator(g1: &Generator, g2: &Generator, space: &JetSpace) -> Generator {
    let coeff = |pick: &dyn Fn(&Generator) -> &[Expr], i: usize| -> Expr {
        sum_of([
            g1.apply(space, &pick(g2)[i]),
            prod_of([Expr::int(-1), g2.apply(space, &pick(g1)[i])]),
        ])
    };
    let thetas: Vec<Expr> =
        (0..space.indep.len()).map(|i| coeff(&|g: &Generator| &g.thetas, i)).collect();
    let etas: Vec<Expr> =
        (0..space.dep.len()).map(|j| coeff(&|g: &Generator| &g.etas, j)).collect();
    Generator::new(thetas, etas)
}

/// Decompose a generator over the basis with rational coefficients; `None`
/// when it lies outside the span.
pub fn decompose(basis: &AlgebraBasis, g: &Generator) -> Option<Vec<Rat>> {
    let mut all = basis.gens.clone();
    all.push(g.clone());
    let (_, vecs) = vectorize_all(&all, &basis.space);
    let target = vecs.last().unwrap().clone();
    let cols = target.len();
    // basis vectors as columns
    let a: Vec<Vec<Rat>> = (0..cols)
        .map(|row| (0..basis.gens.len()).map(|k| vecs[k][row].clone()).collect())
        .collect();
    solve_rat(&a, &target)
}

/// An entry of the commutation table.
#[derive(Debug, Clone, PartialEq)]
pub enum TableEntry {
    Zero,
    /// Rational combination of basis generators.
    Combo(Vec<(Rat, usize)>),
    /// Commutator that does not decompose over the basis.
    Raw(Generator),
}

impl TableEntry {
    pub fn label(&self) -> String {
        match self {
            TableEntry::Zero => "0".to_string(),
            TableEntry::Combo(parts) => {
                let mut out = String::new();
                for (i, (c, k)) in parts.iter().enumerate() {
                    let mag = if c.abs().is_one() {
                        format!("G{}", k + 1)
                    } else {
                        format!("{} G{}", format_rat(&c.abs()), k + 1)
                    };
                    if i == 0 {
                        if c < &Rat::zero() {
                            out.push('-');
                        }
                    } else {
                        out.push_str(if c < &Rat::zero() { " - " } else { " + " });
                    }
                    out.push_str(&mag);
                }
                out
            }
            TableEntry::Raw(_) => "<not in span>".to_string(),
        }
    }
}

fn format_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Antisymmetric commutation table with entries expressed in basis labels
/// when decomposable; undecomposable entries are kept raw and flagged.
#[derive(Debug, Clone)]
pub struct CommutationTable {
    pub entries: Vec<Vec<TableEntry>>,
    pub closed: bool,
}

pub fn commutation_table(basis: &AlgebraBasis) -> CommutationTable {
    let n = basis.dim();
    let mut entries = vec![vec![TableEntry::Zero; n]; n];
    let mut closed = true;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let com = commutator(&basis.gens[a], &basis.gens[b], &basis.space);
            if com.is_zero() {
                continue;
            }
            entries[a][b] = match decompose(basis, &com) {
                Some(coeffs) => {
                    let parts: Vec<(Rat, usize)> = coeffs
                        .into_iter()
                        .enumerate()
                        .filter(|(_, c)| !c.is_zero())
                        .map(|(k, c)| (c, k))
                        .collect();
                    if parts.is_empty() {
                        TableEntry::Zero
                    } else {
                        TableEntry::Combo(parts)
                    }
                }
                None => {
                    closed = false;
                    TableEntry::Raw(com)
                }
            };
        }
    }
    CommutationTable { entries, closed }
}

/// Structure constants `[G_a, G_b] = sum_k c_{ab}^k G_k` as exact rationals.
pub fn structure_constants(basis: &AlgebraBasis) -> Result<Vec<Vec<Vec<Rat>>>, LieError> {
    let n = basis.dim();
    let mut c = vec![vec![vec![Rat::zero(); n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let com = commutator(&basis.gens[a], &basis.gens[b], &basis.space);
            if com.is_zero() {
                continue;
            }
            let coeffs = decompose(basis, &com).ok_or(LieError::NotClosed { a, b })?;
            c[a][b] = coeffs;
        }
    }
    Ok(c)
}

/// Jacobi residual `sum_m (c_ab^m c_mc^k + c_bc^m c_ma^k + c_ca^m c_mb^k)`;
/// identically zero for genuine structure constants.
pub fn jacobi_residual(c: &[Vec<Vec<Rat>>]) -> Rat {
    let n = c.len();
    let mut worst = Rat::zero();
    for a in 0..n {
        for b in 0..n {
            for cc in 0..n {
                for k in 0..n {
                    let mut s = Rat::zero();
                    for m in 0..n {
                        s += c[a][b][m].clone() * c[m][cc][k].clone()
                            + c[b][cc][m].clone() * c[m][a][k].clone()
                            + c[cc][a][m].clone() * c[m][b][k].clone();
                    }
                    if s.abs() > worst {
                        worst = s.abs();
                    }
                }
            }
        }
    }
    worst
}

/// Spanning set of all pairwise commutators, reduced to a linearly
/// independent basis.
pub fn derived_subalgebra(basis: &AlgebraBasis) -> Result<AlgebraBasis, LieError> {
    let n = basis.dim();
    let mut comms: Vec<Generator> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let com = commutator(&basis.gens[a], &basis.gens[b], &basis.space);
            if decompose(basis, &com).is_none() {
                return Err(LieError::NotClosed { a, b });
            }
            if !com.is_zero() {
                comms.push(com);
            }
        }
    }
    // greedy independent subset, in deterministic order
    let mut kept: Vec<Generator> = Vec::new();
    for g in comms {
        let mut trial = kept.clone();
        trial.push(g.clone());
        let (_, vecs) = vectorize_all(&trial, &basis.space);
        let mut m = vecs;
        let pivots = rref(&mut m);
        if pivots.len() == trial.len() {
            kept.push(g);
        }
    }
    Ok(AlgebraBasis { space: basis.space.clone(), gens: kept })
}

/// Solvability: the derived series reaches zero within `dim` steps.
pub fn is_solvable(basis: &AlgebraBasis) -> Result<bool, LieError> {
    let mut cur = basis.clone();
    for _ in 0..=basis.dim() {
        if cur.dim() == 0 {
            return Ok(true);
        }
        let next = derived_subalgebra(&cur)?;
        if next.dim() >= cur.dim() {
            return Ok(false);
        }
        cur = next;
    }
    Ok(false)
}

impl fmt::Display for CommutationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.entries.len();
        let labels: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|row| row.iter().map(|e| e.label()).collect())
            .collect();
        let mut widths = vec![0usize; n];
        for row in &labels {
            for (j, s) in row.iter().enumerate() {
                widths[j] = widths[j].max(s.len());
            }
        }
        for row in &labels {
            write!(f, "[")?;
            for (j, s) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, "  ")?;
                }
                write!(f, "{:>w$}", s, w = widths[j])?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

/// Parse a set of generators in `D`-notation over the given declarations.
pub fn basis_from_strings(
    space: &JetSpace,
    decls: &crate::expr::Declarations,
    gens: &[&str],
) -> Result<AlgebraBasis, String> {
    let mut out = Vec::new();
    for g in gens {
        let coeffs =
            crate::expr::parse_generator_coeffs(g, decls).map_err(|e| e.to_string())?;
        out.push(Generator::from_coeffs(space, &coeffs));
    }
    AlgebraBasis::new(space.clone(), out).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_document, parse_generator_coeffs};

    fn heat_env() -> (JetSpace, crate::expr::Declarations) {
        let doc = parse_document("indep x, t; dep u(x,t);").unwrap();
        (JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone()), doc.decls)
    }

    fn gen(space: &JetSpace, decls: &crate::expr::Declarations, s: &str) -> Generator {
        Generator::from_coeffs(space, &parse_generator_coeffs(s, decls).unwrap())
    }

    #[test]
    fn worked_commutator_fixture() {
        // [D_x, -1/2 u x D_u + t D_x] = -1/2 u D_u
        let (space, decls) = heat_env();
        let a = gen(&space, &decls, "D[x]");
        let b = gen(&space, &decls, "-1/2*u*x*D[u] + t*D[x]");
        let expected = gen(&space, &decls, "-1/2*u*D[u]");
        assert_eq!(commutator(&a, &b, &space), expected);
    }

    #[test]
    fn commutator_of_commuting_translations() {
        let (space, decls) = heat_env();
        let a = gen(&space, &decls, "D[u]");
        let b = gen(&space, &decls, "D[x]");
        assert!(commutator(&a, &b, &space).is_zero());
    }

    #[test]
    fn commutator_with_coefficient_generators() {
        // [u D_u, u D_x] = u D_x
        let (space, decls) = heat_env();
        let a = gen(&space, &decls, "u*D[u]");
        let b = gen(&space, &decls, "u*D[x]");
        let expected = gen(&space, &decls, "u*D[x]");
        assert_eq!(commutator(&a, &b, &space), expected);
    }

    fn heat_reference_basis() -> AlgebraBasis {
        let (space, decls) = heat_env();
        basis_from_strings(
            &space,
            &decls,
            &[
                "D[t]",
                "D[x]",
                "u*D[u]",
                "2*t*D[t] + x*D[x]",
                "u*x*D[u] - 2*t*D[x]",
                "t^2*D[t] + (1/4)*(-2*u*t - u*x^2)*D[u] + t*x*D[x]",
            ],
        )
        .unwrap()
    }

    #[test]
    fn heat_commutation_table_matches_worked_output() {
        let basis = heat_reference_basis();
        let table = commutation_table(&basis);
        assert!(table.closed);
        let r = Rat::from_integer;
        let expect: Vec<Vec<Vec<(i64, i64, usize)>>> = vec![
            // (num, den, index) per entry; row-major upper part
            vec![vec![], vec![], vec![], vec![(2, 1, 0)], vec![(-2, 1, 1)], vec![(-1, 2, 2), (1, 1, 3)]],
            vec![vec![], vec![], vec![], vec![(1, 1, 1)], vec![(1, 1, 2)], vec![(-1, 2, 4)]],
            vec![vec![], vec![], vec![], vec![], vec![], vec![]],
            vec![vec![(-2, 1, 0)], vec![(-1, 1, 1)], vec![], vec![], vec![(1, 1, 4)], vec![(2, 1, 5)]],
            vec![vec![(2, 1, 1)], vec![(-1, 1, 2)], vec![], vec![(-1, 1, 4)], vec![], vec![]],
            vec![vec![(1, 2, 2), (-1, 1, 3)], vec![(1, 2, 4)], vec![], vec![(-2, 1, 5)], vec![], vec![]],
        ];
        for a in 0..6 {
            for b in 0..6 {
                let want = &expect[a][b];
                match (&table.entries[a][b], want.is_empty()) {
                    (TableEntry::Zero, true) => {}
                    (TableEntry::Combo(parts), false) => {
                        let got: Vec<(Rat, usize)> = parts.clone();
                        let want: Vec<(Rat, usize)> = want
                            .iter()
                            .map(|(n, d, k)| (r((*n).into()) / r((*d).into()), *k))
                            .collect();
                        assert_eq!(got, want, "entry ({},{})", a + 1, b + 1);
                    }
                    (e, _) => panic!("entry ({},{}) unexpected: {:?}", a + 1, b + 1, e),
                }
            }
        }
    }

    #[test]
    fn abelian_table_is_zero_and_diagonal_vanishes() {
        let (space, decls) = heat_env();
        let basis = basis_from_strings(&space, &decls, &["D[x]", "D[t]"]).unwrap();
        let table = commutation_table(&basis);
        for row in &table.entries {
            for e in row {
                assert_eq!(*e, TableEntry::Zero);
            }
        }
    }

    #[test]
    fn structure_constants_of_heat_basis() {
        let basis = heat_reference_basis();
        let c = structure_constants(&basis).unwrap();
        // [G1, G4] = 2 G1
        assert_eq!(c[0][3][0], Rat::from_integer(2.into()));
        // antisymmetry
        for a in 0..6 {
            for b in 0..6 {
                for k in 0..6 {
                    assert_eq!(c[a][b][k], -c[b][a][k].clone());
                }
            }
        }
        assert!(jacobi_residual(&c).is_zero());
    }

    #[test]
    fn abelian_structure_constants_vanish() {
        let (space, decls) = heat_env();
        let basis = basis_from_strings(&space, &decls, &["D[x]", "D[t]"]).unwrap();
        let c = structure_constants(&basis).unwrap();
        for a in &c {
            for b in a {
                for k in b {
                    assert!(k.is_zero());
                }
            }
        }
    }

    #[test]
    fn derived_subalgebra_examples() {
        let (space, decls) = heat_env();
        // {D_u, D_x, u D_x}: derived = span{D_x}
        let basis =
            basis_from_strings(&space, &decls, &["D[u]", "D[x]", "u*D[x]"]).unwrap();
        let derived = derived_subalgebra(&basis).unwrap();
        assert_eq!(derived.dim(), 1);
        assert_eq!(derived.gens[0], gen(&space, &decls, "D[x]"));
        // derived of derived is empty
        let second = derived_subalgebra(&derived).unwrap();
        assert_eq!(second.dim(), 0);
        // abelian: empty
        let ab = basis_from_strings(&space, &decls, &["D[x]", "D[t]"]).unwrap();
        assert_eq!(derived_subalgebra(&ab).unwrap().dim(), 0);
    }

    #[test]
    fn solvability_fixtures() {
        let (space, decls) = heat_env();
        let basis =
            basis_from_strings(&space, &decls, &["D[u]", "D[x]", "u*D[x]"]).unwrap();
        assert!(is_solvable(&basis).unwrap());
        // empty algebra is solvable
        let empty = AlgebraBasis::new(space.clone(), Vec::new()).unwrap();
        assert!(is_solvable(&empty).unwrap());
        // sl(2) realization {D_x, x D_x, x^2 D_x} is not solvable
        let sl2 =
            basis_from_strings(&space, &decls, &["D[x]", "x*D[x]", "x^2*D[x]"]).unwrap();
        assert!(!is_solvable(&sl2).unwrap());
    }

    #[test]
    fn dependent_basis_rejected() {
        let (space, decls) = heat_env();
        assert!(basis_from_strings(&space, &decls, &["D[x]", "2*D[x]"]).is_err());
    }

    #[test]
    fn structure_constants_roundtrip() {
        let basis = heat_reference_basis();
        let c = structure_constants(&basis).unwrap();
        for a in 0..basis.dim() {
            for b in 0..basis.dim() {
                let com = commutator(&basis.gens[a], &basis.gens[b], &basis.space);
                let mut rebuilt = Generator::zero(&basis.space);
                for (k, ck) in c[a][b].iter().enumerate() {
                    if ck.is_zero() {
                        continue;
                    }
                    let scale = Expr::Rat(ck.clone());
                    let thetas = basis.gens[k]
                        .thetas
                        .iter()
                        .map(|e| prod_of([scale.clone(), e.clone()]))
                        .collect::<Vec<_>>();
                    let etas = basis.gens[k]
                        .etas
                        .iter()
                        .map(|e| prod_of([scale.clone(), e.clone()]))
                        .collect::<Vec<_>>();
                    let term = Generator::new(thetas, etas);
                    rebuilt = Generator::new(
                        rebuilt
                            .thetas
                            .iter()
                            .zip(&term.thetas)
                            .map(|(x, y)| sum_of([x.clone(), y.clone()]))
                            .collect(),
                        rebuilt
                            .etas
                            .iter()
                            .zip(&term.etas)
                            .map(|(x, y)| sum_of([x.clone(), y.clone()]))
                            .collect(),
                    );
                }
                assert_eq!(rebuilt, com, "pair ({a},{b})");
            }
        }
    }
}
