//! Exact Gaussian elimination over the rationals and over symbolic
//! expressions.

use crate::expr::{div, is_zero, normalize, prod_of, sum_of, Expr, Rat};
use num_traits::{One, Zero};

/// Reduced row echelon form; returns the pivot column of each pivot row.
pub fn rref(m: &mut Vec<Vec<Rat>>) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0usize;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = m[r][c].clone().recip();
        for x in m[r].iter_mut() {
            *x *= inv.clone();
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let v = m[r][j].clone() * f.clone();
                    m[i][j] -= v;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// One particular solution of `A x = b` (free variables set to zero), or
/// `None` when the system is inconsistent.
pub fn solve_rat(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let pivots = rref(&mut m);
    // inconsistency: pivot in the augmented column
    if pivots.contains(&cols) {
        return None;
    }
    let mut x = vec![Rat::zero(); cols];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = m[row][cols].clone();
    }
    Some(x)
}

/// Basis of the null space of `A`.
pub fn nullspace_rat(a: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m = a.to_vec();
    let pivots = rref(&mut m);
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![Rat::zero(); cols];
        v[free] = Rat::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -m[row][free].clone();
        }
        basis.push(v);
    }
    basis
}

/// Basis of the null space of a matrix with symbolic entries. Pivots are
/// chosen structurally nonzero (rational pivots preferred), which is generic
/// in any parameters; callers must verify candidate solutions independently.
pub fn nullspace_sym(a: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<Expr>> = a.iter().map(|r| r.iter().map(normalize).collect()).collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        let cand = (r..rows)
            .filter(|&i| !is_zero(&m[i][c]))
            .min_by_key(|&i| (!m[i][c].is_rat(), m[i][c].term_count()));
        let Some(p) = cand else { continue };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for j in 0..cols {
            m[r][j] = div(&m[r][j], &pivot);
        }
        for i in 0..rows {
            if i != r && !is_zero(&m[i][c]) {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let sub = prod_of([m[r][j].clone(), f.clone()]);
                    m[i][j] = sum_of([m[i][j].clone(), prod_of([Expr::int(-1), sub])]);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![Expr::zero(); cols];
        v[free] = Expr::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = normalize(&Expr::Prod(vec![Expr::int(-1), m[row][free].clone()]));
        }
        basis.push(v);
    }
    basis
}

/// One particular symbolic solution of `A x = b` (free variables zero), or
/// `None` when elimination finds the system structurally inconsistent.
pub fn solve_sym(a: &[Vec<Expr>], b: &[Expr]) -> Option<Vec<Expr>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<Expr>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r: Vec<Expr> = row.iter().map(normalize).collect();
            r.push(normalize(rhs));
            r
        })
        .collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        let cand = (r..rows)
            .filter(|&i| !is_zero(&m[i][c]))
            .min_by_key(|&i| (!m[i][c].is_rat(), m[i][c].term_count()));
        let Some(p) = cand else { continue };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for j in 0..=cols {
            m[r][j] = div(&m[r][j], &pivot);
        }
        for i in 0..rows {
            if i != r && !is_zero(&m[i][c]) {
                let f = m[i][c].clone();
                for j in 0..=cols {
                    let sub = prod_of([m[r][j].clone(), f.clone()]);
                    m[i][j] = sum_of([m[i][j].clone(), prod_of([Expr::int(-1), sub])]);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    for i in 0..rows {
        if (0..cols).all(|j| is_zero(&m[i][j])) && !is_zero(&m[i][cols]) {
            return None;
        }
    }
    let mut x = vec![Expr::zero(); cols];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = m[row][cols].clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    #[test]
    fn solves_small_system() {
        let a = vec![vec![r(1), r(1)], vec![r(1), r(-1)]];
        let b = vec![r(3), r(1)];
        assert_eq!(solve_rat(&a, &b), Some(vec![r(2), r(1)]));
    }

    #[test]
    fn detects_inconsistency() {
        let a = vec![vec![r(1), r(1)], vec![r(2), r(2)]];
        let b = vec![r(1), r(3)];
        assert_eq!(solve_rat(&a, &b), None);
    }

    #[test]
    fn nullspace_of_rank_one() {
        let a = vec![vec![r(1), r(2)]];
        let ns = nullspace_rat(&a);
        assert_eq!(ns, vec![vec![r(-2), r(1)]]);
    }

    #[test]
    fn symbolic_nullspace_with_parameter() {
        // [a, -a] has nullspace spanned by (1, 1) for generic a
        let a = Expr::param("a");
        let m = vec![vec![a.clone(), Expr::int(-1) * a.clone()]];
        let ns = nullspace_sym(&m);
        assert_eq!(ns, vec![vec![Expr::one(), Expr::one()]]);
    }
}
