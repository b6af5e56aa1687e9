//! Symbolic toolkit for symmetry analysis of differential equations.
//!
//! The crate is organised around an exact expression kernel ([`expr`]) on top of
//! which the analysis layers are built:
//!
//! - [`jet`]: differential systems, orthonomic (solved) form, total derivatives
//!   and reduction modulo a system together with its differential consequences.
//! - [`prolong`]: symmetry generators, prolongation to jet space and generation
//!   of the linear determining system for point symmetries.
//! - [`linsolve`]: the staged heuristic solver for linear overdetermined PDE
//!   systems, producing explicit generators with arbitrary constants/functions.
//! - [`liealg`]: commutators, commutation tables, structure constants and
//!   solvability of the resulting Lie algebras.
//! - [`qp`]: quasi-polynomial systems, the Lotka-Volterra embedding, Darboux
//!   polynomials and quasi-polynomial/logarithmic first integrals.
//! - [`noether`]: Euler-Lagrange equations, the variational symmetry condition
//!   and conserved currents.
//!
//! All arithmetic is exact (arbitrary-precision rationals); there is no
//! floating point anywhere in the kernel. Expressions are immutable values and
//! every operation is a pure function, so everything here is safe to share
//! across threads.

pub mod expr;
pub mod jet;
pub mod liealg;
pub mod linalg;
pub mod linsolve;
pub mod noether;
pub mod pipeline;
pub mod prolong;
pub mod qp;

pub use expr::{Expr, Rat};
