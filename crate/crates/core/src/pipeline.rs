//! End-to-end analyses packaged for the command-line front end: parsing a
//! differential system, building and solving its determining system, and
//! reporting generators with their constraints.

use crate::expr::{parse_document, Declarations, Expr, ParseError};
use crate::jet::{DESystem, JetError, JetSpace};
use crate::linsolve::{
    assemble_generators, solve_linear, AssembledSymmetries, SolutionState, SolverParams,
};
use crate::prolong::{determining_system, DeterminingSystem, ProlongError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("determining system is not polynomial in the jet coordinates: {0}")]
    NonPolynomial(crate::expr::NonPolynomial),
    #[error("input declares no equations")]
    NoEquations,
}

impl From<ProlongError> for PipelineError {
    fn from(e: ProlongError) -> Self {
        match e {
            ProlongError::Jet(j) => PipelineError::Jet(j),
            ProlongError::NonPolynomial(p) => PipelineError::NonPolynomial(p),
            ProlongError::InsufficientOrder { .. } => {
                PipelineError::Jet(JetError::NotOrthonomic(e.to_string()))
            }
        }
    }
}

/// A parsed differential system together with its declarations.
#[derive(Debug, Clone)]
pub struct ParsedSystem {
    pub decls: Declarations,
    pub system: DESystem,
}

/// Parse a DSL document into a differential system.
pub fn parse_system(text: &str) -> Result<ParsedSystem, PipelineError> {
    let doc = parse_document(text)?;
    if doc.eqs.is_empty() {
        return Err(PipelineError::NoEquations);
    }
    let space = JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone());
    Ok(ParsedSystem { decls: doc.decls, system: DESystem::new(space, doc.eqs) })
}

/// Full point-symmetry analysis: determining system, heuristic solve, and
/// generator assembly.
#[derive(Debug, Clone)]
pub struct LieAnalysis {
    pub det: DeterminingSystem,
    pub state: SolutionState,
    pub symmetries: AssembledSymmetries,
}

pub fn lie_symmetries(
    sys: &DESystem,
    params: &SolverParams,
) -> Result<LieAnalysis, PipelineError> {
    let det = determining_system(sys)?;
    let state = solve_linear(&det, params);
    let symmetries = assemble_generators(&state, &det);
    Ok(LieAnalysis { det, state, symmetries })
}

/// All generators of an analysis (basis plus families) with the family
/// symbol when applicable.
pub fn all_generators(a: &LieAnalysis) -> Vec<(crate::prolong::Generator, Option<String>)> {
    let mut out: Vec<(crate::prolong::Generator, Option<String>)> = Vec::new();
    for g in &a.symmetries.basis {
        out.push((g.clone(), None));
    }
    for (g, name, _) in &a.symmetries.families {
        out.push((g.clone(), Some(name.clone())));
    }
    out
}

/// Expressions as DSL strings, for machine-readable reports.
pub fn exprs_as_strings(eqs: &[Expr]) -> Vec<String> {
    eqs.iter().map(|e| e.to_string()).collect()
}
