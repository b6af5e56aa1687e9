//! Command-line front end: point-symmetry analysis, determining systems,
//! symmetry checking, Lie-algebra reports, quasi-polynomial first integrals
//! and Noether currents, plus a small corpus benchmark harness.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use symkit_core::expr::{parse_generator_coeffs, to_json};
use symkit_core::jet::JetError;
use symkit_core::liealg::{
    commutation_table, is_solvable, structure_constants, AlgebraBasis, TableEntry,
};
use symkit_core::linsolve::{SolveStatus, SolverParams};
use symkit_core::noether::{euler_lagrange, noether_solve, Lagrangian};
use symkit_core::pipeline::{lie_symmetries, parse_system, ParsedSystem, PipelineError};
use symkit_core::prolong::{check_symmetry, determining_system, Generator};
use symkit_core::qp::{
    darboux, log_integrals, qp_first_integrals, qp_from_json, qp_symmetries, to_lv, IntegralKind,
    QpError,
};

#[derive(Parser)]
#[command(name = "symkit", version, about = "Symmetry analysis of differential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Term bound for the partial involutive reduction
    #[arg(long, default_value_t = 5)]
    n1: usize,
    /// Initial term bound for ODE integration
    #[arg(long, default_value_t = 5)]
    n2: usize,
    /// Maximal term bound for ODE integration
    #[arg(long, default_value_t = 8)]
    n3: usize,
}

impl SolverArgs {
    fn params(&self) -> Result<SolverParams, CliError> {
        if self.n2 > self.n3 {
            return Err(CliError::Parse(format!(
                "--n2 ({}) must not exceed --n3 ({})",
                self.n2, self.n3
            )));
        }
        let budget = std::env::var("SYMKIT_BUDGET")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(2000);
        Ok(SolverParams { n1: self.n1, n2: self.n2, n3: self.n3, budget })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute Lie point symmetry generators and their constraints
    Lie {
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Emit the raw determining system
    Detsys {
        input: PathBuf,
        /// Print only the number of determining equations
        #[arg(long)]
        count_only: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check user-supplied generators against the system
    Check {
        input: PathBuf,
        /// Generator in D-notation, e.g. "y*D[t]+t*D[y]" (repeatable)
        #[arg(long = "gen", required = true, allow_hyphen_values = true)]
        gens: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Commutation table, structure constants and solvability
    Algebra {
        input: PathBuf,
        /// Generators in D-notation; when omitted, the finite generators of
        /// the solved system are used
        #[arg(long = "gen", allow_hyphen_values = true)]
        gens: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Quasi-polynomial analysis of a first-order ODE system
    Qp {
        #[command(subcommand)]
        what: QpCommand,
    },
    /// Noether conserved currents of a first-order Lagrangian
    Noether {
        #[arg(long)]
        lagrangian: PathBuf,
        /// Polynomial ansatz degree for theta, eta and f
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the pipeline over a corpus directory of .deq files
    Bench {
        corpus: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum QpCommand {
    /// Lotka-Volterra embedding M = B A
    Lv {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Darboux polynomials (semi-invariants) up to a degree
    Darboux {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Quasi-polynomial and exponential-weighted first integrals
    Integrals {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Also search the polynomial-plus-logarithm ansatz
        #[arg(long)]
        logs: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Quasi-polynomial symmetry vector fields
    Symmetries {
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

/// Exit codes: 1 parse error, 2 not orthonomic, 3 incomplete solve,
/// 4 budget/search exhausted.
enum CliError {
    Parse(String),
    NotOrthonomic(String),
    Incomplete(String),
    Budget(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 1,
            CliError::NotOrthonomic(_) => 2,
            CliError::Incomplete(_) => 3,
            CliError::Budget(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::NotOrthonomic(m)
            | CliError::Incomplete(m)
            | CliError::Budget(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Jet(JetError::NotOrthonomic(_)) => {
                CliError::NotOrthonomic(e.to_string())
            }
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<QpError> for CliError {
    fn from(e: QpError) -> Self {
        match &e {
            QpError::SearchTooLarge { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<ParsedSystem, CliError> {
    let text = read_file(path)?;
    Ok(parse_system(&text)?)
}

fn emit(v: &Value, format: Format, text: impl FnOnce() -> String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(v).unwrap()),
        Format::Text => println!("{}", text()),
    }
}

fn generator_json(g: &Generator, space: &symkit_core::jet::JetSpace) -> Value {
    let mut coeffs = serde_json::Map::new();
    for (x, th) in space.indep.iter().zip(&g.thetas) {
        coeffs.insert(x.clone(), to_json(th));
    }
    for (u, eta) in space.dep.iter().zip(&g.etas) {
        coeffs.insert(u.clone(), to_json(eta));
    }
    json!({
        "d_notation": g.to_d_notation(space),
        "coefficients": Value::Object(coeffs),
    })
}

fn cmd_lie(input: &Path, solver: &SolverArgs, format: Format) -> Result<(), CliError> {
    let parsed = load_system(input)?;
    let analysis = lie_symmetries(&parsed.system, &solver.params()?)?;
    let space = &parsed.system.space;
    let mut gens_json = Vec::new();
    let mut lines = Vec::new();
    lines.push("generators:".to_string());
    for g in &analysis.symmetries.basis {
        gens_json.push(generator_json(g, space));
        lines.push(format!("  {}", g.to_d_notation(space)));
    }
    for (g, name, _) in &analysis.symmetries.families {
        let mut j = generator_json(g, space);
        j["family"] = json!(name);
        gens_json.push(j);
        lines.push(format!("  {}   (family {})", g.to_d_notation(space), name));
    }
    lines.push("constraints:".to_string());
    for c in &analysis.symmetries.constraints {
        lines.push(format!("  {c} = 0"));
    }
    if analysis.symmetries.constraints.is_empty() {
        lines.push("  (none)".to_string());
    }
    // the solved coefficient functions, as DSL strings keyed by unknown
    let mut found = serde_json::Map::new();
    for (name, value) in &analysis.state.found {
        found.insert(name.clone(), json!(value.to_string()));
    }
    let v = json!({
        "generators": gens_json,
        "constraints": analysis.symmetries.constraints.iter().map(|c| json!({
            "dsl": c.to_string(),
            "tree": to_json(c),
        })).collect::<Vec<_>>(),
        "solution": Value::Object(found),
        "determining_equations": analysis.det.eqs.len(),
        "status": match analysis.state.status {
            SolveStatus::Complete => "complete",
            SolveStatus::Partial => "partial",
        },
    });
    emit(&v, format, || lines.join("\n"));
    if analysis.state.status == SolveStatus::Partial {
        return Err(CliError::Incomplete("solver stopped before a fixpoint".into()));
    }
    Ok(())
}

fn cmd_detsys(input: &Path, count_only: bool, format: Format) -> Result<(), CliError> {
    let parsed = load_system(input)?;
    let det = determining_system(&parsed.system).map_err(PipelineError::from)?;
    if count_only {
        let v = json!({"count": det.eqs.len()});
        emit(&v, format, || det.eqs.len().to_string());
        return Ok(());
    }
    let v = json!({
        "unknowns": det.unknowns.iter().map(|u| format!("{}({})", u.name, u.args.join(","))).collect::<Vec<_>>(),
        "equations": det.eqs.iter().map(|e| json!({
            "dsl": e.to_string(),
            "tree": to_json(e),
        })).collect::<Vec<_>>(),
    });
    emit(&v, format, || {
        let mut lines = Vec::new();
        for e in &det.eqs {
            lines.push(format!("{e} = 0"));
        }
        lines.join("\n")
    });
    Ok(())
}

fn cmd_check(input: &Path, gens: &[String], format: Format) -> Result<(), CliError> {
    let parsed = load_system(input)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut all_zero = true;
    for gtext in gens {
        let coeffs = parse_generator_coeffs(gtext, &parsed.decls)
            .map_err(|e| CliError::Parse(e.to_string()))?;
        let g = Generator::from_coeffs(&parsed.system.space, &coeffs);
        let residuals =
            check_symmetry(&parsed.system, &g).map_err(PipelineError::from)?;
        let zero = residuals.iter().all(symkit_core::expr::is_zero);
        all_zero &= zero;
        rows.push(json!({
            "generator": gtext,
            "residuals": residuals.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            "symmetry": zero,
        }));
        lines.push(format!(
            "{}: {}",
            gtext,
            if zero { "residual 0 (symmetry)" } else { "nonzero residual" }
        ));
        if !zero {
            for r in &residuals {
                lines.push(format!("  residual: {r}"));
            }
        }
    }
    emit(&json!({"checks": rows}), format, || lines.join("\n"));
    if !all_zero {
        // a nonzero residual is a result, not a failure; keep exit 0
    }
    Ok(())
}

fn cmd_algebra(
    input: &Path,
    gens: &[String],
    solver: &SolverArgs,
    format: Format,
) -> Result<(), CliError> {
    let parsed = load_system(input)?;
    let space = parsed.system.space.clone();
    let generators: Vec<Generator> = if gens.is_empty() {
        let analysis = lie_symmetries(&parsed.system, &solver.params()?)?;
        analysis.symmetries.basis.clone()
    } else {
        let mut out = Vec::new();
        for gtext in gens {
            let coeffs = parse_generator_coeffs(gtext, &parsed.decls)
                .map_err(|e| CliError::Parse(e.to_string()))?;
            out.push(Generator::from_coeffs(&space, &coeffs));
        }
        out
    };
    let basis = AlgebraBasis::new(space.clone(), generators)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let table = commutation_table(&basis);
    let solvable = is_solvable(&basis).ok();
    let constants = structure_constants(&basis).ok();
    let v = json!({
        "generators": basis.gens.iter().map(|g| g.to_d_notation(&space)).collect::<Vec<_>>(),
        "table": table.entries.iter().map(|row| {
            row.iter().map(|e| e.label()).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "closed": table.closed,
        "solvable": solvable,
        "structure_constants": constants.as_ref().map(|c| {
            c.iter().map(|a| a.iter().map(|b| {
                b.iter().map(|r| r.to_string()).collect::<Vec<_>>()
            }).collect::<Vec<_>>()).collect::<Vec<_>>()
        }),
    });
    emit(&v, format, || {
        let mut lines = Vec::new();
        for (i, g) in basis.gens.iter().enumerate() {
            lines.push(format!("G{} = {}", i + 1, g.to_d_notation(&space)));
        }
        lines.push(format!("{table}"));
        match solvable {
            Some(s) => lines.push(format!("solvable: {s}")),
            None => lines.push("solvable: undetermined (basis not closed)".to_string()),
        }
        if !table.closed {
            let raw: Vec<String> = table
                .entries
                .iter()
                .flatten()
                .filter_map(|e| match e {
                    TableEntry::Raw(g) => Some(g.to_d_notation(&space)),
                    _ => None,
                })
                .collect();
            lines.push(format!("not closed; escaped commutators: {}", raw.join("; ")));
        }
        lines.join("\n")
    });
    Ok(())
}

fn load_qp(path: &Path) -> Result<symkit_core::qp::QPSystem, CliError> {
    let text = read_file(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("invalid JSON: {e}")))?;
    Ok(qp_from_json(&v)?)
}

fn kind_name(k: IntegralKind) -> &'static str {
    match k {
        IntegralKind::QpRatio => "qp-ratio",
        IntegralKind::ExpWeighted => "exp-weighted",
        IntegralKind::LogType => "log-type",
    }
}

fn cmd_qp(what: &QpCommand) -> Result<(), CliError> {
    match what {
        QpCommand::Lv { input, format } => {
            let sys = load_qp(input)?;
            let lv = to_lv(&sys);
            let v = json!({
                "yvars": lv.yvars,
                "y_in_x": lv.y_in_x.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                "M": lv.mmat.iter().map(|row| row.iter().map(|e| e.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "b_tilde": lv.b_tilde.iter().map(|row| row.iter().map(|r| r.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "invertible": lv.b_tilde_inv.is_some(),
                "constant_monomial": lv.const_row,
            });
            emit(&v, *format, || {
                let mut lines = Vec::new();
                for (i, y) in lv.yvars.iter().enumerate() {
                    lines.push(format!("{y} = {}", lv.y_in_x[i]));
                }
                lines.push("M = B A:".to_string());
                for row in &lv.mmat {
                    lines.push(format!(
                        "  [{}]",
                        row.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
                    ));
                }
                lines.push(format!("extended exponent matrix invertible: {}", lv.b_tilde_inv.is_some()));
                lines.join("\n")
            });
            Ok(())
        }
        QpCommand::Darboux { input, degree, format } => {
            let sys = load_qp(input)?;
            let lv = to_lv(&sys);
            let semis = darboux(&lv, *degree)?;
            let v = json!({
                "semi_invariants": semis.iter().map(|s| json!({
                    "f": s.f.to_string(),
                    "lambda": s.lambda.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                    "degree": s.degree,
                })).collect::<Vec<_>>(),
            });
            emit(&v, *format, || {
                let mut lines = Vec::new();
                for s in &semis {
                    lines.push(format!("f = {}   lambda = {}", s.f, s.lambda_expr(&lv)));
                }
                if semis.is_empty() {
                    lines.push("(none)".to_string());
                }
                lines.join("\n")
            });
            Ok(())
        }
        QpCommand::Integrals { input, degree, logs, format } => {
            let sys = load_qp(input)?;
            let mut ints = qp_first_integrals(&sys, *degree);
            if *logs {
                for i in log_integrals(&sys, *degree) {
                    if !ints.contains(&i) {
                        ints.push(i);
                    }
                }
            }
            let v = json!({
                "integrals": ints.iter().map(|i| json!({
                    "expr": i.expr.to_string(),
                    "kind": kind_name(i.kind),
                })).collect::<Vec<_>>(),
            });
            emit(&v, *format, || {
                let mut lines = Vec::new();
                for i in &ints {
                    lines.push(format!("I = {}   [{}]", i.expr, kind_name(i.kind)));
                }
                if ints.is_empty() {
                    lines.push("(none)".to_string());
                }
                lines.join("\n")
            });
            Ok(())
        }
        QpCommand::Symmetries { input, degree, format } => {
            let sys = load_qp(input)?;
            let lv = to_lv(&sys);
            let syms = qp_symmetries(&sys, *degree)?;
            let v = json!({
                "symmetries": syms.iter().map(|s| json!({
                    "t": s.t.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                    "lambda": s.lambda.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                    "xi": s.xi.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                    "generator_y": s.gen_y.to_d_notation(&symkit_core::jet::JetSpace::new([lv.tvar.clone()], lv.yvars.clone())),
                    "generator_x": s.gen_x.as_ref().map(|g| g.to_d_notation(&symkit_core::jet::JetSpace::new([sys.tvar.clone()], sys.vars.clone()))),
                })).collect::<Vec<_>>(),
            });
            emit(&v, *format, || {
                let mut lines = Vec::new();
                let yspace =
                    symkit_core::jet::JetSpace::new([lv.tvar.clone()], lv.yvars.clone());
                for s in &syms {
                    lines.push(format!("G = {}", s.gen_y.to_d_notation(&yspace)));
                }
                if syms.is_empty() {
                    lines.push("(none)".to_string());
                }
                lines.join("\n")
            });
            Ok(())
        }
    }
}

fn cmd_noether(path: &Path, degree: usize, format: Format) -> Result<(), CliError> {
    let text = read_file(path)?;
    let doc = symkit_core::expr::parse_document(&text)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    if doc.eqs.is_empty() {
        return Err(CliError::Parse("lagrangian file declares no expression".into()));
    }
    let space =
        symkit_core::jet::JetSpace::new(doc.decls.indep.clone(), doc.decls.dep.clone());
    let lag = Lagrangian::new(space.clone(), doc.eqs[0].clone())
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let results = noether_solve(&lag, degree).map_err(|e| match e {
        symkit_core::noether::NoetherError::Jet(j) => CliError::NotOrthonomic(j.to_string()),
        other => CliError::Parse(other.to_string()),
    })?;
    let el = euler_lagrange(&lag);
    let v = json!({
        "euler_lagrange": el.eqs.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "ordering": space.indep,
        "currents": results.iter().map(|(g, cur)| json!({
            "generator": g.to_d_notation(&space),
            "components": cur.components.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    emit(&v, format, || {
        let mut lines = Vec::new();
        for (g, cur) in &results {
            lines.push(format!(
                "{}  ->  [{}]",
                g.to_d_notation(&space),
                cur.components
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        lines.push(format!("ordering: [{}]", space.indep.join(", ")));
        lines.join("\n")
    });
    Ok(())
}

fn cmd_bench(corpus: &Path, solver: &SolverArgs, format: Format) -> Result<(), CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", corpus.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "deq"))
        .collect();
    files.sort();
    let mut rows_json = Vec::new();
    let mut lines = Vec::new();
    for file in &files {
        let name = file.file_name().unwrap().to_string_lossy().to_string();
        let start = std::time::Instant::now();
        let outcome = (|| -> Result<(usize, usize, SolveStatus), CliError> {
            let parsed = load_system(file)?;
            let analysis = lie_symmetries(&parsed.system, &solver.params()?)?;
            let gens = analysis.symmetries.basis.len() + analysis.symmetries.families.len();
            Ok((analysis.det.eqs.len(), gens, analysis.state.status))
        })();
        let wall = start.elapsed();
        match outcome {
            Ok((eqs, gens, status)) => {
                let status = match status {
                    SolveStatus::Complete => "solved",
                    SolveStatus::Partial => "partial",
                };
                rows_json.push(json!({
                    "file": name,
                    "status": status,
                    "determining_equations": eqs,
                    "generators": gens,
                }));
                lines.push(format!(
                    "{name}: {status}, {eqs} determining equations, {gens} generators, {:.1} ms",
                    wall.as_secs_f64() * 1e3
                ));
            }
            Err(e) => {
                rows_json.push(json!({
                    "file": name,
                    "status": "error",
                    "error": e.message(),
                }));
                lines.push(format!("{name}: error ({})", e.message()));
            }
        }
    }
    if files.is_empty() {
        lines.push("(empty corpus)".to_string());
    }
    // wall times are informational and excluded from the JSON report so that
    // repeated runs are byte-identical
    emit(&json!({"entries": rows_json}), format, || lines.join("\n"));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Lie { input, solver, format } => cmd_lie(input, solver, *format),
        Command::Detsys { input, count_only, format } => {
            cmd_detsys(input, *count_only, *format)
        }
        Command::Check { input, gens, format } => cmd_check(input, gens, *format),
        Command::Algebra { input, gens, solver, format } => {
            cmd_algebra(input, gens, solver, *format)
        }
        Command::Qp { what } => cmd_qp(what),
        Command::Noether { lagrangian, degree, format } => {
            cmd_noether(lagrangian, *degree, *format)
        }
        Command::Bench { corpus, solver, format } => cmd_bench(corpus, solver, *format),
    }
}

fn main() -> ExitCode {
    // command-line usage errors share exit code 1 with input parse errors;
    // code 2 is reserved for non-orthonomic systems
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
