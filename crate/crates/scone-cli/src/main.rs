//! Command-line front end: circuit listings, exact membership checks,
//! problem assembly/export and witness completion.
//!
//! Exit codes: 0 success/feasible, 1 certified infeasible/non-member,
//! 2 undetermined, 64 usage error, 65 parse error. Human-readable tables go
//! to stderr; machine-readable JSON goes to stdout under `--json`; `build`
//! writes its payload to stdout unless `-o` is given.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use scone::certify::{
    check_dual_circuit, check_primal_circuit, circuit_number, primal_margin, CircuitCoefficients,
};
use scone::circuits::{
    enumerate_circuits_threaded, enumerate_reduced_threaded, is_reduced, Circuit, Parity,
};
use scone::conic::{
    assemble_dual_threaded, assemble_primal_threaded, export_problem, feasibility, ExportFormat,
    FeasibilityResult,
};
use scone::forms::{parse_form, parse_rational, rational_to_string, AGForm, Rat};
use scone::liftrep::{
    odd_extension, primal_circuit_matrix, psd2x2_to_soc, Side, SocOrLinear, VarKind, VarRef,
};
use scone::witness::{complete_primal_witness, verify_blocks, Assignment, VerifyReport};

const EXIT_OK: u8 = 0;
const EXIT_NONMEMBER: u8 = 1;
const EXIT_UNDETERMINED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_PARSE: u8 = 65;

#[derive(Parser)]
#[command(
    name = "scone",
    version,
    about = "Non-negativity certificates for sparse polynomials and exponential sums \
             via second-order representations of rational S-cones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List circuits of a support with exact barycentric data.
    Circuits {
        /// Form in the term grammar, or @FILE.
        input: String,
        /// Only reduced circuits (the generators of the cone).
        #[arg(long)]
        reduced: bool,
        /// Cap on the outer set size (default: dimension + 1).
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Machine-readable JSON on stdout.
        #[arg(long)]
        json: bool,
    },
    /// Exact per-circuit certificates plus an overall membership attempt.
    Check {
        /// Form in the term grammar, or @FILE.
        input: String,
        /// Feasibility tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        json: bool,
    },
    /// Exact dual circuit tests for a coordinate point, plus assembled
    /// dual feasibility.
    CheckDual {
        /// Support given as a form (coefficients are ignored), or @FILE.
        input: String,
        /// Comma-separated coordinates, one per support point in
        /// lexicographic order (|x|-support first, then odd support).
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        json: bool,
    },
    /// Assemble the primal or dual program and emit it.
    Build {
        /// Form in the term grammar, or @FILE.
        input: String,
        #[arg(long, value_enum)]
        side: SideArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        /// Output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Complete and verify a primal lift witness for one reduced circuit.
    Witness {
        /// Form in the term grammar, or @FILE.
        input: String,
        /// Index into the reduced-circuit listing (even circuits first).
        #[arg(long)]
        circuit: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Primal,
    Dual,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Socptext,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn parse(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_PARSE,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(EXIT_USAGE)
                }
            }
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Circuits {
            input,
            reduced,
            max_outer,
            threads,
            json,
        } => cmd_circuits(&input, reduced, max_outer, threads, json),
        Command::Check {
            input,
            tol,
            max_iter,
            threads,
            json,
        } => cmd_check(&input, tol, max_iter, threads, json),
        Command::CheckDual {
            input,
            point,
            tol,
            max_iter,
            threads,
            json,
        } => cmd_check_dual(&input, &point, tol, max_iter, threads, json),
        Command::Build {
            input,
            side,
            format,
            output,
            threads,
        } => cmd_build(&input, side, format, output.as_deref(), threads),
        Command::Witness {
            input,
            circuit,
            tol,
            threads,
            json,
        } => cmd_witness(&input, circuit, tol, threads, json),
    }
}

fn load_form(input: &str) -> Result<AGForm, CliError> {
    let text = if let Some(path) = input.strip_prefix('@') {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("cannot read {path}: {e}")))?
    } else {
        input.to_string()
    };
    parse_form(text.trim()).map_err(|e| CliError::parse(e.to_string()))
}

fn reduced_circuits(form: &AGForm, threads: usize) -> Result<Vec<Circuit>, CliError> {
    let (even, odd) = enumerate_reduced_threaded(form.support(), threads)
        .map_err(|e| CliError::parse(e.to_string()))?;
    Ok(even.into_iter().chain(odd).collect())
}

fn parity_str(parity: Parity) -> &'static str {
    match parity {
        Parity::Even => "even",
        Parity::Odd => "odd",
    }
}

fn lambda_str(circuit: &Circuit) -> String {
    let parts: Vec<String> = circuit
        .bary()
        .lambda()
        .iter()
        .map(rational_to_string)
        .collect();
    format!("({})", parts.join(","))
}

fn rat_to_f64_local(r: &Rat) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn cmd_circuits(
    input: &str,
    reduced_only: bool,
    max_outer: Option<usize>,
    threads: usize,
    json: bool,
) -> Result<u8, CliError> {
    let form = load_form(input)?;
    let support = form.support();
    let cap = max_outer.unwrap_or(support.dim() + 1);
    let even = enumerate_circuits_threaded(
        support,
        support.abs_points(),
        support.abs_points(),
        cap,
        threads,
    )
    .map_err(|e| CliError::parse(e.to_string()))?;
    let odd = enumerate_circuits_threaded(
        support,
        support.abs_points(),
        support.odd_points(),
        cap,
        threads,
    )
    .map_err(|e| CliError::parse(e.to_string()))?;

    let mut rows = Vec::new();
    for circuit in even.iter().chain(odd.iter()) {
        let flag = is_reduced(circuit, support);
        if reduced_only && !flag.is_reduced {
            continue;
        }
        rows.push((circuit.clone(), flag));
    }

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<4} {:<32} {:<6} {:<18} {:>4} {:<14} {:>3} {:<8} blockers",
        "idx", "circuit", "parity", "lambda", "p", "p_alpha", "m", "reduced"
    );
    for (idx, (circuit, flag)) in rows.iter().enumerate() {
        let blockers: Vec<String> = flag.blockers.iter().map(|b| b.label()).collect();
        let _ = writeln!(
            table,
            "{:<4} {:<32} {:<6} {:<18} {:>4} {:<14} {:>3} {:<8} {}",
            idx,
            circuit.to_string(),
            parity_str(circuit.parity()),
            lambda_str(circuit),
            circuit.bary().p(),
            format!("{:?}", circuit.bary().p_alpha()),
            circuit.bary().m(),
            flag.is_reduced,
            blockers.join(",")
        );
    }
    eprint!("{table}");

    if json {
        let items: Vec<serde_json::Value> = rows
            .iter()
            .enumerate()
            .map(|(idx, (circuit, flag))| {
                serde_json::json!({
                    "index": idx,
                    "circuit": circuit.to_string(),
                    "parity": parity_str(circuit.parity()),
                    "lambda": lambda_str(circuit),
                    "p": circuit.bary().p(),
                    "p_alpha": circuit.bary().p_alpha(),
                    "m": circuit.bary().m(),
                    "reduced": flag.is_reduced,
                    "blockers": flag.blockers.iter().map(|b| b.label()).collect::<Vec<_>>(),
                })
            })
            .collect();
        println!("{}", serde_json::Value::Array(items));
    }
    Ok(EXIT_OK)
}

/// Per-circuit certificate row for `check`.
struct CertRow {
    circuit: Circuit,
    number: Option<f64>,
    requirement: f64,
    accepted: Option<bool>,
}

fn certificate_rows(form: &AGForm, circuits: &[Circuit]) -> Vec<CertRow> {
    circuits
        .iter()
        .map(|circuit| {
            let coeffs = CircuitCoefficients::from_form(circuit, form);
            let requirement = match circuit.parity() {
                Parity::Even => (-rat_to_f64_local(coeffs.inner())).max(0.0),
                Parity::Odd => rat_to_f64_local(coeffs.inner()).abs(),
            };
            match check_primal_circuit(&coeffs, circuit) {
                Ok(accepted) => CertRow {
                    circuit: circuit.clone(),
                    number: circuit_number(&coeffs, circuit).ok(),
                    requirement,
                    accepted: Some(accepted),
                },
                // A negative coefficient on the outer set makes the circuit
                // unusable as a certificate for this form.
                Err(_) => CertRow {
                    circuit: circuit.clone(),
                    number: None,
                    requirement,
                    accepted: None,
                },
            }
        })
        .collect()
}

fn print_certificate_table(rows: &[CertRow]) {
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<4} {:<32} {:<6} {:>4} {:>14} {:>14} accept",
        "idx", "circuit", "parity", "p", "circuit_no", "required"
    );
    for (idx, row) in rows.iter().enumerate() {
        let _ = writeln!(
            table,
            "{:<4} {:<32} {:<6} {:>4} {:>14} {:>14} {}",
            idx,
            row.circuit.to_string(),
            parity_str(row.circuit.parity()),
            row.circuit.bary().p(),
            row.number.map_or("-".to_string(), |n| format!("{n:.6}")),
            format!("{:.6}", row.requirement),
            row.accepted.map_or("-".to_string(), |a| a.to_string()),
        );
    }
    eprint!("{table}");
}

enum Verdict {
    Member { method: &'static str },
    NonMember { method: &'static str },
    Undetermined { detail: String },
}

fn decide_membership(
    form: &AGForm,
    circuits: &[Circuit],
    rows: &[CertRow],
    tol: f64,
    max_iter: usize,
    threads: usize,
) -> Result<Verdict, CliError> {
    use num_traits::{Signed, Zero};
    let support = form.support();
    let bad_abs: Vec<_> = support
        .abs_points()
        .iter()
        .filter(|p| form.coeff(p).is_negative())
        .collect();
    let bad_odd: Vec<_> = support
        .odd_points()
        .iter()
        .filter(|p| !form.coeff(p).is_zero())
        .collect();

    // A negative |x|-coefficient or nonzero odd coefficient can only be
    // produced by a circuit with that inner point.
    for point in bad_abs.iter().chain(bad_odd.iter()) {
        if !circuits.iter().any(|c| c.inner() == *point) {
            return Ok(Verdict::NonMember {
                method: "no reduced circuit covers the coefficient",
            });
        }
    }
    if bad_abs.is_empty() && bad_odd.is_empty() {
        return Ok(Verdict::Member {
            method: "all coefficients non-negative (slack terms)",
        });
    }
    // One bad point certified by a single circuit: the rest goes to slacks.
    if bad_abs.len() + bad_odd.len() == 1 {
        let bad = bad_abs.first().or(bad_odd.first()).unwrap();
        let winner = rows
            .iter()
            .any(|row| row.circuit.inner() == *bad && row.accepted == Some(true));
        if winner {
            return Ok(Verdict::Member {
                method: "single-circuit certificate",
            });
        }
        // With exactly one reduced circuit the exact test is conclusive:
        // the decomposition coefficients are bounded by the form's and the
        // circuit test is monotone in them.
        if circuits.len() == 1 && rows[0].accepted == Some(false) {
            return Ok(Verdict::NonMember {
                method: "exact single-circuit test",
            });
        }
    }
    let problem = assemble_primal_threaded(form, threads)
        .map_err(|e| CliError::parse(e.to_string()))?;
    match feasibility(&problem, &Assignment::new(), max_iter, tol) {
        FeasibilityResult::Feasible(_) => Ok(Verdict::Member {
            method: "projection feasibility",
        }),
        FeasibilityResult::InfeasibleHint { residual } => Ok(Verdict::Undetermined {
            detail: format!("projection stalled at residual {residual:.3e} (infeasible hint)"),
        }),
        FeasibilityResult::Undetermined {
            iterations,
            residual,
        } => Ok(Verdict::Undetermined {
            detail: format!("no verdict after {iterations} iterations (residual {residual:.3e})"),
        }),
    }
}

fn cmd_check(
    input: &str,
    tol: f64,
    max_iter: usize,
    threads: usize,
    json: bool,
) -> Result<u8, CliError> {
    let form = load_form(input)?;
    let circuits = reduced_circuits(&form, threads)?;
    let rows = certificate_rows(&form, &circuits);
    print_certificate_table(&rows);

    let verdict = decide_membership(&form, &circuits, &rows, tol, max_iter, threads)?;
    let (verdict_str, method, code) = match &verdict {
        Verdict::Member { method } => ("member", method.to_string(), EXIT_OK),
        Verdict::NonMember { method } => ("non-member", method.to_string(), EXIT_NONMEMBER),
        Verdict::Undetermined { detail } => ("undetermined", detail.clone(), EXIT_UNDETERMINED),
    };
    eprintln!("verdict: {verdict_str} ({method})");

    if json {
        let items: Vec<serde_json::Value> = rows
            .iter()
            .enumerate()
            .map(|(idx, row)| {
                serde_json::json!({
                    "index": idx,
                    "circuit": row.circuit.to_string(),
                    "parity": parity_str(row.circuit.parity()),
                    "p": row.circuit.bary().p(),
                    "circuit_number": row.number,
                    "required": row.requirement,
                    "accepted": row.accepted,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::json!({
                "form": form.to_string(),
                "circuits": items,
                "verdict": verdict_str,
                "method": method,
            })
        );
    }
    Ok(code)
}

fn cmd_check_dual(
    input: &str,
    point: &str,
    tol: f64,
    max_iter: usize,
    threads: usize,
    json: bool,
) -> Result<u8, CliError> {
    use num_traits::Signed;
    let form = load_form(input)?;
    let support = form.support();
    let values: Vec<Rat> = point
        .split(',')
        .map(|part| parse_rational(part.trim()).map_err(|e| CliError::parse(e.to_string())))
        .collect::<Result<_, _>>()?;
    let points: Vec<_> = support.all_points().cloned().collect();
    if values.len() != points.len() {
        return Err(CliError::parse(format!(
            "point has {} coordinates, support has {} points",
            values.len(),
            points.len()
        )));
    }
    let coord: BTreeMap<_, _> = points.iter().cloned().zip(values.iter().cloned()).collect();

    let circuits = reduced_circuits(&form, threads)?;
    let mut all_pass = true;
    let mut rows = Vec::new();
    for circuit in &circuits {
        let restricted = CircuitCoefficients::new(
            circuit,
            circuit.outer().iter().map(|p| coord[p].clone()).collect(),
            coord[circuit.inner()].clone(),
        )
        .expect("outer coefficients parallel to the circuit");
        let ok = check_dual_circuit(&restricted, circuit);
        all_pass &= ok;
        rows.push((circuit, ok));
    }
    let sign_ok = support.abs_points().iter().all(|p| !coord[p].is_negative());
    let member = sign_ok && all_pass;

    let mut table = String::new();
    let _ = writeln!(table, "{:<4} {:<32} {:<6} pass", "idx", "circuit", "parity");
    for (idx, (circuit, ok)) in rows.iter().enumerate() {
        let _ = writeln!(
            table,
            "{:<4} {:<32} {:<6} {}",
            idx,
            circuit.to_string(),
            parity_str(circuit.parity()),
            ok
        );
    }
    eprint!("{table}");
    if !sign_ok {
        eprintln!("sign condition v >= 0 on the |x|-support: violated");
    }

    // Cross-check through the assembled program with pinned coordinates.
    let problem =
        assemble_dual_threaded(support, threads).map_err(|e| CliError::parse(e.to_string()))?;
    let mut pins = Assignment::new();
    for (p, v) in &coord {
        pins.insert(
            VarRef::global(VarKind::DualCoord(p.clone())),
            rat_to_f64_local(v),
        );
    }
    let feas = feasibility(&problem, &pins, max_iter, tol);
    let feas_str = match &feas {
        FeasibilityResult::Feasible(_) => "feasible",
        FeasibilityResult::InfeasibleHint { .. } => "infeasible-hint",
        FeasibilityResult::Undetermined { .. } => "undetermined",
    };
    eprintln!(
        "exact dual membership: {}; assembled feasibility: {feas_str}",
        if member { "member" } else { "non-member" }
    );

    if json {
        let items: Vec<serde_json::Value> = rows
            .iter()
            .enumerate()
            .map(|(idx, (circuit, ok))| {
                serde_json::json!({
                    "index": idx,
                    "circuit": circuit.to_string(),
                    "parity": parity_str(circuit.parity()),
                    "pass": ok,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::json!({
                "point": point,
                "circuits": items,
                "sign_ok": sign_ok,
                "member": member,
                "feasibility": feas_str,
            })
        );
    }
    Ok(if member { EXIT_OK } else { EXIT_NONMEMBER })
}

fn cmd_build(
    input: &str,
    side: SideArg,
    format: FormatArg,
    output: Option<&std::path::Path>,
    threads: usize,
) -> Result<u8, CliError> {
    let form = load_form(input)?;
    let problem = match side {
        SideArg::Primal => assemble_primal_threaded(&form, threads),
        SideArg::Dual => assemble_dual_threaded(form.support(), threads),
    }
    .map_err(|e| CliError::parse(e.to_string()))?;
    let bytes = export_problem(
        &problem,
        match format {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Socptext => ExportFormat::SocpText,
        },
    );
    match output {
        Some(path) => std::fs::write(path, &bytes)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?,
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::usage(format!("cannot write stdout: {e}")))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_witness(
    input: &str,
    circuit_index: usize,
    tol: f64,
    threads: usize,
    json: bool,
) -> Result<u8, CliError> {
    let form = load_form(input)?;
    let circuits = reduced_circuits(&form, threads)?;
    let circuit = circuits.get(circuit_index).ok_or_else(|| {
        CliError::usage(format!(
            "circuit index {circuit_index} out of range ({} reduced circuits)",
            circuits.len()
        ))
    })?;
    let coeffs = CircuitCoefficients::from_form(circuit, &form);
    let witness = match complete_primal_witness(&coeffs, circuit) {
        Ok(Some(witness)) => witness,
        Ok(None) => {
            eprintln!(
                "circuit {circuit} rejects the coefficients: margin {:.6e}",
                primal_margin(&coeffs, circuit).unwrap_or(f64::NAN)
            );
            return Ok(EXIT_NONMEMBER);
        }
        Err(e) => {
            eprintln!("circuit {circuit} is unusable for this form: {e}");
            return Ok(EXIT_NONMEMBER);
        }
    };
    let matrix = primal_circuit_matrix(circuit);
    let mut blocks = matrix.blocks().to_vec();
    if circuit.parity() == Parity::Odd {
        blocks.push(odd_extension(Side::Primal, circuit).expect("odd circuit"));
    }
    let report =
        verify_blocks(&blocks, &witness, tol).expect("completed witness covers all variables");
    print_witness(&witness, &report);

    if json {
        println!(
            "{}",
            serde_json::json!({
                "circuit": circuit.to_string(),
                "witness": witness.to_json(),
                "report": {
                    "ok": report.ok,
                    "worst_block": report.worst_block.map(|t| t.to_string()),
                    "worst_margin": report.worst_margin,
                },
                "constraints": blocks_text(&blocks),
            })
        );
    }
    Ok(if report.ok { EXIT_OK } else { EXIT_UNDETERMINED })
}

fn blocks_text(blocks: &[scone::liftrep::BlockSpec]) -> Vec<String> {
    blocks
        .iter()
        .map(|block| match psd2x2_to_soc(block) {
            SocOrLinear::Linear(_) => format!("{}: linear", block.tag),
            SocOrLinear::Soc(_) => format!("{}: soc", block.tag),
        })
        .collect()
}

fn print_witness(witness: &Assignment, report: &VerifyReport) {
    let mut table = String::new();
    for (var, value) in witness.iter() {
        let _ = writeln!(table, "{:<28} {:.17e}", var.id(), value);
    }
    eprint!("{table}");
    eprintln!(
        "verify: ok={} worst_block={} worst_margin={:.3e}",
        report.ok,
        report
            .worst_block
            .map(|t| t.to_string())
            .unwrap_or_else(|| "-".to_string()),
        report.worst_margin
    );
}
