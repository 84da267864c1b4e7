//! `pmx` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 solver or runtime failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pmx::certify::{verify_certificate, Certificate, FunctionalSpec, ToleranceProfile, VerificationReport};
use pmx::channels::{encode_instrument, realify_operator, InstrumentSet};
use pmx::operator_algebra::Operator;
use pmx::optimize::{seesaw, Backend, SeesawConfig};
use pmx::pauli::{decompose, forbidden_coefficients};
use pmx::process::{
    born_probabilities, born_probabilities_n, lgyni, rqt_embed_process, validate_process, CorrelationFunctional,
    Distribution, ProcessMatrix, Theory, Tolerances, ValidationReport,
};
use pmx::twirl::{cyclic_cayley, s3_cayley, simulate_qt_in_twirled, GroupRep};
use pmx::Error;

const SCHEMA: u64 = 1;
/// Coefficients at or below this magnitude are not listed by `decompose`.
const COEFF_FLOOR: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "pmx", version, about = "Process-matrix toolkit: certificates, see-saw search and diagnostics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Print a machine-readable report on stdout
    #[arg(long, global = true, help_heading = "Global options")]
    json: bool,
    /// Omit timing metadata from reports and written files
    #[arg(long, global = true, help_heading = "Global options")]
    no_meta: bool,
    /// Allowed magnitude of negative eigenvalues
    #[arg(long, global = true, help_heading = "Global options", value_name = "TOL")]
    tol_psd: Option<f64>,
    /// Allowed affine (trace, residual, TP, symmetry) violation
    #[arg(long, global = true, help_heading = "Global options", value_name = "TOL")]
    tol_affine: Option<f64>,
    /// Allowed probability and functional-value violation
    #[arg(long, global = true, help_heading = "Global options", value_name = "TOL")]
    tol_prob: Option<f64>,
    /// SDP backend
    #[arg(long, global = true, help_heading = "Global options", env = "PMX_SOLVER", default_value = "clarabel", value_parser = ["clarabel", "ipm"])]
    solver: String,
    /// Cap on parallel see-saw restarts [default: hardware parallelism]
    #[arg(long, global = true, help_heading = "Global options", value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recompute every residual of a certificate
    Verify {
        /// Certificate JSON
        cert: PathBuf,
    },
    /// Run the see-saw search and write a certificate
    Seesaw {
        /// Theory of the process and instruments
        #[arg(long, default_value = "rqt", value_parser = ["rqt", "qt"])]
        theory: String,
        /// Seed of the per-restart random streams
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Independent restarts
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Sweeps per restart
        #[arg(long, default_value_t = 20)]
        sweeps: usize,
        /// Instrument alternations per sweep
        #[arg(long, default_value_t = 5)]
        inner: usize,
        /// Certificate output path
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Per-restart value trace output path
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pauli coefficients of a qubit operator, process or certificate
    Decompose {
        /// Operator, process or certificate JSON
        input: PathBuf,
        /// List only coefficients on forbidden bipartite supports
        #[arg(long)]
        forbidden: bool,
        /// Number of largest coefficients to list (0 lists all)
        #[arg(long, default_value_t = 12)]
        top: usize,
    },
    /// Evaluate the LGYNI functional on a distribution or certificate
    Lgyni {
        /// Distribution or certificate JSON
        input: PathBuf,
    },
    /// Born-rule distribution of a process and one instrument set per party
    Born {
        /// Process JSON
        process: PathBuf,
        /// One instrument set per party
        #[arg(required = true)]
        instruments: Vec<PathBuf>,
        /// Distribution output path
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Validate a process matrix against its theory
    Validate {
        /// Process JSON
        process: PathBuf,
    },
    /// Realify an operator, encode an instrument set or embed an ordinary process
    Realify {
        /// Operator, instrument set or ordinary process JSON
        input: PathBuf,
        /// Output path
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate an ordinary experiment inside a twirled world
    TwirlSim {
        /// Ordinary process JSON
        process: PathBuf,
        /// One instrument set per party
        #[arg(required = true)]
        instruments: Vec<PathBuf>,
        /// z2, z3, s3 or a group JSON file
        #[arg(long)]
        group: String,
        /// Output path for the simulating process
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    let tol = profile(g)?;
    match &cli.command {
        Command::Verify { cert } => cmd_verify(g, &tol, cert),
        Command::Seesaw { theory, seed, restarts, sweeps, inner, out, trace } => {
            let theory = if theory == "qt" { Theory::Qt } else { Theory::Rqt };
            let mut cfg = SeesawConfig::new(theory, CorrelationFunctional::lgyni());
            cfg.seed = *seed;
            cfg.restarts = *restarts;
            cfg.sweeps = *sweeps;
            cfg.inner = *inner;
            cfg.backend = Backend::from_name(&g.solver).map_err(|e| Failure::usage(e.to_string()))?;
            cfg.threads = g.threads.map(|t| t as usize);
            cmd_seesaw(g, &tol, &cfg, out.as_deref(), trace.as_deref())
        }
        Command::Decompose { input, forbidden, top } => cmd_decompose(g, input, *forbidden, *top),
        Command::Lgyni { input } => cmd_lgyni(g, input),
        Command::Born { process, instruments, out } => cmd_born(g, process, instruments, out.as_deref()),
        Command::Validate { process } => cmd_validate(g, &tol, process),
        Command::Realify { input, out } => cmd_realify(g, input, out),
        Command::TwirlSim { process, instruments, group, out } => {
            cmd_twirl_sim(g, &tol, process, instruments, group, out.as_deref())
        }
    }
}

fn profile(g: &Global) -> std::result::Result<ToleranceProfile, Failure> {
    let mut t = ToleranceProfile::default();
    if let Some(v) = g.tol_psd {
        t.psd_min_eig = v;
    }
    if let Some(v) = g.tol_affine {
        t.affine_max = v;
        t.tp_max = v;
    }
    if let Some(v) = g.tol_prob {
        t.prob_max = v;
        t.value_abs = v;
    }
    t.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(t)
}

fn process_tolerances(t: &ToleranceProfile) -> Tolerances {
    Tolerances { psd: t.psd_min_eig, affine: t.affine_max, ..Tolerances::default() }
}

fn read_json(path: &Path) -> std::result::Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::Io(e)))?;
    serde_json::from_str(&text).map_err(|e| Failure::from(Error::Format(format!("{}: {e}", path.display()))))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, value: &Value) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Failure::from(Error::Io(e));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::Json(e)))?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.write_all(b"\n").map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(command: &str, body: Value) {
    let mut report = json!({ "schema": SCHEMA, "command": command });
    if let (Value::Object(r), Value::Object(b)) = (&mut report, body) {
        r.extend(b);
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
}

fn load_process(path: &Path) -> std::result::Result<ProcessMatrix, Failure> {
    let v = read_json(path)?;
    process_from(&v, path)
}

/// Group paths inside a process file resolve relative to that file.
fn process_from(v: &Value, path: &Path) -> std::result::Result<ProcessMatrix, Failure> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(ProcessMatrix::from_json(v, |p| {
        let text = std::fs::read_to_string(base.join(p))?;
        GroupRep::from_json(&serde_json::from_str(&text)?)
    })?)
}

fn load_instruments(paths: &[PathBuf]) -> std::result::Result<Vec<InstrumentSet>, Failure> {
    paths.iter().map(|p| Ok(InstrumentSet::from_json(&read_json(p)?)?)).collect()
}

fn print_rows(report: &VerificationReport) {
    let width = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &report.rows {
        let (mark, op) = (if r.passed { "PASS" } else { "FAIL" }, if r.lower_bound { ">=" } else { "<=" });
        println!("{mark}  {:<width$}  {:>11.3e}  {op} {:.1e}", r.name, r.measured, r.threshold);
    }
}

fn print_checks(report: &ValidationReport) {
    let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &report.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
        println!("{mark}  {:<width$}  {:>11.3e}  vs {:.1e}{note}", c.name, c.measured, c.threshold);
    }
}

fn checks_json(report: &ValidationReport) -> Value {
    let rows: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "measured": c.measured, "threshold": c.threshold, "passed": c.passed, "note": c.note }))
        .collect();
    json!({ "passed": report.passed(), "checks": rows })
}

fn failing_names(report: &VerificationReport) -> String {
    report.failing().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ")
}

fn cmd_verify(g: &Global, tol: &ToleranceProfile, path: &Path) -> Outcome {
    let v = read_json(path).map_err(|f| if f.code == 3 && path.exists() { Failure::check(f.message) } else { f })?;
    let cert = Certificate::from_json(&v).map_err(|e| Failure::check(format!("certificate format: {e}")))?;
    let start = Instant::now();
    let report = verify_certificate(&cert, tol);
    let elapsed = start.elapsed().as_secs_f64();
    if g.json {
        let mut body = json!({ "report": report.to_json(), "value": cert.value });
        if !g.no_meta {
            body["elapsed_seconds"] = json!(elapsed);
        }
        emit("verify", body);
    } else {
        print_rows(&report);
        println!("value {:.13}", cert.value);
        println!("certificate {}", if report.passed() { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::check(format!("failing rows: {}", failing_names(&report))))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn cmd_seesaw(g: &Global, tol: &ToleranceProfile, cfg: &SeesawConfig, out: Option<&Path>, trace: Option<&Path>) -> Outcome {
    let start = Instant::now();
    let result = seesaw(cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), json!(format!("pmx {}", env!("CARGO_PKG_VERSION"))));
    meta.insert("solver".to_string(), json!(cfg.backend.name()));
    meta.insert("seed".to_string(), json!(cfg.seed.to_string()));
    meta.insert("restarts".to_string(), json!(cfg.restarts));
    meta.insert("sweeps".to_string(), json!(cfg.sweeps));
    meta.insert("inner".to_string(), json!(cfg.inner));
    meta.insert("best_restart".to_string(), json!(result.restart));
    if !g.no_meta {
        meta.insert("elapsed_seconds".to_string(), json!(elapsed));
        meta.insert("created_unix".to_string(), json!(unix_now()));
    }
    let cert = Certificate::assemble(result.w, result.ma, result.mb, FunctionalSpec::Lgyni, meta)?;
    let report = verify_certificate(&cert, tol);
    let traces: Vec<Value> = result
        .traces
        .iter()
        .map(|t| json!({ "restart": t.restart, "values": t.values, "failed_sweeps": t.failed_sweeps, "discarded": t.discarded }))
        .collect();
    if let Some(p) = out {
        write_atomic(p, &cert.to_json())?;
    }
    if let Some(p) = trace {
        write_atomic(p, &json!({ "schema": SCHEMA, "traces": traces }))?;
    }
    if g.json {
        let mut body = json!({
            "value": cert.value,
            "best_restart": result.restart,
            "traces": traces,
            "verification": report.to_json(),
        });
        if out.is_none() {
            body["certificate"] = cert.to_json();
        }
        if !g.no_meta {
            body["elapsed_seconds"] = json!(elapsed);
        }
        emit("seesaw", body);
    } else {
        for t in &result.traces {
            match t.best() {
                Some(b) if !t.discarded => println!("restart {:>3}  best {b:.13}  failed sweeps {}", t.restart, t.failed_sweeps),
                _ => println!("restart {:>3}  discarded", t.restart),
            }
        }
        println!("lgyni {:.13} (restart {})", cert.value, result.restart);
        println!("verification {}", if report.passed() { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::check(format!("certificate rows failing: {}", failing_names(&report))))
    }
}

/// Operator inside an operator, process or certificate document.
fn operator_in(v: &Value, path: &Path) -> std::result::Result<Operator, Failure> {
    if let Some(p) = v.get("process") {
        return Ok(process_from(p, path)?.into_operator());
    }
    if v.get("theory").is_some() {
        return Ok(process_from(v, path)?.into_operator());
    }
    Ok(Operator::from_json(v)?)
}

fn cmd_decompose(g: &Global, path: &Path, forbidden: bool, top: usize) -> Outcome {
    let op = operator_in(&read_json(path)?, path)?;
    let take = if top == 0 { usize::MAX } else { top };
    let rows: Vec<(String, f64, f64)> = if forbidden {
        forbidden_coefficients(&op)?.into_iter().take(take).map(|(s, c)| (s.label(), c, 0.0)).collect()
    } else {
        let mut all: Vec<(String, f64, f64)> = decompose(&op)?
            .iter()
            .filter(|(_, c)| c.norm() > COEFF_FLOOR)
            .map(|(s, c)| (s.label(), c.re, c.im))
            .collect();
        all.sort_by(|a, b| b.1.hypot(b.2).total_cmp(&a.1.hypot(a.2)).then_with(|| a.0.cmp(&b.0)));
        all.truncate(take);
        all
    };
    if g.json {
        let list: Vec<Value> = rows.iter().map(|(l, re, im)| json!({ "label": l, "re": re, "im": im })).collect();
        emit("decompose", json!({ "systems": op.names(), "forbidden_only": forbidden, "coefficients": list }));
    } else {
        println!("systems {}", op.names().join(","));
        for (l, re, im) in &rows {
            if *im == 0.0 {
                println!("{l}  {re:+.12e}");
            } else {
                println!("{l}  {re:+.12e}  {im:+.12e}i");
            }
        }
    }
    Ok(())
}

fn cmd_lgyni(g: &Global, path: &Path) -> Outcome {
    let v = read_json(path)?;
    let dist = Distribution::from_json(v.get("distribution").unwrap_or(&v))?;
    let value = lgyni(&dist)?;
    if g.json {
        emit("lgyni", json!({ "value": value }));
    } else {
        println!("{value:.13}");
    }
    Ok(())
}

fn cmd_born(g: &Global, process: &Path, instruments: &[PathBuf], out: Option<&Path>) -> Outcome {
    let w = load_process(process)?;
    let sets = load_instruments(instruments)?;
    let dist = if sets.len() == 2 {
        born_probabilities(&w, &sets[0], &sets[1])?
    } else {
        born_probabilities_n(&w, &sets.iter().collect::<Vec<_>>())?
    };
    if let Some(p) = out {
        write_atomic(p, &dist.to_json())?;
    }
    if g.json {
        emit("born", json!({ "distribution": dist.to_json() }));
    } else if out.is_none() {
        println!("{}", serde_json::to_string_pretty(&dist.to_json()).expect("serializable distribution"));
    }
    Ok(())
}

fn cmd_validate(g: &Global, tol: &ToleranceProfile, path: &Path) -> Outcome {
    let w = load_process(path)?;
    let report = validate_process(&w, &process_tolerances(tol))?;
    if g.json {
        emit("validate", json!({ "theory": w.theory().name(), "report": checks_json(&report) }));
    } else {
        print_checks(&report);
        println!("{} process {}", w.theory().name(), if report.passed() { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::check(format!("invalid process: {}", report.summary())))
    }
}

fn cmd_realify(g: &Global, path: &Path, out: &Path) -> Outcome {
    let v = read_json(path)?;
    let (kind, result) = if v.get("elements").is_some() {
        ("instrument", encode_instrument(&InstrumentSet::from_json(&v)?)?.to_json())
    } else if v.get("theory").is_some() {
        ("process", rqt_embed_process(&process_from(&v, path)?)?.to_json(None))
    } else {
        ("operator", realify_operator(&Operator::from_json(&v)?)?.to_json())
    };
    write_atomic(out, &result)?;
    if g.json {
        emit("realify", json!({ "kind": kind, "output": out.display().to_string() }));
    } else {
        println!("realified {kind} written to {}", out.display());
    }
    Ok(())
}

fn group_arg(spec: &str) -> std::result::Result<GroupRep, Failure> {
    let cayley = match spec {
        "z2" => cyclic_cayley(2),
        "z3" => cyclic_cayley(3),
        "s3" => s3_cayley(),
        path => return Ok(GroupRep::from_json(&read_json(Path::new(path))?)?),
    };
    Ok(GroupRep::new(cayley, BTreeMap::new())?)
}

fn cmd_twirl_sim(
    g: &Global,
    tol: &ToleranceProfile,
    process: &Path,
    instruments: &[PathBuf],
    group: &str,
    out: Option<&Path>,
) -> Outcome {
    let w = load_process(process)?;
    let sets = load_instruments(instruments)?;
    let rep = group_arg(group)?;
    let sim = simulate_qt_in_twirled(&w, &sets.iter().collect::<Vec<_>>(), &rep)?;
    if let Some(p) = out {
        write_atomic(p, &sim.w_hat.to_json(None))?;
    }
    let ok = sim.max_deviation <= tol.prob_max && sim.validation.passed();
    if g.json {
        emit(
            "twirl-sim",
            json!({
                "group_order": rep.order(),
                "max_deviation": sim.max_deviation,
                "invariance_deviation": sim.invariance_deviation,
                "validation": checks_json(&sim.validation),
                "passed": ok,
            }),
        );
    } else {
        println!("group order {}", rep.order());
        println!("max |p_sim - p| {:.3e}", sim.max_deviation);
        println!("invariance deviation {:.3e}", sim.invariance_deviation);
        print_checks(&sim.validation);
        println!("simulation {}", if ok { "PASS" } else { "FAIL" });
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::check("simulation does not reproduce the experiment"))
    }
}
