//! Command implementations behind the `modeswap` binary.
//!
//! Modes are numbered from 1 on the command line and in every report this
//! crate writes; the library underneath counts from 0.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use modeswap::export::{parse_matrix, write_matrix, SequenceDocument};
use modeswap::sim::{verify_decoupled, verify_swap_with, verify_transfer};
use modeswap::symplectic::symplectic_residual;
use modeswap::{
    build_swap, build_transducer, decouple_mode, genericity_report, genericize,
    random_generic_symplectic, BuildOptions, Error, GenericityReport, Mat, ProtocolSequence, Real,
    SymplecticMatrix,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_SYMPLECTIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_GENERIC: i32 = 4;
pub const EXIT_UNSATISFIABLE: i32 = 5;

/// Random probes used by the behavioural checks.
const ORACLE_TRIALS: usize = 16;

#[derive(Debug, Parser)]
#[command(
    name = "modeswap",
    version,
    about = "Decoupling, transduction and swap sequences for a fixed multimode coupler"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Relative tolerance for structural zeros and pinned entries.
    #[arg(long, global = true, default_value_t = f64::ZERO_TOL)]
    pub tolerance: f64,
    /// Tolerance on |S Omega S^T - Omega| when loading a matrix.
    #[arg(long, global = true, default_value_t = f64::SYMPLECTIC_TOL)]
    pub sym_tolerance: f64,
    /// Seed for generation, genericizing layers and oracle probes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Repeat a non-generic coupler with random local layers until generic.
    #[arg(long, global = true)]
    pub genericize: bool,
    /// Mode (1-based) that may only be rotated, never squeezed.
    #[arg(long, global = true)]
    pub relax_mode: Option<usize>,
    /// Write the output document here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Summary)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Human-readable lines; the full report still goes to `--out` if given.
    Summary,
    /// The JSON report.
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a matrix file is symplectic and report genericity.
    Verify { file: PathBuf },
    /// Write a random generic symplectic matrix.
    Gen { n_modes: usize },
    /// Decouple one mode from all others (4 copies).
    Decouple { file: PathBuf, mode: usize },
    /// Route one mode onto another (4 copies). Defaults to first -> last.
    Transduce {
        file: PathBuf,
        from: Option<usize>,
        to: Option<usize>,
    },
    /// Exchange two modes (16 copies).
    Swap { file: PathBuf, i: usize, j: usize },
}

/// A failed command: exit code plus message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub genericity: Option<GenericitySummary>,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            genericity: None,
        }
    }
}

fn library_failure(e: Error) -> Failure {
    let code = match &e {
        Error::NotSymplectic { .. } => EXIT_NOT_SYMPLECTIC,
        Error::InvalidDimension(_) | Error::InvalidParameter(_) | Error::Format(_) => EXIT_USAGE,
        Error::EdgeCase { .. } => EXIT_NOT_GENERIC,
        _ => EXIT_UNSATISFIABLE,
    };
    let genericity = match &e {
        Error::EdgeCase { report, .. } => Some(GenericitySummary::from(report.as_ref())),
        _ => None,
    };
    Failure {
        code,
        message: e.to_string(),
        genericity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSubvectorSummary {
    pub kind: String,
    /// 1-based row or column of the matrix.
    pub index: usize,
    pub mode: usize,
}

/// Genericity report with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericitySummary {
    pub is_generic: bool,
    /// `[output mode, input mode]` pairs whose 2x2 block vanishes.
    pub vanishing_blocks: Vec<[usize; 2]>,
    pub zero_subvectors: Vec<ZeroSubvectorSummary>,
}

impl From<&GenericityReport> for GenericitySummary {
    fn from(r: &GenericityReport) -> Self {
        Self {
            is_generic: r.is_generic,
            vanishing_blocks: r
                .vanishing_blocks
                .iter()
                .map(|&(k, l)| [k + 1, l + 1])
                .collect(),
            zero_subvectors: r
                .zero_subvectors
                .iter()
                .map(|z| ZeroSubvectorSummary {
                    kind: format!("{:?}", z.kind).to_lowercase(),
                    index: z.index + 1,
                    mode: z.mode + 1,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub command: String,
    pub input_digest: String,
    pub n_modes: usize,
    pub residual: f64,
    pub sym_tolerance: f64,
    pub symplectic: bool,
    pub genericity_tolerance: f64,
    pub genericity: GenericitySummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub pattern: f64,
    pub symplectic: f64,
    pub genericity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub check: String,
    pub passed: bool,
    /// Leakage for decoupling, fit residual for transfers.
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericizeInfo {
    pub power: usize,
    pub vanishing_history: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    /// 1-based modes the command was asked about.
    pub modes: Vec<usize>,
    pub relax_mode: Option<usize>,
    pub input_digest: String,
    pub pattern_verified: bool,
    pub max_pattern_violation: f64,
    pub coupler_count: usize,
    /// Total `|r|` per mode, 1-based order.
    pub squeezing_budget: Vec<f64>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub genericized: Option<GenericizeInfo>,
    pub oracle: OracleResult,
    pub sequence: SequenceDocument,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.pattern_verified && self.oracle.passed
    }
}

/// Everything a command produced, before it is written anywhere.
pub enum Output {
    Verify(VerifyReport),
    Matrix(String),
    Run(Box<RunReport>),
}

impl Output {
    pub fn exit_code(&self) -> i32 {
        match self {
            Output::Verify(r) if !r.symplectic => EXIT_NOT_SYMPLECTIC,
            Output::Run(r) if !r.passed() => EXIT_UNSATISFIABLE,
            _ => EXIT_OK,
        }
    }

    pub fn machine(&self) -> String {
        match self {
            Output::Verify(r) => to_json(r),
            Output::Matrix(text) => text.clone(),
            Output::Run(r) => to_json(r.as_ref()),
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Output::Verify(r) => {
                format!(
                "verify: {} modes, residual {:.3e} ({} at {:e})\ngeneric: {}{}\ninput: sha256 {}\n",
                r.n_modes,
                r.residual,
                if r.symplectic { "symplectic" } else { "NOT symplectic" },
                r.sym_tolerance,
                r.genericity.is_generic,
                vanishing_note(&r.genericity),
                r.input_digest
            )
            }
            Output::Matrix(text) => text.clone(),
            Output::Run(r) => {
                let budget: Vec<String> = r
                    .squeezing_budget
                    .iter()
                    .map(|x| format!("{x:.4}"))
                    .collect();
                let mut s = format!(
                    "{} {:?}: {}\n",
                    r.command,
                    r.modes,
                    if r.passed() { "ok" } else { "FAILED" }
                );
                s += &format!(
                    "pattern {}: {} verified={} max violation {:.3e} (tolerance {:e})\n",
                    r.sequence.pattern,
                    if r.sequence.scale_free {
                        "scale-free"
                    } else {
                        "pinned"
                    },
                    r.pattern_verified,
                    r.max_pattern_violation,
                    r.tolerances.pattern
                );
                s += &format!(
                    "oracle {}: passed={} max residual {:.3e}\n",
                    r.oracle.check, r.oracle.passed, r.oracle.max_residual
                );
                s += &format!("couplers: {}\n", r.coupler_count);
                if let Some(g) = &r.genericized {
                    s += &format!("genericized: power {}\n", g.power);
                }
                s += &format!("squeezing |r| per mode: [{}]\n", budget.join(", "));
                s += &format!("input: sha256 {}\n", r.input_digest);
                s
            }
        }
    }
}

fn vanishing_note(g: &GenericitySummary) -> String {
    if g.vanishing_blocks.is_empty() {
        String::new()
    } else {
        format!(" (vanishing blocks {:?})", g.vanishing_blocks)
    }
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(path: &Path) -> Result<(Mat<f64>, String), Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::new(EXIT_USAGE, format!("{} is not UTF-8", path.display())))?;
    let m = parse_matrix::<f64>(&text).map_err(library_failure)?;
    Ok((m, digest(&bytes)))
}

fn load_symplectic(
    path: &Path,
    common: &Common,
) -> Result<(SymplecticMatrix<f64>, String), Failure> {
    let (m, d) = read_input(path)?;
    let s = SymplecticMatrix::with_tolerance(m, common.sym_tolerance).map_err(library_failure)?;
    Ok((s, d))
}

/// 1-based mode from the command line to a library index.
fn mode_index(mode: usize, n: usize, what: &str) -> Result<usize, Failure> {
    if mode == 0 || mode > n {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("{what} {mode} is out of range 1..={n}"),
        ));
    }
    Ok(mode - 1)
}

pub fn cmd_verify(file: &Path, common: &Common) -> Result<Output, Failure> {
    let (m, input_digest) = read_input(file)?;
    let residual = symplectic_residual(&m).map_err(library_failure)?;
    let genericity = genericity_report(&m, f64::GENERICITY_TOL);
    Ok(Output::Verify(VerifyReport {
        command: "verify".into(),
        input_digest,
        n_modes: m.nrows() / 2,
        residual,
        sym_tolerance: common.sym_tolerance,
        symplectic: residual <= common.sym_tolerance,
        genericity_tolerance: f64::GENERICITY_TOL,
        genericity: GenericitySummary::from(&genericity),
    }))
}

pub fn cmd_gen(n_modes: usize, common: &Common) -> Result<Output, Failure> {
    if n_modes == 0 {
        return Err(Failure::new(EXIT_USAGE, "n_modes must be at least 1"));
    }
    let s = random_generic_symplectic::<f64>(n_modes, common.seed).map_err(library_failure)?;
    Ok(Output::Matrix(write_matrix(s.matrix())))
}

/// What a builder command asks for, in library indices.
enum Task {
    Decouple(usize),
    Transduce(usize, usize),
    Swap(usize, usize),
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Decouple(_) => "decouple",
            Task::Transduce(..) => "transduce",
            Task::Swap(..) => "swap",
        }
    }

    fn modes(&self) -> Vec<usize> {
        match *self {
            Task::Decouple(m) => vec![m + 1],
            Task::Transduce(a, b) | Task::Swap(a, b) => vec![a + 1, b + 1],
        }
    }

    fn build(
        &self,
        s: &SymplecticMatrix<f64>,
        opts: &BuildOptions<f64>,
    ) -> modeswap::Result<ProtocolSequence<f64>> {
        match *self {
            Task::Decouple(m) => decouple_mode(s, m, opts),
            Task::Transduce(a, b) => build_transducer(s, a, b, opts),
            Task::Swap(a, b) => build_swap(s, a, b, opts),
        }
    }

    fn oracle(&self, net: &SymplecticMatrix<f64>, common: &Common) -> OracleResult {
        let tol = common.tolerance;
        match *self {
            Task::Decouple(m) => {
                let c = verify_decoupled(net, m, ORACLE_TRIALS, common.seed);
                OracleResult {
                    check: "verify_decoupled".into(),
                    passed: c.passed,
                    max_residual: c.max_leakage,
                }
            }
            // Two modes routed onto each other are a swap; with more modes
            // only the forward transfer is promised.
            Task::Transduce(a, b) if net.n_modes() > 2 => {
                let c = verify_transfer(net, a, b, ORACLE_TRIALS, common.seed, tol);
                OracleResult {
                    check: "verify_transfer".into(),
                    passed: c.passed,
                    max_residual: c.residual,
                }
            }
            Task::Transduce(a, b) | Task::Swap(a, b) => {
                let c = verify_swap_with(net, a, b, ORACLE_TRIALS, common.seed, tol);
                OracleResult {
                    check: "verify_swap".into(),
                    passed: c.passed,
                    max_residual: c.max_residual(),
                }
            }
        }
    }
}

fn run_builder(file: &Path, task: Task, common: &Common) -> Result<Output, Failure> {
    let (s, input_digest) = load_symplectic(file, common)?;
    let n = s.n_modes();
    let relax = common
        .relax_mode
        .map(|m| mode_index(m, n, "relax mode"))
        .transpose()?;
    let opts = BuildOptions::<f64>::default()
        .with_zero_tol(common.tolerance)
        .with_exempt_mode(relax);

    let generic = genericity_report(s.matrix(), opts.genericity_tol).is_generic;
    let (seq, genericized) = if common.genericize && !generic {
        let g = genericize(&s, common.seed).map_err(library_failure)?;
        let inner = task.build(&g.matrix, &opts).map_err(library_failure)?;
        let seq = g
            .expand(&inner, &s, opts.zero_tol)
            .map_err(library_failure)?;
        let info = GenericizeInfo {
            power: g.power,
            vanishing_history: g.vanishing_history.clone(),
        };
        (seq, Some(info))
    } else {
        (task.build(&s, &opts).map_err(library_failure)?, None)
    };

    let oracle = task.oracle(seq.net(), common);
    let sequence = SequenceDocument::from_sequence(&seq).map_err(library_failure)?;
    Ok(Output::Run(Box::new(RunReport {
        command: task.name().into(),
        modes: task.modes(),
        relax_mode: common.relax_mode,
        input_digest,
        pattern_verified: seq.report().passed(),
        max_pattern_violation: seq.report().max_violation,
        coupler_count: seq.coupler_count(),
        squeezing_budget: sequence.squeezing_budget.clone(),
        tolerances: Tolerances {
            pattern: common.tolerance,
            symplectic: common.sym_tolerance,
            genericity: opts.genericity_tol,
        },
        seed: common.seed,
        genericized,
        oracle,
        sequence,
    })))
}

pub fn cmd_decouple(file: &Path, mode: usize, common: &Common) -> Result<Output, Failure> {
    let n = peek_modes(file, common)?;
    run_builder(file, Task::Decouple(mode_index(mode, n, "mode")?), common)
}

pub fn cmd_transduce(
    file: &Path,
    from: Option<usize>,
    to: Option<usize>,
    common: &Common,
) -> Result<Output, Failure> {
    let n = peek_modes(file, common)?;
    let from = mode_index(from.unwrap_or(1), n, "source mode")?;
    let to = mode_index(to.unwrap_or(n), n, "target mode")?;
    if from == to {
        return Err(Failure::new(EXIT_USAGE, "source and target must differ"));
    }
    run_builder(file, Task::Transduce(from, to), common)
}

pub fn cmd_swap(file: &Path, i: usize, j: usize, common: &Common) -> Result<Output, Failure> {
    if i == j {
        return Err(Failure::new(EXIT_USAGE, "swap needs two distinct modes"));
    }
    let n = peek_modes(file, common)?;
    let a = mode_index(i, n, "mode")?;
    let b = mode_index(j, n, "mode")?;
    run_builder(file, Task::Swap(a, b), common)
}

/// Loads once up front so a bad file is reported before bad mode numbers.
fn peek_modes(file: &Path, common: &Common) -> Result<usize, Failure> {
    load_symplectic(file, common).map(|(s, _)| s.n_modes())
}

pub fn execute(cli: &Cli) -> Result<Output, Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Verify { file } => cmd_verify(file, c),
        Command::Gen { n_modes } => cmd_gen(*n_modes, c),
        Command::Decouple { file, mode } => cmd_decouple(file, *mode, c),
        Command::Transduce { file, from, to } => cmd_transduce(file, *from, *to, c),
        Command::Swap { file, i, j } => cmd_swap(file, *i, *j, c),
    }
}

/// Runs a parsed command line, writing to `stdout`/`stderr` and `--out`.
pub fn run(cli: &Cli, stdout: &mut impl Write, stderr: &mut impl Write) -> i32 {
    let output = match execute(cli) {
        Ok(o) => o,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            if let Some(g) = &f.genericity {
                let _ = write!(stderr, "{}", to_json(g));
            }
            return f.code;
        }
    };
    if let Some(path) = &cli.common.out {
        if let Err(e) = fs::write(path, output.machine()) {
            let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
            return EXIT_IO;
        }
    }
    let text = match (cli.common.format, &cli.common.out) {
        (Format::Summary, _) => Some(output.summary()),
        (Format::Machine, None) => Some(output.machine()),
        (Format::Machine, Some(_)) => None,
    };
    // A matrix written to a file needs no echo.
    let text = match (&output, &cli.common.out) {
        (Output::Matrix(_), Some(_)) => None,
        _ => text,
    };
    if let Some(text) = text {
        if stdout.write_all(text.as_bytes()).is_err() {
            return EXIT_IO;
        }
    }
    output.exit_code()
}
