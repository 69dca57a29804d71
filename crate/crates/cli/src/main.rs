//! `hjsvd`: strategies, solver runs, the distributed simulation, test
//! fixtures, the rotation survey and benchmark tables.

mod error;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hjsvd::distsim::{run_distributed, trace_csv, DistConfig};
use hjsvd::driver::{block_jacobi, SolverConfig, Variant};
use hjsvd::io;
use hjsvd::kernel::Shortening;
use hjsvd::rotation::{departure_survey, RotationKind, Survey};
use hjsvd::strategy::{
    expand_pstrategy, generate, parse_strategy, reverse_pstrategy, write_strategy, CyclicKind,
    SearchLimits, StrategyKind,
};
use hjsvd::testgen::{gen_fixture, relative_error, SpectrumSpec};
use hjsvd::{ColumnMatrix, Signature};

use error::{read_file, write_file, CliError};
use report::{ConfigEcho, DistEcho, RunReport};

#[derive(Parser, Debug)]
#[command(name = "hjsvd", version, about = "Blocked one-sided Jacobi SVD and hyperbolic SVD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or check parallel pivot strategies.
    #[command(subcommand)]
    Strategy(StrategyCmd),
    /// Run the solver.
    #[command(subcommand)]
    Svd(SvdCmd),
    /// Write a test factor with a known spectrum.
    Testgen(TestgenArgs),
    /// Rotation accuracy studies.
    #[command(subcommand)]
    Rotation(RotationCmd),
    /// Sweep orders, spectrum types and variants; CSV to stdout or --out.
    Bench(BenchArgs),
}

#[derive(Subcommand, Debug)]
enum StrategyCmd {
    /// Print a strategy table.
    Gen {
        #[arg(long, value_parser = parse_kind)]
        kind: StrategyKind,
        #[arg(long)]
        n: usize,
        /// Double the order this many times by expansion.
        #[arg(long, default_value_t = 0)]
        expand: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a strategy table.
    Check { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum SvdCmd {
    /// Single-node blocked solver.
    Run(RunArgs),
    /// Simulated multi-worker solver.
    Dist {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        workers: usize,
        /// Exchange trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// The first worker to finish its inner solve stops the others.
        #[arg(long)]
        hybrid_early_stop: bool,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Binary `.mat` or `.csv` matrix.
    #[arg(long)]
    input: PathBuf,
    /// Count of positive signs in J; defaults to the file's signature, else all positive.
    #[arg(long)]
    nplus: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Spectrum CSV; adds the relative eigenvalue error to the report.
    #[arg(long)]
    lambda: Option<PathBuf>,
    /// Report path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum VariantArg {
    Fb,
    Bo,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ShorteningArg {
    Chol,
    Qr,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "bo")]
    variant: VariantArg,
    /// Outer and inner strategy: row, col, rrow, rcol, bl or mm.
    #[arg(long, env = "HJSVD_STRATEGY", default_value = "rrow", value_parser = parse_kind)]
    strategy: StrategyKind,
    /// Columns per block-column.
    #[arg(long, env = "HJSVD_WIDTH", default_value_t = 32)]
    width: usize,
    #[arg(long, value_enum, default_value = "chol")]
    shortening: ShorteningArg,
    /// Accumulate V.
    #[arg(long)]
    accumulate_v: bool,
    /// Recover V by a triangular solve instead; needs an upper-triangular input.
    #[arg(long)]
    solve_v: bool,
    #[arg(long, default_value_t = 30)]
    max_sweeps: usize,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            block_width: self.width,
            variant: variant(self.variant),
            max_block_sweeps: self.max_sweeps,
            outer_strategy: self.strategy,
            inner_strategy: self.strategy,
            accumulate_v: self.accumulate_v || self.solve_v,
            solve_for_v: self.solve_v,
            shortening: match self.shortening {
                ShorteningArg::Chol => Shortening::Cholesky,
                ShorteningArg::Qr => Shortening::Qr,
            },
            threads: self.threads,
        }
    }
}

#[derive(Args, Debug)]
struct TestgenArgs {
    /// Spectrum type, 1 to 4.
    #[arg(long = "type")]
    kind: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Spectrum CSV, sorted to match the signature.
    #[arg(long)]
    lambda: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    Trig,
    Hyp,
    Both,
}

#[derive(Subcommand, Debug)]
enum RotationCmd {
    /// Mean departure from exact orthogonality per exponent of cot 2phi.
    Survey {
        #[arg(long, value_enum, default_value = "both")]
        kind: KindArg,
        #[arg(long, default_value_t = 1 << 16)]
        samples: usize,
        #[arg(long, default_value_t = -53, allow_hyphen_values = true)]
        emin: i32,
        #[arg(long, default_value_t = 53, allow_hyphen_values = true)]
        emax: i32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    orders: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    types: Vec<u8>,
    #[arg(long, value_delimiter = ',', value_enum, default_value = "fb,bo")]
    variants: Vec<VariantArg>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, env = "HJSVD_WIDTH", default_value_t = 32)]
    width: usize,
    #[arg(long, env = "HJSVD_STRATEGY", default_value = "rrow", value_parser = parse_kind)]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<StrategyKind, String> {
    match StrategyKind::from_short_name(s) {
        Some(StrategyKind::Custom) | None => Err(format!("unknown strategy {s:?}; use row, col, rrow, rcol, bl or mm")),
        Some(k) => Ok(k),
    }
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Fb => Variant::FullBlock,
        VariantArg::Bo => Variant::BlockOriented,
    }
}

fn shortening_name(s: Shortening) -> &'static str {
    match s {
        Shortening::Cholesky => "chol",
        Shortening::Qr => "qr",
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn strategy_gen(kind: StrategyKind, n: usize, expand: u32) -> Result<String, CliError> {
    let limits = SearchLimits::default();
    if expand == 0 {
        return Ok(write_strategy(&generate(kind, n, &limits)?));
    }
    let (base, cyclic, reversed) = match kind {
        StrategyKind::RowClosest => (kind, CyclicKind::Row, false),
        StrategyKind::ColClosest => (kind, CyclicKind::Col, false),
        StrategyKind::ReversedRow => (StrategyKind::RowClosest, CyclicKind::Row, true),
        StrategyKind::ReversedCol => (StrategyKind::ColClosest, CyclicKind::Col, true),
        _ => return Err(CliError::Usage(format!("--expand needs a closest strategy kind, not {kind}"))),
    };
    let mut s = generate(base, n, &limits)?;
    for _ in 0..expand {
        s = expand_pstrategy(&s, cyclic)?;
    }
    if reversed {
        s = reverse_pstrategy(&s);
    }
    Ok(write_strategy(&s))
}

fn strategy_check(file: &Path) -> Result<String, CliError> {
    let text = read_file(file)?;
    let s = parse_strategy(&text, StrategyKind::Custom)?;
    Ok(format!("valid: n = {}, {} steps of {} pairs\n", s.order(), s.steps().len(), s.order() / 2))
}

struct Loaded {
    g: ColumnMatrix,
    sig: Signature,
    lambda: Option<Vec<f64>>,
}

fn load(run: &RunArgs) -> Result<Loaded, CliError> {
    let (g, file_sig) = io::load_matrix(&run.input).map_err(|source| CliError::MatrixFile {
        path: run.input.display().to_string(),
        source,
    })?;
    let sig = match run.nplus {
        Some(np) => Signature::new(g.cols(), np)
            .ok_or_else(|| CliError::Usage(format!("--nplus {np} exceeds {} columns", g.cols())))?,
        None => file_sig.unwrap_or_else(|| Signature::definite(g.cols())),
    };
    let lambda = match &run.lambda {
        Some(p) => Some(io::vector_from_csv(&read_file(p)?).map_err(|source| CliError::MatrixFile {
            path: p.display().to_string(),
            source,
        })?),
        None => None,
    };
    Ok(Loaded { g, sig, lambda })
}

fn echo(run: &RunArgs, l: &Loaded, cfg: &SolverConfig, workers: Option<usize>) -> ConfigEcho {
    ConfigEcho {
        input: run.input.display().to_string(),
        rows: l.g.rows(),
        cols: l.g.cols(),
        n_plus: l.sig.n_plus(),
        variant: cfg.variant.short_name(),
        strategy: cfg.outer_strategy.short_name(),
        width: cfg.block_width,
        shortening: shortening_name(cfg.shortening),
        accumulate_v: cfg.accumulate_v,
        solve_v: cfg.solve_for_v,
        max_sweeps: cfg.max_block_sweeps,
        threads: cfg.threads,
        workers,
    }
}

fn error_metric(l: &Loaded, sigma: &[f64], sig: Signature) -> Result<Option<f64>, CliError> {
    l.lambda
        .as_ref()
        .map(|lam| relative_error(sigma, sig, lam))
        .transpose()
        .map_err(CliError::from)
}

fn svd_run(run: &RunArgs) -> Result<(), CliError> {
    let l = load(run)?;
    let cfg = run.solver.config();
    let start = Instant::now();
    let res = block_jacobi(&l.g, l.sig, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let error = error_metric(&l, &res.sigma, res.signature)?;
    let report = RunReport::new("svd run", echo(run, &l, &cfg, None), &res, error, wall);
    emit(run.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn svd_dist(run: &RunArgs, workers: usize, trace: Option<&Path>, hybrid: bool) -> Result<(), CliError> {
    let l = load(run)?;
    let cfg = DistConfig {
        workers,
        solver: run.solver.config(),
        hybrid_early_stop: hybrid,
    };
    let start = Instant::now();
    let d = run_distributed(&l.g, l.sig, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(p) = trace {
        write_file(p, trace_csv(&d.trace).as_bytes())?;
    }
    let error = error_metric(&l, &d.result.sigma, d.result.signature)?;
    let mut report = RunReport::new("svd dist", echo(run, &l, &cfg.solver, Some(workers)), &d.result, error, wall);
    report.distributed = Some(DistEcho {
        fast_exchange_count: d.mapping.fast_exchange_count,
        fast_sends: d.mapping.fast_sends,
        g_messages: d.g_messages,
        v_messages: d.v_messages,
    });
    emit(run.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn testgen(a: &TestgenArgs) -> Result<(), CliError> {
    let f = gen_fixture(SpectrumSpec {
        kind: a.kind,
        n: a.n,
        seed: a.seed,
    })?;
    io::write_matrix(&a.out, &f.g, Some(f.signature)).map_err(|source| CliError::MatrixFile {
        path: a.out.display().to_string(),
        source,
    })?;
    if let Some(p) = &a.lambda {
        write_file(p, io::vector_to_csv(&f.lambda).as_bytes())?;
    }
    Ok(())
}

fn survey_rows(s: &Survey, out: &mut String) {
    let name = match s.kind {
        RotationKind::Trig => "trig",
        RotationKind::Hyperbolic => "hyp",
    };
    for r in &s.rows {
        out.push_str(&format!("{name},{},{:e},{:e}\n", r.exponent, r.mean_cs1, r.mean_cs2));
    }
    out.push_str(&format!("{name},all,{:e},{:e}\n", s.mean_cs1, s.mean_cs2));
}

fn rotation_survey(kind: KindArg, samples: usize, emin: i32, emax: i32, seed: u64) -> Result<String, CliError> {
    let kinds: &[RotationKind] = match kind {
        KindArg::Trig => &[RotationKind::Trig],
        KindArg::Hyp => &[RotationKind::Hyperbolic],
        KindArg::Both => &[RotationKind::Trig, RotationKind::Hyperbolic],
    };
    let mut out = String::from("kind,exponent,mean_cs1,mean_cs2\n");
    for &k in kinds {
        survey_rows(&departure_survey(k, emin..=emax, samples, seed)?, &mut out);
    }
    Ok(out)
}

fn bench(a: &BenchArgs) -> Result<String, CliError> {
    let mut out = String::from("n,type,variant,width,block_sweeps,rotations,proper_rotations,error,seconds\n");
    for &n in &a.orders {
        for &kind in &a.types {
            let f = gen_fixture(SpectrumSpec { kind, n, seed: a.seed })?;
            for &v in &a.variants {
                let cfg = SolverConfig {
                    block_width: a.width,
                    variant: variant(v),
                    outer_strategy: a.strategy,
                    inner_strategy: a.strategy,
                    threads: a.threads,
                    ..SolverConfig::default()
                };
                let start = Instant::now();
                let res = block_jacobi(&f.g, f.signature, &cfg)?;
                let secs = start.elapsed().as_secs_f64();
                let err = relative_error(&res.sigma, res.signature, &f.lambda)?;
                out.push_str(&format!(
                    "{n},{kind},{},{},{},{},{},{err:e},{secs:.3}\n",
                    cfg.variant.short_name(),
                    a.width,
                    res.block_sweeps,
                    res.total_rotations(),
                    res.total_proper_rotations()
                ));
            }
        }
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Strategy(StrategyCmd::Gen { kind, n, expand, out }) => emit(out.as_deref(), &strategy_gen(kind, n, expand)?),
        Command::Strategy(StrategyCmd::Check { file }) => emit(None, &strategy_check(&file)?),
        Command::Svd(SvdCmd::Run(run)) => svd_run(&run),
        Command::Svd(SvdCmd::Dist {
            run,
            workers,
            trace,
            hybrid_early_stop,
        }) => svd_dist(&run, workers, trace.as_deref(), hybrid_early_stop),
        Command::Testgen(a) => testgen(&a),
        Command::Rotation(RotationCmd::Survey {
            kind,
            samples,
            emin,
            emax,
            seed,
            out,
        }) => emit(out.as_deref(), &rotation_survey(kind, samples, emin, emax, seed)?),
        Command::Bench(a) => emit(a.out.as_deref(), &bench(&a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hjsvd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
