use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kicnet::analytic::ideal::{below_model_range, limits, r_e2ekic, r_fd, r_pnc, r_pr, to_f64};
use kicnet::analytic::saturation::{solve_fixed_point, SatError, SaturationParams, ZVariant};
use kicnet::experiment::{run_plan, threads_from_env, write_aggregate, write_results, ExperimentError, ExperimentPlan, Sweep};
use kicnet::mac::MacKind;
use kicnet::scenario::Config;
use kicnet::sim::TraceMode;

#[derive(Parser)]
#[command(name = "kicnet", version, about = "E2E-KIC and 802.11 DCF simulator with analytic models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Timeslot throughput of one flow under PR, PNC, FD and E2E-KIC.
    Ideal {
        /// Node counts, e.g. `4..10` or `4,6,8`.
        #[arg(long, default_value = "4..10")]
        n: String,
        /// Packet counts, e.g. `1..100`.
        #[arg(long, default_value = "1..100")]
        m: String,
        /// Append the M -> infinity row for each N.
        #[arg(long)]
        limit: bool,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturation throughput of the grid model over a list of windows.
    Saturation {
        /// Grid spacing in metres.
        #[arg(long)]
        d: f64,
        /// Transmission range in metres.
        #[arg(long, default_value_t = 200.0)]
        r: f64,
        /// Contention windows, e.g. `100..1000:100`.
        #[arg(long, default_value = "100..1000:100")]
        w: String,
        #[arg(long, value_enum, default_value_t = Variant::Geometric)]
        variant: Variant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every sweep point, seed and MAC of a scenario config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for results.csv, aggregate.csv, config.json and traces.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; the config's list if omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t = MacArg::Both)]
        mac: MacArg,
        /// `AXIS=v1,v2,...` with AXIS one of packet_rate, n_nodes, contention_window.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, value_enum, default_value_t = TraceArg::None)]
        trace: TraceArg,
    },
    /// Prints a config with every default filled in.
    Config {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Geometric,
    Verbatim,
}

#[derive(Clone, Copy, ValueEnum)]
enum MacArg {
    E2ekic,
    Dcf,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    None,
    Events,
    Protocol,
}

enum Failure {
    Config(String),
    Solver(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<SatError> for Failure {
    fn from(e: SatError) -> Self {
        match e {
            SatError::GridBand { .. } | SatError::Params(_) | SatError::Window => Failure::Config(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

/// Parses `a..b` (inclusive), `a..b:step` or `a,b,c`.
fn parse_list(s: &str) -> Result<Vec<i64>, Failure> {
    let bad = || Failure::Config(format!("'{s}' is not a list or range"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (h, st.trim().parse::<i64>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad())?;
        if step < 1 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step as usize).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_ideal(n: &str, m: &str, limit: bool, out: &Option<PathBuf>) -> Result<(), Failure> {
    let ns = parse_list(n)?;
    let ms = parse_list(m)?;
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(["N", "M", "r_pr", "r_pnc", "r_fd", "r_e2ekic"])?;
    for &n in &ns {
        if below_model_range(n) {
            eprintln!("warning: N={n} is below the model's 4-node minimum; computed anyway");
        }
        for &m in &ms {
            let cell = |f: fn(i64, i64) -> Result<_, _>| f(n, m).map(|r| to_f64(r).to_string());
            let row = [cell(r_pr), cell(r_pnc), cell(r_fd), cell(r_e2ekic)];
            let row: Result<Vec<String>, _> = row.into_iter().collect();
            let row = row.map_err(|e: kicnet::analytic::ideal::IdealError| Failure::Config(e.to_string()))?;
            w.write_record([n.to_string(), m.to_string()].into_iter().chain(row))?;
        }
        if limit {
            let [kic, fd, pnc, pr] = limits().map(|r| to_f64(r).to_string());
            w.write_record([n.to_string(), "inf".into(), pr, pnc, fd, kic])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_saturation(d: f64, r: f64, ws: &str, variant: Variant, out: &Option<PathBuf>) -> Result<(), Failure> {
    let ws = parse_list(ws)?;
    let variant = match variant {
        Variant::Geometric => ZVariant::Geometric,
        Variant::Verbatim => ZVariant::Verbatim,
    };
    let mut rows = Vec::new();
    for &w in &ws {
        let w = u32::try_from(w).map_err(|_| Failure::Config(format!("window {w} must be positive")))?;
        let mut prm = SaturationParams::grid(d, r, w)?;
        prm.variant = variant;
        let sol = solve_fixed_point(&prm)?;
        rows.push([
            w.to_string(),
            prm.n_cs.to_string(),
            sol.p_t.to_string(),
            sol.p_c.to_string(),
            sol.delta.to_string(),
            sol.s.to_string(),
            sol.iterations.to_string(),
            variant.as_str().to_string(),
        ]);
    }
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(["W", "N_CS", "P_t", "P_c", "delta_us", "S_bits_per_us", "iterations", "variant"])?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Config::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    config: &Path,
    out: &Path,
    seeds: Option<Vec<u64>>,
    mac: MacArg,
    sweep: Option<String>,
    trace: TraceArg,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let name = config.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    let mut plan = ExperimentPlan::new(name, cfg);
    plan.macs = match mac {
        MacArg::E2ekic => vec![MacKind::E2ekic],
        MacArg::Dcf => vec![MacKind::Dcf],
        MacArg::Both => vec![MacKind::E2ekic, MacKind::Dcf],
    };
    if let Some(s) = seeds {
        // recorded in the saved config too, so the output directory reproduces the run
        plan.config.sim.seeds = s.clone();
        plan.seeds = Some(s);
    }
    if let Some(s) = sweep {
        plan.sweep = Sweep::parse(&s).map_err(Failure::Config)?;
    }
    plan.trace = match trace {
        TraceArg::None => TraceMode::None,
        TraceArg::Events => TraceMode::Events,
        TraceArg::Protocol => TraceMode::Protocol,
    };
    plan.trace_dir = Some(out.to_path_buf());
    let errs = plan.validate();
    if !errs.is_empty() {
        return Err(ExperimentError::Config(errs).into());
    }
    fs::create_dir_all(out)?;
    let results = run_plan(&plan, threads_from_env())?;
    write_results(BufWriter::new(File::create(out.join("results.csv"))?), &results)?;
    write_aggregate(BufWriter::new(File::create(out.join("aggregate.csv"))?), &results)?;
    fs::write(out.join("config.json"), plan.config.to_json() + "\n")?;
    eprintln!("{} runs written to {}", results.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Ideal { n, m, limit, out } => cmd_ideal(&n, &m, limit, &out),
        Cmd::Saturation { d, r, w, variant, out } => cmd_saturation(d, r, &w, variant, &out),
        Cmd::Simulate {
            config,
            out,
            seeds,
            mac,
            sweep,
            trace,
        } => cmd_simulate(&config, &out, seeds, mac, sweep, trace),
        Cmd::Config { config } => {
            let cfg = load_config(&config)?;
            let errs = cfg.validate();
            if !errs.is_empty() {
                return Err(Failure::Config(errs.join("\n")));
            }
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(msg) | Failure::Solver(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
