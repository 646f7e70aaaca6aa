//! `triqubit` command-line front end.
//!
//! Summaries go to stdout, warnings to stderr, tables to CSV files.
//! Exit status: 0 on success, 2 for configuration or validation errors,
//! 3 for numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use triqubit::config::{read_config, RunConfig};
use triqubit::functions::{
    rectification, stabilizer_sensitivity, switch_threshold, valve_crossings, RectifierMode, DEFAULT_EPSILON,
    VALVE_GRID,
};
use triqubit::model::secular_report;
use triqubit::steady::{evaluate, liouvillian_oracle};
use triqubit::sweep::{point_result, run_sweep, write_csv, Axis, Output, Param, Spacing, SweepResult, SweepSpec};
use triqubit::validate::validate_device;
use triqubit::{Device, Error, Result, Terminal};

#[derive(Parser)]
#[command(name = "triqubit", version, about = "Heat transport through three coupled qubits")]
struct Cli {
    /// Cap on worker threads for grid evaluations (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Print extra diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config key after parsing, e.g. `--set bath.M.temperature=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct OutPath {
    /// Write the table to this CSV file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state, heat currents and secular check at one operating point.
    Steady {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
    },
    /// Run the sweep section of the config.
    Sweep {
        #[command(flatten)]
        input: Input,
        /// Destination CSV.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Amplification factors alpha_L, alpha_R over a T_M scan.
    Amplifier {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
        /// T_M scan as start:stop:count.
        #[arg(long, value_name = "A:B:N", default_value = "0.05:0.5:46")]
        range: String,
    },
    /// Temperatures T_M at which each current vanishes.
    Valve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
        /// T_M scan as start:stop:count.
        #[arg(long, value_name = "A:B:N")]
        range: Option<String>,
    },
    /// Rectification factor between baths R and M.
    Rectify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
        /// Detach bath L.
        #[arg(long)]
        two_terminal: bool,
        /// Temperature difference T_R - T_M.
        #[arg(long, value_name = "X", allow_negative_numbers = true)]
        delta_t: Option<f64>,
        /// Mean temperature (T_R + T_M)/2; defaults to sweep.T_A, then to the config's mean.
        #[arg(long, value_name = "X")]
        t_a: Option<f64>,
        /// Also tabulate a scan of delta T as start:stop:count.
        #[arg(long, value_name = "A:B:N")]
        range: Option<String>,
    },
    /// Flatness of all three currents while one bath temperature is scanned.
    Stabilizer {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
        /// Scanned bath.
        #[arg(long, value_name = "L|M|R", default_value = "L")]
        terminal: String,
        /// Temperature scan as start:stop:count.
        #[arg(long, value_name = "A:B:N", default_value = "0:0.8:81")]
        range: String,
    },
    /// Largest T_M below which |Q_L| and |Q_R| stay under epsilon.
    Switch {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: OutPath,
        /// Current threshold in units of omega_R^2.
        #[arg(long, value_name = "X", default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// T_M scan as start:stop:count.
        #[arg(long, value_name = "A:B:N", default_value = "0:0.6:121")]
        range: String,
    },
    /// Cross-check the fast path against the numeric oracles.
    Validate {
        #[command(flatten)]
        input: Input,
        /// Seed for the random-draw checks.
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
        /// Number of random devices checked in addition to the config.
        #[arg(long, value_name = "N", default_value_t = 20)]
        draws: usize,
        /// Write the report as JSON.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load(input: &Input) -> Result<RunConfig> {
    read_config(&input.config, &input.set)
}

fn parse_range(text: &str) -> Result<(f64, f64, usize)> {
    let bad = || Error::Parse {
        field: "--range".into(),
        message: format!("expected start:stop:count, got {text}"),
    };
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parts[0].trim().parse().map_err(|_| bad())?;
    let b = parts[1].trim().parse().map_err(|_| bad())?;
    let n = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((a, b, n))
}

fn parse_terminal(text: &str) -> Result<Terminal> {
    Terminal::from_label(text).ok_or_else(|| Error::Parse {
        field: "--terminal".into(),
        message: format!("expected L, M or R, got {text}"),
    })
}

/// A one-axis sweep over the config's device.
fn scan(
    cfg: &RunConfig,
    device: Device,
    param: Param,
    range: (f64, f64, usize),
    outputs: Vec<Output>,
    t_a: Option<f64>,
) -> Result<SweepResult> {
    let axis = Axis {
        param,
        start: range.0,
        stop: range.1,
        count: range.2,
        spacing: Spacing::Linear,
    };
    let spec = SweepSpec::new(device, vec![axis], outputs, t_a, cfg.echo())?;
    run_sweep(&spec, None)
}

fn save(result: &SweepResult, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        write_csv(result, p)?;
        println!("wrote {} rows to {}", result.rows.len(), p.display());
    }
    Ok(())
}

fn warn_flags(result: &SweepResult) {
    let failed = result.failed_points();
    let flagged = result.rows.iter().filter(|r| !r.flags.is_empty()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} points failed", result.rows.len());
    }
    if flagged > failed {
        eprintln!("warning: diagnostic flags on {} points", flagged - failed);
    }
}

fn fmt(x: f64) -> String {
    format!("{x:>13.6e}")
}

fn steady(cfg: &RunConfig, out: Option<&Path>, verbose: bool) -> Result<()> {
    let d = &cfg.device;
    let e = evaluate(d)?;
    let c = &e.currents;
    println!("heat currents (positive = absorbed from the bath)");
    for t in Terminal::ALL {
        println!("  Q_{t} = {}", fmt(c.get(t)));
    }
    println!("  sum = {}", fmt(c.sum()));
    println!("entropy production = {}", fmt(c.entropy_production));
    println!("populations (ascending energy)");
    for (k, p) in e.state.populations.iter().enumerate() {
        println!("  p{} = {}   E = {}", k + 1, fmt(*p), fmt(e.eigen.levels[k]));
    }
    let s = secular_report(d);
    println!(
        "secular ratio = {:.3e} ({})",
        s.ratio,
        if s.valid { "valid" } else { "NOT valid" }
    );
    if !s.valid {
        eprintln!("warning: damping is not small against the smallest level gap");
    }
    if e.state.clipped {
        eprintln!("warning: small negative populations were clipped");
    }
    if verbose {
        eprintln!(
            "residual {:.2e}, condition {:.2e}, noise floor {:.2e}",
            e.state.residual, e.state.condition, c.noise_floor
        );
    }
    let outputs = vec![Output::QL, Output::QM, Output::QR, Output::Populations, Output::SecularRatio];
    save(&point_result(d, &outputs, cfg.echo()), out)
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = cfg.sweep_spec()?;
    let result = run_sweep(&spec, None)?;
    warn_flags(&result);
    println!(
        "{} points over {}",
        result.rows.len(),
        result.axis_names.join(" x ")
    );
    save(&result, Some(out))
}

fn amplifier(cfg: &RunConfig, out: Option<&Path>, range: &str) -> Result<()> {
    let range = parse_range(range)?;
    let outputs = vec![Output::QL, Output::QM, Output::QR, Output::AlphaL, Output::AlphaR];
    let result = scan(cfg, cfg.device, Param::Temperature(Terminal::M), range, outputs, None)?;
    warn_flags(&result);
    let al = result.values_of("alpha_L").expect("alpha_L column");
    let ar = result.values_of("alpha_R").expect("alpha_R column");
    println!("{:>10} {:>13} {:>13}  flags", "T_M", "alpha_L", "alpha_R");
    let mut peak: Option<(f64, f64)> = None;
    for (i, row) in result.rows.iter().enumerate() {
        let cell = |v: Option<f64>| v.map(fmt).unwrap_or_else(|| format!("{:>13}", "-"));
        println!("{:>10.5} {} {}  {}", row.axes[0], cell(al[i]), cell(ar[i]), row.flags.join("|"));
        if let (Some(l), Some(r)) = (al[i], ar[i]) {
            let (pl, pr) = peak.unwrap_or_default();
            peak = Some((pl.max(l.abs()), pr.max(r.abs())));
        }
    }
    match peak {
        Some((l, r)) => println!("max |alpha_L| = {l:.4}, max |alpha_R| = {r:.4}"),
        None => println!("no point in the scan has a defined amplification factor"),
    }
    save(&result, out)
}

fn valve(cfg: &RunConfig, out: Option<&Path>, range: Option<&str>) -> Result<()> {
    let range = match range {
        Some(r) => parse_range(r)?,
        None => {
            let w = cfg.device.params.omega_r;
            (0.005 * w, w, VALVE_GRID)
        }
    };
    let report = valve_crossings(&cfg.device, (range.0, range.1), range.2)?;
    if report.failed_points > 0 {
        eprintln!("warning: {} grid points failed to evaluate", report.failed_points);
    }
    println!("{} crossings on {} grid points", report.crossings.len(), report.grid_points);
    println!("{:>8} {:>12} {:>10}", "terminal", "T_M", "bracket");
    for c in &report.crossings {
        println!("{:>8} {:>12.6} {:>10.1e}", c.terminal.label(), c.temperature, c.bracket);
    }
    if out.is_some() {
        let outputs = vec![Output::QL, Output::QM, Output::QR];
        let result = scan(cfg, cfg.device, Param::Temperature(Terminal::M), range, outputs, None)?;
        warn_flags(&result);
        save(&result, out)?;
    }
    Ok(())
}

fn rectify(
    cfg: &RunConfig,
    out: Option<&Path>,
    two_terminal: bool,
    delta_t: Option<f64>,
    t_a: Option<f64>,
    range: Option<&str>,
) -> Result<()> {
    let d = &cfg.device;
    let tr = d.bath(Terminal::R).temperature;
    let tm = d.bath(Terminal::M).temperature;
    let t_a = t_a.or(cfg.t_a).unwrap_or(0.5 * (tr + tm));
    let delta_t = delta_t.unwrap_or(tr - tm);
    let mode = if two_terminal {
        RectifierMode::TwoTerminal
    } else {
        RectifierMode::ThreeTerminal
    };
    let r = rectification(d, delta_t, t_a, mode)?;
    println!("T_A = {t_a}, |dT| = {}", r.delta_t);
    println!("Q_fore = {}", fmt(r.q_fore));
    println!("Q_back = {}", fmt(r.q_back));
    println!("R = {:.6}", r.r);
    if r.same_direction {
        eprintln!("warning: heat flows the same way for both biases");
    }
    if let Some(text) = range {
        let mut base = *d;
        if two_terminal {
            base.bath_mut(Terminal::L).gamma = 0.0;
        }
        let result = scan(cfg, base, Param::DeltaT, parse_range(text)?, vec![Output::QM, Output::QR, Output::R], Some(t_a))?;
        warn_flags(&result);
        save(&result, out)?;
    } else if out.is_some() {
        eprintln!("warning: --out needs --range for rectify; nothing written");
    }
    Ok(())
}

fn stabilizer(cfg: &RunConfig, out: Option<&Path>, terminal: &str, range: &str) -> Result<()> {
    let terminal = parse_terminal(terminal)?;
    let range = parse_range(range)?;
    let s = stabilizer_sensitivity(&cfg.device, terminal, (range.0, range.1), range.2)?;
    println!("scan of T_{terminal} over [{}, {}], {} points", range.0, range.1, range.2);
    println!("{:>4} {:>13} {:>13} {:>13} {:>13}", "", "flatness", "peak slope", "min", "max");
    for t in Terminal::ALL {
        let i = t.index();
        println!(
            "{:>4} {} {} {} {}",
            format!("Q_{t}"),
            fmt(s.flatness[i]),
            fmt(s.peak_slope[i]),
            fmt(s.min[i]),
            fmt(s.max[i])
        );
    }
    if out.is_some() {
        let outputs = vec![Output::QL, Output::QM, Output::QR];
        let result = scan(cfg, cfg.device, Param::Temperature(terminal), range, outputs, None)?;
        warn_flags(&result);
        save(&result, out)?;
    }
    Ok(())
}

fn switch(cfg: &RunConfig, out: Option<&Path>, epsilon: f64, range: &str) -> Result<()> {
    let range = parse_range(range)?;
    let s = switch_threshold(&cfg.device, epsilon, (range.0, range.1), range.2)?;
    println!("epsilon = {:.3e}", s.epsilon);
    println!("threshold T_M = {}", s.threshold);
    if out.is_some() {
        let outputs = vec![Output::QL, Output::QM, Output::QR];
        let result = scan(cfg, cfg.device, Param::Temperature(Terminal::M), range, outputs, None)?;
        warn_flags(&result);
        save(&result, out)?;
    }
    Ok(())
}

/// Returns whether every check passed.
fn validate(cfg: &RunConfig, seed: u64, draws: usize, out: Option<&Path>, verbose: bool) -> Result<bool> {
    let report = validate_device(&cfg.device, seed, draws);
    for c in &report.checks {
        let status = if c.passed {
            "PASS"
        } else if c.warning {
            "WARN"
        } else {
            "FAIL"
        };
        if c.warning {
            eprintln!("warning: {}: {}", c.name, c.detail);
        }
        if verbose || !c.name.starts_with("random[") || !c.passed {
            println!("{status}  {}: {}", c.name, c.detail);
        }
    }
    let random = report.checks.iter().filter(|c| c.name.starts_with("random[")).count();
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed ({random} on random draws, seed {seed})", report.checks.len());
    if verbose {
        if let Ok(o) = liouvillian_oracle(&cfg.device) {
            eprintln!("generator nullity {}", o.nullity);
        }
    }
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(p, text + "\n").map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?;
    }
    Ok(report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon_pool(n)?;
    }
    let v = cli.verbose;
    match &cli.command {
        Command::Steady { input, output } => steady(&load(input)?, output.out.as_deref(), v)?,
        Command::Sweep { input, out } => sweep(&load(input)?, out)?,
        Command::Amplifier { input, output, range } => amplifier(&load(input)?, output.out.as_deref(), range)?,
        Command::Valve { input, output, range } => valve(&load(input)?, output.out.as_deref(), range.as_deref())?,
        Command::Rectify {
            input,
            output,
            two_terminal,
            delta_t,
            t_a,
            range,
        } => rectify(
            &load(input)?,
            output.out.as_deref(),
            *two_terminal,
            *delta_t,
            *t_a,
            range.as_deref(),
        )?,
        Command::Stabilizer {
            input,
            output,
            terminal,
            range,
        } => stabilizer(&load(input)?, output.out.as_deref(), terminal, range)?,
        Command::Switch {
            input,
            output,
            epsilon,
            range,
        } => switch(&load(input)?, output.out.as_deref(), *epsilon, range)?,
        Command::Validate { input, seed, draws, out } => {
            return validate(&load(input)?, *seed, *draws, out.as_deref(), v);
        }
    }
    Ok(true)
}

fn rayon_pool(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parse {
            field: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
