//! Deterministic parameter sweeps and their CSV form.
//!
//! Grid points are evaluated in parallel and assembled in grid order, so the
//! output bytes depend only on the sweep definition. A point that fails carries a flag
//! and empty cells; the sweep as a whole fails only when more than half of
//! its points do.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functions::{amplification, rectification, RectifierMode, DEFAULT_STEP};
use crate::model::{secular_report, validate_params, Device, DeviceParams, Terminal};
use crate::steady::evaluate;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Spacing {
    Linear,
    Log,
}

impl Spacing {
    pub fn parse(s: &str) -> Option<Spacing> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Some(Spacing::Linear),
            "log" => Some(Spacing::Log),
            _ => None,
        }
    }
}

/// A sweepable quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Param {
    /// ω_L, with ω_M re-derived from resonance.
    OmegaL,
    /// ω_R, with ω_M re-derived from resonance.
    OmegaR,
    G,
    Temperature(Terminal),
    Gamma(Terminal),
    /// T_R − T_M about a fixed mean T_A.
    DeltaT,
}

impl Param {
    pub fn parse(s: &str) -> Option<Param> {
        let bath = |t: &str, field: &str| -> Option<Param> {
            let t = Terminal::from_label(t)?;
            match field {
                "temperature" => Some(Param::Temperature(t)),
                "gamma" => Some(Param::Gamma(t)),
                _ => None,
            }
        };
        match s {
            "omega_L" | "device.omega_L" => Some(Param::OmegaL),
            "omega_R" | "device.omega_R" => Some(Param::OmegaR),
            "g" | "device.g" => Some(Param::G),
            "delta_T" => Some(Param::DeltaT),
            _ => {
                if let Some(rest) = s.strip_prefix("bath.") {
                    let (t, field) = rest.split_once('.')?;
                    return bath(t, field);
                }
                let (field, t) = s.split_once('_')?;
                match field {
                    "T" => bath(t, "temperature"),
                    "gamma" => bath(t, "gamma"),
                    _ => None,
                }
            }
        }
    }

    /// Column name.
    pub fn name(self) -> String {
        match self {
            Param::OmegaL => "omega_L".into(),
            Param::OmegaR => "omega_R".into(),
            Param::G => "g".into(),
            Param::Temperature(t) => format!("T_{t}"),
            Param::Gamma(t) => format!("gamma_{t}"),
            Param::DeltaT => "delta_T".into(),
        }
    }

    /// Copy of `device` with this parameter set to `x`, re-validated.
    pub fn apply(self, device: &Device, x: f64, t_a: Option<f64>) -> Result<Device> {
        let mut params = device.params;
        let mut baths = device.baths;
        match self {
            Param::OmegaL => params = DeviceParams::resonant(x, params.omega_r, params.g),
            Param::OmegaR => params = DeviceParams::resonant(params.omega_l, x, params.g),
            Param::G => params.g = x,
            Param::Temperature(t) => baths[t.index()].temperature = x,
            Param::Gamma(t) => baths[t.index()].gamma = x,
            Param::DeltaT => {
                let t_a = t_a.ok_or_else(|| Error::InvalidSpec("delta_T sweep needs sweep.T_A".into()))?;
                baths[Terminal::R.index()].temperature = t_a + 0.5 * x;
                baths[Terminal::M.index()].temperature = t_a - 0.5 * x;
            }
        }
        validate_params(params, baths)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub param: Param,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Axis {
    fn check(&self) -> Result<()> {
        let name = self.param.name();
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::InvalidSpec(format!("{name}: bounds must be finite")));
        }
        if self.count < 2 {
            return Err(Error::InvalidSpec(format!("{name}: count must be at least 2")));
        }
        if self.start >= self.stop {
            return Err(Error::InvalidSpec(format!("{name}: start must be below stop")));
        }
        if self.spacing == Spacing::Log && self.start <= 0.0 {
            return Err(Error::InvalidSpec(format!("{name}: log spacing needs start > 0")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Linear => linear_grid(self.start, self.stop, self.count),
            Spacing::Log => log_grid(self.start, self.stop, self.count),
        }
    }
}

/// `n` evenly spaced points from `start` to `stop`, both included exactly.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                stop
            } else {
                start + (stop - start) * (i as f64 / last)
            }
        })
        .collect()
}

pub fn log_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let (a, b) = (start.ln(), stop.ln());
    linear_grid(a, b, n)
        .into_iter()
        .enumerate()
        .map(|(i, x)| match i {
            0 => start,
            _ if i + 1 == n => stop,
            _ => x.exp(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Output {
    QL,
    QM,
    QR,
    AlphaL,
    AlphaR,
    R,
    Populations,
    SecularRatio,
}

impl Output {
    pub const ALL: [Output; 8] = [
        Output::QL,
        Output::QM,
        Output::QR,
        Output::AlphaL,
        Output::AlphaR,
        Output::R,
        Output::Populations,
        Output::SecularRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::QL => "Q_L",
            Output::QM => "Q_M",
            Output::QR => "Q_R",
            Output::AlphaL => "alpha_L",
            Output::AlphaR => "alpha_R",
            Output::R => "R",
            Output::Populations => "populations",
            Output::SecularRatio => "secular_ratio",
        }
    }

    pub fn parse(s: &str) -> Option<Output> {
        Output::ALL.into_iter().find(|o| o.name() == s)
    }

    fn columns(self) -> Vec<String> {
        match self {
            Output::Populations => (1..=8).map(|k| format!("p{k}")).collect(),
            _ => vec![self.name().to_string()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: Device,
    pub axes: Vec<Axis>,
    pub outputs: Vec<Output>,
    pub t_a: Option<f64>,
    /// Config echo written into the CSV header.
    pub echo: String,
}

impl SweepSpec {
    /// Checks the axes and that every grid point yields a valid device.
    pub fn new(
        base: Device,
        axes: Vec<Axis>,
        outputs: Vec<Output>,
        t_a: Option<f64>,
        echo: String,
    ) -> Result<SweepSpec> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidSpec("a sweep has one or two axes".into()));
        }
        if axes.len() == 2 && axes[0].param == axes[1].param {
            return Err(Error::InvalidSpec("both axes sweep the same parameter".into()));
        }
        for a in &axes {
            a.check()?;
        }
        let spec = SweepSpec {
            base,
            axes,
            outputs,
            t_a,
            echo,
        };
        for point in spec.grid() {
            spec.device_at(&point).map_err(|e| {
                Error::InvalidSpec(format!("grid point {point:?} is not a valid device: {e}"))
            })?;
        }
        Ok(spec)
    }

    /// Axis values of every grid point, first axis outermost.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let first = self.axes[0].values();
        match self.axes.get(1) {
            None => first.into_iter().map(|x| vec![x]).collect(),
            Some(second) => {
                let second = second.values();
                first
                    .iter()
                    .flat_map(|&x| second.iter().map(move |&y| vec![x, y]))
                    .collect()
            }
        }
    }

    pub fn device_at(&self, point: &[f64]) -> Result<Device> {
        let mut d = self.base;
        for (axis, &x) in self.axes.iter().zip(point) {
            d = axis.param.apply(&d, x, self.t_a)?;
        }
        Ok(d)
    }

    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = self.axes.iter().map(|a| a.param.name()).collect();
        for o in &self.outputs {
            c.extend(o.columns());
        }
        c
    }

    /// SHA-256 over parameter names and the bit patterns of every grid value.
    pub fn grid_hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.axes {
            h.update(a.param.name().as_bytes());
            h.update([0u8]);
        }
        for point in self.grid() {
            for x in point {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub axes: Vec<f64>,
    /// One cell per output column; `None` is an empty cell.
    pub values: Vec<Option<f64>>,
    pub flags: Vec<String>,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("failed:"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub version: String,
    pub echo: String,
    pub grid_hash: String,
    pub axis_names: Vec<String>,
    /// Output column names (axes excluded).
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl SweepResult {
    pub fn failed_points(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    /// Index of an output column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn values_of(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

/// Requested outputs and flags for one device.
pub fn evaluate_point(device: &Device, outputs: &[Output]) -> (Vec<Option<f64>>, Vec<String>) {
    let width: usize = outputs.iter().map(|o| o.columns().len()).sum();
    let mut flags = Vec::new();
    let eval = match evaluate(device) {
        Ok(e) => e,
        Err(e) => {
            flags.push(format!("failed:{}", e.kind()));
            return (vec![None; width], flags);
        }
    };
    if eval.state.clipped {
        flags.push("clipped".to_string());
    }
    let secular = secular_report(device);
    if !secular.valid {
        flags.push("secular".to_string());
    }
    let needs_alpha = outputs.iter().any(|o| matches!(o, Output::AlphaL | Output::AlphaR));
    let alpha = if needs_alpha {
        match amplification(device, DEFAULT_STEP) {
            Ok(a) => {
                if a.flagged {
                    flags.push("richardson".to_string());
                }
                Some(a)
            }
            Err(e) => {
                flags.push(e.kind().to_string());
                None
            }
        }
    } else {
        None
    };
    let rect = if outputs.contains(&Output::R) {
        let tr = device.bath(Terminal::R).temperature;
        let tm = device.bath(Terminal::M).temperature;
        match rectification(device, tr - tm, 0.5 * (tr + tm), RectifierMode::ThreeTerminal) {
            Ok(r) => {
                if r.same_direction {
                    flags.push("same_direction".to_string());
                }
                Some(r)
            }
            Err(e) => {
                flags.push(e.kind().to_string());
                None
            }
        }
    } else {
        None
    };

    let mut values = Vec::with_capacity(width);
    for o in outputs {
        match o {
            Output::QL => values.push(Some(eval.currents.q[0])),
            Output::QM => values.push(Some(eval.currents.q[1])),
            Output::QR => values.push(Some(eval.currents.q[2])),
            Output::AlphaL => values.push(alpha.map(|a| a.alpha_l)),
            Output::AlphaR => values.push(alpha.map(|a| a.alpha_r)),
            Output::R => values.push(rect.map(|r| r.r)),
            Output::Populations => values.extend(eval.state.populations.map(Some)),
            Output::SecularRatio => values.push(Some(secular.ratio)),
        }
    }
    (values, flags)
}

/// Evaluates every grid point, optionally on a pool of `threads` workers.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<SweepResult> {
    let grid = spec.grid();
    let compute = || -> Vec<Row> {
        grid.par_iter()
            .map(|point| {
                let (values, flags) = match spec.device_at(point) {
                    Ok(d) => evaluate_point(&d, &spec.outputs),
                    Err(e) => {
                        let width = spec.columns().len() - point.len();
                        (vec![None; width], vec![format!("failed:{}", e.kind())])
                    }
                };
                Row {
                    axes: point.clone(),
                    values,
                    flags,
                }
            })
            .collect()
    };
    let rows = match threads {
        None => compute(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?
            .install(compute),
    };
    let result = SweepResult {
        version: VERSION.to_string(),
        echo: spec.echo.clone(),
        grid_hash: spec.grid_hash(),
        axis_names: spec.axes.iter().map(|a| a.param.name()).collect(),
        columns: spec.columns()[spec.axes.len()..].to_vec(),
        rows,
    };
    let failed = result.failed_points();
    if 2 * failed > result.rows.len() {
        return Err(Error::PointFailure {
            failed,
            total: result.rows.len(),
        });
    }
    Ok(result)
}

/// One-row result for a single device, with no axes.
pub fn point_result(device: &Device, outputs: &[Output], echo: String) -> SweepResult {
    let (values, flags) = evaluate_point(device, outputs);
    SweepResult {
        version: VERSION.to_string(),
        echo,
        grid_hash: hex(&Sha256::digest(b"")),
        axis_names: Vec::new(),
        columns: outputs.iter().flat_map(|o| o.columns()).collect(),
        rows: vec![Row {
            axes: Vec::new(),
            values,
            flags,
        }],
    }
}

fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text: `#` provenance lines, a header row, then one row per point.
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# triqubit {}", result.version);
    let _ = writeln!(out, "# config {}", result.echo);
    let _ = writeln!(out, "# grid_sha256 {}", result.grid_hash);
    let _ = writeln!(out, "# axes {}", result.axis_names.join(" "));
    let mut header: Vec<&str> = result.axis_names.iter().map(String::as_str).collect();
    header.extend(result.columns.iter().map(String::as_str));
    header.push("flags");
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &result.rows {
        let mut cells: Vec<String> = row.axes.iter().map(|&x| format_number(x)).collect();
        cells.extend(row.values.iter().map(|v| v.map(format_number).unwrap_or_default()));
        cells.push(row.flags.join("|"));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(result)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Inverse of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<SweepResult> {
    let mut version = String::new();
    let mut echo = String::new();
    let mut grid_hash = String::new();
    let mut axis_count = None;
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, line)) = lines.peek() {
        let Some(meta) = line.strip_prefix("# ") else {
            break;
        };
        let (key, value) = meta.split_once(' ').unwrap_or((meta, ""));
        match key {
            "triqubit" => version = value.to_string(),
            "config" => echo = value.to_string(),
            "grid_sha256" => grid_hash = value.to_string(),
            "axes" => axis_count = Some(value.split_whitespace().count()),
            _ => {}
        }
        lines.next();
    }
    let axis_count = axis_count.ok_or_else(|| Error::parse("csv", "missing '# axes' line"))?;
    let (_, header) = lines.next().ok_or_else(|| Error::parse("csv", "missing header row"))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < axis_count + 1 || names.last() != Some(&"flags") {
        return Err(Error::parse("csv header", "expected axes, outputs and flags"));
    }
    let axis_names: Vec<String> = names[..axis_count].iter().map(|s| s.to_string()).collect();
    let columns: Vec<String> = names[axis_count..names.len() - 1]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::parse(format!("csv line {}", n + 1), "wrong number of cells"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(format!("csv line {}", n + 1), format!("bad number {s}")))
        };
        let axes = cells[..axis_count].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let values = cells[axis_count..cells.len() - 1]
            .iter()
            .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
            .collect::<Result<_>>()?;
        let flag_cell = cells[cells.len() - 1];
        let flags = if flag_cell.is_empty() {
            Vec::new()
        } else {
            flag_cell.split('|').map(str::to_string).collect()
        };
        rows.push(Row { axes, values, flags });
    }
    Ok(SweepResult {
        version,
        echo,
        grid_hash,
        axis_names,
        columns,
        rows,
    })
}

pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text)
}
