//! Run configuration files.
//!
//! A config is a JSON object. Keys may be nested (`{"bath": {"M": {...}}}`)
//! or dotted (`"bath.M.temperature": 0.1`); both are flattened to dotted
//! keys before interpretation, so command-line overrides use the same names.
//!
//! ```text
//! device.omega_L, device.omega_M (optional), device.omega_R = 1, device.g
//! bath.{L,M,R}.temperature, bath.{L,M,R}.gamma = 1e-4, bath.{L,M,R}.spectrum = Flat
//! sweep.{param, start, stop, count, spacing}, sweep.T_A
//! sweep2.{param, start, stop, count, spacing}
//! outputs = ["Q_L", "Q_M", "Q_R", "alpha_L", "alpha_R", "R", "populations", "secular_ratio"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{validate_params, BathSpec, Device, DeviceParams, Spectrum, Terminal};
use crate::sweep::{Axis, Output, Param, Spacing, SweepSpec};

pub const DEFAULT_GAMMA: f64 = 1e-4;
pub const DEFAULT_OMEGA_R: f64 = 1.0;

type Flat = BTreeMap<String, Value>;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub device: Device,
    pub axes: Vec<Axis>,
    pub outputs: Vec<Output>,
    /// Mean temperature for ΔT sweeps and rectification.
    pub t_a: Option<f64>,
    /// Every effective key, defaults included.
    pub values: BTreeMap<String, Value>,
}

impl RunConfig {
    /// Compact JSON of the effective configuration with sorted keys.
    pub fn echo(&self) -> String {
        serde_json::to_string(&self.values).expect("config values serialize")
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        if self.axes.is_empty() {
            return Err(Error::InvalidSpec("config has no sweep section".into()));
        }
        SweepSpec::new(
            self.device,
            self.axes.clone(),
            self.outputs.clone(),
            self.t_a,
            self.echo(),
        )
    }
}

fn is_known_key(key: &str) -> bool {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["device", f] => matches!(*f, "omega_L" | "omega_M" | "omega_R" | "g"),
        ["bath", t, f] => {
            Terminal::from_label(t).is_some()
                && t.chars().all(|c| c.is_ascii_uppercase())
                && matches!(*f, "temperature" | "gamma" | "spectrum")
        }
        ["sweep", f] => matches!(*f, "param" | "start" | "stop" | "count" | "spacing" | "T_A"),
        ["sweep2", f] => matches!(*f, "param" | "start" | "stop" | "count" | "spacing"),
        ["outputs"] => true,
        _ => false,
    }
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Flat) -> Result<()> {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out)?;
            }
            Ok(())
        }
        _ if prefix.is_empty() => Err(Error::parse("<root>", "expected a JSON object")),
        _ => {
            if !is_known_key(prefix) {
                return Err(Error::parse(prefix, "unknown key"));
            }
            if out.insert(prefix.to_string(), value.clone()).is_some() {
                return Err(Error::parse(prefix, "given more than once"));
            }
            Ok(())
        }
    }
}

/// Splits `key=value`; the value is read as JSON when possible and as a bare
/// string otherwise.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::parse(text, "override must look like key=value"))?;
    let key = key.trim().to_string();
    if !is_known_key(&key) {
        return Err(Error::parse(key, "unknown key"));
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key, value))
}

fn number(flat: &Flat, key: &str) -> Result<Option<f64>> {
    match flat.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| Error::parse(key, "number out of range")),
        Some(other) => Err(Error::parse(key, format!("expected a number, got {other}"))),
    }
}

fn required(flat: &Flat, key: &str) -> Result<f64> {
    number(flat, key)?.ok_or_else(|| Error::parse(key, "missing"))
}

fn string<'a>(flat: &'a Flat, key: &str) -> Result<Option<&'a str>> {
    match flat.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::parse(key, format!("expected a string, got {other}"))),
    }
}

fn count(flat: &Flat, key: &str) -> Result<usize> {
    match flat.get(key) {
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|c| c as usize)
            .ok_or_else(|| Error::parse(key, "expected a non-negative integer")),
        Some(other) => Err(Error::parse(key, format!("expected an integer, got {other}"))),
        None => Err(Error::parse(key, "missing")),
    }
}

fn axis(flat: &Flat, section: &str) -> Result<Option<Axis>> {
    let key = |f: &str| format!("{section}.{f}");
    if !flat.keys().any(|k| k.starts_with(&format!("{section}.")) && k != "sweep.T_A") {
        return Ok(None);
    }
    let param_name = string(flat, &key("param"))?.ok_or_else(|| Error::parse(key("param"), "missing"))?;
    let param =
        Param::parse(param_name).ok_or_else(|| Error::parse(key("param"), format!("unknown parameter {param_name}")))?;
    let spacing = match string(flat, &key("spacing"))? {
        None => Spacing::Linear,
        Some(s) => Spacing::parse(s)
            .ok_or_else(|| Error::parse(key("spacing"), format!("expected linear or log, got {s}")))?,
    };
    Ok(Some(Axis {
        param,
        start: required(flat, &key("start"))?,
        stop: required(flat, &key("stop"))?,
        count: count(flat, &key("count"))?,
        spacing,
    }))
}

fn interpret(mut flat: Flat) -> Result<RunConfig> {
    let omega_r = number(&flat, "device.omega_R")?.unwrap_or(DEFAULT_OMEGA_R);
    let omega_l = required(&flat, "device.omega_L")?;
    let g = required(&flat, "device.g")?;
    let params = match number(&flat, "device.omega_M")? {
        Some(omega_m) => DeviceParams {
            omega_l,
            omega_m,
            omega_r,
            g,
        },
        None => DeviceParams::resonant(omega_l, omega_r, g),
    };

    let mut baths = Vec::with_capacity(3);
    for t in Terminal::ALL {
        let key = |f: &str| format!("bath.{t}.{f}");
        let temperature = required(&flat, &key("temperature"))?;
        let gamma = number(&flat, &key("gamma"))?.unwrap_or(DEFAULT_GAMMA);
        let spectrum = match string(&flat, &key("spectrum"))? {
            None => Spectrum::default(),
            Some(s) => Spectrum::from_name(s)
                .ok_or_else(|| Error::parse(key("spectrum"), format!("expected Flat or Ohmic, got {s}")))?,
        };
        baths.push(BathSpec::new(t, temperature, gamma, spectrum));
    }
    let baths: [BathSpec; 3] = baths.try_into().expect("three baths");
    let device = validate_params(params, baths)?;

    let mut axes = Vec::new();
    if let Some(a) = axis(&flat, "sweep")? {
        axes.push(a);
    }
    if let Some(a) = axis(&flat, "sweep2")? {
        if axes.is_empty() {
            return Err(Error::parse("sweep2", "given without sweep"));
        }
        axes.push(a);
    }
    let t_a = number(&flat, "sweep.T_A")?;

    let outputs = match flat.get("outputs") {
        None => vec![Output::QL, Output::QM, Output::QR],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .and_then(Output::parse)
                    .ok_or_else(|| Error::parse("outputs", format!("unknown output {v}")))
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::parse("outputs", format!("expected a list, got {other}"))),
    };

    // record the effective values, defaults included
    let num = |x: f64| Value::from(x);
    flat.insert("device.omega_R".into(), num(params.omega_r));
    flat.insert("device.omega_M".into(), num(params.omega_m));
    for b in &device.baths {
        flat.insert(format!("bath.{}.gamma", b.terminal), num(b.gamma));
        flat.insert(format!("bath.{}.spectrum", b.terminal), Value::from(b.spectrum.name()));
    }
    flat.insert(
        "outputs".into(),
        Value::from(outputs.iter().map(|o| o.name()).collect::<Vec<_>>()),
    );

    Ok(RunConfig {
        device,
        axes,
        outputs,
        t_a,
        values: flat,
    })
}

/// Parses config text and applies `key=value` overrides on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
    let mut flat = Flat::new();
    flatten_into("", &root, &mut flat)?;
    for o in overrides {
        let (k, v) = parse_override(o)?;
        flat.insert(k, v);
    }
    interpret(flat)
}

pub fn read_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, overrides)
}

/// Nested JSON for a device, in the same layout `parse_config` reads.
pub fn device_to_json(device: &Device) -> Value {
    let mut baths = Map::new();
    for b in &device.baths {
        baths.insert(
            b.terminal.to_string(),
            serde_json::json!({
                "temperature": b.temperature,
                "gamma": b.gamma,
                "spectrum": b.spectrum.name(),
            }),
        );
    }
    serde_json::json!({
        "device": {
            "omega_L": device.params.omega_l,
            "omega_M": device.params.omega_m,
            "omega_R": device.params.omega_r,
            "g": device.params.g,
        },
        "bath": baths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "device": {"omega_L": 0.9, "g": 0.01},
        "bath": {"L": {"temperature": 0.2}, "M": {"temperature": 0.1}, "R": {"temperature": 0.02}}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL, &[]).unwrap();
        assert_eq!(c.device.params.omega_r, 1.0);
        assert!((c.device.params.omega_m - 0.1).abs() < 1e-15);
        for b in &c.device.baths {
            assert_eq!(b.gamma, 1e-4);
            assert_eq!(b.spectrum, Spectrum::Flat);
        }
        assert!(c.axes.is_empty());
        assert_eq!(c.outputs, vec![Output::QL, Output::QM, Output::QR]);
    }

    #[test]
    fn dotted_and_nested_keys_are_equivalent() {
        let dotted = r#"{"device.omega_L": 0.9, "device.g": 0.01,
            "bath.L.temperature": 0.2, "bath.M.temperature": 0.1, "bath.R.temperature": 0.02}"#;
        let a = parse_config(MINIMAL, &[]).unwrap();
        let b = parse_config(dotted, &[]).unwrap();
        assert_eq!(a.device, b.device);
        assert_eq!(a.echo(), b.echo());
    }

    #[test]
    fn malformed_number_names_the_field() {
        let text = MINIMAL.replace("0.01", "\"fast\"");
        match parse_config(&text, &[]) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "device.g"),
            other => panic!("{other:?}"),
        }
        match parse_config(MINIMAL, &["bath.M.temperature=warm".into()]) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "bath.M.temperature"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_off_resonance_triple_is_rejected() {
        let text = MINIMAL.replace("\"omega_L\": 0.9", "\"omega_L\": 0.6, \"omega_M\": 0.3");
        assert!(matches!(
            parse_config(&text, &[]),
            Err(Error::ResonanceViolation { .. })
        ));
    }

    #[test]
    fn overrides_apply_after_parsing() {
        let c = parse_config(MINIMAL, &["bath.M.temperature=0.3".into(), "bath.R.spectrum=Ohmic".into()])
            .unwrap();
        assert_eq!(c.device.bath(Terminal::M).temperature, 0.3);
        assert_eq!(c.device.bath(Terminal::R).spectrum, Spectrum::Ohmic);
        assert!(parse_config(MINIMAL, &["bath.X.temperature=1".into()]).is_err());
        assert!(parse_config(MINIMAL, &["device.g".into()]).is_err());
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        let text = MINIMAL.replace("\"g\": 0.01", "\"g\": 0.01, \"h\": 1");
        assert!(matches!(parse_config(&text, &[]), Err(Error::Parse { .. })));
        let dup = r#"{"device": {"omega_L": 0.9, "g": 0.01}, "device.g": 0.02,
            "bath.L.temperature": 0.2, "bath.M.temperature": 0.1, "bath.R.temperature": 0.02}"#;
        assert!(matches!(parse_config(dup, &[]), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_temperature_is_reported() {
        let text = MINIMAL.replace(", \"R\": {\"temperature\": 0.02}", "");
        match parse_config(&text, &[]) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "bath.R.temperature"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_section_is_read() {
        let c = parse_config(
            MINIMAL,
            &[
                "sweep.param=T_M".into(),
                "sweep.start=0".into(),
                "sweep.stop=0.6".into(),
                "sweep.count=200".into(),
                r#"outputs=["Q_L","alpha_L","populations"]"#.into(),
            ],
        )
        .unwrap();
        assert_eq!(c.axes.len(), 1);
        assert_eq!(c.axes[0].param, Param::Temperature(Terminal::M));
        assert_eq!(c.axes[0].count, 200);
        assert_eq!(c.outputs, vec![Output::QL, Output::AlphaL, Output::Populations]);
        assert!(c.sweep_spec().is_ok());
    }

    #[test]
    fn device_json_round_trips() {
        let c = parse_config(MINIMAL, &[]).unwrap();
        let text = device_to_json(&c.device).to_string();
        assert_eq!(parse_config(&text, &[]).unwrap().device, c.device);
    }
}
