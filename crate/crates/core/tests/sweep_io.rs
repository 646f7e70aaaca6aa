use std::path::PathBuf;

use triqubit::config::read_config;
use triqubit::sweep::{read_csv, run_sweep, to_csv, write_csv};

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/examples").join(name)
}

#[test]
fn every_example_config_loads() {
    for name in ["fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5bc"] {
        let cfg = read_config(&example(&format!("{name}.json")), &[]).unwrap();
        assert!(cfg.sweep_spec().is_ok(), "{name}");
    }
}

#[test]
fn fig2_sweep_shape() {
    let spec = read_config(&example("fig2.json"), &[]).unwrap().sweep_spec().unwrap();
    let res = run_sweep(&spec, None).unwrap();
    assert_eq!(res.rows.len(), 200);
    let ql = res.values_of("Q_L").unwrap();
    let qr = res.values_of("Q_R").unwrap();
    let last = res.rows.len() - 1;
    // L is the hot bath and R the cold one
    assert!(ql[last].unwrap() > 0.0 && qr[last].unwrap() < 0.0);
    // no amplification point at T_M = 0
    assert!(res.rows[0].values[3].is_none());
    assert!(!res.rows[0].flags.is_empty());
}

#[test]
fn fig4a_currents_each_change_sign() {
    let spec = read_config(&example("fig4a.json"), &[]).unwrap().sweep_spec().unwrap();
    let res = run_sweep(&spec, None).unwrap();
    assert_eq!(res.axis_names, ["T_M"]);
    assert_eq!(res.columns, ["Q_L", "Q_M", "Q_R"]);
    for name in ["Q_L", "Q_M", "Q_R"] {
        let v: Vec<f64> = res.values_of(name).unwrap().into_iter().map(Option::unwrap).collect();
        assert!(v.windows(2).any(|w| w[0] * w[1] < 0.0), "{name}");
    }
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let spec = read_config(&example("fig5bc.json"), &[]).unwrap().sweep_spec().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_csv(&run_sweep(&spec, Some(1)).unwrap(), &a).unwrap();
    write_csv(&run_sweep(&spec, Some(4)).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let back = read_csv(&a).unwrap();
    assert_eq!(to_csv(&back).into_bytes(), std::fs::read(&a).unwrap());
    assert_eq!(back.rows.len(), 4 * 91);
}

#[test]
fn overrides_are_revalidated() {
    let path = example("fig2.json");
    assert!(read_config(&path, &["device.g=0.02".into()]).is_ok());
    let err = read_config(&path, &["device.omega_M=0.3".into()]).unwrap_err();
    assert!(err.is_validation());
}
