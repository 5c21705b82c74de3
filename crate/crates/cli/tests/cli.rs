use std::fs;
use std::path::{Path, PathBuf};

use ppath_cli::config::{DataSpec, FluxSpec, IntegratorSpec, PlacementSpec, Strategy as PlacementStrategy};
use ppath_cli::*;
use proptest::prelude::*;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn cli(cfg: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut argv = vec!["ppath".to_string(), cfg.display().to_string(), "--out".into(), out.display().to_string()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    run_cli(argv)
}

#[test]
fn simulate_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&config("burgers_example.toml"), dir.path(), &[]), EXIT_OK);
    for f in [TRAJECTORY_FILE, EVENTS_FILE, "summary.txt", "audit.json", "final_v.csv", "final_A.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("mass drift: 0e0"), "{summary}");
    assert!(summary.contains("audit: pass"));
    assert_eq!(cli(&config("burgers_example.toml"), dir.path(), &["--mode", "audit"]), EXIT_OK);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(cli(&config("burgers_example.toml"), d.path(), &["--set", "placement.n=41"]), EXIT_OK);
    }
    for f in [TRAJECTORY_FILE, EVENTS_FILE, "summary.txt", "audit.json", "final_v.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn convergence_slope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&config("burgers_example.toml"), dir.path(), &["--mode", "convergence"]), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dx,error,bound,slope_so_far"));
    assert_eq!(lines.count(), 5);
    let rate: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rate.json")).unwrap()).unwrap();
    let slope = rate["fit"]["slope"].as_f64().unwrap();
    assert!(slope >= 0.45, "{slope}");
}

#[test]
fn audit_rejects_corrupted_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("burgers_example.toml");
    assert_eq!(cli(&cfg, dir.path(), &["--set", "placement.n=21"]), EXIT_OK);
    let path = dir.path().join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.len() / 2;
    let mut cols: Vec<String> = lines[k].split(',').map(String::from).collect();
    cols[4] = "50".into();
    lines[k] = cols.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert_eq!(cli(&cfg, dir.path(), &["--mode", "audit", "--set", "placement.n=21"]), EXIT_INVARIANT);
}

#[test]
fn ftl_check_modes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&config("lwr_riemann.toml"), dir.path(), &[]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ftl.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 10000);
    assert!(report["max_deviation"].as_f64().unwrap() <= 1e-8);
    // Burgers has an increasing a, so the coincidence does not apply.
    assert_eq!(cli(&config("burgers_example.toml"), dir.path(), &["--mode", "ftl-check"]), EXIT_CONFIG);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("burgers_example.toml");
    assert_eq!(cli(&cfg, dir.path(), &["--set", "t_final=-1"]), EXIT_CONFIG);
    assert_eq!(cli(&cfg, dir.path(), &["--set", "placement.n=1"]), EXIT_CONFIG);
    assert_eq!(cli(&cfg, dir.path(), &["--set", "flux.kind=quartic"]), EXIT_CONFIG);
    assert_eq!(cli(&cfg, dir.path(), &["--set", "integrator.typo=3"]), EXIT_CONFIG);
    assert_eq!(cli(&cfg, dir.path(), &["--mode", "sideways"]), EXIT_CONFIG);
    assert_eq!(cli(&cfg, dir.path(), &["--set", "nokey"]), EXIT_CONFIG);
    assert_eq!(cli(&dir.path().join("missing.toml"), dir.path(), &[]), EXIT_CONFIG);
    assert_eq!(run_cli(["ppath"]), EXIT_CONFIG);
}

#[test]
fn schema_errors_name_the_field() {
    let text = fs::read_to_string(config("burgers_example.toml")).unwrap();
    let bad = text.replace("theta = 0.1", "theta = 1.5");
    let e = ExperimentConfig::from_toml(&bad).unwrap_err();
    assert!(e.to_string().contains("integrator.theta"), "{e}");
    let bad = text.replace("n = 101", "n = \"many\"");
    let e = ExperimentConfig::from_toml(&bad).unwrap_err();
    assert!(e.to_string().contains("placement"), "{e}");
}

#[test]
fn missing_trajectory_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&config("burgers_example.toml"), dir.path(), &["--mode", "audit"]), EXIT_RUNTIME);
}

#[test]
fn csv_flux_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let u: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    let flux: String = u.iter().map(|u| format!("{u},{}\n", u * (1.0 - u))).collect();
    fs::write(dir.path().join("flux.csv"), format!("u,f\n{flux}")).unwrap();
    fs::write(dir.path().join("u0.csv"), "x,u\n0,0.2\n0.5,0.6\n1,0.3\n").unwrap();
    let cfg = dir.path().join("tab.toml");
    fs::write(
        &cfg,
        r#"
mode = "simulate"
out = "unused"
t_final = 0.3

[flux]
kind = "tabulated"
params = { path = "flux.csv" }

[data]
kind = "sampled"
params = { path = "u0.csv" }

[placement]
strategy = "mass_equidistributed"
n = 41
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&cfg, &out, &[]), EXIT_OK);
    assert_eq!(cli(&cfg, &out, &["--mode", "audit"]), EXIT_OK);
    assert_eq!(cli(&cfg, &out, &["--mode", "ftl-check"]), EXIT_OK);
    // No exact solution for sampled data under a tabulated flux.
    assert_eq!(cli(&cfg, &out, &["--mode", "convergence", "--set", "placement.n_list=[11,21,41]"]), EXIT_CONFIG);
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["burgers_example.toml", "lwr_riemann.toml"] {
        let cfg = ExperimentConfig::from_toml(&fs::read_to_string(config(name)).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn overrides_reach_nested_fields() {
    let mut t: toml::Table = "a = 1\n[b]\nc = 2\n".parse().unwrap();
    config::apply_override(&mut t, "b.c=3.5").unwrap();
    config::apply_override(&mut t, "d.e=[1, 2]").unwrap();
    config::apply_override(&mut t, "name=plain words").unwrap();
    assert_eq!(t["b"]["c"].as_float(), Some(3.5));
    assert_eq!(t["d"]["e"].as_array().unwrap().len(), 2);
    assert_eq!(t["name"].as_str(), Some("plain words"));
    assert!(config::apply_override(&mut t, "a.x=1").is_err());
}

fn flux_spec() -> impl Strategy<Value = FluxSpec> {
    prop_oneof![
        Just(FluxSpec::Burgers),
        (0.1f64..5.0, 0.1f64..5.0).prop_map(|(v_max, u_max)| FluxSpec::Lwr { v_max, u_max }),
        (-3.0f64..3.0).prop_map(|speed| FluxSpec::Linear { speed }),
        prop::collection::vec(-2.0f64..2.0, 1..5).prop_map(|coeffs| FluxSpec::Polynomial { coeffs }),
        "[a-z]{1,8}\\.csv".prop_map(|p| FluxSpec::Tabulated { path: p.into() }),
    ]
}

fn data_spec() -> impl Strategy<Value = DataSpec> {
    prop_oneof![
        Just(DataSpec::PaperExample),
        (0.0f64..2.0, 0.0f64..2.0, -1.0f64..1.0).prop_map(|(u_l, u_r, x0)| DataSpec::Riemann { u_l, u_r, x0 }),
        (0.1f64..3.0, -1.0f64..0.0, 0.5f64..2.0).prop_map(|(height, a, b)| DataSpec::Box { height, a, b }),
        prop::collection::vec(0.0f64..2.0, 1..4).prop_map(|values| DataSpec::PiecewiseConstant {
            breakpoints: (0..=values.len()).map(|k| k as f64).collect(),
            values,
        }),
    ]
}

prop_compose! {
    fn experiment()(
        mode in prop_oneof![Just(Mode::Simulate), Just(Mode::Convergence), Just(Mode::Audit), Just(Mode::FtlCheck)],
        t_final in 0.01f64..2.0,
        window in prop::option::of((-2.0f64..0.0, 0.5f64..3.0)),
        flux in flux_spec(),
        data in data_spec(),
        mass in any::<bool>(),
        n in 2usize..500,
        dt_max in 1e-5f64..1e-1,
        theta in 0.01f64..0.99,
        eps_coll in prop::option::of(1e-12f64..1e-6),
        snapshots in 0usize..50,
    ) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            out: "out/x".into(),
            t_final,
            window,
            samples: None,
            flux,
            data,
            placement: PlacementSpec {
                strategy: if mass { PlacementStrategy::MassEquidistributed } else { PlacementStrategy::Uniform },
                n: Some(n),
                n_list: Some(vec![n, 2 * n, 4 * n]),
            },
            integrator: IntegratorSpec { dt_max, theta, eps_coll, snapshots },
            ftl: Default::default(),
        }
    }
}

proptest! {
    #[test]
    fn config_round_trip(cfg in experiment()) {
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}
