use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaussloss::gaussian::GbsSpec;
use gaussloss::loss::LossModel;
use gaussloss::mitigation::{analytic_corrections, DeltaEvaluator};
use gaussloss::PndOptions;
use gaussloss_cli::config::ExperimentConfig;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn gaussloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussloss")).args(args).output().expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn lossless_config_gives_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussloss(&["run", example("lossless.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("lossless.csv"));
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!(r[1].parse::<f64>().unwrap().abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn tropolone_config_reports_vacuum_correction() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussloss(&["run", example("tropolone.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().starts_with("scheme"));
    let rows = csv_rows(&dir.path().join("tropolone.csv"));
    let vac = rows.iter().find(|r| r[0] == "VAC_FIXED_RATIO").unwrap();
    assert!((vac[1].parse::<f64>().unwrap() - 0.139).abs() < 0.003);
    assert!(dir.path().join("tropolone.meta.json").exists());
}

#[test]
fn sweep_rows_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussloss(&["run", example("fig4.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("fig4.csv"));
    assert_eq!(rows.len(), 12 * 11);
    for r in rows.iter().filter(|r| r[2] == "VAC") {
        let xt: f64 = r[1].parse().unwrap();
        let spec = GbsSpec::displaced_single_mode(xt, 0.0, 0.0);
        let loss = LossModel::input_loss(&spec.unitary, &[0.5]).unwrap();
        let eval = DeltaEvaluator::new(&spec, &loss, PndOptions::default()).unwrap();
        let probe = GbsSpec::displaced_single_mode(analytic_corrections(xt, 0.5).vacuum, 0.0, 0.0);
        let expected = eval.delta(&probe).unwrap().0;
        assert!((r[4].parse::<f64>().unwrap() - expected).abs() < 1e-11, "{r:?} vs {expected}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = gaussloss(&[
            "run",
            example("tropolone.cfg").to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--format",
            "json",
            "--seed",
            "5",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["tropolone.json", "tropolone.meta.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn schema_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "schemes = [\"NONE\"]\nunknown = 1\n").unwrap();
    let out = gaussloss(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(out.stderr.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(report["error"], "schema");
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    std::fs::write(
        &cfg,
        "schemes = [\"NONE\"]\n[target]\nfixture = \"tropolone\"\n[loss]\nkind = \"uniform\"\neta = 0.7\n[cutoff]\ncap = 2\n",
    )
    .unwrap();
    let out = gaussloss(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(out.stderr.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(report["operation"], "run_benchmark");
}

#[test]
fn verify_filter_runs_only_matching_criteria() {
    let out = gaussloss(&["verify", "--filter", "ordering"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("PASS [ 5]"));
    let out = gaussloss(&["verify", "--filter", "no-such-criterion"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn example_configs_round_trip() {
    for name in ["tropolone.cfg", "lossless.cfg", "fig4.cfg"] {
        let cfg = ExperimentConfig::load(&example(name)).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}
