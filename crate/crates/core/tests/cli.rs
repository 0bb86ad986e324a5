use std::path::Path;
use std::process::Command;

use num_complex::Complex64;

use nlslab::random_data::make_initial_data;
use nlslab::records::{parse_float, read_csv};
use nlslab::runner::final_modes_from_csv;
use nlslab::seed::{derive_seed, labels};

fn nlslab(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlslab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn evolve_one_free_flow() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlslab(
        &["evolve-one", "--eps", "0", "--cutoff", "6", "--seed", "17"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let modes = final_modes_from_csv(&dir.path().join("trajectory.csv")).unwrap();
    let draw = make_initial_data(0.25, 6, derive_seed(17, labels::DRAW, 0)).unwrap();
    let mut worst = 0.0f64;
    for (n, v) in modes {
        let expected = draw.field().get(n) * Complex64::from_polar(1.0, -((n * n) as f64));
        worst = worst.max((v - expected).norm());
    }
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn sample_ldp_small_ensemble() {
    for flow in ["linear", "modified", "nonlinear"] {
        let dir = tempfile::tempdir().unwrap();
        let out = nlslab(
            &[
                "sample-ldp",
                "--samples",
                "100",
                "--cutoff",
                "8",
                "--flow",
                flow,
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let path = dir.path().join("tail_estimates.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# nlslab"));
        let (header, rows) = read_csv(&path).unwrap();
        let col = |name: &str| header.iter().position(|h| h == name).unwrap();
        let row = &rows[0];
        assert_eq!(row[col("trials")], "100");
        let hits: u64 = row[col("hits")].parse().unwrap();
        assert!(hits <= 100);
        let lo = parse_float(&row[col("ci_low")]).unwrap();
        let hi = parse_float(&row[col("ci_high")]).unwrap();
        let p = parse_float(&row[col("p_hat")]).unwrap();
        assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "epsilon = 0.5\ncutoff = 4\nsamples = 50\nflow = \"linear\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = nlslab(
        &[
            "sample-ldp",
            "--config",
            cfg.to_str().unwrap(),
            "--eps",
            "0.25",
        ],
        &out_dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(saved["config"]["epsilon"], 0.25);
    assert_eq!(saved["config"]["cutoff"], 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = nlslab(&["sample-ldp", "--theta", "0"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("theta"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let unknown = nlslab(
        &["evolve-one", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(unknown.status.code(), Some(2));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let io = nlslab(&["evolve-one", "--cutoff", "4"], &blocker.join("sub"));
    assert_eq!(io.status.code(), Some(4));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "rate-curve",
        "--cutoff",
        "8",
        "--samples",
        "1000",
        "--z0",
        "1.5",
        "--seed",
        "5",
    ];
    let ra = nlslab(&[&args[..], &["--workers", "1"]].concat(), a.path());
    let rb = nlslab(&[&args[..], &["--workers", "2"]].concat(), b.path());
    assert!(ra.status.success() && rb.status.success());
    for name in ["tail_estimates.csv", "rate_curve.csv", "config.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
