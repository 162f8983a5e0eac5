use std::path::Path;
use std::process::Command;

fn kinhom(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kinhom")).args(args).output().expect("binary runs")
}

fn scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn pipeline_writes_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "[cell]\nn = 8\n[macro]\nn = 64\n");
    let out = dir.path().join("out");
    let o = kinhom(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    let d: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("d_eff00 = "))
        .expect("d_eff00 line")
        .parse()
        .unwrap();
    assert!((d - 0.5).abs() < 1e-12, "{summary}");
    for f in ["cell.csv", "equilibrium.csv", "effective.csv", "macro.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let eff = std::fs::read_to_string(out.join("effective.csv")).unwrap();
    assert_eq!(eff.lines().next().unwrap(), "x0,d_eff00,u_eff0,b0,ellipticity_min");
}

#[test]
fn serial_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "[sigma]\nfamily = \"random_symmetric\"\n[cell]\nn = 8\n[macro]\nn = 64\nt_final = 0.1\n[kinetic]\nepsilons = [0.4]\nn_checkpoints = 2\n",
    );
    let read_all = |out: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names
            .into_iter()
            .filter(|n| n != "timings.csv")
            .map(|n| std::fs::read(out.join(&n)).unwrap())
            .collect::<Vec<_>>()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = kinhom(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "1", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_all(&a), read_all(&b));
    let echoed = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 7"));
}

#[test]
fn sdb_violation_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "[sigma]\nfamily = \"table\"\ntable = [[1.0, 2.0], [3.0, 4.0]]\n");
    let o = kinhom(&["check", "--config", &cfg]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("check_sdb") && err.contains("semi-detailed balance"), "{err}");
}

#[test]
fn unknown_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "[sigma]\nalpah = 0.2\n");
    let o = kinhom(&["cell", "--config", &cfg]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sigma.alpah") && err.contains("sigma.alpha"), "{err}");
}

#[test]
fn sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "[cell]\nn = 8\n[macro]\nn = 128\nt_final = 0.2\n[kinetic]\nepsilons = [0.4, 0.2]\nn_checkpoints = 2\n",
    );
    let out = dir.path().join("out");
    let o = kinhom(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("eps,err,ratio,l2_flag,mass_drift,steps\n"), "{stdout}");
    assert_eq!(stdout.lines().count(), 3);
    assert!(out.join("timings.csv").exists());
}
