//! End-to-end checks of the command-line driver: exit codes, file
//! round-trips and run-to-run determinism.

use std::path::Path;
use std::process::Command;

use matterlink_core::io::Table;
use matterlink_core::trap::TrapLayout;
use matterlink_core::waveform::waveform_from_text;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matterlink"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|_| panic!("missing {name}"))
}

#[test]
fn missing_config_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["synth", "--config", "/no/such/file.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "outputs were written");
}

#[test]
fn invalid_config_is_diagnosed_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[synthesis]\nsg_window = 24\n").unwrap();
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sg_window"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[layout]\ngap_x = 10.0\n").unwrap(); // missing _um suffix
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn layout_init_emits_a_parseable_default_layout() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().arg("layout-init").arg("--out").arg(dir.path()).status().unwrap();
    assert!(status.success());
    let layout = TrapLayout::<f64>::from_text(&read(dir.path(), "layout.txt")).unwrap();
    assert_eq!(layout.zones.zone2 - layout.zones.zone1, 684.0);
    assert_eq!(layout.gap_x, 10.0);
}

#[test]
fn synth_produces_the_expected_solution_count_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\n").unwrap();
    let status = bin()
        .args(["synth", "--keep-raw", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let w = waveform_from_text::<f64>(&read(dir.path(), "waveform.tsv")).unwrap();
    assert_eq!(w.len(), 58);
    let raw = waveform_from_text::<f64>(&read(dir.path(), "waveform_raw.tsv")).unwrap();
    assert_eq!(raw.len(), 343);
    // The manifest lists every output with a checksum.
    let manifest = read(dir.path(), "run_manifest.txt");
    assert!(manifest.contains("waveform.tsv"));
    assert!(manifest.contains("config_sha256"));
}

#[test]
fn identical_runs_produce_identical_data_files() {
    let mk = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "seed = 11\n[ramsey]\ntau_ms = [5.0, 100.0, 300.0]\nshots = 100\nlinks = 2\n",
        )
        .unwrap();
        let ok = bin()
            .args(["ramsey", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap()
            .success();
        assert!(ok);
        dir
    };
    let a = mk();
    let b = mk();
    for name in ["contrast.tsv", "fringe_tau100ms.tsv", "t2_fit.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs between runs");
    }
}

#[test]
fn rates_report_contains_the_staged_chain() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().arg("rates").arg("--out").arg(dir.path()).status().unwrap();
    assert!(status.success());
    let rep = read(dir.path(), "rates.txt");
    assert!(rep.contains("converted_fraction = 0.09"));
    assert!(rep.contains("switched_fraction = 0.0554"));
    assert!(rep.contains("distilled_fraction = 0.00924"));
    assert!(rep.contains("matter_link_rate_hz = 2424."));
}

#[test]
fn link_and_verify_consume_the_synth_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n").unwrap();
    for args in [vec!["synth"], vec!["verify"], vec!["link", "--ideal"]] {
        let ok = bin()
            .args(&args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap()
            .success();
        assert!(ok, "{args:?} failed");
    }
    let report = read(dir.path(), "report.txt");
    assert!(report.contains("success = true"));
    assert!(report.contains("mean_speed_mps = 1.658"));
    // The trajectory table parses back.
    let t = Table::from_text(&read(dir.path(), "trajectory.tsv")).unwrap();
    assert_eq!(t.columns[0], "t_us");
    assert!(t.rows.len() > 100);
    // And the verify table carries its summary metadata.
    let v = Table::from_text(&read(dir.path(), "verify.tsv")).unwrap();
    assert_eq!(v.get_meta("uncaptured_rows"), Some("0"));
}

#[test]
fn sweep_preserves_completed_rows_when_a_row_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n").unwrap();
    let out = bin()
        .args(["sweep", "--param", "gap-x-um", "--values=-4.0,10.0", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    // Partial failure: nonzero exit, but the table exists with both rows.
    assert!(!out.status.success());
    let t = Table::from_text(&read(dir.path(), "sweep.tsv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    let ok_col = t.column("ok").unwrap();
    assert_eq!(ok_col, vec![0.0, 1.0]);
}
