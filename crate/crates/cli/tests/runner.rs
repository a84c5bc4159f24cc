use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use resonet_cli::config::{parse_config, Format};
use resonet_cli::output::{emit_results, OutputFormat, ResultBundle};
use resonet_cli::run::run_experiment;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_text(text: &str) -> ResultBundle {
    run_experiment(&parse_config(text, Format::Toml, None).unwrap()).unwrap()
}

fn run_file(name: &str) -> ResultBundle {
    run_text(&fs::read_to_string(config_path(name)).unwrap())
}

/// Parses a CSV written by the runner into named columns.
fn read_csv(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let mut cols: BTreeMap<String, Vec<f64>> =
        header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), header.len());
        for (h, f) in header.iter().zip(fields) {
            cols.get_mut(h).unwrap().push(f.parse().unwrap());
        }
    }
    cols
}

fn emitted(bundle: &ResultBundle) -> (tempfile::TempDir, serde_json::Value) {
    let dir = tempfile::tempdir().unwrap();
    emit_results(bundle, dir.path(), OutputFormat::Csv).unwrap();
    let manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    (dir, manifest)
}

fn summary(manifest: &serde_json::Value, key: &str) -> f64 {
    manifest["summary"][key]["value"]
        .as_f64()
        .unwrap_or_else(|| panic!("no summary `{key}`"))
}

fn population_share(cols: &BTreeMap<String, Vec<f64>>, row: usize, site: usize) -> f64 {
    let n = (cols.len() - 1) / 2;
    let pop = |j: usize| {
        cols[&format!("site_{j}_re")][row].powi(2) + cols[&format!("site_{j}_im")][row].powi(2)
    };
    pop(site) / (1..=n).map(pop).sum::<f64>()
}

const SMALL_RUN: &str =
    "mode = \"evolve-rwa\"\nn = 4\nc0_hz = 52.0\n[evolve]\nt_span_s = 0.0099\nsample_dt_s = 1e-4\n";

#[test]
fn trajectory_csv_shape() {
    let (dir, _) = emitted(&run_text(SMALL_RUN));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(
        lines[0],
        "time_s,site_1_re,site_1_im,site_2_re,site_2_im,site_3_re,site_3_im,site_4_re,site_4_im"
    );
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
}

#[test]
fn every_column_declares_a_unit() {
    for name in [
        "nn8_transfer.toml",
        "spectrum_nnn4.toml",
        "parity_nn5.toml",
        "calibration.toml",
        "synth_nn8.toml",
    ] {
        let b = run_file(name);
        for t in &b.tables {
            assert!(
                t.columns.iter().all(|c| !c.unit.is_empty()),
                "{name}: {}",
                t.name
            );
        }
        assert!(b.summary.values().all(|s| !s.unit.is_empty()));
    }
}

#[test]
fn runs_are_deterministic() {
    for name in [
        "nnn4_reconfigure.toml",
        "spectrum_nn8.toml",
        "parity_nnn4.toml",
        "calibration.toml",
    ] {
        let a = run_file(name);
        let b = run_file(name);
        assert_eq!(a.tables, b.tables, "{name}");
        assert_eq!(a.summary, b.summary, "{name}");
        assert_eq!(a.metadata.config_sha256, b.metadata.config_sha256);
    }
}

fn strip_wall_time(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"wall_time_s\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn outputs_are_byte_identical_apart_from_wall_time() {
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let dirs: Vec<tempfile::TempDir> = (0..2)
            .map(|_| {
                let d = tempfile::tempdir().unwrap();
                emit_results(&run_file("nnn4_reconfigure.toml"), d.path(), format).unwrap();
                d
            })
            .collect();
        let mut names: Vec<_> = fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = fs::read_to_string(dirs[0].path().join(&name)).unwrap();
            let b = fs::read_to_string(dirs[1].path().join(&name)).unwrap();
            if name.to_str().unwrap().ends_with(".json") {
                assert_eq!(strip_wall_time(&a), strip_wall_time(&b));
            } else {
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn config_hash_follows_canonical_form() {
    let a = run_text(SMALL_RUN);
    let spaced = SMALL_RUN
        .replace(" = ", "   =   ")
        .replace("\n[", "\n\n# comment\n[");
    let b = run_text(&spaced);
    assert_eq!(a.metadata.config_sha256, b.metadata.config_sha256);
    let c = run_text(&SMALL_RUN.replace("52.0", "52.5"));
    assert_ne!(a.metadata.config_sha256, c.metadata.config_sha256);
    assert_eq!(a.metadata.config_sha256.len(), 64);
}

#[test]
fn evolve_summary_reproducible_from_tables() {
    let b = run_file("nnn4_reconfigure.toml");
    let (dir, m) = emitted(&b);
    let ev = read_csv(&dir.path().join("events.csv"));
    // rows: start, t_eval, then one per segment end
    assert!((ev["time_s"][1] - summary(&m, "t_eval_s")).abs() == 0.0);
    let target = summary(&m, "target_site") as usize;
    assert_eq!(
        population_share(&ev, 1, target),
        summary(&m, "fidelity_at_target")
    );
    for seg in 1..=2 {
        let row = seg + 1;
        assert_eq!(
            ev["time_s"][row],
            summary(&m, &format!("segment_{seg}_end_s"))
        );
        let site = summary(&m, &format!("segment_{seg}_best_site")) as usize;
        assert_eq!(
            population_share(&ev, row, site),
            summary(&m, &format!("segment_{seg}_best_fidelity"))
        );
    }
}

#[test]
fn spectrum_summary_reproducible_from_tables() {
    let (dir, m) = emitted(&run_file("spectrum_nnn4.toml"));
    let resp = read_csv(&dir.path().join("response.csv"));
    let (x, y) = (&resp["detuning_hz"], &resp["magnitude"]);
    let mut peaks = Vec::new();
    for i in 1..y.len() - 1 {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            // vertex of the parabola through three equally spaced points
            let h = x[i + 1] - x[i];
            let curv = y[i - 1] - 2.0 * y[i] + y[i + 1];
            peaks.push(x[i] + 0.5 * h * (y[i - 1] - y[i + 1]) / curv);
        }
    }
    assert_eq!(peaks.len() as f64, summary(&m, "peak_count"));
    let listed = read_csv(&dir.path().join("peaks.csv"))["detuning_hz"].clone();
    for (a, b) in peaks.iter().zip(&listed) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let mean = (listed[listed.len() - 1] - listed[0]) / (listed.len() - 1) as f64;
    assert!((mean - summary(&m, "mean_spacing_hz")).abs() < 1e-9);
    assert!((mean - 26.0).abs() < 0.02 * 26.0, "{mean}");
    let expected = read_csv(&dir.path().join("eigenvalues.csv"))["expected_peak_hz"].clone();
    let worst = expected
        .iter()
        .zip(&listed)
        .map(|(e, p)| (e - p).abs())
        .fold(0.0, f64::max);
    assert!((worst - summary(&m, "max_peak_deviation_hz")).abs() < 1e-12);
}

#[test]
fn parity_and_calibration_summaries_reproducible_from_tables() {
    let (dir, m) = emitted(&run_file("parity_nnn4.toml"));
    let t = read_csv(&dir.path().join("parity.csv"));
    for k in 0..t["launch_site"].len() {
        let z0 = num_complex::Complex::new(t["amplitude_0_re"][k], t["amplitude_0_im"][k]);
        let z2 = num_complex::Complex::new(t["amplitude_2T_re"][k], t["amplitude_2T_im"][k]);
        let phase = (z2 / z0).arg();
        let launch = t["launch_site"][k] as usize;
        let reported = summary(&m, &format!("launch_{launch}_phase_shift_rad"));
        assert!((phase - reported).abs() < 1e-12 || (phase.abs() - PI).abs() < 1e-9);
        assert_eq!(reported, t["phase_shift_rad"][k]);
    }

    let (dir, m) = emitted(&run_file("calibration.toml"));
    let p = read_csv(&dir.path().join("points.csv"));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for k in 0..p["v_dc_v"].len() {
        let x = p["v_dc_v"][k] * p["v_ac_v"][k];
        sxx += x * x;
        sxy += x * p["coupling_hz"][k];
    }
    let alpha = summary(&m, "alpha_hz_per_v2");
    assert!((sxy / sxx - alpha).abs() < 1e-12 * alpha);
    let q = read_csv(&dir.path().join("predictions.csv"));
    assert!((q["coupling_hz"][0] - summary(&m, "prediction_1_coupling_hz")).abs() == 0.0);
    assert!((alpha * q["v_dc_v"][0] * q["v_ac_v"][0] - q["coupling_hz"][0]).abs() < 1e-12);
}

#[test]
fn full_summary_reproducible_from_tables() {
    let (dir, m) = emitted(&run_file("full_nnn4.toml"));
    let env = read_csv(&dir.path().join("envelope.csv"));
    let reference = read_csv(&dir.path().join("reference.csv"));
    let until = summary(&m, "transient_until_s");
    let n = (env.len() - 1) / 2;
    let after: Vec<usize> = (0..env["time_s"].len())
        .filter(|&k| env["time_s"][k] >= until)
        .collect();
    let amp = |cols: &BTreeMap<String, Vec<f64>>, j: usize, k: usize| {
        cols[&format!("site_{j}_re")][k].hypot(cols[&format!("site_{j}_im")][k])
    };
    let peak = (1..=n)
        .flat_map(|j| after.iter().map(move |&k| (j, k)))
        .map(|(j, k)| amp(&reference, j, k))
        .fold(0.0, f64::max);
    assert!((peak - summary(&m, "peak_amplitude")).abs() <= 1e-15 * peak);
    let worst = (1..=n)
        .flat_map(|j| after.iter().map(move |&k| (j, k)))
        .map(|(j, k)| (amp(&env, j, k) - amp(&reference, j, k)).abs() / peak)
        .fold(0.0, f64::max);
    assert!(
        (worst - summary(&m, "max_magnitude_error")).abs() < 1e-12,
        "{worst}"
    );

    let ev = read_csv(&dir.path().join("events.csv"));
    let target = summary(&m, "target_site") as usize;
    let share = population_share(
        &ev.iter()
            .filter(|(k, _)| !k.starts_with("reference_"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        1,
        target,
    );
    assert!((share - summary(&m, "fidelity_at_target_T")).abs() < 1e-12);
    let z = |row: usize| num_complex::Complex::new(ev["site_1_re"][row], ev["site_1_im"][row]);
    let phase = (z(2) / z(0)).arg();
    assert!((phase - summary(&m, "phase_shift_2T_rad")).abs() < 1e-12);
}

fn resonet(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resonet"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let cfg = config_path("parity_nn5.toml");
    let ok = resonet(
        &[
            "parity",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_s,
            "--format",
            "json",
        ],
        &[],
    );
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.join("results.json").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n = 8\nc0_hz = 30\n[evolve]\nlaunch = 9\n").unwrap();
    let r = resonet(
        &[
            "evolve-rwa",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            out_s,
        ],
        &[],
    );
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 4") && err.contains("site 9"), "{err}");

    let r = resonet(
        &[
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_s,
        ],
        &[],
    );
    assert_eq!(
        r.status.code(),
        Some(1),
        "mode mismatch is a validation error"
    );

    let missing = dir.path().join("nope.toml");
    let r = resonet(
        &[
            "synth",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            out_s,
        ],
        &[],
    );
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope.toml"));

    // a vanishing mass turns the pulse force into an infinite acceleration
    let blow = dir.path().join("blow.toml");
    let mut text = String::from("n = 2\nc0_hz = 52.0\nchain = [1, 2]\n");
    for j in 1..=2 {
        text.push_str(&format!(
            "[[resonators]]\nindex = {j}\nfreq_hz = {}\ngamma_hz = 0.0\nmass = 1e-300\n",
            13e3 + 500.0 * j as f64
        ));
    }
    text.push_str("[full]\npulse_amplitude = 1e20\n");
    fs::write(&blow, text).unwrap();
    let r = resonet(
        &[
            "evolve-full",
            "--config",
            blow.to_str().unwrap(),
            "--out",
            out_s,
        ],
        &[],
    );
    assert_eq!(
        r.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
}

#[test]
fn unwritable_output_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = config_path("synth_nn8.toml");
    let r = resonet(
        &[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            blocker.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains(blocker.to_str().unwrap()));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("spectrum_nn8.toml");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let r = resonet(
            &[
                "spectrum",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            &[("RESONET_THREADS", threads)],
        );
        assert_eq!(r.status.code(), Some(0));
        outputs.push(fs::read_to_string(out.join("response.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
