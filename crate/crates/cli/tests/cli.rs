use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn photonkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photonkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PHOTONKIT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = photonkit(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const BARE_WAVEGUIDE: &str = r#"
schema_version = 1

[device]
cells = []
e = 6
waveguide_half_width = 303.2
n_periodic = 0

[device.periodic_cell]
a = 401.3
A = 171.3
e = 6
g = 60.6
delta = 54.0
"#;

const CRC_SIM: &str = r#"
schema_version = 1
seed = 11

[crc]
threshold = 5
shots = 2000

[crc.telegraph]
rate_on = 300000.0
rate_off = 20000.0
p_on = 0.6
"#;

#[test]
fn readout_headline_from_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let s = ok(&["ssr", "--config", "si_table1", "--threshold", "0", "--out", "o"], tmp.path());
    let m = read_json(&tmp.path().join("o/metrics.json"));
    assert_eq!(s["result"], m);
    let f = m["fidelity"].as_f64().unwrap();
    assert!((f - 0.9844).abs() < 0.005, "{f}");
    assert!((m["discard_fraction"].as_f64().unwrap() - 0.691).abs() < 0.015);
    assert_eq!(m["threshold"], 0);
    assert_eq!(m["convention"], "kernel_normalized");
    let pmf = std::fs::read_to_string(tmp.path().join("o/pmf_bright.csv")).unwrap();
    assert!(pmf.starts_with("k,probability\n"));
}

#[test]
fn saturation_reflectance_from_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let s = ok(&["sat-reflect", "--is-ref", "174.5", "--is-ref-err", "6.9", "--is-wg", "224.7", "--is-wg-err", "8.6", "--out", "o"], tmp.path());
    let r = s["result"]["r_v2"].as_f64().unwrap();
    let e = s["result"]["r_v2_err"].as_f64().unwrap();
    assert_eq!(format!("{r:.3}"), "0.553");
    assert_eq!(format!("{e:.3}"), "0.085");
}

#[test]
fn bare_waveguide_reflects_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bare.toml", BARE_WAVEGUIDE);
    let s = ok(&["reflect", "--config", &cfg, "--out", "o"], tmp.path());
    assert!(s["result"]["max_r"].as_f64().unwrap() < 1e-20);
    let csv = std::fs::read_to_string(tmp.path().join("o/spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("nu_THz,R,T,S"));
    for line in lines {
        let r: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(r < 1e-20, "{line}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "crc.toml", CRC_SIM);
    ok(&["crc-sim", "--config", &cfg, "--out", "a"], tmp.path());
    ok(&["crc-sim", "--config", &cfg, "--out", "b"], tmp.path());
    ok(&["crc-sim", "--config", &cfg, "--seed", "12", "--out", "c"], tmp.path());
    let (a, b, c) = (dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")), dir_bytes(&tmp.path().join("c")));
    assert_eq!(a, b);
    assert_ne!(a["records.csv"], c["records.csv"]);
    assert_eq!(read_json(&tmp.path().join("c/manifest.json"))["seed"], 12);

    ok(&["ssr", "--config", "si_table1", "--shots", "20000", "--seed", "3", "--out", "d"], tmp.path());
    ok(&["ssr", "--config", "si_table1", "--shots", "20000", "--seed", "3", "--out", "e"], tmp.path());
    assert_eq!(dir_bytes(&tmp.path().join("d")), dir_bytes(&tmp.path().join("e")));
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "crc.toml", CRC_SIM);
    ok(&["crc-sim", "--config", &cfg, "--out", "first"], tmp.path());
    ok(&["run", "first/manifest.json", "--out", "replay"], tmp.path());
    assert_eq!(dir_bytes(&tmp.path().join("first")), dir_bytes(&tmp.path().join("replay")));

    // A replay that reads an input file checks its digest first.
    ok(&["crc-filter", "--records", "first/records.csv", "--threshold", "5", "--out", "filtered"], tmp.path());
    let manifest = read_json(&tmp.path().join("filtered/manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
    ok(&["run", "filtered/manifest.json", "--out", "filtered2"], tmp.path());
    assert_eq!(dir_bytes(&tmp.path().join("filtered")), dir_bytes(&tmp.path().join("filtered2")));
    std::fs::write(tmp.path().join("first/records.csv"), "crc_counts,readout_counts\n9,9\n").unwrap();
    let out = photonkit(&["run", "filtered/manifest.json", "--out", "filtered3"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sha256"));
}

#[test]
fn config_with_command_runs_directly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ssr.toml", "schema_version = 1\ncommand = \"ssr\"\nthreshold = 1\n\n[readout]\nlambda_b = 105000.0\nlambda_d = 490.0\na_prime = 0.768\na_dprime = 0.232\ngamma_prime = 2.0833333333333335\ngamma_dprime = 0.31746031746031744\nT = 10.0\n");
    let s = ok(&["run", &cfg, "--out", "o"], tmp.path());
    assert_eq!(s["result"]["threshold"], 1);
    // The same document cannot drive a different subcommand.
    let out = photonkit(&["bands", "--config", &cfg, "--out", "p"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_one_and_name_the_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write(tmp.path(), "typo.toml", "schema_version = 1\nthreshhold = 0\n");
    let out = photonkit(&["ssr", "--config", &typo], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshhold"));

    let out = photonkit(&["sat-reflect", "--is-ref", "-1", "--is-ref-err", "1", "--is-wg", "2", "--is-wg-err", "1", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("-1"));

    let out = photonkit(&["fit", "--kind", "voigt", "--data", "missing.csv", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!tmp.path().join("o").exists(), "paths are checked before anything is written");

    let out = photonkit(&["no-such-command"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_photonkit"))
        .args(["ssr", "--config", "si_table1"])
        .current_dir(tmp.path())
        .env("PHOTONKIT_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/metrics.json").exists());
}

#[test]
fn help_documents_units() {
    let tmp = tempfile::tempdir().unwrap();
    let top = photonkit(&["--help"], tmp.path());
    assert!(top.status.success());
    let text = String::from_utf8_lossy(&top.stdout);
    for unit in ["THz", "nm", "µs", "cps", "nW"] {
        assert!(text.contains(unit), "{unit}");
    }
    let ssr = String::from_utf8_lossy(&photonkit(&["ssr", "--help"], tmp.path()).stdout).into_owned();
    assert!(ssr.contains("cps") && ssr.contains("µs"));
}

#[test]
fn every_subcommand_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    ok(&["profile", "--config", "nominal_reflector", "--out", "profile"], dir);
    let b = ok(&["bands", "--config", "nominal_reflector", "--step", "1", "--slices", "32", "--out", "bands"], dir);
    let lo = b["result"]["gaps"][0]["lo"].as_f64().unwrap();
    assert!(lo > 150.0 && lo < 250.0, "{lo}");
    ok(&["converge", "--config", "nominal_reflector", "--lo", "290", "--hi", "300", "--step", "5", "--slices", "16", "--n-max", "14", "--out", "conv"], dir);

    let opt = write(dir, "opt.toml", &format!(
        "{}\n[optimize]\nwindow = [290.0, 330.0]\nbudget = 20\nfree = [{{ name = \"cells[2].x_minus\", lo = 140.0, hi = 200.0 }}]\n\n[optimize.eval]\ngrid_spacing = 5.0\nloss = 0.0\nn_slices_per_cell = 16\nn_material = 2.6\nreference_half_width = 403.2\n",
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/nominal_reflector.toml")).unwrap()
    ));
    let o = ok(&["optimize", "--config", &opt, "--seed", "5", "--out", "opt"], dir);
    assert_eq!(o["result"]["evaluations"], 20);
    assert!(std::fs::read_to_string(dir.join("opt/trace.csv")).unwrap().starts_with("iter,objective\n"));

    let spectrum = |scale: f64| {
        let mut s = String::from("nu_THz,intensity\n");
        for k in 0..5 {
            s += &format!("{},{}\n", 300 + k, scale * (1.0 + k as f64));
        }
        s
    };
    write(dir, "sig_r.csv", &spectrum(0.5));
    write(dir, "ref_r.csv", &spectrum(1.0));
    write(dir, "sig_t.csv", &spectrum(0.1));
    write(dir, "ref_t.csv", &spectrum(1.0));
    let c = ok(&["calibrate", "--sig-r", "sig_r.csv", "--ref-r", "ref_r.csv", "--sig-t", "sig_t.csv", "--ref-t", "ref_t.csv", "--out", "cal"], dir);
    assert_eq!(c["result"]["points"], 5);

    let sweep = write(dir, "sweep.toml", &format!(
        "{}\n[[sweep]]\nlabel = \"low\"\nlambda_b = 20000.0\n\n[[sweep]]\nlabel = \"high\"\n",
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/si_table1.toml")).unwrap()
    ));
    let s = ok(&["ssr-sweep", "--config", &sweep, "--out", "sweep"], dir);
    let rows = s["result"]["rows"].as_array().unwrap();
    assert!(rows[0]["fidelity"].as_f64().unwrap() < rows[1]["fidelity"].as_f64().unwrap());

    let mut sat = String::from("P_nW,I_cps\n");
    for k in 1..=20 {
        let p = 2.5 * k as f64;
        sat += &format!("{p},{}\n", 1e5 * p / (p + 10.0));
    }
    write(dir, "sat.csv", &sat);
    let f = ok(&["fit", "--kind", "saturation", "--data", "sat.csv", "--out", "fit"], dir);
    assert!((f["result"]["i_s"]["value"].as_f64().unwrap() - 1e5).abs() < 1e-3);

    let mut g2 = String::from("tau_ns,coincidences\n");
    for k in 0..=880 {
        let t = -110.0 + 0.25 * k as f64;
        let mut y = 3.0;
        for j in -2i32..=2 {
            let s = if j == 0 { 0.2 } else { 1.0 };
            let d: f64 = (t - 40.0 * j as f64).abs();
            y += s * (400.0 * (-d / 1.5).exp() + 600.0 * (-d / 6.0).exp());
        }
        g2 += &format!("{t},{y}\n");
    }
    write(dir, "g2.csv", &g2);
    let g = ok(&["fit", "--kind", "g2", "--data", "g2.csv", "--pulse-period", "40", "--side-peaks", "2", "--dark-level", "3", "--out", "g2"], dir);
    assert!((g["result"]["g2_0"].as_f64().unwrap() - 0.2).abs() < 1e-6);
    assert_eq!(g["result"]["single_photon"], true);
}
