use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../recipes")
        .join(format!("{name}.toml"))
}

fn hcfwm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcfwm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn hcfwm")
}

fn run_ok(sub: &str, config: &Path, out: &Path, label: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![sub, config.to_str().unwrap(), "--label", label];
    args.extend_from_slice(extra);
    let o = hcfwm(&args, out);
    assert!(
        o.status.success(),
        "{sub} {} failed: {}",
        config.display(),
        String::from_utf8_lossy(&o.stderr)
    );
    out.join(sub).join(label)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_config_exits_1_naming_missing_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "empty.toml", "");
    let o = hcfwm(&["jsa", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field"));
}

#[test]
fn unit_typo_is_rejected_with_key_name() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(recipe("fig8_xe")).unwrap().replace("t_nm", "t_um");
    let cfg = write_config(tmp.path(), "typo.toml", &text);
    let o = hcfwm(&["phasematch", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_um"));
}

#[test]
fn negative_pressure_exits_1_naming_key() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(recipe("fig8_xe"))
        .unwrap()
        .replace("pressure_bar = 3.4", "pressure_bar = -3.4");
    let cfg = write_config(tmp.path(), "neg.toml", &text);
    let o = hcfwm(&["phasematch", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gas.pressure_bar"));
}

#[test]
fn unmatched_band_filter_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(recipe("fig8_xe"))
        .unwrap()
        .replace("[phasematch]", "[phasematch]\nband_s = \"VII\"");
    let cfg = write_config(tmp.path(), "band.toml", &text);
    let o = hcfwm(&["jsa", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bundled_recipes_run() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, sub) in [
        ("fig5_t300", "density-map"),
        ("fig5_t600", "density-map"),
        ("fig7_lengths", "sweep-length"),
        ("fig8_xe", "sweep-pressure"),
        ("fig8_ar", "sweep-pressure"),
    ] {
        let dir = run_ok(sub, &recipe(name), tmp.path(), name, &[]);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["subcommand"], sub);
        for f in manifest["files"].as_array().unwrap() {
            assert!(dir.join(f["path"].as_str().unwrap()).is_file(), "{name}: {f}");
        }
    }
}

#[test]
fn every_subcommand_writes_its_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = recipe("fig8_xe");
    for (sub, files) in [
        ("dispersion", &["bands.json", "zdw.json", "dispersion.csv"][..]),
        ("phasematch", &["branches.json", "branches.csv"][..]),
        ("jsa", &["jsa.json", "jsi.csv"][..]),
        ("schmidt", &["schmidt_flat.json", "schmidt_complex.json", "signal_modes.csv", "idler_modes.csv"][..]),
        ("set-sim", &["set_scan.csv", "reconstruction.csv", "set.json"][..]),
    ] {
        let dir = run_ok(sub, &cfg, tmp.path(), "x", &[]);
        for f in files {
            assert!(dir.join(f).is_file(), "{sub} missing {f}");
        }
    }
}

#[test]
fn formats_filter_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(recipe("fig8_xe")).unwrap() + "\n[output]\nformats = [\"json\"]\n";
    let cfg = write_config(tmp.path(), "json_only.toml", &text);
    let dir = run_ok("phasematch", &cfg, tmp.path(), "x", &[]);
    assert!(dir.join("branches.json").is_file());
    assert!(!dir.join("branches.csv").exists());
}

#[test]
fn t600_density_map_has_band_two_to_one_family() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_ok("density-map", &recipe("fig5_t600"), tmp.path(), "x", &[]);
    let csv = std::fs::read_to_string(dir.join("density_map.csv")).unwrap();
    let mut families = std::collections::BTreeSet::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        families.insert((cols[3].to_string(), cols[4].to_string()));
    }
    assert!(families.len() >= 2, "{families:?}");
    assert!(families.contains(&("II".to_string(), "I".to_string())), "{families:?}");
}

#[test]
fn xe_sweep_reports_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hcfwm(
        &["sweep-pressure", recipe("fig8_xe").to_str().unwrap(), "--label", "x"],
        tmp.path(),
    );
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.contains("summary.csv")).unwrap();
    let slope: f64 = line
        .split("idler slope ")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope.abs() - 27.4).abs() / 27.4 < 0.15, "{line}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = recipe("fig8_xe");
    let a = run_ok("schmidt", &cfg, tmp.path(), "t1", &["--threads", "1"]);
    let b = run_ok("schmidt", &cfg, tmp.path(), "t4", &["--threads", "4"]);
    for f in ["schmidt_flat.json", "schmidt_complex.json", "signal_modes.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
