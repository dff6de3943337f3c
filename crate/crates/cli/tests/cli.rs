use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wavehom-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn wavehom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavehom")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = wavehom(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sha256(path: &Path) -> String {
    use sha2::Digest;
    format!("{:x}", sha2::Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn identity_tensors() {
    let dir = scratch("tensors");
    let cfg = write_config(&dir, "order = 3\n[medium]\nkind = \"identity\"\n[cell]\npoints = 8\n");
    let out = dir.join("out");
    run_ok(&["tensors", "--config", &cfg, "--d", "2", "--out", out.to_str().unwrap()]);
    for row in csv_rows(&out.join("tensors.csv")) {
        let (m, index, value): (usize, &str, f64) = (row[0].parse().unwrap(), &row[1], row[2].parse().unwrap());
        let expected = match (m, index) {
            (1, "11") | (1, "22") => 1.0,
            _ => 0.0,
        };
        assert!((value - expected).abs() < 1e-12, "m={m} index={index} value={value}");
    }
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn repeated_runs_are_identical_and_manifest_is_complete() {
    let dir = scratch("determinism");
    let cfg = write_config(
        &dir,
        "seed = 11\norder = 2\nkappas = [0.1, 0.2]\n[medium]\nkind = \"random\"\nrange = 2.0\ncontrast = 4.0\n[cell]\npoints = 64\nextent = 16.0\n",
    );
    let a = dir.join("a");
    let b = dir.join("b");
    run_ok(&["correctors", "--config", &cfg, "--out", a.to_str().unwrap()]);
    run_ok(&["correctors", "--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "2"]);
    for name in ["growth.csv", "certificates.csv"] {
        assert_eq!(sha256(&a.join(name)), sha256(&b.join(name)), "{name}");
    }
    let m = manifest(&a);
    assert_eq!(m["schema"], "wavehom-manifest/1");
    let files = m["files"].as_array().unwrap();
    for f in files {
        let path = a.join(f["path"].as_str().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap(), sha256(&path));
    }
    let listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(name == "manifest.json" || listed.contains(&name.as_str()), "{name} missing from manifest");
    }
    assert!(m["derived"]["kappa_max_k0"].as_f64().unwrap() > 0.0);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn unknown_keys_give_an_error_record() {
    let dir = scratch("unknown");
    let cfg = write_config(&dir, "ordr = 3\n");
    let out = wavehom(&["tensors", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let record: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(record["error"]["chain"].to_string().contains("ordr"));
    let bad = wavehom(&["tensors", "--theta", "0.7"]);
    assert_eq!(bad.status.code(), Some(2));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn two_dimensional_green_decay() {
    let dir = scratch("green");
    let cfg = write_config(
        &dir,
        "kappas = [0.1]\n[medium]\nkind = \"cosine_series\"\nmean = 2.0\nterms = [[0.5, [1, 0]], [0.3, [0, 1]], [0.2, [1, 1]]]\n[cell]\npoints = 16\n",
    );
    let out = dir.join("out");
    run_ok(&["green-decay", "--config", &cfg, "--d", "2", "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("green_decay.csv"));
    let global = rows.iter().find(|r| r[3] == "global").unwrap();
    let exponent: f64 = global[4].parse().unwrap();
    assert!((exponent + 0.5).abs() < 0.1, "{exponent}");
    assert!(out.join("green_series.svg").exists());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn first_order_secular_exponent() {
    let dir = scratch("twoscale");
    let out = dir.join("out");
    run_ok(&["two-scale", "--order", "1", "--kappa", "0.1,0.2,0.4", "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("exponents.csv"));
    let exponent: f64 = rows[0][1].parse().unwrap();
    assert!((exponent - 2.0).abs() < 0.4, "{exponent}");
    let budget = csv_rows(&out.join("two_scale.csv"));
    assert!(budget.iter().all(|r| r[10].parse::<f64>().unwrap() < 100.0));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn spreading_and_dispersion_tables() {
    let dir = scratch("spreading");
    let cfg = write_config(
        &dir,
        "thetas = [0.1, 0.2]\nkappas = [0.25, 0.5]\n[medium]\nkind = \"random\"\nrange = 2.0\ncontrast = 10.0\n\
         [spreading]\nextent = 64.0\npoints = 256\ncount = 3\ntarget = 1.0\nperiods = 1\n\
         [dispersion]\nextent = 128.0\npoints = 512\nradii = [2.0, 8.0]\ntimes = [0.0, 10.0, 20.0]\n",
    );
    let out = dir.join("out");
    run_ok(&["spreading", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(csv_rows(&out.join("eigenpairs.csv")).len(), 3);
    let widths = csv_rows(&out.join("spreading.csv"));
    assert_eq!(widths.len(), 6);
    assert!(widths.iter().all(|r| r[0] == "random"));
    assert!(out.join("eigen_psi0.bin").exists());
    let out = dir.join("dispersion");
    run_ok(&["dispersion", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(csv_rows(&out.join("dispersion.csv")).len(), 12);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn two_scale_rejects_random_media() {
    let dir = scratch("reject");
    let cfg = write_config(&dir, "[medium]\nkind = \"random\"\nrange = 2.0\ncontrast = 4.0\n[cell]\npoints = 64\nextent = 16.0\n");
    let out = dir.join("out");
    let r = wavehom(&["two-scale", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(out.join("error.json").exists());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        wavehom_cli::config::ExperimentConfig::load(Some(&path), &Default::default())
            .unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}
