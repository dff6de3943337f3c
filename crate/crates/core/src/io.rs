//! Flat binary arrays with JSON sidecars, and float formatting for reports.

use crate::correctors::CorrectorSet;
use crate::error::{Error, Result};
use crate::hetwave::{Eigenpair, WaveState};
use crate::media::CoefficientField;
use crate::tensor::multisets;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

/// Version tag written into every sidecar.
pub const SIDECAR_SCHEMA: &str = "wavehom-array/1";

/// Description of one flat array file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    /// Always `"f64-le"`.
    pub dtype: String,
    pub len: usize,
    pub meta: Value,
}

/// Float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Write `data` to `<stem>.bin` and its description to `<stem>.json`. Returns both paths.
pub fn write_array(stem: &Path, data: &[f64], meta: Value) -> Result<(PathBuf, PathBuf)> {
    let bin = with_extension(stem, "bin");
    let side = with_extension(stem, "json");
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| io_error(&bin, e))?;
    let sidecar = Sidecar { schema: SIDECAR_SCHEMA.into(), dtype: "f64-le".into(), len: data.len(), meta };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| io_error(&side, e))?;
    fs::write(&side, text).map_err(|e| io_error(&side, e))?;
    Ok((bin, side))
}

/// Read an array written by [`write_array`], checking its length against the sidecar.
pub fn read_array(stem: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let bin = with_extension(stem, "bin");
    let side = with_extension(stem, "json");
    let text = fs::read_to_string(&side).map_err(|e| io_error(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| io_error(&side, e))?;
    if sidecar.schema != SIDECAR_SCHEMA || sidecar.dtype != "f64-le" {
        return Err(io_error(&side, format!("unsupported schema {} / {}", sidecar.schema, sidecar.dtype)));
    }
    let bytes = fs::read(&bin).map_err(|e| io_error(&bin, e))?;
    if bytes.len() != 8 * sidecar.len {
        return Err(io_error(&bin, format!("expected {} values, found {} bytes", sidecar.len, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((data, sidecar))
}

/// Export a coefficient field: one array per packed component.
pub fn export_field(dir: &Path, name: &str, field: &CoefficientField) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (k, comp) in field.values.iter().enumerate() {
        let meta = json!({ "grid": field.grid, "kind": field.kind, "component": k, "floor": field.floor, "ceiling": field.ceiling });
        let (b, s) = write_array(&dir.join(format!("{name}_a{k}")), comp, meta)?;
        files.extend([b, s]);
    }
    Ok(files)
}

/// Export every corrector `φⁿ_K` plus a manifest with tensors, residuals and growth constants.
pub fn export_correctors(dir: &Path, name: &str, set: &CorrectorSet) -> Result<Vec<PathBuf>> {
    let d = set.d();
    let mut files = Vec::new();
    let mut orders = Vec::new();
    for n in 1..=set.order {
        let o = &set.orders[n];
        for (k, idx) in multisets(d, n).iter().enumerate() {
            let meta = json!({ "grid": set.grid, "order": n, "index": idx });
            let label: String = idx.iter().map(|i| i.to_string()).collect();
            let (b, s) = write_array(&dir.join(format!("{name}_phi{n}_{label}")), &o.phi[k], meta)?;
            files.extend([b, s]);
        }
        orders.push(json!({
            "order": n,
            "tensor": o.tensor,
            "tensor_norm": o.tensor.norm(),
            "residual": o.residual,
            "flux_residual": o.flux_residual,
            "iterations": o.iterations,
        }));
    }
    let manifest = json!({
        "schema": SIDECAR_SCHEMA,
        "grid": set.grid,
        "order": set.order,
        "floor": set.floor,
        "ceiling": set.ceiling,
        "growth": set.growth,
        "orders": orders,
    });
    let path = dir.join(format!("{name}_correctors.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(|e| io_error(&path, e))?).map_err(|e| io_error(&path, e))?;
    files.push(path);
    Ok(files)
}

/// Export displacement and velocity of a wave state.
pub fn export_state(dir: &Path, name: &str, state: &WaveState) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (label, data) in [("u", &state.u), ("v", &state.v)] {
        let meta = json!({ "grid": state.grid, "t": state.t, "field": label });
        let (b, s) = write_array(&dir.join(format!("{name}_{label}")), data, meta)?;
        files.extend([b, s]);
    }
    Ok(files)
}

/// Export eigenstates as binary arrays; the scalar data go to the sidecars.
pub fn export_eigenpairs(dir: &Path, name: &str, grid: crate::grid::Grid, pairs: &[Eigenpair]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        let meta = json!({
            "grid": grid,
            "lambda": p.lambda,
            "residual": p.residual,
            "participation": p.participation,
            "boundary": p.boundary,
        });
        let (b, s) = write_array(&dir.join(format!("{name}_psi{k}")), &p.psi, meta)?;
        files.extend([b, s]);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::media::{sample_periodic, PeriodicProfile};

    fn scratch_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("wavehom-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn array_round_trip() {
        let dir = scratch_dir("array");
        let data = vec![1.0, -0.5, std::f64::consts::PI];
        write_array(&dir.join("x"), &data, json!({ "note": 1 })).unwrap();
        let (back, side) = read_array(&dir.join("x")).unwrap();
        assert_eq!(back, data);
        assert_eq!(side.len, 3);
        fs::write(dir.join("x.bin"), [0u8; 16]).unwrap();
        assert!(read_array(&dir.join("x")).is_err());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn field_export_lists_components() {
        let dir = scratch_dir("field");
        let g = build_grid(2, 1.0, 8).unwrap();
        let f = sample_periodic(&PeriodicProfile::Constant { a11: 2.0, a12: 0.1, a22: 1.0 }, 1.0, &g).unwrap();
        let files = export_field(&dir, "m", &f).unwrap();
        assert_eq!(files.len(), 6);
        let (a12, _) = read_array(&dir.join("m_a1")).unwrap();
        assert!(a12.iter().all(|&v| v == 0.1));
        fs::remove_dir_all(dir).unwrap();
    }
}
