//! File formats: grids, atoms, atomic functionals, oscillation curves, and
//! distance reports.
//!
//! A grid file is a JSON header `{d, n, dtype: "f64", layout: "row-major"}`
//! carrying the values either inline (`values_csv`, comma-separated, written
//! with the shortest round-trip float representation) or in a sidecar file
//! (`binary`, little-endian f64 array, path relative to the header). Both
//! routes round-trip bit-exactly. Every writer goes through a temp file and
//! an atomic rename, so failures never leave partial artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atoms::{Atom, AtomicFunctional};
use crate::error::{Error, Result};
use crate::grid::{Cube, GridFunction};
use crate::oscillation::{CubeFamily, OscillationCurve};
use crate::distance::DistanceReport;

/// Writes bytes to `path` via a temp file in the same directory and an
/// atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = PathBuf::from(path);
    let mut name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("invalid output path {}", path.display())))?
        .to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    d: usize,
    n: usize,
    dtype: String,
    layout: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    values_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

/// Shortest round-trip representation; parses back to the identical bits.
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes a grid file. With `binary_sidecar`, values go to `<path>.bin`
/// (little-endian f64) and the header references it by file name; otherwise
/// values are inlined as CSV.
pub fn write_grid(
    path: &Path,
    f: &GridFunction<f64>,
    binary_sidecar: bool,
    config: Option<&serde_json::Value>,
) -> Result<()> {
    let mut header = GridHeader {
        d: f.d(),
        n: f.n(),
        dtype: "f64".into(),
        layout: "row-major".into(),
        values_csv: None,
        binary: None,
        config: config.cloned(),
    };
    if binary_sidecar {
        let mut bin_path = PathBuf::from(path);
        let mut name = path
            .file_name()
            .ok_or_else(|| Error::Argument(format!("invalid output path {}", path.display())))?
            .to_os_string();
        name.push(".bin");
        bin_path.set_file_name(&name);
        let mut bytes = Vec::with_capacity(8 * f.len());
        for &v in f.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(&bin_path, &bytes)?;
        header.binary = Some(bin_path.file_name().unwrap().to_string_lossy().into_owned());
    } else {
        let csv: Vec<String> = f.values().iter().map(|&v| fmt_f64(v)).collect();
        header.values_csv = Some(csv.join(","));
    }
    atomic_write(path, serde_json::to_string_pretty(&header)?.as_bytes())
}

/// Reads a grid file written by [`write_grid`] (either payload route).
pub fn read_grid(path: &Path) -> Result<GridFunction<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let header: GridHeader = serde_json::from_str(&text)?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype '{}'", header.dtype)));
    }
    if header.layout != "row-major" {
        return Err(Error::Format(format!("unsupported layout '{}'", header.layout)));
    }
    let expected = header.n.pow(header.d as u32);
    let values: Vec<f64> = match (&header.values_csv, &header.binary) {
        (Some(csv), None) => csv
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad value '{tok}': {e}")))
            })
            .collect::<Result<_>>()?,
        (None, Some(rel)) => {
            let bin_path = path.parent().unwrap_or_else(|| Path::new(".")).join(rel);
            let bytes = std::fs::read(&bin_path)
                .map_err(|e| Error::Format(format!("cannot read sidecar {}: {e}", bin_path.display())))?;
            if bytes.len() != 8 * expected {
                return Err(Error::Format(format!(
                    "sidecar has {} bytes, expected {}",
                    bytes.len(),
                    8 * expected
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        _ => {
            return Err(Error::Format(
                "grid header must carry exactly one of values_csv or binary".into(),
            ))
        }
    };
    GridFunction::new(header.d, header.n, values)
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomHeader {
    epsilon: f64,
    cubes: Vec<Vec<f64>>,
    grid_ref: String,
}

/// Writes an atom: a JSON header `{epsilon, cubes, grid_ref}` plus the atom
/// values as a grid file next to it.
pub fn write_atom(path: &Path, atom: &Atom<f64>) -> Result<()> {
    let mut grid_path = PathBuf::from(path);
    let mut name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("invalid output path {}", path.display())))?
        .to_os_string();
    name.push(".grid.json");
    grid_path.set_file_name(&name);
    write_grid(&grid_path, atom.values(), false, None)?;
    let header = AtomHeader {
        epsilon: atom.epsilon(),
        cubes: atom
            .family()
            .cubes()
            .iter()
            .map(|c| c.anchor().to_vec())
            .collect(),
        grid_ref: grid_path.file_name().unwrap().to_string_lossy().into_owned(),
    };
    atomic_write(path, serde_json::to_string_pretty(&header)?.as_bytes())
}

/// Reads an atom written by [`write_atom`]; `grid_ref` resolves relative to
/// the atom file.
pub fn read_atom(path: &Path) -> Result<Atom<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let header: AtomHeader = serde_json::from_str(&text)?;
    let grid_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.grid_ref);
    let values = read_grid(&grid_path)?;
    let cubes: Vec<Cube<f64>> = header
        .cubes
        .iter()
        .map(|a| Cube::new(a.clone(), header.epsilon))
        .collect::<Result<_>>()?;
    let family = CubeFamily::new(header.epsilon, cubes, true)?;
    Atom::new(family, values)
}

#[derive(Debug, Serialize, Deserialize)]
struct FunctionalTerm {
    lambda: f64,
    atom_path: String,
}

/// Writes a functional as a JSON list of `{lambda, atom_path}`, laying the
/// atoms down next to it as `<stem>.atom<i>.json`.
pub fn write_functional(path: &Path, phi: &AtomicFunctional<f64>) -> Result<()> {
    let stem = path
        .file_stem()
        .ok_or_else(|| Error::Argument(format!("invalid output path {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut terms = Vec::new();
    for (i, (lambda, atom)) in phi.terms().iter().enumerate() {
        let atom_name = format!("{stem}.atom{i}.json");
        write_atom(&dir.join(&atom_name), atom)?;
        terms.push(FunctionalTerm {
            lambda: *lambda,
            atom_path: atom_name,
        });
    }
    atomic_write(path, serde_json::to_string_pretty(&terms)?.as_bytes())
}

/// Reads a functional; atom paths resolve relative to the functional file.
pub fn read_functional(path: &Path) -> Result<AtomicFunctional<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let terms: Vec<FunctionalTerm> = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for term in terms {
        let atom = read_atom(&dir.join(&term.atom_path))?;
        out.push((term.lambda, atom));
    }
    Ok(AtomicFunctional::new(out))
}

fn anchors_field(family: &CubeFamily<f64>) -> String {
    family
        .cubes()
        .iter()
        .map(|c| {
            c.anchor()
                .iter()
                .map(|&a| fmt_f64(a))
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Curve CSV: one row per sample, columns
/// `epsilon,value,k,witness_anchor_list` (anchors as `x;y|x;y`, cubes
/// separated by `|`). A `# config: ...` comment line precedes the header
/// when a config is supplied.
pub fn curve_csv(curve: &OscillationCurve<f64>, config: Option<&serde_json::Value>) -> String {
    let mut out = String::new();
    if let Some(cfg) = config {
        out.push_str(&format!("# config: {cfg}\n"));
    }
    out.push_str("epsilon,value,k,witness_anchor_list\n");
    for e in &curve.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(e.epsilon),
            fmt_f64(e.value),
            e.cap,
            anchors_field(&e.witness)
        ));
    }
    out
}

/// JSON witness list for a curve: `[{epsilon, value, k, cubes}]`.
pub fn curve_witness_json(curve: &OscillationCurve<f64>) -> serde_json::Value {
    serde_json::Value::Array(
        curve
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "epsilon": e.epsilon,
                    "value": e.value,
                    "k": e.cap,
                    "cubes": e.witness.cubes().iter().map(|c| c.anchor().to_vec()).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

/// Distance report as JSON (curve included in the curve-witness layout).
pub fn distance_report_json(
    report: &DistanceReport<f64>,
    config: Option<&serde_json::Value>,
) -> serde_json::Value {
    let mut obj = serde_json::json!({
        "tail_lower": report.tail_lower,
        "upper": report.upper,
        "epsilon_cut": report.epsilon_cut,
        "t_grid": report.t_grid,
        "inconsistent": report.inconsistent,
        "tolerance": report.tolerance,
        "curve": curve_witness_json(&report.curve),
    });
    if let Some(cfg) = config {
        obj["config"] = cfg.clone();
    }
    obj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::make_atom;
    use crate::oscillation::{b_norm, SelectMode};
    use crate::synth;
    use proptest::prelude::*;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("bbm_io_test_{tag}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn grid_round_trip_inline_and_binary() {
        let dir = tmpdir("grid");
        let f = synth::random::<f64>(2, 6, 9).unwrap();
        for (name, sidecar) in [("inline.grid.json", false), ("binary.grid.json", true)] {
            let path = dir.join(name);
            write_grid(&path, &f, sidecar, None).unwrap();
            let back = read_grid(&path).unwrap();
            assert_eq!(f, back);
        }
    }

    proptest! {
        #[test]
        fn grid_round_trip_is_bit_exact(
            values in proptest::collection::vec(
                prop_oneof![
                    any::<f64>().prop_filter("finite", |v| v.is_finite()),
                    (-1.0f64..1.0),
                    Just(-0.0f64),
                    Just(1.0e-308f64),
                ],
                9
            ),
            sidecar in any::<bool>()
        ) {
            let dir = tmpdir("prop");
            let f = GridFunction::new(2, 3, values).unwrap();
            let path = dir.join(format!("rt_{sidecar}.grid.json"));
            write_grid(&path, &f, sidecar, None).unwrap();
            let back = read_grid(&path).unwrap();
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn atom_and_functional_round_trip() {
        let dir = tmpdir("atom");
        let mut rng = rand::SeedableRng::seed_from_u64(3);
        let fam = synth::random_lattice_family::<f64>(&mut rng, 2, 8, 2, true, false).unwrap();
        let atom = make_atom(fam, &synth::random::<f64>(2, 8, 17).unwrap()).unwrap();
        let path = dir.join("a0.json");
        write_atom(&path, &atom).unwrap();
        let back = read_atom(&path).unwrap();
        assert_eq!(atom.values(), back.values());
        assert_eq!(atom.family().cubes().len(), back.family().cubes().len());

        let phi = crate::atoms::AtomicFunctional::new(vec![(0.5, atom.clone()), (-1.25, atom)]);
        let fpath = dir.join("phi.json");
        write_functional(&fpath, &phi).unwrap();
        let back = read_functional(&fpath).unwrap();
        assert_eq!(back.terms().len(), 2);
        assert_eq!(back.terms()[0].0, 0.5);
        assert_eq!(back.terms()[1].0, -1.25);
        let f = synth::random::<f64>(2, 8, 23).unwrap();
        let v1 = crate::atoms::functional_value(&f, &phi).unwrap();
        let v2 = crate::atoms::functional_value(&f, &back).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn curve_csv_layout() {
        let f = synth::step::<f64>(1, 4).unwrap();
        let (_, curve) = b_norm(&f, SelectMode::Exact, 2).unwrap();
        let csv = curve_csv(&curve, Some(&serde_json::json!({"s": 2})));
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# config:"));
        assert_eq!(lines.next().unwrap(), "epsilon,value,k,witness_anchor_list");
        let first = lines.next().unwrap();
        assert!(first.starts_with("1,"), "{first}");
        assert_eq!(csv.lines().count(), 2 + curve.entries.len());
    }

    #[test]
    fn no_partial_artifacts_on_failed_write() {
        let dir = tmpdir("atomic");
        let path = dir.join("missing_dir_is_fine/out.json");
        atomic_write(&path, b"x").unwrap();
        assert!(path.exists());
        assert!(!dir.join("missing_dir_is_fine/out.json.tmp").exists());
    }
}
