//! CSV and JSON files: plates, truth grids, posterior samples and surfaces.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! emitted file re-ingests to identical values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use synergy_core::model::ParameterState;
use synergy_core::nalgebra::DMatrix;
use synergy_core::{Error, PlateDataset, PosteriorChain, SimulatedPlate, SurfaceGrid, SurfaceKind};

pub const PLATE_HEADER: [&str; 4] = ["drug1_conc", "drug2_conc", "replicate", "viability"];
pub const TRUTH_HEADER: [&str; 5] = ["drug1_conc", "drug2_conc", "p0", "delta", "p"];

fn invalid(msg: String) -> anyhow::Error {
    Error::InvalidDataset(msg).into()
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

fn check_header(rdr: &mut csv::Reader<fs::File>, want: &[&str], path: &Path) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.trim_start_matches('\u{feff}').to_string()).collect();
    if got != want {
        return Err(invalid(format!(
            "{}: header must be `{}`, got `{}`",
            path.display(),
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, name: &str, line: u64, path: &Path) -> Result<T> {
    let raw = rec.get(k).unwrap_or("");
    raw.parse().map_err(|_| invalid(format!("{} line {line}: {name} {raw:?} is not a number", path.display())))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Reads a plate in long format. The grid is rebuilt from the distinct
/// concentrations; every cell must carry replicates `1..=n_rep` exactly once.
pub fn read_plate(path: &Path) -> Result<PlateDataset> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &PLATE_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = line_of(&rec);
        let c1: f64 = field(&rec, 0, "drug1_conc", line, path)?;
        let c2: f64 = field(&rec, 1, "drug2_conc", line, path)?;
        let r: usize = field(&rec, 2, "replicate", line, path)?;
        let y: f64 = field(&rec, 3, "viability", line, path)?;
        if !(c1.is_finite() && c2.is_finite() && c1 >= 0.0 && c2 >= 0.0) {
            return Err(invalid(format!("{} line {line}: concentrations must be finite and nonnegative", path.display())));
        }
        if r == 0 {
            return Err(invalid(format!("{} line {line}: replicates are numbered from 1", path.display())));
        }
        if !y.is_finite() {
            return Err(invalid(format!("{} line {line}: viability must be finite", path.display())));
        }
        rows.push((c1, c2, r, y, line));
    }
    if rows.is_empty() {
        return Err(invalid(format!("{}: no data rows", path.display())));
    }
    let conc1 = distinct_sorted(rows.iter().map(|r| r.0));
    let conc2 = distinct_sorted(rows.iter().map(|r| r.1));
    let n_rep = rows.iter().map(|r| r.2).max().unwrap_or(0);
    let index = |axis: &[f64], c: f64| axis.binary_search_by(|v| v.total_cmp(&c)).expect("value came from this axis");
    let mut cells: BTreeMap<(usize, usize, usize), (f64, u64)> = BTreeMap::new();
    for &(c1, c2, r, y, line) in &rows {
        let key = (index(&conc1, c1), index(&conc2, c2), r - 1);
        if let Some((_, first)) = cells.insert(key, (y, line)) {
            return Err(invalid(format!(
                "{}: duplicate reading for drug1_conc = {c1}, drug2_conc = {c2}, replicate {r} (lines {first} and {line})",
                path.display()
            )));
        }
    }
    let mut values = Vec::with_capacity(conc1.len() * conc2.len() * n_rep);
    for (i, &c1) in conc1.iter().enumerate() {
        for (j, &c2) in conc2.iter().enumerate() {
            for r in 0..n_rep {
                let (y, _) = cells.get(&(i, j, r)).ok_or_else(|| {
                    invalid(format!(
                        "{}: missing reading for cell ({i}, {j}) (drug1_conc = {c1}, drug2_conc = {c2}), replicate {}",
                        path.display(),
                        r + 1
                    ))
                })?;
                values.push(*y);
            }
        }
    }
    Ok(PlateDataset::new(conc1, conc2, n_rep, values, ["drug1".into(), "drug2".into()])?)
}

pub fn write_plate(path: &Path, data: &PlateDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(PLATE_HEADER)?;
    for (i, c1) in data.conc1.iter().enumerate() {
        for (j, c2) in data.conc2.iter().enumerate() {
            for (r, y) in data.cell(i, j).iter().enumerate() {
                w.write_record([c1.to_string(), c2.to_string(), (r + 1).to_string(), y.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Truth grid in long format, one row per cell.
pub fn write_truth(path: &Path, plate: &SimulatedPlate) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRUTH_HEADER)?;
    let d = &plate.data;
    for (i, c1) in d.conc1.iter().enumerate() {
        for (j, c2) in d.conc2.iter().enumerate() {
            w.write_record([
                c1.to_string(),
                c2.to_string(),
                plate.p0.get(i, j).to_string(),
                plate.delta.get(i, j).to_string(),
                plate.p.get(i, j).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Truth surfaces `(Δ, p)` aligned with `data`'s grid.
pub fn read_truth(path: &Path, data: &PlateDataset) -> Result<(SurfaceGrid, SurfaceGrid)> {
    let grid = data.log_grid()?;
    let (n1, n2) = grid.shape();
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &TRUTH_HEADER, path)?;
    let mut delta = vec![None; n1 * n2];
    let mut p = vec![0.0; n1 * n2];
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let c1: f64 = field(&rec, 0, "drug1_conc", line, path)?;
        let c2: f64 = field(&rec, 1, "drug2_conc", line, path)?;
        let i = data.conc1.iter().position(|&c| c == c1);
        let j = data.conc2.iter().position(|&c| c == c2);
        let (Some(i), Some(j)) = (i, j) else {
            return Err(invalid(format!("{} line {line}: ({c1}, {c2}) is not on the plate grid", path.display())));
        };
        delta[i * n2 + j] = Some(field::<f64>(&rec, 3, "delta", line, path)?);
        p[i * n2 + j] = field(&rec, 4, "p", line, path)?;
    }
    if let Some(k) = delta.iter().position(Option::is_none) {
        return Err(invalid(format!("{}: no truth for cell ({}, {})", path.display(), k / n2, k % n2)));
    }
    let mk = |v: Vec<f64>, kind| SurfaceGrid {
        values: DMatrix::from_row_slice(n1, n2, &v),
        axis1: grid.logc1.clone(),
        axis2: grid.logc2.clone(),
        kind,
    };
    Ok((mk(delta.into_iter().flatten().collect(), SurfaceKind::Truth), mk(p, SurfaceKind::Truth)))
}

/// Wide grid: the header row holds the log10 axis of drug 2, the first
/// column the log10 axis of drug 1.
pub fn write_surface(path: &Path, s: &SurfaceGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut head = vec!["log10_conc1\\log10_conc2".to_string()];
    head.extend(s.axis2.iter().map(f64::to_string));
    w.write_record(&head)?;
    for (i, x1) in s.axis1.iter().enumerate() {
        let mut row = vec![x1.to_string()];
        row.extend((0..s.axis2.len()).map(|j| s.get(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_surface(path: &Path, kind: SurfaceKind) -> Result<SurfaceGrid> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut recs = rdr.records();
    let head = recs.next().ok_or_else(|| invalid(format!("{}: empty surface file", path.display())))??;
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.parse().map_err(|_| invalid(format!("{} line {line}: {s:?} is not a number", path.display())))
    };
    let axis2 = head.iter().skip(1).map(|s| parse(s, 1)).collect::<Result<Vec<_>>>()?;
    let mut axis1 = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in recs.enumerate() {
        let rec = rec?;
        if rec.len() != axis2.len() + 1 {
            bail!(invalid(format!("{} line {}: expected {} fields", path.display(), k + 2, axis2.len() + 1)));
        }
        axis1.push(parse(&rec[0], k + 2)?);
        for s in rec.iter().skip(1) {
            values.push(parse(s, k + 2)?);
        }
    }
    let values = DMatrix::from_row_slice(axis1.len(), axis2.len(), &values);
    Ok(SurfaceGrid::new(values, axis1, axis2, kind)?)
}

const SCALAR_COLUMNS: [&str; 15] = [
    "m1", "m2", "lambda1", "lambda2", "b1", "b2", "gamma0", "gamma1", "gamma2", "sigma2_m1", "sigma2_m2",
    "sigma2_gamma0", "sigma2_gamma1", "sigma2_gamma2", "sigma2_eps",
];

fn scalars(s: &ParameterState) -> [f64; 15] {
    let v = s.sigma2_phi;
    [
        s.m1, s.m2, s.lambda1, s.lambda2, s.b1, s.b2, s.gamma0, s.gamma1, s.gamma2, v[0], v[1], v[2], v[3], v[4],
        s.sigma2_eps,
    ]
}

/// One row per retained sample; spline coefficients as `c_<row>_<col>`,
/// 1-based.
pub fn write_samples(path: &Path, chain: &PosteriorChain) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let (k1, k2) = chain.samples.first().map_or((0, 0), |s| s.c.shape());
    let mut head: Vec<String> = vec!["chain".into(), "draw".into()];
    head.extend(SCALAR_COLUMNS.iter().map(|s| s.to_string()));
    for a in 1..=k1 {
        for b in 1..=k2 {
            head.push(format!("c_{a}_{b}"));
        }
    }
    w.write_record(&head)?;
    let per_chain = chain.len() / chain.chain_indices.len().max(1);
    for (k, s) in chain.samples.iter().enumerate() {
        let stream = chain.chain_indices[k / per_chain.max(1)];
        let mut row = vec![stream.to_string(), (k % per_chain.max(1)).to_string()];
        row.extend(scalars(s).iter().map(f64::to_string));
        for a in 0..k1 {
            for b in 0..k2 {
                row.push(s.c[(a, b)].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<ParameterState>> {
    let mut rdr = reader(path)?;
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if head.len() < 2 + SCALAR_COLUMNS.len() || head[2..2 + SCALAR_COLUMNS.len()] != SCALAR_COLUMNS {
        bail!(invalid(format!("{}: not a samples file", path.display())));
    }
    let coef: Vec<(usize, usize)> = head[2 + SCALAR_COLUMNS.len()..]
        .iter()
        .map(|h| {
            let mut it = h.strip_prefix("c_").unwrap_or("").split('_').map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) if a > 0 && b > 0 => Ok((a - 1, b - 1)),
                _ => Err(invalid(format!("{}: bad coefficient column {h:?}", path.display()))),
            }
        })
        .collect::<Result<_>>()?;
    let k1 = coef.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let k2 = coef.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if k1 * k2 != coef.len() {
        bail!(invalid(format!("{}: coefficient columns do not form a full grid", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let v = (2..rec.len())
            .map(|k| field::<f64>(&rec, k, &head[k], line, path))
            .collect::<Result<Vec<f64>>>()?;
        let mut c = DMatrix::zeros(k1, k2);
        for (&(a, b), &x) in coef.iter().zip(&v[SCALAR_COLUMNS.len()..]) {
            c[(a, b)] = x;
        }
        out.push(ParameterState {
            m1: v[0],
            m2: v[1],
            lambda1: v[2],
            lambda2: v[3],
            b1: v[4],
            b2: v[5],
            gamma0: v[6],
            gamma1: v[7],
            gamma2: v[8],
            sigma2_phi: [v[9], v[10], v[11], v[12], v[13]],
            sigma2_eps: v[14],
            c,
        });
    }
    if out.is_empty() {
        bail!(invalid(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Files written by one command. Unless [`Outputs::keep`] is called, they
/// are removed on drop so a failed run leaves nothing half-written.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), keep: false })
    }

    /// Path of `name` inside the output directory, registered for cleanup.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn keep(mut self) -> Vec<PathBuf> {
        self.keep = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// Error for a JSON payload holding a non-finite number.
pub fn ensure_finite(value: &serde_json::Value, path: &str) -> Result<()> {
    match value {
        serde_json::Value::Null => Err(Error::Numeric(format!("summary field {path} is not finite")).into()),
        serde_json::Value::Array(v) => v.iter().enumerate().try_for_each(|(k, x)| ensure_finite(x, &format!("{path}[{k}]"))),
        serde_json::Value::Object(m) => m.iter().try_for_each(|(k, x)| ensure_finite(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}
