//! Flat-file persistence.
//!
//! * model files: matrix-market coordinate blocks for `A`, `B`, `C`, `E`
//!   behind a `%`-comment metadata header;
//! * CSV tables for sweeps, spectra, control reports and trajectories;
//! * diagnostics text for the co-energy check and the element matrices;
//! * run summaries as JSON.
//!
//! Every file goes through [`write_atomic`]. Floats in model files are
//! written with 17 significant digits; CSVs use the shortest representation
//! that round-trips, so both reload bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{ControlReport, SpectrumReport, SweepRow};
use crate::error::{Error, Result};
use crate::fem::ElementMatrices;
use crate::mfem::QMatrixReport;
use crate::model::{OutputMap, Scheme, StateSpaceModel, Variant};
use crate::params::CompositeParams;
use crate::simulation::Trajectory;

pub const MODEL_HEADER: &str = "%%piezolab model v1";
const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

// ---------------------------------------------------------------- model files

fn write_block(s: &mut String, name: &str, m: &DMatrix<f64>) {
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    let _ = writeln!(s, "{MM_HEADER}");
    let _ = writeln!(s, "% block {name}");
    let _ = writeln!(s, "{} {} {nnz}", m.nrows(), m.ncols());
    // column-major, as matrix-market tools expect
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(s, "{} {} {v:.16e}", i + 1, j + 1);
            }
        }
    }
}

/// Text form of a model: metadata header, then `A`, `B`, `C`, `E`.
pub fn model_to_text(model: &StateSpaceModel) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_HEADER}");
    let _ = writeln!(s, "% scheme: {}", model.scheme);
    let _ = writeln!(s, "% N: {}", model.n_elements);
    let _ = writeln!(s, "% variant: {}", model.variant);
    let _ = writeln!(s, "% output: {}", model.output);
    let _ = writeln!(s, "% gain: {:.16e}", model.gain);
    let _ = writeln!(s, "% ordering: {}", model.ordering.describe());
    let _ = writeln!(s, "% param_hash: {}", model.provenance());
    let params = serde_json::to_string(&model.params).map_err(|e| Error::Parse(e.to_string()))?;
    let _ = writeln!(s, "% params: {params}");
    write_block(&mut s, "A", &model.a);
    write_block(&mut s, "B", &DMatrix::from_column_slice(model.dim(), 1, model.b.as_slice()));
    write_block(&mut s, "C", &DMatrix::from_row_slice(1, model.dim(), model.c.transpose().as_slice()));
    write_block(&mut s, "E", &model.e);
    Ok(s)
}

fn parse_err(m: impl Into<String>) -> Error {
    Error::Parse(format!("model file: {}", m.into()))
}

/// Parses a model file and checks the recorded parameter hash.
pub fn model_from_text(text: &str) -> Result<StateSpaceModel> {
    let mut lines = text.lines().peekable();
    if lines.next().map(str::trim) != Some(MODEL_HEADER) {
        return Err(parse_err("missing header"));
    }
    let mut meta = std::collections::BTreeMap::new();
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix("% ") else { break };
        if let Some((k, v)) = rest.split_once(": ") {
            meta.insert(k.to_string(), v.to_string());
        }
        lines.next();
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| parse_err(format!("missing `{k}`")));
    let scheme: Scheme = get("scheme")?.parse()?;
    let n: usize = get("N")?.parse().map_err(|_| parse_err("bad N"))?;
    let variant: Variant = get("variant")?.parse()?;
    let output: OutputMap = get("output")?.parse()?;
    let gain: f64 = get("gain")?.parse().map_err(|_| parse_err("bad gain"))?;
    let hash = get("param_hash")?.clone();
    let params: CompositeParams = serde_json::from_str(get("params")?).map_err(|e| parse_err(e.to_string()))?;

    let mut blocks = std::collections::BTreeMap::new();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        if line.trim() != MM_HEADER {
            return Err(parse_err(format!("expected block header, got `{line}`")));
        }
        let name = lines
            .next()
            .and_then(|l| l.strip_prefix("% block "))
            .ok_or_else(|| parse_err("missing block name"))?
            .trim()
            .to_string();
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| parse_err("missing size line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err("bad size line")))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = dims[..] else { return Err(parse_err("bad size line")) };
        let mut m = DMatrix::zeros(rows, cols);
        for _ in 0..nnz {
            let l = lines.next().ok_or_else(|| parse_err(format!("block {name} truncated")))?;
            let mut it = l.split_whitespace();
            let mut idx = || -> Result<usize> {
                it.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| parse_err(format!("bad entry `{l}`")))
            };
            let (i, j) = (idx()?, idx()?);
            let v: f64 = l
                .split_whitespace()
                .nth(2)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(format!("bad entry `{l}`")))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(parse_err(format!("entry ({i}, {j}) outside {rows}×{cols}")));
            }
            m[(i - 1, j - 1)] = v;
        }
        blocks.insert(name, m);
    }
    let mut take = |k: &str| blocks.remove(k).ok_or_else(|| parse_err(format!("missing block {k}")));
    let (a, b, c, e) = (take("A")?, take("B")?, take("C")?, take("E")?);
    let mut model = StateSpaceModel::new(a, DVector::from_column_slice(b.as_slice()), e, scheme, variant, n, output, params)?;
    if c.ncols() != model.dim() {
        return Err(parse_err("C has the wrong length"));
    }
    model.c = RowDVector::from_row_slice(c.as_slice());
    model.gain = gain;
    if model.provenance() != hash {
        return Err(Error::Provenance { snapshot: hash, model: model.provenance() });
    }
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<StateSpaceModel> {
    model_from_text(&fs::read_to_string(path)?)
}

// ------------------------------------------------------------------- CSVs

fn csv_text<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub const SWEEP_HEADER: [&str; 5] = ["scheme", "N", "variant", "k", "im_lambda"];
pub const SPECTRUM_HEADER: [&str; 4] = ["idx", "re", "im", "residual"];
pub const CONTROL_HEADER: [&str; 7] = ["scheme", "N", "n", "kalman_rank", "brockett_rank", "tol", "sv_gap"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "v_tip", "w_tip", "energy", "y"];

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_text(&SWEEP_HEADER, |w| {
        for r in rows {
            w.write_record([
                r.scheme.to_string(),
                r.n.to_string(),
                r.variant.to_string(),
                r.k.to_string(),
                r.im_lambda.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("sweep CSV: {e}"));
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(bad(&format!("unexpected header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SweepRow {
                scheme: rec[0].parse()?,
                n: rec[1].parse().map_err(|e| bad(&e))?,
                variant: rec[2].parse()?,
                k: rec[3].parse().map_err(|e| bad(&e))?,
                im_lambda: rec[4].parse().map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

pub fn spectrum_csv(rep: &SpectrumReport) -> Result<String> {
    csv_text(&SPECTRUM_HEADER, |w| {
        for (i, (re, im)) in rep.eigenvalues.iter().enumerate() {
            let res = rep.residuals.get(i).copied().unwrap_or(f64::NAN);
            w.write_record([i.to_string(), re.to_string(), im.to_string(), res.to_string()])?;
        }
        Ok(())
    })
}

pub fn control_csv(reports: &[ControlReport]) -> Result<String> {
    csv_text(&CONTROL_HEADER, |w| {
        for r in reports {
            w.write_record([
                r.scheme.to_string(),
                r.n_elements.to_string(),
                r.n.to_string(),
                r.kalman_rank.to_string(),
                r.brockett_rank.to_string(),
                r.tol.to_string(),
                r.sv_gap.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    csv_text(&TRAJECTORY_HEADER, |w| {
        for i in 0..traj.times.len() {
            w.write_record([
                traj.times[i].to_string(),
                traj.v_tip[i].to_string(),
                traj.w_tip[i].to_string(),
                traj.energy[i].to_string(),
                traj.outputs[i].to_string(),
            ])?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------ diagnostics

fn write_dense(s: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(s, "{name} ({}×{})", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:>24.16e}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s);
}

/// Dense dump of the one-field matrices; `h·M1`, `K1` and `h·K2` are also
/// printed scaled so the integer band patterns are visible.
pub fn element_matrices_text(em: &ElementMatrices) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# element matrices, variant {}, N = {}, h = {:.16e}", em.variant, em.m1.nrows(), em.h);
    write_dense(&mut s, "M1", &em.m1);
    write_dense(&mut s, "(6/h) M1", &(&em.m1 * (6.0 / em.h)));
    write_dense(&mut s, "K1", &em.k1);
    write_dense(&mut s, "2 K1", &(&em.k1 * 2.0));
    write_dense(&mut s, "K2", &em.k2);
    write_dense(&mut s, "h K2", &(&em.k2 * em.h));
    write_dense(&mut s, "B1", &DMatrix::from_column_slice(em.b1.len(), 1, em.b1.as_slice()));
    s
}

pub fn q_report_text(rep: &QMatrixReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# co-energy matrix Q (derived from the Legendre map)");
    for row in &rep.derived {
        let r: Vec<String> = row.iter().map(|v| format!("{v:>24.16e}")).collect();
        let _ = writeln!(s, "{}", r.join(" "));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "positive_definite: {}", rep.positive_definite);
    let ev: Vec<String> = rep.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
    let _ = writeln!(s, "eigenvalues: {}", ev.join(" "));
    let _ = writeln!(s, "unambiguous_entries_match: {}", rep.unambiguous_all_match());
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>24} {:>24} {:>12} {:>8} {:>12}", "entry", "printed", "derived", "rel_diff", "match", "unambiguous");
    for c in &rep.checks {
        let _ = writeln!(
            s,
            "{:<10} {:>24.16e} {:>24.16e} {:>12.3e} {:>8} {:>12}",
            c.entry, c.printed, c.derived, c.relative_difference, c.matches, c.unambiguous
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mismatches:");
    for c in rep.mismatches() {
        let kind = if c.unambiguous { "ERROR" } else { "inconsistent printed form" };
        let _ = writeln!(s, "  {}: printed {:.6e}, derived {:.6e} ({kind})", c.entry, c.printed, c.derived);
    }
    s
}

// ---------------------------------------------------------------- summary

/// JSON has no `inf`/`nan`; those are written as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

mod lenient_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct V(#[serde(with = "super::lenient_f64")] f64);

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|(k, v)| (k, V(*v))).collect::<BTreeMap<_, _>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        Ok(BTreeMap::<String, V>::deserialize(d)?.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

/// One named pass/fail check with the measured value and its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    #[serde(with = "lenient_f64")]
    pub value: f64,
    #[serde(with = "lenient_f64")]
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), pass: value <= threshold, value, threshold }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), pass: value >= threshold, value, threshold }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), pass, value: pass as u8 as f64, threshold: 1.0 }
    }
}

/// Machine-readable record of one CLI run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Reported quantities that are not pass/fail.
    #[serde(with = "lenient_map")]
    pub info: std::collections::BTreeMap<String, f64>,
    pub messages: Vec<String>,
    pub outputs: Vec<String>,
    pub all_pass: bool,
}

impl RunSummary {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { command: command.into(), version: env!("CARGO_PKG_VERSION").into(), seed, all_pass: true, ..Default::default() }
    }

    pub fn check(&mut self, c: Check) {
        self.all_pass &= c.pass;
        self.checks.push(c);
    }

    pub fn info(&mut self, key: impl Into<String>, value: f64) {
        self.info.insert(key.into(), value);
    }

    pub fn message(&mut self, m: impl Into<String>) {
        self.messages.push(m.into());
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("summary: {e}")))
    }
}

/// Output directory that remembers what was written into it.
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, written: vec![] })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        write_atomic(&p, contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(p)
    }

    /// Writes `name` (a CSV) and every figure rendered from it.
    pub fn write_csv_with_plots(&mut self, name: &str, title: &str, csv: &str) -> Result<()> {
        self.write(name, csv)?;
        let stem = name.trim_end_matches(".csv");
        for (suffix, svg) in crate::plot::from_csv(title, csv)? {
            self.write(&format!("{stem}{suffix}.svg"), &svg)?;
        }
        Ok(())
    }
}
