//! Run configuration.
//!
//! A TOML file with sections `[geometry.piezo]`, `[geometry.substrate]`,
//! `[material]` and `[run]`. Every key is optional and falls back to the
//! reference values. Keys are checked against the known set before typed
//! parsing, so an unknown key is reported by its full dotted path.
//!
//! ```toml
//! [geometry.piezo]
//! ell = 1.0
//! g_b = 0.1
//! h_a = 0.0
//! h_b = 0.01
//!
//! [material]
//! C11_p = 1.4e7
//!
//! [run]
//! scheme = ["fem", "mfem"]
//! n = [12, 20]
//! gain = 1e-6
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scheme, Variant};
use crate::params::{composite_params, CompositeParams, LayerGeometry, MaterialParams};

const LAYER_KEYS: [&str; 4] = ["ell", "g_b", "h_a", "h_b"];
const MATERIAL_KEYS: [&str; 9] = ["rho_s", "C11_s", "c11_s", "rho_p", "C11_p", "c11_p", "gamma", "beta", "mu"];
const RUN_KEYS: [&str; 10] = ["scheme", "n", "variant", "gain", "dt", "t_end", "snapshot_t", "out", "seed", "initial"];

/// Partial layer geometry; missing keys come from the reference layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub ell: Option<f64>,
    pub g_b: Option<f64>,
    pub h_a: Option<f64>,
    pub h_b: Option<f64>,
}

impl LayerSection {
    fn resolve(&self, reference: LayerGeometry) -> LayerGeometry {
        LayerGeometry {
            length: self.ell.unwrap_or(reference.length),
            half_width: self.g_b.unwrap_or(reference.half_width),
            lower: self.h_a.unwrap_or(reference.lower),
            upper: self.h_b.unwrap_or(reference.upper),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default)]
    pub piezo: LayerSection,
    #[serde(default)]
    pub substrate: LayerSection,
}

/// How `simulate` chooses its initial state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `x0 = 0`, driven by the default current burst.
    #[default]
    Rest,
    /// Seeded random state of unit energy, no input.
    Random,
}

/// The `[run]` section; every entry may also come from the environment or a flag.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, deserialize_with = "one_or_many")]
    pub scheme: Option<Vec<Scheme>>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub n: Option<Vec<usize>>,
    pub variant: Option<Variant>,
    pub gain: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshot_t: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub initial: Option<InitialState>,
}

/// Accepts `x` as well as `[x, ...]`.
fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Some(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    }))
}

impl RunSection {
    /// Fields set in `other` win.
    pub fn overlay(&mut self, other: &RunSection) {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f.clone(); })*};
        }
        take!(scheme, n, variant, gain, dt, t_end, snapshot_t, out, seed, initial);
    }
}

/// Contents of a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub run: RunSection,
}

fn unknown(key: String) -> Error {
    Error::Config { message: "unknown key".into(), key }
}

/// First key of `table` not in the known schema, as a dotted path.
fn find_unknown_key(table: &toml::Table) -> Option<String> {
    for (k, v) in table {
        match (k.as_str(), v) {
            ("geometry", toml::Value::Table(g)) => {
                for (layer, lv) in g {
                    if layer != "piezo" && layer != "substrate" {
                        return Some(format!("geometry.{layer}"));
                    }
                    if let toml::Value::Table(lt) = lv {
                        if let Some(bad) = lt.keys().find(|k| !LAYER_KEYS.contains(&k.as_str())) {
                            return Some(format!("geometry.{layer}.{bad}"));
                        }
                    }
                }
            }
            ("material", toml::Value::Table(m)) => {
                if let Some(bad) = m.keys().find(|k| !MATERIAL_KEYS.contains(&k.as_str())) {
                    return Some(format!("material.{bad}"));
                }
            }
            ("run", toml::Value::Table(r)) => {
                if let Some(bad) = r.keys().find(|k| !RUN_KEYS.contains(&k.as_str())) {
                    return Some(format!("run.{bad}"));
                }
            }
            ("geometry" | "material" | "run", _) => {}
            (other, _) => return Some(other.to_string()),
        }
    }
    None
}

/// First key whose value alone fails to deserialize, as a dotted path.
fn find_invalid_key(table: &toml::Table) -> Option<String> {
    fn leaves(prefix: &str, t: &toml::Table, out: &mut Vec<(Vec<String>, toml::Value)>) {
        for (k, v) in t {
            let path: Vec<String> = prefix.split('.').filter(|p| !p.is_empty()).map(str::to_string).chain([k.clone()]).collect();
            match v {
                toml::Value::Table(inner) => leaves(&path.join("."), inner, out),
                _ => out.push((path, v.clone())),
            }
        }
    }
    let mut all = Vec::new();
    leaves("", table, &mut all);
    all.into_iter().find_map(|(path, value)| {
        let mut single = value;
        for part in path.iter().rev() {
            let mut t = toml::Table::new();
            t.insert(part.clone(), single);
            single = toml::Value::Table(t);
        }
        single.try_into::<ConfigFile>().is_err().then(|| path.join("."))
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config { key: "<file>".into(), message: e.message().to_string() })?;
        if let Some(key) = find_unknown_key(&table) {
            return Err(unknown(key));
        }
        toml::from_str(text).map_err(|e| Error::Config {
            key: find_invalid_key(&table).unwrap_or_else(|| "<file>".into()),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub piezo: LayerGeometry,
    pub substrate: LayerGeometry,
    pub material: MaterialParams,
    pub schemes: Vec<Scheme>,
    pub n: Vec<usize>,
    pub variant: Variant,
    pub gain: f64,
    /// `None` selects the model-dependent default step.
    pub dt: Option<f64>,
    /// `None` selects the command's default span.
    pub t_end: Option<f64>,
    pub snapshot_t: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub initial: InitialState,
    pub config_path: Option<PathBuf>,
}

/// Per-command defaults for the fields whose natural value depends on the command.
#[derive(Clone, Debug)]
pub struct CommandDefaults {
    pub schemes: Vec<Scheme>,
    pub n: Vec<usize>,
}

pub const DEFAULT_GAIN: f64 = 1e-6;
pub const DEFAULT_SNAPSHOT_T: f64 = 845.0;

impl RunConfig {
    pub fn resolve(file: &ConfigFile, overrides: &RunSection, defaults: &CommandDefaults, config_path: Option<PathBuf>) -> Result<Self> {
        let mut run = file.run.clone();
        run.overlay(overrides);
        let snapshot_t = run.snapshot_t.unwrap_or(DEFAULT_SNAPSHOT_T);
        let cfg = RunConfig {
            piezo: file.geometry.piezo.resolve(LayerGeometry::reference_piezo()),
            substrate: file.geometry.substrate.resolve(LayerGeometry::reference_substrate()),
            material: file.material,
            schemes: run.scheme.unwrap_or_else(|| defaults.schemes.clone()),
            n: run.n.unwrap_or_else(|| defaults.n.clone()),
            variant: run.variant.unwrap_or_default(),
            gain: run.gain.unwrap_or(DEFAULT_GAIN),
            dt: run.dt,
            t_end: run.t_end,
            snapshot_t,
            out: run.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: run.seed.unwrap_or(0),
            initial: run.initial.unwrap_or_default(),
            config_path,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if self.schemes.is_empty() {
            return bad("run.scheme", "at least one scheme is required".into());
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("run.n", format!("{:?}: orders must be >= 1", self.n));
        }
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return bad("run.gain", format!("{} must be >= 0", self.gain));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad("run.dt", format!("{dt} must be > 0"));
            }
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > 0.0) {
                return bad("run.t_end", format!("{t} must be > 0"));
            }
        }
        if i64::try_from(self.seed).is_err() {
            return bad("run.seed", format!("{} exceeds the TOML integer range", self.seed));
        }
        if !(self.snapshot_t.is_finite() && self.snapshot_t >= 0.0) {
            return bad("run.snapshot_t", format!("{} must be >= 0", self.snapshot_t));
        }
        self.params().map_err(|e| Error::Config { key: "geometry/material".into(), message: e.to_string() })?;
        Ok(())
    }

    pub fn params(&self) -> Result<CompositeParams> {
        composite_params(&self.material, &self.piezo, &self.substrate)
    }

    /// The resolved configuration as a config file that reproduces this run.
    pub fn to_toml(&self) -> Result<String> {
        let layer = |g: &LayerGeometry| LayerSection { ell: Some(g.length), g_b: Some(g.half_width), h_a: Some(g.lower), h_b: Some(g.upper) };
        let file = ConfigFile {
            geometry: GeometrySection { piezo: layer(&self.piezo), substrate: layer(&self.substrate) },
            material: self.material,
            run: RunSection {
                scheme: Some(self.schemes.clone()),
                n: Some(self.n.clone()),
                variant: Some(self.variant),
                gain: Some(self.gain),
                dt: self.dt,
                t_end: self.t_end,
                snapshot_t: Some(self.snapshot_t),
                out: Some(self.out.clone()),
                seed: Some(self.seed),
                initial: Some(self.initial),
            },
        };
        let mut s = String::from("# resolved configuration\n");
        if let Some(p) = &self.config_path {
            s.push_str(&format!("# config file: {}\n", p.display()));
        }
        s.push_str(&toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?);
        Ok(s)
    }
}

/// Parses `"12,16,20"` or `"12..40:4"` (inclusive range with step).
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config { key: "n".into(), message: format!("cannot parse `{s}` (e.g. 12,16,20 or 12..40:4)") };
    let mut out = vec![];
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let (lo, hi, step): (usize, usize, usize) = (
                lo.parse().map_err(|_| bad())?,
                hi.parse().map_err(|_| bad())?,
                step.parse().map_err(|_| bad())?,
            );
            if step == 0 || hi < lo {
                return Err(bad());
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_scheme_list(s: &str) -> Result<Vec<Scheme>> {
    if s.trim().eq_ignore_ascii_case("both") || s.trim().eq_ignore_ascii_case("all") {
        return Ok(vec![Scheme::Fem, Scheme::Mfem]);
    }
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
}
