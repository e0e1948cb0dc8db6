//! Run configuration in a flat `key = value` format.
//!
//! ```text
//! # comment
//! [model]
//! eps = 0.05
//! tau = 0.1
//! kernel.width = 3.5      # dotted keys work inside or outside sections
//! ```
//!
//! A key inside `[section]` is read as `section.key`. Every key has a
//! default; unknown or repeated keys are errors that carry the line number.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngExt, SeedableRng};

use crate::asymptotics::{quasi_static_mu, SweepMode};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::load_snapshot;
use crate::kernel::{KernelBundle, KernelSpec, RadialTable};
use crate::model::{make_smoothed_ic, InitialData, Model, ModelParams, Ordering, Proliferation, SupplySchedule};
use crate::potential::PotentialSpec;

struct KeySpec {
    key: &'static str,
    default: &'static str,
    doc: &'static str,
}

const fn k(key: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, default, doc }
}

const SCHEMA: &[KeySpec] = &[
    k("grid.dim", "1", "spatial dimension, 1 or 2"),
    k("grid.cells", "256", "cells per axis (one value, or one per axis)"),
    k("grid.extent", "1.0", "domain length per axis (one value, or one per axis)"),
    k("kernel.family", "gaussian", "gaussian | newtonian | tabulated"),
    k("kernel.width", "4.0", "gaussian J(r) = n exp(-r^2 / width^2)"),
    k("kernel.normalization", "2.0", "kernel prefactor n"),
    k("kernel.delta", "0.05", "newtonian mollification"),
    k("kernel.cutoff", "0.5", "newtonian cutoff radius"),
    k("kernel.table", "", "two-column CSV (radius, value) for tabulated kernels"),
    k("potential.family", "polynomial", "polynomial | logarithmic | double_obstacle"),
    k("potential.convexity_shift", "0.0", "s in F1 = r^4/4 + s r^2 + 1/4"),
    k("potential.theta", "0.3", "logarithmic theta"),
    k("potential.theta0", "0.6", "logarithmic theta0"),
    k("potential.c", "1.0", "double-obstacle concave coefficient"),
    k("potential.lambda", "1e-3", "Yosida parameter"),
    k("potential.lambda_follows_dt", "true", "use min(lambda, dt)"),
    k("model.eps", "0.1", "relaxation eps >= 0"),
    k("model.tau", "0.1", "viscosity tau >= 0"),
    k("model.p", "0.5", "proliferation rate P"),
    k("model.a", "0.2", "apoptosis rate A"),
    k("model.b", "1.0", "nutrient supply rate B"),
    k("model.c", "0.5", "nutrient consumption rate C"),
    k("model.chi", "0.1", "chemotaxis chi"),
    k("model.eta", "0.0", "active transport eta"),
    k("model.sigma_s", "1.0", "constant nutrient supply level in [0, 1]"),
    k("model.h", "default", "default | constant | tanh"),
    k("model.h_constant", "1.0", "value of h for model.h = constant"),
    k("model.dt", "1e-4", "time step"),
    k("model.t_final", "0.1", "horizon T (a whole number of steps)"),
    k("scheme.ordering", "gauss_seidel", "gauss_seidel | jacobi: which phi the nutrient step sees"),
    k("ic.family", "cosine", "constants | cosine | random_smoothed | file"),
    k("ic.phi_mean", "0.1", "mean of phi0"),
    k("ic.phi_amplitude", "0.3", "cosine amplitude or noise half-width of phi0"),
    k("ic.phi_mode", "1", "cosine mode of phi0"),
    k("ic.sigma_mean", "0.6", "mean of sigma0"),
    k("ic.sigma_amplitude", "0.2", "cosine amplitude or noise half-width of sigma0"),
    k("ic.sigma_mode", "1", "cosine mode of sigma0"),
    k("ic.mu", "quasi_static", "quasi_static or a constant"),
    k("ic.smoothing", "0.0", "s in v + s(I - Delta)v = target, applied to phi0 and sigma0"),
    k("ic.seed", "0", "seed of random_smoothed data"),
    k("ic.phi_file", "", "NLCHF1 snapshot for phi0"),
    k("ic.mu_file", "", "NLCHF1 snapshot for mu0 (optional)"),
    k("ic.sigma_file", "", "NLCHF1 snapshot for sigma0"),
    k("output.directory", "out", "result directory"),
    k("output.snapshot_stride", "100", "write every n-th state"),
    k("output.snapshots", "true", "write NLCHF1 snapshots"),
    k("output.diagnostics_csv", "true", "write diagnostics.csv"),
    k("output.field_csv", "false", "also write the final fields as CSV"),
    k("output.error_log", "", "append JSON-lines errors to this file"),
    k("sweep.mode", "eps", "eps | tau | joint"),
    k("sweep.values", "0.1, 0.03, 0.01, 0.003, 0.001", "decreasing eps or tau values"),
    k("sweep.coupling", "2.0", "joint sweeps use eps = tau^coupling"),
    k("sweep.m0", "100.0", "bound on the initial-data monitor"),
    k("sweep.workers", "0", "parallel runs (0 = one per core)"),
    k("sweep.snapshot_stride", "10", "compare every n-th step"),
    k("stability.deltas", "0.01, 0.001", "perturbation sizes"),
    k("stability.taus", "0.1, 0.01", "tau values of the stability study"),
    k("oracle.modes", "32", "Galerkin modes"),
    k("oracle.t_final", "0.5", "horizon of the oracle comparison"),
    k("oracle.interval", "0.01", "comparison sampling interval"),
    k("oracle.refine", "true", "also compare at doubled modes and cells, halved dt"),
];

fn spec_of(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Source line, `None` for command-line overrides.
    line: Option<usize>,
}

/// Raw key/value pairs as written, validated against the key list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    entries: HashMap<String, Entry>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = ConfigDoc::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unterminated section header '{content}'"),
                })?;
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(Error::Parse {
                        line,
                        message: format!("invalid section name '{name}'"),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "missing key before '='".into(),
                });
            }
            let full = if section.is_empty() || key.contains('.') && spec_of(key).is_some() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if spec_of(&full).is_none() {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key '{full}'"),
                });
            }
            if let Some(prev) = doc.entries.get(&full) {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "duplicate key '{full}' (first set on line {})",
                        prev.line.unwrap_or(0)
                    ),
                });
            }
            doc.entries.insert(
                full,
                Entry {
                    value: value.trim().to_string(),
                    line: Some(line),
                },
            );
        }
        Ok(doc)
    }

    /// Overrides one key, as from `--set key=value`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if spec_of(key).is_none() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line: None,
            },
        );
        Ok(())
    }

    /// Parses `key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> &str {
        match self.entries.get(key) {
            Some(e) => &e.value,
            None => spec_of(key).map_or("", |s| s.default),
        }
    }

    fn error(&self, key: &str, message: String) -> Error {
        match self.entries.get(key).and_then(|e| e.line) {
            Some(line) => Error::Parse { line, message },
            None => Error::Config(message),
        }
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| self.error(key, format!("{key}: expected a number, got '{v}'")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        v.parse::<usize>()
            .map_err(|_| self.error(key, format!("{key}: expected a nonnegative integer, got '{v}'")))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(self.error(key, format!("{key}: expected true or false, got '{v}'"))),
        }
    }

    fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
        let v = self.get(key);
        v.split(',')
            .map(|s| parse(s.trim()))
            .collect::<Option<Vec<T>>>()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| self.error(key, format!("{key}: expected a comma-separated list, got '{v}'")))
    }

    fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<&'a str> {
        let v = self.get(key);
        options.iter().find(|o| **o == v).copied().ok_or_else(|| {
            self.error(key, format!("{key}: expected one of {}, got '{v}'", options.join(" | ")))
        })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Every key with its effective value, grouped by section, in a form
    /// that parses back to the same configuration.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for spec in SCHEMA {
            let (section, name) = spec.key.split_once('.').expect("schema keys are dotted");
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{name} = {}  # {}", self.get(spec.key), spec.doc);
        }
        out
    }
}

/// How the initial data are built.
#[derive(Debug, Clone, PartialEq)]
pub enum IcFamily {
    Constants,
    Cosine,
    RandomSmoothed,
    File {
        phi: PathBuf,
        mu: Option<PathBuf>,
        sigma: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MuInit {
    QuasiStatic,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcConfig {
    pub family: IcFamily,
    pub phi_mean: f64,
    pub phi_amplitude: f64,
    pub phi_mode: usize,
    pub sigma_mean: f64,
    pub sigma_amplitude: f64,
    pub sigma_mode: usize,
    pub mu: MuInit,
    pub smoothing: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub snapshot_stride: usize,
    pub snapshots: bool,
    pub diagnostics_csv: bool,
    pub field_csv: bool,
    pub error_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub values: Vec<f64>,
    pub coupling: f64,
    pub m0: f64,
    pub workers: usize,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub deltas: Vec<f64>,
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub modes: usize,
    pub t_final: f64,
    pub interval: f64,
    pub refine: bool,
}

/// Typed view of a [`ConfigDoc`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub doc: ConfigDoc,
    pub grid: Grid,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    pub params: ModelParams,
    pub ic: IcConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub stability: StabilityConfig,
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_doc(ConfigDoc::parse(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_doc(doc: ConfigDoc) -> Result<Self> {
        let grid = Self::grid_from(&doc)?;
        let kernel = Self::kernel_from(&doc)?;
        let potential = Self::potential_from(&doc)?;
        let params = Self::params_from(&doc, &grid)?;
        let ic = Self::ic_from(&doc)?;
        let output = OutputConfig {
            directory: PathBuf::from(doc.get("output.directory")),
            snapshot_stride: doc.usize("output.snapshot_stride")?.max(1),
            snapshots: doc.bool("output.snapshots")?,
            diagnostics_csv: doc.bool("output.diagnostics_csv")?,
            field_csv: doc.bool("output.field_csv")?,
            error_log: doc.path("output.error_log"),
        };
        let mode = match doc.choice("sweep.mode", &["eps", "tau", "joint"])? {
            "eps" => SweepMode::EpsToZero,
            "tau" => SweepMode::TauToZero,
            _ => SweepMode::Joint,
        };
        let sweep = SweepConfig {
            mode,
            values: doc.list("sweep.values", |s| s.parse().ok())?,
            coupling: doc.f64("sweep.coupling")?,
            m0: doc.f64("sweep.m0")?,
            workers: doc.usize("sweep.workers")?,
            snapshot_stride: doc.usize("sweep.snapshot_stride")?.max(1),
        };
        let stability = StabilityConfig {
            deltas: doc.list("stability.deltas", |s| s.parse().ok())?,
            taus: doc.list("stability.taus", |s| s.parse().ok())?,
        };
        let oracle = OracleConfig {
            modes: doc.usize("oracle.modes")?,
            t_final: doc.f64("oracle.t_final")?,
            interval: doc.f64("oracle.interval")?,
            refine: doc.bool("oracle.refine")?,
        };
        Ok(RunConfig {
            doc,
            grid,
            kernel,
            potential,
            params,
            ic,
            output,
            sweep,
            stability,
            oracle,
        })
    }

    fn grid_from(doc: &ConfigDoc) -> Result<Grid> {
        let dim = doc.usize("grid.dim")?;
        let cells: Vec<usize> = doc.list("grid.cells", |s| s.parse().ok())?;
        let extent: Vec<f64> = doc.list("grid.extent", |s| s.parse().ok())?;
        let per_axis = |v: &[f64], key: &str| -> Result<[f64; 2]> {
            match v.len() {
                1 => Ok([v[0], v[0]]),
                2 if dim == 2 => Ok([v[0], v[1]]),
                _ => Err(doc.error(key, format!("{key}: expected 1 or {dim} values"))),
            }
        };
        let c = per_axis(&cells.iter().map(|&c| c as f64).collect::<Vec<_>>(), "grid.cells")?;
        let e = per_axis(&extent, "grid.extent")?;
        let wrap = |r: Result<Grid>, key: &str| r.map_err(|err| doc.error(key, err.to_string()));
        match dim {
            1 => wrap(Grid::new_1d(c[0] as usize, e[0]), "grid.cells"),
            2 => wrap(Grid::new_2d([c[0] as usize, c[1] as usize], e), "grid.cells"),
            _ => Err(doc.error("grid.dim", format!("grid.dim: expected 1 or 2, got {dim}"))),
        }
    }

    fn kernel_from(doc: &ConfigDoc) -> Result<KernelSpec> {
        let normalization = doc.f64("kernel.normalization")?;
        let spec = match doc.choice("kernel.family", &["gaussian", "newtonian", "tabulated"])? {
            "gaussian" => KernelSpec::gaussian(doc.f64("kernel.width")?, normalization),
            "newtonian" => KernelSpec::newtonian(doc.f64("kernel.delta")?, doc.f64("kernel.cutoff")?, normalization),
            _ => {
                let path = doc
                    .path("kernel.table")
                    .ok_or_else(|| doc.error("kernel.family", "tabulated kernels need kernel.table".into()))?;
                KernelSpec {
                    family: crate::kernel::KernelFamily::Tabulated(RadialTable::from_csv(&path)?),
                    normalization,
                }
            }
        };
        spec.validate().map_err(|e| doc.error("kernel.family", e.to_string()))?;
        Ok(spec)
    }

    fn potential_from(doc: &ConfigDoc) -> Result<PotentialSpec> {
        let spec = match doc.choice("potential.family", &["polynomial", "logarithmic", "double_obstacle"])? {
            "polynomial" => PotentialSpec::Polynomial {
                shift: doc.f64("potential.convexity_shift")?,
            },
            "logarithmic" => PotentialSpec::logarithmic(doc.f64("potential.theta")?, doc.f64("potential.theta0")?),
            _ => PotentialSpec::double_obstacle(doc.f64("potential.c")?),
        };
        spec.validate().map_err(|e| doc.error("potential.family", e.to_string()))?;
        Ok(spec)
    }

    fn params_from(doc: &ConfigDoc, grid: &Grid) -> Result<ModelParams> {
        let h = match doc.choice("model.h", &["default", "constant", "tanh"])? {
            "default" => Proliferation::Default,
            "constant" => Proliferation::Constant(doc.f64("model.h_constant")?),
            _ => Proliferation::Tanh,
        };
        let ordering = match doc.choice("scheme.ordering", &["gauss_seidel", "jacobi"])? {
            "gauss_seidel" => Ordering::GaussSeidel,
            _ => Ordering::Jacobi,
        };
        Ok(ModelParams {
            eps: doc.f64("model.eps")?,
            tau: doc.f64("model.tau")?,
            p: doc.f64("model.p")?,
            a: doc.f64("model.a")?,
            b: doc.f64("model.b")?,
            c: doc.f64("model.c")?,
            chi: doc.f64("model.chi")?,
            eta: doc.f64("model.eta")?,
            sigma_s: SupplySchedule::uniform(grid, doc.f64("model.sigma_s")?),
            h,
            lambda: doc.f64("potential.lambda")?,
            lambda_follows_dt: doc.bool("potential.lambda_follows_dt")?,
            dt: doc.f64("model.dt")?,
            t_final: doc.f64("model.t_final")?,
            ordering,
        })
    }

    fn ic_from(doc: &ConfigDoc) -> Result<IcConfig> {
        let family = match doc.choice("ic.family", &["constants", "cosine", "random_smoothed", "file"])? {
            "constants" => IcFamily::Constants,
            "cosine" => IcFamily::Cosine,
            "random_smoothed" => IcFamily::RandomSmoothed,
            _ => {
                let need = |key: &str| {
                    doc.path(key)
                        .ok_or_else(|| doc.error("ic.family", format!("ic.family = file needs {key}")))
                };
                IcFamily::File {
                    phi: need("ic.phi_file")?,
                    mu: doc.path("ic.mu_file"),
                    sigma: need("ic.sigma_file")?,
                }
            }
        };
        let mu = match doc.get("ic.mu") {
            "quasi_static" => MuInit::QuasiStatic,
            _ => MuInit::Constant(doc.f64("ic.mu")?),
        };
        let smoothing = doc.f64("ic.smoothing")?;
        if smoothing < 0.0 {
            return Err(doc.error("ic.smoothing", format!("ic.smoothing must be >= 0, got {smoothing}")));
        }
        if family == IcFamily::RandomSmoothed && smoothing == 0.0 {
            return Err(doc.error(
                "ic.smoothing",
                "ic.family = random_smoothed needs ic.smoothing > 0".into(),
            ));
        }
        Ok(IcConfig {
            family,
            phi_mean: doc.f64("ic.phi_mean")?,
            phi_amplitude: doc.f64("ic.phi_amplitude")?,
            phi_mode: doc.usize("ic.phi_mode")?,
            sigma_mean: doc.f64("ic.sigma_mean")?,
            sigma_amplitude: doc.f64("ic.sigma_amplitude")?,
            sigma_mode: doc.usize("ic.sigma_mode")?,
            mu,
            smoothing,
            seed: doc.usize("ic.seed")? as u64,
        })
    }

    /// Re-reads the typed view after editing `doc`.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut doc = self.doc.clone();
        doc.set(key, value)?;
        Self::from_doc(doc)
    }

    pub fn bundle(&self) -> Result<Arc<KernelBundle>> {
        Ok(Arc::new(KernelBundle::build(self.kernel.clone(), &self.grid)?))
    }

    /// The model, with the hypothesis gate applied.
    pub fn model(&self) -> Result<Model> {
        self.model_with(self.bundle()?)
    }

    pub fn model_with(&self, bundle: Arc<KernelBundle>) -> Result<Model> {
        Model::new(bundle, self.potential.clone(), self.params.clone())
    }

    /// `φ₀` and `σ₀` before smoothing (the limit data of sweeps).
    pub fn targets(&self) -> Result<(Field, Field)> {
        let g = &self.grid;
        let ic = &self.ic;
        let cosine = |mean: f64, amp: f64, mode: usize| {
            let (lx, ly, dim) = (g.extent(0), g.extent(g.dim() - 1), g.dim());
            Field::from_fn(g, move |x| {
                let m = mode as f64 * std::f64::consts::PI;
                let mut v = (m * x[0] / lx).cos();
                if dim == 2 {
                    v *= (m * x[1] / ly).cos();
                }
                mean + amp * v
            })
        };
        match &ic.family {
            IcFamily::Constants => Ok((Field::constant(g, ic.phi_mean), Field::constant(g, ic.sigma_mean))),
            IcFamily::Cosine => Ok((
                cosine(ic.phi_mean, ic.phi_amplitude, ic.phi_mode),
                cosine(ic.sigma_mean, ic.sigma_amplitude, ic.sigma_mode),
            )),
            IcFamily::RandomSmoothed => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ic.seed);
                let mut noise = |mean: f64, amp: f64| {
                    let v: Vec<f64> = (0..g.len()).map(|_| mean + amp * rng.random_range(-1.0..=1.0)).collect();
                    Field::from_values(*g, v)
                };
                let phi = noise(ic.phi_mean, ic.phi_amplitude)?;
                let sigma = noise(ic.sigma_mean, ic.sigma_amplitude)?;
                Ok((phi, sigma))
            }
            IcFamily::File { phi, sigma, .. } => {
                let phi = load_snapshot(phi)?;
                let sigma = load_snapshot(sigma)?;
                for f in [&phi, &sigma] {
                    if f.grid() != g {
                        return Err(Error::Dimension("initial-data file grid differs from grid.*".into()));
                    }
                }
                Ok((phi, sigma))
            }
        }
    }

    /// Initial data for `model`: the targets smoothed with `ic.smoothing`
    /// and `μ₀` from `ic.mu` (or `ic.mu_file`).
    pub fn initial_data(&self, model: &Model) -> Result<InitialData> {
        let (phi_t, sigma_t) = self.targets()?;
        let s = self.ic.smoothing;
        let phi0 = make_smoothed_ic(&phi_t, s)?;
        let sigma0 = make_smoothed_ic(&sigma_t, s)?;
        let mu0 = match (&self.ic.family, &self.ic.mu) {
            (IcFamily::File { mu: Some(path), .. }, _) => {
                let mu = load_snapshot(path)?;
                if mu.grid() != &self.grid {
                    return Err(Error::Dimension("initial-data file grid differs from grid.*".into()));
                }
                mu
            }
            (_, MuInit::QuasiStatic) => quasi_static_mu(model, &phi0, &sigma0)?,
            (_, MuInit::Constant(c)) => Field::constant(&self.grid, *c),
        };
        Ok(InitialData { phi0, mu0, sigma0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_build() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.grid.cells(0), 256);
        assert_eq!(cfg.params.eps, 0.1);
        assert_eq!(cfg.sweep.values, vec![0.1, 0.03, 0.01, 0.003, 0.001]);
        let model = cfg.model().unwrap();
        let init = cfg.initial_data(&model).unwrap();
        assert!((init.phi0.max() - 0.4).abs() < 1e-4);
    }

    #[test]
    fn sections_and_dotted_keys() {
        let text = "# header\n[model]\neps = 0.05 # inline\ntau=0.2\n\nkernel.width = 3.0\n[grid]\ncells = 64\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.params.eps, 0.05);
        assert_eq!(cfg.params.tau, 0.2);
        assert_eq!(cfg.grid.cells(0), 64);
        assert!(matches!(cfg.kernel.family, crate::kernel::KernelFamily::Gaussian { width } if width == 3.0));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse("[model]\neps = 0.1\nepsilon = 0.2\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("model.epsilon"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line() {
        for (text, expected) in [
            ("[model\n", 1),
            ("[grid]\ncells\n", 2),
            ("[model]\n\neps = abc\n", 3),
            ("[model]\neps = 0.1\neps = 0.2\n", 3),
            ("[ic]\nfamily = spiral\n", 2),
        ] {
            match RunConfig::parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn overrides() {
        let mut doc = ConfigDoc::parse("[model]\neps = 0.1\n").unwrap();
        doc.set_assignment("model.eps=0.02").unwrap();
        assert!(matches!(doc.set_assignment("model.epsilon=1"), Err(Error::Config(_))));
        assert!(doc.set_assignment("noequals").is_err());
        let cfg = RunConfig::from_doc(doc).unwrap();
        assert_eq!(cfg.params.eps, 0.02);
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = RunConfig::parse("[model]\nchi = 0.05\n[sweep]\nmode = joint\n").unwrap();
        let text = cfg.doc.resolved();
        assert!(text.contains("[model]\n"));
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(again.doc.resolved(), text);
        assert_eq!(again.params.chi, 0.05);
        assert_eq!(again.sweep.mode, SweepMode::Joint);
    }

    #[test]
    fn random_initial_data_are_seeded() {
        let text = "[grid]\ncells = 64\n[ic]\nfamily = random_smoothed\nsmoothing = 0.01\nsigma_mean = 0.5\nsigma_amplitude = 0.5\n";
        let a = RunConfig::parse(&format!("{text}seed = 3\n")).unwrap();
        let b = RunConfig::parse(&format!("{text}seed = 3\n")).unwrap();
        let c = RunConfig::parse(&format!("{text}seed = 4\n")).unwrap();
        let (pa, sa) = a.targets().unwrap();
        assert_eq!(pa, b.targets().unwrap().0);
        assert_ne!(pa, c.targets().unwrap().0);
        assert!(sa.min() >= 0.0 && sa.max() <= 1.0);
        let model = a.model().unwrap();
        let init = a.initial_data(&model).unwrap();
        assert!(init.sigma0.min() >= 0.0 && init.sigma0.max() <= 1.0);
        assert!(RunConfig::parse("[ic]\nfamily = random_smoothed\n").is_err());
    }

    #[test]
    fn two_dimensional_grid() {
        let cfg = RunConfig::parse("[grid]\ndim = 2\ncells = 16, 8\nextent = 1.0, 0.5\n").unwrap();
        assert_eq!((cfg.grid.cells(0), cfg.grid.cells(1)), (16, 8));
        assert!(RunConfig::parse("[grid]\ndim = 1\ncells = 16, 8\n").is_err());
    }

    #[test]
    fn file_initial_data() {
        let dir = std::env::temp_dir().join(format!("nlch-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = Grid::new_1d(32, 1.0).unwrap();
        let phi = Field::from_fn(&g, |x| 0.2 * x[0]);
        let sigma = Field::constant(&g, 0.5);
        crate::io::save_snapshot(dir.join("phi.bin"), &phi).unwrap();
        crate::io::save_snapshot(dir.join("sigma.bin"), &sigma).unwrap();
        let text = format!(
            "[grid]\ncells = 32\n[ic]\nfamily = file\nphi_file = {}\nsigma_file = {}\n",
            dir.join("phi.bin").display(),
            dir.join("sigma.bin").display()
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let (p, s) = cfg.targets().unwrap();
        assert_eq!((p, s), (phi, sigma));
        assert!(RunConfig::parse("[ic]\nfamily = file\n").is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
