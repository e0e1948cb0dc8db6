//! Property suite over every module, run against one configuration.
//!
//! Each row is a numerical invariant with the measured value in its detail;
//! rows that do not apply to the configuration are reported as `N/A`.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};

use crate::asymptotics::fit_rate;
use crate::audit::Status;
use crate::config::RunConfig;
use crate::diagnostics::{probe_max_principle, probe_separation, worst_lyapunov_increase, worst_mass_balance};
use crate::error::{Error, Result};
use crate::galerkin::{compare_with_stepper, GalerkinSystem, OracleComparison, SpectralBasis};
use crate::grid::{inclusion_constant, laplacian_neumann, norm_h, norm_v, norm_vstar, Field};
use crate::model::{InitialData, Model, ModelParams, RunOptions};
use crate::ode::Tolerances;
use crate::potential::{PotentialSpec, INVARIANT_RANGE};

/// Relative mass-balance residual allowed per step.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Lyapunov increase allowed per step, relative to its initial value.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-10;
pub const CONVOLUTION_TOLERANCE: f64 = 1e-12;
pub const RESOLVENT_TOLERANCE: f64 = 1e-12;
/// Steps of the source-free Lyapunov run.
pub const LYAPUNOV_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRow {
    pub module: &'static str,
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropertyTable {
    pub rows: Vec<PropertyRow>,
}

impl PropertyTable {
    fn push(&mut self, module: &'static str, name: &str, passed: bool, detail: String) {
        self.rows.push(PropertyRow {
            module,
            name: name.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            detail,
        });
    }

    fn skip(&mut self, module: &'static str, name: &str, detail: &str) {
        self.rows.push(PropertyRow {
            module,
            name: name.into(),
            status: Status::NotApplicable,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12} {:<30} {:<6} detail\n", "module", "property", "status");
        for r in &self.rows {
            let _ = writeln!(out, "{:<12} {:<30} {:<6} {}", r.module, r.name, r.status.to_string(), r.detail);
        }
        let failed = self.rows.iter().filter(|r| r.status == Status::Fail).count();
        let _ = writeln!(out, "\n{} properties, {failed} failed", self.rows.len());
        out
    }
}

/// Largest `|a − b| / (1 + |b|_∞)`.
fn relative_gap(a: &Field, b: &Field) -> f64 {
    let scale = 1.0 + b.sup_norm();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

/// The potential's sample range: inside the barrier for bounded domains.
fn sample_points(potential: &PotentialSpec, n: usize) -> Vec<f64> {
    let range = if potential.has_full_domain() {
        INVARIANT_RANGE
    } else {
        // the resolvent maps all of R into the domain, so sample beyond it
        1.5 * potential.ell()
    };
    (0..n).map(|i| -range + 2.0 * range * i as f64 / (n - 1) as f64).collect()
}

fn potential_rows(table: &mut PropertyTable, potential: &PotentialSpec, lambda: f64, seed: u64) {
    let m = "potential";
    let pts = sample_points(potential, 2001);
    let residual = pts
        .iter()
        .map(|&r| potential.resolvent_residual(lambda, r) / (1.0 + r.abs()))
        .fold(0.0, f64::max);
    table.push(
        m,
        "resolvent residual",
        residual <= RESOLVENT_TOLERANCE,
        format!("{} lambda = {lambda:.1e}: max {residual:.2e} (<= {RESOLVENT_TOLERANCE:.0e})", potential.name()),
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let range = pts[pts.len() - 1];
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let (r, s): (f64, f64) = (rng.random_range(-range..range), rng.random_range(-range..range));
        if r == s {
            continue;
        }
        let q = (potential.yosida(lambda, r) - potential.yosida(lambda, s)).abs() / (r - s).abs();
        worst = worst.max(q * lambda);
    }
    table.push(
        m,
        "Yosida 1/lambda-Lipschitz",
        worst <= 1.0 + 1e-9,
        format!("max lambda·|dY|/|dr| = {worst:.6} over 1000 pairs"),
    );

    let monotone = pts
        .windows(2)
        .all(|w| potential.yosida(lambda, w[1]) >= potential.yosida(lambda, w[0]) - 1e-12);
    table.push(m, "Yosida monotone", monotone, "nondecreasing on the sample mesh".into());

    let excess = pts
        .iter()
        .map(|&r| potential.moreau(lambda, r) - potential.f1(r))
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    table.push(
        m,
        "Moreau envelope <= F1",
        excess <= 1e-12,
        format!("max(F1_lambda - F1) = {excess:.2e}"),
    );
}

/// Runs the property suite for `cfg`. Errors only when the configuration
/// cannot be built; property failures are rows.
pub fn run_properties(cfg: &RunConfig) -> Result<PropertyTable> {
    let mut table = PropertyTable::default();
    let model = cfg.model()?;
    let init = cfg.initial_data(&model)?;
    let grid = &cfg.grid;
    let phi0 = &init.phi0;

    // grid
    let k0 = inclusion_constant(grid)?;
    let (vs, h, v) = (norm_vstar(phi0)?, norm_h(phi0), norm_v(phi0));
    table.push(
        "grid",
        "norm chain V* <= K0 H <= K0 V",
        vs <= k0 * h * (1.0 + 1e-12) && h <= v * (1.0 + 1e-12),
        format!("|phi0|_V* = {vs:.6}, K0 = {k0:.4}, |phi0|_H = {h:.6}, |phi0|_V = {v:.6}"),
    );
    let lap_mass = laplacian_neumann(phi0).mean().abs();
    table.push(
        "grid",
        "Neumann Laplacian mean zero",
        lap_mass <= 1e-10 * (1.0 + laplacian_neumann(phi0).sup_norm()),
        format!("|mean(Delta phi0)| = {lap_mass:.2e}"),
    );

    // kernel
    let fast = model.bundle.convolve(phi0)?;
    let direct = model.bundle.convolve_direct(phi0)?;
    let gap = relative_gap(&fast, &direct);
    table.push(
        "kernel",
        "FFT vs direct convolution",
        gap <= CONVOLUTION_TOLERANCE,
        format!("relative gap {gap:.2e} (<= {CONVOLUTION_TOLERANCE:.0e})"),
    );
    let ones = model.bundle.convolve(&Field::constant(grid, 1.0))?;
    let a_gap = relative_gap(&ones, model.bundle.a_field());
    table.push(
        "kernel",
        "a = J*1",
        a_gap <= CONVOLUTION_TOLERANCE,
        format!("relative gap {a_gap:.2e}"),
    );

    potential_rows(&mut table, &cfg.potential, model.params.lambda_eff(), cfg.ic.seed);

    // model: one full run of the configuration
    let options = RunOptions {
        snapshot_stride: 1,
        record_lyapunov: false,
    };
    match model.run(&init, &options, &mut []) {
        Ok(traj) => {
            let mb = worst_mass_balance(&traj);
            table.push(
                "model",
                "mass-source balance",
                mb <= MASS_TOLERANCE,
                format!("max relative residual {mb:.2e} over {} steps", model.params.steps()),
            );
            if model.params.eta == 0.0 && init.sigma0.min() >= 0.0 && init.sigma0.max() <= 1.0 {
                let mp = probe_max_principle(&traj);
                table.push(
                    "diagnostics",
                    "maximum principle 0<=sigma<=1",
                    mp.pass,
                    format!("sigma in [{:.3e}, {:.6}]", mp.sigma_min, mp.sigma_max),
                );
            } else {
                table.skip("diagnostics", "maximum principle 0<=sigma<=1", "needs eta = 0 and sigma0 in [0, 1]");
            }
            if cfg.potential.has_full_domain() {
                table.skip("diagnostics", "separation", "potential has unbounded domain");
            } else {
                let ell = cfg.potential.ell();
                let sp = probe_separation(&traj, ell);
                table.push(
                    "diagnostics",
                    "separation",
                    sp.pass,
                    format!("max |phi| = {:.6} against {ell}", sp.r_star),
                );
            }
        }
        Err(f) => table.push("model", "run completes", false, f.to_string()),
    }

    // source-free Lyapunov decay with the configured potential and kernel
    let p = &model.params;
    let mut free = ModelParams::source_free(grid, p.eps, p.tau, p.dt, p.dt * LYAPUNOV_STEPS as f64);
    free.lambda = p.lambda;
    free.lambda_follows_dt = p.lambda_follows_dt;
    free.ordering = p.ordering;
    let free_model = Model::new(model.bundle.clone(), cfg.potential.clone(), free)?;
    let free_init = cfg.initial_data(&free_model)?;
    match free_model.run(&free_init, &RunOptions::default(), &mut []) {
        Ok(traj) => {
            let l0 = traj.diagnostics[0].lyapunov;
            let up = worst_lyapunov_increase(&traj);
            table.push(
                "model",
                "Lyapunov non-increasing",
                up <= LYAPUNOV_TOLERANCE * l0.abs(),
                format!("max step increase {up:.2e}, L(0) = {l0:.6}, {LYAPUNOV_STEPS} source-free steps"),
            );
        }
        Err(f) => table.push("model", "Lyapunov non-increasing", false, f.to_string()),
    }

    // galerkin
    if grid.dim() == 1 && cfg.oracle.modes <= grid.cells(0) {
        let basis = SpectralBasis::new(grid, cfg.oracle.modes)?;
        let mut worst = 0.0_f64;
        let modes: Vec<Field> = (0..basis.modes()).map(|j| basis.mode(j)).collect();
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let ip = crate::grid::inner_h(a, b)?;
                worst = worst.max((ip - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        table.push(
            "galerkin",
            "basis orthonormality",
            worst <= 1e-12,
            format!("max |(e_i, e_j) - delta_ij| = {worst:.2e}, {} modes", basis.modes()),
        );
        if p.eps > 0.0 && p.tau > 0.0 {
            let sys = GalerkinSystem::new(&model, cfg.oracle.modes)?;
            let n = basis.modes();
            let m = sys.nonlocal_matrix();
            let asym = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| (m[i * n + j] - m[j * n + i]).abs())
                .fold(0.0, f64::max);
            table.push(
                "galerkin",
                "nonlocal matrix symmetric",
                asym <= 1e-12,
                format!("max asymmetry {asym:.2e}"),
            );
            let g0 = sys.project_initial(&init)?;
            let res = sys.mass_balance_residual(0.0, &g0);
            table.push(
                "galerkin",
                "zero-mode mass balance",
                res <= 1e-12,
                format!("residual {res:.2e}"),
            );
        } else {
            table.skip("galerkin", "nonlocal matrix symmetric", "needs eps > 0 and tau > 0");
        }
    } else {
        table.skip("galerkin", "basis orthonormality", "one-dimensional grids with modes <= cells only");
    }

    // asymptotics: the fit recovers an exact power law
    let values = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let errors: Vec<f64> = values.iter().map(|v: &f64| 2.0 * v.powf(0.5)).collect();
    let fit = fit_rate(&values, &errors)?;
    table.push(
        "asymptotics",
        "rate fit on exact power law",
        (fit.slope - 0.5).abs() <= 1e-12,
        format!("slope {:.12} for exponent 0.5", fit.slope),
    );

    Ok(table)
}

/// Relative `L²(0,T;H)` gap allowed between the stepper and the oracle.
pub const ORACLE_TOLERANCE: f64 = 5e-3;

/// Oracle comparison at the configured resolution and, optionally, with
/// modes and cells doubled and `dt` halved.
#[derive(Debug, Clone)]
pub struct OracleStudy {
    pub coarse: OracleComparison,
    pub fine: Option<OracleComparison>,
}

impl OracleStudy {
    pub fn passes(&self) -> bool {
        self.coarse.relative() <= ORACLE_TOLERANCE
            && self.fine.as_ref().is_none_or(|f| f.relative() < self.coarse.relative())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in std::iter::once(&self.coarse).chain(&self.fine) {
            let _ = writeln!(
                out,
                "modes {:>3}  cells {:>4}  dt {:.1e}  relative L2(0,T;H) gap {:.3e}  ({} accepted / {} rejected steps)",
                c.modes,
                c.cells,
                c.dt,
                c.relative(),
                c.stats.accepted,
                c.stats.rejected
            );
        }
        let _ = writeln!(
            out,
            "{}: gap <= {ORACLE_TOLERANCE:.0e}{}",
            if self.passes() { "PASS" } else { "FAIL" },
            if self.fine.is_some() { " and shrinking under refinement" } else { "" }
        );
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["modes", "cells", "dt", "error", "norm", "relative"])?;
        for c in std::iter::once(&self.coarse).chain(&self.fine) {
            out.write_record([
                c.modes.to_string(),
                c.cells.to_string(),
                c.dt.to_string(),
                c.error.to_string(),
                c.norm.to_string(),
                c.relative().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the oracle comparison for `cfg` over `oracle.t_final`; `initial`
/// builds the data on each resolution's grid.
pub fn oracle_study(
    cfg: &RunConfig,
    initial: impl Fn(&RunConfig, &Model) -> Result<InitialData>,
) -> Result<OracleStudy> {
    let run = |cfg: &RunConfig, modes: usize| -> Result<OracleComparison> {
        let cfg = cfg.with_override("model.t_final", &cfg.oracle.t_final.to_string())?;
        let model = cfg.model()?;
        let init = initial(&cfg, &model)?;
        compare_with_stepper(&model, &init, modes, cfg.oracle.interval, Tolerances::default())
    };
    let coarse = run(cfg, cfg.oracle.modes)?;
    let fine = if cfg.oracle.refine {
        if cfg.grid.dim() != 1 {
            return Err(Error::Inapplicable("the spectral oracle is one-dimensional".into()));
        }
        let refined = cfg
            .with_override("grid.cells", &(2 * cfg.grid.cells(0)).to_string())?
            .with_override("model.dt", &(0.5 * cfg.params.dt).to_string())?;
        Some(run(&refined, 2 * cfg.oracle.modes)?)
    } else {
        None
    };
    Ok(OracleStudy { coarse, fine })
}
