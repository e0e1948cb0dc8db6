//! Relaxation-limit sweeps and continuous-dependence probes.
//!
//! A sweep runs the solver for a decreasing sequence of `ε` and/or `τ`,
//! compares each run with the limit system (`ε = 0`, `τ = 0` or both) on the
//! same grid and step, and fits the log-log slope of the distances.
//! Initial data come from elliptic smoothing of fixed targets,
//! `v + s(I − Δ)v = target`, with `s = ε^{1/2}` for `ε`-sweeps and `s = τ`
//! otherwise; the limit runs start from the targets themselves.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::diagnostics::{distance, NormBundle, TrajectoryDistance};
use crate::error::{Error, Result};
use crate::grid::{norm_h, norm_v, Field};
use crate::model::{make_smoothed_ic, InitialData, Model, RunOptions, Trajectory};

/// Default `ε` and `τ` sequences.
pub const DEFAULT_VALUES: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
/// Smallest admissible sweep parameter.
pub const MIN_VALUE: f64 = 1e-8;
/// A distance within this factor of the step-refinement self-error counts
/// as floored.
pub const FLOOR_FACTOR: f64 = 3.0;
/// Largest tolerated relative increase in the single allowed inversion.
pub const INVERSION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// `ε → 0` at fixed `τ`.
    EpsToZero,
    /// `τ → 0` at fixed `ε`.
    TauToZero,
    /// `(ε, τ) → 0` along `ε = τ^p`.
    Joint,
}

impl SweepMode {
    pub fn name(&self) -> &'static str {
        match self {
            SweepMode::EpsToZero => "eps_to_zero",
            SweepMode::TauToZero => "tau_to_zero",
            SweepMode::Joint => "joint",
        }
    }

    pub fn norm_bundle(&self) -> NormBundle {
        match self {
            SweepMode::EpsToZero => NormBundle::EpsLimit,
            SweepMode::TauToZero => NormBundle::TauLimit,
            SweepMode::Joint => NormBundle::Joint,
        }
    }

    /// Guaranteed rate in the swept parameter (`τ` for joint sweeps).
    pub fn theoretical_slope(&self) -> f64 {
        match self {
            SweepMode::EpsToZero => 0.25,
            SweepMode::TauToZero | SweepMode::Joint => 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub mode: SweepMode,
    /// `ε` values for `EpsToZero`, `τ` values otherwise; strictly decreasing.
    pub values: Vec<f64>,
    /// Joint coupling exponent `p` in `ε = τ^p`.
    pub coupling_power: f64,
    /// Kernel, potential, coefficients, step and horizon. Its `τ` is the
    /// fixed value of an `ε`-sweep and its `ε` that of a `τ`-sweep.
    pub base: Model,
    pub phi_target: Field,
    pub sigma_target: Field,
    /// Bound on the monitored initial-data quantities.
    pub m0: f64,
    pub workers: usize,
    pub snapshot_stride: usize,
}

impl SweepPlan {
    /// Plan with the default values, `ε = τ²` coupling, `M₀ = 100`, one
    /// worker per core and snapshots every 10 steps.
    pub fn new(mode: SweepMode, base: Model, phi_target: Field, sigma_target: Field) -> Self {
        SweepPlan {
            mode,
            values: DEFAULT_VALUES.to_vec(),
            coupling_power: 2.0,
            base,
            phi_target,
            sigma_target,
            m0: 100.0,
            workers: 0,
            snapshot_stride: 10,
        }
    }

    /// `(ε, τ)` of the member with sweep parameter `v`.
    pub fn parameters(&self, v: f64) -> (f64, f64) {
        let p = &self.base.params;
        match self.mode {
            SweepMode::EpsToZero => (v, p.tau),
            SweepMode::TauToZero => (p.eps, v),
            SweepMode::Joint => (v.powf(self.coupling_power), v),
        }
    }

    fn smoothing(&self, v: f64) -> f64 {
        match self.mode {
            SweepMode::EpsToZero => v.sqrt(),
            _ => v,
        }
    }

    /// Model and smoothed initial data for parameter `v`; `v = 0` gives the
    /// limit problem from the unsmoothed targets.
    pub fn member(&self, v: f64) -> Result<(Model, InitialData)> {
        let (eps, tau) = self.parameters(v);
        let model = self.base.with_relaxation(eps, tau)?;
        let s = self.smoothing(v);
        let phi0 = make_smoothed_ic(&self.phi_target, s)?;
        let sigma0 = make_smoothed_ic(&self.sigma_target, s)?;
        let mu0 = match self.mode {
            SweepMode::EpsToZero => quasi_static_mu(&model, &phi0, &sigma0)?,
            _ => make_smoothed_ic(&quasi_static_mu(&model, &self.phi_target, &self.sigma_target)?, s)?,
        };
        Ok((model, InitialData { phi0, mu0, sigma0 }))
    }

    pub fn reference(&self) -> Result<(Model, InitialData)> {
        self.member(0.0)
    }

    /// Checks the plan and every member's hypotheses; returns the monitored
    /// initial-data quantity of each member.
    pub fn validate(&self) -> Result<Vec<f64>> {
        if self.values.is_empty() {
            return Err(Error::config("sweep needs at least one value"));
        }
        if let Some(v) = self.values.iter().find(|&&v| !(v >= MIN_VALUE && v.is_finite())) {
            return Err(Error::config(format!("sweep values must be >= {MIN_VALUE}, got {v}")));
        }
        if self.values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("sweep values must be strictly decreasing"));
        }
        if !(self.m0 > 0.0) {
            return Err(Error::config(format!("M0 must be positive, got {}", self.m0)));
        }
        if self.mode == SweepMode::Joint && !(self.coupling_power >= 2.0) {
            return Err(Error::assumption(
                "limsup",
                format!(
                    "eps = tau^{} makes eps^(1/2)/tau unbounded; the exponent must be >= 2",
                    self.coupling_power
                ),
            ));
        }
        if self.mode == SweepMode::TauToZero && self.base.params.eps == 0.0 {
            return Err(Error::config("a tau-sweep needs a fixed eps > 0"));
        }
        // the limit problem carries the mode's extra hypotheses (eta = 0 and
        // growth for eps = 0, the chi compatibility for tau = 0)
        self.reference()?;
        self.values
            .iter()
            .map(|&v| {
                let (model, init) = self.member(v)?;
                let m = self.monitor(&model, &init);
                if m > self.m0 {
                    return Err(Error::assumption(
                        "M0 bound",
                        format!("initial-data monitor {m:.4e} exceeds M0 = {} at value {v}", self.m0),
                    ));
                }
                Ok(m)
            })
            .collect()
    }

    /// Initial-data quantity that the matching error estimate needs bounded
    /// uniformly along the sweep.
    pub fn monitor(&self, model: &Model, init: &InitialData) -> f64 {
        let (eps, tau) = (model.params.eps, model.params.tau);
        let fprime = init.phi0.map(|r| model.potential.f_prime(r));
        match self.mode {
            SweepMode::EpsToZero => {
                eps.powf(0.25) * (norm_v(&init.mu0) + norm_v(&init.sigma0) + norm_h(&fprime))
            }
            SweepMode::TauToZero => {
                let vol = model.grid().cell_volume();
                let f_l1: f64 = init.phi0.values().iter().map(|&r| model.potential.f_eval(r).abs()).sum();
                tau.sqrt() * norm_v(&init.phi0) + f_l1 * vol
            }
            SweepMode::Joint => {
                eps.powf(0.25) / tau.sqrt() * (norm_h(&init.mu0) + norm_h(&fprime))
                    + eps.powf(0.25) * (norm_v(&init.mu0) + norm_v(&init.sigma0))
            }
        }
    }
}

/// `aφ + F1'_λ(φ) + F2'(φ) − J*φ − χσ`, the chemical potential of a state at
/// rest.
pub fn quasi_static_mu(model: &Model, phi: &Field, sigma: &Field) -> Result<Field> {
    let lam = model.params.lambda_eff();
    let conv = model.bundle.convolve(phi)?;
    let a = model.bundle.a_field();
    let chi = model.params.chi;
    let vals: Vec<f64> = phi
        .values()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            a.values()[i] * r + model.potential.f_prime_regularized(lam, r) - conv.values()[i]
                - chi * sigma.values()[i]
        })
        .collect();
    Field::from_values(*phi.grid(), vals)
}

/// Least-squares line through `(ln value, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of the fit in log space.
    pub residual: f64,
    pub points: usize,
    /// Points dropped because their error was not positive.
    pub excluded: usize,
}

pub fn fit_rate(values: &[f64], errors: &[f64]) -> Result<RateFit> {
    if values.len() != errors.len() {
        return Err(Error::Fit(format!(
            "{} values but {} errors",
            values.len(),
            errors.len()
        )));
    }
    let pts: Vec<(f64, f64)> = values
        .iter()
        .zip(errors)
        .filter(|(v, e)| **v > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(v, e)| (v.ln(), e.ln()))
        .collect();
    let excluded = values.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 positive errors for a rate fit, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all parameter values coincide".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        points: pts.len(),
        excluded,
    })
}

/// One sweep member.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: f64,
    pub eps: f64,
    pub tau: f64,
    pub distance: Option<TrajectoryDistance>,
    /// Sum of the mode's norm bundle.
    pub total: Option<f64>,
    pub monitor: f64,
    /// Within `FLOOR_FACTOR` of the discretization self-error.
    pub floored: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub mode: SweepMode,
    /// Sorted by decreasing value.
    pub entries: Vec<SweepEntry>,
    /// Distance between the limit run at `dt` and at `dt/2`.
    pub self_error: f64,
    /// The smallest-parameter distance sits on the discretization floor.
    pub floor_reached: bool,
    pub fit: Option<RateFit>,
    pub fit_failure: Option<String>,
    pub theoretical_slope: f64,
    pub monotone: bool,
    /// Some member run failed.
    pub incomplete: bool,
}

impl ErrorReport {
    /// Complete, monotone, fitted, and with slope at least `min_slope`.
    pub fn passes(&self, min_slope: f64) -> bool {
        !self.incomplete && self.monotone && self.fit.is_some_and(|f| f.slope >= min_slope)
    }

    /// Member rows, then a fit block after a blank line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        {
            let mut out = csv::Writer::from_writer(&mut w);
            let mut header = vec!["mode", "value", "eps", "tau"];
            header.extend(TrajectoryDistance::FIELDS);
            header.extend(["total", "monitor", "floored", "failure"]);
            out.write_record(&header)?;
            for e in &self.entries {
                let mut row = vec![
                    self.mode.name().to_string(),
                    e.value.to_string(),
                    e.eps.to_string(),
                    e.tau.to_string(),
                ];
                match &e.distance {
                    Some(d) => row.extend(d.values().iter().map(|v| v.to_string())),
                    None => row.extend(std::iter::repeat_n(String::new(), 8)),
                }
                row.push(e.total.map(|t| t.to_string()).unwrap_or_default());
                row.push(e.monitor.to_string());
                row.push(e.floored.to_string());
                row.push(e.failure.clone().unwrap_or_default());
                out.write_record(&row)?;
            }
            out.flush()?;
        }
        writeln!(w)?;
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record([
            "slope",
            "intercept",
            "residual",
            "points",
            "theoretical_slope",
            "self_error",
            "floor_reached",
            "monotone",
            "incomplete",
        ])?;
        let (slope, intercept, residual, points) = match self.fit {
            Some(f) => (
                f.slope.to_string(),
                f.intercept.to_string(),
                f.residual.to_string(),
                f.points.to_string(),
            ),
            None => Default::default(),
        };
        out.write_record([
            slope,
            intercept,
            residual,
            points,
            self.theoretical_slope.to_string(),
            self.self_error.to_string(),
            self.floor_reached.to_string(),
            self.monotone.to_string(),
            self.incomplete.to_string(),
        ])?;
        out.flush()?;
        Ok(())
    }

    /// Human-readable table and verdict against `min_slope`.
    pub fn summary(&self, min_slope: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} sweep ({} norms), limit self-error {:.3e}",
            self.mode.name(),
            self.mode.norm_bundle().name(),
            self.self_error
        );
        let _ = writeln!(s, "{:>10} {:>10} {:>10} {:>12}", "value", "eps", "tau", "distance");
        for e in &self.entries {
            let d = match (e.total, &e.failure) {
                (Some(t), _) => format!("{t:12.4e}{}", if e.floored { " (floor)" } else { "" }),
                (None, Some(f)) => format!("failed: {f}"),
                _ => "-".into(),
            };
            let _ = writeln!(s, "{:>10.3e} {:>10.3e} {:>10.3e} {d}", e.value, e.eps, e.tau);
        }
        match (&self.fit, &self.fit_failure) {
            (Some(f), _) => {
                let _ = writeln!(
                    s,
                    "fitted slope {:.4} (residual {:.2e}, {} points), theoretical {}",
                    f.slope, f.residual, f.points, self.theoretical_slope
                );
            }
            (None, Some(msg)) => {
                let _ = writeln!(s, "no fit: {msg}");
            }
            _ => {}
        }
        if !self.monotone {
            let _ = writeln!(s, "distances are not monotone in the parameter");
        }
        if self.incomplete {
            let _ = writeln!(s, "report incomplete: some runs failed");
        }
        let _ = writeln!(
            s,
            "{}: slope >= {min_slope}",
            if self.passes(min_slope) { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Non-increasing along `totals` except for at most one increase of at
/// most `INVERSION_TOLERANCE` (relative).
pub fn is_monotone(totals: &[f64]) -> bool {
    let mut inversions = 0;
    for w in totals.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            if inversions > 1 || w[1] > w[0] * (1.0 + INVERSION_TOLERANCE) {
                return false;
            }
        }
    }
    true
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

fn run_quiet(model: &Model, init: &InitialData, stride: usize) -> Result<Trajectory> {
    let options = RunOptions {
        snapshot_stride: stride,
        record_lyapunov: false,
    };
    model.run(init, &options, &mut []).map_err(|f| f.error)
}

pub fn sweep(plan: &SweepPlan) -> Result<ErrorReport> {
    let monitors = plan.validate()?;
    let (ref_model, ref_init) = plan.reference()?;
    let fine_model = ref_model.with_dt(0.5 * ref_model.params.dt)?;
    let stride = plan.snapshot_stride.max(1);

    enum Job {
        Reference,
        Fine,
        Member(usize),
    }
    let mut jobs = vec![Job::Reference, Job::Fine];
    jobs.extend((0..plan.values.len()).map(Job::Member));
    let results: Vec<Result<Trajectory>> = pool(plan.workers)?.install(|| {
        jobs.par_iter()
            .map(|job| match job {
                Job::Reference => run_quiet(&ref_model, &ref_init, stride),
                Job::Fine => run_quiet(&fine_model, &ref_init, 2 * stride),
                Job::Member(i) => {
                    let (m, init) = plan.member(plan.values[*i])?;
                    run_quiet(&m, &init, stride)
                }
            })
            .collect()
    });
    let mut results = results.into_iter();
    let reference = results.next().expect("reference job")?;
    let fine = results.next().expect("refined reference job")?;
    let bundle = plan.mode.norm_bundle();
    let self_error = distance(&reference, &fine)?.total(bundle);

    let mut entries = Vec::with_capacity(plan.values.len());
    for ((&value, result), monitor) in plan.values.iter().zip(results).zip(monitors) {
        let (eps, tau) = plan.parameters(value);
        let mut entry = SweepEntry {
            value,
            eps,
            tau,
            distance: None,
            total: None,
            monitor,
            floored: false,
            failure: None,
        };
        match result.and_then(|traj| distance(&traj, &reference)) {
            Ok(d) => {
                let total = d.total(bundle);
                entry.floored = total <= FLOOR_FACTOR * self_error;
                entry.distance = Some(d);
                entry.total = Some(total);
            }
            Err(e) => entry.failure = Some(e.to_string()),
        }
        entries.push(entry);
    }
    let incomplete = entries.iter().any(|e| e.failure.is_some());
    let floor_reached = entries.last().is_some_and(|e| e.floored);
    let totals: Vec<f64> = entries.iter().filter_map(|e| e.total).collect();
    let monotone = is_monotone(&totals);
    let (vals, errs): (Vec<f64>, Vec<f64>) = entries
        .iter()
        .filter(|e| !e.floored)
        .filter_map(|e| e.total.map(|t| (e.value, t)))
        .unzip();
    let (fit, fit_failure) = match fit_rate(&vals, &errs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ErrorReport {
        mode: plan.mode,
        entries,
        self_error,
        floor_reached,
        fit,
        fit_failure,
        theoretical_slope: plan.mode.theoretical_slope(),
        monotone,
        incomplete,
    })
}

/// Both sides of the continuous-dependence estimate for one perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub tau: f64,
    pub delta: f64,
    /// `|Δ(εμ+φ)|_{L∞(V*)} + |Δμ|_{L²(H)} + τ^{1/2}|Δφ|_{C(H)} + |Δφ|_{L²(H)} + |Δσ|_{C(H)∩L²(V)}`
    pub lhs: f64,
    /// `|Δ(εμ₀+φ₀)|_{V*} + τ^{1/2}|Δφ₀|_H + |Δσ₀|_H`
    pub rhs: f64,
    /// `lhs / rhs`, absent when both sides vanish.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// Largest ratio spread across `δ` at a fixed `τ`.
    pub delta_spread: f64,
    /// Largest ratio spread across `τ` at a fixed `δ`.
    pub tau_spread: f64,
}

/// Ratio agreement required across perturbation sizes.
pub const DELTA_SPREAD_LIMIT: f64 = 3.0;
/// Ratio agreement required across `τ`.
pub const TAU_SPREAD_LIMIT: f64 = 2.0;

impl StabilityReport {
    pub fn passes(&self) -> bool {
        self.delta_spread <= DELTA_SPREAD_LIMIT && self.tau_spread <= TAU_SPREAD_LIMIT
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tau", "delta", "lhs", "rhs", "ratio"])?;
        for r in &self.rows {
            out.write_record([
                r.tau.to_string(),
                r.delta.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.ratio.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8} {:>8} {:>12} {:>12} {:>10}", "tau", "delta", "lhs", "rhs", "ratio");
        for r in &self.rows {
            let ratio = r.ratio.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:>8.0e} {:>8.0e} {:>12.4e} {:>12.4e} {:>10}",
                r.tau, r.delta, r.lhs, r.rhs, ratio
            );
        }
        let _ = writeln!(
            s,
            "spread across delta {:.3} (limit {DELTA_SPREAD_LIMIT}), across tau {:.3} (limit {TAU_SPREAD_LIMIT}): {}",
            self.delta_spread,
            self.tau_spread,
            if self.passes() { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Smooth Gaussian bump centred in the domain, peak 1.
pub fn default_bump(grid: &crate::grid::Grid) -> Field {
    let c = [0.5 * grid.extent(0), 0.5 * grid.extent(grid.dim() - 1)];
    let w = 0.1 * grid.extent(0);
    let dim = grid.dim();
    Field::from_fn(grid, |x| {
        let r2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
        (-r2 / (2.0 * w * w)).exp()
    })
}

/// For each `τ` and `δ`, runs `init` and `init + δ·bump` (all three fields)
/// and evaluates both sides of the continuous-dependence estimate.
pub fn stability_probe(
    base: &Model,
    init: &InitialData,
    bump: &Field,
    taus: &[f64],
    deltas: &[f64],
    workers: usize,
) -> Result<StabilityReport> {
    if base.params.eta != 0.0 {
        return Err(Error::assumption(
            "eta = 0",
            format!("continuous dependence is only available for eta = 0, got {}", base.params.eta),
        ));
    }
    let mut cases = Vec::new();
    for &tau in taus {
        let model = base.with_relaxation(base.params.eps, tau)?;
        if !(model.params.eps > 0.0 && tau > 0.0) {
            return Err(Error::assumption(
                "eps, tau > 0",
                "continuous dependence needs eps > 0 and tau > 0",
            ));
        }
        for &delta in deltas {
            let perturbed = InitialData {
                phi0: init.phi0.zip_map(bump, |a, b| a + delta * b)?,
                mu0: init.mu0.zip_map(bump, |a, b| a + delta * b)?,
                sigma0: init.sigma0.zip_map(bump, |a, b| a + delta * b)?,
            };
            cases.push((model.clone(), delta, perturbed));
        }
    }
    let unperturbed: Vec<Result<Trajectory>> = pool(workers)?.install(|| {
        taus.par_iter()
            .map(|&tau| run_quiet(&base.with_relaxation(base.params.eps, tau)?, init, 1))
            .collect()
    });
    let unperturbed = unperturbed.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<Result<StabilityRow>> = pool(workers)?.install(|| {
        cases
            .par_iter()
            .enumerate()
            .map(|(k, (model, delta, perturbed))| {
                let tau = model.params.tau;
                let eps = model.params.eps;
                let other = run_quiet(model, perturbed, 1)?;
                let d = distance(&other, &unperturbed[k / deltas.len()])?;
                let lhs = d.linf_vstar_combo
                    + d.l2_h_mu
                    + tau.sqrt() * d.linf_h_phi
                    + d.l2_h_phi
                    + d.linf_h_sigma
                    + d.l2_v_sigma;
                let dphi = &perturbed.phi0 - &init.phi0;
                let dcombo = &(&perturbed.mu0 - &init.mu0).scaled(eps) + &dphi;
                let rhs = crate::grid::norm_vstar(&dcombo)?
                    + tau.sqrt() * norm_h(&dphi)
                    + norm_h(&(&perturbed.sigma0 - &init.sigma0));
                let ratio = (rhs > 0.0).then(|| lhs / rhs);
                Ok(StabilityRow {
                    tau,
                    delta: *delta,
                    lhs,
                    rhs,
                    ratio,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let spread = |rs: Vec<f64>| -> f64 {
        let hi = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
        if rs.len() < 2 { 1.0 } else { hi / lo }
    };
    let mut delta_spread: f64 = 1.0;
    for &tau in taus {
        let rs = rows.iter().filter(|r| r.tau == tau).filter_map(|r| r.ratio).collect();
        delta_spread = delta_spread.max(spread(rs));
    }
    let mut tau_spread: f64 = 1.0;
    for &delta in deltas {
        let rs = rows.iter().filter(|r| r.delta == delta).filter_map(|r| r.ratio).collect();
        tau_spread = tau_spread.max(spread(rs));
    }
    Ok(StabilityReport {
        rows,
        delta_spread,
        tau_spread,
    })
}
