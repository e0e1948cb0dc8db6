//! Observables along trajectories: energies, the Lyapunov functional,
//! trajectory distances in the norms used by the limit estimates, and probes
//! for the maximum principle and the separation property.

use crate::error::{Error, Result};
use crate::grid::{mean, norm_h, norm_v, norm_vstar, Field};
use crate::kernel::KernelBundle;
use crate::model::{Model, State, StepReport, Trajectory};
use crate::potential::PotentialSpec;

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `mean(εμ + φ)`.
    pub mass: f64,
    pub mass_balance_residual: f64,
    pub lyapunov: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub phi_supnorm: f64,
    pub energy_nonlocal: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: [&'static str; 9] = [
        "t",
        "mass",
        "mass_balance_residual",
        "lyapunov",
        "sigma_min",
        "sigma_max",
        "phi_supnorm",
        "energy_nonlocal",
        "newton_iters",
    ];

    pub fn csv_row(&self) -> [String; 9] {
        [
            self.t.to_string(),
            self.mass.to_string(),
            self.mass_balance_residual.to_string(),
            self.lyapunov.to_string(),
            self.sigma_min.to_string(),
            self.sigma_max.to_string(),
            self.phi_supnorm.to_string(),
            self.energy_nonlocal.to_string(),
            self.newton_iters.to_string(),
        ]
    }
}

/// Builds the record for `state`; `report` is `None` for the initial state.
pub(crate) fn record(model: &Model, state: &State, report: Option<&StepReport>, with_lyapunov: bool) -> DiagnosticsRecord {
    let eps = model.params.eps;
    let e_nl = model
        .bundle
        .nonlocal_energy_density(&state.phi)
        .unwrap_or(f64::NAN);
    DiagnosticsRecord {
        t: state.t,
        mass: eps * mean(&state.mu) + mean(&state.phi),
        mass_balance_residual: report.map_or(0.0, |r| r.mass_balance_residual),
        lyapunov: if with_lyapunov {
            lyapunov(model, state).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        },
        sigma_min: state.sigma.min(),
        sigma_max: state.sigma.max(),
        phi_supnorm: state.phi.sup_norm(),
        energy_nonlocal: e_nl,
        newton_iters: report.map_or(0, |r| r.newton_iterations),
    }
}

/// `∫_Ω g(φ)` with midpoint weights.
fn integrate(phi: &Field, g: impl Fn(f64) -> f64) -> f64 {
    phi.values().iter().map(|&r| g(r)).sum::<f64>() * phi.grid().cell_volume()
}

/// Free energy `¼∬J|φ(x) − φ(y)|² + ∫F(φ)`; `+∞` when `φ` leaves the domain
/// of `F`.
pub fn energy(phi: &Field, bundle: &KernelBundle, potential: &PotentialSpec) -> Result<f64> {
    let bulk = integrate(phi, |r| potential.f_eval(r));
    if bulk.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(bundle.nonlocal_energy_density(phi)? + bulk)
}

/// `(ε/2)|μ|² + ¼∬J|φ(x) − φ(y)|² + ∫F_λ(φ) + ½|σ|²` with the stepper's
/// Yosida parameter.
pub fn lyapunov(model: &Model, state: &State) -> Result<f64> {
    let lam = model.params.lambda_eff();
    let pot = &model.potential;
    let mu = norm_h(&state.mu);
    let sigma = norm_h(&state.sigma);
    Ok(0.5 * model.params.eps * mu * mu
        + model.bundle.nonlocal_energy_density(&state.phi)?
        + integrate(&state.phi, |r| pot.f_regularized(lam, r))
        + 0.5 * sigma * sigma)
}

/// Norms of the difference of two trajectories. `L∞` entries are maxima over
/// the compared snapshots, `L²` entries trapezoidal sums.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryDistance {
    pub linf_h_phi: f64,
    pub l2_v_mu: f64,
    pub l2_h_mu: f64,
    pub l2_h_phi: f64,
    pub linf_h_sigma: f64,
    pub l2_v_sigma: f64,
    /// `sup_t |(ε₁μ₁ + φ₁) − (ε₂μ₂ + φ₂)|_{V*}`
    pub linf_vstar_combo: f64,
    pub linf_vstar_phi: f64,
}

/// Which combination of distance components a limit estimate controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormBundle {
    /// `L∞(H)` and `L²(V)` norms of φ, μ (L²(V) only) and σ, for `ε → 0`.
    EpsLimit,
    /// `L∞(V*)` of `εμ + φ`, `L²(H)` of φ and μ, `L∞(H) ∩ L²(V)` of σ, for `τ → 0`.
    TauLimit,
    /// `L∞(V*) ∩ L²(H)` of φ and `L∞(H) ∩ L²(V)` of σ, for the joint limit.
    Joint,
}

impl NormBundle {
    pub fn name(&self) -> &'static str {
        match self {
            NormBundle::EpsLimit => "eps-limit",
            NormBundle::TauLimit => "tau-limit",
            NormBundle::Joint => "joint-limit",
        }
    }
}

impl TrajectoryDistance {
    pub const FIELDS: [&'static str; 8] = [
        "linf_h_phi",
        "l2_v_mu",
        "l2_h_mu",
        "l2_h_phi",
        "linf_h_sigma",
        "l2_v_sigma",
        "linf_vstar_combo",
        "linf_vstar_phi",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.linf_h_phi,
            self.l2_v_mu,
            self.l2_h_mu,
            self.l2_h_phi,
            self.linf_h_sigma,
            self.l2_v_sigma,
            self.linf_vstar_combo,
            self.linf_vstar_phi,
        ]
    }

    /// Sum of the components controlled by `bundle`.
    pub fn total(&self, bundle: NormBundle) -> f64 {
        match bundle {
            NormBundle::EpsLimit => self.linf_h_phi + self.l2_v_mu + self.linf_h_sigma + self.l2_v_sigma,
            NormBundle::TauLimit => {
                self.linf_vstar_combo + self.l2_h_phi + self.l2_h_mu + self.linf_h_sigma + self.l2_v_sigma
            }
            NormBundle::Joint => self.linf_vstar_phi + self.l2_h_phi + self.linf_h_sigma + self.l2_v_sigma,
        }
    }
}

/// Pairs each snapshot of `a` with the nearest snapshot of `b`; fails if any
/// pair is further apart than half a step.
fn align<'a>(a: &'a Trajectory, b: &'a Trajectory) -> Result<Vec<(&'a State, &'a State)>> {
    if a.snapshots.is_empty() || b.snapshots.is_empty() {
        return Err(Error::Comparison("empty trajectory".into()));
    }
    if a.snapshots[0].phi.grid() != b.snapshots[0].phi.grid() {
        return Err(Error::Comparison("trajectories live on different grids".into()));
    }
    let half = 0.5 * a.dt.min(b.dt);
    let tb: Vec<f64> = b.snapshots.iter().map(|s| s.t).collect();
    a.snapshots
        .iter()
        .map(|sa| {
            let k = tb.partition_point(|&t| t < sa.t);
            let candidates = [k.saturating_sub(1), k.min(tb.len() - 1)];
            let best = candidates
                .into_iter()
                .min_by(|&i, &j| (tb[i] - sa.t).abs().total_cmp(&(tb[j] - sa.t).abs()))
                .unwrap();
            if (tb[best] - sa.t).abs() > half * (1.0 + 1e-9) {
                return Err(Error::Comparison(format!(
                    "no snapshot within dt/2 of t = {} (nearest {})",
                    sa.t, tb[best]
                )));
            }
            Ok((sa, &b.snapshots[best]))
        })
        .collect()
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(tt, vv)| 0.5 * (tt[1] - tt[0]) * (vv[0] + vv[1]))
        .sum()
}

pub fn distance(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryDistance> {
    let pairs = align(a, b)?;
    let n = pairs.len();
    let mut t = Vec::with_capacity(n);
    let mut mu_v = Vec::with_capacity(n);
    let mut mu_h = Vec::with_capacity(n);
    let mut phi_h2 = Vec::with_capacity(n);
    let mut sigma_v = Vec::with_capacity(n);
    let mut d = TrajectoryDistance::default();
    for (sa, sb) in pairs {
        t.push(sa.t);
        let dphi = &sa.phi - &sb.phi;
        let dmu = &sa.mu - &sb.mu;
        let dsigma = &sa.sigma - &sb.sigma;
        let combo = &(&sa.mu.scaled(a.eps) + &sa.phi) - &(&sb.mu.scaled(b.eps) + &sb.phi);
        let phi_h = norm_h(&dphi);
        d.linf_h_phi = d.linf_h_phi.max(phi_h);
        d.linf_h_sigma = d.linf_h_sigma.max(norm_h(&dsigma));
        d.linf_vstar_combo = d.linf_vstar_combo.max(norm_vstar(&combo)?);
        d.linf_vstar_phi = d.linf_vstar_phi.max(norm_vstar(&dphi)?);
        phi_h2.push(phi_h * phi_h);
        mu_v.push(norm_v(&dmu).powi(2));
        mu_h.push(norm_h(&dmu).powi(2));
        sigma_v.push(norm_v(&dsigma).powi(2));
    }
    d.l2_v_mu = trapezoid(&t, &mu_v).sqrt();
    d.l2_h_mu = trapezoid(&t, &mu_h).sqrt();
    d.l2_h_phi = trapezoid(&t, &phi_h2).sqrt();
    d.l2_v_sigma = trapezoid(&t, &sigma_v).sqrt();
    Ok(d)
}

/// `sqrt(∫₀ᵀ |φ(t)|²_H dt)` of one trajectory.
pub fn l2_h_norm(traj: &Trajectory, field: impl Fn(&State) -> &Field) -> f64 {
    let t: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let v: Vec<f64> = traj.snapshots.iter().map(|s| norm_h(field(s)).powi(2)).collect();
    trapezoid(&t, &v).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub index: usize,
    pub x: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleProbe {
    pub pass: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub first_violation: Option<Violation>,
}

pub const MAX_PRINCIPLE_TOLERANCE: f64 = 1e-10;

/// Checks `0 ≤ σ ≤ 1` (within `1e-10`) on every snapshot.
pub fn probe_max_principle(traj: &Trajectory) -> MaxPrincipleProbe {
    let mut probe = MaxPrincipleProbe {
        pass: true,
        sigma_min: f64::INFINITY,
        sigma_max: f64::NEG_INFINITY,
        first_violation: None,
    };
    for s in &traj.snapshots {
        probe.sigma_min = probe.sigma_min.min(s.sigma.min());
        probe.sigma_max = probe.sigma_max.max(s.sigma.max());
        if probe.first_violation.is_none() {
            let bad = s
                .sigma
                .values()
                .iter()
                .position(|&v| v < -MAX_PRINCIPLE_TOLERANCE || v > 1.0 + MAX_PRINCIPLE_TOLERANCE);
            if let Some(i) = bad {
                probe.pass = false;
                probe.first_violation = Some(Violation {
                    t: s.t,
                    index: i,
                    x: s.sigma.grid().center(i),
                    value: s.sigma.values()[i],
                });
            }
        }
    }
    probe
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationProbe {
    pub pass: bool,
    /// `max_t |φ(t)|_∞`
    pub r_star: f64,
}

/// Passes iff `max_t |φ(t)|_∞ < ℓ − 1e-6`.
pub fn probe_separation(traj: &Trajectory, ell: f64) -> SeparationProbe {
    let r_star = traj
        .snapshots
        .iter()
        .map(|s| s.phi.sup_norm())
        .fold(0.0, f64::max);
    SeparationProbe {
        pass: r_star < ell - 1e-6,
        r_star,
    }
}

/// Largest `|mass_balance_residual| / (1 + |mass|)` over the recorded steps.
pub fn worst_mass_balance(traj: &Trajectory) -> f64 {
    traj.diagnostics
        .windows(2)
        .map(|w| w[1].mass_balance_residual.abs() / (1.0 + w[0].mass.abs()))
        .fold(0.0, f64::max)
}

/// Largest per-step increase of the Lyapunov functional.
pub fn worst_lyapunov_increase(traj: &Trajectory) -> f64 {
    traj.diagnostics
        .windows(2)
        .map(|w| w[1].lyapunov - w[0].lyapunov)
        .fold(f64::NEG_INFINITY, f64::max)
}
