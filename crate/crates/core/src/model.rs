//! First-order implicit–explicit time stepping for the phase / chemical
//! potential / nutrient system, valid for every `ε, τ ≥ 0`.
//!
//! Per step, with `S = (Pσ − A)h(φ)`:
//!
//! ```text
//! ε(μ⁺ − μ) + (φ⁺ − φ) − dt Δμ⁺ = dt S
//! μ⁺ = (τ/dt)(φ⁺ − φ) + aφ⁺ + F1'_λ(φ⁺) + F2'(φ) − J*φ − χσ
//! (1/dt + B + C h(φ⁺)) σ⁺ − Δσ⁺ = σ/dt + B σ_S − η Δφ⁺
//! ```
//!
//! The convex parts (`aφ`, the Yosida term, diffusion) are implicit and the
//! concave ones (`−J*φ` for a positive-definite kernel, `F2'`) explicit, so
//! the discrete Lyapunov functional is non-increasing when the sources are
//! switched off. The first line is solved by Newton's method on `φ⁺`; each
//! linearized system is symmetric positive definite in `δμ`.

use std::fmt;
use std::sync::Arc;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, laplacian_neumann, mean, solve_shifted, Field, Grid};
use crate::grid::inclusion_constant;
use crate::kernel::{EpsilonZero, KernelBundle};
use crate::linalg::{pcg, SpectralPreconditioner};
use crate::potential::{check_dominance, check_growth, PotentialSpec, INVARIANT_RANGE};

/// Absolute Newton tolerance on the mass-equation residual in `H`.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 50;
const LINEAR_TOLERANCE: f64 = 1e-13;

/// Proliferation function `h`: bounded, nonnegative and Lipschitz.
#[derive(Clone)]
pub enum Proliferation {
    /// `clamp((1 + r)/2, 0, 1)`
    Default,
    Constant(f64),
    /// `(1 + tanh r)/2`
    Tanh,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Proliferation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proliferation::Default => write!(f, "Default"),
            Proliferation::Constant(c) => write!(f, "Constant({c})"),
            Proliferation::Tanh => write!(f, "Tanh"),
            Proliferation::Custom(_) => write!(f, "Custom"),
        }
    }
}

pub fn h_default(r: f64) -> f64 {
    (0.5 * (1.0 + r)).clamp(0.0, 1.0)
}

impl Proliferation {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Proliferation::Default => h_default(r),
            Proliferation::Constant(c) => *c,
            Proliferation::Tanh => 0.5 * (1.0 + r.tanh()),
            Proliferation::Custom(f) => f(r),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Proliferation::Default => "default".into(),
            Proliferation::Constant(c) => format!("constant:{c}"),
            Proliferation::Tanh => "tanh".into(),
            Proliferation::Custom(_) => "custom".into(),
        }
    }
}

/// Nutrient supply `σ_S` as a piecewise-constant schedule in time: piece `k`
/// is active on `[start_k, start_{k+1})`.
#[derive(Debug, Clone)]
pub struct SupplySchedule {
    pieces: Vec<(f64, Field)>,
}

impl SupplySchedule {
    pub fn constant(field: Field) -> Self {
        SupplySchedule {
            pieces: vec![(0.0, field)],
        }
    }

    pub fn uniform(grid: &Grid, value: f64) -> Self {
        Self::constant(Field::constant(grid, value))
    }

    /// Pieces must start at `t = 0` and have strictly increasing start times.
    pub fn piecewise(pieces: Vec<(f64, Field)>) -> Result<Self> {
        if pieces.is_empty() || pieces[0].0 != 0.0 {
            return Err(Error::config("supply schedule must start at t = 0"));
        }
        if pieces.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("supply schedule start times must increase"));
        }
        Ok(SupplySchedule { pieces })
    }

    pub fn at(&self, t: f64) -> &Field {
        let k = self.pieces.partition_point(|(s, _)| *s <= t).max(1) - 1;
        &self.pieces[k].1
    }

    pub fn fields(&self) -> impl Iterator<Item = &Field> {
        self.pieces.iter().map(|(_, f)| f)
    }
}

/// Which `φ` the nutrient equation sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Freshly updated `φ⁺`.
    GaussSeidel,
    /// Previous `φ`.
    Jacobi,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub eps: f64,
    pub tau: f64,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub chi: f64,
    pub eta: f64,
    pub sigma_s: SupplySchedule,
    pub h: Proliferation,
    /// User Yosida parameter.
    pub lambda: f64,
    /// Use `min(lambda, dt)` per step instead of `lambda`.
    pub lambda_follows_dt: bool,
    pub dt: f64,
    pub t_final: f64,
    pub ordering: Ordering,
}

impl ModelParams {
    /// Source-free parameters: all rates zero, `σ_S ≡ 0`, `h` default.
    pub fn source_free(grid: &Grid, eps: f64, tau: f64, dt: f64, t_final: f64) -> Self {
        ModelParams {
            eps,
            tau,
            p: 0.0,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            chi: 0.0,
            eta: 0.0,
            sigma_s: SupplySchedule::uniform(grid, 0.0),
            h: Proliferation::Default,
            lambda: 1e-3,
            lambda_follows_dt: true,
            dt,
            t_final,
            ordering: Ordering::GaussSeidel,
        }
    }

    /// Yosida parameter actually used by the stepper.
    pub fn lambda_eff(&self) -> f64 {
        if self.lambda_follows_dt {
            self.lambda.min(self.dt)
        } else {
            self.lambda
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Sign and range conditions on the coefficients and supply, plus
    /// time-grid sanity.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("tau", self.tau),
            ("P", self.p),
            ("A", self.a),
            ("B", self.b),
            ("C", self.c),
            ("chi", self.chi),
            ("eta", self.eta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::assumption(
                    "A1",
                    format!("{name} must be a nonnegative constant, got {v}"),
                ));
            }
        }
        for f in self.sigma_s.fields() {
            if f.min() < 0.0 || f.max() > 1.0 {
                return Err(Error::assumption(
                    "A3",
                    format!("sigma_S must lie in [0, 1], found range [{}, {}]", f.min(), f.max()),
                ));
            }
        }
        if let Proliferation::Constant(c) = self.h {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::assumption("A2", format!("h must be nonnegative, got {c}")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config(format!("T must be nonnegative, got {}", self.t_final)));
        }
        let n = self.steps() as f64;
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::config(format!(
                "T = {} is not a whole number of steps of dt = {}",
                self.t_final, self.dt
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub phi: Field,
    pub mu: Field,
    pub sigma: Field,
    /// `F1'_λ(φ)`.
    pub xi: Field,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub phi0: Field,
    pub mu0: Field,
    pub sigma0: Field,
}

/// Solves `v + s (I − Δ) v = target`; `s = 0` returns the target.
pub fn make_smoothed_ic(target: &Field, s: f64) -> Result<Field> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::config(format!("smoothing parameter must be nonnegative, got {s}")));
    }
    if s == 0.0 {
        return Ok(target.clone());
    }
    solve_shifted(target, 1.0 + s, s, crate::grid::CG_TOLERANCE)
}

/// Summary of one accepted step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub newton_residual: f64,
    /// `mean(εμ⁺ + φ⁺) − mean(εμ + φ) − dt mean((Pσ − A)h(φ))`.
    pub mass_balance_residual: f64,
    /// `mean(εμ + φ)` before the step.
    pub mass_before: f64,
}

/// Admission factor applied to `ε₀`: a positive `ε` must stay below
/// `EPS0_SAFETY · ε₀`.
pub const EPS0_SAFETY: f64 = 0.9;
/// Upper bound on `τ`.
pub const TAU0: f64 = 1.0;

/// Structural constants behind the well-posedness and limit hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypotheses {
    /// `inf a_* + F''`.
    pub c0: f64,
    /// Norm of the inclusion `H ↪ V*`, measured on the grid.
    pub k0: f64,
    pub eps0: EpsilonZero,
    /// `C_F` of the growth bound when `D(∂F1) = R`.
    pub growth: Option<f64>,
}

impl Hypotheses {
    /// Computes the constants and checks the hypotheses that apply to
    /// `(ε, τ)`: dominance always; `ε < 0.9 ε₀` when `ε > 0`; `τ < 1`; the
    /// χ compatibility inequality when `τ = 0`; `η = 0` and the growth bound
    /// when `ε = 0`.
    pub fn check(bundle: &KernelBundle, potential: &PotentialSpec, params: &ModelParams) -> Result<Self> {
        let c0 = check_dominance(potential, bundle)?.c0;
        let k0 = inclusion_constant(bundle.grid())?;
        let eps0 = bundle.epsilon_zero(c0, k0)?;
        let growth = match check_growth(potential, INVARIANT_RANGE) {
            Ok(g) => Some(g),
            Err(Error::Inapplicable(_)) => None,
            Err(e) => return Err(e),
        };
        let h = Hypotheses { c0, k0, eps0, growth };
        let p = params;
        if p.eps > 0.0 && p.eps >= EPS0_SAFETY * eps0.value {
            return Err(Error::assumption(
                "eps < eps0",
                format!(
                    "eps = {} must be below {EPS0_SAFETY}·eps0 = {:.6} (eps0 = {:.6})",
                    p.eps,
                    EPS0_SAFETY * eps0.value,
                    eps0.value
                ),
            ));
        }
        if p.tau >= TAU0 {
            return Err(Error::assumption("tau < tau0", format!("tau = {} must be below {TAU0}", p.tau)));
        }
        if p.tau == 0.0 {
            h.check_ip_chi(bundle.c_a(), p.chi, p.eta)?;
        }
        if p.eps == 0.0 {
            if p.eta != 0.0 {
                return Err(Error::assumption(
                    "eta = 0",
                    format!("the eps = 0 system needs eta = 0, got {}", p.eta),
                ));
            }
            if h.growth.is_none() {
                return Err(Error::assumption(
                    "pol_growth",
                    format!("the {} potential has no finite growth constant", potential.name()),
                ));
            }
        }
        Ok(h)
    }

    /// `0 ≤ χ < √c_a` and `(χ + η + 4c_aχ)² < 8c_aC₀ + 4χη`.
    pub fn check_ip_chi(&self, c_a: f64, chi: f64, eta: f64) -> Result<()> {
        if chi >= c_a.sqrt() {
            return Err(Error::assumption(
                "ip_chi",
                format!("chi = {chi} must be below sqrt(c_a) = {:.6}", c_a.sqrt()),
            ));
        }
        let lhs = (chi + eta + 4.0 * c_a * chi).powi(2);
        let rhs = 8.0 * c_a * self.c0 + 4.0 * chi * eta;
        if lhs >= rhs {
            return Err(Error::assumption(
                "ip_chi",
                format!("(chi + eta + 4 c_a chi)^2 = {lhs:.6} must be below 8 c_a C0 + 4 chi eta = {rhs:.6}"),
            ));
        }
        Ok(())
    }
}

/// A fully specified problem: kernel, potential and parameters on one grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub bundle: Arc<KernelBundle>,
    pub potential: PotentialSpec,
    pub params: ModelParams,
    hypotheses: Hypotheses,
}

impl Model {
    pub fn new(bundle: Arc<KernelBundle>, potential: PotentialSpec, params: ModelParams) -> Result<Self> {
        potential.validate()?;
        params.validate()?;
        for f in params.sigma_s.fields() {
            if f.grid() != bundle.grid() {
                return Err(Error::Dimension("sigma_S lives on a different grid".into()));
            }
        }
        let hypotheses = Hypotheses::check(&bundle, &potential, &params)?;
        Ok(Model {
            bundle,
            potential,
            params,
            hypotheses,
        })
    }

    pub fn hypotheses(&self) -> &Hypotheses {
        &self.hypotheses
    }

    /// Same kernel, potential and coefficients with new `ε`, `τ`.
    pub fn with_relaxation(&self, eps: f64, tau: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.eps = eps;
        params.tau = tau;
        Model::new(self.bundle.clone(), self.potential.clone(), params)
    }

    /// Same problem with step `dt` (the horizon is kept).
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.dt = dt;
        Model::new(self.bundle.clone(), self.potential.clone(), params)
    }

    pub fn grid(&self) -> &Grid {
        self.bundle.grid()
    }

    /// Initial state; `ξ` is the Yosida value of `φ₀`.
    pub fn initial_state(&self, init: &InitialData) -> Result<State> {
        let g = self.grid();
        for (name, f) in [("phi0", &init.phi0), ("mu0", &init.mu0), ("sigma0", &init.sigma0)] {
            if f.grid() != g {
                return Err(Error::Dimension(format!("{name} lives on a different grid")));
            }
            if !f.is_finite() {
                return Err(Error::config(format!("{name} has non-finite values")));
            }
        }
        if let Some(r) = init.phi0.values().iter().find(|&&r| !self.potential.f_eval(r).is_finite()) {
            return Err(Error::assumption(
                "initial energy",
                format!("F(phi0) is infinite at phi0 = {r}"),
            ));
        }
        let lam = self.params.lambda_eff();
        Ok(State {
            t: 0.0,
            phi: init.phi0.clone(),
            mu: init.mu0.clone(),
            sigma: init.sigma0.clone(),
            xi: init.phi0.map(|r| self.potential.yosida(lam, r)),
        })
    }

    /// `(Pσ − A) h(φ)`
    pub fn mass_source(&self, phi: &Field, sigma: &Field) -> Field {
        let p = &self.params;
        let vals = phi
            .values()
            .iter()
            .zip(sigma.values())
            .map(|(&f, &s)| (p.p * s - p.a) * p.h.eval(f))
            .collect();
        Field::from_vec_unchecked(*phi.grid(), vals)
    }

    /// Advances `state` by one step of size `dt`.
    pub fn step(&self, state: &State) -> Result<(State, StepReport)> {
        let p = &self.params;
        let grid = *self.grid();
        let n = grid.len();
        let dt = p.dt;
        let lam = p.lambda_eff();
        let t_next = state.t + dt;
        let pot = &self.potential;
        let a = self.bundle.a_field().values();

        let phi = state.phi.values();
        let conv = self.bundle.convolve(&state.phi)?;
        let source = self.mass_source(&state.phi, &state.sigma);
        let visc = p.tau / dt;
        // μ⁺ = visc φ⁺ + a φ⁺ + Y(φ⁺) − explicit
        let explicit: Vec<f64> = (0..n)
            .map(|i| {
                visc * phi[i] + conv.values()[i] - pot.f2_prime(phi[i]) + p.chi * state.sigma.values()[i]
            })
            .collect();
        // right-hand side of the mass equation
        let target: Vec<f64> = (0..n)
            .map(|i| p.eps * state.mu.values()[i] + phi[i] + dt * source.values()[i])
            .collect();

        let mu_of = |phi_new: &[f64], mu: &mut [f64]| {
            for i in 0..n {
                mu[i] = (visc + a[i]) * phi_new[i] + pot.yosida(lam, phi_new[i]) - explicit[i];
            }
        };
        let mut lap = vec![0.0; n];
        let mut residual = |phi_new: &[f64], mu: &mut [f64], r: &mut [f64]| -> f64 {
            mu_of(phi_new, mu);
            apply_laplacian(&grid, mu, &mut lap);
            for i in 0..n {
                r[i] = p.eps * mu[i] + phi_new[i] - dt * lap[i] - target[i];
            }
            r.iter().map(|v| v * v).sum::<f64>().sqrt() * grid.cell_volume().sqrt()
        };

        let mut phi_new = phi.to_vec();
        let mut mu_new = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut rnorm = residual(&phi_new, &mut mu_new, &mut r);
        let mut history = vec![rnorm];
        let mut iterations = 0;
        let mut polished = false;
        let mut diag = vec![0.0; n];
        let mut slope = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut mu_trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        loop {
            if !rnorm.is_finite() {
                return Err(Error::Newton { t: t_next, history });
            }
            if rnorm <= NEWTON_TOLERANCE {
                // one extra iteration drives the residual to rounding level,
                // which is what the mass balance check sees
                if polished || rnorm <= 1e-14 {
                    break;
                }
                polished = true;
            }
            if iterations == NEWTON_MAX_ITERATIONS {
                return Err(Error::Newton { t: t_next, history });
            }
            iterations += 1;
            // δμ = D δφ, D = visc + a + Y'(φ⁺); solve ((ε + 1/D) − dt Δ) δμ = −R
            for i in 0..n {
                let d = visc + a[i] + pot.yosida_derivative(lam, phi_new[i]);
                if !(d > 0.0) {
                    return Err(Error::config(format!(
                        "phase equation is degenerate at cell {i}: tau/dt + a + F1''_lambda = {d}; \
                         use tau > 0 or a kernel with a > 0"
                    )));
                }
                slope[i] = d;
                diag[i] = p.eps + 1.0 / d;
            }
            let shift = diag.iter().sum::<f64>() / n as f64;
            let pre = SpectralPreconditioner::new(&grid, shift, dt);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            w.iter_mut().for_each(|v| *v = 0.0);
            pcg(
                |x, out| {
                    apply_laplacian(&grid, x, out);
                    for i in 0..n {
                        out[i] = diag[i] * x[i] - dt * out[i];
                    }
                },
                |x, z| pre.apply(x, z),
                &rhs,
                &mut w,
                LINEAR_TOLERANCE,
                50 * grid.max_cells(),
                false,
            )?;
            // backtracking on the residual norm
            let mut alpha = 1.0;
            loop {
                for i in 0..n {
                    trial[i] = phi_new[i] + alpha * w[i] / slope[i];
                }
                let tn = residual(&trial, &mut mu_trial, &mut r_trial);
                if tn < rnorm || alpha < 1e-3 || (tn <= NEWTON_TOLERANCE && alpha == 1.0) {
                    std::mem::swap(&mut phi_new, &mut trial);
                    std::mem::swap(&mut mu_new, &mut mu_trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    rnorm = tn;
                    break;
                }
                alpha *= 0.5;
            }
            history.push(rnorm);
        }

        let phi_plus = Field::from_vec_unchecked(grid, phi_new);
        let mu_plus = Field::from_vec_unchecked(grid, mu_new);
        if pot.ell().is_finite() {
            let ell = pot.ell();
            if let Some(i) = phi_plus
                .values()
                .iter()
                .position(|&r| pot.resolvent(lam, r).abs() >= ell)
            {
                return Err(Error::assumption(
                    "barrier safety",
                    format!("resolvent of phi left (-ell, ell) at cell {i}"),
                ));
            }
        }

        let sigma_plus = self.nutrient_step(state, &phi_plus, t_next)?;
        let xi = phi_plus.map(|r| pot.yosida(lam, r));

        let mass_before = mean(&state.mu) * p.eps + mean(&state.phi);
        let mass_after = mean(&mu_plus) * p.eps + mean(&phi_plus);
        let report = StepReport {
            newton_iterations: iterations,
            newton_residual: rnorm,
            mass_balance_residual: mass_after - mass_before - dt * mean(&source),
            mass_before,
        };
        let next = State {
            t: t_next,
            phi: phi_plus,
            mu: mu_plus,
            sigma: sigma_plus,
            xi,
        };
        if !(next.phi.is_finite() && next.mu.is_finite() && next.sigma.is_finite()) {
            return Err(Error::Newton {
                t: t_next,
                history: vec![f64::NAN],
            });
        }
        Ok((next, report))
    }

    fn nutrient_step(&self, state: &State, phi_plus: &Field, t_next: f64) -> Result<Field> {
        let p = &self.params;
        let grid = *self.grid();
        let n = grid.len();
        let dt = p.dt;
        let phi_used = match p.ordering {
            Ordering::GaussSeidel => phi_plus,
            Ordering::Jacobi => &state.phi,
        };
        let supply = p.sigma_s.at(t_next).values();
        let diag: Vec<f64> = phi_used
            .values()
            .iter()
            .map(|&f| 1.0 / dt + p.b + p.c * p.h.eval(f))
            .collect();
        let lap_phi = if p.eta != 0.0 {
            Some(laplacian_neumann(phi_used))
        } else {
            None
        };
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let cross = lap_phi.as_ref().map_or(0.0, |l| p.eta * l.values()[i]);
                state.sigma.values()[i] / dt + p.b * supply[i] - cross
            })
            .collect();
        let shift = diag.iter().sum::<f64>() / n as f64;
        let pre = SpectralPreconditioner::new(&grid, shift, 1.0);
        let mut x = state.sigma.values().to_vec();
        pcg(
            |v, out| {
                apply_laplacian(&grid, v, out);
                for i in 0..n {
                    out[i] = diag[i] * v[i] - out[i];
                }
            },
            |r, z| pre.apply(r, z),
            &rhs,
            &mut x,
            LINEAR_TOLERANCE,
            50 * grid.max_cells(),
            false,
        )?;
        Ok(Field::from_vec_unchecked(grid, x))
    }

    /// Integrates from `init` to `T`, recording diagnostics every step and
    /// snapshots every `options.snapshot_stride` steps (plus the final
    /// state).
    pub fn run(
        &self,
        init: &InitialData,
        options: &RunOptions,
        observers: &mut [&mut dyn Observer],
    ) -> std::result::Result<Trajectory, RunFailure> {
        let p = &self.params;
        let mut traj = Trajectory {
            eps: p.eps,
            tau: p.tau,
            dt: p.dt,
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
        };
        let fail = |error: Error, traj: Trajectory| RunFailure {
            error,
            partial: Box::new(traj),
        };
        let mut state = match self.initial_state(init) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, traj)),
        };
        let record0 = diagnostics::record(self, &state, None, options.record_lyapunov);
        for o in observers.iter_mut() {
            if let Err(e) = o.observe(&state, &record0) {
                return Err(fail(e, traj));
            }
        }
        traj.diagnostics.push(record0);
        traj.snapshots.push(state.clone());
        let steps = p.steps();
        let stride = options.snapshot_stride.max(1);
        for k in 1..=steps {
            let (mut next, report) = match self.step(&state) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, traj)),
            };
            // avoid drift from repeated addition
            next.t = k as f64 * p.dt;
            let rec = diagnostics::record(self, &next, Some(&report), options.record_lyapunov);
            for o in observers.iter_mut() {
                if let Err(e) = o.observe(&next, &rec) {
                    return Err(fail(e, traj));
                }
            }
            traj.diagnostics.push(rec);
            if k % stride == 0 || k == steps {
                traj.snapshots.push(next.clone());
            }
            state = next;
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Keep every `snapshot_stride`-th state (the initial and final states
    /// are always kept).
    pub snapshot_stride: usize,
    pub record_lyapunov: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            snapshot_stride: 1,
            record_lyapunov: true,
        }
    }
}

/// Per-step callback.
pub trait Observer {
    fn observe(&mut self, state: &State, record: &DiagnosticsRecord) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub eps: f64,
    pub tau: f64,
    pub dt: f64,
    pub snapshots: Vec<State>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.snapshots.last().expect("trajectory has at least the initial state")
    }
}

/// A run that stopped early, with everything computed up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.partial.snapshots.last().map_or(0.0, |s| s.t);
        write!(f, "{} (last recorded t = {t})", self.error)
    }
}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    fn bundle(n: usize) -> Arc<KernelBundle> {
        let g = Grid::new_1d(n, 1.0).unwrap();
        Arc::new(KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), &g).unwrap())
    }

    #[test]
    fn h_default_values() {
        assert_eq!(h_default(1.0), 1.0);
        assert_eq!(h_default(-1.0), 0.0);
        assert_eq!(h_default(0.0), 0.5);
        assert_eq!(h_default(5.0), 1.0);
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let b = bundle(32);
        let g = *b.grid();
        let pot = PotentialSpec::polynomial();
        let params = ModelParams::source_free(&g, 0.1, 0.1, 1e-2, 0.1);
        let c = 0.3;
        let lam = params.lambda_eff();
        let model = Model::new(b, pot.clone(), params).unwrap();
        let init = InitialData {
            phi0: Field::constant(&g, c),
            mu0: Field::constant(&g, pot.f_prime_regularized(lam, c)),
            sigma0: Field::constant(&g, 0.4),
        };
        let s0 = model.initial_state(&init).unwrap();
        let (s1, _) = model.step(&s0).unwrap();
        assert!((&s1.phi - &s0.phi).sup_norm() < 1e-12);
        assert!((&s1.mu - &s0.mu).sup_norm() < 1e-12);
        assert!((&s1.sigma - &s0.sigma).sup_norm() < 1e-12);
    }

    #[test]
    fn nutrient_relaxes_to_supply() {
        let b = bundle(16);
        let g = *b.grid();
        let mut params = ModelParams::source_free(&g, 0.1, 0.1, 1e-3, 0.2);
        params.b = 1.0;
        params.sigma_s = SupplySchedule::uniform(&g, 1.0);
        let model = Model::new(b, PotentialSpec::polynomial(), params).unwrap();
        let init = InitialData {
            phi0: Field::constant(&g, 0.0),
            mu0: Field::zeros(&g),
            sigma0: Field::zeros(&g),
        };
        let traj = model.run(&init, &RunOptions::default(), &mut []).unwrap();
        for s in &traj.snapshots {
            let exact = 1.0 - (-s.t).exp();
            assert!((s.sigma.max() - exact).abs() < 1e-4);
            assert!(s.sigma.max() - s.sigma.min() < 1e-12);
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_state() {
        let b = bundle(16);
        let g = *b.grid();
        let params = ModelParams::source_free(&g, 0.1, 0.1, 1e-3, 0.0);
        let model = Model::new(b, PotentialSpec::polynomial(), params).unwrap();
        let init = InitialData {
            phi0: Field::from_fn(&g, |x| 0.1 * x[0]),
            mu0: Field::zeros(&g),
            sigma0: Field::zeros(&g),
        };
        let traj = model.run(&init, &RunOptions::default(), &mut []).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].phi, init.phi0);
    }

    #[test]
    fn smoothing_of_constants() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let c = Field::constant(&g, 2.0);
        assert_eq!(make_smoothed_ic(&c, 0.0).unwrap(), c);
        let v = make_smoothed_ic(&c, 0.5).unwrap();
        assert!((v.max() - 2.0 / 1.5).abs() < 1e-10 && (v.min() - 2.0 / 1.5).abs() < 1e-10);
    }

    #[test]
    fn negative_rates_rejected() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let mut p = ModelParams::source_free(&g, 0.1, 0.1, 1e-3, 0.1);
        p.b = -1.0;
        assert!(matches!(p.validate(), Err(Error::Assumption { .. })));
        let mut p = ModelParams::source_free(&g, 0.1, 0.1, 1e-3, 0.1);
        p.sigma_s = SupplySchedule::uniform(&g, 1.5);
        assert!(matches!(p.validate(), Err(Error::Assumption { .. })));
    }

    #[test]
    fn supply_schedule_lookup() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let s = SupplySchedule::piecewise(vec![
            (0.0, Field::constant(&g, 0.1)),
            (0.5, Field::constant(&g, 0.9)),
        ])
        .unwrap();
        assert_eq!(s.at(0.2).max(), 0.1);
        assert_eq!(s.at(0.5).max(), 0.9);
        assert_eq!(s.at(3.0).max(), 0.9);
        assert!(SupplySchedule::piecewise(vec![(0.1, Field::zeros(&g))]).is_err());
    }

    fn assumption_name(r: Result<Model>) -> String {
        match r {
            Err(Error::Assumption { name, .. }) => name,
            other => panic!("expected an assumption failure, got {other:?}"),
        }
    }

    #[test]
    fn hypothesis_gate() {
        let b = bundle(64);
        let g = *b.grid();
        let ok = Model::new(b.clone(), PotentialSpec::polynomial(), ModelParams::source_free(&g, 0.1, 0.1, 1e-3, 0.1))
            .unwrap();
        let h = *ok.hypotheses();
        assert!(h.c0 > 0.0 && (h.k0 - 1.0).abs() < 1e-6 && h.growth.is_some());

        let eps = 2.0 * h.eps0.value;
        let r = Model::new(b.clone(), PotentialSpec::polynomial(), ModelParams::source_free(&g, eps, 0.1, 1e-3, 0.1));
        assert_eq!(assumption_name(r), "eps < eps0");

        let mut p = ModelParams::source_free(&g, 0.1, 0.0, 1e-3, 0.1);
        p.chi = 10.0;
        assert_eq!(assumption_name(Model::new(b.clone(), PotentialSpec::polynomial(), p)), "ip_chi");

        let mut p = ModelParams::source_free(&g, 0.0, 0.1, 1e-3, 0.1);
        p.eta = 0.1;
        assert_eq!(assumption_name(Model::new(b.clone(), PotentialSpec::polynomial(), p)), "eta = 0");

        let p = ModelParams::source_free(&g, 0.0, 0.1, 1e-3, 0.1);
        let r = Model::new(b.clone(), PotentialSpec::logarithmic(0.3, 0.6), p);
        assert_eq!(assumption_name(r), "pol_growth");

        let p = ModelParams::source_free(&g, 0.1, 1.0, 1e-3, 0.1);
        assert_eq!(assumption_name(Model::new(b, PotentialSpec::polynomial(), p)), "tau < tau0");
    }

    #[test]
    fn weak_kernel_fails_dominance() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let b = Arc::new(KernelBundle::build(KernelSpec::gaussian(0.05, 1.0), &g).unwrap());
        let r = Model::new(b, PotentialSpec::polynomial(), ModelParams::source_free(&g, 0.01, 0.1, 1e-3, 0.1));
        assert_eq!(assumption_name(r), "A5 dominance");
    }
}
