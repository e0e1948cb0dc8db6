//! Spectral Faedo–Galerkin integrator on an interval, used as an independent
//! check of the finite-difference stepper.
//!
//! Unknowns are the coefficients of `φ, μ, σ` in the Neumann cosine basis
//! `e_0 = L^{-1/2}`, `e_j = (2/L)^{1/2} cos(jπx/L)` with eigenvalues
//! `l_j = (jπ/L)²`. Nonlinear terms are evaluated pointwise on the shared
//! cell-centered grid and projected back with midpoint weights, under which
//! the sampled basis is exactly orthonormal for `j < cells`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{InitialData, Model};
use crate::ode::{self, OdeStats, Tolerances};

/// Sampled Neumann eigenfunctions.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid,
    modes: usize,
    /// `samples[j][i] = e_j(x_i)`
    samples: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(grid: &Grid, modes: usize) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Inapplicable("the spectral oracle is one-dimensional".into()));
        }
        if modes == 0 || modes > grid.cells(0) {
            return Err(Error::config(format!(
                "mode count must be in 1..={} for this grid, got {modes}",
                grid.cells(0)
            )));
        }
        let l = grid.extent(0);
        let samples = (0..modes)
            .map(|j| {
                (0..grid.len())
                    .map(|i| {
                        let x = grid.center(i)[0];
                        if j == 0 {
                            1.0 / l.sqrt()
                        } else {
                            (2.0 / l).sqrt() * (j as f64 * PI * x / l).cos()
                        }
                    })
                    .collect()
            })
            .collect();
        let eigenvalues = (0..modes).map(|j| (j as f64 * PI / l).powi(2)).collect();
        Ok(SpectralBasis {
            grid: *grid,
            modes,
            samples,
            eigenvalues,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode(&self, j: usize) -> Field {
        Field::from_vec_unchecked(self.grid, self.samples[j].clone())
    }

    /// `c_j = (f, e_j)_H`.
    pub fn project(&self, f: &Field) -> Result<Vec<f64>> {
        if f.grid() != &self.grid {
            return Err(Error::Dimension("projection grid mismatch".into()));
        }
        Ok(self.project_values(f.values()))
    }

    fn project_values(&self, v: &[f64]) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.samples
            .iter()
            .map(|e| e.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * vol)
            .collect()
    }

    fn reconstruct_into(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (cj, e) in c.iter().zip(&self.samples) {
            for (o, ei) in out.iter_mut().zip(e) {
                *o += cj * ei;
            }
        }
    }

    /// `Σ c_j e_j` sampled on the grid.
    pub fn reconstruct(&self, c: &[f64]) -> Field {
        let mut out = vec![0.0; self.grid.len()];
        self.reconstruct_into(c, &mut out);
        Field::from_vec_unchecked(self.grid, out)
    }
}

/// Coefficients of `φ`, `μ`, `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GalerkinState {
    fn pack(&self) -> Vec<f64> {
        [self.alpha.as_slice(), &self.beta, &self.gamma].concat()
    }

    fn unpack(y: &[f64], n: usize) -> Self {
        GalerkinState {
            alpha: y[..n].to_vec(),
            beta: y[n..2 * n].to_vec(),
            gamma: y[2 * n..].to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GalerkinState>,
    pub stats: OdeStats,
}

impl GalerkinTrajectory {
    /// CSV with columns `t, alpha_0.., beta_0.., gamma_0..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.states.first().map_or(0, |s| s.alpha.len());
        let mut header = vec!["t".to_string()];
        for name in ["alpha", "beta", "gamma"] {
            header.extend((0..n).map(|j| format!("{name}_{j}")));
        }
        out.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.pack().iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The Galerkin ODE for one model at a fixed Yosida parameter.
pub struct GalerkinSystem<'a> {
    model: &'a Model,
    basis: SpectralBasis,
    /// `(M_a − M_J)_{ij} = ∫ a e_j e_i − ∫ (J*e_j) e_i`, row-major.
    nonlocal: Vec<f64>,
    lambda: f64,
}

impl<'a> GalerkinSystem<'a> {
    /// Uses the model's kernel, potential, coefficients and effective Yosida
    /// parameter. Needs `ε > 0` and `τ > 0`.
    pub fn new(model: &'a Model, modes: usize) -> Result<Self> {
        let p = &model.params;
        if !(p.eps > 0.0 && p.tau > 0.0) {
            return Err(Error::Inapplicable(format!(
                "the Galerkin system needs eps > 0 and tau > 0 (got eps = {}, tau = {})",
                p.eps, p.tau
            )));
        }
        let basis = SpectralBasis::new(model.grid(), modes)?;
        let n = modes;
        let a = model.bundle.a_field();
        let mut nonlocal = vec![0.0; n * n];
        for j in 0..n {
            let ej = basis.mode(j);
            let conv = model.bundle.convolve(&ej)?;
            let col: Vec<f64> = (0..ej.values().len())
                .map(|k| a.values()[k] * ej.values()[k] - conv.values()[k])
                .collect();
            let proj = basis.project_values(&col);
            for i in 0..n {
                nonlocal[i * n + j] = proj[i];
            }
        }
        Ok(GalerkinSystem {
            model,
            basis,
            nonlocal,
            lambda: p.lambda_eff(),
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// `(M_a − M_J)` as a row-major `n × n` matrix.
    pub fn nonlocal_matrix(&self) -> &[f64] {
        &self.nonlocal
    }

    pub fn project_initial(&self, init: &InitialData) -> Result<GalerkinState> {
        Ok(GalerkinState {
            alpha: self.basis.project(&init.phi0)?,
            beta: self.basis.project(&init.mu0)?,
            gamma: self.basis.project(&init.sigma0)?,
        })
    }

    /// Time derivatives `(α̇, β̇, γ̇)` at time `t`.
    pub fn rhs(&self, t: f64, state: &GalerkinState) -> GalerkinState {
        let n = self.basis.modes;
        let mut dy = vec![0.0; 3 * n];
        let mut work = Workspace::new(self.basis.grid.len());
        self.rhs_packed(t, &state.pack(), &mut dy, &mut work);
        GalerkinState::unpack(&dy, n)
    }

    fn rhs_packed(&self, t: f64, y: &[f64], dy: &mut [f64], w: &mut Workspace) {
        let n = self.basis.modes;
        let p = &self.model.params;
        let pot = &self.model.potential;
        let (alpha, rest) = y.split_at(n);
        let (beta, gamma) = rest.split_at(n);
        self.basis.reconstruct_into(alpha, &mut w.phi);
        self.basis.reconstruct_into(gamma, &mut w.sigma);
        let supply = p.sigma_s.at(t).values();
        for i in 0..w.phi.len() {
            let f = w.phi[i];
            let h = p.h.eval(f);
            w.fprime[i] = pot.f_prime_regularized(self.lambda, f);
            w.source[i] = (p.p * w.sigma[i] - p.a) * h;
            w.uptake[i] = p.c * h * w.sigma[i] - p.b * supply[i];
        }
        let fp = self.basis.project_values(&w.fprime);
        let src = self.basis.project_values(&w.source);
        let upt = self.basis.project_values(&w.uptake);
        let l = &self.basis.eigenvalues;
        for i in 0..n {
            let m_alpha: f64 = (0..n).map(|j| self.nonlocal[i * n + j] * alpha[j]).sum();
            let alpha_dot = (beta[i] - m_alpha - fp[i] + p.chi * gamma[i]) / p.tau;
            dy[i] = alpha_dot;
            dy[n + i] = (src[i] - l[i] * beta[i] - alpha_dot) / p.eps;
            dy[2 * n + i] = -l[i] * gamma[i] - p.b * gamma[i] - upt[i] + p.eta * l[i] * alpha[i];
        }
    }

    /// Integrates to each of `times` (increasing, from 0).
    pub fn integrate(&self, init: &GalerkinState, times: &[f64], tol: Tolerances) -> Result<GalerkinTrajectory> {
        let n = self.basis.modes;
        let mut w = Workspace::new(self.basis.grid.len());
        let (ys, stats) = ode::integrate(
            |t, y, dy| {
                self.rhs_packed(t, y, dy, &mut w);
                if dy.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Stiffness { t, step: f64::NAN })
                }
            },
            0.0,
            &init.pack(),
            times,
            tol,
        )?;
        Ok(GalerkinTrajectory {
            times: times.to_vec(),
            states: ys.iter().map(|y| GalerkinState::unpack(y, n)).collect(),
            stats,
        })
    }

    /// `(φ, μ, σ)` on the grid.
    pub fn reconstruct(&self, s: &GalerkinState) -> (Field, Field, Field) {
        (
            self.basis.reconstruct(&s.alpha),
            self.basis.reconstruct(&s.beta),
            self.basis.reconstruct(&s.gamma),
        )
    }

    /// Residual of the zero-mode balance `d/dt(εβ₀ + α₀) = ((Pσ − A)h(φ), e₀)`
    /// at one state (exact up to rounding because `l₀ = 0`).
    pub fn mass_balance_residual(&self, t: f64, s: &GalerkinState) -> f64 {
        let n = self.basis.modes;
        let mut w = Workspace::new(self.basis.grid.len());
        let mut dy = vec![0.0; 3 * n];
        self.rhs_packed(t, &s.pack(), &mut dy, &mut w);
        let src0 = self.basis.project_values(&w.source)[0];
        (self.model.params.eps * dy[n] + dy[0] - src0).abs()
    }
}

/// Galerkin reconstruction against the finite-difference stepper on the
/// same grid, both sampled every `interval` up to the model's horizon.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub modes: usize,
    pub cells: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `‖(φ, μ, σ)_FD − (φ, μ, σ)_G‖_{L²(0,T;H)}`.
    pub error: f64,
    /// `‖(φ, μ, σ)_FD‖_{L²(0,T;H)}`.
    pub norm: f64,
    pub stats: OdeStats,
}

impl OracleComparison {
    pub fn relative(&self) -> f64 {
        self.error / self.norm
    }
}

/// Runs both integrators from `init` and compares them in `L²(0,T;H)`,
/// summed over the three fields, with trapezoidal weights in time.
pub fn compare_with_stepper(
    model: &Model,
    init: &InitialData,
    modes: usize,
    interval: f64,
    tol: Tolerances,
) -> Result<OracleComparison> {
    let p = &model.params;
    let stride = (interval / p.dt).round() as usize;
    if stride == 0 || ((stride as f64) * p.dt - interval).abs() > 1e-9 * interval {
        return Err(Error::config(format!(
            "comparison interval {interval} is not a whole number of steps of dt = {}",
            p.dt
        )));
    }
    let system = GalerkinSystem::new(model, modes)?;
    let options = crate::model::RunOptions {
        snapshot_stride: stride,
        record_lyapunov: false,
    };
    let fd = model.run(init, &options, &mut [])?;
    let times: Vec<f64> = fd.snapshots.iter().map(|s| s.t).collect();
    let g0 = system.project_initial(init)?;
    let gal = system.integrate(&g0, &times, tol)?;

    let mut err2 = Vec::with_capacity(times.len());
    let mut norm2 = Vec::with_capacity(times.len());
    for (s, g) in fd.snapshots.iter().zip(&gal.states) {
        let (phi, mu, sigma) = system.reconstruct(g);
        let mut e = 0.0;
        let mut n = 0.0;
        for (a, b) in [(&s.phi, &phi), (&s.mu, &mu), (&s.sigma, &sigma)] {
            let d = a.zip_map(b, |x, y| x - y)?;
            e += crate::grid::norm_h(&d).powi(2);
            n += crate::grid::norm_h(a).powi(2);
        }
        err2.push(e);
        norm2.push(n);
    }
    let trapezoid = |v: &[f64]| -> f64 {
        times
            .windows(2)
            .zip(v.windows(2))
            .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
            .sum::<f64>()
            .sqrt()
    };
    Ok(OracleComparison {
        modes,
        cells: model.grid().cells(0),
        dt: p.dt,
        error: trapezoid(&err2),
        norm: trapezoid(&norm2),
        times,
        stats: gal.stats,
    })
}

struct Workspace {
    phi: Vec<f64>,
    sigma: Vec<f64>,
    fprime: Vec<f64>,
    source: Vec<f64>,
    uptake: Vec<f64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Workspace {
            phi: vec![0.0; len],
            sigma: vec![0.0; len],
            fprime: vec![0.0; len],
            source: vec![0.0; len],
            uptake: vec![0.0; len],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_h;
    use crate::kernel::{KernelBundle, KernelSpec};
    use crate::model::{ModelParams, SupplySchedule};
    use crate::potential::PotentialSpec;
    use std::sync::Arc;

    fn model(cells: usize, eps: f64, tau: f64) -> Model {
        let g = Grid::new_1d(cells, 1.0).unwrap();
        let b = Arc::new(KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), &g).unwrap());
        let params = ModelParams::source_free(&g, eps, tau, 1e-3, 0.1);
        Model::new(b, PotentialSpec::polynomial(), params).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let g = Grid::new_1d(64, 2.0).unwrap();
        let b = SpectralBasis::new(&g, 64).unwrap();
        for i in 0..64 {
            let c = b.project(&b.mode(i)).unwrap();
            for (j, v) in c.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-10, "{i} {j} {v}");
            }
        }
    }

    #[test]
    fn constants_project_to_mode_zero() {
        let g = Grid::new_1d(32, 2.0).unwrap();
        let b = SpectralBasis::new(&g, 8).unwrap();
        let c = b.project(&Field::constant(&g, 3.0)).unwrap();
        assert!((c[0] - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn parseval_increases_with_modes() {
        let g = Grid::new_1d(128, 1.0).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] * 3.0).exp() * (5.0 * x[0]).sin());
        let mut prev = 0.0;
        for n in [2, 4, 8, 16, 32] {
            let b = SpectralBasis::new(&g, n).unwrap();
            let s: f64 = b.project(&f).unwrap().iter().map(|c| c * c).sum();
            assert!(s >= prev - 1e-14);
            assert!(s <= norm_h(&f).powi(2) * (1.0 + 1e-12));
            prev = s;
        }
    }

    #[test]
    fn rhs_for_pure_beta() {
        let m = model(32, 0.1, 0.2);
        let sys = GalerkinSystem::new(&m, 6).unwrap();
        let beta = vec![0.3, -0.2, 0.1, 0.0, 0.05, -0.4];
        let s = GalerkinState {
            alpha: vec![0.0; 6],
            beta: beta.clone(),
            gamma: vec![0.0; 6],
        };
        let d = sys.rhs(0.0, &s);
        let l = sys.basis().eigenvalues();
        for i in 0..6 {
            let ad = beta[i] / 0.2;
            assert!((d.alpha[i] - ad).abs() < 1e-14);
            assert!((d.beta[i] - (-l[i] * beta[i] - ad) / 0.1).abs() < 1e-10);
            assert_eq!(d.gamma[i], 0.0);
        }
    }

    #[test]
    fn nonlocal_matrix_is_symmetric() {
        let m = model(64, 0.1, 0.1);
        let sys = GalerkinSystem::new(&m, 12).unwrap();
        let k = sys.nonlocal_matrix();
        for i in 0..12 {
            for j in 0..12 {
                assert!((k[i * 12 + j] - k[j * 12 + i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_parameters_rejected() {
        let m = model(16, 0.0, 0.1);
        assert!(matches!(GalerkinSystem::new(&m, 4), Err(Error::Inapplicable(_))));
        let m = model(16, 0.1, 0.0);
        assert!(matches!(GalerkinSystem::new(&m, 4), Err(Error::Inapplicable(_))));
    }

    fn reaction_model(cells: usize) -> Model {
        let g = Grid::new_1d(cells, 2.0).unwrap();
        let b = Arc::new(KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), &g).unwrap());
        let mut params = ModelParams::source_free(&g, 0.05, 0.3, 1e-3, 0.1);
        params.p = 0.5;
        params.a = 0.2;
        params.b = 1.0;
        params.c = 0.5;
        params.chi = 0.1;
        params.sigma_s = SupplySchedule::uniform(&g, 0.8);
        Model::new(b, PotentialSpec::polynomial(), params).unwrap()
    }

    #[test]
    fn single_mode_matches_scalar_system() {
        let m = reaction_model(16);
        let sys = GalerkinSystem::new(&m, 1).unwrap();
        let root_l = 2f64.sqrt();
        let (phi0, mu0, sigma0) = (0.3, -0.1, 0.4);
        let init = GalerkinState {
            alpha: vec![phi0 * root_l],
            beta: vec![mu0 * root_l],
            gamma: vec![sigma0 * root_l],
        };
        let t_end = 0.5;
        let tr = sys
            .integrate(&init, &[t_end], Tolerances { rtol: 1e-10, atol: 1e-12 })
            .unwrap();

        // constants: a − J*1 vanishes, so the system is three scalar ODEs
        let p = &m.params;
        let lam = p.lambda_eff();
        let pot = &m.potential;
        let f = |y: [f64; 3]| {
            let h = crate::model::h_default(y[0]);
            let phi_dot = (y[1] - pot.f_prime_regularized(lam, y[0]) + p.chi * y[2]) / p.tau;
            [
                phi_dot,
                ((p.p * y[2] - p.a) * h - phi_dot) / p.eps,
                -p.b * (y[2] - 0.8) - p.c * y[2] * h,
            ]
        };
        let mut y = [phi0, mu0, sigma0];
        let steps = 20000;
        let dt = t_end / steps as f64;
        let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f(add(y, k1, dt / 2.0));
            let k3 = f(add(y, k2, dt / 2.0));
            let k4 = f(add(y, k3, dt));
            for i in 0..3 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let end = &tr.states[0];
        assert!((end.alpha[0] / root_l - y[0]).abs() < 1e-7, "{} {}", end.alpha[0] / root_l, y[0]);
        assert!((end.beta[0] / root_l - y[1]).abs() < 1e-7);
        assert!((end.gamma[0] / root_l - y[2]).abs() < 1e-7);
    }

    fn smooth_initial(sys: &GalerkinSystem) -> GalerkinState {
        let n = sys.basis().modes();
        let mut s = GalerkinState {
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
        };
        s.alpha[0] = 0.1;
        s.alpha[1] = 0.3;
        s.alpha[2] = -0.1;
        s.beta[1] = 0.05;
        s.gamma[0] = 0.5;
        s.gamma[3] = 0.1;
        s
    }

    #[test]
    fn tolerance_tightening_is_self_consistent() {
        let m = reaction_model(32);
        let sys = GalerkinSystem::new(&m, 8).unwrap();
        let init = smooth_initial(&sys);
        let loose = sys.integrate(&init, &[0.2], Tolerances { rtol: 1e-6, atol: 1e-8 }).unwrap();
        let tight = sys.integrate(&init, &[0.2], Tolerances { rtol: 1e-10, atol: 1e-12 }).unwrap();
        let diff = loose.states[0]
            .pack()
            .iter()
            .zip(tight.states[0].pack())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn zero_mode_balance() {
        let m = reaction_model(32);
        let sys = GalerkinSystem::new(&m, 8).unwrap();
        let init = smooth_initial(&sys);
        let tr = sys.integrate(&init, &[0.05, 0.1], Tolerances::default()).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!(sys.mass_balance_residual(*t, s) < 1e-12);
        }
    }

    #[test]
    fn coefficient_csv_layout() {
        let m = model(16, 0.1, 0.1);
        let sys = GalerkinSystem::new(&m, 2).unwrap();
        let z = GalerkinState {
            alpha: vec![0.0; 2],
            beta: vec![0.0; 2],
            gamma: vec![0.0; 2],
        };
        let tr = sys.integrate(&z, &[0.0, 0.1], Tolerances::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,alpha_0,alpha_1,beta_0,beta_1,gamma_0,gamma_1");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(16, 0.1, 0.1);
        let sys = GalerkinSystem::new(&m, 4).unwrap();
        let z = GalerkinState {
            alpha: vec![0.0; 4],
            beta: vec![0.0; 4],
            gamma: vec![0.0; 4],
        };
        let tr = sys.integrate(&z, &[0.05, 0.1], Tolerances::default()).unwrap();
        assert!(tr.states.iter().all(|s| s.pack().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stepper_comparison_is_close_on_a_short_horizon() {
        let g = Grid::new_1d(64, 1.0).unwrap();
        let bundle = Arc::new(KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), &g).unwrap());
        let mut p = ModelParams::source_free(&g, 0.1, 0.1, 1e-4, 0.02);
        p.p = 0.5;
        p.a = 0.2;
        p.b = 1.0;
        p.c = 0.5;
        p.chi = 0.1;
        p.sigma_s = SupplySchedule::uniform(&g, 1.0);
        let m = Model::new(bundle, PotentialSpec::polynomial(), p).unwrap();
        let init = InitialData {
            phi0: Field::from_fn(&g, |x| 0.1 + 0.3 * (PI * x[0]).cos()),
            mu0: Field::from_fn(&g, |x| 0.05 * (PI * x[0]).cos()),
            sigma0: Field::from_fn(&g, |x| 0.6 + 0.2 * (PI * x[0]).cos()),
        };
        let c = compare_with_stepper(&m, &init, 16, 0.005, Tolerances::default()).unwrap();
        assert_eq!(c.times.len(), 5);
        assert!(c.relative() < 5e-3, "{}", c.relative());
        assert!(compare_with_stepper(&m, &init, 16, 0.00015, Tolerances::default()).is_err());
    }
}
