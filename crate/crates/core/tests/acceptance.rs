//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured quantity. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlch_core::asymptotics::{default_bump, stability_probe, sweep, SweepMode, SweepPlan};
use nlch_core::config::RunConfig;
use nlch_core::diagnostics::{probe_max_principle, probe_separation, worst_lyapunov_increase, worst_mass_balance};
use nlch_core::grid::{Field, Grid};
use nlch_core::kernel::{KernelBundle, KernelFamily, KernelSpec, RadialTable};
use nlch_core::model::{InitialData, Model, ModelParams, RunOptions, SupplySchedule, Trajectory};
use nlch_core::potential::PotentialSpec;
use nlch_core::verify::{oracle_study, ORACLE_TOLERANCE};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn every_step() -> RunOptions {
    RunOptions {
        snapshot_stride: 1,
        record_lyapunov: true,
    }
}

fn run(model: &Model, init: &InitialData) -> Trajectory {
    model.run(init, &every_step(), &mut []).expect("acceptance run completes")
}

fn cosine(g: &Grid, terms: &[(f64, f64)], mean: f64) -> Field {
    let terms = terms.to_vec();
    Field::from_fn(g, move |x| mean + terms.iter().map(|(a, k)| a * (k * PI * x[0]).cos()).sum::<f64>())
}

/// Mass balance on runs with sources, both potentials, eta > 0 and 2D.
fn ac1() -> Verdict {
    let cases = [
        "",
        "[potential]\nfamily = logarithmic\n[ic]\nphi_amplitude = 0.5\n",
        "[model]\neta = 0.05\n",
        "[model]\ntau = 0\nt_final = 0.05\n",
        "[model]\neps = 0\nt_final = 0.05\n",
        "[grid]\ndim = 2\ncells = 32\n[model]\nt_final = 0.02\n",
    ];
    let mut worst = 0.0_f64;
    for text in cases {
        let cfg = RunConfig::parse(text).unwrap();
        let model = cfg.model().unwrap();
        let init = cfg.initial_data(&model).unwrap();
        worst = worst.max(worst_mass_balance(&run(&model, &init)));
    }
    verdict(
        worst <= 1e-12,
        format!("max relative residual {worst:.2e} over {} runs (<= 1e-12)", cases.len()),
    )
}

/// `0 ≤ σ ≤ 1` at every step from random nutrient data.
fn ac2() -> Verdict {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut pass = true;
    for seed in 0..3u64 {
        let mut cfg = RunConfig::parse(&format!(
            "[model]\neta = 0\ndt = 1e-3\nt_final = 1.0\n[ic]\nfamily = random_smoothed\nsmoothing = 1e-5\n\
             sigma_mean = 0.5\nsigma_amplitude = 0.5\nphi_amplitude = 0.5\nseed = {seed}\n"
        ))
        .unwrap();
        let g = cfg.grid;
        // spatially varying supply inside [0, 1]
        cfg.params.sigma_s = SupplySchedule::constant(Field::from_fn(&g, |x| 0.5 + 0.5 * (3.0 * PI * x[0]).cos()));
        let model = cfg.model().unwrap();
        let mut init = cfg.initial_data(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        init.sigma0 = Field::from_values(g, (0..g.len()).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
        let probe = probe_max_principle(&run(&model, &init));
        lo = lo.min(probe.sigma_min);
        hi = hi.max(probe.sigma_max);
        pass &= probe.pass;
    }
    verdict(pass, format!("sigma in [{lo:.3e}, {hi:.12}] over 3 seeds, 1000 steps each"))
}

fn sweep_base() -> (Model, Field, Field) {
    let cfg = RunConfig::parse("").unwrap();
    let (phi, sigma) = cfg.targets().unwrap();
    (cfg.model().unwrap(), phi, sigma)
}

/// Continuous-dependence ratios agree across `δ` and `τ`.
fn ac3() -> Verdict {
    let (base, phi, sigma) = sweep_base();
    let plan = SweepPlan::new(SweepMode::TauToZero, base, phi, sigma);
    let (model, init) = plan.member(0.1).unwrap();
    let bump = default_bump(model.grid());
    let report = stability_probe(&model, &init, &bump, &[0.1, 0.01], &[1e-2, 1e-3], 0).unwrap();
    let ratios: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.ratio.unwrap_or(f64::NAN)))
        .collect();
    verdict(
        report.passes(),
        format!(
            "ratios [{}], delta spread {:.3} (<= 3), tau spread {:.3} (<= 2)",
            ratios.join(", "),
            report.delta_spread,
            report.tau_spread
        ),
    )
}

/// Logarithmic potential stays separated from the barrier.
fn ac4() -> Verdict {
    let cfg = RunConfig::parse(
        "[potential]\nfamily = logarithmic\ntheta = 0.3\ntheta0 = 0.6\n[model]\nt_final = 0.5\n\
         [ic]\nphi_mean = 0.1\nphi_amplitude = 0.7\n",
    )
    .unwrap();
    let model = cfg.model().unwrap();
    let init = cfg.initial_data(&model).unwrap();
    let phi0 = init.phi0.sup_norm();
    let traj = run(&model, &init);
    let probe = probe_separation(&traj, 1.0);
    // the resolvent contracts toward 0, so it keeps states inside the
    // barrier; beyond |r| = 1 its value tanh(u) rounds to 1 in f64
    let lam = model.params.lambda_eff();
    let structural = (0..=2000).map(|i| -0.999999 + 1.999998 * i as f64 / 2000.0).all(|r| {
        let s = model.potential.resolvent(lam, r);
        s.abs() < 1.0 && s.abs() <= r.abs()
    });
    verdict(
        phi0 <= 0.8 && probe.r_star <= 1.0 - 1e-3 && structural,
        format!(
            "|phi0| = {phi0:.4}, r* = {:.6}, margin {:.4} (>= 1e-3), resolvent keeps (-1, 1) invariant: {structural}",
            probe.r_star,
            1.0 - probe.r_star
        ),
    )
}

fn ac5(mode: SweepMode, min_slope: f64) -> Verdict {
    let (base, phi, sigma) = sweep_base();
    let plan = SweepPlan::new(mode, base, phi, sigma);
    let report = sweep(&plan).unwrap();
    let slope = report.fit.map_or(f64::NAN, |f| f.slope);
    let errors: Vec<String> = report.entries.iter().map(|e| format!("{:.3e}", e.total.unwrap_or(f64::NAN))).collect();
    verdict(
        report.passes(min_slope),
        format!(
            "slope {slope:.4} (>= {min_slope}), theoretical {}, monotone {}, errors [{}]",
            report.theoretical_slope,
            report.monotone,
            errors.join(", ")
        ),
    )
}

/// Lyapunov functional non-increasing without sources.
fn ac6() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, potential, amp) in [
        ("polynomial", PotentialSpec::polynomial(), 0.3),
        ("logarithmic", PotentialSpec::logarithmic(0.3, 0.6), 0.6),
    ] {
        let g = Grid::new_1d(256, 1.0).unwrap();
        let bundle = Arc::new(KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), &g).unwrap());
        let params = ModelParams::source_free(&g, 0.1, 0.1, 1e-4, 200.0 * 1e-4);
        let model = Model::new(bundle, potential, params).unwrap();
        let init = InitialData {
            phi0: cosine(&g, &[(amp, 1.0), (0.1, 3.0)], 0.05),
            mu0: cosine(&g, &[(0.1, 2.0)], 0.0),
            sigma0: cosine(&g, &[(0.2, 1.0)], 0.5),
        };
        let traj = run(&model, &init);
        let l0 = traj.diagnostics[0].lyapunov;
        let up = worst_lyapunov_increase(&traj);
        pass &= up <= 1e-10 * l0.abs() && traj.diagnostics.len() == 201;
        details.push(format!("{name}: max step change {up:.2e} vs 1e-10·L(0) = {:.2e}", 1e-10 * l0.abs()));
    }
    verdict(pass, details.join("; "))
}

/// Galerkin oracle agrees with the stepper and the gap shrinks on refinement.
fn ac7() -> Verdict {
    let cfg = RunConfig::parse(
        "[model]\neps = 0.1\ntau = 0.1\np = 0.5\na = 0.2\nb = 1.0\nc = 0.5\nchi = 0.1\neta = 0.05\nsigma_s = 1.0\n\
         [oracle]\nmodes = 32\nt_final = 0.5\ninterval = 0.01\nrefine = true\n",
    )
    .unwrap();
    let study = oracle_study(&cfg, |c, _| {
        let g = &c.grid;
        Ok(InitialData {
            phi0: cosine(g, &[(0.3, 1.0), (-0.1, 2.0)], 0.1),
            mu0: cosine(g, &[(0.05, 1.0)], 0.0),
            sigma0: cosine(g, &[(0.2, 3.0)], 0.5),
        })
    })
    .unwrap();
    let fine = study.fine.as_ref().expect("refinement requested");
    verdict(
        study.passes(),
        format!(
            "relative L2(0,T;H) gap {:.3e} at 32 modes / {} cells, {:.3e} at 64 modes / {} cells (<= {ORACLE_TOLERANCE:.0e}, shrinking)",
            study.coarse.relative(),
            study.coarse.cells,
            fine.relative(),
            fine.cells
        ),
    )
}

/// Independent `Σ_j J(|x_i − y_j|) v_j h^d` with the kernel formula written out.
fn brute_force(g: &Grid, j: impl Fn(f64) -> f64, v: &Field) -> Vec<f64> {
    let vol = g.cell_volume();
    (0..g.len())
        .map(|i| {
            let xi = g.center(i);
            (0..g.len())
                .map(|k| {
                    let xk = g.center(k);
                    j(((xi[0] - xk[0]).powi(2) + (xi[1] - xk[1]).powi(2)).sqrt()) * v.values()[k]
                })
                .sum::<f64>()
                * vol
        })
        .collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = 1.0 + b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Fast-transform convolution against direct sums.
fn ac8() -> Verdict {
    let grids = [
        Grid::new_1d(16, 1.0).unwrap(),
        Grid::new_1d(64, 1.0).unwrap(),
        Grid::new_1d(255, 2.0).unwrap(),
        Grid::new_1d(256, 1.0).unwrap(),
        Grid::new_2d([16, 16], [1.0, 1.0]).unwrap(),
        Grid::new_2d([24, 10], [1.0, 0.5]).unwrap(),
    ];
    let table = RadialTable::new(vec![0.0, 0.2, 0.5, 1.0, 3.0], vec![1.0, 0.8, 0.3, 0.1, 0.0]).unwrap();
    let kernels = [
        KernelSpec::gaussian(4.0, 2.0),
        KernelSpec::gaussian(0.1, 1.0),
        KernelSpec::newtonian(0.05, 0.5, 1.0),
        KernelSpec {
            family: KernelFamily::Tabulated(table),
            normalization: 1.5,
        },
    ];
    let mut worst_direct = 0.0_f64;
    let mut worst_brute = 0.0_f64;
    let mut cases = 0;
    for g in &grids {
        let v = Field::from_fn(g, |x| (3.0 * x[0]).sin() + x[1] * x[1] - 0.2);
        for spec in &kernels {
            let bundle = KernelBundle::build(spec.clone(), g).unwrap();
            let fast = bundle.convolve(&v).unwrap();
            let direct = bundle.convolve_direct(&v).unwrap();
            worst_direct = worst_direct.max(max_gap(fast.values(), direct.values()));
            cases += 1;
        }
        // gaussian written out by hand as the independent double sum
        let bundle = KernelBundle::build(KernelSpec::gaussian(4.0, 2.0), g).unwrap();
        let brute = brute_force(g, |r| 2.0 * (-(r * r) / 16.0).exp(), &v);
        worst_brute = worst_brute.max(max_gap(bundle.convolve(&v).unwrap().values(), &brute));
    }
    verdict(
        worst_direct <= 1e-12 && worst_brute <= 1e-12,
        format!("FFT vs direct {worst_direct:.2e}, FFT vs hand-written double sum {worst_brute:.2e} over {cases} grid/kernel pairs (<= 1e-12)"),
    )
}

/// Resolvent residual, Lipschitz bound and Moreau envelope for each family.
fn ac9() -> Verdict {
    let families = [
        PotentialSpec::polynomial(),
        PotentialSpec::logarithmic(0.3, 0.6),
        PotentialSpec::double_obstacle(1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut residual = 0.0_f64;
    let mut lipschitz = 0.0_f64;
    let mut moreau_excess = f64::NEG_INFINITY;
    for spec in &families {
        for lambda in [1e-2, 1e-3, 1e-4] {
            for _ in 0..1000 {
                let r: f64 = rng.random_range(-3.0..3.0);
                let s: f64 = rng.random_range(-3.0..3.0);
                residual = residual.max(spec.resolvent_residual(lambda, r) / (1.0 + r.abs()));
                if r != s {
                    let q = (spec.yosida(lambda, r) - spec.yosida(lambda, s)).abs() / (r - s).abs();
                    lipschitz = lipschitz.max(q * lambda);
                }
                let f1 = spec.f1(r);
                if f1.is_finite() {
                    moreau_excess = moreau_excess.max(spec.moreau(lambda, r) - f1);
                }
            }
        }
    }
    verdict(
        residual <= 1e-12 && lipschitz <= 1.0 + 1e-12 && moreau_excess <= 1e-12,
        format!(
            "resolvent residual {residual:.2e} (<= 1e-12), max lambda·Lip {lipschitz:.6} (<= 1), max(moreau - F1) {moreau_excess:.2e} (<= 0), 3 families x 3 lambdas x 1000 pairs"
        ),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Verdict); 11] = [
        ("AC-1", "mass-source balance", ac1),
        ("AC-2", "maximum principle", ac2),
        ("AC-3", "continuous dependence", ac3),
        ("AC-4", "separation", ac4),
        ("AC-5a", "eps rate", || ac5(SweepMode::EpsToZero, 0.20)),
        ("AC-5b", "tau rate", || ac5(SweepMode::TauToZero, 0.45)),
        ("AC-5c", "joint rate", || ac5(SweepMode::Joint, 0.45)),
        ("AC-6", "Lyapunov decay", ac6),
        ("AC-7", "oracle equivalence", ac7),
        ("AC-8", "convolution exactness", ac8),
        ("AC-9", "Yosida correctness", ac9),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{id} {name}: {status} [{:.1} s] {}", start.elapsed().as_secs_f64(), v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
