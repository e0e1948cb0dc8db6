//! Hypothesis audit: which standing assumptions hold for a configuration
//! and the constants they produce.
//!
//! Unlike [`Model::new`](crate::model::Model::new), which stops at the first
//! violation, the audit evaluates every check so a report can list them all.

use std::fmt::{self, Write as _};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::inclusion_constant;
use crate::kernel::{EpsilonZero, KernelFamily};
use crate::model::{Hypotheses, EPS0_SAFETY, TAU0};
use crate::potential::{check_dominance, check_growth, PotentialSpec, INVARIANT_RANGE};
use crate::asymptotics::SweepMode;

/// What a run is going to do; decides which `(ε, τ)` pairs are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Simulate,
    Sweep(SweepMode),
    Stability,
    Oracle,
    Verify,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Sweep(SweepMode::EpsToZero) => "sweep-eps",
            Task::Sweep(SweepMode::TauToZero) => "sweep-tau",
            Task::Sweep(SweepMode::Joint) => "sweep-joint",
            Task::Stability => "stability",
            Task::Oracle => "oracle-compare",
            Task::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// The hypothesis does not enter this task.
    NotApplicable,
    /// Not checked numerically; reported for the record.
    Flag,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
            Status::Flag => "FLAG",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditItem {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Constants {
    pub a_star: f64,
    pub a_sup: f64,
    pub b_sup: f64,
    pub c_a: f64,
    pub c0: Option<f64>,
    pub c_f: Option<f64>,
    pub k0: f64,
    pub eps0: Option<EpsilonZero>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub task: Task,
    pub items: Vec<AuditItem>,
    pub constants: Constants,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditItem> {
        self.items.iter().filter(|i| i.status == Status::Fail)
    }

    pub fn item(&self, name: &str) -> Option<&AuditItem> {
        self.items.iter().find(|i| i.name == name)
    }

    /// The first failure as an [`Error::Assumption`].
    pub fn into_result(self) -> Result<Self> {
        let failure = self.failures().next().map(|f| Error::Assumption {
            name: f.name.clone(),
            detail: f.detail.clone(),
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("hypothesis audit for task {}\n\n", self.task.name());
        for i in &self.items {
            let _ = writeln!(out, "{:<5} {:<12} {}", i.status.to_string(), i.name, i.detail);
        }
        let c = &self.constants;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let _ = writeln!(out, "\nconstants");
        let _ = writeln!(out, "  a_*  = {:.6}", c.a_star);
        let _ = writeln!(out, "  a^*  = {:.6}", c.a_sup);
        let _ = writeln!(out, "  b^*  = {:.6}", c.b_sup);
        let _ = writeln!(out, "  c_a  = {:.6}", c.c_a);
        let _ = writeln!(out, "  C0   = {}", opt(c.c0));
        let _ = writeln!(out, "  C_F  = {}", opt(c.c_f));
        let _ = writeln!(out, "  K0   = {:.6}", c.k0);
        match c.eps0 {
            Some(e) => {
                let _ = writeln!(
                    out,
                    "  eps0 = {:.6}  (min of {:.6}, {:.6}, {:.6})",
                    e.value, e.from_ca, e.from_dominance, e.from_inclusion
                );
            }
            None => {
                let _ = writeln!(out, "  eps0 = n/a");
            }
        }
        let _ = writeln!(out, "\n{}", if self.passed() { "audit: PASS" } else { "audit: FAIL" });
        out
    }
}

/// The `(ε, τ)` pairs a task will run, including limit runs.
fn relaxations(cfg: &RunConfig, task: Task) -> Vec<(f64, f64)> {
    let (eps, tau) = (cfg.params.eps, cfg.params.tau);
    let values = &cfg.sweep.values;
    match task {
        Task::Simulate | Task::Oracle | Task::Verify => vec![(eps, tau)],
        Task::Sweep(SweepMode::EpsToZero) => values.iter().map(|&v| (v, tau)).chain([(0.0, tau)]).collect(),
        Task::Sweep(SweepMode::TauToZero) => values.iter().map(|&v| (eps, v)).chain([(eps, 0.0)]).collect(),
        Task::Sweep(SweepMode::Joint) => values
            .iter()
            .map(|&v| (v.powf(cfg.sweep.coupling), v))
            .chain([(0.0, 0.0)])
            .collect(),
        Task::Stability => cfg.stability.taus.iter().map(|&t| (eps, t)).collect(),
    }
}

fn item(name: &str, status: Status, detail: impl Into<String>) -> AuditItem {
    AuditItem {
        name: name.into(),
        status,
        detail: detail.into(),
    }
}

fn from_result(name: &str, r: Result<()>, ok: impl Into<String>) -> AuditItem {
    match r {
        Ok(()) => item(name, Status::Pass, ok),
        Err(Error::Assumption { detail, .. }) => item(name, Status::Fail, detail),
        Err(e) => item(name, Status::Fail, e.to_string()),
    }
}

/// Evaluates every hypothesis relevant to `task`. Errors only when the
/// configuration cannot be turned into a kernel or initial data at all.
pub fn audit(cfg: &RunConfig, task: Task) -> Result<AuditReport> {
    let bundle = cfg.bundle()?;
    let grid = &cfg.grid;
    let p = &cfg.params;
    let potential = &cfg.potential;
    let mut items = Vec::new();

    // A1..A3 through the parameter validation, one line each
    let coeffs = [("P", p.p), ("A", p.a), ("B", p.b), ("C", p.c), ("chi", p.chi), ("eta", p.eta)];
    let bad: Vec<String> = coeffs
        .iter()
        .filter(|(_, v)| !(*v >= 0.0 && v.is_finite()))
        .map(|(n, v)| format!("{n} = {v}"))
        .collect();
    items.push(if bad.is_empty() {
        item("A1", Status::Pass, "P, A, B, C, chi, eta are nonnegative constants")
    } else {
        item("A1", Status::Fail, format!("negative or non-finite: {}", bad.join(", ")))
    });
    let h_range = (0..=400).map(|i| p.h.eval(-2.0 + i as f64 * 0.01));
    let (h_min, h_max) = h_range.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    items.push(if h_min >= 0.0 && h_max.is_finite() {
        item(
            "A2",
            Status::Pass,
            format!("h = {} is bounded with range [{h_min:.4}, {h_max:.4}] on [-2, 2]", p.h.name()),
        )
    } else {
        item("A2", Status::Fail, format!("h = {} takes values in [{h_min}, {h_max}]", p.h.name()))
    });
    let (s_lo, s_hi) = p
        .sigma_s
        .fields()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f.min()), hi.max(f.max())));
    items.push(if s_lo >= 0.0 && s_hi <= 1.0 {
        item("A3", Status::Pass, format!("sigma_S in [{s_lo}, {s_hi}]"))
    } else {
        item("A3", Status::Fail, format!("sigma_S range [{s_lo}, {s_hi}] leaves [0, 1]"))
    });
    items.push(from_result(
        "A4",
        potential.validate(),
        format!("{} potential with convex part and C^1 concave part", potential.name()),
    ));

    let c0 = match check_dominance(potential, &bundle) {
        Ok(d) => {
            items.push(item(
                "A5",
                Status::Pass,
                format!("C0 = inf a_* + F'' = {:.6} at r = {:.4}", d.c0, d.argmin),
            ));
            Some(d.c0)
        }
        Err(Error::Assumption { detail, .. }) => {
            items.push(item("A5", Status::Fail, detail));
            None
        }
        Err(e) => return Err(e),
    };
    items.push(match potential {
        PotentialSpec::DoubleObstacle { .. } => item(
            "A6",
            Status::Flag,
            "double obstacle: the two-sided growth bound on the convex part fails; excluded from rate theory",
        ),
        _ => item("A6", Status::Flag, "growth of the convex part assumed, not checked numerically"),
    });
    items.push(match &cfg.kernel.family {
        KernelFamily::Tabulated(_) => item("A7", Status::Flag, "tabulated kernel: W^{2,1} regularity unverified"),
        KernelFamily::Gaussian { .. } => item("A7", Status::Flag, "gaussian kernel is smooth, W^{2,1} holds"),
        KernelFamily::Newtonian { .. } => {
            item("A7", Status::Flag, "mollified newtonian kernel with cutoff, W^{2,1} holds")
        }
    });

    let k0 = inclusion_constant(grid)?;
    let eps0 = match c0 {
        Some(c0) => Some(bundle.epsilon_zero(c0, k0)?),
        None => None,
    };
    let c_f = match check_growth(potential, INVARIANT_RANGE) {
        Ok(g) => Some(g),
        Err(Error::Inapplicable(_)) => None,
        Err(e) => return Err(e),
    };

    let pairs = relaxations(cfg, task);
    let max_eps = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let max_tau = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let eps_zero = pairs.iter().any(|p| p.0 == 0.0);
    let tau_zero = pairs.iter().any(|p| p.1 == 0.0);

    items.push(match (max_eps > 0.0, eps0) {
        (false, _) => item("eps < eps0", Status::NotApplicable, "no run with eps > 0"),
        (true, None) => item("eps < eps0", Status::Fail, "eps0 undefined without C0"),
        (true, Some(e)) => {
            let bound = EPS0_SAFETY * e.value;
            let msg = format!("eps = {max_eps} vs {EPS0_SAFETY}·eps0 = {bound:.6} (eps0 = {:.6})", e.value);
            item("eps < eps0", if max_eps < bound { Status::Pass } else { Status::Fail }, msg)
        }
    });
    items.push(item(
        "tau < tau0",
        if max_tau < TAU0 { Status::Pass } else { Status::Fail },
        format!("tau = {max_tau} vs tau0 = {TAU0}"),
    ));
    items.push(match (tau_zero, c0) {
        (false, _) => item("ip_chi", Status::NotApplicable, "no run with tau = 0"),
        (true, None) => item("ip_chi", Status::Fail, "needs C0"),
        (true, Some(c0)) => {
            let h = Hypotheses {
                c0,
                k0,
                eps0: eps0.expect("eps0 exists with C0"),
                growth: c_f,
            };
            from_result(
                "ip_chi",
                h.check_ip_chi(bundle.c_a(), p.chi, p.eta),
                format!("chi = {} below sqrt(c_a) = {:.4} and the quadratic bound holds", p.chi, bundle.c_a().sqrt()),
            )
        }
    });
    items.push(match (eps_zero, c_f) {
        (false, _) => item("pol_growth", Status::NotApplicable, "no run with eps = 0"),
        (true, Some(g)) => item("pol_growth", Status::Pass, format!("C_F = {g:.6}")),
        (true, None) => item(
            "pol_growth",
            Status::Fail,
            format!("the {} potential has no finite growth constant", potential.name()),
        ),
    });
    let needs_eta = eps_zero || task == Task::Stability;
    items.push(match (needs_eta, p.eta == 0.0) {
        (false, _) => item("eta = 0", Status::NotApplicable, "no run requires eta = 0"),
        (true, true) => item("eta = 0", Status::Pass, "eta = 0"),
        (true, false) => item("eta = 0", Status::Fail, format!("eta = {} must vanish for this task", p.eta)),
    });

    // initial data; quasi-static mu needs a model, so only phi and sigma here
    match cfg.targets() {
        Ok((phi_t, sigma_t)) => {
            let smooth = |f| crate::model::make_smoothed_ic(f, cfg.ic.smoothing);
            let (phi0, sigma0) = (smooth(&phi_t)?, smooth(&sigma_t)?);
            let f_max = phi0
                .values()
                .iter()
                .map(|&r| potential.f_eval(r))
                .fold(f64::NEG_INFINITY, f64::max);
            items.push(if f_max.is_finite() {
                item("ip_init", Status::Pass, format!("F(phi0) finite, max {f_max:.4}"))
            } else {
                item(
                    "ip_init",
                    Status::Fail,
                    format!("F(phi0) is infinite; phi0 range [{:.4}, {:.4}]", phi0.min(), phi0.max()),
                )
            });
            let (lo, hi) = (sigma0.min(), sigma0.max());
            items.push(if lo >= 0.0 && hi <= 1.0 {
                item("ip_infty", Status::Pass, format!("sigma0 in [{lo:.4}, {hi:.4}]"))
            } else {
                item("ip_infty", Status::Fail, format!("sigma0 range [{lo:.4}, {hi:.4}] leaves [0, 1]"))
            });
            if !potential.has_full_domain() {
                let ell = potential.ell();
                let r = phi0.sup_norm();
                items.push(item(
                    "separation",
                    Status::Flag,
                    format!("|phi0| <= {r:.4} against barrier {ell}; separation needs strict inequality"),
                ));
            }
        }
        Err(e) if e.is_configuration() => return Err(e),
        Err(e) => items.push(item("ip_init", Status::Fail, e.to_string())),
    }
    if task == Task::Oracle && !(p.eps > 0.0 && p.tau > 0.0) {
        items.push(item("galerkin", Status::Fail, "the spectral oracle needs eps > 0 and tau > 0"));
    }
    if let Task::Sweep(SweepMode::Joint) = task {
        items.push(item(
            "limsup",
            if cfg.sweep.coupling >= 2.0 { Status::Pass } else { Status::Fail },
            format!("eps = tau^{}; the joint limit needs exponent >= 2", cfg.sweep.coupling),
        ));
    }

    Ok(AuditReport {
        task,
        items,
        constants: Constants {
            a_star: bundle.a_star(),
            a_sup: bundle.a_sup(),
            b_sup: bundle.b_sup(),
            c_a: bundle.c_a(),
            c0,
            c_f,
            k0,
            eps0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn default_configuration_passes_every_task() {
        let c = cfg("");
        for task in [
            Task::Simulate,
            Task::Sweep(SweepMode::EpsToZero),
            Task::Sweep(SweepMode::TauToZero),
            Task::Sweep(SweepMode::Joint),
            Task::Stability,
            Task::Oracle,
            Task::Verify,
        ] {
            let r = audit(&c, task).unwrap();
            assert!(r.passed(), "{}", r.render());
        }
        let r = audit(&c, Task::Simulate).unwrap();
        assert_eq!(r.item("ip_chi").unwrap().status, Status::NotApplicable);
        assert!((r.constants.eps0.unwrap().value - 0.1436).abs() < 1e-3);
    }

    #[test]
    fn eps_above_threshold_names_both_values() {
        let base = audit(&cfg(""), Task::Simulate).unwrap();
        let eps0 = base.constants.eps0.unwrap().value;
        let r = audit(&cfg(&format!("[model]\neps = {}\n", 2.0 * eps0)), Task::Simulate).unwrap();
        assert!(!r.passed());
        let i = r.item("eps < eps0").unwrap();
        assert_eq!(i.status, Status::Fail);
        assert!(i.detail.contains(&format!("{}", 2.0 * eps0)), "{}", i.detail);
        assert!(i.detail.contains(&format!("{eps0:.6}")), "{}", i.detail);
        let err = r.into_result().unwrap_err();
        assert!(matches!(err, Error::Assumption { ref name, .. } if name == "eps < eps0"));
    }

    #[test]
    fn large_chi_fails_at_tau_zero_only() {
        let c = cfg("[model]\nchi = 10\n");
        assert_eq!(
            audit(&c, Task::Simulate).unwrap().item("ip_chi").unwrap().status,
            Status::NotApplicable
        );
        let r = audit(&c, Task::Sweep(SweepMode::TauToZero)).unwrap();
        assert_eq!(r.item("ip_chi").unwrap().status, Status::Fail);
        let r = audit(&cfg("[model]\nchi = 10\ntau = 0\n"), Task::Simulate).unwrap();
        assert_eq!(r.item("ip_chi").unwrap().status, Status::Fail);
    }

    #[test]
    fn bounded_potentials_and_eps_limit() {
        let c = cfg("[potential]\nfamily = logarithmic\n[ic]\nphi_amplitude = 0.2\n");
        let r = audit(&c, Task::Simulate).unwrap();
        assert!(r.passed(), "{}", r.render());
        assert!(r.item("separation").is_some());
        let r = audit(&c, Task::Sweep(SweepMode::EpsToZero)).unwrap();
        assert_eq!(r.item("pol_growth").unwrap().status, Status::Fail);
        let r = audit(&cfg("[model]\neta = 0.1\n"), Task::Stability).unwrap();
        assert_eq!(r.item("eta = 0").unwrap().status, Status::Fail);
    }

    #[test]
    fn sigma_out_of_range_fails_ip_infty() {
        let r = audit(&cfg("[ic]\nsigma_mean = 0.9\nsigma_amplitude = 0.3\n"), Task::Simulate).unwrap();
        assert_eq!(r.item("ip_infty").unwrap().status, Status::Fail);
        assert!(r.render().contains("FAIL  ip_infty"));
    }
}
