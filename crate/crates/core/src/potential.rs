//! Double-well potentials `F = F1 + F2` with `F1` convex (possibly singular)
//! and `F2` smooth with Lipschitz derivative.
//!
//! The convex part is only ever used through its resolvent
//! `J_λ = (I + λ∂F1)⁻¹`, its Yosida approximation `(I − J_λ)/λ` and the
//! Moreau envelope, so barrier potentials never see arguments outside their
//! domain.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::KernelBundle;

/// A user-supplied split. `f1_prime`/`f1_second` are only evaluated strictly
/// inside `(-ell, ell)`; `f1_prime` must be nondecreasing with `f1_prime(0) = 0`.
pub trait CustomPotential: Send + Sync + Debug {
    fn f1(&self, r: f64) -> f64;
    fn f1_prime(&self, r: f64) -> f64;
    fn f1_second(&self, r: f64) -> f64;
    fn f2(&self, r: f64) -> f64;
    fn f2_prime(&self, r: f64) -> f64;
    fn f2_second(&self, r: f64) -> f64;
    fn ell(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub enum PotentialSpec {
    /// `F = (r² − 1)²/4` split as `F1 = r⁴/4 + s r² + 1/4`,
    /// `F2 = −(1/2 + s) r²` with convexity shift `s ≥ 0`.
    Polynomial { shift: f64 },
    /// `F1 = (θ/2)[(1+r)ln(1+r) + (1−r)ln(1−r)]`, `F2 = −(θ₀/2) r²`.
    Logarithmic { theta: f64, theta0: f64 },
    /// `F1` = indicator of `[−1, 1]`, `F2 = c (1 − r²)`.
    DoubleObstacle { c: f64 },
    Custom(Arc<dyn CustomPotential>),
}

const NEWTON_MAX: usize = 200;

impl PotentialSpec {
    pub fn polynomial() -> Self {
        PotentialSpec::Polynomial { shift: 0.0 }
    }

    pub fn logarithmic(theta: f64, theta0: f64) -> Self {
        PotentialSpec::Logarithmic { theta, theta0 }
    }

    pub fn double_obstacle(c: f64) -> Self {
        PotentialSpec::DoubleObstacle { c }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialSpec::Polynomial { .. } => "polynomial",
            PotentialSpec::Logarithmic { .. } => "logarithmic",
            PotentialSpec::DoubleObstacle { .. } => "double-obstacle",
            PotentialSpec::Custom(_) => "custom",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialSpec::Polynomial { shift } if !(shift >= 0.0 && shift.is_finite()) => Err(
                Error::config(format!("convexity shift must be nonnegative, got {shift}")),
            ),
            PotentialSpec::Logarithmic { theta, theta0 } if !(0.0 < theta && theta < theta0 && theta0.is_finite()) => {
                Err(Error::config(format!(
                    "logarithmic potential needs 0 < theta < theta0, got theta = {theta}, theta0 = {theta0}"
                )))
            }
            PotentialSpec::DoubleObstacle { c } if !(c >= 0.0 && c.is_finite()) => Err(Error::config(
                format!("double-obstacle coefficient must be nonnegative, got {c}"),
            )),
            _ => Ok(()),
        }
    }

    /// Half-width `ℓ` of the domain of `F1` (infinite for the polynomial).
    pub fn ell(&self) -> f64 {
        match self {
            PotentialSpec::Polynomial { .. } => f64::INFINITY,
            PotentialSpec::Logarithmic { .. } | PotentialSpec::DoubleObstacle { .. } => 1.0,
            PotentialSpec::Custom(c) => c.ell(),
        }
    }

    /// True when `∂F1` is defined on all of ℝ.
    pub fn has_full_domain(&self) -> bool {
        self.ell().is_infinite()
    }

    /// `F1(r)`, `+∞` outside the domain.
    pub fn f1(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => 0.25 * r.powi(4) + shift * r * r + 0.25,
            PotentialSpec::Logarithmic { theta, .. } => {
                if r.abs() > 1.0 {
                    f64::INFINITY
                } else {
                    0.5 * theta * (xlogx(1.0 + r) + xlogx(1.0 - r))
                }
            }
            PotentialSpec::DoubleObstacle { .. } => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PotentialSpec::Custom(ref c) => {
                if r.abs() >= c.ell() {
                    f64::INFINITY
                } else {
                    c.f1(r)
                }
            }
        }
    }

    /// Minimal section of `∂F1` at `r`; `±∞` at or beyond a barrier where the
    /// graph is empty or unbounded.
    pub fn f1_prime(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => r * r * r + 2.0 * shift * r,
            PotentialSpec::Logarithmic { theta, .. } => {
                if r.abs() >= 1.0 {
                    f64::INFINITY.copysign(r)
                } else {
                    theta * atanh(r)
                }
            }
            PotentialSpec::DoubleObstacle { .. } => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(r)
                }
            }
            PotentialSpec::Custom(ref c) => {
                if r.abs() >= c.ell() {
                    f64::INFINITY.copysign(r)
                } else {
                    c.f1_prime(r)
                }
            }
        }
    }

    /// `F1''` in the interior of the domain.
    pub fn f1_second(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => 3.0 * r * r + 2.0 * shift,
            PotentialSpec::Logarithmic { theta, .. } => theta / (1.0 - r * r),
            PotentialSpec::DoubleObstacle { .. } => 0.0,
            PotentialSpec::Custom(ref c) => c.f1_second(r),
        }
    }

    pub fn f2(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => -(0.5 + shift) * r * r,
            PotentialSpec::Logarithmic { theta0, .. } => -0.5 * theta0 * r * r,
            PotentialSpec::DoubleObstacle { c } => c * (1.0 - r * r),
            PotentialSpec::Custom(ref c) => c.f2(r),
        }
    }

    pub fn f2_prime(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => -(1.0 + 2.0 * shift) * r,
            PotentialSpec::Logarithmic { theta0, .. } => -theta0 * r,
            PotentialSpec::DoubleObstacle { c } => -2.0 * c * r,
            PotentialSpec::Custom(ref c) => c.f2_prime(r),
        }
    }

    pub fn f2_second(&self, r: f64) -> f64 {
        match *self {
            PotentialSpec::Polynomial { shift } => -(1.0 + 2.0 * shift),
            PotentialSpec::Logarithmic { theta0, .. } => -theta0,
            PotentialSpec::DoubleObstacle { c } => -2.0 * c,
            PotentialSpec::Custom(ref c) => c.f2_second(r),
        }
    }

    /// `F(r) = F1(r) + F2(r)`, `+∞` outside the domain of `F1`.
    pub fn f_eval(&self, r: f64) -> f64 {
        let f1 = self.f1(r);
        if f1.is_infinite() {
            f1
        } else {
            f1 + self.f2(r)
        }
    }

    /// Resolvent `(I + λ∂F1)⁻¹(r)`: the unique `s` with `s + λw = r`,
    /// `w ∈ ∂F1(s)`.
    pub fn resolvent(&self, lambda: f64, r: f64) -> f64 {
        self.resolve(lambda, r).0
    }

    /// Yosida approximation `(r − J_λ r)/λ`, computed as the subgradient
    /// `w ∈ ∂F1(J_λ r)` to avoid cancellation for small `λ`.
    pub fn yosida(&self, lambda: f64, r: f64) -> f64 {
        self.resolve(lambda, r).1
    }

    /// Derivative of the Yosida approximation in `r`, in `[0, 1/λ]`.
    pub fn yosida_derivative(&self, lambda: f64, r: f64) -> f64 {
        match *self {
            PotentialSpec::Logarithmic { theta, .. } => {
                let u = log_resolvent_u(theta, lambda, r);
                let c = u.cosh();
                let sech2 = if c.is_finite() { 1.0 / (c * c) } else { 0.0 };
                theta / (sech2 + lambda * theta)
            }
            PotentialSpec::DoubleObstacle { .. } => {
                if r.abs() > 1.0 {
                    1.0 / lambda
                } else {
                    0.0
                }
            }
            _ => {
                let s = self.resolvent(lambda, r);
                let k = self.f1_second(s);
                k / (1.0 + lambda * k)
            }
        }
    }

    /// `(J_λ r, F1'_λ(r))`.
    fn resolve(&self, lambda: f64, r: f64) -> (f64, f64) {
        debug_assert!(lambda > 0.0);
        match *self {
            PotentialSpec::DoubleObstacle { .. } => {
                let s = r.clamp(-1.0, 1.0);
                (s, (r - s) / lambda)
            }
            PotentialSpec::Logarithmic { theta, .. } => {
                let u = log_resolvent_u(theta, lambda, r);
                (u.tanh(), theta * u)
            }
            _ => {
                let s = monotone_root(
                    |s| s + lambda * self.f1_prime(s) - r,
                    |s| 1.0 + lambda * self.f1_second(s),
                    r,
                    self.ell(),
                );
                (s, self.f1_prime(s))
            }
        }
    }

    /// Residual `|s + λ F1'(s) − r|` of the resolvent inclusion at the
    /// computed `s`, using the computed subgradient.
    pub fn resolvent_residual(&self, lambda: f64, r: f64) -> f64 {
        let (s, w) = self.resolve(lambda, r);
        (s + lambda * w - r).abs()
    }

    /// Moreau envelope `F1(0) + ∫₀^r F1'_λ(s) ds` by adaptive quadrature.
    pub fn moreau(&self, lambda: f64, r: f64) -> f64 {
        let f = |s: f64| self.yosida(lambda, s);
        let mut breaks = vec![0.0, r];
        if let PotentialSpec::DoubleObstacle { .. } = self {
            // the integrand has kinks at ±1
            for k in [-1.0, 1.0] {
                if (k - 0.0) * (k - r) < 0.0 {
                    breaks.push(k);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += adaptive_simpson(&f, w[0], w[1], 1e-13);
        }
        // for r < 0 the sorted breaks integrate from r up to 0
        if r < 0.0 {
            total = -total;
        }
        self.f1(0.0) + total
    }

    /// Closed form of the Moreau envelope,
    /// `F1(J_λ r) + |r − J_λ r|² / (2λ)`.
    pub fn moreau_envelope(&self, lambda: f64, r: f64) -> f64 {
        let (s, w) = self.resolve(lambda, r);
        self.f1(s) + 0.5 * lambda * w * w
    }

    /// `F'_λ(r) = F1'_λ(r) + F2'(r)`.
    pub fn f_prime_regularized(&self, lambda: f64, r: f64) -> f64 {
        self.yosida(lambda, r) + self.f2_prime(r)
    }

    /// `F_λ(r) = F1_λ(r) + F2(r)` (closed-form envelope).
    pub fn f_regularized(&self, lambda: f64, r: f64) -> f64 {
        self.moreau_envelope(lambda, r) + self.f2(r)
    }

    /// Unregularized `F'(r)` via the minimal section of `∂F1`.
    pub fn f_prime(&self, r: f64) -> f64 {
        let d1 = self.f1_prime(r);
        if d1.is_infinite() {
            d1
        } else {
            d1 + self.f2_prime(r)
        }
    }

    /// `F''` on the interior of the domain.
    pub fn f_second(&self, r: f64) -> f64 {
        self.f1_second(r) + self.f2_second(r)
    }

    /// Sample points for interior checks: symmetric, odd count (contains 0),
    /// inside `(-ℓ, ℓ)` or within `[-range, range]` for unbounded domains.
    fn interior_mesh(&self, range: f64, points: usize) -> Vec<f64> {
        let half = if self.ell().is_finite() {
            self.ell() * (1.0 - 1e-6)
        } else {
            range
        };
        let n = points | 1;
        let m = (n / 2) as f64;
        (0..n).map(|i| half * (i as f64 - m) / m).collect()
    }
}

/// Sample range on which dominance is checked for potentials with unbounded
/// domain; also the range where the polynomial split's `F2'` is treated as
/// Lipschitz.
pub const INVARIANT_RANGE: f64 = 2.0;

/// `atanh` evaluated on `|r|`; the std implementation loses accuracy as
/// `r → -1`.
fn atanh(r: f64) -> f64 {
    r.abs().atanh().copysign(r)
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Solves `tanh(u) + λθu = r`; the logarithmic resolvent is `tanh(u)` and the
/// Yosida value is `θu`. Working in `u` keeps the iteration away from the
/// barrier at `|s| = 1`.
fn log_resolvent_u(theta: f64, lambda: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let k = lambda * theta;
    // tanh(u) ∈ (-1, 1) brackets u in [(r-1)/k, (r+1)/k]; the root also lies
    // between 0 and r/k
    let (mut lo, mut hi) = if r > 0.0 {
        (0.0f64.max((r - 1.0) / k), r / k)
    } else {
        (r / k, 0.0f64.min((r + 1.0) / k))
    };
    let g = |u: f64| u.tanh() + k * u - r;
    let dg = |u: f64| {
        let c = u.cosh();
        (if c.is_finite() { 1.0 / (c * c) } else { 0.0 }) + k
    };
    let mut u = atanh(r.clamp(-0.999, 0.999)).clamp(lo, hi);
    for _ in 0..NEWTON_MAX {
        let gu = g(u);
        if gu == 0.0 {
            return u;
        }
        if gu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            return next;
        }
        u = next;
    }
    u
}

/// Safeguarded Newton for the strictly increasing `g` with `g(0) = -r` and
/// root between 0 and `r` (clipped to `(-ell, ell)`).
fn monotone_root(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, r: f64, ell: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let edge = if ell.is_finite() { ell } else { f64::INFINITY };
    let (mut lo, mut hi) = if r > 0.0 { (0.0, r.min(edge)) } else { (r.max(-edge), 0.0) };
    let mut s = 0.5 * (lo + hi);
    for _ in 0..NEWTON_MAX {
        let gs = g(s);
        if gs == 0.0 {
            return s;
        }
        if gs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let mut next = s - gs / dg(s);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 4.0 * f64::EPSILON * s.abs().max(1e-300) || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            return next;
        }
        s = next;
    }
    s
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature with Richardson correction.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, a, b);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Result of the dominance check `a_* + F'' ≥ C₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    /// Infimum of `a_* + F''` over the samples.
    pub c0: f64,
    /// Where the infimum was attained.
    pub argmin: f64,
}

/// `inf_r a_* + F''(r)` over an interior mesh. Fails with an assumption
/// violation when the infimum is not positive.
pub fn check_dominance_with(spec: &PotentialSpec, a_star: f64) -> Result<Dominance> {
    let mut best = Dominance {
        c0: f64::INFINITY,
        argmin: 0.0,
    };
    for r in spec.interior_mesh(INVARIANT_RANGE, 4001) {
        let v = a_star + spec.f_second(r);
        if v < best.c0 {
            best = Dominance { c0: v, argmin: r };
        }
    }
    if best.c0 > 0.0 {
        Ok(best)
    } else {
        Err(Error::assumption(
            "A5 dominance",
            format!(
                "a_* + F''(r) has infimum {:.6e} <= 0 at r = {:.6}",
                best.c0, best.argmin
            ),
        ))
    }
}

pub fn check_dominance(spec: &PotentialSpec, bundle: &KernelBundle) -> Result<Dominance> {
    check_dominance_with(spec, bundle.a_star())
}

/// `sup |∂F1⁰(r)| / (F1(r) + 1)` over `[-range, range]`, refined by golden
/// section around the best sample.
pub fn check_growth(spec: &PotentialSpec, range: f64) -> Result<f64> {
    if !spec.has_full_domain() {
        return Err(Error::Inapplicable(format!(
            "growth condition needs D(dF1) = R, but the {} potential has a bounded domain",
            spec.name()
        )));
    }
    let ratio = |r: f64| spec.f1_prime(r).abs() / (spec.f1(r) + 1.0);
    let n = 20001;
    let step = 2.0 * range / (n - 1) as f64;
    let (mut best_r, mut best) = (0.0, 0.0);
    for i in 0..n {
        let r = -range + i as f64 * step;
        let v = ratio(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    // golden-section maximization on the neighbouring cells
    let (mut a, mut b) = ((best_r - step).max(-range), (best_r + step).min(range));
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-10 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if ratio(c) > ratio(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.max(ratio(0.5 * (a + b))))
}
