//! Dormand–Prince 5(4) with adaptive steps and continuous (dense) output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients (5th minus 4th order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = f(t, y)` from `t0` and returns the solution at each of
/// the increasing `outputs` times (all `≥ t0`), interpolated with the
/// method's 4th-order continuous extension.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: Tolerances,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(outputs.len());
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::config("output times must be increasing and start after t0"));
    }
    let t_end = outputs.last().copied().unwrap_or(t0);
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        out.push(y0.to_vec());
        next_out += 1;
    }
    if next_out == outputs.len() {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k[0])?;
    stats.evaluations += 1;

    let norm = |v: &[f64], a: &[f64], b: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(a.iter().zip(b))
            .map(|(e, (ya, yb))| {
                let sc = tol.atol + tol.rtol * ya.abs().max(yb.abs());
                (e / sc).powi(2)
            })
            .sum();
        (s / n.max(1) as f64).sqrt()
    };

    // initial step (Hairer–Wanner heuristic)
    let mut h = {
        let d0 = norm(&y, &vec![0.0; n], &y);
        let d1 = norm(&k[0], &vec![0.0; n], &y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(t_end - t0)
    };
    let h_min_factor = 1e-14;
    let mut last_rejected = false;

    while next_out < outputs.len() {
        if h < h_min_factor * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, step: h });
        }
        let h_step = h.min(t_end - t);
        const A: [[f64; 5]; 5] = [
            [A21, 0.0, 0.0, 0.0, 0.0],
            [A31, A32, 0.0, 0.0, 0.0],
            [A41, A42, A43, 0.0, 0.0],
            [A51, A52, A53, A54, 0.0],
            [A61, A62, A63, A64, A65],
        ];
        const C: [f64; 5] = [C2, C3, C4, C5, 1.0];
        for s in 1..=5 {
            for i in 0..n {
                let acc: f64 = (0..s).map(|j| A[s - 1][j] * k[j][i]).sum();
                ytmp[i] = y[i] + h_step * acc;
            }
            let mut ks = std::mem::take(&mut k[s]);
            f(t + C[s - 1] * h_step, &ytmp, &mut ks)?;
            k[s] = ks;
        }
        for i in 0..n {
            ynew[i] = y[i]
                + h_step * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        let mut k7 = std::mem::take(&mut k[6]);
        f(t + h_step, &ynew, &mut k7)?;
        k[6] = k7;
        stats.evaluations += 6;

        let err_vec: Vec<f64> = (0..n)
            .map(|i| {
                h_step
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i])
            })
            .collect();
        let err = norm(&err_vec, &y, &ynew);
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = t + h_step;
            // dense output between t and t_new
            while next_out < outputs.len() && outputs[next_out] <= t_new * (1.0 + 1e-15) {
                let theta = ((outputs[next_out] - t) / h_step).clamp(0.0, 1.0);
                let th1 = 1.0 - theta;
                let v = (0..n)
                    .map(|i| {
                        let r1 = y[i];
                        let r2 = ynew[i] - y[i];
                        let r3 = h_step * k[0][i] - r2;
                        let r4 = r2 - h_step * k[6][i] - r3;
                        let r5 = h_step
                            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
                        r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))
                    })
                    .collect();
                out.push(v);
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            let k6 = std::mem::take(&mut k[6]);
            k[0] = k6;
            k[6] = vec![0.0; n];
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if last_rejected { h_step * fac.min(1.0) } else { h_step * fac };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h = h_step * (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok((out, stats))
}
