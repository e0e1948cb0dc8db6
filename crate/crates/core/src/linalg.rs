//! Conjugate-gradient solves for the shifted Neumann operators `c I - d Δ`.
//!
//! Every elliptic problem in the crate has this form (possibly with a
//! variable diagonal on top), and the cell-centered Neumann Laplacian is
//! diagonalized exactly by the type-II cosine transform. The preconditioner
//! inverts the constant-coefficient part in that basis, so CG only has to
//! resolve the variation of the diagonal.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Type-II / type-III cosine transforms of one length, built on a complex FFT
/// of twice that length.
pub(crate) struct CosineTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
}

impl CosineTransform {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64))
            .collect();
        CosineTransform {
            n,
            forward: planner.plan_fft_forward(2 * n),
            inverse: planner.plan_fft_inverse(2 * n),
            twiddle,
        }
    }

    /// Shared instance for length `n`.
    pub(crate) fn get(n: usize) -> Arc<CosineTransform> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CosineTransform>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("cosine transform cache poisoned");
        map.entry(n)
            .or_insert_with(|| Arc::new(CosineTransform::new(n)))
            .clone()
    }

    /// `X_k = sum_j x_j cos(pi k (2j+1) / 2n)`, in place.
    fn dct2(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.extend(x.iter().rev().map(|&v| Complex64::new(v, 0.0)));
        self.forward.process(buf);
        for k in 0..n {
            x[k] = 0.5 * (self.twiddle[k] * buf[k]).re;
        }
    }

    /// `x_j = X_0/2 + sum_{k>=1} X_k cos(pi k (2j+1) / 2n)`, in place.
    /// Composed with [`Self::dct2`] this is `n/2` times the identity.
    fn dct3(&self, x: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        for k in 0..n {
            let w = if k == 0 { 0.5 } else { 1.0 };
            buf.push(w * x[k] * self.twiddle[k].conj());
        }
        buf.resize(2 * n, Complex64::new(0.0, 0.0));
        self.inverse.process(buf);
        for j in 0..n {
            x[j] = buf[j].re;
        }
    }
}

/// Apply a 1D transform along `axis` of a row-major grid array.
fn along_axis(
    grid: &Grid,
    axis: usize,
    data: &mut [f64],
    mut f: impl FnMut(&mut [f64], &mut Vec<Complex64>),
) {
    let n = grid.cells(axis);
    let stride = grid.stride(axis);
    let lines = grid.len() / n;
    let mut line = vec![0.0; n];
    let mut buf = Vec::with_capacity(2 * n);
    for l in 0..lines {
        // base index of the line: decompose l over the remaining axes
        let base = if stride == 1 { l * n } else { l };
        for k in 0..n {
            line[k] = data[base + k * stride];
        }
        f(&mut line, &mut buf);
        for k in 0..n {
            data[base + k * stride] = line[k];
        }
    }
}

/// Eigenvalues of `-Δ` (mirrored-ghost, cell-centered) along one axis.
pub(crate) fn neumann_eigenvalues(n: usize, spacing: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (PI * k as f64 / (2 * n) as f64).sin();
            4.0 * s * s / (spacing * spacing)
        })
        .collect()
}

/// Exact inverse of `shift I - diffusion Δ` in the cosine basis. With
/// `shift == 0` the constant mode is dropped (pseudo-inverse on mean-free
/// fields).
pub(crate) struct SpectralPreconditioner {
    grid: Grid,
    transforms: Vec<Arc<CosineTransform>>,
    inverse_symbol: Vec<f64>,
}

impl SpectralPreconditioner {
    pub(crate) fn new(grid: &Grid, shift: f64, diffusion: f64) -> Self {
        let dim = grid.dim();
        let transforms: Vec<_> = (0..dim).map(|a| CosineTransform::get(grid.cells(a))).collect();
        let eig: Vec<Vec<f64>> = (0..dim)
            .map(|a| neumann_eigenvalues(grid.cells(a), grid.spacing(a)))
            .collect();
        let mut scale = 1.0;
        for a in 0..dim {
            scale *= 2.0 / grid.cells(a) as f64;
        }
        let mut inverse_symbol = vec![0.0; grid.len()];
        for (idx, s) in inverse_symbol.iter_mut().enumerate() {
            let k = grid.multi_index(idx);
            let lam: f64 = (0..dim).map(|a| eig[a][k[a]]).sum();
            let denom = shift + diffusion * lam;
            *s = if denom > 0.0 { scale / denom } else { 0.0 };
        }
        SpectralPreconditioner {
            grid: *grid,
            transforms,
            inverse_symbol,
        }
    }

    pub(crate) fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for a in 0..self.grid.dim() {
            let t = &self.transforms[a];
            along_axis(&self.grid, a, z, |line, buf| t.dct2(line, buf));
        }
        for (v, s) in z.iter_mut().zip(&self.inverse_symbol) {
            *v *= s;
        }
        for a in 0..self.grid.dim() {
            let t = &self.transforms[a];
            along_axis(&self.grid, a, z, |line, buf| t.dct3(line, buf));
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned conjugate gradient for an SPD operator (SPD on the
/// mean-free subspace when `mean_free` is set). Starts from the contents of
/// `x`; stops once `|r| <= rel_tol |b|` and returns the iteration count.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    mean_free: bool,
) -> Result<usize> {
    let n = rhs.len();
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    if mean_free {
        remove_mean(&mut r);
    }
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= rel_tol {
        return Ok(0);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if mean_free {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if mean_free {
            remove_mean(&mut r);
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= rel_tol {
            if mean_free {
                remove_mean(x);
            }
            return Ok(it);
        }
        precond(&r, &mut z);
        if mean_free {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_roundtrip_scales_by_half_length() {
        let t = CosineTransform::get(7);
        let x0 = [0.3, -1.0, 2.5, 0.0, 4.0, -0.7, 1.1];
        let mut x = x0;
        let mut buf = Vec::new();
        t.dct2(&mut x, &mut buf);
        // k = 0 coefficient is the plain sum
        assert!((x[0] - x0.iter().sum::<f64>()).abs() < 1e-12);
        t.dct3(&mut x, &mut buf);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a * 2.0 / 7.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dct2_matches_definition() {
        let n = 5;
        let t = CosineTransform::get(n);
        let x0 = [1.0, 2.0, -3.0, 0.5, 0.25];
        let mut x = x0;
        t.dct2(&mut x, &mut Vec::new());
        for k in 0..n {
            let direct: f64 = (0..n)
                .map(|j| x0[j] * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos())
                .sum();
            assert!((x[k] - direct).abs() < 1e-12);
        }
    }
}
