//! Uniform cell-centered grids on an interval or rectangle, with discrete
//! homogeneous-Neumann operators.
//!
//! Samples sit at cell centers. The Laplacian mirrors one ghost cell across
//! every boundary face, so the boundary flux vanishes and `sum(Δf) == 0`
//! holds exactly in exact arithmetic. The gradient seminorm sums squared
//! face differences over interior faces, which makes it the quadratic form
//! of `-Δ`: `|∇f|² = -(Δf, f)`.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::linalg::{pcg, SpectralPreconditioner};

/// CG relative residual for the grid-level elliptic solves.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Cell-centered uniform grid with 1 or 2 axes. Axis 0 is the slow index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extent: [f64; 2],
}

impl Grid {
    pub fn new_1d(cells: usize, extent: f64) -> Result<Self> {
        Self::new(1, [cells, 1], [extent, 1.0])
    }

    pub fn new_2d(cells: [usize; 2], extent: [f64; 2]) -> Result<Self> {
        Self::new(2, cells, extent)
    }

    fn new(dim: usize, cells: [usize; 2], extent: [f64; 2]) -> Result<Self> {
        for a in 0..dim {
            if cells[a] < 4 {
                return Err(Error::config(format!(
                    "grid needs at least 4 cells per axis, axis {a} has {}",
                    cells[a]
                )));
            }
            if !(extent[a] > 0.0 && extent[a].is_finite()) {
                return Err(Error::config(format!(
                    "grid extent must be positive and finite, axis {a} has {}",
                    extent[a]
                )));
            }
        }
        Ok(Grid { dim, cells, extent })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Largest cell count over all axes.
    pub fn max_cells(&self) -> usize {
        self.cells[..self.dim].iter().copied().max().unwrap_or(1)
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.cells[1]
        } else {
            1
        }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.cells[1], idx % self.cells[1]]
        }
    }

    /// Cell-center coordinates of sample `idx`.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let k = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = (k[a] as f64 + 0.5) * self.spacing(a);
        }
        x
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "fields live on different grids ({self:?} vs {other:?})"
            )))
        }
    }

    fn cg_cap(&self) -> usize {
        50 * self.max_cells()
    }
}

/// A scalar sampled at the cell centers of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite sample at index {i}")));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Field {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        self.map(|v| alpha * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Position and value of the smallest sample.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    pub fn argmax(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
    }

    /// Discrete sup-norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        mean(self)
    }

    pub fn norm_h(&self) -> f64 {
        norm_h(self)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b).expect("field grids differ")
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b).expect("field grids differ")
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scaled(rhs)
    }
}

/// `out = Δx` with mirrored ghost cells.
pub(crate) fn apply_laplacian(grid: &Grid, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for a in 0..grid.dim() {
        let n = grid.cells(a);
        let stride = grid.stride(a);
        let inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
        for (idx, o) in out.iter_mut().enumerate() {
            let k = (idx / stride) % n;
            let c = x[idx];
            let left = if k > 0 { x[idx - stride] } else { c };
            let right = if k + 1 < n { x[idx + stride] } else { c };
            *o += (left - 2.0 * c + right) * inv_h2;
        }
    }
}

/// Sum over interior faces of the squared difference quotient, times the
/// cell volume.
pub(crate) fn gradient_sq(grid: &Grid, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for a in 0..grid.dim() {
        let n = grid.cells(a);
        let stride = grid.stride(a);
        let h = grid.spacing(a);
        for idx in 0..x.len() {
            let k = (idx / stride) % n;
            if k + 1 < n {
                let d = (x[idx + stride] - x[idx]) / h;
                acc += d * d;
            }
        }
    }
    acc * grid.cell_volume()
}

pub fn laplacian_neumann(f: &Field) -> Field {
    let mut out = vec![0.0; f.values.len()];
    apply_laplacian(&f.grid, &f.values, &mut out);
    Field::from_vec_unchecked(f.grid, out)
}

/// `(1/|Ω|) ∫ f`
pub fn mean(f: &Field) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

pub fn inner_h(f: &Field, g: &Field) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    Ok(f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume())
}

pub fn norm_h(f: &Field) -> f64 {
    (f.values.iter().map(|v| v * v).sum::<f64>() * f.grid.cell_volume()).sqrt()
}

/// `|∇f|_H`, from face differences.
pub fn norm_grad(f: &Field) -> f64 {
    gradient_sq(&f.grid, &f.values).sqrt()
}

/// Full `H¹` norm.
pub fn norm_v(f: &Field) -> f64 {
    let h = norm_h(f);
    (h * h + gradient_sq(&f.grid, &f.values)).sqrt()
}

/// Solves `(shift I - diffusion Δ) u = rhs` by CG with relative residual
/// `tol`. `shift == 0` requires a mean-free rhs and returns the mean-free
/// solution.
pub(crate) fn solve_shifted(
    rhs: &Field,
    shift: f64,
    diffusion: f64,
    tol: f64,
) -> Result<Field> {
    let grid = rhs.grid;
    let pre = SpectralPreconditioner::new(&grid, shift, diffusion);
    let mut x = vec![0.0; grid.len()];
    let apply = |v: &[f64], out: &mut [f64]| {
        apply_laplacian(&grid, v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = shift * vi - diffusion * *o;
        }
    };
    pcg(
        apply,
        |r, z| pre.apply(r, z),
        &rhs.values,
        &mut x,
        tol,
        grid.cg_cap(),
        shift == 0.0,
    )?;
    Ok(Field::from_vec_unchecked(grid, x))
}

/// The inverse Neumann Laplacian on mean-free data: returns the mean-free
/// `u` with `-Δu = rhs`.
pub fn solve_neumann_poisson(rhs: &Field) -> Result<Field> {
    let m = mean(rhs);
    let n = norm_h(rhs);
    if m.abs() > 1e-10 * n {
        return Err(Error::Compatibility { mean: m, norm: n });
    }
    if n == 0.0 {
        return Ok(Field::zeros(&rhs.grid));
    }
    solve_shifted(rhs, 0.0, 1.0, CG_TOLERANCE)
}

/// Inverse of the Riesz map `I - Δ`.
pub fn riesz_inverse(f: &Field) -> Result<Field> {
    solve_shifted(f, 1.0, 1.0, CG_TOLERANCE)
}

/// Dual norm `|f|_* = (f, (I - Δ)^{-1} f)^{1/2}`.
pub fn norm_vstar(f: &Field) -> Result<f64> {
    let u = riesz_inverse(f)?;
    Ok(inner_h(f, &u)?.max(0.0).sqrt())
}

/// Largest eigenvalue of the symmetric operator `op` by power iteration from
/// a fixed pseudo-random start.
fn power_iteration(grid: &Grid, iterations: usize, op: impl Fn(&Field) -> Result<Field>) -> Result<f64> {
    // deterministic, not mean-free, touches all modes
    let mut v = Field::from_fn(grid, |x| 1.0 + 0.3 * (7.3 * x[0] + 3.1 * x[1]).sin() + 0.1 * (41.0 * x[0]).cos());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let nv = norm_h(&v);
        v = v.scaled(1.0 / nv);
        let w = op(&v)?;
        estimate = inner_h(&v, &w)?;
        v = w;
    }
    Ok(estimate)
}

/// Empirical norm of the inclusion `H ↪ V*`, i.e. `sup |f|_* / |f|_H`.
pub fn inclusion_constant(grid: &Grid) -> Result<f64> {
    Ok(power_iteration(grid, 40, riesz_inverse)?.sqrt())
}

/// Smallest nonzero eigenvalue of the discrete Neumann `-Δ`, estimated from
/// the inverse operator on mean-free fields.
pub fn first_neumann_eigenvalue(grid: &Grid) -> Result<f64> {
    let lam_max_inverse = power_iteration(grid, 60, |v| {
        let m = mean(v);
        solve_neumann_poisson(&v.map(|x| x - m))
    })?;
    Ok(1.0 / lam_max_inverse)
}

/// Poincaré–Wirtinger constant `C` with
/// `|v|_V² <= C (|∇v|² + |Ω| mean(v)²)` for all grid fields.
pub fn poincare_constant(grid: &Grid) -> Result<f64> {
    Ok(1.0 + 1.0 / first_neumann_eigenvalue(grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine(grid: &Grid, l: f64) -> Field {
        Field::from_fn(grid, |x| (PI * x[0] / l).cos())
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(Grid::new_1d(3, 1.0).is_err());
        assert!(Grid::new_2d([8, 2], [1.0, 1.0]).is_err());
        assert!(Grid::new_1d(8, 0.0).is_err());
    }

    #[test]
    fn measure_matches_cell_volume() {
        let g = Grid::new_2d([12, 7], [2.0, 0.3]).unwrap();
        assert!((g.cell_volume() * g.len() as f64 - g.measure()).abs() < 1e-15);
        let g = Grid::new_1d(100, 3.0).unwrap();
        assert!((g.cell_volume() * g.len() as f64 - 3.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new_2d([9, 6], [1.0, 2.0]).unwrap();
        let lap = laplacian_neumann(&Field::constant(&g, 4.2));
        assert!(lap.sup_norm() < 1e-12);
    }

    #[test]
    fn laplacian_eigenfunction_second_order() {
        let l = 2.0;
        let mut errors = Vec::new();
        for &n in &[64usize, 128, 256] {
            let g = Grid::new_1d(n, l).unwrap();
            let f = cosine(&g, l);
            let lap = laplacian_neumann(&f);
            let k2 = (PI / l).powi(2);
            let err = lap
                .values()
                .iter()
                .zip(f.values())
                .map(|(a, b)| (a + k2 * b).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order}");
        }
    }

    #[test]
    fn mean_of_cosine_is_zero() {
        let g = Grid::new_1d(37, 1.0).unwrap();
        assert!(mean(&cosine(&g, 1.0)).abs() < 1e-12);
        assert!((mean(&Field::constant(&g, 3.5)) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = Grid::new_1d(256, 1.0).unwrap();
        assert_eq!(norm_h(&Field::zeros(&g)), 0.0);
        let g2 = Grid::new_2d([8, 8], [2.0, 3.0]).unwrap();
        assert!((norm_h(&Field::constant(&g2, 1.0)) - 6f64.sqrt()).abs() < 1e-13);
        let v = norm_v(&cosine(&g, 1.0));
        assert!((v - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = Field::zeros(&Grid::new_1d(8, 1.0).unwrap());
        let b = Field::zeros(&Grid::new_1d(9, 1.0).unwrap());
        assert!(matches!(inner_h(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn poisson_inverts_eigenfunction() {
        let l = 1.5;
        let g = Grid::new_1d(256, l).unwrap();
        let f = cosine(&g, l);
        let u = solve_neumann_poisson(&f).unwrap();
        let c = (l / PI).powi(2);
        let err = u
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - c * b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        assert!(solve_neumann_poisson(&Field::zeros(&g)).unwrap().sup_norm() == 0.0);
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let f = Field::constant(&g, 1.0);
        assert!(matches!(solve_neumann_poisson(&f), Err(Error::Compatibility { .. })));
    }

    #[test]
    fn poisson_residual_in_two_dimensions() {
        let g = Grid::new_2d([32, 24], [1.0, 0.7]).unwrap();
        let mut f = Field::from_fn(&g, |x| (3.0 * x[0]).sin() * (5.0 * x[1]).cos() + x[0] * x[1]);
        let m = mean(&f);
        f = f.map(|v| v - m);
        let u = solve_neumann_poisson(&f).unwrap();
        let r = &laplacian_neumann(&u) + &f;
        assert!(norm_h(&r) <= 1e-9 * norm_h(&f));
        assert!(mean(&u).abs() < 1e-13);
    }

    #[test]
    fn dual_norm_values() {
        let g = Grid::new_1d(256, 1.0).unwrap();
        assert_eq!(norm_vstar(&Field::zeros(&g)).unwrap(), 0.0);
        assert!((norm_vstar(&Field::constant(&g, -2.0)).unwrap() - 2.0).abs() < 1e-10);
        let v = norm_vstar(&cosine(&g, 1.0)).unwrap();
        assert!((v - (1.0 / (2.0 * (1.0 + PI * PI))).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn inclusion_constant_is_one() {
        let g = Grid::new_2d([16, 16], [1.0, 1.0]).unwrap();
        assert!((inclusion_constant(&g).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn first_eigenvalue_approaches_pi_squared() {
        let g = Grid::new_1d(128, 1.0).unwrap();
        let lam = first_neumann_eigenvalue(&g).unwrap();
        let exact = 4.0 * 128.0f64.powi(2) * (PI / 256.0).sin().powi(2);
        assert!((lam - exact).abs() < 1e-6 * exact, "{lam} vs {exact}");
    }
}
