//! Convolution `(J*v)(x) = ∫_Ω J(x − y) v(y) dy` restricted to the grid
//! domain, and the kernel constants that bound the non-local operator.
//!
//! The integral uses midpoint weights, so on the grid it is a Toeplitz sum
//! over index differences in `-(n-1)..=(n-1)` per axis. Embedding that in a
//! zero-padded cyclic convolution of length `2n` reproduces it exactly (no
//! wrap-around terms survive), which lets one FFT pair do the work.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{inner_h, Field, Grid};

/// Radially symmetric kernel profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `exp(-|x|²/width²)`
    Gaussian { width: f64 },
    /// `(1/4π)(1/√(r²+δ²) − 1/√(R²+δ²))₊`: the Newtonian potential,
    /// mollified at the origin and shifted to vanish at the cutoff `R`.
    Newtonian { delta: f64, cutoff: f64 },
    /// Piecewise-linear profile through `(radius, value)` samples, zero past
    /// the last radius.
    Tabulated(RadialTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::config(
                "tabulated kernel needs at least two (radius, value) pairs",
            ));
        }
        if radii.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::config("tabulated kernel has non-finite samples"));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "tabulated kernel radii must be nonnegative and strictly increasing",
            ));
        }
        Ok(RadialTable { radii, values })
    }

    /// Two-column CSV `radius,value`; a non-numeric first row is taken as a
    /// header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse {
                    line: line + 1,
                    message: format!("expected 2 columns, found {}", rec.len()),
                });
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(r), Ok(v)) => {
                    radii.push(r);
                    values.push(v);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: line + 1,
                        message: format!("non-numeric entry {:?}", rec.as_slice()),
                    })
                }
            }
        }
        Self::new(radii, values)
    }

    fn segment(&self, r: f64) -> Option<usize> {
        let last = self.radii.len() - 1;
        if r > self.radii[last] {
            return None;
        }
        Some(self.radii.partition_point(|&x| x <= r).clamp(1, last) - 1)
    }

    fn value(&self, r: f64) -> f64 {
        if r <= self.radii[0] {
            return self.values[0];
        }
        match self.segment(r) {
            None => 0.0,
            Some(k) => {
                let t = (r - self.radii[k]) / (self.radii[k + 1] - self.radii[k]);
                self.values[k] + t * (self.values[k + 1] - self.values[k])
            }
        }
    }

    /// Radial derivative of the interpolant: the difference quotient of the
    /// enclosing segment.
    fn slope(&self, r: f64) -> f64 {
        if r < self.radii[0] {
            return 0.0;
        }
        match self.segment(r) {
            None => 0.0,
            Some(k) => (self.values[k + 1] - self.values[k]) / (self.radii[k + 1] - self.radii[k]),
        }
    }

    pub fn is_radially_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0]) && *self.values.last().unwrap() >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub normalization: f64,
}

impl KernelSpec {
    pub fn gaussian(width: f64, normalization: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian { width },
            normalization,
        }
    }

    pub fn newtonian(delta: f64, cutoff: f64, normalization: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Newtonian { delta, cutoff },
            normalization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.normalization.is_finite() {
            return Err(Error::config("kernel normalization must be finite"));
        }
        match &self.family {
            KernelFamily::Gaussian { width } if !(*width > 0.0 && width.is_finite()) => {
                Err(Error::config(format!("gaussian width must be positive, got {width}")))
            }
            KernelFamily::Newtonian { delta, .. } if *delta == 0.0 => Err(Error::config(
                "newtonian kernel with delta = 0 is singular at the origin and cannot be \
                 sampled on a grid; use delta > 0",
            )),
            KernelFamily::Newtonian { delta, cutoff } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    Err(Error::config(format!("newtonian delta must be positive, got {delta}")))
                } else if !(*cutoff > 0.0 && cutoff.is_finite()) {
                    Err(Error::config(format!("newtonian cutoff must be positive, got {cutoff}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Profile `J` at radius `r`.
    pub fn eval(&self, r: f64) -> f64 {
        let n = self.normalization;
        match &self.family {
            KernelFamily::Gaussian { width } => n * (-(r * r) / (width * width)).exp(),
            KernelFamily::Newtonian { delta, cutoff } => {
                if r >= *cutoff {
                    return 0.0;
                }
                let d2 = delta * delta;
                n / (4.0 * PI) * (1.0 / (r * r + d2).sqrt() - 1.0 / (cutoff * cutoff + d2).sqrt())
            }
            KernelFamily::Tabulated(t) => n * t.value(r),
        }
    }

    /// `|∇J|` at radius `r`.
    pub fn grad_abs(&self, r: f64) -> f64 {
        let n = self.normalization.abs();
        match &self.family {
            KernelFamily::Gaussian { width } => {
                let w2 = width * width;
                n * 2.0 * r / w2 * (-(r * r) / w2).exp()
            }
            KernelFamily::Newtonian { delta, cutoff } => {
                if r >= *cutoff {
                    return 0.0;
                }
                n / (4.0 * PI) * r / (r * r + delta * delta).powf(1.5)
            }
            KernelFamily::Tabulated(t) => n * t.slope(r).abs(),
        }
    }

    /// True when `J` is nonincreasing in the radius and nonnegative.
    pub fn is_radially_nonincreasing(&self) -> bool {
        if self.normalization < 0.0 {
            return false;
        }
        match &self.family {
            KernelFamily::Tabulated(t) => t.is_radially_nonincreasing(),
            _ => true,
        }
    }
}

/// Separable 1D/2D FFT on the padded `2n` lattice.
struct PaddedFft {
    m: [usize; 2],
    dim: usize,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl PaddedFft {
    fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let dim = grid.dim();
        let m = [2 * grid.cells(0), if dim == 2 { 2 * grid.cells(1) } else { 1 }];
        PaddedFft {
            m,
            dim,
            forward: [planner.plan_fft_forward(m[0]), planner.plan_fft_forward(m[1])],
            inverse: [planner.plan_fft_inverse(m[0]), planner.plan_fft_inverse(m[1])],
        }
    }

    fn len(&self) -> usize {
        self.m[0] * self.m[1]
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        // axis 1: contiguous rows
        if self.dim == 2 {
            plans[1].process(data);
        }
        // axis 0: strided columns
        let (m0, m1) = (self.m[0], self.m[1]);
        if m1 == 1 {
            plans[0].process(data);
            return;
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m0];
        for j in 0..m1 {
            for i in 0..m0 {
                col[i] = data[i * m1 + j];
            }
            plans[0].process(&mut col);
            for i in 0..m0 {
                data[i * m1 + j] = col[i];
            }
        }
    }

    /// Pad grid samples into the lattice (zero elsewhere).
    fn pad(&self, grid: &Grid, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for (idx, &v) in values.iter().enumerate() {
            let k = grid.multi_index(idx);
            out[k[0] * self.m[1] + k[1]] = Complex64::new(v, 0.0);
        }
        out
    }

    /// Samples `profile` at lattice offsets, mapping the upper half of each
    /// axis to negative displacements and leaving index `n` empty.
    fn kernel_lattice(&self, grid: &Grid, profile: impl Fn(f64) -> f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        let offset = |k: usize, axis: usize| -> Option<f64> {
            let n = grid.cells(axis);
            let m = self.m[axis];
            if axis >= grid.dim() {
                return Some(0.0);
            }
            if k < n {
                Some(k as f64 * grid.spacing(axis))
            } else if k > n {
                Some((k as f64 - m as f64) * grid.spacing(axis))
            } else {
                None
            }
        };
        for i in 0..self.m[0] {
            for j in 0..self.m[1] {
                if let (Some(dx), Some(dy)) = (offset(i, 0), offset(j, 1)) {
                    let r = (dx * dx + dy * dy).sqrt();
                    out[i * self.m[1] + j] = Complex64::new(profile(r), 0.0);
                }
            }
        }
        out
    }
}

/// A kernel discretized on a grid, with its fast-convolution plan and the
/// constants `a = J*1`, `a_* = inf a`, `a^* = sup_x ∫_Ω |J(x−y)| dy`,
/// `b^* = sup_x ∫_Ω |∇J(x−y)| dy`, `c_a = max{a^* − a_*, 1}`.
pub struct KernelBundle {
    spec: KernelSpec,
    grid: Grid,
    fft: PaddedFft,
    spectrum: Vec<Complex64>,
    a_field: Field,
    a_star: f64,
    a_sup: f64,
    b_sup: f64,
    c_a: f64,
}

impl std::fmt::Debug for KernelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelBundle")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("a_star", &self.a_star)
            .field("a_sup", &self.a_sup)
            .field("b_sup", &self.b_sup)
            .field("c_a", &self.c_a)
            .finish()
    }
}

impl KernelBundle {
    pub fn build(spec: KernelSpec, grid: &Grid) -> Result<Self> {
        spec.validate()?;
        let fft = PaddedFft::new(grid);
        let vol = grid.cell_volume();
        let spectrum_of = |profile: &dyn Fn(f64) -> f64| {
            let mut lat = fft.kernel_lattice(grid, profile);
            fft.transform(&mut lat, true);
            let scale = vol / fft.len() as f64;
            lat.iter_mut().for_each(|c| *c *= scale);
            lat
        };
        let spectrum = spectrum_of(&|r| spec.eval(r));
        if spectrum.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::config("kernel is not finite on the grid"));
        }
        let abs_spectrum = spectrum_of(&|r| spec.eval(r).abs());
        let grad_spectrum = spectrum_of(&|r| spec.grad_abs(r));

        let ones = vec![1.0; grid.len()];
        let a_field = Field::from_vec_unchecked(*grid, apply_spectrum(&fft, grid, &spectrum, &ones));
        let a_abs = apply_spectrum(&fft, grid, &abs_spectrum, &ones);
        let b_abs = apply_spectrum(&fft, grid, &grad_spectrum, &ones);
        let a_star = a_field.min();
        let a_sup = a_abs.iter().copied().fold(0.0, f64::max);
        let b_sup = b_abs.iter().copied().fold(0.0, f64::max);
        let c_a = (a_sup - a_star).max(1.0);
        Ok(KernelBundle {
            spec,
            grid: *grid,
            fft,
            spectrum,
            a_field,
            a_star,
            a_sup,
            b_sup,
            c_a,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `a = J*1`.
    pub fn a_field(&self) -> &Field {
        &self.a_field
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    pub fn a_sup(&self) -> f64 {
        self.a_sup
    }

    pub fn b_sup(&self) -> f64 {
        self.b_sup
    }

    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    /// `J*v` over Ω with midpoint weights.
    pub fn convolve(&self, v: &Field) -> Result<Field> {
        if v.grid() != &self.grid {
            return Err(Error::Dimension(format!(
                "convolution grid {:?} does not match kernel grid {:?}",
                v.grid(),
                self.grid
            )));
        }
        Ok(Field::from_vec_unchecked(
            self.grid,
            apply_spectrum(&self.fft, &self.grid, &self.spectrum, v.values()),
        ))
    }

    /// Same sum as [`Self::convolve`], evaluated directly in `O(N²)`.
    pub fn convolve_direct(&self, v: &Field) -> Result<Field> {
        if v.grid() != &self.grid {
            return Err(Error::Dimension("convolution grid mismatch".into()));
        }
        let g = &self.grid;
        let vol = g.cell_volume();
        let vals = v.values();
        let out = (0..g.len())
            .map(|i| {
                let xi = g.center(i);
                (0..g.len())
                    .map(|j| {
                        let xj = g.center(j);
                        let r = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
                        self.spec.eval(r) * vals[j]
                    })
                    .sum::<f64>()
                    * vol
            })
            .collect();
        Ok(Field::from_vec_unchecked(*g, out))
    }

    /// `½ (aφ − J*φ, φ) = ¼ ∬ J(x−y)|φ(x) − φ(y)|²`.
    pub fn nonlocal_energy_density(&self, phi: &Field) -> Result<f64> {
        let conv = self.convolve(phi)?;
        let a_phi = self.a_field.zip_map(phi, |a, p| a * p)?;
        Ok(0.5 * inner_h(&(&a_phi - &conv), phi)?)
    }

    /// `ε₀` for this kernel given the dominance constant `C₀` and the
    /// inclusion constant `K₀`.
    pub fn epsilon_zero(&self, c0: f64, k0: f64) -> Result<EpsilonZero> {
        epsilon_zero(self.c_a, self.a_sup, self.b_sup, c0, k0)
    }
}

fn apply_spectrum(fft: &PaddedFft, grid: &Grid, spectrum: &[Complex64], values: &[f64]) -> Vec<f64> {
    let mut buf = fft.pad(grid, values);
    fft.transform(&mut buf, true);
    for (b, s) in buf.iter_mut().zip(spectrum) {
        *b *= s;
    }
    fft.transform(&mut buf, false);
    (0..grid.len())
        .map(|idx| {
            let k = grid.multi_index(idx);
            buf[k[0] * fft.m[1] + k[1]].re
        })
        .collect()
}

/// The three candidate bounds whose minimum is `ε₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonZero {
    /// `1 / (4 c_a)`
    pub from_ca: f64,
    /// `1 / max{1, a^* − min{a^*, C₀}}`
    pub from_dominance: f64,
    /// `2 C₀ / (3 (a^* + b^*)² K₀²)`
    pub from_inclusion: f64,
    pub value: f64,
}

pub fn epsilon_zero(c_a: f64, a_sup: f64, b_sup: f64, c0: f64, k0: f64) -> Result<EpsilonZero> {
    if !(c0 > 0.0) || !(k0 > 0.0) {
        return Err(Error::config(format!(
            "epsilon_zero needs C0 > 0 and K0 > 0, got C0 = {c0}, K0 = {k0}"
        )));
    }
    let from_ca = 1.0 / (4.0 * c_a);
    let from_dominance = 1.0 / (a_sup - a_sup.min(c0)).max(1.0);
    let s = a_sup + b_sup;
    let from_inclusion = if s > 0.0 {
        2.0 * c0 / (3.0 * s * s * k0 * k0)
    } else {
        f64::INFINITY
    };
    Ok(EpsilonZero {
        from_ca,
        from_dominance,
        from_inclusion,
        value: from_ca.min(from_dominance).min(from_inclusion),
    })
}
