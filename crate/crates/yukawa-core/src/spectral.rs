//! Discrete Fourier transforms and the periodic space-time lattice.
//!
//! The transform backend is injected through [`Dft`] so the core stays free of
//! `std`; [`DirectDft`] is a separable direct transform usable on small grids.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::C64;

/// Multi-dimensional DFT on row-major arrays.
///
/// `forward` uses the kernel `exp(-2πi jk/n)` without normalisation and
/// `inverse` uses `exp(+2πi jk/n)` divided by the total size.
pub trait Dft: Sync {
    /// Unnormalised transform along every axis; `sign` is `-1` or `+1`.
    fn transform(&self, data: &mut [C64], shape: &[usize], sign: i32);

    fn forward(&self, data: &mut [C64], shape: &[usize]) {
        self.transform(data, shape, -1);
    }

    fn inverse(&self, data: &mut [C64], shape: &[usize]) {
        self.transform(data, shape, 1);
        let n: usize = shape.iter().product();
        let s = 1.0 / n as f64;
        data.iter_mut().for_each(|x| *x *= s);
    }
}

/// Separable direct DFT, `O(N Σ n_i)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct DirectDft;

impl Dft for DirectDft {
    fn transform(&self, data: &mut [C64], shape: &[usize], sign: i32) {
        for_each_line(data, shape, |line| {
            let n = line.len();
            let tw: Vec<C64> = (0..n)
                .map(|j| C64::from_polar(1.0, sign as f64 * 2.0 * PI * j as f64 / n as f64))
                .collect();
            let src = line.to_vec();
            for (k, out) in line.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in src.iter().enumerate() {
                    acc += v * tw[(j * k) % n];
                }
                *out = acc;
            }
        });
    }
}

/// Calls `f` on every one-dimensional line of a row-major array, axis by axis.
pub fn for_each_line<F: FnMut(&mut [C64])>(data: &mut [C64], shape: &[usize], mut f: F) {
    let total: usize = shape.iter().product();
    assert_eq!(total, data.len(), "shape does not match data length");
    let mut buf = Vec::new();
    for ax in 0..shape.len() {
        let n = shape[ax];
        if n <= 1 {
            continue;
        }
        let stride: usize = shape[ax + 1..].iter().product();
        let outer = total / (n * stride);
        buf.resize(n, C64::new(0.0, 0.0));
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for j in 0..n {
                    buf[j] = data[base + j * stride];
                }
                f(&mut buf);
                for j in 0..n {
                    data[base + j * stride] = buf[j];
                }
            }
        }
    }
}

/// Signed frequency index of FFT slot `i` for length `n` (numpy convention).
pub fn fftfreq(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Slot of the signed frequency `k` for length `n`.
pub fn freq_slot(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Periodic space-time lattice on `[0, nt·dt) × T²` with `T² = [0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
}

impl Grid {
    /// Parabolic lattice with `dt = dx²`.
    pub fn parabolic(nt: usize, nx: usize) -> Self {
        let dx = 1.0 / nx as f64;
        Grid { nt, nx, dt: dx * dx }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn period(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.nt * self.nx * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.nt, self.nx, self.nx]
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt * self.dx() * self.dx()
    }

    pub fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.nx + i) * self.nx + j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let j = idx % self.nx;
        let i = (idx / self.nx) % self.nx;
        let t = idx / (self.nx * self.nx);
        (t, i, j)
    }

    /// Temporal frequency (cycles per unit time) of slot `n`.
    pub fn omega(&self, n: usize) -> f64 {
        fftfreq(n, self.nt) as f64 / self.period()
    }

    /// Spatial integer frequency of slot `i`.
    pub fn k(&self, i: usize) -> i64 {
        fftfreq(i, self.nx)
    }

    /// Minimal-image parabolic norm `√|t| + |x₁| + |x₂|` of lattice offset `(t, i, j)`.
    pub fn parabolic_norm(&self, t: usize, i: usize, j: usize) -> f64 {
        let tt = fftfreq(t, self.nt) as f64 * self.dt;
        let x1 = fftfreq(i, self.nx) as f64 * self.dx();
        let x2 = fftfreq(j, self.nx) as f64 * self.dx();
        tt.abs().sqrt() + x1.abs() + x2.abs()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Grid(alloc::format!("{:?} vs {:?}", self, other)))
        }
    }
}

/// Complex scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub data: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, data: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// The spatial slice at time slot `n`, on a grid with a single time slot.
    pub fn time_slice(&self, n: usize) -> Field {
        let g = Grid { nt: 1, ..self.grid };
        let m = g.len();
        Field { grid: g, data: self.data[n * m..(n + 1) * m].to_vec() }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> C64>(grid: Grid, mut f: F) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for t in 0..grid.nt {
            for i in 0..grid.nx {
                for j in 0..grid.nx {
                    data.push(f(t, i, j));
                }
            }
        }
        Field { grid, data }
    }

    pub fn to_fourier(&self, dft: &dyn Dft) -> Vec<C64> {
        let mut d = self.data.clone();
        dft.forward(&mut d, &self.grid.shape());
        d
    }

    pub fn from_fourier(grid: Grid, mut spec: Vec<C64>, dft: &dyn Dft) -> Self {
        dft.inverse(&mut spec, &grid.shape());
        Field { grid, data: spec }
    }

    /// Applies the Fourier multiplier `m(ω, k₁, k₂)`.
    pub fn multiply<F: Fn(f64, i64, i64) -> C64>(&self, dft: &dyn Dft, m: F) -> Field {
        let g = self.grid;
        let mut spec = self.to_fourier(dft);
        for (idx, v) in spec.iter_mut().enumerate() {
            let (t, i, j) = g.coords(idx);
            *v *= m(g.omega(t), g.k(i), g.k(j));
        }
        Field::from_fourier(g, spec, dft)
    }

    /// Lattice `L²` pairing `Σ conj(self)·other·cell`.
    pub fn pair(&self, other: &Field) -> C64 {
        crate::linalg::cdot(&self.data, &other.data) * self.grid.cell_volume()
    }

    pub fn add(&self, other: &Field) -> Field {
        Field { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: C64) -> Field {
        Field { grid: self.grid, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn hadamard(&self, other: &Field) -> Field {
        Field { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, v| m.max(v.norm()))
    }
}
