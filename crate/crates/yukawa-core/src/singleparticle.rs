//! Discretised single-particle space: a time basis of window indicators, a
//! spatial Fourier cutoff on T² and four spinor slots, with the weighted inner
//! product, complex conjugation κ, the unitary U and the κU-invariant filtration.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, param, Error, Result};
use crate::linalg::{cdot, cnorm, hermitian_eigenvalues};
use crate::C64;

const ORTHO_TOL: f64 = 1e-12;
const SEED_SKIP_TOL: f64 = 1e-8;

/// Label of a basis function `h_j(t) e^{2πik·x} δ_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub time: usize,
    pub k: (i64, i64),
    pub spinor: usize,
}

/// Finite-dimensional stand-in for the single-particle Hilbert space.
///
/// Vectors are coefficient arrays over the plane-wave basis; the Gram matrix is
/// diagonal with the spatial weight `(4π²|k|² + M²)^{-(1+2δ)/2}` unless a fault
/// is injected with [`ModeSpace::perturb_gram`].
#[derive(Debug, Clone)]
pub struct ModeSpace {
    n_time: usize,
    n_space: usize,
    delta: f64,
    mass: f64,
    window: (f64, f64),
    labels: Vec<ModeLabel>,
    gram: DMatrix<C64>,
}

impl ModeSpace {
    /// Builds the mode space with the default time window `[-0.5, 1.5]`.
    pub fn new(n_time: usize, n_space: usize, delta: f64, mass: f64) -> Result<Self> {
        Self::with_window(n_time, n_space, delta, mass, (-0.5, 1.5))
    }

    pub fn with_window(n_time: usize, n_space: usize, delta: f64, mass: f64, window: (f64, f64)) -> Result<Self> {
        if n_time == 0 || n_space == 0 {
            return Err(param("n_time and n_space must be at least 1"));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(param("delta must lie in (0, 1/2)"));
        }
        if !(mass > 0.0) {
            return Err(param("mass M must be positive"));
        }
        if !(window.1 > window.0) {
            return Err(param("time window must have positive length"));
        }
        let kmax = n_space as i64;
        let mut labels = Vec::new();
        for time in 0..n_time {
            for k1 in -kmax..=kmax {
                for k2 in -kmax..=kmax {
                    for spinor in 0..4 {
                        labels.push(ModeLabel { time, k: (k1, k2), spinor });
                    }
                }
            }
        }
        let dim = labels.len();
        let mut gram = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        for (i, l) in labels.iter().enumerate() {
            gram[(i, i)] = C64::new(spatial_weight(l.k, delta, mass), 0.0);
        }
        Ok(ModeSpace { n_time, n_space, delta, mass, window, labels, gram })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn n_space(&self) -> usize {
        self.n_space
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn window(&self) -> (f64, f64) {
        self.window
    }
    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }
    pub fn gram(&self) -> &DMatrix<C64> {
        &self.gram
    }

    /// Length of one time cell of the window basis.
    pub fn time_cell(&self) -> f64 {
        (self.window.1 - self.window.0) / self.n_time as f64
    }

    /// Index of the basis function with the given label.
    pub fn index_of(&self, time: usize, k: (i64, i64), spinor: usize) -> Option<usize> {
        let kmax = self.n_space as i64;
        if time >= self.n_time || k.0.abs() > kmax || k.1.abs() > kmax || spinor >= 4 {
            return None;
        }
        let side = (2 * kmax + 1) as usize;
        let kk = (k.0 + kmax) as usize * side + (k.1 + kmax) as usize;
        Some(((time * side * side) + kk) * 4 + spinor)
    }

    /// Shifts one diagonal Gram entry; used to exercise the invariant checks.
    pub fn perturb_gram(&mut self, i: usize, shift: f64) {
        self.gram[(i, i)] += C64::new(shift, 0.0);
    }

    /// Smallest Gram eigenvalue.
    pub fn gram_min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.gram)[0]
    }

    /// Checks Hermiticity and positive definiteness of the Gram matrix.
    pub fn validate(&self) -> Result<()> {
        let herm = crate::linalg::max_abs_diff(&self.gram, &self.gram.adjoint());
        if herm > 1e-12 {
            return Err(Error::Invariant("gram matrix is not Hermitian".into()));
        }
        if self.gram_min_eigenvalue() <= 0.0 {
            return Err(Error::Invariant("gram matrix is not positive definite".into()));
        }
        Ok(())
    }

    /// `⟨f, g⟩ = f† G g`.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> Result<C64> {
        check_dim(self.dim(), f.len())?;
        check_dim(self.dim(), g.len())?;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            acc += f[i].conj() * self.gram[(i, i)] * g[i];
        }
        Ok(acc)
    }

    /// Riesz representer `G f`, so that `⟨f, g⟩ = cdot(G f, g)`.
    pub fn dual(&self, f: &[C64]) -> Vec<C64> {
        f.iter().enumerate().map(|(i, v)| self.gram[(i, i)] * v).collect()
    }

    pub fn norm(&self, f: &[C64]) -> f64 {
        self.inner(f, f).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Complex conjugation: `(κf)_{j,k,s} = conj(f_{j,-k,s})`.
    pub fn kappa(&self, f: &[C64]) -> Result<Vec<C64>> {
        check_dim(self.dim(), f.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for (i, l) in self.labels.iter().enumerate() {
            let src = self.index_of(l.time, (-l.k.0, -l.k.1), l.spinor).expect("symmetric cutoff");
            out[i] = f[src].conj();
        }
        Ok(out)
    }

    /// Applies the block multiplier `u(k)` at every time/frequency block.
    pub fn apply_u(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.apply_blocks(f, false)
    }

    pub fn apply_u_adjoint(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.apply_blocks(f, true)
    }

    fn apply_blocks(&self, f: &[C64], adjoint: bool) -> Result<Vec<C64>> {
        check_dim(self.dim(), f.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for b in 0..self.dim() / 4 {
            let k = self.labels[4 * b].k;
            let u = u_block(k, self.mass);
            for r in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..4 {
                    let m = if adjoint { u[c][r].conj() } else { u[r][c] };
                    acc += m * f[4 * b + c];
                }
                out[4 * b + r] = acc;
            }
        }
        Ok(out)
    }

    /// The antiunitary `κU`.
    pub fn kappa_u(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.kappa(&self.apply_u(f)?)
    }

    /// Orthonormal basis vector `ε_i = e_i / √w_i`.
    pub fn orthonormal_vector(&self, i: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[i] = C64::new(1.0 / self.gram[(i, i)].re.sqrt(), 0.0);
        v
    }

    /// Dense matrix of `U` in the plane-wave coordinates.
    pub fn u_matrix(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for b in 0..n / 4 {
            let u = u_block(self.labels[4 * b].k, self.mass);
            for r in 0..4 {
                for c in 0..4 {
                    m[(4 * b + r, 4 * b + c)] = u[r][c];
                }
            }
        }
        m
    }

    /// Orthogonal projection onto the span of an orthonormal family.
    pub fn project(&self, vectors: &[Vec<C64>], f: &[C64]) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for v in vectors {
            let c = self.inner(v, f)?;
            crate::linalg::axpy(c, v, &mut out);
        }
        Ok(out)
    }
}

/// Spatial weight `(4π²|k|² + M²)^{-(1+2δ)/2}`.
pub fn spatial_weight(k: (i64, i64), delta: f64, mass: f64) -> f64 {
    let p2 = 4.0 * PI * PI * ((k.0 * k.0 + k.1 * k.1) as f64);
    (p2 + mass * mass).powf(-(1.0 + 2.0 * delta) / 2.0)
}

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

/// Symbol of the Dirac operator at frequency `k` (derivatives `∂_j ↦ 2πi k_j`).
pub fn dirac_symbol(k: (f64, f64)) -> Mat2 {
    let p1 = 2.0 * PI * k.0;
    let p2 = 2.0 * PI * k.1;
    let z = C64::new(0.0, 0.0);
    [[z, C64::new(-p2, -p1)], [C64::new(p2, -p1), z]]
}

/// Symbol of the conjugate Dirac operator.
pub fn dirac_bar_symbol(k: (f64, f64)) -> Mat2 {
    let p1 = 2.0 * PI * k.0;
    let p2 = 2.0 * PI * k.1;
    let z = C64::new(0.0, 0.0);
    [[z, C64::new(p2, -p1)], [C64::new(-p2, -p1), z]]
}

pub fn mat2_add_scalar(m: Mat2, s: f64) -> Mat2 {
    [[m[0][0] + s, m[0][1]], [m[1][0], m[1][1] + s]]
}

pub fn mat2_scale(m: Mat2, s: C64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

pub fn mat2_mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Symbol of `∇̸ + M`.
pub fn dirac_plus_mass(k: (f64, f64), mass: f64) -> Mat2 {
    mat2_add_scalar(dirac_symbol(k), mass)
}

/// Symbol of `-∇̸̄ + M`.
pub fn minus_dirac_bar_plus_mass(k: (f64, f64), mass: f64) -> Mat2 {
    mat2_add_scalar(mat2_scale(dirac_bar_symbol(k), C64::new(-1.0, 0.0)), mass)
}

/// The 4×4 block of `U` at frequency `k`:
/// `√(|p|²+M²) · [[0, (-∇̸+M)⁻¹], [-(∇̸̄+M)⁻¹, 0]]`.
pub fn u_block(k: (i64, i64), mass: f64) -> Mat4 {
    let kf = (k.0 as f64, k.1 as f64);
    let p2 = 4.0 * PI * PI * (kf.0 * kf.0 + kf.1 * kf.1);
    let s = (p2 + mass * mass).sqrt();
    // (-∇̸+M)⁻¹ = (∇̸+M)/(|p|²+M²) and (∇̸̄+M)⁻¹ = (M-∇̸̄)/(|p|²+M²).
    let upper = mat2_scale(dirac_plus_mass(kf, mass), C64::new(1.0 / s, 0.0));
    let lower = mat2_scale(minus_dirac_bar_plus_mass(kf, mass), C64::new(-1.0 / s, 0.0));
    let z = C64::new(0.0, 0.0);
    let mut u = [[z; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            u[i][j + 2] = upper[i][j];
            u[i + 2][j] = lower[i][j];
        }
    }
    u
}

/// An orthonormal family in the mode space.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub vectors: Vec<Vec<C64>>,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Coordinates `⟨v_a, f⟩` in the family.
    pub fn coords(&self, ms: &ModeSpace, f: &[C64]) -> Result<Vec<C64>> {
        self.vectors.iter().map(|v| ms.inner(v, f)).collect()
    }

    pub fn project(&self, ms: &ModeSpace, f: &[C64]) -> Result<Vec<C64>> {
        ms.project(&self.vectors, f)
    }

    /// Whether every vector of `self` lies in `other` (within `tol`).
    pub fn is_contained_in(&self, ms: &ModeSpace, other: &Subspace, tol: f64) -> Result<bool> {
        for v in &self.vectors {
            let p = other.project(ms, v)?;
            if cnorm(&crate::linalg::sub(&p, v)) > tol * (1.0 + cnorm(v)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// The chain filtration `Γ_n`, built from seeds ordered by `|k|` and closed
/// under `κU`: `e_{2i} = v_i`, `e_{2i+1} = κU e_{2i}`.
#[derive(Debug, Clone)]
pub struct Filtration {
    basis: Vec<Vec<C64>>,
}

impl Filtration {
    /// Builds the first `n_max` basis vectors (rounded up to an even count).
    pub fn build(ms: &ModeSpace, n_max: usize) -> Result<Self> {
        if n_max > ms.dim() {
            return Err(param("n_max exceeds the mode-space dimension"));
        }
        let target = n_max + (n_max % 2);
        let mut order: Vec<usize> = (0..ms.dim()).collect();
        order.sort_by_key(|&i| {
            let l = ms.labels[i];
            (l.k.0 * l.k.0 + l.k.1 * l.k.1, l.time, l.spinor, l.k.0, l.k.1)
        });
        let mut basis: Vec<Vec<C64>> = Vec::new();
        for &seed in &order {
            if basis.len() >= target {
                break;
            }
            let mut v = ms.orthonormal_vector(seed);
            for _ in 0..2 {
                for e in &basis {
                    let c = ms.inner(e, &v)?;
                    crate::linalg::axpy(-c, e, &mut v);
                }
            }
            let nv = ms.norm(&v);
            if nv < SEED_SKIP_TOL {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = ms.kappa_u(&v)?;
            for (a, e) in basis.iter().chain(core::iter::once(&v)).enumerate() {
                if ms.inner(e, &w)?.norm() > 1e3 * ORTHO_TOL {
                    return Err(Error::Degenerate(a));
                }
            }
            if (ms.norm(&w) - 1.0).abs() > 1e3 * ORTHO_TOL {
                return Err(Error::Degenerate(basis.len() + 1));
            }
            basis.push(v);
            basis.push(w);
        }
        if basis.len() < target {
            return Err(Error::Degenerate(basis.len()));
        }
        Ok(Filtration { basis })
    }

    /// Number of basis vectors built.
    pub fn depth(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<C64>] {
        &self.basis
    }

    /// Dimension of the top subspace of `Γ_n` (`2⌊n/2⌋`, capped by the depth).
    pub fn top_dim(&self, n: usize) -> usize {
        (2 * (n / 2)).min(self.depth())
    }

    /// The chain prefix of dimension `dim`.
    pub fn prefix(&self, dim: usize) -> Subspace {
        Subspace { vectors: self.basis[..dim.min(self.depth())].to_vec() }
    }

    /// All subspaces of `Γ_n`, smallest first (including the zero subspace).
    pub fn level(&self, n: usize) -> Vec<Subspace> {
        (0..=self.top_dim(n) / 2).map(|i| self.prefix(2 * i)).collect()
    }

    pub fn top(&self, n: usize) -> Subspace {
        self.prefix(self.top_dim(n))
    }

    /// Coordinates `⟨e_a, f⟩` for `a < dim`.
    pub fn coords(&self, ms: &ModeSpace, f: &[C64], dim: usize) -> Result<Vec<C64>> {
        self.basis[..dim.min(self.depth())].iter().map(|e| ms.inner(e, f)).collect()
    }

    /// Vector with filtration coordinates `c`.
    pub fn synthesize(&self, c: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.basis.first().map_or(0, |v| v.len())];
        for (ci, e) in c.iter().zip(&self.basis) {
            crate::linalg::axpy(*ci, e, &mut out);
        }
        out
    }

    /// Residual `max_a ‖κU e_a - (paired vector)‖`; zero for an exact κU-closed basis.
    pub fn kappa_u_residual(&self, ms: &ModeSpace) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (a, e) in self.basis.iter().enumerate() {
            let img = ms.kappa_u(e)?;
            let expect: Vec<C64> = if a % 2 == 0 {
                self.basis[a + 1].clone()
            } else {
                self.basis[a - 1].iter().map(|x| -x).collect()
            };
            worst = worst.max(ms.norm(&crate::linalg::sub(&img, &expect)));
        }
        Ok(worst)
    }

    /// Checks that `Γ_n`'s subspaces are κU-invariant and nested.
    pub fn check_invariants(&self, ms: &ModeSpace, tol: f64) -> Result<()> {
        for a in 0..self.depth() {
            for b in 0..self.depth() {
                let g = ms.inner(&self.basis[a], &self.basis[b])?;
                let expect = if a == b { 1.0 } else { 0.0 };
                if (g - C64::new(expect, 0.0)).norm() > tol {
                    return Err(Error::Invariant("filtration basis is not orthonormal".into()));
                }
            }
        }
        if self.kappa_u_residual(ms)? > tol {
            return Err(Error::Invariant("filtration is not κU-invariant".into()));
        }
        Ok(())
    }
}

/// `⟨κU f, f⟩` (vanishes identically).
pub fn kappa_u_self_pairing(ms: &ModeSpace, f: &[C64]) -> Result<C64> {
    ms.inner(&ms.kappa_u(f)?, f)
}

/// Dot product helper exposed for tests.
pub fn euclid_dot(a: &[C64], b: &[C64]) -> C64 {
    cdot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(ms: &ModeSpace, seed: u64) -> Vec<C64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..ms.dim())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                C64::new(a, b)
            })
            .collect()
    }

    #[test]
    fn zero_mode_weight() {
        let ms = ModeSpace::new(1, 1, 0.25, 2.0).unwrap();
        let i = ms.index_of(0, (0, 0), 0).unwrap();
        let expect = (4.0f64).powf(-0.75);
        assert!((ms.gram()[(i, i)].re - expect).abs() < 1e-15);
    }

    #[test]
    fn weight_at_unit_frequency() {
        let w = spatial_weight((1, 0), 0.25, 1.0);
        assert!((w - (1.0 + 4.0 * PI * PI).powf(-0.75)).abs() < 1e-15);
    }

    #[test]
    fn rejects_delta_outside_range() {
        assert!(ModeSpace::new(1, 1, 0.5, 1.0).is_err());
        assert!(ModeSpace::new(1, 1, 0.0, 1.0).is_err());
        assert!(ModeSpace::new(1, 1, 0.2, -1.0).is_err());
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let ms = ModeSpace::new(2, 1, 0.2, 1.0).unwrap();
        let a = ms.orthonormal_vector(3);
        let b = ms.orthonormal_vector(17);
        assert!(ms.inner(&a, &b).unwrap().norm() < 1e-15);
        assert!((ms.inner(&a, &a).unwrap().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn u_is_unitary_antisymmetric_and_kappa_u_squares_to_minus_one() {
        let ms = ModeSpace::new(1, 2, 0.3, 1.3).unwrap();
        let u = ms.u_matrix();
        let id = DMatrix::<C64>::identity(ms.dim(), ms.dim());
        assert!(crate::linalg::max_abs_diff(&(u.adjoint() * &u), &id) < 1e-12);
        // Uᵀ = -U in the pairing sense: u(-k)ᵀ = -u(k).
        for l in ms.labels().iter().step_by(4) {
            let a = u_block(l.k, ms.mass());
            let b = u_block((-l.k.0, -l.k.1), ms.mass());
            for r in 0..4 {
                for c in 0..4 {
                    assert!((b[c][r] + a[r][c]).norm() < 1e-12);
                }
            }
        }
        for i in 0..ms.dim() {
            let e = ms.orthonormal_vector(i);
            let twice = ms.kappa_u(&ms.kappa_u(&e).unwrap()).unwrap();
            for (x, y) in twice.iter().zip(&e) {
                assert!((x + y).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugation_properties() {
        let ms = ModeSpace::new(1, 2, 0.3, 1.0).unwrap();
        let f = rand_vec(&ms, 1);
        let g = rand_vec(&ms, 2);
        let kf = ms.kappa(&f).unwrap();
        let kg = ms.kappa(&g).unwrap();
        let lhs = ms.inner(&kf, &kg).unwrap();
        let rhs = ms.inner(&g, &f).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let kkf = ms.kappa(&kf).unwrap();
        assert!(cnorm(&crate::linalg::sub(&kkf, &f)) < 1e-15);
        assert!(kappa_u_self_pairing(&ms, &f).unwrap().norm() < 1e-12);
        let uf = ms.apply_u(&f).unwrap();
        assert!((ms.norm(&uf) - ms.norm(&f)).abs() < 1e-12);
    }

    #[test]
    fn filtration_is_kappa_u_closed_and_nested() {
        let ms = ModeSpace::new(1, 1, 0.25, 1.0).unwrap();
        let filt = Filtration::build(&ms, 12).unwrap();
        filt.check_invariants(&ms, 1e-10).unwrap();
        assert_eq!(filt.top_dim(8), 8);
        assert_eq!(filt.top_dim(7), 6);
        let small = filt.top(4);
        let big = filt.top(10);
        assert!(small.is_contained_in(&ms, &big, 1e-12).unwrap());
        // P_b commutes with κU.
        let f = rand_vec(&ms, 3);
        let b = filt.top(6);
        let lhs = b.project(&ms, &ms.kappa_u(&f).unwrap()).unwrap();
        let rhs = ms.kappa_u(&b.project(&ms, &f).unwrap()).unwrap();
        assert!(ms.norm(&crate::linalg::sub(&lhs, &rhs)) < 1e-10);
    }

    #[test]
    fn gram_fault_is_detected() {
        let mut ms = ModeSpace::new(1, 1, 0.25, 1.0).unwrap();
        ms.validate().unwrap();
        ms.perturb_gram(0, -10.0);
        assert!(matches!(ms.validate(), Err(Error::Invariant(_))));
    }
}
