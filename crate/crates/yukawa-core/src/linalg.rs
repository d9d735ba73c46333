//! Small dense linear-algebra and regression helpers shared by the modules.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::C64;

/// Operator norms are taken by dense SVD up to this matrix dimension.
pub const DENSE_NORM_MAX_DIM: usize = 1 << 10;

pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: C64, x: &[C64]) -> Vec<C64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest singular value of a dense matrix.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, s| acc.max(*s))
}

/// Largest singular value from matrix-free products, by power iteration on `A^† A`.
pub fn power_norm<F, G>(dim: usize, apply: F, apply_adj: G, tol: f64, max_iter: usize) -> f64
where
    F: Fn(&[C64]) -> Vec<C64>,
    G: Fn(&[C64]) -> Vec<C64>,
{
    let mut v: Vec<C64> = (0..dim)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 0.754_877_666).sin();
            C64::new(x, 0.5 * ((i as f64) * 1.3).cos())
        })
        .collect();
    let n0 = cnorm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut last = 0.0;
    for _ in 0..max_iter {
        let w = apply_adj(&apply(&v));
        let nw = cnorm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (nw - last).abs() <= tol * nw {
            return nw.sqrt();
        }
        last = nw;
    }
    last.sqrt()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc: f64, (x, y)| acc.max((x - y).norm()))
}

/// Least-squares straight line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2 && sxx > 0.0 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    LineFit { slope, intercept, r_squared, slope_stderr }
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().max(1e-300).ln()).collect();
    fit_line(&lx, &ly)
}

const GL_X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_26];

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` panels of 8 nodes.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let r = 0.5 * h;
        let mut s = 0.0;
        for i in 0..4 {
            s += GL_W[i] * (f(c - r * GL_X[i]) + f(c + r * GL_X[i]));
        }
        total += s * r;
    }
    total
}

/// Nodes and weights `(x, w)` of the same composite rule.
pub fn gauss_legendre_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let r = 0.5 * h;
    let mut out = Vec::with_capacity(8 * panels);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for i in 0..4 {
            out.push((c - r * GL_X[i], GL_W[i] * r));
            out.push((c + r * GL_X[i], GL_W[i] * r));
        }
    }
    out
}

/// Determinant of a small complex matrix by partial-pivot elimination.
pub fn det(mut m: DMatrix<C64>) -> C64 {
    let n = m.nrows();
    let mut d = C64::new(1.0, 0.0);
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if m[(r, c)].norm() > m[(piv, c)].norm() {
                piv = r;
            }
        }
        if m[(piv, c)].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != c {
            m.swap_rows(piv, c);
            d = -d;
        }
        let p = m[(c, c)];
        d *= p;
        for r in c + 1..n {
            let factor = m[(r, c)] / p;
            if factor.norm() != 0.0 {
                for k in c..n {
                    let v = m[(c, k)];
                    m[(r, k)] -= factor * v;
                }
            }
        }
    }
    d
}

/// Monotone (non-increasing) check with a relative slack.
pub fn is_non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

pub fn is_strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

pub fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let v = gauss_legendre(|x| x * x * x + 2.0 * x, 0.0, 2.0, 3);
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn determinant_of_permutation() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        assert!((det(m) + C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let m = DMatrix::from_fn(6, 6, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, (i as f64 - j as f64) * 0.1));
        let dense = spectral_norm(&m);
        let mt = m.adjoint();
        let pw = power_norm(
            6,
            |v| (&m * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec(),
            |v| (&mt * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec(),
            1e-14,
            10_000,
        );
        assert!((dense - pw).abs() < 1e-6 * dense);
    }
}
