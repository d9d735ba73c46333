//! Singular space-time kernels, their power counting and lattice realisations.
//!
//! Points are `(t, x₁, x₂)` with the parabolic norm `‖z‖ = √|t| + |x₁| + |x₂|`.
//! Heat-type kernels are truncated in time by a smooth cutoff `χ` that equals
//! one on `(-∞, 1]` and vanishes on `[2, ∞)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{param, Error, Result};
use crate::linalg::{gauss_legendre, gauss_legendre_nodes, loglog_slope, LineFit};
use crate::singleparticle::{
    dirac_bar_symbol, dirac_plus_mass, dirac_symbol, mat2_mul, minus_dirac_bar_plus_mass, spatial_weight, Mat2,
};
use crate::spectral::{Dft, Field, Grid};
use crate::C64;

/// Masses and regularisation exponent shared by all kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Bosonic mass `m`.
    pub m: f64,
    /// Fermionic mass `M`.
    pub big_m: f64,
    /// Regularisation exponent `δ ∈ (0, 1/2)`.
    pub delta: f64,
}

impl KernelParams {
    pub fn new(m: f64, big_m: f64, delta: f64) -> Result<Self> {
        if !(m > 0.0 && big_m > 0.0) {
            return Err(param("masses must be positive"));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(param("delta must lie in (0, 1/2)"));
        }
        Ok(KernelParams { m, big_m, delta })
    }

    /// Subordination exponent `s = (1+2δ)/2` of the `𝔥` weight.
    pub fn s(&self) -> f64 {
        0.5 + self.delta
    }
}

/// One-dimensional bump `exp(-1/(1-u²))` on `(-1, 1)`.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// `∫ bump`.
pub fn bump_mass() -> f64 {
    gauss_legendre(bump, -1.0, 1.0, 32)
}

/// Smooth cutoff: one on `(-∞, 1]`, zero on `[2, ∞)`.
pub fn chi(t: f64) -> f64 {
    if t <= 1.0 {
        return 1.0;
    }
    if t >= 2.0 {
        return 0.0;
    }
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let a = f(2.0 - t);
    a / (a + f(t - 1.0))
}

/// One-dimensional heat kernel `e^{-x²/4t}/√(4πt)`, zero for `t ≤ 0`.
pub fn heat_1d(t: f64, x: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
    }
}

/// Two-dimensional heat kernel `e^{-|x|²/4t}/(4πt)`, zero for `t ≤ 0`.
pub fn heat_2d(t: f64, x: (f64, f64)) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-(x.0 * x.0 + x.1 * x.1) / (4.0 * t)).exp() / (4.0 * PI * t)
    }
}

/// Truncated massive heat kernel `e^{-t μ²} χ(t) e^{-|x|²/4t}/(4πt)` on `ℝ×ℝ²`.
pub fn massive_heat(mass: f64, t: f64, x: (f64, f64)) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-t * mass * mass).exp() * chi(t) * heat_2d(t, x)
    }
}

/// `(∇̸+M)G` at `(t, x)`, with `∂_j G = -x_j/(2t) G`.
pub fn dirac_g(big_m: f64, t: f64, x: (f64, f64)) -> Mat2 {
    let g = massive_heat(big_m, t, x);
    let z = C64::new(0.0, 0.0);
    if g == 0.0 {
        return [[z; 2]; 2];
    }
    let d1 = -x.0 / (2.0 * t) * g;
    let d2 = -x.1 / (2.0 * t) * g;
    // ∇̸ = [[0, -∂₁+i∂₂], [-∂₁-i∂₂, 0]]
    [[C64::new(big_m * g, 0.0), C64::new(-d1, d2)], [C64::new(-d1, -d2), C64::new(big_m * g, 0.0)]]
}

/// `(-∇̸̄+M)G` at `(t, x)`; `∇̸̄ = [[0, -∂₁-i∂₂], [-∂₁+i∂₂, 0]]`.
pub fn dirac_bar_g(big_m: f64, t: f64, x: (f64, f64)) -> Mat2 {
    let g = massive_heat(big_m, t, x);
    let z = C64::new(0.0, 0.0);
    if g == 0.0 {
        return [[z; 2]; 2];
    }
    let d1 = -x.0 / (2.0 * t) * g;
    let d2 = -x.1 / (2.0 * t) * g;
    [[C64::new(big_m * g, 0.0), C64::new(d1, d2)], [C64::new(d1, -d2), C64::new(big_m * g, 0.0)]]
}

pub fn frobenius(m: &Mat2) -> f64 {
    m.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Modified Bessel function `K_ν(z) = ∫₀^∞ e^{-z cosh u} cosh(νu) du`, `z > 0`.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    let upper = (1.0 + 60.0 / z).acosh();
    gauss_legendre(|u| (-z * (u.cosh() - 1.0)).exp() * (nu * u).cosh(), 0.0, upper, 48) * (-z).exp()
}

/// Kernel of `(-Δ+M²)^{-(1+2δ)/2}` on `ℝ²` at radius `r > 0`.
pub fn bessel_q(p: &KernelParams, r: f64) -> f64 {
    let nu = 0.5 - p.delta;
    let m = p.big_m;
    (2.0 * m / r).powf(nu) * bessel_k(nu, m * r) / (2.0 * PI * libm::tgamma(0.5 + p.delta))
}

/// `∫ f(e^y) e^y dy` over `[ln a, ln b]`.
fn quad_log<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    gauss_legendre(
        |y| {
            let u = y.exp();
            f(u) * u
        },
        a.ln(),
        b.ln(),
        panels,
    )
}

/// `G^{∇,⋆2}`: the kernel with symbol `a^{1-2δ}/((2πω)² + a⁴)`, `a² = 4π²|k|² + M²`,
/// evaluated by subordination. Conjugate variant has the same scalar kernel.
pub fn g_nabla_star2(p: &KernelParams, t: f64, x: (f64, f64)) -> f64 {
    let s = p.s();
    let m2 = p.big_m * p.big_m;
    let r2 = x.0 * x.0 + x.1 * x.1;
    let tt = t.abs();
    let scale = tt.max(r2 / 4.0);
    if scale == 0.0 {
        return f64::INFINITY;
    }
    let hi = (60.0 / m2).max(60.0 * scale);
    let lo = scale * 1e-14;
    let val = quad_log(
        |u| {
            let v = u + tt;
            u.powf(s - 1.0) * (-v * m2 - r2 / (4.0 * v)).exp() / (4.0 * PI * v)
        },
        lo,
        hi,
        160,
    );
    val / (2.0 * libm::tgamma(s))
}

/// `K^{⋆2}(t, x) = ½ ∫_{|t|}^∞ e^{-τm²} e^{-|x|²/4τ}/(4πτ) dτ`.
pub fn k_star2(p: &KernelParams, t: f64, x: (f64, f64)) -> f64 {
    let m2 = p.m * p.m;
    let r2 = x.0 * x.0 + x.1 * x.1;
    let lo = t.abs().max(r2 * 1e-3);
    if lo == 0.0 {
        return f64::INFINITY;
    }
    let hi = 60.0 / m2;
    if lo >= hi {
        return 0.0;
    }
    0.5 * quad_log(|tau| (-tau * m2 - r2 / (4.0 * tau)).exp() / (4.0 * PI * tau), lo, hi, 120)
}

/// `∫ e^{-(t-s)a - s b} ds` over `[0, t]`.
fn mass_mix(a: f64, b: f64, t: f64) -> f64 {
    let d = a - b;
    if d.abs() * t < 1e-8 {
        t * (-t * a).exp() * (1.0 + 0.5 * d * t)
    } else {
        ((-t * b).exp() - (-t * a).exp()) / d
    }
}

/// Catalogue of kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Bosonic heat kernel `K` (mass `m`).
    K,
    /// Fermionic heat kernel `G` (mass `M`).
    G,
    /// `(∇̸+M)G`, Frobenius magnitude.
    GDirac,
    /// `(-∇̸̄+M)G`, Frobenius magnitude.
    GDiracBar,
    /// Spatial Bessel kernel `Q`.
    Q,
    /// `K^{⋆2}`.
    KStar2,
    /// `G^{∇,⋆2}`.
    GNablaStar2,
}

/// A kernel with its declared scaling exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularKernel {
    pub kind: KernelKind,
    pub params: KernelParams,
    /// Declared exponent `ζ`.
    pub zeta: f64,
    /// Time support radius (spatial kernels report 0).
    pub support_radius: f64,
    /// Mollification scale, if mollified.
    pub eps: Option<f64>,
}

/// Bosonic heat kernel `K`, `ζ = -2`.
pub fn heat_kernel_k(p: KernelParams) -> SingularKernel {
    SingularKernel { kind: KernelKind::K, params: p, zeta: -2.0, support_radius: 2.0, eps: None }
}

/// Fermionic heat kernel `G`, `ζ = -2`.
pub fn kernel_g(p: KernelParams) -> SingularKernel {
    SingularKernel { kind: KernelKind::G, params: p, zeta: -2.0, support_radius: 2.0, eps: None }
}

/// `(∇̸+M)G` (or its conjugate), `ζ = -3`.
pub fn dirac_kernel_g_slash(p: KernelParams, conjugate: bool) -> SingularKernel {
    let kind = if conjugate { KernelKind::GDiracBar } else { KernelKind::GDirac };
    SingularKernel { kind, params: p, zeta: -3.0, support_radius: 2.0, eps: None }
}

/// Bessel kernel `Q`, `ζ = 2δ - 1` in the spatial variables.
pub fn bessel_q_kernel(p: KernelParams) -> SingularKernel {
    SingularKernel { kind: KernelKind::Q, params: p, zeta: 2.0 * p.delta - 1.0, support_radius: 0.0, eps: None }
}

/// `K^{⋆2}`, logarithmic at the origin (`ζ = 0⁻`).
pub fn k_star2_kernel(p: KernelParams) -> SingularKernel {
    SingularKernel { kind: KernelKind::KStar2, params: p, zeta: 0.0, support_radius: f64::INFINITY, eps: None }
}

/// `G^{∇,⋆2}`, `ζ = -1 + 2δ`.
pub fn g_nabla_star2_kernel(p: KernelParams) -> SingularKernel {
    SingularKernel {
        kind: KernelKind::GNablaStar2,
        params: p,
        zeta: -1.0 + 2.0 * p.delta,
        support_radius: f64::INFINITY,
        eps: None,
    }
}

impl SingularKernel {
    /// Whether the kernel lives on `ℝ²` only (sampled at `t = 0`).
    pub fn is_spatial(&self) -> bool {
        self.kind == KernelKind::Q
    }

    /// Magnitude of the kernel at `(t, x)`; matrix kernels use the Frobenius norm.
    pub fn eval(&self, t: f64, x: (f64, f64)) -> f64 {
        let p = &self.params;
        if let Some(eps) = self.eps {
            let mass = if self.kind == KernelKind::K { p.m } else { p.big_m };
            return Mollifier::new(eps).convolve_heat(mass, t, x);
        }
        match self.kind {
            KernelKind::K => massive_heat(p.m, t, x),
            KernelKind::G => massive_heat(p.big_m, t, x),
            KernelKind::GDirac => frobenius(&dirac_g(p.big_m, t, x)),
            KernelKind::GDiracBar => frobenius(&dirac_bar_g(p.big_m, t, x)),
            KernelKind::Q => {
                let r = (x.0 * x.0 + x.1 * x.1).sqrt();
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    bessel_q(p, r)
                }
            }
            KernelKind::KStar2 => k_star2(p, t, x),
            KernelKind::GNablaStar2 => g_nabla_star2(p, t, x),
        }
    }

    /// Spatially periodised value (sum over integer translates within `images`).
    pub fn eval_periodic(&self, t: f64, x: (f64, f64), images: i64) -> f64 {
        let mut acc = 0.0;
        for a in -images..=images {
            for b in -images..=images {
                acc += self.eval(t, (x.0 + a as f64, x.1 + b as f64));
            }
        }
        acc
    }

    /// `K_ε = K ⋆ ρ_ε`; only heat kernels `K` and `G` are supported.
    pub fn mollify(&self, eps: f64) -> Result<SingularKernel> {
        if !matches!(self.kind, KernelKind::K | KernelKind::G) {
            return Err(param("mollification is implemented for K and G"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(param("epsilon must lie in (0, 1]"));
        }
        Ok(SingularKernel { eps: Some(eps), ..*self })
    }
}

/// Shell sampling configuration for log–log slope fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
    /// Simplex subdivisions per shell.
    pub simplex: usize,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        SlopeConfig { r_min: 1e-3, r_max: 1e-1, radii: 9, simplex: 24 }
    }
}

/// Supremum of `|f|` on the parabolic shell `√|t| + |x₁| + |x₂| = r` (both signs of `t`).
/// With `spatial`, only `t = 0` is sampled.
pub fn shell_sup<F: Fn(f64, (f64, f64)) -> f64>(f: &F, r: f64, simplex: usize, spatial: bool) -> f64 {
    let n = simplex.max(2);
    let mut best: f64 = 0.0;
    for i in 0..=n {
        let a = r * i as f64 / n as f64;
        if spatial && i > 0 {
            break;
        }
        for j in 0..=(n - i) {
            let x1 = r * j as f64 / n as f64;
            let x2 = (r - a - x1).max(0.0);
            for sign in [1.0, -1.0] {
                let t = sign * a * a;
                let v = f(t, (x1, x2)).abs();
                if v.is_finite() {
                    best = best.max(v);
                }
                if a == 0.0 {
                    break;
                }
            }
        }
    }
    best
}

/// Outcome of a slope measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub declared: f64,
    pub fit: LineFit,
    pub radii: Vec<f64>,
    pub sups: Vec<f64>,
}

impl SlopeReport {
    pub fn measured(&self) -> f64 {
        self.fit.slope
    }

    pub fn within(&self, tol: f64) -> bool {
        (self.fit.slope - self.declared).abs() <= tol
    }
}

/// Geometric radii between `r_min` and `r_max`.
pub fn geometric(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| r_min * (r_max / r_min).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Log–log fit of shell suprema of `f`.
pub fn measure_slope<F: Fn(f64, (f64, f64)) -> f64>(f: F, declared: f64, spatial: bool, cfg: &SlopeConfig) -> SlopeReport {
    let radii = geometric(cfg.r_min, cfg.r_max, cfg.radii);
    let sups: Vec<f64> = radii.iter().map(|&r| shell_sup(&f, r, cfg.simplex, spatial)).collect();
    let fit = loglog_slope(&radii, &sups);
    SlopeReport { declared, fit, radii, sups }
}

/// Checks a kernel's declared exponent.
pub fn kernel_slope(k: &SingularKernel, cfg: &SlopeConfig) -> SlopeReport {
    measure_slope(|t, x| k.eval(t, x), k.zeta, k.is_spatial(), cfg)
}

/// Power-counting mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountingMode {
    Product,
    Convolution,
}

/// Analytic space-time convolution of heat-type kernels, valid for `t ≤ 1`.
/// `K₁ ⋆ K₂` with `K_i` massive heat kernels is `heat(t,x)·∫₀ᵗ e^{-(t-s)μ₁²-sμ₂²}ds`;
/// a Dirac factor on either side is applied to the result.
fn heat_convolution(k1: &SingularKernel, k2: &SingularKernel, t: f64, x: (f64, f64)) -> f64 {
    let p = &k1.params;
    let mass = |k: &SingularKernel| if k.kind == KernelKind::K { p.m } else { p.big_m };
    if t <= 0.0 {
        return 0.0;
    }
    let base = heat_2d(t, x) * mass_mix(mass(k1).powi(2), mass(k2).powi(2), t);
    let dirac = [k1.kind, k2.kind].iter().filter(|k| matches!(k, KernelKind::GDirac | KernelKind::GDiracBar)).count();
    if dirac == 0 {
        return base;
    }
    let m = p.big_m;
    let d1 = -x.0 / (2.0 * t) * base;
    let d2 = -x.1 / (2.0 * t) * base;
    let mat = [[C64::new(m * base, 0.0), C64::new(-d1, d2)], [C64::new(-d1, -d2), C64::new(m * base, 0.0)]];
    frobenius(&mat)
}

/// Result of a power-counting check.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingReport {
    pub mode: CountingMode,
    /// Measured exponent of the combined kernel, with `declared = ζ₁ + ζ₂ (+4)`.
    pub combined: SlopeReport,
    /// Measured exponents of the two factors over the same shells.
    pub factors: [f64; 2],
}

impl CountingReport {
    /// Additive prediction from the measured factor exponents.
    pub fn predicted(&self) -> f64 {
        let shift = if self.mode == CountingMode::Convolution { 4.0 } else { 0.0 };
        self.factors[0] + self.factors[1] + shift
    }

    /// `|measured - predicted|`.
    pub fn additivity_gap(&self) -> f64 {
        (self.combined.measured() - self.predicted()).abs()
    }
}

/// Measures the exponent of `K₁K₂` or `K₁ ⋆ K₂` against the additive prediction.
///
/// Logarithmic kernels (declared `0⁻`) carry an effective negative exponent over any
/// finite range, so the prediction uses the factor exponents measured on the same shells.
/// Convolution requires `ζ₁ ∧ ζ₂ > -4` and `ζ₁ + ζ₂ + 4 < 0`, and is available for
/// heat-type kernels (`K`, `G`, and at most one Dirac factor).
pub fn power_counting_check(
    k1: &SingularKernel,
    k2: &SingularKernel,
    mode: CountingMode,
    cfg: &SlopeConfig,
) -> Result<CountingReport> {
    let combined = match mode {
        CountingMode::Product => {
            if k1.is_spatial() != k2.is_spatial() {
                return Err(param("cannot multiply a spatial kernel with a space-time kernel"));
            }
            measure_slope(|t, x| k1.eval(t, x) * k2.eval(t, x), k1.zeta + k2.zeta, k1.is_spatial(), cfg)
        }
        CountingMode::Convolution => {
            let zeta = k1.zeta + k2.zeta + 4.0;
            if k1.zeta.min(k2.zeta) <= -4.0 || zeta >= 0.0 {
                return Err(param("convolution requires ζ₁∧ζ₂ > -4 and ζ₁+ζ₂+4 < 0"));
            }
            let heat_like = |k: &SingularKernel| {
                matches!(k.kind, KernelKind::K | KernelKind::G | KernelKind::GDirac | KernelKind::GDiracBar)
                    && k.eps.is_none()
            };
            let dirac = |k: &SingularKernel| matches!(k.kind, KernelKind::GDirac | KernelKind::GDiracBar);
            if !(heat_like(k1) && heat_like(k2)) || (dirac(k1) && dirac(k2)) {
                return Err(param("analytic convolution is available for heat-type pairs only"));
            }
            measure_slope(|t, x| heat_convolution(k1, k2, t, x), zeta, false, cfg)
        }
    };
    let factors = [kernel_slope(k1, cfg).measured(), kernel_slope(k2, cfg).measured()];
    Ok(CountingReport { mode, combined, factors })
}

/// Parabolically scaled product mollifier `ρ_ε(t,x) = ε⁻⁴ b(t/ε²) b(x₁/ε) b(x₂/ε) / Z³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub eps: f64,
    z: f64,
}

impl Mollifier {
    pub fn new(eps: f64) -> Self {
        Mollifier { eps, z: bump_mass() }
    }

    /// One-dimensional factor rescaled to width `w`.
    fn factor(&self, u: f64, w: f64) -> f64 {
        bump(u / w) / (w * self.z)
    }

    pub fn eval(&self, t: f64, x: (f64, f64)) -> f64 {
        let e = self.eps;
        self.factor(t, e * e) * self.factor(x.0, e) * self.factor(x.1, e)
    }

    /// `∫ ρ_ε` by tensor quadrature.
    pub fn mass(&self) -> f64 {
        let e = self.eps;
        let ft = gauss_legendre(|t| self.factor(t, e * e), -e * e, e * e, 32);
        let fx = gauss_legendre(|x| self.factor(x, e), -e, e, 32);
        ft * fx * fx
    }

    /// Fourier transform of the unit-width factor, `ρ̂₁(ξ) = ∫ b(u) cos(2πuξ) du / Z`.
    pub fn profile_hat(&self, xi: f64) -> f64 {
        let panels = 32 + (xi.abs() * 2.0) as usize;
        gauss_legendre(|u| bump(u) * (2.0 * PI * u * xi).cos(), -1.0, 1.0, panels) / self.z
    }

    /// `(g_τ ⋆ b_ε)(x)` for the one-dimensional heat kernel.
    fn smoothed_1d(&self, tau: f64, x: f64) -> f64 {
        let e = self.eps;
        let w = 12.0 * tau.sqrt();
        let lo = (x - w).max(-e);
        let hi = (x + w).min(e);
        if lo >= hi {
            return 0.0;
        }
        gauss_legendre(|y| self.factor(y, e) * heat_1d(tau, x - y), lo, hi, 3)
    }

    /// `(massive_heat(μ) ⋆ ρ_ε)(t, x)` on `ℝ×ℝ²`.
    pub fn convolve_heat(&self, mass: f64, t: f64, x: (f64, f64)) -> f64 {
        let e2 = self.eps * self.eps;
        let hi = t.min(e2);
        if hi <= -e2 {
            return 0.0;
        }
        gauss_legendre(
            |s| {
                let tau = t - s;
                if tau <= 0.0 {
                    return 0.0;
                }
                self.factor(s, e2)
                    * (-tau * mass * mass).exp()
                    * chi(tau)
                    * self.smoothed_1d(tau, x.0)
                    * self.smoothed_1d(tau, x.1)
            },
            -e2,
            hi,
            8,
        )
    }
}

/// Mollification rate: `D(ε) = sup_{‖z‖ ∈ [ε/4, 8ε]} |K - K_ε|(z) ‖z‖^{-ζ̄}` over `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub zeta: f64,
    pub zeta_bar: f64,
    pub eps: Vec<f64>,
    pub distances: Vec<f64>,
    pub fit: LineFit,
}

impl RateReport {
    /// Predicted exponent `ζ - ζ̄`.
    pub fn expected(&self) -> f64 {
        self.zeta - self.zeta_bar
    }
}

/// Rate check of `‖K - K_ε‖_{ζ̄}` on dyadic `ε` for a heat kernel.
pub fn mollifier_rate_check(k: &SingularKernel, eps_list: &[f64], zeta_bar: f64, simplex: usize) -> Result<RateReport> {
    if !(k.zeta > -4.0 && k.zeta < 0.0) {
        return Err(param("mollification rate requires ζ ∈ (-4, 0)"));
    }
    if !(zeta_bar >= k.zeta - 1.0 && zeta_bar < k.zeta) {
        return Err(param("ζ̄ must lie in [ζ-1, ζ)"));
    }
    let mut distances = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let ke = k.mollify(eps)?;
        let radii = geometric(eps / 4.0, 8.0 * eps, 11);
        let mut d: f64 = 0.0;
        for &r in &radii {
            let f = |t: f64, x: (f64, f64)| (k.eval(t, x) - ke.eval(t, x)).abs();
            d = d.max(shell_sup(&f, r, simplex, false) * r.powf(-zeta_bar));
        }
        distances.push(d);
    }
    let fit = loglog_slope(eps_list, &distances);
    Ok(RateReport { zeta: k.zeta, zeta_bar, eps: eps_list.to_vec(), distances, fit })
}

/// Tabulated `h(s) = ∫ |ρ̂₁(u)|² / ((2πu)² + s²) du`, interpolated in `ln s`.
#[derive(Debug, Clone)]
pub struct TimeProfileTable {
    log_s: Vec<f64>,
    log_h: Vec<f64>,
}

impl TimeProfileTable {
    pub fn new(mol: &Mollifier) -> Self {
        // Fixed logarithmic u-grid: the Lorentzian factor has unit width in ln u.
        const U_LOW: f64 = 1e-11;
        const U_MAX: f64 = 24.0;
        let nodes: Vec<(f64, f64, f64)> = gauss_legendre_nodes(U_LOW.ln(), U_MAX.ln(), 600)
            .into_iter()
            .map(|(y, w)| {
                let u = y.exp();
                let r = mol.profile_hat(u);
                (u, w * u, r * r)
            })
            .collect();
        let n = 2400;
        let (ls_min, ls_max) = ((1e-9f64).ln(), (1e5f64).ln());
        let mut log_s = Vec::with_capacity(n);
        let mut log_h = Vec::with_capacity(n);
        for i in 0..n {
            let ls = ls_min + (ls_max - ls_min) * i as f64 / (n - 1) as f64;
            let s = ls.exp();
            // [0, U_LOW] with ρ̂₁ ≈ 1.
            let low = (2.0 * PI * U_LOW / s).atan() / (2.0 * PI * s);
            let rest: f64 = nodes.iter().map(|&(u, w, r2)| w * r2 / ((2.0 * PI * u).powi(2) + s * s)).sum();
            log_s.push(ls);
            log_h.push((2.0 * (low + rest)).ln());
        }
        TimeProfileTable { log_s, log_h }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let ls = s.max(1e-300).ln();
        let n = self.log_s.len();
        if ls <= self.log_s[0] {
            // h(s) → 1/(2s) as s → 0 (ρ̂₁(0) = 1).
            return 1.0 / (2.0 * s);
        }
        if ls >= self.log_s[n - 1] {
            return self.log_h[n - 1].exp() * (self.log_s[n - 1] - ls).exp().powi(2);
        }
        let step = (self.log_s[n - 1] - self.log_s[0]) / (n - 1) as f64;
        let f = (ls - self.log_s[0]) / step;
        let i = (f as usize).min(n - 2);
        let w = f - i as f64;
        ((1.0 - w) * self.log_h[i] + w * self.log_h[i + 1]).exp()
    }
}

/// Bosonic counterterm `C_<2>^ε = K_ε^{⋆2}(0) = Σ_k |ρ̂₁(εk₁)ρ̂₁(εk₂)|² ε² h(a_k²ε²)`,
/// with `a_k² = 4π²|k|² + m²` and the untruncated resolvent in time.
pub fn bosonic_counterterm(p: &KernelParams, eps: f64, table: &TimeProfileTable, mol: &Mollifier) -> f64 {
    let kmax = (20.0 / eps).ceil() as i64;
    let rho: Vec<f64> = (0..=kmax).map(|k| mol.profile_hat(eps * k as f64).powi(2)).collect();
    let m2 = p.m * p.m;
    let mut total = 0.0;
    for k1 in -kmax..=kmax {
        let r1 = rho[k1.unsigned_abs() as usize];
        if r1 < 1e-30 {
            continue;
        }
        for k2 in -kmax..=kmax {
            let r2 = rho[k2.unsigned_abs() as usize];
            let w = r1 * r2;
            if w < 1e-30 {
                continue;
            }
            let a2 = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + m2;
            total += w * eps * eps * table.eval(a2 * eps * eps);
        }
    }
    total
}

/// Fermionic counterterm `C_<2AF>^ε` as the Fourier-side trace
/// `Σ_k w(k)/a_k · tr[S̄(k) S(-k)ᵀ S(-k)ᵀ] · |ρ̂_x|² ε² h(a_k²ε²)` with `S = ∇̸+M`,
/// `S̄ = -∇̸̄+M` and `w` the `𝔥` weight.
pub fn fermionic_counterterm(p: &KernelParams, eps: f64, table: &TimeProfileTable, mol: &Mollifier) -> f64 {
    let kmax = (20.0 / eps).ceil() as i64;
    let rho: Vec<f64> = (0..=kmax).map(|k| mol.profile_hat(eps * k as f64).powi(2)).collect();
    let mut total = 0.0;
    for k1 in -kmax..=kmax {
        let r1 = rho[k1.unsigned_abs() as usize];
        if r1 < 1e-30 {
            continue;
        }
        for k2 in -kmax..=kmax {
            let r2 = rho[k2.unsigned_abs() as usize];
            let w = r1 * r2;
            if w < 1e-30 {
                continue;
            }
            let tr = fermion_trace(p, (k1, k2));
            let a2 = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + p.big_m * p.big_m;
            let weight = spatial_weight((k1, k2), p.delta, p.big_m) / a2.sqrt();
            total += w * weight * tr * eps * eps * table.eval(a2 * eps * eps);
        }
    }
    total
}

/// `Re tr[S̄(k) S(-k)ᵀ S(-k)ᵀ]` from the matrix symbols.
pub fn fermion_trace(p: &KernelParams, k: (i64, i64)) -> f64 {
    let kf = (k.0 as f64, k.1 as f64);
    let sbar = minus_dirac_bar_plus_mass(kf, p.big_m);
    let s = dirac_plus_mass((-kf.0, -kf.1), p.big_m);
    let st = [[s[0][0], s[1][0]], [s[0][1], s[1][1]]];
    let prod = mat2_mul(mat2_mul(sbar, st), st);
    (prod[0][0] + prod[1][1]).re
}

// ---------------------------------------------------------------------------
// Lattice realisations
// ---------------------------------------------------------------------------

/// Mass of the one-dimensional periodised heat kernel over the cell `[x - h/2, x + h/2]`.
fn cell_heat_1d(t: f64, x: f64, h: f64) -> f64 {
    let s = 2.0 * t.sqrt();
    let images = (6.0 * t.sqrt()).ceil() as i64 + 1;
    let mut acc = 0.0;
    for p in -images..=images {
        let c = x + p as f64;
        acc += libm::erf((c + h / 2.0) / s) - libm::erf((c - h / 2.0) / s);
    }
    0.5 * acc
}

/// Cell-averaged, spatially periodised causal heat kernel `massive_heat(μ)` on the lattice.
/// Entry `(n, i, j)` is the average over `[n·dt, (n+1)·dt) × cell(i, j)`.
pub fn heat_kernel_grid(mass: f64, grid: Grid) -> Field {
    let dx = grid.dx();
    let dt = grid.dt;
    let mut spatial_cache = vec![0.0; grid.nx];
    let mut out = Field::zeros(grid);
    for n in 0..grid.nt {
        // Time average by Gauss–Legendre on the cell; the integrand is bounded.
        let t0 = n as f64 * dt;
        let mut acc = vec![0.0; grid.nx * grid.nx];
        for (t, w) in gauss_legendre_nodes(t0, t0 + dt, 1) {
            let w = w / dt;
            let amp = (-t * mass * mass).exp() * chi(t);
            for (i, c) in spatial_cache.iter_mut().enumerate() {
                let x = crate::spectral::fftfreq(i, grid.nx) as f64 * dx;
                *c = cell_heat_1d(t, x, dx) / dx;
            }
            for i in 0..grid.nx {
                for j in 0..grid.nx {
                    acc[i * grid.nx + j] += w * amp * spatial_cache[i] * spatial_cache[j];
                }
            }
        }
        for (idx, v) in acc.into_iter().enumerate() {
            out.data[n * grid.nx * grid.nx + idx] = C64::new(v, 0.0);
        }
    }
    out
}

fn padded(grid: Grid) -> Grid {
    Grid { nt: 2 * grid.nt, ..grid }
}

fn pad_time(f: &Field) -> Vec<C64> {
    let mut v = f.data.clone();
    v.resize(2 * f.data.len(), C64::new(0.0, 0.0));
    v
}

/// Causal convolution `(K ⋆ f)(t) = Σ_{s ≤ t} K(t - s) f(s) · cell`: periodic in space,
/// zero-padded in time. `kernel` holds offsets `n ≥ 0`.
pub fn convolve(dft: &dyn Dft, kernel: &Field, f: &Field) -> Result<Field> {
    kernel.grid.check_same(&f.grid)?;
    let g = f.grid;
    let pg = padded(g);
    let mut a = pad_time(kernel);
    let mut b = pad_time(f);
    dft.forward(&mut a, &pg.shape());
    dft.forward(&mut b, &pg.shape());
    for (x, y) in b.iter_mut().zip(&a) {
        *x *= y;
    }
    dft.inverse(&mut b, &pg.shape());
    b.truncate(g.len());
    let cell = g.cell_volume();
    Ok(Field { grid: g, data: b.into_iter().map(|v| v * cell).collect() })
}

/// Transpose of [`convolve`]: `(Kᵀ ⋆ g)(s) = Σ_{t ≥ s} K(t - s)ᵀ g(t) · cell` for a real kernel,
/// with the spatial argument reflected.
pub fn convolve_transpose(dft: &dyn Dft, kernel: &Field, g: &Field) -> Result<Field> {
    kernel.grid.check_same(&g.grid)?;
    let gr = g.grid;
    let pg = padded(gr);
    let mut a = pad_time(kernel);
    let mut b = pad_time(g);
    dft.forward(&mut a, &pg.shape());
    dft.forward(&mut b, &pg.shape());
    for (x, y) in b.iter_mut().zip(&a) {
        *x *= y.conj();
    }
    dft.inverse(&mut b, &pg.shape());
    b.truncate(gr.len());
    let cell = gr.cell_volume();
    Ok(Field { grid: gr, data: b.into_iter().map(|v| v * cell).collect() })
}

/// Circular space-time convolution of two periodic fields.
pub fn convolve_periodic(dft: &dyn Dft, a: &Field, b: &Field) -> Result<Field> {
    a.grid.check_same(&b.grid)?;
    let g = a.grid;
    let mut x = a.to_fourier(dft);
    let y = b.to_fourier(dft);
    for (u, v) in x.iter_mut().zip(&y) {
        *u *= v;
    }
    let mut out = Field::from_fourier(g, x, dft);
    let cell = g.cell_volume();
    out.data.iter_mut().for_each(|v| *v *= cell);
    Ok(out)
}

/// Stationary periodic solution of `(∂_t - Δ + μ²) u = f`.
pub fn resolvent(dft: &dyn Dft, f: &Field, mass: f64) -> Field {
    f.multiply(dft, |w, k1, k2| {
        let a2 = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + mass * mass;
        C64::new(1.0, 0.0) / C64::new(a2, 2.0 * PI * w)
    })
}

/// Applies the spatial Dirac symbol `(∇̸+M)` (or `(-∇̸̄+M)` when `conjugate`) to a
/// two-component field.
pub fn apply_dirac(dft: &dyn Dft, f: &[Field; 2], big_m: f64, conjugate: bool) -> Result<[Field; 2]> {
    f[0].grid.check_same(&f[1].grid)?;
    let g = f[0].grid;
    let a = f[0].to_fourier(dft);
    let b = f[1].to_fourier(dft);
    let mut o0 = vec![C64::new(0.0, 0.0); g.len()];
    let mut o1 = vec![C64::new(0.0, 0.0); g.len()];
    for idx in 0..g.len() {
        let (_, i, j) = g.coords(idx);
        let k = (g.k(i) as f64, g.k(j) as f64);
        let mut s = if conjugate {
            let mut d = dirac_bar_symbol(k);
            for v in d.iter_mut().flatten() {
                *v = -*v;
            }
            d
        } else {
            dirac_symbol(k)
        };
        s[0][0] += big_m;
        s[1][1] += big_m;
        o0[idx] = s[0][0] * a[idx] + s[0][1] * b[idx];
        o1[idx] = s[1][0] * a[idx] + s[1][1] * b[idx];
    }
    Ok([Field::from_fourier(g, o0, dft), Field::from_fourier(g, o1, dft)])
}

/// Periodised `Q` on an `nx × nx` torus grid by multiplier synthesis
/// `Σ_k (4π²|k|² + M²)^{-(1+2δ)/2} e^{2πik·x}`.
pub fn q_grid(dft: &dyn Dft, p: &KernelParams, nx: usize) -> Vec<f64> {
    let mut spec = vec![C64::new(0.0, 0.0); nx * nx];
    for i in 0..nx {
        for j in 0..nx {
            let k = (crate::spectral::fftfreq(i, nx), crate::spectral::fftfreq(j, nx));
            spec[i * nx + j] = C64::new(spatial_weight(k, p.delta, p.big_m), 0.0);
        }
    }
    // Inverse DFT divides by nx²; the Fourier series needs the raw sum.
    dft.transform(&mut spec, &[nx, nx], 1);
    spec.into_iter().map(|v| v.re).collect()
}

/// Log–log fit of lattice shell suprema of a kernel-like field sampled at offsets.
/// Shells are bins `[r, √2 r)` of the minimal-image parabolic norm.
pub fn lattice_slope(field: &Field, declared: f64, r_min: f64, r_max: f64) -> Result<SlopeReport> {
    let g = field.grid;
    if r_min <= 0.0 || r_max <= r_min {
        return Err(Error::Grid(alloc::string::String::from("invalid shell range")));
    }
    let bins = ((r_max / r_min).ln() / core::f64::consts::SQRT_2.ln()).floor() as usize;
    if bins < 3 {
        return Err(Error::Grid(alloc::string::String::from("too few lattice shells")));
    }
    let mut sups = vec![0.0f64; bins];
    for idx in 0..g.len() {
        let (t, i, j) = g.coords(idx);
        // Only causal offsets in the first half of the window are unaffected by wrap-around.
        if t >= g.nt / 2 || i >= g.nx / 2 || j >= g.nx / 2 {
            continue;
        }
        let r = g.parabolic_norm(t, i, j);
        if r < r_min || r >= r_max {
            continue;
        }
        let b = ((r / r_min).ln() / core::f64::consts::SQRT_2.ln()).floor() as usize;
        if b < bins {
            sups[b] = sups[b].max(field.data[idx].norm());
        }
    }
    let radii: Vec<f64> = (0..bins).map(|b| r_min * core::f64::consts::SQRT_2.powi(b as i32)).collect();
    let (radii, sups): (Vec<f64>, Vec<f64>) = radii.into_iter().zip(sups).filter(|(_, s)| *s > 0.0).unzip();
    let fit = loglog_slope(&radii, &sups);
    Ok(SlopeReport { declared, fit, radii, sups })
}
