//! Second- and third-order trees: the fermionic Wick square `<2AF>`, the mixed
//! products `<2F>`, `<2A>` and the bosonic powers `<2>`, `<3>`.
//!
//! Two routes are provided. At a finite filtration level the trees are
//! [`AlgebraField`]s built from the projected linear solutions, which is what
//! the solver consumes. For norms and convergence rates the fermionic square
//! is handled through its kernel: the vacuum `L²` norm of `<2AF>(φ)` is
//! `⟨φ, 2G² ⋆ φ⟩^{1/2}` with `G` the per-spinor `𝔥`-covariance of `<1F>`,
//! which resolves every lattice mode instead of the handful a Fock
//! representation can hold.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::besov::{estimate_norm, lattice_bump, moment_order, test_function, BesovConfig, BesovEstimate};
use crate::error::{Error, Result};
use crate::grassmann::term_gate;
use crate::kernels::{bosonic_counterterm, fermionic_counterterm, KernelParams, Mollifier, TimeProfileTable};
use crate::linalg::{fit_line, loglog_slope, LineFit};
use crate::noise::{mollifier_multiplier, resolvent_multiplier, AlgebraField, LinearTrees};
use crate::singleparticle::spatial_weight;
use crate::spectral::{Dft, Field, Grid};
use crate::C64;

/// `true` if every generator pair `(2k, 2k+1)` of `mask` is either empty or full.
fn is_paired(mask: u64) -> bool {
    (0..32).all(|k| {
        let two = (mask >> (2 * k)) & 3;
        two == 0 || two == 3
    })
}

/// Central counterterm of an even field: every paired term `c·Ψ_{2k}Ψ_{2k+1}⋯`
/// replaced by `c·1` carrying the same gate, so that `ω∘ϝ` of the difference
/// vanishes on every level.
pub fn central_part(x: &AlgebraField) -> AlgebraField {
    let mut out = AlgebraField::zero(x.grid).with_cap(x.cap());
    for (m, g, f) in x.terms() {
        if m != 0 && is_paired(m) {
            out.insert(0, term_gate(m, g), f.clone());
        }
    }
    out
}

/// Trees at one mollification scale and filtration level.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBundle {
    pub eps: f64,
    /// `⟨<1A>, <1F>⟩ = Σ_s <1A>_s <1F>_s`, before renormalisation.
    pub two_af_raw: AlgebraField,
    /// Central counterterm `𝐂_<2AF>^ε`.
    pub counterterm: AlgebraField,
    /// `<2AF> = ⟨<1A>, <1F>⟩ - 𝐂_<2AF>^ε`.
    pub two_af: AlgebraField,
    /// `<2F> = <1> <1F>`.
    pub two_f: [AlgebraField; 2],
    /// `<2A> = <1> <1A>`.
    pub two_a: [AlgebraField; 2],
    /// `<2> = <1>² - C_<2>`.
    pub two: Field,
    /// `<3> = <1>³ - 3 C_<2> <1>`.
    pub three: Field,
    /// The bosonic constant used for `<2>` and `<3>`.
    pub c2: f64,
}

impl TreeBundle {
    /// Expected parities: `(two_af, two_f/two_a)` = `(even, odd)`.
    pub fn parity_ok(&self) -> bool {
        let even = |x: &AlgebraField| x.is_empty() || x.parity() == Some(0);
        let odd = |x: &AlgebraField| x.is_empty() || x.parity() == Some(1);
        even(&self.two_af_raw)
            && even(&self.two_af)
            && self.counterterm.terms().all(|(m, _, _)| m == 0)
            && self.two_f.iter().chain(&self.two_a).all(odd)
    }

    /// `sup_z |ω(ϝ(<2AF>(z)))|` on `d_ref` modes.
    pub fn centring_defect(&self, d_ref: usize) -> f64 {
        self.two_af.vacuum_expect(d_ref).max_abs()
    }

    /// The scalar shadow `ϝ(𝐂)` on `d_ref` modes, averaged over the lattice.
    pub fn counterterm_shadow(&self, d_ref: usize) -> f64 {
        let f = self.counterterm.vacuum_expect(d_ref);
        f.data.iter().map(|v| v.re).sum::<f64>() / f.data.len() as f64
    }
}

/// Fermionic square `⟨<1A>, <1F>⟩^⋄` and its counterterm.
pub fn build_fermionic_square(lin: &LinearTrees) -> (AlgebraField, AlgebraField, AlgebraField) {
    let raw = lin.one_a[0].mul(&lin.one_f[0]).add(&lin.one_a[1].mul(&lin.one_f[1]));
    let c = central_part(&raw);
    let ren = raw.sub(&c);
    (raw, c, ren)
}

/// `<2F>`, `<2A>` for the bosonic sample already contained in `lin.one`.
pub fn build_mixed(lin: &LinearTrees) -> ([AlgebraField; 2], [AlgebraField; 2]) {
    let f = [lin.one_f[0].mul_field(&lin.one), lin.one_f[1].mul_field(&lin.one)];
    let a = [lin.one_a[0].mul_field(&lin.one), lin.one_a[1].mul_field(&lin.one)];
    (f, a)
}

/// `(<2>, <3>)` from `<1>` and the constant `c2`.
pub fn build_bosonic(one: &Field, c2: f64) -> (Field, Field) {
    let two = Field::from_fn(one.grid, |t, i, j| {
        let v = one.data[one.grid.index(t, i, j)].re;
        C64::new(v * v - c2, 0.0)
    });
    let three = Field::from_fn(one.grid, |t, i, j| {
        let v = one.data[one.grid.index(t, i, j)].re;
        C64::new(v * v * v - 3.0 * c2 * v, 0.0)
    });
    (two, three)
}

pub fn build_trees(lin: &LinearTrees, c2: f64) -> TreeBundle {
    let (two_af_raw, counterterm, two_af) = build_fermionic_square(lin);
    let (two_f, two_a) = build_mixed(lin);
    let (two, three) = build_bosonic(&lin.one, c2);
    TreeBundle { eps: lin.eps, two_af_raw, counterterm, two_af, two_f, two_a, two, three, c2 }
}

/// Lattice variance of `<1>_ε = 𝓘_B(ξ_ε)`: the constant that centres `<1>²` exactly.
pub fn lattice_c2(grid: &Grid, mass: f64, eps: f64) -> f64 {
    let moll = mollifier_multiplier(grid, eps);
    let r = resolvent_multiplier(grid, mass, &moll);
    r.iter().map(|v| v.norm_sqr()).sum::<f64>() / (grid.len() as f64 * grid.cell_volume())
}

// ---------------------------------------------------------------------------
// Kernel route for the fermionic square
// ---------------------------------------------------------------------------

/// Per-spinor `𝔥`-covariance symbol of `<1F>_ε` against `<1F>_ε'`:
/// `w_k a² ρ̂_ε ρ̂_ε' / ((2πω)² + a⁴)`; the same for `<1A>`.
pub fn fermion_covariance_symbol(p: &KernelParams, grid: &Grid, eps: f64, eps2: f64) -> Vec<f64> {
    let m1 = mollifier_multiplier(grid, eps);
    let m2 = if eps2 == eps { m1.clone() } else { mollifier_multiplier(grid, eps2) };
    (0..grid.len())
        .map(|idx| {
            let (t, i, j) = grid.coords(idx);
            let k = (grid.k(i), grid.k(j));
            let a2 = 4.0 * PI * PI * ((k.0 * k.0 + k.1 * k.1) as f64) + p.big_m * p.big_m;
            let w = spatial_weight(k, p.delta, p.big_m);
            let om = 2.0 * PI * grid.omega(t);
            w * a2 * m1[idx] * m2[idx] / (om * om + a2 * a2)
        })
        .collect()
}

/// Position-space kernel of a Fourier-series symbol on the space-time torus.
pub fn symbol_to_kernel(dft: &dyn Dft, grid: &Grid, symbol: &[f64]) -> Field {
    let n_over_t = grid.len() as f64 / grid.period();
    let spec: Vec<C64> = symbol.iter().map(|s| C64::new(s * n_over_t, 0.0)).collect();
    let mut f = Field::from_fourier(*grid, spec, dft);
    f.data.iter_mut().for_each(|v| v.im = 0.0);
    f
}

/// Kernel `2 G_{ε,ε}²` of the vacuum `L²` norm of `<2AF>_ε(φ)`.
pub fn fermionic_square_kernel(dft: &dyn Dft, p: &KernelParams, grid: &Grid, eps: f64) -> Field {
    let g = symbol_to_kernel(dft, grid, &fermion_covariance_symbol(p, grid, eps, eps));
    g.hadamard(&g).scale(C64::new(2.0, 0.0))
}

/// Kernel of `‖<2AF>_ε(φ) - <2AF>_ε'(φ)‖²`:
/// `2(G_{ε,ε}² + G_{ε',ε'}² - 2 G_{ε,ε'}²)`.
pub fn fermionic_cauchy_kernel(dft: &dyn Dft, p: &KernelParams, grid: &Grid, eps: f64, eps2: f64) -> Field {
    let g = |a: f64, b: f64| symbol_to_kernel(dft, grid, &fermion_covariance_symbol(p, grid, a, b));
    let (g11, g22, g12) = (g(eps, eps), g(eps2, eps2), g(eps, eps2));
    let sq = |f: &Field| f.hadamard(f);
    sq(&g11).add(&sq(&g22)).sub(&sq(&g12).scale(C64::new(2.0, 0.0))).scale(C64::new(2.0, 0.0))
}

/// Quadratic form `∫∫ φ(z) K(z - z') φ(z') dz dz'` for a real even kernel.
pub fn kernel_quadratic_form(dft: &dyn Dft, kernel_hat: &[C64], phi: &Field) -> f64 {
    let grid = phi.grid;
    let ph = phi.to_fourier(dft);
    let cell = grid.cell_volume();
    let s: f64 = ph.iter().zip(kernel_hat).map(|(a, k)| a.norm_sqr() * k.re).sum();
    s * cell * cell / grid.len() as f64
}

/// Besov estimate of a stationary tree from the kernel of its squared norm.
///
/// Per scale the value is `(⟨φ^λ, K ⋆ φ^λ⟩ + |mean·∫φ^λ|²)^{1/2}`; `mean` adds a
/// constant (the counterterm) back for unrenormalised comparisons.
pub fn kernel_besov(dft: &dyn Dft, kernel: &Field, mean: f64, alpha: f64, cfg: &BesovConfig) -> Result<BesovEstimate> {
    let grid = kernel.grid;
    let order = moment_order(alpha);
    let scales = cfg.ladder(&grid, order)?;
    let k_hat = kernel.to_fourier(dft);
    let value = |phi: &Field| {
        let mass: f64 = phi.data.iter().map(|v| v.re).sum::<f64>() * grid.cell_volume();
        (kernel_quadratic_form(dft, &k_hat, phi).max(0.0) + (mean * mass).powi(2)).sqrt()
    };
    let mut sups = Vec::with_capacity(scales.len());
    for &l in &scales {
        sups.push(value(&test_function(&grid, l, order)?));
    }
    let coarse = value(&lattice_bump(&grid, scales[0])?);
    Ok(BesovEstimate::assemble(alpha, order, scales, sups, coarse))
}

// ---------------------------------------------------------------------------
// Counterterm and convergence sweeps
// ---------------------------------------------------------------------------

/// Continuum counterterms over an `ε` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CountertermSweep {
    pub eps: Vec<f64>,
    /// `C_<2>^ε`.
    pub bosonic: Vec<f64>,
    /// Scalar shadow of `𝐂_<2AF>^ε`.
    pub fermionic: Vec<f64>,
    /// `C_<2>^ε` against `ln(1/ε)`: slope `a`, intercept `b`.
    pub bosonic_fit: LineFit,
    /// `ln |C_<2AF>^ε|` against `ln ε`; a negative slope means divergence.
    pub fermionic_fit: LineFit,
}

impl CountertermSweep {
    pub fn fermionic_diverges(&self) -> bool {
        self.fermionic_fit.slope < 0.0 && self.fermionic.windows(2).all(|w| w[1].abs() > w[0].abs())
    }
}

pub fn counterterm_sweep(p: &KernelParams, eps: &[f64]) -> Result<CountertermSweep> {
    if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Parameter("counterterm sweep needs at least two positive ε".into()));
    }
    let mol = Mollifier::new(1.0);
    let table = TimeProfileTable::new(&mol);
    let bosonic: Vec<f64> = eps.iter().map(|&e| bosonic_counterterm(p, e, &table, &mol)).collect();
    let fermionic: Vec<f64> = eps.iter().map(|&e| fermionic_counterterm(p, e, &table, &mol)).collect();
    let inv: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let bosonic_fit = fit_line(&inv, &bosonic);
    let fermionic_fit = loglog_slope(eps, &fermionic);
    Ok(CountertermSweep { eps: eps.to_vec(), bosonic, fermionic, bosonic_fit, fermionic_fit })
}

/// Cauchy distances `‖<2AF>_ε - <2AF>_{ε/2}‖` at a fixed exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyReport {
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub distances: Vec<f64>,
    /// `ln d` against `ln ε`; the slope is the measured rate.
    pub fit: LineFit,
}

impl CauchyReport {
    pub fn rate(&self) -> f64 {
        self.fit.slope
    }
}

pub fn fermionic_cauchy_sweep(
    dft: &dyn Dft,
    p: &KernelParams,
    grid: &Grid,
    eps: &[f64],
    alpha: f64,
    cfg: &BesovConfig,
) -> Result<CauchyReport> {
    check_eps(grid, eps, 2.0)?;
    let mut distances = Vec::with_capacity(eps.len());
    for &e in eps {
        let k = fermionic_cauchy_kernel(dft, p, grid, e, e / 2.0);
        distances.push(kernel_besov(dft, &k, 0.0, alpha, cfg)?.value);
    }
    let fit = loglog_slope(eps, &distances);
    Ok(CauchyReport { alpha, eps: eps.to_vec(), distances, fit })
}

fn check_eps(grid: &Grid, eps: &[f64], factor: f64) -> Result<()> {
    for &e in eps {
        if e / factor < 2.0 * grid.dx() * (1.0 - 1e-12) {
            return Err(Error::Grid(alloc::format!("eps = {e} is not resolved on a grid with dx = {}", grid.dx())));
        }
    }
    Ok(())
}

/// One row of the renormalisation ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub eps: f64,
    pub fermionic_renormalised: f64,
    pub fermionic_raw: f64,
    pub bosonic_renormalised: f64,
    pub bosonic_raw: f64,
    /// Single-sample norms of `<2>_ε` and `<1>_ε²` built from `xi`.
    pub bosonic_sampled_renormalised: f64,
    pub bosonic_sampled_raw: f64,
}

/// Renormalised against unrenormalised tree norms over a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub alpha_fermionic: f64,
    pub alpha_bosonic: f64,
    /// Rows ordered as the input `ε` (coarse to fine).
    pub rows: Vec<AblationRow>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn ratio(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

impl AblationReport {
    pub fn fermionic_raw_diverges(&self) -> bool {
        strictly_increasing(&self.rows.iter().map(|r| r.fermionic_raw).collect::<Vec<_>>())
    }

    pub fn bosonic_raw_diverges(&self) -> bool {
        strictly_increasing(&self.rows.iter().map(|r| r.bosonic_raw).collect::<Vec<_>>())
    }

    /// Max over min of the renormalised fermionic norms.
    pub fn fermionic_spread(&self) -> f64 {
        ratio(&self.rows.iter().map(|r| r.fermionic_renormalised).collect::<Vec<_>>())
    }

    pub fn bosonic_spread(&self) -> f64 {
        ratio(&self.rows.iter().map(|r| r.bosonic_renormalised).collect::<Vec<_>>())
    }
}

/// [`lattice_c2`] without the space-time zero mode.
pub fn lattice_c2_mean_free(grid: &Grid, mass: f64, eps: f64) -> f64 {
    let moll = mollifier_multiplier(grid, eps);
    let r = resolvent_multiplier(grid, mass, &moll);
    r.iter().skip(1).map(|v| v.norm_sqr()).sum::<f64>() / (grid.len() as f64 * grid.cell_volume())
}

/// [`fermionic_square_kernel`] for mean-free noise: the zero mode of the
/// covariance symbol is dropped.
pub fn fermionic_square_kernel_mean_free(dft: &dyn Dft, p: &KernelParams, grid: &Grid, eps: f64) -> Field {
    let mut sym = fermion_covariance_symbol(p, grid, eps, eps);
    sym[0] = 0.0;
    let g = symbol_to_kernel(dft, grid, &sym);
    g.hadamard(&g).scale(C64::new(2.0, 0.0))
}

/// Kernel `2 G_B²` of the `L²` norm of `<2>_ε(φ)` for mean-free noise, where
/// `G_B` is the covariance of `<1>_ε`.
pub fn bosonic_square_kernel_mean_free(dft: &dyn Dft, grid: &Grid, mass: f64, eps: f64) -> Field {
    let moll = mollifier_multiplier(grid, eps);
    let mut sym: Vec<f64> = resolvent_multiplier(grid, mass, &moll).iter().map(|v| v.norm_sqr()).collect();
    sym[0] = 0.0;
    let g = symbol_to_kernel(dft, grid, &sym);
    g.hadamard(&g).scale(C64::new(2.0, 0.0))
}

/// Ablation over `eps` for the fermionic square (continuum counterterm) and
/// the bosonic square (lattice counterterm). Both are measured in `L²(Ω)`
/// through their kernels; the bosonic square is also sampled from `xi`.
///
/// Both use mean-free noise. With `dt = dx²` the time period is short and the
/// unmollified zero mode, common to every `ε`, would dominate all norms.
pub fn renormalisation_ablation(
    dft: &dyn Dft,
    p: &KernelParams,
    xi: &Field,
    eps: &[f64],
    nu: f64,
    cfg: &BesovConfig,
) -> Result<AblationReport> {
    let grid = xi.grid;
    check_eps(&grid, eps, 1.0)?;
    let sweep = counterterm_sweep(p, eps)?;
    let alpha_f = -1.0 + 2.0 * p.delta - nu;
    let alpha_b = -nu;
    let xi_hat = xi.to_fourier(dft);
    let mut rows = Vec::with_capacity(eps.len());
    for (n, &e) in eps.iter().enumerate() {
        let k = fermionic_square_kernel_mean_free(dft, p, &grid, e);
        let ren = kernel_besov(dft, &k, 0.0, alpha_f, cfg)?.value;
        let raw = kernel_besov(dft, &k, sweep.fermionic[n], alpha_f, cfg)?.value;
        let moll = mollifier_multiplier(&grid, e);
        let r = resolvent_multiplier(&grid, p.m, &moll);
        let mut spec: Vec<C64> = xi_hat.iter().zip(&r).map(|(a, b)| a * b).collect();
        spec[0] = C64::new(0.0, 0.0);
        let mut one = Field::from_fourier(grid, spec, dft);
        one.data.iter_mut().for_each(|v| v.im = 0.0);
        let c2 = lattice_c2_mean_free(&grid, p.m, e);
        let (two, _) = build_bosonic(&one, c2);
        let raw_sq = one.hadamard(&one);
        let kb = bosonic_square_kernel_mean_free(dft, &grid, p.m, e);
        rows.push(AblationRow {
            eps: e,
            fermionic_renormalised: ren,
            fermionic_raw: raw,
            bosonic_renormalised: kernel_besov(dft, &kb, 0.0, alpha_b, cfg)?.value,
            bosonic_raw: kernel_besov(dft, &kb, c2, alpha_b, cfg)?.value,
            bosonic_sampled_renormalised: estimate_norm(dft, &two, alpha_b, cfg)?.value,
            bosonic_sampled_raw: estimate_norm(dft, &raw_sq, alpha_b, cfg)?.value,
        });
    }
    Ok(AblationReport { alpha_fermionic: alpha_f, alpha_bosonic: alpha_b, rows })
}

/// `‖<2F>(φ)‖` for every fixed centre and scale, using `‖Ψ(f)‖ = √2 ‖f‖_𝔥`:
/// the smeared tree is `Ψ` applied to `(∇̸+M)ᵀ𝓘_Fᵀρ_ε(φ·<1>)`.
pub fn mixed_tree_besov(
    dft: &dyn Dft,
    p: &KernelParams,
    one: &Field,
    eps: f64,
    alpha: f64,
    cfg: &BesovConfig,
) -> Result<BesovEstimate> {
    let grid = one.grid;
    let order = moment_order(alpha);
    let scales = cfg.ladder(&grid, order)?;
    let sym = fermion_covariance_symbol(p, &grid, eps, eps);
    let centres = cfg.centres(&grid);
    let dx2 = grid.dx() * grid.dx();
    let norm_scale = dx2 * dx2 * grid.dt / grid.nt as f64;
    let norm = |phi: &Field| -> f64 {
        let prod = phi.hadamard(one);
        let spec = prod.to_fourier(dft);
        // Both spinor rows carry the same symbol.
        let h: f64 = spec.iter().zip(&sym).map(|(v, s)| v.norm_sqr() * s).sum::<f64>() * norm_scale;
        (2.0 * 2.0 * h).sqrt()
    };
    let shift = |phi: &Field, z: usize| {
        let (t0, i0, j0) = grid.coords(z);
        Field::from_fn(grid, |t, i, j| {
            phi.data[grid.index((t + grid.nt - t0) % grid.nt, (i + grid.nx - i0) % grid.nx, (j + grid.nx - j0) % grid.nx)]
        })
    };
    let sup = |phi: &Field| centres.iter().fold(0.0f64, |m, &z| m.max(norm(&shift(phi, z))));
    let mut sups = Vec::with_capacity(scales.len());
    for &l in &scales {
        sups.push(sup(&test_function(&grid, l, order)?));
    }
    let coarse = sup(&lattice_bump(&grid, scales[0])?);
    Ok(BesovEstimate::assemble(alpha, order, scales, sups, coarse))
}

/// Largest relative change of the kernel-route `<2AF>_ε` values when the
/// spatial resolution doubles; `cfg` must list explicit scales.
pub fn refinement_change(dft: &dyn Dft, p: &KernelParams, coarse: &Grid, eps: f64, alpha: f64, cfg: &BesovConfig) -> Result<f64> {
    if cfg.scales.is_empty() {
        return Err(Error::Parameter("refinement comparison needs explicit scales".into()));
    }
    let fine = Grid::parabolic(coarse.nt * 4, coarse.nx * 2);
    let a = kernel_besov(dft, &fermionic_square_kernel(dft, p, coarse, eps), 0.0, alpha, cfg)?;
    let b = kernel_besov(dft, &fermionic_square_kernel(dft, p, &fine, eps), 0.0, alpha, cfg)?;
    let mut worst = 0.0f64;
    for (x, y) in a.sups.iter().zip(&b.sups) {
        worst = worst.max((x - y).abs() / x.abs().max(1e-300));
    }
    Ok(worst)
}
