//! Parabolic Hölder–Besov estimation on the lattice.
//!
//! A field is paired with rescaled test functions `S^λ_z η` at every lattice
//! centre by FFT correlation; the estimate is the supremum of
//! `λ^{-α} p(ξ(S^λ_z η))` over centres and scales together with a log–log fit
//! of the per-scale suprema. For `α ≥ 0` the test function is a lattice
//! combination of bumps that annihilates the required polynomials.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grassmann::AlgebraElement;
use crate::kernels::{bump, KernelParams};
use crate::linalg::{fit_line, LineFit};
use crate::noise::AlgebraField;
use crate::singleparticle::spatial_weight;
use crate::spectral::{fftfreq, Dft, Field, Grid};
use crate::C64;

/// Number of vanishing polynomial levels needed for exponent `alpha`:
/// none for `α < 0`, degree ≤ 1 for `α < 2`, degree ≤ 3 above.
pub fn moment_order(alpha: f64) -> usize {
    if alpha < 0.0 {
        0
    } else if alpha < 2.0 {
        1
    } else {
        2
    }
}

/// Lattice bump `b(t/μ²) b(x₁/μ) b(x₂/μ)` at the origin, normalised to lattice mass one.
pub fn lattice_bump(grid: &Grid, mu: f64) -> Result<Field> {
    let mut f = Field::from_fn(*grid, |t, i, j| {
        let tt = fftfreq(t, grid.nt) as f64 * grid.dt;
        let x1 = fftfreq(i, grid.nx) as f64 * grid.dx();
        let x2 = fftfreq(j, grid.nx) as f64 * grid.dx();
        C64::new(bump(tt / (mu * mu)) * bump(x1 / mu) * bump(x2 / mu), 0.0)
    });
    let mass: f64 = f.data.iter().map(|v| v.re).sum::<f64>() * grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::Grid(alloc::format!("scale {mu} is not resolved by the lattice")));
    }
    f.data.iter_mut().for_each(|v| *v /= mass);
    Ok(f)
}

/// Test function at scale `λ` centred at the origin with `order` vanishing levels.
///
/// Order 1 is `η^λ - η^{λ/2}`; order 2 is `η^λ + b η^{λ/2} + c η^{λ/4}` with
/// `b, c` fixed by the lattice mass and second moment. Odd moments vanish by symmetry.
pub fn test_function(grid: &Grid, lambda: f64, order: usize) -> Result<Field> {
    let e1 = lattice_bump(grid, lambda)?;
    match order {
        0 => Ok(e1),
        1 => Ok(e1.sub(&lattice_bump(grid, lambda / 2.0)?)),
        _ => {
            let e2 = lattice_bump(grid, lambda / 2.0)?;
            let e4 = lattice_bump(grid, lambda / 4.0)?;
            let m2 = |f: &Field| second_moment(grid, f);
            // b + c = -1, b m2(e2) + c m2(e4) = -m2(e1).
            let (a2, a4, a1) = (m2(&e2), m2(&e4), m2(&e1));
            let c = (a1 - a2) / (a2 - a4);
            let b = -1.0 - c;
            Ok(e1.add(&e2.scale(C64::new(b, 0.0))).add(&e4.scale(C64::new(c, 0.0))))
        }
    }
}

/// `Σ x₁² f · cell` with minimal-image coordinates.
fn second_moment(grid: &Grid, f: &Field) -> f64 {
    let mut s = 0.0;
    for (idx, v) in f.data.iter().enumerate() {
        let (_, i, _) = grid.coords(idx);
        let x1 = fftfreq(i, grid.nx) as f64 * grid.dx();
        s += v.re * x1 * x1;
    }
    s * grid.cell_volume()
}

/// `∫ φ(z) P(z) dz` for the parabolic monomial `t^a x₁^b x₂^c` about the origin.
pub fn lattice_moment(grid: &Grid, f: &Field, a: u32, b: u32, c: u32) -> f64 {
    let mut s = 0.0;
    for (idx, v) in f.data.iter().enumerate() {
        let (t, i, j) = grid.coords(idx);
        let tt = fftfreq(t, grid.nt) as f64 * grid.dt;
        let x1 = fftfreq(i, grid.nx) as f64 * grid.dx();
        let x2 = fftfreq(j, grid.nx) as f64 * grid.dx();
        s += v.re * tt.powi(a as i32) * x1.powi(b as i32) * x2.powi(c as i32);
    }
    s * grid.cell_volume()
}

/// Largest scale whose bump fits in half a period in every direction.
pub fn max_scale(grid: &Grid) -> f64 {
    (grid.period() / 4.0).sqrt().min(0.25)
}

/// Scale ladder and centre selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BesovConfig {
    /// Explicit scales; when empty a `√2`-ladder from [`max_scale`] down to
    /// `min_cells · dx · 2^{order}` is used.
    pub scales: Vec<f64>,
    pub min_cells: f64,
    /// Temporal stride of the centres in lattice slots.
    pub stride_t: usize,
    /// Spatial stride of the centres in lattice slots.
    pub stride_x: usize,
}

impl Default for BesovConfig {
    fn default() -> Self {
        BesovConfig { scales: Vec::new(), min_cells: 2.0, stride_t: 1, stride_x: 1 }
    }
}

impl BesovConfig {
    /// Centres on a fixed sublattice: one time slot and a 4×4 spatial grid,
    /// independent of the scale.
    pub fn fixed_centres(grid: &Grid) -> Self {
        BesovConfig { stride_t: grid.nt, stride_x: (grid.nx / 4).max(1), ..Default::default() }
    }

    /// Lattice indices of the centres.
    pub fn centres(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::new();
        for t in (0..grid.nt).step_by(self.stride_t.max(1)) {
            for i in (0..grid.nx).step_by(self.stride_x.max(1)) {
                for j in (0..grid.nx).step_by(self.stride_x.max(1)) {
                    out.push(grid.index(t, i, j));
                }
            }
        }
        out
    }

    pub fn ladder(&self, grid: &Grid, order: usize) -> Result<Vec<f64>> {
        if !self.scales.is_empty() {
            return Ok(self.scales.clone());
        }
        let lo = self.min_cells * grid.dx() * (1u32 << order) as f64;
        let hi = max_scale(grid);
        let mut out = Vec::new();
        let mut l = hi;
        while l >= lo * (1.0 - 1e-12) {
            out.push(l);
            l /= core::f64::consts::SQRT_2;
        }
        if out.len() < 3 {
            return Err(Error::Grid(alloc::format!("only {} resolvable scales in [{lo}, {hi}]", out.len())));
        }
        Ok(out)
    }
}

/// Whether the weighted per-scale values show a growth trend at fine scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Diverging,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::Diverging => "diverging",
        }
    }
}

/// Mann–Kendall statistic `Σ_{i<j} sign(v_j - v_i)` over the finest three
/// weighted values (ordered coarse to fine); a maximal score with more than
/// 20 % total growth counts as divergence.
pub fn trend_verdict(weighted: &[f64]) -> Verdict {
    let n = weighted.len();
    if n < 3 {
        return Verdict::Bounded;
    }
    let v = &weighted[n - 3..];
    let mut s = 0i32;
    for i in 0..3 {
        for j in i + 1..3 {
            s += (v[j] - v[i]).signum() as i32;
        }
    }
    if s == 3 && v[2] > 1.2 * v[0] {
        Verdict::Diverging
    } else {
        Verdict::Bounded
    }
}

/// Result of [`estimate_norm`].
#[derive(Debug, Clone, PartialEq)]
pub struct BesovEstimate {
    pub alpha: f64,
    pub order: usize,
    /// Scales, coarse to fine.
    pub scales: Vec<f64>,
    /// `sup_z p(ξ(S^λ_z η))` per scale.
    pub sups: Vec<f64>,
    /// `λ^{-α}` times `sups`.
    pub weighted: Vec<f64>,
    /// Unit-scale term: supremum of the plain-bump pairing at the coarsest scale.
    pub coarse: f64,
    pub value: f64,
    /// Fit of `ln sup` against `ln λ`; the slope is the measured exponent.
    pub fit: LineFit,
    pub verdict: Verdict,
}

impl BesovEstimate {
    pub fn exponent(&self) -> f64 {
        self.fit.slope
    }

    pub fn assemble(alpha: f64, order: usize, scales: Vec<f64>, sups: Vec<f64>, coarse: f64) -> Self {
        let weighted: Vec<f64> = scales.iter().zip(&sups).map(|(l, s)| l.powf(-alpha) * s).collect();
        let value = weighted.iter().copied().fold(coarse, f64::max);
        let lx: Vec<f64> = scales.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = sups.iter().map(|s| s.max(1e-300).ln()).collect();
        let fit = fit_line(&lx, &ly);
        let verdict = trend_verdict(&weighted);
        BesovEstimate { alpha, order, scales, sups, weighted, coarse, value, fit, verdict }
    }

    /// One CSV row per scale: `(field, α, η, scale, sup, slope, verdict)`.
    pub fn rows(&self, field_id: &str) -> Vec<BesovRow> {
        self.scales
            .iter()
            .zip(&self.sups)
            .map(|(l, s)| BesovRow {
                field_id: field_id.into(),
                alpha: self.alpha,
                eta: None,
                scale: *l,
                sup: *s,
                slope: self.fit.slope,
                verdict: self.verdict,
            })
            .collect()
    }
}

/// One line of a Besov report.
#[derive(Debug, Clone, PartialEq)]
pub struct BesovRow {
    pub field_id: String,
    pub alpha: f64,
    pub eta: Option<f64>,
    pub scale: f64,
    pub sup: f64,
    pub slope: f64,
    pub verdict: Verdict,
}

/// Correlation of `f` with the test function at every centre, `z ↦ ∫ f φ(· - z)`.
pub fn pairing_field(dft: &dyn Dft, f_hat: &[C64], grid: &Grid, phi: &Field) -> Field {
    let mut ph = phi.to_fourier(dft);
    let cell = grid.cell_volume();
    ph.iter_mut().zip(f_hat).for_each(|(a, b)| *a = a.conj() * b * cell);
    Field::from_fourier(*grid, ph, dft)
}

/// Scalar estimate with `p = |·|`.
pub fn estimate_norm(dft: &dyn Dft, field: &Field, alpha: f64, cfg: &BesovConfig) -> Result<BesovEstimate> {
    let grid = field.grid;
    let order = moment_order(alpha);
    let scales = cfg.ladder(&grid, order)?;
    let f_hat = field.to_fourier(dft);
    let centres = cfg.centres(&grid);
    let sup = |phi: &Field| {
        let pf = pairing_field(dft, &f_hat, &grid, phi);
        centres.iter().fold(0.0f64, |m, &z| m.max(pf.data[z].norm()))
    };
    let mut sups = Vec::with_capacity(scales.len());
    for &l in &scales {
        sups.push(sup(&test_function(&grid, l, order)?));
    }
    let coarse = sup(&lattice_bump(&grid, scales[0])?);
    Ok(BesovEstimate::assemble(alpha, order, scales, sups, coarse))
}

/// Algebra-valued estimate with a caller-supplied seminorm `p`.
pub fn estimate_algebra_norm<P>(
    dft: &dyn Dft,
    field: &AlgebraField,
    alpha: f64,
    p: P,
    cfg: &BesovConfig,
) -> Result<BesovEstimate>
where
    P: Fn(&AlgebraElement) -> Result<f64>,
{
    let grid = field.grid;
    let order = moment_order(alpha);
    let scales = cfg.ladder(&grid, order)?;
    let centres = cfg.centres(&grid);
    let hats: Vec<(u64, u32, Vec<C64>)> = field.terms().map(|(m, g, f)| (m, g, f.to_fourier(dft))).collect();
    let sup_at = |phi: &Field| -> Result<f64> {
        let pairs: Vec<(u64, u32, Field)> =
            hats.iter().map(|(m, g, h)| (*m, *g, pairing_field(dft, h, &grid, phi))).collect();
        let mut best: f64 = 0.0;
        for &z in &centres {
            let mut e = AlgebraElement::zero().with_cap(field.cap());
            for (m, g, pf) in &pairs {
                e.insert(*m, *g, pf.data[z]);
            }
            best = best.max(p(&e)?);
        }
        Ok(best)
    };
    let mut sups = Vec::with_capacity(scales.len());
    for &l in &scales {
        sups.push(sup_at(&test_function(&grid, l, order)?)?);
    }
    let coarse = sup_at(&lattice_bump(&grid, scales[0])?)?;
    Ok(BesovEstimate::assemble(alpha, order, scales, sups, coarse))
}

/// Estimate for the fermionic field `Ψ` composed with a translation-invariant
/// operator, using `‖Ψ(f)‖ = √2 ‖f‖_𝔥`.
///
/// `symbol_sq(ω, k)` is the squared spinor-row norm of the operator's symbol,
/// e.g. `1` for `ψ₁`, `|2πiω + a²|^{-2}` for `(𝓘_F ψ)₁`. The value is
/// independent of the centre.
pub fn estimate_fermion_norm<S>(
    dft: &dyn Dft,
    p: &KernelParams,
    grid: &Grid,
    alpha: f64,
    symbol_sq: S,
    cfg: &BesovConfig,
) -> Result<BesovEstimate>
where
    S: Fn(f64, i64, i64) -> f64,
{
    let order = moment_order(alpha);
    let scales = cfg.ladder(grid, order)?;
    let norm = |phi: &Field| -> f64 {
        let spec = phi.to_fourier(dft);
        let dx2 = grid.dx() * grid.dx();
        let scale = dx2 * dx2 * grid.dt / grid.nt as f64;
        let mut acc = 0.0;
        for (idx, v) in spec.iter().enumerate() {
            let (t, i, j) = grid.coords(idx);
            let (k1, k2) = (grid.k(i), grid.k(j));
            acc += spatial_weight((k1, k2), p.delta, p.big_m) * symbol_sq(grid.omega(t), k1, k2) * v.norm_sqr() * scale;
        }
        (2.0 * acc).sqrt()
    };
    let mut sups = Vec::with_capacity(scales.len());
    for &l in &scales {
        sups.push(norm(&test_function(grid, l, order)?));
    }
    let coarse = norm(&lattice_bump(grid, scales[0])?);
    Ok(BesovEstimate::assemble(alpha, order, scales, sups, coarse))
}

/// Result of [`estimate_singular_norm`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingularBesovEstimate {
    pub alpha: f64,
    pub eta: f64,
    /// Smallest constant satisfying both displays over the resolved centres.
    pub value: f64,
    /// Per time slot: `(t, weighted sup over admissible λ and x)`.
    pub profile: Vec<(f64, f64)>,
    /// Fit of `ln profile` against `ln t`; near zero when the time weight is sharp.
    pub time_fit: LineFit,
}

/// `C^{α,η}` estimate for a field on `t ∈ [0, nt·dt)` (not periodic in time).
///
/// Centres run over `t ∈ (0, t_max]` and every `stride_x`-th spatial point;
/// scales are the configured ladder restricted by `2λ ≤ √t`. The second display
/// pairs with a plain bump at `λ_t = √t/2 ∧ 1` by direct summation.
pub fn estimate_singular_norm(
    dft: &dyn Dft,
    field: &Field,
    alpha: f64,
    eta: f64,
    t_max: f64,
    cfg: &BesovConfig,
) -> Result<SingularBesovEstimate> {
    let grid = field.grid;
    let order = moment_order(alpha);
    let ladder = cfg.ladder(&grid, order).unwrap_or_default();
    let t_max = t_max.min(grid.period());
    let f_hat = field.to_fourier(dft);
    let stride = cfg.stride_x.max(1);
    let slots: Vec<usize> = (1..grid.nt).filter(|&n| n as f64 * grid.dt <= t_max).collect();
    if slots.is_empty() {
        return Err(Error::Grid("no time slots below t_max".into()));
    }
    let mut prof = vec![0.0f64; slots.len()];
    for &l in &ladder {
        let phi = test_function(&grid, l, order)?;
        let pf = pairing_field(dft, &f_hat, &grid, &phi);
        for (s, &n) in slots.iter().enumerate() {
            let t = n as f64 * grid.dt;
            // The test function must stay inside (0, period).
            if 2.0 * l > t.sqrt() || t + l * l >= grid.period() {
                continue;
            }
            let w = (t.min(1.0)).powf(-(eta - alpha) / 2.0) * l.powf(-alpha);
            for i in (0..grid.nx).step_by(stride) {
                for j in (0..grid.nx).step_by(stride) {
                    prof[s] = prof[s].max(w * pf.data[grid.index(n, i, j)].norm());
                }
            }
        }
    }
    let eta0 = eta.min(0.0);
    for (s, &n) in slots.iter().enumerate() {
        let t = n as f64 * grid.dt;
        let lt = (t.sqrt() / 2.0).min(1.0);
        if lt < cfg.min_cells * grid.dx() || t + lt * lt >= grid.period() {
            continue;
        }
        let w = (t.min(1.0)).powf(-eta0 / 2.0);
        for i in (0..grid.nx).step_by(stride) {
            for j in (0..grid.nx).step_by(stride) {
                prof[s] = prof[s].max(w * direct_bump_pairing(field, (n, i, j), lt).norm());
            }
        }
    }
    let profile: Vec<(f64, f64)> =
        slots.iter().zip(&prof).filter(|(_, v)| **v > 0.0).map(|(&n, &v)| (n as f64 * grid.dt, v)).collect();
    if profile.len() < 2 {
        return Err(Error::Grid("too few resolved time slots for the singular estimate".into()));
    }
    let value = profile.iter().fold(0.0f64, |m, p| m.max(p.1));
    let lx: Vec<f64> = profile.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = profile.iter().map(|p| p.1.ln()).collect();
    Ok(SingularBesovEstimate { alpha, eta, value, profile, time_fit: fit_line(&lx, &ly) })
}

/// `∫ f η^μ(· - z)` with the mass-normalised bump, summed directly.
fn direct_bump_pairing(f: &Field, z: (usize, usize, usize), mu: f64) -> C64 {
    let g = f.grid;
    let rt = ((mu * mu) / g.dt).ceil() as i64;
    let rx = (mu / g.dx()).ceil() as i64;
    let mut acc = C64::new(0.0, 0.0);
    let mut mass = 0.0;
    for dt in -rt..=rt {
        let t = z.0 as i64 + dt;
        if t < 0 || t >= g.nt as i64 {
            continue;
        }
        let bt = bump(dt as f64 * g.dt / (mu * mu));
        if bt == 0.0 {
            continue;
        }
        for di in -rx..=rx {
            let bi = bump(di as f64 * g.dx() / mu);
            for dj in -rx..=rx {
                let w = bt * bi * bump(dj as f64 * g.dx() / mu);
                if w == 0.0 {
                    continue;
                }
                let i = (z.1 as i64 + di).rem_euclid(g.nx as i64) as usize;
                let j = (z.2 as i64 + dj).rem_euclid(g.nx as i64) as usize;
                acc += f.data[g.index(t as usize, i, j)] * w;
                mass += w;
            }
        }
    }
    if mass > 0.0 {
        acc / mass
    } else {
        acc
    }
}

/// Gaussian field with parabolic spectral weight `|2πiω + 4π²|k|² + 1|^{-(α+2)/2}`
/// applied to a white-noise sample: regularity `α⁻`.
pub fn synthetic_field(dft: &dyn Dft, xi: &Field, alpha: f64) -> Field {
    let s = (alpha + 2.0) / 2.0;
    let mut f = xi.multiply(dft, |w, k1, k2| {
        let a2 = 4.0 * core::f64::consts::PI.powi(2) * ((k1 * k1 + k2 * k2) as f64) + 1.0;
        let m = C64::new(a2, 2.0 * core::f64::consts::PI * w).norm();
        C64::new(m.powf(-s), 0.0)
    });
    f.data.iter_mut().for_each(|v| v.im = 0.0);
    f
}

/// Result of [`schauder_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SchauderReport {
    pub beta: f64,
    pub before: BesovEstimate,
    pub after: BesovEstimate,
    /// Measured exponent gain.
    pub gain: f64,
    pub pass: bool,
}

/// Estimates `field` at `α` and `apply(field)` at `α + β`; passes when the
/// post-convolution estimate is bounded.
pub fn schauder_check<A>(
    dft: &dyn Dft,
    field: &Field,
    alpha: f64,
    beta: f64,
    apply: A,
    cfg: &BesovConfig,
) -> Result<SchauderReport>
where
    A: Fn(&Field) -> Field,
{
    let before = estimate_norm(dft, field, alpha, cfg)?;
    let after = estimate_norm(dft, &apply(field), alpha + beta, cfg)?;
    let gain = after.exponent() - before.exponent();
    let pass = after.verdict == Verdict::Bounded && after.value.is_finite();
    Ok(SchauderReport { beta, before, after, gain, pass })
}

/// Result of [`young_product_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct YoungReport {
    pub alpha: f64,
    pub beta: f64,
    /// `α + β > 0`.
    pub well_posed: bool,
    /// Estimate of the product at `α ∧ β` on each refinement.
    pub values: Vec<f64>,
    /// Last over first value.
    pub growth: f64,
    pub verdict: Verdict,
}

/// Product estimate at `α ∧ β` over a refinement sequence of `(f, g)` pairs.
///
/// Rejects pairs with both exponents negative; a well-posed pair is judged
/// bounded when the estimate grows by less than `×1.5` across refinements.
pub fn young_product_check(
    dft: &dyn Dft,
    pairs: &[(Field, Field)],
    alpha: f64,
    beta: f64,
    cfg: &BesovConfig,
) -> Result<YoungReport> {
    if alpha < 0.0 && beta < 0.0 {
        return Err(Error::Parameter(alloc::format!(
            "product of two negative regularities ({alpha}, {beta}) is not defined"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Parameter("no refinements supplied".into()));
    }
    let target = alpha.min(beta);
    let mut values = Vec::with_capacity(pairs.len());
    for (f, g) in pairs {
        f.grid.check_same(&g.grid)?;
        let est = estimate_norm(dft, &f.hadamard(g), target, cfg)?;
        values.push(est.weighted.iter().copied().fold(0.0, f64::max));
    }
    let growth = values[values.len() - 1] / values[0];
    let verdict = if growth < 1.5 { Verdict::Bounded } else { Verdict::Diverging };
    Ok(YoungReport { alpha, beta, well_posed: alpha + beta > 0.0, values, growth, verdict })
}
