//! Bosonic white noise sampled on the lattice, the fermionic noise as a
//! lattice of degree-one algebra elements, and the linear solutions built on
//! both.
//!
//! Bosons are sampled pathwise; fermions stay symbolic. A fermionic lattice
//! field is stored as one coefficient [`Field`] per Grassmann term, so linear
//! operators act coefficient-wise and pointwise products follow the graded
//! product of [`AlgebraElement`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grassmann::{term_gate, term_product, wick_product, AlgebraElement, AntisymTensor, DEFAULT_DEGREE_CAP};
use crate::kernels::{apply_dirac, KernelParams, Mollifier};
use crate::singleparticle::{Filtration, ModeSpace};
use crate::spectral::{Dft, Field, Grid};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// One white-noise sample `ξ` on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BosonicSample {
    pub seed: u64,
    pub xi: Field,
}

impl BosonicSample {
    /// `ξ(f) = Σ_z ξ(z) f(z) · cell`.
    pub fn pair(&self, f: &Field) -> C64 {
        let s: C64 = self.xi.data.iter().zip(&f.data).map(|(a, b)| a * b).sum();
        s * self.xi.grid.cell_volume()
    }
}

/// Draws i.i.d. standard normals scaled by `cell^{-1/2}` from a ChaCha20 stream.
pub fn sample_xi(seed: u64, grid: Grid) -> BosonicSample {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s = grid.cell_volume().powf(-0.5);
    let data = (0..grid.len())
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            C64::new(v * s, 0.0)
        })
        .collect();
    BosonicSample { seed, xi: Field { grid, data } }
}

/// Lattice of algebra elements `z ↦ Σ_{(S, g)} c_{S,g}(z) Ψ_S 1_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraField {
    pub grid: Grid,
    cap: usize,
    terms: BTreeMap<(u64, u32), Field>,
    /// Sup-norm mass of coefficient fields dropped by the degree cap.
    truncated: f64,
}

impl AlgebraField {
    pub fn zero(grid: Grid) -> Self {
        AlgebraField { grid, cap: DEFAULT_DEGREE_CAP, terms: BTreeMap::new(), truncated: 0.0 }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// The scalar field `f · 1`.
    pub fn scalar(f: Field) -> Self {
        let mut out = Self::zero(f.grid);
        out.insert(0, 0, f);
        out
    }

    /// `Σ_a c_a(z) Ψ_a`.
    pub fn linear(grid: Grid, coeffs: Vec<Field>) -> Result<Self> {
        let mut out = Self::zero(grid);
        for (a, c) in coeffs.into_iter().enumerate() {
            grid.check_same(&c.grid)?;
            out.insert(1u64 << a, 0, c);
        }
        Ok(out)
    }

    /// The constant field equal to `e` at every point.
    pub fn constant(grid: Grid, e: &AlgebraElement) -> Self {
        let mut out = Self::zero(grid).with_cap(e.degree_cap());
        for (m, g, c) in e.terms() {
            out.insert(m, g, Field { grid, data: vec![c; grid.len()] });
        }
        out
    }

    /// Adds `f · Ψ_mask 1_gate`.
    pub fn insert(&mut self, mask: u64, gate: u32, f: Field) {
        if mask.count_ones() as usize > self.cap {
            self.truncated += f.max_abs();
            return;
        }
        let key = (mask, term_gate(mask, gate));
        match self.terms.get_mut(&key) {
            Some(e) => {
                e.data.iter_mut().zip(&f.data).for_each(|(a, b)| *a += b);
            }
            None => {
                self.terms.insert(key, f);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, u32, &Field)> + '_ {
        self.terms.iter().map(|(&(m, g), f)| (m, g, f))
    }

    pub fn coefficient(&self, mask: u64, gate: u32) -> Option<&Field> {
        self.terms.get(&(mask, term_gate(mask, gate)))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated
    }

    /// `Σ_terms sup_z |c(z)|`.
    pub fn retained_mass(&self) -> f64 {
        self.terms.values().map(|f| f.max_abs()).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.truncated += other.truncated;
        for (&(m, g), f) in &other.terms {
            out.insert(m, g, f.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.truncated *= s.norm();
        for f in out.terms.values_mut() {
            f.data.iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    /// Pointwise multiplication by a scalar field.
    pub fn mul_field(&self, f: &Field) -> Self {
        let mut out = self.clone();
        out.truncated *= f.max_abs();
        for c in out.terms.values_mut() {
            c.data.iter_mut().zip(&f.data).for_each(|(a, b)| *a *= b);
        }
        out
    }

    /// Pointwise graded product.
    pub fn mul(&self, other: &Self) -> Self {
        let cap = self.cap.min(other.cap);
        let mut out = Self::zero(self.grid).with_cap(cap);
        out.truncated = self.truncated * other.retained_mass() + other.truncated * self.retained_mass();
        for (&(ma, ga), fa) in &self.terms {
            for (&(mb, gb), fb) in &other.terms {
                if let Some((m, g, sign)) = term_product(ma, ga, mb, gb) {
                    let data = fa.data.iter().zip(&fb.data).map(|(a, b)| a * b * sign).collect();
                    out.insert(m, g, Field { grid: self.grid, data });
                }
            }
        }
        out
    }

    /// Applies a linear map to every coefficient field.
    pub fn map<F: FnMut(&Field) -> Field>(&self, mut f: F) -> Self {
        let mut out = Self::zero(self.grid).with_cap(self.cap);
        out.truncated = self.truncated;
        for (&(m, g), c) in &self.terms {
            out.terms.insert((m, g), f(c));
        }
        out
    }

    /// The spatial slice at time slot `n`.
    pub fn time_slice(&self, n: usize) -> Self {
        let mut out = Self::zero(Grid { nt: 1, ..self.grid }).with_cap(self.cap);
        out.truncated = self.truncated;
        for (&k, f) in &self.terms {
            out.terms.insert(k, f.time_slice(n));
        }
        out
    }

    /// Element at lattice index `idx`.
    pub fn at(&self, idx: usize) -> AlgebraElement {
        let mut e = AlgebraElement::zero().with_cap(self.cap);
        for (&(m, g), f) in &self.terms {
            e.insert(m, g, f.data[idx]);
        }
        e
    }

    /// Bilinear pairing `∫ F(z) φ(z) dz` by lattice quadrature.
    pub fn pair(&self, phi: &Field) -> AlgebraElement {
        let cell = self.grid.cell_volume();
        let mut e = AlgebraElement::zero().with_cap(self.cap);
        for (&(m, g), f) in &self.terms {
            let s: C64 = f.data.iter().zip(&phi.data).map(|(a, b)| a * b).sum();
            e.insert(m, g, s * cell);
        }
        e
    }

    /// `π_{nm}`: keeps generators below `dim` and gates at most `dim`.
    pub fn project(&self, dim: usize) -> Self {
        let keep = if dim >= 64 { u64::MAX } else { (1u64 << dim) - 1 };
        let mut out = Self::zero(self.grid).with_cap(self.cap);
        out.truncated = self.truncated;
        for (&(m, g), f) in &self.terms {
            if m & !keep == 0 && g as usize <= dim {
                out.terms.insert((m, g), f.clone());
            }
        }
        out
    }

    /// `Some(0)` if every term is even, `Some(1)` if every term is odd.
    pub fn parity(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|(m, _)| m.count_ones() % 2);
        let first = it.next()?;
        it.all(|p| p == first).then_some(first)
    }

    /// `z ↦ ω(ϝ(F(z)))` on `d_ref` modes.
    pub fn vacuum_expect(&self, d_ref: usize) -> Field {
        let mut out = Field::zeros(self.grid);
        for (&(m, g), f) in &self.terms {
            if g as usize > d_ref {
                continue;
            }
            let paired = (0..32).all(|k| {
                let two = (m >> (2 * k)) & 3;
                two == 0 || two == 3
            });
            if paired {
                out.data.iter_mut().zip(&f.data).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    /// `sup_z Σ_terms |c(z)|`, an upper bound for the pointwise coefficient mass.
    pub fn sup_coefficient_mass(&self) -> f64 {
        let mut acc = vec![0.0f64; self.grid.len()];
        for f in self.terms.values() {
            acc.iter_mut().zip(&f.data).for_each(|(a, b)| *a += b.norm());
        }
        acc.into_iter().fold(0.0, f64::max)
    }

    /// The scalar part (empty mask, every gate) as a field.
    pub fn scalar_part(&self) -> Field {
        let mut out = Field::zeros(self.grid);
        for (&(m, _), f) in &self.terms {
            if m == 0 {
                out.data.iter_mut().zip(&f.data).for_each(|(a, b)| *a += b);
            }
        }
        out
    }
}

/// Applies `(∇̸+M)` (or `(-∇̸̄+M)`) to a two-component algebra field.
pub fn apply_dirac_algebra(
    dft: &dyn Dft,
    f: &[AlgebraField; 2],
    big_m: f64,
    conjugate: bool,
) -> Result<[AlgebraField; 2]> {
    f[0].grid.check_same(&f[1].grid)?;
    let grid = f[0].grid;
    let mut keys: Vec<(u64, u32)> = f[0].terms.keys().chain(f[1].terms.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let cap = f[0].cap.min(f[1].cap);
    let mut o0 = AlgebraField::zero(grid).with_cap(cap);
    let mut o1 = AlgebraField::zero(grid).with_cap(cap);
    for (m, g) in keys {
        let c0 = f[0].terms.get(&(m, g)).cloned().unwrap_or_else(|| Field::zeros(grid));
        let c1 = f[1].terms.get(&(m, g)).cloned().unwrap_or_else(|| Field::zeros(grid));
        let [d0, d1] = apply_dirac(dft, &[c0, c1], big_m, conjugate)?;
        o0.terms.insert((m, g), d0);
        o1.terms.insert((m, g), d1);
    }
    Ok([o0, o1])
}

/// Lattice cell midpoint time of slot `n`.
fn cell_time(grid: &Grid, n: usize) -> f64 {
    (n as f64 + 0.5) * grid.dt
}

/// The fermionic noise `Ψ = (ψ, ψ̄)` projected onto the first `dim` filtration
/// vectors: component `s` is `Σ_a ρ_{a,s}(z) Ψ_a` with `∫ ρ_{a,s} g = ⟨e_a, ι g_s⟩_𝔥`.
#[derive(Debug, Clone, PartialEq)]
pub struct FermionField {
    pub dim: usize,
    pub components: [AlgebraField; 4],
}

impl FermionField {
    pub fn new(ms: &ModeSpace, filt: &Filtration, dim: usize, grid: Grid) -> Result<Self> {
        if dim > filt.depth() {
            return Err(Error::Dimension { expected: filt.depth(), got: dim });
        }
        if ms.n_space() * 2 >= grid.nx {
            return Err(Error::Grid("spatial mode cutoff is not resolved by the lattice".into()));
        }
        let (w0, _) = ms.window();
        let cell = ms.time_cell();
        let h = 1.0 / cell.sqrt();
        let time_slot: Vec<Option<usize>> = (0..grid.nt)
            .map(|n| {
                let u = (cell_time(&grid, n) - w0) / cell;
                (u >= 0.0 && (u as usize) < ms.n_time()).then_some(u as usize)
            })
            .collect();
        let comps: Vec<AlgebraField> = (0..4)
            .map(|s| {
                let coeffs: Vec<Field> = (0..dim)
                    .map(|a| {
                        let e = &filt.basis()[a];
                        let mut f = Field::zeros(grid);
                        for (m, l) in ms.labels().iter().enumerate() {
                            if l.spinor != s || e[m] == ZERO {
                                continue;
                            }
                            let amp = e[m].conj() * ms.gram()[(m, m)] * h;
                            for t in 0..grid.nt {
                                if time_slot[t] != Some(l.time) {
                                    continue;
                                }
                                for i in 0..grid.nx {
                                    for j in 0..grid.nx {
                                        let ph = -2.0 * PI * (l.k.0 * i as i64 + l.k.1 * j as i64) as f64 / grid.nx as f64;
                                        f.data[grid.index(t, i, j)] += amp * C64::from_polar(1.0, ph);
                                    }
                                }
                            }
                        }
                        f
                    })
                    .collect();
                AlgebraField::linear(grid, coeffs)
            })
            .collect::<Result<_>>()?;
        let [c0, c1, c2, c3]: [AlgebraField; 4] = comps.try_into().map_err(|_| Error::Invariant("spinor count".into()))?;
        Ok(FermionField { dim, components: [c0, c1, c2, c3] })
    }

    pub fn psi(&self) -> [AlgebraField; 2] {
        [self.components[0].clone(), self.components[1].clone()]
    }

    pub fn psi_bar(&self) -> [AlgebraField; 2] {
        [self.components[2].clone(), self.components[3].clone()]
    }

    /// `Ψ(g) = Σ_s ∫ Ψ_s(z) g_s(z) dz`.
    pub fn smear(&self, g: &[Field; 4]) -> AlgebraElement {
        (0..4).fold(AlgebraElement::zero(), |acc, s| acc.add(&self.components[s].pair(&g[s])))
    }
}

/// Mode-space coordinates of a lattice test function: `∫ h_j(t) e^{-2πik·x} g_s`.
pub fn mode_coords(ms: &ModeSpace, g: &[Field; 4]) -> Result<Vec<C64>> {
    let grid = g[0].grid;
    for c in g.iter() {
        grid.check_same(&c.grid)?;
    }
    let (w0, _) = ms.window();
    let cell = ms.time_cell();
    let h = 1.0 / cell.sqrt();
    let vol = grid.cell_volume();
    let mut out = vec![ZERO; ms.dim()];
    for (m, l) in ms.labels().iter().enumerate() {
        let mut acc = ZERO;
        for t in 0..grid.nt {
            let u = (cell_time(&grid, t) - w0) / cell;
            if !(u >= 0.0 && u as usize == l.time) {
                continue;
            }
            for i in 0..grid.nx {
                for j in 0..grid.nx {
                    let ph = -2.0 * PI * (l.k.0 * i as i64 + l.k.1 * j as i64) as f64 / grid.nx as f64;
                    acc += g[l.spinor].data[grid.index(t, i, j)] * C64::from_polar(1.0, ph);
                }
            }
        }
        out[m] = acc * h * vol;
    }
    Ok(out)
}

/// `‖ι g‖²_𝔥 = Σ_s ∫ dt Σ_k w_k |ĝ_s(t, k)|²` on the lattice.
pub fn h_norm_sq(dft: &dyn Dft, p: &KernelParams, g: &[Field]) -> f64 {
    let mut total = 0.0;
    for f in g {
        let grid = f.grid;
        let spec = f.to_fourier(dft);
        let dx2 = grid.dx() * grid.dx();
        let scale = dx2 * dx2 * grid.dt / grid.nt as f64;
        for (idx, v) in spec.iter().enumerate() {
            let (_, i, j) = grid.coords(idx);
            let w = crate::singleparticle::spatial_weight((grid.k(i), grid.k(j)), p.delta, p.big_m);
            total += w * v.norm_sqr() * scale;
        }
    }
    total
}

/// Fourier multiplier of `ρ_ε` on the lattice (all ones for `ε = 0`).
pub fn mollifier_multiplier(grid: &Grid, eps: f64) -> Vec<f64> {
    if eps == 0.0 {
        return vec![1.0; grid.len()];
    }
    let mol = Mollifier::new(eps);
    let tw: Vec<f64> = (0..grid.nt).map(|n| mol.profile_hat(eps * eps * grid.omega(n))).collect();
    let xw: Vec<f64> = (0..grid.nx).map(|i| mol.profile_hat(eps * grid.k(i) as f64)).collect();
    (0..grid.len())
        .map(|idx| {
            let (t, i, j) = grid.coords(idx);
            tw[t] * xw[i] * xw[j]
        })
        .collect()
}

/// Applies a precomputed Fourier multiplier.
pub fn apply_multiplier(dft: &dyn Dft, f: &Field, m: &[C64]) -> Field {
    let mut spec = f.to_fourier(dft);
    spec.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    Field::from_fourier(f.grid, spec, dft)
}

/// Multiplier of the mollified stationary resolvent `ρ̂_ε / (2πiω + 4π²|k|² + μ²)`.
///
/// At the temporal Nyquist slot of an even-length grid the real part is used,
/// so real fields stay real.
pub fn resolvent_multiplier(grid: &Grid, mass: f64, moll: &[f64]) -> Vec<C64> {
    (0..grid.len())
        .map(|idx| {
            let (t, i, j) = grid.coords(idx);
            let (k1, k2) = (grid.k(i) as f64, grid.k(j) as f64);
            let a2 = 4.0 * PI * PI * (k1 * k1 + k2 * k2) + mass * mass;
            let m = C64::new(moll[idx], 0.0) / C64::new(a2, 2.0 * PI * grid.omega(t));
            if grid.nt % 2 == 0 && t == grid.nt / 2 {
                C64::new(m.re, 0.0)
            } else {
                m
            }
        })
        .collect()
}

/// Trees of degree one at mollification `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrees {
    pub eps: f64,
    /// `<1> = 𝓘_B(ξ_ε)`.
    pub one: Field,
    /// `<1IF> = 𝓘_F(ψ_ε)`.
    pub one_if: [AlgebraField; 2],
    /// `<1IA> = 𝓘_F(ψ̄_ε)`.
    pub one_ia: [AlgebraField; 2],
    /// `<1F> = (∇̸+M)<1IF>`.
    pub one_f: [AlgebraField; 2],
    /// `<1A> = (-∇̸̄+M)<1IA>`.
    pub one_a: [AlgebraField; 2],
}

/// Stationary linear solutions on the time-periodic lattice.
pub fn linear_solutions(
    dft: &dyn Dft,
    p: &KernelParams,
    xi: &BosonicSample,
    psi: &FermionField,
    eps: f64,
) -> Result<LinearTrees> {
    let grid = xi.xi.grid;
    for c in &psi.components {
        grid.check_same(&c.grid)?;
    }
    if eps != 0.0 && eps < 2.0 * grid.dx() {
        return Err(Error::Grid(alloc::format!("eps = {eps} is below twice the grid spacing")));
    }
    let moll = mollifier_multiplier(&grid, eps);
    let rb = resolvent_multiplier(&grid, p.m, &moll);
    let rf = resolvent_multiplier(&grid, p.big_m, &moll);
    let mut one = apply_multiplier(dft, &xi.xi, &rb);
    one.data.iter_mut().for_each(|v| v.im = 0.0);
    let lift = |c: &AlgebraField| c.map(|f| apply_multiplier(dft, f, &rf));
    let one_if = [lift(&psi.components[0]), lift(&psi.components[1])];
    let one_ia = [lift(&psi.components[2]), lift(&psi.components[3])];
    let one_f = apply_dirac_algebra(dft, &one_if, p.big_m, false)?;
    let one_a = apply_dirac_algebra(dft, &one_ia, p.big_m, true)?;
    Ok(LinearTrees { eps, one, one_if, one_ia, one_f, one_a })
}

/// `ξ^{⋄n}(f₁ ⊗ ⋯ ⊗ f_n)` by the Hermite-type recursion
/// `ξ^{⋄n}(f₁…f_n) = ξ(f₁) ξ^{⋄(n-1)}(f₂…f_n) - Σ_{j≥2} ⟨f₁, f_j⟩ ξ^{⋄(n-2)}(…f̂_j…)`.
pub fn bosonic_wick(xi: &BosonicSample, fs: &[Field]) -> C64 {
    match fs.len() {
        0 => C64::new(1.0, 0.0),
        _ => {
            let head = xi.pair(&fs[0]) * bosonic_wick(xi, &fs[1..]);
            let cell = xi.xi.grid.cell_volume();
            let mut corr = ZERO;
            for j in 1..fs.len() {
                let cov: C64 = fs[0].data.iter().zip(&fs[j].data).map(|(a, b)| a * b).sum::<C64>() * cell;
                let rest: Vec<Field> =
                    fs[1..].iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, f)| f.clone()).collect();
                corr += cov * bosonic_wick(xi, &rest);
            }
            head - corr
        }
    }
}

/// A product tensor `F₁ ⊗ F₂` with `F₁` a combination of symmetric rank-one
/// terms and `F₂` antisymmetric over filtration vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedTensor {
    pub bosonic: Vec<(C64, Vec<Field>)>,
    pub fermionic: AntisymTensor,
}

impl MixedTensor {
    pub fn bosonic_rank(&self) -> usize {
        self.bosonic.first().map_or(0, |(_, v)| v.len())
    }
}

/// `ξ^{⋄n}(F₁) · Ψ^{⋄m}(F₂)` for one bosonic sample.
pub fn mixed_wick_sample(f: &MixedTensor, xi: &BosonicSample, cap: usize) -> Result<AlgebraElement> {
    let n = f.bosonic_rank();
    if f.bosonic.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::Parameter("bosonic terms must share one rank".into()));
    }
    let m = f.fermionic.rank;
    if n + m > cap {
        return Err(Error::RankCap { rank: n + m, cap });
    }
    let b: C64 = f.bosonic.iter().map(|(c, fs)| c * bosonic_wick(xi, fs)).sum();
    let ferm = if m == 0 {
        f.fermionic.coeffs.get(&0).map_or(AlgebraElement::zero(), |c| AlgebraElement::scalar(*c))
    } else {
        crate::grassmann::wick_power(&f.fermionic, cap)?
    };
    Ok(ferm.scale(b))
}

/// `ξ^{⋄n}` applied to rank-one products with a single fermionic wedge.
pub fn mixed_wick_rank_one(bos: &[Field], ferm: &[Vec<C64>], xi: &BosonicSample, cap: usize) -> Result<AlgebraElement> {
    if bos.len() + ferm.len() > cap {
        return Err(Error::RankCap { rank: bos.len() + ferm.len(), cap });
    }
    Ok(wick_product(ferm, cap)?.scale(bosonic_wick(xi, bos)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::covariance;
    use crate::singleparticle::dirac_plus_mass;
    use crate::spectral::DirectDft;

    fn bump_field(grid: Grid, centre: (usize, usize, usize), r: usize) -> Field {
        Field::from_fn(grid, |t, i, j| {
            let d = |a: usize, b: usize, n: usize| {
                let x = (a as i64 - b as i64).rem_euclid(n as i64);
                x.min(n as i64 - x) as f64 / r as f64
            };
            let u = d(t, centre.0, grid.nt).powi(2) + d(i, centre.1, grid.nx).powi(2) + d(j, centre.2, grid.nx).powi(2);
            C64::new(if u < 1.0 { (1.0 - u).powi(2) } else { 0.0 }, 0.0)
        })
    }

    fn l2(f: &Field) -> f64 {
        f.pair(f).re
    }

    #[test]
    fn white_noise_second_moment_matches_l2_norm() {
        let grid = Grid::parabolic(8, 8);
        let f = bump_field(grid, (3, 3, 3), 3);
        let g = bump_field(grid, (3, 0, 0), 1);
        let n = 10_000;
        let (mut m2, mut m4, mut cross) = (0.0, 0.0, 0.0);
        for seed in 0..n {
            let s = sample_xi(seed, grid);
            let a = s.pair(&f).re;
            let b = s.pair(&g).re;
            m2 += a * a;
            m4 += a.powi(4);
            cross += a * b;
        }
        let nf = n as f64;
        let mean = m2 / nf;
        let sd = ((m4 / nf - mean * mean) / nf).sqrt();
        assert!((mean - l2(&f)).abs() < 3.0 * sd, "{mean} vs {}", l2(&f));
        // Disjoint supports: independent.
        let cross_sd = (l2(&f) * l2(&g) / nf).sqrt();
        assert!((cross / nf).abs() < 3.0 * cross_sd);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let grid = Grid::parabolic(4, 4);
        assert_eq!(sample_xi(7, grid), sample_xi(7, grid));
        assert_ne!(sample_xi(7, grid), sample_xi(8, grid));
    }

    #[test]
    fn hermite_recursion_is_centred_and_orthogonal() {
        let grid = Grid::parabolic(8, 8);
        let f = bump_field(grid, (2, 2, 2), 3);
        let n = 10_000;
        let (mut w2, mut w2sq, mut w12) = (0.0, 0.0, 0.0);
        for seed in 0..n {
            let s = sample_xi(1000 + seed, grid);
            let one = bosonic_wick(&s, core::slice::from_ref(&f)).re;
            assert!((one - s.pair(&f).re).abs() < 1e-12);
            let two = bosonic_wick(&s, &[f.clone(), f.clone()]).re;
            // Rank-one Wick square is the second Hermite polynomial.
            let x = s.pair(&f).re;
            assert!((two - (x * x - l2(&f))).abs() < 1e-9 * (1.0 + x * x));
            w2 += two;
            w2sq += two * two;
            w12 += one * two;
        }
        let nf = n as f64;
        let sd = (w2sq / nf / nf).sqrt();
        assert!((w2 / nf).abs() < 3.0 * sd);
        // E[ξ(f) ξ^{⋄2}(f⊗f)] = 0; its variance is E[x²(x²-σ²)²] = 10σ⁶ for x ~ N(0, σ²).
        let sd12 = (10.0 * l2(&f).powi(3) / nf).sqrt();
        assert!((w12 / nf).abs() < 3.0 * sd12);
    }

    fn small_setup() -> (ModeSpace, Filtration, Grid) {
        let grid = Grid::parabolic(8, 8);
        let ms = ModeSpace::with_window(2, 1, 0.2, 1.0, (0.0, grid.period())).unwrap();
        let filt = Filtration::build(&ms, 8).unwrap();
        (ms, filt, grid)
    }

    fn plane_wave(grid: Grid, k: (i64, i64), tmax: usize, phase: f64) -> Field {
        Field::from_fn(grid, |t, i, j| {
            if t >= tmax {
                return ZERO;
            }
            let x = 2.0 * PI * (k.0 * i as i64 + k.1 * j as i64) as f64 / grid.nx as f64;
            C64::from_polar(1.0, x + phase)
        })
    }

    #[test]
    fn smeared_field_matches_filtration_coordinates() {
        let (ms, filt, grid) = small_setup();
        let ff = FermionField::new(&ms, &filt, 8, grid).unwrap();
        let z = Field::zeros(grid);
        let g = [plane_wave(grid, (0, 0), 4, 0.3), plane_wave(grid, (1, 0), 8, 1.1), z.clone(), plane_wave(grid, (0, -1), 2, 0.0)];
        let coords = filt.coords(&ms, &mode_coords(&ms, &g).unwrap(), 8).unwrap();
        let lhs = ff.smear(&g);
        let rhs = AlgebraElement::field(&coords);
        assert!(lhs.sub(&rhs).retained_mass() < 1e-10);
        assert_eq!(lhs.parity(), Some(1));
    }

    #[test]
    fn covariance_on_the_lattice_matches_kappa_u_pairing() {
        let (ms, filt, grid) = small_setup();
        let ff = FermionField::new(&ms, &filt, 8, grid).unwrap();
        let z = Field::zeros(grid);
        let f = [plane_wave(grid, (0, 0), 8, 0.0), z.clone(), plane_wave(grid, (0, 0), 4, 0.4), z.clone()];
        let g = [z.clone(), plane_wave(grid, (0, 0), 4, 1.0), plane_wave(grid, (0, 0), 8, 2.0), z.clone()];
        let pf = ff.smear(&f);
        let pg = ff.smear(&g);
        let w = pf.mul(&pg).vacuum_expect(8);
        let cf = filt.coords(&ms, &mode_coords(&ms, &f).unwrap(), 8).unwrap();
        let cg = filt.coords(&ms, &mode_coords(&ms, &g).unwrap(), 8).unwrap();
        assert!((w - covariance(&cf, &cg)).norm() < 1e-8);
        // Independent route through the mode space.
        let proj = |c: &[C64]| filt.synthesize(c);
        let direct = ms.inner(&ms.kappa_u(&proj(&cf)).unwrap(), &proj(&cg)).unwrap();
        assert!((w - direct).norm() < 1e-8);
        // Antisymmetry of the two-point function.
        let w2 = pg.mul(&pf).vacuum_expect(8);
        assert!((w + w2).norm() < 1e-10);
    }

    #[test]
    fn psi_bar_psi_covariance_matches_explicit_symbol() {
        // ω(ψ̄(f)ψ(g)) = Σ_{j,k} w_k ((∇̸+M)(-k) f_j(-k))ᵀ g_j(k) / √(|p|²+M²) on k = 0.
        let grid = Grid::parabolic(8, 8);
        let ms = ModeSpace::with_window(1, 1, 0.2, 1.3, (0.0, grid.period())).unwrap();
        let filt = Filtration::build(&ms, 4).unwrap();
        let ff = FermionField::new(&ms, &filt, 4, grid).unwrap();
        let z = Field::zeros(grid);
        let fbar = [z.clone(), z.clone(), plane_wave(grid, (0, 0), 8, 0.2), plane_wave(grid, (0, 0), 8, 0.9)];
        let g = [plane_wave(grid, (0, 0), 8, 0.5), plane_wave(grid, (0, 0), 8, 1.7), z.clone(), z.clone()];
        let w = ff.smear(&fbar).mul(&ff.smear(&g)).vacuum_expect(4);
        let cf = mode_coords(&ms, &fbar).unwrap();
        let cg = mode_coords(&ms, &g).unwrap();
        let idx = |s| ms.index_of(0, (0, 0), s).unwrap();
        let sym = dirac_plus_mass((0.0, 0.0), 1.3);
        let wk = ms.gram()[(idx(0), idx(0))].re;
        let mut expect = ZERO;
        for i in 0..2 {
            let mut v = ZERO;
            for j in 0..2 {
                v += sym[i][j] * cf[idx(2 + j)];
            }
            expect += v * cg[idx(i)];
        }
        expect *= wk / 1.3;
        assert!((w - expect).norm() < 1e-8, "{w} vs {expect}");
    }

    #[test]
    fn field_seminorm_is_sqrt_two_times_h_norm() {
        let (ms, filt, grid) = small_setup();
        let ff = FermionField::new(&ms, &filt, 8, grid).unwrap();
        let g = [bump_field(grid, (2, 1, 1), 3), Field::zeros(grid), bump_field(grid, (5, 4, 4), 2), Field::zeros(grid)];
        let e = ff.smear(&g);
        let c: Vec<C64> = (0..8).map(|a| e.terms().find(|t| t.0 == 1u64 << a).map_or(ZERO, |t| t.2)).collect();
        let norm_c = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let r = e.seminorm(&filt, 8, 8).unwrap();
        assert!((r.value - 2f64.sqrt() * norm_c).abs() < 1e-9);
    }

    #[test]
    fn h_norm_matches_mode_space_norm_for_resolved_functions() {
        let grid = Grid::parabolic(8, 8);
        let ms = ModeSpace::with_window(1, 1, 0.2, 1.0, (0.0, grid.period())).unwrap();
        let p = KernelParams::new(1.0, 1.0, 0.2).unwrap();
        let z = Field::zeros(grid);
        let g = [plane_wave(grid, (1, 0), 8, 0.0).add(&plane_wave(grid, (0, 0), 8, 0.7)), z.clone(), z.clone(), plane_wave(grid, (1, -1), 8, 0.1)];
        let direct = ms.norm(&mode_coords(&ms, &g).unwrap()).powi(2);
        assert!((h_norm_sq(&DirectDft, &p, &g) - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn linear_solutions_have_declared_parity_and_solve_the_resolvent() {
        let grid = Grid::parabolic(9, 8);
        let ms = ModeSpace::with_window(3, 1, 0.2, 1.0, (0.0, grid.period())).unwrap();
        let filt = Filtration::build(&ms, 4).unwrap();
        let p = KernelParams::new(1.0, 1.0, 0.2).unwrap();
        let ff = FermionField::new(&ms, &filt, 4, grid).unwrap();
        let xi = sample_xi(3, grid);
        let lin = linear_solutions(&DirectDft, &p, &xi, &ff, 0.0).unwrap();
        for f in lin.one_if.iter().chain(&lin.one_ia).chain(&lin.one_f).chain(&lin.one_a) {
            assert_eq!(f.parity(), Some(1));
        }
        // (∂_t - Δ + m²)<1> = ξ, checked through the Fourier symbol.
        let back = lin.one.multiply(&DirectDft, |w, k1, k2| {
            C64::new(4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + 1.0, 2.0 * PI * w)
        });
        let err = back.sub(&xi.xi).max_abs() / xi.xi.max_abs();
        assert!(err < 1e-10, "{err}");
        assert!(linear_solutions(&DirectDft, &p, &xi, &ff, 0.1).is_err());
    }

    #[test]
    fn mixed_wick_reduces_and_bounds() {
        let (ms, filt, grid) = small_setup();
        let xi = sample_xi(11, grid);
        let f = bump_field(grid, (1, 1, 1), 2);
        let mut t0 = AntisymTensor::new(0);
        t0.coeffs.insert(0, C64::new(1.0, 0.0));
        let one = MixedTensor { bosonic: vec![(C64::new(1.0, 0.0), vec![f.clone()])], fermionic: t0 };
        let e = mixed_wick_sample(&one, &xi, 4).unwrap();
        assert!((e.vacuum_expect(0) - xi.pair(&f)).norm() < 1e-12);
        let g: Vec<C64> = (0..4).map(|a| C64::new(0.3 * a as f64 - 0.4, 0.1)).collect();
        let mixed = mixed_wick_rank_one(core::slice::from_ref(&f), core::slice::from_ref(&g), &xi, 4).unwrap();
        let psi = AlgebraElement::field(&g);
        for n in [2, 4] {
            let lhs = mixed.seminorm(&filt, n, 8).unwrap().value;
            let rhs = xi.pair(&f).norm() * psi.seminorm(&filt, n, 8).unwrap().value;
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-14);
        }
        let big = MixedTensor { bosonic: vec![(C64::new(1.0, 0.0), vec![f.clone(); 3])], fermionic: AntisymTensor::new(2) };
        assert!(matches!(mixed_wick_sample(&big, &xi, 4), Err(Error::RankCap { .. })));
        let _ = ms;
    }

    #[test]
    fn algebra_field_products_follow_the_graded_rule() {
        let grid = Grid::parabolic(2, 2);
        let a = AlgebraField::linear(grid, vec![Field::from_fn(grid, |t, _, _| C64::new(1.0 + t as f64, 0.0)), Field::zeros(grid)]).unwrap();
        let b = AlgebraField::linear(grid, vec![Field::zeros(grid), Field::from_fn(grid, |_, i, _| C64::new(2.0 + i as f64, 0.0))]).unwrap();
        let ab = a.mul(&b);
        let ba = b.mul(&a);
        assert_eq!(ab.parity(), Some(0));
        for idx in 0..grid.len() {
            let lhs = ab.at(idx);
            let rhs = a.at(idx).mul(&b.at(idx));
            assert!(lhs.sub(&rhs).retained_mass() < 1e-14);
            assert!(lhs.add(&ba.at(idx)).retained_mass() < 1e-14);
        }
        assert!(ab.project(1).is_empty());
        assert_eq!(ab.project(2).len(), 1);
    }
}
