//! Extended-algebra elements over a κU-paired filtration basis.
//!
//! With `e_{2k+1} = κU e_{2k}` the generators `Ψ_a = Ψ(e_a)` anticommute and
//! square to zero under every `π_b`, so an element is a Grassmann polynomial in
//! the `Ψ_a`. Central scalars such as `[α(κUf), α†(g)]₊` depend on `b` only
//! through which pairs `(2k, 2k+1)` it contains; each term therefore carries a
//! *gate* `g`: under `π_b` the term is kept iff `dim b ≥ g`.
//!
//! [`FreeElement`] keeps words in `α†(f)`, `α(f)` for checks needing a
//! `*`-closed algebra.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{kappa_u_coords, operator_norm, FockOperator, FockRep, Ladder, ABSOLUTE_D_MAX};
use crate::linalg::spectral_norm;
use nalgebra::DMatrix;
use crate::singleparticle::{Filtration, ModeSpace};
use crate::C64;

/// Default cap on the retained Grassmann degree.
pub const DEFAULT_DEGREE_CAP: usize = 6;

fn top_gate(mask: u64) -> u32 {
    if mask == 0 {
        0
    } else {
        let hi = 64 - mask.leading_zeros();
        hi + (hi % 2)
    }
}

fn canonical_gate(mask: u64, gate: u32) -> u32 {
    let g = gate.max(top_gate(mask));
    g + (g % 2)
}

/// Sign of `Ψ_S Ψ_T` reordered into ascending order (zero if they overlap).
fn merge_sign(s: u64, t: u64) -> f64 {
    if s & t != 0 {
        return 0.0;
    }
    // Each generator of T passes over the generators of S above it.
    let mut swaps = 0u32;
    let mut rest = t;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (s >> j).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Product of the basis terms `(ma, ga)·(mb, gb)`: the merged mask, canonical
/// gate and reordering sign, or `None` if the generators overlap.
pub fn term_product(ma: u64, ga: u32, mb: u64, gb: u32) -> Option<(u64, u32, f64)> {
    let sign = merge_sign(ma, mb);
    if sign == 0.0 {
        None
    } else {
        Some((ma | mb, canonical_gate(ma | mb, ga.max(gb)), sign))
    }
}

/// Canonical gate of a term with generator mask `mask` and requested gate `gate`.
pub fn term_gate(mask: u64, gate: u32) -> u32 {
    canonical_gate(mask, gate)
}

/// Grassmann polynomial with gated terms.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    terms: BTreeMap<(u64, u32), C64>,
    degree_cap: usize,
    /// `ℓ¹` mass of coefficients dropped by the degree cap.
    truncated: f64,
}

impl Default for AlgebraElement {
    fn default() -> Self {
        Self::zero()
    }
}

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement { terms: BTreeMap::new(), degree_cap: DEFAULT_DEGREE_CAP, truncated: 0.0 }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.degree_cap = cap;
        self
    }

    pub fn scalar(c: C64) -> Self {
        Self::zero().with_term(0, 0, c)
    }

    pub fn one() -> Self {
        Self::scalar(C64::new(1.0, 0.0))
    }

    /// `Ψ_a`.
    pub fn generator(a: usize) -> Self {
        Self::zero().with_term(1u64 << a, 0, C64::new(1.0, 0.0))
    }

    /// The central scalar `c·1` visible only on subspaces of dimension `≥ gate`.
    pub fn gated_scalar(c: C64, gate: u32) -> Self {
        Self::zero().with_term(0, gate, c)
    }

    /// `Ψ(f)` for `f` with filtration coordinates `c`.
    pub fn field(c: &[C64]) -> Self {
        let mut out = Self::zero();
        for (a, v) in c.iter().enumerate() {
            out.insert(1u64 << a, 0, *v);
        }
        out
    }

    /// The central element `[α(κUf), α†(g)]₊ = Σ_k (f_{2k} g_{2k+1} - f_{2k+1} g_{2k})·1_{2k+2}`.
    pub fn central_pairing(f: &[C64], g: &[C64]) -> Self {
        let mut out = Self::zero();
        for k in 0..f.len().min(g.len()) / 2 {
            let v = f[2 * k] * g[2 * k + 1] - f[2 * k + 1] * g[2 * k];
            out.insert(0, (2 * k + 2) as u32, v);
        }
        out
    }

    fn with_term(mut self, mask: u64, gate: u32, c: C64) -> Self {
        self.insert(mask, gate, c);
        self
    }

    /// Adds `c` to the term `(mask, gate)`.
    pub fn insert(&mut self, mask: u64, gate: u32, c: C64) {
        if c == C64::new(0.0, 0.0) {
            return;
        }
        if mask.count_ones() as usize > self.degree_cap {
            self.truncated += c.norm();
            return;
        }
        let key = (mask, canonical_gate(mask, gate));
        let e = self.terms.entry(key).or_insert(C64::new(0.0, 0.0));
        *e += c;
        if *e == C64::new(0.0, 0.0) {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, u32, C64)> + '_ {
        self.terms.iter().map(|(&(m, g), &c)| (m, g, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated
    }

    /// `ℓ¹` mass of the retained coefficients.
    pub fn retained_mass(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|(m, _)| m.count_ones() as usize).max().unwrap_or(0)
    }

    /// `Some(0)` for even, `Some(1)` for odd, `None` for mixed or zero.
    pub fn parity(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|(m, _)| m.count_ones() % 2);
        let first = it.next()?;
        if it.all(|p| p == first) {
            Some(first)
        } else {
            None
        }
    }

    /// Largest generator index used plus one.
    pub fn span(&self) -> usize {
        self.terms.keys().map(|&(m, g)| top_gate(m).max(g) as usize).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.truncated += other.truncated;
        for (&(m, g), &c) in &other.terms {
            out.insert(m, g, c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero().with_cap(self.degree_cap);
        out.truncated = self.truncated * s.norm();
        for (&(m, g), &c) in &self.terms {
            out.insert(m, g, c * s);
        }
        out
    }

    /// Graded product; terms above the degree cap go to the truncation ledger.
    pub fn mul(&self, other: &Self) -> Self {
        let cap = self.degree_cap.min(other.degree_cap);
        let mut out = Self::zero().with_cap(cap);
        out.truncated = self.truncated * other.retained_mass() + other.truncated * self.retained_mass();
        for (&(ma, ga), &ca) in &self.terms {
            for (&(mb, gb), &cb) in &other.terms {
                let sign = merge_sign(ma, mb);
                if sign == 0.0 {
                    continue;
                }
                out.insert(ma | mb, ga.max(gb), ca * cb * sign);
            }
        }
        out
    }

    /// `[a, b]₊`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        self.mul(other).add(&other.mul(self))
    }

    /// Graded commutator `ab - (-1)^{|a||b|} ba` for homogeneous elements.
    pub fn supercommutator(&self, other: &Self) -> Self {
        let pa = self.parity().unwrap_or(0);
        let pb = other.parity().unwrap_or(0);
        if pa * pb == 1 {
            self.anticommutator(other)
        } else {
            self.mul(other).sub(&other.mul(self))
        }
    }

    /// Drops coefficients of modulus below `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.norm() >= tol);
        out
    }

    /// `π_b` for the chain subspace of dimension `dim`, as an operator on `dim` modes.
    ///
    /// `Ψ_{2k} = a†_{2k} + a_{2k+1}` and `Ψ_{2k+1} = a†_{2k+1} - a_{2k}`.
    pub fn represent(&self, dim: usize) -> FockOperator {
        let mut out = FockOperator::zero();
        for (&(m, g), &c) in &self.terms {
            if g as usize > dim {
                continue;
            }
            let mut words: Vec<(C64, Vec<Ladder>)> = vec![(c, Vec::new())];
            let mut rest = m;
            while rest != 0 {
                let a = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let (partner, sgn) = if a % 2 == 0 { (a + 1, 1.0) } else { (a - 1, -1.0) };
                let mut next = Vec::with_capacity(words.len() * 2);
                for (wc, w) in &words {
                    let mut w1 = w.clone();
                    w1.push(Ladder::Create(a));
                    next.push((*wc, w1));
                    let mut w2 = w.clone();
                    w2.push(Ladder::Annihilate(partner));
                    next.push((wc * sgn, w2));
                }
                words = next;
            }
            out.terms.extend(words);
        }
        out
    }

    /// The seminorm `‖a‖_n`: supremum of `‖π_b(a)‖` over the chain `Γ_n`.
    pub fn seminorm(&self, filt: &Filtration, n: usize, d_max: usize) -> Result<SeminormReport> {
        chain_seminorm(filt, n, d_max, |d| self.represent(d))
    }

    /// `ϝ(a)`: the image in the reference representation on `d_ref` modes.
    pub fn digamma(&self, d_ref: usize) -> FockOperator {
        self.represent(d_ref)
    }

    /// Vacuum expectation `ω(ϝ(a))` on `d_ref` modes, computed symbolically:
    /// only pair products `Ψ_{2k}Ψ_{2k+1}` (value 1) survive.
    pub fn vacuum_expect(&self, d_ref: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&(m, g), &c) in &self.terms {
            if g as usize > d_ref {
                continue;
            }
            let paired = (0..32).all(|k| {
                let two = (m >> (2 * k)) & 3;
                two == 0 || two == 3
            });
            if paired {
                acc += c;
            }
        }
        acc
    }

    /// One line per term: `i j k : re,im`, with `@gate` appended when the gate
    /// exceeds the one implied by the indices.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (&(m, g), c) in &self.terms {
            let idx: Vec<String> = (0..64).filter(|j| m & (1u64 << j) != 0).map(|j| alloc::format!("{j}")).collect();
            let _ = write!(s, "{}", idx.join(" "));
            if g != top_gate(m) {
                let _ = write!(s, " @{g}");
            }
            let _ = writeln!(s, " : {:e},{:e}", c.re, c.im);
        }
        s
    }

    /// Inverse of [`AlgebraElement::dump`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::zero();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parameter(alloc::format!("line {}: malformed term", ln + 1));
            let (lhs, rhs) = line.split_once(':').ok_or_else(bad)?;
            let (re, im) = rhs.trim().split_once(',').ok_or_else(bad)?;
            let c = C64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?);
            let mut mask = 0u64;
            let mut gate = 0u32;
            for tok in lhs.split_whitespace() {
                if let Some(g) = tok.strip_prefix('@') {
                    gate = g.parse().map_err(|_| bad())?;
                } else {
                    let j: u32 = tok.parse().map_err(|_| bad())?;
                    if j >= 64 {
                        return Err(bad());
                    }
                    mask |= 1u64 << j;
                }
            }
            out.insert(mask, gate, c);
        }
        Ok(out)
    }
}

/// Result of a seminorm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormReport {
    pub level: usize,
    pub value: f64,
    /// Dimension of the chain subspace attaining the supremum.
    pub witness_dim: usize,
}

/// Supremum of `‖π_b(a)‖` over the chain subspaces in `Γ_n`.
pub fn chain_seminorm<F: Fn(usize) -> FockOperator>(
    filt: &Filtration,
    n: usize,
    d_max: usize,
    represent: F,
) -> Result<SeminormReport> {
    let top = filt.top_dim(n);
    if top > d_max.min(ABSOLUTE_D_MAX) {
        return Err(Error::FockTooLarge { modes: top, max: d_max.min(ABSOLUTE_D_MAX) });
    }
    let mut best = SeminormReport { level: n, value: 0.0, witness_dim: 0 };
    for i in 0..=top / 2 {
        let d = 2 * i;
        let v = operator_norm(&represent(d), d);
        if v > best.value {
            best.value = v;
            best.witness_dim = d;
        }
    }
    Ok(best)
}

/// Antisymmetric tensor `F = Σ_S F_S e_{s₁}∧⋯∧e_{s_n}` over ascending index sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AntisymTensor {
    pub rank: usize,
    pub coeffs: BTreeMap<u64, C64>,
}

impl AntisymTensor {
    pub fn new(rank: usize) -> Self {
        AntisymTensor { rank, coeffs: BTreeMap::new() }
    }

    pub fn insert(&mut self, indices: &[usize], c: C64) -> Result<()> {
        if indices.len() != self.rank {
            return Err(Error::Dimension { expected: self.rank, got: indices.len() });
        }
        let mut sorted = indices.to_vec();
        let mut sign = 1.0;
        for i in 0..sorted.len() {
            for j in 0..sorted.len() - 1 - i {
                if sorted[j] > sorted[j + 1] {
                    sorted.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Ok(());
        }
        let mask = sorted.iter().fold(0u64, |m, &j| m | (1u64 << j));
        *self.coeffs.entry(mask).or_insert(C64::new(0.0, 0.0)) += c * sign;
        Ok(())
    }

    /// `f₁ ∧ ⋯ ∧ f_n` from filtration coordinates.
    pub fn wedge(fs: &[Vec<C64>]) -> Self {
        let n = fs.len();
        let d = fs.iter().map(|f| f.len()).max().unwrap_or(0);
        let mut t = AntisymTensor::new(n);
        for mask in 0u64..(1u64 << d) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let idx: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| fs[i].get(idx[j]).copied().unwrap_or_default());
            let v = crate::linalg::det(m);
            if v.norm() != 0.0 {
                t.coeffs.insert(mask, v);
            }
        }
        t
    }

    /// `‖F‖` in `𝔥^{∧n}` with `⟨e_S, e_S⟩ = 1/n!`.
    pub fn norm(&self) -> f64 {
        let s: f64 = self.coeffs.values().map(|c| c.norm_sqr()).sum();
        (s / factorial(self.rank)).sqrt()
    }

    pub fn span(&self) -> usize {
        self.coeffs.keys().map(|&m| top_gate(m) as usize).max().unwrap_or(0)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// Recursive Wick product `Ψ^{⋄n}(f₁∧⋯∧f_n)` of vectors given by filtration coordinates.
pub fn wick_product(fs: &[Vec<C64>], cap: usize) -> Result<AlgebraElement> {
    if fs.len() > cap {
        return Err(Error::RankCap { rank: fs.len(), cap });
    }
    Ok(wick_rec(fs, cap))
}

fn wick_rec(fs: &[Vec<C64>], cap: usize) -> AlgebraElement {
    match fs.len() {
        0 => AlgebraElement::one().with_cap(cap),
        1 => AlgebraElement::field(&fs[0]).with_cap(cap),
        _ => {
            let head = AlgebraElement::field(&fs[0]).with_cap(cap);
            let mut out = head.mul(&wick_rec(&fs[1..], cap));
            for j in 1..fs.len() {
                let c = AlgebraElement::central_pairing(&fs[0], &fs[j]).with_cap(cap);
                let rest: Vec<Vec<C64>> =
                    fs[1..].iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, v)| v.clone()).collect();
                // j counts from 0 here, so the sign (-1)^{j+1} matches the 1-based rule.
                let term = c.mul(&wick_rec(&rest, cap));
                out = if j % 2 == 1 { out.sub(&term) } else { out.add(&term) };
            }
            out
        }
    }
}

/// `Ψ^{⋄n}(F)` for an antisymmetric tensor over filtration basis vectors.
pub fn wick_power(f: &AntisymTensor, cap: usize) -> Result<AlgebraElement> {
    if f.rank > cap {
        return Err(Error::RankCap { rank: f.rank, cap });
    }
    let mut out = AlgebraElement::zero().with_cap(cap);
    for (&mask, &c) in &f.coeffs {
        let d = top_gate(mask) as usize;
        let fs: Vec<Vec<C64>> = (0..64)
            .filter(|j| mask & (1u64 << j) != 0)
            .map(|j| {
                let mut v = vec![C64::new(0.0, 0.0); d.max(j + 1)];
                v[j] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        out = out.add(&wick_rec(&fs, cap).scale(c));
    }
    Ok(out)
}

/// Result of the extended-Wick norm comparison on one chain subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickBoundReport {
    pub dim: usize,
    pub norm: f64,
    pub tensor_norm: f64,
    /// `‖Ψ^{⋄n}(F)‖_b / ((1 + dim b)^{(n-1)/2} ‖F‖)`.
    pub ratio: f64,
    /// `‖Ψ^{⋄n}(F)‖_b / ‖F‖`, bounded below by 1 once `F` lives in `b`.
    pub lower_ratio: f64,
}

pub fn wick_norm_bound_check(f: &AntisymTensor, dim: usize, cap: usize) -> Result<WickBoundReport> {
    if dim > ABSOLUTE_D_MAX {
        return Err(Error::FockTooLarge { modes: dim, max: ABSOLUTE_D_MAX });
    }
    let w = wick_power(f, cap)?;
    let norm = operator_norm(&w.represent(dim), dim);
    let tn = f.norm();
    let n = f.rank as f64;
    Ok(WickBoundReport {
        dim,
        norm,
        tensor_norm: tn,
        ratio: norm / ((1.0 + dim as f64).powf((n - 1.0) / 2.0) * tn),
        lower_ratio: norm / tn,
    })
}

/// Two-point function `ω(Ψ(f)Ψ(g)) = ⟨κUf, g⟩` in filtration coordinates.
pub fn covariance(f: &[C64], g: &[C64]) -> C64 {
    let kuf = kappa_u_coords(f);
    kuf.iter().zip(g).map(|(a, b)| a.conj() * b).sum()
}

/// Signed pairing sum (Pfaffian) of the two-point functions of `fs`.
pub fn pfaffian_expectation(fs: &[Vec<C64>]) -> C64 {
    let n = fs.len();
    if n % 2 == 1 {
        return C64::new(0.0, 0.0);
    }
    let idx: Vec<usize> = (0..n).collect();
    pf_rec(fs, &idx)
}

fn pf_rec(fs: &[Vec<C64>], idx: &[usize]) -> C64 {
    if idx.is_empty() {
        return C64::new(1.0, 0.0);
    }
    let first = idx[0];
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, v)| *v).collect();
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        acc += covariance(&fs[first], &fs[idx[j]]) * pf_rec(fs, &rest) * sign;
    }
    acc
}

/// A letter `α†(f)` or `α(f)` of the free algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct Letter {
    pub dagger: bool,
    pub f: Arc<Vec<C64>>,
}

/// Element of the free `*`-algebra on `α†(f)`, `α(f)`, `f ∈ 𝔥`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreeElement {
    pub terms: Vec<(C64, Vec<Letter>)>,
}

impl FreeElement {
    pub fn scalar(c: C64) -> Self {
        FreeElement { terms: vec![(c, Vec::new())] }
    }

    pub fn one() -> Self {
        Self::scalar(C64::new(1.0, 0.0))
    }

    pub fn create(f: &[C64]) -> Self {
        FreeElement { terms: vec![(C64::new(1.0, 0.0), vec![Letter { dagger: true, f: Arc::new(f.to_vec()) }])] }
    }

    pub fn annihilate(f: &[C64]) -> Self {
        FreeElement { terms: vec![(C64::new(1.0, 0.0), vec![Letter { dagger: false, f: Arc::new(f.to_vec()) }])] }
    }

    /// `Ψ(f) = α†(f) + α(κUf)`.
    pub fn field(ms: &ModeSpace, f: &[C64]) -> Result<Self> {
        Ok(Self::create(f).add(&Self::annihilate(&ms.kappa_u(f)?)))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        FreeElement { terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        FreeElement { terms: self.terms.iter().map(|(c, w)| (c * s, w.clone())).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::new();
        for (a, wa) in &self.terms {
            for (b, wb) in &other.terms {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                terms.push((a * b, w));
            }
        }
        FreeElement { terms }
    }

    pub fn adjoint(&self) -> Self {
        FreeElement {
            terms: self
                .terms
                .iter()
                .map(|(c, w)| {
                    (c.conj(), w.iter().rev().map(|l| Letter { dagger: !l.dagger, f: l.f.clone() }).collect())
                })
                .collect(),
        }
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        self.mul(other).add(&other.mul(self))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// `π_b`: each letter replaced by its `P_b`-projected Fock operator.
    pub fn represent(&self, rep: &FockRep) -> FockOperator {
        let mut out = FockOperator::zero();
        for (c, w) in &self.terms {
            let mut acc = FockOperator::scalar(*c);
            for l in w {
                let op = if l.dagger { rep.creation(&l.f) } else { rep.annihilation(&l.f) };
                acc = acc.mul(&op);
                if acc.terms.is_empty() {
                    break;
                }
            }
            out = out.add(&acc);
        }
        out
    }

    /// `π_b` as a dense matrix, applying one sparse letter at a time.
    pub fn represent_matrix(&self, rep: &FockRep) -> DMatrix<C64> {
        let dim = rep.dim();
        let mut out = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        for (c, w) in &self.terms {
            let mut m = DMatrix::<C64>::identity(dim, dim) * *c;
            for l in w.iter().rev() {
                let op = if l.dagger { rep.creation(&l.f) } else { rep.annihilation(&l.f) };
                for j in 0..dim {
                    let col: Vec<C64> = m.column(j).iter().copied().collect();
                    let img = rep.apply(&op, &col);
                    m.column_mut(j).iter_mut().zip(img).for_each(|(a, b)| *a = b);
                }
            }
            out += m;
        }
        out
    }

    pub fn seminorm(&self, ms: &ModeSpace, filt: &Filtration, n: usize, d_max: usize) -> Result<SeminormReport> {
        let top = filt.top_dim(n);
        if top > d_max.min(ABSOLUTE_D_MAX) || top > 12 {
            return Err(Error::FockTooLarge { modes: top, max: d_max.min(12) });
        }
        let mut best = SeminormReport { level: n, value: 0.0, witness_dim: 0 };
        for i in 0..=top / 2 {
            let rep = FockRep::materialize(ms, &filt.prefix(2 * i), d_max)?;
            let v = spectral_norm(&self.represent_matrix(&rep));
            if v > best.value {
                best.value = v;
                best.witness_dim = 2 * i;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn generator_squares_to_zero_and_anticommutes() {
        let p1 = AlgebraElement::generator(1);
        let p2 = AlgebraElement::generator(2);
        assert!(p1.mul(&p1).is_empty());
        assert_eq!(p1.mul(&p2), p2.mul(&p1).scale(c(-1.0)));
    }

    #[test]
    fn degree_cap_feeds_the_ledger() {
        let mut a = AlgebraElement::one().with_cap(2);
        for j in 0..3 {
            a = a.mul(&AlgebraElement::generator(j).with_cap(2));
        }
        assert!(a.is_empty());
        assert!(a.truncated_mass() > 0.0);
    }

    #[test]
    fn wick_square_of_a_pair_subtracts_the_unit() {
        let f = vec![c(1.0), c(0.0)];
        let g = vec![c(0.0), c(1.0)];
        let w = wick_product(&[f, g], 6).unwrap();
        let mut expect = AlgebraElement::generator(0).mul(&AlgebraElement::generator(1));
        expect = expect.sub(&AlgebraElement::gated_scalar(c(1.0), 2));
        assert_eq!(w, expect);
        assert!(w.vacuum_expect(4).norm() < 1e-15);
    }

    #[test]
    fn wick_recursion_base_cases() {
        let f = vec![c(0.5), C64::new(0.0, 1.0)];
        assert_eq!(wick_product(&[], 6).unwrap(), AlgebraElement::one());
        assert_eq!(wick_product(&[f.clone()], 6).unwrap(), AlgebraElement::field(&f));
        assert!(matches!(wick_product(&[f.clone(), f.clone(), f], 2), Err(Error::RankCap { .. })));
    }

    #[test]
    fn dump_round_trips() {
        let a = AlgebraElement::generator(0)
            .mul(&AlgebraElement::generator(3))
            .scale(C64::new(0.25, -1.5))
            .add(&AlgebraElement::gated_scalar(c(2.0), 4));
        let text = a.dump();
        assert!(text.contains("@4"));
        assert_eq!(AlgebraElement::parse(&text).unwrap(), a);
    }

    #[test]
    fn merge_sign_counts_transpositions() {
        // Ψ_1 Ψ_0 = -Ψ_0 Ψ_1; Ψ_{02} Ψ_1 = -Ψ_{012}.
        assert_eq!(merge_sign(0b10, 0b01), -1.0);
        assert_eq!(merge_sign(0b101, 0b010), -1.0);
        assert_eq!(merge_sign(0b001, 0b110), 1.0);
        assert_eq!(merge_sign(0b011, 0b010), 0.0);
    }

    #[test]
    fn pfaffian_of_four_points_expands() {
        let fs: Vec<Vec<C64>> = (0..4)
            .map(|i| (0..4).map(|j| C64::new(((i * 3 + j * 5) % 7) as f64 - 3.0, (i + j) as f64 * 0.1)).collect())
            .collect();
        let cv = |a: usize, b: usize| covariance(&fs[a], &fs[b]);
        let expect = cv(0, 1) * cv(2, 3) - cv(0, 2) * cv(1, 3) + cv(0, 3) * cv(1, 2);
        assert!((pfaffian_expectation(&fs) - expect).norm() < 1e-12);
    }
}
