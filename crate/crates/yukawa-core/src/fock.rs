//! Antisymmetric Fock space of a finite subspace, in the occupation-number basis.
//!
//! Basis state `|S⟩ = a†_{s₁}⋯a†_{s_k}Ω` with `s₁ < ⋯ < s_k` is stored at index
//! `mask(S)`. Operators are kept symbolic as sums of ladder words and only made
//! dense for norms.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{param, Error, Result};
use crate::linalg::{cdot, power_norm, spectral_norm, DENSE_NORM_MAX_DIM};
use crate::singleparticle::{ModeSpace, Subspace};
use crate::C64;

/// Default cap on the number of modes of a materialised Fock space.
pub const DEFAULT_D_MAX: usize = 12;

/// Hard cap (state vectors of `2^24` entries).
pub const ABSOLUTE_D_MAX: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

impl Ladder {
    pub fn adjoint(self) -> Ladder {
        match self {
            Ladder::Create(j) => Ladder::Annihilate(j),
            Ladder::Annihilate(j) => Ladder::Create(j),
        }
    }

    /// Action on the basis state `state`, with the Jordan–Wigner sign.
    #[inline]
    pub fn act(self, state: usize) -> Option<(usize, f64)> {
        let (j, want) = match self {
            Ladder::Create(j) => (j, false),
            Ladder::Annihilate(j) => (j, true),
        };
        let bit = 1usize << j;
        if (state & bit != 0) != want {
            return None;
        }
        let sign = if (state & (bit - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        Some((state ^ bit, sign))
    }
}

/// Finite linear combination of ladder words. Words act right to left.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FockOperator {
    pub terms: Vec<(C64, Vec<Ladder>)>,
}

impl FockOperator {
    pub fn zero() -> Self {
        FockOperator { terms: Vec::new() }
    }

    pub fn scalar(c: C64) -> Self {
        FockOperator { terms: vec![(c, Vec::new())] }
    }

    pub fn identity() -> Self {
        Self::scalar(C64::new(1.0, 0.0))
    }

    pub fn ladder(l: Ladder) -> Self {
        FockOperator { terms: vec![(C64::new(1.0, 0.0), vec![l])] }
    }

    /// `Σ_j c_j a†_j`.
    pub fn create_combination(c: &[C64]) -> Self {
        FockOperator {
            terms: c
                .iter()
                .enumerate()
                .filter(|(_, v)| v.norm() != 0.0)
                .map(|(j, v)| (*v, vec![Ladder::Create(j)]))
                .collect(),
        }
    }

    /// `Σ_j conj(c_j) a_j`, the annihilator of the vector with coordinates `c`.
    pub fn annihilate_combination(c: &[C64]) -> Self {
        FockOperator {
            terms: c
                .iter()
                .enumerate()
                .filter(|(_, v)| v.norm() != 0.0)
                .map(|(j, v)| (v.conj(), vec![Ladder::Annihilate(j)]))
                .collect(),
        }
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        FockOperator { terms }
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> FockOperator {
        FockOperator { terms: self.terms.iter().map(|(c, w)| (c * s, w.clone())).collect() }
    }

    pub fn mul(&self, other: &FockOperator) -> FockOperator {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, wa) in &self.terms {
            for (b, wb) in &other.terms {
                let mut w = wa.clone();
                w.extend_from_slice(wb);
                terms.push((a * b, w));
            }
        }
        FockOperator { terms }
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator {
            terms: self
                .terms
                .iter()
                .map(|(c, w)| (c.conj(), w.iter().rev().map(|l| l.adjoint()).collect()))
                .collect(),
        }
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &FockOperator) -> FockOperator {
        self.mul(other).add(&other.mul(self))
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &FockOperator) -> FockOperator {
        self.mul(other).sub(&other.mul(self))
    }

    /// Largest mode index touched, plus one.
    pub fn span(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|(_, w)| w.iter())
            .map(|l| match l {
                Ladder::Create(j) | Ladder::Annihilate(j) => j + 1,
            })
            .max()
            .unwrap_or(0)
    }

    /// Applies the operator to a state vector of `2^modes` entries.
    pub fn apply(&self, modes: usize, v: &[C64]) -> Vec<C64> {
        let dim = 1usize << modes;
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for (c, w) in &self.terms {
            for (state, amp) in v.iter().enumerate() {
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                if let Some((s, sign)) = act_word(w, state) {
                    out[s] += c * amp * sign;
                }
            }
        }
        out
    }

    /// Dense matrix on `2^modes` states.
    pub fn dense(&self, modes: usize) -> DMatrix<C64> {
        let dim = 1usize << modes;
        let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        for (c, w) in &self.terms {
            for col in 0..dim {
                if let Some((row, sign)) = act_word(w, col) {
                    m[(row, col)] += c * sign;
                }
            }
        }
        m
    }
}

fn act_word(w: &[Ladder], state: usize) -> Option<(usize, f64)> {
    let mut s = state;
    let mut sign = 1.0;
    for l in w.iter().rev() {
        let (ns, sg) = l.act(s)?;
        s = ns;
        sign *= sg;
    }
    Some((s, sign))
}

/// Operator norm on `2^modes` states: dense SVD up to [`DENSE_NORM_MAX_DIM`], power iteration above.
pub fn operator_norm(op: &FockOperator, modes: usize) -> f64 {
    let dim = 1usize << modes;
    if dim <= DENSE_NORM_MAX_DIM {
        spectral_norm(&op.dense(modes))
    } else {
        let adj = op.adjoint();
        power_norm(dim, |v| op.apply(modes, v), |v| adj.apply(modes, v), 1e-9, 5_000)
    }
}

/// The Fock space `𝓕_a(b)` of an orthonormal family `b`.
#[derive(Debug, Clone)]
pub struct FockRep {
    modes: usize,
    /// Riesz representers `G e_j` of the basis of `b`.
    duals: Vec<Vec<C64>>,
    basis: Vec<Vec<C64>>,
}

impl FockRep {
    /// Fock space of `modes` abstract orthonormal modes.
    pub fn abstract_modes(modes: usize, d_max: usize) -> Result<Self> {
        check_modes(modes, d_max)?;
        Ok(FockRep { modes, duals: Vec::new(), basis: Vec::new() })
    }

    /// Fock space of the subspace `b` of the mode space.
    pub fn materialize(ms: &ModeSpace, b: &Subspace, d_max: usize) -> Result<Self> {
        check_modes(b.dim(), d_max)?;
        Ok(FockRep {
            modes: b.dim(),
            duals: b.vectors.iter().map(|v| ms.dual(v)).collect(),
            basis: b.vectors.clone(),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn basis(&self) -> &[Vec<C64>] {
        &self.basis
    }

    /// Coordinates `⟨e_j, f⟩`, i.e. those of `P_b f`.
    pub fn coords(&self, f: &[C64]) -> Vec<C64> {
        self.duals.iter().map(|d| cdot(d, f)).collect()
    }

    pub fn vacuum(&self) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn create(&self, j: usize) -> FockOperator {
        FockOperator::ladder(Ladder::Create(j))
    }

    pub fn annihilate(&self, j: usize) -> FockOperator {
        FockOperator::ladder(Ladder::Annihilate(j))
    }

    /// `α†(P_b f)`.
    pub fn creation(&self, f: &[C64]) -> FockOperator {
        FockOperator::create_combination(&self.coords(f))
    }

    /// `α(P_b f)`, antilinear in `f`.
    pub fn annihilation(&self, f: &[C64]) -> FockOperator {
        FockOperator::annihilate_combination(&self.coords(f))
    }

    /// `N = Σ_j a†_j a_j`.
    pub fn number_operator(&self) -> FockOperator {
        FockOperator {
            terms: (0..self.modes)
                .map(|j| (C64::new(1.0, 0.0), vec![Ladder::Create(j), Ladder::Annihilate(j)]))
                .collect(),
        }
    }

    /// Diagonal of `(1 + N)^p` in the occupation basis.
    pub fn number_power_diagonal(&self, p: f64) -> Vec<f64> {
        (0..self.dim()).map(|s| (1.0 + s.count_ones() as f64).powf(p)).collect()
    }

    pub fn norm(&self, op: &FockOperator) -> f64 {
        operator_norm(op, self.modes)
    }

    pub fn dense(&self, op: &FockOperator) -> DMatrix<C64> {
        op.dense(self.modes)
    }

    pub fn apply(&self, op: &FockOperator, v: &[C64]) -> Vec<C64> {
        op.apply(self.modes, v)
    }

    /// Vacuum expectation `⟨Ω, AΩ⟩`.
    pub fn vacuum_expect(&self, op: &FockOperator) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (c, w) in &op.terms {
            if let Some((0, sign)) = act_word(w, 0) {
                acc += c * sign;
            }
        }
        acc
    }

    /// `Γ(P)` for the orthogonal projection onto `small`, as a dense matrix:
    /// `⟨S|Γ(P)|T⟩ = det P[S,T]` for `|S| = |T|`.
    pub fn hat_projection(&self, ms: &ModeSpace, small: &Subspace) -> Result<DMatrix<C64>> {
        let d = self.modes;
        let mut p = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
        for j in 0..d {
            let pj = small.project(ms, &self.basis[j])?;
            let c = self.coords(&pj);
            let back: Vec<C64> = {
                let mut acc = vec![C64::new(0.0, 0.0); pj.len()];
                for (cj, e) in c.iter().zip(&self.basis) {
                    crate::linalg::axpy(*cj, e, &mut acc);
                }
                acc
            };
            if ms.norm(&crate::linalg::sub(&back, &pj)) > 1e-9 {
                return Err(Error::NotNested);
            }
            for i in 0..d {
                p[(i, j)] = c[i];
            }
        }
        Ok(second_quantize_dense(&p))
    }

    /// `Γ(P)` for the projection onto the first `k` modes: diagonal on occupation states.
    pub fn prefix_projection_apply(&self, k: usize, v: &[C64]) -> Vec<C64> {
        let mask = if k >= usize::BITS as usize { usize::MAX } else { (1usize << k) - 1 };
        v.iter().enumerate().map(|(s, x)| if s & !mask == 0 { *x } else { C64::new(0.0, 0.0) }).collect()
    }
}

fn check_modes(modes: usize, d_max: usize) -> Result<()> {
    let max = d_max.min(ABSOLUTE_D_MAX);
    if modes > max {
        Err(Error::FockTooLarge { modes, max })
    } else {
        Ok(())
    }
}

/// Second quantisation `Γ(A)` of a single-particle matrix on the occupation basis.
pub fn second_quantize_dense(a: &DMatrix<C64>) -> DMatrix<C64> {
    let d = a.nrows();
    let dim = 1usize << d;
    let mut out = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    let bits = |s: usize| -> Vec<usize> { (0..d).filter(|j| s & (1 << j) != 0).collect() };
    for s in 0..dim {
        let rs = bits(s);
        for t in 0..dim {
            if s.count_ones() != t.count_ones() {
                continue;
            }
            let ct = bits(t);
            let sub = DMatrix::from_fn(rs.len(), ct.len(), |i, j| a[(rs[i], ct[j])]);
            out[(s, t)] = if rs.is_empty() { C64::new(1.0, 0.0) } else { crate::linalg::det(sub) };
        }
    }
    out
}

/// Quasi-free state `ω_ρ` with `ρ = λ·1`, realised on the doubled Fock space
/// of `2d` modes: modes `0..d` carry `b`, modes `d..2d` its conjugate copy.
#[derive(Debug, Clone)]
pub struct ArakiWyss {
    lambda: f64,
    d: usize,
}

impl ArakiWyss {
    pub fn new(d: usize, lambda: f64, d_max: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(param("lambda must lie in (0, 1/2)"));
        }
        check_modes(2 * d, d_max)?;
        Ok(ArakiWyss { lambda, d })
    }

    /// Unchecked constructor allowing `λ = 0` (the vacuum, for contrast).
    pub fn degenerate(d: usize, lambda: f64) -> Self {
        ArakiWyss { lambda, d }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn modes(&self) -> usize {
        2 * self.d
    }

    /// `π_ρ(α†(f))` for `f` with coordinates `c` in `b`.
    pub fn creation(&self, c: &[C64]) -> FockOperator {
        let a = (1.0 - self.lambda).sqrt();
        let b = self.lambda.sqrt();
        let mut terms = Vec::new();
        for (j, v) in c.iter().enumerate() {
            if v.norm() == 0.0 {
                continue;
            }
            terms.push((v * a, vec![Ladder::Create(j)]));
            terms.push((v * b, vec![Ladder::Annihilate(self.d + j)]));
        }
        FockOperator { terms }
    }

    /// `π_ρ(α(f))`.
    pub fn annihilation(&self, c: &[C64]) -> FockOperator {
        self.creation(c).adjoint()
    }

    /// Image of a single-mode ladder of `b`.
    pub fn ladder(&self, l: Ladder) -> FockOperator {
        let mut c = vec![C64::new(0.0, 0.0); self.d];
        match l {
            Ladder::Create(j) => {
                c[j] = C64::new(1.0, 0.0);
                self.creation(&c)
            }
            Ladder::Annihilate(j) => {
                c[j] = C64::new(1.0, 0.0);
                self.annihilation(&c)
            }
        }
    }

    /// Transports an operator on `𝓕_a(b)` through `π_ρ`.
    pub fn represent(&self, op: &FockOperator) -> FockOperator {
        let mut out = FockOperator::zero();
        for (c, w) in &op.terms {
            let mut acc = FockOperator::scalar(*c);
            for l in w {
                acc = acc.mul(&self.ladder(*l));
            }
            out = out.add(&acc);
        }
        out
    }

    /// `ω_ρ(A) = ⟨Ω₂, π_ρ(A) Ω₂⟩` for `A` already in the doubled representation.
    pub fn expect(&self, represented: &FockOperator) -> C64 {
        let rep = FockRep { modes: self.modes(), duals: Vec::new(), basis: Vec::new() };
        rep.vacuum_expect(represented)
    }

    /// `Ψ_ρ(f) = π_ρ(α†(f) + α(κŨf))` with `Ũ = U/(1-2λ)`, for `b` given by a
    /// κU-paired basis (`κU e_{2k} = e_{2k+1}`).
    pub fn modified_field(&self, c: &[C64]) -> FockOperator {
        let s = 1.0 / (1.0 - 2.0 * self.lambda);
        let kuf = kappa_u_coords(c);
        // α(κŨf) = s·α(κUf) since s is real.
        self.creation(c).add(&self.annihilation(&kuf).scale(C64::new(s, 0.0)))
    }

    /// Gram matrix `⟨π_ρ(m_i)Ω, π_ρ(m_j)Ω⟩` over the `4^d` monomials `a†_S a_T`.
    pub fn monomial_gram(&self) -> DMatrix<C64> {
        let d = self.d;
        let dim2 = 1usize << (2 * d);
        let mut vecs: Vec<Vec<C64>> = Vec::new();
        let mut vac = vec![C64::new(0.0, 0.0); dim2];
        vac[0] = C64::new(1.0, 0.0);
        for s in 0..(1usize << d) {
            for t in 0..(1usize << d) {
                let mut w = Vec::new();
                for j in 0..d {
                    if s & (1 << j) != 0 {
                        w.push(Ladder::Create(j));
                    }
                }
                for j in 0..d {
                    if t & (1 << j) != 0 {
                        w.push(Ladder::Annihilate(j));
                    }
                }
                let op = self.represent(&FockOperator { terms: vec![(C64::new(1.0, 0.0), w)] });
                vecs.push(op.apply(2 * d, &vac));
            }
        }
        let n = vecs.len();
        DMatrix::from_fn(n, n, |i, j| cdot(&vecs[i], &vecs[j]))
    }
}

/// `W_{r,s}(G) = Σ G_{i,j} a†_{i₁}⋯a†_{i_r} a_{j₁}⋯a_{j_s}` for a tensor `G` of
/// length `d^{r+s}` indexed row-major by `(i₁,…,i_r,j₁,…,j_s)`.
pub fn w_rs(d: usize, r: usize, s: usize, g: &[C64]) -> Result<FockOperator> {
    let n = r + s;
    let expected = d.pow(n as u32);
    if g.len() != expected {
        return Err(Error::Dimension { expected, got: g.len() });
    }
    let mut terms = Vec::with_capacity(g.len());
    for (flat, c) in g.iter().enumerate() {
        if c.norm() == 0.0 {
            continue;
        }
        let mut idx = vec![0usize; n];
        let mut rest = flat;
        for slot in (0..n).rev() {
            idx[slot] = rest % d;
            rest /= d;
        }
        let w: Vec<Ladder> = idx
            .iter()
            .enumerate()
            .map(|(p, &j)| if p < r { Ladder::Create(j) } else { Ladder::Annihilate(j) })
            .collect();
        terms.push((*c, w));
    }
    Ok(FockOperator { terms })
}

/// `‖W_{r,s}(G)(1+N)^{-(r+s-1)/2}‖` on `d` modes.
pub fn w_rs_weighted_norm(d: usize, r: usize, s: usize, g: &[C64]) -> Result<f64> {
    let rep = FockRep::abstract_modes(d, ABSOLUTE_D_MAX)?;
    let mut m = rep.dense(&w_rs(d, r, s, g)?);
    let p = -((r + s) as f64 - 1.0) / 2.0;
    let diag = rep.number_power_diagonal(p);
    for (col, w) in diag.iter().enumerate() {
        for row in 0..m.nrows() {
            m[(row, col)] *= *w;
        }
    }
    Ok(spectral_norm(&m))
}

/// Right-hand side factor `(|r-s|+1)^{(r+s)/2}‖G‖` of the N-contractive bound.
pub fn w_rs_bound_factor(r: usize, s: usize, g: &[C64]) -> f64 {
    let gn = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    ((r as f64 - s as f64).abs() + 1.0).powf((r + s) as f64 / 2.0) * gn
}

/// Coordinates of `κU f` in a κU-paired basis, given those of `f`:
/// `κU(Σ c_a e_a) = Σ_k conj(c_{2k}) e_{2k+1} - conj(c_{2k+1}) e_{2k}`.
pub fn kappa_u_coords(c: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); c.len()];
    for k in 0..c.len() / 2 {
        out[2 * k + 1] = c[2 * k].conj();
        out[2 * k] = -c[2 * k + 1].conj();
    }
    out
}
