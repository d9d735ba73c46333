//! Remainder solver for the Da Prato–Debussche system at a fixed filtration
//! level, and the trajectory space with a point at infinity.
//!
//! The remainders solve, in mild form,
//!
//! ```text
//! U = G_B U₀ - g 𝓘_B(Ȳ^∇Y^∇ + Ȳ^∇<1F> + <1A>Y^∇ + <2AF>) - λ 𝓘_B(U³ + 3U²<1> + 3U<2> + <3>)
//! Y = G_F Y₀ - g 𝓘_F(U Y^∇ + <1> Y^∇ + U <1F> + <2F>)
//! Ȳ = G_F Ȳ₀ - g 𝓘_F(U Ȳ^∇ + <1> Ȳ^∇ + U <1A> + <2A>)
//! ```
//!
//! with `Y^∇ = (∇̸+M)Y`, `Ȳ^∇ = (-∇̸̄+M)Ȳ`. Time stepping is exponential in
//! each spatial Fourier mode with the forcing interpolated linearly between
//! lattice slots; each window is solved by Picard iteration of that discrete map.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::kernels::{bump, bump_mass, chi, KernelParams};
use crate::noise::{apply_dirac_algebra, apply_multiplier, AlgebraField, LinearTrees};
use crate::spectral::{Dft, Field, Grid};
use crate::trees::TreeBundle;
use crate::C64;

/// `sup_x Σ_terms |c(x)| 2^{deg/2}`: an upper bound for every seminorm `‖·‖_n`,
/// since `‖Ψ_a‖ ≤ √2`.
pub fn norm_proxy(x: &AlgebraField) -> f64 {
    let mut acc = vec![0.0f64; x.grid.len()];
    for (m, _, f) in x.terms() {
        let w = 2f64.powf(m.count_ones() as f64 / 2.0);
        acc.iter_mut().zip(&f.data).for_each(|(a, b)| *a += w * b.norm());
    }
    acc.into_iter().fold(0.0, f64::max)
}

/// Bosonic remainder `U` (even) and fermionic remainders `Y`, `Ȳ` (odd) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderState {
    pub u: AlgebraField,
    pub y: [AlgebraField; 2],
    pub ybar: [AlgebraField; 2],
}

impl RemainderState {
    pub fn zero(grid: Grid) -> Self {
        let z = AlgebraField::zero(grid);
        RemainderState { u: z.clone(), y: [z.clone(), z.clone()], ybar: [z.clone(), z] }
    }

    fn parts(&self) -> [&AlgebraField; 5] {
        [&self.u, &self.y[0], &self.y[1], &self.ybar[0], &self.ybar[1]]
    }

    fn zip_with<F: Fn(&AlgebraField, &AlgebraField) -> AlgebraField>(&self, o: &Self, f: F) -> Self {
        RemainderState {
            u: f(&self.u, &o.u),
            y: [f(&self.y[0], &o.y[0]), f(&self.y[1], &o.y[1])],
            ybar: [f(&self.ybar[0], &o.ybar[0]), f(&self.ybar[1], &o.ybar[1])],
        }
    }

    fn map<F: Fn(&AlgebraField) -> AlgebraField>(&self, f: F) -> Self {
        RemainderState { u: f(&self.u), y: [f(&self.y[0]), f(&self.y[1])], ybar: [f(&self.ybar[0]), f(&self.ybar[1])] }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a.sub(b))
    }

    pub fn project(&self, dim: usize) -> Self {
        self.map(|a| a.project(dim))
    }

    /// Largest [`norm_proxy`] over the five components.
    pub fn norm(&self) -> f64 {
        self.parts().iter().map(|a| norm_proxy(a)).fold(0.0, f64::max)
    }

    pub fn distance(&self, o: &Self) -> f64 {
        self.sub(o).norm()
    }

    /// `U` even, `Y`, `Ȳ` odd.
    pub fn parity_ok(&self) -> bool {
        let even = self.u.is_empty() || self.u.parity() == Some(0);
        even && self.y.iter().chain(&self.ybar).all(|a| a.is_empty() || a.parity() == Some(1))
    }

    pub fn truncated_mass(&self) -> f64 {
        self.parts().iter().map(|a| a.truncated_mass()).sum()
    }

    pub fn retained_mass(&self) -> f64 {
        self.parts().iter().map(|a| a.retained_mass()).sum()
    }
}

/// Trees at one time slot, projected to the solver level.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotForcing {
    pub one: Field,
    pub one_f: [AlgebraField; 2],
    pub one_a: [AlgebraField; 2],
    pub one_if: [AlgebraField; 2],
    pub one_ia: [AlgebraField; 2],
    pub two_af: AlgebraField,
    pub counterterm: AlgebraField,
    pub two_f: [AlgebraField; 2],
    pub two_a: [AlgebraField; 2],
    pub two: Field,
    pub three: Field,
}

/// Time-sliced trees for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    /// Spatial grid (one time slot) with the step `dt` of the tree lattice.
    pub grid: Grid,
    pub dim: usize,
    pub eps: f64,
    pub c2: f64,
    pub slots: Vec<SlotForcing>,
}

impl Forcing {
    /// Slices `lin` and `trees` at every time slot and projects them to `dim` generators.
    pub fn new(lin: &LinearTrees, trees: &TreeBundle, dim: usize) -> Result<Self> {
        let st = lin.one.grid;
        st.check_same(&trees.two.grid)?;
        let pr = |a: &AlgebraField, n: usize| a.time_slice(n).project(dim);
        let pr2 = |a: &[AlgebraField; 2], n: usize| [pr(&a[0], n), pr(&a[1], n)];
        let slots = (0..st.nt)
            .map(|n| SlotForcing {
                one: lin.one.time_slice(n),
                one_f: pr2(&lin.one_f, n),
                one_a: pr2(&lin.one_a, n),
                one_if: pr2(&lin.one_if, n),
                one_ia: pr2(&lin.one_ia, n),
                two_af: pr(&trees.two_af, n),
                counterterm: pr(&trees.counterterm, n),
                two_f: pr2(&trees.two_f, n),
                two_a: pr2(&trees.two_a, n),
                two: trees.two.time_slice(n),
                three: trees.three.time_slice(n),
            })
            .collect();
        Ok(Forcing { grid: Grid { nt: 1, ..st }, dim, eps: lin.eps, c2: trees.c2, slots })
    }

    /// All trees zero: the deterministic equation.
    pub fn zero(grid: Grid, nt: usize, dim: usize) -> Self {
        let g = Grid { nt: 1, ..grid };
        let z = AlgebraField::zero(g);
        let f = Field::zeros(g);
        let slot = SlotForcing {
            one: f.clone(),
            one_f: [z.clone(), z.clone()],
            one_a: [z.clone(), z.clone()],
            one_if: [z.clone(), z.clone()],
            one_ia: [z.clone(), z.clone()],
            two_af: z.clone(),
            counterterm: z.clone(),
            two_f: [z.clone(), z.clone()],
            two_a: [z.clone(), z],
            two: f.clone(),
            three: f,
        };
        Forcing { grid: g, dim, eps: 0.0, c2: 0.0, slots: vec![slot; nt] }
    }

    /// The forcing seen by a run restarted at slot `n`.
    pub fn shifted(&self, n: usize) -> Self {
        Forcing { slots: self.slots[n..].to_vec(), ..self.clone() }
    }
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub g: f64,
    pub lambda: f64,
    pub t_max: f64,
    /// Norm level `L` at which the trajectory is declared blown up.
    pub blowup_norm: f64,
    /// Relative Picard tolerance.
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Initial window length in time slots.
    pub window: usize,
    /// Largest accepted ratio of successive Picard increments.
    pub max_ratio: f64,
    /// Allowed dropped Grassmann mass relative to the retained mass.
    pub truncation_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            g: 0.5,
            lambda: 0.5,
            t_max: 0.02,
            blowup_norm: 1e3,
            picard_tol: 1e-12,
            max_picard: 200,
            window: 8,
            max_ratio: 0.9,
            truncation_tol: 1e-6,
        }
    }
}

/// One accepted Picard window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLog {
    pub start: usize,
    pub len: usize,
    pub iterations: usize,
    /// Largest ratio of successive Picard increments.
    pub ratio: f64,
}

/// States at every slot of `[0, t_max]`; `None` past the blow-up time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTrajectory {
    pub dt: f64,
    pub dim: usize,
    pub states: Vec<Option<RemainderState>>,
    pub blow_up_time: Option<f64>,
    pub windows: Vec<WindowLog>,
    pub truncated_mass: f64,
}

impl SolutionTrajectory {
    pub fn max_ratio(&self) -> f64 {
        self.windows.iter().map(|w| w.ratio).fold(0.0, f64::max)
    }

    /// Number of slots before the blow-up marker.
    pub fn live_len(&self) -> usize {
        self.states.iter().take_while(|s| s.is_some()).count()
    }

    pub fn norms(&self) -> Vec<Option<f64>> {
        self.states.iter().map(|s| s.as_ref().map(|s| s.norm())).collect()
    }
}

/// `φ₁(z) = (1 - e^{-z})/z`, `φ₂(z) = (z - 1 + e^{-z})/z²`.
fn phi12(z: f64) -> (f64, f64) {
    if z < 1e-4 {
        (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let e = (-z).exp();
        ((1.0 - e) / z, (z - 1.0 + e) / (z * z))
    }
}

/// Per-mode exponential integrator weights for one mass.
#[derive(Debug, Clone)]
struct Weights {
    decay: Vec<C64>,
    /// Weight of `F_n`.
    a: Vec<C64>,
    /// Weight of `F_{n+1}`.
    b: Vec<C64>,
}

impl Weights {
    fn new(grid: &Grid, mass: f64, h: f64) -> Self {
        let mut decay = Vec::with_capacity(grid.len());
        let mut a = Vec::with_capacity(grid.len());
        let mut b = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (_, i, j) = grid.coords(idx);
            let (k1, k2) = (grid.k(i) as f64, grid.k(j) as f64);
            let a2 = 4.0 * PI * PI * (k1 * k1 + k2 * k2) + mass * mass;
            let z = a2 * h;
            let (p1, p2) = phi12(z);
            decay.push(C64::new((-z).exp(), 0.0));
            a.push(C64::new(h * (p1 - p2), 0.0));
            b.push(C64::new(h * p2, 0.0));
        }
        Weights { decay, a, b }
    }
}

/// Exponential-integrator stepper on a spatial grid.
pub struct Stepper<'a> {
    pub dft: &'a dyn Dft,
    pub params: KernelParams,
    pub config: SolverConfig,
    grid: Grid,
    bos: Weights,
    ferm: Weights,
}

impl<'a> Stepper<'a> {
    pub fn new(dft: &'a dyn Dft, params: KernelParams, config: SolverConfig, grid: Grid) -> Self {
        let g = Grid { nt: 1, ..grid };
        let bos = Weights::new(&g, params.m, grid.dt);
        let ferm = Weights::new(&g, params.big_m, grid.dt);
        Stepper { dft, params, config, grid: g, bos, ferm }
    }

    fn mult(&self, x: &AlgebraField, m: &[C64]) -> AlgebraField {
        x.map(|f| apply_multiplier(self.dft, f, m))
    }

    /// `e^{n h (Δ - μ²)}` applied to every component.
    pub fn heat_flow(&self, s: &RemainderState, n: usize) -> RemainderState {
        let pow = |w: &[C64]| -> Vec<C64> { w.iter().map(|v| C64::new(v.re.powi(n as i32), 0.0)).collect() };
        let (eb, ef) = (pow(&self.bos.decay), pow(&self.ferm.decay));
        RemainderState {
            u: self.mult(&s.u, &eb),
            y: [self.mult(&s.y[0], &ef), self.mult(&s.y[1], &ef)],
            ybar: [self.mult(&s.ybar[0], &ef), self.mult(&s.ybar[1], &ef)],
        }
    }

    /// Right-hand side `(F_U, F_Y, F_Ȳ)` at one slot.
    pub fn nonlinearity(&self, s: &RemainderState, f: &SlotForcing) -> Result<RemainderState> {
        let (g, lam) = (self.config.g, self.config.lambda);
        let m = self.params.big_m;
        let yn = apply_dirac_algebra(self.dft, &s.y, m, false)?;
        let ybn = apply_dirac_algebra(self.dft, &s.ybar, m, true)?;
        let mut bos = f.two_af.clone();
        for c in 0..2 {
            bos = bos.add(&ybn[c].mul(&yn[c])).add(&ybn[c].mul(&f.one_f[c])).add(&f.one_a[c].mul(&yn[c]));
        }
        let u = &s.u;
        let u2 = u.mul(u);
        let cubic = u2
            .mul(u)
            .add(&u2.mul_field(&f.one).scale(C64::new(3.0, 0.0)))
            .add(&u.mul_field(&f.two).scale(C64::new(3.0, 0.0)))
            .add(&AlgebraField::scalar(f.three.clone()));
        let fu = bos.scale(C64::new(-g, 0.0)).sub(&cubic.scale(C64::new(lam, 0.0)));
        let ferm = |yn: &AlgebraField, one: &AlgebraField, two: &AlgebraField| {
            u.mul(yn).add(&yn.mul_field(&f.one)).add(&u.mul(one)).add(two).scale(C64::new(-g, 0.0))
        };
        Ok(RemainderState {
            u: fu,
            y: [ferm(&yn[0], &f.one_f[0], &f.two_f[0]), ferm(&yn[1], &f.one_f[1], &f.two_f[1])],
            ybar: [ferm(&ybn[0], &f.one_a[0], &f.two_a[0]), ferm(&ybn[1], &f.one_a[1], &f.two_a[1])],
        })
    }

    /// `x_{n+1} = e^{hL} x_n + A F_n + B F_{n+1}` per component.
    fn step(&self, x: &RemainderState, f0: &RemainderState, f1: &RemainderState) -> RemainderState {
        let one = |w: &Weights, x: &AlgebraField, a: &AlgebraField, b: &AlgebraField| {
            self.mult(x, &w.decay).add(&self.mult(a, &w.a)).add(&self.mult(b, &w.b))
        };
        RemainderState {
            u: one(&self.bos, &x.u, &f0.u, &f1.u),
            y: [one(&self.ferm, &x.y[0], &f0.y[0], &f1.y[0]), one(&self.ferm, &x.y[1], &f0.y[1], &f1.y[1])],
            ybar: [
                one(&self.ferm, &x.ybar[0], &f0.ybar[0], &f1.ybar[0]),
                one(&self.ferm, &x.ybar[1], &f0.ybar[1], &f1.ybar[1]),
            ],
        }
    }

    /// Picard iteration of the discrete mild map on slots `start..=start+len`.
    fn solve_window(&self, x0: &RemainderState, forcing: &Forcing, start: usize, len: usize) -> Result<(Vec<RemainderState>, WindowLog)> {
        let cfg = &self.config;
        let mut traj = vec![x0.clone(); len + 1];
        let mut prev: Option<f64> = None;
        let mut ratio = 0.0f64;
        for it in 1..=cfg.max_picard {
            let rhs: Vec<RemainderState> =
                traj.iter().enumerate().map(|(j, s)| self.nonlinearity(s, &forcing.slots[start + j])).collect::<Result<_>>()?;
            let mut next = Vec::with_capacity(len + 1);
            next.push(x0.clone());
            for j in 0..len {
                let s = self.step(&next[j], &rhs[j], &rhs[j + 1]);
                next.push(s);
            }
            let delta = next.iter().zip(&traj).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
            let scale = next.iter().map(|s| s.norm()).fold(1.0, f64::max);
            if !scale.is_finite() || scale > 1e6 * cfg.blowup_norm.max(1.0) {
                return Err(Error::NonContraction(alloc::format!("iterates diverge in window at slot {start}")));
            }
            traj = next;
            if delta <= cfg.picard_tol * scale {
                return Ok((traj, WindowLog { start, len, iterations: it, ratio }));
            }
            if let Some(p) = prev {
                // Ratios near round-off carry no information.
                if p > 1e3 * cfg.picard_tol * scale {
                    ratio = ratio.max(delta / p);
                    if it >= 3 && ratio >= cfg.max_ratio {
                        return Err(Error::NonContraction(alloc::format!(
                            "Picard ratio {ratio:.3} in window of {len} slots at slot {start}"
                        )));
                    }
                }
            }
            prev = Some(delta);
        }
        Err(Error::NonContraction(alloc::format!("no convergence in {} iterations", cfg.max_picard)))
    }

    /// Solves on `[0, t_max]` with adaptive windows, restarting from the last
    /// accepted state; stops once the norm exceeds the blow-up level.
    pub fn solve_local(&self, u0: &RemainderState, forcing: &Forcing) -> Result<SolutionTrajectory> {
        self.grid.check_same(&u0.u.grid)?;
        self.grid.check_same(&forcing.grid)?;
        let cfg = &self.config;
        let dt = self.grid.dt;
        let n_slots = ((cfg.t_max / dt).round() as usize).min(forcing.slots.len() - 1);
        let mut states: Vec<Option<RemainderState>> = Vec::with_capacity(n_slots + 1);
        states.push(Some(u0.clone()));
        let mut windows = Vec::new();
        let mut blow_up_time = None;
        let mut pos = 0;
        let mut w = cfg.window.max(1);
        let mut current = u0.clone();
        if current.norm() > cfg.blowup_norm {
            blow_up_time = Some(0.0);
        }
        while pos < n_slots && blow_up_time.is_none() {
            let len = w.min(n_slots - pos);
            match self.solve_window(&current, forcing, pos, len) {
                Ok((traj, log)) => {
                    windows.push(log);
                    for (j, s) in traj.into_iter().enumerate().skip(1) {
                        if s.norm() > cfg.blowup_norm {
                            blow_up_time = Some((pos + j) as f64 * dt);
                            break;
                        }
                        let ledger = s.truncated_mass();
                        if ledger > cfg.truncation_tol * s.retained_mass().max(1.0) {
                            return Err(Error::Invariant(alloc::format!("dropped Grassmann mass {ledger:e} at slot {}", pos + j)));
                        }
                        if !s.parity_ok() {
                            return Err(Error::Invariant(alloc::format!("parity lost at slot {}", pos + j)));
                        }
                        current = s.clone();
                        states.push(Some(s));
                    }
                    pos += len;
                    if log.ratio < cfg.max_ratio / 4.0 {
                        w = (w * 2).min(cfg.window.max(1) * 8);
                    }
                }
                Err(Error::NonContraction(msg)) => {
                    if len == 1 {
                        // A single step that cannot contract: blown up if already large.
                        if current.norm() > cfg.blowup_norm / 2.0 {
                            blow_up_time = Some((pos + 1) as f64 * dt);
                        } else {
                            return Err(Error::NonContraction(msg));
                        }
                    } else {
                        w = len / 2;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        while states.len() < n_slots + 1 {
            states.push(None);
        }
        let truncated_mass = states.iter().flatten().map(|s| s.truncated_mass()).fold(0.0, f64::max);
        Ok(SolutionTrajectory { dt, dim: forcing.dim, states, blow_up_time, windows, truncated_mass })
    }

    /// Relative mild-equation residual of one accepted step.
    pub fn step_residual(&self, traj: &SolutionTrajectory, forcing: &Forcing, n: usize) -> Result<f64> {
        let (Some(a), Some(b)) = (&traj.states[n], &traj.states[n + 1]) else {
            return Err(Error::Parameter("residual requested past blow-up".into()));
        };
        let f0 = self.nonlinearity(a, &forcing.slots[n])?;
        let f1 = self.nonlinearity(b, &forcing.slots[n + 1])?;
        let pred = self.step(a, &f0, &f1);
        Ok(pred.distance(b) / b.norm().max(1e-300))
    }
}

/// `φ = U + <1>`, `υ = Y + <1IF>`, `ῡ = Ȳ + <1IA>` at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub phi: AlgebraField,
    pub upsilon: [AlgebraField; 2],
    pub upsilon_bar: [AlgebraField; 2],
}

pub fn reassemble(s: &RemainderState, f: &SlotForcing) -> FullState {
    FullState {
        phi: s.u.add(&AlgebraField::scalar(f.one.clone())),
        upsilon: [s.y[0].add(&f.one_if[0]), s.y[1].add(&f.one_if[1])],
        upsilon_bar: [s.ybar[0].add(&f.one_ia[0]), s.ybar[1].add(&f.one_ia[1])],
    }
}

impl<'a> Stepper<'a> {
    /// Relative gap between the counterterm-shifted nonlinearity of the full
    /// fields, `-g(⟨ῡ^∇, υ^∇⟩ - 𝐂) - λ(φ³ - 3C_<2>φ)` and `-gφυ^∇`, `-gφῡ^∇`,
    /// and the remainder nonlinearity at the same slot.
    pub fn renormalised_residual(&self, s: &RemainderState, f: &SlotForcing, c2: f64) -> Result<f64> {
        let (g, lam) = (self.config.g, self.config.lambda);
        let full = reassemble(s, f);
        let m = self.params.big_m;
        let un = apply_dirac_algebra(self.dft, &full.upsilon, m, false)?;
        let ubn = apply_dirac_algebra(self.dft, &full.upsilon_bar, m, true)?;
        let pair = ubn[0].mul(&un[0]).add(&ubn[1].mul(&un[1])).sub(&f.counterterm);
        let phi = &full.phi;
        let cube = phi.mul(phi).mul(phi).sub(&phi.scale(C64::new(3.0 * c2, 0.0)));
        let bos = pair.scale(C64::new(-g, 0.0)).sub(&cube.scale(C64::new(lam, 0.0)));
        let ferm = |x: &AlgebraField| phi.mul(x).scale(C64::new(-g, 0.0));
        let lhs = RemainderState { u: bos, y: [ferm(&un[0]), ferm(&un[1])], ybar: [ferm(&ubn[0]), ferm(&ubn[1])] };
        let rhs = self.nonlinearity(s, f)?;
        Ok(lhs.distance(&rhs) / rhs.norm().max(1e-300))
    }
}

/// Level-`n` trajectory against the level-`m` trajectory projected to `n` generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    /// Largest discrepancy up to the earlier blow-up.
    pub discrepancy: f64,
    pub blow_up_low: Option<f64>,
    pub blow_up_high: Option<f64>,
}

impl LevelReport {
    /// `T_n ≥ T_m`, with no blow-up counted as `+∞`.
    pub fn ordering_ok(&self) -> bool {
        self.blow_up_low.unwrap_or(f64::INFINITY) >= self.blow_up_high.unwrap_or(f64::INFINITY)
    }
}

pub fn consistency_across_levels(low: &SolutionTrajectory, high: &SolutionTrajectory) -> LevelReport {
    let n = low.live_len().min(high.live_len());
    let discrepancy = (0..n)
        .map(|i| {
            let a = low.states[i].as_ref().expect("live slot");
            let b = high.states[i].as_ref().expect("live slot").project(low.dim);
            a.distance(&b)
        })
        .fold(0.0, f64::max);
    LevelReport { discrepancy, blow_up_low: low.blow_up_time, blow_up_high: high.blow_up_time }
}

/// Sup-distance of two trajectories up to their common stopping time.
pub fn trajectory_distance(a: &SolutionTrajectory, b: &SolutionTrajectory) -> f64 {
    let n = a.live_len().min(b.live_len());
    (0..n)
        .map(|i| a.states[i].as_ref().expect("live").distance(b.states[i].as_ref().expect("live")))
        .fold(0.0, f64::max)
}

/// Output distance over input distance for two nearby initial data.
pub fn lipschitz_proxy(st: &Stepper, a: &RemainderState, b: &RemainderState, forcing: &Forcing) -> Result<f64> {
    let d0 = a.distance(b);
    if d0 == 0.0 {
        return Err(Error::Parameter("initial data coincide".into()));
    }
    let ta = st.solve_local(a, forcing)?;
    let tb = st.solve_local(b, forcing)?;
    Ok(trajectory_distance(&ta, &tb) / d0)
}

/// Cauchy distances `d(u_{ε_j}, u_{ε_{j+1}})` along an `ε` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub eps: Vec<f64>,
    pub distances: Vec<f64>,
}

impl EpsilonReport {
    pub fn monotone(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn epsilon_continuity(eps: &[f64], trajs: &[SolutionTrajectory]) -> Result<EpsilonReport> {
    if eps.len() != trajs.len() || eps.len() < 2 {
        return Err(Error::Parameter("one trajectory per ε, at least two".into()));
    }
    let distances = trajs.windows(2).map(|w| trajectory_distance(&w[0], &w[1])).collect();
    Ok(EpsilonReport { eps: eps.to_vec(), distances })
}

// ---------------------------------------------------------------------------
// Trajectory space with a point at infinity
// ---------------------------------------------------------------------------

/// A sampled path `t ↦ f(t) ∈ ℝ^d` on `[0, T]`; `None` marks the point at infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub dt: f64,
    pub values: Vec<Option<Vec<f64>>>,
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Path {
    /// Samples `f` on `n + 1` points; non-finite values and everything after them become `∞`.
    pub fn sample<F: Fn(f64) -> Option<Vec<f64>>>(dt: f64, n: usize, f: F) -> Self {
        let mut dead = false;
        let values = (0..=n)
            .map(|i| {
                if dead {
                    return None;
                }
                match f(i as f64 * dt) {
                    Some(v) if v.iter().all(|x| x.is_finite()) => Some(v),
                    _ => {
                        dead = true;
                        None
                    }
                }
            })
            .collect();
        Path { dt, values }
    }

    pub fn norm_at(&self, i: usize) -> f64 {
        self.values[i].as_ref().map_or(f64::INFINITY, |v| euclid(v))
    }

    /// `S_f(t_i) = sup_{s ≤ t_i} ‖f(s)‖`.
    pub fn running_sup(&self) -> Vec<f64> {
        let mut m = 0.0f64;
        (0..self.values.len())
            .map(|i| {
                m = m.max(self.norm_at(i));
                m
            })
            .collect()
    }

    /// `S^L_f(t) = tan ∫₀¹ arctan(S_f(t + s/L)) φ(s) ds` with a unit-mass bump `φ`
    /// on `[0, 1]`; `S_f` is held constant past the last sample.
    pub fn mollified_sup(&self, l: f64) -> Vec<f64> {
        let s = self.running_sup();
        let n = s.len();
        let nodes = 64;
        let z = bump_mass() / 2.0;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for q in 0..nodes {
                    let u = (q as f64 + 0.5) / nodes as f64;
                    let w = bump(2.0 * u - 1.0) / z / nodes as f64;
                    let j = (i as f64 + u / (l * self.dt)).round() as usize;
                    let v = s[j.min(n - 1)];
                    acc += w * if v.is_finite() { v.atan() } else { PI / 2.0 };
                }
                if acc >= PI / 2.0 * (1.0 - 1e-15) {
                    f64::INFINITY
                } else {
                    acc.tan()
                }
            })
            .collect()
    }

    /// `Θ_L f = ψ(S^L_f / L) f` with `0·∞ = 0`.
    pub fn cutoff(&self, l: f64) -> Vec<Vec<f64>> {
        let sl = self.mollified_sup(l);
        let d = self.values.iter().flatten().map(|v| v.len()).max().unwrap_or(0);
        self.values
            .iter()
            .zip(&sl)
            .map(|(v, s)| {
                let c = if s.is_finite() { chi(s / l) } else { 0.0 };
                match v {
                    Some(v) if c > 0.0 => v.iter().map(|x| c * x).collect(),
                    _ => vec![0.0; d],
                }
            })
            .collect()
    }

    /// First sample time at which `‖f‖ ≥ L` (or `∞` is reached).
    pub fn hitting_index(&self, l: f64) -> usize {
        (0..self.values.len()).find(|&i| self.norm_at(i) >= l).unwrap_or(self.values.len())
    }
}

/// `d_L(f, g) = 1 ∧ sup_t ‖Θ_L f - Θ_L g‖`.
pub fn d_l(f: &Path, g: &Path, l: f64) -> f64 {
    let a = f.cutoff(l);
    let b = g.cutoff(l);
    let sup = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let n = x.len().max(y.len());
            (0..n)
                .map(|k| {
                    let d = x.get(k).copied().unwrap_or(0.0) - y.get(k).copied().unwrap_or(0.0);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    sup.min(1.0)
}

/// `d(f, g) = Σ_{L=1}^{L_max} 2^{-L} d_L(f, g)`.
pub fn d_sol(f: &Path, g: &Path, l_max: usize) -> f64 {
    (1..=l_max).map(|l| 2f64.powi(-(l as i32)) * d_l(f, g, l as f64)).sum()
}

/// `sup_{[0, T(L))} ‖f - g‖` with `T(L)` the first time either path reaches norm `L`.
pub fn stopped_distance(f: &Path, g: &Path, l: f64) -> f64 {
    let n = f.hitting_index(l).min(g.hitting_index(l));
    (0..n)
        .map(|i| {
            let (x, y) = (f.values[i].as_ref().expect("finite"), g.values[i].as_ref().expect("finite"));
            euclid(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
        })
        .fold(0.0, f64::max)
}

/// Both sides of the convergence characterisation along a sequence `f_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCheck {
    /// `d(f_n, f)` per `n`.
    pub metric: Vec<f64>,
    /// `max_{L ≤ L_max} sup_{[0,T(L,n)]} ‖f - f_n‖` per `n`.
    pub stopped: Vec<Vec<f64>>,
}

impl ConvergenceCheck {
    /// The last value is below `tol` and the tail is non-increasing.
    fn settles(v: &[f64], tol: f64) -> bool {
        let n = v.len();
        v[n - 1] < tol && v[n / 2..].windows(2).all(|w| w[1] <= w[0] + 1e-12)
    }

    pub fn metric_converges(&self, tol: f64) -> bool {
        Self::settles(&self.metric, tol)
    }

    /// Every level `L` converges.
    pub fn stopped_converges(&self, tol: f64) -> bool {
        let levels = self.stopped[0].len();
        (0..levels).all(|l| Self::settles(&self.stopped.iter().map(|r| r[l]).collect::<Vec<_>>(), tol))
    }
}

pub fn convergence_check(f: &Path, seq: &[Path], l_max: usize) -> ConvergenceCheck {
    let metric = seq.iter().map(|g| d_sol(f, g, l_max)).collect();
    let stopped = seq.iter().map(|g| (1..=l_max).map(|l| stopped_distance(f, g, l as f64)).collect()).collect();
    ConvergenceCheck { metric, stopped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{linear_solutions, sample_xi, FermionField};
    use crate::singleparticle::{Filtration, ModeSpace};
    use crate::spectral::DirectDft;
    use crate::trees::{build_trees, lattice_c2};

    fn params() -> KernelParams {
        KernelParams::new(1.0, 1.0, 0.2).unwrap()
    }

    fn setup(nt: usize, nx: usize, dim: usize, eps: f64, seed: u64) -> (Grid, LinearTrees, TreeBundle) {
        let grid = Grid::parabolic(nt, nx);
        let ms = ModeSpace::with_window(1, 1, 0.2, 1.0, (0.0, grid.period())).unwrap();
        let filt = Filtration::build(&ms, dim).unwrap();
        let ff = FermionField::new(&ms, &filt, dim, grid).unwrap();
        let xi = sample_xi(seed, grid);
        let lin = linear_solutions(&DirectDft, &params(), &xi, &ff, eps).unwrap();
        let trees = build_trees(&lin, lattice_c2(&grid, 1.0, eps));
        (grid, lin, trees)
    }

    fn smooth_initial(grid: Grid, dim: usize) -> RemainderState {
        let g = Grid { nt: 1, ..grid };
        let bump = |a: f64, k: usize| {
            Field::from_fn(g, |_, i, j| {
                let x = 2.0 * PI * i as f64 / g.nx as f64;
                let y = 2.0 * PI * j as f64 / g.nx as f64;
                C64::new(a * (x + k as f64).cos() * (0.5 + 0.5 * y.sin()), 0.0)
            })
        };
        let mut s = RemainderState::zero(g);
        s.u = AlgebraField::scalar(bump(0.8, 0));
        if dim >= 2 {
            s.u.insert(0b11, 0, bump(0.3, 1));
            s.y[0].insert(0b01, 0, bump(0.5, 2));
            s.ybar[1].insert(0b10, 0, bump(0.4, 3));
        }
        s
    }

    #[test]
    fn zero_data_and_zero_noise_stay_zero() {
        let grid = Grid::parabolic(16, 8);
        let st = Stepper::new(&DirectDft, params(), SolverConfig { t_max: 10.0 * grid.dt, ..Default::default() }, grid);
        let forcing = Forcing::zero(grid, 16, 2);
        let tr = st.solve_local(&RemainderState::zero(Grid { nt: 1, ..grid }), &forcing).unwrap();
        assert!(tr.states.iter().all(|s| s.as_ref().unwrap().norm() == 0.0));
    }

    #[test]
    fn linear_case_is_heat_flow() {
        let grid = Grid::parabolic(24, 8);
        let cfg = SolverConfig { g: 0.0, lambda: 0.0, t_max: 20.0 * grid.dt, window: 4, ..Default::default() };
        let st = Stepper::new(&DirectDft, params(), cfg, grid);
        let (_, lin, trees) = setup(24, 8, 2, 0.25, 3);
        let forcing = Forcing::new(&lin, &trees, 2).unwrap();
        let x0 = smooth_initial(grid, 2);
        let tr = st.solve_local(&x0, &forcing).unwrap();
        for (n, s) in tr.states.iter().enumerate() {
            let exact = st.heat_flow(&x0, n);
            assert!(s.as_ref().unwrap().distance(&exact) < 1e-10 * x0.norm());
        }
    }

    #[test]
    fn picard_windows_contract_and_restart_consistently() {
        let grid = Grid::parabolic(32, 8);
        let (_, lin, trees) = setup(32, 8, 2, 0.25, 5);
        let forcing = Forcing::new(&lin, &trees, 2).unwrap();
        let x0 = smooth_initial(grid, 2);
        let base = SolverConfig { t_max: 24.0 * grid.dt, ..Default::default() };
        let a = Stepper::new(&DirectDft, params(), SolverConfig { window: 2, ..base }, grid).solve_local(&x0, &forcing).unwrap();
        let b = Stepper::new(&DirectDft, params(), SolverConfig { window: 24, ..base }, grid).solve_local(&x0, &forcing).unwrap();
        assert!(a.max_ratio() < 0.9 && b.max_ratio() < 0.9);
        assert!(trajectory_distance(&a, &b) < 1e-9, "{}", trajectory_distance(&a, &b));
        let st = Stepper::new(&DirectDft, params(), base, grid);
        for n in [0, 10, 23] {
            assert!(st.step_residual(&a, &forcing, n).unwrap() < 1e-9);
        }
        assert!(a.states.iter().flatten().all(|s| s.parity_ok()));
    }

    #[test]
    fn restart_reproduces_the_long_run() {
        let grid = Grid::parabolic(32, 8);
        let (_, lin, trees) = setup(32, 8, 2, 0.25, 4);
        let forcing = Forcing::new(&lin, &trees, 2).unwrap();
        let x0 = smooth_initial(grid, 2);
        let cfg = SolverConfig { t_max: 20.0 * grid.dt, ..Default::default() };
        let whole = Stepper::new(&DirectDft, params(), cfg, grid).solve_local(&x0, &forcing).unwrap();
        let half = SolverConfig { t_max: 10.0 * grid.dt, ..cfg };
        let st = Stepper::new(&DirectDft, params(), half, grid);
        let first = st.solve_local(&x0, &forcing).unwrap();
        let mid = first.states[10].clone().unwrap();
        let second = st.solve_local(&mid, &forcing.shifted(10)).unwrap();
        for j in 0..=10 {
            let d = second.states[j].as_ref().unwrap().distance(whole.states[10 + j].as_ref().unwrap());
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn nearby_data_stay_nearby() {
        let grid = Grid::parabolic(16, 8);
        let (_, lin, trees) = setup(16, 8, 2, 0.25, 8);
        let forcing = Forcing::new(&lin, &trees, 2).unwrap();
        let a = smooth_initial(grid, 2);
        let mut b = a.clone();
        b.u = b.u.scale(C64::new(1.001, 0.0));
        let st = Stepper::new(&DirectDft, params(), SolverConfig { t_max: 12.0 * grid.dt, ..Default::default() }, grid);
        let lip = lipschitz_proxy(&st, &a, &b, &forcing).unwrap();
        assert!(lip > 0.0 && lip < 3.0, "{lip}");
    }

    /// Independent scalar solver for `g = 0`: plain arrays, direct double DFT,
    /// step-by-step fixed point of the same quadrature.
    fn scalar_oracle(u0: &[f64], nx: usize, dt: f64, mass: f64, lambda: f64, one: &[Vec<f64>], two: &[Vec<f64>], three: &[Vec<f64>], steps: usize) -> Vec<Vec<f64>> {
        let n2 = nx * nx;
        let dft = |v: &[C64], sign: f64| -> Vec<C64> {
            let mut out = vec![C64::new(0.0, 0.0); n2];
            for a in 0..nx {
                for b in 0..nx {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..nx {
                        for j in 0..nx {
                            let ph = sign * 2.0 * PI * ((a * i + b * j) as f64) / nx as f64;
                            acc += v[i * nx + j] * C64::from_polar(1.0, ph);
                        }
                    }
                    out[a * nx + b] = if sign > 0.0 { acc / n2 as f64 } else { acc };
                }
            }
            out
        };
        let freq = |i: usize| if i <= nx / 2 { i as f64 } else { i as f64 - nx as f64 };
        let lin_step = |x: &[f64], f0: &[f64], f1: &[f64]| -> Vec<f64> {
            let cx = dft(&x.iter().map(|v| C64::new(*v, 0.0)).collect::<Vec<_>>(), -1.0);
            let c0 = dft(&f0.iter().map(|v| C64::new(*v, 0.0)).collect::<Vec<_>>(), -1.0);
            let c1 = dft(&f1.iter().map(|v| C64::new(*v, 0.0)).collect::<Vec<_>>(), -1.0);
            let mut out = vec![C64::new(0.0, 0.0); n2];
            for a in 0..nx {
                for b in 0..nx {
                    let z = (4.0 * PI * PI * (freq(a).powi(2) + freq(b).powi(2)) + mass * mass) * dt;
                    let e = (-z).exp();
                    let (p1, p2) = if z < 1e-4 {
                        (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 6.0 + z * z / 24.0)
                    } else {
                        ((1.0 - e) / z, (z - 1.0 + e) / (z * z))
                    };
                    let k = a * nx + b;
                    out[k] = cx[k] * e + c0[k] * dt * (p1 - p2) + c1[k] * dt * p2;
                }
            }
            dft(&out, 1.0).iter().map(|v| v.re).collect()
        };
        let rhs = |u: &[f64], n: usize| -> Vec<f64> {
            (0..n2).map(|i| -lambda * (u[i].powi(3) + 3.0 * u[i] * u[i] * one[n][i] + 3.0 * u[i] * two[n][i] + three[n][i])).collect()
        };
        let mut out = vec![u0.to_vec()];
        for n in 0..steps {
            let x = out[n].clone();
            let f0 = rhs(&x, n);
            let mut next = x.clone();
            for _ in 0..200 {
                let cand = lin_step(&x, &f0, &rhs(&next, n + 1));
                let d = cand.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                next = cand;
                if d < 1e-15 {
                    break;
                }
            }
            out.push(next);
        }
        out
    }

    #[test]
    fn scalar_reduction_matches_the_oracle() {
        let (nt, nx) = (16, 8);
        let grid = Grid::parabolic(nt, nx);
        let (_, lin, trees) = setup(nt, nx, 2, 0.25, 9);
        let forcing = Forcing::new(&lin, &trees, 2).unwrap();
        let mut x0 = RemainderState::zero(Grid { nt: 1, ..grid });
        x0.u = smooth_initial(grid, 0).u;
        let cfg = SolverConfig { g: 0.0, lambda: 1.0, t_max: 12.0 * grid.dt, ..Default::default() };
        let st = Stepper::new(&DirectDft, params(), cfg, grid);
        let tr = st.solve_local(&x0, &forcing).unwrap();
        let re = |f: &Field| f.data.iter().map(|v| v.re).collect::<Vec<f64>>();
        let one: Vec<_> = forcing.slots.iter().map(|s| re(&s.one)).collect();
        let two: Vec<_> = forcing.slots.iter().map(|s| re(&s.two)).collect();
        let three: Vec<_> = forcing.slots.iter().map(|s| re(&s.three)).collect();
        let u0 = re(&x0.u.scalar_part());
        let oracle = scalar_oracle(&u0, nx, grid.dt, 1.0, 1.0, &one, &two, &three, 12);
        for (n, o) in oracle.iter().enumerate() {
            let u = re(&tr.states[n].as_ref().unwrap().u.scalar_part());
            let err = u.iter().zip(o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "slot {n}: {err}");
        }
    }

    #[test]
    fn levels_are_consistent_under_projection() {
        let grid = Grid::parabolic(16, 8);
        let (_, lin, trees) = setup(16, 8, 4, 0.25, 2);
        let low = Forcing::new(&lin, &trees, 2).unwrap();
        let high = Forcing::new(&lin, &trees, 4).unwrap();
        let x0 = smooth_initial(grid, 2);
        let st = Stepper::new(&DirectDft, params(), SolverConfig { t_max: 10.0 * grid.dt, ..Default::default() }, grid);
        let a = st.solve_local(&x0, &low).unwrap();
        let b = st.solve_local(&x0, &high).unwrap();
        let r = consistency_across_levels(&a, &b);
        assert!(r.discrepancy < 1e-6 && r.ordering_ok());
        assert!(consistency_across_levels(&a, &a).discrepancy == 0.0);
    }

    #[test]
    fn reassembled_fields_satisfy_the_shifted_system() {
        let grid = Grid::parabolic(16, 8);
        let (_, lin, trees) = setup(16, 8, 4, 0.25, 6);
        let forcing = Forcing::new(&lin, &trees, 4).unwrap();
        let x0 = smooth_initial(grid, 2);
        let st = Stepper::new(&DirectDft, params(), SolverConfig { t_max: 6.0 * grid.dt, ..Default::default() }, grid);
        let tr = st.solve_local(&x0, &forcing).unwrap();
        for n in [0, 3, 6] {
            let s = tr.states[n].as_ref().unwrap();
            assert!(st.renormalised_residual(s, &forcing.slots[n], forcing.c2).unwrap() < 1e-10);
            let full = reassemble(s, &forcing.slots[n]);
            let back = full.phi.sub(&s.u).sub(&AlgebraField::scalar(forcing.slots[n].one.clone()));
            assert!(norm_proxy(&back) < 1e-12);
        }
    }

    #[test]
    fn large_data_blow_up_is_marked_with_infinity() {
        let grid = Grid { nt: 128, nx: 4, dt: 2e-4 };
        let g1 = Grid { nt: 1, ..grid };
        let mut x0 = RemainderState::zero(g1);
        x0.u = AlgebraField::scalar(Field::from_fn(g1, |_, _, _| C64::new(6.0, 0.0)));
        // u' = -u + u³ from u(0) = 6 blows up near t = ln(36/35)/2 ≈ 0.014.
        let cfg = SolverConfig { g: 0.0, lambda: -1.0, t_max: 127.0 * grid.dt, blowup_norm: 50.0, ..Default::default() };
        let st = Stepper::new(&DirectDft, params(), cfg, grid);
        let tr = st.solve_local(&x0, &Forcing::zero(grid, 128, 2)).unwrap();
        let t = tr.blow_up_time.expect("blow-up");
        assert!(t > 0.008 && t < 0.0142, "{t}");
        let live = tr.live_len();
        assert!(tr.states[live..].iter().all(|s| s.is_none()));
    }

    fn path(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Path {
        Path::sample(dt, n, |t| {
            let v = f(t);
            v.is_finite().then(|| vec![v])
        })
    }

    #[test]
    fn cutoff_metric_is_a_pseudometric_and_leaves_small_paths_uncut() {
        let (dt, n) = (1e-3, 1000);
        let f = path(dt, n, |t| 0.2 * t.sin());
        let g = path(dt, n, |t| 0.3 * (2.0 * t).cos());
        let h = path(dt, n, |t| if t < 0.7 { 1.0 / (0.7 - t) } else { f64::INFINITY });
        for l in [1.0, 2.0, 4.0] {
            assert_eq!(d_l(&f, &g, l), d_l(&g, &f, l));
            assert!(d_l(&f, &h, l) <= d_l(&f, &g, l) + d_l(&g, &h, l) + 1e-12);
        }
        // Norms ≤ L/2 are compared without cut-off.
        let direct = (0..=n).map(|i| (f.norm_at(i) * f.values[i].as_ref().unwrap()[0].signum() - g.values[i].as_ref().unwrap()[0]).abs()).fold(0.0, f64::max);
        assert!((d_l(&f, &g, 2.0) - direct.min(1.0)).abs() < 1e-12);
        // Past blow-up the cut-off path vanishes.
        assert!(h.cutoff(1.0).last().unwrap()[0] == 0.0);
    }

    #[test]
    fn convergence_characterisation_on_three_families() {
        let (dt, n) = (1e-3, 1000);
        let l_max = 6;
        let seq = |f: &dyn Fn(f64, f64) -> f64| -> Vec<Path> { (1..=8).map(|k| path(dt, n, |t| f(t, 2f64.powi(k)))).collect() };
        // Convergent without blow-up.
        let f = path(dt, n, |t| (3.0 * t).sin());
        let s1 = seq(&|t, k| (3.0 * t).sin() + (t / k).cos() / k);
        let c1 = convergence_check(&f, &s1, l_max);
        assert!(c1.metric_converges(0.02) && c1.stopped_converges(0.02));
        // Blow-up times converge.
        let bu = |tb: f64| move |t: f64| if t < tb { 1.0 / (tb - t) } else { f64::INFINITY };
        let f2 = path(dt, n, bu(0.5));
        let s2 = seq(&|t, k| bu(0.5 + 0.1 / k)(t));
        let c2 = convergence_check(&f2, &s2, l_max);
        assert!(c2.metric_converges(0.02) && c2.stopped_converges(0.02), "{:?}", c2.metric);
        // Blow-up times stay apart.
        let s3 = seq(&|t, k| bu(0.7 + 0.1 / k)(t));
        let c3 = convergence_check(&f2, &s3, l_max);
        assert!(!c3.metric_converges(0.02) && !c3.stopped_converges(0.02));
    }
}
