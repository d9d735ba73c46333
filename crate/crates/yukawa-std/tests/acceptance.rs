//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use yukawa::commands::{initial_state, realise};
use yukawa::suites::{self, SuiteReport, N_CONTRACTIVE_C};
use yukawa::{ExperimentConfig, RustFft};
use yukawa_core::besov::{estimate_fermion_norm, estimate_norm, BesovConfig};
use yukawa_core::kernels::{
    bessel_q_kernel, dirac_kernel_g_slash, g_nabla_star2_kernel, heat_kernel_k, k_star2_kernel, kernel_slope,
    mollifier_rate_check, power_counting_check, resolvent, CountingMode, KernelParams, Mollifier, SlopeConfig,
};
use yukawa_core::noise::sample_xi;
use yukawa_core::singleparticle::{Filtration, ModeSpace};
use yukawa_core::solver::{
    consistency_across_levels, convergence_check, d_l, epsilon_continuity, Forcing, Path, RemainderState, SolverConfig, Stepper,
};
use yukawa_core::spectral::{Field, Grid};
use yukawa_core::trees::{counterterm_sweep, fermionic_cauchy_sweep, renormalisation_ablation};
use yukawa_core::C64;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn suite(&mut self, r: &SuiteReport) {
        for c in &r.checks {
            self.check(c.pass, format!("{}: {} = {:.3e} (bound {:.3e})", r.suite, c.name, c.value, c.bound));
        }
    }

    fn within(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        self.check((value - target).abs() <= tol, format!("{name}: {value:.4} vs {target:.4} (±{tol})"));
    }

    fn budget(&mut self, elapsed: Duration, limit: f64) {
        let s = elapsed.as_secs_f64();
        self.check(s < limit, format!("runtime {s:.1} s < {limit} s"));
    }
}

type Criterion = fn() -> Outcome;

fn params() -> KernelParams {
    KernelParams::new(1.0, 1.0, 0.2).unwrap()
}

fn algebra(top: usize) -> (ModeSpace, Filtration) {
    let ms = ModeSpace::new(1, 1, 0.2, 1.0).unwrap();
    let filt = Filtration::build(&ms, top).unwrap();
    (ms, filt)
}

fn c1_car() -> Outcome {
    let t = Instant::now();
    let (ms, filt) = algebra(8);
    let mut o = Outcome::new();
    o.suite(&suites::car_suite(&ms, &filt, &[2, 4, 6, 8], 100, 11, 1e-12, 1e-10).unwrap());
    o.budget(t.elapsed(), 10.0);
    o
}

fn c2_wick() -> Outcome {
    let t = Instant::now();
    let (ms, filt) = algebra(8);
    let mut o = Outcome::new();
    o.suite(&suites::wick_suite(&ms, &filt, 8, 4, 12, 12, 1e-8).unwrap());
    o.budget(t.elapsed(), 30.0);
    o
}

fn c3_wick_l2() -> Outcome {
    let mut o = Outcome::new();
    o.suite(&suites::wick_l2_suite(8, 3, 20, 13, 1e-10).unwrap());
    o
}

fn c4_n_contractive() -> Outcome {
    let mut o = Outcome::new();
    let fitted = suites::n_contractive_suite(6, 4, 50, 4, N_CONTRACTIVE_C).unwrap();
    o.check(fitted.pass(), format!("fitting sample within C = {N_CONTRACTIVE_C}: worst ratio/C = {:.6}", fitted.worst()));
    let fresh = suites::n_contractive_suite(6, 4, 50, 14, N_CONTRACTIVE_C).unwrap();
    o.check(fresh.pass(), format!("fresh sample within C = {N_CONTRACTIVE_C}: worst ratio/C = {:.6}", fresh.worst()));
    o
}

fn c5_seminorm() -> Outcome {
    let (ms, filt) = algebra(8);
    let mut o = Outcome::new();
    o.suite(&suites::seminorm_suite(&ms, &filt, &[2, 4, 6, 8], 4, 15, 1e-9).unwrap());
    o
}

fn c6_extended_wick() -> Outcome {
    let mut o = Outcome::new();
    let r = suites::extended_wick_suite(&[2, 4, 6, 8], 20, 16, 1.5).unwrap();
    o.suite(&r);
    o
}

fn c7_kernels() -> Outcome {
    let t = Instant::now();
    let p = params();
    let cfg = SlopeConfig { simplex: 12, ..SlopeConfig::default() };
    let mut o = Outcome::new();
    for (name, k) in [
        ("K", heat_kernel_k(p)),
        ("G_nabla", dirac_kernel_g_slash(p, false)),
        ("Q", bessel_q_kernel(p)),
        ("G_nabla_star2", g_nabla_star2_kernel(p)),
    ] {
        let r = kernel_slope(&k, &cfg);
        o.within(&format!("slope of {name}"), r.measured(), r.declared, 0.15);
    }
    let gg = g_nabla_star2_kernel(p);
    for (name, a, b) in [
        ("K*K", heat_kernel_k(p), heat_kernel_k(p)),
        ("Gstar2*Gstar2", gg.clone(), gg.clone()),
        ("Kstar2*Gstar2", k_star2_kernel(p), gg.clone()),
    ] {
        let r = power_counting_check(&a, &b, CountingMode::Product, &cfg).unwrap();
        o.within(&format!("product {name} against summed factor slopes"), r.combined.measured(), r.predicted(), 0.2);
    }
    let conv = power_counting_check(&dirac_kernel_g_slash(p, false), &heat_kernel_k(p), CountingMode::Convolution, &cfg).unwrap();
    o.within("convolution G_nabla conv K", conv.combined.measured(), conv.predicted(), 0.2);
    let k = heat_kernel_k(p);
    let rate = mollifier_rate_check(&k, &[0.08, 0.04, 0.02, 0.01], k.zeta - 0.5, 8).unwrap();
    o.within("mollification rate", rate.fit.slope, rate.expected(), 0.1);
    o.budget(t.elapsed(), 120.0);
    o
}

fn c8_noise_regularity() -> Outcome {
    let t = Instant::now();
    let p = params();
    let fft = RustFft::new();
    let grid = Grid::parabolic(128, 64);
    let cfg = BesovConfig::fixed_centres(&grid);
    let kappa = 0.05;
    let seeds = 8;
    let (mut xi_slope, mut ib_slope) = (0.0, 0.0);
    for seed in 0..seeds {
        let xi = sample_xi(100 + seed, grid);
        xi_slope += estimate_norm(&fft, &xi.xi, -2.0 - kappa, &cfg).unwrap().exponent() / seeds as f64;
        let ib = resolvent(&fft, &xi.xi, p.m);
        ib_slope += estimate_norm(&fft, &ib, -kappa, &cfg).unwrap().exponent() / seeds as f64;
    }
    let psi = estimate_fermion_norm(&fft, &p, &grid, -1.5 + p.delta - kappa, |_, _, _| 1.0, &cfg).unwrap();
    // Positive exponents need first-order moments; one cell of margin keeps three scales on this grid.
    let fine = BesovConfig { min_cells: 1.0, ..cfg.clone() };
    let ifpsi = estimate_fermion_norm(
        &fft,
        &p,
        &grid,
        0.5 + p.delta - kappa,
        |w, k1, k2| {
            let a2 = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + p.big_m * p.big_m;
            1.0 / ((2.0 * PI * w).powi(2) + a2 * a2)
        },
        &fine,
    )
    .unwrap();
    let mut o = Outcome::new();
    o.within("xi (8 seeds)", xi_slope, -2.0 - kappa, 0.2);
    o.within("Psi", psi.exponent(), -1.5 + p.delta, 0.2);
    o.within("I_B xi (8 seeds)", ib_slope, -kappa, 0.2);
    o.within("I_F Psi", ifpsi.exponent(), 0.5 + p.delta, 0.2);
    o.budget(t.elapsed(), 300.0);
    o
}

/// Independent quadrature of `C_<2AF>^ε`: closed-form spinor trace `2M³ - 6M|p|²`,
/// time integral by the substitution `u = (s/2π) tan θ`, octant symmetry in `k`.
fn fermionic_counterterm_oracle(p: &KernelParams, eps: f64) -> f64 {
    let mol = Mollifier::new(1.0);
    let du = 1e-3;
    let rho2: Vec<f64> = (0..=30_000).map(|i| mol.profile_hat(i as f64 * du).powi(2)).collect();
    let interp = |u: f64| {
        let x = u / du;
        let i = x as usize;
        if i + 1 >= rho2.len() {
            return 0.0;
        }
        let w = x - i as f64;
        (1.0 - w) * rho2[i] + w * rho2[i + 1]
    };
    let nodes = 96;
    let h = 0.5 * PI / nodes as f64;
    let tans: Vec<f64> = (0..nodes).map(|n| ((n as f64 + 0.5) * h).tan() / (2.0 * PI)).collect();
    let time = |s: f64| 2.0 * tans.iter().map(|t| interp(s * t)).sum::<f64>() * h / (2.0 * PI * s);
    let kmax = (20.0 / eps).ceil() as i64;
    let rx: Vec<f64> = (0..=kmax).map(|k| interp(eps * k as f64)).collect();
    let m = p.big_m;
    let mut total = 0.0;
    for k1 in 0..=kmax {
        for k2 in k1..=kmax {
            let w = rx[k1 as usize] * rx[k2 as usize];
            if w < 1e-30 {
                continue;
            }
            let signs = |k: i64| if k == 0 { 1.0 } else { 2.0 };
            let mult = signs(k1) * signs(k2) * if k1 == k2 { 1.0 } else { 2.0 };
            let p2 = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64);
            let a2 = p2 + m * m;
            let trace = 2.0 * m.powi(3) - 6.0 * m * p2;
            let weight = a2.powf(-(1.0 + 2.0 * p.delta) / 2.0) / a2.sqrt();
            total += mult * w * weight * trace * eps * eps * time(a2 * eps * eps);
        }
    }
    total
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn ablation_grid() -> Grid {
    Grid::parabolic(128, 256)
}

fn c9_renormalisation() -> Outcome {
    let p = params();
    let eps: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let mut o = Outcome::new();
    let sweep = counterterm_sweep(&p, &eps).unwrap();
    let bf = sweep.bosonic_fit;
    o.check(bf.slope > 0.0 && bf.r_squared > 0.98, format!("C_<2> = a log(1/eps) + b: a = {:.5}, R^2 = {:.5}", bf.slope, bf.r_squared));
    let oracle: Vec<f64> = eps.iter().map(|&e| fermionic_counterterm_oracle(&p, e)).collect();
    let oracle_rate = loglog_slope(&eps, &oracle);
    o.lines.push(format!("     C_<2AF> sweep {:?}, oracle {:?}", sweep.fermionic, oracle));
    o.check(sweep.fermionic_diverges(), format!("C_<2AF> diverges: fitted log-log slope {:.4}", sweep.fermionic_fit.slope));
    o.within("C_<2AF> fitted power against oracle", sweep.fermionic_fit.slope, oracle_rate, 0.2);
    let grid = ablation_grid();
    let fft = RustFft::new();
    let xi = sample_xi(9, grid);
    let abl = renormalisation_ablation(&fft, &p, &xi.xi, &eps, 0.2, &BesovConfig::fixed_centres(&grid)).unwrap();
    for r in &abl.rows {
        o.lines.push(format!(
            "     eps {:.5}: <2AF> ren {:.4e} raw {:.4e}; <2> ren {:.4e} raw {:.4e} (sample {:.4e} / {:.4e})",
            r.eps, r.fermionic_renormalised, r.fermionic_raw, r.bosonic_renormalised, r.bosonic_raw,
            r.bosonic_sampled_renormalised, r.bosonic_sampled_raw
        ));
    }
    o.check(abl.fermionic_spread() <= 2.0, format!("renormalised <2AF> spread {:.3} <= 2", abl.fermionic_spread()));
    o.check(abl.bosonic_spread() <= 2.0, format!("renormalised <2> spread {:.3} <= 2", abl.bosonic_spread()));
    o.check(abl.fermionic_raw_diverges(), "unrenormalised <2AF> increases monotonically".into());
    o.check(abl.bosonic_raw_diverges(), "unrenormalised <2> increases monotonically".into());
    o
}

fn c10_tree_convergence() -> Outcome {
    let p = params();
    let grid = ablation_grid();
    let fft = RustFft::new();
    let eps: Vec<f64> = (3..=6).map(|k| 2f64.powi(-k)).collect();
    let alpha = -1.0 + 2.0 * p.delta - 0.2;
    let rep = fermionic_cauchy_sweep(&fft, &p, &grid, &eps, alpha, &BesovConfig::fixed_centres(&grid)).unwrap();
    let mut o = Outcome::new();
    o.lines.push(format!("     distances {:?}", rep.distances));
    o.check(rep.rate() > 0.0, format!("fitted rate {:.4} > 0 (proven floor nu/4 = 0.05)", rep.rate()));
    o
}

/// Exact heat semigroup on each Grassmann coefficient.
fn exact_heat(fft: &RustFft, s: &RemainderState, t: f64, m: f64, big_m: f64) -> RemainderState {
    let flow = |a: &yukawa_core::noise::AlgebraField, mass: f64| {
        a.map(|f| {
            f.multiply(fft, |_, k1, k2| {
                let z = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64) + mass * mass;
                C64::new((-z * t).exp(), 0.0)
            })
        })
    };
    RemainderState {
        u: flow(&s.u, m),
        y: [flow(&s.y[0], big_m), flow(&s.y[1], big_m)],
        ybar: [flow(&s.ybar[0], big_m), flow(&s.ybar[1], big_m)],
    }
}

/// Brute-force scalar solver for `g = 0`: plain arrays, direct double DFT,
/// step-by-step fixed point of the same second-order quadrature.
#[allow(clippy::too_many_arguments)]
fn scalar_oracle(
    u0: &[f64],
    nx: usize,
    dt: f64,
    mass: f64,
    lambda: f64,
    one: &[Vec<f64>],
    two: &[Vec<f64>],
    three: &[Vec<f64>],
    steps: usize,
) -> Vec<Vec<f64>> {
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
    let cplx = |v: &[f64]| v.iter().map(|x| C64::new(*x, 0.0)).collect::<Vec<_>>();
    let lin_step = |x: &[f64], f0: &[f64], f1: &[f64]| -> Vec<f64> {
        let (cx, c0, c1) = (dft(&cplx(x), -1.0), dft(&cplx(f0), -1.0), dft(&cplx(f1), -1.0));
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

fn c11_solver() -> Outcome {
    let t = Instant::now();
    let fft = RustFft::new();
    let p = params();
    let mut o = Outcome::new();

    // (a) heat flow.
    let cfg = ExperimentConfig { g: 0.0, lambda: 0.0, ..Default::default() };
    let real = realise(&cfg, &fft, 0.25, 21, 2).unwrap();
    let x0 = initial_state(real.grid, 0.8, 2);
    let st = Stepper::new(&fft, p, cfg.solver_config(), real.grid);
    let tr = st.solve_local(&x0, &real.forcing).unwrap();
    let mut err = 0.0f64;
    for (n, s) in tr.states.iter().enumerate() {
        let exact = exact_heat(&fft, &x0, n as f64 * tr.dt, p.m, p.big_m);
        err = err.max(s.as_ref().unwrap().distance(&exact));
    }
    o.check(err < 1e-10, format!("(a) g = lambda = 0 against the exact heat semigroup: {err:.3e} < 1e-10"));

    // (b) scalar reduction.
    let cfg = ExperimentConfig { g: 0.0, lambda: 1.0, ..Default::default() };
    let mut cfg = cfg;
    cfg.grid.nx = 8;
    cfg.grid.nt = 16;
    cfg.eps = vec![0.25];
    let real = realise(&cfg, &fft, 0.25, 22, 2).unwrap();
    let mut x0 = RemainderState::zero(Grid { nt: 1, ..real.grid });
    x0.u = initial_state(real.grid, 0.8, 0).u;
    let steps = 12;
    let scfg = SolverConfig { t_max: steps as f64 * real.grid.dt, ..cfg.solver_config() };
    let tr = Stepper::new(&fft, p, scfg, real.grid).solve_local(&x0, &real.forcing).unwrap();
    let re = |f: &Field| f.data.iter().map(|v| v.re).collect::<Vec<f64>>();
    let slots = &real.forcing.slots;
    let one: Vec<_> = slots.iter().map(|s| re(&s.one)).collect();
    let two: Vec<_> = slots.iter().map(|s| re(&s.two)).collect();
    let three: Vec<_> = slots.iter().map(|s| re(&s.three)).collect();
    let oracle = scalar_oracle(&re(&x0.u.scalar_part()), 8, real.grid.dt, p.m, 1.0, &one, &two, &three, steps);
    let mut err = 0.0f64;
    for (n, want) in oracle.iter().enumerate() {
        let got = re(&tr.states[n].as_ref().unwrap().u.scalar_part());
        err = err.max(got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    o.check(err < 1e-8, format!("(b) g = 0 against the brute-force scalar oracle: {err:.3e} < 1e-8"));

    // (c) contraction at the default configuration.
    let cfg = ExperimentConfig::default();
    let mut worst = 0.0f64;
    let mut windows = 0;
    for &e in &cfg.eps {
        let real = realise(&cfg, &fft, e, cfg.seeds[0], cfg.depth).unwrap();
        let x0 = initial_state(real.grid, cfg.solver.initial_amplitude, cfg.depth);
        let tr = Stepper::new(&fft, p, cfg.solver_config(), real.grid).solve_local(&x0, &real.forcing).unwrap();
        worst = worst.max(tr.max_ratio());
        windows += tr.windows.len();
    }
    o.check(worst < 0.9, format!("(c) Picard ratio over {windows} windows: max {worst:.4} < 0.9"));

    // (d) level consistency.
    let cfg = ExperimentConfig::default();
    let real = realise(&cfg, &fft, 0.25, 23, 4).unwrap();
    let x0 = initial_state(real.grid, cfg.solver.initial_amplitude, 2);
    let st = Stepper::new(&fft, p, cfg.solver_config(), real.grid);
    let low = Forcing::new(&real.lin, &real.trees, 2).unwrap();
    let a = st.solve_local(&x0, &low).unwrap();
    let b = st.solve_local(&x0, &real.forcing).unwrap();
    let rep = consistency_across_levels(&a, &b);
    o.check(
        rep.discrepancy < 1e-6 && rep.ordering_ok(),
        format!("(d) level 2 against the projection of level 4: {:.3e} < 1e-6", rep.discrepancy),
    );

    // (e) epsilon sweep.
    let mut cfg = ExperimentConfig::default();
    cfg.grid.nx = 32;
    cfg.grid.nt = 32;
    cfg.eps = vec![0.5, 0.25, 0.125, 0.0625];
    let mut trajs = Vec::new();
    for &e in &cfg.eps {
        let real = realise(&cfg, &fft, e, 24, 2).unwrap();
        let x0 = initial_state(real.grid, cfg.solver.initial_amplitude, 2);
        trajs.push(Stepper::new(&fft, p, cfg.solver_config(), real.grid).solve_local(&x0, &real.forcing).unwrap());
    }
    let rep = epsilon_continuity(&cfg.eps, &trajs).unwrap();
    o.check(rep.monotone(), format!("(e) successive trajectory distances decrease: {:?}", rep.distances));
    o.budget(t.elapsed(), 900.0);
    o
}

fn path(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Path {
    Path::sample(dt, n, |t| {
        let v = f(t);
        v.is_finite().then(|| vec![v])
    })
}

fn blow_up(tb: f64) -> impl Fn(f64) -> f64 {
    move |t| if t < tb { 1.0 / (tb - t) } else { f64::INFINITY }
}

fn c12_blow_up_space() -> Outcome {
    let (dt, n, l_max, tol) = (1e-3, 1000, 6, 0.02);
    let family = |f: &dyn Fn(f64, f64) -> f64| -> Vec<Path> { (1..=8).map(|k| path(dt, n, |t| f(t, 2f64.powi(k)))).collect() };
    let mut o = Outcome::new();

    let f = path(dt, n, |t| (3.0 * t).sin());
    let c = convergence_check(&f, &family(&|t, k| (3.0 * t).sin() + (t / k).cos() / k), l_max);
    o.check(c.metric_converges(tol) && c.stopped_converges(tol), "convergent family: d_sol -> 0 and stopped distances -> 0".into());

    let g = path(dt, n, blow_up(0.5));
    let c = convergence_check(&g, &family(&|t, k| blow_up(0.5 + 0.1 / k)(t)), l_max);
    o.check(c.metric_converges(tol) && c.stopped_converges(tol), "matching blow-up times: d_sol -> 0 and stopped distances -> 0".into());

    let c = convergence_check(&g, &family(&|t, k| blow_up(0.7 + 0.1 / k)(t)), l_max);
    o.check(!c.metric_converges(tol) && !c.stopped_converges(tol), "mismatched blow-up times: neither converges".into());

    let h = path(dt, n, |t| 0.3 * (2.0 * t).cos());
    let mut worst = 0.0f64;
    for l in [1.0, 2.0, 4.0, 8.0] {
        worst = worst.max((d_l(&f, &g, l) - d_l(&g, &f, l)).abs());
        worst = worst.max(d_l(&f, &g, l) - d_l(&f, &h, l) - d_l(&h, &g, l));
    }
    o.check(worst <= 1e-12, format!("d_L symmetric and triangular: defect {worst:.1e}"));
    o
}

fn c13_projection() -> Outcome {
    let (ms, filt) = algebra(10);
    let rows = suites::projection_errors(&ms, &filt, 10, 0.3, 17).unwrap();
    let mut o = Outcome::new();
    o.lines.push(format!("     errors {:?}", rows.iter().map(|r| (r.dim, r.dense)).collect::<Vec<_>>()));
    o.suite(&suites::projection_suite(&ms, &filt, 10, 0.3, 17, 1e-3).unwrap());
    o
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 13] = [
        ("CAR suite", c1_car),
        ("covariance and Wick rule", c2_wick),
        ("Wick/L2 identity", c3_wick_l2),
        ("N-contractive bound", c4_n_contractive),
        ("seminorm algebra", c5_seminorm),
        ("extended-Wick bound", c6_extended_wick),
        ("kernel power counting", c7_kernels),
        ("noise regularity", c8_noise_regularity),
        ("renormalisation", c9_renormalisation),
        ("tree convergence", c10_tree_convergence),
        ("solver", c11_solver),
        ("blow-up space", c12_blow_up_space),
        ("projection convergence", c13_projection),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|k| k != id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome { pass: false, lines: vec![format!("FAIL panicked: {}", msg.unwrap_or_default())] }
        });
        for l in &outcome.lines {
            println!("    {l}");
        }
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {name}  ({:.1} s)", t.elapsed().as_secs_f64());
        if !outcome.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
