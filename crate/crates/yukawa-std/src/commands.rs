//! The five experiment commands. Each writes its artefacts and a manifest into
//! the output directory and returns the manifest.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use yukawa_core::besov::BesovConfig;
use yukawa_core::kernels::{
    bessel_q_kernel, dirac_kernel_g_slash, g_nabla_star2_kernel, heat_kernel_k, k_star2_kernel, kernel_g, kernel_slope,
    mollifier_rate_check, power_counting_check, CountingMode, SlopeConfig,
};
use yukawa_core::noise::{linear_solutions, sample_xi, AlgebraField, FermionField, LinearTrees};
use yukawa_core::singleparticle::{Filtration, ModeSpace};
use yukawa_core::solver::{
    consistency_across_levels, epsilon_continuity, norm_proxy, Forcing, RemainderState, SolutionTrajectory, Stepper,
};
use yukawa_core::spectral::{Field, Grid};
use yukawa_core::trees::{build_trees, counterterm_sweep, fermionic_cauchy_sweep, lattice_c2, renormalisation_ablation, TreeBundle};
use yukawa_core::C64;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::fft::RustFft;
use crate::io::{fmt, Manifest, OutputDir, WindowEntry};
use crate::suites::{self, SuiteReport};

// ---------------------------------------------------------------------------
// algebra-verify
// ---------------------------------------------------------------------------

/// Runs the CAR, Wick, seminorm, Araki–Wyss and projection suites on Fock
/// spaces of at most `d_max` modes.
pub fn algebra_verify(cfg: &ExperimentConfig, out: &Path) -> Result<(Manifest, Vec<SuiteReport>), CliError> {
    let mut ms = ModeSpace::new(cfg.n_time, cfg.n_space, cfg.delta, cfg.big_m)?;
    if let Some(shift) = cfg.gram_fault {
        ms.perturb_gram(0, shift);
    }
    let seed = cfg.seeds[0];
    let top = (cfg.d_max.min(ms.dim()) / 2 * 2).max(2);
    let mut reports = Vec::new();
    match Filtration::build(&ms, top) {
        Ok(filt) => {
            let gram = suites::gram_suite(&ms, &filt, 1e-10)?;
            let ok = gram.pass();
            reports.push(gram);
            if ok {
                let dims: Vec<usize> = (2..=top).step_by(2).collect();
                reports.push(suites::car_suite(&ms, &filt, &dims, 20, seed, 1e-12, 1e-10)?);
                reports.push(suites::wick_suite(&ms, &filt, top.min(8), (top / 2).min(3), 10, seed, 1e-8)?);
                reports.push(suites::wick_l2_suite(top.min(8), 3.min(top), 5, seed, 1e-10)?);
                let levels: Vec<usize> = (2..=top.min(6)).step_by(2).collect();
                reports.push(suites::seminorm_suite(&ms, &filt, &levels, 3, seed, 1e-9)?);
                reports.push(suites::araki_wyss_suite((top / 2).min(3), 0.25, 10, seed, 1e-10)?);
                if top >= 4 {
                    reports.push(suites::projection_suite(&ms, &filt, top.min(8), 0.3, seed, 1e-2)?);
                }
            }
        }
        Err(e) => {
            // A corrupted Gram matrix usually surfaces here.
            let gram = suites::SuiteReport {
                suite: "gram".into(),
                checks: vec![
                    suites::Check { name: "gram positive definite".into(), value: ms.gram_min_eigenvalue(), bound: 0.0, pass: ms.gram_min_eigenvalue() > 0.0 },
                    suites::Check { name: format!("filtration construction: {e}"), value: 1.0, bound: 0.0, pass: false },
                ],
                seconds: 0.0,
            };
            reports.push(gram);
        }
    }
    let mut dir = OutputDir::create(out)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(move |c| vec![r.suite.clone(), c.name.clone(), fmt(c.value), fmt(c.bound), c.pass.to_string()]))
        .collect();
    dir.write_csv("algebra.csv", &["suite", "check", "value", "bound", "pass"], &rows)?;
    dir.write_bytes("junit.xml", junit(&reports).as_bytes())?;
    let manifest = dir.finish(Manifest::new("algebra-verify", cfg))?;
    if let Some(bad) = reports.iter().flat_map(|r| r.failures().map(move |c| format!("{}: {}", r.suite, c.name))).next() {
        return Err(CliError::Invariant(bad));
    }
    Ok((manifest, reports))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JUnit-style XML: one `testsuite` per suite, one `testcase` per check.
pub fn junit(reports: &[SuiteReport]) -> String {
    let total: usize = reports.iter().map(|r| r.checks.len()).sum();
    let failures: usize = reports.iter().map(|r| r.failures().count()).sum();
    let mut s = format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<testsuites tests=\"{total}\" failures=\"{failures}\">\n");
    for r in reports {
        s.push_str(&format!(
            "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" time=\"{:.3}\">\n",
            xml_escape(&r.suite),
            r.checks.len(),
            r.failures().count(),
            r.seconds
        ));
        for c in &r.checks {
            s.push_str(&format!("    <testcase classname=\"{}\" name=\"{}\"", xml_escape(&r.suite), xml_escape(&c.name)));
            if c.pass {
                s.push_str("/>\n");
            } else {
                s.push_str(&format!(
                    ">\n      <failure message=\"value {} exceeds bound {}\"/>\n    </testcase>\n",
                    fmt(c.value),
                    fmt(c.bound)
                ));
            }
        }
        s.push_str("  </testsuite>\n");
    }
    s.push_str("</testsuites>\n");
    s
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

/// Log–log exponents of the kernel catalogue, power counting of products and
/// convolutions, and the mollification rate.
pub fn kernels(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let p = cfg.kernel_params()?;
    let sc = SlopeConfig { simplex: 12, ..SlopeConfig::default() };
    let catalogue = [
        ("K", heat_kernel_k(p)),
        ("G", kernel_g(p)),
        ("G_nabla", dirac_kernel_g_slash(p, false)),
        ("G_nabla_bar", dirac_kernel_g_slash(p, true)),
        ("Q", bessel_q_kernel(p)),
        ("K_star2", k_star2_kernel(p)),
        ("G_nabla_star2", g_nabla_star2_kernel(p)),
    ];
    let slopes: Vec<Vec<String>> = catalogue
        .par_iter()
        .map(|(name, k)| {
            let r = kernel_slope(k, &sc);
            vec![name.to_string(), fmt(r.declared), fmt(r.measured()), fmt(r.fit.r_squared)]
        })
        .collect();
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("kernel_slopes.csv", &["kernel", "declared", "measured", "r_squared"], &slopes)?;
    let pairs = [
        ("K*K", heat_kernel_k(p), heat_kernel_k(p), CountingMode::Product),
        ("Gstar2*Gstar2", g_nabla_star2_kernel(p), g_nabla_star2_kernel(p), CountingMode::Product),
        ("Kstar2*Gstar2", k_star2_kernel(p), g_nabla_star2_kernel(p), CountingMode::Product),
        ("G_nabla conv K", dirac_kernel_g_slash(p, false), heat_kernel_k(p), CountingMode::Convolution),
    ];
    let mut counting = Vec::new();
    for (name, a, b, mode) in pairs {
        let r = power_counting_check(&a, &b, mode, &sc)?;
        counting.push(vec![
            name.to_string(),
            format!("{mode:?}").to_lowercase(),
            fmt(r.combined.declared),
            fmt(r.predicted()),
            fmt(r.combined.measured()),
            fmt(r.additivity_gap()),
        ]);
    }
    dir.write_csv("power_counting.csv", &["pair", "mode", "declared", "predicted", "measured", "gap"], &counting)?;
    let k = heat_kernel_k(p);
    let rate = mollifier_rate_check(&k, &[0.08, 0.04, 0.02, 0.01], k.zeta - 0.5, 8)?;
    let rows: Vec<Vec<String>> = rate.eps.iter().zip(&rate.distances).map(|(e, d)| vec![fmt(*e), fmt(*d)]).collect();
    dir.write_csv("mollifier_rate.csv", &["eps", "distance"], &rows)?;
    let mut m = Manifest::new("kernels", cfg);
    m.notes.push(format!("mollifier rate {} (expected {})", rate.fit.slope, rate.expected()));
    Ok(dir.finish(m)?)
}

// ---------------------------------------------------------------------------
// trees
// ---------------------------------------------------------------------------

/// Counterterm fits, renormalised-vs-raw ablation and the `<2AF>` Cauchy table.
pub fn trees(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let p = cfg.kernel_params()?;
    let grid = cfg.grid();
    let fft = RustFft::new();
    let sweep = counterterm_sweep(&p, &cfg.eps)?;
    let mut dir = OutputDir::create(out)?;
    let rows: Vec<Vec<String>> = (0..cfg.eps.len())
        .map(|i| {
            let e = cfg.eps[i];
            vec![fmt(e), fmt(sweep.bosonic[i]), fmt(lattice_c2(&grid, p.m, e)), fmt(sweep.fermionic[i])]
        })
        .collect();
    dir.write_csv("counterterms.csv", &["eps", "c2", "c2_lattice", "c2af"], &rows)?;
    let fits = vec![
        vec!["c2_vs_log_inv_eps".to_string(), fmt(sweep.bosonic_fit.slope), fmt(sweep.bosonic_fit.intercept), fmt(sweep.bosonic_fit.r_squared)],
        vec![
            "log_c2af_vs_log_eps".to_string(),
            fmt(sweep.fermionic_fit.slope),
            fmt(sweep.fermionic_fit.intercept),
            fmt(sweep.fermionic_fit.r_squared),
        ],
    ];
    dir.write_csv("counterterm_fits.csv", &["fit", "slope", "intercept", "r_squared"], &fits)?;
    let bcfg = BesovConfig::fixed_centres(&grid);
    let xi = sample_xi(cfg.seeds[0], grid);
    let abl = renormalisation_ablation(&fft, &p, &xi.xi, &cfg.eps, cfg.trees.nu, &bcfg)?;
    let rows: Vec<Vec<String>> = abl
        .rows
        .iter()
        .map(|r| vec![fmt(r.eps), fmt(r.fermionic_renormalised), fmt(r.fermionic_raw), fmt(r.bosonic_renormalised), fmt(r.bosonic_raw), fmt(r.bosonic_sampled_renormalised), fmt(r.bosonic_sampled_raw)])
        .collect();
    dir.write_csv(
        "ablation.csv",
        &["eps", "fermionic_renormalised", "fermionic_raw", "bosonic_renormalised", "bosonic_raw", "bosonic_sampled_renormalised", "bosonic_sampled_raw"],
        &rows,
    )?;
    let alpha = -1.0 + 2.0 * p.delta - cfg.trees.nu;
    let resolved: Vec<f64> = cfg.eps.iter().copied().filter(|e| e / 2.0 >= 2.0 * grid.dx() * (1.0 - 1e-12)).collect();
    let mut m = Manifest::new("trees", cfg);
    if resolved.len() >= 2 {
        let c = fermionic_cauchy_sweep(&fft, &p, &grid, &resolved, alpha, &bcfg)?;
        let rows: Vec<Vec<String>> = c.eps.iter().zip(&c.distances).map(|(e, d)| vec![fmt(*e), fmt(e / 2.0), fmt(*d)]).collect();
        dir.write_csv("cauchy_2af.csv", &["eps", "eps_half", "distance"], &rows)?;
        m.notes.push(format!("<2AF> Cauchy rate {}", c.rate()));
    } else {
        m.notes.push("fewer than two eps with eps/2 resolved: Cauchy table skipped".into());
    }
    dir.write_plot("counterterms.gp", "counterterms.csv", 1, &[(2, "C_<2>"), (4, "C_<2AF>")], "x")?;
    Ok(dir.finish(m)?)
}

// ---------------------------------------------------------------------------
// solve / converge
// ---------------------------------------------------------------------------

/// Linear solutions, trees and solver forcing for one `(ε, seed)`.
pub struct Realisation {
    pub grid: Grid,
    pub lin: LinearTrees,
    pub trees: TreeBundle,
    pub forcing: Forcing,
}

pub fn realise(cfg: &ExperimentConfig, fft: &RustFft, eps: f64, seed: u64, dim: usize) -> Result<Realisation, CliError> {
    let grid = cfg.grid();
    let p = cfg.kernel_params()?;
    let ms = ModeSpace::with_window(cfg.n_time, cfg.n_space, cfg.delta, cfg.big_m, (0.0, grid.period()))?;
    let filt = Filtration::build(&ms, dim)?;
    let ff = FermionField::new(&ms, &filt, dim, grid)?;
    let xi = sample_xi(seed, grid);
    let lin = linear_solutions(fft, &p, &xi, &ff, eps)?;
    let trees = build_trees(&lin, lattice_c2(&grid, p.m, eps));
    let forcing = Forcing::new(&lin, &trees, dim)?;
    Ok(Realisation { grid, lin, trees, forcing })
}

/// Smooth even/odd initial remainder of size `amp`, using the first two generators.
pub fn initial_state(grid: Grid, amp: f64, dim: usize) -> RemainderState {
    let g = Grid { nt: 1, ..grid };
    let wave = |a: f64, k: usize| {
        Field::from_fn(g, |_, i, j| {
            let x = 2.0 * PI * i as f64 / g.nx as f64;
            let y = 2.0 * PI * j as f64 / g.nx as f64;
            C64::new(a * (x + k as f64).cos() * (0.5 + 0.5 * y.sin()), 0.0)
        })
    };
    let mut s = RemainderState::zero(g);
    s.u = AlgebraField::scalar(wave(amp, 0));
    if dim >= 2 {
        s.y[0].insert(0b01, 0, wave(0.5 * amp, 1));
        s.ybar[1].insert(0b10, 0, wave(0.5 * amp, 2));
    }
    s
}

fn trajectory_rows(tr: &SolutionTrajectory) -> Vec<Vec<String>> {
    tr.states
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let t = n as f64 * tr.dt;
            match s {
                Some(s) => vec![
                    fmt(t),
                    fmt(norm_proxy(&s.u)),
                    fmt(norm_proxy(&s.y[0]).max(norm_proxy(&s.y[1]))),
                    fmt(norm_proxy(&s.ybar[0]).max(norm_proxy(&s.ybar[1]))),
                    fmt(s.norm()),
                    "false".into(),
                ],
                None => vec![fmt(t), "inf".into(), "inf".into(), "inf".into(), "inf".into(), "true".into()],
            }
        })
        .collect()
}

pub const NORM_HEADER: [&str; 6] = ["t", "norm_u", "norm_y", "norm_ybar", "norm_total", "blown_up"];

/// Solves the remainder system at `eps[0]` for the first seed and writes the
/// norm series, snapshots of `U` and `φ = U + <1>`, and the Picard log.
pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let fft = RustFft::new();
    let eps = cfg.eps[0];
    let dim = cfg.depth;
    let real = realise(cfg, &fft, eps, cfg.seeds[0], dim)?;
    let p = cfg.kernel_params()?;
    let st = Stepper::new(&fft, p, cfg.solver_config(), real.grid);
    let x0 = initial_state(real.grid, cfg.solver.initial_amplitude, dim);
    let tr = st.solve_local(&x0, &real.forcing)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("norms.csv", &NORM_HEADER, &trajectory_rows(&tr))?;
    let nx = real.grid.nx;
    let live = tr.live_len();
    let mut u = Vec::with_capacity(live * nx * nx);
    let mut phi = Vec::with_capacity(live * nx * nx);
    for (n, s) in tr.states.iter().take(live).enumerate() {
        let s = s.as_ref().expect("live slot");
        let us = s.u.scalar_part();
        u.extend(us.data.iter().map(|v| v.re));
        let one = &real.forcing.slots[n].one;
        phi.extend(us.data.iter().zip(&one.data).map(|(a, b)| a.re + b.re));
    }
    dir.write_binary("u_scalar.bin", &[live, nx, nx], &["U scalar coefficient"], &u)?;
    dir.write_binary("phi_scalar.bin", &[live, nx, nx], &["phi = U + <1>, scalar coefficient"], &phi)?;
    let windows: Vec<Vec<String>> =
        tr.windows.iter().map(|w| vec![w.start.to_string(), w.len.to_string(), w.iterations.to_string(), fmt(w.ratio)]).collect();
    dir.write_csv("windows.csv", &["start", "len", "iterations", "ratio"], &windows)?;
    if cfg.solver.plot {
        dir.write_plot("norms.gp", "norms.csv", 1, &[(2, "U"), (3, "Y"), (4, "Ybar")], "y")?;
    }
    let mut m = Manifest::new("solve", cfg);
    m.windows = tr.windows.iter().map(|w| WindowEntry { start: w.start, len: w.len, iterations: w.iterations, ratio: w.ratio }).collect();
    m.blow_up_time = tr.blow_up_time;
    m.notes.push(format!("eps = {eps}, level = {dim}, dropped Grassmann mass = {}", tr.truncated_mass));
    if live > 1 {
        let res = st.renormalised_residual(tr.states[1].as_ref().expect("live"), &real.forcing.slots[1], real.forcing.c2)?;
        m.notes.push(format!("renormalised residual at the first step = {res:e}"));
    }
    let m = dir.finish(m)?;
    if let Some(t) = tr.blow_up_time {
        if t <= tr.dt {
            return Err(CliError::EarlyBlowUp { time: t, first_output: tr.dt });
        }
    }
    Ok(m)
}

/// `ε`-sweep for every seed (in parallel), the Cauchy table of successive
/// trajectory distances, and level consistency against level 2.
pub fn converge(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let p = cfg.kernel_params()?;
    let dim = cfg.depth;
    let results: Vec<Result<(u64, Vec<SolutionTrajectory>, Option<f64>), CliError>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let fft = RustFft::new();
            let mut trajs = Vec::new();
            let mut level_gap = None;
            for &e in &cfg.eps {
                let real = realise(cfg, &fft, e, seed, dim)?;
                let st = Stepper::new(&fft, p, cfg.solver_config(), real.grid);
                let x0 = initial_state(real.grid, cfg.solver.initial_amplitude, dim);
                let tr = st.solve_local(&x0, &real.forcing)?;
                if level_gap.is_none() && dim > 2 {
                    let low = Forcing::new(&real.lin, &real.trees, 2)?;
                    let lt = st.solve_local(&x0.project(2), &low)?;
                    level_gap = Some(consistency_across_levels(&lt, &tr).discrepancy);
                }
                trajs.push(tr);
            }
            Ok((seed, trajs, level_gap))
        })
        .collect();
    let mut dir = OutputDir::create(out)?;
    let mut rows = Vec::new();
    let mut m = Manifest::new("converge", cfg);
    for r in results {
        let (seed, trajs, gap) = r?;
        if trajs.len() >= 2 {
            let rep = epsilon_continuity(&cfg.eps, &trajs)?;
            for (i, d) in rep.distances.iter().enumerate() {
                rows.push(vec![seed.to_string(), fmt(cfg.eps[i]), fmt(cfg.eps[i + 1]), fmt(*d)]);
            }
            m.notes.push(format!("seed {seed}: distances monotone = {}", rep.monotone()));
        }
        if let Some(g) = gap {
            m.notes.push(format!("seed {seed}: level 2 vs {dim} discrepancy = {g:e}"));
        }
        for (e, t) in cfg.eps.iter().zip(&trajs) {
            if let Some(b) = t.blow_up_time {
                m.notes.push(format!("seed {seed}, eps {e}: blow-up at t = {b}"));
            }
        }
    }
    dir.write_csv("cauchy.csv", &["seed", "eps", "eps_next", "distance"], &rows)?;
    Ok(dir.finish(m)?)
}
