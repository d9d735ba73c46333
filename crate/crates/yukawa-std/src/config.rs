//! Experiment configuration, read from JSON or TOML (`key = value` with sections).

use std::path::Path;

use serde::{Deserialize, Serialize};
use yukawa_core::kernels::KernelParams;
use yukawa_core::solver::SolverConfig;
use yukawa_core::spectral::Grid;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Time slots of the single-particle mode space.
    pub n_time: usize,
    /// Spatial frequency cutoff `|k|_∞ ≤ n_space` of the mode space.
    pub n_space: usize,
    pub delta: f64,
    /// Fermion mass `M`.
    pub big_m: f64,
    /// Boson mass `m`.
    pub m: f64,
    pub g: f64,
    pub lambda: f64,
    /// Filtration level `n` (number of generators used by the solver).
    pub depth: usize,
    /// Largest Fock space materialised, in modes.
    pub d_max: usize,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub trees: TreesSection,
    /// Diagonal shift injected into the first Gram entry (fault injection).
    pub gram_fault: Option<f64>,
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nt: usize,
    pub nx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub t_max: f64,
    pub blowup_norm: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    pub window: usize,
    pub max_ratio: f64,
    pub truncation_tol: f64,
    /// Amplitude of the smooth initial remainder.
    pub initial_amplitude: f64,
    /// Write the gnuplot script next to the norm series.
    pub plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreesSection {
    /// Besov exponent offset `ν` below the tree regularity.
    pub nu: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_time: 1,
            n_space: 1,
            delta: 0.2,
            big_m: 1.0,
            m: 1.0,
            g: 0.5,
            lambda: 0.5,
            depth: 2,
            d_max: 8,
            eps: vec![0.25, 0.125],
            seeds: vec![1],
            grid: GridSection::default(),
            solver: SolverSection::default(),
            trees: TreesSection::default(),
            gram_fault: None,
            out_dir: "out".into(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { nt: 32, nx: 16 }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverSection {
            t_max: s.t_max,
            blowup_norm: s.blowup_norm,
            picard_tol: s.picard_tol,
            max_picard: s.max_picard,
            window: s.window,
            max_ratio: s.max_ratio,
            truncation_tol: s.truncation_tol,
            initial_amplitude: 0.5,
            plot: true,
        }
    }
}

impl Default for TreesSection {
    fn default() -> Self {
        TreesSection { nu: 0.2 }
    }
}

impl ExperimentConfig {
    /// Reads `path`; `.json` is parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            match line {
                Some(l) => CliError::Config(format!("line {l}: {}", e.message())),
                None => CliError::Config(e.message().to_string()),
            }
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::parabolic(self.grid.nt, self.grid.nx)
    }

    pub fn kernel_params(&self) -> Result<KernelParams, CliError> {
        KernelParams::new(self.m, self.big_m, self.delta).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            g: self.g,
            lambda: self.lambda,
            t_max: s.t_max,
            blowup_norm: s.blowup_norm,
            picard_tol: s.picard_tol,
            max_picard: s.max_picard,
            window: s.window,
            max_ratio: s.max_ratio,
            truncation_tol: s.truncation_tol,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad(format!("delta = {} must lie in (0, 1/2)", self.delta));
        }
        if !(self.big_m > 0.0 && self.m > 0.0) {
            return bad("masses must be positive".into());
        }
        if self.n_time == 0 || self.n_space == 0 {
            return bad("n_time and n_space must be at least 1".into());
        }
        if self.grid.nt < 2 || self.grid.nx < 4 || self.grid.nx % 2 != 0 {
            return bad(format!("grid {}x{} is too small or has odd nx", self.grid.nt, self.grid.nx));
        }
        let dx = 1.0 / self.grid.nx as f64;
        if let Some(e) = self.eps.iter().find(|&&e| !(e >= 2.0 * dx)) {
            return bad(format!("eps = {e} is below twice the grid spacing {dx}"));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let s = &self.solver;
        let tols = [s.t_max, s.blowup_norm, s.picard_tol, s.max_ratio, s.truncation_tol, self.trees.nu];
        if tols.iter().any(|t| !(*t > 0.0)) || s.max_picard == 0 || s.window == 0 {
            return bad("solver tolerances, t_max, window and nu must be positive".into());
        }
        if self.depth == 0 || self.depth > 24 {
            return bad(format!("depth = {} must lie in 1..=24", self.depth));
        }
        Ok(())
    }
}
