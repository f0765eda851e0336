use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::scalar::Real;

/// Outer tolerance used with the exact local solver.
pub const EXACT_TOL: f64 = 1e-8;
/// Outer tolerance used with inexact local solvers, below which their noise dominates.
pub const INEXACT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_OUTER: usize = 2000;

/// Local solver plugged into the Schwarz iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSolverKind {
    /// Finite-element solve of the local problem.
    Exact,
    /// Exact solve plus a seeded perturbation of relative size `c`.
    Perturbed { c: f64, seed: u64 },
    /// Learned surrogate loaded from a weight file.
    Surrogate { weights: PathBuf },
}

impl LocalSolverKind {
    pub fn default_tol(&self) -> f64 {
        match self {
            LocalSolverKind::Exact => EXACT_TOL,
            _ => INEXACT_TOL,
        }
    }
}

impl FromStr for LocalSolverKind {
    type Err = SniError;

    /// `exact`, `perturbed:<c>:<seed>` or `surrogate:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SniError::Config(format!("bad local solver {s:?}; expected exact, perturbed:<c>:<seed> or surrogate:<path>"));
        if s == "exact" {
            return Ok(LocalSolverKind::Exact);
        }
        if let Some(rest) = s.strip_prefix("perturbed:") {
            let (c, seed) = rest.split_once(':').ok_or_else(bad)?;
            let c: f64 = c.parse().map_err(|_| bad())?;
            if !(c >= 0.0 && c.is_finite()) {
                return Err(SniError::Config(format!("perturbation size {c} must be finite and nonnegative")));
            }
            return Ok(LocalSolverKind::Perturbed {
                c,
                seed: seed.parse().map_err(|_| bad())?,
            });
        }
        if let Some(path) = s.strip_prefix("surrogate:") {
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(LocalSolverKind::Surrogate { weights: path.into() });
        }
        Err(bad())
    }
}

/// Initial iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", rename_all = "snake_case")]
pub enum Init<T> {
    /// Dirichlet data on Dirichlet vertices, zero elsewhere.
    ZeroInterior,
    /// A given global vector; Dirichlet vertices are overwritten with `u_D`.
    Provided(Vec<T>),
}

fn check_tau<T: Real>(tau: T, parts: usize) -> Result<()> {
    let bound = T::one() / T::from_count(parts.max(1));
    if !(tau > T::zero() && tau < bound) {
        return Err(SniError::Config(format!(
            "step size tau = {tau} must satisfy 0 < tau < 1/{parts} = {bound}"
        )));
    }
    Ok(())
}

/// Validated parameters of a Schwarz run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SniConfig<T> {
    k: usize,
    depth: usize,
    tau: T,
    outer_tol: T,
    max_outer: usize,
    local_solver: LocalSolverKind,
    #[serde(skip)]
    init: Init<T>,
    partition_seed: u64,
}

impl<T: Real> SniConfig<T> {
    /// Rejects `K = 0` and any `τ` outside `(0, 1/K)`. The outer tolerance
    /// defaults by solver kind and the iteration cap to 2000.
    pub fn new(k: usize, depth: usize, tau: T, local_solver: LocalSolverKind) -> Result<Self> {
        if k == 0 {
            return Err(SniError::Config("K must be at least 1".into()));
        }
        check_tau(tau, k)?;
        Ok(Self {
            k,
            depth,
            tau,
            outer_tol: T::lit(local_solver.default_tol()),
            max_outer: DEFAULT_MAX_OUTER,
            local_solver,
            init: Init::ZeroInterior,
            partition_seed: 0,
        })
    }

    pub fn with_outer_tol(mut self, tol: T) -> Result<Self> {
        if !(tol > T::zero()) {
            return Err(SniError::Config(format!("outer tolerance {tol} must be positive")));
        }
        self.outer_tol = tol;
        Ok(self)
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Result<Self> {
        if max_outer == 0 {
            return Err(SniError::Config("max_outer must be at least 1".into()));
        }
        self.max_outer = max_outer;
        Ok(self)
    }

    pub fn with_init(mut self, init: Init<T>) -> Self {
        self.init = init;
        self
    }

    pub fn with_partition_seed(mut self, seed: u64) -> Self {
        self.partition_seed = seed;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn outer_tol(&self) -> T {
        self.outer_tol
    }

    pub fn max_outer(&self) -> usize {
        self.max_outer
    }

    pub fn local_solver(&self) -> &LocalSolverKind {
        &self.local_solver
    }

    pub fn init(&self) -> &Init<T> {
        &self.init
    }

    pub fn partition_seed(&self) -> u64 {
        self.partition_seed
    }
}

/// Parameters of a space-time Schwarz run for the heat equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SpaceTimeConfig<T> {
    k_spatial: usize,
    k_temporal: usize,
    delta_t: usize,
    depth: usize,
    tau: T,
    outer_tol: T,
    max_outer: usize,
    partition_seed: u64,
}

impl<T: Real> SpaceTimeConfig<T> {
    /// Requires `0 < τ < 1/(K_s·K_t)`.
    pub fn new(k_spatial: usize, k_temporal: usize, delta_t: usize, depth: usize, tau: T) -> Result<Self> {
        if k_spatial == 0 || k_temporal == 0 {
            return Err(SniError::Config("spatial and temporal part counts must be at least 1".into()));
        }
        check_tau(tau, k_spatial * k_temporal)?;
        Ok(Self {
            k_spatial,
            k_temporal,
            delta_t,
            depth,
            tau,
            outer_tol: T::lit(EXACT_TOL),
            max_outer: DEFAULT_MAX_OUTER,
            partition_seed: 0,
        })
    }

    pub fn with_outer_tol(mut self, tol: T) -> Result<Self> {
        if !(tol > T::zero()) {
            return Err(SniError::Config(format!("outer tolerance {tol} must be positive")));
        }
        self.outer_tol = tol;
        Ok(self)
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Result<Self> {
        if max_outer == 0 {
            return Err(SniError::Config("max_outer must be at least 1".into()));
        }
        self.max_outer = max_outer;
        Ok(self)
    }

    pub fn with_partition_seed(mut self, seed: u64) -> Self {
        self.partition_seed = seed;
        self
    }

    pub fn k_spatial(&self) -> usize {
        self.k_spatial
    }

    pub fn k_temporal(&self) -> usize {
        self.k_temporal
    }

    pub fn delta_t(&self) -> usize {
        self.delta_t
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn outer_tol(&self) -> T {
        self.outer_tol
    }

    pub fn max_outer(&self) -> usize {
        self.max_outer
    }

    pub fn partition_seed(&self) -> u64 {
        self.partition_seed
    }
}
