use std::time::Instant;

use rayon::prelude::*;

use super::config::SpaceTimeConfig;
use super::local::Subdomain;
use super::{estimate_rho, Diagnostics, RunOptions, Timings};
use crate::decomp::{decompose, Decomposition};
use crate::error::{Result, SniError};
use crate::fem::{l2_relative_error, Equation, HeatStepper, ProblemSpec};
use crate::geometry::TriMesh;
use crate::scalar::{dist2, norm2, Real};

/// Inclusive level ranges `[a, b]` of the temporal parts: core windows of
/// `n_steps / k_temporal` levels starting at level 1, each widened by
/// `delta` levels on both sides and clipped to `[1, n_steps]`.
pub fn time_windows(n_steps: usize, k_temporal: usize, delta: usize) -> Result<Vec<(usize, usize)>> {
    if k_temporal == 0 || n_steps == 0 || !n_steps.is_multiple_of(k_temporal) {
        return Err(SniError::Config(format!(
            "{k_temporal} temporal parts do not divide {n_steps} steps evenly"
        )));
    }
    let len = n_steps / k_temporal;
    Ok((0..k_temporal)
        .map(|j| {
            let a = (j * len + 1).saturating_sub(delta).max(1);
            let b = ((j + 1) * len + delta).min(n_steps);
            (a, b)
        })
        .collect())
}

/// Result of [`sni_run_spacetime`]; `u` is time-major over all levels.
#[derive(Debug, Clone)]
pub struct SpaceTimeRun<T> {
    pub u: Vec<T>,
    pub diagnostics: Diagnostics,
    pub decomposition: Decomposition,
    pub windows: Vec<(usize, usize)>,
}

struct Part<T> {
    sub: Subdomain<T>,
    stepper: HeatStepper<T>,
}

/// Space-time additive Schwarz for the heat equation.
///
/// Parts are products of overlapping spatial subdomains and overlapping time
/// windows. A local solve is a backward-Euler rollout on the submesh over
/// the window, started from the iterate at the level before the window and
/// taking artificial boundary values from the iterate at every level. Level
/// 0 stays pinned to `u₀`.
pub fn sni_run_spacetime<T: Real>(
    config: &SpaceTimeConfig<T>,
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    opts: RunOptions<'_, T>,
) -> Result<SpaceTimeRun<T>> {
    let start = Instant::now();
    if spec.equation != Equation::Heat {
        return Err(SniError::Config(format!("space-time solver needs a heat problem, got {}", spec.equation)));
    }
    spec.validate(mesh)?;
    let n = mesh.n_vertices();
    let steps = spec.n_steps.unwrap_or(0);
    let levels = steps + 1;
    let windows = time_windows(steps, config.k_temporal(), config.delta_t())?;
    let decomposition = decompose(mesh, config.k_spatial(), config.depth(), config.partition_seed())?;
    let mask = spec.dirichlet_mask(n);
    let spatial: Vec<Part<T>> = decomposition
        .parts
        .par_iter()
        .enumerate()
        .map(|(k, part)| {
            let sub = Subdomain::new(k, mesh, spec, part.clone(), &mask, false)?;
            let stepper = HeatStepper::new(&sub.submesh.mesh, &sub.template).map_err(|e| e.in_subdomain(k))?;
            Ok(Part { sub, stepper })
        })
        .collect::<Result<_>>()?;

    let u0 = spec.initial_u0.as_deref().unwrap_or_default();
    let mut u = vec![T::zero(); n * levels];
    u[..n].copy_from_slice(u0);
    let pin = |u: &mut [T]| {
        u[..n].copy_from_slice(u0);
        for l in 1..levels {
            for (&v, &x) in &spec.dirichlet_values {
                u[l * n + v] = x;
            }
        }
    };
    pin(&mut u);
    if let Some(o) = opts.oracle {
        if o.len() != u.len() {
            return Err(SniError::LengthMismatch {
                expected: u.len(),
                got: o.len(),
            });
        }
    }

    let max_window_cover = (1..levels)
        .map(|l| windows.iter().filter(|&&(a, b)| a <= l && l <= b).count())
        .max()
        .unwrap_or(1);
    let pairs: Vec<(usize, usize)> = (0..spatial.len())
        .flat_map(|i| (0..windows.len()).map(move |j| (i, j)))
        .collect();
    let tau = config.tau();
    let mut timings = Timings {
        partition: start.elapsed().as_secs_f64(),
        ..Timings::default()
    };
    let mut norms: Vec<T> = Vec::new();
    let mut errors: Vec<T> = Vec::new();
    let mut converged = false;

    while norms.len() < config.max_outer() {
        let t0 = Instant::now();
        let cur = &u;
        let locals: Vec<Result<Vec<T>>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let p = &spatial[i];
                let (a, b) = windows[j];
                let mut w = p.sub.restrict(&cur[(a - 1) * n..a * n]);
                let mut out = Vec::with_capacity(w.len() * (b - a + 1));
                for l in a..=b {
                    let level = &cur[l * n..(l + 1) * n];
                    w = p.stepper.step_with(&w, &p.sub.dirichlet_vector(level))?;
                    out.extend_from_slice(&w);
                }
                Ok(out)
            })
            .collect();
        let t1 = Instant::now();
        let mut correction = vec![T::zero(); u.len()];
        for (idx, res) in locals.into_iter().enumerate() {
            let (i, j) = pairs[idx];
            let w = res.map_err(|e| e.in_subdomain(idx))?;
            let ids = &spatial[i].sub.submesh.global_ids;
            let (a, _) = windows[j];
            for (s, chunk) in w.chunks(ids.len()).enumerate() {
                let base = (a + s) * n;
                for (&g, &x) in ids.iter().zip(chunk) {
                    correction[base + g] += x - u[base + g];
                }
            }
        }
        let mut next: Vec<T> = u.iter().zip(&correction).map(|(&x, &c)| x + tau * c).collect();
        pin(&mut next);
        let norm = dist2(&next, &u);
        u = next;
        norms.push(norm);
        timings.local += (t1 - t0).as_secs_f64();
        timings.update += t1.elapsed().as_secs_f64();
        let mut stop = false;
        if let Some(o) = opts.oracle {
            let e = l2_relative_error(&u, o)?;
            errors.push(e);
            stop = opts.target_error.is_some_and(|t| e <= t);
        }
        if norm / norm2(&u).max(T::lit(1e-12)) < config.outer_tol() {
            converged = true;
            break;
        }
        if stop {
            break;
        }
    }

    let diagnostics = Diagnostics {
        update_norms: norms.iter().map(|x| x.as_f64()).collect(),
        rho_hat: estimate_rho(&norms).map(Real::as_f64),
        overlap_factor: decomposition.overlap_factor * max_window_cover,
        converged,
        iterations: norms.len(),
        timings,
        c_abs_max: 0.0,
        error_vs_oracle: opts.oracle.map(|_| errors.iter().map(|x| x.as_f64()).collect()),
    };
    Ok(SpaceTimeRun {
        u,
        diagnostics,
        decomposition,
        windows,
    })
}
