//! Deterministic annealing driver: sweep alpha from large to small with warm
//! starts, probe a one-larger memory at every step and grow when it wins,
//! and assemble the optimal curve in the information plane.
//!
//! A trace records one point per alpha together with run-wide numerical
//! aggregates used by the structural checks. Comparing quantum and classical
//! traces goes through isotonic (pool-adjacent-violators) cleanup of the
//! envelope followed by linear interpolation, so the memory inversion in
//! `delta_mem` stays well defined in the presence of solver-level noise.

use serde::Serialize;

use crate::error::{QibError, Result};
use crate::info::{self, Bounds, CorrelationOptions};
use crate::problems::Problem;
use crate::solver::{
    derive_seed, solve, EncodingSolution, MemoryKind, MemoryState, SolverConfig,
};

/// Cooling protocol; geometric in alpha.
#[derive(Clone, Debug)]
pub struct AnnealSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// alpha_{k+1} = decay * alpha_k.
    pub decay: f64,
    /// Memory-dimension cap; defaults to d_X + 1.
    pub d_m_max: Option<usize>,
    /// Adopt the larger memory only when its Lagrangian exceeds the
    /// incumbent's by more than this (bits).
    pub growth_threshold: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            alpha_start: 10.0,
            alpha_end: 1e-3,
            decay: 0.95,
            d_m_max: None,
            growth_threshold: 1e-6,
        }
    }
}

impl AnnealSchedule {
    pub fn alphas(&self) -> Result<Vec<f64>> {
        if !(self.alpha_start > self.alpha_end && self.alpha_end > 0.0) {
            return Err(QibError::Numerical(
                "schedule needs alpha_start > alpha_end > 0".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(QibError::Numerical("decay must lie in (0, 1)".into()));
        }
        let mut v = Vec::new();
        let mut a = self.alpha_start;
        while a >= self.alpha_end * (1.0 - 1e-12) {
            v.push(a);
            a *= self.decay;
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MemoryKindTag {
    Quantum,
    Classical,
}

impl MemoryKindTag {
    pub fn name(&self) -> &'static str {
        match self {
            MemoryKindTag::Quantum => "quantum",
            MemoryKindTag::Classical => "classical",
        }
    }

    fn kind(&self, d_m: usize) -> MemoryKind {
        match self {
            MemoryKindTag::Quantum => MemoryKind::Quantum { d_m },
            MemoryKindTag::Classical => MemoryKind::Classical { d_m },
        }
    }
}

/// One optimal point of the trade-off curve.
#[derive(Clone, Debug, Serialize)]
pub struct InfoPlanePoint {
    pub alpha: f64,
    pub d_m: usize,
    pub i_mem: f64,
    pub i_pred: f64,
    pub lagrangian: f64,
    pub s_m: f64,
    /// S[R|M]; negative in the genuinely quantum regime.
    pub s_cond: f64,
    pub purity: f64,
    pub conc_in: Option<f64>,
    pub conc_out: Option<f64>,
    pub discord_in: Option<f64>,
    pub discord_out: Option<f64>,
    pub converged: bool,
}

/// An alpha-descending list of optimal points plus problem bounds and
/// run-wide numerical aggregates.
#[derive(Clone, Debug)]
pub struct InfoPlaneTrace {
    pub kind: MemoryKindTag,
    pub points: Vec<InfoPlanePoint>,
    pub bounds: Bounds,
    /// Max |tr[sigma H]/ln2 + i_pred| over every iteration of every solve.
    pub max_energy_violation: f64,
    /// Max trace-norm marginal deviation over every update of every solve.
    pub max_marginal_dev: f64,
    /// Min eigenvalue over every update of every solve.
    pub min_eigenvalue: f64,
    /// The alpha_end solution, for end-of-curve diagnostics.
    pub final_solution: Option<EncodingSolution>,
}

/// Anneal one memory kind across the schedule.
///
/// At each alpha the incumbent dimension is solved from the previous
/// solution's warm start, and (below the cap) a probe at d_M + 1 runs next to
/// it; the probe is adopted only when it beats the incumbent Lagrangian by
/// `growth_threshold`. Correlation diagnostics are computed per adopted point
/// when `diagnostics` is set.
pub fn anneal(
    problem: &Problem,
    kind: MemoryKindTag,
    schedule: &AnnealSchedule,
    base_cfg: &SolverConfig,
    diagnostics: bool,
) -> Result<InfoPlaneTrace> {
    let alphas = schedule.alphas()?;
    let bounds = info::bounds(problem)?;
    let cap = schedule.d_m_max.unwrap_or(problem.d_x() + 1).max(1);
    let corr = CorrelationOptions {
        seed: base_cfg.seed,
        ..CorrelationOptions::for_r_dims(problem.r_dims().clone(), problem.relevant_factor())
    };

    let mut d_m = 1usize;
    let mut incumbent: Option<MemoryState> = None;
    let mut probe_prev: Option<MemoryState> = None;
    let mut points = Vec::with_capacity(alphas.len());
    let mut max_energy_violation: f64 = 0.0;
    let mut max_marginal_dev: f64 = 0.0;
    let mut min_eigenvalue = f64::INFINITY;
    let mut final_solution = None;

    for (k, &alpha) in alphas.iter().enumerate() {
        let cfg = base_cfg
            .clone()
            .with_alpha(alpha)
            .with_seed(derive_seed(base_cfg.seed, 2 * k as u64));
        let mut adopted = solve(problem, kind.kind(d_m), &cfg, incumbent.as_ref())?;

        if d_m + 1 <= cap {
            let cfg_probe = base_cfg
                .clone()
                .with_alpha(alpha)
                .with_seed(derive_seed(base_cfg.seed, 2 * k as u64 + 1));
            let warm = probe_prev.as_ref().or(incumbent.as_ref());
            let probe = solve(problem, kind.kind(d_m + 1), &cfg_probe, warm)?;
            max_energy_violation = max_energy_violation.max(probe.max_energy_violation);
            max_marginal_dev = max_marginal_dev.max(probe.max_marginal_dev);
            min_eigenvalue = min_eigenvalue.min(probe.min_eigenvalue);
            if probe.report.lagrangian > adopted.report.lagrangian + schedule.growth_threshold {
                d_m += 1;
                adopted = probe;
                probe_prev = None;
            } else {
                probe_prev = Some(probe.state);
            }
        }

        max_energy_violation = max_energy_violation.max(adopted.max_energy_violation);
        max_marginal_dev = max_marginal_dev.max(adopted.max_marginal_dev);
        min_eigenvalue = min_eigenvalue.min(adopted.min_eigenvalue);

        let rep = if diagnostics {
            info::report(&adopted.sigma_mr, problem.relevance(), alpha, Some(&corr))?
        } else {
            adopted.report.clone()
        };
        points.push(InfoPlanePoint {
            alpha,
            d_m: adopted.d_m,
            i_mem: rep.i_mem,
            i_pred: rep.i_pred,
            lagrangian: rep.lagrangian,
            s_m: rep.s_m,
            s_cond: rep.s_cond_r_given_m,
            purity: rep.purity,
            conc_in: rep.concurrence_mr,
            conc_out: rep.concurrence_my,
            discord_in: rep.discord_r_given_m,
            discord_out: rep.discord_y_given_m,
            converged: adopted.converged,
        });
        incumbent = Some(adopted.state.clone());
        if k + 1 == alphas.len() {
            final_solution = Some(adopted);
        }
    }

    Ok(InfoPlaneTrace {
        kind,
        points,
        bounds,
        max_energy_violation,
        max_marginal_dev,
        min_eigenvalue,
        final_solution,
    })
}

// ---------------------------------------------------------------------------
// envelopes and quantum-advantage measures
// ---------------------------------------------------------------------------

/// Weighted pool-adjacent-violators: least-squares non-decreasing fit.
fn isotonic_non_decreasing(ys: &[f64]) -> Vec<f64> {
    #[derive(Clone, Copy)]
    struct Block {
        sum: f64,
        weight: f64,
        len: usize,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push(Block { sum: y, weight: 1.0, len: 1 });
        while blocks.len() >= 2 {
            let b = blocks[blocks.len() - 1];
            let a = blocks[blocks.len() - 2];
            if a.sum / a.weight <= b.sum / b.weight {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] =
                Block { sum: a.sum + b.sum, weight: a.weight + b.weight, len: a.len + b.len };
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for b in blocks {
        let v = b.sum / b.weight;
        out.extend(std::iter::repeat(v).take(b.len));
    }
    out
}

/// Monotone upper envelope of a trace in the (i_mem, i_pred) plane:
/// points sorted by memory, duplicates collapsed to their best i_pred, then
/// an isotonic cleanup. The origin is always included.
pub fn envelope(trace: &InfoPlaneTrace) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = trace
        .points
        .iter()
        .map(|p| (p.i_mem.max(0.0), p.i_pred.max(0.0)))
        .chain(std::iter::once((0.0, 0.0)))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // collapse near-duplicate memory coordinates, keeping the best i_pred
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (x, y) in pts {
        match merged.last_mut() {
            Some((lx, ly)) if (x - *lx).abs() < 1e-12 => *ly = ly.max(y),
            _ => merged.push((x, y)),
        }
    }
    let ys: Vec<f64> = merged.iter().map(|&(_, y)| y).collect();
    let fit = isotonic_non_decreasing(&ys);
    merged.iter().zip(fit).map(|(&(x, _), y)| (x, y)).collect()
}

/// Envelope value at a memory coordinate; clamped to the plateau beyond the
/// last traced point.
pub fn envelope_value(env: &[(f64, f64)], x: f64) -> f64 {
    if env.is_empty() {
        return 0.0;
    }
    if x <= env[0].0 {
        return env[0].1;
    }
    for w in env.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            if x1 - x0 < 1e-15 {
                return y1;
            }
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    env.last().unwrap().1
}

/// Smallest memory on the envelope reaching predictive power `y`.
pub fn envelope_inverse(env: &[(f64, f64)], y: f64) -> Option<f64> {
    if env.is_empty() || y > env.last().unwrap().1 + 1e-12 {
        return None;
    }
    if y <= env[0].1 {
        return Some(env[0].0);
    }
    for w in env.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y <= y1 + 1e-15 {
            if y1 - y0 < 1e-15 {
                return Some(x1);
            }
            return Some(x0 + (x1 - x0) * (y - y0) / (y1 - y0));
        }
    }
    Some(env.last().unwrap().0)
}

/// Predictive advantage of the quantum trace over the classical trace at the
/// given memory coordinates; only defined for i_mem <= S[X]. Negative
/// interpolation noise is clipped to zero.
pub fn delta_pred(
    trace_q: &InfoPlaneTrace,
    trace_c: &InfoPlaneTrace,
    i_mem_grid: &[f64],
) -> Result<Vec<f64>> {
    let s_x = trace_c.bounds.mem_max_classical;
    if i_mem_grid.iter().any(|&g| g < -1e-9 || g > s_x + 1e-9) {
        return Err(QibError::Numerical(format!(
            "delta_pred grid must lie in [0, S[X] = {s_x:.6}]"
        )));
    }
    let env_q = envelope(trace_q);
    let env_c = envelope(trace_c);
    Ok(i_mem_grid
        .iter()
        .map(|&g| (envelope_value(&env_q, g) - envelope_value(&env_c, g)).max(0.0))
        .collect())
}

/// Memory saved by the quantum trace at the given predictive-power
/// coordinates; only defined below the classical maximum.
pub fn delta_mem(
    trace_q: &InfoPlaneTrace,
    trace_c: &InfoPlaneTrace,
    i_pred_grid: &[f64],
) -> Result<Vec<f64>> {
    let env_q = envelope(trace_q);
    let env_c = envelope(trace_c);
    let c_max = env_c.last().map(|&(_, y)| y).unwrap_or(0.0);
    let mut out = Vec::with_capacity(i_pred_grid.len());
    for &g in i_pred_grid {
        if g < -1e-9 || g > c_max + 1e-9 {
            return Err(QibError::Numerical(format!(
                "delta_mem grid value {g:.6} above the classical maximum {c_max:.6}"
            )));
        }
        let mc = envelope_inverse(&env_c, g.min(c_max))
            .ok_or_else(|| QibError::Numerical("classical envelope inversion failed".into()))?;
        let mq = envelope_inverse(&env_q, g.min(c_max))
            .ok_or_else(|| QibError::Numerical("quantum envelope inversion failed".into()))?;
        out.push((mc - mq).max(0.0));
    }
    Ok(out)
}

/// The three regions of the information plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    Infeasible,
    QuantumFeasible,
    ClassicalFeasible,
}

/// Classify a point against the problem bounds and the traced boundaries.
pub fn classify_point(
    i_mem: f64,
    i_pred: f64,
    bounds: &Bounds,
    trace_q: &InfoPlaneTrace,
    trace_c: &InfoPlaneTrace,
) -> Region {
    let eps = 1e-6;
    if i_mem < -eps
        || i_pred < -eps
        || i_mem > bounds.mem_max_quantum + eps
        || i_pred > bounds.pred_max + eps
    {
        return Region::Infeasible;
    }
    let env_q = envelope(trace_q);
    if i_pred > envelope_value(&env_q, i_mem) + eps {
        return Region::Infeasible;
    }
    let env_c = envelope(trace_c);
    if i_mem <= bounds.mem_max_classical + eps
        && i_pred <= envelope_value(&env_c, i_mem) + eps
    {
        return Region::ClassicalFeasible;
    }
    Region::QuantumFeasible
}
