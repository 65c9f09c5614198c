//! Fully classical information bottleneck over probability vectors.
//!
//! This is the reference implementation the quantum solver must agree with on
//! classical processes. It shares the annealing / warm-start conventions of
//! the quantum solver so curves are comparable point by point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QibError, Result};

/// Probabilities below this floor are clamped before logarithms.
const PROB_FLOOR: f64 = 1e-300;
/// Memory letters with p(m) below this are pruned (kept as dead rows).
const BRANCH_PRUNE: f64 = 1e-12;

/// A classical source p(x) with a classical relevance map p(y|x).
#[derive(Clone, Debug)]
pub struct ClassicalProblem {
    p_x: Vec<f64>,
    /// p_y_given_x[y][x]; columns (fixed x) sum to one.
    p_y_given_x: Vec<Vec<f64>>,
}

impl ClassicalProblem {
    pub fn new(p_x: Vec<f64>, p_y_given_x: Vec<Vec<f64>>) -> Result<Self> {
        if p_x.is_empty() || p_y_given_x.is_empty() {
            return Err(QibError::NotStochastic("empty distributions".into()));
        }
        let dx = p_x.len();
        if p_y_given_x.iter().any(|r| r.len() != dx) {
            return Err(QibError::NotStochastic("p(y|x) row length != |X|".into()));
        }
        if p_x.iter().any(|&p| p < 0.0) || (p_x.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(QibError::NotStochastic("p(x) is not a distribution".into()));
        }
        for x in 0..dx {
            let col: f64 = p_y_given_x.iter().map(|r| r[x]).sum();
            if p_y_given_x.iter().any(|r| r[x] < 0.0) || (col - 1.0).abs() > 1e-12 {
                return Err(QibError::NotStochastic(format!("column {x} of p(y|x) sums to {col}")));
            }
        }
        Ok(Self { p_x, p_y_given_x })
    }

    pub fn d_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn d_y(&self) -> usize {
        self.p_y_given_x.len()
    }

    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }

    pub fn p_y_given_x(&self) -> &[Vec<f64>] {
        &self.p_y_given_x
    }

    pub fn p_y(&self) -> Vec<f64> {
        self.p_y_given_x
            .iter()
            .map(|row| row.iter().zip(&self.p_x).map(|(c, p)| c * p).sum())
            .collect()
    }

    /// I[X:Y] in bits, the data-processing ceiling for any encoder.
    pub fn mutual_information_xy(&self) -> f64 {
        let p_y = self.p_y();
        let mut acc = 0.0;
        for (y, row) in self.p_y_given_x.iter().enumerate() {
            for (x, &c) in row.iter().enumerate() {
                let joint = c * self.p_x[x];
                if joint > 0.0 && p_y[y] > 0.0 {
                    acc += joint * (joint / (self.p_x[x] * p_y[y])).log2();
                }
            }
        }
        acc
    }
}

/// A soft encoder held as the joint distribution p(m, x).
#[derive(Clone, Debug)]
pub struct ClassicalEncoder {
    /// p_mx[m][x]
    p_mx: Vec<Vec<f64>>,
}

impl ClassicalEncoder {
    pub fn new(p_mx: Vec<Vec<f64>>, prob: &ClassicalProblem) -> Result<Self> {
        let enc = Self { p_mx };
        for (x, &px) in prob.p_x().iter().enumerate() {
            let m_sum: f64 = enc.p_mx.iter().map(|r| r[x]).sum();
            if (m_sum - px).abs() > 1e-10 {
                return Err(QibError::MarginalMismatch(format!(
                    "sum_m p(m, x={x}) = {m_sum} but p(x) = {px}"
                )));
            }
        }
        if enc.p_mx.iter().flatten().any(|&p| p < 0.0) {
            return Err(QibError::NotStochastic("negative p(m,x)".into()));
        }
        Ok(enc)
    }

    pub fn d_m(&self) -> usize {
        self.p_mx.len()
    }

    pub fn p_mx(&self) -> &[Vec<f64>] {
        &self.p_mx
    }

    pub fn p_m(&self) -> Vec<f64> {
        self.p_mx.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn p_my(&self, prob: &ClassicalProblem) -> Vec<Vec<f64>> {
        let dm = self.d_m();
        let dy = prob.d_y();
        let mut out = vec![vec![0.0; dy]; dm];
        for (m, row) in self.p_mx.iter().enumerate() {
            for (x, &pmx) in row.iter().enumerate() {
                if pmx == 0.0 {
                    continue;
                }
                for y in 0..dy {
                    out[m][y] += prob.p_y_given_x()[y][x] * pmx;
                }
            }
        }
        out
    }

    /// I[M:X] in bits.
    pub fn i_mem_bits(&self, prob: &ClassicalProblem) -> f64 {
        let p_m = self.p_m();
        let mut acc = 0.0;
        for (m, row) in self.p_mx.iter().enumerate() {
            for (x, &j) in row.iter().enumerate() {
                if j > 0.0 && p_m[m] > 0.0 && prob.p_x()[x] > 0.0 {
                    acc += j * (j / (p_m[m] * prob.p_x()[x])).log2();
                }
            }
        }
        acc
    }

    /// I[M:Y] in bits.
    pub fn i_pred_bits(&self, prob: &ClassicalProblem) -> f64 {
        let p_m = self.p_m();
        let p_y = prob.p_y();
        let mut acc = 0.0;
        for (m, row) in self.p_my(prob).iter().enumerate() {
            for (y, &j) in row.iter().enumerate() {
                if j > 0.0 && p_m[m] > 0.0 && p_y[y] > 0.0 {
                    acc += j * (j / (p_m[m] * p_y[y])).log2();
                }
            }
        }
        acc
    }

    fn l1_distance(&self, other: &ClassicalEncoder) -> f64 {
        self.p_mx
            .iter()
            .flatten()
            .zip(other.p_mx.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// One self-consistent update:
/// `p(m, x) = p(x) p(m) exp((1/alpha) sum_y p(y|x) log[p(m,y)/(p(m)p(y))]) / Z(x)`.
///
/// The normalizer restores `sum_m p(m, x) = p(x)` exactly. Exponents are
/// shifted by their per-x maximum, so small alpha cannot overflow.
pub fn classical_ib_step(
    enc: &ClassicalEncoder,
    prob: &ClassicalProblem,
    alpha: f64,
) -> ClassicalEncoder {
    let dm = enc.d_m();
    let dx = prob.d_x();
    let p_m = enc.p_m();
    let p_y = prob.p_y();
    let p_my = enc.p_my(prob);

    // log p(m,y)/(p(m) p(y)) with floored probabilities; dead branches stay dead
    let mut log_ratio = vec![vec![0.0; prob.d_y()]; dm];
    for m in 0..dm {
        if p_m[m] < BRANCH_PRUNE {
            continue;
        }
        for y in 0..prob.d_y() {
            if p_y[y] <= 0.0 {
                continue;
            }
            log_ratio[m][y] =
                (p_my[m][y].max(PROB_FLOOR) / (p_m[m] * p_y[y]).max(PROB_FLOOR)).ln();
        }
    }

    let mut out = vec![vec![0.0; dx]; dm];
    for x in 0..dx {
        if prob.p_x()[x] == 0.0 {
            continue;
        }
        let mut expo = vec![f64::NEG_INFINITY; dm];
        for m in 0..dm {
            if p_m[m] < BRANCH_PRUNE {
                continue;
            }
            let mut e = p_m[m].max(PROB_FLOOR).ln();
            for (y, lr) in log_ratio[m].iter().enumerate() {
                e += prob.p_y_given_x()[y][x] * lr / alpha;
            }
            expo[m] = e;
        }
        let shift = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> =
            expo.iter().map(|&e| if e.is_finite() { (e - shift).exp() } else { 0.0 }).collect();
        let z: f64 = weights.iter().sum();
        for m in 0..dm {
            out[m][x] = prob.p_x()[x] * weights[m] / z;
        }
    }
    ClassicalEncoder { p_mx: out }
}

/// Converged classical encoder with its information coordinates.
#[derive(Clone, Debug)]
pub struct ClassicalSolution {
    pub encoder: ClassicalEncoder,
    pub i_mem: f64,
    pub i_pred: f64,
    pub lagrangian: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta_l: f64,
}

/// Iterate [`classical_ib_step`] to convergence.
///
/// Initialization is a softly perturbed uniform p(m|x) unless a warm-start
/// encoder of matching shape is supplied; the halting rule matches the
/// quantum solver (Lagrangian increment below `tol` and l1 step below 1e-9).
pub fn classical_ib_solve(
    prob: &ClassicalProblem,
    d_m: usize,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    seed: u64,
    warm_start: Option<&ClassicalEncoder>,
) -> Result<ClassicalSolution> {
    if d_m == 0 || alpha <= 0.0 {
        return Err(QibError::Numerical("d_m and alpha must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = match warm_start {
        Some(w) if w.d_m() == d_m => {
            // multiplicative noise keeps dead branches dead
            let p_mx = w
                .p_mx()
                .iter()
                .map(|row| row.iter().map(|&p| p * (1.0 + 1e-3 * rng.random::<f64>())).collect())
                .collect();
            renormalize_to_px(p_mx, prob)
        }
        Some(w) => {
            // pad or truncate to d_m branches, new branches seeded small
            let mut p_mx: Vec<Vec<f64>> = w.p_mx().to_vec();
            p_mx.truncate(d_m);
            while p_mx.len() < d_m {
                let row: Vec<f64> =
                    prob.p_x().iter().map(|&px| px * 1e-3 * rng.random::<f64>()).collect();
                p_mx.push(row);
            }
            renormalize_to_px(p_mx, prob)
        }
        None => {
            let p_mx = (0..d_m)
                .map(|_| {
                    prob.p_x()
                        .iter()
                        .map(|&px| px * (1.0 + 1e-3 * rng.random::<f64>()) / d_m as f64)
                        .collect()
                })
                .collect();
            renormalize_to_px(p_mx, prob)
        }
    };

    let mut l_prev = enc.i_pred_bits(prob) - alpha * enc.i_mem_bits(prob);
    let mut converged = false;
    let mut iterations = 0;
    let mut delta_l = f64::INFINITY;
    for k in 0..max_iters {
        let next = classical_ib_step(&enc, prob, alpha);
        let l = next.i_pred_bits(prob) - alpha * next.i_mem_bits(prob);
        delta_l = l - l_prev;
        let moved = next.l1_distance(&enc);
        enc = next;
        l_prev = l;
        iterations = k + 1;
        if delta_l <= tol && moved <= 1e-9 {
            converged = true;
            break;
        }
    }
    let i_mem = enc.i_mem_bits(prob);
    let i_pred = enc.i_pred_bits(prob);
    Ok(ClassicalSolution {
        encoder: enc,
        i_mem,
        i_pred,
        lagrangian: i_pred - alpha * i_mem,
        iterations,
        converged,
        final_delta_l: delta_l,
    })
}

fn renormalize_to_px(mut p_mx: Vec<Vec<f64>>, prob: &ClassicalProblem) -> ClassicalEncoder {
    let dm = p_mx.len();
    for (x, &px) in prob.p_x().iter().enumerate() {
        let s: f64 = p_mx.iter().map(|r| r[x]).sum();
        for m in 0..dm {
            p_mx[m][x] = if s > 0.0 { p_mx[m][x] / s * px } else { px / dm as f64 };
        }
    }
    ClassicalEncoder { p_mx }
}
