//! Self-consistent fixed-point solver for optimal encodings.
//!
//! At each iteration the quantum-memory update is
//!
//! ```text
//! sigma' = rho_R^{1/2} Z^{-1/2} exp(log sigma_M - H/alpha) Z^{-1/2} rho_R^{1/2}
//! H      = Rdual(log sigma_M + log sigma_Y - log sigma_MY)
//! Z      = tr_M exp(log sigma_M - H/alpha)
//! ```
//!
//! which restores the reference marginal by construction. The classical
//! memory restricts to ensembles `sum_m p_m |m><m| (x) sigma_{R|m}` and
//! updates each branch with the dual-channel exponent. All exponentials are
//! shifted by their largest eigenvalue, so small alpha cannot overflow; the
//! shift cancels in the normalizer sandwich.
//!
//! Halting requires both the Lagrangian increment to fall below `tol_l` and
//! the iterate movement (trace norm) to fall below `tol_sigma`; the increment
//! alone does not bound the fixed-point residual of the returned iterate.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QibError, Result};
use crate::info::{self, entropy_bits_from_eigs, CorrelationOptions, InfoReport, LN2};
use crate::linalg::{
    herm_eig, hermitize, kron, partial_trace, spectral_map, trace_norm_herm, ComplexMatrix,
    SpectralFn, SubsystemDims,
};
use crate::problems::Problem;
use crate::quantum::{purify, AncillaSide, ConditionalOperator, DensityMatrix, DualMap,
    QuantumChannel};

/// Classical-ensemble branches below this weight are pruned.
pub const BRANCH_PRUNE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Lagrange trade-off; must be strictly positive (the alpha -> 0 limit is
    /// reached by annealing, never by setting alpha = 0).
    pub alpha: f64,
    /// Halting tolerance on the Lagrangian increment, in bits.
    pub tol_l: f64,
    /// Halting tolerance on the iterate movement, trace norm.
    pub tol_sigma: f64,
    pub max_iters: usize,
    /// Relative spectral cutoff for logs and pseudo-inverses.
    pub support_cutoff: f64,
    /// Scale of the random Hermitian noise applied to initial states.
    pub perturb_scale: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tol_l: 1e-10,
            tol_sigma: 1e-9,
            max_iters: 5000,
            support_cutoff: 1e-12,
            perturb_scale: 1e-3,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.tol_l <= 0.0 {
            return Err(QibError::Numerical("alpha and tol_l must be positive".into()));
        }
        Ok(())
    }
}

/// Memory model: a full quantum memory of dimension d_M, or a classical one
/// (an ensemble over a fixed basis of d_M letters).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryKind {
    Quantum { d_m: usize },
    Classical { d_m: usize },
}

impl MemoryKind {
    pub fn d_m(&self) -> usize {
        match *self {
            MemoryKind::Quantum { d_m } | MemoryKind::Classical { d_m } => d_m,
        }
    }

    pub fn with_d_m(self, d_m: usize) -> Self {
        match self {
            MemoryKind::Quantum { .. } => MemoryKind::Quantum { d_m },
            MemoryKind::Classical { .. } => MemoryKind::Classical { d_m },
        }
    }

    pub fn is_classical(&self) -> bool {
        matches!(self, MemoryKind::Classical { .. })
    }
}

/// Raw solver state, reusable as a warm start.
#[derive(Clone, Debug)]
pub enum MemoryState {
    /// sigma_MR on [d_M, d_X].
    Quantum { sigma: ComplexMatrix, d_m: usize },
    /// Classical ensemble (p_m, sigma_{R|m}).
    Classical { branches: Vec<(f64, ComplexMatrix)> },
}

impl MemoryState {
    pub fn d_m(&self) -> usize {
        match self {
            MemoryState::Quantum { d_m, .. } => *d_m,
            MemoryState::Classical { branches } => branches.len(),
        }
    }
}

/// A converged (or best-effort) encoding with its diagnostics.
#[derive(Clone, Debug)]
pub struct EncodingSolution {
    /// The encoding state on [d_M, d_X] (block-diagonal for classical memory).
    pub sigma_mr: DensityMatrix,
    pub report: InfoReport,
    pub d_m: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Last Lagrangian increment, bits.
    pub final_delta_l: f64,
    /// tr[sigma H]/ln2 at the final iterate; equals -i_pred up to round-off.
    pub h_expectation: f64,
    /// Max over iterations of |tr[sigma H]/ln2 + i_pred|.
    pub max_energy_violation: f64,
    /// Max over post-update iterates of ||tr_M sigma - rho_R||_tr.
    pub max_marginal_dev: f64,
    /// Min eigenvalue seen across post-update iterates.
    pub min_eigenvalue: f64,
    /// ||step(final) - final||_tr, measured by one extra update.
    pub fixed_point_residual: f64,
    /// Raw state for warm starts.
    pub state: MemoryState,
}

/// Derive a per-point seed from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Immutable per-solve context: reference state and channel pieces.
struct Ctx {
    rho_r: ComplexMatrix,
    sqrt_rho_r: ComplexMatrix,
    relevance: QuantumChannel,
    rel_dual: DualMap,
    d_x: usize,
    d_y: usize,
    alpha: f64,
    cutoff: f64,
}

impl Ctx {
    fn new(problem: &Problem, cfg: &SolverConfig) -> Result<Self> {
        let psi = purify(problem.rho_x())?;
        let rho_r = psi.projector().marginal(&[1])?;
        let eig = rho_r.eig()?;
        let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let sqrt_rho_r = eig.map(|l| if l > cfg.support_cutoff * top { l.sqrt() } else { 0.0 });
        Ok(Self {
            rho_r: rho_r.mat().clone(),
            sqrt_rho_r,
            relevance: problem.relevance().clone(),
            rel_dual: problem.relevance().dual(),
            d_x: problem.d_x(),
            d_y: problem.relevance().dout(),
            alpha: cfg.alpha,
            cutoff: cfg.support_cutoff,
        })
    }

    fn dims_mr(&self, d_m: usize) -> SubsystemDims {
        SubsystemDims::new(&[d_m, self.d_x]).expect("positive dims")
    }
}

/// Per-iterate quantities shared by the halting rule and the diagnostics.
struct IterStats {
    lagrangian: f64,
    h_expectation: f64,
    energy_violation: f64,
    marginal_dev: f64,
    min_eig: f64,
}

// ---------------------------------------------------------------------------
// quantum memory
// ---------------------------------------------------------------------------

/// H_MR = Rdual(log sigma_M (x) I_Y + I_M (x) log sigma_Y - log sigma_MY),
/// natural logs on the support.
pub fn h_operator(sigma_mr: &DensityMatrix, relevance: &QuantumChannel) -> Result<ComplexMatrix> {
    if sigma_mr.dims().nfactors() != 2 || sigma_mr.dims().dims()[1] != relevance.din() {
        return Err(QibError::DimensionMismatch(
            "sigma_MR must be [d_M, d_X] with d_X matching the relevance input".into(),
        ));
    }
    let d_m = sigma_mr.dims().dims()[0];
    let ctx = CtxLite {
        relevance,
        cutoff: crate::linalg::SUPPORT_CUTOFF,
    };
    let pieces = ctx.h_pieces(sigma_mr.mat(), d_m)?;
    Ok(pieces.h)
}

/// Minimal context for the standalone operator entry points.
struct CtxLite<'a> {
    relevance: &'a QuantumChannel,
    cutoff: f64,
}

struct HPieces {
    h: ComplexMatrix,
    log_sigma_m: ComplexMatrix,
    s_m: f64,
    s_y: f64,
    s_my: f64,
}

impl<'a> CtxLite<'a> {
    fn h_pieces(&self, sigma: &ComplexMatrix, d_m: usize) -> Result<HPieces> {
        let d_x = self.relevance.din();
        let d_y = self.relevance.dout();
        let dims_mr = SubsystemDims::new(&[d_m, d_x])?;
        let dims_my = SubsystemDims::new(&[d_m, d_y])?;
        let r_hat = self.relevance.extended(d_m, AncillaSide::Left);

        let sigma_m = partial_trace(sigma, &dims_mr, &[0])?;
        let eig_m = herm_eig(&sigma_m)?;
        let (log_m, _) = spectral_map(&eig_m, SpectralFn::Log, self.cutoff)?;
        let s_m = entropy_bits_from_eigs(&eig_m.eigenvalues);

        let sigma_my = hermitize(&r_hat.apply(sigma));
        let eig_my = herm_eig(&sigma_my)?;
        let (log_my, _) = spectral_map(&eig_my, SpectralFn::Log, self.cutoff)?;
        let s_my = entropy_bits_from_eigs(&eig_my.eigenvalues);

        let sigma_y = partial_trace(&sigma_my, &dims_my, &[1])?;
        let eig_y = herm_eig(&sigma_y)?;
        let (log_y, _) = spectral_map(&eig_y, SpectralFn::Log, self.cutoff)?;
        let s_y = entropy_bits_from_eigs(&eig_y.eigenvalues);

        let r_hat_dual = r_hat.dual();
        let h = kron(&log_m, &ComplexMatrix::identity(d_x))
            .add(&kron(
                &ComplexMatrix::identity(d_m),
                &self.relevance.dual().apply(&log_y),
            ))
            .sub(&r_hat_dual.apply(&log_my));
        Ok(HPieces { h: hermitize(&h), log_sigma_m: log_m, s_m, s_y, s_my })
    }
}

/// One quantum-memory update. The input marginal may deviate from rho_R (a
/// perturbed warm start does); the output satisfies it by construction.
pub fn quantum_step(
    sigma_k: &DensityMatrix,
    rho_r: &DensityMatrix,
    relevance: &QuantumChannel,
    cfg: &SolverConfig,
) -> Result<DensityMatrix> {
    cfg.check()?;
    let d_m = sigma_k.dims().dims()[0];
    let eig_r = rho_r.eig()?;
    let top = eig_r.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let sqrt_rho_r = eig_r.map(|l| if l > cfg.support_cutoff * top { l.sqrt() } else { 0.0 });
    let lite = CtxLite { relevance, cutoff: cfg.support_cutoff };
    let pieces = lite.h_pieces(sigma_k.mat(), d_m)?;
    let next = quantum_update(
        sigma_k.mat(),
        &pieces,
        &sqrt_rho_r,
        relevance.din(),
        d_m,
        cfg.alpha,
        cfg.support_cutoff,
    )?;
    Ok(DensityMatrix::from_parts_unchecked(
        next,
        SubsystemDims::new(&[d_m, relevance.din()])?,
    ))
}

fn quantum_update(
    _sigma: &ComplexMatrix,
    pieces: &HPieces,
    sqrt_rho_r: &ComplexMatrix,
    d_x: usize,
    d_m: usize,
    alpha: f64,
    cutoff: f64,
) -> Result<ComplexMatrix> {
    // G = log sigma_M (x) I - H / alpha, exponent-shifted by its top eigenvalue
    let g = kron(&pieces.log_sigma_m, &ComplexMatrix::identity(d_x))
        .sub(&pieces.h.scale(Complex::new(1.0 / alpha, 0.0)));
    let eig_g = herm_eig(&g)?;
    let shift = eig_g.eigenvalues.last().copied().unwrap_or(0.0);
    let w = eig_g.map(|l| (l - shift).exp());

    let dims_mr = SubsystemDims::new(&[d_m, d_x])?;
    let z = partial_trace(&w, &dims_mr, &[1])?;
    let eig_z = herm_eig(&z)?;
    let (z_inv_sqrt, _) = spectral_map(&eig_z, SpectralFn::InvSqrt, cutoff)?;

    // Gram form (W^{1/2} A^dag)^dag (W^{1/2} A^dag) of the sandwich A W A^dag
    // keeps the result positive semidefinite even when Z is badly conditioned.
    let s = sqrt_rho_r.mul(&z_inv_sqrt);
    let a = kron(&ComplexMatrix::identity(d_m), &s);
    let w_half = eig_g.map(|l| ((l - shift) / 2.0).exp());
    let c = w_half.mul(&a.dagger());
    let next = c.dagger().mul(&c);
    let tr = next.trace().re;
    if !(tr.is_finite()) || (tr - 1.0).abs() > 1e-6 {
        return Err(QibError::SingularNormalizer(format!(
            "update trace {tr:.6e}; Z_R lost support over rho_R"
        )));
    }
    Ok(hermitize(&next.scale(Complex::new(1.0 / tr, 0.0))))
}

/// Stats of a quantum iterate plus the pieces needed to advance it.
fn quantum_stats(ctx: &Ctx, sigma: &ComplexMatrix, d_m: usize) -> Result<(IterStats, HPieces)> {
    let dims_mr = ctx.dims_mr(d_m);
    let lite = CtxLite { relevance: &ctx.relevance, cutoff: ctx.cutoff };
    let pieces = lite.h_pieces(sigma, d_m)?;

    let eig_mr = herm_eig(sigma)?;
    let s_mr = entropy_bits_from_eigs(&eig_mr.eigenvalues);
    let min_eig = eig_mr.eigenvalues.first().copied().unwrap_or(0.0);

    let sigma_r = partial_trace(sigma, &dims_mr, &[1])?;
    let s_r = entropy_bits_from_eigs(&herm_eig(&sigma_r)?.eigenvalues);
    let marginal_dev = trace_norm_herm(&sigma_r.sub(&ctx.rho_r))?;

    let i_mem = pieces.s_m + s_r - s_mr;
    let i_pred = pieces.s_m + pieces.s_y - pieces.s_my;
    let h_exp = sigma.mul(&pieces.h).trace().re / LN2;
    Ok((
        IterStats {
            lagrangian: i_pred - ctx.alpha * i_mem,
            h_expectation: h_exp,
            energy_violation: (h_exp + i_pred).abs(),
            marginal_dev,
            min_eig,
        },
        pieces,
    ))
}

// ---------------------------------------------------------------------------
// classical memory
// ---------------------------------------------------------------------------

/// One classical-memory update on an ensemble (p_m, sigma_{R|m}).
///
/// Each branch is driven by `exp((1/alpha) Rdual(log sigma_{Y|m} - log sigma_Y))`
/// and the shared normalizer `Z_R = sum_m p_m exp(...)` restores the marginal;
/// new weights are the traces of the unnormalized branches. Branches with
/// weight below 1e-12 are pruned.
pub fn classical_step(
    branches: &[(f64, ComplexMatrix)],
    rho_r: &DensityMatrix,
    relevance: &QuantumChannel,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, ComplexMatrix)>> {
    cfg.check()?;
    let eig_r = rho_r.eig()?;
    let top = eig_r.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let sqrt_rho_r = eig_r.map(|l| if l > cfg.support_cutoff * top { l.sqrt() } else { 0.0 });
    let ctx = Ctx {
        rho_r: rho_r.mat().clone(),
        sqrt_rho_r,
        relevance: relevance.clone(),
        rel_dual: relevance.dual(),
        d_x: relevance.din(),
        d_y: relevance.dout(),
        alpha: cfg.alpha,
        cutoff: cfg.support_cutoff,
    };
    let pieces = classical_pieces(&ctx, branches)?;
    classical_update(&ctx, branches, &pieces)
}

struct ClassicalPieces {
    /// Rdual(log sigma_{Y|m} - log sigma_Y) per live branch (None when pruned).
    exponents: Vec<Option<ComplexMatrix>>,
    s_y: f64,
    /// sum_m p_m S(sigma_{Y|m}) in bits.
    avg_s_y_cond: f64,
}

fn classical_pieces(ctx: &Ctx, branches: &[(f64, ComplexMatrix)]) -> Result<ClassicalPieces> {
    if branches.is_empty() {
        return Err(QibError::EmptyEnsemble);
    }
    let mut sigma_y_total = ComplexMatrix::zeros(ctx.d_y, ctx.d_y);
    let mut y_branches = Vec::with_capacity(branches.len());
    for (p, s) in branches {
        let sy = hermitize(&ctx.relevance.apply(s));
        sigma_y_total = sigma_y_total.add(&sy.scale(Complex::new(*p, 0.0)));
        y_branches.push(sy);
    }
    let eig_y = herm_eig(&sigma_y_total)?;
    let (log_y, _) = spectral_map(&eig_y, SpectralFn::Log, ctx.cutoff)?;
    let s_y = entropy_bits_from_eigs(&eig_y.eigenvalues);

    let mut exponents = Vec::with_capacity(branches.len());
    let mut avg = 0.0;
    for ((p, _), sy) in branches.iter().zip(&y_branches) {
        if *p < BRANCH_PRUNE {
            exponents.push(None);
            continue;
        }
        let eig = herm_eig(sy)?;
        let (log_ym, _) = spectral_map(&eig, SpectralFn::Log, ctx.cutoff)?;
        avg += p * entropy_bits_from_eigs(&eig.eigenvalues);
        exponents.push(Some(ctx.rel_dual.apply(&log_ym.sub(&log_y))));
    }
    Ok(ClassicalPieces { exponents, s_y, avg_s_y_cond: avg })
}

fn classical_update(
    ctx: &Ctx,
    branches: &[(f64, ComplexMatrix)],
    pieces: &ClassicalPieces,
) -> Result<Vec<(f64, ComplexMatrix)>> {
    // global exponent shift across branches (the normalizer cancels it)
    let mut tops = Vec::with_capacity(branches.len());
    let mut eigs = Vec::with_capacity(branches.len());
    for ((p, _), e) in branches.iter().zip(&pieces.exponents) {
        match e {
            Some(a) => {
                let eig = herm_eig(a)?;
                let top = p.ln() + eig.eigenvalues.last().copied().unwrap_or(0.0) / ctx.alpha;
                tops.push(Some(top));
                eigs.push(Some(eig));
            }
            None => {
                tops.push(None);
                eigs.push(None);
            }
        }
    }
    let shift = tops.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(QibError::EmptyEnsemble);
    }

    let mut weighted_half = Vec::with_capacity(branches.len());
    let mut z = ComplexMatrix::zeros(ctx.d_x, ctx.d_x);
    for ((p, _), eig) in branches.iter().zip(&eigs) {
        match eig {
            Some(e) => {
                let lnp = p.ln();
                let t = e.map(|l| (lnp + l / ctx.alpha - shift).exp());
                z = z.add(&t);
                weighted_half.push(Some(e.map(|l| ((lnp + l / ctx.alpha - shift) / 2.0).exp())));
            }
            None => weighted_half.push(None),
        }
    }
    let eig_z = herm_eig(&z)?;
    let (z_inv_sqrt, _) = spectral_map(&eig_z, SpectralFn::InvSqrt, ctx.cutoff)?;
    let s = ctx.sqrt_rho_r.mul(&z_inv_sqrt);

    let mut out = Vec::with_capacity(branches.len());
    let mut total = 0.0;
    for t_half in weighted_half.iter() {
        if let Some(t_half) = t_half {
            // Gram form keeps each branch positive semidefinite
            let c = t_half.mul(&s.dagger());
            let b = hermitize(&c.dagger().mul(&c));
            let w = b.trace().re;
            total += w;
            if w >= BRANCH_PRUNE {
                out.push((w, b.scale(Complex::new(1.0 / w, 0.0))));
            }
        }
    }
    if out.is_empty() {
        return Err(QibError::EmptyEnsemble);
    }
    if !total.is_finite() || (total - 1.0).abs() > 1e-6 {
        return Err(QibError::SingularNormalizer(format!(
            "classical update total weight {total:.6e}"
        )));
    }
    // remove round-off drift in the weights
    for (w, _) in &mut out {
        *w /= total;
    }
    Ok(out)
}

fn classical_stats(
    ctx: &Ctx,
    branches: &[(f64, ComplexMatrix)],
) -> Result<(IterStats, ClassicalPieces)> {
    let pieces = classical_pieces(ctx, branches)?;
    let mut s_r_cond = 0.0; // sum_m p_m S(sigma_{R|m})
    let mut sigma_r = ComplexMatrix::zeros(ctx.d_x, ctx.d_x);
    let mut min_eig = f64::INFINITY;
    let mut h_exp_nats = 0.0;
    for ((p, sm), expo) in branches.iter().zip(&pieces.exponents) {
        let eig = herm_eig(sm)?;
        s_r_cond += p * entropy_bits_from_eigs(&eig.eigenvalues);
        min_eig = min_eig.min(p * eig.eigenvalues.first().copied().unwrap_or(0.0));
        sigma_r = sigma_r.add(&sm.scale(Complex::new(*p, 0.0)));
        if let Some(a) = expo {
            // H block is -(exponent); tr[sigma H] = -sum p tr[sigma_{R|m} A_m]
            h_exp_nats -= p * sm.mul(a).trace().re;
        }
    }
    let s_r = entropy_bits_from_eigs(&herm_eig(&sigma_r)?.eigenvalues);
    let marginal_dev = trace_norm_herm(&sigma_r.sub(&ctx.rho_r))?;
    let i_mem = s_r - s_r_cond;
    let i_pred = pieces.s_y - pieces.avg_s_y_cond;
    let h_exp = h_exp_nats / LN2;
    Ok((
        IterStats {
            lagrangian: i_pred - ctx.alpha * i_mem,
            h_expectation: h_exp,
            energy_violation: (h_exp + i_pred).abs(),
            marginal_dev,
            min_eig,
        },
        pieces,
    ))
}

/// Assemble the block-diagonal sigma_MR of a classical ensemble.
fn assemble_classical(branches: &[(f64, ComplexMatrix)], d_x: usize) -> ComplexMatrix {
    let d_m = branches.len();
    let mut out = ComplexMatrix::zeros(d_m * d_x, d_m * d_x);
    for (m, (p, s)) in branches.iter().enumerate() {
        for a in 0..d_x {
            for b in 0..d_x {
                out[(m * d_x + a, m * d_x + b)] = s[(a, b)] * Complex::new(*p, 0.0);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

fn random_hermitian_noise(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| {
        Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    hermitize(&g).scale(Complex::new(scale, 0.0))
}

/// Clip a Hermitian matrix to the PSD cone and normalize its trace.
fn clip_to_state(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = herm_eig(m)?;
    let clipped = eig.map(|l| l.max(0.0));
    let tr = clipped.trace().re;
    if tr <= 0.0 {
        return Err(QibError::Numerical("state clipped to zero".into()));
    }
    Ok(clipped.scale(Complex::new(1.0 / tr, 0.0)))
}

/// Build the initial solver state: a perturbed warm start when one is given
/// (padded with fresh weight when the memory grew), otherwise the perturbed
/// product (I/d_M) (x) rho_R. One solver step restores the reference marginal
/// exactly, so the perturbation does not need to preserve it.
pub fn make_initial(
    kind: MemoryKind,
    rho_r: &DensityMatrix,
    cfg: &SolverConfig,
    warm_start: Option<&MemoryState>,
) -> Result<MemoryState> {
    let d_m = kind.d_m();
    if d_m == 0 {
        return Err(QibError::DimensionMismatch("d_M must be at least 1".into()));
    }
    let d_x = rho_r.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match kind {
        MemoryKind::Quantum { .. } => {
            let base = match warm_start {
                Some(MemoryState::Quantum { sigma, d_m: old }) => {
                    if *old == d_m {
                        sigma.clone()
                    } else {
                        // embed the old memory block in the larger space
                        let mut padded = ComplexMatrix::zeros(d_m * d_x, d_m * d_x);
                        let keep = (*old).min(d_m);
                        for m1 in 0..keep {
                            for m2 in 0..keep {
                                for a in 0..d_x {
                                    for b in 0..d_x {
                                        padded[(m1 * d_x + a, m2 * d_x + b)] =
                                            sigma[(m1 * d_x + a, m2 * d_x + b)];
                                    }
                                }
                            }
                        }
                        padded
                    }
                }
                Some(MemoryState::Classical { branches }) => {
                    // a classical ensemble is a valid quantum start
                    let mut bs = branches.clone();
                    bs.truncate(d_m);
                    while bs.len() < d_m {
                        bs.push((0.0, rho_r.mat().clone()));
                    }
                    assemble_classical(&bs, d_x)
                }
                None => kron(
                    &ComplexMatrix::identity(d_m)
                        .scale(Complex::new(1.0 / d_m as f64, 0.0)),
                    rho_r.mat(),
                ),
            };
            let noisy = if cfg.perturb_scale > 0.0 {
                clip_to_state(&base.add(&random_hermitian_noise(
                    d_m * d_x,
                    cfg.perturb_scale,
                    &mut rng,
                )))?
            } else {
                clip_to_state(&base)?
            };
            Ok(MemoryState::Quantum { sigma: noisy, d_m })
        }
        MemoryKind::Classical { .. } => {
            let mut branches: Vec<(f64, ComplexMatrix)> = match warm_start {
                Some(MemoryState::Classical { branches }) => {
                    let mut bs = branches.clone();
                    bs.truncate(d_m);
                    while bs.len() < d_m {
                        bs.push((0.0, rho_r.mat().clone()));
                    }
                    bs
                }
                Some(MemoryState::Quantum { .. }) => {
                    return Err(QibError::Numerical(
                        "cannot warm-start a classical memory from a quantum state".into(),
                    ))
                }
                None => (0..d_m).map(|_| (1.0 / d_m as f64, rho_r.mat().clone())).collect(),
            };
            if cfg.perturb_scale > 0.0 {
                for (p, s) in &mut branches {
                    // additive weight noise resurrects pruned branches
                    *p += cfg.perturb_scale * rng.random::<f64>();
                    *s = clip_to_state(&s.add(&random_hermitian_noise(
                        d_x,
                        cfg.perturb_scale,
                        &mut rng,
                    )))?;
                }
            }
            let total: f64 = branches.iter().map(|(p, _)| *p).sum();
            if total <= 0.0 {
                return Err(QibError::EmptyEnsemble);
            }
            for (p, _) in &mut branches {
                *p /= total;
            }
            Ok(MemoryState::Classical { branches })
        }
    }
}

// ---------------------------------------------------------------------------
// the solve loop
// ---------------------------------------------------------------------------

fn state_distance(a: &MemoryState, b: &MemoryState) -> f64 {
    match (a, b) {
        (MemoryState::Quantum { sigma: sa, .. }, MemoryState::Quantum { sigma: sb, .. }) => {
            // sqrt(n) * Frobenius bounds the trace norm from above
            let diff = sa.sub(sb);
            (diff.nrows() as f64).sqrt() * diff.frob_norm()
        }
        (MemoryState::Classical { branches: ba }, MemoryState::Classical { branches: bb }) => {
            if ba.len() != bb.len() {
                return f64::INFINITY;
            }
            ba.iter()
                .zip(bb)
                .map(|((pa, sa), (pb, sb))| {
                    let diff = sa
                        .scale(Complex::new(*pa, 0.0))
                        .sub(&sb.scale(Complex::new(*pb, 0.0)));
                    (diff.nrows() as f64).sqrt() * diff.frob_norm()
                })
                .sum()
        }
        _ => f64::INFINITY,
    }
}

fn true_trace_distance(a: &MemoryState, b: &MemoryState, d_x: usize) -> Result<f64> {
    match (a, b) {
        (MemoryState::Quantum { sigma: sa, .. }, MemoryState::Quantum { sigma: sb, .. }) => {
            trace_norm_herm(&sa.sub(sb))
        }
        (MemoryState::Classical { branches: ba }, MemoryState::Classical { branches: bb }) => {
            let n = ba.len().max(bb.len());
            let mut acc = 0.0;
            for m in 0..n {
                let za = ba
                    .get(m)
                    .map(|(p, s)| s.scale(Complex::new(*p, 0.0)))
                    .unwrap_or_else(|| ComplexMatrix::zeros(d_x, d_x));
                let zb = bb
                    .get(m)
                    .map(|(p, s)| s.scale(Complex::new(*p, 0.0)))
                    .unwrap_or_else(|| ComplexMatrix::zeros(d_x, d_x));
                acc += trace_norm_herm(&za.sub(&zb))?;
            }
            Ok(acc)
        }
        _ => Ok(f64::INFINITY),
    }
}

fn advance(ctx: &Ctx, state: &MemoryState) -> Result<(MemoryState, IterStats)> {
    match state {
        MemoryState::Quantum { sigma, d_m } => {
            let (stats, pieces) = quantum_stats(ctx, sigma, *d_m)?;
            let next = quantum_update(
                sigma,
                &pieces,
                &ctx.sqrt_rho_r,
                ctx.d_x,
                *d_m,
                ctx.alpha,
                ctx.cutoff,
            )?;
            Ok((MemoryState::Quantum { sigma: next, d_m: *d_m }, stats))
        }
        MemoryState::Classical { branches } => {
            let (stats, pieces) = classical_stats(ctx, branches)?;
            let next = classical_update(ctx, branches, &pieces)?;
            Ok((MemoryState::Classical { branches: next }, stats))
        }
    }
}

fn stats_only(ctx: &Ctx, state: &MemoryState) -> Result<IterStats> {
    match state {
        MemoryState::Quantum { sigma, d_m } => Ok(quantum_stats(ctx, sigma, *d_m)?.0),
        MemoryState::Classical { branches } => Ok(classical_stats(ctx, branches)?.0),
    }
}

/// Iterate the self-consistent update from a (warm or cold) start until the
/// Lagrangian increment falls below `tol_l` and the iterate stops moving, or
/// `max_iters` is exhausted. Non-convergence is not an error: the best-effort
/// iterate is returned with `converged = false`.
pub fn solve(
    problem: &Problem,
    kind: MemoryKind,
    cfg: &SolverConfig,
    warm_start: Option<&MemoryState>,
) -> Result<EncodingSolution> {
    solve_with_correlations(problem, kind, cfg, warm_start, None)
}

/// [`solve`], optionally filling the correlation diagnostics of the report.
pub fn solve_with_correlations(
    problem: &Problem,
    kind: MemoryKind,
    cfg: &SolverConfig,
    warm_start: Option<&MemoryState>,
    correlations: Option<&CorrelationOptions>,
) -> Result<EncodingSolution> {
    cfg.check()?;
    let ctx = Ctx::new(problem, cfg)?;
    let rho_r = DensityMatrix::from_parts_unchecked(
        ctx.rho_r.clone(),
        SubsystemDims::single(ctx.d_x),
    );
    let mut state = make_initial(kind, &rho_r, cfg, warm_start)?;
    let mut stats = stats_only(&ctx, &state)?;

    let mut max_energy_violation = stats.energy_violation;
    let mut max_marginal_dev: f64 = 0.0; // post-update iterates only
    let mut min_eigenvalue = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut delta_l = f64::INFINITY;

    for k in 1..=cfg.max_iters {
        let (next, _) = advance(&ctx, &state)?;
        let next_stats = stats_only(&ctx, &next)?;
        let moved = state_distance(&next, &state);
        delta_l = next_stats.lagrangian - stats.lagrangian;
        max_energy_violation = max_energy_violation.max(next_stats.energy_violation);
        max_marginal_dev = max_marginal_dev.max(next_stats.marginal_dev);
        min_eigenvalue = min_eigenvalue.min(next_stats.min_eig);
        state = next;
        stats = next_stats;
        iterations = k;
        if delta_l <= cfg.tol_l && moved <= cfg.tol_sigma {
            converged = true;
            break;
        }
    }

    // fixed-point residual of the returned iterate, in true trace norm
    let (probe, _) = advance(&ctx, &state)?;
    let fixed_point_residual = true_trace_distance(&probe, &state, ctx.d_x)?;

    let d_m = state.d_m();
    let sigma_mat = match &state {
        MemoryState::Quantum { sigma, .. } => sigma.clone(),
        MemoryState::Classical { branches } => assemble_classical(branches, ctx.d_x),
    };
    let sigma_mr =
        DensityMatrix::from_parts_unchecked(sigma_mat, SubsystemDims::new(&[d_m, ctx.d_x])?);
    let report = info::report(&sigma_mr, &ctx.relevance, cfg.alpha, correlations)?;

    Ok(EncodingSolution {
        sigma_mr,
        report,
        d_m,
        iterations,
        converged,
        final_delta_l: delta_l,
        h_expectation: stats.h_expectation,
        max_energy_violation,
        max_marginal_dev,
        min_eigenvalue,
        fixed_point_residual,
        state,
    })
}

/// The optimal encoding as a conditional operator,
/// `E_{M|X} = rho_R^{-1/2} sigma_MR rho_R^{-1/2}` on X (x) M (input first),
/// support-relaxed when rho_R is rank-deficient.
pub fn extract_encoding(
    sol: &EncodingSolution,
    rho_r: &DensityMatrix,
) -> Result<ConditionalOperator> {
    let (swapped, dims) =
        crate::linalg::reorder_factors(sol.sigma_mr.mat(), sol.sigma_mr.dims(), &[1, 0])?;
    let joint = DensityMatrix::from_parts_unchecked(swapped, dims);
    crate::quantum::channel_from_state(&joint, rho_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_ib_step, ClassicalEncoder};
    use crate::problems::{even_process, phase_damping_problem};
    use crate::quantum::tests::{random_channel, random_density};
    use crate::quantum::validate_state;

    fn reference_state(problem: &Problem) -> DensityMatrix {
        purify(problem.rho_x()).unwrap().projector().marginal(&[1]).unwrap()
    }

    fn random_sigma_mr(d_m: usize, d_x: usize, seed: u64) -> DensityMatrix {
        random_density(d_m * d_x, seed)
            .with_dims(SubsystemDims::new(&[d_m, d_x]).unwrap())
            .unwrap()
    }

    #[test]
    fn h_operator_vanishes_on_products() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        let sigma_m = random_density(2, 41);
        let sigma = validate_state(
            &kron(sigma_m.mat(), rho_r.mat()),
            &SubsystemDims::new(&[2, 2]).unwrap(),
        )
        .unwrap();
        let h = h_operator(&sigma, problem.relevance()).unwrap();
        assert!(h.max_abs() < 1e-9, "H = 0 for product sigma_MY, got {:.3e}", h.max_abs());
    }

    #[test]
    fn h_operator_energy_identity_random_states() {
        for seed in 0..20u64 {
            let ch = random_channel(3, 2, 2, 4000 + seed);
            let sigma = random_sigma_mr(2, 3, 4100 + seed);
            let h = h_operator(&sigma, &ch).unwrap();
            let h_exp = sigma.mat().mul(&h).trace().re / LN2;
            let rep = info::report(&sigma, &ch, 1.0, None).unwrap();
            assert!(
                (h_exp + rep.i_pred).abs() < 1e-7,
                "seed {seed}: <H> = {h_exp}, i_pred = {}",
                rep.i_pred
            );
        }
    }

    #[test]
    fn h_operator_block_diagonal_for_classical_relevance() {
        let problem = even_process(2, 1).unwrap();
        let d_x = problem.d_x();
        let sigma = random_sigma_mr(2, d_x, 4300);
        let h = h_operator(&sigma, problem.relevance()).unwrap();
        // off-diagonal blocks in the reference basis must vanish
        for m1 in 0..2 {
            for m2 in 0..2 {
                for x1 in 0..d_x {
                    for x2 in 0..d_x {
                        if x1 != x2 {
                            let v = h[(m1 * d_x + x1, m2 * d_x + x2)].norm();
                            assert!(v < 1e-9, "R-off-diagonal H block entry {v:.2e}");
                        }
                    }
                }
            }
        }
        // blocks match log rho_M - sum_y p(y|x) log rho_{M|y} computed directly
        let cp = problem.classical().unwrap();
        let dims = sigma.dims();
        let sigma_m = partial_trace(sigma.mat(), dims, &[0]).unwrap();
        let log_m = crate::linalg::matrix_function(&sigma_m, SpectralFn::Log, 1e-12).unwrap();
        for x in 0..d_x {
            // <x|sigma|x> on M
            let mut block = ComplexMatrix::zeros(2, 2);
            for m1 in 0..2 {
                for m2 in 0..2 {
                    block[(m1, m2)] = sigma.mat()[(m1 * d_x + x, m2 * d_x + x)];
                }
            }
            let mut expect = log_m.clone();
            for y in 0..problem.d_y() {
                let pyx = cp.p_y_given_x()[y][x];
                if pyx == 0.0 {
                    continue;
                }
                // rho_{M|y} = sum_x p(y|x) <x|sigma|x> / p(y)
                let mut num = ComplexMatrix::zeros(2, 2);
                for xx in 0..d_x {
                    let w = cp.p_y_given_x()[y][xx];
                    if w == 0.0 {
                        continue;
                    }
                    for m1 in 0..2 {
                        for m2 in 0..2 {
                            num[(m1, m2)] += sigma.mat()[(m1 * d_x + xx, m2 * d_x + xx)]
                                * Complex::new(w, 0.0);
                        }
                    }
                }
                let py = num.trace().re;
                let cond = num.scale(Complex::new(1.0 / py, 0.0));
                let log_cond =
                    crate::linalg::matrix_function(&hermitize(&cond), SpectralFn::Log, 1e-12)
                        .unwrap();
                expect = expect.sub(&log_cond.scale(Complex::new(pyx, 0.0)));
            }
            for m1 in 0..2 {
                for m2 in 0..2 {
                    let got = h[(m1 * d_x + x, m2 * d_x + x)];
                    let want = expect[(m1, m2)];
                    assert!(
                        (got - want).norm() < 1e-8,
                        "block x={x}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn quantum_step_large_alpha_gives_product() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        let sigma = random_sigma_mr(2, 2, 4400);
        // project the start onto the right marginal first so the product
        // comparison uses its own sigma_M
        let cfg = SolverConfig::default().with_alpha(1e12);
        let out = quantum_step(&sigma, &rho_r, problem.relevance(), &cfg).unwrap();
        let sigma_m = out.marginal(&[0]).unwrap();
        let expect = kron(sigma_m.mat(), rho_r.mat());
        assert!(
            out.mat().sub(&expect).max_abs() < 1e-6,
            "large alpha maps onto sigma_M (x) rho_R"
        );
    }

    #[test]
    fn quantum_step_restores_marginal_by_construction() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        for seed in 0..4u64 {
            let sigma = random_sigma_mr(2, 2, 4500 + seed);
            let cfg = SolverConfig::default().with_alpha(0.7);
            let out = quantum_step(&sigma, &rho_r, problem.relevance(), &cfg).unwrap();
            let marg = out.marginal(&[1]).unwrap();
            let dev = trace_norm_herm(&marg.mat().sub(rho_r.mat())).unwrap();
            assert!(dev < 1e-8, "marginal deviation {dev:.3e}");
            let min = out.eig().unwrap().eigenvalues[0];
            assert!(min > -1e-9);
        }
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let cfg = SolverConfig::default().with_alpha(0.3).with_seed(5);
        let sol = solve(&problem, MemoryKind::Quantum { d_m: 2 }, &cfg, None).unwrap();
        assert!(sol.converged, "did not converge in {} iters", sol.iterations);
        assert!(sol.fixed_point_residual < 1e-7, "residual {:.3e}", sol.fixed_point_residual);
        assert!(sol.max_marginal_dev < 1e-8);
        assert!(sol.min_eigenvalue > -1e-9);
        assert!(sol.max_energy_violation < 1e-7);
        assert!((sol.h_expectation + sol.report.i_pred).abs() < 1e-7);
    }

    #[test]
    fn solve_large_alpha_is_uncorrelated() {
        for kind in [MemoryKind::Quantum { d_m: 2 }, MemoryKind::Classical { d_m: 2 }] {
            let problem = phase_damping_problem(0.5, 0.3).unwrap();
            let cfg = SolverConfig::default().with_alpha(10.0).with_seed(9);
            let sol = solve(&problem, kind, &cfg, None).unwrap();
            assert!(sol.converged);
            assert!(
                sol.report.i_mem + sol.report.i_pred <= 1e-6,
                "{kind:?}: i_mem + i_pred = {}",
                sol.report.i_mem + sol.report.i_pred
            );
        }
    }

    #[test]
    fn classical_step_single_branch_returns_reference() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        let branches = vec![(1.0, rho_r.mat().clone())];
        let cfg = SolverConfig::default().with_alpha(0.5);
        let out = classical_step(&branches, &rho_r, problem.relevance(), &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].0 - 1.0).abs() < 1e-12);
        assert!(out[0].1.sub(rho_r.mat()).max_abs() < 1e-10);
    }

    #[test]
    fn classical_step_matches_classical_ib_on_diagonal_problems() {
        let problem = even_process(2, 1).unwrap();
        let cp = problem.classical().unwrap();
        let rho_r = reference_state(&problem);
        let d_x = problem.d_x();
        let alpha = 0.35;

        // random diagonal encoder as ensemble and as p(m, x)
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d_m = 2;
        let mut p_mx = vec![vec![0.0; d_x]; d_m];
        for x in 0..d_x {
            let mut ws: Vec<f64> = (0..d_m).map(|_| rng.random::<f64>() + 0.1).collect();
            let s: f64 = ws.iter().sum();
            for m in 0..d_m {
                ws[m] /= s;
                p_mx[m][x] = cp.p_x()[x] * ws[m];
            }
        }
        let enc = ClassicalEncoder::new(p_mx.clone(), cp).unwrap();
        let next_enc = classical_ib_step(&enc, cp, alpha);

        let branches: Vec<(f64, ComplexMatrix)> = (0..d_m)
            .map(|m| {
                let pm: f64 = p_mx[m].iter().sum();
                let diag: Vec<f64> = p_mx[m].iter().map(|v| v / pm).collect();
                (pm, ComplexMatrix::diag(&diag))
            })
            .collect();
        let cfg = SolverConfig::default().with_alpha(alpha);
        let next = classical_step(&branches, &rho_r, problem.relevance(), &cfg).unwrap();

        for (m, (pm, s)) in next.iter().enumerate() {
            for x in 0..d_x {
                let got = pm * s[(x, x)].re;
                let want = next_enc.p_mx()[m][x];
                assert!(
                    (got - want).abs() < 1e-9,
                    "p(m={m}, x={x}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn classical_converged_ensemble_is_fixed_point() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let cfg = SolverConfig::default().with_alpha(0.4).with_seed(21);
        let sol = solve(&problem, MemoryKind::Classical { d_m: 2 }, &cfg, None).unwrap();
        assert!(sol.converged);
        assert!(sol.fixed_point_residual < 1e-7, "residual {:.3e}", sol.fixed_point_residual);
        assert!(sol.max_energy_violation < 1e-7);
    }

    #[test]
    fn make_initial_cold_start_without_noise_is_exact_product() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        let mut cfg = SolverConfig::default();
        cfg.perturb_scale = 0.0;
        let state = make_initial(MemoryKind::Quantum { d_m: 3 }, &rho_r, &cfg, None).unwrap();
        match state {
            MemoryState::Quantum { sigma, .. } => {
                let expect = kron(
                    &ComplexMatrix::identity(3).scale(Complex::new(1.0 / 3.0, 0.0)),
                    rho_r.mat(),
                );
                assert!(sigma.sub(&expect).max_abs() < 1e-12);
            }
            _ => panic!("expected quantum state"),
        }
    }

    #[test]
    fn make_initial_is_valid_for_any_seed() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        for seed in 0..6u64 {
            let cfg = SolverConfig::default().with_seed(seed);
            let state =
                make_initial(MemoryKind::Quantum { d_m: 2 }, &rho_r, &cfg, None).unwrap();
            if let MemoryState::Quantum { sigma, .. } = state {
                let v = validate_state(&sigma, &SubsystemDims::new(&[2, 2]).unwrap());
                assert!(v.is_ok(), "seed {seed}");
            }
        }
    }

    #[test]
    fn different_seeds_reach_the_same_lagrangian() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let cfg = SolverConfig::default().with_alpha(0.45);
        let a = solve(&problem, MemoryKind::Quantum { d_m: 2 }, &cfg.clone().with_seed(1), None)
            .unwrap();
        let b = solve(&problem, MemoryKind::Quantum { d_m: 2 }, &cfg.with_seed(2), None).unwrap();
        assert!(a.converged && b.converged);
        assert!(
            (a.report.lagrangian - b.report.lagrangian).abs() < 1e-6,
            "L: {} vs {}",
            a.report.lagrangian,
            b.report.lagrangian
        );
    }

    #[test]
    fn extract_encoding_product_and_round_trip() {
        let problem = phase_damping_problem(0.5, 0.3).unwrap();
        let rho_r = reference_state(&problem);
        let cfg = SolverConfig::default().with_alpha(10.0).with_seed(3);
        let sol = solve(&problem, MemoryKind::Quantum { d_m: 2 }, &cfg, None).unwrap();
        let cop = extract_encoding(&sol, &rho_r).unwrap();
        // product solution: E = I_X (x) rho_M on the support
        let rho_m = sol.sigma_mr.marginal(&[0]).unwrap();
        let expect = kron(&ComplexMatrix::identity(2), rho_m.mat());
        assert!(
            cop.mat().sub(&expect).max_abs() < 1e-5,
            "product encoding deviates by {:.3e}",
            cop.mat().sub(&expect).max_abs()
        );

        // round trip through the state/channel correspondence at moderate alpha
        let cfg = SolverConfig::default().with_alpha(0.4).with_seed(3);
        let sol = solve(&problem, MemoryKind::Quantum { d_m: 2 }, &cfg, None).unwrap();
        let cop = extract_encoding(&sol, &rho_r).unwrap();
        let joint = crate::quantum::state_from_channel(&rho_r, &cop).unwrap();
        let (back, _) =
            crate::linalg::reorder_factors(joint.mat(), joint.dims(), &[1, 0]).unwrap();
        assert!(back.sub(sol.sigma_mr.mat()).max_abs() < 1e-7);
    }
}
