//! Entropic and correlation functionals: von Neumann entropy, mutual
//! information, memory / predictive power of an encoding, two-qubit
//! concurrence and quantum discord, and the information-plane bounds.
//!
//! All information quantities are reported in bits; matrix logarithms inside
//! the solver stay in nats and conversion happens only here.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QibError, Result};
use crate::linalg::{
    herm_eig, hermitize, kron, ComplexMatrix, SubsystemDims, C64, ZERO,
};
use crate::problems::Problem;
use crate::quantum::{purify, AncillaSide, DensityMatrix, QuantumChannel};

pub const LN2: f64 = std::f64::consts::LN_2;

/// Eigenvalues below this are treated as exactly zero inside entropies.
pub const ENTROPY_CLIP: f64 = 1e-14;

/// Shannon entropy in bits of a clipped spectrum.
pub fn entropy_bits_from_eigs(eigs: &[f64]) -> f64 {
    -eigs.iter().filter(|&&l| l > ENTROPY_CLIP).map(|&l| l * l.log2()).sum::<f64>()
}

/// Von Neumann entropy S(rho) in bits.
pub fn entropy_bits(rho: &DensityMatrix) -> Result<f64> {
    Ok(entropy_bits_from_eigs(&rho.eig()?.eigenvalues))
}

/// Mutual information in bits across the bipartition after the first `cut`
/// factors: I = S(A) + S(B) - S(AB).
pub fn mutual_information_bits(rho_ab: &DensityMatrix, cut: usize) -> Result<f64> {
    let nf = rho_ab.dims().nfactors();
    if cut == 0 || cut >= nf {
        return Err(QibError::DimensionMismatch(format!("cut {cut} invalid for {nf} factors")));
    }
    let left: Vec<usize> = (0..cut).collect();
    let right: Vec<usize> = (cut..nf).collect();
    let s_a = entropy_bits(&rho_ab.marginal(&left)?)?;
    let s_b = entropy_bits(&rho_ab.marginal(&right)?)?;
    let s_ab = entropy_bits(rho_ab)?;
    Ok(s_a + s_b - s_ab)
}

/// tr[rho^2], computable as the squared Frobenius norm of a Hermitian matrix.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let f = rho.mat().frob_norm();
    f * f
}

/// Correlation diagnostics configuration for [`report`].
#[derive(Clone, Debug)]
pub struct CorrelationOptions {
    /// Factor split of the reference system R (e.g. `[2, 2]` when R holds a
    /// relevant and a redundant qubit).
    pub r_dims: SubsystemDims,
    /// Which R factor carries the relevant information; all others are traced
    /// out before two-qubit diagnostics.
    pub relevant_factor: usize,
    /// Random basis restarts for discord minimization when d_M > 2.
    pub restarts: usize,
    /// Refinement iterations for the discord minimizer.
    pub refine_iters: usize,
    pub seed: u64,
}

impl CorrelationOptions {
    pub fn for_r_dims(r_dims: SubsystemDims, relevant_factor: usize) -> Self {
        Self { r_dims, relevant_factor, restarts: 50, refine_iters: 200, seed: 1 }
    }
}

/// Information-theoretic summary of an encoding state sigma_MR.
#[derive(Clone, Debug, serde::Serialize)]
pub struct InfoReport {
    /// I[M:R] in bits.
    pub i_mem: f64,
    /// I[M:Y] in bits, with Y the relevance-channel output.
    pub i_pred: f64,
    pub s_m: f64,
    pub s_r: f64,
    pub s_mr: f64,
    /// S[R|M] = S(MR) - S(M); negative values signal a non-classical memory.
    pub s_cond_r_given_m: f64,
    pub purity: f64,
    /// i_pred - alpha * i_mem.
    pub lagrangian: f64,
    pub concurrence_mr: Option<f64>,
    pub concurrence_my: Option<f64>,
    pub discord_r_given_m: Option<f64>,
    pub discord_y_given_m: Option<f64>,
}

/// Compute the full [`InfoReport`] for an encoding state.
///
/// `sigma_mr` must carry dims `[d_M, d_X]` with the relevance channel acting
/// on the second factor. Correlation diagnostics are filled only when
/// `correlations` is given; concurrences additionally need two-qubit shapes.
pub fn report(
    sigma_mr: &DensityMatrix,
    relevance: &QuantumChannel,
    alpha: f64,
    correlations: Option<&CorrelationOptions>,
) -> Result<InfoReport> {
    if sigma_mr.dims().nfactors() != 2 {
        return Err(QibError::DimensionMismatch("sigma_MR must have factors [d_M, d_X]".into()));
    }
    let (d_m, d_x) = (sigma_mr.dims().dims()[0], sigma_mr.dims().dims()[1]);
    if relevance.din() != d_x {
        return Err(QibError::DimensionMismatch(format!(
            "relevance channel input {} vs reference factor {}",
            relevance.din(),
            d_x
        )));
    }
    let r_hat = relevance.extended(d_m, AncillaSide::Left);
    let sigma_my_mat = hermitize(&r_hat.apply(sigma_mr.mat()));
    let sigma_my = DensityMatrix::from_parts_unchecked(
        sigma_my_mat,
        SubsystemDims::new(&[d_m, relevance.dout()])?,
    );

    let s_m = entropy_bits(&sigma_mr.marginal(&[0])?)?;
    let s_r = entropy_bits(&sigma_mr.marginal(&[1])?)?;
    let s_mr = entropy_bits(sigma_mr)?;
    let s_y = entropy_bits(&sigma_my.marginal(&[1])?)?;
    let s_my = entropy_bits(&sigma_my)?;
    let i_mem = s_m + s_r - s_mr;
    let i_pred = s_m + s_y - s_my;

    let mut rep = InfoReport {
        i_mem,
        i_pred,
        s_m,
        s_r,
        s_mr,
        s_cond_r_given_m: s_mr - s_m,
        purity: purity(sigma_mr),
        lagrangian: i_pred - alpha * i_mem,
        concurrence_mr: None,
        concurrence_my: None,
        discord_r_given_m: None,
        discord_y_given_m: None,
    };

    if let Some(opts) = correlations {
        if opts.r_dims.total() != d_x || opts.relevant_factor >= opts.r_dims.nfactors() {
            return Err(QibError::DimensionMismatch(format!(
                "correlation r_dims {:?} do not match reference dim {d_x}",
                opts.r_dims.dims()
            )));
        }
        // sigma on M (x) R_relevant, tracing out the other R factors
        let mut full_dims = vec![d_m];
        full_dims.extend_from_slice(opts.r_dims.dims());
        let split = sigma_mr.with_dims(SubsystemDims::new(&full_dims)?)?;
        let m_rel = split.marginal(&[0, 1 + opts.relevant_factor])?;
        let d_rel = opts.r_dims.dims()[opts.relevant_factor];

        if d_m == 2 && d_rel == 2 {
            rep.concurrence_mr = Some(concurrence(&m_rel)?);
        }
        if d_m == 2 && relevance.dout() == 2 {
            rep.concurrence_my = Some(concurrence(&sigma_my)?);
        }
        rep.discord_r_given_m =
            Some(discord(&m_rel, 0, opts.restarts, opts.refine_iters, opts.seed)?);
        rep.discord_y_given_m =
            Some(discord(&sigma_my, 0, opts.restarts, opts.refine_iters, opts.seed)?);
    }
    Ok(rep)
}

/// Two-qubit concurrence: max(0, l1 - l2 - l3 - l4) of the eigenvalues, in
/// decreasing order, of sqrt(sqrt(rho) rho_tilde sqrt(rho)) with
/// rho_tilde = (sy (x) sy) rho* (sy (x) sy).
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 || rho.dims().nfactors() != 2 {
        return Err(QibError::DimensionMismatch("concurrence needs a 2x2-qubit state".into()));
    }
    let sy = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => Complex::new(0.0, -1.0),
        (1, 0) => Complex::new(0.0, 1.0),
        _ => ZERO,
    });
    let syy = kron(&sy, &sy);
    let rho_tilde = syy.mul(&rho.mat().conj()).mul(&syy);
    let sqrt_rho = rho.eig()?.map(|l| l.max(0.0).sqrt());
    let t = hermitize(&sqrt_rho.mul(&rho_tilde).mul(&sqrt_rho));
    let mut lams: Vec<f64> = herm_eig(&t)?.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    lams.reverse();
    Ok((lams[0] - lams[1] - lams[2] - lams[3]).max(0.0))
}

/// Partial inner product <u| rho |u> over the measured (first) factor of a
/// bipartite state: returns a d_A x d_A block.
fn conditional_block(rho: &ComplexMatrix, d_m: usize, d_a: usize, u: &[C64]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d_a, d_a);
    for m1 in 0..d_m {
        let c1 = u[m1].conj();
        if c1 == ZERO {
            continue;
        }
        for m2 in 0..d_m {
            let w = c1 * u[m2];
            if w == ZERO {
                continue;
            }
            for a in 0..d_a {
                for b in 0..d_a {
                    out[(a, b)] += w * rho[(m1 * d_a + a, m2 * d_a + b)];
                }
            }
        }
    }
    out
}

/// Average conditional entropy sum_m p(m) S(rho_{A|m}) for the measurement
/// basis given by `basis`.
fn avg_conditional_entropy(
    rho: &ComplexMatrix,
    d_m: usize,
    d_a: usize,
    basis: &[Vec<C64>],
) -> Result<f64> {
    let mut acc = 0.0;
    for u in basis {
        let block = hermitize(&conditional_block(rho, d_m, d_a, u));
        let p = block.trace().re;
        if p < 1e-14 {
            continue;
        }
        let eigs = herm_eig(&block)?.eigenvalues;
        let norm: Vec<f64> = eigs.iter().map(|&l| (l / p).max(0.0)).collect();
        acc += p * entropy_bits_from_eigs(&norm);
    }
    Ok(acc)
}

fn bloch_basis(theta: f64, phi: f64) -> Vec<Vec<C64>> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e = Complex::from_polar(1.0, phi);
    vec![vec![Complex::new(c, 0.0), e * s], vec![Complex::new(s, 0.0), -e * c]]
}

/// Orthonormalize the columns of a random Gaussian matrix (modified
/// Gram-Schmidt); Haar-like for the purposes of a multi-start search.
fn random_orthonormal_basis(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    loop {
        let mut cols: Vec<Vec<C64>> = (0..d)
            .map(|_| {
                (0..d)
                    .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect()
            })
            .collect();
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let proj: C64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a.conj() * b).sum();
                let cj = cols[j].clone();
                for (x, y) in cols[i].iter_mut().zip(&cj) {
                    *x -= proj * y;
                }
            }
            let norm: f64 = cols[i].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for x in &mut cols[i] {
                *x /= norm;
            }
        }
        if ok {
            return cols;
        }
    }
}

/// Mix columns i and j of a basis by a complex Givens rotation.
fn givens_mix(basis: &[Vec<C64>], i: usize, j: usize, t: f64, phi: f64) -> Vec<Vec<C64>> {
    let mut out = basis.to_vec();
    let (c, s) = (t.cos(), t.sin());
    let e = Complex::from_polar(1.0, phi);
    for k in 0..basis[i].len() {
        let (a, b) = (basis[i][k], basis[j][k]);
        out[i][k] = a * c + b * e * s;
        out[j][k] = -a * e.conj() * s + b * c;
    }
    out
}

/// Quantum discord D[A|M] of a bipartite state, measuring the chosen factor
/// with rank-one projectors:
/// `S(rho_M) - S(rho_MA) + min over bases sum_m p(m) S(rho_{A|m})`.
///
/// The minimization is a best-effort upper bound: a 64x64 Bloch grid plus
/// coordinate descent with step halving when the measured system is a qubit,
/// and `restarts` random orthonormal bases refined by pairwise rotations
/// otherwise. Values are clipped to zero from below; a result below -1e-6 is
/// reported as a numerical failure.
pub fn discord(
    rho: &DensityMatrix,
    measured_factor: usize,
    restarts: usize,
    refine_iters: usize,
    seed: u64,
) -> Result<f64> {
    if rho.dims().nfactors() != 2 {
        return Err(QibError::DimensionMismatch("discord needs a bipartite state".into()));
    }
    let work;
    let rho = if measured_factor == 0 {
        rho
    } else {
        let (m, d) = crate::linalg::reorder_factors(rho.mat(), rho.dims(), &[1, 0])?;
        work = DensityMatrix::from_parts_unchecked(m, d);
        &work
    };
    let (d_m, d_a) = (rho.dims().dims()[0], rho.dims().dims()[1]);
    let s_m = entropy_bits(&rho.marginal(&[0])?)?;
    let s_ma = entropy_bits(rho)?;
    let mat = rho.mat();

    let mut best = f64::INFINITY;
    if d_m == 1 {
        best = avg_conditional_entropy(mat, d_m, d_a, &[vec![crate::linalg::ONE]])?;
    } else if d_m == 2 {
        // coarse Bloch grid, then coordinate descent with step halving
        let n = 64;
        let mut arg = (0.0f64, 0.0f64);
        for it in 0..n {
            let theta = std::f64::consts::PI * (it as f64 + 0.5) / n as f64;
            for ip in 0..n {
                let phi = 2.0 * std::f64::consts::PI * ip as f64 / n as f64;
                let v = avg_conditional_entropy(mat, d_m, d_a, &bloch_basis(theta, phi))?;
                if v < best {
                    best = v;
                    arg = (theta, phi);
                }
            }
        }
        let mut step = (std::f64::consts::PI / n as f64, 2.0 * std::f64::consts::PI / n as f64);
        for _ in 0..refine_iters {
            let mut improved = false;
            for (dt, dp) in [(step.0, 0.0), (-step.0, 0.0), (0.0, step.1), (0.0, -step.1)] {
                let cand = (arg.0 + dt, arg.1 + dp);
                let v = avg_conditional_entropy(mat, d_m, d_a, &bloch_basis(cand.0, cand.1))?;
                if v < best - 1e-15 {
                    best = v;
                    arg = cand;
                    improved = true;
                }
            }
            if !improved {
                step = (step.0 / 2.0, step.1 / 2.0);
                if step.0 < 1e-8 {
                    break;
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = [0.3, -0.3];
        let phases = [0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI];
        for _ in 0..restarts.max(1) {
            let mut basis = random_orthonormal_basis(d_m, &mut rng);
            let mut val = avg_conditional_entropy(mat, d_m, d_a, &basis)?;
            let mut scale = 1.0f64;
            for _ in 0..refine_iters {
                let mut improved = false;
                for i in 0..d_m {
                    for j in (i + 1)..d_m {
                        for &t in &angles {
                            for &p in &phases {
                                let cand = givens_mix(&basis, i, j, t * scale, p);
                                let v = avg_conditional_entropy(mat, d_m, d_a, &cand)?;
                                if v < val - 1e-15 {
                                    val = v;
                                    basis = cand;
                                    improved = true;
                                }
                            }
                        }
                    }
                }
                if !improved {
                    scale /= 2.0;
                    if scale < 1e-6 {
                        break;
                    }
                }
            }
            best = best.min(val);
        }
    }

    let d = s_m - s_ma + best;
    if d < -1e-6 {
        return Err(QibError::Numerical(format!("discord lower than -1e-6: {d:.3e}")));
    }
    Ok(d.max(0.0))
}

/// Problem-level bounds on the information plane.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Bounds {
    /// 2 S[X]: the memory of a purification, binding for any memory.
    pub mem_max_quantum: f64,
    /// S[X]: binds classical memories only.
    pub mem_max_classical: f64,
    /// Predictive power of a purification, binding for any memory.
    pub pred_max: f64,
}

/// Compute the three information-plane bounds of a problem.
pub fn bounds(problem: &Problem) -> Result<Bounds> {
    let s_x = entropy_bits(problem.rho_x())?;
    let psi = purify(problem.rho_x())?;
    let ext = problem.relevance().extended(problem.d_x(), AncillaSide::Left);
    let xy = hermitize(&ext.apply(psi.projector().mat()));
    let xy = DensityMatrix::from_parts_unchecked(
        xy,
        SubsystemDims::new(&[problem.d_x(), problem.relevance().dout()])?,
    );
    let pred_max = mutual_information_bits(&xy, 1)?;
    Ok(Bounds { mem_max_quantum: 2.0 * s_x, mem_max_classical: s_x, pred_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::quantum::tests::{phase_damping, random_channel, random_density};
    use crate::quantum::{basis_product, validate_state};

    fn bell() -> DensityMatrix {
        let s = 0.5f64.sqrt();
        let v = [Complex::new(s, 0.0), ZERO, ZERO, Complex::new(s, 0.0)];
        validate_state(&ComplexMatrix::outer(&v, &v), &SubsystemDims::new(&[2, 2]).unwrap())
            .unwrap()
    }

    fn join_dims(rho: &DensityMatrix, dims: &[usize]) -> DensityMatrix {
        rho.with_dims(SubsystemDims::new(dims).unwrap()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let mixed =
            validate_state(&ComplexMatrix::diag(&[0.5, 0.5]), &SubsystemDims::single(2)).unwrap();
        assert!((entropy_bits(&mixed).unwrap() - 1.0).abs() < 1e-12);

        let v = [ONE, ZERO];
        let pure =
            validate_state(&ComplexMatrix::outer(&v, &v), &SubsystemDims::single(2)).unwrap();
        assert!(entropy_bits(&pure).unwrap().abs() < 1e-12);

        // phase-damping initial data: eigenvalues {0.85, 0.15}
        let rho = validate_state(&ComplexMatrix::diag(&[0.85, 0.15]), &SubsystemDims::single(2))
            .unwrap();
        let s = entropy_bits(&rho).unwrap();
        let h2 = -(0.85f64.log2() * 0.85 + 0.15f64.log2() * 0.15);
        assert!((s - h2).abs() < 1e-12);
        assert!((s - 0.61).abs() < 2e-3, "S[X] ~ 0.61, got {s}");
    }

    #[test]
    fn mutual_information_examples() {
        let a = random_density(2, 1);
        let b = random_density(3, 2);
        let prod =
            validate_state(&kron(a.mat(), b.mat()), &SubsystemDims::new(&[2, 3]).unwrap()).unwrap();
        assert!(mutual_information_bits(&prod, 1).unwrap().abs() < 1e-10);

        assert!((mutual_information_bits(&bell(), 1).unwrap() - 2.0).abs() < 1e-10);

        // perfectly correlated classical bits
        let mut m = ComplexMatrix::zeros(4, 4);
        m[(0, 0)] = Complex::new(0.5, 0.0);
        m[(3, 3)] = Complex::new(0.5, 0.0);
        let cc = validate_state(&m, &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        assert!((mutual_information_bits(&cc, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_product_state_is_uncorrelated() {
        let rho_m = random_density(2, 11);
        let rho_r = random_density(2, 12);
        let sigma = join_dims(
            &validate_state(
                &kron(rho_m.mat(), rho_r.mat()),
                &SubsystemDims::new(&[2, 2]).unwrap(),
            )
            .unwrap(),
            &[2, 2],
        );
        let ch = phase_damping(0.5);
        let rep = report(&sigma, &ch, 1.0, None).unwrap();
        assert!(rep.i_mem.abs() < 1e-9);
        assert!(rep.i_pred.abs() < 1e-9);
        assert!((rep.lagrangian - (rep.i_pred - rep.i_mem)).abs() < 1e-12);
    }

    #[test]
    fn report_purification_with_identity_relevance_doubles_entropy() {
        let rho = random_density(3, 21);
        let psi = purify(&rho).unwrap();
        let sigma = psi.projector();
        let rep = report(&sigma, &QuantumChannel::identity(3), 0.5, None).unwrap();
        let s = entropy_bits(&rho).unwrap();
        assert!((rep.i_mem - 2.0 * s).abs() < 1e-9);
        assert!((rep.i_pred - 2.0 * s).abs() < 1e-9);
        assert!(rep.i_pred <= rep.i_mem + 1e-7);
    }

    #[test]
    fn data_processing_on_random_states() {
        for seed in 0..6u64 {
            let sigma = join_dims(&random_density(6, 600 + seed), &[2, 3]);
            let ch = random_channel(3, 2, 2, 640 + seed);
            let rep = report(&sigma, &ch, 1.0, None).unwrap();
            assert!(rep.i_pred <= rep.i_mem + 1e-7, "seed {seed}");
            assert!(rep.i_mem >= -1e-9 && rep.i_pred >= -1e-9);
        }
    }

    #[test]
    fn araki_lieb_and_subadditivity() {
        for seed in 0..8u64 {
            let rho = join_dims(&random_density(6, 700 + seed), &[2, 3]);
            let sa = entropy_bits(&rho.marginal(&[0]).unwrap()).unwrap();
            let sb = entropy_bits(&rho.marginal(&[1]).unwrap()).unwrap();
            let sab = entropy_bits(&rho).unwrap();
            assert!(sab <= sa + sb + 1e-7);
            assert!(sab >= (sa - sb).abs() - 1e-7);
        }
    }

    #[test]
    fn purity_matches_spectrum() {
        for seed in 0..4u64 {
            let rho = random_density(4, 800 + seed);
            let p = purity(&rho);
            let via_eigs: f64 = rho.eig().unwrap().eigenvalues.iter().map(|l| l * l).sum();
            assert!((p - via_eigs).abs() < 1e-12);
            assert!(p <= 1.0 + 1e-12 && p >= 0.25 - 1e-12);
        }
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&bell()).unwrap() - 1.0).abs() < 1e-10);

        let a = basis_product(&[2, 2], &[0, 1]);
        let prod =
            validate_state(&ComplexMatrix::outer(&a, &a), &SubsystemDims::new(&[2, 2]).unwrap())
                .unwrap();
        assert!(concurrence(&prod).unwrap() < 1e-10);

        // Werner state at p = 1/2: concurrence (3p-1)/2 = 1/4
        let p = 0.5;
        let w = bell()
            .mat()
            .scale(Complex::new(p, 0.0))
            .add(&ComplexMatrix::identity(4).scale(Complex::new((1.0 - p) / 4.0, 0.0)));
        let w = validate_state(&w, &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        assert!((concurrence(&w).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn discord_examples() {
        // classical-quantum state: measuring in the |m> basis attains zero
        let s0 = random_density(3, 901);
        let s1 = random_density(3, 902);
        let mut m = ComplexMatrix::zeros(6, 6);
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] = s0.mat()[(a, b)] * Complex::new(0.4, 0.0);
                m[(3 + a, 3 + b)] = s1.mat()[(a, b)] * Complex::new(0.6, 0.0);
            }
        }
        let cq = validate_state(&m, &SubsystemDims::new(&[2, 3]).unwrap()).unwrap();
        let d = discord(&cq, 0, 20, 100, 7).unwrap();
        assert!(d < 1e-6, "cq state has zero discord, got {d}");
        // conditional entropy of R given a classical M is non-negative
        let s_m = entropy_bits(&cq.marginal(&[0]).unwrap()).unwrap();
        let s_mr = entropy_bits(&cq).unwrap();
        assert!(s_mr - s_m >= -1e-9);

        let a = random_density(2, 903);
        let b = random_density(2, 904);
        let prod =
            validate_state(&kron(a.mat(), b.mat()), &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        assert!(discord(&prod, 0, 10, 50, 7).unwrap() < 1e-8);

        let d = discord(&bell(), 0, 10, 50, 7).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "Bell discord 1 bit, got {d}");
    }

    #[test]
    fn discord_invariant_under_local_unitary_on_unmeasured_factor() {
        let rho = join_dims(&random_density(4, 905), &[2, 2]);
        let d0 = discord(&rho, 0, 10, 100, 7).unwrap();
        // local unitary exp(i sx t) on the A side
        let t = 0.7f64;
        let u = ComplexMatrix::from_fn(2, 2, |i, j| {
            let c = Complex::new(t.cos(), 0.0);
            let s = Complex::new(0.0, t.sin());
            match (i, j) {
                (0, 0) | (1, 1) => c,
                _ => s,
            }
        });
        let ufull = kron(&ComplexMatrix::identity(2), &u);
        let rotated = ufull.mul(rho.mat()).mul(&ufull.dagger());
        let rot =
            validate_state(&hermitize(&rotated), &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        let d1 = discord(&rot, 0, 10, 100, 7).unwrap();
        assert!((d0 - d1).abs() < 1e-4, "{d0} vs {d1}");
    }

    #[test]
    fn discord_measured_factor_can_be_second() {
        let rho = join_dims(&random_density(4, 906), &[2, 2]);
        let (m, d) = crate::linalg::reorder_factors(rho.mat(), rho.dims(), &[1, 0]).unwrap();
        let swapped = DensityMatrix::from_parts_unchecked(m, d);
        let d0 = discord(&rho, 0, 10, 80, 7).unwrap();
        let d1 = discord(&swapped, 1, 10, 80, 7).unwrap();
        assert!((d0 - d1).abs() < 1e-6);
    }
}
