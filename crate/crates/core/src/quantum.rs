//! Validated quantum states, CPTP channels, and the conditional-operator
//! (Choi) correspondence between them.
//!
//! Channels are held in operator-sum (Kraus) form and can be converted to and
//! from positive conditional operators `E_{B|A}` on the input (x) output space
//! satisfying `tr_B E_{B|A} = I_A`, the representation the solver's update
//! rule is phrased in. The index ordering of conditional operators is fixed
//! as input-then-output everywhere.

use num_complex::Complex;

use crate::error::{QibError, Result};
use crate::linalg::{
    herm_eig, hermitize, kron, kron_vec, partial_trace, ComplexMatrix, HermitianEigen,
    SubsystemDims, C64, ONE, ZERO,
};

/// Tolerance for state / channel invariant checks.
pub const STATE_TOL: f64 = 1e-9;

/// A density matrix with explicit tensor-factor structure.
///
/// Guaranteed Hermitian, positive semidefinite (eigenvalues clipped at zero)
/// and unit trace after construction through [`validate_state`].
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    dims: SubsystemDims,
}

impl DensityMatrix {
    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn eig(&self) -> Result<HermitianEigen> {
        herm_eig(&self.mat)
    }

    /// Reduced state on the kept factors.
    pub fn marginal(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let mat = partial_trace(&self.mat, &self.dims, keep)?;
        let dims = self.dims.select(keep)?;
        // Partial trace of a valid state is valid up to round-off.
        Ok(DensityMatrix { mat: hermitize(&mat), dims })
    }

    /// Re-attach a different factor split to the same matrix.
    pub fn with_dims(&self, dims: SubsystemDims) -> Result<DensityMatrix> {
        if dims.total() != self.dim() {
            return Err(QibError::DimensionMismatch(format!(
                "cannot reinterpret {}-dim state with dims {:?}",
                self.dim(),
                dims.dims()
            )));
        }
        Ok(DensityMatrix { mat: self.mat.clone(), dims })
    }

    /// Construct without re-validation. For internal use where the invariants
    /// hold by construction (partial traces, hermitized convex mixes).
    pub(crate) fn from_parts_unchecked(mat: ComplexMatrix, dims: SubsystemDims) -> DensityMatrix {
        debug_assert_eq!(mat.nrows(), dims.total());
        DensityMatrix { mat, dims }
    }
}

/// Check the density-matrix invariants and construct a [`DensityMatrix`].
///
/// Tiny negative eigenvalues (above `-1e-9`) are clipped to zero and the
/// state renormalized; anything worse is an error naming the offending
/// quantity.
pub fn validate_state(mat: &ComplexMatrix, dims: &SubsystemDims) -> Result<DensityMatrix> {
    if !mat.is_square() || mat.nrows() != dims.total() {
        return Err(QibError::DimensionMismatch(format!(
            "state is {}x{}, dims {:?} give {}",
            mat.nrows(),
            mat.ncols(),
            dims.dims(),
            dims.total()
        )));
    }
    if !mat.is_finite() {
        return Err(QibError::InvalidState("non-finite entries".into()));
    }
    let dev = mat.hermiticity_defect();
    if dev > STATE_TOL {
        return Err(QibError::InvalidState(format!("not Hermitian, defect {dev:.3e}")));
    }
    let tr = mat.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(QibError::InvalidState(format!("trace {tr} differs from 1")));
    }
    let eig = herm_eig(mat)?;
    let min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if min < -STATE_TOL {
        return Err(QibError::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    // Rebuild only when repair is needed, so already-clean matrices survive
    // a save/load round trip bit-identically.
    let mat = if min < 0.0 {
        let clipped = eig.map(|l| l.max(0.0));
        let norm = clipped.trace().re;
        clipped.scale(Complex::new(1.0 / norm, 0.0))
    } else if (tr.re - 1.0).abs() > 1e-13 {
        hermitize(mat).scale(Complex::new(1.0 / tr.re, 0.0))
    } else {
        hermitize(mat)
    };
    Ok(DensityMatrix { mat, dims: dims.clone() })
}

/// A pure state as an amplitude vector with factor structure.
#[derive(Clone, Debug)]
pub struct PureStateVector {
    amplitudes: Vec<C64>,
    dims: SubsystemDims,
}

impl PureStateVector {
    pub fn new(amplitudes: Vec<C64>, dims: SubsystemDims) -> Result<Self> {
        if amplitudes.len() != dims.total() {
            return Err(QibError::DimensionMismatch(format!(
                "vector length {} vs dims {:?}",
                amplitudes.len(),
                dims.dims()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QibError::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self { amplitudes, dims })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    /// |psi><psi| as a density matrix.
    pub fn projector(&self) -> DensityMatrix {
        let mat = ComplexMatrix::outer(&self.amplitudes, &self.amplitudes);
        DensityMatrix::from_parts_unchecked(mat, self.dims.clone())
    }
}

/// Purify `rho` on A (x) R with `d_R = d_A`.
///
/// The R basis is the conjugated eigenbasis copy: with spectral decomposition
/// `rho = sum_i p_i |v_i><v_i|` (eigenvalues ascending, leading component of
/// each eigenvector real positive), the purification is
/// `sum_i sqrt(p_i) |v_i>|v_i*>`. Tracing out R recovers `rho` exactly, and
/// the reference marginal is `rho` transposed -- identical to `rho` whenever
/// the input is real, as in all bundled problems. The conjugation is what
/// makes pushing the purification through an extended channel agree with the
/// `rho_R^{1/2} E_{M|X} rho_R^{1/2}` sandwich of the plain conditional
/// operator, with no basis change.
pub fn purify(rho: &DensityMatrix) -> Result<PureStateVector> {
    let eig = rho.eig()?;
    let d = rho.dim();
    let mut amps = vec![ZERO; d * d];
    for k in 0..d {
        let p = eig.eigenvalues[k].max(0.0);
        if p == 0.0 {
            continue;
        }
        let w = p.sqrt();
        let v = eig.column(k);
        for a in 0..d {
            if v[a] == ZERO {
                continue;
            }
            for r in 0..d {
                amps[a * d + r] += v[a] * v[r].conj() * w;
            }
        }
    }
    // Round-off in sqrt(p_i): renormalize exactly.
    let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut amps {
        *z /= norm;
    }
    PureStateVector::new(amps, SubsystemDims::new(&[d, d])?)
}

/// Which side the ancilla factor takes when extending a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AncillaSide {
    /// Ancilla is the left tensor factor: Kraus `I (x) K`.
    Left,
    /// Ancilla is the right tensor factor: Kraus `K (x) I`.
    Right,
}

/// A completely positive trace-preserving map in operator-sum form.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    kraus: Vec<ComplexMatrix>,
    din: usize,
    dout: usize,
    name: String,
}

impl QuantumChannel {
    /// Build from Kraus operators, checking trace preservation
    /// `sum_k K_k^dag K_k = I` to 1e-9.
    pub fn new(kraus: Vec<ComplexMatrix>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if kraus.is_empty() {
            return Err(QibError::InvalidChannel(format!("{name}: no Kraus operators")));
        }
        let dout = kraus[0].nrows();
        let din = kraus[0].ncols();
        if kraus.iter().any(|k| k.nrows() != dout || k.ncols() != din) {
            return Err(QibError::InvalidChannel(format!("{name}: inconsistent Kraus shapes")));
        }
        if kraus.iter().any(|k| !k.is_finite()) {
            return Err(QibError::InvalidChannel(format!("{name}: non-finite Kraus entries")));
        }
        let mut acc = ComplexMatrix::zeros(din, din);
        for k in &kraus {
            acc = acc.add(&k.dagger().mul(k));
        }
        let defect = acc.sub(&ComplexMatrix::identity(din)).max_abs();
        if defect > STATE_TOL {
            return Err(QibError::InvalidChannel(format!(
                "{name}: sum K^dag K deviates from identity by {defect:.3e}"
            )));
        }
        Ok(Self { kraus, din, dout, name })
    }

    pub fn identity(d: usize) -> Self {
        Self { kraus: vec![ComplexMatrix::identity(d)], din: d, dout: d, name: "identity".into() }
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn din(&self) -> usize {
        self.din
    }

    pub fn dout(&self) -> usize {
        self.dout
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Raw operator-sum action on a matrix (no state validation).
    pub fn apply(&self, m: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(m.nrows(), self.din, "channel {} input dim", self.name);
        let mut out = ComplexMatrix::zeros(self.dout, self.dout);
        for k in &self.kraus {
            out = out.add(&k.mul(m).mul(&k.dagger()));
        }
        out
    }

    /// Apply to a state; the output carries a single output factor.
    pub fn apply_state(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.din {
            return Err(QibError::DimensionMismatch(format!(
                "channel {} takes dim {}, state has {}",
                self.name,
                self.din,
                rho.dim()
            )));
        }
        let out = hermitize(&self.apply(rho.mat()));
        Ok(DensityMatrix::from_parts_unchecked(out, SubsystemDims::single(self.dout)))
    }

    /// Tensor with an identity channel on an ancilla of dimension `d_anc`.
    pub fn extended(&self, d_anc: usize, side: AncillaSide) -> QuantumChannel {
        let id = ComplexMatrix::identity(d_anc);
        let kraus = self
            .kraus
            .iter()
            .map(|k| match side {
                AncillaSide::Left => kron(&id, k),
                AncillaSide::Right => kron(k, &id),
            })
            .collect();
        QuantumChannel {
            kraus,
            din: self.din * d_anc,
            dout: self.dout * d_anc,
            name: format!("{} (x) I_{}", self.name, d_anc),
        }
    }

    /// The dual (adjoint) map `A -> sum_k K_k^dag A K_k`, which is unital.
    pub fn dual(&self) -> DualMap {
        DualMap { kraus: self.kraus.clone(), din: self.din, dout: self.dout }
    }
}

/// Adjoint of a channel: maps observables on the output space back to the
/// input space. Satisfies `tr[dual(A) B] = tr[A ch(B)]` and `dual(I) = I`.
#[derive(Clone, Debug)]
pub struct DualMap {
    kraus: Vec<ComplexMatrix>,
    din: usize,
    dout: usize,
}

impl DualMap {
    pub fn apply(&self, a: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(a.nrows(), self.dout, "dual map takes operators on the output space");
        let mut out = ComplexMatrix::zeros(self.din, self.din);
        for k in &self.kraus {
            out = out.add(&k.dagger().mul(a).mul(k));
        }
        out
    }
}

/// Positive operator on input (x) output representing a channel:
/// `E(rho) = tr_A[E_{B|A}^{T_A} rho]` with `tr_B E_{B|A} = I_A`.
#[derive(Clone, Debug)]
pub struct ConditionalOperator {
    mat: ComplexMatrix,
    din: usize,
    dout: usize,
    /// When built from a rank-deficient marginal, the trace-out condition
    /// holds only on the support of that marginal.
    support_relaxed: bool,
}

impl ConditionalOperator {
    pub fn new(mat: ComplexMatrix, din: usize, dout: usize) -> Result<Self> {
        let op = Self { mat, din, dout, support_relaxed: false };
        op.validate()?;
        Ok(op)
    }

    pub(crate) fn new_support_relaxed(mat: ComplexMatrix, din: usize, dout: usize) -> Self {
        Self { mat, din, dout, support_relaxed: true }
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn din(&self) -> usize {
        self.din
    }

    pub fn dout(&self) -> usize {
        self.dout
    }

    pub fn dims(&self) -> SubsystemDims {
        SubsystemDims::new(&[self.din, self.dout]).expect("positive dims")
    }

    pub fn is_support_relaxed(&self) -> bool {
        self.support_relaxed
    }

    /// Check positivity and the trace-out condition `tr_B E = I_A`.
    pub fn validate(&self) -> Result<()> {
        if self.mat.nrows() != self.din * self.dout {
            return Err(QibError::DimensionMismatch(format!(
                "conditional operator is {}x{}, expected {}",
                self.mat.nrows(),
                self.mat.ncols(),
                self.din * self.dout
            )));
        }
        let eig = herm_eig(&self.mat)?;
        let scale = eig.eigenvalues.last().map(|l| l.abs()).unwrap_or(1.0).max(1.0);
        if eig.eigenvalues[0] < -STATE_TOL * scale {
            return Err(QibError::InvalidChannel(format!(
                "conditional operator has negative eigenvalue {:.3e}",
                eig.eigenvalues[0]
            )));
        }
        let reduced = partial_trace(&self.mat, &self.dims(), &[0])?;
        let defect = reduced.sub(&ComplexMatrix::identity(self.din)).max_abs();
        if !self.support_relaxed && defect > STATE_TOL {
            return Err(QibError::InvalidChannel(format!(
                "tr over output deviates from identity by {defect:.3e}"
            )));
        }
        Ok(())
    }

    /// Channel action `E(rho) = tr_A[E^{T_A} rho]` on a state of the input
    /// space (defined on the support when support-relaxed).
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.din {
            return Err(QibError::DimensionMismatch(format!(
                "conditional operator input dim {} vs state {}",
                self.din,
                rho.nrows()
            )));
        }
        // tr_A[E^{T_A} (rho (x) I_B)] computed directly:
        // out[b, b'] = sum_{a a'} E[(a', b), (a, b')] rho[a', a]  (T_A swaps a, a')
        let mut out = ComplexMatrix::zeros(self.dout, self.dout);
        for b in 0..self.dout {
            for bp in 0..self.dout {
                let mut acc = ZERO;
                for a in 0..self.din {
                    for ap in 0..self.din {
                        acc += self.mat[(ap * self.dout + b, a * self.dout + bp)] * rho[(ap, a)];
                    }
                }
                out[(b, bp)] = acc;
            }
        }
        Ok(hermitize(&out))
    }
}

/// Represent a channel as a conditional operator
/// `E_{B|A} = sum_ij |i><j| (x) E(|i><j|)`.
pub fn channel_to_conditional(ch: &QuantumChannel) -> ConditionalOperator {
    let (din, dout) = (ch.din(), ch.dout());
    let n = din * dout;
    let mut mat = ComplexMatrix::zeros(n, n);
    for k in ch.kraus() {
        // w[(i, b)] = K[b, i]; contribution w w^dag
        let mut w = vec![ZERO; n];
        for i in 0..din {
            for b in 0..dout {
                w[i * dout + b] = k[(b, i)];
            }
        }
        for (r, &wr) in w.iter().enumerate() {
            if wr == ZERO {
                continue;
            }
            for (c, &wc) in w.iter().enumerate() {
                mat[(r, c)] += wr * wc.conj();
            }
        }
    }
    ConditionalOperator { mat: hermitize(&mat), din, dout, support_relaxed: false }
}

/// Recover an operator-sum representation from a conditional operator.
pub fn conditional_to_channel(cop: &ConditionalOperator) -> Result<QuantumChannel> {
    cop.validate()?;
    if cop.support_relaxed {
        return Err(QibError::InvalidChannel(
            "support-relaxed conditional operator does not define a channel on the full input \
             space"
                .into(),
        ));
    }
    let (din, dout) = (cop.din(), cop.dout());
    let eig = herm_eig(cop.mat())?;
    let scale = eig.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut kraus = Vec::new();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= 1e-12 * scale {
            continue;
        }
        let w = eig.column(k);
        let s = l.sqrt();
        kraus.push(ComplexMatrix::from_fn(dout, din, |b, a| w[a * dout + b] * s));
    }
    QuantumChannel::new(kraus, "from conditional operator")
}

/// Joint state induced by an input state and a conditional operator:
/// `rho_AB = rho_A^{1/2} E_{B|A} rho_A^{1/2}` (square roots on the A factor).
pub fn state_from_channel(
    rho_a: &DensityMatrix,
    cop: &ConditionalOperator,
) -> Result<DensityMatrix> {
    if rho_a.dim() != cop.din() {
        return Err(QibError::DimensionMismatch(format!(
            "state dim {} vs conditional operator input {}",
            rho_a.dim(),
            cop.din()
        )));
    }
    let sqrt = rho_a.eig()?.map(|l| l.max(0.0).sqrt());
    let s = kron(&sqrt, &ComplexMatrix::identity(cop.dout()));
    let mat = hermitize(&s.mul(cop.mat()).mul(&s));
    let dims = SubsystemDims::new(&[cop.din(), cop.dout()])?;
    // Positive by construction; trace equals tr[rho_A] = 1 up to round-off.
    let tr = mat.trace().re;
    Ok(DensityMatrix::from_parts_unchecked(mat.scale(Complex::new(1.0 / tr, 0.0)), dims))
}

/// Conditional operator of a joint state relative to its A marginal:
/// `E_{B|A} = rho_A^{-1/2} rho_AB rho_A^{-1/2}` with pseudo-inverse square
/// roots. For a rank-deficient marginal the result is support-relaxed: the
/// trace-out condition gives the support projector rather than the identity.
pub fn channel_from_state(
    rho_ab: &DensityMatrix,
    rho_a: &DensityMatrix,
) -> Result<ConditionalOperator> {
    if rho_ab.dims().nfactors() != 2 {
        return Err(QibError::DimensionMismatch("joint state must have two factors".into()));
    }
    let (da, db) = (rho_ab.dims().dims()[0], rho_ab.dims().dims()[1]);
    if rho_a.dim() != da {
        return Err(QibError::DimensionMismatch(format!(
            "marginal dim {} vs first factor {}",
            rho_a.dim(),
            da
        )));
    }
    let marg = partial_trace(rho_ab.mat(), rho_ab.dims(), &[0])?;
    let dev = marg.sub(rho_a.mat()).max_abs();
    if dev > 1e-8 {
        return Err(QibError::MarginalMismatch(format!(
            "tr_B rho_AB deviates from rho_A by {dev:.3e}"
        )));
    }
    let eig = rho_a.eig()?;
    let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let cutoff = 1e-12 * top;
    let rank = eig.eigenvalues.iter().filter(|&&l| l > cutoff).count();
    let inv_sqrt = eig.map(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 });
    let s = kron(&inv_sqrt, &ComplexMatrix::identity(db));
    let mat = hermitize(&s.mul(rho_ab.mat()).mul(&s));
    let cop = if rank < da {
        ConditionalOperator::new_support_relaxed(mat, da, db)
    } else {
        ConditionalOperator { mat, din: da, dout: db, support_relaxed: false }
    };
    cop.validate()?;
    Ok(cop)
}

/// Classical channel from a stochastic matrix `p[y][x]` (columns sum to 1):
/// Kraus set `sqrt(p(y|x)) |y><x|`, acting as `sum p(y|x) <x|rho|x> |y><y|`.
pub fn classical_channel(p_y_given_x: &[Vec<f64>]) -> Result<QuantumChannel> {
    let dy = p_y_given_x.len();
    if dy == 0 || p_y_given_x[0].is_empty() {
        return Err(QibError::NotStochastic("empty matrix".into()));
    }
    let dx = p_y_given_x[0].len();
    if p_y_given_x.iter().any(|r| r.len() != dx) {
        return Err(QibError::NotStochastic("ragged rows".into()));
    }
    for x in 0..dx {
        let mut col = 0.0;
        for row in p_y_given_x {
            if row[x] < 0.0 {
                return Err(QibError::NotStochastic(format!("negative entry {}", row[x])));
            }
            col += row[x];
        }
        if (col - 1.0).abs() > 1e-12 {
            return Err(QibError::NotStochastic(format!("column {x} sums to {col}")));
        }
    }
    let mut kraus = Vec::new();
    for (y, row) in p_y_given_x.iter().enumerate() {
        for (x, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let mut k = ComplexMatrix::zeros(dy, dx);
                k[(y, x)] = Complex::new(p.sqrt(), 0.0);
                kraus.push(k);
            }
        }
    }
    QuantumChannel::new(kraus, "classical")
}

/// Fidelity of a state with a pure state: `<psi| rho |psi>`.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &PureStateVector) -> Result<f64> {
    if rho.dim() != psi.amplitudes().len() {
        return Err(QibError::DimensionMismatch("fidelity dims".into()));
    }
    let v = psi.amplitudes();
    let rv = rho.mat().mul_vec(v);
    let f: C64 = v.iter().zip(&rv).map(|(a, b)| a.conj() * b).sum();
    Ok(f.re.max(0.0))
}

/// Basis vector |k> of dimension d.
pub fn basis_vector(d: usize, k: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d];
    v[k] = ONE;
    v
}

/// Product of basis vectors across factors, e.g. |i>|j>.
pub fn basis_product(dims: &[usize], idx: &[usize]) -> Vec<C64> {
    let mut v = vec![ONE];
    for (d, &k) in dims.iter().zip(idx) {
        v = kron_vec(&v, &basis_vector(*d, k));
    }
    v
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::SpectralFn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_density(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ComplexMatrix::from_fn(n, n, |_, _| {
            Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let m = g.mul(&g.dagger());
        let tr = m.trace().re;
        let mat = hermitize(&m.scale(Complex::new(1.0 / tr, 0.0)));
        validate_state(&mat, &SubsystemDims::single(n)).unwrap()
    }

    pub(crate) fn random_channel(din: usize, dout: usize, nk: usize, seed: u64) -> QuantumChannel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<ComplexMatrix> = (0..nk)
            .map(|_| {
                ComplexMatrix::from_fn(dout, din, |_, _| {
                    Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                })
            })
            .collect();
        let mut s = ComplexMatrix::zeros(din, din);
        for k in &raw {
            s = s.add(&k.dagger().mul(k));
        }
        let isq = crate::linalg::matrix_function(&s, SpectralFn::InvSqrt, 1e-14).unwrap();
        let kraus: Vec<ComplexMatrix> = raw.iter().map(|k| k.mul(&isq)).collect();
        QuantumChannel::new(kraus, "random").unwrap()
    }

    pub(crate) fn phase_damping(lambda: f64) -> QuantumChannel {
        let k1 = ComplexMatrix::diag(&[1.0, (1.0 - lambda).sqrt()]);
        let k2 = ComplexMatrix::diag(&[0.0, lambda.sqrt()]);
        QuantumChannel::new(vec![k1, k2], "phase damping").unwrap()
    }

    fn plus_state() -> DensityMatrix {
        let v = [Complex::new(0.5f64.sqrt(), 0.0), Complex::new(0.5f64.sqrt(), 0.0)];
        let mat = ComplexMatrix::outer(&v, &v);
        validate_state(&mat, &SubsystemDims::single(2)).unwrap()
    }

    #[test]
    fn validate_state_cases() {
        let ok = validate_state(&ComplexMatrix::diag(&[0.5, 0.5]), &SubsystemDims::single(2));
        assert!(ok.is_ok());

        let near = validate_state(
            &ComplexMatrix::diag(&[0.7, 0.3 + 1e-12]),
            &SubsystemDims::single(2),
        )
        .unwrap();
        assert!((near.mat().trace().re - 1.0).abs() < 1e-14);

        let bad = validate_state(&ComplexMatrix::diag(&[1.5, -0.5]), &SubsystemDims::single(2));
        match bad {
            Err(QibError::InvalidState(msg)) => assert!(msg.contains("negative eigenvalue")),
            other => panic!("expected negative eigenvalue error, got {other:?}"),
        }
    }

    #[test]
    fn purify_diagonal_and_pure() {
        let p = 0.3f64;
        let rho =
            validate_state(&ComplexMatrix::diag(&[p, 1.0 - p]), &SubsystemDims::single(2)).unwrap();
        let psi = purify(&rho).unwrap();
        // sqrt(p)|00> + sqrt(1-p)|11>
        let a = psi.amplitudes();
        assert!((a[0].re - p.sqrt()).abs() < 1e-12);
        assert!((a[3].re - (1.0 - p).sqrt()).abs() < 1e-12);
        assert!(a[1].norm() < 1e-12 && a[2].norm() < 1e-12);

        // rank-1 input: product with a reference basis state
        let phi = plus_state();
        let psi = purify(&phi).unwrap();
        let proj = psi.projector();
        let back = proj.marginal(&[0]).unwrap();
        assert!(back.mat().sub(phi.mat()).frob_norm() < 1e-10);
        let r_side = proj.marginal(&[1]).unwrap();
        let purity: f64 = r_side.eig().unwrap().eigenvalues.iter().map(|l| l * l).sum();
        assert!(purity > 1.0 - 1e-10, "reference side of a pure input stays pure");
    }

    #[test]
    fn purify_round_trip_phase_damping_input() {
        // rho_X of the phase-damping example: 0.7 |+><+| + 0.3 I/2
        let plus = plus_state();
        let mat = plus
            .mat()
            .scale(Complex::new(0.7, 0.0))
            .add(&ComplexMatrix::identity(2).scale(Complex::new(0.15, 0.0)));
        let rho = validate_state(&mat, &SubsystemDims::single(2)).unwrap();
        let psi = purify(&rho).unwrap();
        let proj = psi.projector();
        for keep in [0usize, 1] {
            let back = proj.marginal(&[keep]).unwrap();
            assert!(
                back.mat().sub(rho.mat()).frob_norm() < 1e-10,
                "both purification marginals reproduce the input"
            );
        }
    }

    #[test]
    fn apply_channel_phase_damping() {
        let plus = plus_state();
        let id = QuantumChannel::identity(2);
        let same = id.apply_state(&plus).unwrap();
        assert!(same.mat().sub(plus.mat()).frob_norm() < 1e-14);

        let full = phase_damping(1.0).apply_state(&plus).unwrap();
        assert!(full.mat().sub(&ComplexMatrix::diag(&[0.5, 0.5])).frob_norm() < 1e-12);

        let half = phase_damping(0.5).apply_state(&plus).unwrap();
        assert!((half.mat()[(0, 1)].re - 0.5 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!((half.mat()[(0, 0)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn extend_channel_product_and_bell() {
        let id2 = QuantumChannel::identity(2).extended(3, AncillaSide::Left);
        assert_eq!(id2.din(), 6);
        let m = random_density(6, 5);
        assert!(id2.apply(m.mat()).sub(m.mat()).frob_norm() < 1e-14);

        // (R (x) I)(rho (x) sigma) = R(rho) (x) sigma
        let r = phase_damping(0.5);
        let rho = random_density(2, 6);
        let sigma = random_density(3, 7);
        let prod = kron(rho.mat(), sigma.mat());
        let ext = r.extended(3, AncillaSide::Right);
        let lhs = ext.apply(&prod);
        let rhs = kron(&r.apply(rho.mat()), sigma.mat());
        assert!(lhs.sub(&rhs).frob_norm() < 1e-12);

        // extended phase damping on a Bell state: diagonal kept, coherences
        // scaled by sqrt(1-lambda)
        let s = 0.5f64.sqrt();
        let bell = [Complex::new(s, 0.0), ZERO, ZERO, Complex::new(s, 0.0)];
        let bell_m = ComplexMatrix::outer(&bell, &bell);
        let lam = 0.5;
        let ext = phase_damping(lam).extended(2, AncillaSide::Left);
        let out = ext.apply(&bell_m);
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((out[(3, 3)].re - 0.5).abs() < 1e-12);
        assert!((out[(0, 3)].re - 0.5 * (1.0 - lam).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dual_map_properties() {
        let id = QuantumChannel::identity(3);
        let a = random_density(3, 9);
        assert!(id.dual().apply(a.mat()).sub(a.mat()).frob_norm() < 1e-14);

        for seed in 0..4u64 {
            let ch = random_channel(3, 2, 3, 40 + seed);
            // unitality
            let u = ch.dual().apply(&ComplexMatrix::identity(2));
            assert!(u.sub(&ComplexMatrix::identity(3)).max_abs() < 1e-10);
            // trace pairing on random pairs
            for pair in 0..20u64 {
                let a = random_density(2, 1000 + pair).mat().clone();
                let b = random_density(3, 2000 + pair);
                let lhs = ch.dual().apply(&a).mul(b.mat()).trace();
                let rhs = a.mul(&ch.apply(b.mat())).trace();
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn conditional_operator_forms() {
        // classical channel: sum p(y|x) |x><x| (x) |y><y|
        let p = vec![vec![0.2, 0.7], vec![0.8, 0.3]];
        let ch = classical_channel(&p).unwrap();
        let cop = channel_to_conditional(&ch);
        cop.validate().unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let idx = x * 2 + y;
                assert!((cop.mat()[(idx, idx)].re - p[y][x]).abs() < 1e-12);
            }
        }
        let off_mass: f64 = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .filter(|&(r, c)| r != c)
            .map(|(r, c)| cop.mat()[(r, c)].norm())
            .sum();
        assert!(off_mass < 1e-12);

        // identity channel: sum_ij |i><j| (x) |i><j|; its action returns inputs
        let id = QuantumChannel::identity(2);
        let cop = channel_to_conditional(&id);
        for i in 0..2 {
            for j in 0..2 {
                let e = ComplexMatrix::from_fn(2, 2, |a, b| if a == i && b == j { ONE } else { ZERO });
                let eh = hermitize(&e);
                let out = cop.apply(&eh).unwrap();
                assert!(out.sub(&eh).frob_norm() < 1e-12);
            }
        }

        // fully depolarizing: conditional operator I (x) I/d
        let d = 2;
        let dep_kraus: Vec<ComplexMatrix> = (0..d)
            .flat_map(|i| {
                (0..d).map(move |j| {
                    ComplexMatrix::from_fn(d, d, move |a, b| {
                        if a == i && b == j {
                            Complex::new(1.0 / (d as f64).sqrt(), 0.0)
                        } else {
                            ZERO
                        }
                    })
                })
            })
            .collect();
        let dep = QuantumChannel::new(dep_kraus, "depolarize").unwrap();
        let cop = channel_to_conditional(&dep);
        let expect = ComplexMatrix::identity(4).scale(Complex::new(0.5, 0.0));
        assert!(cop.mat().sub(&expect).frob_norm() < 1e-12);
    }

    #[test]
    fn conditional_round_trip_matches_channel_action() {
        for seed in 0..5u64 {
            let ch = random_channel(3, 2, 2, 70 + seed);
            let cop = channel_to_conditional(&ch);
            let back = conditional_to_channel(&cop).unwrap();
            for s in 0..20u64 {
                let rho = random_density(3, 500 + 37 * seed + s);
                let via_cop = cop.apply(rho.mat()).unwrap();
                let direct = ch.apply(rho.mat());
                let via_back = back.apply(rho.mat());
                assert!(via_cop.sub(&direct).frob_norm() < 1e-9);
                assert!(via_back.sub(&direct).frob_norm() < 1e-9);
            }
        }
    }

    #[test]
    fn state_from_channel_cases() {
        // identity + maximally mixed -> maximally entangled
        let d = 2;
        let mixed = validate_state(
            &ComplexMatrix::identity(d).scale(Complex::new(0.5, 0.0)),
            &SubsystemDims::single(d),
        )
        .unwrap();
        let cop = channel_to_conditional(&QuantumChannel::identity(d));
        let joint = state_from_channel(&mixed, &cop).unwrap();
        let s = 0.5f64.sqrt();
        let bell = [Complex::new(s, 0.0), ZERO, ZERO, Complex::new(s, 0.0)];
        let expect = ComplexMatrix::outer(&bell, &bell);
        assert!(joint.mat().sub(&expect).frob_norm() < 1e-12);

        // constant channel -> product state
        let omega = random_density(2, 81);
        let kraus: Vec<ComplexMatrix> = {
            // E(rho) = omega tr[rho] via Kraus sqrt(w_k)|w_k><a|
            let eig = omega.eig().unwrap();
            (0..2)
                .flat_map(|k| {
                    let col = eig.column(k);
                    let w = eig.eigenvalues[k].max(0.0).sqrt();
                    (0..3).map(move |a| {
                        let col = col.clone();
                        ComplexMatrix::from_fn(2, 3, move |i, j| {
                            if j == a {
                                col[i] * w
                            } else {
                                ZERO
                            }
                        })
                    })
                })
                .collect()
        };
        let constant = QuantumChannel::new(kraus, "constant").unwrap();
        let rho_a = random_density(3, 82);
        let cop = channel_to_conditional(&constant);
        let joint = state_from_channel(&rho_a, &cop).unwrap();
        let expect = kron(rho_a.mat(), omega.mat());
        assert!(joint.mat().sub(&expect).frob_norm() < 1e-10);
        let back_a = joint.marginal(&[0]).unwrap();
        assert!(back_a.mat().sub(rho_a.mat()).frob_norm() < 1e-10);

        // classical channel on diagonal state -> classical joint p(x)p(y|x)
        let p = vec![vec![0.25, 0.5], vec![0.75, 0.5]];
        let ch = classical_channel(&p).unwrap();
        let px = [0.4, 0.6];
        let rho = validate_state(&ComplexMatrix::diag(&px), &SubsystemDims::single(2)).unwrap();
        let joint = state_from_channel(&rho, &channel_to_conditional(&ch)).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let idx = x * 2 + y;
                assert!((joint.mat()[(idx, idx)].re - px[x] * p[y][x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_from_state_cases() {
        // product state -> I (x) omega
        let rho_a = random_density(2, 90);
        let omega = random_density(2, 91);
        let joint_mat = kron(rho_a.mat(), omega.mat());
        let joint = validate_state(&joint_mat, &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        let cop = channel_from_state(&joint, &rho_a).unwrap();
        let expect = kron(&ComplexMatrix::identity(2), omega.mat());
        assert!(cop.mat().sub(&expect).frob_norm() < 1e-9);

        // round trip with state_from_channel on full-rank inputs
        for seed in 0..6u64 {
            let rho_a = random_density(3, 120 + seed);
            let ch = random_channel(3, 2, 3, 140 + seed);
            let joint = state_from_channel(&rho_a, &channel_to_conditional(&ch)).unwrap();
            let cop2 = channel_from_state(&joint, &rho_a).unwrap();
            assert!(
                cop2.mat().sub(channel_to_conditional(&ch).mat()).frob_norm() < 1e-8,
                "conditional operator round-trips through the joint state"
            );
            let joint2 = state_from_channel(&rho_a, &cop2).unwrap();
            assert!(joint2.mat().sub(joint.mat()).frob_norm() < 1e-8);
        }

        // classical joint -> Bayes conditional
        let pxy = [[0.1, 0.3], [0.2, 0.4]]; // p(x, y), x indexes rows
        let px = [0.4, 0.6];
        let mut joint_mat = ComplexMatrix::zeros(4, 4);
        for x in 0..2 {
            for y in 0..2 {
                joint_mat[(x * 2 + y, x * 2 + y)] = Complex::new(pxy[x][y], 0.0);
            }
        }
        let joint = validate_state(&joint_mat, &SubsystemDims::new(&[2, 2]).unwrap()).unwrap();
        let rho_a = validate_state(&ComplexMatrix::diag(&px), &SubsystemDims::single(2)).unwrap();
        let cop = channel_from_state(&joint, &rho_a).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let expect = pxy[x][y] / px[x];
                assert!((cop.mat()[(x * 2 + y, x * 2 + y)].re - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn classical_channel_cases() {
        // identity permutation: copy-through
        let p = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let ch = classical_channel(&p).unwrap();
        let rho = random_density(2, 33);
        let diag_in = ComplexMatrix::diag(&[rho.mat()[(0, 0)].re, rho.mat()[(1, 1)].re]);
        let out = ch.apply(&diag_in);
        assert!(out.sub(&diag_in).frob_norm() < 1e-12);

        // uniform conditional: constant output I/d_Y
        let p = vec![vec![1.0 / 4.0; 3]; 4];
        let ch = classical_channel(&p).unwrap();
        let rho = random_density(3, 34);
        let out = ch.apply(rho.mat());
        let expect = ComplexMatrix::identity(4).scale(Complex::new(0.25, 0.0));
        assert!(out.sub(&expect).frob_norm() < 1e-12);

        // non-stochastic input rejected
        let bad = vec![vec![0.5, 0.2], vec![0.6, 0.8]];
        assert!(matches!(classical_channel(&bad), Err(QibError::NotStochastic(_))));
    }

    /// Pushing the purification through an extended encoding channel equals
    /// the rho_R^{1/2} sandwich of the conditional operator (after reordering
    /// M (x) R vs R (x) M). This pins the purification basis convention.
    #[test]
    fn kraus_extension_matches_conditional_sandwich() {
        for seed in 0..5u64 {
            let d = 3;
            let rho_x = random_density(d, 200 + seed);
            let psi = purify(&rho_x).unwrap();
            let enc = random_channel(d, 2, 2, 220 + seed);

            // route 1: (E (x) I_R)(psi_XR), output ordering M (x) R
            let ext = enc.extended(d, AncillaSide::Right);
            let sigma_mr = ext.apply(psi.projector().mat());

            // route 2: rho_R^{1/2} E_{M|X} rho_R^{1/2} on R (x) M, then swap
            let rho_r = psi.projector().marginal(&[1]).unwrap();
            let cop = channel_to_conditional(&enc);
            let sandwich = state_from_channel(&rho_r, &cop).unwrap();
            let (swapped, _) =
                crate::linalg::reorder_factors(sandwich.mat(), sandwich.dims(), &[1, 0]).unwrap();
            assert!(
                swapped.sub(&sigma_mr).frob_norm() < 1e-9,
                "seed {seed}: extension and sandwich disagree"
            );
        }
    }

    #[test]
    fn channel_positivity_and_trace_preserved() {
        for seed in 0..6u64 {
            let ch = random_channel(3, 3, 2, 300 + seed);
            let rho = random_density(3, 330 + seed);
            let out = ch.apply_state(&rho).unwrap();
            assert!((out.mat().trace().re - 1.0).abs() < 1e-12);
            let min = out.eig().unwrap().eigenvalues[0];
            assert!(min > -1e-9);
        }
    }
}
