//! Dense complex matrices over tensor-product spaces.
//!
//! Everything downstream (states, channels, the solver) is built on the small
//! set of primitives here: Kronecker products, partial trace / partial
//! transpose over explicit subsystem dimensions, Hermitian eigendecomposition
//! and spectral matrix functions with support-projection semantics.
//! All matrices are row-major and dense; the problems this crate targets live
//! in Hilbert spaces of dimension at most a few dozen.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{QibError, Result};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const ONE: C64 = Complex::new(1.0, 0.0);

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.nrows, self.ncols)?;
        for i in 0..self.nrows.min(12) {
            write!(f, "  ")?;
            for j in 0..self.ncols.min(12) {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.ncols + j]
    }
}

impl ComplexMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![ZERO; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from rows of `[re, im]`-style complex entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(QibError::DimensionMismatch("empty matrix".into()));
        }
        let ncols = rows[0].len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(QibError::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self { nrows, ncols, data })
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = Complex::new(v, 0.0);
        }
        m
    }

    /// Rank-one projector |v><v| from a (not necessarily normalized) vector.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn conj(&self) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.ncols, other.nrows,
            "matrix product dims {}x{} * {}x{}",
            self.nrows, self.ncols, other.nrows, other.ncols
        );
        let (n, k, m) = (self.nrows, self.ncols, other.ncols);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[p * m..(p + 1) * m];
                let orow = &mut out.data[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * row[j];
                }
            }
        }
        out
    }

    /// A * v for a column vector v.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.ncols, v.len());
        (0..self.nrows)
            .map(|i| {
                let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.nrows).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry magnitude of (self - self^dagger); zero iff Hermitian.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut dev: f64 = 0.0;
        for i in 0..self.nrows {
            for j in i..self.ncols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Ordered tensor-factor dimensions of a composite space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemDims(Vec<usize>);

impl SubsystemDims {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(QibError::DimensionMismatch(format!(
                "subsystem dims must be positive and nonempty, got {dims:?}"
            )));
        }
        Ok(Self(dims.to_vec()))
    }

    pub fn single(d: usize) -> Self {
        Self(vec![d])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn nfactors(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// Dims of the factors selected by `keep` (original order).
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let dims: Vec<usize> = keep.iter().map(|&k| self.0[k]).collect();
        Self::new(&dims)
    }

    fn check_matrix(&self, m: &ComplexMatrix) -> Result<()> {
        if !m.is_square() || m.nrows() != self.total() {
            return Err(QibError::DimensionMismatch(format!(
                "matrix is {}x{} but factor dims {:?} give total {}",
                m.nrows(),
                m.ncols(),
                self.0,
                self.total()
            )));
        }
        Ok(())
    }
}

/// Row-major strides of a multi-index over `dims`.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

/// Flat offsets contributed by every multi-index over the `sel` factors,
/// holding all other factors at zero.
fn factor_offsets(dims: &[usize], sel: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let sel_dims: Vec<usize> = sel.iter().map(|&a| dims[a]).collect();
    let total: usize = sel_dims.iter().product();
    let mut out = Vec::with_capacity(total.max(1));
    for flat in 0..total.max(1) {
        let mut rem = flat;
        let mut off = 0usize;
        for (pos, &a) in sel.iter().enumerate().rev() {
            let d = sel_dims[pos];
            off += (rem % d) * st[a];
            rem /= d;
        }
        out.push(off);
    }
    out
}

/// Kronecker product a (x) b.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = ComplexMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of column vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

/// Trace out all factors not in `keep`; `keep` must be strictly increasing
/// and nonempty. The result lives on the kept factors in their original order.
pub fn partial_trace(
    m: &ComplexMatrix,
    dims: &SubsystemDims,
    keep: &[usize],
) -> Result<ComplexMatrix> {
    dims.check_matrix(m)?;
    let nf = dims.nfactors();
    if keep.is_empty() || keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= nf) {
        return Err(QibError::DimensionMismatch(format!(
            "keep set {keep:?} invalid for {nf} factors"
        )));
    }
    let traced: Vec<usize> = (0..nf).filter(|a| !keep.contains(a)).collect();
    let keep_off = factor_offsets(dims.dims(), keep);
    let tr_off = factor_offsets(dims.dims(), &traced);
    let dk = keep_off.len();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for (ri, &ro) in keep_off.iter().enumerate() {
        for (ci, &co) in keep_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &tr_off {
                acc += m[(ro + t, co + t)];
            }
            out[(ri, ci)] = acc;
        }
    }
    Ok(out)
}

/// Transpose the chosen tensor factor, leaving all others untouched.
pub fn partial_transpose(
    m: &ComplexMatrix,
    dims: &SubsystemDims,
    which: usize,
) -> Result<ComplexMatrix> {
    dims.check_matrix(m)?;
    if which >= dims.nfactors() {
        return Err(QibError::DimensionMismatch(format!(
            "factor {which} out of range for {:?}",
            dims.dims()
        )));
    }
    let rest: Vec<usize> = (0..dims.nfactors()).filter(|&a| a != which).collect();
    let w_off = factor_offsets(dims.dims(), &[which]);
    let r_off = factor_offsets(dims.dims(), &rest);
    let n = dims.total();
    let mut out = ComplexMatrix::zeros(n, n);
    for &ra in &r_off {
        for &rb in &r_off {
            for &wa in &w_off {
                for &wb in &w_off {
                    out[(ra + wb, rb + wa)] = m[(ra + wa, rb + wb)];
                }
            }
        }
    }
    Ok(out)
}

/// Permute tensor factors: `perm[k]` names the old factor that lands in slot k.
pub fn reorder_factors(
    m: &ComplexMatrix,
    dims: &SubsystemDims,
    perm: &[usize],
) -> Result<(ComplexMatrix, SubsystemDims)> {
    dims.check_matrix(m)?;
    let nf = dims.nfactors();
    let mut seen = vec![false; nf];
    for &p in perm {
        if p >= nf || seen[p] {
            return Err(QibError::DimensionMismatch(format!("bad permutation {perm:?}")));
        }
        seen[p] = true;
    }
    if perm.len() != nf {
        return Err(QibError::DimensionMismatch(format!("bad permutation {perm:?}")));
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims.dims()[p]).collect();
    let old_st = strides(dims.dims());
    let new_dims_s = SubsystemDims::new(&new_dims)?;
    let n = dims.total();
    // Map each new flat index to the old flat index.
    let mut map = vec![0usize; n];
    for (new_flat, slot) in map.iter_mut().enumerate() {
        let mut rem = new_flat;
        let mut old = 0usize;
        for k in (0..nf).rev() {
            let d = new_dims[k];
            old += (rem % d) * old_st[perm[k]];
            rem /= d;
        }
        *slot = old;
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(map[i], map[j])];
        }
    }
    Ok((out, new_dims_s))
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and a
/// unitary matrix of column eigenvectors with the leading nonzero component of
/// each column made real positive.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut vd = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                vd[(i, j)] = v[(i, j)] * self.eigenvalues[j];
            }
        }
        vd.mul(&v.dagger())
    }

    /// V f(lambda) V^dagger for a real function of the eigenvalues.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let fv: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            if fv[k] == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * fv[k];
                if vik == ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        hermitize(&out)
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.eigenvalues.len()).map(|i| self.eigenvectors[(i, k)]).collect()
    }
}

/// Tolerance on the Hermiticity defect accepted by [`herm_eig`].
pub const HERM_TOL: f64 = 1e-9;

/// Hermitian eigendecomposition. The input may deviate from exact Hermiticity
/// by round-off (up to 1e-9 in entry magnitude); it is hermitized first.
pub fn herm_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(QibError::DimensionMismatch("eig of non-square matrix".into()));
    }
    let dev = h.hermiticity_defect();
    if !(dev <= HERM_TOL * (1.0 + h.max_abs())) {
        return Err(QibError::NotHermitian { dev });
    }
    let hh = hermitize(h);
    let n = hh.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| hh[(i, j)]);
    let se = dm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        // Phase convention: first component of magnitude > 1e-12 rotated to
        // the positive real axis, for run-to-run reproducibility.
        let mut phase = ONE;
        for i in 0..n {
            let z = se.eigenvectors[(i, k)];
            if z.norm() > 1e-12 {
                phase = z.conj() / z.norm();
                break;
            }
        }
        for i in 0..n {
            vectors[(i, col)] = se.eigenvectors[(i, k)] * phase;
        }
    }
    if !vectors.is_finite() || eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(QibError::Numerical("eigendecomposition produced non-finite values".into()));
    }
    Ok(HermitianEigen { eigenvalues, eigenvectors: vectors })
}

/// Spectral functions applied through the eigendecomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralFn {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
}

impl SpectralFn {
    fn name(self) -> &'static str {
        match self {
            SpectralFn::Log => "log",
            SpectralFn::Exp => "exp",
            SpectralFn::Sqrt => "sqrt",
            SpectralFn::InvSqrt => "inv_sqrt",
        }
    }
}

/// Default relative support cutoff for spectral functions.
pub const SUPPORT_CUTOFF: f64 = 1e-12;

/// Apply a spectral function to a Hermitian matrix.
///
/// For `log`, `sqrt` and `inv_sqrt` the function acts only on the support:
/// eigenvalues below `support_cutoff * max|eigenvalue|` are sent to zero,
/// which realizes the pseudo-inverse reading of rho^{-1/2} and keeps log
/// finite on rank-deficient states. Natural logarithm throughout. Eigenvalues
/// below -10x the absolute cutoff are an error for the support-restricted
/// functions.
pub fn matrix_function(
    h: &ComplexMatrix,
    f: SpectralFn,
    support_cutoff: f64,
) -> Result<ComplexMatrix> {
    let eig = herm_eig(h)?;
    Ok(spectral_map(&eig, f, support_cutoff)?.0)
}

/// Same as [`matrix_function`] but reusing an existing decomposition.
/// Returns the mapped matrix together with the absolute cutoff used.
pub fn spectral_map(
    eig: &HermitianEigen,
    f: SpectralFn,
    support_cutoff: f64,
) -> Result<(ComplexMatrix, f64)> {
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let cutoff = support_cutoff * scale.max(f64::MIN_POSITIVE);
    if f != SpectralFn::Exp {
        if let Some(&bad) =
            eig.eigenvalues.iter().find(|&&l| l < -10.0 * cutoff.max(f64::MIN_POSITIVE))
        {
            return Err(QibError::NegativeEigenvalue { value: bad, func: f.name() });
        }
    }
    let m = match f {
        SpectralFn::Exp => eig.map(f64::exp),
        SpectralFn::Log => eig.map(|l| if l > cutoff { l.ln() } else { 0.0 }),
        SpectralFn::Sqrt => eig.map(|l| if l > cutoff { l.sqrt() } else { 0.0 }),
        SpectralFn::InvSqrt => eig.map(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 }),
    };
    Ok((m, cutoff))
}

/// (m + m^dagger) / 2.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    assert!(m.is_square());
    let n = m.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = Complex::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let z = (m[(i, j)] + m[(j, i)].conj()).scale(0.5);
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
        }
    }
    out
}

/// Trace norm (sum of |eigenvalue|) of a Hermitian matrix.
pub fn trace_norm_herm(m: &ComplexMatrix) -> Result<f64> {
    Ok(herm_eig(m)?.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Operator norm (max |eigenvalue|) of a Hermitian matrix.
pub fn op_norm_herm(m: &ComplexMatrix) -> Result<f64> {
    Ok(herm_eig(m)?.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs())))
}
