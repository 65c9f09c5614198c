//! Bundled example problems and user-defined problem loading.
//!
//! A problem pairs an initial state `rho_X` with a relevance channel acting
//! on the purification reference. The three bundled constructors are the even
//! hidden-Markov process, a phase-damping qubit, and an amplitude-damping
//! channel with a redundant data qubit.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::classical::ClassicalProblem;
use crate::error::{QibError, Result};
use crate::linalg::{kron, ComplexMatrix, SubsystemDims, ZERO};
use crate::quantum::{classical_channel, validate_state, DensityMatrix, QuantumChannel};

/// An initial state plus the relevance channel defining what counts as
/// relevant information, with metadata for diagnostics.
#[derive(Clone, Debug)]
pub struct Problem {
    label: String,
    rho_x: DensityMatrix,
    relevance: QuantumChannel,
    params: BTreeMap<String, f64>,
    /// Factor split of the reference for correlation diagnostics.
    r_dims: SubsystemDims,
    /// Which factor of `r_dims` the relevance channel actually reads.
    relevant_factor: usize,
    /// Present when the problem is a classical process; used by the
    /// classical-IB reference solver.
    classical: Option<ClassicalProblem>,
}

impl Problem {
    pub fn new(
        label: impl Into<String>,
        rho_x: DensityMatrix,
        relevance: QuantumChannel,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if relevance.din() != rho_x.dim() {
            return Err(QibError::DimensionMismatch(format!(
                "relevance input {} vs d_X {}",
                relevance.din(),
                rho_x.dim()
            )));
        }
        let r_dims = SubsystemDims::single(rho_x.dim());
        Ok(Self {
            label: label.into(),
            rho_x,
            relevance,
            params,
            r_dims,
            relevant_factor: 0,
            classical: None,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rho_x(&self) -> &DensityMatrix {
        &self.rho_x
    }

    pub fn relevance(&self) -> &QuantumChannel {
        &self.relevance
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, f64> {
        &mut self.params
    }

    pub fn d_x(&self) -> usize {
        self.rho_x.dim()
    }

    pub fn d_y(&self) -> usize {
        self.relevance.dout()
    }

    pub fn r_dims(&self) -> &SubsystemDims {
        &self.r_dims
    }

    pub fn relevant_factor(&self) -> usize {
        self.relevant_factor
    }

    pub fn classical(&self) -> Option<&ClassicalProblem> {
        self.classical.as_ref()
    }

    pub fn with_r_split(mut self, r_dims: SubsystemDims, relevant_factor: usize) -> Result<Self> {
        if r_dims.total() != self.d_x() || relevant_factor >= r_dims.nfactors() {
            return Err(QibError::DimensionMismatch(format!(
                "r split {:?} does not match d_X {}",
                r_dims.dims(),
                self.d_x()
            )));
        }
        self.r_dims = r_dims;
        self.relevant_factor = relevant_factor;
        Ok(self)
    }

    /// Build a quantum problem from classical distributions: diagonal initial
    /// state and a classical relevance channel.
    pub fn from_classical(label: impl Into<String>, cp: ClassicalProblem) -> Result<Self> {
        let rho_x = validate_state(
            &ComplexMatrix::diag(cp.p_x()),
            &SubsystemDims::single(cp.d_x()),
        )?;
        let relevance = classical_channel(cp.p_y_given_x())?;
        let mut p = Self::new(label, rho_x, relevance, BTreeMap::new())?;
        p.classical = Some(cp);
        Ok(p)
    }

    /// Bundled problem by CLI name.
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "even" => even_process(3, 2),
            "phase-damping" => phase_damping_problem(0.5, 0.3),
            "amplitude-damping" => amplitude_damping_problem(0.7, 0.3),
            other => Err(QibError::Schema(format!(
                "unknown bundled problem '{other}' (expected even, phase-damping, \
                 amplitude-damping)"
            ))),
        }
    }
}

/// The two-state hidden Markov machine behind the even process: state A emits
/// 0 or 1 with probability 1/2 (emitting 1 moves to B); state B always emits
/// 1 and returns to A. Runs of 1s between 0s therefore have even length.
#[derive(Clone, Copy)]
struct EvenHmm;

impl EvenHmm {
    const STATIONARY: [f64; 2] = [2.0 / 3.0, 1.0 / 3.0];

    /// (probability, next state) of emitting `bit` from `state`.
    fn step(state: usize, bit: usize) -> Option<(f64, usize)> {
        match (state, bit) {
            (0, 0) => Some((0.5, 0)),
            (0, 1) => Some((0.5, 1)),
            (1, 1) => Some((1.0, 0)),
            _ => None,
        }
    }

    /// Joint probabilities p(word, end state | start distribution) for all
    /// words of the given length, word bits ordered first-emitted first.
    fn word_end_distribution(start: &[f64; 2], len: usize) -> Vec<[f64; 2]> {
        let mut table = vec![[0.0f64; 2]; 1 << len];
        // depth-first over emissions
        fn rec(table: &mut [[f64; 2]], word: usize, state: usize, p: f64, remaining: usize) {
            if p == 0.0 {
                return;
            }
            if remaining == 0 {
                table[word][state] += p;
                return;
            }
            for bit in 0..2 {
                if let Some((q, next)) = EvenHmm::step(state, bit) {
                    rec(table, (word << 1) | bit, next, p * q, remaining - 1);
                }
            }
        }
        for s in 0..2 {
            rec(&mut table, 0, s, start[s], len);
        }
        table
    }
}

/// Classical distributions (p(x), p(y|x)) of the even process with length
/// `history_len` pasts and length `future_len` futures, futures following
/// pasts within the same stationary realization.
pub fn even_process_distributions(
    history_len: usize,
    future_len: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if history_len == 0 || future_len == 0 {
        return Err(QibError::Schema("history and future lengths must be >= 1".into()));
    }
    let hist = EvenHmm::word_end_distribution(&EvenHmm::STATIONARY, history_len);
    let d_x = hist.len();
    let d_y = 1usize << future_len;
    let p_x: Vec<f64> = hist.iter().map(|t| t[0] + t[1]).collect();

    let mut p_y_given_x = vec![vec![0.0; d_x]; d_y];
    for (x, t) in hist.iter().enumerate() {
        let px = t[0] + t[1];
        // posterior over the hidden state after an observed history; an
        // impossible history falls back to the stationary mix so the channel
        // stays stochastic on the full space
        let posterior: [f64; 2] =
            if px > 0.0 { [t[0] / px, t[1] / px] } else { EvenHmm::STATIONARY };
        let fut = EvenHmm::word_end_distribution(&posterior, future_len);
        for (y, f) in fut.iter().enumerate() {
            p_y_given_x[y][x] = f[0] + f[1];
        }
    }
    Ok((p_x, p_y_given_x))
}

/// The even process as a prediction problem: histories of `history_len` bits
/// are encoded to predict the next `future_len` bits.
pub fn even_process(history_len: usize, future_len: usize) -> Result<Problem> {
    let (p_x, p_y_given_x) = even_process_distributions(history_len, future_len)?;
    let cp = ClassicalProblem::new(p_x, p_y_given_x)?;
    let mut problem = Problem::from_classical("even", cp)?;
    problem.params.insert("history_len".into(), history_len as f64);
    problem.params.insert("future_len".into(), future_len as f64);
    Ok(problem)
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(QibError::Schema(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

fn mixed_plus_state(p: f64) -> Result<ComplexMatrix> {
    let s = Complex::new(0.5f64.sqrt(), 0.0);
    let plus = ComplexMatrix::outer(&[s, s], &[s, s]);
    Ok(plus
        .scale(Complex::new(1.0 - p, 0.0))
        .add(&ComplexMatrix::identity(2).scale(Complex::new(p / 2.0, 0.0))))
}

fn phase_damping_kraus(lambda: f64) -> Vec<ComplexMatrix> {
    vec![
        ComplexMatrix::diag(&[1.0, (1.0 - lambda).sqrt()]),
        ComplexMatrix::diag(&[0.0, lambda.sqrt()]),
    ]
}

/// A qubit in `(1-p)|+><+| + p I/2` with a phase-damping relevance channel of
/// strength `lambda`.
pub fn phase_damping_problem(lambda: f64, p: f64) -> Result<Problem> {
    check_unit_interval("lambda", lambda)?;
    check_unit_interval("p", p)?;
    let rho_x = validate_state(&mixed_plus_state(p)?, &SubsystemDims::single(2))?;
    let relevance = QuantumChannel::new(phase_damping_kraus(lambda), "phase damping")?;
    let mut params = BTreeMap::new();
    params.insert("lambda".into(), lambda);
    params.insert("p".into(), p);
    Problem::new("phase-damping", rho_x, relevance, params)
}

/// Two data qubits, the second maximally mixed and redundant: the relevance
/// channel amplitude-damps the first qubit and traces out the second. The
/// trace-out is pre-composed into a single 4 -> 2 Kraus family.
pub fn amplitude_damping_problem(lambda: f64, p: f64) -> Result<Problem> {
    check_unit_interval("lambda", lambda)?;
    check_unit_interval("p", p)?;
    let q1 = mixed_plus_state(p)?;
    let q2 = ComplexMatrix::identity(2).scale(Complex::new(0.5, 0.0));
    let rho_x = validate_state(&kron(&q1, &q2), &SubsystemDims::single(4))?;

    let mut a1 = ComplexMatrix::zeros(2, 2);
    a1[(0, 0)] = Complex::new(1.0, 0.0);
    a1[(1, 1)] = Complex::new((1.0 - lambda).sqrt(), 0.0);
    let mut a2 = ComplexMatrix::zeros(2, 2);
    a2[(0, 1)] = Complex::new(lambda.sqrt(), 0.0);

    // (A (x) I_2) followed by tracing out the second qubit: Kraus A (x) <j|
    let mut kraus = Vec::new();
    for a in [a1, a2] {
        for j in 0..2usize {
            let mut k = ComplexMatrix::zeros(2, 4);
            for r in 0..2 {
                for c in 0..2 {
                    if a[(r, c)] != ZERO {
                        k[(r, c * 2 + j)] = a[(r, c)];
                    }
                }
            }
            kraus.push(k);
        }
    }
    let relevance = QuantumChannel::new(kraus, "amplitude damping + trace-out")?;
    let mut params = BTreeMap::new();
    params.insert("lambda".into(), lambda);
    params.insert("p".into(), p);
    Problem::new("amplitude-damping", rho_x, relevance, params)?
        .with_r_split(SubsystemDims::new(&[2, 2])?, 0)
}

/// Parse a problem from its JSON document (full or classical shorthand form).
pub fn load_problem(doc: &str) -> Result<Problem> {
    crate::schema::problem_from_json(doc)
}
