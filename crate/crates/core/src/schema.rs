//! JSON wire formats: complex entries are `[re, im]` pairs, matrices are
//! arrays of rows, states carry their factor dims, channels their Kraus list.
//! Shared by problem files, solution artifacts and the CLI config file.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::classical::ClassicalProblem;
use crate::error::{QibError, Result};
use crate::linalg::{ComplexMatrix, SubsystemDims};
use crate::problems::Problem;
use crate::quantum::{validate_state, DensityMatrix, QuantumChannel};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &ComplexMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<ComplexMatrix> {
    let data: Vec<Vec<Complex<f64>>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex::new(re, im)).collect())
        .collect();
    ComplexMatrix::from_rows(&data)
}

/// `{ "dims": [..], "matrix": [[[re, im], ...], ...] }`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateJson {
    pub dims: Vec<usize>,
    pub matrix: MatrixJson,
}

impl StateJson {
    pub fn from_state(s: &DensityMatrix) -> Self {
        Self { dims: s.dims().dims().to_vec(), matrix: matrix_to_json(s.mat()) }
    }

    pub fn to_state(&self) -> Result<DensityMatrix> {
        let mat = matrix_from_json(&self.matrix)?;
        validate_state(&mat, &SubsystemDims::new(&self.dims)?)
    }
}

/// `{ "din": n, "dout": m, "kraus": [matrix, ...] }`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelJson {
    pub din: usize,
    pub dout: usize,
    pub kraus: Vec<MatrixJson>,
}

impl ChannelJson {
    pub fn from_channel(ch: &QuantumChannel) -> Self {
        Self {
            din: ch.din(),
            dout: ch.dout(),
            kraus: ch.kraus().iter().map(matrix_to_json).collect(),
        }
    }

    pub fn to_channel(&self, name: &str) -> Result<QuantumChannel> {
        let kraus = self
            .kraus
            .iter()
            .map(matrix_from_json)
            .collect::<Result<Vec<ComplexMatrix>>>()?;
        let ch = QuantumChannel::new(kraus, name)?;
        if ch.din() != self.din || ch.dout() != self.dout {
            return Err(QibError::Schema(format!(
                "declared dims {}->{} but Kraus operators are {}->{}",
                self.din,
                self.dout,
                ch.din(),
                ch.dout()
            )));
        }
        Ok(ch)
    }
}

/// Either a full quantum problem or the classical shorthand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemJson {
    Full {
        label: String,
        #[serde(rename = "rho_X")]
        rho_x: StateJson,
        relevance: ChannelJson,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Classical {
        #[serde(default = "default_classical_label")]
        label: String,
        p_x: Vec<f64>,
        /// p_y_given_x[y][x], columns stochastic.
        p_y_given_x: Vec<Vec<f64>>,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

fn default_classical_label() -> String {
    "classical".into()
}

pub fn problem_from_json(doc: &str) -> Result<Problem> {
    let parsed: ProblemJson =
        serde_json::from_str(doc).map_err(|e| QibError::Schema(format!("problem JSON: {e}")))?;
    match parsed {
        ProblemJson::Full { label, rho_x, relevance, params } => {
            let state = rho_x.to_state()?;
            let d_x = state.dim();
            let ch = relevance.to_channel(&label)?;
            let problem = Problem::new(label, state.with_dims(SubsystemDims::single(d_x))?, ch, params)?;
            if rho_x.dims.len() > 1 {
                problem.with_r_split(SubsystemDims::new(&rho_x.dims)?, 0)
            } else {
                Ok(problem)
            }
        }
        ProblemJson::Classical { label, p_x, p_y_given_x, params } => {
            let cp = ClassicalProblem::new(p_x, p_y_given_x)?;
            let mut problem = Problem::from_classical(label, cp)?;
            for (k, v) in params {
                problem.params_mut().insert(k, v);
            }
            Ok(problem)
        }
    }
}

pub fn problem_to_json(problem: &Problem) -> Result<String> {
    let doc = ProblemJson::Full {
        label: problem.label().to_string(),
        rho_x: StateJson {
            dims: problem.r_dims().dims().to_vec(),
            matrix: matrix_to_json(problem.rho_x().mat()),
        },
        relevance: ChannelJson::from_channel(problem.relevance()),
        params: problem.params().clone(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| QibError::Schema(e.to_string()))
}
