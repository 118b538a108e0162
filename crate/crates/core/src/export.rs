//! JSON documents for matrices and sequences.
//!
//! A matrix document is `{"n_modes": N, "ordering": "qpqp", "rows": [...]}`
//! with `2N` rows of `2N` numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::euler_decompose;
use crate::matrix::Mat;
use crate::protocols::{ProtocolSequence, Step};
use crate::scalar::Real;

pub const ORDERING: &str = "qpqp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub n_modes: usize,
    pub ordering: String,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixDocument {
    pub fn from_matrix<T: Real>(m: &Mat<T>) -> Self {
        Self {
            n_modes: m.nrows() / 2,
            ordering: ORDERING.to_string(),
            rows: m
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(T::to_f64_lossy).collect())
                .collect(),
        }
    }

    /// Checks ordering and shape and converts.
    pub fn to_matrix<T: Real>(&self) -> Result<Mat<T>> {
        if self.ordering != ORDERING {
            return Err(Error::Format(format!(
                "unsupported ordering {:?}",
                self.ordering
            )));
        }
        if self.n_modes == 0 {
            return Err(Error::Format("n_modes must be positive".into()));
        }
        let d = 2 * self.n_modes;
        if self.rows.len() != d || self.rows.iter().any(|r| r.len() != d) {
            return Err(Error::Format(format!("expected {d} rows of {d} entries")));
        }
        if self.rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite entry".into()));
        }
        let rows: Vec<Vec<T>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&x| T::lit(x)).collect())
            .collect();
        Mat::from_rows(&rows).ok_or_else(|| Error::Format("ragged rows".into()))
    }
}

pub fn parse_matrix<T: Real>(text: &str) -> Result<Mat<T>> {
    let doc: MatrixDocument =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    doc.to_matrix()
}

pub fn write_matrix<T: Real>(m: &Mat<T>) -> String {
    to_json(&MatrixDocument::from_matrix(m))
}

pub(crate) fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDocument {
    pub theta: f64,
    pub r: f64,
    pub phi: f64,
    pub entries: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepDocument {
    Coupler { tag: String },
    Layer { blocks: Vec<BlockDocument> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub pattern: String,
    pub scale_free: bool,
    pub coupler_count: usize,
    pub squeezing_budget: Vec<f64>,
    pub max_pattern_violation: f64,
    pub net: MatrixDocument,
    /// Time order: the first step acts first.
    pub steps: Vec<StepDocument>,
}

pub const COUPLER_TAG: &str = "S";

impl SequenceDocument {
    pub fn from_sequence<T: Real>(seq: &ProtocolSequence<T>) -> Result<Self> {
        let mut steps = Vec::with_capacity(seq.steps().len());
        for step in seq.steps() {
            steps.push(match step {
                Step::Coupler => StepDocument::Coupler {
                    tag: COUPLER_TAG.to_string(),
                },
                Step::Layer(layer) => {
                    let mut blocks = Vec::with_capacity(layer.n_modes());
                    for b in layer.blocks() {
                        let e = euler_decompose(b)?;
                        blocks.push(BlockDocument {
                            theta: e.theta.to_f64_lossy(),
                            r: e.r.to_f64_lossy(),
                            phi: e.phi.to_f64_lossy(),
                            entries: [
                                [b[(0, 0)].to_f64_lossy(), b[(0, 1)].to_f64_lossy()],
                                [b[(1, 0)].to_f64_lossy(), b[(1, 1)].to_f64_lossy()],
                            ],
                        });
                    }
                    StepDocument::Layer { blocks }
                }
            });
        }
        Ok(Self {
            pattern: seq.pattern().name().to_string(),
            scale_free: seq.pattern().scale_free,
            coupler_count: seq.coupler_count(),
            squeezing_budget: seq
                .squeezing_budget()
                .iter()
                .map(|x| x.to_f64_lossy())
                .collect(),
            max_pattern_violation: seq.report().max_violation,
            net: MatrixDocument::from_matrix(seq.net().matrix()),
            steps,
        })
    }

    /// Multiplies the raw block entries against `coupler`, independently of
    /// the in-memory sequence.
    pub fn replay(&self, coupler: &Mat<f64>) -> Result<Mat<f64>> {
        let d = coupler.nrows();
        let mut acc = Mat::<f64>::identity(d);
        for step in &self.steps {
            acc = match step {
                StepDocument::Coupler { .. } => coupler * &acc,
                StepDocument::Layer { blocks } => {
                    if 2 * blocks.len() != d {
                        return Err(Error::Format("layer size differs from coupler".into()));
                    }
                    let mut l = Mat::zeros(d, d);
                    for (m, b) in blocks.iter().enumerate() {
                        for (a, row) in b.entries.iter().enumerate() {
                            for (c, &x) in row.iter().enumerate() {
                                l[(2 * m + a, 2 * m + c)] = x;
                            }
                        }
                    }
                    &l * &acc
                }
            };
        }
        Ok(acc)
    }
}
