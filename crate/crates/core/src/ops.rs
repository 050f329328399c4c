//! The fixed operation vocabulary and its exact forward/backward rules.
//!
//! All operations map a `B×d` batch to a `B×d` batch, so any op is valid on
//! any edge and `skip` never needs a projection.

use core::fmt;

use alloc::vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One candidate operation on a cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    /// Outputs zeros; severs the edge.
    #[serde(rename = "zero")]
    Zero,
    /// Identity.
    #[serde(rename = "skip")]
    Skip,
    /// `tanh(xW + b)`.
    #[serde(rename = "linear_tanh")]
    LinearTanh,
    /// `relu(xW + b)`.
    #[serde(rename = "linear_relu")]
    LinearRelu,
    /// Window-3 moving average along the feature axis, edge-replicated.
    #[serde(rename = "featavg")]
    FeatAvg,
}

impl OpKind {
    /// Every kind, in canonical order.
    pub const ALL: [OpKind; 5] = [
        OpKind::Zero,
        OpKind::Skip,
        OpKind::LinearTanh,
        OpKind::LinearRelu,
        OpKind::FeatAvg,
    ];

    /// Whether the op owns a `(W, b)` bundle.
    pub fn is_parametric(self) -> bool {
        matches!(self, OpKind::LinearTanh | OpKind::LinearRelu)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::Skip => "skip",
            OpKind::LinearTanh => "linear_tanh",
            OpKind::LinearRelu => "linear_relu",
            OpKind::FeatAvg => "featavg",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Borrowed weights of a linear op: `W` is `d×d`, `b` has length `d`.
#[derive(Debug, Clone, Copy)]
pub struct LinearParams<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

/// Gradients with respect to a linear op's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check_params(x: &Tensor, p: &LinearParams<'_>) -> Result<()> {
    let d = x.cols();
    if p.weight.shape() != [d, d] {
        return Err(Error::ShapeMismatch {
            context: "linear weight",
            expected: vec![d, d],
            found: p.weight.shape().to_vec(),
        });
    }
    if p.bias.len() != d {
        return Err(Error::ShapeMismatch {
            context: "linear bias",
            expected: vec![d],
            found: p.bias.shape().to_vec(),
        });
    }
    Ok(())
}

fn linear_pre(x: &Tensor, p: &LinearParams<'_>) -> Result<Tensor> {
    check_params(x, p)?;
    let mut z = x.matmul(p.weight)?;
    z.add_row_vector(p.bias)?;
    Ok(z)
}

fn require<'a>(kind: OpKind, params: Option<LinearParams<'a>>) -> Result<LinearParams<'a>> {
    params.ok_or(Error::MissingParams(kind))
}

/// Applies `kind` to the batch `x`.
pub fn op_forward(kind: OpKind, params: Option<LinearParams<'_>>, x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "op input",
            expected: vec![x.rows(), x.cols()],
            found: x.shape().to_vec(),
        });
    }
    match kind {
        OpKind::Zero => Ok(Tensor::zeros(x.shape())),
        OpKind::Skip => Ok(x.clone()),
        OpKind::LinearTanh => {
            let mut z = linear_pre(x, &require(kind, params)?)?;
            z.data_mut()
                .iter_mut()
                .for_each(|v| *v = crate::math::tanh(*v));
            Ok(z)
        }
        OpKind::LinearRelu => {
            let mut z = linear_pre(x, &require(kind, params)?)?;
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            Ok(z)
        }
        OpKind::FeatAvg => {
            let d = x.cols();
            let mut out = Tensor::zeros(x.shape());
            for r in 0..x.rows() {
                let xr = x.row(r);
                let or = out.row_mut(r);
                for (i, o) in or.iter_mut().enumerate() {
                    let lo = xr[i.saturating_sub(1)];
                    let hi = xr[(i + 1).min(d - 1)];
                    *o = (lo + xr[i] + hi) / 3.0;
                }
            }
            Ok(out)
        }
    }
}

/// Reverse-mode rule for `kind`: returns the input gradient and, for
/// parametric kinds, the weight gradients.
pub fn op_backward(
    kind: OpKind,
    params: Option<LinearParams<'_>>,
    x: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Option<LinearGrads>)> {
    if upstream.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            context: "upstream gradient",
            expected: x.shape().to_vec(),
            found: upstream.shape().to_vec(),
        });
    }
    match kind {
        OpKind::Zero => Ok((Tensor::zeros(x.shape()), None)),
        OpKind::Skip => Ok((upstream.clone(), None)),
        OpKind::LinearTanh | OpKind::LinearRelu => {
            let p = require(kind, params)?;
            let z = linear_pre(x, &p)?;
            let mut dz = upstream.clone();
            for (g, &zv) in dz.data_mut().iter_mut().zip(z.data()) {
                let slope = if kind == OpKind::LinearTanh {
                    let t = crate::math::tanh(zv);
                    1.0 - t * t
                } else if zv > 0.0 {
                    1.0
                } else {
                    0.0
                };
                *g *= slope;
            }
            let weight = x.transposed_matmul(&dz)?;
            let bias = dz.sum_rows();
            let dx = dz.matmul_transposed(p.weight)?;
            Ok((dx, Some(LinearGrads { weight, bias })))
        }
        OpKind::FeatAvg => {
            let d = x.cols();
            let mut dx = Tensor::zeros(x.shape());
            for r in 0..x.rows() {
                let gr = upstream.row(r).to_vec();
                let dr = dx.row_mut(r);
                for (i, g) in gr.iter().enumerate() {
                    let share = g / 3.0;
                    dr[i.saturating_sub(1)] += share;
                    dr[i] += share;
                    dr[(i + 1).min(d - 1)] += share;
                }
            }
            Ok((dx, None))
        }
    }
}
