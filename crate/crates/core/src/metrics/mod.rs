//! Point-set distances and their gradients.
//!
//! EMD is reported in sum form (total transported distance). Chamfer uses
//! squared distances averaged per direction. UHD is directed from the partial
//! shape to the completion. TMD is the mean pairwise Chamfer over a sample set.

mod emd;
mod nearest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

pub use emd::{emd_approx, emd_exact, matching_cost, EntropicEmd, Matching, EMD_EXACT_MAX_N};
pub use nearest::{
    chamfer, chamfer_gradient, nearest, tmd, uhd, uhd_gradient, uhd_witness, UhdWitness,
};

/// Default entropic regularization for [`emd_approx`].
pub const DEFAULT_EMD_EPSILON: f64 = 0.005;
pub const DEFAULT_EMD_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue<T> {
    pub value: T,
    pub gradient: Option<PointGradients<T>>,
}

impl<T> MetricValue<T> {
    pub fn new(value: T) -> Self {
        Self {
            value,
            gradient: None,
        }
    }
}

/// Per-coordinate gradients for both inputs, laid out like [`PointCloud::coords`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradients<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> PointGradients<T> {
    pub fn zeros(a: &PointCloud<T>, b: &PointCloud<T>) -> Self {
        Self {
            a: vec![T::zero(); a.coords().len()],
            b: vec![T::zero(); b.coords().len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    EmdExact,
    Chamfer,
    Uhd,
}

impl<T: Scalar> MetricValue<T> {
    fn with_gradient(value: T, gradient: PointGradients<T>) -> Self {
        Self {
            value,
            gradient: Some(gradient),
        }
    }
}

/// Evaluates `metric` together with its (sub)gradient.
pub fn metric_with_gradient<T: Scalar>(
    metric: Metric,
    a: &PointCloud<T>,
    b: &PointCloud<T>,
) -> Result<MetricValue<T>> {
    match metric {
        Metric::EmdExact => {
            let m = emd_exact(a, b)?;
            Ok(MetricValue::with_gradient(m.cost, m.gradient(a, b)))
        }
        Metric::Chamfer => Ok(MetricValue::with_gradient(
            chamfer(a, b)?.value,
            chamfer_gradient(a, b)?,
        )),
        Metric::Uhd => Ok(MetricValue::with_gradient(
            uhd(a, b)?.value,
            uhd_gradient(a, b)?,
        )),
    }
}

/// Gradient of `metric(a, b)` with respect to every coordinate of both inputs.
///
/// EMD holds the optimal matching fixed, Chamfer holds nearest neighbours fixed,
/// and UHD puts the whole subgradient on its witness pair.
pub fn metric_gradient<T: Scalar>(
    metric: Metric,
    a: &PointCloud<T>,
    b: &PointCloud<T>,
) -> Result<PointGradients<T>> {
    metric_with_gradient(metric, a, b).map(|v| v.gradient.expect("gradient requested"))
}

pub(crate) fn check_dims<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

#[inline]
pub(crate) fn dist<T: Scalar>(p: &[T], q: &[T]) -> T {
    sq_dist(p, q).sqrt()
}
