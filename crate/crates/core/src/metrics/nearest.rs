//! Nearest-neighbour metrics: symmetric Chamfer, unidirectional Hausdorff, and
//! total mutual difference over a set of samples.

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

use super::{check_dims, sq_dist, MetricValue, PointGradients};

/// Index of and squared distance to the nearest point of `cloud` (lowest index on ties).
pub fn nearest<T: Scalar>(p: &[T], cloud: &PointCloud<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, q) in cloud.points().enumerate() {
        let d = sq_dist(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn directed_chamfer<T: Scalar>(from: &PointCloud<T>, to: &PointCloud<T>) -> T {
    let total = from
        .points()
        .fold(T::zero(), |acc, p| acc + nearest(p, to).1);
    total / T::from_count(from.len())
}

/// Symmetric Chamfer distance with squared distances, averaged per direction.
pub fn chamfer<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<MetricValue<T>> {
    check_dims(a, b)?;
    Ok(MetricValue::new(
        directed_chamfer(a, b) + directed_chamfer(b, a),
    ))
}

/// Chamfer gradient with nearest-neighbour assignments held fixed.
pub fn chamfer_gradient<T: Scalar>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
) -> Result<PointGradients<T>> {
    check_dims(a, b)?;
    let d = a.dim();
    let mut g = PointGradients::zeros(a, b);
    let two = T::lit(2.0);
    let mut accumulate = |from: &PointCloud<T>, to: &PointCloud<T>, from_is_a: bool| {
        let w = two / T::from_count(from.len());
        for (i, p) in from.points().enumerate() {
            let (j, _) = nearest(p, to);
            let q = to.point(j);
            for k in 0..d {
                let v = w * (p[k] - q[k]);
                let (gf, gt) = if from_is_a {
                    (&mut g.a, &mut g.b)
                } else {
                    (&mut g.b, &mut g.a)
                };
                gf[i * d + k] = gf[i * d + k] + v;
                gt[j * d + k] = gt[j * d + k] - v;
            }
        }
    };
    accumulate(a, b, true);
    accumulate(b, a, false);
    Ok(g)
}

/// The partial point farthest from the completion, with its nearest completion point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhdWitness<T> {
    pub partial_index: usize,
    pub complete_index: usize,
    pub distance: T,
}

pub fn uhd_witness<T: Scalar>(
    partial: &PointCloud<T>,
    complete: &PointCloud<T>,
) -> Result<UhdWitness<T>> {
    check_dims(partial, complete)?;
    let mut best = UhdWitness {
        partial_index: 0,
        complete_index: 0,
        distance: T::neg_infinity(),
    };
    for (i, p) in partial.points().enumerate() {
        let (j, d2) = nearest(p, complete);
        let r = d2.sqrt();
        if r > best.distance {
            best = UhdWitness {
                partial_index: i,
                complete_index: j,
                distance: r,
            };
        }
    }
    Ok(best)
}

/// Unidirectional Hausdorff distance: how far the partial shape sticks out of the completion.
pub fn uhd<T: Scalar>(partial: &PointCloud<T>, complete: &PointCloud<T>) -> Result<MetricValue<T>> {
    uhd_witness(partial, complete).map(|w| MetricValue::new(w.distance))
}

/// Subgradient of UHD concentrated on the witness pair.
pub fn uhd_gradient<T: Scalar>(
    partial: &PointCloud<T>,
    complete: &PointCloud<T>,
) -> Result<PointGradients<T>> {
    let w = uhd_witness(partial, complete)?;
    let d = partial.dim();
    let mut g = PointGradients::zeros(partial, complete);
    if w.distance > T::zero() {
        let (p, q) = (
            partial.point(w.partial_index),
            complete.point(w.complete_index),
        );
        for k in 0..d {
            let u = (p[k] - q[k]) / w.distance;
            g.a[w.partial_index * d + k] = u;
            g.b[w.complete_index * d + k] = -u;
        }
    }
    Ok(g)
}

/// Total mutual difference: mean Chamfer distance over unordered pairs of samples.
pub fn tmd<T: Scalar>(samples: &[PointCloud<T>]) -> Result<MetricValue<T>> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "tmd needs at least 2 samples, got {m}"
        )));
    }
    let (n, d) = (samples[0].len(), samples[0].dim());
    if let Some(s) = samples.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch(d, s.dim()));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::UnequalCardinality(n, s.len()));
    }
    let mut pair_values = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            pair_values.push(chamfer(&samples[i], &samples[j])?.value);
        }
    }
    // Sorting makes the sum independent of sample order.
    pair_values.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let total = pair_values.iter().fold(T::zero(), |acc, &v| acc + v);
    Ok(MetricValue::new(total / T::from_count(pair_values.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud<f64> {
        PointCloud::from_points(points).unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0]]);
        assert_eq!(chamfer(&a, &a).unwrap().value, 0.0);
        assert_eq!(chamfer(&a, &b).unwrap().value, 2.0);
        let a2 = cloud(&[[0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(chamfer(&a2, &b).unwrap().value, 2.0);
        assert_eq!(chamfer(&b, &a2).unwrap().value, 2.0);
    }

    #[test]
    fn chamfer_dimension_mismatch() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = PointCloud::from_flat(3, vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            chamfer(&a, &b),
            Err(Error::DimensionMismatch(2, 3))
        ));
        assert!(uhd(&a, &b).is_err());
    }

    #[test]
    fn uhd_examples() {
        let p = cloud(&[[0.0, 0.0], [5.0, 0.0]]);
        let c = cloud(&[[0.0, 0.0], [4.0, 0.0]]);
        assert_eq!(uhd(&p, &c).unwrap().value, 1.0);
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0], [10.0, 0.0]]);
        assert_eq!(uhd(&a, &b).unwrap().value, 0.0);
        assert_eq!(uhd(&b, &a).unwrap().value, 10.0);
    }

    #[test]
    fn tmd_examples() {
        let s = cloud(&[[0.3, 0.2], [1.0, 1.0]]);
        assert_eq!(tmd(&[s.clone(), s.clone(), s.clone()]).unwrap().value, 0.0);
        let t = cloud(&[[0.0, 0.3], [1.0, 0.0]]);
        assert_eq!(
            tmd(&[s.clone(), t.clone()]).unwrap().value,
            chamfer(&s, &t).unwrap().value
        );
        assert!(tmd(&[s]).is_err());
    }

    #[test]
    fn tmd_pairwise_one_two_three() {
        // Pairwise Chamfer values 1, 2, 3 realized in the plane: 2|xi - xj|^2 = value.
        // Side lengths sqrt(1/2), 1, sqrt(3/2) form a right triangle (1/2 + 1 = 3/2).
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[0.5f64.sqrt(), 0.0]]);
        let c = cloud(&[[0.0, 1.0]]);
        assert!((chamfer(&a, &b).unwrap().value - 1.0).abs() < 1e-15);
        assert!((chamfer(&a, &c).unwrap().value - 2.0).abs() < 1e-15);
        assert!((chamfer(&b, &c).unwrap().value - 3.0).abs() < 1e-15);
        assert!((tmd(&[a, b, c]).unwrap().value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn chamfer_gradient_vanishes_on_identical_clouds() {
        let a = cloud(&[[0.1, 0.4], [1.0, -2.0], [3.0, 0.5]]);
        let g = chamfer_gradient(&a, &a).unwrap();
        assert!(g.a.iter().chain(&g.b).all(|&v| v == 0.0));
    }
}
