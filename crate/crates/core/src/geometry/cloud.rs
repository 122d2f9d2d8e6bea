use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Fixed-cardinality ordered set of 2D or 3D points, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    dim: usize,
    coords: Vec<T>,
}

/// Affine map `p -> (p - center) / scale` produced by [`PointCloud::normalize_with_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeTransform<T> {
    pub center: Vec<T>,
    pub scale: T,
}

impl<T: Scalar> NormalizeTransform<T> {
    pub fn apply(&self, cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
        if cloud.dim != self.center.len() {
            return Err(Error::DimensionMismatch(cloud.dim, self.center.len()));
        }
        let coords = cloud
            .coords
            .chunks_exact(cloud.dim)
            .flat_map(|p| {
                p.iter()
                    .zip(&self.center)
                    .map(|(&x, &c)| (x - c) / self.scale)
            })
            .collect();
        PointCloud::from_flat(cloud.dim, coords)
    }
}

impl<T: Scalar> PointCloud<T> {
    /// Builds a cloud from flat row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(pos / dim));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[T]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyCloud)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch(dim, p.len()));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    /// Axis-aligned bounding box as `(min, max)` per axis.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.points() {
            for (k, &x) in p.iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        (lo, hi)
    }

    /// The transform that centers the bounding box at the origin with maximum half-extent 1.
    pub fn normalizing_transform(&self) -> Result<NormalizeTransform<T>> {
        let (lo, hi) = self.bounding_box();
        let two = T::lit(2.0);
        let center: Vec<T> = lo.iter().zip(&hi).map(|(&a, &b)| (a + b) / two).collect();
        let scale = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| (b - a) / two)
            .fold(T::zero(), T::max);
        if scale <= T::zero() {
            return Err(Error::ZeroExtent);
        }
        Ok(NormalizeTransform { center, scale })
    }

    pub fn normalize(&self) -> Result<Self> {
        self.normalize_with_transform().map(|(c, _)| c)
    }

    pub fn normalize_with_transform(&self) -> Result<(Self, NormalizeTransform<T>)> {
        let t = self.normalizing_transform()?;
        Ok((t.apply(self)?, t))
    }

    /// Resamples to exactly `target_n` points.
    ///
    /// Downsampling keeps a uniform random subset (original order preserved).
    /// Upsampling keeps every original point and appends duplicates drawn
    /// uniformly with replacement; no coordinates are invented.
    pub fn resample(&self, target_n: usize, seed: u64) -> Result<Self> {
        if target_n == 0 {
            return Err(Error::InvalidArgument(
                "resample target must be positive".into(),
            ));
        }
        let n = self.len();
        let mut rng = rng_for(seed, &[0x5e5a]);
        let picks: Vec<usize> = if target_n <= n {
            let mut idx = index::sample(&mut rng, n, target_n).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n)
                .chain((n..target_n).map(|_| rng.random_range(0..n)))
                .collect()
        };
        Ok(self.select(&picks))
    }

    /// Gathers the given point indices (which must be in range).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Applies `f` to every coordinate; fails if any result is non-finite.
    pub fn map_coords(&self, mut f: impl FnMut(usize, T) -> T) -> Result<Self> {
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(k, &x)| f(k, x))
            .collect();
        Self::from_flat(self.dim, coords)
    }

    /// Applies a `dim x dim` row-major linear map to every point.
    pub fn transform_linear(&self, matrix: &[T]) -> Result<Self> {
        let d = self.dim;
        if matrix.len() != d * d {
            return Err(Error::Shape(format!("expected {}x{} matrix", d, d)));
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            for r in 0..d {
                coords.push((0..d).map(|c| matrix[r * d + c] * p[c]).sum());
            }
        }
        Self::from_flat(d, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[&[f64]]) -> PointCloud<f64> {
        PointCloud::from_points(points).unwrap()
    }

    #[test]
    fn normalize_two_points() {
        let c = cloud(&[&[2.0, 0.0], &[4.0, 0.0]]).normalize().unwrap();
        assert_eq!(c.coords(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalize_longest_axis_3d() {
        let c = cloud(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0], &[0.0, 1.0, 1.0]]);
        let (n, t) = c.normalize_with_transform().unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(
            n.coords(),
            &[0.0, -0.5, -1.0, 0.0, -0.5, 1.0, 0.0, 0.5, 0.0]
        );
        let (lo, hi) = n.bounding_box();
        assert_eq!((lo[2], hi[2]), (-1.0, 1.0));
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let c = cloud(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(c.normalize(), Err(Error::ZeroExtent)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            PointCloud::<f64>::from_flat(2, vec![]),
            Err(Error::EmptyCloud)
        ));
        assert!(matches!(
            PointCloud::from_flat(2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            PointCloud::from_flat(4, vec![0.0; 4]),
            Err(Error::UnsupportedDimension(4))
        ));
        assert!(PointCloud::from_points(&[vec![0.0, 1.0], vec![0.0]]).is_err());
    }

    #[test]
    fn resample_same_size_is_identity() {
        let c = cloud(&[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0]]);
        assert_eq!(c.resample(3, 99).unwrap(), c);
    }

    #[test]
    fn resample_subset_is_deterministic() {
        let c = cloud(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let a = c.resample(2, 5).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, c.resample(2, 5).unwrap());
        assert_ne!(a.point(0), a.point(1));
    }

    #[test]
    fn resample_upsampling_duplicates() {
        let c = cloud(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let r = c.resample(5, 3).unwrap();
        assert_eq!(r.len(), 5);
        for p in r.points() {
            assert!(p == [0.0, 0.0] || p == [1.0, 1.0]);
        }
        assert!(matches!(c.resample(0, 1), Err(Error::InvalidArgument(_))));
    }
}
