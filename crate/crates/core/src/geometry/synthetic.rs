//! Procedural part-based shapes with a removable part drawn from `K` discrete
//! styles. The partial input is the shape with that part removed entirely, so
//! the set of plausible completions is exactly the `K` styles.

use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cloud::{NormalizeTransform, PointCloud};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// One of `table`, `chair`, `table3d`.
    pub template: String,
    pub mode_count: usize,
    pub points_per_cloud: usize,
    pub noise_sigma: f64,
    /// Fraction of the points that belong to the removable part.
    pub partial_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            template: "table".into(),
            mode_count: 3,
            points_per_cloud: 128,
            noise_sigma: 0.0,
            partial_fraction: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<Template> {
        let template: Template = self.template.parse()?;
        if self.mode_count < 1 || self.mode_count > template.max_modes() {
            return Err(Error::InvalidArgument(format!(
                "mode_count must be in [1, {}] for template {:?}, got {}",
                template.max_modes(),
                self.template,
                self.mode_count
            )));
        }
        if self.points_per_cloud < 16 {
            return Err(Error::InvalidArgument(format!(
                "points_per_cloud must be >= 16, got {}",
                self.points_per_cloud
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.partial_fraction > 0.0 && self.partial_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "partial_fraction must be in (0, 1), got {}",
                self.partial_fraction
            )));
        }
        Ok(template)
    }

    /// Points assigned to the removable part; the rest belong to the fixed parts.
    pub fn removed_points(&self) -> usize {
        let n = self.points_per_cloud;
        ((self.partial_fraction * n as f64).round() as usize).clamp(1, n - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry<T> {
    pub partial: PointCloud<T>,
    pub complete: PointCloud<T>,
    pub mode_label: usize,
    /// Noise-free rendering of this entry's geometry with each of the `K` styles,
    /// in the same frame as `complete`. Used for mode assignment during evaluation.
    pub mode_refs: Vec<PointCloud<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// 2D table: rectangular top; base is two legs, a pedestal, four legs or a sled.
    Table,
    /// 2D chair: seat and legs; backrest is tall, short, slatted or with an armrest.
    Chair,
    /// 3D table: box top; base is four legs, a pedestal, two side panels or a trestle.
    Table3d,
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Template::Table),
            "chair" => Ok(Template::Chair),
            "table3d" => Ok(Template::Table3d),
            other => Err(Error::UnknownTemplate(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn d2(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            lo: [x0, y0, 0.0],
            hi: [x1, y1, 0.0],
        }
    }

    fn d3(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Self {
        Self {
            lo: [x.0, y.0, z.0],
            hi: [x.1, y.1, z.1],
        }
    }

    fn volume(&self, dim: usize) -> f64 {
        (0..dim).map(|k| self.hi[k] - self.lo[k]).product()
    }
}

const INSET: f64 = 0.05;

impl Template {
    pub fn dim(self) -> usize {
        match self {
            Template::Table | Template::Chair => 2,
            Template::Table3d => 3,
        }
    }

    pub fn max_modes(self) -> usize {
        4
    }

    fn sample_params(self, rng: &mut Rng) -> Vec<f64> {
        let ranges: &[(f64, f64)] = match self {
            // width, top thickness, height, leg thickness
            Template::Table => &[(1.6, 2.0), (0.15, 0.25), (0.9, 1.1), (0.08, 0.12)],
            // seat width, seat height, seat thickness, leg thickness
            Template::Chair => &[(0.9, 1.1), (0.9, 1.1), (0.08, 0.12), (0.07, 0.1)],
            // width, depth, height, top thickness, leg thickness
            Template::Table3d => &[(1.6, 2.0), (0.9, 1.1), (0.9, 1.1), (0.1, 0.2), (0.08, 0.12)],
        };
        ranges
            .iter()
            .map(|&(a, b)| rng.random_range(a..b))
            .collect()
    }

    fn fixed_parts(self, p: &[f64]) -> Vec<Aabb> {
        match self {
            Template::Table => {
                let (w, t, h) = (p[0], p[1], p[2]);
                vec![Aabb::d2(-w / 2.0, w / 2.0, h, h + t)]
            }
            Template::Chair => {
                let (sw, sh, st, lt) = (p[0], p[1], p[2], p[3]);
                vec![
                    Aabb::d2(0.0, sw, sh, sh + st),
                    Aabb::d2(sw - lt, sw, 0.0, sh),
                    Aabb::d2(0.0, lt, 0.0, sh),
                ]
            }
            Template::Table3d => {
                let (w, dp, h, t) = (p[0], p[1], p[2], p[3]);
                vec![Aabb::d3(
                    (-w / 2.0, w / 2.0),
                    (h, h + t),
                    (-dp / 2.0, dp / 2.0),
                )]
            }
        }
    }

    fn style_parts(self, p: &[f64], style: usize) -> Vec<Aabb> {
        match self {
            Template::Table => {
                let (w, h, lt) = (p[0], p[2], p[3]);
                let left = Aabb::d2(-w / 2.0 + INSET, -w / 2.0 + INSET + lt, 0.0, h);
                let right = Aabb::d2(w / 2.0 - INSET - lt, w / 2.0 - INSET, 0.0, h);
                match style {
                    0 => vec![left, right],
                    1 => vec![
                        Aabb::d2(-lt, lt, 0.12, h),
                        Aabb::d2(-0.3 * w, 0.3 * w, 0.0, 0.12),
                    ],
                    2 => {
                        let xi = w / 5.0;
                        vec![
                            left,
                            right,
                            Aabb::d2(-xi - lt / 2.0, -xi + lt / 2.0, 0.0, h),
                            Aabb::d2(xi - lt / 2.0, xi + lt / 2.0, 0.0, h),
                        ]
                    }
                    _ => {
                        let runner = 0.15;
                        let mut l = left;
                        let mut r = right;
                        l.lo[1] = runner;
                        r.lo[1] = runner;
                        vec![
                            l,
                            r,
                            Aabb::d2(-w / 2.0 + INSET, w / 2.0 - INSET, 0.0, runner),
                        ]
                    }
                }
            }
            Template::Chair => {
                let (sw, sh, st) = (p[0], p[1], p[2]);
                let base = sh + st;
                match style {
                    0 => vec![Aabb::d2(0.0, 0.1, base, base + 1.0)],
                    1 => vec![Aabb::d2(0.0, 0.1, base, base + 0.45)],
                    2 => vec![
                        Aabb::d2(0.0, 0.08, base, base + 0.9),
                        Aabb::d2(0.08, 0.5 * sw, base + 0.8, base + 0.9),
                    ],
                    _ => vec![
                        Aabb::d2(0.0, 0.1, base, base + 0.7),
                        Aabb::d2(0.1, sw, base + 0.3, base + 0.36),
                        Aabb::d2(sw - 0.06, sw, base, base + 0.3),
                    ],
                }
            }
            Template::Table3d => {
                let (w, dp, h, lt) = (p[0], p[1], p[2], p[4]);
                match style {
                    0 => {
                        let xs = w / 2.0 - INSET - lt / 2.0;
                        let zs = dp / 2.0 - INSET - lt / 2.0;
                        [(-xs, -zs), (-xs, zs), (xs, -zs), (xs, zs)]
                            .iter()
                            .map(|&(x, z)| {
                                Aabb::d3(
                                    (x - lt / 2.0, x + lt / 2.0),
                                    (0.0, h),
                                    (z - lt / 2.0, z + lt / 2.0),
                                )
                            })
                            .collect()
                    }
                    1 => vec![
                        Aabb::d3((-lt, lt), (0.1, h), (-lt, lt)),
                        Aabb::d3((-0.3 * w, 0.3 * w), (0.0, 0.1), (-0.3 * dp, 0.3 * dp)),
                    ],
                    2 => {
                        let z = (-dp / 2.0 + INSET, dp / 2.0 - INSET);
                        vec![
                            Aabb::d3((-w / 2.0 + INSET, -w / 2.0 + INSET + lt), (0.0, h), z),
                            Aabb::d3((w / 2.0 - INSET - lt, w / 2.0 - INSET), (0.0, h), z),
                        ]
                    }
                    _ => {
                        let xs = w / 2.0 - 0.2;
                        let z = (-dp / 2.0 + INSET, dp / 2.0 - INSET);
                        let mut parts = Vec::new();
                        for x in [-xs, xs] {
                            parts.push(Aabb::d3(
                                (x - lt / 2.0, x + lt / 2.0),
                                (0.08, h),
                                (-lt / 2.0, lt / 2.0),
                            ));
                            parts.push(Aabb::d3((x - lt / 2.0, x + lt / 2.0), (0.0, 0.08), z));
                        }
                        parts.push(Aabb::d3((-xs, xs), (0.4, 0.46), (-lt / 2.0, lt / 2.0)));
                        parts
                    }
                }
            }
        }
    }

    /// Style-independent frame: normalizes the union of the fixed parts and every style,
    /// so the partial shape carries no information about which style was removed.
    fn frame(self, p: &[f64], modes: usize) -> NormalizeTransform<f64> {
        let dim = self.dim();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let boxes = self
            .fixed_parts(p)
            .into_iter()
            .chain((0..modes).flat_map(|k| self.style_parts(p, k)));
        for b in boxes {
            for k in 0..dim {
                lo[k] = lo[k].min(b.lo[k]);
                hi[k] = hi[k].max(b.hi[k]);
            }
        }
        let center = (0..dim).map(|k| (lo[k] + hi[k]) / 2.0).collect();
        let scale = (0..dim).map(|k| (hi[k] - lo[k]) / 2.0).fold(0.0, f64::max);
        NormalizeTransform { center, scale }
    }
}

/// Samples `count` points uniformly over a union of boxes, allocating points to
/// boxes in proportion to their volume (largest-remainder rounding).
fn sample_boxes(boxes: &[Aabb], dim: usize, count: usize, rng: &mut Rng, out: &mut Vec<f64>) {
    let volumes: Vec<f64> = boxes.iter().map(|b| b.volume(dim)).collect();
    let total: f64 = volumes.iter().sum();
    let quotas: Vec<f64> = volumes.iter().map(|v| v / total * count as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = count - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    for (b, &c) in boxes.iter().zip(&counts) {
        for _ in 0..c {
            for k in 0..dim {
                out.push(if b.hi[k] > b.lo[k] {
                    rng.random_range(b.lo[k]..b.hi[k])
                } else {
                    b.lo[k]
                });
            }
        }
    }
}

fn to_cloud<T: Scalar>(dim: usize, coords: Vec<f64>) -> Result<PointCloud<T>> {
    PointCloud::from_flat(dim, coords.into_iter().map(T::lit).collect())
}

fn make_entry<T: Scalar>(
    spec: &SyntheticSpec,
    template: Template,
    seed: u64,
    index: usize,
) -> Result<DatasetEntry<T>> {
    let dim = template.dim();
    let n = spec.points_per_cloud;
    let n_removed = spec.removed_points();
    let n_fixed = n - n_removed;
    let k = spec.mode_count;
    let idx = index as u64;

    let mut rng = rng_for(seed, &[idx]);
    let params = template.sample_params(&mut rng);
    let label = rng.random_range(0..k);

    let mut raw = Vec::with_capacity(n * dim);
    sample_boxes(
        &template.fixed_parts(&params),
        dim,
        n_fixed,
        &mut rng,
        &mut raw,
    );
    sample_boxes(
        &template.style_parts(&params, label),
        dim,
        n_removed,
        &mut rng,
        &mut raw,
    );
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for x in raw.iter_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    let frame = template.frame(&params, k);
    let complete_f64 = frame.apply(&PointCloud::from_flat(dim, raw)?)?;

    let mode_refs = (0..k)
        .map(|style| {
            let mut ref_rng = rng_for(seed, &[idx, 2, style as u64]);
            let mut pts = Vec::with_capacity(n * dim);
            sample_boxes(
                &template.fixed_parts(&params),
                dim,
                n_fixed,
                &mut ref_rng,
                &mut pts,
            );
            sample_boxes(
                &template.style_parts(&params, style),
                dim,
                n_removed,
                &mut ref_rng,
                &mut pts,
            );
            let cloud = frame.apply(&PointCloud::from_flat(dim, pts)?)?;
            to_cloud(dim, cloud.into_coords())
        })
        .collect::<Result<Vec<_>>>()?;

    let complete: PointCloud<T> = to_cloud(dim, complete_f64.into_coords())?;
    let fixed_indices: Vec<usize> = (0..n_fixed).collect();
    let partial = complete
        .select(&fixed_indices)
        .resample(n, derive_seed(seed, &[idx, 1]))?;

    Ok(DatasetEntry {
        partial,
        complete,
        mode_label: label,
        mode_refs,
    })
}

/// Generates `count` entries; entry `i` depends only on `(spec, seed, i)`.
pub fn make_dataset<T: Scalar>(
    spec: &SyntheticSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<DatasetEntry<T>>> {
    let template = spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("dataset count must be >= 1".into()));
    }
    (0..count)
        .map(|i| make_entry(spec, template, seed, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::uhd;

    #[test]
    fn unknown_template_is_rejected() {
        let spec = SyntheticSpec {
            template: "sofa".into(),
            ..Default::default()
        };
        assert!(matches!(
            make_dataset::<f64>(&spec, 1, 0),
            Err(Error::UnknownTemplate(_))
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            SyntheticSpec {
                mode_count: 0,
                ..Default::default()
            },
            SyntheticSpec {
                mode_count: 5,
                ..Default::default()
            },
            SyntheticSpec {
                points_per_cloud: 8,
                ..Default::default()
            },
            SyntheticSpec {
                noise_sigma: -0.1,
                ..Default::default()
            },
            SyntheticSpec {
                partial_fraction: 1.0,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
        assert!(make_dataset::<f64>(&SyntheticSpec::default(), 0, 0).is_err());
    }

    #[test]
    fn label_histogram_is_roughly_uniform() {
        let data = make_dataset::<f64>(&SyntheticSpec::default(), 300, 7).unwrap();
        let mut hist = [0usize; 3];
        for e in &data {
            hist[e.mode_label] += 1;
        }
        assert!(hist.iter().all(|&h| h >= 60), "{hist:?}");
    }

    #[test]
    fn every_template_produces_contained_partials() {
        for template in ["table", "chair", "table3d"] {
            for k in 1..=4 {
                let spec = SyntheticSpec {
                    template: template.into(),
                    mode_count: k,
                    points_per_cloud: 64,
                    ..Default::default()
                };
                for e in make_dataset::<f64>(&spec, 8, 3).unwrap() {
                    assert_eq!(e.partial.len(), 64);
                    assert_eq!(e.complete.len(), 64);
                    assert_eq!(e.mode_refs.len(), k);
                    assert!(e.mode_label < k);
                    assert_eq!(uhd(&e.partial, &e.complete).unwrap().value, 0.0);
                    let (lo, hi) = e.complete.bounding_box();
                    assert!(lo.iter().chain(&hi).all(|x| x.abs() <= 1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn noisy_partials_are_still_subsets() {
        let spec = SyntheticSpec {
            noise_sigma: 0.02,
            ..Default::default()
        };
        for e in make_dataset::<f64>(&spec, 5, 11).unwrap() {
            assert_eq!(uhd(&e.partial, &e.complete).unwrap().value, 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic_and_prefix_stable() {
        let spec = SyntheticSpec::default();
        let a = make_dataset::<f64>(&spec, 10, 42).unwrap();
        let b = make_dataset::<f64>(&spec, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = make_dataset::<f64>(&spec, 4, 42).unwrap();
        assert_eq!(&a[..4], &c[..]);
        assert_ne!(a, make_dataset::<f64>(&spec, 10, 43).unwrap());
    }
}
