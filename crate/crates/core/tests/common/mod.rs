#![allow(dead_code)]

use imle_complete::geometry::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud<f64> {
    PointCloud::from_flat(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, the error measure used for gradient checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            p.swap(j, k - 1);
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

/// Minimum total matching cost over every bijection.
pub fn brute_force_emd(a: &PointCloud<f64>, b: &PointCloud<f64>) -> f64 {
    permutations(a.len())
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| {
                    a.point(i)
                        .iter()
                        .zip(b.point(j))
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rotation about the origin: 2D by `angle`, 3D by `angle` about a fixed skew axis.
pub fn rotation(d: usize, angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    if d == 2 {
        return vec![c, -s, s, c];
    }
    let norm = (1.0f64 + 4.0 + 9.0).sqrt();
    let (x, y, z) = (1.0 / norm, 2.0 / norm, 3.0 / norm);
    let t = 1.0 - c;
    vec![
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    ]
}
