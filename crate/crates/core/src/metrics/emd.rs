//! Earth Mover's Distance between equal-cardinality clouds: exact by linear
//! assignment, approximate by log-domain entropic scaling.

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

use super::{check_dims, dist, PointGradients};

/// Largest cardinality accepted by [`emd_exact`] (the solver is cubic).
pub const EMD_EXACT_MAX_N: usize = 512;

/// Minimum-cost bijection from the points of `a` to the points of `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching<T> {
    /// `a[i]` is matched to `b[assignment[i]]`.
    pub assignment: Vec<usize>,
    /// Sum of Euclidean distances over matched pairs.
    pub cost: T,
}

impl<T: Scalar> Matching<T> {
    /// Cost divided by the number of points.
    pub fn mean_cost(&self) -> T {
        self.cost / T::from_count(self.assignment.len())
    }

    /// Gradient of `cost` with the matching held fixed. A pair at zero distance contributes nothing.
    pub fn gradient(&self, a: &PointCloud<T>, b: &PointCloud<T>) -> PointGradients<T> {
        let d = a.dim();
        let mut g = PointGradients::zeros(a, b);
        for (i, &j) in self.assignment.iter().enumerate() {
            let (p, q) = (a.point(i), b.point(j));
            let r = dist(p, q);
            if r > T::zero() {
                for k in 0..d {
                    let u = (p[k] - q[k]) / r;
                    g.a[i * d + k] = g.a[i * d + k] + u;
                    g.b[j * d + k] = g.b[j * d + k] - u;
                }
            }
        }
        g
    }
}

/// Cost of matching `a[i]` to `b[assignment[i]]`, summed in index order.
pub fn matching_cost<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>, assignment: &[usize]) -> T {
    assignment
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &j)| acc + dist(a.point(i), b.point(j)))
}

fn cost_matrix<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Vec<T> {
    let n = b.len();
    let mut c = Vec::with_capacity(a.len() * n);
    for p in a.points() {
        c.extend(b.points().map(|q| dist(p, q)));
    }
    c
}

fn check_pair<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<()> {
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(Error::UnequalCardinality(a.len(), b.len()));
    }
    Ok(())
}

/// Shortest-augmenting-path Hungarian method with dual potentials, `O(n^3)`.
/// `cost` is row-major `n x n`; returns the column assigned to each row.
fn hungarian<T: Scalar>(cost: &[T], n: usize) -> Vec<usize> {
    let inf = T::infinity();
    // 1-based with a virtual column 0, following the classical formulation.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] = u[row_of[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact EMD (sum form) under Euclidean ground distance.
pub fn emd_exact<T: Scalar>(a: &PointCloud<T>, b: &PointCloud<T>) -> Result<Matching<T>> {
    check_pair(a, b)?;
    let n = a.len();
    if n > EMD_EXACT_MAX_N {
        return Err(Error::TooLargeForExact {
            n,
            max: EMD_EXACT_MAX_N,
        });
    }
    let assignment = hungarian(&cost_matrix(a, b), n);
    let cost = matching_cost(a, b, &assignment);
    Ok(Matching { assignment, cost })
}

/// Result of [`emd_approx`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntropicEmd<T> {
    /// Transport cost (sum form) of a feasible plan; never below the exact EMD.
    pub value: T,
    /// False when the scaling iterations hit `max_iters` before the marginals settled.
    pub converged: bool,
    pub iterations: usize,
}

fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<T>().ln()
}

/// Entropic-regularized EMD with uniform weights.
///
/// Runs log-domain Sinkhorn scaling with epsilon annealed from the largest
/// ground cost down to `epsilon`, rounds the plan onto the transport polytope,
/// and also evaluates the permutation read greedily off the plan. The smaller
/// of the two feasible costs is returned, so `value >= emd_exact` always.
pub fn emd_approx<T: Scalar>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    epsilon: T,
    max_iters: usize,
) -> Result<EntropicEmd<T>> {
    check_pair(a, b)?;
    if !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = a.len();
    let c = cost_matrix(a, b);
    let nf = T::from_count(n);
    let log_w = -nf.ln();
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];

    let cmax = c.iter().copied().fold(T::zero(), T::max);
    let tol = T::lit(1e-9);
    let stage_tol = T::lit(1e-4);
    let stage_cap = 100usize;
    let half = T::lit(0.5);
    let mut eps = cmax.max(epsilon);
    let mut iterations = 0usize;
    let mut final_err = T::infinity();

    loop {
        let last_stage = eps <= epsilon;
        let mut stage_iters = 0;
        loop {
            if iterations >= max_iters {
                break;
            }
            for j in 0..n {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - c[i * n + j]) / eps));
                g[j] = eps * (log_w - lse);
            }
            for i in 0..n {
                let row = &c[i * n..(i + 1) * n];
                let lse = log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps));
                f[i] = eps * (log_w - lse);
            }
            iterations += 1;
            stage_iters += 1;
            // Rows are exact after the f-update; measure the column marginal error.
            let mut err = T::zero();
            for j in 0..n {
                let col = (0..n)
                    .map(|i| ((f[i] + g[j] - c[i * n + j]) / eps).exp())
                    .sum::<T>();
                err = err + (col - T::one() / nf).abs();
            }
            final_err = err;
            if (last_stage && err < tol)
                || (!last_stage && (err < stage_tol || stage_iters >= stage_cap))
            {
                break;
            }
        }
        if last_stage || iterations >= max_iters {
            break;
        }
        eps = (eps * half).max(epsilon);
    }

    let mut plan: Vec<T> = (0..n * n)
        .map(|k| ((f[k / n] + g[k % n] - c[k]) / eps).exp())
        .collect();
    round_to_polytope(&mut plan, n);
    let plan_cost = plan.iter().zip(&c).map(|(&p, &w)| p * w).sum::<T>() * nf;
    let perm = greedy_permutation(&plan, n);
    let perm_cost = matching_cost(a, b, &perm);

    Ok(EntropicEmd {
        value: plan_cost.min(perm_cost),
        converged: final_err < tol,
        iterations,
    })
}

/// Projects a nonnegative plan onto the set with both marginals equal to `1/n`
/// (row/column down-scaling followed by a rank-one correction of the deficit).
fn round_to_polytope<T: Scalar>(plan: &mut [T], n: usize) {
    let target = T::one() / T::from_count(n);
    for i in 0..n {
        let row = &mut plan[i * n..(i + 1) * n];
        let s: T = row.iter().copied().sum();
        if s > target {
            let k = target / s;
            row.iter_mut().for_each(|p| *p = *p * k);
        }
    }
    for j in 0..n {
        let s: T = (0..n).map(|i| plan[i * n + j]).sum();
        if s > target {
            let k = target / s;
            (0..n).for_each(|i| plan[i * n + j] = plan[i * n + j] * k);
        }
    }
    let row_def: Vec<T> = (0..n)
        .map(|i| target - plan[i * n..(i + 1) * n].iter().copied().sum::<T>())
        .collect();
    let col_def: Vec<T> = (0..n)
        .map(|j| target - (0..n).map(|i| plan[i * n + j]).sum::<T>())
        .collect();
    let total: T = col_def.iter().copied().sum();
    if total > T::zero() {
        for i in 0..n {
            for j in 0..n {
                plan[i * n + j] = plan[i * n + j] + row_def[i] * col_def[j] / total;
            }
        }
    }
}

/// Reads a permutation off a plan by taking entries in decreasing mass order.
fn greedy_permutation<T: Scalar>(plan: &[T], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n * n).collect();
    order.sort_by(|&x, &y| {
        plan[y]
            .partial_cmp(&plan[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut assignment = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    let mut left = n;
    for k in order {
        let (i, j) = (k / n, k % n);
        if assignment[i] == usize::MAX && !col_used[j] {
            assignment[i] = j;
            col_used[j] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud<f64> {
        PointCloud::from_points(points).unwrap()
    }

    #[test]
    fn single_pair_is_three_four_five() {
        let m = emd_exact(&cloud(&[[0.0, 0.0]]), &cloud(&[[3.0, 4.0]])).unwrap();
        assert_eq!(m.cost, 5.0);
        assert_eq!(m.assignment, vec![0]);
    }

    #[test]
    fn vertical_matching_beats_crossed() {
        let a = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = cloud(&[[0.0, 1.0], [1.0, 1.0]]);
        let m = emd_exact(&a, &b).unwrap();
        assert_eq!(m.assignment, vec![0, 1]);
        assert_eq!(m.cost, 2.0);
        assert!((matching_cost(&a, &b, &[1, 0]) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_clouds_cost_zero() {
        let a = cloud(&[[0.3, 0.1], [-1.0, 2.0], [5.0, 5.0]]);
        let m = emd_exact(&a, &a).unwrap();
        assert_eq!(m.cost, 0.0);
        assert_eq!(m.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_pairs() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            emd_exact(&a, &b),
            Err(Error::UnequalCardinality(1, 2))
        ));
        let big = PointCloud::from_flat(2, (0..2 * 513).map(|k| k as f64).collect()).unwrap();
        assert!(matches!(
            emd_exact(&big, &big),
            Err(Error::TooLargeForExact { n: 513, .. })
        ));
        assert!(emd_approx(&a, &a, 0.0, 10).is_err());
    }

    #[test]
    fn approx_matches_small_examples() {
        let a = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = cloud(&[[0.0, 1.0], [1.0, 1.0]]);
        let r = emd_approx(&a, &b, 0.001, 1000).unwrap();
        assert!((r.value - 2.0).abs() <= 0.02, "{r:?}");
        assert!(r.value >= 2.0 - 1e-12);

        let s = cloud(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let r = emd_approx(&s, &s, 0.01, 1000).unwrap();
        assert!(r.value <= 1e-6, "{r:?}");
    }

    #[test]
    fn approx_reports_non_convergence() {
        let a = cloud(&[[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]]);
        let b = cloud(&[[0.0, 0.3], [0.1, 0.1], [0.2, 0.5]]);
        let r = emd_approx(&a, &b, 1e-4, 1).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.value.is_finite());
    }

    #[test]
    fn gradient_of_single_pair_is_unit_vector() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[3.0, 4.0]]);
        let g = emd_exact(&a, &b).unwrap().gradient(&a, &b);
        assert!((g.a[0] + 0.6).abs() < 1e-15 && (g.a[1] + 0.8).abs() < 1e-15);
        assert!((g.b[0] - 0.6).abs() < 1e-15 && (g.b[1] - 0.8).abs() < 1e-15);
    }
}
