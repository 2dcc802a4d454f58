//! Observable dictionaries: ordered families of basis functions evaluated on
//! snapshot point sets.
//!
//! Every family is nested: enlarging the size parameter appends functions
//! without reordering the existing prefix, so Galerkin matrices of a smaller
//! dictionary are leading principal submatrices of the larger one.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{SnapshotSet, StateSpace};
use crate::{Error, Result};

type C64 = Complex<f64>;

/// Position `p` in the circle Fourier order `0, +1, -1, +2, -2, ...`.
pub fn circle_frequency(p: usize) -> i64 {
    if p == 0 {
        0
    } else if p % 2 == 1 {
        ((p + 1) / 2) as i64
    } else {
        -((p / 2) as i64)
    }
}

/// Inverse of [`circle_frequency`].
pub fn circle_position(j: i64) -> usize {
    if j == 0 {
        0
    } else if j > 0 {
        (2 * j - 1) as usize
    } else {
        (-2 * j) as usize
    }
}

/// Torus frequency pairs ordered by ring `max(|j1|, |j2|)`, lexicographic
/// within each ring; a prefix of the order for any larger cutoff.
pub fn torus_frequencies(maxfreq: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity((2 * maxfreq + 1).pow(2));
    for r in 0..=(maxfreq as i64) {
        for j1 in -r..=r {
            for j2 in -r..=r {
                if j1.abs().max(j2.abs()) == r {
                    out.push((j1, j2));
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum Basis {
    /// `exp(i j theta) / sqrt(2 pi)` in the order of [`circle_frequency`].
    FourierCircle { maxfreq: usize },
    /// `exp(i (j1 x + j2 y)) / (2 pi)` in the order of [`torus_frequencies`].
    FourierTorus { maxfreq: usize },
    /// `1, sqrt(2) cos(j pi x)` for `j = 1..=maxfreq` on `[0, 1]`.
    CosineInterval { maxfreq: usize },
    /// `exp(i j angle(x, y)) / sqrt(pi)` on the unit disk, circle order.
    FourierAngleDisk { maxfreq: usize },
    /// `exp(-shape^2 ||x - c_k||^2)`, one function per center row.
    RbfGaussian { centers: DMatrix<f64>, shape: f64 },
    /// Normalized indicators `chi_[a,b) / sqrt(b - a)` of disjoint half-open
    /// cells, with caller-supplied integer labels.
    IndicatorPartition { cells: Vec<(f64, f64)>, labels: Vec<i64> },
}

/// An ordered dictionary of observables on a state space.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub space: StateSpace,
    pub basis: Basis,
}

/// Which side of a snapshot pair an evaluation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotSide {
    X,
    Y,
}

/// Dictionary values on one side of a snapshot set: row m, column j holds
/// `psi_j` at the m-th x-point (side X) or y-point (side Y).
#[derive(Clone, Debug)]
pub struct EvaluationMatrix {
    pub values: DMatrix<C64>,
    pub side: SnapshotSide,
}

pub fn fourier_circle(maxfreq: usize) -> Dictionary {
    Dictionary {
        space: StateSpace::circle(),
        basis: Basis::FourierCircle { maxfreq },
    }
}

pub fn fourier_torus2(maxfreq: usize) -> Dictionary {
    Dictionary {
        space: StateSpace::torus2(),
        basis: Basis::FourierTorus { maxfreq },
    }
}

pub fn cosine_interval(maxfreq: usize) -> Dictionary {
    Dictionary {
        space: StateSpace::interval01(),
        basis: Basis::CosineInterval { maxfreq },
    }
}

pub fn fourier_disk_angle(maxfreq: usize) -> Dictionary {
    Dictionary {
        space: StateSpace::disk(),
        basis: Basis::FourierAngleDisk { maxfreq },
    }
}

pub fn rbf_gaussian(space: StateSpace, centers: DMatrix<f64>, shape: f64) -> Result<Dictionary> {
    if !(shape > 0.0) {
        return Err(Error::InvalidParameter { name: "shape", reason: "must be > 0".into() });
    }
    if centers.nrows() == 0 {
        return Err(Error::EmptyObservables);
    }
    if centers.ncols() != space.dim() {
        return Err(Error::ShapeMismatch(format!(
            "centers have dim {}, space has dim {}",
            centers.ncols(),
            space.dim()
        )));
    }
    Ok(Dictionary { space, basis: Basis::RbfGaussian { centers, shape } })
}

/// Builds an indicator dictionary over disjoint half-open interval cells.
pub fn indicator_partition(cells: Vec<(f64, f64)>, labels: Vec<i64>) -> Result<Dictionary> {
    if cells.is_empty() {
        return Err(Error::EmptyObservables);
    }
    if cells.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cells but {} labels",
            cells.len(),
            labels.len()
        )));
    }
    for (i, (a, b)) in cells.iter().enumerate() {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidParameter {
                name: "cells",
                reason: format!("cell {i} = [{a}, {b}) is not a proper interval"),
            });
        }
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&i, &j| cells[i].0.total_cmp(&cells[j].0));
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if cells[i].1 > cells[j].0 {
            return Err(Error::OverlappingIntervals { first: i, second: j });
        }
    }
    Ok(Dictionary {
        space: StateSpace::interval01(),
        basis: Basis::IndicatorPartition { cells, labels },
    })
}

impl Dictionary {
    /// Number of basis functions.
    pub fn len(&self) -> usize {
        match &self.basis {
            Basis::FourierCircle { maxfreq } | Basis::FourierAngleDisk { maxfreq } => {
                2 * maxfreq + 1
            }
            Basis::FourierTorus { maxfreq } => (2 * maxfreq + 1).pow(2),
            Basis::CosineInterval { maxfreq } => maxfreq + 1,
            Basis::RbfGaussian { centers, .. } => centers.nrows(),
            Basis::IndicatorPartition { cells, .. } => cells.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A uniform Lipschitz constant for the basis functions, when one exists.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match &self.basis {
            Basis::FourierCircle { maxfreq } => Some(*maxfreq as f64 / (2.0 * PI).sqrt()),
            Basis::FourierTorus { maxfreq } => {
                Some(2.0f64.sqrt() * *maxfreq as f64 / (2.0 * PI))
            }
            Basis::CosineInterval { maxfreq } => Some(2.0f64.sqrt() * *maxfreq as f64 * PI),
            Basis::RbfGaussian { shape, .. } => Some(shape * (2.0 / std::f64::consts::E).sqrt()),
            // angle modes have unbounded gradient at the origin
            Basis::FourierAngleDisk { .. } => None,
            Basis::IndicatorPartition { .. } => None,
        }
    }

    /// Evaluates all basis functions at the given points (rows).
    pub fn evaluate_points(&self, points: &DMatrix<f64>) -> Result<DMatrix<C64>> {
        if points.ncols() != self.space.dim() {
            return Err(Error::ShapeMismatch(format!(
                "points have dim {}, dictionary space has dim {}",
                points.ncols(),
                self.space.dim()
            )));
        }
        let m = points.nrows();
        let n = self.len();
        let mut out = DMatrix::from_element(m, n, C64::new(0.0, 0.0));
        match &self.basis {
            Basis::FourierCircle { .. } => {
                let norm = 1.0 / (2.0 * PI).sqrt();
                for r in 0..m {
                    let theta = points[(r, 0)];
                    for p in 0..n {
                        let j = circle_frequency(p) as f64;
                        out[(r, p)] = C64::from_polar(norm, j * theta);
                    }
                }
            }
            Basis::FourierTorus { maxfreq } => {
                let freqs = torus_frequencies(*maxfreq);
                let norm = 1.0 / (2.0 * PI);
                for r in 0..m {
                    let (x, y) = (points[(r, 0)], points[(r, 1)]);
                    for (p, &(j1, j2)) in freqs.iter().enumerate() {
                        out[(r, p)] = C64::from_polar(norm, j1 as f64 * x + j2 as f64 * y);
                    }
                }
            }
            Basis::CosineInterval { .. } => {
                let s2 = 2.0f64.sqrt();
                for r in 0..m {
                    let x = points[(r, 0)];
                    out[(r, 0)] = C64::new(1.0, 0.0);
                    for p in 1..n {
                        out[(r, p)] = C64::new(s2 * (p as f64 * PI * x).cos(), 0.0);
                    }
                }
            }
            Basis::FourierAngleDisk { .. } => {
                let norm = 1.0 / PI.sqrt();
                for r in 0..m {
                    let theta = points[(r, 1)].atan2(points[(r, 0)]);
                    for p in 0..n {
                        let j = circle_frequency(p) as f64;
                        out[(r, p)] = C64::from_polar(norm, j * theta);
                    }
                }
            }
            Basis::RbfGaussian { centers, shape } => {
                let s2 = shape * shape;
                for r in 0..m {
                    for p in 0..n {
                        let mut d2 = 0.0;
                        for c in 0..points.ncols() {
                            let d = points[(r, c)] - centers[(p, c)];
                            d2 += d * d;
                        }
                        out[(r, p)] = C64::new((-s2 * d2).exp(), 0.0);
                    }
                }
            }
            Basis::IndicatorPartition { cells, .. } => {
                for r in 0..m {
                    let x = points[(r, 0)];
                    for (p, &(a, b)) in cells.iter().enumerate() {
                        if x >= a && x < b {
                            out[(r, p)] = C64::new(1.0 / (b - a).sqrt(), 0.0);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Evaluates the dictionary on one side of a snapshot set.
    pub fn evaluate(&self, snaps: &SnapshotSet, side: SnapshotSide) -> Result<EvaluationMatrix> {
        let pts = match side {
            SnapshotSide::X => &snaps.x,
            SnapshotSide::Y => &snaps.y,
        };
        Ok(EvaluationMatrix { values: self.evaluate_points(pts)?, side })
    }

    /// Frequency labels for the circle-ordered families, in dictionary order.
    pub fn circle_frequencies(&self) -> Option<Vec<i64>> {
        match &self.basis {
            Basis::FourierCircle { maxfreq } | Basis::FourierAngleDisk { maxfreq } => {
                Some((0..2 * maxfreq + 1).map(circle_frequency).collect())
            }
            _ => None,
        }
    }

    /// Cell labels for an indicator dictionary, in dictionary order.
    pub fn indicator_labels(&self) -> Option<&[i64]> {
        match &self.basis {
            Basis::IndicatorPartition { labels, .. } => Some(labels),
            _ => None,
        }
    }
}

/// K-means centers with the per-sweep objective history (sum of squared
/// distances to the nearest center after each assignment pass).
pub fn kmeans_centers_with_objective(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = points.nrows();
    let d = points.ncols();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("need 1 <= k <= #points, got k={k} with {m} points"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |r: usize, c: &[f64]| -> f64 {
        (0..d).map(|j| (points[(r, j)] - c[j]) * (points[(r, j)] - c[j])).sum()
    };

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..m);
    centers.push((0..d).map(|j| points[(first, j)]).collect());
    let mut best = vec![f64::INFINITY; m];
    while centers.len() < k {
        let newest = centers.last().unwrap();
        let mut total = 0.0;
        for r in 0..m {
            best[r] = best[r].min(dist2(r, newest));
            total += best[r];
        }
        let next = if total > 0.0 {
            let mut t = rng.gen_range(0.0..total);
            let mut pick = m - 1;
            for r in 0..m {
                if t < best[r] {
                    pick = r;
                    break;
                }
                t -= best[r];
            }
            pick
        } else {
            rng.gen_range(0..m)
        };
        centers.push((0..d).map(|j| points[(next, j)]).collect());
    }

    // Lloyd sweeps with farthest-point reseeding of emptied clusters
    let mut assign = vec![0usize; m];
    let mut objective = Vec::new();
    for _ in 0..200 {
        let mut obj = 0.0;
        for r in 0..m {
            let (mut bi, mut bd) = (0usize, f64::INFINITY);
            for (i, c) in centers.iter().enumerate() {
                let dd = dist2(r, c);
                if dd < bd {
                    bd = dd;
                    bi = i;
                }
            }
            assign[r] = bi;
            obj += bd;
        }
        objective.push(obj);
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for r in 0..m {
            counts[assign[r]] += 1;
            for j in 0..d {
                sums[assign[r]][j] += points[(r, j)];
            }
        }
        let mut moved: f64 = 0.0;
        for i in 0..k {
            if counts[i] == 0 {
                let far = (0..m)
                    .max_by(|&a, &b| {
                        dist2(a, &centers[assign[a]])
                            .total_cmp(&dist2(b, &centers[assign[b]]))
                    })
                    .unwrap();
                let newc: Vec<f64> = (0..d).map(|j| points[(far, j)]).collect();
                moved = f64::INFINITY;
                centers[i] = newc;
            } else {
                let newc: Vec<f64> =
                    (0..d).map(|j| sums[i][j] / counts[i] as f64).collect();
                let shift = (0..d)
                    .map(|j| (newc[j] - centers[i][j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                moved = moved.max(shift);
                centers[i] = newc;
            }
        }
        if moved < 1e-10 {
            break;
        }
    }
    let out = DMatrix::from_fn(k, d, |i, j| centers[i][j]);
    Ok((out, objective))
}

/// K-means centers (k-means++ seeding, Lloyd refinement). Deterministic
/// given `(points, k, seed)`.
pub fn kmeans_centers(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    kmeans_centers_with_objective(points, k, seed).map(|(c, _)| c)
}

/// True if `small` is a size-parameter restriction of `large` over the same
/// family (the nesting the evaluation order guarantees).
pub fn is_prefix_family(small: &Dictionary, large: &Dictionary) -> bool {
    match (&small.basis, &large.basis) {
        (Basis::FourierCircle { maxfreq: a }, Basis::FourierCircle { maxfreq: b })
        | (Basis::FourierTorus { maxfreq: a }, Basis::FourierTorus { maxfreq: b })
        | (Basis::CosineInterval { maxfreq: a }, Basis::CosineInterval { maxfreq: b })
        | (Basis::FourierAngleDisk { maxfreq: a }, Basis::FourierAngleDisk { maxfreq: b }) => {
            a <= b
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use nalgebra::DVector;

    #[test]
    fn circle_order_starts_zero_plus_minus() {
        let want = [0i64, 1, -1, 2, -2, 3, -3];
        for (p, &j) in want.iter().enumerate() {
            assert_eq!(circle_frequency(p), j);
            assert_eq!(circle_position(j), p);
        }
    }

    #[test]
    fn torus_rings_are_prefixes() {
        let f2 = torus_frequencies(2);
        let f4 = torus_frequencies(4);
        assert_eq!(f2.len(), 25);
        assert_eq!(f4.len(), 81);
        assert_eq!(&f4[..25], &f2[..]);
        assert_eq!(f2[0], (0, 0));
        for (p, &(j1, j2)) in f2.iter().enumerate().skip(1).take(8) {
            assert_eq!(j1.abs().max(j2.abs()), 1, "position {p} not in ring 1");
        }
    }

    #[test]
    fn fourier_circle_gram_is_identity_under_grid_quadrature() {
        let dict = fourier_circle(6);
        let m = 64;
        let pts = DMatrix::from_fn(m, 1, |r, _| 2.0 * PI * r as f64 / m as f64 - PI);
        let vals = dict.evaluate_points(&pts).unwrap();
        let w = DVector::from_element(m, 2.0 * PI / m as f64);
        let g = linalg::weighted_gram(&vals, &vals, w.as_slice()).unwrap();
        for i in 0..dict.len() {
            for j in 0..dict.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_gram_is_identity_under_trapezoid() {
        let dict = cosine_interval(5);
        let m = 24;
        let pts = DMatrix::from_fn(m, 1, |r, _| r as f64 / (m as f64 - 1.0));
        let vals = dict.evaluate_points(&pts).unwrap();
        let h = 1.0 / (m as f64 - 1.0);
        let w = DVector::from_fn(m, |r, _| if r == 0 || r == m - 1 { h / 2.0 } else { h });
        let g = linalg::weighted_gram(&vals, &vals, w.as_slice()).unwrap();
        for i in 0..dict.len() {
            for j in 0..dict.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (g[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12,
                    "entry ({i},{j}) = {}",
                    g[(i, j)]
                );
            }
        }
    }

    #[test]
    fn rbf_gradient_matches_finite_differences() {
        let centers = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, -1.0, 0.2]);
        let shape = 1.7;
        let dict = rbf_gaussian(
            StateSpace::boxed(vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap(),
            centers.clone(),
            shape,
        )
        .unwrap();
        let probe = [[0.5, 0.1], [-0.2, 0.8], [1.1, -0.9]];
        let h = 1e-6;
        for q in probe {
            for p in 0..2 {
                // analytic gradient of exp(-s^2 r^2)
                let dx = q[0] - centers[(p, 0)];
                let dy = q[1] - centers[(p, 1)];
                let val = (-(shape * shape) * (dx * dx + dy * dy)).exp();
                let want = [
                    -2.0 * shape * shape * dx * val,
                    -2.0 * shape * shape * dy * val,
                ];
                for axis in 0..2 {
                    let mut lo = q;
                    let mut hi = q;
                    lo[axis] -= h;
                    hi[axis] += h;
                    let pts = DMatrix::from_row_slice(2, 2, &[lo[0], lo[1], hi[0], hi[1]]);
                    let v = dict.evaluate_points(&pts).unwrap();
                    let fd = (v[(1, p)].re - v[(0, p)].re) / (2.0 * h);
                    assert!((fd - want[axis]).abs() < 1e-6, "fd {fd} vs {}", want[axis]);
                }
            }
        }
    }

    #[test]
    fn rbf_slope_constant_bounds_measured_gradients() {
        let centers = DMatrix::from_row_slice(1, 1, &[0.0]);
        let shape = 2.3;
        let dict = rbf_gaussian(StateSpace::interval01(), centers, shape).unwrap();
        let bound = dict.lipschitz_bound().unwrap();
        assert!((bound - shape * (2.0f64 / std::f64::consts::E).sqrt()).abs() < 1e-15);
        let mut measured: f64 = 0.0;
        for k in 0..2000 {
            let x = k as f64 / 2000.0;
            let g = 2.0 * shape * shape * x * (-(shape * shape) * x * x).exp();
            measured = measured.max(g.abs());
        }
        assert!(measured <= bound + 1e-12);
        assert!(measured > 0.999 * bound, "bound should be tight, measured {measured} vs {bound}");
    }

    #[test]
    fn indicator_partition_rejects_overlap_by_pair() {
        let err = indicator_partition(
            vec![(0.0, 0.4), (0.6, 1.0), (0.3, 0.5)],
            vec![0, 1, 2],
        )
        .unwrap_err();
        match err {
            Error::OverlappingIntervals { first, second } => {
                assert_eq!((first, second), (0, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn indicator_half_open_cells_share_endpoints() {
        let dict = indicator_partition(vec![(0.0, 0.5), (0.5, 1.0)], vec![0, 1]).unwrap();
        let pts = DMatrix::from_row_slice(3, 1, &[0.25, 0.5, 0.75]);
        let v = dict.evaluate_points(&pts).unwrap();
        let amp = 1.0 / 0.5f64.sqrt();
        assert_eq!(v[(0, 0)].re, amp);
        assert_eq!(v[(0, 1)].re, 0.0);
        // the shared endpoint belongs to the right cell only
        assert_eq!(v[(1, 0)].re, 0.0);
        assert_eq!(v[(1, 1)].re, amp);
        assert_eq!(v[(2, 1)].re, amp);
    }

    #[test]
    fn kmeans_is_deterministic_and_objective_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = DMatrix::from_fn(300, 2, |_, _| rng.gen_range(-2.0..2.0));
        let (c1, hist) = kmeans_centers_with_objective(&pts, 8, 42).unwrap();
        let (c2, _) = kmeans_centers_with_objective(&pts, 8, 42).unwrap();
        assert_eq!(c1, c2);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
        assert!(hist.len() >= 2);
    }

    #[test]
    fn kmeans_k_equals_m_reproduces_points() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let (c, _) = kmeans_centers_with_objective(&pts, 3, 0).unwrap();
        let mut got: Vec<f64> = c.column(0).iter().copied().collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn evaluation_matrix_tracks_side() {
        use crate::dynamics::{make_system, sample_snapshots, MapSpec, Sampler};
        let sys = make_system(MapSpec::Rotation { gamma: 0.25 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::RegularGrid, 16, 30).unwrap();
        let dict = fourier_circle(3);
        let ex = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
        let ey = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
        assert!(matches!(ex.side, SnapshotSide::X));
        assert!(matches!(ey.side, SnapshotSide::Y));
        // rotation by a quarter turn multiplies mode j by i^j
        let p = circle_position(1);
        for r in 0..16 {
            let want = ey.values[(r, p)];
            let got = ex.values[(r, p)] * C64::new(0.0, 1.0);
            assert!((want - got).norm() < 1e-13);
        }
    }
}
