//! Quadrature weights and Galerkin matrix assembly.
//!
//! From dictionary evaluations on the two snapshot sides this module builds
//! the triple `G = PsiX' W PsiX`, `A = PsiX' W PsiY`, `L = PsiY' W PsiY`,
//! orthonormalizes it, and forms the EDMD matrix `G^+ A`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use nalgebra::{Complex, DMatrix};

use crate::dictionary::{EvaluationMatrix, SnapshotSide};
use crate::dynamics::{grid_points, SpaceKind, StateSpace};
use crate::linalg;
use crate::{Error, Result};

type C64 = Complex<f64>;

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    MonteCarlo,
    /// Lattice rule: periodic trapezoid on circle/torus, composite trapezoid
    /// on the interval, midpoint on box lattices.
    Trapezoid,
    /// Exact integration of functions that are constant on each cell of the
    /// given partition (cuts are the cell boundaries, covering the space).
    ExactPartition { cuts: Vec<f64> },
}

/// Nonnegative weights summing to the total measure of the space.
#[derive(Clone, Debug)]
pub struct QuadratureWeights {
    pub w: Vec<f64>,
    pub rule: Rule,
    /// Integration-error bound for a unit-Lipschitz integrand, when the rule
    /// certifies one (None for Monte Carlo).
    pub certified_error: Option<f64>,
}

/// The assembled matrices with their orthonormality bookkeeping.
#[derive(Clone, Debug)]
pub struct GalerkinTriple {
    pub g: DMatrix<C64>,
    pub a: DMatrix<C64>,
    pub l: DMatrix<C64>,
    pub basis_is_orthonormal: bool,
    /// Operator-norm bound sqrt(1 + delta) on the underlying composition
    /// operator, when the construction certifies one.
    pub delta_bound: Option<f64>,
    /// Dimension kept by [`orthonormalize`].
    pub retained: Option<usize>,
}

impl GalerkinTriple {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

fn lattice_matches(points: &DMatrix<f64>, want: &[Vec<f64>]) -> bool {
    if points.nrows() != want.len() {
        return false;
    }
    for (r, row) in want.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if (points[(r, c)] - v).abs() > 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Builds quadrature weights for the given points.
pub fn quadrature_weights(
    space: &StateSpace,
    points: &DMatrix<f64>,
    rule: Rule,
) -> Result<QuadratureWeights> {
    let m = points.nrows();
    if m == 0 {
        return Err(Error::QuadratureMismatch("no quadrature points".into()));
    }
    if points.ncols() != space.dim() {
        return Err(Error::ShapeMismatch(format!(
            "points have dim {}, space has dim {}",
            points.ncols(),
            space.dim()
        )));
    }
    let omega = space.total_measure();
    match rule {
        Rule::MonteCarlo => Ok(QuadratureWeights {
            w: vec![omega / m as f64; m],
            rule: Rule::MonteCarlo,
            certified_error: None,
        }),
        Rule::Trapezoid => {
            let want = grid_points(space, m).map_err(|_| {
                Error::QuadratureMismatch("no lattice of this size on this space".into())
            })?;
            if !lattice_matches(points, &want) {
                return Err(Error::QuadratureMismatch(
                    "points are not the regular lattice in lattice order".into(),
                ));
            }
            let (w, h) = match &space.kind {
                SpaceKind::Circle => (vec![2.0 * PI / m as f64; m], 2.0 * PI / m as f64),
                SpaceKind::Torus2 => {
                    let side = (m as f64).sqrt().round() as usize;
                    (vec![omega / m as f64; m], 2.0 * PI / side as f64)
                }
                SpaceKind::Interval01 => {
                    let h = 1.0 / (m as f64 - 1.0);
                    let mut w = vec![h; m];
                    w[0] = h / 2.0;
                    w[m - 1] = h / 2.0;
                    (w, h)
                }
                SpaceKind::Box { bounds } => {
                    let d = bounds.len();
                    let side = (m as f64).powf(1.0 / d as f64).round() as usize;
                    let h = bounds
                        .iter()
                        .map(|(a, b)| (b - a) / side as f64)
                        .fold(0.0, f64::max);
                    (vec![omega / m as f64; m], h)
                }
                _ => {
                    return Err(Error::QuadratureMismatch(
                        "lattice rule unavailable on this space".into(),
                    ))
                }
            };
            Ok(QuadratureWeights {
                w,
                rule: Rule::Trapezoid,
                certified_error: Some(omega * h),
            })
        }
        Rule::ExactPartition { cuts } => {
            if space.kind != SpaceKind::Interval01 {
                return Err(Error::QuadratureMismatch(
                    "exact-partition rule is defined on the unit interval".into(),
                ));
            }
            if cuts.len() < 2 || cuts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::QuadratureMismatch(
                    "partition cuts must be strictly increasing".into(),
                ));
            }
            if cuts[0].abs() > 1e-12 || (cuts[cuts.len() - 1] - 1.0).abs() > 1e-12 {
                return Err(Error::QuadratureMismatch(
                    "partition must cover [0, 1]".into(),
                ));
            }
            let ncells = cuts.len() - 1;
            if m != ncells {
                return Err(Error::QuadratureMismatch(format!(
                    "{m} points for {ncells} cells"
                )));
            }
            let mut w = vec![0.0; m];
            for r in 0..m {
                let x = points[(r, 0)];
                if x < cuts[r] || x >= cuts[r + 1] {
                    return Err(Error::QuadratureMismatch(format!(
                        "point {r} does not lie in cell {r}"
                    )));
                }
                w[r] = cuts[r + 1] - cuts[r];
            }
            Ok(QuadratureWeights {
                w,
                rule: Rule::ExactPartition { cuts },
                certified_error: Some(0.0),
            })
        }
    }
}

/// Assembles the Galerkin triple from the two evaluation sides.
pub fn assemble(
    psi_x: &EvaluationMatrix,
    psi_y: &EvaluationMatrix,
    w: &QuadratureWeights,
) -> Result<GalerkinTriple> {
    if psi_x.side != SnapshotSide::X || psi_y.side != SnapshotSide::Y {
        return Err(Error::ShapeMismatch(
            "assemble needs an X-side and a Y-side evaluation, in that order".into(),
        ));
    }
    let (m, n) = (psi_x.values.nrows(), psi_x.values.ncols());
    if psi_y.values.nrows() != m || psi_y.values.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "evaluation shapes differ: {}x{} vs {}x{}",
            m,
            n,
            psi_y.values.nrows(),
            psi_y.values.ncols()
        )));
    }
    if w.w.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} snapshot rows",
            w.w.len(),
            m
        )));
    }
    let mut g = linalg::weighted_gram(&psi_x.values, &psi_x.values, &w.w)?;
    let a = linalg::weighted_gram(&psi_x.values, &psi_y.values, &w.w)?;
    let mut l = linalg::weighted_gram(&psi_y.values, &psi_y.values, &w.w)?;
    linalg::symmetrize(&mut g);
    linalg::symmetrize(&mut l);
    Ok(GalerkinTriple {
        g,
        a,
        l,
        basis_is_orthonormal: false,
        delta_bound: None,
        retained: None,
    })
}

/// Whitens the triple: keeps Gram directions with eigenvalue at least
/// `tol * lambda_max` and transforms into coordinates where G is the
/// identity.
pub fn orthonormalize(t: &GalerkinTriple, tol: f64) -> Result<GalerkinTriple> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be > 0".into() });
    }
    let n = t.dim();
    // fast path: Gram already the identity, keep the matrices untouched
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            off = off.max((t.g[(i, j)] - want).norm());
        }
    }
    if off <= 1e-12 {
        let mut out = t.clone();
        out.basis_is_orthonormal = true;
        out.retained = Some(n);
        return Ok(out);
    }
    let (vals, vecs) = linalg::hermitian_eigen(&t.g);
    let lam_max = vals[n - 1];
    if !(lam_max > 0.0) {
        return Err(Error::GramZero);
    }
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] >= tol * lam_max).collect();
    if keep.is_empty() {
        return Err(Error::GramZero);
    }
    let r = keep.len();
    let mut trans = DMatrix::from_element(n, r, C64::new(0.0, 0.0));
    for (c, &i) in keep.iter().enumerate() {
        let scale = 1.0 / vals[i].sqrt();
        for row in 0..n {
            trans[(row, c)] = vecs[(row, i)] * scale;
        }
    }
    let th = trans.adjoint();
    let mut g = &th * &t.g * &trans;
    let a = &th * &t.a * &trans;
    let mut l = &th * &t.l * &trans;
    linalg::symmetrize(&mut g);
    linalg::symmetrize(&mut l);
    Ok(GalerkinTriple {
        g,
        a,
        l,
        basis_is_orthonormal: true,
        delta_bound: t.delta_bound,
        retained: Some(r),
    })
}

/// EDMD matrix `G^+ A`; applies the Gram pseudoinverse with relative
/// tolerance 1e-12 when the triple is not orthonormalized.
///
/// A bitwise-identity Gram short-circuits to `A` so exactly built
/// triples keep their zero structure instead of picking up
/// pseudoinverse rounding.
pub fn edmd_matrix(t: &GalerkinTriple) -> Result<DMatrix<C64>> {
    let n = t.dim();
    if t.g == DMatrix::<C64>::identity(n, n) {
        return Ok(t.a.clone());
    }
    let g_pinv = linalg::pseudoinverse(&t.g, 1e-12)?;
    Ok(&g_pinv * &t.a)
}

const CACHE_FLAG_ORTHONORMAL: u64 = 1;
const CACHE_FLAG_DELTA: u64 = 2;
const CACHE_FLAG_RETAINED: u64 = 4;

fn push_matrix(buf: &mut Vec<u8>, m: &DMatrix<C64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].re.to_le_bytes());
            buf.extend_from_slice(&m[(r, c)].im.to_le_bytes());
        }
    }
}

/// Writes the binary triple cache plus a `.meta` provenance sidecar.
pub fn write_triple_cache(path: &Path, t: &GalerkinTriple, provenance: &str) -> Result<()> {
    let n = t.dim() as u64;
    let mut flags = 0u64;
    if t.basis_is_orthonormal {
        flags |= CACHE_FLAG_ORTHONORMAL;
    }
    if t.delta_bound.is_some() {
        flags |= CACHE_FLAG_DELTA;
    }
    if t.retained.is_some() {
        flags |= CACHE_FLAG_RETAINED;
    }
    let mut buf = Vec::with_capacity(16 + 3 * 16 * (n * n) as usize + 16);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    push_matrix(&mut buf, &t.g);
    push_matrix(&mut buf, &t.a);
    push_matrix(&mut buf, &t.l);
    if let Some(d) = t.delta_bound {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    if let Some(r) = t.retained {
        buf.extend_from_slice(&(r as u64).to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    let meta = path.with_extension("meta");
    let mut f = fs::File::create(&meta)?;
    writeln!(f, "{}", provenance.trim_end())?;
    Ok(())
}

fn take_f64(slice: &[u8], pos: &mut usize) -> Result<f64> {
    let end = *pos + 8;
    if end > slice.len() {
        return Err(Error::Parse { line: 0, reason: "cache file truncated".into() });
    }
    let v = f64::from_le_bytes(slice[*pos..end].try_into().unwrap());
    *pos = end;
    Ok(v)
}

fn take_u64(slice: &[u8], pos: &mut usize) -> Result<u64> {
    let end = *pos + 8;
    if end > slice.len() {
        return Err(Error::Parse { line: 0, reason: "cache file truncated".into() });
    }
    let v = u64::from_le_bytes(slice[*pos..end].try_into().unwrap());
    *pos = end;
    Ok(v)
}

fn take_matrix(slice: &[u8], pos: &mut usize, n: usize) -> Result<DMatrix<C64>> {
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for r in 0..n {
        for c in 0..n {
            let re = take_f64(slice, pos)?;
            let im = take_f64(slice, pos)?;
            m[(r, c)] = C64::new(re, im);
        }
    }
    Ok(m)
}

/// Reads a cache written by [`write_triple_cache`].
pub fn read_triple_cache(path: &Path) -> Result<GalerkinTriple> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let n = take_u64(&buf, &mut pos)? as usize;
    let flags = take_u64(&buf, &mut pos)?;
    let g = take_matrix(&buf, &mut pos, n)?;
    let a = take_matrix(&buf, &mut pos, n)?;
    let l = take_matrix(&buf, &mut pos, n)?;
    let delta_bound = if flags & CACHE_FLAG_DELTA != 0 {
        Some(take_f64(&buf, &mut pos)?)
    } else {
        None
    };
    let retained = if flags & CACHE_FLAG_RETAINED != 0 {
        Some(take_u64(&buf, &mut pos)? as usize)
    } else {
        None
    };
    Ok(GalerkinTriple {
        g,
        a,
        l,
        basis_is_orthonormal: flags & CACHE_FLAG_ORTHONORMAL != 0,
        delta_bound,
        retained,
    })
}

/// Reads the provenance sidecar of a cache file.
pub fn read_cache_provenance(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path.with_extension("meta"))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{circle_position, fourier_circle, rbf_gaussian, SnapshotSide};
    use crate::dynamics::{make_system, sample_snapshots, MapSpec, Sampler};

    fn triple_for(
        spec: MapSpec,
        maxfreq: usize,
        m: usize,
        sampler: Sampler,
        rule: Rule,
    ) -> GalerkinTriple {
        let sys = make_system(spec).unwrap();
        let snaps = sample_snapshots(&sys, sampler, m, 40).unwrap();
        let dict = fourier_circle(maxfreq);
        let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
        let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, rule).unwrap();
        assemble(&px, &py, &w).unwrap()
    }

    #[test]
    fn weights_sum_to_total_measure() {
        let sys = make_system(MapSpec::Rotation { gamma: 0.3 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::RegularGrid, 8, 40).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::Trapezoid).unwrap();
        assert!((w.w.iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        for v in &w.w {
            assert!((v - 2.0 * PI / 8.0).abs() < 1e-15);
        }
        let mc = quadrature_weights(&sys.space, &snaps.x, Rule::MonteCarlo).unwrap();
        assert!((mc.w.iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        assert!(mc.certified_error.is_none());
    }

    #[test]
    fn montecarlo_box_weights_are_volume_over_m() {
        let sys = make_system(MapSpec::Duffing { alpha: 0.3, dt: 0.3 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::UniformRandom { seed: 1 }, 100, 40).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::MonteCarlo).unwrap();
        for v in &w.w {
            assert!((v - 16.0 / 100.0).abs() < 1e-15);
        }
    }

    #[test]
    fn trapezoid_rejects_non_lattice_points() {
        let sys = make_system(MapSpec::Rotation { gamma: 0.3 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::UniformRandom { seed: 2 }, 16, 40).unwrap();
        assert!(matches!(
            quadrature_weights(&sys.space, &snaps.x, Rule::Trapezoid),
            Err(Error::QuadratureMismatch(_))
        ));
    }

    #[test]
    fn trapezoid_integrates_first_mode_to_zero() {
        let sys = make_system(MapSpec::Rotation { gamma: 0.0 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::RegularGrid, 16, 40).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::Trapezoid).unwrap();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..16 {
            acc += C64::from_polar(w.w[r], snaps.x[(r, 0)]);
        }
        assert!(acc.norm() < 1e-14);
    }

    #[test]
    fn exact_partition_weights_are_cell_widths() {
        let space = StateSpace::interval01();
        let pts = DMatrix::from_row_slice(3, 1, &[0.1, 0.4, 0.8]);
        let w = quadrature_weights(
            &space,
            &pts,
            Rule::ExactPartition { cuts: vec![0.0, 0.25, 0.6, 1.0] },
        )
        .unwrap();
        assert_eq!(w.w, vec![0.25, 0.35, 0.4]);
        assert_eq!(w.certified_error, Some(0.0));
        let bad = quadrature_weights(
            &space,
            &pts,
            Rule::ExactPartition { cuts: vec![0.0, 0.05, 0.6, 1.0] },
        );
        assert!(matches!(bad, Err(Error::QuadratureMismatch(_))));
    }

    #[test]
    fn quarter_rotation_assembles_diagonal_a() {
        let t = triple_for(
            MapSpec::Rotation { gamma: 0.25 },
            1,
            16,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let want = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { want[i] } else { C64::new(0.0, 0.0) };
                assert!(
                    (t.a[(i, j)] - expect).norm() < 1e-12,
                    "A[{i},{j}] = {}",
                    t.a[(i, j)]
                );
            }
        }
    }

    #[test]
    fn identity_system_gives_a_equals_g_equals_l() {
        let t = triple_for(
            MapSpec::Rotation { gamma: 0.0 },
            3,
            32,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        for i in 0..t.dim() {
            for j in 0..t.dim() {
                assert!((t.a[(i, j)] - t.g[(i, j)]).norm() < 1e-12);
                assert!((t.l[(i, j)] - t.g[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_sends_first_mode_to_second() {
        let t = triple_for(
            MapSpec::Doubling,
            2,
            64,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let col = circle_position(1);
        let hit = circle_position(2);
        for i in 0..t.dim() {
            let expect = if i == hit { 1.0 } else { 0.0 };
            assert!(
                (t.a[(i, col)] - C64::new(expect, 0.0)).norm() < 1e-12,
                "A[{i},{col}] = {}",
                t.a[(i, col)]
            );
        }
    }

    #[test]
    fn rotation_with_lattice_rule_has_l_equal_g() {
        let maxfreq = 5;
        let t = triple_for(
            MapSpec::Rotation { gamma: 1.0 / 3.0 },
            maxfreq,
            4 * maxfreq + 4,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        for i in 0..t.dim() {
            for j in 0..t.dim() {
                assert!((t.l[(i, j)] - t.g[(i, j)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gram_and_stiffness_are_hermitian_psd_under_montecarlo() {
        let sys = make_system(MapSpec::Arnold { gamma: 0.21, eps: 0.9 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::UniformRandom { seed: 9 }, 400, 40).unwrap();
        let dict = fourier_circle(4);
        let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
        let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::MonteCarlo).unwrap();
        let t = assemble(&px, &py, &w).unwrap();
        for h in [&t.g, &t.l] {
            let adj = h.adjoint();
            for i in 0..t.dim() {
                for j in 0..t.dim() {
                    assert!((h[(i, j)] - adj[(i, j)]).norm() < 1e-12);
                }
            }
            let min = linalg::min_hermitian_eigenvalue(h);
            let scale = linalg::spectral_norm(h);
            assert!(min >= -1e-10 * scale, "min eigenvalue {min}");
        }
    }

    #[test]
    fn orthonormalize_whitens_random_full_rank_gram() {
        let sys = make_system(MapSpec::IntervalExchange(crate::dynamics::IemMap {
            cuts: vec![0.1, 0.3, 0.6, 0.9],
        }))
        .unwrap();
        let snaps = sample_snapshots(&sys, Sampler::UniformRandom { seed: 5 }, 500, 40).unwrap();
        let centers = DMatrix::from_row_slice(6, 1, &[0.05, 0.2, 0.4, 0.6, 0.8, 0.95]);
        let dict = rbf_gaussian(StateSpace::interval01(), centers, 3.0).unwrap();
        let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
        let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::MonteCarlo).unwrap();
        let t = assemble(&px, &py, &w).unwrap();
        assert!(!t.basis_is_orthonormal);
        let o = orthonormalize(&t, 1e-12).unwrap();
        assert!(o.basis_is_orthonormal);
        assert_eq!(o.retained, Some(6));
        for i in 0..o.dim() {
            for j in 0..o.dim() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((o.g[(i, j)] - C64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn duplicated_observable_drops_one_dimension() {
        let sys = make_system(MapSpec::Rotation { gamma: 0.25 }).unwrap();
        let snaps = sample_snapshots(&sys, Sampler::RegularGrid, 16, 40).unwrap();
        let dict = fourier_circle(1);
        let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
        let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
        let dup = |e: &EvaluationMatrix| {
            let mut v = DMatrix::from_element(16, 4, C64::new(0.0, 0.0));
            v.view_mut((0, 0), (16, 3)).copy_from(&e.values);
            for r in 0..16 {
                v[(r, 3)] = e.values[(r, 1)];
            }
            EvaluationMatrix { values: v, side: e.side }
        };
        let w = quadrature_weights(&sys.space, &snaps.x, Rule::Trapezoid).unwrap();
        let t = assemble(&dup(&px), &dup(&py), &w).unwrap();
        let o = orthonormalize(&t, 1e-10).unwrap();
        assert_eq!(o.retained, Some(3));
    }

    #[test]
    fn already_orthonormal_triple_passes_through() {
        let t = triple_for(
            MapSpec::Rotation { gamma: 0.25 },
            1,
            16,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let o = orthonormalize(&t, 1e-12).unwrap();
        assert_eq!(o.retained, Some(3));
        assert_eq!(o.a, t.a);
    }

    #[test]
    fn edmd_of_quarter_rotation_is_diagonal_phases() {
        let t = triple_for(
            MapSpec::Rotation { gamma: 0.25 },
            1,
            16,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let k = edmd_matrix(&orthonormalize(&t, 1e-12).unwrap()).unwrap();
        let want = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
        for i in 0..3 {
            assert!((k[(i, i)] - want[i]).norm() < 1e-11);
        }
    }

    #[test]
    fn edmd_of_identity_is_identity() {
        let t = triple_for(
            MapSpec::Rotation { gamma: 0.0 },
            2,
            24,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let k = edmd_matrix(&t).unwrap();
        for i in 0..t.dim() {
            for j in 0..t.dim() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((k[(i, j)] - C64::new(want, 0.0)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn edmd_doubling_chains_are_nilpotent() {
        let t = triple_for(
            MapSpec::Doubling,
            4,
            64,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        let k = edmd_matrix(&orthonormalize(&t, 1e-12).unwrap()).unwrap();
        let k4 = &k * &k * &k * &k;
        let p0 = circle_position(0);
        for j in 0..k4.ncols() {
            if j == p0 {
                assert!((k4[(p0, p0)] - C64::new(1.0, 0.0)).norm() < 1e-10);
                continue;
            }
            let colnorm: f64 = (0..k4.nrows()).map(|i| k4[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            assert!(colnorm < 1e-10, "column {j} norm {colnorm}");
        }
    }

    #[test]
    fn montecarlo_error_decays_like_inverse_sqrt_m() {
        let sys = make_system(MapSpec::Rotation { gamma: 0.3 }).unwrap();
        let dict = fourier_circle(2);
        let oracle = {
            let snaps = sample_snapshots(&sys, Sampler::RegularGrid, 256, 40).unwrap();
            let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
            let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
            let w = quadrature_weights(&sys.space, &snaps.x, Rule::Trapezoid).unwrap();
            assemble(&px, &py, &w).unwrap().a
        };
        let err_at = |m: usize, seed: u64| {
            let snaps = sample_snapshots(&sys, Sampler::UniformRandom { seed }, m, 40).unwrap();
            let px = dict.evaluate(&snaps, SnapshotSide::X).unwrap();
            let py = dict.evaluate(&snaps, SnapshotSide::Y).unwrap();
            let w = quadrature_weights(&sys.space, &snaps.x, Rule::MonteCarlo).unwrap();
            let a = assemble(&px, &py, &w).unwrap().a;
            let d = &a - &oracle;
            // Frobenius norm relative to the measure normalization
            (d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()) / (2.0 * PI)
        };
        let e2 = err_at(100, 101);
        let e3 = err_at(1000, 102);
        let e4 = err_at(10_000, 103);
        let r32 = e2 / e3;
        let r43 = e3 / e4;
        let sqrt10 = 10.0f64.sqrt();
        assert!(r32 > sqrt10 / 3.0 && r32 < sqrt10 * 3.0, "ratio {r32}");
        assert!(r43 > sqrt10 / 3.0 && r43 < sqrt10 * 3.0, "ratio {r43}");
    }

    #[test]
    fn cache_roundtrips_bitwise() {
        let mut t = triple_for(
            MapSpec::Rotation { gamma: 0.3 },
            2,
            32,
            Sampler::RegularGrid,
            Rule::Trapezoid,
        );
        t.delta_bound = Some(1.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triple.bin");
        write_triple_cache(&path, &t, "system=rotation gamma=0.3\ndict=fourier maxfreq=2").unwrap();
        let back = read_triple_cache(&path).unwrap();
        assert_eq!(back.g, t.g);
        assert_eq!(back.a, t.a);
        assert_eq!(back.l, t.l);
        assert_eq!(back.delta_bound, t.delta_bound);
        assert_eq!(back.retained, t.retained);
        assert_eq!(back.basis_is_orthonormal, t.basis_is_orthonormal);
        let prov = read_cache_provenance(&path).unwrap();
        assert!(prov.contains("gamma=0.3"));
    }
}
