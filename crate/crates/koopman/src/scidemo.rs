//! Worked model constructions: interval-exchange maps with annulus spectra,
//! skew products with plateau-generated point spectrum, zero-one shift
//! operators with declared column tails, an ergodicity screening tower for
//! circle rotations, and a doubling-map EDMD walkthrough.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};

use crate::dictionary::{self, Dictionary, SnapshotSide};
use crate::dynamics::{self, DynamicalSystem, IemMap, MapSpec, Sampler, SnapshotSet};
use crate::galerkin::{self, GalerkinTriple, Rule};
use crate::{linalg, spectral};
use crate::{Error, Result};

type C64 = Complex<f64>;

/// Smallest admissible normalized cell size before a deeper float budget is
/// required.
const IEM_SIZE_FLOOR: f64 = 1e-14;

/// Interval-exchange model on `[0, 1]`: cells `S_n` indexed by `n` in `Z`,
/// each half of the interval carrying total length `1/2`, with
/// `|S_{n+1}| = ratio(n) |S_n|` on the right half and mirrored sizes
/// `|S_{-n}| = |S_{n-1}|` on the left. The map translates every cell affinely
/// onto its successor.
#[derive(Clone, Debug)]
pub struct IemSpec {
    /// `(ratio, start index)` pairs; each ratio applies from its start index
    /// until the next entry takes over. Start indices are strictly increasing
    /// and the first entry starts at 0.
    pub ratio_schedule: Vec<(f64, usize)>,
    /// Limit of the schedule, used for the predicted annulus radii.
    pub limit_ratio: f64,
    /// Cells `S_{-k} .. S_k` enter the dictionary; two buffer cells beyond
    /// each end are stored so one map step never touches the frozen tails.
    pub truncation_depth: usize,
}

impl IemSpec {
    /// Constant-ratio model `|S_{n+1}| = r |S_n|`.
    pub fn constant(ratio: f64, truncation_depth: usize) -> Self {
        IemSpec {
            ratio_schedule: vec![(ratio, 0)],
            limit_ratio: ratio,
            truncation_depth,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.truncation_depth < 4 {
            return Err(Error::InvalidParameter {
                name: "truncation_depth",
                reason: "need depth >= 4".into(),
            });
        }
        if self.ratio_schedule.is_empty() {
            return Err(Error::InvalidParameter {
                name: "ratio_schedule",
                reason: "schedule is empty".into(),
            });
        }
        if self.ratio_schedule[0].1 != 0 {
            return Err(Error::InvalidParameter {
                name: "ratio_schedule",
                reason: "first entry must start at index 0".into(),
            });
        }
        for w in self.ratio_schedule.windows(2) {
            if w[1].1 <= w[0].1 {
                return Err(Error::InvalidParameter {
                    name: "ratio_schedule",
                    reason: "start indices must be strictly increasing".into(),
                });
            }
        }
        for &(r, _) in &self.ratio_schedule {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "ratio_schedule",
                    reason: format!("ratios must lie in (0, 1), got {r}"),
                });
            }
        }
        if !(self.limit_ratio > 0.0 && self.limit_ratio <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "limit_ratio",
                reason: format!("must lie in (0, 1], got {}", self.limit_ratio),
            });
        }
        Ok(())
    }

    fn ratio_at(&self, n: usize) -> f64 {
        let mut r = self.ratio_schedule[0].0;
        for &(rr, start) in &self.ratio_schedule {
            if start <= n {
                r = rr;
            }
        }
        r
    }
}

/// Normalized right-half cell sizes `|S_0| .. |S_{k+2}|`. The infinite tail
/// beyond the stored range is summed in closed form segment by segment, so
/// the normalization accounts for the full half-interval.
fn iem_sizes(spec: &IemSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.truncation_depth;
    let top = k + 2;
    let mut u = Vec::with_capacity(top + 1);
    u.push(1.0f64);
    for n in 0..top {
        let next = u[n] * spec.ratio_at(n);
        u.push(next);
    }
    let mut total: f64 = u.iter().sum();
    let mut lead = u[top];
    let mut n = top;
    for &(_, start) in &spec.ratio_schedule {
        if start <= n {
            continue;
        }
        let r = spec.ratio_at(n);
        let count = (start - n) as i32;
        total += lead * r * (1.0 - r.powi(count)) / (1.0 - r);
        lead *= r.powi(count);
        n = start;
    }
    let r = spec.ratio_at(n);
    total += lead * r / (1.0 - r);
    let scale = 0.5 / total;
    let s: Vec<f64> = u.iter().map(|v| v * scale).collect();
    for (depth, &v) in s.iter().enumerate().take(k + 1) {
        if v < IEM_SIZE_FLOOR {
            return Err(Error::DeepenFloatBudget { depth });
        }
    }
    Ok(s)
}

/// Boundaries of the stored cells `S_{-(k+2)} .. S_{k+2}`, ascending. The
/// center boundary sits at `1/2` and the left half mirrors the right:
/// `c_{-n} = 1 - c_n`.
pub fn iem_cuts(spec: &IemSpec) -> Result<Vec<f64>> {
    let s = iem_sizes(spec)?;
    let k = spec.truncation_depth;
    let mut right = Vec::with_capacity(k + 3);
    let mut acc = 0.5;
    for v in &s {
        acc += v;
        right.push(acc);
    }
    let mut cuts = Vec::with_capacity(2 * k + 6);
    for n in (1..=k + 2).rev() {
        cuts.push(1.0 - right[n - 1]);
    }
    cuts.push(0.5);
    cuts.extend(right.iter().copied());
    Ok(cuts)
}

/// Stored-cell boundaries extended by the two frozen tail segments so the
/// cuts cover `[0, 1]` and suit the exact-partition quadrature rule.
pub fn iem_exact_cuts(spec: &IemSpec) -> Result<Vec<f64>> {
    let inner = iem_cuts(spec)?;
    let mut cuts = Vec::with_capacity(inner.len() + 2);
    cuts.push(0.0);
    cuts.extend(inner);
    cuts.push(1.0);
    Ok(cuts)
}

/// Builds the interval-exchange system, its normalized-indicator dictionary
/// over `S_{-k} .. S_k`, and the predicted annulus radii
/// `(sqrt(alpha), 1/sqrt(alpha))` from the limit ratio.
pub fn build_iem(spec: &IemSpec) -> Result<(DynamicalSystem, Dictionary, (f64, f64))> {
    let cuts = iem_cuts(spec)?;
    let k = spec.truncation_depth;
    let system = dynamics::make_system(MapSpec::IntervalExchange(IemMap { cuts: cuts.clone() }))?;
    let cells: Vec<(f64, f64)> = (2..=2 * k + 2).map(|j| (cuts[j], cuts[j + 1])).collect();
    let labels: Vec<i64> = (-(k as i64)..=k as i64).collect();
    let dict = dictionary::indicator_partition(cells, labels)?;
    let a = spec.limit_ratio;
    Ok((system, dict, (a.sqrt(), 1.0 / a.sqrt())))
}

/// Closed-form Galerkin triple of the interval-exchange model on the
/// dictionary `S_{-k} .. S_k`: the Gram is the identity and the Koopman
/// matrix is the weighted shift `K chi_n = w_n chi_{n-1}` with
/// `w_n = sqrt(|S_{n-1}| / |S_n|)`. The diagonal of `L` keeps the full image
/// norm, including the mass that leaves the truncated span at the left edge.
pub fn iem_triple(spec: &IemSpec) -> Result<GalerkinTriple> {
    let s = iem_sizes(spec)?;
    let k = spec.truncation_depth as i64;
    let dim = (2 * k + 1) as usize;
    let size = |m: i64| -> f64 {
        if m >= 0 {
            s[m as usize]
        } else {
            s[(-m - 1) as usize]
        }
    };
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    let mut l = DMatrix::<C64>::zeros(dim, dim);
    for j in -k..=k {
        let w2 = size(j - 1) / size(j);
        let col = (j + k) as usize;
        l[(col, col)] = C64::new(w2, 0.0);
        if j > -k {
            a[(col - 1, col)] = C64::new(w2.sqrt(), 0.0);
        }
    }
    let min_ratio = spec
        .ratio_schedule
        .iter()
        .map(|&(r, _)| r)
        .fold(f64::INFINITY, f64::min);
    Ok(GalerkinTriple {
        g: DMatrix::identity(dim, dim),
        a,
        l,
        basis_is_orthonormal: true,
        delta_bound: Some((1.0 / min_ratio).sqrt()),
        retained: None,
    })
}

/// Snapshot pairs at the midpoint of every cell of a partition of `[0, 1]`,
/// matching the exact-partition quadrature layout.
pub fn exact_partition_snapshots(system: &DynamicalSystem, cuts: &[f64]) -> Result<SnapshotSet> {
    if cuts.len() < 2 || cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "cuts",
            reason: "need strictly increasing cell boundaries".into(),
        });
    }
    let m = cuts.len() - 1;
    let mut x = DMatrix::zeros(m, 1);
    let mut y = DMatrix::zeros(m, 1);
    for i in 0..m {
        let mid = 0.5 * (cuts[i] + cuts[i + 1]);
        x[(i, 0)] = mid;
        y[(i, 0)] = system.evaluate(&[mid], dynamics::PRECISION_CEILING)?[0];
    }
    Ok(SnapshotSet {
        x,
        y,
        precision_exponent: dynamics::PRECISION_CEILING,
        sampler: Sampler::RegularGrid,
    })
}

/// Skew-product profile `f: [-pi, pi] -> [0, pi]`; see
/// [`dynamics::SkewProfile`] for the validity conditions.
pub type SkewSpec = dynamics::SkewProfile;

/// What the profile shape predicts about the skew product's point spectrum,
/// together with the measured Lipschitz constants of the map and its inverse.
#[derive(Clone, Debug)]
pub struct SkewPrediction {
    /// Plateau height `c` when the profile is constant on an interval of
    /// positive measure; each sector `j` then carries the eigenvalue
    /// `exp(i j c)`.
    pub plateau_value: Option<f64>,
    pub lip_forward: f64,
    pub lip_inverse: f64,
    /// Whether both constants stay within the admissible class (`<= 2`).
    pub lip_class_ok: bool,
}

impl SkewPrediction {
    /// Predicted point-spectrum atom in sector `j`, if any. Sector 0 always
    /// holds the trivial eigenvalue 1; other sectors only inherit atoms from
    /// a plateau. A strictly increasing profile predicts none.
    pub fn sector_atom(&self, j: i64) -> Option<C64> {
        if j == 0 {
            return Some(C64::new(1.0, 0.0));
        }
        self.plateau_value.map(|c| C64::from_polar(1.0, j as f64 * c))
    }
}

/// Validates the profile, builds the measure-preserving skew product
/// `F(x, y) = (x, y + f(x))` on the torus, and derives the spectral
/// prediction. Profiles violating monotonicity, symmetry, or the endpoint
/// conditions are rejected; a Lipschitz constant above the admissible class
/// is recorded on the prediction rather than rejected.
pub fn build_skew(spec: &SkewSpec) -> Result<(DynamicalSystem, SkewPrediction)> {
    let system = dynamics::make_system(MapSpec::Skew(spec.clone()))?;
    // the skew Jacobian [[1,0],[f'(x),1]] has the same largest singular
    // value as its inverse, so one measured constant covers both directions
    let lip = system.lipschitz_bound.unwrap_or(f64::INFINITY);
    let prediction = SkewPrediction {
        plateau_value: spec.plateau.map(|(_, _, c)| c),
        lip_forward: lip,
        lip_inverse: lip,
        lip_class_ok: lip <= 2.0,
    };
    Ok((system, prediction))
}

/// Declared tail behaviour of one column of a zero-one pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclaredTail {
    /// Ones recur forever, with at most `max_gap` consecutive zero rows.
    InfinitelyManyOnes { max_gap: usize },
    /// No ones strictly below row `last_one` (`0` declares a one-free
    /// column).
    FinitelyManyOnes { last_one: usize },
}

/// A deterministic zero-one array `a_{i,j}` (rows `i >= 1`, columns
/// `j >= 0`) together with a declared tail for every column. The declarations
/// carry the information that no finite window can supply; [`q_oracle`]
/// audits them against the generator before trusting them.
pub struct ZeroOnePattern {
    generator: Box<dyn Fn(usize, usize) -> bool + Send + Sync>,
    tails: Box<dyn Fn(usize) -> DeclaredTail + Send + Sync>,
}

impl ZeroOnePattern {
    pub fn new(
        generator: impl Fn(usize, usize) -> bool + Send + Sync + 'static,
        tails: impl Fn(usize) -> DeclaredTail + Send + Sync + 'static,
    ) -> Self {
        ZeroOnePattern {
            generator: Box::new(generator),
            tails: Box::new(tails),
        }
    }

    /// The constant pattern `a_{i,j} = 1`.
    pub fn all_ones() -> Self {
        ZeroOnePattern::new(|_, _| true, |_| DeclaredTail::InfinitelyManyOnes { max_gap: 1 })
    }

    /// Entry `a_{i,j}` for `i >= 1`.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        (self.generator)(i, j)
    }

    /// Declared tail of column `j`.
    pub fn tail(&self, j: usize) -> DeclaredTail {
        (self.tails)(j)
    }
}

/// Windowed shift operator of the bilateral sequence
/// `c_i = 1` if `|i| <= j`, else `a_{|i|-j, j}`: the matrix has a 1 at
/// `(k, l)` exactly when `k < l`, both indices are active, and no active
/// index lies between them. Rows and columns are the window
/// `i = -(T/2) .. T-1-(T/2)` in ascending order.
///
/// The window drops the image of its lowest active index, so operator-level
/// singular values should pair this matrix with a diagonal `L` that restores
/// the full column norms (each active column keeps norm 1).
pub fn shift_operator(pattern: &ZeroOnePattern, j: usize, t: usize) -> Result<DMatrix<C64>> {
    if t < 2 * j + 3 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: format!("window must satisfy T >= 2j+3 = {}", 2 * j + 3),
        });
    }
    let half = (t / 2) as i64;
    let active = |i: i64| -> bool {
        let m = i.unsigned_abs() as usize;
        m <= j || pattern.entry(m - j, j)
    };
    let mut c = DMatrix::<C64>::zeros(t, t);
    let mut prev: Option<usize> = None;
    for p in 0..t {
        if active(p as i64 - half) {
            if let Some(q) = prev {
                c[(q, p)] = C64::new(1.0, 0.0);
            }
            prev = Some(p);
        }
    }
    Ok(c)
}

/// Columns audited by [`q_oracle`] and rows inspected per column; together
/// they bound the audit window at 10^4 entries.
const AUDIT_COLS: usize = 100;
const AUDIT_ROWS: usize = 100;

/// Decides whether all but finitely many columns carry infinitely many ones,
/// judged from the declared tails: the verdict is 1 exactly when no column in
/// the back half of the audited range declares a finite tail. Every audited
/// declaration is checked against the generator on its window first, and a
/// contradiction aborts the decision.
pub fn q_oracle(pattern: &ZeroOnePattern) -> Result<u8> {
    let mut tail_all_infinite = true;
    for j in 0..AUDIT_COLS {
        match pattern.tail(j) {
            DeclaredTail::FinitelyManyOnes { last_one } => {
                for i in last_one + 1..=last_one + AUDIT_ROWS {
                    if pattern.entry(i, j) {
                        return Err(Error::InconsistentDeclaration(format!(
                            "column {j} declared one-free beyond row {last_one} but a({i},{j}) = 1"
                        )));
                    }
                }
                if j >= AUDIT_COLS / 2 {
                    tail_all_infinite = false;
                }
            }
            DeclaredTail::InfinitelyManyOnes { max_gap } => {
                if max_gap == 0 {
                    return Err(Error::InvalidParameter {
                        name: "max_gap",
                        reason: "recurring-ones declaration needs a positive gap bound".into(),
                    });
                }
                let mut zeros = 0usize;
                for i in 1..=AUDIT_ROWS {
                    if pattern.entry(i, j) {
                        zeros = 0;
                    } else {
                        zeros += 1;
                        if zeros > max_gap {
                            return Err(Error::InconsistentDeclaration(format!(
                                "column {j} declared ones at gaps <= {max_gap} but rows {}..={i} are zero",
                                i - zeros + 1
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(u8::from(tail_all_infinite))
}

/// First `count` entries of the Stern-Brocot enumeration of `[0, 1]`:
/// `0, 1, 1/2`, then breadth-first mediants (`1/3, 2/3, 1/4, 2/5, ...`).
pub fn stern_brocot(count: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(count);
    if count >= 1 {
        out.push((0, 1));
    }
    if count >= 2 {
        out.push((1, 1));
    }
    let mut frontier: VecDeque<((u64, u64), (u64, u64))> = VecDeque::new();
    frontier.push_back(((0, 1), (1, 1)));
    while out.len() < count {
        let ((a, b), (c, d)) = frontier.pop_front().expect("frontier never empties");
        let med = (a + c, b + d);
        out.push(med);
        frontier.push_back(((a, b), med));
        frontier.push_back((med, (c, d)));
    }
    out
}

/// Two-parameter ergodicity screen for circle rotations: estimates the
/// rotation number from one map evaluation at resolution tied to `n1`, then
/// reports 1 exactly when the estimate keeps distance `> 1/n1` from every one
/// of the first `n2` Stern-Brocot rationals. Rational rotation numbers are
/// ruled out (report 0) once `n2` reaches their enumeration index and `n1`
/// exceeds the matching resolution; badly approximable irrationals survive
/// every screen.
pub fn ergodicity_tower(system: &DynamicalSystem, n1: u64, n2: usize) -> Result<u8> {
    if !matches!(system.map_spec, MapSpec::Rotation { .. }) {
        return Err(Error::InvalidParameter {
            name: "system",
            reason: "the ergodicity tower is defined for circle rotations".into(),
        });
    }
    if n1 < 2 {
        return Err(Error::InvalidParameter {
            name: "n1",
            reason: "resolution must be >= 2".into(),
        });
    }
    if n2 < 1 {
        return Err(Error::InvalidParameter {
            name: "n2",
            reason: "need at least one rational to screen against".into(),
        });
    }
    let bits = dynamics::effective_precision((n1 as f64).log2().ceil() as u32 + 8);
    let y = system.evaluate(&[0.0], bits)?;
    let scale = (1u64 << bits) as f64;
    let gamma_hat = ((y[0] / (2.0 * PI)).rem_euclid(1.0) * scale).round() / scale;
    let mut dmin = f64::INFINITY;
    for (p, q) in stern_brocot(n2) {
        dmin = dmin.min((gamma_hat - p as f64 / q as f64).abs());
    }
    Ok(u8::from(dmin > 1.0 / n1 as f64))
}

/// EDMD walkthrough on the doubling map with an exact Fourier section.
#[derive(Clone, Debug)]
pub struct DoublingReport {
    pub maxfreq: usize,
    /// EDMD eigenvalues of the nonconstant sector; the trivial constant mode
    /// (eigenvalue 1) is visible through the `z = 1` probe instead.
    pub eigenvalues: Vec<C64>,
    /// Residual attached to each reported eigenvalue.
    pub residuals: Vec<f64>,
    /// Residuals at the fixed probe points `1, i, 0.6, 0.6i`, evaluated on
    /// the full section including the constant mode.
    pub probes: Vec<(C64, f64)>,
    /// Length of the longest doubling chain `j -> 2j -> ...` inside the
    /// frequency cutoff: `floor(log2(maxfreq)) + 1`.
    pub max_chain_len: usize,
    /// Largest entrywise deviation between the assembled Koopman matrix and
    /// the exact doubling pattern.
    pub pattern_deviation: f64,
}

impl DoublingReport {
    /// Key-value text block, one `key=value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "demo=doubling");
        let _ = writeln!(s, "maxfreq={}", self.maxfreq);
        let _ = writeln!(s, "dictionary_size={}", 2 * self.maxfreq + 1);
        let _ = writeln!(s, "max_chain_len={}", self.max_chain_len);
        let _ = writeln!(s, "pattern_deviation={:.16e}", self.pattern_deviation);
        for (p, (z, r)) in self.probes.iter().enumerate() {
            let _ = writeln!(s, "probe.{p}.z={:.16e},{:.16e}", z.re, z.im);
            let _ = writeln!(s, "probe.{p}.residual={r:.16e}");
        }
        let _ = writeln!(s, "eigenvalue_count={}", self.eigenvalues.len());
        for (i, (ev, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let _ = writeln!(s, "eigenvalue.{i}={:.16e},{:.16e}", ev.re, ev.im);
            let _ = writeln!(s, "eigenvalue.{i}.residual={r:.16e}");
        }
        s
    }
}

/// Exact Koopman pattern of the doubling map on the Fourier dictionary:
/// `K psi_j = psi_{2j}` whenever `|2j| <= maxfreq`.
fn doubling_pattern(maxfreq: usize) -> DMatrix<C64> {
    let dim = 2 * maxfreq + 1;
    let mf = maxfreq as i64;
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for j in -mf..=mf {
        if (2 * j).unsigned_abs() as usize <= maxfreq {
            let row = dictionary::circle_position(2 * j);
            let col = dictionary::circle_position(j);
            a[(row, col)] = C64::new(1.0, 0.0);
        }
    }
    a
}

/// Assembles the doubling-map section on the Fourier dictionary with an
/// exact trapezoid rule, checks the assembly against the closed-form
/// pattern, and reports the EDMD eigenvalues of the nonconstant sector
/// (a direct sum of nilpotent doubling chains) with their residuals.
pub fn doubling_edmd_report(maxfreq: usize) -> Result<DoublingReport> {
    if maxfreq < 2 {
        return Err(Error::InvalidParameter {
            name: "maxfreq",
            reason: "need maxfreq >= 2".into(),
        });
    }
    let system = dynamics::make_system(MapSpec::Doubling)?;
    let dict = dictionary::fourier_circle(maxfreq);
    let m = 8 * maxfreq;
    let snaps = dynamics::sample_snapshots(&system, Sampler::RegularGrid, m, dynamics::PRECISION_CEILING)?;
    let px = dict.evaluate(&snaps, SnapshotSide::X)?;
    let py = dict.evaluate(&snaps, SnapshotSide::Y)?;
    let w = galerkin::quadrature_weights(&system.space, &snaps.x, Rule::Trapezoid)?;
    let assembled = galerkin::assemble(&px, &py, &w)?;

    let dim = 2 * maxfreq + 1;
    let pattern = doubling_pattern(maxfreq);
    let mut deviation = 0.0f64;
    for i in 0..dim {
        for jj in 0..dim {
            deviation = deviation.max((assembled.a[(i, jj)] - pattern[(i, jj)]).norm());
        }
    }
    if deviation > 1e-12 {
        return Err(Error::QuadratureMismatch(format!(
            "assembled doubling section deviates from the exact pattern by {deviation:.3e}"
        )));
    }

    let full = GalerkinTriple {
        g: DMatrix::identity(dim, dim),
        a: pattern.clone(),
        l: DMatrix::identity(dim, dim),
        basis_is_orthonormal: true,
        delta_bound: Some(1.0),
        retained: None,
    };
    // the constant mode occupies position 0; the rest form the chain sector
    let sector = pattern.view((1, 1), (dim - 1, dim - 1)).into_owned();
    let sector_triple = GalerkinTriple {
        g: DMatrix::identity(dim - 1, dim - 1),
        a: sector,
        l: DMatrix::identity(dim - 1, dim - 1),
        basis_is_orthonormal: true,
        delta_bound: Some(1.0),
        retained: None,
    };
    let eigenvalues = linalg::complex_eigenvalues(&galerkin::edmd_matrix(&sector_triple)?)?;
    let mut residuals = Vec::with_capacity(eigenvalues.len());
    for &ev in &eigenvalues {
        residuals.push(spectral::residual(ev, &full)?);
    }
    let probe_points = [
        C64::new(1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(0.6, 0.0),
        C64::new(0.0, 0.6),
    ];
    let mut probes = Vec::with_capacity(probe_points.len());
    for &z in &probe_points {
        probes.push((z, spectral::residual(z, &full)?));
    }
    Ok(DoublingReport {
        maxfreq,
        eigenvalues,
        residuals,
        probes,
        max_chain_len: (maxfreq as f64).log2().floor() as usize + 1,
        pattern_deviation: deviation,
    })
}
