//! State spaces, built-in dynamical systems with known spectral ground truth,
//! precision-controlled evaluation, and snapshot generation.
//!
//! Builtins play the role of a perfect measurement device: `evaluate` answers
//! map queries to a requested dyadic precision `2^-n` (up to the f64 ceiling,
//! see [`PRECISION_CEILING`]), and snapshot sets record the precision and the
//! sampler that produced them so every downstream artifact is reproducible.

use std::f64::consts::PI;
use std::io::{BufRead, Write as IoWrite};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Highest honored precision exponent; beyond this `evaluate` returns the
/// plain f64 value and reports saturation through [`effective_precision`].
pub const PRECISION_CEILING: u32 = 48;

/// Precision exponent actually honored for a request of `n`.
pub fn effective_precision(n: u32) -> u32 {
    n.min(PRECISION_CEILING)
}

/// Wraps an angle to the canonical chart `[-pi, pi)`.
pub fn wrap_angle(t: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = t - two_pi * ((t + PI) / two_pi).floor();
    // floor rounding can leave w == pi when t is a hair under a period edge
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w += two_pi;
    }
    w
}

/// Angular distance on the circle.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpaceKind {
    Circle,
    Torus2,
    Interval01,
    Disk,
    Box { bounds: Vec<(f64, f64)> },
    DiscreteN { n: usize },
}

/// A compact state space with its induced metric.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub kind: SpaceKind,
}

impl StateSpace {
    pub fn circle() -> Self {
        Self { kind: SpaceKind::Circle }
    }
    pub fn torus2() -> Self {
        Self { kind: SpaceKind::Torus2 }
    }
    pub fn interval01() -> Self {
        Self { kind: SpaceKind::Interval01 }
    }
    pub fn disk() -> Self {
        Self { kind: SpaceKind::Disk }
    }
    pub fn boxed(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.iter().any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: "box bounds must be finite nonempty intervals".into(),
            });
        }
        Ok(Self { kind: SpaceKind::Box { bounds } })
    }
    pub fn discrete(n: usize) -> Self {
        Self { kind: SpaceKind::DiscreteN { n } }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SpaceKind::Circle | SpaceKind::Interval01 | SpaceKind::DiscreteN { .. } => 1,
            SpaceKind::Torus2 | SpaceKind::Disk => 2,
            SpaceKind::Box { bounds } => bounds.len(),
        }
    }

    /// Total measure of the space under its reference measure (Lebesgue on
    /// continuous spaces, counting on discrete ones).
    pub fn total_measure(&self) -> f64 {
        match &self.kind {
            SpaceKind::Circle => 2.0 * PI,
            SpaceKind::Torus2 => 4.0 * PI * PI,
            SpaceKind::Interval01 => 1.0,
            SpaceKind::Disk => PI,
            SpaceKind::Box { bounds } => bounds.iter().map(|(a, b)| b - a).product(),
            SpaceKind::DiscreteN { n } => *n as f64,
        }
    }

    /// Metric induced by the space: angular per-coordinate on circle/torus,
    /// Euclidean otherwise, counting metric on discrete spaces.
    pub fn metric(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            SpaceKind::Circle => circle_dist(x[0], y[0]),
            SpaceKind::Torus2 => {
                let dx = circle_dist(x[0], y[0]);
                let dy = circle_dist(x[1], y[1]);
                (dx * dx + dy * dy).sqrt()
            }
            SpaceKind::DiscreteN { .. } => {
                if x[0] == y[0] {
                    0.0
                } else {
                    1.0
                }
            }
            _ => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Applies the periodic wrap exactly once per periodic coordinate;
    /// non-periodic spaces return the point unchanged.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SpaceKind::Circle => vec![wrap_angle(x[0])],
            SpaceKind::Torus2 => vec![wrap_angle(x[0]), wrap_angle(x[1])],
            _ => x.to_vec(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.kind {
            SpaceKind::Circle => (-PI..PI).contains(&x[0]),
            SpaceKind::Torus2 => x.iter().all(|t| (-PI..PI).contains(t)),
            SpaceKind::Interval01 => (0.0..=1.0).contains(&x[0]),
            SpaceKind::Disk => x[0] * x[0] + x[1] * x[1] <= 1.0 + 1e-12,
            SpaceKind::Box { bounds } => x
                .iter()
                .zip(bounds)
                .all(|(t, (a, b))| *t >= *a - 1e-12 && *t <= *b + 1e-12),
            SpaceKind::DiscreteN { n } => {
                x[0] >= 0.0 && x[0].fract() == 0.0 && (x[0] as usize) < *n
            }
        }
    }
}

/// Piecewise-affine interval exchange data: cells `S_n = [lo, hi)` ordered by
/// position, each mapped affinely onto its successor. Points in the frozen
/// tail segments (below the first or above the last cell) are fixed.
#[derive(Clone, Debug)]
pub struct IemMap {
    /// Cell boundaries; cell i is `[cuts[i], cuts[i+1])`.
    pub cuts: Vec<f64>,
}

impl IemMap {
    fn apply(&self, x: f64) -> f64 {
        let ncells = self.cuts.len() - 1;
        if x < self.cuts[0] || x >= self.cuts[ncells] {
            return x; // frozen boundary segment
        }
        // cells are few (tens); a linear scan keeps this branch-predictable
        let mut i = 0;
        while i + 1 < ncells && x >= self.cuts[i + 1] {
            i += 1;
        }
        if i + 2 > ncells {
            return x; // last cell has no successor inside the window
        }
        let (a0, a1) = (self.cuts[i], self.cuts[i + 1]);
        let (b0, b1) = (self.cuts[i + 1], self.cuts[i + 2]);
        b0 + (x - a0) * (b1 - b0) / (a1 - a0)
    }

    fn max_slope(&self) -> f64 {
        let n = self.cuts.len() - 1;
        (0..n.saturating_sub(1))
            .map(|i| {
                (self.cuts[i + 2] - self.cuts[i + 1]) / (self.cuts[i + 1] - self.cuts[i])
            })
            .fold(1.0, f64::max)
    }
}

/// Smooth slope-integrated profile `f: [-pi, pi] -> [0, pi]` for skew
/// products: symmetric (`f(-x) = f(x)`), `f(-pi) = 0`, `f(0) = pi`,
/// non-decreasing on `[-pi, 0]`, with an optional exact plateau.
#[derive(Clone, Debug)]
pub struct SkewProfile {
    /// Optional plateau `(a, b, c)`: `f == c` on `(a, b) in (-pi, 0)`.
    pub plateau: Option<(f64, f64, f64)>,
    /// Width of the smoothed slope transitions at segment corners.
    pub join_width: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Integral of [`smoothstep`] from 0 to t.
fn smoothstep_int(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let t3 = t * t * t;
    t3 * t * (2.5 + t * (-3.0 + t))
}

impl SkewProfile {
    /// Slope segments on `[-pi, 0]` as (start, plateau slope before the
    /// smoothed corner at `start + join_width`).
    fn segments(&self) -> Vec<(f64, f64)> {
        let w = self.join_width;
        match self.plateau {
            None => {
                let s = PI / (PI - w);
                vec![(-PI, s), (0.0 - w, 0.0)]
            }
            Some((a, b, c)) => {
                let s1 = c / (a + PI - w);
                let s2 = (PI - c) / (-b - w);
                vec![(-PI, s1), (a - w, 0.0), (b, s2), (0.0 - w, 0.0)]
            }
        }
    }

    /// Slope of f at `x in [-pi, 0]`.
    fn slope(&self, x: f64) -> f64 {
        let w = self.join_width;
        let segs = self.segments();
        let mut s_prev = 0.0;
        for (start, s_next) in segs {
            if x < start {
                return s_prev;
            }
            if x < start + w {
                return s_prev + (s_next - s_prev) * smoothstep((x - start) / w);
            }
            s_prev = s_next;
        }
        s_prev
    }

    /// Profile value `f(x)` for `x in [-pi, pi]`.
    pub fn value(&self, x: f64) -> f64 {
        let x = if x > 0.0 { -x } else { x }; // symmetry f(-x) = f(x)
        if let Some((a, b, c)) = self.plateau {
            // bit-exact on the plateau so closed-form predictions hold exactly
            if x >= a && x <= b {
                return c;
            }
        }
        let w = self.join_width;
        let mut acc = 0.0;
        let mut s_prev = 0.0;
        let mut pos = -PI;
        for (start, s_next) in self.segments() {
            if x <= start {
                return acc + s_prev * (x - pos);
            }
            acc += s_prev * (start - pos);
            if x < start + w {
                let t = (x - start) / w;
                return acc + w * (s_prev * t + (s_next - s_prev) * smoothstep_int(t));
            }
            acc += w * (s_prev + s_next) / 2.0;
            s_prev = s_next;
            pos = start + w;
        }
        acc + s_prev * (x - pos)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.join_width;
        if !(w > 0.0 && w < 0.5) {
            return Err(Error::InvalidParameter {
                name: "join_width",
                reason: "must lie in (0, 0.5)".into(),
            });
        }
        if let Some((a, b, c)) = self.plateau {
            if !(a > -PI + 2.0 * w && b > a && b < -2.0 * w) {
                return Err(Error::InvalidParameter {
                    name: "plateau",
                    reason: format!("need -pi+2w < a < b < -2w, got a={a}, b={b}"),
                });
            }
            if !(c > 0.0 && c < PI) {
                return Err(Error::InvalidParameter {
                    name: "plateau",
                    reason: format!("plateau value must lie in (0, pi), got {c}"),
                });
            }
        }
        // pointwise checks on the standard 1e3-point grid
        let m = 1000;
        let mut prev = self.value(-PI);
        for k in 0..=m {
            let x = -PI + PI * (k as f64) / (m as f64);
            let v = self.value(x);
            if v < prev - 1e-9 {
                return Err(Error::InvalidParameter {
                    name: "f",
                    reason: format!("profile not non-decreasing near x={x}"),
                });
            }
            let sym = self.value(-x);
            if (v - sym).abs() > 1e-9 {
                return Err(Error::InvalidParameter {
                    name: "f",
                    reason: format!("profile not symmetric at x={x}"),
                });
            }
            prev = v;
        }
        if self.value(-PI).abs() > 1e-9 || (self.value(0.0) - PI).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "f",
                reason: "profile must satisfy f(-pi)=0 and f(0)=pi".into(),
            });
        }
        if let Some((a, b, c)) = self.plateau {
            let mid = (a + b) / 2.0;
            if (self.value(mid) - c).abs() > 1e-12 {
                return Err(Error::InvalidParameter {
                    name: "f",
                    reason: "plateau value not attained".into(),
                });
            }
        }
        Ok(())
    }
}

/// Closed-form map descriptors for the builtin systems.
#[derive(Clone, Debug)]
pub enum MapSpec {
    Rotation { gamma: f64 },
    Arnold { gamma: f64, eps: f64 },
    Doubling,
    Duffing { alpha: f64, dt: f64 },
    DiskRotation,
    IntervalExchange(IemMap),
    SkewLinear,
    Skew(SkewProfile),
    DiscreteMap { table: Vec<usize> },
    /// Answers only exactly-queried points; everything else is off-table.
    ExternalTable { pairs: Vec<(Vec<f64>, Vec<f64>)> },
}

/// A state space together with an evaluable map and its declared metadata.
#[derive(Clone, Debug)]
pub struct DynamicalSystem {
    pub space: StateSpace,
    pub map_spec: MapSpec,
    pub lipschitz_bound: Option<f64>,
    pub measure_preserving: bool,
}

/// Builds one of the builtin systems.
pub fn make_system(spec: MapSpec) -> Result<DynamicalSystem> {
    match spec {
        MapSpec::Rotation { gamma } => {
            if !gamma.is_finite() {
                return Err(Error::InvalidParameter { name: "gamma", reason: "must be finite".into() });
            }
            Ok(DynamicalSystem {
                space: StateSpace::circle(),
                map_spec: MapSpec::Rotation { gamma },
                lipschitz_bound: Some(1.0),
                measure_preserving: true,
            })
        }
        MapSpec::Arnold { gamma, eps } => {
            if !(0.0..2.0 * PI).contains(&eps) {
                return Err(Error::InvalidParameter {
                    name: "eps",
                    reason: format!("must lie in [0, 2pi), got {eps}"),
                });
            }
            Ok(DynamicalSystem {
                space: StateSpace::circle(),
                map_spec: MapSpec::Arnold { gamma, eps },
                lipschitz_bound: Some(1.0 + eps),
                measure_preserving: eps == 0.0,
            })
        }
        MapSpec::Doubling => Ok(DynamicalSystem {
            space: StateSpace::circle(),
            map_spec: MapSpec::Doubling,
            lipschitz_bound: Some(2.0),
            measure_preserving: true,
        }),
        MapSpec::Duffing { alpha, dt } => {
            if alpha < 0.0 {
                return Err(Error::InvalidParameter { name: "alpha", reason: "must be >= 0".into() });
            }
            if !(dt > 0.0 && dt <= 1.0) {
                return Err(Error::InvalidParameter { name: "dt", reason: "must lie in (0, 1]".into() });
            }
            Ok(DynamicalSystem {
                space: StateSpace::boxed(vec![(-2.0, 2.0), (-2.0, 2.0)])?,
                map_spec: MapSpec::Duffing { alpha, dt },
                lipschitz_bound: None,
                measure_preserving: alpha == 0.0,
            })
        }
        MapSpec::DiskRotation => Ok(DynamicalSystem {
            space: StateSpace::disk(),
            map_spec: MapSpec::DiskRotation,
            lipschitz_bound: Some(1.0),
            measure_preserving: true,
        }),
        MapSpec::IntervalExchange(map) => {
            if map.cuts.len() < 3 || map.cuts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter {
                    name: "cuts",
                    reason: "need at least 2 strictly increasing cells".into(),
                });
            }
            let lip = map.max_slope();
            Ok(DynamicalSystem {
                space: StateSpace::interval01(),
                lipschitz_bound: Some(lip),
                map_spec: MapSpec::IntervalExchange(map),
                measure_preserving: false,
            })
        }
        MapSpec::SkewLinear => Ok(DynamicalSystem {
            space: StateSpace::torus2(),
            map_spec: MapSpec::SkewLinear,
            // operator norm of [[1,0],[1,1]] is the golden ratio
            lipschitz_bound: Some((1.0 + 5.0f64.sqrt()) / 2.0),
            measure_preserving: true,
        }),
        MapSpec::Skew(profile) => {
            profile.validate()?;
            let lip = skew_lipschitz(&profile);
            Ok(DynamicalSystem {
                space: StateSpace::torus2(),
                map_spec: MapSpec::Skew(profile),
                lipschitz_bound: Some(lip),
                measure_preserving: true,
            })
        }
        MapSpec::DiscreteMap { table } => {
            let n = table.len();
            if n == 0 || table.iter().any(|&t| t >= n) {
                return Err(Error::InvalidParameter {
                    name: "table",
                    reason: "entries must index back into the table".into(),
                });
            }
            let mut seen = vec![false; n];
            for &t in &table {
                seen[t] = true;
            }
            let is_permutation = seen.iter().all(|&s| s);
            Ok(DynamicalSystem {
                space: StateSpace::discrete(n),
                map_spec: MapSpec::DiscreteMap { table },
                lipschitz_bound: None,
                measure_preserving: is_permutation,
            })
        }
        MapSpec::ExternalTable { pairs } => {
            if pairs.is_empty() {
                return Err(Error::InvalidParameter { name: "pairs", reason: "table is empty".into() });
            }
            let d = pairs[0].0.len();
            if pairs.iter().any(|(x, y)| x.len() != d || y.len() != d) {
                return Err(Error::ShapeMismatch("external table rows differ in dimension".into()));
            }
            let bounds = (0..d)
                .map(|k| {
                    let lo = pairs.iter().map(|(x, _)| x[k]).fold(f64::INFINITY, f64::min);
                    let hi = pairs.iter().map(|(x, _)| x[k]).fold(f64::NEG_INFINITY, f64::max);
                    (lo - 1.0, hi + 1.0)
                })
                .collect();
            Ok(DynamicalSystem {
                space: StateSpace::boxed(bounds)?,
                map_spec: MapSpec::ExternalTable { pairs },
                lipschitz_bound: None,
                measure_preserving: false,
            })
        }
    }
}

/// Max operator norm of the skew Jacobian `[[1,0],[f'(x),1]]` over a grid,
/// for both F and its inverse (they coincide).
fn skew_lipschitz(profile: &SkewProfile) -> f64 {
    let mut worst: f64 = 1.0;
    for k in 0..=1000 {
        let x = -PI + PI * (k as f64) / 1000.0;
        let s = profile.slope(x).abs();
        // largest singular value of [[1,0],[s,1]]
        let lam = (2.0 + s * s + (s * s * (s * s + 4.0)).sqrt()) / 2.0;
        worst = worst.max(lam.sqrt());
    }
    worst
}

fn duffing_rhs(alpha: f64, s: [f64; 2]) -> [f64; 2] {
    [s[1], -alpha * s[1] + s[0] - s[0] * s[0] * s[0]]
}

fn duffing_step(alpha: f64, dt: f64, s: [f64; 2]) -> [f64; 2] {
    let k1 = duffing_rhs(alpha, s);
    let k2 = duffing_rhs(alpha, [s[0] + 0.5 * dt * k1[0], s[1] + 0.5 * dt * k1[1]]);
    let k3 = duffing_rhs(alpha, [s[0] + 0.5 * dt * k2[0], s[1] + 0.5 * dt * k2[1]]);
    let k4 = duffing_rhs(alpha, [s[0] + dt * k3[0], s[1] + dt * k3[1]]);
    [
        s[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

impl DynamicalSystem {
    /// Evaluates `F(x)` to precision `2^-effective_precision(n)`. Closed-form
    /// builtins are exact up to arithmetic rounding, which sits below the
    /// precision ceiling.
    pub fn evaluate(&self, x: &[f64], n: u32) -> Result<Vec<f64>> {
        if n < 1 {
            return Err(Error::InvalidParameter { name: "n", reason: "precision exponent must be >= 1".into() });
        }
        if !self.space.contains(x) {
            return Err(Error::PointOutsideSpace { index: 0 });
        }
        let y = match &self.map_spec {
            MapSpec::Rotation { gamma } => vec![x[0] + 2.0 * PI * gamma],
            MapSpec::Arnold { gamma, eps } => vec![x[0] + 2.0 * PI * gamma + eps * x[0].sin()],
            MapSpec::Doubling => vec![2.0 * x[0]],
            MapSpec::Duffing { alpha, dt } => {
                let s = duffing_step(*alpha, *dt, [x[0], x[1]]);
                vec![s[0], s[1]]
            }
            MapSpec::DiskRotation => vec![-x[0], -x[1]],
            MapSpec::IntervalExchange(map) => vec![map.apply(x[0])],
            MapSpec::SkewLinear => vec![x[0], x[1] + x[0]],
            MapSpec::Skew(profile) => vec![x[0], x[1] + profile.value(x[0])],
            MapSpec::DiscreteMap { table } => vec![table[x[0] as usize] as f64],
            MapSpec::ExternalTable { pairs } => {
                let hit = pairs.iter().find(|(px, _)| px.as_slice() == x);
                match hit {
                    Some((_, py)) => py.clone(),
                    None => return Err(Error::NoDataAtPoint),
                }
            }
        };
        Ok(self.space.wrap(&y))
    }

    /// Orbit `[x0, F(x0), ..., F^length(x0)]` (length+1 states).
    pub fn trajectory(&self, x0: &[f64], length: usize, n: u32) -> Result<Vec<Vec<f64>>> {
        if length < 1 {
            return Err(Error::InvalidParameter { name: "length", reason: "must be >= 1".into() });
        }
        let mut out = Vec::with_capacity(length + 1);
        out.push(x0.to_vec());
        for _ in 0..length {
            let next = self.evaluate(out.last().unwrap(), n)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Snapshot sampling strategy.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampler {
    UniformRandom { seed: u64 },
    RegularGrid,
    SingleTrajectory { x0: Vec<f64> },
}

impl Sampler {
    fn seed(&self) -> u64 {
        match self {
            Sampler::UniformRandom { seed } => *seed,
            _ => 0,
        }
    }
}

/// Paired snapshot data `y_m = F(x_m)` at a recorded precision.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub precision_exponent: u32,
    pub sampler: Sampler,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

fn uniform_point(space: &StateSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match &space.kind {
        SpaceKind::Circle => vec![rng.gen_range(-PI..PI)],
        SpaceKind::Torus2 => vec![rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)],
        SpaceKind::Interval01 => vec![rng.gen_range(0.0..1.0)],
        SpaceKind::Disk => {
            // polar with sqrt radius keeps the draw count fixed per point
            let r = rng.gen_range(0.0..1.0f64).sqrt();
            let t = rng.gen_range(-PI..PI);
            vec![r * t.cos(), r * t.sin()]
        }
        SpaceKind::Box { bounds } => bounds.iter().map(|&(a, b)| rng.gen_range(a..b)).collect(),
        SpaceKind::DiscreteN { n } => vec![rng.gen_range(0..*n) as f64],
    }
}

pub(crate) fn grid_points(space: &StateSpace, m: usize) -> Result<Vec<Vec<f64>>> {
    match &space.kind {
        SpaceKind::Circle => Ok((0..m)
            .map(|k| vec![2.0 * PI * (k as f64) / (m as f64) - PI])
            .collect()),
        SpaceKind::Torus2 => {
            let side = (m as f64).sqrt().round() as usize;
            if side * side != m {
                return Err(Error::InvalidParameter {
                    name: "M",
                    reason: format!("torus grid needs a perfect square, got {m}"),
                });
            }
            let mut pts = Vec::with_capacity(m);
            for i in 0..side {
                for j in 0..side {
                    pts.push(vec![
                        2.0 * PI * (i as f64) / (side as f64) - PI,
                        2.0 * PI * (j as f64) / (side as f64) - PI,
                    ]);
                }
            }
            Ok(pts)
        }
        SpaceKind::Interval01 => {
            if m < 2 {
                return Err(Error::InvalidParameter { name: "M", reason: "interval grid needs M >= 2".into() });
            }
            Ok((0..m).map(|k| vec![k as f64 / (m as f64 - 1.0)]).collect())
        }
        SpaceKind::Box { bounds } => {
            let d = bounds.len();
            let side = (m as f64).powf(1.0 / d as f64).round() as usize;
            if side.pow(d as u32) != m {
                return Err(Error::InvalidParameter {
                    name: "M",
                    reason: format!("box grid needs a d-th power, got {m}"),
                });
            }
            let mut pts = vec![Vec::new()];
            for &(a, b) in bounds {
                let mut next = Vec::with_capacity(pts.len() * side);
                for p in &pts {
                    for k in 0..side {
                        let mut q = p.clone();
                        // cell midpoints so the lattice stays inside the box
                        q.push(a + (b - a) * (k as f64 + 0.5) / side as f64);
                        next.push(q);
                    }
                }
                pts = next;
            }
            Ok(pts)
        }
        SpaceKind::DiscreteN { n } => {
            if m != *n {
                return Err(Error::InvalidParameter {
                    name: "M",
                    reason: format!("discrete grid must enumerate all {n} states"),
                });
            }
            Ok((0..*n).map(|k| vec![k as f64]).collect())
        }
        SpaceKind::Disk => Err(Error::InvalidParameter {
            name: "sampler",
            reason: "no regular lattice on the disk; use uniform-random".into(),
        }),
    }
}

/// Draws M snapshot pairs. Deterministic given `(sampler, M, n)`.
pub fn sample_snapshots(
    system: &DynamicalSystem,
    sampler: Sampler,
    m: usize,
    n: u32,
) -> Result<SnapshotSet> {
    if m < 1 {
        return Err(Error::InvalidParameter { name: "M", reason: "must be >= 1".into() });
    }
    let d = system.space.dim();
    let xs: Vec<Vec<f64>> = match &sampler {
        Sampler::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..m).map(|_| uniform_point(&system.space, &mut rng)).collect()
        }
        Sampler::RegularGrid => grid_points(&system.space, m)?,
        Sampler::SingleTrajectory { x0 } => {
            let orbit = system.trajectory(x0, m, n)?;
            orbit[..m].to_vec()
        }
    };
    let mut x = DMatrix::zeros(m, d);
    let mut y = DMatrix::zeros(m, d);
    for (r, px) in xs.iter().enumerate() {
        let py = system.evaluate(px, n)?;
        for c in 0..d {
            x[(r, c)] = px[c];
            y[(r, c)] = py[c];
        }
    }
    Ok(SnapshotSet {
        x,
        y,
        precision_exponent: effective_precision(n),
        sampler,
    })
}

/// Writes the snapshot CSV: a literal header line, one metadata row
/// `dim,precision_exponent,seed`, then `x_1..x_d,y_1..y_d` rows at 17
/// significant digits.
pub fn write_snapshot_csv<W: IoWrite>(set: &SnapshotSet, out: &mut W) -> Result<()> {
    writeln!(out, "dim,precision_exponent,seed")?;
    writeln!(out, "{},{},{}", set.dim(), set.precision_exponent, set.sampler.seed())?;
    for r in 0..set.len() {
        let mut fields = Vec::with_capacity(2 * set.dim());
        for c in 0..set.dim() {
            fields.push(format!("{:.16e}", set.x[(r, c)]));
        }
        for c in 0..set.dim() {
            fields.push(format!("{:.16e}", set.y[(r, c)]));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reads the snapshot CSV written by [`write_snapshot_csv`].
pub fn read_snapshot_csv<R: BufRead>(input: R) -> Result<SnapshotSet> {
    let mut lines = input.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, reason: "empty file".into() })?
        .1?;
    if header.trim() != "dim,precision_exponent,seed" {
        return Err(Error::Parse { line: 1, reason: "missing snapshot header".into() });
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 2, reason: "missing metadata row".into() })?
        .1?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parse { line: 2, reason: "metadata row needs 3 fields".into() });
    }
    let dim: usize = parts[0]
        .parse()
        .map_err(|_| Error::Parse { line: 2, reason: "bad dim".into() })?;
    let precision: u32 = parts[1]
        .parse()
        .map_err(|_| Error::Parse { line: 2, reason: "bad precision_exponent".into() })?;
    let seed: u64 = parts[2]
        .parse()
        .map_err(|_| Error::Parse { line: 2, reason: "bad seed".into() })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.trim().split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|_| Error::Parse { line: idx + 1, reason: "non-numeric field".into() })?;
        if vals.len() != 2 * dim {
            return Err(Error::Parse {
                line: idx + 1,
                reason: format!("expected {} fields, got {}", 2 * dim, vals.len()),
            });
        }
        rows.push(vals);
    }
    let m = rows.len();
    let mut x = DMatrix::zeros(m, dim);
    let mut y = DMatrix::zeros(m, dim);
    for (r, row) in rows.iter().enumerate() {
        for c in 0..dim {
            x[(r, c)] = row[c];
            y[(r, c)] = row[dim + c];
        }
    }
    Ok(SnapshotSet {
        x,
        y,
        precision_exponent: precision,
        sampler: Sampler::UniformRandom { seed },
    })
}
