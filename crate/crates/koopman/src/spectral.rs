//! Residual function, pseudospectrum grids, the certified spectrum
//! algorithm, limit stabilization, and residual-validated EDMD eigenvalues.
//!
//! The residual `h(z)` is the smallest L2 norm of `(K - z)g` over unit
//! vectors `g` in the dictionary span. On a grid it yields pseudospectrum
//! approximations; its local minimizers, for measure-preserving systems,
//! locate the approximate point spectrum with a per-point error bound.

use std::collections::HashMap;
use std::io::Write as IoWrite;

use nalgebra::Complex;
use rayon::prelude::*;

use crate::galerkin::{self, GalerkinTriple};
use crate::linalg;
use crate::{Error, Result};

type C64 = Complex<f64>;

/// Provenance of a spectral result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sigma1Certified,
    Sigma2Limit,
    EdmdRaw,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Sigma1Certified => "sigma1-certified",
            Mode::Sigma2Limit => "sigma2-limit",
            Mode::EdmdRaw => "edmd-raw",
        }
    }
}

/// A set of spectral points with per-point residual bounds.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub points: Vec<C64>,
    pub residuals: Vec<f64>,
    pub mode: Mode,
    /// Global bound: all points lie within this distance of the approximate
    /// point spectrum, when certified.
    pub error_bound: Option<f64>,
    /// Set when the grid shows no residual dip below threshold, meaning the
    /// dictionary cannot resolve any spectrum on this grid.
    pub insufficient_dictionary: bool,
}

/// Square lattice `spacing * (Z + iZ)` clipped to the disk of the given
/// radius, optionally restricted to a sub-rectangle.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub spacing: f64,
    pub radius: f64,
    /// `[re_min, re_max, im_min, im_max]` restriction.
    pub region: Option<[f64; 4]>,
}

impl GridSpec {
    pub fn new(spacing: f64, radius: f64) -> Self {
        Self { spacing, radius, region: None }
    }

    pub fn with_region(spacing: f64, radius: f64, region: [f64; 4]) -> Self {
        Self { spacing, radius, region: Some(region) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidParameter { name: "spacing", reason: "must be > 0".into() });
        }
        if !(self.radius >= self.spacing) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: "must be at least the spacing".into(),
            });
        }
        if let Some([a, b, c, d]) = self.region {
            if !(a <= b && c <= d) {
                return Err(Error::InvalidParameter {
                    name: "region",
                    reason: "rectangle bounds out of order".into(),
                });
            }
        }
        Ok(())
    }

    /// Lattice points as (integer index, complex point), row-major in the
    /// imaginary then real index.
    pub fn lattice(&self) -> Vec<((i64, i64), C64)> {
        let k = (self.radius / self.spacing).floor() as i64;
        let mut out = Vec::new();
        for ki in -k..=k {
            for kr in -k..=k {
                let z = C64::new(kr as f64 * self.spacing, ki as f64 * self.spacing);
                if z.norm() > self.radius {
                    continue;
                }
                if let Some([a, b, c, d]) = self.region {
                    if z.re < a || z.re > b || z.im < c || z.im > d {
                        continue;
                    }
                }
                out.push(((kr, ki), z));
            }
        }
        out
    }
}

/// Smallest residual `||(K - z)g||` over unit `g` in the dictionary span:
/// the square root of the clamped minimal eigenvalue of
/// `L - conj(z) A - z A' + |z|^2 I`.
pub fn residual(z: C64, t: &GalerkinTriple) -> Result<f64> {
    if !t.basis_is_orthonormal {
        return Err(Error::NonOrthonormalTriple);
    }
    let n = t.dim();
    let zc = z.conj();
    let mut m = t.l.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] -= zc * t.a[(i, j)] + z * t.a[(j, i)].conj();
        }
    }
    let z2 = z.norm_sqr();
    for i in 0..n {
        m[(i, i)] += C64::new(z2, 0.0);
    }
    // clamp absorbs eigensolver noise at the -1e-12 scale
    Ok(linalg::min_hermitian_eigenvalue(&m).max(0.0).sqrt())
}

/// The residual evaluated over a whole grid, in lattice order.
#[derive(Clone, Debug)]
pub struct ResidualField {
    pub points: Vec<C64>,
    pub residuals: Vec<f64>,
    index: Vec<(i64, i64)>,
}

/// Evaluates the residual at every grid point (parallel, deterministic
/// order).
pub fn residual_field(t: &GalerkinTriple, grid: &GridSpec) -> Result<ResidualField> {
    grid.validate()?;
    if !t.basis_is_orthonormal {
        return Err(Error::NonOrthonormalTriple);
    }
    let lattice = grid.lattice();
    let residuals: Vec<f64> = lattice
        .par_iter()
        .map(|&(_, z)| residual(z, t).expect("triple checked orthonormal"))
        .collect();
    Ok(ResidualField {
        points: lattice.iter().map(|&(_, z)| z).collect(),
        residuals,
        index: lattice.into_iter().map(|(k, _)| k).collect(),
    })
}

/// Grid pseudospectrum: keeps the points with `residual + spacing < eps`.
pub fn pseudospectrum_grid(
    t: &GalerkinTriple,
    grid: &GridSpec,
    eps: f64,
) -> Result<SpectralResult> {
    if !(eps > grid.spacing) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must exceed the grid spacing {}", grid.spacing),
        });
    }
    let field = residual_field(t, grid)?;
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    for (i, &z) in field.points.iter().enumerate() {
        if field.residuals[i] + grid.spacing < eps {
            points.push(z);
            residuals.push(field.residuals[i]);
        }
    }
    Ok(SpectralResult {
        points,
        residuals,
        mode: Mode::Sigma1Certified,
        error_bound: Some(eps),
        insufficient_dictionary: false,
    })
}

/// Retention rule for [`spectrum_sigma1`].
#[derive(Clone, Copy, Debug)]
pub struct Sigma1Config {
    /// Threshold is `multiplier` times the median grid residual...
    pub multiplier: f64,
    /// ...capped by this absolute value when set.
    pub cap: Option<f64>,
}

impl Default for Sigma1Config {
    fn default() -> Self {
        Self { multiplier: 0.5, cap: None }
    }
}

fn upper_median(vals: &[f64]) -> f64 {
    let mut v = vals.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Certified spectrum via local residual minimizers. Requires the system to
/// be declared measure-preserving, which makes the residual equal the
/// distance to the approximate point spectrum up to quadrature error: each
/// retained `z` then satisfies `dist(z, spectrum) <= residual(z)`.
pub fn spectrum_sigma1(
    t: &GalerkinTriple,
    grid: &GridSpec,
    measure_preserving: bool,
    cfg: &Sigma1Config,
) -> Result<SpectralResult> {
    if !measure_preserving {
        return Err(Error::CertificateRefused(
            "system not declared measure-preserving; use the limit-stabilized tower instead"
                .into(),
        ));
    }
    if !(cfg.multiplier > 0.0) {
        return Err(Error::InvalidParameter {
            name: "multiplier",
            reason: "must be > 0".into(),
        });
    }
    let field = residual_field(t, grid)?;
    if field.points.is_empty() {
        return Err(Error::InvalidParameter { name: "grid", reason: "grid is empty".into() });
    }
    let mut threshold = cfg.multiplier * upper_median(&field.residuals);
    if let Some(cap) = cfg.cap {
        threshold = threshold.min(cap);
    }
    let by_index: HashMap<(i64, i64), usize> =
        field.index.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    for (i, &(kr, ki)) in field.index.iter().enumerate() {
        let h = field.residuals[i];
        if h >= threshold {
            continue;
        }
        let mut is_min = true;
        'nbrs: for dr in -1i64..=1 {
            for di in -1i64..=1 {
                if dr == 0 && di == 0 {
                    continue;
                }
                match by_index.get(&(kr + dr, ki + di)) {
                    Some(&j) => {
                        if field.residuals[j] < h {
                            is_min = false;
                            break 'nbrs;
                        }
                    }
                    // grid-boundary points cannot certify a dip
                    None => {
                        is_min = false;
                        break 'nbrs;
                    }
                }
            }
        }
        if is_min {
            points.push(field.points[i]);
            residuals.push(h);
        }
    }
    if points.is_empty() {
        return Ok(SpectralResult {
            points,
            residuals,
            mode: Mode::Sigma1Certified,
            error_bound: Some(f64::INFINITY),
            insufficient_dictionary: true,
        });
    }
    let bound = residuals.iter().copied().fold(0.0, f64::max);
    Ok(SpectralResult {
        points,
        residuals,
        mode: Mode::Sigma1Certified,
        error_bound: Some(bound),
        insufficient_dictionary: false,
    })
}

/// Three-way decision of the limit-stabilization device.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Below,
    Above,
    Undecided,
}

/// Decides where a convergent history settles relative to `eps` using the
/// separated intervals `[0, eps - slack]` and `[eps + slack/2, inf)`: the
/// last history entry inside either interval rules.
pub fn limit_stabilize(history: &[f64], eps: f64, slack: f64) -> Result<Decision> {
    if !(slack > 0.0) {
        return Err(Error::InvalidParameter { name: "slack", reason: "must be > 0".into() });
    }
    for &v in history.iter().rev() {
        if v <= eps - slack {
            return Ok(Decision::Below);
        }
        if v >= eps + slack / 2.0 {
            return Ok(Decision::Above);
        }
    }
    Ok(Decision::Undecided)
}

/// Limit-stabilized pseudospectrum over a tower of triples with growing
/// data. Per grid point the residual history is fed to [`limit_stabilize`]
/// with `slack = spacing`; points decided below are retained with their
/// final residual. No certified error bound.
pub fn spectrum_sigma2(
    triples: &[GalerkinTriple],
    grid: &GridSpec,
    eps: f64,
) -> Result<SpectralResult> {
    if !(eps > grid.spacing) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must exceed the grid spacing {}", grid.spacing),
        });
    }
    if triples.len() < 2 {
        return Ok(SpectralResult {
            points: Vec::new(),
            residuals: Vec::new(),
            mode: Mode::Sigma2Limit,
            error_bound: None,
            insufficient_dictionary: false,
        });
    }
    let n = triples[0].dim();
    for t in triples {
        if t.dim() != n {
            return Err(Error::ShapeMismatch(
                "tower triples must share one dictionary".into(),
            ));
        }
    }
    let fields: Vec<ResidualField> =
        triples.iter().map(|t| residual_field(t, grid)).collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    for i in 0..fields[0].points.len() {
        let history: Vec<f64> = fields.iter().map(|f| f.residuals[i]).collect();
        if limit_stabilize(&history, eps, grid.spacing)? == Decision::Below {
            points.push(fields[0].points[i]);
            residuals.push(*history.last().unwrap());
        }
    }
    Ok(SpectralResult {
        points,
        residuals,
        mode: Mode::Sigma2Limit,
        error_bound: None,
        insufficient_dictionary: false,
    })
}

/// Sorts eigenvalues by descending modulus, ties by ascending argument.
pub fn sort_eigenvalues(vals: &mut [C64]) {
    vals.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then_with(|| a.arg().total_cmp(&b.arg()))
    });
}

/// EDMD eigenvalues with their residuals attached; no certification.
pub fn edmd_eigenvalues(t: &GalerkinTriple) -> Result<SpectralResult> {
    if !t.basis_is_orthonormal {
        return Err(Error::NonOrthonormalTriple);
    }
    let k = galerkin::edmd_matrix(t)?;
    let mut vals = linalg::complex_eigenvalues(&k)?;
    sort_eigenvalues(&mut vals);
    let residuals = vals
        .iter()
        .map(|&z| residual(z, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectralResult {
        points: vals,
        residuals,
        mode: Mode::EdmdRaw,
        error_bound: None,
        insufficient_dictionary: false,
    })
}

/// Writes a result as `re(z),im(z),residual,mode` CSV.
pub fn write_spectral_csv<W: IoWrite>(res: &SpectralResult, out: &mut W) -> Result<()> {
    writeln!(out, "re(z),im(z),residual,mode")?;
    for (z, h) in res.points.iter().zip(&res.residuals) {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{}", z.re, z.im, h, res.mode.as_str())?;
    }
    Ok(())
}

/// Writes a full residual field in the same CSV layout, mode column `grid`.
pub fn write_residual_field_csv<W: IoWrite>(field: &ResidualField, out: &mut W) -> Result<()> {
    writeln!(out, "re(z),im(z),residual,mode")?;
    for (z, h) in field.points.iter().zip(&field.residuals) {
        writeln!(out, "{:.16e},{:.16e},{:.16e},grid", z.re, z.im, h)?;
    }
    Ok(())
}
