//! Discrete-time RAGE functionals: autocorrelation series, time-averaged
//! projected norms estimating pure-point spectral mass, a weak-mixing
//! decision tower, and Wiener atom masses.
//!
//! The pure-point mass of an observable `g` is recovered as the double
//! limit of `(1/(2L+1)) sum_l ||P_n K^l g||^2` over horizons `L` and
//! projection ranks `n`; its complement is the continuous mass. The
//! weak-mixing decision feeds the max of these averages over a family of
//! mean-zero observables into [`limit_stabilize`].

use std::io::{BufRead, Write as IoWrite};

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::galerkin::{edmd_matrix, GalerkinTriple};
use crate::linalg;
use crate::spectral::{limit_stabilize, Decision};
use crate::{Error, Result};

type C64 = Complex<f64>;

/// How an autocorrelation series was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcSource {
    GalerkinPowers,
    TrajectoryErgodicAverage,
    Ingested,
}

impl AcSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            AcSource::GalerkinPowers => "galerkin-powers",
            AcSource::TrajectoryErgodicAverage => "trajectory-ergodic-average",
            AcSource::Ingested => "ingested",
        }
    }
}

/// Lagged moments `<K^l g, g>` for `l = -L..L`.
///
/// The lag-0 value is the (empirical) squared norm of `g`; negative lags
/// are conjugates of the positive ones, which is exact for unitary
/// sources and holds by construction here.
#[derive(Clone, Debug)]
pub struct AutocorrelationSeries {
    pub lags: Vec<i64>,
    pub values: Vec<C64>,
    pub source: AcSource,
}

impl AutocorrelationSeries {
    pub fn horizon(&self) -> usize {
        (self.lags.len() - 1) / 2
    }

    /// Value at a signed lag. Panics if `|lag|` exceeds the horizon.
    pub fn value(&self, lag: i64) -> C64 {
        let h = self.horizon() as i64;
        assert!(lag.abs() <= h, "lag {lag} outside stored horizon {h}");
        self.values[(lag + h) as usize]
    }
}

/// Input to [`autocorrelation`]: either an observable's coefficients in
/// an orthonormal Galerkin basis, or a sampled scalar time series.
pub enum AcInput<'a> {
    GalerkinPowers { triple: &'a GalerkinTriple, coeffs: &'a DVector<C64> },
    Trajectory { series: &'a [C64] },
    Ingested { series: &'a [C64] },
}

/// Computes `<K^l g, g>` for lags up to `horizon`.
///
/// With Galerkin input the matrix powers of the EDMD operator are applied
/// to the coefficient vector; the operator must be a contraction up to
/// 1e-8. With a time series the lags are ergodic averages of
/// `g(x_{t+l}) * conj(g(x_t))`, each over the same number of terms.
pub fn autocorrelation(input: AcInput<'_>, horizon: usize) -> Result<AutocorrelationSeries> {
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "autocorrelation horizon must be at least 1".into(),
        });
    }
    let (positive, source) = match input {
        AcInput::GalerkinPowers { triple, coeffs } => {
            (galerkin_lags(triple, coeffs, horizon)?, AcSource::GalerkinPowers)
        }
        AcInput::Trajectory { series } => {
            (series_lags(series, horizon)?, AcSource::TrajectoryErgodicAverage)
        }
        AcInput::Ingested { series } => (series_lags(series, horizon)?, AcSource::Ingested),
    };
    let h = horizon as i64;
    let lags: Vec<i64> = (-h..=h).collect();
    let values = lags
        .iter()
        .map(|&l| {
            if l >= 0 {
                positive[l as usize]
            } else {
                positive[(-l) as usize].conj()
            }
        })
        .collect();
    Ok(AutocorrelationSeries { lags, values, source })
}

fn galerkin_lags(t: &GalerkinTriple, coeffs: &DVector<C64>, horizon: usize) -> Result<Vec<C64>> {
    if !t.basis_is_orthonormal {
        return Err(Error::NonOrthonormalTriple);
    }
    if coeffs.len() != t.dim() {
        return Err(Error::ShapeMismatch(format!(
            "observable has {} coefficients, triple dimension is {}",
            coeffs.len(),
            t.dim()
        )));
    }
    let kmat = edmd_matrix(t)?;
    let norm = linalg::spectral_norm(&kmat);
    if norm > 1.0 + 1e-8 {
        return Err(Error::NotAContraction { norm });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    let mut x = coeffs.clone();
    out.push(coeffs.dotc(&x));
    for _ in 1..=horizon {
        x = &kmat * x;
        out.push(coeffs.dotc(&x));
    }
    Ok(out)
}

fn series_lags(series: &[C64], horizon: usize) -> Result<Vec<C64>> {
    let t = series.len();
    if horizon >= t {
        return Err(Error::HorizonExceedsSeries { horizon, len: t });
    }
    let window = t - horizon;
    let scale = 1.0 / window as f64;
    let out: Vec<C64> = (0..=horizon)
        .into_par_iter()
        .map(|l| {
            let mut acc = C64::new(0.0, 0.0);
            for t0 in 0..window {
                acc += series[t0 + l] * series[t0].conj();
            }
            acc * scale
        })
        .collect();
    Ok(out)
}

/// Finite-rank projection family used by [`rage_pp_mass`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// First `n` coordinates of an orthonormal Galerkin basis.
    DictionaryPrefix,
    /// Leading singular directions of the depth-`d` Hankel matrix of a
    /// scalar time series, thresholded at 1e-8 of the top singular value.
    TimeDelay { depth: usize },
}

/// Input to [`rage_pp_mass`], matching the projection family.
pub enum RageInput<'a> {
    Galerkin { triple: &'a GalerkinTriple, coeffs: &'a DVector<C64> },
    Series { values: &'a [C64] },
}

/// Time-averaged projected mass of one observable.
#[derive(Clone, Debug)]
pub struct RageEstimate {
    /// Estimated pure-point mass, in `[0, 1]`.
    pub pp_mass: f64,
    /// Complementary continuous mass, `1 - pp_mass`.
    pub cont_mass: f64,
    /// Projection rank actually used.
    pub n: usize,
    /// Time-average horizon `L`; the average runs over lags `-L..L`.
    pub horizon: usize,
    pub observable_id: String,
}

/// Estimates `||P_pp g||^2` as the average of `||P_n K^l g||^2` over lags
/// `-L..L`, after normalizing `g` to unit norm.
///
/// Dictionary-prefix projections act on Galerkin coefficients, with
/// adjoint powers supplying the negative lags. Time-delay projections act
/// on the empirical vectors of a scalar series; each lag's window is
/// scaled to unit norm so projected and complementary masses split the
/// total exactly. The result is clamped to `[0, 1]` and
/// `cont_mass = 1 - pp_mass`.
pub fn rage_pp_mass(
    input: &RageInput<'_>,
    observable_id: &str,
    n: usize,
    horizon: usize,
    projection: Projection,
) -> Result<RageEstimate> {
    let (pp, used) = match (input, projection) {
        (RageInput::Galerkin { triple, coeffs }, Projection::DictionaryPrefix) => {
            if !triple.basis_is_orthonormal {
                return Err(Error::NonOrthonormalTriple);
            }
            let kmat = edmd_matrix(triple)?;
            let n_eff = n.min(triple.dim());
            (prefix_pp(&kmat, coeffs, n_eff, horizon)?, n_eff)
        }
        (RageInput::Series { values }, Projection::TimeDelay { depth }) => {
            delay_pp(values, depth, n, horizon)?
        }
        (RageInput::Galerkin { .. }, Projection::TimeDelay { .. }) => {
            return Err(Error::InvalidParameter {
                name: "projection",
                reason: "time-delay projections need a scalar time series".into(),
            });
        }
        (RageInput::Series { .. }, Projection::DictionaryPrefix) => {
            return Err(Error::InvalidParameter {
                name: "projection",
                reason: "dictionary-prefix projections need a Galerkin triple".into(),
            });
        }
    };
    Ok(RageEstimate {
        pp_mass: pp,
        cont_mass: 1.0 - pp,
        n: used,
        horizon,
        observable_id: observable_id.to_string(),
    })
}

fn prefix_norm_sq(x: &DVector<C64>, n: usize) -> f64 {
    x.iter().take(n).map(|v| v.norm_sqr()).sum()
}

fn prefix_pp(
    kmat: &DMatrix<C64>,
    coeffs: &DVector<C64>,
    n: usize,
    horizon: usize,
) -> Result<f64> {
    if coeffs.len() != kmat.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "observable has {} coefficients, operator dimension is {}",
            coeffs.len(),
            kmat.nrows()
        )));
    }
    let scale = coeffs.norm();
    if scale == 0.0 {
        return Err(Error::InvalidParameter {
            name: "g",
            reason: "observable has zero norm".into(),
        });
    }
    let start = coeffs / C64::new(scale, 0.0);
    let mut acc = prefix_norm_sq(&start, n);
    let mut x = start.clone();
    for _ in 1..=horizon {
        x = kmat * x;
        acc += prefix_norm_sq(&x, n);
    }
    let adj = kmat.adjoint();
    let mut y = start;
    for _ in 1..=horizon {
        y = &adj * y;
        acc += prefix_norm_sq(&y, n);
    }
    Ok((acc / (2 * horizon + 1) as f64).clamp(0.0, 1.0))
}

fn delay_pp(series: &[C64], depth: usize, n: usize, horizon: usize) -> Result<(f64, usize)> {
    if depth == 0 {
        return Err(Error::InvalidParameter {
            name: "depth",
            reason: "time-delay depth must be at least 1".into(),
        });
    }
    let t = series.len();
    if t < 2 * horizon + depth {
        return Err(Error::HorizonExceedsSeries { horizon, len: t });
    }
    let window = t - 2 * horizon - depth + 1;
    let scale = C64::new(1.0 / (window as f64).sqrt(), 0.0);
    let mut hankel = DMatrix::<C64>::zeros(window, depth);
    for t0 in 0..window {
        for j in 0..depth {
            hankel[(t0, j)] = series[horizon + t0 + j] * scale;
        }
    }
    // range basis via the depth x depth Gram matrix; see the note on
    // rank-deficient SVD in linalg
    let mut gram = hankel.adjoint() * &hankel;
    linalg::symmetrize(&mut gram);
    let (lambda, wvecs) = linalg::hermitian_eigen(&gram);
    let sigma: Vec<f64> = lambda.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let sigma_max = sigma[depth - 1];
    if sigma_max == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let rank = sigma.iter().filter(|&&s| s > 1e-8 * sigma_max).count();
    let used = n.min(rank);
    let basis: Vec<DVector<C64>> = (depth - used..depth)
        .map(|idx| {
            let mut col = &hankel * wvecs.column(idx) / C64::new(sigma[idx], 0.0);
            let norm = col.norm();
            if norm > 0.0 {
                col /= C64::new(norm, 0.0);
            }
            col
        })
        .collect();
    let h = horizon as i64;
    let masses: Vec<f64> = (0..2 * horizon + 1)
        .into_par_iter()
        .map(|k| {
            let l = k as i64 - h;
            let mut v = DVector::<C64>::zeros(window);
            for t0 in 0..window {
                v[t0] = series[(horizon as i64 + t0 as i64 + l) as usize] * scale;
            }
            let vn = v.norm();
            if vn == 0.0 {
                return Err(Error::DegenerateSeries);
            }
            v /= C64::new(vn, 0.0);
            let mut m = 0.0;
            for b in &basis {
                m += b.dotc(&v).norm_sqr();
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let pp = masses.iter().sum::<f64>() / (2 * horizon + 1) as f64;
    Ok((pp.clamp(0.0, 1.0), used))
}

/// Observable family for [`weak_mixing_decide`], matching the projection
/// family the decision will use.
pub enum WeakMixInput<'a> {
    Galerkin { triple: &'a GalerkinTriple, observables: &'a [DVector<C64>] },
    Series { observables: &'a [Vec<C64>], depth: usize },
}

/// Outcome of the weak-mixing tower at one outer index.
#[derive(Clone, Debug)]
pub struct WeakMixingDecision {
    /// 1 if a nontrivial eigenfunction is detected, 0 otherwise.
    pub bit: u8,
    /// Max pure-point mass over the observables, one entry per scheduled
    /// horizon.
    pub history: Vec<f64>,
}

/// Decides whether the system restricted to the given mean-zero
/// observables has a nontrivial eigenfunction.
///
/// For each horizon in `schedule` the maximum rank-`n2` pure-point mass
/// over the first `n2` observables is recorded; the history is fed to
/// [`limit_stabilize`] with the separated intervals `[0, 1/4]` and
/// `[1/2, inf)`, and the bit is 1 exactly when the history settles in the
/// upper interval. Bits are non-decreasing in `n2` because the
/// projections and observable families are nested.
pub fn weak_mixing_decide(
    input: &WeakMixInput<'_>,
    n2: usize,
    schedule: &[usize],
) -> Result<WeakMixingDecision> {
    if n2 == 0 {
        return Err(Error::InvalidParameter {
            name: "n2",
            reason: "outer index must be at least 1".into(),
        });
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "schedule",
            reason: "inner horizons must be strictly increasing and non-empty".into(),
        });
    }
    let mut history = Vec::with_capacity(schedule.len());
    match input {
        WeakMixInput::Galerkin { triple, observables } => {
            if observables.is_empty() {
                return Err(Error::EmptyObservables);
            }
            if !triple.basis_is_orthonormal {
                return Err(Error::NonOrthonormalTriple);
            }
            let kmat = edmd_matrix(triple)?;
            let n_eff = n2.min(triple.dim());
            let family = &observables[..n2.min(observables.len())];
            for &l in schedule {
                let masses: Vec<f64> = family
                    .par_iter()
                    .map(|c| prefix_pp(&kmat, c, n_eff, l))
                    .collect::<Result<_>>()?;
                history.push(masses.into_iter().fold(0.0, f64::max));
            }
        }
        WeakMixInput::Series { observables, depth } => {
            if observables.is_empty() {
                return Err(Error::EmptyObservables);
            }
            let family = &observables[..n2.min(observables.len())];
            for &l in schedule {
                let masses: Vec<f64> = family
                    .par_iter()
                    .map(|s| delay_pp(s, *depth, n2, l).map(|(pp, _)| pp))
                    .collect::<Result<_>>()?;
                history.push(masses.into_iter().fold(0.0, f64::max));
            }
        }
    }
    let decision = limit_stabilize(&history, 5.0 / 12.0, 1.0 / 6.0)?;
    Ok(WeakMixingDecision { bit: u8::from(decision == Decision::Above), history })
}

/// Wiener averages `(1/(2L+1)) sum_l e^{-i l theta} <K^l g, g>`, one per
/// angle, with the real part clamped at 0.
///
/// As `L` grows each average converges to the spectral-measure atom of
/// `g` at `e^{i theta}`.
pub fn atom_masses(
    ac: &AutocorrelationSeries,
    thetas: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "thetas",
            reason: "at least one angle is required".into(),
        });
    }
    if horizon > ac.horizon() {
        return Err(Error::HorizonExceedsSeries { horizon, len: ac.horizon() });
    }
    let h = horizon as i64;
    Ok(thetas
        .iter()
        .map(|&theta| {
            let mut acc = C64::new(0.0, 0.0);
            for l in -h..=h {
                acc += C64::from_polar(1.0, -(l as f64) * theta) * ac.value(l);
            }
            (acc.re / (2 * horizon + 1) as f64).max(0.0)
        })
        .collect())
}

/// Writes a scalar time series as single-column CSV under a `dt_steps=1`
/// header.
pub fn write_series_csv<W: IoWrite>(values: &[f64], out: &mut W) -> Result<()> {
    writeln!(out, "dt_steps=1")?;
    for v in values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

/// Reads a time series written by [`write_series_csv`].
pub fn read_series_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut lines = input.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, reason: "empty file".into() })?
        .1?;
    if header.trim() != "dt_steps=1" {
        return Err(Error::Parse { line: 1, reason: "missing dt_steps=1 header".into() });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v: f64 = text.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            reason: format!("bad series value {text:?}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Writes estimates as `n,L,pp_mass,cont_mass` CSV rows.
pub fn write_rage_report<W: IoWrite>(rows: &[RageEstimate], out: &mut W) -> Result<()> {
    writeln!(out, "n,L,pp_mass,cont_mass")?;
    for r in rows {
        writeln!(out, "{},{},{:.16e},{:.16e}", r.n, r.horizon, r.pp_mass, r.cont_mass)?;
    }
    Ok(())
}
