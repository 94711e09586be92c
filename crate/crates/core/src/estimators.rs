//! Samplers for the invariant measures and the statistics built on them:
//! correlation functions, return-time tails, Hölder probes of the roof
//! function and the regression bundle describing long window excursions.
//!
//! Every estimator is a pure function of its arguments and a `u64` seed.
//! Sample `i` draws from its own ChaCha stream `(seed, i)`, work is fanned out
//! in fixed-size batches, and all reductions run in sample order, so the
//! worker count changes wall time only.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{billiard_map, flow_advance};
use crate::error::{Error, Result};
use crate::geometry::{FlowState, MCoord, Table, Vec2};
use crate::sections::{
    approximate_stable_pair, approximate_unstable_pair, excursion_through, in_sigma,
    window_state, Excursion, DEFAULT_PAIR_RETURNS,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Samples per unit of parallel work.
pub const BATCH: usize = 4096;
/// Batch-means groups for correlation standard errors.
pub const SE_GROUPS: usize = 32;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Minimum tail count for a threshold to enter a power-law fit.
pub const MIN_TAIL_COUNT: u64 = 50;
/// Redraws allowed per sample after discarded trajectories.
const MAX_REDRAWS: usize = 1000;

/// Independent stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` on consecutive index ranges of length [`BATCH`] covering `0..n`
/// and returns the results in range order.
pub fn par_batches<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::BadArgument(format!("thread pool: {e}")))?;
    let batches = n.div_ceil(BATCH);
    Ok(pool.install(|| {
        (0..batches)
            .into_par_iter()
            .map(|b| f(b * BATCH..((b + 1) * BATCH).min(n)))
            .collect()
    }))
}

// ---------------------------------------------------------------- samplers

/// Draw from the billiard-map invariant measure, density `∝ cos(phi)` in
/// `(r, phi)`: `r` uniform on the boundary, `phi = asin(2u - 1)`.
pub fn sample_mu<R: Rng + ?Sized>(table: &Table, rng: &mut R) -> MCoord {
    let s = rng.gen::<f64>() * table.total_length;
    let phi = (2.0 * rng.gen::<f64>() - 1.0).asin();
    let (piece, r) = table.at_global(s);
    table
        .mcoord(piece, r, phi)
        .expect("at_global yields an in-range chart point")
}

/// Draw from the invariant measure conditioned on Σ, by rejection.
pub fn sample_sigma<R: Rng + ?Sized>(table: &Table, epsilon: f64, rng: &mut R) -> MCoord {
    loop {
        let m = sample_mu(table, rng);
        if in_sigma(table, &m, epsilon) {
            return m;
        }
    }
}

/// Draw from Liouville measure: uniform position (rejection from the bounding
/// box) and uniform direction.
pub fn sample_liouville<R: Rng + ?Sized>(table: &Table, rng: &mut R) -> FlowState {
    sample_liouville_counted(table, rng).0
}

/// As [`sample_liouville`], also returning the number of proposals used.
pub fn sample_liouville_counted<R: Rng + ?Sized>(table: &Table, rng: &mut R) -> (FlowState, usize) {
    let (lo, hi) = table.bounding_box();
    let mut proposals = 0;
    loop {
        proposals += 1;
        let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if table.contains(p) {
            return (FlowState::new(p, rng.gen::<f64>() * TAU), proposals);
        }
    }
}

// ------------------------------------------------------------- observables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    X,
    Y,
    DirX,
    DirY,
    /// Collision angle; cross-section only.
    Phi,
    /// Global boundary arc length; cross-section only.
    ArcLength,
    /// Signed distance-like margin to the boundary; flow only (it vanishes
    /// identically on the cross-section).
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// `(1 - |p - center| / width)_+^exponent` on positions. With `mirror`
    /// the bump is evaluated at `(x, |y|)` against `(cx, |cy|)`, which makes it
    /// even under the reflection symmetry of the table.
    HolderBump {
        center: [f64; 2],
        width: f64,
        exponent: f64,
        #[serde(default)]
        mirror: bool,
    },
    Coordinate { component: Component },
    Constant { value: f64 },
}

impl ObservableSpec {
    pub fn id(&self) -> String {
        match self {
            ObservableSpec::HolderBump {
                center,
                width,
                exponent,
                mirror,
            } => format!(
                "bump(c=({},{}),w={},eta={}{})",
                center[0],
                center[1],
                width,
                exponent,
                if *mirror { ",mirror" } else { "" }
            ),
            ObservableSpec::Coordinate { component } => format!("coord({component:?})"),
            ObservableSpec::Constant { value } => format!("const({value})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ObservableSpec::HolderBump {
            center,
            width,
            exponent,
            ..
        } = self
        {
            if !(center[0].is_finite() && center[1].is_finite()) {
                return Err(Error::BadArgument("bump center must be finite".into()));
            }
            if !(*width > 0.0 && width.is_finite()) {
                return Err(Error::BadArgument("bump width must be positive".into()));
            }
            if !(*exponent > 0.0 && *exponent <= 1.0) {
                return Err(Error::BadArgument("bump exponent must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// The `eta`-Hölder seminorm of a bump, `width^-eta`: `t -> t^eta` is
    /// `eta`-Hölder with constant 1 and the radial profile is `1/width`
    /// Lipschitz; the pair (center, point at distance `width`) attains it.
    pub fn holder_seminorm(&self) -> Option<f64> {
        match self {
            ObservableSpec::HolderBump { width, exponent, .. } => Some(width.powf(-exponent)),
            ObservableSpec::Constant { .. } => Some(0.0),
            ObservableSpec::Coordinate { .. } => None,
        }
    }

    fn defined_on_map(&self) -> bool {
        !matches!(
            self,
            ObservableSpec::Coordinate {
                component: Component::Margin
            }
        )
    }

    fn defined_on_flow(&self) -> bool {
        !matches!(
            self,
            ObservableSpec::Coordinate {
                component: Component::Phi | Component::ArcLength
            }
        )
    }

    fn bump(center: [f64; 2], width: f64, exponent: f64, mirror: bool, p: Vec2) -> f64 {
        let (py, cy) = if mirror {
            (p.y.abs(), center[1].abs())
        } else {
            (p.y, center[1])
        };
        let d = (p.x - center[0]).hypot(py - cy);
        let t = 1.0 - d / width;
        if t > 0.0 {
            t.powf(exponent)
        } else {
            0.0
        }
    }

    pub fn on_map(&self, table: &Table, m: &MCoord) -> Result<f64> {
        Ok(match self {
            ObservableSpec::Constant { value } => *value,
            ObservableSpec::HolderBump {
                center,
                width,
                exponent,
                mirror,
            } => Self::bump(*center, *width, *exponent, *mirror, m.pos),
            ObservableSpec::Coordinate { component } => match component {
                Component::X => m.pos.x,
                Component::Y => m.pos.y,
                Component::DirX => table.outgoing_dir(m).x,
                Component::DirY => table.outgoing_dir(m).y,
                Component::Phi => m.phi,
                Component::ArcLength => table.global_s(m.piece, m.r),
                Component::Margin => return Err(Error::ObservableUndefined(self.id())),
            },
        })
    }

    pub fn on_flow(&self, table: &Table, s: &FlowState) -> Result<f64> {
        Ok(match self {
            ObservableSpec::Constant { value } => *value,
            ObservableSpec::HolderBump {
                center,
                width,
                exponent,
                mirror,
            } => Self::bump(*center, *width, *exponent, *mirror, s.pos),
            ObservableSpec::Coordinate { component } => match component {
                Component::X => s.pos.x,
                Component::Y => s.pos.y,
                Component::DirX => s.dir().x,
                Component::DirY => s.dir().y,
                Component::Margin => table.signed_margin(s.pos),
                Component::Phi | Component::ArcLength => {
                    return Err(Error::ObservableUndefined(self.id()))
                }
            },
        })
    }
}

// ------------------------------------------------------------ correlations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub schema_version: u32,
    /// Map lags; empty for the flow.
    pub lags: Vec<usize>,
    /// Flow times; empty for the map.
    pub times: Vec<f64>,
    /// `|C|` per lag or time.
    pub values: Vec<f64>,
    pub signed_values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n: usize,
    /// Trajectories redrawn after a discarded collision.
    pub discarded: usize,
    pub f: String,
    pub g: String,
}

/// Per-sample values: `f` at each lag and `g` at lag 0.
struct CorrSample {
    f: Vec<f64>,
    g: f64,
    discarded: usize,
}

#[derive(Clone)]
struct Moments {
    count: f64,
    g: f64,
    f: Vec<f64>,
    fg: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            count: 0.0,
            g: 0.0,
            f: vec![0.0; k],
            fg: vec![0.0; k],
        }
    }

    fn add(&mut self, s: &CorrSample, shift_f: f64, shift_g: f64) {
        let g = s.g - shift_g;
        self.count += 1.0;
        self.g += g;
        for (i, &fv) in s.f.iter().enumerate() {
            let f = fv - shift_f;
            self.f[i] += f;
            self.fg[i] += f * g;
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.count += o.count;
        self.g += o.g;
        for i in 0..self.f.len() {
            self.f[i] += o.f[i];
            self.fg[i] += o.fg[i];
        }
    }

    fn covariance(&self) -> Vec<f64> {
        let n = self.count;
        let mg = self.g / n;
        (0..self.f.len())
            .map(|i| self.fg[i] / n - (self.f[i] / n) * mg)
            .collect()
    }
}

fn ensemble_correlation<S>(
    n: usize,
    k: usize,
    workers: usize,
    sample: S,
) -> Result<(Vec<f64>, Vec<f64>, usize)>
where
    S: Fn(usize) -> Result<CorrSample> + Sync + Send,
{
    // Shifting by the first sample keeps constants exactly at zero and limits
    // cancellation in the one-pass covariance.
    let first = sample(0)?;
    let (shift_f, shift_g) = (first.f[0], first.g);
    let group_of = |i: usize| i * SE_GROUPS / n;
    let batches = par_batches(n, workers, |range| {
        let mut parts: Vec<(usize, Moments)> = Vec::new();
        let mut discarded = 0;
        for i in range {
            let s = sample(i)?;
            discarded += s.discarded;
            let gid = group_of(i);
            if parts.last().map(|p| p.0) != Some(gid) {
                parts.push((gid, Moments::new(k)));
            }
            parts.last_mut().expect("just pushed").1.add(&s, shift_f, shift_g);
        }
        Ok::<_, Error>((parts, discarded))
    })?;
    let mut groups = vec![Moments::new(k); SE_GROUPS];
    let mut discarded = 0;
    for b in batches {
        let (parts, d) = b?;
        discarded += d;
        for (gid, m) in parts {
            groups[gid].merge(&m);
        }
    }
    let mut total = Moments::new(k);
    for g in &groups {
        total.merge(g);
    }
    let values = total.covariance();
    let per_group: Vec<Vec<f64>> = groups.iter().map(Moments::covariance).collect();
    let ng = SE_GROUPS as f64;
    let se = (0..k)
        .map(|i| {
            let mean = per_group.iter().map(|c| c[i]).sum::<f64>() / ng;
            let var = per_group.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / (ng - 1.0);
            (var / ng).sqrt()
        })
        .collect();
    Ok((values, se, discarded))
}

fn check_ensemble(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::BadArgument(format!("ensemble size {n} below 1000")));
    }
    Ok(())
}

/// `C_k = mean(f∘T^k · g) - mean(f∘T^k) mean(g)` over `n` initial states drawn
/// from the map's invariant measure.
pub fn estimate_map_correlation(
    table: &Table,
    f: &ObservableSpec,
    g: &ObservableSpec,
    lags: &[usize],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<CorrelationSeries> {
    check_ensemble(n)?;
    if lags.is_empty() || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadArgument("lags must be nonempty and increasing".into()));
    }
    for o in [f, g] {
        o.validate()?;
        if !o.defined_on_map() {
            return Err(Error::ObservableUndefined(o.id()));
        }
    }
    let max_lag = *lags.last().expect("nonempty");
    let sample = |i: usize| -> Result<CorrSample> {
        let mut rng = sample_rng(seed, i as u64);
        'draw: for attempt in 0..MAX_REDRAWS {
            let m0 = sample_mu(table, &mut rng);
            let mut values = Vec::with_capacity(lags.len());
            let mut m = m0;
            let mut next = 0;
            for step in 0..=max_lag {
                if step == lags[next] {
                    values.push(f.on_map(table, &m)?);
                    next += 1;
                    if next == lags.len() {
                        break;
                    }
                }
                match billiard_map(table, &m) {
                    Ok((img, _)) => m = img,
                    Err(e) if e.is_discard() => continue 'draw,
                    Err(e) => return Err(e),
                }
            }
            return Ok(CorrSample {
                f: values,
                g: g.on_map(table, &m0)?,
                discarded: attempt,
            });
        }
        Err(Error::InsufficientData("every redraw was discarded".into()))
    };
    let (signed, std_errors, discarded) = ensemble_correlation(n, lags.len(), workers, sample)?;
    Ok(CorrelationSeries {
        schema_version: SCHEMA_VERSION,
        lags: lags.to_vec(),
        times: Vec::new(),
        values: signed.iter().map(|c| c.abs()).collect(),
        signed_values: signed,
        std_errors,
        n,
        discarded,
        f: f.id(),
        g: g.id(),
    })
}

/// Flow analogue of [`estimate_map_correlation`] over Liouville measure.
pub fn estimate_flow_correlation(
    table: &Table,
    f: &ObservableSpec,
    g: &ObservableSpec,
    times: &[f64],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<CorrelationSeries> {
    check_ensemble(n)?;
    if times.is_empty()
        || times[0] < 0.0
        || times.windows(2).any(|w| w[1] <= w[0])
        || times.iter().any(|t| !t.is_finite())
    {
        return Err(Error::BadArgument(
            "times must be nonempty, nonnegative and increasing".into(),
        ));
    }
    for o in [f, g] {
        o.validate()?;
        if !o.defined_on_flow() {
            return Err(Error::ObservableUndefined(o.id()));
        }
    }
    let sample = |i: usize| -> Result<CorrSample> {
        let mut rng = sample_rng(seed, i as u64);
        'draw: for attempt in 0..MAX_REDRAWS {
            let s0 = sample_liouville(table, &mut rng);
            let mut values = Vec::with_capacity(times.len());
            let mut s = s0;
            let mut now = 0.0;
            for &t in times {
                if t > now {
                    match flow_advance(table, &s, t - now) {
                        Ok(next) => s = next,
                        Err(e) if e.is_discard() => continue 'draw,
                        Err(e) => return Err(e),
                    }
                    now = t;
                }
                values.push(f.on_flow(table, &s)?);
            }
            return Ok(CorrSample {
                f: values,
                g: g.on_flow(table, &s0)?,
                discarded: attempt,
            });
        }
        Err(Error::InsufficientData("every redraw was discarded".into()))
    };
    let (signed, std_errors, discarded) = ensemble_correlation(n, times.len(), workers, sample)?;
    Ok(CorrelationSeries {
        schema_version: SCHEMA_VERSION,
        lags: Vec::new(),
        times: times.to_vec(),
        values: signed.iter().map(|c| c.abs()).collect(),
        signed_values: signed,
        std_errors,
        n,
        discarded,
        f: f.id(),
        g: g.id(),
    })
}

// ---------------------------------------------------------- survival tails

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub schema_version: u32,
    pub variable: String,
    pub thresholds: Vec<f64>,
    /// `P(X >= threshold)`.
    pub survival: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
    pub fitted_slope: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub fit_range: Option<[f64; 2]>,
    /// Set when the fit was skipped or is unreliable.
    pub warning: Option<String>,
}

impl SurvivalCurve {
    /// Empirical tail of `values` at increasing `thresholds`.
    pub fn from_samples(variable: &str, values: &[f64], thresholds: Vec<f64>) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as u64;
        let counts: Vec<u64> = thresholds
            .iter()
            .map(|&t| (sorted.len() - sorted.partition_point(|&v| v < t)) as u64)
            .collect();
        Self::from_counts(variable, thresholds, counts, n)
    }

    pub fn from_counts(variable: &str, thresholds: Vec<f64>, counts: Vec<u64>, n: u64) -> Self {
        let survival = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            variable: variable.to_string(),
            thresholds,
            survival,
            counts,
            n,
            fitted_slope: None,
            ci_low: None,
            ci_high: None,
            fit_range: None,
            warning: None,
        }
    }

    /// Widest range `[lower, t_hi]` over which every threshold has at least
    /// [`MIN_TAIL_COUNT`] tail counts.
    pub fn default_fit_range(&self, lower: f64) -> Option<[f64; 2]> {
        let start = self.thresholds.iter().position(|&t| t >= lower)?;
        let mut hi = None;
        for k in start..self.thresholds.len() {
            if self.counts[k] < MIN_TAIL_COUNT {
                break;
            }
            hi = Some(self.thresholds[k]);
        }
        hi.map(|h| [self.thresholds[start], h])
    }

    fn apply_fit(&mut self, fit: &PowerFit) {
        self.fitted_slope = Some(fit.slope);
        self.ci_low = Some(fit.ci_low);
        self.ci_high = Some(fit.ci_high);
        self.fit_range = Some(fit.range);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub range: [f64; 2],
    pub points: usize,
}

/// Ordinary least squares `y = a + b x`, returning `(a, b)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn log_fit(thresholds: &[f64], counts: &[u64], n: u64) -> Option<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = thresholds
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&t, &c)| (t.ln(), (c as f64 / n as f64).ln()))
        .unzip();
    (x.len() >= 2).then(|| ols(&x, &y))
}

/// Percentile of sorted data by linear interpolation.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares slope of log survival against log threshold over `range`,
/// with a percentile bootstrap CI from multinomial resamples of the curve's
/// own binned distribution.
pub fn fit_power_law(curve: &SurvivalCurve, range: [f64; 2], seed: u64) -> Result<PowerFit> {
    let idx: Vec<usize> = (0..curve.thresholds.len())
        .filter(|&k| curve.thresholds[k] >= range[0] && curve.thresholds[k] <= range[1])
        .collect();
    let usable = idx.iter().filter(|&&k| curve.counts[k] >= MIN_TAIL_COUNT).count();
    if usable < 5 || usable < idx.len() {
        return Err(Error::InsufficientData(format!(
            "{usable} of {} thresholds in [{}, {}] have {MIN_TAIL_COUNT}+ tail counts (need all, and at least 5)",
            idx.len(),
            range[0],
            range[1]
        )));
    }
    let ts: Vec<f64> = idx.iter().map(|&k| curve.thresholds[k]).collect();
    let cs: Vec<u64> = idx.iter().map(|&k| curve.counts[k]).collect();
    let (intercept, slope) = log_fit(&ts, &cs, curve.n).expect("five points");
    if !slope.is_finite() {
        return Err(Error::InsufficientData("degenerate threshold grid".into()));
    }

    // Bin masses: below the first threshold, between consecutive ones, and
    // the last tail.
    let k = curve.counts.len();
    let mut masses = Vec::with_capacity(k + 1);
    masses.push(curve.n - curve.counts[0]);
    for j in 0..k {
        let next = if j + 1 < k { curve.counts[j + 1] } else { 0 };
        masses.push(curve.counts[j] - next);
    }
    let mut rng = sample_rng(seed, u64::MAX);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut left = curve.n;
        let mut mass_left = curve.n;
        let mut drawn = vec![0u64; masses.len()];
        for (j, &m) in masses.iter().enumerate() {
            if left == 0 || mass_left == 0 {
                break;
            }
            let p = (m as f64 / mass_left as f64).min(1.0);
            let c = Binomial::new(left, p)
                .map_err(|e| Error::InsufficientData(e.to_string()))?
                .sample(&mut rng);
            drawn[j] = c;
            left -= c;
            mass_left -= m;
        }
        let mut tail = vec![0u64; k];
        let mut acc = 0;
        for j in (0..k).rev() {
            acc += drawn[j + 1];
            tail[j] = acc;
        }
        let rc: Vec<u64> = idx.iter().map(|&j| tail[j]).collect();
        if let Some((_, s)) = log_fit(&ts, &rc, curve.n) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    Ok(PowerFit {
        slope,
        intercept,
        ci_low: percentile(&slopes, 0.025),
        ci_high: percentile(&slopes, 0.975),
        range: [ts[0], *ts.last().expect("nonempty")],
        points: ts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub schema_version: u32,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Target slope `-(a + 1)` with `a = (beta + 2) / (beta - 2)`.
    pub target_slope: f64,
    pub r: SurvivalCurve,
    pub theta: SurvivalCurve,
    /// Entry states redrawn after a discarded trajectory.
    pub discarded: usize,
    pub max_r: u64,
    pub max_theta: f64,
}

impl TailReport {
    pub fn warnings(&self) -> Vec<String> {
        [&self.r, &self.theta]
            .iter()
            .filter_map(|c| c.warning.as_ref().map(|w| format!("{}: {w}", c.variable)))
            .collect()
    }

    /// Whether the two bootstrap intervals overlap.
    pub fn slopes_agree(&self) -> Option<bool> {
        Some(self.r.ci_low? <= self.theta.ci_high? && self.theta.ci_low? <= self.r.ci_high?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailOptions {
    /// Smallest collision-count threshold in the R fit.
    pub r_fit_lower: f64,
    /// Smallest flow-time threshold in the Θ fit; the table diameter (one
    /// maximal flight) when unset.
    pub theta_fit_lower: Option<f64>,
    /// Thresholds per doubling on the Θ grid.
    pub theta_grid_per_octave: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            r_fit_lower: 2.0,
            theta_fit_lower: None,
            theta_grid_per_octave: 4,
        }
    }
}

/// Survival curves of the collision count `R` and the flow time `Θ` of
/// excursions started from the invariant measure conditioned on Σ.
pub fn estimate_return_tail(
    table: &Table,
    epsilon: f64,
    n: usize,
    seed: u64,
    workers: usize,
    opts: &TailOptions,
) -> Result<TailReport> {
    if n == 0 {
        return Err(Error::BadArgument("need at least one excursion".into()));
    }
    if !(epsilon > 0.0 && epsilon < table.half_width()) {
        return Err(Error::BadArgument(format!("window half-width {epsilon} out of range")));
    }
    let batches = par_batches(n, workers, |range| {
        let mut out = Vec::with_capacity(range.len());
        let mut discarded = 0;
        for i in range {
            let mut rng = sample_rng(seed, i as u64);
            let mut got = None;
            for _ in 0..MAX_REDRAWS {
                let m = sample_sigma(table, epsilon, &mut rng);
                match crate::sections::next_excursion_capped(
                    table,
                    &m,
                    epsilon,
                    crate::sections::MAX_EXCURSION_LEN,
                ) {
                    Ok(e) => {
                        got = Some((e.r_count as u64, e.theta));
                        break;
                    }
                    Err(e) if e.is_discard() => discarded += 1,
                    Err(e) => return Err(e),
                }
            }
            out.push(got.ok_or_else(|| Error::InsufficientData("every redraw was discarded".into()))?);
        }
        Ok((out, discarded))
    })?;
    let mut rs = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    let mut discarded = 0;
    for b in batches {
        let (vals, d) = b?;
        discarded += d;
        for (r, t) in vals {
            rs.push(r);
            thetas.push(t);
        }
    }
    let max_r = *rs.iter().max().expect("n > 0");
    let max_theta = thetas.iter().cloned().fold(0.0, f64::max);

    let mut r_counts = vec![0u64; max_r as usize];
    for &r in &rs {
        r_counts[r as usize - 1] += 1;
    }
    // counts[k] = #{R >= k + 1}
    let mut acc = 0;
    for c in r_counts.iter_mut().rev() {
        acc += *c;
        *c = acc;
    }
    let r_thresholds = (1..=max_r).map(|k| k as f64).collect();
    let mut r_curve = SurvivalCurve::from_counts("R", r_thresholds, r_counts, n as u64);

    let per = opts.theta_grid_per_octave.max(1) as f64;
    let base = table.diameter / 8.0;
    let steps = ((max_theta / base).log2() * per).ceil().max(0.0) as usize;
    let theta_grid: Vec<f64> = (0..=steps).map(|j| base * 2f64.powf(j as f64 / per)).collect();
    let mut theta_curve = SurvivalCurve::from_samples("Theta", &thetas, theta_grid);

    for (curve, lower, salt) in [
        (&mut r_curve, opts.r_fit_lower, 1u64),
        (&mut theta_curve, opts.theta_fit_lower.unwrap_or(table.diameter), 2u64),
    ] {
        fit_curve(curve, lower, seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    Ok(TailReport {
        schema_version: SCHEMA_VERSION,
        beta: table.spec.beta,
        epsilon,
        seed,
        target_slope: -(table.spec.mixing_exponent() + 1.0),
        r: r_curve,
        theta: theta_curve,
        discarded,
        max_r,
        max_theta,
    })
}

/// Fits over the default range; a range under one decade or a failed fit
/// leaves a warning instead of an error.
fn fit_curve(curve: &mut SurvivalCurve, lower: f64, seed: u64) {
    let Some(range) = curve.default_fit_range(lower) else {
        curve.warning = Some(format!("no threshold >= {lower} has {MIN_TAIL_COUNT}+ counts"));
        return;
    };
    match fit_power_law(curve, range, seed) {
        Ok(fit) => {
            curve.apply_fit(&fit);
            if range[1] < 10.0 * range[0] {
                curve.warning = Some(
                    Error::InsufficientTail(format!(
                        "fit range [{}, {}] spans less than a decade",
                        range[0], range[1]
                    ))
                    .to_string(),
                );
            }
        }
        Err(e) => {
            curve.fit_range = Some(range);
            curve.warning = Some(Error::InsufficientTail(e.to_string()).to_string());
        }
    }
}

// ---------------------------------------------------- targeted excursions

/// Draws window launches and keeps the excursions through them whose cell
/// satisfies `accept`.
///
/// Long excursions carry too little invariant mass to be reached by sampling
/// the measure (`|n| >= 100` has mass near `1e-9` at `beta = 4`), so the launch
/// is drawn directly in the window: abscissa uniform in `(-x_spread,
/// x_spread)` on the bottom curve and vertical angle log-uniform in
/// `[angle_lo, angle_hi]` with a random sign. Since `|n|` grows like the
/// inverse square root of that angle, this covers cells on a log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLaunch {
    pub x_spread: f64,
    pub angle_lo: f64,
    pub angle_hi: f64,
}

impl WindowLaunch {
    /// Launch distribution aimed at cells of size about `n`, within a factor
    /// `spread` either way.
    pub fn around(n: f64, spread: f64) -> Self {
        let angle = (1.55 / n).powi(2);
        Self {
            x_spread: 0.1,
            angle_lo: angle / (spread * spread),
            angle_hi: (angle * spread * spread).min(1.0),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, table: &Table, rng: &mut R) -> Result<Excursion> {
        let x = rng.gen_range(-self.x_spread..self.x_spread);
        let log = rng.gen_range(self.angle_lo.ln()..=self.angle_hi.ln());
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let m = window_state(table, x, sign * log.exp())?;
        excursion_through(table, &m)
    }
}

/// Up to `want` excursions with accepted cells, from at most `budget`
/// launches; launch `i` uses stream `(seed, i)`.
pub fn collect_window_excursions<F>(
    table: &Table,
    launch: &WindowLaunch,
    accept: F,
    want: usize,
    budget: usize,
    seed: u64,
    workers: usize,
) -> Result<(Vec<Excursion>, usize)>
where
    F: Fn(&Excursion) -> bool + Sync + Send,
{
    let mut found = Vec::new();
    let mut tried = 0;
    while found.len() < want && tried < budget {
        let chunk = (budget - tried).min(BATCH * workers.max(1));
        let start = tried;
        let results = par_batches(chunk, workers, |range| {
            range
                .map(|i| {
                    let mut rng = sample_rng(seed, (start + i) as u64);
                    match launch.draw(table, &mut rng) {
                        Ok(e) if accept(&e) => Ok(Some(e)),
                        Ok(_) => Ok(None),
                        Err(e) if e.is_discard() => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Vec<_>>()
        })?;
        for r in results.into_iter().flatten() {
            if let Some(e) = r? {
                if found.len() < want {
                    found.push(e);
                }
            }
        }
        tried += chunk;
    }
    Ok((found, tried))
}

// ----------------------------------------------------------- Hölder probes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub cell: i64,
    pub theta_p: f64,
    pub theta_q: f64,
    /// `d(p, q)` for stable pairs, `d(T_Σ p, T_Σ q)` for unstable ones.
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub side: Side,
    pub gamma: f64,
    pub separation: f64,
    pub pairs_per_cell: usize,
    pub cells: Vec<i64>,
    pub pairs: Vec<ProbePair>,
    pub max_ratio: f64,
    pub max_ratio_per_cell: Vec<f64>,
    /// Least-squares slope of `ln(ratio)` against `ln(n)`.
    pub trend_statistic: f64,
    pub trend_ci_low: f64,
    pub trend_ci_high: f64,
    /// Candidate pairs rejected by certification.
    pub rejected: usize,
}

impl ProbeReport {
    /// No growth: the trend interval reaches zero or below.
    pub fn no_growth(&self) -> bool {
        self.trend_ci_low <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    pub separation: f64,
    pub returns: usize,
    /// Window launches per cell before giving up.
    pub budget: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            separation: 1e-5,
            returns: DEFAULT_PAIR_RETURNS,
            budget: 200_000,
        }
    }
}

/// Pairs closer than this are excluded from ratios.
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

/// Hölder ratios `|Θ(p) - Θ(q)| / d^gamma` over same-cell pairs on common
/// stable (or unstable) curves, for each requested cell.
#[allow(clippy::too_many_arguments)]
pub fn holder_probe(
    table: &Table,
    side: Side,
    cells: &[i64],
    gamma: f64,
    pairs_per_cell: usize,
    seed: u64,
    workers: usize,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::BadArgument(format!("gamma {gamma} outside (0, 1]")));
    }
    if cells.is_empty() || cells.contains(&0) || pairs_per_cell == 0 {
        return Err(Error::BadArgument("need nonzero cells and at least one pair".into()));
    }
    let mut pairs = Vec::new();
    let mut rejected = 0;
    let mut max_per_cell = Vec::new();
    for (ci, &cell) in cells.iter().enumerate() {
        let launch = WindowLaunch::around(cell.unsigned_abs() as f64, 3.0);
        let cell_seed = seed ^ (ci as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407);
        let mut got: Vec<ProbePair> = Vec::new();
        let mut last_err = None;
        let mut tried = 0;
        while got.len() < pairs_per_cell && tried < opts.budget {
            let want = 4 * (pairs_per_cell - got.len());
            let (found, used) = collect_window_excursions(
                table,
                &launch,
                |e| e.n == cell,
                want,
                opts.budget - tried,
                cell_seed.wrapping_add(tried as u64),
                workers,
            )?;
            tried += used;
            if found.is_empty() {
                break;
            }
            for e in found {
                if got.len() == pairs_per_cell {
                    break;
                }
                match probe_pair(table, side, &e.entry, gamma, opts) {
                    Ok(Some(p)) => got.push(p),
                    Ok(None) => rejected += 1,
                    Err(err @ (Error::NoContractionFound(_) | Error::CellMismatch(..))) => {
                        rejected += 1;
                        last_err = Some(err);
                    }
                    Err(err) if err.is_discard() => rejected += 1,
                    Err(err) => return Err(err),
                }
            }
        }
        if got.is_empty() {
            return Err(last_err.unwrap_or(Error::CellUnreachable(cell)));
        }
        if got.len() < pairs_per_cell && last_err.is_none() {
            return Err(Error::CellUnreachable(cell));
        }
        max_per_cell.push(got.iter().map(|p| p.ratio).fold(0.0, f64::max));
        pairs.extend(got);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .map(|p| ((p.cell.unsigned_abs() as f64).ln(), p.ratio.ln()))
        .unzip();
    let (trend, lo, hi) = if cells.len() >= 2 {
        let slope = ols(&lx, &ly).1;
        let mut rng = sample_rng(seed, u64::MAX - 1);
        let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let (bx, by): (Vec<f64>, Vec<f64>) = (0..lx.len())
                .map(|_| {
                    let j = rng.gen_range(0..lx.len());
                    (lx[j], ly[j])
                })
                .unzip();
            let s = ols(&bx, &by).1;
            if s.is_finite() {
                boots.push(s);
            }
        }
        boots.sort_by(f64::total_cmp);
        (slope, percentile(&boots, 0.025), percentile(&boots, 0.975))
    } else {
        (0.0, f64::NEG_INFINITY, f64::INFINITY)
    };
    Ok(ProbeReport {
        schema_version: SCHEMA_VERSION,
        side,
        gamma,
        separation: opts.separation,
        pairs_per_cell,
        cells: cells.to_vec(),
        max_ratio: max_per_cell.iter().cloned().fold(0.0, f64::max),
        max_ratio_per_cell: max_per_cell,
        pairs,
        trend_statistic: trend,
        trend_ci_low: lo,
        trend_ci_high: hi,
        rejected,
    })
}

fn probe_pair(
    table: &Table,
    side: Side,
    p: &MCoord,
    gamma: f64,
    opts: &ProbeOptions,
) -> Result<Option<ProbePair>> {
    let (cell, tp, tq, distance) = match side {
        Side::Stable => {
            let pair = approximate_stable_pair(table, p, opts.separation, opts.returns)?;
            (
                pair.cell,
                pair.excursion_p.theta,
                pair.excursion_q.theta,
                pair.separation,
            )
        }
        Side::Unstable => {
            let pair = approximate_unstable_pair(table, p, opts.separation, opts.returns)?;
            (
                pair.cell,
                pair.excursion_p.theta,
                pair.excursion_q.theta,
                pair.image_separation,
            )
        }
    };
    let diff = (tp - tq).abs();
    if distance < MIN_PAIR_DISTANCE || diff == 0.0 {
        return Ok(None);
    }
    Ok(Some(ProbePair {
        cell,
        theta_p: tp,
        theta_q: tq,
        distance,
        ratio: diff / distance.powf(gamma),
    }))
}

/// The admissible Hölder exponent `1 - 1/b`, `b = 2 + (beta + 2)/(beta - 2)`.
pub fn admissible_gamma(beta: f64) -> f64 {
    let b = 2.0 + (beta + 2.0) / (beta - 2.0);
    1.0 - 1.0 / b
}

// -------------------------------------------------------------- asymptotics

/// Kendall's tau-b with a one-sided normal-approximation p-value for a
/// positive association.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tie_x, mut tie_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * (x[i] != x[j]) as i64;
            let dy = (y[i] - y[j]).signum() as i64 * (y[i] != y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n * (n.saturating_sub(1)) / 2) as f64;
    let denom = ((n0 - tie_x as f64) * (n0 - tie_y as f64)).sqrt();
    let tau = if denom > 0.0 {
        (concordant - discordant) as f64 / denom
    } else {
        0.0
    };
    let nf = n as f64;
    let sd = (2.0 * (2.0 * nf + 5.0) / (9.0 * nf * (nf - 1.0))).sqrt();
    let z = tau / sd;
    let p = if z.is_finite() {
        1.0 - Normal::new(0.0, 1.0).expect("unit normal").cdf(z)
    } else {
        1.0
    };
    (tau, p)
}

/// Lower bound for the angle between window flights and the horizontal:
/// a chord from `(eps, -g(eps))` to the opposite curve has slope at least
/// `eps^beta / sqrt(eps^2 + eps^(2 beta))` in sine.
pub fn angle_floor_bound(epsilon: f64, beta: f64) -> f64 {
    let e = epsilon.powf(beta);
    (e / (epsilon * epsilon + e * e).sqrt()).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBin {
    pub n_lo: i64,
    pub n_hi: i64,
    pub count: usize,
    pub max_power_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub schema_version: u32,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub n_min: i64,
    /// Pass-through excursions with `n >= n_min` used for the slopes.
    pub long_excursions: usize,
    /// Median over excursions of the slope of `ln x_m` on `ln m`, `2 <= m <= n''`.
    pub first_segment_slope: f64,
    pub first_segment_iqr: [f64; 2],
    pub first_segment_target: f64,
    /// Median `R^2` of the linear fit of `x_m` on `m`, `n'' <= m <= n'`.
    pub second_segment_r2: f64,
    /// Slope of `ln w_{n'}` on `ln n`.
    pub w_slope: f64,
    /// The same regression against `ln n'`, for comparison.
    pub w_slope_n_prime: f64,
    pub w_slope_target: f64,
    /// Excursions with `1 <= |n| <= n_max_power` used for the power sums.
    pub broad_excursions: usize,
    pub n_max_power: i64,
    pub bins: Vec<CellBin>,
    /// `(|n|, running maximum)` at each new maximum, in increasing `|n|`.
    pub running_max: Vec<(i64, f64)>,
    pub max_power_sum: f64,
    /// Kendall tau of per-bin maxima against bin order, and its one-sided p.
    pub kendall_tau: f64,
    pub kendall_p: f64,
    /// Smallest `pi/2 - |phi|` over window bounces of `|n| >= 2` excursions,
    /// with `phi` the vertical angle.
    pub angle_floor_sampled: f64,
    pub angle_floor_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsymptoticsOptions {
    pub n_max_power: i64,
    pub power_bins: usize,
    /// Broad-sample excursions for the power sums and angle floor.
    pub broad_count: usize,
    /// Excursions started from the invariant measure on Σ, for the angle floor.
    pub natural_count: usize,
    pub budget_factor: usize,
}

impl Default for AsymptoticsOptions {
    fn default() -> Self {
        Self {
            n_max_power: 1000,
            power_bins: 12,
            broad_count: 20_000,
            natural_count: 200_000,
            budget_factor: 50,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

/// Regression bundle for long window excursions: first-segment decay of the
/// abscissas, scaling of the central advance with `n`, boundedness of the
/// power sums over cells and the angle floor.
pub fn asymptotics_report(
    table: &Table,
    n_min: i64,
    count: usize,
    seed: u64,
    workers: usize,
    opts: &AsymptoticsOptions,
) -> Result<AsymptoticsReport> {
    if n_min < 2 || count < 3 {
        return Err(Error::BadArgument("need n_min >= 2 and at least 3 excursions".into()));
    }
    let beta = table.spec.beta;
    let eps = table.spec.epsilon;

    let launch = WindowLaunch {
        x_spread: 0.05,
        angle_lo: (2.0 / n_min as f64).powi(2) * 1e-4,
        angle_hi: (2.0 / n_min as f64).powi(2),
    };
    let budget = count * opts.budget_factor;
    let (long, _) = collect_window_excursions(
        table,
        &launch,
        |e| e.n >= n_min && e.n_prime.is_some(),
        count,
        budget,
        seed,
        workers,
    )?;
    if long.len() < count {
        return Err(Error::InsufficientExcursions {
            found: long.len(),
            wanted: count,
            n_min,
        });
    }
    let mut first = Vec::new();
    let mut r2s = Vec::new();
    let (mut ln_n, mut ln_np, mut ln_w) = (Vec::new(), Vec::new(), Vec::new());
    for e in &long {
        let (np, ndp) = (e.n_prime.expect("filtered"), e.n_dprime.expect("filtered"));
        let xs = e.oriented_abscissas();
        if ndp >= 4 {
            let (a, b): (Vec<f64>, Vec<f64>) =
                (2..=ndp).map(|m| ((m as f64).ln(), xs[m].ln())).unzip();
            first.push(ols(&a, &b).1);
        }
        if np >= ndp + 2 {
            let (a, b): (Vec<f64>, Vec<f64>) = (ndp..=np).map(|m| (m as f64, xs[m])).unzip();
            r2s.push(r_squared(&a, &b));
        }
        ln_n.push((e.n as f64).ln());
        ln_np.push((np as f64).ln());
        ln_w.push(e.w[np].abs().ln());
    }
    if first.is_empty() {
        return Err(Error::InsufficientExcursions {
            found: 0,
            wanted: count,
            n_min,
        });
    }
    first.sort_by(f64::total_cmp);
    let first_segment_iqr = [percentile(&first, 0.25), percentile(&first, 0.75)];
    let first_segment_slope = percentile(&first, 0.5);
    let second_segment_r2 = if r2s.is_empty() { f64::NAN } else { median(r2s) };
    let w_slope = ols(&ln_n, &ln_w).1;
    let w_slope_n_prime = ols(&ln_np, &ln_w).1;

    // Broad sample over cells 1..=n_max_power.
    let n_max = opts.n_max_power.max(2);
    let broad_launch = WindowLaunch {
        x_spread: eps,
        angle_lo: (1.55 / n_max as f64).powi(2),
        angle_hi: 0.5,
    };
    let (broad, _) = collect_window_excursions(
        table,
        &broad_launch,
        |e| e.n != 0 && e.n.abs() <= n_max,
        opts.broad_count,
        opts.broad_count * opts.budget_factor,
        seed ^ 0x5851_F42D_4C95_7F2D,
        workers,
    )?;
    if broad.len() < opts.power_bins {
        return Err(Error::InsufficientExcursions {
            found: broad.len(),
            wanted: opts.broad_count,
            n_min: 1,
        });
    }
    let nb = opts.power_bins.max(2);
    let edges: Vec<i64> = (0..=nb)
        .map(|k| (n_max as f64).powf(k as f64 / nb as f64).round() as i64)
        .collect();
    let mut bins: Vec<CellBin> = Vec::new();
    for k in 0..nb {
        let lo = if k == 0 { 1 } else { edges[k] + 1 };
        let hi = edges[k + 1];
        if hi < lo {
            continue;
        }
        let sums: Vec<f64> = broad
            .iter()
            .filter(|e| (lo..=hi).contains(&e.n.abs()))
            .map(|e| e.power_sum(beta))
            .collect();
        bins.push(CellBin {
            n_lo: lo,
            n_hi: hi,
            count: sums.len(),
            max_power_sum: sums.iter().cloned().fold(0.0, f64::max),
        });
    }
    let filled: Vec<&CellBin> = bins.iter().filter(|b| b.count > 0).collect();
    let (kt, kp) = kendall_tau(
        &(0..filled.len()).map(|i| i as f64).collect::<Vec<_>>(),
        &filled.iter().map(|b| b.max_power_sum).collect::<Vec<_>>(),
    );
    let mut by_n: Vec<(i64, f64)> = broad.iter().map(|e| (e.n.abs(), e.power_sum(beta))).collect();
    by_n.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut running_max = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (n, s) in by_n {
        if s > best {
            best = s;
            running_max.push((n, s));
        }
    }

    // The targeted launches fix their own angle range, so the floor is also
    // taken over excursions drawn from the invariant measure on Σ.
    let floor_of = |e: &Excursion| {
        if e.n.abs() >= 2 {
            e.bounces.iter().map(|b| FRAC_PI_2 - b.phi.abs()).fold(PI, f64::min)
        } else {
            PI
        }
    };
    let natural = par_batches(opts.natural_count, workers, |range| {
        range
            .filter_map(|i| {
                let mut rng = sample_rng(seed ^ 0x2545_F491_4F6C_DD1D, i as u64);
                let m = sample_sigma(table, eps, &mut rng);
                crate::sections::next_excursion(table, &m).ok().map(|e| floor_of(&e))
            })
            .fold(PI, f64::min)
    })?;
    let angle_floor_sampled = broad
        .iter()
        .chain(long.iter())
        .map(floor_of)
        .chain(natural)
        .fold(PI, f64::min);

    Ok(AsymptoticsReport {
        schema_version: SCHEMA_VERSION,
        beta,
        epsilon: eps,
        seed,
        n_min,
        long_excursions: long.len(),
        first_segment_slope,
        first_segment_iqr,
        first_segment_target: 2.0 / (2.0 - beta),
        second_segment_r2,
        w_slope,
        w_slope_n_prime,
        w_slope_target: beta / (2.0 - beta),
        broad_excursions: broad.len(),
        n_max_power: n_max,
        bins,
        running_max,
        max_power_sum: best,
        kendall_tau: kt,
        kendall_p: kp,
        angle_floor_sampled,
        angle_floor_bound: angle_floor_bound(eps, beta),
    })
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = ols(x, y);
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    }
}

/// Kolmogorov–Smirnov distance between two samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
