//! Batch front end: a run is a pure function of a [`RunConfig`], and every
//! command writes flat CSV plus a JSON sidecar into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use flatpoint::dynamics::{billiard_map, free_flight_formula, next_collision_from, time_reverse};
use flatpoint::estimators::{
    admissible_gamma, asymptotics_report, estimate_flow_correlation, estimate_map_correlation,
    estimate_return_tail, holder_probe, par_batches, sample_mu, sample_rng, AsymptoticsOptions,
    ObservableSpec, ProbeOptions, Side, TailOptions, SCHEMA_VERSION,
};
use flatpoint::report;
use flatpoint::{build_table, Error, Model, Result, Table, TableSpec};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Samples for the measure-invariance check.
    pub invariance_samples: usize,
    /// States for the flight-formula, reflection and reversibility checks.
    pub collisions: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            invariance_samples: 100_000,
            collisions: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateConfig {
    pub f: ObservableSpec,
    pub g: ObservableSpec,
    pub lags: Vec<usize>,
    /// Flow times; the flow series is skipped when empty.
    pub times: Vec<f64>,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        let bump = ObservableSpec::HolderBump {
            center: [0.0, -1.0],
            width: 0.3,
            exponent: 0.5,
            mirror: true,
        };
        Self {
            f: bump.clone(),
            g: bump,
            lags: (0..=20).collect(),
            times: (0..=20).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderConfig {
    /// Defaults to the admissible exponent `1 - 1/b` for the table's beta.
    pub gamma: Option<f64>,
    pub cells: Vec<i64>,
    pub pairs_per_cell: usize,
    /// Also probe stable pairs at `gamma = 1` for contrast.
    pub contrast: bool,
    pub probe: ProbeOptions,
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            cells: vec![5, 10, 20, 40],
            pairs_per_cell: 20,
            contrast: true,
            probe: ProbeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub n_min: i64,
    pub count: usize,
    pub options: AsymptoticsOptions,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            n_min: 100,
            count: 300,
            options: AsymptoticsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub table: TableSpec,
    pub seed: u64,
    /// Parallel workers; affects wall time only.
    #[serde(skip)]
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Excursions for `tail`, ensemble size for `correlate`.
    pub samples: usize,
    pub validate: ValidateConfig,
    pub tail: TailOptions,
    pub correlate: CorrelateConfig,
    pub holder: HolderConfig,
    pub asymptotics: AsymptoticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            table: TableSpec::new(4.0, Model::Symmetric),
            seed: 42,
            workers: 1,
            out_dir: PathBuf::from("out"),
            samples: 1_000_000,
            validate: ValidateConfig::default(),
            tail: TailOptions::default(),
            correlate: CorrelateConfig::default(),
            holder: HolderConfig::default(),
            asymptotics: AsymptoticsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidSpec(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!(
                "config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.table.validate()?;
        if self.workers == 0 {
            return Err(Error::InvalidSpec("workers must be at least 1".into()));
        }
        if let Some(g) = self.holder.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidSpec(format!("gamma {g} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Process exit code for an error: configuration problems are 2, everything
/// else (statistical or convergence failures) is 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidSpec(_) | Error::BadArgument(_) => 2,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub command: String,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorRecord {
    pub fn new(command: &str, e: &Error) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            kind: error_kind(e),
            message: e.to_string(),
            exit_code: exit_code(e),
        }
    }
}

/// Result of a command that ran to completion. A `failure` means the run was
/// statistically inconclusive or a check failed; its files are still written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub failure: Option<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            1
        } else {
            0
        }
    }
}

struct Emitter<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl<'a> Emitter<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            outcome: Outcome::default(),
        })
    }

    fn file<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.file(name, |w| report::write_json(w, value))
    }

    fn say(&mut self, line: String) {
        self.outcome.summary.push(line);
    }
}

/// Writes `error.json` for a failed command into `dir`, best effort.
pub fn write_error(dir: &Path, command: &str, e: &Error) -> Option<PathBuf> {
    fs::create_dir_all(dir).ok()?;
    let path = dir.join("error.json");
    let mut f = File::create(&path).ok()?;
    report::write_json(&mut f, &ErrorRecord::new(command, e)).ok()?;
    Some(path)
}

// ------------------------------------------------------------------ checks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl Check {
    fn new(name: &str, statistic: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.to_string(),
            passed: statistic <= tolerance,
            statistic,
            tolerance,
            samples,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.3e} (tolerance {:.3e}, n = {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.tolerance,
            self.samples
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub table: TableSpec,
    pub checks: Vec<Check>,
}

pub const CLOSURE_TOL: f64 = 1e-9;
pub const REFLECTION_TOL: f64 = 1e-12;
pub const FLIGHT_TOL: f64 = 1e-9;
pub const REVERSIBILITY_TOL: f64 = 1e-9;

fn draw_until<T, F>(seed: u64, index: u64, mut f: F) -> T
where
    F: FnMut(&mut ChaCha8Rng) -> Option<T>,
{
    let mut rng = sample_rng(seed, index);
    loop {
        if let Some(v) = f(&mut rng) {
            return v;
        }
    }
}

/// Largest gap between consecutive piece endpoints.
pub fn closure_check(table: &Table) -> Check {
    Check::new("closure", table.closure_gap().1, CLOSURE_TOL, table.pieces.len())
}

/// Specular reflection: tangential component kept, normal one flipped, at
/// the collisions reached from `n` draws of the invariant measure.
pub fn reflection_check(table: &Table, n: usize, seed: u64) -> Check {
    let worst = (0..n)
        .map(|i| {
            draw_until(seed, i as u64, |rng| {
                let m = sample_mu(table, rng);
                let c = next_collision_from(table, &m).ok()?;
                let (out, _) = billiard_map(table, &m).ok()?;
                let frame = table.boundary_point(out.piece, out.r).ok()?;
                let d_out = table.outgoing_dir(&out);
                let t = (d_out.dot(frame.tangent) - c.dir_in.dot(frame.tangent)).abs();
                let nn = (d_out.dot(frame.normal) + c.dir_in.dot(frame.normal)).abs();
                Some(t.max(nn))
            })
        })
        .fold(0.0, f64::max);
    Check::new("reflection", worst, REFLECTION_TOL, n)
}

/// Solver flight times between the power curves against the closed-form
/// window flight `(g(x) + g(x')) / cos(phi_v)`, as relative errors.
pub fn flight_formula_check(table: &Table, n: usize, seed: u64) -> Check {
    let eps = table.spec.epsilon;
    let worst = (0..n)
        .map(|i| {
            draw_until(seed, i as u64, |rng| {
                let m = sample_mu(table, rng);
                if !table.pieces[m.piece].kind.is_power() || m.pos.x.abs() >= eps {
                    return None;
                }
                let (next, tau) = billiard_map(table, &m).ok()?;
                if !table.pieces[next.piece].kind.is_power() {
                    return None;
                }
                let phi_v = table.vertical_angle(&m).ok()?;
                let formula = free_flight_formula(table, m.pos.x, phi_v, next.pos.x).ok()?;
                Some((tau - formula).abs() / tau)
            })
        })
        .fold(0.0, f64::max);
    Check::new("window flight formula", worst, FLIGHT_TOL, n)
}

/// `rho T rho T = id` on `n` draws of the invariant measure.
pub fn reversibility_check(table: &Table, n: usize, seed: u64) -> Check {
    let worst = (0..n)
        .map(|i| {
            draw_until(seed, i as u64, |rng| {
                let m = sample_mu(table, rng);
                let (a, _) = billiard_map(table, &m).ok()?;
                let (b, _) = billiard_map(table, &time_reverse(&a)).ok()?;
                Some(table.distance_m(&time_reverse(&b), &m))
            })
        })
        .fold(0.0, f64::max);
    Check::new("reversibility", worst, REVERSIBILITY_TOL, n)
}

/// One-sample Kolmogorov–Smirnov distance of `values` from the CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(values: &mut [f64], cdf: F) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS distances of the `phi` and global-arc-length marginals of the
/// pushforward of the invariant measure under one map step from their exact
/// laws `(1 + sin phi)/2` and `s / L`.
pub fn invariance_statistics(table: &Table, n: usize, seed: u64, workers: usize) -> Result<(f64, f64)> {
    let batches = par_batches(n, workers, |range| {
        range
            .map(|i| {
                draw_until(seed, i as u64, |rng| {
                    let m = sample_mu(table, rng);
                    let (img, _) = billiard_map(table, &m).ok()?;
                    Some((img.phi, table.global_s(img.piece, img.r)))
                })
            })
            .collect::<Vec<_>>()
    })?;
    let (mut phis, mut ss): (Vec<f64>, Vec<f64>) = batches.into_iter().flatten().unzip();
    let l = table.total_length;
    let ks_phi = ks_one_sample(&mut phis, |p| 0.5 * (1.0 + p.sin()));
    let ks_s = ks_one_sample(&mut ss, |s| s / l);
    Ok((ks_phi, ks_s))
}

/// Tolerance for a one-sample KS distance at level `1e-3`.
pub fn ks_tolerance(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

pub fn validation_checks(table: &Table, cfg: &ValidateConfig, seed: u64, workers: usize) -> Result<Vec<Check>> {
    let k = cfg.collisions;
    let mut checks = vec![
        closure_check(table),
        reflection_check(table, k, seed),
        flight_formula_check(table, k, seed ^ 1),
        reversibility_check(table, k, seed ^ 2),
    ];
    let n = cfg.invariance_samples;
    let (ks_phi, ks_s) = invariance_statistics(table, n, seed ^ 3, workers)?;
    checks.push(Check::new("invariance phi marginal (KS)", ks_phi, ks_tolerance(n), n));
    checks.push(Check::new("invariance arc-length marginal (KS)", ks_s, ks_tolerance(n), n));
    Ok(checks)
}

// ---------------------------------------------------------------- commands

/// Geometry and dynamics invariant suite. A table that fails to close is a
/// failed check, not a configuration error.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let mut em = Emitter::new(&cfg.out_dir)?;
    let checks = match build_table(cfg.table.clone()) {
        Ok(table) => validation_checks(&table, &cfg.validate, cfg.seed, cfg.workers)?,
        Err(e @ (Error::NotClosed { .. } | Error::DegenerateCap { .. })) => {
            let statistic = match e {
                Error::NotClosed { gap, .. } => gap,
                _ => f64::INFINITY,
            };
            em.say(format!("table rejected: {e}"));
            vec![Check::new("closure", statistic, CLOSURE_TOL, 0)]
        }
        Err(e) => return Err(e),
    };
    for c in &checks {
        em.say(c.line());
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        em.outcome.failure = Some(format!("failed checks: {}", failed.join(", ")));
    }
    em.json(
        "validate.json",
        &ValidationReport {
            schema_version: SCHEMA_VERSION,
            table: cfg.table.clone(),
            checks,
        },
    )?;
    Ok(em.outcome)
}

pub fn cmd_tail(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let table = build_table(cfg.table.clone())?;
    let rep = estimate_return_tail(
        &table,
        cfg.table.epsilon,
        cfg.samples,
        cfg.seed,
        cfg.workers,
        &cfg.tail,
    )?;
    let mut em = Emitter::new(&cfg.out_dir)?;
    em.file("tail_r.csv", |w| report::write_survival_csv(w, &rep.r))?;
    em.file("tail_theta.csv", |w| report::write_survival_csv(w, &rep.theta))?;
    em.json("tail.json", &rep)?;
    for c in [&rep.r, &rep.theta] {
        em.say(format!(
            "{} slope {} CI [{}, {}] range {:?} (target {:.3})",
            c.variable,
            opt(c.fitted_slope),
            opt(c.ci_low),
            opt(c.ci_high),
            c.fit_range,
            rep.target_slope
        ));
    }
    for w in rep.warnings() {
        em.say(format!("warning: {w}"));
    }
    // The collision-count curve is the primary statistic; the flow-time curve
    // is a cross-check whose warnings are informational.
    if let Some(w) = &rep.r.warning {
        em.outcome.failure = Some(w.clone());
    }
    Ok(em.outcome)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

pub fn cmd_correlate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let table = build_table(cfg.table.clone())?;
    let c = &cfg.correlate;
    let map = estimate_map_correlation(&table, &c.f, &c.g, &c.lags, cfg.samples, cfg.seed, cfg.workers)?;
    let mut em = Emitter::new(&cfg.out_dir)?;
    em.file("correlation_map.csv", |w| report::write_correlation_csv(w, &map))?;
    em.json("correlation_map.json", &map)?;
    em.say(format!("map correlation: {} lags, n = {}", map.lags.len(), map.n));
    if !c.times.is_empty() {
        let flow = estimate_flow_correlation(
            &table,
            &c.f,
            &c.g,
            &c.times,
            cfg.samples,
            cfg.seed ^ 0xF10,
            cfg.workers,
        )?;
        em.file("correlation_flow.csv", |w| report::write_correlation_csv(w, &flow))?;
        em.json("correlation_flow.json", &flow)?;
        em.say(format!("flow correlation: {} times, n = {}", flow.times.len(), flow.n));
    }
    Ok(em.outcome)
}

pub fn cmd_holder(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let table = build_table(cfg.table.clone())?;
    let h = &cfg.holder;
    let gamma = h.gamma.unwrap_or_else(|| admissible_gamma(cfg.table.beta));
    let mut em = Emitter::new(&cfg.out_dir)?;
    let mut runs = vec![("stable", Side::Stable, gamma), ("unstable", Side::Unstable, gamma)];
    if h.contrast && gamma < 1.0 {
        runs.push(("stable_gamma1", Side::Stable, 1.0));
    }
    let mut growth = Vec::new();
    for (name, side, g) in runs {
        let rep = holder_probe(&table, side, &h.cells, g, h.pairs_per_cell, cfg.seed, cfg.workers, &h.probe)?;
        em.file(&format!("holder_{name}.csv"), |w| report::write_probe_csv(w, &rep))?;
        em.json(&format!("holder_{name}.json"), &rep)?;
        em.say(format!(
            "{name}: gamma {g:.3} max ratio {:.4e} trend {:.4} CI [{:.4}, {:.4}]",
            rep.max_ratio, rep.trend_statistic, rep.trend_ci_low, rep.trend_ci_high
        ));
        // Growth is only a failure at an admissible exponent.
        if g == gamma && !rep.no_growth() {
            growth.push(name);
        }
    }
    if !growth.is_empty() {
        em.outcome.failure = Some(format!("Hölder ratios grow with n: {}", growth.join(", ")));
    }
    Ok(em.outcome)
}

pub fn cmd_asymptotics(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let table = build_table(cfg.table.clone())?;
    let a = &cfg.asymptotics;
    let rep = asymptotics_report(&table, a.n_min, a.count, cfg.seed, cfg.workers, &a.options)?;
    let mut em = Emitter::new(&cfg.out_dir)?;
    em.json("asymptotics.json", &rep)?;
    em.file("power_bins.csv", |w| report::write_power_bins_csv(w, &rep))?;
    em.file("running_max.csv", |w| report::write_running_max_csv(w, &rep))?;
    em.say(format!(
        "first segment slope {:.4} (target {:.4}); w slope {:.4} against n (target {:.4}), {:.4} against n'",
        rep.first_segment_slope, rep.first_segment_target, rep.w_slope, rep.w_slope_target, rep.w_slope_n_prime
    ));
    em.say(format!(
        "max power sum {:.4e}; Kendall tau {:.3} (p = {:.3}); angle floor {:.4} >= bound {:.4}",
        rep.max_power_sum, rep.kendall_tau, rep.kendall_p, rep.angle_floor_sampled, rep.angle_floor_bound
    ));
    Ok(em.outcome)
}
