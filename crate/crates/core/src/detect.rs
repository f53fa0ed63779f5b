//! Decisions on top of zeta traces: jump candidates, second-lobe test on `C(q)`,
//! the white-noise reference, and the `(N, T, l)` robustness sweep.

use std::fmt;

use crate::engine::{self, AnalysisConfig, WindowResult};
use crate::error::{Error, Result};
use crate::ingest::{generate_synthetic, match_moments_from, MomentSource, PriceSeries};
use crate::mfcore::{analyze_window, Spectrum};

/// Candidates from different sweep configurations are the same event when their
/// anchors lie within this many shifts of each other.
pub const MATCH_TOLERANCE_SHIFTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPolicy {
    /// Typical zeta of an event-free series.
    pub noise_floor: f64,
    /// A jump needs `zeta >= jump_factor * noise_floor`.
    pub jump_factor: f64,
    /// Minimum lobe prominence as a fraction of `max C`.
    pub lobe_prominence: f64,
    /// Fraction of sweep configurations that must flag an event.
    pub sweep_persistence: f64,
    pub sweep_windows: Vec<usize>,
    pub sweep_lags: Vec<usize>,
    pub sweep_shifts: Vec<usize>,
    /// Moments the noise reference copies.
    pub moment_source: MomentSource,
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        DetectionPolicy {
            noise_floor: 1e-3,
            jump_factor: 10.0,
            lobe_prominence: 0.05,
            sweep_persistence: 0.8,
            sweep_windows: vec![500, 1000, 1500],
            sweep_lags: vec![1, 2, 5],
            sweep_shifts: vec![1, 5],
            moment_source: MomentSource::Levels,
        }
    }
}

impl DetectionPolicy {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.noise_floor) || !positive(self.jump_factor) {
            return Err(Error::InvalidConfig(
                "noise floor and jump factor must be positive".into(),
            ));
        }
        if !positive(self.lobe_prominence) {
            return Err(Error::InvalidConfig(
                "lobe prominence must be positive".into(),
            ));
        }
        if !(self.sweep_persistence > 0.0 && self.sweep_persistence <= 1.0) {
            return Err(Error::InvalidConfig(
                "sweep persistence must be in (0, 1]".into(),
            ));
        }
        for (name, list) in [
            ("window", &self.sweep_windows),
            ("lag", &self.sweep_lags),
            ("shift", &self.sweep_shifts),
        ] {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::InvalidConfig(format!(
                    "sweep {name} list must be non-empty and positive"
                )));
            }
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.jump_factor * self.noise_floor
    }

    /// Replaces the noise floor with the largest zeta seen on the noise reference.
    pub fn with_measured_floor(mut self, reference: &NoiseReference) -> Self {
        if let NoiseReference::Measured(s) = reference {
            if s.max > 0.0 {
                self.noise_floor = s.max;
            }
        }
        self
    }
}

/// A run of consecutive windows whose zeta crosses the jump threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub first_n: usize,
    pub last_n: usize,
    /// Mapped series index of the first flagged window.
    pub anchor: usize,
    pub window_start: usize,
    pub label: Option<String>,
    /// Zeta at the first flagged window.
    pub zeta: f64,
    pub peak_zeta: f64,
}

pub fn detect_jumps(results: &[WindowResult], policy: &DetectionPolicy) -> Vec<Candidate> {
    let threshold = policy.threshold();
    let mut out: Vec<Candidate> = Vec::new();
    for r in results {
        let Some(z) = r.zeta.filter(|&z| z >= threshold) else {
            continue;
        };
        match out.last_mut() {
            Some(c) if c.last_n + 1 == r.n => {
                c.last_n = r.n;
                c.peak_zeta = c.peak_zeta.max(z);
            }
            _ => out.push(Candidate {
                first_n: r.n,
                last_n: r.n,
                anchor: r.t_prime,
                window_start: r.window_start,
                label: r.label.clone(),
                zeta: z,
                peak_zeta: z,
            }),
        }
    }
    out
}

/// Maxima of `C(q)` that survive the prominence filter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lobes {
    pub positions: Vec<f64>,
    pub has_second_lobe: bool,
}

pub fn find_lobes(spectrum: &Spectrum, policy: &DetectionPolicy) -> Lobes {
    let q = spectrum.grid.interior_points();
    let positions: Vec<f64> = prominent_peaks(&spectrum.c, policy.lobe_prominence)
        .into_iter()
        .map(|i| q[i])
        .collect();
    let has_second_lobe = positions.len() >= 2 && positions.iter().any(|&q| q > 0.0);
    Lobes {
        positions,
        has_second_lobe,
    }
}

/// Indices of local maxima whose prominence exceeds `relative * max(y)`.
///
/// Plateaus count once, at their middle sample. End points are never peaks.
pub fn prominent_peaks(y: &[f64], relative: f64) -> Vec<usize> {
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top.is_nan() || top <= 0.0 {
        return Vec::new();
    }
    let min_prominence = relative * top;
    local_maxima(y)
        .into_iter()
        .filter(|&p| prominence(y, p) > min_prominence)
        .collect()
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = y.len();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height above the higher of the two lowest points reached before a taller sample or an edge.
fn prominence(y: &[f64], peak: usize) -> f64 {
    let h = y[peak];
    let mut left = h;
    for &v in y[..peak].iter().rev() {
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &y[peak + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaSummary {
    pub windows: usize,
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
}

/// Statistics over the defined zeta values of a trace.
pub fn summarize(results: &[WindowResult]) -> Option<ZetaSummary> {
    let mut z: Vec<f64> = results.iter().filter_map(|r| r.zeta).collect();
    if z.is_empty() {
        return None;
    }
    z.sort_by(f64::total_cmp);
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    Some(ZetaSummary {
        windows: z.len(),
        max: z[z.len() - 1],
        mean,
        p99: percentile(&z, 0.99),
    })
}

/// Linear-interpolated percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile(&v, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseReference {
    Measured(ZetaSummary),
    /// The matched noise has no usable window (zero variance).
    Degenerate,
    /// Windows exist but no zeta is defined.
    Undefined,
}

/// White noise with the series' moments and length.
pub fn noise_series(series: &PriceSeries, seed: u64, source: MomentSource) -> Result<PriceSeries> {
    generate_synthetic(&match_moments_from(series, seed, series.len(), source))
}

/// Engine run on moment-matched white noise; `Ok(None)` when every noise window is degenerate.
pub fn noise_run(
    series: &PriceSeries,
    config: &AnalysisConfig,
    policy: &DetectionPolicy,
    seed: u64,
) -> Result<Option<Vec<WindowResult>>> {
    let noise = noise_series(series, seed, policy.moment_source)?;
    match engine::run(&noise, config) {
        Ok(r) => Ok(Some(r)),
        Err(Error::AllDegenerate) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn noise_reference(
    series: &PriceSeries,
    config: &AnalysisConfig,
    policy: &DetectionPolicy,
    seed: u64,
) -> Result<NoiseReference> {
    Ok(match noise_run(series, config, policy, seed)? {
        None => NoiseReference::Degenerate,
        Some(r) => summarize(&r).map_or(NoiseReference::Undefined, NoiseReference::Measured),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    SystemicCrisis,
    Scare,
    Quiet,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::SystemicCrisis => "systemic_crisis",
            Classification::Scare => "scare",
            Classification::Quiet => "quiet",
        })
    }
}

pub fn classify(
    zeta: f64,
    has_second_lobe: bool,
    persistence: f64,
    policy: &DetectionPolicy,
) -> Classification {
    if zeta < policy.threshold() {
        Classification::Quiet
    } else if has_second_lobe && persistence >= policy.sweep_persistence {
        Classification::SystemicCrisis
    } else {
        Classification::Scare
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventFlag {
    pub t_prime: usize,
    pub label: Option<String>,
    pub zeta: f64,
    pub has_second_lobe: bool,
    pub lobe_positions: Vec<f64>,
    pub persistence: f64,
    pub classification: Classification,
    /// Window ordinal in the base configuration, when the base run flagged it.
    pub base_window: Option<usize>,
}

/// `(N, T, l)` of one sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SweepKey {
    pub window: usize,
    pub lag: usize,
    pub shift: usize,
}

impl fmt::Display for SweepKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}_T{}_l{}", self.window, self.lag, self.shift)
    }
}

impl SweepKey {
    pub fn of(config: &AnalysisConfig) -> Self {
        SweepKey {
            window: config.window,
            lag: config.lag,
            shift: config.shift,
        }
    }

    fn apply(&self, base: &AnalysisConfig) -> AnalysisConfig {
        AnalysisConfig {
            window: self.window,
            lag: self.lag,
            shift: self.shift,
            keep_spectra: false,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub events: Vec<EventFlag>,
    pub base: Vec<WindowResult>,
    /// Traces of every configuration that ran, in `(N, T, l)` order.
    pub traces: Vec<(SweepKey, Vec<WindowResult>)>,
    pub skipped: Vec<SweepKey>,
}

pub fn robustness_sweep(
    series: &PriceSeries,
    base: &AnalysisConfig,
    policy: &DetectionPolicy,
) -> Result<Vec<EventFlag>> {
    Ok(sweep(series, base, policy)?.events)
}

/// The sweep, keeping every trace for output.
pub fn sweep(
    series: &PriceSeries,
    base: &AnalysisConfig,
    policy: &DetectionPolicy,
) -> Result<SweepOutcome> {
    policy.validate()?;
    base.validate(series.len())?;

    let mut keys = Vec::new();
    for &window in &policy.sweep_windows {
        for &lag in &policy.sweep_lags {
            for &shift in &policy.sweep_shifts {
                keys.push(SweepKey { window, lag, shift });
            }
        }
    }
    keys.sort();
    keys.dedup();

    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for key in keys {
        let cfg = key.apply(base);
        match cfg.validate(series.len()) {
            Ok(()) => {}
            Err(Error::NoWindowFits) => {
                log::warn!("sweep configuration {key} does not fit the series; skipped");
                skipped.push(key);
                continue;
            }
            Err(e) => return Err(e),
        }
        match engine::run(series, &cfg) {
            Ok(r) => traces.push((key, r)),
            Err(Error::AllDegenerate) => {
                log::warn!("sweep configuration {key} is degenerate everywhere; skipped");
                skipped.push(key);
            }
            Err(e) => return Err(e),
        }
    }
    if traces.is_empty() {
        return Err(Error::InvalidConfig(
            "no sweep configuration could be run on this series".into(),
        ));
    }

    let base_key = SweepKey::of(base);
    let base_results = match traces.iter().find(|(k, _)| *k == base_key) {
        Some((_, r)) if !base.keep_spectra => r.clone(),
        _ => engine::run(series, base)?,
    };

    let events = aggregate(series, base, &base_results, &traces, policy)?;
    Ok(SweepOutcome {
        events,
        base: base_results,
        traces,
        skipped,
    })
}

/// Single-configuration detection: every candidate has persistence 1.
pub fn detect_events(
    series: &PriceSeries,
    config: &AnalysisConfig,
    results: &[WindowResult],
    policy: &DetectionPolicy,
) -> Result<Vec<EventFlag>> {
    let traces = vec![(SweepKey::of(config), results.to_vec())];
    aggregate(series, config, results, &traces, policy)
}

struct Member {
    config: Option<usize>,
    shift: usize,
    candidate: Candidate,
}

fn aggregate(
    series: &PriceSeries,
    base: &AnalysisConfig,
    base_results: &[WindowResult],
    traces: &[(SweepKey, Vec<WindowResult>)],
    policy: &DetectionPolicy,
) -> Result<Vec<EventFlag>> {
    let base_key = SweepKey::of(base);
    let mut members: Vec<Member> = Vec::new();
    for (i, (key, results)) in traces.iter().enumerate() {
        members.extend(detect_jumps(results, policy).into_iter().map(|c| Member {
            config: Some(i),
            shift: key.shift,
            candidate: c,
        }));
    }
    if !traces.iter().any(|(k, _)| *k == base_key) {
        members.extend(
            detect_jumps(base_results, policy)
                .into_iter()
                .map(|c| Member {
                    config: None,
                    shift: base.shift,
                    candidate: c,
                }),
        );
    }
    members.sort_by_key(|m| (m.candidate.anchor, m.config.map_or(0, |c| c + 1)));

    // greedy clustering around the earliest anchor of each group
    let mut clusters: Vec<Vec<Member>> = Vec::new();
    for m in members {
        let joins = clusters.last().is_some_and(|c| {
            let seed = &c[0];
            let tol = MATCH_TOLERANCE_SHIFTS * seed.shift.max(m.shift);
            m.candidate.anchor - seed.candidate.anchor <= tol
        });
        if joins {
            clusters.last_mut().expect("non-empty").push(m);
        } else {
            clusters.push(vec![m]);
        }
    }

    let total = traces.len() as f64;
    let mut events = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let mut configs: Vec<usize> = cluster.iter().filter_map(|m| m.config).collect();
        configs.sort_unstable();
        configs.dedup();
        let persistence = configs.len() as f64 / total;

        let is_base = |m: &Member| match m.config {
            Some(i) => traces[i].0 == base_key,
            None => true,
        };
        let base_member = cluster.iter().find(|m| is_base(m));
        let rep = base_member.unwrap_or(&cluster[0]);

        let base_window = match base_member {
            Some(m) => Some(m.candidate.first_n),
            None => nearest_base_window(base, base_results, rep.candidate.anchor),
        };
        let lobes = match base_window.map(|n| &base_results[n - 1]) {
            Some(r) if !r.degenerate() => match &r.spectrum {
                Some(s) => find_lobes(s, policy),
                None => find_lobes(&analyze_window(series, r.window_start, base)?, policy),
            },
            _ => Lobes::default(),
        };

        let zeta = rep.candidate.zeta;
        events.push(EventFlag {
            t_prime: rep.candidate.anchor,
            label: rep.candidate.label.clone(),
            zeta,
            has_second_lobe: lobes.has_second_lobe,
            lobe_positions: lobes.positions,
            persistence,
            classification: classify(zeta, lobes.has_second_lobe, persistence, policy),
            base_window: base_member.map(|m| m.candidate.first_n),
        });
    }
    Ok(events)
}

fn nearest_base_window(
    base: &AnalysisConfig,
    results: &[WindowResult],
    anchor: usize,
) -> Option<usize> {
    results
        .iter()
        .min_by_key(|r| r.t_prime.abs_diff(anchor))
        .filter(|r| r.t_prime.abs_diff(anchor) <= MATCH_TOLERANCE_SHIFTS * base.shift)
        .map(|r| r.n)
}

/// Index steps from the event to `reference_label`; positive when the event comes first.
pub fn lead_time(event: &EventFlag, series: &PriceSeries, reference_label: &str) -> Option<i64> {
    let idx = series.position_of_label(reference_label)?;
    Some(idx as i64 - event.t_prime as i64)
}
