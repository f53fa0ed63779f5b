//! Sliding-window driver: spectra per window, running mean area and the area
//! variation rate `zeta(n) = |A(n) / mean(A(1..n-1)) - 1|`.
//!
//! Window `n` (1-based) starts at increment `t0 + (n - 1) * shift` and is reported
//! at series index `t'_n = t0 + N + n * shift`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{PriceSeries, Table};
use crate::mfcore::{analyze_window, QGrid, Spectrum, MIN_EFFECTIVE_INCREMENTS};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Increments per window (N).
    pub window: usize,
    /// Increment lag (T).
    pub lag: usize,
    /// Window shift (l), at most `window`.
    pub shift: usize,
    pub grid: QGrid,
    /// First series index used (t0).
    pub t0: usize,
    /// Windows `n <= warmup` carry no zeta.
    pub warmup: usize,
    /// Exponential forgetting for the running mean; `None` weighs all past windows equally.
    pub forgetting: Option<f64>,
    /// Attach each window's full spectrum to its result.
    pub keep_spectra: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window: 1000,
            lag: 1,
            shift: 1,
            grid: QGrid::default(),
            t0: 0,
            warmup: 1,
            forgetting: None,
            keep_spectra: false,
        }
    }
}

impl AnalysisConfig {
    /// Checks parameter ranges and that at least one window fits `series_len` points.
    pub fn validate(&self, series_len: usize) -> Result<()> {
        if self.window < MIN_EFFECTIVE_INCREMENTS {
            return Err(Error::InvalidConfig(format!(
                "window size {} is below the minimum of {MIN_EFFECTIVE_INCREMENTS}",
                self.window
            )));
        }
        if self.lag == 0 {
            return Err(Error::InvalidConfig("lag must be at least 1".into()));
        }
        if self.shift == 0 || self.shift > self.window {
            return Err(Error::InvalidConfig(format!(
                "shift {} must lie in 1..={}",
                self.shift, self.window
            )));
        }
        if let Some(f) = self.forgetting {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(
                    "forgetting factor must be in (0, 1]".into(),
                ));
            }
        }
        if self.t0 + self.window + self.lag > series_len {
            return Err(Error::NoWindowFits);
        }
        Ok(())
    }

    /// Number of windows that fit in `series_len` points.
    pub fn window_count(&self, series_len: usize) -> usize {
        let used = self.t0 + self.window + self.lag;
        if used > series_len {
            0
        } else {
            (series_len - used) / self.shift + 1
        }
    }

    /// First increment of window `n`.
    pub fn window_start(&self, n: usize) -> usize {
        self.t0 + (n - 1) * self.shift
    }

    fn mapped(&self, n: usize) -> usize {
        self.t0 + self.window + n * self.shift
    }
}

/// `t'_n = t0 + N + n * l`, rejecting indices past the end of the series.
pub fn map_index(n: usize, config: &AnalysisConfig, series_len: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidConfig("window ordinals start at 1".into()));
    }
    let index = config.mapped(n);
    if index >= series_len {
        return Err(Error::IndexBeyondSeries {
            index,
            len: series_len,
        });
    }
    Ok(index)
}

/// Why a window does or does not carry a zeta value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaStatus {
    Defined,
    Warmup,
    Degenerate,
    /// No earlier non-degenerate window to average over.
    NoHistory,
    /// The running mean area is zero.
    ZeroMean,
}

impl ZetaStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ZetaStatus::Defined => "defined",
            ZetaStatus::Warmup => "warmup",
            ZetaStatus::Degenerate => "degenerate",
            ZetaStatus::NoHistory => "no-history",
            ZetaStatus::ZeroMean => "zero-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub n: usize,
    pub window_start: usize,
    pub t_prime: usize,
    pub label: Option<String>,
    /// `None` for degenerate windows.
    pub area: Option<f64>,
    /// Mean area over non-degenerate windows before `n`.
    pub running_mean: Option<f64>,
    pub zeta: Option<f64>,
    pub status: ZetaStatus,
    pub spectrum: Option<Spectrum>,
}

impl WindowResult {
    pub fn degenerate(&self) -> bool {
        self.status == ZetaStatus::Degenerate
    }
}

/// Runs every window on the current rayon pool.
pub fn run(series: &PriceSeries, config: &AnalysisConfig) -> Result<Vec<WindowResult>> {
    config.validate(series.len())?;
    let count = config.window_count(series.len());
    let spectra: Vec<Result<Spectrum>> = (1..=count)
        .into_par_iter()
        .map(|n| analyze_window(series, config.window_start(n), config))
        .collect();
    fold_windows(series, config, spectra)
}

/// [`run`] on a dedicated pool of `workers` threads.
pub fn run_with_workers(
    series: &PriceSeries,
    config: &AnalysisConfig,
    workers: usize,
) -> Result<Vec<WindowResult>> {
    with_workers(workers, || run(series, config))
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

fn fold_windows(
    series: &PriceSeries,
    config: &AnalysisConfig,
    spectra: Vec<Result<Spectrum>>,
) -> Result<Vec<WindowResult>> {
    let decay = config.forgetting.unwrap_or(1.0);
    let mut weighted_sum = 0.0;
    let mut weight = 0.0;
    let mut out = Vec::with_capacity(spectra.len());

    for (i, spectrum) in spectra.into_iter().enumerate() {
        let n = i + 1;
        let t_prime = config.mapped(n);
        let label = series.label(t_prime).map(str::to_string);
        let running_mean = (weight > 0.0).then(|| weighted_sum / weight);
        let spectrum = match spectrum {
            Ok(s) => Some(s),
            Err(Error::DegenerateWindow { .. }) => None,
            Err(e) => return Err(e),
        };
        let area = spectrum.as_ref().map(|s| s.area);

        let (status, zeta) = match (area, running_mean) {
            (None, _) => (ZetaStatus::Degenerate, None),
            _ if n <= config.warmup => (ZetaStatus::Warmup, None),
            (Some(_), None) => (ZetaStatus::NoHistory, None),
            (Some(_), Some(0.0)) => (ZetaStatus::ZeroMean, None),
            (Some(a), Some(m)) => (ZetaStatus::Defined, Some((a / m - 1.0).abs())),
        };

        if let Some(a) = area {
            weighted_sum = decay * weighted_sum + a;
            weight = decay * weight + 1.0;
        }

        out.push(WindowResult {
            n,
            window_start: config.window_start(n),
            t_prime,
            label,
            area,
            running_mean,
            zeta,
            status,
            spectrum: if config.keep_spectra { spectrum } else { None },
        });
    }

    if out.iter().all(WindowResult::degenerate) {
        return Err(Error::AllDegenerate);
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns `n, t_prime, label, A, A_bar, zeta, degenerate`.
pub fn trace_table(results: &[WindowResult]) -> Table {
    let mut t = Table::new(["n", "t_prime", "label", "A", "A_bar", "zeta", "degenerate"]);
    for r in results {
        t.push(vec![
            r.n.to_string(),
            r.t_prime.to_string(),
            r.label.clone().unwrap_or_default(),
            cell(r.area),
            cell(r.running_mean),
            cell(r.zeta),
            u8::from(r.degenerate()).to_string(),
        ]);
    }
    t
}

/// `C(q)` of every window that kept its spectrum: column `q` then one `C_<n>` column per window.
pub fn accumulated_spectra_table(results: &[WindowResult]) -> Option<Table> {
    let kept: Vec<(usize, &Spectrum)> = results
        .iter()
        .filter_map(|r| r.spectrum.as_ref().map(|s| (r.n, s)))
        .collect();
    let grid = kept.first()?.1.grid;
    let mut columns = vec!["q".to_string()];
    columns.extend(kept.iter().map(|(n, _)| format!("C_{n}")));
    let mut t = Table::new(columns);
    for (j, q) in grid.interior_points().into_iter().enumerate() {
        let mut row = vec![q.to_string()];
        row.extend(kept.iter().map(|(_, s)| s.c[j].to_string()));
        t.push(row);
    }
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;

    fn small(window: usize, shift: usize) -> AnalysisConfig {
        AnalysisConfig {
            window,
            shift,
            ..AnalysisConfig::default()
        }
    }

    fn noise(len: usize, seed: u64) -> PriceSeries {
        generate_synthetic(&SyntheticSpec::white_noise(len, 0.0, 1.0, seed)).unwrap()
    }

    #[test]
    fn index_mapping() {
        let cfg = |t0, window, shift| AnalysisConfig {
            t0,
            window,
            shift,
            ..AnalysisConfig::default()
        };
        assert_eq!(map_index(1, &cfg(0, 1000, 1), 5000).unwrap(), 1001);
        assert_eq!(map_index(3, &cfg(0, 1000, 5), 5000).unwrap(), 1015);
        assert_eq!(map_index(2, &cfg(50, 100, 100), 5000).unwrap(), 350);
        assert!(matches!(
            map_index(2, &cfg(50, 100, 100), 350),
            Err(Error::IndexBeyondSeries {
                index: 350,
                len: 350
            })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(small(15, 1).validate(100).is_err());
        assert!(small(32, 33).validate(100).is_err());
        assert!(small(32, 0).validate(100).is_err());
        assert!(matches!(
            small(32, 1).validate(32),
            Err(Error::NoWindowFits)
        ));
        assert!(small(32, 1).validate(33).is_ok());
        let mut c = small(32, 1);
        c.forgetting = Some(1.5);
        assert!(c.validate(100).is_err());
    }

    #[test]
    fn window_count_and_mapping_agree() {
        let s = noise(300, 1);
        let cfg = AnalysisConfig {
            window: 64,
            lag: 3,
            shift: 7,
            t0: 5,
            ..AnalysisConfig::default()
        };
        let res = run(&s, &cfg).unwrap();
        assert_eq!(res.len(), (300 - 5 - 64 - 3) / 7 + 1);
        for r in &res {
            assert_eq!(r.t_prime, 5 + 64 + r.n * 7);
            assert!(r.window_start + 64 + 3 <= 300);
        }
    }

    #[test]
    fn linear_series_reports_zero_mean() {
        let s = PriceSeries::new("", (0..80).map(f64::from).collect()).unwrap();
        let res = run(&s, &small(32, 1)).unwrap();
        assert_eq!(res[0].status, ZetaStatus::Warmup);
        for r in &res[1..] {
            assert_eq!(r.area, Some(0.0));
            assert_eq!(r.running_mean, Some(0.0));
            assert_eq!(r.status, ZetaStatus::ZeroMean);
            assert!(r.zeta.is_none());
        }
    }

    #[test]
    fn repeating_window_gives_zero_zeta() {
        // period divides the shift, so every window sees the same increments
        let pattern = [0.0, 1.0, 3.0, 2.0, 7.0, 4.0, 5.0, 9.0];
        let values: Vec<f64> = (0..400)
            .map(|i| pattern[i % 8] + 10.0 * (i / 8) as f64)
            .collect();
        let s = PriceSeries::new("", values).unwrap();
        let res = run(&s, &small(64, 8)).unwrap();
        assert!(res.len() > 3);
        assert!(res[0].area.unwrap() > 0.0);
        for r in &res[1..] {
            assert_eq!(r.area, res[0].area);
            assert!(r.zeta.unwrap() < 1e-12);
        }
    }

    #[test]
    fn constant_series_is_all_degenerate() {
        let s = PriceSeries::new("", vec![1.0; 100]).unwrap();
        assert!(matches!(run(&s, &small(32, 1)), Err(Error::AllDegenerate)));
    }

    #[test]
    fn degenerate_windows_are_skipped_in_mean() {
        // flat stretch in the middle makes some windows degenerate
        let mut values: Vec<f64> = noise(200, 4).values().to_vec();
        for v in &mut values[60..140] {
            *v = 0.0;
        }
        let s = PriceSeries::new("", values).unwrap();
        let res = run(&s, &small(32, 4)).unwrap();
        assert!(res.iter().any(|r| r.degenerate()));
        let mut areas = Vec::new();
        for r in &res {
            if r.degenerate() {
                assert!(r.zeta.is_none() && r.area.is_none());
            } else {
                if !areas.is_empty() {
                    let m = areas.iter().sum::<f64>() / areas.len() as f64;
                    assert!((r.running_mean.unwrap() - m).abs() < 1e-12);
                }
                areas.push(r.area.unwrap());
            }
        }
    }

    #[test]
    fn running_mean_matches_recomputation() {
        let s = noise(600, 9);
        let res = run(&s, &small(64, 1)).unwrap();
        let mut areas = Vec::new();
        for r in &res {
            if let Some(m) = r.running_mean {
                let fresh = areas.iter().sum::<f64>() / areas.len() as f64;
                assert!((m - fresh).abs() < 1e-12);
            }
            areas.push(r.area.unwrap());
        }
    }

    #[test]
    fn warmup_suppresses_zeta() {
        let s = noise(200, 2);
        let mut cfg = small(32, 1);
        cfg.warmup = 10;
        let res = run(&s, &cfg).unwrap();
        assert!(res[..10]
            .iter()
            .all(|r| r.zeta.is_none() && r.status == ZetaStatus::Warmup));
        assert!(res[10..].iter().all(|r| r.zeta.is_some()));
    }

    #[test]
    fn forgetting_weights_recent_windows() {
        let s = noise(300, 5);
        let mut cfg = small(32, 4);
        cfg.forgetting = Some(0.5);
        let res = run(&s, &cfg).unwrap();
        let areas: Vec<f64> = res.iter().map(|r| r.area.unwrap()).collect();
        let n = 6;
        let (num, den) = (0..n).fold((0.0, 0.0), |(a, b), k| {
            let w = 0.5f64.powi((n - 1 - k) as i32);
            (a + w * areas[k], b + w)
        });
        assert!((res[n].running_mean.unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn non_overlapping_is_subsample_of_overlapping() {
        let s = noise(500, 3);
        let a = run(&s, &small(32, 1)).unwrap();
        let b = run(&s, &small(32, 32)).unwrap();
        for r in &b {
            let twin = a.iter().find(|x| x.window_start == r.window_start).unwrap();
            assert_eq!(r.area, twin.area);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = noise(400, 6);
        let mut cfg = small(64, 1);
        cfg.keep_spectra = true;
        let one = run_with_workers(&s, &cfg, 1).unwrap();
        let four = run_with_workers(&s, &cfg, 4).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn tables() {
        let s = noise(120, 8);
        let mut cfg = small(32, 8);
        cfg.keep_spectra = true;
        let res = run(&s, &cfg).unwrap();
        let t = trace_table(&res);
        assert_eq!(t.rows.len(), res.len());
        let back = Table::parse(t.to_text().as_bytes()).unwrap();
        assert_eq!(back.column_f64("zeta").unwrap()[0], None);
        assert_eq!(back.column_f64("A").unwrap()[1], res[1].area);
        let acc = accumulated_spectra_table(&res).unwrap();
        assert_eq!(acc.columns.len(), res.len() + 1);
        assert_eq!(acc.rows.len(), 99);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prefix_results_never_change(seed in any::<u64>(), extra in 1usize..60) {
            let full = noise(260, seed);
            let cut = full.prefix(200).unwrap();
            let cfg = small(48, 3);
            let a = run(&cut, &cfg).unwrap();
            let b = run(&full, &cfg).unwrap();
            let ext = run(&full.prefix(200 + extra).unwrap(), &cfg).unwrap();
            prop_assert_eq!(&a[..], &b[..a.len()]);
            prop_assert_eq!(&a[..], &ext[..a.len()]);
        }

        #[test]
        fn zeta_is_affine_invariant(seed in any::<u64>()) {
            let s = noise(200, seed);
            let t = s.affine(3.0, 100.0).unwrap();
            let cfg = small(48, 2);
            let a = run(&s, &cfg).unwrap();
            let b = run(&t, &cfg).unwrap();
            for (x, y) in a.iter().zip(&b) {
                match (x.zeta, y.zeta) {
                    (Some(p), Some(q)) => prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p), "{} vs {}", p, q),
                    (None, None) => {}
                    _ => prop_assert!(false, "zeta presence differs at n={}", x.n),
                }
            }
        }
    }
}
