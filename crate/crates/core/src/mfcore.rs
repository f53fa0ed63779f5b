//! Single-window multifractal spectrum.
//!
//! For one window of `N` lag-`T` increments the pipeline is
//!
//! ```text
//! |dx|  ->  mu_t = |dx_t| / sum |dx|
//!       ->  Z(q) = sum mu_t^q
//!       ->  tau(q) = -ln Z(q) / ln N_eff,   D_q = tau(q) / (q - 1)
//!       ->  C(q) = -d2 tau / dq2            (central second difference)
//!       ->  A = trapezoid of max(C, 0) over the interior grid
//! ```
//!
//! Zero increments are dropped before normalisation, so `N_eff` is the number of
//! surviving increments.

use crate::engine::AnalysisConfig;
use crate::error::{Error, Result};
use crate::ingest::{PriceSeries, Table};

/// Fewest nonzero increments a window may keep before it is declared degenerate.
pub const MIN_EFFECTIVE_INCREMENTS: usize = 16;

const GRID_SNAP: f64 = 1e-9;

/// Uniform grid of moment orders `q_i = q_min + i * dq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrid {
    q_min: f64,
    q_max: f64,
    dq: f64,
    len: usize,
}

impl Default for QGrid {
    fn default() -> Self {
        QGrid::new(-5.0, 5.0, 0.1).expect("default grid is valid")
    }
}

impl QGrid {
    pub fn new(q_min: f64, q_max: f64, dq: f64) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite() && dq.is_finite()) {
            return Err(Error::InvalidConfig("q grid bounds must be finite".into()));
        }
        if dq <= 0.0 {
            return Err(Error::InvalidConfig("dq must be positive".into()));
        }
        if q_min >= q_max {
            return Err(Error::InvalidConfig("q_min must be below q_max".into()));
        }
        let steps = (q_max - q_min) / dq;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "(q_max - q_min) / dq = {steps} is not an integer"
            )));
        }
        let len = rounded as usize + 1;
        if len < 5 {
            return Err(Error::InvalidConfig(format!(
                "q grid has {len} points, at least 5 are required"
            )));
        }
        Ok(QGrid {
            q_min,
            q_max,
            dq,
            len,
        })
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn dq(&self) -> f64 {
        self.dq
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point `i`, snapped onto an integer when it lies within rounding of one.
    pub fn point(&self, i: usize) -> f64 {
        let q = self.q_min + i as f64 * self.dq;
        let r = q.round();
        if (q - r).abs() < GRID_SNAP {
            r
        } else {
            q
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Points `1..len-1`, where the second difference is defined.
    pub fn interior_points(&self) -> Vec<f64> {
        (1..self.len - 1).map(|i| self.point(i)).collect()
    }
}

/// Absolute lag-`T` increments of one window, zeros removed.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementWindow {
    pub magnitudes: Vec<f64>,
    pub lag: usize,
    pub dropped_zero_count: usize,
    pub start_index: usize,
}

impl IncrementWindow {
    pub fn effective_len(&self) -> usize {
        self.magnitudes.len()
    }
}

/// Increments `|x(s+k+T) - x(s+k)|` for `k = 0..N`, requiring at least
/// [`MIN_EFFECTIVE_INCREMENTS`] nonzero values.
pub fn build_increments(
    series: &PriceSeries,
    window_start: usize,
    window: usize,
    lag: usize,
) -> Result<IncrementWindow> {
    build_increments_with_min(series, window_start, window, lag, MIN_EFFECTIVE_INCREMENTS)
}

pub fn build_increments_with_min(
    series: &PriceSeries,
    window_start: usize,
    window: usize,
    lag: usize,
    min_effective: usize,
) -> Result<IncrementWindow> {
    let x = series.values();
    if lag == 0 || window == 0 || window_start + window + lag > x.len() {
        return Err(Error::WindowOutOfBounds {
            start: window_start,
            window,
            lag,
            len: x.len(),
        });
    }
    let mut magnitudes = Vec::with_capacity(window);
    let mut dropped = 0;
    for k in window_start..window_start + window {
        let d = (x[k + lag] - x[k]).abs();
        if d > 0.0 {
            magnitudes.push(d);
        } else {
            dropped += 1;
        }
    }
    if magnitudes.len() < min_effective.max(1) {
        return Err(Error::DegenerateWindow {
            start: window_start,
            survivors: magnitudes.len(),
            required: min_effective.max(1),
        });
    }
    Ok(IncrementWindow {
        magnitudes,
        lag,
        dropped_zero_count: dropped,
        start_index: window_start,
    })
}

/// Normalised measure `mu_t = |dx_t| / sum |dx|`.
pub fn measure(window: &IncrementWindow) -> Vec<f64> {
    let total: f64 = window.magnitudes.iter().sum();
    window.magnitudes.iter().map(|m| m / total).collect()
}

/// `Z(q_i) = sum_t mu_t^q_i`, accumulated with the dominant term factored out so
/// that large `|q|` neither overflows nor loses the small terms.
pub fn partition_function(mu: &[f64], grid: &QGrid) -> Result<Vec<f64>> {
    let ln_mu: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let (lo, hi) = ln_mu
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    grid.points()
        .into_iter()
        .map(|q| {
            let shift = if q >= 0.0 { q * hi } else { q * lo };
            let scaled: f64 = ln_mu.iter().map(|&l| (q * l - shift).exp()).sum();
            let z = scaled * shift.exp();
            if z.is_finite() && z > 0.0 {
                Ok(z)
            } else {
                Err(Error::Overflow { q })
            }
        })
        .collect()
}

/// `tau(q) = -ln Z(q) / ln N_eff` and `D_q = tau(q) / (q - 1)`.
///
/// `D_1` is left as `None`; it needs the measure itself, see [`information_dimension`].
pub fn tau_spectrum(z: &[f64], n_effective: usize, grid: &QGrid) -> (Vec<f64>, Vec<Option<f64>>) {
    let ln_n = (n_effective as f64).ln();
    let tau: Vec<f64> = z.iter().map(|z| -z.ln() / ln_n).collect();
    let dims = grid
        .points()
        .into_iter()
        .zip(&tau)
        .map(|(q, t)| (q != 1.0).then(|| t / (q - 1.0)))
        .collect();
    (tau, dims)
}

/// `D_1 = -sum mu ln mu / ln N_eff`, the `q -> 1` limit of `D_q`.
pub fn information_dimension(mu: &[f64]) -> f64 {
    let entropy: f64 = mu.iter().map(|&m| -m * m.ln()).sum();
    entropy / (mu.len() as f64).ln()
}

/// `C(q_i) = -(tau_{i+1} - 2 tau_i + tau_{i-1}) / dq^2` on interior points.
pub fn specific_heat(tau: &[f64], grid: &QGrid) -> Vec<f64> {
    let h2 = grid.dq() * grid.dq();
    tau.windows(3)
        .map(|w| -(w[2] - 2.0 * w[1] + w[0]) / h2)
        .collect()
}

/// Largest `|C|` that a second difference of an exactly linear `tau` can show
/// through rounding alone on this grid.
pub fn rounding_floor(grid: &QGrid) -> f64 {
    let tau_scale = grid.q_min().abs().max(grid.q_max().abs()) + 1.0;
    64.0 * f64::EPSILON * 4.0 * tau_scale / (grid.dq() * grid.dq())
}

/// Trapezoidal area under `max(C, 0)` across the interior grid.
///
/// Values within [`rounding_floor`] of zero count as zero.
pub fn spectrum_area(c: &[f64], grid: &QGrid) -> f64 {
    let floor = rounding_floor(grid);
    let clipped: Vec<f64> = c.iter().map(|&v| if v > floor { v } else { 0.0 }).collect();
    match clipped.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = clipped[1..n - 1].iter().sum();
            grid.dq() * (inner + 0.5 * (clipped[0] + clipped[n - 1]))
        }
    }
}

/// All per-window quantities for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: QGrid,
    pub z: Vec<f64>,
    pub tau: Vec<f64>,
    pub dq_dim: Vec<Option<f64>>,
    /// Defined on interior points only: `c[j]` belongs to grid point `j + 1`.
    pub c: Vec<f64>,
    pub area: f64,
    pub n_effective: usize,
    pub dropped_zero_count: usize,
}

impl Spectrum {
    pub fn from_increments(window: &IncrementWindow, grid: &QGrid) -> Result<Spectrum> {
        let mu = measure(window);
        let z = partition_function(&mu, grid)?;
        let (tau, mut dq_dim) = tau_spectrum(&z, mu.len(), grid);
        for (q, d) in grid.points().into_iter().zip(dq_dim.iter_mut()) {
            if q == 1.0 {
                *d = Some(information_dimension(&mu));
            }
        }
        let c = specific_heat(&tau, grid);
        let area = spectrum_area(&c, grid);
        Ok(Spectrum {
            grid: *grid,
            z,
            tau,
            dq_dim,
            c,
            area,
            n_effective: mu.len(),
            dropped_zero_count: window.dropped_zero_count,
        })
    }

    /// `C` at grid point `i`, `None` at the two ends.
    pub fn c_at(&self, i: usize) -> Option<f64> {
        if i == 0 || i + 1 >= self.grid.len() {
            None
        } else {
            Some(self.c[i - 1])
        }
    }

    /// Columns `q, Z, tau, D, C`, one row per grid point.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["q", "Z", "tau", "D", "C"]);
        for (i, q) in self.grid.points().into_iter().enumerate() {
            t.push(vec![
                q.to_string(),
                self.z[i].to_string(),
                self.tau[i].to_string(),
                self.dq_dim[i].map(|d| d.to_string()).unwrap_or_default(),
                self.c_at(i).map(|c| c.to_string()).unwrap_or_default(),
            ]);
        }
        t
    }
}

/// Full spectrum of the window starting at `window_start`.
pub fn analyze_window(
    series: &PriceSeries,
    window_start: usize,
    config: &AnalysisConfig,
) -> Result<Spectrum> {
    let inc = build_increments(series, window_start, config.window, config.lag)?;
    Spectrum::from_increments(&inc, &config.grid)
}
