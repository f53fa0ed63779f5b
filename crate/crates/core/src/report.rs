//! Plain key/value detection report.

use std::fmt::Write as _;

use crate::detect::{
    lead_time, summarize, Classification, DetectionPolicy, EventFlag, NoiseReference, SweepKey,
};
use crate::engine::{WindowResult, ZetaStatus};
use crate::ingest::PriceSeries;

#[derive(Debug, Clone)]
pub struct Report {
    pub series: String,
    pub windows: usize,
    pub degenerate_windows: usize,
    pub max_zeta: Option<f64>,
    pub threshold: f64,
    pub note: Option<&'static str>,
    pub noise: Option<NoiseReference>,
    pub configurations: Vec<SweepKey>,
    pub skipped: Vec<SweepKey>,
    pub events: Vec<(EventFlag, Option<i64>)>,
}

impl Report {
    pub fn new(
        series: &PriceSeries,
        base: &[WindowResult],
        events: Vec<EventFlag>,
        policy: &DetectionPolicy,
        reference_date: Option<&str>,
    ) -> Self {
        let summary = summarize(base);
        let zero_mean = base.iter().any(|r| r.status == ZetaStatus::ZeroMean);
        let note = match summary {
            None if zero_mean => Some("degenerate-mean"),
            None => Some("no-zeta"),
            Some(_) => None,
        };
        let events = events
            .into_iter()
            .map(|e| {
                let lead = reference_date.and_then(|d| lead_time(&e, series, d));
                (e, lead)
            })
            .collect();
        Report {
            series: series.name().to_string(),
            windows: base.len(),
            degenerate_windows: base.iter().filter(|r| r.degenerate()).count(),
            max_zeta: summary.map(|s| s.max),
            threshold: policy.threshold(),
            note,
            noise: None,
            configurations: Vec::new(),
            skipped: Vec::new(),
            events,
        }
    }

    /// `quiet` unless some event is a scare or a systemic crisis.
    pub fn status(&self) -> &'static str {
        if self
            .events
            .iter()
            .any(|(e, _)| e.classification != Classification::Quiet)
        {
            "events"
        } else {
            "quiet"
        }
    }

    pub fn count(&self, class: Classification) -> usize {
        self.events
            .iter()
            .filter(|(e, _)| e.classification == class)
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "series: {}", self.series);
        let _ = writeln!(s, "status: {}", self.status());
        if let Some(note) = self.note {
            let _ = writeln!(s, "note: {note}");
        }
        let _ = writeln!(s, "windows: {}", self.windows);
        let _ = writeln!(s, "degenerate_windows: {}", self.degenerate_windows);
        let _ = writeln!(s, "max_zeta: {}", opt(self.max_zeta));
        let _ = writeln!(s, "threshold: {}", self.threshold);
        match self.noise {
            Some(NoiseReference::Measured(n)) => {
                let _ = writeln!(s, "noise_max_zeta: {}", n.max);
                let _ = writeln!(s, "noise_mean_zeta: {}", n.mean);
                let _ = writeln!(s, "noise_p99_zeta: {}", n.p99);
            }
            Some(NoiseReference::Degenerate) => {
                let _ = writeln!(s, "noise_reference: degenerate");
            }
            Some(NoiseReference::Undefined) => {
                let _ = writeln!(s, "noise_reference: undefined");
            }
            None => {}
        }
        if !self.configurations.is_empty() {
            let list: Vec<String> = self.configurations.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "configurations: {}", list.join(" "));
        }
        if !self.skipped.is_empty() {
            let list: Vec<String> = self.skipped.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "skipped: {}", list.join(" "));
        }
        let _ = writeln!(
            s,
            "systemic_crises: {}",
            self.count(Classification::SystemicCrisis)
        );
        let _ = writeln!(s, "scares: {}", self.count(Classification::Scare));
        for (i, (e, lead)) in self.events.iter().enumerate() {
            let lobes: Vec<String> = e.lobe_positions.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(s);
            let _ = writeln!(s, "[event {}]", i + 1);
            let _ = writeln!(s, "anchor_index: {}", e.t_prime);
            let _ = writeln!(s, "label: {}", e.label.as_deref().unwrap_or(""));
            let _ = writeln!(s, "zeta: {}", e.zeta);
            let _ = writeln!(s, "lobes: {}", lobes.join(" "));
            let _ = writeln!(s, "has_second_lobe: {}", e.has_second_lobe);
            let _ = writeln!(s, "persistence: {}", e.persistence);
            let _ = writeln!(s, "classification: {}", e.classification);
            if let Some(lead) = lead {
                let _ = writeln!(s, "lead_time: {lead}");
            }
        }
        s
    }
}
