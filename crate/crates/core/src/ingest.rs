//! Input series, synthetic baselines and the columnar text tables the CLI emits.
//!
//! Two input layouts are accepted: a `date,close` CSV with a header row, and a
//! plain list with one value per line (`#` comment lines allowed). Dates are
//! opaque labels; the only check is that they increase strictly, which holds
//! for ISO-8601 strings under byte-wise ordering.

use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesFormat {
    /// Header row, then `date,close` records.
    CsvTwoColumn,
    /// One decimal per line.
    PlainValues,
}

impl std::str::FromStr for SeriesFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv_two_column" => Ok(SeriesFormat::CsvTwoColumn),
            "plain" | "plain_values" => Ok(SeriesFormat::PlainValues),
            other => Err(Error::InvalidConfig(format!(
                "unknown series format {other:?}"
            ))),
        }
    }
}

/// A univariate series of closing values with optional date labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    name: String,
    labels: Option<Vec<String>>,
    values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::with_labels(name, None, values)
    }

    pub fn with_labels(
        name: impl Into<String>,
        labels: Option<Vec<String>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooShort { len: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { line: i + 1 });
        }
        if let Some(labels) = &labels {
            if labels.len() != values.len() {
                return Err(Error::InvalidSeries(format!(
                    "{} labels for {} values",
                    labels.len(),
                    values.len()
                )));
            }
            if let Some(i) = labels.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::NonIncreasingDates {
                    line: i + 2,
                    label: labels[i + 1].clone(),
                });
            }
        }
        Ok(PriceSeries {
            name: name.into(),
            labels,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.as_ref()?.get(index).map(String::as_str)
    }

    /// Index of the first label that is `>= label`.
    pub fn position_of_label(&self, label: &str) -> Option<usize> {
        let labels = self.labels.as_ref()?;
        let idx = labels.partition_point(|l| l.as_str() < label);
        (idx < labels.len()).then_some(idx)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `len` points, keeping labels.
    pub fn prefix(&self, len: usize) -> Result<PriceSeries> {
        let len = len.min(self.len());
        PriceSeries::with_labels(
            self.name.clone(),
            self.labels.as_ref().map(|l| l[..len].to_vec()),
            self.values[..len].to_vec(),
        )
    }

    /// Applies `x -> scale * x + offset` to every value.
    pub fn affine(&self, scale: f64, offset: f64) -> Result<PriceSeries> {
        PriceSeries::with_labels(
            self.name.clone(),
            self.labels.clone(),
            self.values.iter().map(|x| scale * x + offset).collect(),
        )
    }
}

pub fn parse_series<R: Read>(source: R, format: SeriesFormat) -> Result<PriceSeries> {
    match format {
        SeriesFormat::CsvTwoColumn => parse_csv(source),
        SeriesFormat::PlainValues => parse_plain(source),
    }
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {:?} as a number", field),
    })?;
    if !value.is_finite() {
        return Err(Error::NonFinite { line });
    }
    Ok(value)
}

fn parse_csv<R: Read>(source: R) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| csv_error(e, 1))?;
    if header.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected a two-column header, found {} columns",
                header.len()
            ),
        });
    }

    let mut labels: Vec<String> = Vec::new();
    let mut values = Vec::new();
    let mut dated: Option<bool> = None;
    let mut last_line = 1;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, last_line + 1))?;
        let line = record
            .position()
            .map_or(last_line + 1, |p| p.line() as usize);
        last_line = line;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date = &record[0];
        let has_date = !date.is_empty();
        match dated {
            None => dated = Some(has_date),
            Some(d) if d != has_date => {
                return Err(Error::Parse {
                    line,
                    message: "date column must be filled on every row or on none".into(),
                })
            }
            _ => {}
        }
        let value = parse_value(&record[1], line)?;
        if has_date {
            if let Some(prev) = labels.last() {
                if date <= prev.as_str() {
                    return Err(Error::NonIncreasingDates {
                        line,
                        label: date.to_string(),
                    });
                }
            }
            labels.push(date.to_string());
        }
        values.push(value);
    }

    let labels = (dated == Some(true)).then_some(labels);
    PriceSeries::with_labels("", labels, values)
}

fn csv_error(err: csv::Error, fallback_line: usize) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        csv::ErrorKind::Utf8 { pos, err } => Error::Parse {
            line: pos.map_or(fallback_line, |p| p.line() as usize),
            message: err.to_string(),
        },
        other => Error::Parse {
            line: fallback_line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_plain<R: Read>(source: R) -> Result<PriceSeries> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        values.push(parse_value(text, i + 1)?);
    }
    PriceSeries::new("", values)
}

/// Writes a series so that [`parse_series`] with the same format reads it back unchanged.
///
/// Plain output drops labels.
pub fn write_series<W: Write>(series: &PriceSeries, format: SeriesFormat, out: W) -> Result<()> {
    match format {
        SeriesFormat::PlainValues => {
            let mut out = out;
            for v in series.values() {
                writeln!(out, "{v}")?;
            }
            out.flush()?;
        }
        SeriesFormat::CsvTwoColumn => {
            let mut w = csv::Writer::from_writer(out);
            write_record(&mut w, ["date", "close"])?;
            for (i, v) in series.values().iter().enumerate() {
                let label = series.label(i).unwrap_or("");
                write_record(&mut w, [label, &v.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn write_record<W: Write, I, T>(w: &mut csv::Writer<W>, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(record).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    })
}

/// A header plus rows of text cells; the shape of every table the CLI writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric view of one column; blank cells are `None`.
    pub fn column_f64(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::InvalidConfig(format!("no column named {name:?}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row[idx].trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse().map(Some).map_err(|_| Error::Parse {
                        line: i + 2,
                        message: format!("cannot parse {cell:?} as a number"),
                    })
                }
            })
            .collect()
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        write_record(&mut w, &self.columns)?;
        for row in &self.rows {
            write_record(&mut w, row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table cells are UTF-8")
    }

    pub fn parse<R: Read>(source: R) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(source);
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(e, i + 2))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Table { columns, rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    WhiteNoise,
    WhiteNoiseWithCrash,
}

/// Recipe for a seeded Gaussian white-noise series, optionally with a persistent level shock.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub length: usize,
    pub mean: f64,
    pub variance: f64,
    pub seed: u64,
    pub crash_index: Option<usize>,
    pub crash_magnitude: Option<f64>,
}

impl SyntheticSpec {
    pub fn white_noise(length: usize, mean: f64, variance: f64, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::WhiteNoise,
            length,
            mean,
            variance,
            seed,
            crash_index: None,
            crash_magnitude: None,
        }
    }

    pub fn with_crash(mut self, index: usize, magnitude: f64) -> Self {
        self.kind = SyntheticKind::WhiteNoiseWithCrash;
        self.crash_index = Some(index);
        self.crash_magnitude = Some(magnitude);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.length < 2 {
            return bad("length must be at least 2");
        }
        if !self.mean.is_finite() {
            return bad("mean must be finite");
        }
        if !self.variance.is_finite() || self.variance < 0.0 {
            return bad("variance must be finite and nonnegative");
        }
        match (self.kind, self.crash_index, self.crash_magnitude) {
            (SyntheticKind::WhiteNoise, None, None) => Ok(()),
            (SyntheticKind::WhiteNoise, _, _) => {
                bad("crash parameters are only valid for white_noise_with_crash")
            }
            (SyntheticKind::WhiteNoiseWithCrash, Some(idx), Some(mag)) => {
                if idx == 0 || idx >= self.length {
                    bad("crash_index must be in 1..length")
                } else if !mag.is_finite() {
                    bad("crash_magnitude must be finite")
                } else {
                    Ok(())
                }
            }
            (SyntheticKind::WhiteNoiseWithCrash, _, _) => {
                bad("white_noise_with_crash needs crash_index and crash_magnitude")
            }
        }
    }
}

/// Draws the series described by `spec`. Identical specs give bit-identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PriceSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd = spec.variance.sqrt();
    let mut values: Vec<f64> = (0..spec.length)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            // keep the draw so the stream does not depend on the variance
            if sd == 0.0 {
                spec.mean
            } else {
                spec.mean + sd * z
            }
        })
        .collect();
    if let (Some(idx), Some(mag)) = (spec.crash_index, spec.crash_magnitude) {
        for v in &mut values[idx..] {
            *v += mag;
        }
    }
    let name = match spec.kind {
        SyntheticKind::WhiteNoise => format!("white_noise(seed={})", spec.seed),
        SyntheticKind::WhiteNoiseWithCrash => format!("white_noise_with_crash(seed={})", spec.seed),
    };
    PriceSeries::new(name, values)
}

/// Which sample the noise baseline copies its moments from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentSource {
    /// The series levels themselves.
    #[default]
    Levels,
    /// Lag-one increments `x(t+1) - x(t)`.
    Increments,
}

/// Population mean and variance (denominator = sample count).
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// White-noise spec with the series' level mean and population variance.
pub fn match_moments(series: &PriceSeries, seed: u64, length: usize) -> SyntheticSpec {
    match_moments_from(series, seed, length, MomentSource::Levels)
}

pub fn match_moments_from(
    series: &PriceSeries,
    seed: u64,
    length: usize,
    source: MomentSource,
) -> SyntheticSpec {
    let (mean, variance) = match source {
        MomentSource::Levels => mean_variance(series.values()),
        MomentSource::Increments => {
            let inc: Vec<f64> = series.values().windows(2).map(|w| w[1] - w[0]).collect();
            mean_variance(&inc)
        }
    };
    SyntheticSpec::white_noise(length, mean, variance, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_minimal() {
        let s = parse_series(
            "date,close\n1987-10-16,2246.74\n1987-10-19,1738.74".as_bytes(),
            SeriesFormat::CsvTwoColumn,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.label(1), Some("1987-10-19"));
    }

    #[test]
    fn plain_values_with_comments() {
        let s = parse_series(
            "# header\n1.0\n\n1.0\n1.0\n".as_bytes(),
            SeriesFormat::PlainValues,
        )
        .unwrap();
        assert_eq!(s.values(), &[1.0, 1.0, 1.0]);
        assert!(s.labels().is_none());
    }

    #[test]
    fn bad_value_names_line() {
        let err = parse_series(
            "date,close\n1987-10-16,2246.74\n1987-10-19,abc\n".as_bytes(),
            SeriesFormat::CsvTwoColumn,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");

        let err = parse_series("1\n2\nabc\n".as_bytes(), SeriesFormat::PlainValues).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn rejects_non_finite_and_short_and_unordered() {
        let err = parse_series("1\nNaN\n".as_bytes(), SeriesFormat::PlainValues).unwrap_err();
        assert!(matches!(err, Error::NonFinite { line: 2 }));
        let err = parse_series("1\ninf\n".as_bytes(), SeriesFormat::PlainValues).unwrap_err();
        assert!(matches!(err, Error::NonFinite { line: 2 }));
        let err = parse_series("1\n".as_bytes(), SeriesFormat::PlainValues).unwrap_err();
        assert!(matches!(err, Error::TooShort { len: 1 }));
        let err = parse_series(
            "date,close\n2000-01-02,1\n2000-01-02,2\n".as_bytes(),
            SeriesFormat::CsvTwoColumn,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::NonIncreasingDates { line: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn zero_variance_collapses_to_mean() {
        let s = generate_synthetic(&SyntheticSpec::white_noise(5, 0.0, 0.0, 42)).unwrap();
        assert_eq!(s.values(), &[0.0; 5]);
        assert!(s.values().iter().all(|v| v.is_sign_positive()));
    }

    #[test]
    fn large_sample_moments() {
        let s = generate_synthetic(&SyntheticSpec::white_noise(10_000, 100.0, 4.0, 7)).unwrap();
        let (m, v) = mean_variance(s.values());
        assert!((m - 100.0).abs() < 0.1, "mean {m}");
        assert!((v - 4.0).abs() < 0.2, "variance {v}");
    }

    #[test]
    fn crash_is_additive_level_shift() {
        let base = SyntheticSpec::white_noise(100, 0.0, 1.0, 1);
        let noise = generate_synthetic(&base).unwrap();
        let crash = generate_synthetic(&base.clone().with_crash(50, -20.0)).unwrap();
        assert_eq!(&noise.values()[..50], &crash.values()[..50]);
        for (a, b) in noise.values()[50..].iter().zip(&crash.values()[50..]) {
            assert_eq!(*b, a - 20.0);
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = SyntheticSpec::white_noise(10, 0.0, -1.0, 0);
        assert!(matches!(generate_synthetic(&s), Err(Error::InvalidSpec(_))));
        s.variance = 1.0;
        s.crash_index = Some(3);
        assert!(s.validate().is_err());
        let s = SyntheticSpec::white_noise(10, 0.0, 1.0, 0).with_crash(10, 1.0);
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::white_noise(10, 0.0, 1.0, 0).with_crash(5, 1.0);
        s.crash_magnitude = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn moment_matching() {
        let s = PriceSeries::new("", vec![5.0; 4]).unwrap();
        let spec = match_moments(&s, 0, 4);
        assert_eq!((spec.mean, spec.variance), (5.0, 0.0));
        let s = PriceSeries::new("", vec![0.0, 2.0]).unwrap();
        let spec = match_moments(&s, 0, 2);
        assert_eq!((spec.mean, spec.variance), (1.0, 1.0));
        assert_eq!(spec.kind, SyntheticKind::WhiteNoise);
    }

    #[test]
    fn zero_variance_match_gives_constant_series() {
        let s = PriceSeries::new("", vec![3.5; 8]).unwrap();
        let regen = generate_synthetic(&match_moments(&s, 9, 20)).unwrap();
        assert!(regen.values().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn moment_round_trip() {
        let src = generate_synthetic(&SyntheticSpec::white_noise(1000, 1500.0, 250.0, 3)).unwrap();
        let (m0, v0) = mean_variance(src.values());
        let regen = generate_synthetic(&match_moments(&src, 11, 100_000)).unwrap();
        let (m1, v1) = mean_variance(regen.values());
        assert!(((m1 - m0) / m0).abs() < 0.05);
        assert!(((v1 - v0) / v0).abs() < 0.05);
    }

    #[test]
    fn increment_moments() {
        let s = PriceSeries::new("", vec![0.0, 1.0, 3.0]).unwrap();
        let spec = match_moments_from(&s, 0, 3, MomentSource::Increments);
        assert_eq!((spec.mean, spec.variance), (1.5, 0.25));
    }

    #[test]
    fn label_lookup() {
        let s = PriceSeries::with_labels(
            "",
            Some(vec!["2000-01-03".into(), "2000-01-05".into()]),
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(s.position_of_label("2000-01-04"), Some(1));
        assert_eq!(s.position_of_label("2000-01-03"), Some(0));
        assert_eq!(s.position_of_label("2001-01-01"), None);
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(["n", "label", "zeta"]);
        t.push(vec!["1".into(), "1987-10-19".into(), "".into()]);
        t.push(vec!["2".into(), "".into(), "0.5".into()]);
        let back = Table::parse(t.to_text().as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column_f64("zeta").unwrap(), vec![None, Some(0.5)]);
    }

    fn arb_series() -> impl Strategy<Value = (bool, Vec<f64>)> {
        (any::<bool>(), prop::collection::vec(-1e6f64..1e6, 2..40))
    }

    proptest! {
        #[test]
        fn parse_write_parse_is_identity((dated, values) in arb_series()) {
            let labels = dated.then(|| {
                (0..values.len()).map(|i| format!("2000-{:02}-{:02}", 1 + i / 28, 1 + i % 28)).collect()
            });
            let s = PriceSeries::with_labels("", labels, values).unwrap();
            for fmt in [SeriesFormat::CsvTwoColumn, SeriesFormat::PlainValues] {
                let mut buf = Vec::new();
                write_series(&s, fmt, &mut buf).unwrap();
                let back = parse_series(buf.as_slice(), fmt).unwrap();
                prop_assert_eq!(back.values(), s.values());
                if fmt == SeriesFormat::CsvTwoColumn {
                    prop_assert_eq!(back.labels(), s.labels());
                }
            }
        }

        #[test]
        fn generation_is_deterministic(seed in any::<u64>(), len in 2usize..200) {
            let spec = SyntheticSpec::white_noise(len, 1.0, 2.0, seed);
            prop_assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        }
    }
}
