//! Dataset loading, chronological splitting, standardization, and
//! sliding-window batch assembly.

use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Dense multivariate series, channel-major: `values[c * n_steps + t]`.
#[derive(Debug, Clone)]
pub struct SeriesMatrix {
    values: Vec<f64>,
    n_channels: usize,
    n_steps: usize,
    pub channel_names: Vec<String>,
    pub frequency: String,
    pub source_path: String,
}

impl SeriesMatrix {
    pub fn new(
        values: Vec<f64>,
        n_channels: usize,
        n_steps: usize,
        channel_names: Vec<String>,
        frequency: &str,
        source_path: &str,
    ) -> Result<SeriesMatrix> {
        if n_channels == 0 || n_steps == 0 {
            return Err(Error::Data("series must have at least one channel and one step".into()));
        }
        if values.len() != n_channels * n_steps {
            return Err(Error::Data(format!(
                "value buffer has {} entries, expected {}×{}",
                values.len(),
                n_channels,
                n_steps
            )));
        }
        if channel_names.len() != n_channels {
            return Err(Error::Data(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                n_channels
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {} in series", v)));
        }
        Ok(SeriesMatrix {
            values,
            n_channels,
            n_steps,
            channel_names,
            frequency: frequency.to_string(),
            source_path: source_path.to_string(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_steps..(c + 1) * self.n_steps]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.values[c * self.n_steps + t]
    }

    /// Contiguous chronological sub-range [start, end).
    pub fn range(&self, start: usize, end: usize) -> SeriesMatrix {
        assert!(start < end && end <= self.n_steps);
        let len = end - start;
        let mut values = Vec::with_capacity(self.n_channels * len);
        for c in 0..self.n_channels {
            values.extend_from_slice(&self.channel(c)[start..end]);
        }
        SeriesMatrix {
            values,
            n_channels: self.n_channels,
            n_steps: len,
            channel_names: self.channel_names.clone(),
            frequency: self.frequency.clone(),
            source_path: self.source_path.clone(),
        }
    }
}

/// Loads the benchmark CSV schema: one header row, optional leading
/// `date` column (dropped), remaining columns numeric, row i = step i.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {}", path.display(), e)))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: bad header: {}", path.display(), e)))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Data(format!("{}: empty header row", path.display())));
    }
    let skip_first = headers
        .get(0)
        .map(|h| h.trim().eq_ignore_ascii_case("date"))
        .unwrap_or(false);
    let first_data_col = usize::from(skip_first);
    let names: Vec<String> = headers
        .iter()
        .skip(first_data_col)
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Data(format!("{}: no data columns", path.display())));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Data(format!("{}: row {}: {}", path.display(), row_idx + 1, e))
        })?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        for (c, cell) in record.iter().skip(first_data_col).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column {} ({}): non-numeric value {:?}",
                    path.display(),
                    row_idx + 1,
                    c + first_data_col + 1,
                    names[c],
                    cell
                ))
            })?;
            columns[c].push(v);
        }
    }
    let n_steps = columns[0].len();
    if n_steps == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let mut values = Vec::with_capacity(names.len() * n_steps);
    for col in &columns {
        values.extend_from_slice(col);
    }
    SeriesMatrix::new(values, names.len(), n_steps, names, "unknown", &path.display().to_string())
}

/// Writes the same CSV schema `load_csv` reads, with a leading `date`
/// column holding the step index.
pub fn write_csv(series: &SeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["date".to_string()];
    header.extend(series.channel_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for t in 0..series.n_steps() {
        let mut row = vec![t.to_string()];
        for c in 0..series.n_channels() {
            row.push(format!("{}", series.get(c, t)));
        }
        w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Chronological split policy.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Proportional lengths; floors applied to train and val, remainder to test.
    Ratio { train: f64, val: f64, test: f64 },
    /// Fixed 8640/2880/2880 steps (hourly series).
    EttHourly,
    /// Fixed 34560/11520/11520 steps (15-minute series).
    EttMinutely,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if let SplitSpec::Ratio { train, val, test } = self {
            if *train <= 0.0 || *val <= 0.0 || *test <= 0.0 {
                return Err(Error::Config(format!(
                    "split ratios must be positive, got ({}, {}, {})",
                    train, val, test
                )));
            }
            if (train + val + test - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "split ratios must sum to 1, got {}",
                    train + val + test
                )));
            }
        }
        Ok(())
    }

    fn lengths(&self, total: usize) -> Result<(usize, usize, usize)> {
        match self {
            SplitSpec::Ratio { train, val, .. } => {
                let a = (train * total as f64).floor() as usize;
                let b = (val * total as f64).floor() as usize;
                if a + b > total {
                    return Err(Error::Config("split ratios exceed series length".into()));
                }
                Ok((a, b, total - a - b))
            }
            SplitSpec::EttHourly => {
                if total < 8640 + 2880 + 2880 {
                    return Err(Error::Data(format!(
                        "ett-hourly split needs ≥ {} steps, series has {}",
                        8640 + 2880 + 2880,
                        total
                    )));
                }
                Ok((8640, 2880, 2880))
            }
            SplitSpec::EttMinutely => {
                if total < 34560 + 11520 + 11520 {
                    return Err(Error::Data(format!(
                        "ett-minutely split needs ≥ {} steps, series has {}",
                        34560 + 11520 + 11520,
                        total
                    )));
                }
                Ok((34560, 11520, 11520))
            }
        }
    }
}

/// Splits the series into contiguous, non-overlapping train/val/test views
/// in chronological order. `min_len` is the smallest usable split length
/// (lookback + horizon); shorter splits are rejected by name.
pub fn split(
    series: &SeriesMatrix,
    spec: &SplitSpec,
    min_len: usize,
) -> Result<(SeriesMatrix, SeriesMatrix, SeriesMatrix)> {
    let (a, b, c) = spec.lengths(series.n_steps())?;
    for (name, len) in [("train", a), ("val", b), ("test", c)] {
        if len < min_len {
            return Err(Error::Data(format!(
                "{} split too short: {} steps < {} (lookback + horizon)",
                name, len, min_len
            )));
        }
    }
    Ok((
        series.range(0, a),
        series.range(a, a + b),
        series.range(a + b, a + b + c),
    ))
}

/// Per-channel standardization fitted on the training split only.
#[derive(Debug, Clone)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &SeriesMatrix) -> Scaler {
        let mut mean = Vec::with_capacity(train.n_channels());
        let mut std = Vec::with_capacity(train.n_channels());
        let t = train.n_steps() as f64;
        for c in 0..train.n_channels() {
            let ch = train.channel(c);
            let m = ch.iter().sum::<f64>() / t;
            let var = ch.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / t;
            mean.push(m);
            std.push(var.sqrt().max(1e-8));
        }
        Scaler { mean, std }
    }

    pub fn transform(&self, s: &SeriesMatrix) -> Result<SeriesMatrix> {
        self.map(s, |x, m, sd| (x - m) / sd)
    }

    pub fn inverse_transform(&self, s: &SeriesMatrix) -> Result<SeriesMatrix> {
        self.map(s, |x, m, sd| x * sd + m)
    }

    fn map(&self, s: &SeriesMatrix, f: impl Fn(f64, f64, f64) -> f64) -> Result<SeriesMatrix> {
        if s.n_channels() != self.mean.len() {
            return Err(Error::Data(format!(
                "scaler fitted on {} channels, series has {}",
                self.mean.len(),
                s.n_channels()
            )));
        }
        let mut values = Vec::with_capacity(s.n_channels() * s.n_steps());
        for c in 0..s.n_channels() {
            values.extend(s.channel(c).iter().map(|&x| f(x, self.mean[c], self.std[c])));
        }
        SeriesMatrix::new(
            values,
            s.n_channels(),
            s.n_steps(),
            s.channel_names.clone(),
            &s.frequency,
            &s.source_path,
        )
    }
}

/// Number of (lookback, horizon) windows a split of length `t` yields.
pub fn window_count(t: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if t < lookback + horizon {
        0
    } else {
        (t - lookback - horizon) / stride + 1
    }
}

/// Enumerated sliding windows over one split.
pub struct WindowSet<'a> {
    series: &'a SeriesMatrix,
    pub lookback: usize,
    pub horizon: usize,
    pub starts: Vec<usize>,
}

/// A materialized mini-batch: inputs B×C×L, targets B×C×H.
pub struct WindowBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub window_starts: Vec<usize>,
}

impl<'a> WindowSet<'a> {
    pub fn new(
        series: &'a SeriesMatrix,
        lookback: usize,
        horizon: usize,
        stride: usize,
    ) -> WindowSet<'a> {
        assert!(lookback >= 1 && horizon >= 1 && stride >= 1);
        let n = window_count(series.n_steps(), lookback, horizon, stride);
        let starts = (0..n).map(|i| i * stride).collect();
        WindowSet { series, lookback, horizon, starts }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Materializes the windows at the given positions of `starts`.
    pub fn batch(&self, indices: &[usize]) -> Result<WindowBatch> {
        let b = indices.len();
        let c = self.series.n_channels();
        let (l, h) = (self.lookback, self.horizon);
        let mut inputs = Vec::with_capacity(b * c * l);
        let mut targets = Vec::with_capacity(b * c * h);
        let mut window_starts = Vec::with_capacity(b);
        for &idx in indices {
            let start = self.starts[idx];
            window_starts.push(start);
            for ch in 0..c {
                let row = self.series.channel(ch);
                inputs.extend_from_slice(&row[start..start + l]);
            }
        }
        for &start in &window_starts {
            for ch in 0..c {
                let row = self.series.channel(ch);
                targets.extend_from_slice(&row[start + l..start + l + h]);
            }
        }
        Ok(WindowBatch {
            inputs: Tensor::from_vec(inputs, &[b, c, l])?,
            targets: Tensor::from_vec(targets, &[b, c, h])?,
            window_starts,
        })
    }
}
