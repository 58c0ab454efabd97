//! Regular-grid count series: loading, validation, splitting, persistence.
//!
//! A series holds nonnegative integer counts `N(1..T)` on a regular grid.
//! Missing bins are an error, never imputed: the excitation sum runs over
//! all lags, so a silently zero-filled gap changes the model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative integer counts on a regular time grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    /// Counts `N(1), ..., N(T)`.
    pub counts: Vec<u64>,
    /// Free-text unit of one bin, e.g. "day" or "week".
    pub step_label: String,
    /// Integer time of the first bin.
    pub origin_index: i64,
}

impl CountSeries {
    pub fn new(counts: Vec<u64>, step_label: impl Into<String>, origin_index: i64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Validation {
                row: 0,
                message: "series must contain at least one bin".into(),
            });
        }
        Ok(Self {
            counts,
            step_label: step_label.into(),
            origin_index,
        })
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        Self::new(counts, "bin", 0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts as `f64`, the form the numeric layers consume.
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Total number of events.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Contiguous prefix split of a series into train / validation / test.
///
/// Indices are 1-based bin counts: train covers `1..=train_end`, validation
/// `train_end+1..=valid_end`, test `valid_end+1..=test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

impl SplitSpec {
    pub fn new(train_end: usize, valid_end: usize, test_end: usize) -> Result<Self> {
        let spec = Self {
            train_end,
            valid_end,
            test_end,
        };
        spec.validate_internal()?;
        Ok(spec)
    }

    fn validate_internal(&self) -> Result<()> {
        if self.train_end < 1 {
            return Err(Error::InvalidSplit("train_end must be at least 1".into()));
        }
        if self.train_end >= self.valid_end {
            return Err(Error::InvalidSplit(format!(
                "train_end ({}) must be < valid_end ({})",
                self.train_end, self.valid_end
            )));
        }
        if self.valid_end > self.test_end {
            return Err(Error::InvalidSplit(format!(
                "valid_end ({}) must be <= test_end ({})",
                self.valid_end, self.test_end
            )));
        }
        Ok(())
    }

    pub fn validate_against(&self, series: &CountSeries) -> Result<()> {
        self.validate_internal()?;
        if self.test_end > series.len() {
            return Err(Error::InvalidSplit(format!(
                "test_end ({}) exceeds series length ({})",
                self.test_end,
                series.len()
            )));
        }
        Ok(())
    }
}

/// A view on a contiguous segment of a series that retains the full prefix
/// as history, so predictions for a bin can see all earlier bins.
#[derive(Debug, Clone, Copy)]
pub struct SeriesView<'a> {
    series: &'a CountSeries,
    /// 1-based first bin of the segment.
    pub start: usize,
    /// 1-based last bin of the segment (inclusive); `start > end` means empty.
    pub end: usize,
}

impl<'a> SeriesView<'a> {
    pub fn len(&self) -> usize {
        if self.end >= self.start {
            self.end - self.start + 1
        } else {
            0
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Counts of the segment itself.
    pub fn segment(&self) -> &[u64] {
        &self.series.counts[self.start - 1..self.end]
    }

    /// All counts from bin 1 through the end of the segment: the history
    /// available for one-step-ahead prediction of the final bin.
    pub fn with_history(&self) -> &[u64] {
        &self.series.counts[..self.end]
    }

    pub fn full_series(&self) -> &'a CountSeries {
        self.series
    }
}

/// Split a series into train / validation / test views.
pub fn split_series<'a>(
    series: &'a CountSeries,
    spec: &SplitSpec,
) -> Result<(SeriesView<'a>, SeriesView<'a>, SeriesView<'a>)> {
    spec.validate_against(series)?;
    let train = SeriesView {
        series,
        start: 1,
        end: spec.train_end,
    };
    let valid = SeriesView {
        series,
        start: spec.train_end + 1,
        end: spec.valid_end,
    };
    let test = SeriesView {
        series,
        start: spec.valid_end + 1,
        end: spec.test_end,
    };
    Ok((train, valid, test))
}

/// Load a count series from CSV.
///
/// Accepts one column (count) or two columns (index, count), with an
/// optional `t,count` header. Indices, when present, must be consecutive
/// integers; negative or non-integer counts are rejected with the row
/// number.
pub fn load_counts(path: impl AsRef<Path>) -> Result<CountSeries> {
    let content = std::fs::read_to_string(path)?;
    parse_counts_str(&content)
}

/// Parse CSV text into a count series. See [`load_counts`].
pub fn parse_counts_str(content: &str) -> Result<CountSeries> {
    let mut counts = Vec::new();
    let mut origin: Option<i64> = None;
    let mut expected_index: Option<i64> = None;
    let mut data_row = 0usize;

    for (line_no, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        // Header row: skip if any field is non-numeric on the first line.
        if line_no == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let (index, count_str) = match fields.len() {
            1 => (None, fields[0]),
            2 => (Some(fields[0]), fields[1]),
            n => {
                return Err(Error::Validation {
                    row: data_row,
                    message: format!("expected 1 or 2 columns, found {n}"),
                })
            }
        };

        if let Some(idx_str) = index {
            let idx: i64 = idx_str.parse().map_err(|_| Error::Validation {
                row: data_row,
                message: format!("non-integer index '{idx_str}'"),
            })?;
            match expected_index {
                None => {
                    origin = Some(idx);
                    expected_index = Some(idx + 1);
                }
                Some(expected) => {
                    if idx != expected {
                        return Err(Error::IndexGap {
                            row: data_row,
                            expected,
                            found: idx,
                        });
                    }
                    expected_index = Some(idx + 1);
                }
            }
        }

        let count: i64 = count_str.parse().map_err(|_| Error::Validation {
            row: data_row,
            message: format!("non-integer count '{count_str}'"),
        })?;
        if count < 0 {
            return Err(Error::Validation {
                row: data_row,
                message: format!("negative count {count}"),
            });
        }
        counts.push(count as u64);
        data_row += 1;
    }

    CountSeries::new(counts, "bin", origin.unwrap_or(0))
}

/// Save a count series as `t,count` CSV. Round-trips bit-identically
/// through [`load_counts`].
pub fn save_counts(series: &CountSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("t,count\n");
    for (i, c) in series.counts.iter().enumerate() {
        out.push_str(&format!("{},{}\n", series.origin_index + i as i64, c));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_column_csv() {
        let s = parse_counts_str("0,2\n1,0\n2,3").unwrap();
        assert_eq!(s.counts, vec![2, 0, 3]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn parses_single_column_with_header() {
        let s = parse_counts_str("count\n5\n1\n0\n").unwrap();
        assert_eq!(s.counts, vec![5, 1, 0]);
    }

    #[test]
    fn rejects_negative_count() {
        let err = parse_counts_str("0,2\n1,-1\n").unwrap_err();
        match err {
            Error::Validation { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_integer_count() {
        assert!(matches!(
            parse_counts_str("0,2\n1,1.5\n"),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn rejects_index_gap() {
        let err = parse_counts_str("0,1\n1,2\n3,1\n").unwrap_err();
        match err {
            Error::IndexGap { expected, found, .. } => {
                assert_eq!(expected, 2);
                assert_eq!(found, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn split_paper_layout() {
        let series = CountSeries::from_counts(vec![1; 6000]).unwrap();
        let spec = SplitSpec::new(4000, 6000, 6000).unwrap();
        let (train, valid, test) = split_series(&series, &spec).unwrap();
        assert_eq!(train.len(), 4000);
        assert_eq!(valid.len(), 2000);
        assert_eq!(test.len(), 0);
        assert_eq!(valid.with_history().len(), 6000);
    }

    #[test]
    fn split_three_way() {
        let series = CountSeries::from_counts(vec![0; 10]).unwrap();
        let spec = SplitSpec::new(5, 8, 10).unwrap();
        let (train, valid, test) = split_series(&series, &spec).unwrap();
        assert_eq!((train.len(), valid.len(), test.len()), (5, 3, 2));
        // Partition of 1..=test_end with no overlap and no gap.
        assert_eq!(train.end + 1, valid.start);
        assert_eq!(valid.end + 1, test.start);
        assert_eq!(test.end, 10);
    }

    #[test]
    fn split_rejects_disorder() {
        assert!(SplitSpec::new(8, 5, 10).is_err());
        let series = CountSeries::from_counts(vec![0; 6]).unwrap();
        let spec = SplitSpec::new(2, 4, 10).unwrap();
        assert!(split_series(&series, &spec).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let series = CountSeries::new(vec![3, 0, 0, 7, 2], "week", 5).unwrap();
        save_counts(&series, &path).unwrap();
        let loaded = load_counts(&path).unwrap();
        assert_eq!(loaded.counts, series.counts);
        assert_eq!(loaded.origin_index, series.origin_index);
    }
}
