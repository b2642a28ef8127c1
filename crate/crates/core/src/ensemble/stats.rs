use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Box-plot summary: quartiles, 1.5 IQR whiskers and the points beyond them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear interpolation between closest ranks on the sorted sample, with
/// position `p * (n - 1)`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Validation("box-plot statistics need at least one value".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("box-plot input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let whisker_low = q1 - 1.5 * iqr;
    let whisker_high = q3 + 1.5 * iqr;
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < whisker_low || v > whisker_high)
        .collect();
    Ok(BoxStats {
        count: sorted.len(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        median,
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers,
    })
}

pub const BOX_STATS_HEADER: &str =
    "key,count,min,q1,median,q3,max,iqr,whisker_low,whisker_high,outliers";

/// One CSV row; outliers are `;`-separated.
pub fn box_stats_row(key: &str, s: &BoxStats) -> String {
    let mut row = String::new();
    let _ = write!(
        row,
        "{key},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},",
        s.count, s.min, s.q1, s.median, s.q3, s.max, s.iqr, s.whisker_low, s.whisker_high
    );
    let outliers: Vec<String> = s.outliers.iter().map(|v| format!("{v:e}")).collect();
    row.push_str(&outliers.join(";"));
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_five() {
        let s = boxplot_stats(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr), (3.0, 2.0, 4.0, 2.0));
        assert_eq!((s.whisker_low, s.whisker_high), (-1.0, 7.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn constant_values() {
        let s = boxplot_stats(&[0.9; 6]).unwrap();
        assert_eq!(s.iqr, 0.0);
        assert_eq!((s.whisker_low, s.whisker_high), (0.9, 0.9));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn far_point_is_an_outlier() {
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.outliers, vec![100.0]);
    }

    #[test]
    fn empty_and_nan() {
        assert!(boxplot_stats(&[]).is_err());
        assert!(boxplot_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn csv_row() {
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        let row = box_stats_row("full-3x3", &s);
        assert!(row.starts_with("full-3x3,5,"));
        assert!(row.ends_with(",1e2"));
        assert_eq!(row.split(',').count(), BOX_STATS_HEADER.split(',').count());
    }
}
