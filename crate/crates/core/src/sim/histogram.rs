use serde::Serialize;

use super::evaluate::episode_premium;
use crate::error::{Error, Result};

/// Episode-cost histogram on half-open bins `[i * w, (i + 1) * w)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(bin index, count)` for non-empty bins, ascending.
    pub bins: Vec<(i64, u64)>,
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub premium_mean: f64,
}

pub fn export_histogram(costs: &[f64], bin_width: f64, premium_threshold: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Config(format!("bin width must be positive, got {bin_width}")));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &c in costs {
        *counts.entry((c / bin_width).floor() as i64).or_insert(0u64) += 1;
    }
    let n = costs.len() as f64;
    let (mean, std, premium_mean) = if costs.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let mean = costs.iter().sum::<f64>() / n;
        let var = if costs.len() > 1 { costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let premium = costs.iter().map(|&c| episode_premium(c, premium_threshold)).sum::<f64>() / n;
        (mean, var.sqrt(), premium)
    };
    Ok(Histogram { bin_width, bins: counts.into_iter().collect(), count: costs.len() as u64, mean, std, premium_mean })
}

impl Histogram {
    /// Columns `row,bin_start,bin_end,value`; bin rows first, then summary rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "bin_start", "bin_end", "value"])?;
        for &(i, c) in &self.bins {
            let start = i as f64 * self.bin_width;
            w.write_record(["bin".to_string(), start.to_string(), (start + self.bin_width).to_string(), c.to_string()])?;
        }
        for (name, value) in [
            ("mean", self.mean),
            ("std", self.std),
            ("premium_mean", self.premium_mean),
            ("count", self.count as f64),
        ] {
            w.write_record([name, "", "", &value.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_half_open() {
        let h = export_histogram(&[100.0, 150.0], 100.0, 25_565.0).unwrap();
        assert_eq!(h.bins, vec![(1, 2)]);
        let h = export_histogram(&[50.0, 150.0], 100.0, 25_565.0).unwrap();
        assert_eq!(h.bins, vec![(0, 1), (1, 1)]);
        let h = export_histogram(&[99.999, 100.0], 100.0, 25_565.0).unwrap();
        assert_eq!(h.bins, vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn empty_input_has_zero_summary() {
        let h = export_histogram(&[], 10.0, 25_565.0).unwrap();
        assert!(h.bins.is_empty());
        assert_eq!((h.count, h.mean, h.std, h.premium_mean), (0, 0.0, 0.0, 0.0));
        assert_eq!(h.to_csv().unwrap(), "row,bin_start,bin_end,value\nmean,,,0\nstd,,,0\npremium_mean,,,0\ncount,,,0\n");
    }

    #[test]
    fn summary_and_csv() {
        let h = export_histogram(&[20_000.0, 30_000.0], 10_000.0, 25_565.0).unwrap();
        assert_eq!(h.mean, 25_000.0);
        assert_eq!(h.premium_mean, 4435.0 / 2.0);
        assert!(h.to_csv().unwrap().starts_with("row,bin_start,bin_end,value\nbin,20000,30000,1\nbin,30000,40000,1\n"));
        assert!(export_histogram(&[1.0], 0.0, 0.0).is_err());
    }
}
