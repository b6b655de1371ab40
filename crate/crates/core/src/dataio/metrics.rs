use std::fmt;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse_cycles: f64,
    pub r2: f64,
    /// Share of all predictions within a factor of 2; excluded predictions
    /// count as outside.
    pub frac_within_2x: f64,
    pub frac_within_3x: f64,
    pub n_excluded: usize,
    pub n: usize,
}

#[inline]
pub fn within_factor(observed: f64, predicted: f64, factor: f64) -> bool {
    predicted >= observed / factor && predicted <= observed * factor
}

/// RMSE and R² in cycle space plus error-band shares. Non-finite
/// predictions are excluded from RMSE and R² and counted.
pub fn compute_metrics(observed: &[f64], predicted: &[f64]) -> Result<Metrics, DataError> {
    if observed.len() != predicted.len() {
        return Err(DataError::LengthMismatch { observed: observed.len(), predicted: predicted.len() });
    }
    // sorted pairs make the floating-point sums independent of input order
    let mut pairs: Vec<(f64, f64)> =
        observed.iter().copied().zip(predicted.iter().copied()).filter(|(_, p)| p.is_finite()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = observed.len();
    let n_excluded = n - pairs.len();
    let (mut w2, mut w3) = (0usize, 0usize);
    for &(o, p) in &pairs {
        w2 += within_factor(o, p, 2.0) as usize;
        w3 += within_factor(o, p, 3.0) as usize;
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    if pairs.is_empty() {
        return Ok(Metrics {
            rmse_cycles: f64::INFINITY,
            r2: f64::NEG_INFINITY,
            frac_within_2x: 0.0,
            frac_within_3x: 0.0,
            n_excluded,
            n,
        });
    }
    let m = pairs.len() as f64;
    let mean = pairs.iter().map(|(o, _)| o).sum::<f64>() / m;
    let ss_res: f64 = pairs.iter().map(|(o, p)| (o - p).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(o, _)| (o - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(Metrics {
        rmse_cycles: (ss_res / m).sqrt(),
        r2,
        frac_within_2x: frac(w2),
        frac_within_3x: frac(w3),
        n_excluded,
        n,
    })
}

impl fmt::Display for Metrics {
    /// Structured-text report, one `key = value` line per field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rmse_cycles = {}", self.rmse_cycles)?;
        writeln!(f, "r2 = {}", self.r2)?;
        writeln!(f, "frac_within_2x = {}", self.frac_within_2x)?;
        writeln!(f, "frac_within_3x = {}", self.frac_within_3x)?;
        writeln!(f, "n_excluded = {}", self.n_excluded)?;
        write!(f, "n = {}", self.n)
    }
}
