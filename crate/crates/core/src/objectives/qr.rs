//! Analytical runtime model of ScaLAPACK's PDGEQRF.
//!
//! ```text
//! flops     = 2n²(3m - n)/(3 nproc) + b n²/(2q) + 3bn(2m - n)/(2p) + b²n/(3p)
//! divisions = (mn - n²/2)/p
//! messages  = 3n log p + (2n/b) log q
//! words     = (n²/q + bn) log p + ((mn - n²/2)/p + bn/2) log q
//! runtime   = t_f flops + t_d divisions + t_m messages + t_v words
//! ```
//!
//! Logarithms are base 2. Blocks are square in the model; a rectangular
//! `mb × nb` block uses `b = min(mb, nb)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{num, Objective};
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::spaces::Configuration;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorCounts {
    pub flops: f64,
    pub divisions: f64,
    pub messages: f64,
    pub words: f64,
}

impl FactorCounts {
    pub fn as_array(&self) -> [f64; 4] {
        [self.flops, self.divisions, self.messages, self.words]
    }
}

/// Seconds per flop, division, message and word.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineCoefficients {
    pub t_f: f64,
    pub t_d: f64,
    pub t_m: f64,
    pub t_v: f64,
}

impl Default for MachineCoefficients {
    /// Illustrative magnitudes for a desk-scale surrogate, not measured values.
    fn default() -> Self {
        MachineCoefficients {
            t_f: 1e-9,
            t_d: 4e-8,
            t_m: 1e-6,
            t_v: 2e-9,
        }
    }
}

impl MachineCoefficients {
    pub fn as_array(&self) -> [f64; 4] {
        [self.t_f, self.t_d, self.t_m, self.t_v]
    }

    pub fn runtime(&self, counts: &FactorCounts) -> f64 {
        self.t_f * counts.flops + self.t_d * counts.divisions + self.t_m * counts.messages + self.t_v * counts.words
    }
}

/// Logarithm used by the communication terms.
#[inline]
pub fn comm_log(v: f64) -> f64 {
    v.log2()
}

pub fn qr_factor_counts(m: f64, n: f64, b: f64, p: f64, q: f64, nproc: f64) -> Result<FactorCounts> {
    for (name, v) in [("m", m), ("n", n), ("b", b), ("p", p), ("q", q), ("nproc", nproc)] {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::InvalidConfiguration(format!("factor counts need {name} >= 1, got {v}")));
        }
    }
    let trap = m * n - n * n / 2.0;
    Ok(FactorCounts {
        flops: 2.0 * n * n * (3.0 * m - n) / (3.0 * nproc) + b * n * n / (2.0 * q) + 3.0 * b * n * (2.0 * m - n) / (2.0 * p) + b * b * n / (3.0 * p),
        divisions: trap / p,
        messages: 3.0 * n * comm_log(p) + (2.0 * n / b) * comm_log(q),
        words: (n * n / q + b * n) * comm_log(p) + (trap / p + b * n / 2.0) * comm_log(q),
    })
}

/// Factor counts for a PDGEQRF task and configuration.
pub fn counts_for(task: &Configuration, x: &Configuration) -> Result<FactorCounts> {
    let b = num(x, "mb")?.min(num(x, "nb")?);
    qr_factor_counts(num(task, "m")?, num(task, "n")?, b, num(x, "p")?, num(x, "q")?, num(x, "nproc")?)
}

/// Predicted PDGEQRF runtime in seconds.
pub fn qr_surrogate(task: &Configuration, x: &Configuration, coeffs: &MachineCoefficients) -> Result<f64> {
    let pq = num(x, "p")? * num(x, "q")?;
    let nproc = num(x, "nproc")?;
    if (pq - nproc).abs() > 0.5 {
        return Err(Error::InvalidConfiguration(format!("nproc = {nproc} but p * q = {pq}")));
    }
    Ok(coeffs.runtime(&counts_for(task, x)?))
}

/// Deterministic PDGEQRF runtime objective.
#[derive(Clone, Debug)]
pub struct QrSurrogate {
    pub coeffs: MachineCoefficients,
}

impl Objective for QrSurrogate {
    fn id(&self) -> &str {
        "qr-surrogate"
    }

    fn evaluate(&self, task: &Configuration, x: &Configuration, _rng: &mut PortableRng) -> Result<f64> {
        qr_surrogate(task, x, &self.coeffs)
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn positive(&self) -> bool {
        true
    }
}

/// Result of [`fit_coefficients`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFit {
    pub coeffs: MachineCoefficients,
    pub mean_relative_error: f64,
    pub correlation: f64,
}

/// Non-negative least squares for the four machine coefficients from
/// `(counts, measured seconds)` pairs.
pub fn fit_coefficients_from_counts(records: &[(FactorCounts, f64)]) -> Result<CoefficientFit> {
    const NAMES: [&str; 4] = ["flops", "divisions", "messages", "words"];
    if records.len() < 4 {
        return Err(Error::RegressionFailure(format!("need at least 4 records, got {}", records.len())));
    }
    let rows = records.len();
    let mut a = DMatrix::from_fn(rows, 4, |i, j| records[i].0.as_array()[j]);
    let y = DVector::from_iterator(rows, records.iter().map(|r| r.1));
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::RegressionFailure("non-finite record".into()));
    }
    let mut scale = [1.0; 4];
    for j in 0..4 {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(Error::RegressionFailure(format!("the {} column is identically zero", NAMES[j])));
        }
        scale[j] = norm;
        a.column_mut(j).scale_mut(1.0 / norm);
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if sv.min() <= smax * 1e-12 {
        return Err(Error::RegressionFailure("factor columns are collinear (rank-deficient design)".into()));
    }
    // exact NNLS by enumerating the active sets
    let mut best: Option<([f64; 4], f64)> = None;
    for mask in 1u32..16 {
        let cols: Vec<usize> = (0..4).filter(|j| mask & (1 << j) != 0).collect();
        let sub = DMatrix::from_fn(rows, cols.len(), |i, k| a[(i, cols[k])]);
        let Ok(sol) = sub.clone().svd(true, true).solve(&y, 1e-14) else {
            continue;
        };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let resid = (&sub * &sol - &y).norm_squared();
        if best.as_ref().is_none_or(|(_, r)| resid < *r) {
            let mut coef = [0.0; 4];
            for (k, &j) in cols.iter().enumerate() {
                coef[j] = sol[k] / scale[j];
            }
            best = Some((coef, resid));
        }
    }
    let (coef, _) = best.ok_or_else(|| Error::RegressionFailure("no non-negative solution".into()))?;
    let coeffs = MachineCoefficients {
        t_f: coef[0],
        t_d: coef[1],
        t_m: coef[2],
        t_v: coef[3],
    };
    let pred: Vec<f64> = records.iter().map(|(c, _)| coeffs.runtime(c)).collect();
    let meas: Vec<f64> = records.iter().map(|r| r.1).collect();
    let mean_relative_error = pred.iter().zip(&meas).map(|(p, m)| ((p - m) / m).abs()).sum::<f64>() / rows as f64;
    Ok(CoefficientFit {
        coeffs,
        mean_relative_error,
        correlation: pearson(&pred, &meas),
    })
}

/// Regression over `(task, configuration, measured seconds)` records.
pub fn fit_coefficients(records: &[(Configuration, Configuration, f64)]) -> Result<CoefficientFit> {
    let rows = records
        .iter()
        .map(|(t, x, y)| Ok((counts_for(t, x)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    fit_coefficients_from_counts(&rows)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisions_hand_value() {
        let c = qr_factor_counts(1000.0, 1000.0, 100.0, 2.0, 2.0, 4.0).unwrap();
        assert_eq!(c.divisions, 250_000.0);
    }

    #[test]
    fn no_messages_on_one_process() {
        let c = qr_factor_counts(500.0, 300.0, 32.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.messages, 0.0);
        assert_eq!(c.words, 0.0);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(qr_factor_counts(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(qr_factor_counts(10.0, 10.0, 1.0, -2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_coefficients_and_linearity() {
        let c = qr_factor_counts(1000.0, 800.0, 64.0, 4.0, 6.0, 24.0).unwrap();
        let zero = MachineCoefficients {
            t_f: 0.0,
            t_d: 0.0,
            t_m: 0.0,
            t_v: 0.0,
        };
        assert_eq!(zero.runtime(&c), 0.0);
        let base = MachineCoefficients::default();
        let doubled = MachineCoefficients { t_f: 2.0 * base.t_f, ..base };
        let diff = doubled.runtime(&c) - base.runtime(&c);
        assert!((diff - base.t_f * c.flops).abs() <= 1e-12 * diff);
    }

    #[test]
    fn too_few_records() {
        let c = qr_factor_counts(1000.0, 800.0, 64.0, 4.0, 6.0, 24.0).unwrap();
        assert!(matches!(fit_coefficients_from_counts(&[(c, 1.0); 3]), Err(Error::RegressionFailure(_))));
        assert!(matches!(fit_coefficients_from_counts(&[(c, 1.0); 6]), Err(Error::RegressionFailure(_))));
    }
}
