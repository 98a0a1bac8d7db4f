//! Prediction accuracy on held-out configurations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{frobenius_sq, CMat, Tensor3, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub nmse: f64,
    pub nmse_db: f64,
    pub zeta: f64,
    pub zeta_db: f64,
    /// Linear per-entry ratio, `N_U x N_F`; `+inf` where the error does not vary.
    #[serde(skip)]
    pub per_entry_zeta: nalgebra::DMatrix<f64>,
    /// Entries excluded from the mean because their error spread is zero.
    pub infinite_entries: usize,
    pub q_count: usize,
}

fn check_shapes(meas: &Tensor3, pred: &Tensor3) -> Result<()> {
    if meas.dims() != pred.dims() {
        return Err(Error::Shape(format!(
            "measured {:?} vs predicted {:?}",
            meas.dims(),
            pred.dims()
        )));
    }
    Ok(())
}

/// `sum ||H_meas - H_pred||^2 / sum ||H_meas||^2` over all slices.
pub fn nmse(meas: &Tensor3, pred: &Tensor3) -> Result<f64> {
    check_shapes(meas, pred)?;
    let den = meas.frobenius_sq();
    if den <= 0.0 {
        return Err(Error::Degenerate("measured channels have zero energy".into()));
    }
    let num: f64 = meas
        .data()
        .iter()
        .zip(pred.data())
        .map(|(m, p)| (m - p).norm_sqr())
        .sum();
    Ok(num / den)
}

/// Population standard deviation of complex samples, and the largest sample
/// magnitude (the scale of the rounding error in the mean).
fn spread(samples: impl Iterator<Item = C64> + Clone, q: usize) -> (f64, f64) {
    let mean = samples.clone().fold(C64::new(0.0, 0.0), |acc, z| acc + z) / q as f64;
    let peak = samples.clone().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let sd = (samples.map(|z| (z - mean).norm_sqr()).sum::<f64>() / q as f64).sqrt();
    (sd, peak)
}

/// Error spreads at or below this multiple of `eps * peak` are rounding noise
/// around a constant offset and count as zero.
const ROUNDING_FACTOR: f64 = 64.0;

/// Per-entry ratio of the spread of the measurements over configurations to the
/// spread of the prediction error, averaged over entries. A constant offset per
/// entry changes neither spread.
pub fn zeta(meas: &Tensor3, pred: &Tensor3) -> Result<(f64, nalgebra::DMatrix<f64>, usize)> {
    check_shapes(meas, pred)?;
    let (n_u, n_f, q) = meas.dims();
    if q < 2 {
        return Err(Error::InvalidArgument(format!(
            "zeta needs at least 2 configurations, got {q}"
        )));
    }
    let mut per_entry = nalgebra::DMatrix::<f64>::zeros(n_u, n_f);
    let mut sum = 0.0;
    let mut finite = 0usize;
    for i in 0..n_u {
        for j in 0..n_f {
            let (signal, _) = spread((0..q).map(|k| meas.get(i, j, k)), q);
            let (error, peak) = spread((0..q).map(|k| meas.get(i, j, k) - pred.get(i, j, k)), q);
            let ratio = if error > ROUNDING_FACTOR * f64::EPSILON * peak {
                signal / error
            } else {
                f64::INFINITY
            };
            per_entry[(i, j)] = ratio;
            if ratio.is_finite() {
                sum += ratio;
                finite += 1;
            }
        }
    }
    let infinite = n_u * n_f - finite;
    if infinite > 0 {
        log::warn!("{infinite} entries have zero prediction-error spread and are left out of zeta");
    }
    let mean = if finite > 0 { sum / finite as f64 } else { f64::INFINITY };
    Ok((mean, per_entry, infinite))
}

pub fn to_db_power(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn to_db_amplitude(x: f64) -> f64 {
    20.0 * x.log10()
}

pub fn evaluate(meas: &Tensor3, pred: &Tensor3) -> Result<MetricReport> {
    let n = nmse(meas, pred)?;
    let (z, per_entry_zeta, infinite_entries) = zeta(meas, pred)?;
    Ok(MetricReport {
        nmse: n,
        nmse_db: to_db_power(n),
        zeta: z,
        zeta_db: to_db_amplitude(z),
        per_entry_zeta,
        infinite_entries,
        q_count: meas.dims().2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    pub gamma: C64,
    /// `||A_true - gamma A_hat|| / ||A_true||`.
    pub a_residual: f64,
    /// `||B_true - B_hat / gamma|| / ||B_true||`.
    pub b_residual: f64,
}

/// Resolves the `(g A, B / g)` ambiguity against ground truth.
pub fn align_scalar(a_hat: &CMat, b_hat: &CMat, a_true: &CMat, b_true: &CMat) -> Result<Alignment> {
    if a_hat.shape() != a_true.shape() || b_hat.shape() != b_true.shape() {
        return Err(Error::Shape("estimate and ground truth shapes differ".into()));
    }
    let den = frobenius_sq(a_hat);
    if den == 0.0 {
        return Err(Error::Degenerate("estimated A is zero".into()));
    }
    let gamma = a_hat.dotc(a_true) / den;
    let rel = |x: &CMat, truth: &CMat| {
        let t = frobenius_sq(truth).sqrt();
        let e = frobenius_sq(&(truth - x)).sqrt();
        if t > 0.0 {
            e / t
        } else {
            e
        }
    };
    Ok(Alignment {
        gamma,
        a_residual: rel(&(a_hat * gamma), a_true),
        b_residual: rel(&(b_hat / gamma), b_true),
    })
}
