//! Mutual-coupling-aware channel estimators.
//!
//! | type | known            | estimated      | solver          |
//! |------|------------------|----------------|-----------------|
//! | 1    | Gamma            | H0, A, B       | [`btals1`]      |
//! | 2    | Gamma, H0        | A, B           | [`btals2`], [`rbf`] |
//! | 3    | Gamma, B         | H0, A          | [`btals3`]      |
//! | 4    | Gamma, H0, B     | A              | [`btals4`]      |
//!
//! Types 2 and 4 take the offset-free tensor `H_k - H0` (see [`subtract_offset`]).
//! When both A and B are estimated they are only defined up to `(g A, B / g)`;
//! [`predict`] is invariant to that scalar.

mod btals;
mod design;
mod rbf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnt::{CouplingModel, SystemParameters};
use crate::tensor::{CMat, Tensor3, DEFAULT_RANK_TOL};

pub use btals::{btals1, btals2, btals3, btals4};
pub use design::{design_rank, screened_configs, DesignCheck};
pub use rbf::{gram_matrix, rbf};

/// Stop once the training residual falls below this fraction of the data energy.
pub const ABSOLUTE_COST_FLOOR: f64 = 1e-22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemType {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "rbf")]
    Rbf,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4")]
    Four,
}

impl ProblemType {
    pub const ALL: [ProblemType; 5] = [
        ProblemType::One,
        ProblemType::Two,
        ProblemType::Rbf,
        ProblemType::Three,
        ProblemType::Four,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemType::One => "1",
            ProblemType::Two => "2",
            ProblemType::Rbf => "rbf",
            ProblemType::Three => "3",
            ProblemType::Four => "4",
        }
    }

    /// Whether the estimator works on `H - H0` rather than `H`.
    pub fn knows_h0(self) -> bool {
        matches!(self, ProblemType::Two | ProblemType::Rbf | ProblemType::Four)
    }

    pub fn knows_b(self) -> bool {
        matches!(self, ProblemType::Three | ProblemType::Four)
    }

    /// Whether the core stack must be `blkdiag(I, Omega_k)`.
    pub fn uses_augmented_stack(self) -> bool {
        matches!(self, ProblemType::One | ProblemType::Three)
    }

    fn bound(self) -> &'static str {
        match self {
            ProblemType::One => "max(1 + N_M/N_F, (N_F + N_M)/N_U)",
            ProblemType::Two => "max(N_M/N_U, N_M/N_F)",
            ProblemType::Rbf => "N_M(N_M + 1)/2",
            ProblemType::Three => "1 + N_M/N_F",
            ProblemType::Four => "N_M/N_F",
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "btals1" | "btals-i" => Ok(ProblemType::One),
            "2" | "btals2" | "btals-ii" => Ok(ProblemType::Two),
            "rbf" => Ok(ProblemType::Rbf),
            "3" | "btals3" | "btals-iii" => Ok(ProblemType::Three),
            "4" | "btals4" | "btals-iv" => Ok(ProblemType::Four),
            other => Err(Error::InvalidArgument(format!(
                "unknown problem type {other:?} (expected 1, 2, rbf, 3 or 4)"
            ))),
        }
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Smallest K satisfying the necessary dimensional condition of each type.
pub fn min_k(ty: ProblemType, n_f: usize, n_m: usize, n_u: usize) -> Result<usize> {
    if n_f == 0 || n_m == 0 || n_u == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    Ok(match ty {
        ProblemType::One => (1 + ceil_div(n_m, n_f)).max(ceil_div(n_f + n_m, n_u)),
        ProblemType::Two => ceil_div(n_m, n_u).max(ceil_div(n_m, n_f)),
        ProblemType::Rbf => n_m * (n_m + 1) / 2,
        ProblemType::Three => 1 + ceil_div(n_m, n_f),
        ProblemType::Four => ceil_div(n_m, n_f),
    })
}

pub(crate) fn check_k(
    ty: ProblemType,
    estimator: &'static str,
    k: usize,
    n_f: usize,
    n_m: usize,
    n_u: usize,
) -> Result<usize> {
    let k_min = min_k(ty, n_f, n_m, n_u)?;
    if k < k_min {
        return Err(Error::Identifiability {
            estimator,
            k,
            k_min,
            bound: ty.bound(),
        });
    }
    Ok(k_min)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum InitMode {
    /// I.i.d. complex Gaussian `B`, drawn from `init_seed`.
    #[default]
    Random,
    /// Starting `B` (N_M x N_F).
    Provided(CMat),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub max_iter: usize,
    /// Relative cost decrease below which iteration stops.
    pub cost_tol: f64,
    /// Relative singular-value cutoff for pseudoinverses and rank checks.
    pub rank_tol: f64,
    pub init_seed: u64,
    #[serde(skip)]
    pub init: InitMode,
    /// Let a damped Gauss-Newton step on `B` compete with each alternating update.
    pub accelerate: bool,
    /// Random initializations tried by BTALS-I/II (seeds `init_seed`, `init_seed + 1`, ...).
    /// The run with the lowest final cost is reported. Ignored for a provided start.
    pub starts: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            cost_tol: 1e-10,
            rank_tol: DEFAULT_RANK_TOL,
            init_seed: 0,
            init: InitMode::Random,
            accelerate: true,
            starts: 32,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if self.starts == 0 {
            return Err(Error::InvalidArgument("starts must be >= 1".into()));
        }
        if !(self.cost_tol > 0.0) || !(self.rank_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReportFlags {
    /// The `D` update of BTALS-I hit a rank-deficient system (its top block is
    /// overwritten anyway, so this is informational).
    pub rank_deficient_d_update: bool,
    /// An RBF normal matrix exceeded the condition guard and was pseudo-inverted.
    pub gram_pinv_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationReport {
    pub problem: ProblemType,
    #[serde(serialize_with = "crate::serial::serialize_opt_matrix")]
    pub h0_hat: Option<CMat>,
    #[serde(serialize_with = "crate::serial::serialize_opt_matrix")]
    pub a_hat: Option<CMat>,
    #[serde(serialize_with = "crate::serial::serialize_opt_matrix")]
    pub b_hat: Option<CMat>,
    /// Squared Frobenius training residual after each iteration.
    pub cost_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub min_k_required: usize,
    pub k_used: usize,
    pub flags: ReportFlags,
    /// RBF only: relative residual of the symmetric-core zero-forcing fit.
    pub zero_forcing_residual: Option<f64>,
}

impl EstimationReport {
    pub fn final_cost(&self) -> f64 {
        self.cost_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Parameters known to the caller and not estimated by the chosen type.
#[derive(Clone, Debug, Default)]
pub struct KnownParams {
    pub h0: Option<CMat>,
    pub b: Option<CMat>,
}

/// `H_k = H0 + A Omega_k B` for every slice of the plain core stack `omega`.
pub fn predict(report: &EstimationReport, known: &KnownParams, omega: &Tensor3) -> Result<Tensor3> {
    let a = report
        .a_hat
        .as_ref()
        .ok_or_else(|| Error::MissingParameter("A is neither estimated nor known".into()))?;
    let b = report
        .b_hat
        .as_ref()
        .or(known.b.as_ref())
        .ok_or_else(|| Error::MissingParameter("B is neither estimated nor known".into()))?;
    let h0 = report
        .h0_hat
        .as_ref()
        .or(known.h0.as_ref())
        .ok_or_else(|| Error::MissingParameter("H0 is neither estimated nor known".into()))?;
    forward(h0, a, b, omega)
}

/// Full parameter set from an estimate, filling in the known parts.
pub fn estimated_parameters(
    report: &EstimationReport,
    known: &KnownParams,
    coupling: &CouplingModel,
) -> Result<SystemParameters> {
    let pick = |est: &Option<CMat>, kn: &Option<CMat>, name: &str| {
        est.as_ref()
            .or(kn.as_ref())
            .cloned()
            .ok_or_else(|| Error::MissingParameter(format!("{name} is neither estimated nor known")))
    };
    let p = SystemParameters {
        h0: pick(&report.h0_hat, &known.h0, "H0")?,
        a: pick(&report.a_hat, &None, "A")?,
        gamma: coupling.gamma.clone(),
        b: pick(&report.b_hat, &known.b, "B")?,
        alpha: coupling.alpha,
        beta: coupling.beta,
    };
    p.validate()?;
    Ok(p)
}

pub(crate) fn forward(h0: &CMat, a: &CMat, b: &CMat, omega: &Tensor3) -> Result<Tensor3> {
    let (n_m, n_m2, _) = omega.dims();
    if n_m != n_m2 || a.ncols() != n_m || b.nrows() != n_m || h0.shape() != (a.nrows(), b.ncols()) {
        return Err(Error::Shape(format!(
            "cannot combine H0 {:?}, A {:?}, B {:?} with cores {:?}",
            h0.shape(),
            a.shape(),
            b.shape(),
            omega.dims()
        )));
    }
    let slices: Vec<CMat> = omega.slices().map(|om| h0 + a * om * b).collect();
    Tensor3::from_slices(&slices)
}

/// `H_k - H0` slice by slice.
pub fn subtract_offset(h: &Tensor3, h0: &CMat) -> Result<Tensor3> {
    let (n_u, n_f, _) = h.dims();
    if h0.shape() != (n_u, n_f) {
        return Err(Error::Shape(format!(
            "H0 is {:?} but channel slices are {n_u}x{n_f}",
            h0.shape()
        )));
    }
    let slices: Vec<CMat> = h.slices().map(|s| s - h0).collect();
    Tensor3::from_slices(&slices)
}

/// Iteration bookkeeping shared by the alternating solvers.
pub(crate) struct Stopper {
    floor: f64,
    cost_tol: f64,
    max_iter: usize,
    pub trace: Vec<f64>,
}

impl Stopper {
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn new(cfg: &EstimatorConfig, data_energy: f64) -> Self {
        Self {
            floor: ABSOLUTE_COST_FLOOR * data_energy,
            cost_tol: cfg.cost_tol,
            max_iter: cfg.max_iter,
            trace: Vec::new(),
        }
    }

    /// Records `cost` and returns `Some(converged)` when iteration should stop.
    /// `progress` is the quantity whose relative decrease is tested (usually the cost).
    pub fn record(&mut self, cost: f64, progress: f64, prev_progress: Option<f64>) -> Result<Option<bool>> {
        if !cost.is_finite() || !progress.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite cost at iteration {}",
                self.trace.len() + 1
            )));
        }
        self.trace.push(cost);
        let met = cost <= self.floor
            || prev_progress.is_some_and(|p| p <= 0.0 || (p - progress) / p < self.cost_tol);
        let last = self.trace.len() >= self.max_iter;
        Ok(match (met, last) {
            (_, true) => Some(false),
            (true, false) => Some(true),
            (false, false) => None,
        })
    }
}

pub(crate) fn check_slices(h: &Tensor3, cores: &Tensor3, core_dim: usize) -> Result<()> {
    let (_, _, k) = h.dims();
    let (p, q, kc) = cores.dims();
    if kc != k {
        return Err(Error::Shape(format!(
            "{k} measurements but {kc} core slices"
        )));
    }
    if p != core_dim || q != core_dim {
        return Err(Error::Shape(format!(
            "core slices must be {core_dim}x{core_dim}, got {p}x{q}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_k_examples() {
        assert_eq!(min_k(ProblemType::One, 7, 96, 4).unwrap(), 26);
        assert_eq!(min_k(ProblemType::Four, 7, 96, 4).unwrap(), 14);
        assert_eq!(min_k(ProblemType::Rbf, 2, 8, 3).unwrap(), 36);
        assert_eq!(min_k(ProblemType::Three, 7, 96, 4).unwrap(), 15);
        assert_eq!(min_k(ProblemType::Two, 7, 96, 4).unwrap(), 24);
    }

    #[test]
    fn unknown_type_is_an_argument_error() {
        assert!(matches!(
            "5".parse::<ProblemType>(),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!("RBF".parse::<ProblemType>().unwrap(), ProblemType::Rbf);
    }

    #[test]
    fn stopper_reports_tie_as_not_converged() {
        let cfg = EstimatorConfig {
            max_iter: 2,
            ..Default::default()
        };
        let mut s = Stopper::new(&cfg, 1.0);
        assert_eq!(s.record(1.0, 1.0, None).unwrap(), None);
        assert_eq!(s.record(1.0, 1.0, Some(1.0)).unwrap(), Some(false));
    }

    #[test]
    fn stopper_rejects_nan() {
        let mut s = Stopper::new(&EstimatorConfig::default(), 1.0);
        assert!(matches!(s.record(f64::NAN, 0.0, None), Err(Error::Divergence(_))));
    }
}
