//! Estimate-then-evaluate on a dataset, shared by `estimate`, `sweep` and `optimize`.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::estimators::{
    btals1, btals2, btals3, btals4, estimated_parameters, predict, rbf, subtract_offset,
    EstimationReport, EstimatorConfig, KnownParams, ProblemType,
};
use crate::metrics::{evaluate, MetricReport};
use crate::mnt::{build_omega_stack, CouplingModel, StackVariant, SystemParameters};
use crate::scenario::Dataset;

use super::config::TypeSpec;

pub struct Estimate {
    pub report: EstimationReport,
    pub known: KnownParams,
    /// Coupling model the estimator assumed (`Gamma = 0` for `-nomc`).
    pub model: CouplingModel,
    pub wall_time: Duration,
}

impl Estimate {
    pub fn parameters(&self) -> Result<SystemParameters> {
        estimated_parameters(&self.report, &self.known, &self.model)
    }
}

/// Runs `spec` on the first `k` training measurements of `ds`.
pub fn estimate(ds: &Dataset, spec: TypeSpec, k: Option<usize>, cfg: &EstimatorConfig) -> Result<Estimate> {
    let start = Instant::now();
    let train = ds.training(k)?;
    let model = if spec.no_mc {
        ds.coupling.without_coupling()
    } else {
        ds.coupling.clone()
    };
    let n_f = ds.dims().1;
    let variant = if spec.ty.uses_augmented_stack() {
        StackVariant::Augmented { n_f }
    } else {
        StackVariant::Plain
    };
    let stacks = build_omega_stack(&model, &train.configs, variant)?;
    let mut known = KnownParams::default();
    let h = &train.h_meas;
    let report = match spec.ty {
        ProblemType::One => btals1(h, stacks.augmented()?, cfg)?,
        ProblemType::Three => {
            let b = ds.known_b()?;
            let r = btals3(h, stacks.augmented()?, &b, cfg)?;
            known.b = Some(b);
            r
        }
        ProblemType::Two | ProblemType::Rbf | ProblemType::Four => {
            let h0 = ds.known_h0()?;
            let h_ring = subtract_offset(h, &h0)?;
            let r = match spec.ty {
                ProblemType::Two => btals2(&h_ring, &stacks.plain, cfg)?,
                ProblemType::Rbf => rbf(&h_ring, &stacks.plain, cfg)?,
                _ => {
                    let b = ds.known_b()?;
                    let r = btals4(&h_ring, &stacks.plain, &b, cfg)?;
                    known.b = Some(b);
                    r
                }
            };
            known.h0 = Some(h0);
            r
        }
    };
    Ok(Estimate {
        report,
        known,
        model,
        wall_time: start.elapsed(),
    })
}

pub struct Evaluation {
    pub estimate: Estimate,
    pub metrics: MetricReport,
}

/// Estimates from `k` training measurements and scores the prediction on the
/// first `q` held-out ones.
pub fn estimate_and_evaluate(
    ds: &Dataset,
    spec: TypeSpec,
    k: Option<usize>,
    q: Option<usize>,
    cfg: &EstimatorConfig,
) -> Result<Evaluation> {
    let est = estimate(ds, spec, k, cfg)?;
    let test = ds.test(q)?;
    let omega = build_omega_stack(&est.model, &test.configs, StackVariant::Plain)?.plain;
    let pred = predict(&est.report, &est.known, &omega)?;
    let metrics = evaluate(&test.h_meas, &pred)?;
    Ok(Evaluation {
        estimate: est,
        metrics,
    })
}
