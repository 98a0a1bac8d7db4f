#![allow(dead_code)]

use dmace::estimators::*;
use dmace::metrics::nmse;
use dmace::mnt::*;
use dmace::scenario::*;
use dmace::tensor::*;
use dmace::Result;

/// A seeded scenario with training and held-out measurements.
pub struct Problem {
    pub p: SystemParameters,
    pub train: MeasurementSet,
    pub test: MeasurementSet,
}

impl Problem {
    pub fn new(p: SystemParameters, train: Vec<DmaConfiguration>, q: usize, snr_db: Option<f64>, seed: u64) -> Self {
        let test_cfgs = sample_configs(p.n_m(), q, derive_seed(seed, &[77]), false);
        Self {
            train: measure(&p, &train, snr_db, derive_seed(seed, &[78])).unwrap(),
            test: measure(&p, &test_cfgs, snr_db, derive_seed(seed, &[79])).unwrap(),
            p,
        }
    }

    /// Training design drawn so that every system `ty` solves has full rank.
    pub fn screened(spec: &ScenarioSpec, ty: ProblemType, check: DesignCheck, k: usize, q: usize) -> Self {
        let p = generate_params(spec).unwrap();
        let train = screened_configs(ty, check, &p.coupling(), p.n_f(), p.n_u(), k, spec.seed, 10_000, DEFAULT_RANK_TOL)
            .unwrap();
        Self::new(p, train, q, spec.snr_db, spec.seed)
    }

    pub fn random(spec: &ScenarioSpec, k: usize, q: usize) -> Self {
        let p = generate_params(spec).unwrap();
        let train = sample_configs(p.n_m(), k, derive_seed(spec.seed, &[76]), false);
        Self::new(p, train, q, spec.snr_db, spec.seed)
    }

    pub fn known(&self, ty: ProblemType) -> KnownParams {
        KnownParams {
            h0: ty.knows_h0().then(|| self.p.h0.clone()),
            b: ty.knows_b().then(|| self.p.b.clone()),
        }
    }

    /// Runs `ty` on the training set, with the true `H0`/`B` when the type
    /// treats them as known, and optionally with the coupling ignored.
    pub fn estimate_with(&self, ty: ProblemType, model: &CouplingModel, cfg: &EstimatorConfig) -> Result<EstimationReport> {
        let n_f = self.p.n_f();
        let configs = &self.train.configs;
        let h = &self.train.h_meas;
        match ty {
            ProblemType::One | ProblemType::Three => {
                let st = build_omega_stack(model, configs, StackVariant::Augmented { n_f })?;
                if ty == ProblemType::One {
                    btals1(h, st.augmented()?, cfg)
                } else {
                    btals3(h, st.augmented()?, &self.p.b, cfg)
                }
            }
            _ => {
                let st = build_omega_stack(model, configs, StackVariant::Plain)?;
                let h_ring = subtract_offset(h, &self.p.h0)?;
                match ty {
                    ProblemType::Two => btals2(&h_ring, &st.plain, cfg),
                    ProblemType::Rbf => rbf(&h_ring, &st.plain, cfg),
                    _ => btals4(&h_ring, &st.plain, &self.p.b, cfg),
                }
            }
        }
    }

    pub fn estimate(&self, ty: ProblemType, cfg: &EstimatorConfig) -> Result<EstimationReport> {
        self.estimate_with(ty, &self.p.coupling(), cfg)
    }

    pub fn predict_on(&self, ty: ProblemType, report: &EstimationReport, model: &CouplingModel, configs: &[DmaConfiguration]) -> Tensor3 {
        let omega = build_omega_stack(model, configs, StackVariant::Plain).unwrap().plain;
        predict(report, &self.known(ty), &omega).unwrap()
    }

    /// NMSE of the estimate on the held-out set.
    pub fn test_nmse(&self, ty: ProblemType, report: &EstimationReport) -> f64 {
        let pred = self.predict_on(ty, report, &self.p.coupling(), &self.test.configs);
        nmse(&self.test.h_meas, &pred).unwrap()
    }
}

pub const ALL_TYPES: [ProblemType; 5] = [
    ProblemType::One,
    ProblemType::Two,
    ProblemType::Rbf,
    ProblemType::Three,
    ProblemType::Four,
];

pub fn is_non_increasing(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    relative_diff(a, b)
}
