//! Synthetic ground truth, simulated measurements and the dataset file.
//!
//! Every random draw comes from a ChaCha stream keyed by an explicit seed, so
//! all outputs are pure functions of `(spec, seeds)`.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnt::{end_to_end, CouplingModel, DmaConfiguration, SystemParameters};
use crate::serial::{complex, json_error, pair, ComplexPair, MatrixRecord};
use crate::tensor::{spectral_norm, CMat, Tensor3, C64, ZERO};

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_f: usize,
    pub n_m: usize,
    pub n_u: usize,
    /// Target `||Gamma||_2 * max(|alpha|, |beta|)`, in `[0, 1)`.
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// `None` means noiseless measurements.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: ComplexPair,
    #[serde(default = "default_beta")]
    pub beta: ComplexPair,
}

fn default_coupling() -> f64 {
    0.8
}

fn default_alpha() -> ComplexPair {
    [0.0, 0.0]
}

fn default_beta() -> ComplexPair {
    [1.0, 0.0]
}

impl ScenarioSpec {
    pub fn new(n_f: usize, n_m: usize, n_u: usize) -> Self {
        Self {
            n_f,
            n_m,
            n_u,
            coupling: default_coupling(),
            snr_db: None,
            seed: 0,
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_snr_db(mut self, snr_db: Option<f64>) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn alpha(&self) -> C64 {
        complex(self.alpha)
    }

    pub fn beta(&self) -> C64 {
        complex(self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 || self.n_m == 0 || self.n_u == 0 {
            return Err(Error::InvalidArgument(
                "n_f, n_m and n_u must all be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.coupling) {
            return Err(Error::InvalidArgument(format!(
                "coupling must lie in [0, 1), got {}",
                self.coupling
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidArgument("snr_db must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn generate_params(spec: &ScenarioSpec) -> Result<SystemParameters> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h0 = gaussian_matrix(&mut rng, spec.n_u, spec.n_f);
    let a = gaussian_matrix(&mut rng, spec.n_u, spec.n_m);
    let b = gaussian_matrix(&mut rng, spec.n_m, spec.n_f);
    let g = gaussian_matrix(&mut rng, spec.n_m, spec.n_m);

    let (alpha, beta) = (spec.alpha(), spec.beta());
    let load_max = alpha.norm().max(beta.norm());
    let gamma = if spec.coupling == 0.0 || load_max == 0.0 {
        CMat::zeros(spec.n_m, spec.n_m)
    } else {
        let sym = (&g + g.transpose()) * C64::new(0.5, 0.0);
        let norm = spectral_norm(&sym);
        sym * C64::new(spec.coupling / (norm * load_max), 0.0)
    };
    let p = SystemParameters {
        h0,
        a,
        gamma,
        b,
        alpha,
        beta,
    };
    p.check_admissible()?;
    Ok(p)
}

/// `k` uniformly random configurations, distinct whenever `k <= 2^n_m`. With
/// `with_reference` the first one is the all-off configuration.
pub fn sample_configs(n_m: usize, k: usize, seed: u64, with_reference: bool) -> Vec<DmaConfiguration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = n_m < 64 && (k as u128) <= (1u128 << n_m);
    let mut seen = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    if with_reference && k > 0 {
        let reference = DmaConfiguration::zeros(n_m);
        seen.insert(reference.clone());
        out.push(reference);
    }
    while out.len() < k {
        let v = DmaConfiguration::new((0..n_m).map(|_| rng.random::<bool>()).collect());
        if !distinct || seen.insert(v.clone()) {
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub configs: Vec<DmaConfiguration>,
    /// `N_U x N_F x K`.
    pub h_meas: Tensor3,
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    pub scenario_ref: String,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Measurements `range.start..range.end`, as a new set.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<MeasurementSet> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "measurement range {range:?} outside 0..{}",
                self.len()
            )));
        }
        let slices: Vec<CMat> = range.clone().map(|k| self.h_meas.frontal_slice(k)).collect();
        Ok(MeasurementSet {
            configs: self.configs[range].to_vec(),
            h_meas: Tensor3::from_slices(&slices)?,
            snr_db: self.snr_db,
            noise_seed: self.noise_seed,
            scenario_ref: self.scenario_ref.clone(),
        })
    }
}

/// Forward model plus white complex Gaussian noise. The noise variance is set
/// from the total energy of the noiseless set so that the global SNR matches
/// `snr_db` in expectation. Slice `k` draws from stream `k` of the noise seed.
pub fn measure(
    p: &SystemParameters,
    configs: &[DmaConfiguration],
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("need at least one configuration".into()));
    }
    let clean = configs
        .par_iter()
        .enumerate()
        .map(|(k, v)| end_to_end(p, v).map_err(|e| e.at_config(k)))
        .collect::<Result<Vec<_>>>()?;
    let slices = match snr_db {
        None => clean,
        Some(snr) => {
            let energy: f64 = clean.iter().map(crate::tensor::frobenius_sq).sum();
            let count = (clean.len() * p.n_u() * p.n_f()) as f64;
            let sigma = (energy / count / 10f64.powf(snr / 10.0)).sqrt();
            clean
                .into_par_iter()
                .enumerate()
                .map(|(k, h)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
                    rng.set_stream(k as u64);
                    h.map(|z| z + complex_gaussian(&mut rng) * sigma)
                })
                .collect()
        }
    };
    Ok(MeasurementSet {
        configs: configs.to_vec(),
        h_meas: Tensor3::from_slices(&slices)?,
        snr_db,
        noise_seed,
        scenario_ref: String::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub scenario: u64,
    pub configs: u64,
    pub noise: u64,
}

/// Everything written by `generate`: the known coupling model, the measured
/// channels (reference, training, then held-out test configurations) and,
/// optionally, the ground truth for evaluation-only diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub coupling: CouplingModel,
    /// Feed channel treated as known by the Type-3/4 estimators.
    pub known_b: Option<CMat>,
    pub measurements: MeasurementSet,
    /// Whether measurement 0 is the all-zeros reference configuration.
    pub has_reference: bool,
    pub train_count: usize,
    pub seeds: Seeds,
    pub ground_truth: Option<SystemParameters>,
}

impl Dataset {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let (n_u, n_f, k) = self.measurements.h_meas.dims();
        (n_u, n_f, self.coupling.n_m(), k)
    }

    fn train_start(&self) -> usize {
        usize::from(self.has_reference)
    }

    /// First `k` training measurements (all of them when `k` is `None`).
    pub fn training(&self, k: Option<usize>) -> Result<MeasurementSet> {
        let k = k.unwrap_or(self.train_count);
        if k > self.train_count {
            return Err(Error::Identifiability {
                estimator: "dataset",
                k: self.train_count,
                k_min: k,
                bound: "requested training size exceeds the training measurements in the dataset",
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("training size must be >= 1".into()));
        }
        let start = self.train_start();
        self.measurements.select(start..start + k)
    }

    pub fn test_count(&self) -> usize {
        self.measurements.len() - self.train_start() - self.train_count
    }

    /// First `q` held-out measurements (all of them when `q` is `None`).
    pub fn test(&self, q: Option<usize>) -> Result<MeasurementSet> {
        let avail = self.test_count();
        let q = q.unwrap_or(avail);
        if q == 0 || q > avail {
            return Err(Error::InvalidArgument(format!(
                "requested {q} test configurations but the dataset holds {avail}"
            )));
        }
        let start = self.train_start() + self.train_count;
        self.measurements.select(start..start + q)
    }

    /// Known `H0` as measured for the reference configuration. Exact only when
    /// `alpha = 0`; otherwise falls back to embedded ground truth.
    pub fn known_h0(&self) -> Result<CMat> {
        if self.has_reference && self.coupling.alpha == ZERO {
            return Ok(self.measurements.h_meas.frontal_slice(0));
        }
        self.ground_truth
            .as_ref()
            .map(|p| p.h0.clone())
            .ok_or_else(|| {
                Error::MissingParameter(
                    "known H0 needs a reference measurement with alpha = 0 or embedded ground truth"
                        .into(),
                )
            })
    }

    /// The same dataset seen through the listed feeds only.
    pub fn restrict_feeds(&self, feeds: &[usize]) -> Result<Dataset> {
        let n_f = self.dims().1;
        if feeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one feed".into()));
        }
        if let Some(&bad) = feeds.iter().find(|&&f| f >= n_f) {
            return Err(Error::InvalidArgument(format!(
                "feed index {bad} out of range for {n_f} feeds"
            )));
        }
        let slices: Vec<CMat> = self
            .measurements
            .h_meas
            .slices()
            .map(|s| s.select_columns(feeds))
            .collect();
        let mut measurements = self.measurements.clone();
        measurements.h_meas = Tensor3::from_slices(&slices)?;
        Ok(Dataset {
            coupling: self.coupling.clone(),
            known_b: self.known_b.as_ref().map(|b| b.select_columns(feeds)),
            measurements,
            has_reference: self.has_reference,
            train_count: self.train_count,
            seeds: self.seeds,
            ground_truth: self.ground_truth.as_ref().map(|p| p.restrict_feeds(feeds)).transpose()?,
        })
    }

    pub fn known_b(&self) -> Result<CMat> {
        self.known_b
            .clone()
            .ok_or_else(|| Error::MissingParameter("dataset has no known feed channel B".into()))
    }
}

/// Generates parameters, `train_count` training and `test_count` held-out
/// configurations plus a reference measurement, and measures all of them.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    train_count: usize,
    test_count: usize,
    include_ground_truth: bool,
) -> Result<Dataset> {
    let p = generate_params(spec)?;
    let seeds = Seeds {
        scenario: spec.seed,
        configs: derive_seed(spec.seed, &[1]),
        noise: derive_seed(spec.seed, &[2]),
    };
    let configs = sample_configs(spec.n_m, 1 + train_count + test_count, seeds.configs, true);
    let mut ms = measure(&p, &configs, spec.snr_db, seeds.noise)?;
    ms.scenario_ref = format!(
        "nf{}-nm{}-nu{}-c{}-seed{}",
        spec.n_f, spec.n_m, spec.n_u, spec.coupling, spec.seed
    );
    Ok(Dataset {
        coupling: p.coupling(),
        known_b: Some(p.b.clone()),
        measurements: ms,
        has_reference: true,
        train_count,
        seeds,
        ground_truth: include_ground_truth.then_some(p),
    })
}

/// SplitMix64-style mixing of a master seed with integer coordinates.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut x = master ^ 0x9E37_79B9_7F4A_7C15;
    for &c in coords {
        x = splitmix(x.wrapping_add(c.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    }
    splitmix(x)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// On-disk layout.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    version: u32,
    dims: DimsRecord,
    alpha: ComplexPair,
    beta: ComplexPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<MatrixRecord>,
    known_b: Option<MatrixRecord>,
    has_reference: bool,
    train_count: usize,
    configs: Vec<String>,
    h_meas: Vec<MatrixRecord>,
    snr_db: Option<f64>,
    seeds: Seeds,
    scenario_ref: String,
    ground_truth: Option<GroundTruthRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsRecord {
    n_u: usize,
    n_f: usize,
    n_m: usize,
    k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRecord {
    h0: MatrixRecord,
    a: MatrixRecord,
    b: MatrixRecord,
    gamma: MatrixRecord,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

const FORMAT_TAG: &str = "dmace-dataset";

pub fn dataset_to_json(ds: &Dataset) -> String {
    let (n_u, n_f, n_m, k) = ds.dims();
    let gamma_is_zero = ds.coupling.gamma.iter().all(|z| *z == ZERO);
    let file = DatasetFile {
        format: FORMAT_TAG.into(),
        version: DATASET_VERSION,
        dims: DimsRecord { n_u, n_f, n_m, k },
        alpha: pair(ds.coupling.alpha),
        beta: pair(ds.coupling.beta),
        gamma: (!gamma_is_zero).then(|| MatrixRecord::from(&ds.coupling.gamma)),
        known_b: ds.known_b.as_ref().map(MatrixRecord::from),
        has_reference: ds.has_reference,
        train_count: ds.train_count,
        configs: ds
            .measurements
            .configs
            .iter()
            .map(DmaConfiguration::to_bitstring)
            .collect(),
        h_meas: ds
            .measurements
            .h_meas
            .slices()
            .map(|s| MatrixRecord::from(&s))
            .collect(),
        snr_db: ds.measurements.snr_db,
        seeds: ds.seeds,
        scenario_ref: ds.measurements.scenario_ref.clone(),
        ground_truth: ds.ground_truth.as_ref().map(|p| GroundTruthRecord {
            h0: (&p.h0).into(),
            a: (&p.a).into(),
            b: (&p.b).into(),
            gamma: (&p.gamma).into(),
        }),
    };
    serde_json::to_string_pretty(&file).expect("dataset serialization is infallible")
}

pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
    if probe.version != DATASET_VERSION {
        return Err(Error::Version {
            found: probe.version,
            expected: DATASET_VERSION,
        });
    }
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Parse {
            offset: 0,
            message: format!("unexpected format tag {:?}", file.format),
        });
    }
    let DimsRecord { n_u, n_f, n_m, k } = file.dims;
    let gamma = match &file.gamma {
        Some(g) => g.to_matrix()?,
        None => CMat::zeros(n_m, n_m),
    };
    if gamma.shape() != (n_m, n_m) {
        return Err(Error::Shape("gamma does not match dims.n_m".into()));
    }
    if file.configs.len() != k || file.h_meas.len() != k {
        return Err(Error::Shape(format!(
            "dims.k = {k} but found {} configs and {} measurements",
            file.configs.len(),
            file.h_meas.len()
        )));
    }
    let configs = file
        .configs
        .iter()
        .map(|s| DmaConfiguration::from_bitstring(s))
        .collect::<Result<Vec<_>>>()?;
    if configs.iter().any(|v| v.len() != n_m) {
        return Err(Error::Shape(format!("every configuration must have {n_m} bits")));
    }
    let slices = file
        .h_meas
        .iter()
        .map(MatrixRecord::to_matrix)
        .collect::<Result<Vec<_>>>()?;
    if slices.iter().any(|s| s.shape() != (n_u, n_f)) {
        return Err(Error::Shape(format!("every measurement must be {n_u}x{n_f}")));
    }
    if usize::from(file.has_reference) + file.train_count > k {
        return Err(Error::Shape("train_count exceeds the number of measurements".into()));
    }
    let known_b = file.known_b.as_ref().map(MatrixRecord::to_matrix).transpose()?;
    if let Some(b) = &known_b {
        if b.shape() != (n_m, n_f) {
            return Err(Error::Shape("known_b must be n_m x n_f".into()));
        }
    }
    let (alpha, beta) = (complex(file.alpha), complex(file.beta));
    let ground_truth = match &file.ground_truth {
        None => None,
        Some(g) => {
            let p = SystemParameters {
                h0: g.h0.to_matrix()?,
                a: g.a.to_matrix()?,
                gamma: g.gamma.to_matrix()?,
                b: g.b.to_matrix()?,
                alpha,
                beta,
            };
            p.validate()?;
            Some(p)
        }
    };
    Ok(Dataset {
        coupling: CouplingModel { gamma, alpha, beta },
        known_b,
        measurements: MeasurementSet {
            configs,
            h_meas: Tensor3::from_slices(&slices)?,
            snr_db: file.snr_db,
            noise_seed: file.seeds.noise,
            scenario_ref: file.scenario_ref,
        },
        has_reference: file.has_reference,
        train_count: file.train_count,
        seeds: file.seeds,
        ground_truth,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_json(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_json(&text)
}

/// Realized `10 log10(signal / noise)` of a noisy set against its clean counterpart.
pub fn empirical_snr_db(clean: &Tensor3, noisy: &Tensor3) -> f64 {
    let noise: f64 = clean
        .data()
        .iter()
        .zip(noisy.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    10.0 * (clean.frobenius_sq() / noise).log10()
}
