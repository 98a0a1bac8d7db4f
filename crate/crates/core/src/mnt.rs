//! Multiport-network forward model of a DMA with mutually coupled,
//! 1-bit-programmable meta-elements.
//!
//! ```text
//! r(v)  = alpha * 1 + (beta - alpha) * v
//! Omega = (I - diag(r) Gamma)^-1 diag(r)
//! H(v)  = H0 + A Omega B
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{frobenius_sq, CMat, CVec, Tensor3, C64, ONE};

/// Condition-number ceiling for `I - Phi Gamma`.
pub const COND_GUARD: f64 = 1e8;

/// Binary control vector `v`. Serializes as a bitstring.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DmaConfiguration(Vec<bool>);

impl From<DmaConfiguration> for String {
    fn from(v: DmaConfiguration) -> String {
        v.to_bitstring()
    }
}

impl TryFrom<String> for DmaConfiguration {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::from_bitstring(&s)
    }
}

impl DmaConfiguration {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(n_m: usize) -> Self {
        Self(vec![false; n_m])
    }

    pub fn ones(n_m: usize) -> Self {
        Self(vec![true; n_m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// `"0110..."`.
    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "configuration bits must be 0 or 1, found {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

/// Per-element load reflection coefficients `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadVector(pub CVec);

pub fn encode(v: &DmaConfiguration, alpha: C64, beta: C64) -> LoadVector {
    LoadVector(CVec::from_iterator(
        v.len(),
        v.bits().iter().map(|&b| if b { beta } else { alpha }),
    ))
}

/// The part of the model that is known to every estimator: load states and
/// mutual coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingModel {
    pub gamma: CMat,
    pub alpha: C64,
    pub beta: C64,
}

impl CouplingModel {
    pub fn n_m(&self) -> usize {
        self.gamma.nrows()
    }

    /// Same loads with `Gamma = 0`: the MC-unaware benchmark.
    pub fn without_coupling(&self) -> Self {
        Self {
            gamma: CMat::zeros(self.n_m(), self.n_m()),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn omega(&self, v: &DmaConfiguration) -> Result<CMat> {
        omega(&encode(v, self.alpha, self.beta), &self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParameters {
    /// Direct feed-to-user channel, `N_U x N_F`.
    pub h0: CMat,
    /// Element-to-user channel, `N_U x N_M`.
    pub a: CMat,
    /// Mutual coupling among the tunable elements, `N_M x N_M`, symmetric.
    pub gamma: CMat,
    /// Feed-to-element channel, `N_M x N_F`.
    pub b: CMat,
    pub alpha: C64,
    pub beta: C64,
}

impl SystemParameters {
    pub fn n_u(&self) -> usize {
        self.h0.nrows()
    }

    pub fn n_f(&self) -> usize {
        self.h0.ncols()
    }

    pub fn n_m(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn coupling(&self) -> CouplingModel {
        CouplingModel {
            gamma: self.gamma.clone(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n_u, n_f, n_m) = (self.n_u(), self.n_f(), self.n_m());
        if n_u == 0 || n_f == 0 || n_m == 0 {
            return Err(Error::Shape("all dimensions must be positive".into()));
        }
        if self.gamma.ncols() != n_m {
            return Err(Error::Shape("Gamma must be square".into()));
        }
        if self.a.shape() != (n_u, n_m) {
            return Err(Error::Shape(format!(
                "A must be {n_u}x{n_m}, got {:?}",
                self.a.shape()
            )));
        }
        if self.b.shape() != (n_m, n_f) {
            return Err(Error::Shape(format!(
                "B must be {n_m}x{n_f}, got {:?}",
                self.b.shape()
            )));
        }
        let asym = frobenius_sq(&(&self.gamma - self.gamma.transpose())).sqrt();
        let scale = frobenius_sq(&self.gamma).sqrt().max(1.0);
        if asym / scale > 1e-12 {
            return Err(Error::Precondition(format!(
                "Gamma is not symmetric (relative asymmetry {:.3e})",
                asym / scale
            )));
        }
        Ok(())
    }

    /// Rejects parameter sets where either uniform configuration makes
    /// `I - Phi Gamma` ill-conditioned.
    pub fn check_admissible(&self) -> Result<()> {
        let n_m = self.n_m();
        for v in [DmaConfiguration::zeros(n_m), DmaConfiguration::ones(n_m)] {
            let (_, cond) = omega_with_condition(&encode(&v, self.alpha, self.beta), &self.gamma)?;
            if cond > COND_GUARD {
                return Err(Error::Singular { cond, config: None });
            }
        }
        Ok(())
    }

    /// Keep only the listed feeds (columns of `H0` and `B`).
    pub fn restrict_feeds(&self, feeds: &[usize]) -> Result<Self> {
        if let Some(&bad) = feeds.iter().find(|&&f| f >= self.n_f()) {
            return Err(Error::InvalidArgument(format!(
                "feed index {bad} out of range for {} feeds",
                self.n_f()
            )));
        }
        Ok(Self {
            h0: self.h0.select_columns(feeds),
            a: self.a.clone(),
            gamma: self.gamma.clone(),
            b: self.b.select_columns(feeds),
            alpha: self.alpha,
            beta: self.beta,
        })
    }
}

/// `Omega = (I - diag(r) Gamma)^-1 diag(r)`.
pub fn omega(r: &LoadVector, gamma: &CMat) -> Result<CMat> {
    let (om, cond) = omega_with_condition(r, gamma)?;
    if cond > COND_GUARD {
        return Err(Error::Singular { cond, config: None });
    }
    Ok(om)
}

/// [`omega`] plus the 1-norm condition number of `I - diag(r) Gamma`.
pub fn omega_with_condition(r: &LoadVector, gamma: &CMat) -> Result<(CMat, f64)> {
    let n = gamma.nrows();
    if gamma.ncols() != n || r.0.len() != n {
        return Err(Error::Shape(format!(
            "load vector of length {} incompatible with Gamma {:?}",
            r.0.len(),
            gamma.shape()
        )));
    }
    let mut m = -gamma.clone();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= r.0[i];
    }
    for i in 0..n {
        m[(i, i)] += ONE;
    }
    let inv = m.clone().try_inverse().ok_or(Error::Singular {
        cond: f64::INFINITY,
        config: None,
    })?;
    let cond = norm1(&m) * norm1(&inv);
    if !cond.is_finite() {
        return Err(Error::Singular { cond, config: None });
    }
    let mut om = inv;
    for (j, mut col) in om.column_iter_mut().enumerate() {
        col *= r.0[j];
    }
    Ok((om, cond))
}

fn norm1(m: &CMat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `H(v) = H0 + A Omega(r(v)) B`.
pub fn end_to_end(p: &SystemParameters, v: &DmaConfiguration) -> Result<CMat> {
    let om = omega(&encode(v, p.alpha, p.beta), &p.gamma)?;
    Ok(&p.h0 + &p.a * om * &p.b)
}

/// MC-unaware benchmark `H0 + A diag(r) B`.
pub fn end_to_end_no_mc(p: &SystemParameters, v: &DmaConfiguration) -> CMat {
    let r = encode(v, p.alpha, p.beta);
    let mut ar = p.a.clone();
    for (j, mut col) in ar.column_iter_mut().enumerate() {
        col *= r.0[j];
    }
    &p.h0 + ar * &p.b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StackVariant {
    /// Only `T = [Omega_1 ... Omega_K]`.
    Plain,
    /// Also `T_bar` with slices `blkdiag(I_{N_F}, Omega_k)`.
    Augmented { n_f: usize },
}

#[derive(Clone, Debug)]
pub struct OmegaStacks {
    pub plain: Tensor3,
    pub augmented: Option<Tensor3>,
}

impl OmegaStacks {
    pub fn augmented(&self) -> Result<&Tensor3> {
        self.augmented
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("augmented stack was not requested".into()))
    }
}

pub fn build_omega_stack(
    model: &CouplingModel,
    configs: &[DmaConfiguration],
    variant: StackVariant,
) -> Result<OmegaStacks> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("need at least one configuration".into()));
    }
    if let Some(k) = configs.iter().position(|v| v.len() != model.n_m()) {
        return Err(Error::Shape(format!(
            "configuration {k} has {} bits, expected {}",
            configs[k].len(),
            model.n_m()
        )));
    }
    let slices = configs
        .par_iter()
        .enumerate()
        .map(|(k, v)| model.omega(v).map_err(|e| e.at_config(k)))
        .collect::<Result<Vec<_>>>()?;
    let augmented = match variant {
        StackVariant::Plain => None,
        StackVariant::Augmented { n_f } => {
            let aug: Vec<CMat> = slices.iter().map(|om| augment(om, n_f)).collect();
            Some(Tensor3::from_slices(&aug)?)
        }
    };
    Ok(OmegaStacks {
        plain: Tensor3::from_slices(&slices)?,
        augmented,
    })
}

/// `blkdiag(I_{n_f}, omega)`.
pub fn augment(omega: &CMat, n_f: usize) -> CMat {
    let n_m = omega.nrows();
    let mut out = CMat::zeros(n_f + n_m, n_f + n_m);
    for i in 0..n_f {
        out[(i, i)] = ONE;
    }
    out.view_mut((n_f, n_f), (n_m, n_m)).copy_from(omega);
    out
}

/// Scattering matrix of the static N-port network, with port index sets for
/// feeds (F), tunable elements (M) and users (U).
#[derive(Clone, Debug)]
pub struct ScatteringMatrix {
    pub s: CMat,
    pub feeds: Vec<usize>,
    pub elements: Vec<usize>,
    pub users: Vec<usize>,
}

impl ScatteringMatrix {
    pub fn new(s: CMat, feeds: Vec<usize>, elements: Vec<usize>, users: Vec<usize>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(Error::Shape("scattering matrix must be square".into()));
        }
        let mut seen = vec![false; n];
        for &idx in feeds.iter().chain(&elements).chain(&users) {
            if idx >= n || seen[idx] {
                return Err(Error::InvalidArgument(format!(
                    "port index {idx} is out of range or listed twice"
                )));
            }
            seen[idx] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidArgument(
                "port index sets must cover every port".into(),
            ));
        }
        Ok(Self {
            s,
            feeds,
            elements,
            users,
        })
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> CMat {
        CMat::from_fn(rows.len(), cols.len(), |i, j| self.s[(rows[i], cols[j])])
    }

    /// `H0 = S_UF`, `A = S_UM`, `Gamma = S_MM`, `B = S_MF`.
    pub fn system_parameters(&self, alpha: C64, beta: C64) -> SystemParameters {
        SystemParameters {
            h0: self.block(&self.users, &self.feeds),
            a: self.block(&self.users, &self.elements),
            gamma: self.block(&self.elements, &self.elements),
            b: self.block(&self.elements, &self.feeds),
            alpha,
            beta,
        }
    }
}

/// Effective coupling seen by the elements when the `open_feeds` are
/// terminated in open circuits (reflection coefficient +1):
/// `S_MM + S_M,oc (I - S_oc,oc)^-1 S_oc,M`.
pub fn reduce_open_ports(
    s: &ScatteringMatrix,
    active_feeds: &[usize],
    open_feeds: &[usize],
) -> Result<CMat> {
    let mut covered: Vec<usize> = active_feeds.iter().chain(open_feeds).copied().collect();
    covered.sort_unstable();
    let mut feeds = s.feeds.clone();
    feeds.sort_unstable();
    if covered != feeds {
        return Err(Error::InvalidArgument(
            "active and open feeds must partition the feed ports".into(),
        ));
    }
    let s_mm = s.block(&s.elements, &s.elements);
    if open_feeds.is_empty() {
        return Ok(s_mm);
    }
    let s_m_oc = s.block(&s.elements, open_feeds);
    let s_oc_m = s.block(open_feeds, &s.elements);
    let mut core = -s.block(open_feeds, open_feeds);
    for i in 0..open_feeds.len() {
        core[(i, i)] += ONE;
    }
    let inv = core.clone().try_inverse().ok_or(Error::Singular {
        cond: f64::INFINITY,
        config: None,
    })?;
    let cond = norm1(&core) * norm1(&inv);
    if !cond.is_finite() || cond > COND_GUARD {
        return Err(Error::Singular { cond, config: None });
    }
    Ok(s_mm + s_m_oc * inv * s_oc_m)
}
