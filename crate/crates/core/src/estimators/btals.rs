//! Block Tucker alternating least squares and its single-solve special cases.
//!
//! Type 1 writes `H_k = C T̄_k D` with `C = [H0, A]`, `T̄_k = blkdiag(I, Omega_k)`
//! and `D = [I; B]`. With `X_(n)` the mode-`n` unfolding,
//! `H_(1) = C unfold1(T̄ x2 D^T)` and `H_(2) = D^T unfold2(T̄ x1 C)`, so each
//! factor is one right pseudoinverse away given the other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_k, check_slices, EstimationReport, EstimatorConfig, InitMode, ProblemType, ReportFlags,
    Stopper,
};
use crate::error::{Error, Result};
use crate::scenario::gaussian_matrix;
use crate::tensor::{frobenius_sq, pinv, solve_right, CMat, CVec, Mode, Tensor3, C64, ONE, ZERO};

fn initial_b(cfg: &EstimatorConfig, start: usize, n_m: usize, n_f: usize) -> Result<CMat> {
    match &cfg.init {
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed.wrapping_add(start as u64));
            Ok(gaussian_matrix(&mut rng, n_m, n_f))
        }
        InitMode::Provided(b) if b.shape() == (n_m, n_f) => Ok(b.clone()),
        InitMode::Provided(b) => Err(Error::Shape(format!(
            "initial B must be {n_m}x{n_f}, got {:?}",
            b.shape()
        ))),
    }
}

fn stack_d(b: &CMat) -> CMat {
    let (n_m, n_f) = b.shape();
    let mut d = CMat::zeros(n_f + n_m, n_f);
    d.fill_diagonal(ONE);
    d.view_mut((n_f, 0), (n_m, n_f)).copy_from(b);
    d
}

fn check_b(b: &CMat, n_m: usize, n_f: usize) -> Result<()> {
    if b.shape() != (n_m, n_f) {
        return Err(Error::Shape(format!(
            "known B must be {n_m}x{n_f}, got {:?}",
            b.shape()
        )));
    }
    Ok(())
}

/// Splits the augmented core size into `N_M` and checks every slice is
/// `blkdiag(I_{N_F}, Omega_k)`.
fn augmented_n_m(h: &Tensor3, t_bar: &Tensor3) -> Result<usize> {
    let (_, n_f, _) = h.dims();
    let size = t_bar.dims().0;
    if size <= n_f {
        return Err(Error::Shape(format!(
            "augmented cores must be larger than N_F = {n_f}, got {size}"
        )));
    }
    check_slices(h, t_bar, size)?;
    for (k, s) in t_bar.slices().enumerate() {
        for c in 0..size {
            for r in 0..size {
                let expected = if r < n_f && c < n_f {
                    Some(if r == c { ONE } else { ZERO })
                } else if (r < n_f) != (c < n_f) {
                    Some(ZERO)
                } else {
                    None
                };
                if let Some(e) = expected {
                    if (s[(r, c)] - e).norm() > 1e-12 {
                        return Err(Error::Precondition(format!(
                            "core slice {k} is not blkdiag(I_{n_f}, Omega)"
                        )));
                    }
                }
            }
        }
    }
    Ok(size - n_f)
}

fn require_rank(context: &str, rank: usize, required: usize) -> Result<()> {
    if rank < required {
        return Err(Error::RankDeficient {
            context: context.into(),
            rank,
            required,
        });
    }
    Ok(())
}

/// One bilinear model `H_k = C T_k D` with known cores `T_k`.
struct Bilinear<'a> {
    h1: CMat,
    h2: CMat,
    cores: &'a Tensor3,
    rank_tol: f64,
    /// Rows of `D` pinned to the identity (BTALS-I).
    pinned: usize,
    left_context: &'static str,
    /// `None` means a rank-deficient `D` update is tolerated and only flagged.
    right_context: Option<&'static str>,
}

impl Bilinear<'_> {
    /// Best `C` for a given `D`, with the resulting squared residual.
    fn left(&self, d: &CMat) -> Result<(CMat, f64)> {
        let z1 = self.cores.mode_n_product(&d.transpose(), Mode::Two)?.unfold(Mode::One);
        let (c, rank) = solve_right(&self.h1, &z1, self.rank_tol)?;
        require_rank(self.left_context, rank, z1.nrows())?;
        let cost = frobenius_sq(&(&self.h1 - &c * &z1));
        Ok((c, cost))
    }

    /// Best `D` for a given `C`, then re-pin the identity block.
    fn right(&self, c: &CMat, flags: &mut ReportFlags) -> Result<CMat> {
        let z2 = self.cores.mode_n_product(c, Mode::One)?.unfold(Mode::Two);
        let (dt, rank) = solve_right(&self.h2, &z2, self.rank_tol)?;
        match self.right_context {
            Some(context) => require_rank(context, rank, z2.nrows())?,
            None => flags.rank_deficient_d_update |= rank < z2.nrows(),
        }
        let mut d = dt.transpose();
        d.rows_mut(0, self.pinned).fill_with_identity();
        Ok(d)
    }
}

impl Bilinear<'_> {
    /// Damped Gauss-Newton step on the free rows of `D` for the residual with
    /// `C` eliminated (Kaufman's approximation of the projected Jacobian).
    fn projected_step(&self, c: &CMat, d: &CMat, lambda: f64) -> Result<Option<CMat>> {
        let (size, n_f) = d.shape();
        let k = self.cores.dims().2;
        let z1 = self.cores.mode_n_product(&d.transpose(), Mode::Two)?.unfold(Mode::One);
        let z_pinv = pinv(&z1, self.rank_tol).matrix;
        let cols = n_f * k;
        let q = CMat::identity(cols, cols) - z_pinv * &z1;
        let residual = &self.h1 * &q;
        let y = self.cores.mode_n_product(c, Mode::One)?;
        let n_u = c.nrows();

        let free = size - self.pinned;
        let params = free * n_f;
        let mut g = CMat::zeros(n_u * cols, params);
        for j in 0..n_f {
            let q_j = CMat::from_fn(k, cols, |kk, col| q[(kk * n_f + j, col)]);
            for i in 0..free {
                let y_i = CMat::from_fn(n_u, k, |u, kk| y.get(u, self.pinned + i, kk));
                let block = y_i * &q_j;
                g.column_mut(j * free + i).copy_from_slice(block.as_slice());
            }
        }
        let r = CVec::from_column_slice(residual.as_slice());
        let mut normal = g.adjoint() * &g;
        let scale = (0..params).fold(0.0f64, |acc, p| acc.max(normal[(p, p)].re));
        if !(scale > 0.0) {
            return Ok(None);
        }
        for p in 0..params {
            normal[(p, p)] += C64::new(lambda * scale, 0.0);
        }
        let rhs = g.adjoint() * r;
        let Some(delta) = normal.cholesky().map(|ch| ch.solve(&rhs)) else {
            return Ok(None);
        };
        if delta.iter().any(|z| !z.is_finite()) {
            return Ok(None);
        }
        let mut next = d.clone();
        for j in 0..n_f {
            for i in 0..free {
                next[(self.pinned + i, j)] += delta[j * free + i];
            }
        }
        Ok(Some(next))
    }
}

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-15;
const LAMBDA_MAX: f64 = 1e8;

/// Alternates `C` and `D` updates from `d`. The recorded cost after each
/// iteration is the residual with `C` optimal for the current `D`, so the
/// trace is non-increasing. With `cfg.accelerate`, a damped Gauss-Newton
/// candidate for `D` competes with the alternating update and the better
/// of the two is kept.
fn alternate(
    model: &Bilinear<'_>,
    mut d: CMat,
    cfg: &EstimatorConfig,
    stopper: &mut Stopper,
    flags: &mut ReportFlags,
) -> Result<(CMat, CMat, bool)> {
    let (mut c, mut cost) = model.left(&d)?;
    let mut lambda = LAMBDA_START;
    loop {
        let d_plain = model.right(&c, flags)?;
        let (c_plain, cost_plain) = model.left(&d_plain)?;
        let mut next = (d_plain, c_plain, cost_plain);
        if cfg.accelerate {
            let candidate = match model.projected_step(&c, &d, lambda)? {
                Some(d_gn) => model.left(&d_gn).ok().map(|(c_gn, cost_gn)| (d_gn, c_gn, cost_gn)),
                None => None,
            };
            match candidate {
                Some(cand) if cand.2 < cost => {
                    lambda = (lambda / 3.0).max(LAMBDA_MIN);
                    if cand.2 < next.2 {
                        next = cand;
                    }
                }
                _ => lambda = (lambda * 4.0).min(LAMBDA_MAX),
            }
        }
        let prev = cost;
        (d, c, cost) = next;
        if let Some(converged) = stopper.record(cost, cost, Some(prev))? {
            return Ok((c, d, converged));
        }
    }
}

struct Run {
    c: CMat,
    d: CMat,
    converged: bool,
    trace: Vec<f64>,
    flags: ReportFlags,
}

/// Runs `alternate` from each configured start and keeps the lowest final cost.
/// A start whose first solve fails is skipped; if all fail the first error is returned.
fn multi_start(
    model: &Bilinear<'_>,
    cfg: &EstimatorConfig,
    energy: f64,
    n_m: usize,
    n_f: usize,
    lift: impl Fn(CMat) -> CMat,
) -> Result<Run> {
    let starts = match cfg.init {
        InitMode::Random => cfg.starts,
        InitMode::Provided(_) => 1,
    };
    let mut best: Option<Run> = None;
    let mut first_err = None;
    for start in 0..starts {
        let d0 = lift(initial_b(cfg, start, n_m, n_f)?);
        let mut flags = ReportFlags::default();
        let mut stopper = Stopper::new(cfg, energy);
        let floor = stopper.floor();
        match alternate(model, d0, cfg, &mut stopper, &mut flags) {
            Ok((c, d, converged)) => {
                let run = Run {
                    c,
                    d,
                    converged,
                    trace: stopper.trace,
                    flags,
                };
                let cost = *run.trace.last().expect("at least one iteration");
                if best.as_ref().is_none_or(|b| cost < *b.trace.last().expect("non-empty")) {
                    best = Some(run);
                }
                if cost <= floor {
                    break;
                }
            }
            Err(e @ Error::Divergence(_)) => return Err(e),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(run), _) => Ok(run),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start"),
    }
}

/// Type 1: joint estimation of `H0`, `A` and `B` from `H` and `T̄`.
pub fn btals1(h: &Tensor3, t_bar: &Tensor3, cfg: &EstimatorConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    let n_m = augmented_n_m(h, t_bar)?;
    let (n_u, n_f, k) = h.dims();
    let k_min = check_k(ProblemType::One, "BTALS-I", k, n_f, n_m, n_u)?;

    let model = Bilinear {
        h1: h.unfold(Mode::One),
        h2: h.unfold(Mode::Two),
        cores: t_bar,
        rank_tol: cfg.rank_tol,
        pinned: n_f,
        left_context: "BTALS-I update of [H0, A]",
        right_context: None,
    };
    let Run {
        c,
        d,
        converged,
        trace,
        flags,
    } = multi_start(&model, cfg, h.frobenius_sq(), n_m, n_f, |b| stack_d(&b))?;

    Ok(EstimationReport {
        problem: ProblemType::One,
        h0_hat: Some(c.columns(0, n_f).into_owned()),
        a_hat: Some(c.columns(n_f, n_m).into_owned()),
        b_hat: Some(d.rows(n_f, n_m).into_owned()),
        iterations_used: trace.len(),
        cost_trace: trace,
        converged,
        min_k_required: k_min,
        k_used: k,
        flags,
        zero_forcing_residual: None,
    })
}

/// Type 2: estimation of `A` and `B` from `H - H0` and the plain stack `T`.
pub fn btals2(h_ring: &Tensor3, t: &Tensor3, cfg: &EstimatorConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    let (n_u, n_f, k) = h_ring.dims();
    let n_m = t.dims().0;
    check_slices(h_ring, t, n_m)?;
    let k_min = check_k(ProblemType::Two, "BTALS-II", k, n_f, n_m, n_u)?;

    let model = Bilinear {
        h1: h_ring.unfold(Mode::One),
        h2: h_ring.unfold(Mode::Two),
        cores: t,
        rank_tol: cfg.rank_tol,
        pinned: 0,
        left_context: "BTALS-II update of A",
        right_context: Some("BTALS-II update of B"),
    };
    let Run {
        c: a,
        d: b,
        converged,
        trace,
        flags,
    } = multi_start(&model, cfg, h_ring.frobenius_sq(), n_m, n_f, |b| b)?;

    Ok(EstimationReport {
        problem: ProblemType::Two,
        h0_hat: None,
        a_hat: Some(a),
        b_hat: Some(b),
        iterations_used: trace.len(),
        cost_trace: trace,
        converged,
        min_k_required: k_min,
        k_used: k,
        flags,
        zero_forcing_residual: None,
    })
}

/// Type 3: one least-squares solve for `[H0, A]` with `B` known.
pub fn btals3(
    h: &Tensor3,
    t_bar: &Tensor3,
    b_known: &CMat,
    cfg: &EstimatorConfig,
) -> Result<EstimationReport> {
    cfg.validate()?;
    let n_m = augmented_n_m(h, t_bar)?;
    let (n_u, n_f, k) = h.dims();
    check_b(b_known, n_m, n_f)?;
    let k_min = check_k(ProblemType::Three, "BTALS-III", k, n_f, n_m, n_u)?;

    let h1 = h.unfold(Mode::One);
    let z1 = t_bar.mode_n_product(&stack_d(b_known).transpose(), Mode::Two)?.unfold(Mode::One);
    let (c, rank) = solve_right(&h1, &z1, cfg.rank_tol)?;
    require_rank("BTALS-III solve for [H0, A]", rank, n_f + n_m)?;
    let cost = frobenius_sq(&(&h1 - &c * &z1));
    let mut stopper = Stopper::new(cfg, h.frobenius_sq());
    stopper.record(cost, cost, None)?;

    Ok(EstimationReport {
        problem: ProblemType::Three,
        h0_hat: Some(c.columns(0, n_f).into_owned()),
        a_hat: Some(c.columns(n_f, n_m).into_owned()),
        b_hat: None,
        iterations_used: 1,
        cost_trace: stopper.trace,
        converged: true,
        min_k_required: k_min,
        k_used: k,
        flags: ReportFlags::default(),
        zero_forcing_residual: None,
    })
}

/// Type 4: one least-squares solve for `A` with `H0` and `B` known.
pub fn btals4(
    h_ring: &Tensor3,
    t: &Tensor3,
    b_known: &CMat,
    cfg: &EstimatorConfig,
) -> Result<EstimationReport> {
    cfg.validate()?;
    let (n_u, n_f, k) = h_ring.dims();
    let n_m = t.dims().0;
    check_slices(h_ring, t, n_m)?;
    check_b(b_known, n_m, n_f)?;
    let k_min = check_k(ProblemType::Four, "BTALS-IV", k, n_f, n_m, n_u)?;

    let h1 = h_ring.unfold(Mode::One);
    let z = t.mode_n_product(&b_known.transpose(), Mode::Two)?.unfold(Mode::One);
    let (a, rank) = solve_right(&h1, &z, cfg.rank_tol)?;
    require_rank("BTALS-IV solve for A", rank, n_m)?;
    let cost = frobenius_sq(&(&h1 - &a * &z));
    let mut stopper = Stopper::new(cfg, h_ring.frobenius_sq());
    stopper.record(cost, cost, None)?;

    Ok(EstimationReport {
        problem: ProblemType::Four,
        h0_hat: None,
        a_hat: Some(a),
        b_hat: None,
        iterations_used: 1,
        cost_trace: stopper.trace,
        converged: true,
        min_k_required: k_min,
        k_used: k,
        flags: ReportFlags::default(),
        zero_forcing_residual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_d_has_identity_on_top() {
        let b = CMat::from_element(3, 2, ONE * 2.0);
        let d = stack_d(&b);
        assert_eq!(d.shape(), (5, 2));
        assert_eq!(d.rows(0, 2).into_owned(), CMat::identity(2, 2));
        assert_eq!(d.rows(2, 3).into_owned(), b);
    }

    #[test]
    fn plain_stack_is_rejected_as_augmented() {
        let h = Tensor3::zeros((2, 2, 3));
        let t = Tensor3::from_slices(&vec![CMat::from_element(4, 4, ONE); 3]).unwrap();
        assert!(matches!(
            btals1(&h, &t, &EstimatorConfig::default()),
            Err(Error::Precondition(_))
        ));
    }
}
