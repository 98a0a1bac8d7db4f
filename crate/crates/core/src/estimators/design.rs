//! Training-configuration screening.
//!
//! `K >= K_min` is only necessary. A random set of binary configurations can
//! still leave an element's contribution unobservable (e.g. an element that
//! never changes state is indistinguishable from `H0`). Since the coupling
//! model is known before measuring, the rank conditions the estimators check
//! can be tested up front, with seeded generic matrices standing in for the
//! unknown factors. For the bilinear types the Jacobian of the forward map is
//! also checked: beyond the scalar `(g A, B / g)` it must have no null space,
//! otherwise a training set can be fitted exactly by wrong channels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rbf::core_matrix;
use super::ProblemType;
use crate::error::{Error, Result};
use crate::mnt::{build_omega_stack, CouplingModel, DmaConfiguration, StackVariant};
use crate::scenario::{derive_seed, gaussian_matrix, sample_configs};
use crate::tensor::{pinv, CMat, Mode, Tensor3, ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignCheck {
    /// Every least-squares system the estimator solves has full rank.
    Solvable,
    /// Additionally, the bilinear types have only the scalar ambiguity locally.
    Identifiable,
}

/// Numerical rank and required rank of the most deficient system `ty` meets
/// for the design `configs`, with generic factors.
pub fn design_rank(
    ty: ProblemType,
    check: DesignCheck,
    model: &CouplingModel,
    configs: &[DmaConfiguration],
    n_f: usize,
    n_u: usize,
    rank_tol: f64,
) -> Result<(usize, usize)> {
    let n_m = model.n_m();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let b = gaussian_matrix(&mut rng, n_m, n_f);
    let a = gaussian_matrix(&mut rng, n_u, n_m);
    let rank_of = |z: &CMat| pinv(z, rank_tol).rank;
    let worst = |x: (usize, usize), y: (usize, usize)| {
        if y.1.saturating_sub(y.0) > x.1.saturating_sub(x.0) {
            y
        } else {
            x
        }
    };
    Ok(match ty {
        ProblemType::One | ProblemType::Three => {
            let stacks = build_omega_stack(model, configs, StackVariant::Augmented { n_f })?;
            let mut d = CMat::zeros(n_f + n_m, n_f);
            d.fill_diagonal(ONE);
            d.view_mut((n_f, 0), (n_m, n_f)).copy_from(&b);
            let z1 = stacks
                .augmented()?
                .mode_n_product(&d.transpose(), Mode::Two)?
                .unfold(Mode::One);
            let left = (rank_of(&z1), n_f + n_m);
            if ty == ProblemType::One && check == DesignCheck::Identifiable {
                let t = &stacks.plain;
                worst(left, jacobian_rank(&a, &b, t, true, rank_tol)?)
            } else {
                left
            }
        }
        ProblemType::Two | ProblemType::Four => {
            let t = build_omega_stack(model, configs, StackVariant::Plain)?.plain;
            let z1 = t.mode_n_product(&b.transpose(), Mode::Two)?.unfold(Mode::One);
            let left = (rank_of(&z1), n_m);
            if ty == ProblemType::Two {
                let z2 = t.mode_n_product(&a, Mode::One)?.unfold(Mode::Two);
                let both = worst(left, (rank_of(&z2), n_m));
                match check {
                    DesignCheck::Solvable => both,
                    DesignCheck::Identifiable => worst(both, jacobian_rank(&a, &b, &t, false, rank_tol)?),
                }
            } else {
                left
            }
        }
        ProblemType::Rbf => {
            let t = build_omega_stack(model, configs, StackVariant::Plain)?.plain;
            let (s_bar, live) = core_matrix(&t)?;
            (rank_of(&s_bar), live.iter().filter(|&&l| l).count())
        }
    })
}

/// Rank of the Jacobian of `(H0, A, B) -> [H0 + A Omega_k B]_k` (without `H0`
/// unless `with_h0`) and the rank it needs, i.e. parameter count minus one.
fn jacobian_rank(a: &CMat, b: &CMat, t: &Tensor3, with_h0: bool, rank_tol: f64) -> Result<(usize, usize)> {
    let (n_u, n_m) = a.shape();
    let n_f = b.ncols();
    let k = t.dims().2;
    let block = n_u * n_f;
    let params = n_u * n_m + n_m * n_f + if with_h0 { block } else { 0 };
    let mut jac = CMat::zeros(k * block, params);
    for (kk, om) in t.slices().enumerate() {
        let ob = &om * b;
        let ao = a * &om;
        let rows = kk * block;
        let mut col = 0;
        for m in 0..n_m {
            for u in 0..n_u {
                for f in 0..n_f {
                    jac[(rows + f * n_u + u, col)] = ob[(m, f)];
                }
                col += 1;
            }
        }
        for f in 0..n_f {
            for m in 0..n_m {
                for u in 0..n_u {
                    jac[(rows + f * n_u + u, col)] = ao[(u, m)];
                }
                col += 1;
            }
        }
        if with_h0 {
            for i in 0..block {
                jac[(rows + i, col + i)] = ONE;
            }
        }
    }
    Ok((pinv(&jac, rank_tol).rank, params - 1))
}

/// Draws up to `max_draws` random sets of `k` distinct configurations and
/// returns the first one that passes `check` for `ty`.
#[allow(clippy::too_many_arguments)]
pub fn screened_configs(
    ty: ProblemType,
    check: DesignCheck,
    model: &CouplingModel,
    n_f: usize,
    n_u: usize,
    k: usize,
    seed: u64,
    max_draws: usize,
    rank_tol: f64,
) -> Result<Vec<DmaConfiguration>> {
    let mut best = (0, 0);
    for draw in 0..max_draws {
        let configs = sample_configs(model.n_m(), k, derive_seed(seed, &[draw as u64]), false);
        let (rank, required) = design_rank(ty, check, model, &configs, n_f, n_u, rank_tol)?;
        if rank >= required {
            return Ok(configs);
        }
        if draw == 0 || rank + best.1 > best.0 + required {
            best = (rank, required);
        }
    }
    Err(Error::RankDeficient {
        context: format!("screened design for type {ty} after {max_draws} draws"),
        rank: best.0,
        required: best.1,
    })
}
