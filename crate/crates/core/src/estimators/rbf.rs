//! Reciprocity-aware bilinear factorization.
//!
//! With symmetric cores, `vec(H_k - H0) = (B^T ⊗ A) W vech(Omega_k)`, so one
//! pseudoinverse of `S̄ = [vech(Omega_1) ... vech(Omega_K)]` exposes the blocks
//! `M_ii = a_i b_i^T` and `M_ij = a_j b_i^T + a_i b_j^T`. Here `a_i` is column
//! `i` of `A` and `b_i` is row `i` of `B`.

use super::{check_k, check_slices, EstimationReport, EstimatorConfig, ProblemType, ReportFlags, Stopper};
use crate::error::{Error, Result};
use crate::tensor::{
    build_duplication, frobenius_sq, is_symmetric, pinv, vech, CMat, Mode, Tensor3, C64,
};

pub const GRAM_COND_GUARD: f64 = 1e12;

/// `G[i][j] = x_j^H x_i` off the diagonal and `sum_l ||x_l||^2` on it, for the
/// columns `x_i` of `x`.
pub fn gram_matrix(x: &CMat) -> CMat {
    masked_gram(x, |_, _| true)
}

/// [`gram_matrix`] restricted to the blocks `(i, j)` for which `live` holds.
fn masked_gram(x: &CMat, live: impl Fn(usize, usize) -> bool) -> CMat {
    let n = x.ncols();
    let inner = (x.adjoint() * x).transpose();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            let total: f64 = (0..n).filter(|&l| live(i, l)).map(|l| norms[l]).sum();
            C64::new(total, 0.0)
        } else if live(i, j) {
            inner[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Zero-forced blocks, indexed `i * n + j` (symmetric in `i`, `j`). Blocks of
/// element pairs that no configuration excites are not data and are skipped.
struct Blocks {
    n: usize,
    m: Vec<CMat>,
    live: Vec<bool>,
}

impl Blocks {
    fn get(&self, i: usize, j: usize) -> &CMat {
        &self.m[i * self.n + j]
    }

    fn live(&self, i: usize, j: usize) -> bool {
        self.live[i * self.n + j]
    }

    fn cost(&self, a: &CMat, b: &CMat) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let bi = b.row(i);
            if self.live(i, i) {
                total += frobenius_sq(&(self.get(i, i) - a.column(i) * bi));
            }
            for j in (0..i).filter(|&j| self.live(i, j)) {
                let fit = a.column(j) * bi + a.column(i) * b.row(j);
                total += frobenius_sq(&(self.get(i, j) - fit));
            }
        }
        total
    }
}

/// Solves `G Y^T = R^T` where `R^T` has rows `r_i^T = (sum_j M_ij conj(x_j))^T`
/// and `M_ij` is taken as is (`transpose = false`) or transposed.
fn factor_update(blocks: &Blocks, x: &CMat, transpose: bool, flags: &mut ReportFlags) -> CMat {
    let n = blocks.n;
    let rows = if transpose {
        blocks.m[0].ncols()
    } else {
        blocks.m[0].nrows()
    };
    let mut rt = CMat::zeros(n, rows);
    for i in 0..n {
        let mut r = nalgebra::DVector::<C64>::zeros(rows);
        for j in 0..n {
            let xj = x.column(j).map(|z| z.conj());
            let mij = blocks.get(i, j);
            if transpose {
                r += mij.transpose() * xj;
            } else {
                r += mij * xj;
            }
        }
        rt.row_mut(i).copy_from(&r.transpose());
    }
    let g = masked_gram(x, |i, j| blocks.live(i, j));
    let sv = g.clone().singular_values();
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let solved = if lo > 0.0 && hi / lo <= GRAM_COND_GUARD {
        g.clone().lu().solve(&rt)
    } else {
        None
    };
    match solved {
        Some(y) => y,
        None => {
            flags.gram_pinv_fallback = true;
            pinv(&g, f64::EPSILON).matrix * rt
        }
    }
}

/// Rank-one split of `m` as `a b^T`, with the largest entry of `a` real-positive.
fn rank_one(m: &CMat) -> (CMat, CMat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let top = (0..s.len()).fold(0, |best, i| if s[i] > s[best] { i } else { best });
    let scale = C64::new(s[top].sqrt(), 0.0);
    let mut a = u.column(top).into_owned() * scale;
    let mut b = v_t.row(top).into_owned() * scale;
    let lead = a.iter().fold(C64::new(0.0, 0.0), |best, z| {
        if z.norm() > best.norm() {
            *z
        } else {
            best
        }
    });
    if lead.norm() > 0.0 {
        let phase = lead / lead.norm();
        a *= phase.conj();
        b *= phase;
    }
    let a = CMat::from_column_slice(a.nrows(), 1, a.as_slice());
    let b = CMat::from_row_slice(1, b.ncols(), b.as_slice());
    (a, b)
}

/// `S̄ = [vech(Omega_1) ... vech(Omega_K)]` and which of its rows are not
/// identically zero. Rows that vanish for every configuration (e.g.
/// off-diagonals when Gamma = 0) carry no information and do not count
/// towards the required rank.
pub(crate) fn core_matrix(t: &Tensor3) -> Result<(CMat, Vec<bool>)> {
    let columns = t
        .slices()
        .enumerate()
        .map(|(idx, om)| {
            let scale = om.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
            if !is_symmetric(&om, 1e-10 * scale) {
                return Err(Error::Precondition(format!(
                    "core slice {idx} is not symmetric; RBF assumes a reciprocal network"
                )));
            }
            vech(&om)
        })
        .collect::<Result<Vec<_>>>()?;
    let s_bar = CMat::from_columns(&columns);
    let s_max = s_bar.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let live = s_bar
        .row_iter()
        .map(|r| r.iter().any(|z| z.norm() > 1e-14 * s_max))
        .collect();
    Ok((s_bar, live))
}

/// Type 2 via zero-forcing on the symmetric-core basis followed by alternating
/// rank-one updates.
pub fn rbf(h_ring: &Tensor3, t: &Tensor3, cfg: &EstimatorConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    let (n_u, n_f, k) = h_ring.dims();
    let n_m = t.dims().0;
    check_slices(h_ring, t, n_m)?;
    let k_min = check_k(ProblemType::Rbf, "RBF", k, n_f, n_m, n_u)?;

    let (s_bar, live_rows) = core_matrix(t)?;
    let sp = pinv(&s_bar, cfg.rank_tol);
    let live_count = live_rows.iter().filter(|&&l| l).count();
    if sp.rank < live_count {
        return Err(Error::RankDeficient {
            context: "RBF core matrix S̄".into(),
            rank: sp.rank,
            required: live_count,
        });
    }

    let h3t = h_ring.unfold(Mode::Three).transpose();
    let h_lin = &h3t * &sp.matrix;
    let energy = h_ring.frobenius_sq();
    let zf_res = frobenius_sq(&(&h3t - &h_lin * &s_bar));
    let zf_residual = if energy > 0.0 { zf_res / energy } else { 0.0 };

    let dup = build_duplication(n_m)?;
    let h_bar = dup.permute_columns(&h_lin);
    let mut m = vec![CMat::zeros(n_u, n_f); n_m * n_m];
    let mut live = vec![false; n_m * n_m];
    for (c, &(i, j)) in dup.permuted_pairs.iter().enumerate() {
        let block = CMat::from_column_slice(n_u, n_f, h_bar.column(c).as_slice());
        m[i * n_m + j] = block.clone();
        m[j * n_m + i] = block;
        live[i * n_m + j] = live_rows[dup.source[c]];
        live[j * n_m + i] = live_rows[dup.source[c]];
    }
    let blocks = Blocks { n: n_m, m, live };

    let mut a = CMat::zeros(n_u, n_m);
    let mut b = CMat::zeros(n_m, n_f);
    for i in 0..n_m {
        let (ai, bi) = rank_one(blocks.get(i, i));
        a.set_column(i, &ai.column(0));
        b.set_row(i, &bi.row(0));
    }

    let h1 = h_ring.unfold(Mode::One);
    let mut flags = ReportFlags::default();
    let mut stopper = Stopper::new(cfg, energy);
    let mut prev_fit: Option<f64> = None;
    let converged = loop {
        a = factor_update(&blocks, &b.transpose(), false, &mut flags).transpose();
        b = factor_update(&blocks, &a, true, &mut flags);

        let fit = blocks.cost(&a, &b);
        let z1 = t.mode_n_product(&b.transpose(), Mode::Two)?.unfold(Mode::One);
        let cost = frobenius_sq(&(&h1 - &a * &z1));
        let done = stopper.record(cost, fit, prev_fit)?;
        prev_fit = Some(fit);
        if let Some(conv) = done {
            break conv;
        }
    };

    Ok(EstimationReport {
        problem: ProblemType::Rbf,
        h0_hat: None,
        a_hat: Some(a),
        b_hat: Some(b),
        iterations_used: stopper.trace.len(),
        cost_trace: stopper.trace,
        converged,
        min_k_required: k_min,
        k_used: k,
        flags,
        zero_forcing_residual: Some(zf_residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_of_orthonormal_columns() {
        let x = CMat::identity(4, 4);
        let g = gram_matrix(&x);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 4.0 } else { 0.0 };
                assert_eq!(g[(i, j)], C64::new(expected, 0.0));
            }
        }
    }

    #[test]
    fn rank_one_recovers_outer_product() {
        let a = CMat::from_column_slice(3, 1, &[C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 3.0)]);
        let b = CMat::from_row_slice(1, 2, &[C64::new(2.0, -1.0), C64::new(0.25, 0.5)]);
        let m = &a * &b;
        let (ah, bh) = rank_one(&m);
        assert!(frobenius_sq(&(&ah * &bh - &m)) < 1e-24);
        let lead = ah.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        let top = ah.iter().find(|z| z.norm() == lead).unwrap();
        assert!(top.im.abs() < 1e-15 && top.re > 0.0);
    }
}
