//! Dense third-order complex tensors and the matrix machinery the estimators
//! are written in terms of.
//!
//! Layout: entry `(i, j, k)` lives at `(k * J + j) * I + i`, i.e. frontal
//! slices are stored column-major and ordered by the third index. With this
//! layout the mode-1 unfolding is a plain reshape.
//!
//! Unfoldings (0-based):
//! - mode 1: `I x JK`, `[T_1, ..., T_K]`
//! - mode 2: `J x IK`, `[T_1^T, ..., T_K^T]`
//! - mode 3: `K x IJ`, row `k` is `vec(T_k)^T`
//!
//! `vec` is column-major throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::InvalidArgument(format!(
                "tensor mode must be 1, 2 or 3, got {n}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![ZERO; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_vec(dims: (usize, usize, usize), data: Vec<C64>) -> Result<Self> {
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    /// Stack equally sized matrices along the third mode.
    pub fn from_slices(slices: &[CMat]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero slices".into()))?;
        let (i, j) = first.shape();
        let mut data = Vec::with_capacity(i * j * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (i, j) {
                return Err(Error::Shape(format!(
                    "slice {k} has shape {:?}, expected {:?}",
                    s.shape(),
                    (i, j)
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: (i, j, slices.len()),
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        let (ni, nj, _) = self.dims;
        self.data[(k * nj + j) * ni + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: C64) {
        let (ni, nj, _) = self.dims;
        self.data[(k * nj + j) * ni + i] = value;
    }

    pub fn frontal_slice(&self, k: usize) -> CMat {
        let (ni, nj, _) = self.dims;
        let len = ni * nj;
        CMat::from_column_slice(ni, nj, &self.data[k * len..(k + 1) * len])
    }

    pub fn slices(&self) -> impl Iterator<Item = CMat> + '_ {
        (0..self.dims.2).map(move |k| self.frontal_slice(k))
    }

    /// Keep only the first `k` frontal slices.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dims.2 {
            return Err(Error::InvalidArgument(format!(
                "prefix length {k} outside 1..={}",
                self.dims.2
            )));
        }
        let len = self.dims.0 * self.dims.1;
        Ok(Self {
            dims: (self.dims.0, self.dims.1, k),
            data: self.data[..k * len].to_vec(),
        })
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn unfold(&self, mode: Mode) -> CMat {
        let (ni, nj, nk) = self.dims;
        match mode {
            Mode::One => CMat::from_column_slice(ni, nj * nk, &self.data),
            Mode::Two => CMat::from_fn(nj, ni * nk, |j, c| self.get(c % ni, j, c / ni)),
            Mode::Three => CMat::from_fn(nk, ni * nj, |k, c| self.get(c % ni, c / ni, k)),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &CMat, mode: Mode, dims: (usize, usize, usize)) -> Result<Self> {
        let (ni, nj, nk) = dims;
        let expected = match mode {
            Mode::One => (ni, nj * nk),
            Mode::Two => (nj, ni * nk),
            Mode::Three => (nk, ni * nj),
        };
        if m.shape() != expected {
            return Err(Error::Shape(format!(
                "mode-{mode:?} unfolding of {dims:?} must be {expected:?}, got {:?}",
                m.shape()
            )));
        }
        let mut t = Tensor3::zeros(dims);
        match mode {
            Mode::One => t.data.copy_from_slice(m.as_slice()),
            Mode::Two => {
                for c in 0..ni * nk {
                    for j in 0..nj {
                        t.set(c % ni, j, c / ni, m[(j, c)]);
                    }
                }
            }
            Mode::Three => {
                for c in 0..ni * nj {
                    for k in 0..nk {
                        t.set(c % ni, c / ni, k, m[(k, c)]);
                    }
                }
            }
        }
        Ok(t)
    }

    /// `self x_n m`: multiplies every mode-`n` fiber by `m`.
    pub fn mode_n_product(&self, m: &CMat, mode: Mode) -> Result<Self> {
        let (ni, nj, nk) = self.dims;
        let n = match mode {
            Mode::One => ni,
            Mode::Two => nj,
            Mode::Three => nk,
        };
        if m.ncols() != n {
            return Err(Error::Shape(format!(
                "mode-{mode:?} product needs a matrix with {n} columns, got {}",
                m.ncols()
            )));
        }
        let dims = match mode {
            Mode::One => (m.nrows(), nj, nk),
            Mode::Two => (ni, m.nrows(), nk),
            Mode::Three => (ni, nj, m.nrows()),
        };
        match mode {
            Mode::One => {
                let y = m * self.unfold(Mode::One);
                Ok(Self {
                    dims,
                    data: y.as_slice().to_vec(),
                })
            }
            Mode::Two => {
                // Y_k = T_k * m^T, slice by slice.
                let mt = m.transpose();
                let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
                for k in 0..nk {
                    data.extend_from_slice((self.frontal_slice(k) * &mt).as_slice());
                }
                Ok(Self { dims, data })
            }
            Mode::Three => Self::fold(&(m * self.unfold(Mode::Three)), Mode::Three, dims),
        }
    }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

/// Lower-triangular entries (diagonal included), column by column.
pub fn vech(m: &CMat) -> Result<CVec> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!(
            "vech needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    Ok(CVec::from_vec(out))
}

/// `(row, col)` of each `vech` entry, in `vech` order.
pub fn vech_index(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect()
}

pub fn is_symmetric(m: &CMat, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).norm() <= tol))
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Duplication matrix `W` with `vec(M) = W vech(M)` for symmetric `M`, and the
/// permutation `P` that moves the diagonal `vech` entries to the front.
#[derive(Clone, Debug)]
pub struct DuplicationPair {
    pub n: usize,
    /// `n^2 x n(n+1)/2`, binary.
    pub w: DMatrix<f64>,
    /// `n(n+1)/2` square permutation; column `c` of `X * P` is column
    /// `source[c]` of `X`.
    pub p: DMatrix<f64>,
    /// `(i, j)` with `i >= j` for every column after permutation: the `n`
    /// diagonal pairs first, then the off-diagonal pairs in `vech` order.
    pub permuted_pairs: Vec<(usize, usize)>,
    pub source: Vec<usize>,
}

impl DuplicationPair {
    pub fn half_len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// `X * P` without forming the dense product.
    pub fn permute_columns(&self, x: &CMat) -> CMat {
        CMat::from_fn(x.nrows(), self.source.len(), |r, c| x[(r, self.source[c])])
    }
}

pub fn build_duplication(n: usize) -> Result<DuplicationPair> {
    if n == 0 {
        return Err(Error::InvalidArgument("duplication size must be >= 1".into()));
    }
    let pairs = vech_index(n);
    let h = pairs.len();
    let mut w = DMatrix::<f64>::zeros(n * n, h);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        w[(j * n + i, c)] = 1.0;
        w[(i * n + j, c)] = 1.0;
    }
    let mut source: Vec<usize> = (0..h).filter(|&c| pairs[c].0 == pairs[c].1).collect();
    source.extend((0..h).filter(|&c| pairs[c].0 != pairs[c].1));
    let mut p = DMatrix::<f64>::zeros(h, h);
    for (c, &s) in source.iter().enumerate() {
        p[(s, c)] = 1.0;
    }
    let permuted_pairs = source.iter().map(|&s| pairs[s]).collect();
    Ok(DuplicationPair {
        n,
        w,
        p,
        permuted_pairs,
        source,
    })
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Moore-Penrose pseudoinverse with its numerical rank.
#[derive(Clone, Debug)]
pub struct Pinv {
    pub matrix: CMat,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Singular values below `rank_tol * sigma_max` are treated as zero.
pub fn pinv(m: &CMat, rank_tol: f64) -> Pinv {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Pinv {
            matrix: CMat::zeros(cols, rows),
            rank: 0,
            singular_values: Vec::new(),
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let cutoff = rank_tol * sv.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cutoff && sv[i] > 0.0).collect();
    let rank = kept.len();
    // V_r diag(1/s) U_r^H over the kept singular triplets
    let v_scaled = CMat::from_fn(cols, rank, |r, c| v_t[(kept[c], r)].conj() / sv[kept[c]]);
    let u_kept = CMat::from_fn(rows, rank, |r, c| u[(r, kept[c])]);
    let matrix = v_scaled * u_kept.adjoint();
    Pinv {
        matrix,
        rank,
        singular_values: sv,
    }
}

/// Least-squares solution `X = H Z^+` of `X Z ~= H`, with the numerical rank of `Z`.
pub fn solve_right(h: &CMat, z: &CMat, rank_tol: f64) -> Result<(CMat, usize)> {
    if h.ncols() != z.ncols() {
        return Err(Error::Shape(format!(
            "right solve: H is {:?} but Z is {:?}",
            h.shape(),
            z.shape()
        )));
    }
    let p = pinv(z, rank_tol);
    Ok((h * p.matrix, p.rank))
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn relative_diff(a: &CMat, b: &CMat) -> f64 {
    let den = frobenius_sq(b).sqrt().max(f64::MIN_POSITIVE);
    frobenius_sq(&(a - b)).sqrt() / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn mode3_unfold_is_column_major_vec() {
        let slice = CMat::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let t = Tensor3::from_slices(&[slice]).unwrap();
        let u = t.unfold(Mode::Three);
        assert_eq!(u.shape(), (1, 4));
        let got: Vec<f64> = u.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn zero_tensor_unfolds_to_zero() {
        let t = Tensor3::zeros((2, 3, 4));
        assert_eq!(t.unfold(Mode::One), CMat::zeros(2, 12));
        assert_eq!(t.unfold(Mode::Two), CMat::zeros(3, 8));
        assert_eq!(t.unfold(Mode::Three), CMat::zeros(4, 6));
    }

    #[test]
    fn scalar_tensor_passes_through() {
        let m = CMat::from_element(1, 1, C64::new(2.5, -1.0));
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            let t = Tensor3::fold(&m, mode, (1, 1, 1)).unwrap();
            assert_eq!(t.get(0, 0, 0), C64::new(2.5, -1.0));
        }
    }

    #[test]
    fn fold_rejects_wrong_shape() {
        let m = CMat::zeros(3, 3);
        assert!(matches!(
            Tensor3::fold(&m, Mode::One, (2, 2, 2)),
            Err(Error::Shape(_))
        ));
        assert!(Mode::try_from(4).is_err());
    }

    #[test]
    fn vec_and_vech_definitions() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v: Vec<f64> = vec(&m).iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
        let s = CMat::from_row_slice(2, 2, &[c(5.0), c(6.0), c(6.0), c(7.0)]);
        let h: Vec<f64> = vech(&s).unwrap().iter().map(|z| z.re).collect();
        assert_eq!(h, vec![5.0, 6.0, 7.0]);
        assert!(vech(&CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn duplication_n1_and_n2() {
        let d1 = build_duplication(1).unwrap();
        assert_eq!(d1.w, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(d1.p, DMatrix::from_element(1, 1, 1.0));

        // vech order for n = 2 is (0,0), (1,0), (1,1); vec positions are
        // (0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3.
        let d2 = build_duplication(2).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        assert_eq!(d2.w, expected);
        assert_eq!(d2.permuted_pairs, vec![(0, 0), (1, 1), (1, 0)]);
    }

    #[test]
    fn duplication_n3_column_sums() {
        let d = build_duplication(3).unwrap();
        let sums: Vec<f64> = (0..d.w.ncols()).map(|c| d.w.column(c).sum()).collect();
        assert!(sums.iter().all(|&s| s == 1.0 || s == 2.0));
        assert_eq!(sums.iter().sum::<f64>(), 9.0);
        let wp = &d.w * &d.p;
        for c in 0..3 {
            assert_eq!(wp.column(c).iter().filter(|&&x| x != 0.0).count(), 1);
        }
        for c in 3..6 {
            assert_eq!(wp.column(c).iter().filter(|&&x| x == 1.0).count(), 2);
        }
    }

    #[test]
    fn pinv_identity_and_singular_diagonal() {
        let i3 = CMat::identity(3, 3);
        let p = pinv(&i3, DEFAULT_RANK_TOL);
        assert!(relative_diff(&p.matrix, &i3) < 1e-15);
        assert_eq!(p.rank, 3);

        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0), c(0.0)]));
        let p = pinv(&d, DEFAULT_RANK_TOL);
        let want = CMat::from_diagonal(&CVec::from_vec(vec![c(0.5), c(0.0)]));
        assert!((&p.matrix - want).norm() < 1e-15);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn kron_identity() {
        let k = kron(&CMat::identity(2, 2), &CMat::identity(3, 3));
        assert_eq!(k, CMat::identity(6, 6));
        let z = kron(&CMat::identity(2, 2), &CMat::zeros(2, 2));
        assert_eq!(z, CMat::zeros(4, 4));
    }

    #[test]
    fn identity_mode_products_leave_tensor_unchanged() {
        let t = Tensor3::from_vec(
            (2, 3, 2),
            (0..12).map(|x| C64::new(x as f64, -(x as f64))).collect(),
        )
        .unwrap();
        let y = t
            .mode_n_product(&CMat::identity(2, 2), Mode::One)
            .unwrap()
            .mode_n_product(&CMat::identity(3, 3), Mode::Two)
            .unwrap()
            .mode_n_product(&CMat::identity(2, 2), Mode::Three)
            .unwrap();
        assert_eq!(y, t);
        let z = t.mode_n_product(&CMat::zeros(4, 3), Mode::Two).unwrap();
        assert_eq!(z, Tensor3::zeros((2, 4, 2)));
        assert!(t.mode_n_product(&CMat::zeros(4, 4), Mode::Two).is_err());
    }
}
