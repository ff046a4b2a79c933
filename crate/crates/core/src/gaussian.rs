//! Linear-algebra and Gaussian primitives shared by every model: block
//! matrices, SPD validation, Gaussian conditioning and seeded sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tolerance;

/// One realisation of a sequence: `N + 1` state vectors.
pub type Sequence = Vec<DVector<f64>>;

/// Square matrix partitioned into `num_blocks × num_blocks` blocks of side
/// `block_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    data: DMatrix<f64>,
    block_dim: usize,
}

/// Covariance of a whole sequence `x_0, …, x_N`, block `(i, j)` being
/// `Cov(x_i, x_j)`.
pub type JointCovariance = BlockMatrix;

impl BlockMatrix {
    pub fn new(data: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        if block_dim == 0 {
            return Err(Error::Dimension("block dimension must be positive".into()));
        }
        if !data.is_square() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, expected square",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.nrows() == 0 || !data.nrows().is_multiple_of(block_dim) {
            return Err(Error::Dimension(format!(
                "side {} is not a positive multiple of block dimension {}",
                data.nrows(),
                block_dim
            )));
        }
        Ok(Self { data, block_dim })
    }

    pub fn zeros(num_blocks: usize, block_dim: usize) -> Self {
        let side = num_blocks * block_dim;
        Self {
            data: DMatrix::zeros(side, side),
            block_dim,
        }
    }

    /// Assemble from a closure producing block `(i, j)`.
    pub fn from_blocks<F>(num_blocks: usize, block_dim: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> DMatrix<f64>,
    {
        let mut out = Self::zeros(num_blocks, block_dim);
        for i in 0..num_blocks {
            for j in 0..num_blocks {
                out.set_block(i, j, &f(i, j));
            }
        }
        out
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.data.nrows() / self.block_dim
    }

    /// Index of the last block, `N`.
    pub fn last(&self) -> usize {
        self.num_blocks() - 1
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.block_dim;
        self.data.view((i * d, j * d), (d, d)).into_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) {
        let d = self.block_dim;
        assert_eq!(value.shape(), (d, d), "block shape");
        self.data.view_mut((i * d, j * d), (d, d)).copy_from(value);
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Sub-matrix made of the listed block rows and columns, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::from_blocks(indices.len(), self.block_dim, |i, j| {
            self.block(indices[i], indices[j])
        })
    }

    /// Largest Frobenius norm over all blocks.
    pub fn max_block_norm(&self) -> f64 {
        let n = self.num_blocks();
        let mut best = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                best = best.max(self.block(i, j).norm());
            }
        }
        best
    }

    /// `[A B; B' C]`-style symmetric assembly is common enough that the
    /// caller usually wants the result symmetrised exactly.
    pub fn symmetrize(&mut self) {
        let t = self.data.transpose();
        self.data = (&self.data + t) * 0.5;
    }
}

/// Zero-mean Gaussian vector law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    covariance: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        validate_spd(&covariance, "Gaussian covariance")?;
        Ok(Self { covariance })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// `‖a - b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn relative_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        0.0
    } else {
        (m - m.transpose()).norm() / scale
    }
}

/// Ratio of smallest to largest eigenvalue of the symmetric part of `m`.
/// Negative when the matrix is indefinite.
pub fn eigenvalue_ratio(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let max = eig.max();
    if max <= 0.0 {
        return f64::NEG_INFINITY;
    }
    eig.min() / max
}

/// True iff `m` is symmetric to within `tol` (relative Frobenius) and its
/// smallest eigenvalue exceeds `tol` times its largest.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "is_spd needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 || m.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    Ok(asymmetry(m) <= tol && eigenvalue_ratio(m) > tol)
}

/// Reject a covariance that is not square, symmetric and positive definite.
pub fn validate_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd(format!("{what} has non-finite entries")));
    }
    let asym = asymmetry(m);
    if asym > tolerance::SYMMETRY {
        return Err(Error::NotSpd(format!(
            "{what} is not symmetric (relative asymmetry {asym:.3e})"
        )));
    }
    let ratio = eigenvalue_ratio(m);
    if ratio <= tolerance::SPD {
        return Err(Error::NotSpd(format!(
            "{what} is not positive definite (eigenvalue ratio {ratio:.3e})"
        )));
    }
    Ok(())
}

pub(crate) fn check_shape(m: &DMatrix<f64>, d: usize, what: &str) -> Result<()> {
    if m.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym).ok_or_else(|| Error::NotSpd(format!("{what} has no Cholesky factor")))
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Result of conditioning a block-partitioned Gaussian on some of its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    /// Unobserved block indices, in increasing order.
    pub unobserved: Vec<usize>,
    /// `Σ_uo Σ_oo^{-1}`: maps the stacked observed blocks (in the order the
    /// caller listed them) to the conditional mean of the unobserved stack.
    pub gain: DMatrix<f64>,
    /// `Σ_uu - Σ_uo Σ_oo^{-1} Σ_ou`.
    pub cov: DMatrix<f64>,
}

/// Standard Gaussian conditioning of `joint` on the listed blocks.
pub fn condition(joint: &BlockMatrix, observed: &[usize]) -> Result<Conditional> {
    let n = joint.num_blocks();
    let mut seen = vec![false; n];
    for &o in observed {
        if o >= n {
            return Err(Error::IndexOutOfRange {
                index: o,
                valid: format!("0..{n}"),
            });
        }
        if seen[o] {
            return Err(Error::InvalidParameter(format!(
                "observed block {o} listed twice"
            )));
        }
        seen[o] = true;
    }
    let unobserved: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    let d = joint.block_dim();
    let (nu, no) = (unobserved.len() * d, observed.len() * d);

    if observed.is_empty() {
        return Ok(Conditional {
            cov: joint.select(&unobserved).into_matrix(),
            gain: DMatrix::zeros(nu, 0),
            unobserved,
        });
    }
    if unobserved.is_empty() {
        return Ok(Conditional {
            unobserved,
            gain: DMatrix::zeros(0, no),
            cov: DMatrix::zeros(0, 0),
        });
    }

    let s_oo = joint.select(observed).into_matrix();
    let s_uu = joint.select(&unobserved).into_matrix();
    let mut s_uo = DMatrix::zeros(nu, no);
    for (a, &u) in unobserved.iter().enumerate() {
        for (b, &o) in observed.iter().enumerate() {
            s_uo.view_mut((a * d, b * d), (d, d))
                .copy_from(&joint.block(u, o));
        }
    }
    let chol = cholesky(&s_oo, "observed covariance block")?;
    // gain = S_uo S_oo^{-1}  <=>  S_oo gain' = S_ou
    let gain = chol.solve(&s_uo.transpose()).transpose();
    let cov = &s_uu - &gain * s_uo.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(Conditional {
        unobserved,
        gain,
        cov,
    })
}

/// Generator for sample `index` of a seeded batch. Each sample owns an
/// independent ChaCha stream so batches can be produced in parallel and
/// still be reproducible.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn standard_normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

/// Lower Cholesky factor of a covariance that has been validated upstream.
pub(crate) fn lower_factor(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(cholesky(cov, what)?.l())
}

/// Draw `count` zero-mean vectors with covariance `spec.covariance()`.
pub fn sample(spec: &GaussianSpec, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let l = lower_factor(spec.covariance(), "Gaussian covariance")?;
    let dim = spec.dim();
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            &l * standard_normal_vector(&mut rng, dim)
        })
        .collect())
}

/// Unbiased sample covariance of a batch of sequences, as a block matrix.
pub fn empirical_covariance(samples: &[Sequence]) -> Result<JointCovariance> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("no samples".into()))?;
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two samples for a covariance".into(),
        ));
    }
    let d = first[0].len();
    let n = first.len();
    let side = n * d;
    let stack = |s: &Sequence| {
        DVector::from_iterator(side, s.iter().flat_map(|v| v.iter().copied()))
    };
    let count = samples.len() as f64;
    let mut mean = DVector::zeros(side);
    for s in samples {
        mean += stack(s);
    }
    mean /= count;
    let mut acc = DMatrix::zeros(side, side);
    for s in samples {
        let c = stack(s) - &mean;
        acc.syger(1.0, &c, &c, 1.0);
    }
    acc /= count - 1.0;
    acc.fill_upper_triangle_with_lower_triangle();
    BlockMatrix::new(acc, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn spd_examples() {
        assert!(is_spd(&DMatrix::identity(3, 3), 1e-10).unwrap());
        assert!(!is_spd(&dmatrix![1.0, 2.0; 2.0, 1.0], 1e-10).unwrap());
        assert!(is_spd(&dmatrix![2.0, -1.0, 0.0; -1.0, 2.0, -1.0; 0.0, -1.0, 1.0], 1e-10).unwrap());
        assert!(!is_spd(&dmatrix![1.0, 0.5; 0.0, 1.0], 1e-10).unwrap());
        assert!(matches!(
            is_spd(&DMatrix::zeros(2, 3), 1e-10),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conditioning_independent() {
        let joint = BlockMatrix::new(DMatrix::identity(2, 2), 1).unwrap();
        let c = condition(&joint, &[1]).unwrap();
        assert_eq!(c.unobserved, vec![0]);
        assert_eq!(c.gain[(0, 0)], 0.0);
        assert_eq!(c.cov[(0, 0)], 1.0);
    }

    #[test]
    fn conditioning_random_walk_midpoint() {
        let joint = BlockMatrix::new(
            dmatrix![1.0, 1.0, 1.0; 1.0, 2.0, 2.0; 1.0, 2.0, 3.0],
            1,
        )
        .unwrap();
        let c = condition(&joint, &[0, 2]).unwrap();
        assert!((c.gain[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((c.gain[(0, 1)] - 0.5).abs() < 1e-14);
        assert!((c.cov[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn conditioning_on_everything_is_empty() {
        let joint = BlockMatrix::new(DMatrix::identity(4, 4), 2).unwrap();
        let c = condition(&joint, &[1, 0]).unwrap();
        assert!(c.unobserved.is_empty());
        assert_eq!(c.cov.shape(), (0, 0));
        assert_eq!(c.gain.shape(), (0, 4));
    }

    #[test]
    fn conditioning_errors() {
        let joint = BlockMatrix::new(DMatrix::identity(2, 2), 1).unwrap();
        assert!(matches!(
            condition(&joint, &[2]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(condition(&joint, &[0, 0]).is_err());
        let singular = BlockMatrix::new(dmatrix![1.0, 0.0; 0.0, 0.0], 1).unwrap();
        assert!(matches!(condition(&singular, &[1]), Err(Error::NotSpd(_))));
    }

    #[test]
    fn sample_variance_and_determinism() {
        let spec = GaussianSpec::new(dmatrix![4.0]).unwrap();
        let xs = sample(&spec, 100_000, 17).unwrap();
        let var = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / xs.len() as f64;
        assert!((3.8..=4.2).contains(&var), "variance {var}");
        assert_eq!(xs, sample(&spec, 100_000, 17).unwrap());
        assert!(sample(&spec, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn gaussian_spec_rejects_indefinite() {
        assert!(GaussianSpec::new(dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    }

    #[test]
    fn block_access() {
        let m = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let b = BlockMatrix::new(m, 2).unwrap();
        assert_eq!(b.num_blocks(), 2);
        assert_eq!(b.block(1, 0), dmatrix![8.0, 9.0; 12.0, 13.0]);
        assert!(BlockMatrix::new(DMatrix::zeros(3, 3), 2).is_err());
    }
}
