//! First-order Gauss-Markov model
//!
//! `y_0 ~ N(0, C0)`, `y_k = M_{k,k-1} y_{k-1} + e_k` with `e_k ~ N(0, M_k)`
//! white and independent of `y_0`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{
    check_shape, lower_factor, standard_normal_vector, stream_rng, validate_spd, BlockMatrix,
    JointCovariance, Sequence,
};
use crate::tolerance;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModelParams {
    initial_cov: DMatrix<f64>,
    transitions: Vec<DMatrix<f64>>,
    noise_covs: Vec<DMatrix<f64>>,
}

impl MarkovModelParams {
    /// `transitions[k-1]` is `M_{k,k-1}` and `noise_covs[k-1]` is `M_k`,
    /// for `k = 1..=N`.
    pub fn new(
        initial_cov: DMatrix<f64>,
        transitions: Vec<DMatrix<f64>>,
        noise_covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        validate_spd(&initial_cov, "initial covariance")?;
        let d = initial_cov.nrows();
        if transitions.len() != noise_covs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} transitions but {} noise covariances",
                transitions.len(),
                noise_covs.len()
            )));
        }
        for (i, (m, q)) in transitions.iter().zip(&noise_covs).enumerate() {
            let k = i + 1;
            check_shape(m, d, &format!("transition M_{k},{}", k - 1))?;
            check_shape(q, d, &format!("noise covariance M_{k}"))?;
            validate_spd(q, &format!("noise covariance M_{k}"))?;
        }
        Ok(Self {
            initial_cov,
            transitions,
            noise_covs,
        })
    }

    /// Time-invariant model with `n` steps.
    pub fn stationary(
        initial_cov: DMatrix<f64>,
        transition: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
        n: usize,
    ) -> Result<Self> {
        Self::new(initial_cov, vec![transition; n], vec![noise_cov; n])
    }

    pub fn dim(&self) -> usize {
        self.initial_cov.nrows()
    }

    /// Final index `N`.
    pub fn last(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial_cov(&self) -> &DMatrix<f64> {
        &self.initial_cov
    }

    /// `M_{k,k-1}` for `1 <= k <= N`.
    pub fn transition(&self, k: usize) -> &DMatrix<f64> {
        &self.transitions[k - 1]
    }

    /// `M_k` for `1 <= k <= N`.
    pub fn noise_cov(&self, k: usize) -> &DMatrix<f64> {
        &self.noise_covs[k - 1]
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    pub fn noise_covs(&self) -> &[DMatrix<f64>] {
        &self.noise_covs
    }
}

/// Exact covariance of `y_0, …, y_N`.
///
/// Diagonal blocks follow `C_k = M_{k,k-1} C_{k-1} M_{k,k-1}' + M_k`; the
/// lower blocks are obtained by chaining transitions,
/// `Cov(y_l, y_k) = M_{l,l-1} Cov(y_{l-1}, y_k)` for `l > k`.
pub fn markov_joint_covariance(p: &MarkovModelParams) -> Result<JointCovariance> {
    let n = p.last();
    let d = p.dim();
    let mut out = BlockMatrix::zeros(n + 1, d);
    let mut diag = p.initial_cov().clone();
    out.set_block(0, 0, &diag);
    for k in 1..=n {
        let m = p.transition(k);
        diag = m * &diag * m.transpose() + p.noise_cov(k);
        out.set_block(k, k, &diag);
    }
    for k in 0..n {
        let mut cross = out.block(k, k);
        for l in k + 1..=n {
            cross = p.transition(l) * cross;
            out.set_block(l, k, &cross);
            out.set_block(k, l, &cross.transpose());
        }
    }
    let asym = (out.as_matrix() - out.as_matrix().transpose()).norm();
    let scale = out.as_matrix().norm();
    if asym > tolerance::SYMMETRY * scale {
        return Err(Error::Numerical(format!(
            "Markov joint covariance asymmetry {:.3e}",
            asym / scale
        )));
    }
    out.symmetrize();
    Ok(out)
}

/// Forward simulation of `count` independent sequences.
pub fn sample_markov(p: &MarkovModelParams, count: usize, seed: u64) -> Result<Vec<Sequence>> {
    let d = p.dim();
    let l0 = lower_factor(p.initial_cov(), "initial covariance")?;
    let noise_factors = p
        .noise_covs()
        .iter()
        .map(|q| lower_factor(q, "noise covariance"))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut seq = Vec::with_capacity(p.last() + 1);
            seq.push(&l0 * standard_normal_vector(&mut rng, d));
            for (k, l) in noise_factors.iter().enumerate() {
                let next = p.transition(k + 1) * &seq[k] + l * standard_normal_vector(&mut rng, d);
                seq.push(next);
            }
            seq
        })
        .collect())
}
