//! Test-only oracles, kept independent of the library's covariance paths.
#![allow(dead_code)]

use cmseq::cml::{BoundaryCondition, CmlModelParams};
use cmseq::markov::MarkovModelParams;
use cmseq::BlockMatrix;
use nalgebra::DMatrix;

fn chol_l(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("SPD").l()
}

/// Express every state as a linear map of a stack of independent standard
/// normals by running the model's recursion on coefficient matrices, then
/// form `L L'`. No covariance recursion is involved.
pub struct LinearMap {
    d: usize,
    total: usize,
    next: usize,
}

impl LinearMap {
    fn new(d: usize, sources: usize) -> Self {
        Self {
            d,
            total: sources * d,
            next: 0,
        }
    }

    fn noise(&mut self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.d, self.total);
        out.view_mut((0, self.next), (self.d, self.d)).copy_from(&chol_l(cov));
        self.next += self.d;
        out
    }
}

fn covariance_of(coeffs: &[DMatrix<f64>], d: usize) -> BlockMatrix {
    let stacked = DMatrix::from_fn(coeffs.len() * d, coeffs[0].ncols(), |r, c| coeffs[r / d][(r % d, c)]);
    BlockMatrix::new(&stacked * stacked.transpose(), d).unwrap()
}

pub fn markov_covariance_oracle(p: &MarkovModelParams) -> BlockMatrix {
    let d = p.dim();
    let n = p.last();
    let mut lm = LinearMap::new(d, n + 1);
    let mut xs = vec![lm.noise(p.initial_cov())];
    for k in 1..=n {
        let next = p.transition(k) * &xs[k - 1] + lm.noise(p.noise_cov(k));
        xs.push(next);
    }
    covariance_of(&xs, d)
}

pub fn cml_covariance_oracle(p: &CmlModelParams) -> BlockMatrix {
    let d = p.dim();
    let n = p.last();
    let c = p.conditioning_index();
    let partner = p.endpoint().partner(n);
    let mut lm = LinearMap::new(d, n + 1);
    let mut xs = vec![DMatrix::zeros(d, (n + 1) * d); n + 1];
    match p.boundary() {
        BoundaryCondition::Bc1 { cov_e0, g_c0, cov_ec } => {
            xs[0] = lm.noise(cov_e0);
            xs[partner] = g_c0 * &xs[0] + lm.noise(cov_ec);
        }
        BoundaryCondition::Bc2 { cov_ec, g_0c, cov_e0 } => {
            xs[partner] = lm.noise(cov_ec);
            xs[0] = g_0c * &xs[partner] + lm.noise(cov_e0);
        }
    }
    for k in p.endpoint().interior(n) {
        let s = p.step(k).unwrap();
        xs[k] = &s.transition * &xs[k - 1] + &s.coupling * &xs[c] + lm.noise(&s.noise_cov);
    }
    covariance_of(&xs, d)
}

/// Sylvester's criterion: all leading principal minors positive.
pub fn sylvester_positive_definite(m: &DMatrix<f64>) -> bool {
    (1..=m.nrows()).all(|k| m.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
}

/// Composite Simpson rule for a matrix-valued integrand on `[0, t]`.
pub fn simpson<F: Fn(f64) -> DMatrix<f64>>(f: F, t: f64, intervals: usize) -> DMatrix<f64> {
    assert!(intervals.is_multiple_of(2));
    let h = t / intervals as f64;
    let mut acc = f(0.0) + f(t);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(b.abs().max());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs().max() / scale
    }
}
