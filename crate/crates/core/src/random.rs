//! Random well-conditioned model instances.
//!
//! Transitions are Gaussian matrices rescaled to a spectral radius of at
//! most 1.2; noise covariances are `I + W W'` with a small Gaussian `W`.
//! This keeps joint covariances well conditioned for `d <= 4`, `N <= 20`, so
//! structural checks at `1e-8` are meaningful.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cml::{BoundaryCondition, CmStep, CmlModelParams, Endpoint};
use crate::error::Result;
use crate::induction::{check_reciprocal_condition, induce_reciprocal_cml};
use crate::markov::MarkovModelParams;
use crate::representation::RepresentationSpec;
use crate::tolerance;

pub const MAX_SPECTRAL_RADIUS: f64 = 1.2;

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Square matrix with spectral radius drawn uniformly in `[0.2, max_radius]`.
pub fn transition<R: Rng + ?Sized>(rng: &mut R, d: usize, max_radius: f64) -> DMatrix<f64> {
    loop {
        let m = gaussian_matrix(rng, d, d, 1.0);
        let rho = spectral_radius(&m);
        if rho > 1e-3 {
            let target = rng.random_range(0.2..=max_radius);
            return m * (target / rho);
        }
    }
}

/// `I + W W'`, `W` with entries of standard deviation `0.5`.
pub fn spd<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let w = gaussian_matrix(rng, d, d, 0.5);
    DMatrix::identity(d, d) + &w * w.transpose()
}

pub fn markov<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> MarkovModelParams {
    let c0 = spd(rng, d);
    let transitions = (0..n).map(|_| transition(rng, d, MAX_SPECTRAL_RADIUS)).collect();
    let noise = (0..n).map(|_| spd(rng, d)).collect();
    MarkovModelParams::new(c0, transitions, noise).expect("generated Markov model is valid")
}

pub fn boundary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> BoundaryCondition {
    let gain = gaussian_matrix(rng, d, d, 0.7);
    if rng.random_bool(0.5) {
        BoundaryCondition::Bc1 {
            cov_e0: spd(rng, d),
            g_c0: gain,
            cov_ec: spd(rng, d),
        }
    } else {
        BoundaryCondition::Bc2 {
            cov_ec: spd(rng, d),
            g_0c: gain,
            cov_e0: spd(rng, d),
        }
    }
}

/// Unconstrained CM model: generically CM_c but neither reciprocal nor Markov.
pub fn cml<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize, endpoint: Endpoint) -> CmlModelParams {
    let steps = (0..n.saturating_sub(1))
        .map(|_| CmStep {
            transition: transition(rng, d, 1.0),
            coupling: gaussian_matrix(rng, d, d, 0.5),
            noise_cov: spd(rng, d),
        })
        .collect();
    CmlModelParams::new(endpoint, n, steps, boundary(rng, d)).expect("generated CM model is valid")
}

/// CM model that fails the reciprocal condition. Needs `n >= 3`.
pub fn cm_not_reciprocal<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    n: usize,
    endpoint: Endpoint,
) -> Result<CmlModelParams> {
    assert!(n >= 3, "the reciprocal condition is vacuous for N < 3");
    loop {
        let p = cml(rng, d, n, endpoint);
        if !check_reciprocal_condition(&p, tolerance::ALGEBRAIC)?.verdict.holds() {
            return Ok(p);
        }
    }
}

/// Induced reciprocal CM_L model with a random boundary.
pub fn reciprocal<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Result<CmlModelParams> {
    let m = markov(rng, d, n);
    induce_reciprocal_cml(&m)?.with_boundary(boundary(rng, d))
}

pub fn representation<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    n: usize,
    endpoint: Endpoint,
) -> RepresentationSpec {
    let chain = markov(rng, d, n - 1);
    let gammas = (0..n).map(|_| gaussian_matrix(rng, d, d, 0.7)).collect();
    RepresentationSpec::new(endpoint, chain, gammas, spd(rng, d)).expect("generated representation is valid")
}
