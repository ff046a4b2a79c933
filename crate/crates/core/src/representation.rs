//! CM sequences as a Markov sequence plus an uncorrelated vector:
//! `x_k = y_k + Γ_k x_c` for `k ≠ c`, with `[y_k]` Markov and `x_c`
//! uncorrelated with it.
//!
//! [`construct_cm`] turns such a pair into CM model parameters;
//! [`decompose_cm`] recovers the pair from a joint covariance. The gauge is
//! fixed by the uncorrelatedness of `y` and `x_c`, which forces
//! `Γ_k = C_{k,c} C_{c,c}^{-1}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cml::{cml_joint_covariance, BoundaryCondition, CmStep, CmlModelParams, Endpoint};
use crate::error::{Error, Result};
use crate::gaussian::{check_shape, spd_inverse, validate_spd, BlockMatrix, JointCovariance};
use crate::markov::{markov_joint_covariance, MarkovModelParams};
use crate::structure::classify;

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSpec {
    endpoint: Endpoint,
    /// Chain over the indices `[0, N] \ {c}` in increasing order.
    markov: MarkovModelParams,
    /// `Γ_k` in the same order as the chain.
    gammas: Vec<DMatrix<f64>>,
    xc_cov: DMatrix<f64>,
}

impl RepresentationSpec {
    pub fn new(
        endpoint: Endpoint,
        markov: MarkovModelParams,
        gammas: Vec<DMatrix<f64>>,
        xc_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = markov.dim();
        if gammas.len() != markov.last() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} gammas for a chain of {} states",
                gammas.len(),
                markov.last() + 1
            )));
        }
        for g in &gammas {
            check_shape(g, d, "Γ_k")?;
        }
        check_shape(&xc_cov, d, "Cov(x_c)")?;
        validate_spd(&xc_cov, "Cov(x_c)")?;
        Ok(Self {
            endpoint,
            markov,
            gammas,
            xc_cov,
        })
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    /// Final index `N` of the represented sequence.
    pub fn last(&self) -> usize {
        self.markov.last() + 1
    }

    pub fn dim(&self) -> usize {
        self.markov.dim()
    }

    pub fn markov(&self) -> &MarkovModelParams {
        &self.markov
    }

    pub fn gammas(&self) -> &[DMatrix<f64>] {
        &self.gammas
    }

    pub fn xc_cov(&self) -> &DMatrix<f64> {
        &self.xc_cov
    }

    /// Global sequence index of chain position `i`.
    fn global(&self, i: usize) -> usize {
        match self.endpoint {
            Endpoint::Last => i,
            Endpoint::First => i + 1,
        }
    }
}

/// CM model parameters generating the represented sequence.
///
/// For `c = N`: `G_{k,k-1} = M_{k,k-1}`, `G_{k,N} = Γ_k - M_{k,k-1} Γ_{k-1}`,
/// `G_k = M_k`, with BC2 `x_N = e_N ~ Cov(x_N)`, `x_0 = Γ_0 x_N + y_0`.
/// For `c = 0` the same with the chain shifted by one and BC1
/// `x_0 = e_0`, `x_1 = Γ_1 x_0 + y_1`.
pub fn construct_cm(spec: &RepresentationSpec) -> Result<CmlModelParams> {
    let n = spec.last();
    let chain = spec.markov();
    let g = spec.gammas();
    // chain step i (1-based) moves from chain position i-1 to i
    let steps: Vec<CmStep> = (1..=chain.last())
        .map(|i| {
            let m = chain.transition(i);
            CmStep {
                transition: m.clone(),
                coupling: &g[i] - m * &g[i - 1],
                noise_cov: chain.noise_cov(i).clone(),
            }
        })
        .collect();
    let (steps, boundary) = match spec.endpoint() {
        // interior k = 1..N-1 is chain steps 1..N-1; chain step N does not exist
        Endpoint::Last => (
            steps,
            BoundaryCondition::Bc2 {
                cov_ec: spec.xc_cov().clone(),
                g_0c: g[0].clone(),
                cov_e0: chain.initial_cov().clone(),
            },
        ),
        Endpoint::First => (
            steps,
            BoundaryCondition::Bc1 {
                cov_e0: spec.xc_cov().clone(),
                g_c0: g[0].clone(),
                cov_ec: chain.initial_cov().clone(),
            },
        ),
    };
    let model = CmlModelParams::new(spec.endpoint(), n, steps, boundary)?;
    cml_joint_covariance(&model)?;
    Ok(model)
}

/// Joint covariance straight from the representation:
/// `Cov(x_k, x_l) = Cov(y_k, y_l) + Γ_k Cov(x_c) Γ_l'`, `Cov(x_k, x_c) = Γ_k Cov(x_c)`.
pub fn representation_joint_covariance(spec: &RepresentationSpec) -> Result<JointCovariance> {
    let n = spec.last();
    let c = spec.endpoint().index(n);
    let y = markov_joint_covariance(spec.markov())?;
    let s = spec.xc_cov();
    let g = spec.gammas();
    let mut out = BlockMatrix::zeros(n + 1, spec.dim());
    out.set_block(c, c, s);
    for i in 0..g.len() {
        let ki = spec.global(i);
        let cross = &g[i] * s;
        out.set_block(ki, c, &cross);
        out.set_block(c, ki, &cross.transpose());
        for j in 0..g.len() {
            let kj = spec.global(j);
            out.set_block(ki, kj, &(y.block(i, j) + &g[i] * s * g[j].transpose()));
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Split a CM_c covariance into `Γ_k`, `Cov(x_c)` and the Markov law of the
/// residual `y_k = x_k - Γ_k x_c`.
///
/// The residual covariance is the covariance of `x` without `x_c`,
/// conditioned on `x_c`; `C` is CM_c exactly when that is Markov, which is
/// checked by [`classify`] at `tol`.
pub fn decompose_cm(c: &JointCovariance, endpoint: Endpoint, tol: f64) -> Result<RepresentationSpec> {
    let n = c.last();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "decomposition needs at least two states".into(),
        ));
    }
    let ci = endpoint.index(n);
    let others: Vec<usize> = (0..=n).filter(|&k| k != ci).collect();
    let s = c.block(ci, ci);
    let s_inv = spd_inverse(&s, "Cov(x_c)")?;
    let gammas: Vec<DMatrix<f64>> = others.iter().map(|&k| c.block(k, ci) * &s_inv).collect();

    let mut ycov = BlockMatrix::from_blocks(others.len(), c.block_dim(), |i, j| {
        c.block(others[i], others[j]) - &gammas[i] * &s * gammas[j].transpose()
    });
    ycov.symmetrize();

    let report = classify(&ycov, tol).map_err(|e| Error::NotConditionallyMarkov {
        c: ci,
        reason: format!("residual covariance invalid: {e}"),
    })?;
    if !report.tri_diagonal {
        return Err(Error::NotConditionallyMarkov {
            c: ci,
            reason: format!(
                "residual sequence is not Markov (off-band precision mass {:.3e} >= {tol:.1e})",
                report.residuals.tri_diagonal
            ),
        });
    }

    let markov = markov_from_covariance(&ycov)?;
    RepresentationSpec::new(endpoint, markov, gammas, s)
}

/// Markov parameters reproducing a covariance whose precision is tri-diagonal:
/// `M_{k,k-1} = Cov(y_k, y_{k-1}) Cov(y_{k-1})^{-1}`,
/// `M_k = Cov(y_k) - M_{k,k-1} Cov(y_{k-1}, y_k)`.
pub fn markov_from_covariance(c: &JointCovariance) -> Result<MarkovModelParams> {
    let n = c.last();
    let mut transitions = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for k in 1..=n {
        let prev_inv = spd_inverse(&c.block(k - 1, k - 1), "Cov(y_k-1)")?;
        let m = c.block(k, k - 1) * prev_inv;
        let q = c.block(k, k) - &m * c.block(k - 1, k);
        transitions.push(m);
        noise.push((&q + q.transpose()) * 0.5);
    }
    MarkovModelParams::new(c.block(0, 0), transitions, noise)
}

/// Largest `‖C_{k,c} - Γ_k Cov(x_c)‖_F`, relative to the largest block of
/// `C`: the cross-covariance between the recovered residual and `x_c`.
pub fn residual_cross_covariance(c: &JointCovariance, spec: &RepresentationSpec) -> f64 {
    let n = c.last();
    let ci = spec.endpoint().index(n);
    let s = c.block(ci, ci);
    let scale = c.max_block_norm();
    let worst = (0..spec.gammas().len())
        .map(|i| (c.block(spec.global(i), ci) - &spec.gammas()[i] * &s).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Outcome of decomposing with respect to both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub cml_decomposition: bool,
    pub cmf_decomposition: bool,
    pub both: bool,
    pub classifier_reciprocal: bool,
    /// `both == classifier_reciprocal`.
    pub consistent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cml_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cmf_error: Option<String>,
}

/// A sequence is reciprocal iff it has a Markov-plus-vector representation
/// with respect to both `x_N` and `x_0`. Runs both decompositions and
/// cross-checks against the structural classifier.
pub fn verify_dual_representation(c: &JointCovariance, tol: f64) -> Result<DualReport> {
    let l = decompose_cm(c, Endpoint::Last, tol);
    let f = decompose_cm(c, Endpoint::First, tol);
    let classifier_reciprocal = classify(c, tol)?.cyclic_tri_diagonal;
    let both = l.is_ok() && f.is_ok();
    Ok(DualReport {
        cml_decomposition: l.is_ok(),
        cmf_decomposition: f.is_ok(),
        both,
        classifier_reciprocal,
        consistent: both == classifier_reciprocal,
        cml_error: l.err().map(|e| e.to_string()),
        cmf_error: f.err().map(|e| e.to_string()),
    })
}
