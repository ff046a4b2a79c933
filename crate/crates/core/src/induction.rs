//! Reciprocal CM_L models induced by a Markov model, and the algebraic
//! conditions that single out reciprocal and Markov CM models.
//!
//! Given a Markov model `y_k = M_{k,k-1} y_{k-1} + e_k` (noise `M_k`), the
//! endpoint predictor from index `k` is `p(y_N | y_k) = N(M_{N|k} y_k, C_{N|k})`
//! with
//!
//! ```text
//! M_{N|k} = M_{N,N-1} ⋯ M_{k+1,k},            M_{N|N} = I
//! C_{N|k} = Σ_{n=k}^{N-1} M_{N|n+1} M_{n+1} M_{N|n+1}'
//! ```
//!
//! and the induced interior parameters, `k = 1..N-1`, are
//!
//! ```text
//! G_k       = (M_k^{-1} + M_{N|k}' C_{N|k}^{-1} M_{N|k})^{-1}
//! G_{k,N}   = G_k M_{N|k}' C_{N|k}^{-1}
//! G_{k,k-1} = M_{k,k-1} - G_{k,N} M_{N|k-1}
//! ```
//!
//! The induced interior is reciprocal whatever boundary is attached to it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cml::{BoundaryCondition, CmStep, CmlModelParams, Endpoint, EndpointJoint};
use crate::error::{Error, Result};
use crate::gaussian::{cholesky, condition, spd_inverse};
use crate::markov::{markov_joint_covariance, MarkovModelParams};

/// Endpoint-prediction chain of a Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedQuantities {
    /// `M_{N|k}` for `k = 0..=N`.
    pub gain_to_last: Vec<DMatrix<f64>>,
    /// `C_{N|k}` for `k = 0..N`.
    pub cov_to_last: Vec<DMatrix<f64>>,
}

/// Accumulate `M_{N|k}` and `C_{N|k}` backwards from `k = N`.
pub fn propagate(p: &MarkovModelParams) -> Result<PropagatedQuantities> {
    let n = p.last();
    let d = p.dim();
    let mut gain = vec![DMatrix::zeros(d, d); n + 1];
    let mut cov = vec![DMatrix::zeros(d, d); n];
    gain[n] = DMatrix::identity(d, d);
    let mut acc = DMatrix::zeros(d, d);
    for k in (0..n).rev() {
        // C_{N|k} = C_{N|k+1} + M_{N|k+1} M_{k+1} M_{N|k+1}'
        acc += &gain[k + 1] * p.noise_cov(k + 1) * gain[k + 1].transpose();
        acc = (&acc + acc.transpose()) * 0.5;
        cov[k] = acc.clone();
        gain[k] = &gain[k + 1] * p.transition(k + 1);
    }
    Ok(PropagatedQuantities {
        gain_to_last: gain,
        cov_to_last: cov,
    })
}

/// Interior steps of the induced CM_L model, for `k = 1..N-1`.
pub fn induced_interior(p: &MarkovModelParams) -> Result<Vec<CmStep>> {
    let n = p.last();
    let pq = propagate(p)?;
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let c_inv = cholesky(&pq.cov_to_last[k], "C_N|k")
            .map_err(|_| Error::SingularPropagatedCovariance { k })?
            .inverse();
        let m_nk = &pq.gain_to_last[k];
        let info = spd_inverse(p.noise_cov(k), "M_k")? + m_nk.transpose() * &c_inv * m_nk;
        let noise_cov = spd_inverse(&info, "G_k^{-1}")?;
        let coupling = &noise_cov * m_nk.transpose() * &c_inv;
        let transition = p.transition(k) - &coupling * &pq.gain_to_last[k - 1];
        steps.push(CmStep {
            transition,
            coupling,
            noise_cov,
        });
    }
    Ok(steps)
}

/// Boundary that reproduces the Markov model's own endpoint law, in BC2 form.
pub fn markov_endpoint_boundary(p: &MarkovModelParams) -> Result<BoundaryCondition> {
    let c = markov_joint_covariance(p)?;
    let n = p.last();
    EndpointJoint {
        cov_first: c.block(0, 0),
        cross: c.block(0, n),
        cov_partner: c.block(n, n),
    }
    .to_bc2()
}

/// Induced reciprocal CM_L model.
///
/// The boundary is the Markov-consistent one from
/// [`markov_endpoint_boundary`], so the result has exactly the joint law of
/// the Markov model. Replace it through [`CmlModelParams::with_boundary`] to
/// impose other origin/destination laws; the model stays reciprocal.
pub fn induce_reciprocal_cml(p: &MarkovModelParams) -> Result<CmlModelParams> {
    if p.last() == 0 {
        return Err(Error::InvalidParameter(
            "inducing a CM_L model needs N >= 1".into(),
        ));
    }
    let steps = induced_interior(p)?;
    CmlModelParams::new(Endpoint::Last, p.last(), steps, markov_endpoint_boundary(p)?)
}

/// `(G_{k,k-1}, G_{k,N}, G_k)` by direct Gaussian conditioning of the Markov
/// joint covariance on `y_{k-1}` and `y_N`.
pub fn conditioning_oracle(p: &MarkovModelParams, k: usize) -> Result<CmStep> {
    let n = p.last();
    if k == 0 || k >= n {
        return Err(Error::IndexOutOfRange {
            index: k,
            valid: format!("1..{n}"),
        });
    }
    let joint = markov_joint_covariance(p)?.select(&[k, k - 1, n]);
    let cond = condition(&joint, &[1, 2])?;
    let d = p.dim();
    Ok(CmStep {
        transition: cond.gain.columns(0, d).into_owned(),
        coupling: cond.gain.columns(d, d).into_owned(),
        noise_cov: cond.cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The condition has no instances for this `N`.
    Vacuous,
}

impl Verdict {
    /// Vacuous conditions hold.
    pub fn holds(self) -> bool {
        !matches!(self, Verdict::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResidual {
    pub k: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub per_k_residuals: Vec<StepResidual>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl ConditionReport {
    fn from_residuals(condition: &str, residuals: Vec<StepResidual>, tol: f64) -> Self {
        let verdict = if residuals.is_empty() {
            Verdict::Vacuous
        } else if residuals.iter().all(|r| r.residual < tol) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            condition: condition.to_string(),
            per_k_residuals: residuals,
            tolerance: tol,
            verdict,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.per_k_residuals
            .iter()
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }
}

/// Compare `lhs = P_a G_a` with `rhs = H' P_b G_b`, where the `P` are
/// precisions. Relative to the largest of the terms and of the precision
/// factors they carry, so an identity whose sides are both zero (up to
/// rounding) reads as satisfied.
fn precision_balance(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>, scales: &[f64]) -> f64 {
    let scale = scales
        .iter()
        .copied()
        .chain([lhs.norm(), rhs.norm()])
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).norm() / scale
    }
}

/// `G_k^{-1} G_{k,c}` against `G_{k+1,k}' G_{k+1}^{-1} G_{k+1,c}` at each
/// applicable `k`.
fn reciprocal_residuals(p: &CmlModelParams) -> Result<Vec<StepResidual>> {
    let n = p.last();
    let ks = match p.endpoint() {
        Endpoint::Last => 1..n.saturating_sub(1),
        Endpoint::First => 2..n,
    };
    let mut out = Vec::new();
    for k in ks {
        let (a, b) = (p.step(k).expect("interior"), p.step(k + 1).expect("interior"));
        let pa = spd_inverse(&a.noise_cov, "G_k")?;
        let pb = spd_inverse(&b.noise_cov, "G_k+1")?;
        let lhs = &pa * &a.coupling;
        let carried = b.transition.transpose() * &pb;
        let rhs = &carried * &b.coupling;
        let residual = precision_balance(&lhs, &rhs, &[pa.norm(), carried.norm()]);
        out.push(StepResidual { k, residual });
    }
    Ok(out)
}

/// Check that a CM model is reciprocal:
/// `G_k^{-1} G_{k,c} = G_{k+1,k}' G_{k+1}^{-1} G_{k+1,c}` for
/// `k ∈ (0, N-1)` when `c = N` and `k ∈ (1, N)` when `c = 0`.
///
/// Each residual is the Frobenius norm of the difference relative to the
/// largest of the two sides and the precisions `G_k^{-1}`,
/// `G_{k+1,k}' G_{k+1}^{-1}`. Reports [`Verdict::Vacuous`] for `N < 3`.
pub fn check_reciprocal_condition(p: &CmlModelParams, tol: f64) -> Result<ConditionReport> {
    Ok(ConditionReport::from_residuals(
        "reciprocal",
        reciprocal_residuals(p)?,
        tol,
    ))
}

/// Check that a CM model is Markov: the reciprocal condition plus the
/// boundary identity matching the model's form.
///
/// - `c = N`, BC1: `G_N^{-1} G_{N,0} = G_{1,N}' G_1^{-1} G_{1,0}` (entry `k = N`)
/// - `c = N`, BC2: `G_0^{-1} G_{0,N} = G_{1,0}' G_1^{-1} G_{1,N}` (entry `k = 0`)
/// - `c = 0`: `G_{N,0} = 0`, measured as `G_N^{-1} G_{N,0}` (entry `k = N`)
///
/// where `G_0`, `G_N` in the boundary identities are the boundary noise
/// covariances. The report lists the reciprocal residuals followed by the
/// boundary residual. `N = 1` is vacuous.
pub fn check_markov_condition(p: &CmlModelParams, tol: f64) -> Result<ConditionReport> {
    let n = p.last();
    let mut residuals = reciprocal_residuals(p)?;
    let label;
    match p.endpoint() {
        Endpoint::Last => {
            label = if p.boundary().is_bc1() {
                "markov_bc1"
            } else {
                "markov_bc2"
            };
            if let Some(first) = p.step(1) {
                let p1 = spd_inverse(&first.noise_cov, "G_1")?;
                let entry = match p.boundary() {
                    BoundaryCondition::Bc1 { g_c0, cov_ec, .. } => {
                        let pn = spd_inverse(cov_ec, "G_N")?;
                        let lhs = &pn * g_c0;
                        let carried = first.coupling.transpose() * &p1;
                        let rhs = &carried * &first.transition;
                        StepResidual {
                            k: n,
                            residual: precision_balance(&lhs, &rhs, &[pn.norm(), carried.norm()]),
                        }
                    }
                    BoundaryCondition::Bc2 { g_0c, cov_e0, .. } => {
                        let p0 = spd_inverse(cov_e0, "G_0")?;
                        let lhs = &p0 * g_0c;
                        let carried = first.transition.transpose() * &p1;
                        let rhs = &carried * &first.coupling;
                        StepResidual {
                            k: 0,
                            residual: precision_balance(&lhs, &rhs, &[p0.norm(), carried.norm()]),
                        }
                    }
                };
                residuals.push(entry);
            }
        }
        Endpoint::First => {
            label = "markov_cmf";
            if let Some(last) = p.step(n) {
                let pn = spd_inverse(&last.noise_cov, "G_N")?;
                let lhs = &pn * &last.coupling;
                let zero = DMatrix::zeros(lhs.nrows(), lhs.ncols());
                let residual = precision_balance(
                    &lhs,
                    &zero,
                    &[pn.norm(), (&pn * &last.transition).norm()],
                );
                residuals.push(StepResidual { k: n, residual });
            }
        }
    }
    Ok(ConditionReport::from_residuals(label, residuals, tol))
}
