//! Conditionally Markov (CM_c) dynamic model
//!
//! ```text
//! x_k = G_{k,k-1} x_{k-1} + G_{k,c} x_c + e_k
//! ```
//!
//! with white Gaussian `e_k` of covariance `G_k`. For `c = N` (CM_L) the
//! interior runs over `k = 1..N-1` and the boundary describes the pair
//! `(x_0, x_N)`. For `c = 0` (CM_F) the interior runs over `k = 2..N` and the
//! boundary describes the pair `(x_0, x_1)`; at `k = 1` the two regressors of
//! the recursion coincide, so that step is part of the boundary law.
//!
//! In both cases the boundary pair is written `(x_0, x_p)` below, with the
//! partner index `p = N` for CM_L and `p = 1` for CM_F. The boundary may be
//! given in either of two equivalent forms:
//!
//! - BC1: `x_0 = e_0`, `x_p = G_{p,0} x_0 + e_p`
//! - BC2: `x_p = e_p`, `x_0 = G_{0,p} x_p + e_0`
//!
//! Both are views of the `2d × 2d` joint covariance of `(x_0, x_p)`
//! ([`EndpointJoint`]), which is what every computation here works from.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    check_shape, lower_factor, spd_inverse, standard_normal_vector, stream_rng, validate_spd,
    BlockMatrix, JointCovariance, Sequence,
};

/// Which end of the interval the sequence is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    /// `c = 0`, CM_F.
    First,
    /// `c = N`, CM_L.
    Last,
}

impl Endpoint {
    /// The conditioning index `c` for a sequence ending at `n`.
    pub fn index(self, n: usize) -> usize {
        match self {
            Endpoint::First => 0,
            Endpoint::Last => n,
        }
    }

    /// Index `p` paired with `x_0` in the boundary law.
    pub fn partner(self, n: usize) -> usize {
        match self {
            Endpoint::First => 1,
            Endpoint::Last => n,
        }
    }

    /// Interior indices driven by the CM recursion.
    pub fn interior(self, n: usize) -> std::ops::Range<usize> {
        match self {
            Endpoint::First => 2..n + 1,
            Endpoint::Last => 1..n,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Endpoint::First => "CM_F",
            Endpoint::Last => "CM_L",
        }
    }
}

/// Joint law of the boundary pair `(x_0, x_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointJoint {
    /// `Cov(x_0)`
    pub cov_first: DMatrix<f64>,
    /// `Cov(x_0, x_p)`
    pub cross: DMatrix<f64>,
    /// `Cov(x_p)`
    pub cov_partner: DMatrix<f64>,
}

impl EndpointJoint {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let d = self.cov_first.nrows();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.cov_first);
        m.view_mut((0, d), (d, d)).copy_from(&self.cross);
        m.view_mut((d, 0), (d, d)).copy_from(&self.cross.transpose());
        m.view_mut((d, d), (d, d)).copy_from(&self.cov_partner);
        m
    }

    pub fn to_bc1(&self) -> Result<BoundaryCondition> {
        let gain = self.cross.transpose() * spd_inverse(&self.cov_first, "Cov(x_0)")?;
        let cov_ec = &self.cov_partner - &gain * &self.cross;
        let cov_ec = (&cov_ec + cov_ec.transpose()) * 0.5;
        validate_spd(&cov_ec, "derived boundary noise covariance")?;
        Ok(BoundaryCondition::Bc1 {
            cov_e0: self.cov_first.clone(),
            g_c0: gain,
            cov_ec,
        })
    }

    pub fn to_bc2(&self) -> Result<BoundaryCondition> {
        let gain = &self.cross * spd_inverse(&self.cov_partner, "Cov(x_p)")?;
        let cov_e0 = &self.cov_first - &gain * self.cross.transpose();
        let cov_e0 = (&cov_e0 + cov_e0.transpose()) * 0.5;
        validate_spd(&cov_e0, "derived boundary noise covariance")?;
        Ok(BoundaryCondition::Bc2 {
            cov_ec: self.cov_partner.clone(),
            g_0c: gain,
            cov_e0,
        })
    }
}

/// Boundary condition of a CM model. Field names use `c` for the partner
/// index `p` of the boundary pair (see the module docs); for CM_F models it
/// refers to index 1.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// `x_0 = e_0`, `x_c = G_{c,0} x_0 + e_c`.
    Bc1 {
        cov_e0: DMatrix<f64>,
        g_c0: DMatrix<f64>,
        cov_ec: DMatrix<f64>,
    },
    /// `x_c = e_c`, `x_0 = G_{0,c} x_c + e_0`.
    Bc2 {
        cov_ec: DMatrix<f64>,
        g_0c: DMatrix<f64>,
        cov_e0: DMatrix<f64>,
    },
}

impl BoundaryCondition {
    pub fn dim(&self) -> usize {
        match self {
            BoundaryCondition::Bc1 { cov_e0, .. } | BoundaryCondition::Bc2 { cov_e0, .. } => {
                cov_e0.nrows()
            }
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let (cov_e0, gain, cov_ec) = match self {
            BoundaryCondition::Bc1 {
                cov_e0,
                g_c0,
                cov_ec,
            } => (cov_e0, g_c0, cov_ec),
            BoundaryCondition::Bc2 {
                cov_ec,
                g_0c,
                cov_e0,
            } => (cov_e0, g_0c, cov_ec),
        };
        check_shape(cov_e0, d, "boundary noise covariance cov_e0")?;
        check_shape(gain, d, "boundary gain")?;
        check_shape(cov_ec, d, "boundary noise covariance cov_ec")?;
        validate_spd(cov_e0, "boundary noise covariance cov_e0")?;
        validate_spd(cov_ec, "boundary noise covariance cov_ec")?;
        Ok(())
    }

    pub fn joint(&self) -> EndpointJoint {
        match self {
            BoundaryCondition::Bc1 {
                cov_e0,
                g_c0,
                cov_ec,
            } => EndpointJoint {
                cov_first: cov_e0.clone(),
                cross: cov_e0 * g_c0.transpose(),
                cov_partner: g_c0 * cov_e0 * g_c0.transpose() + cov_ec,
            },
            BoundaryCondition::Bc2 {
                cov_ec,
                g_0c,
                cov_e0,
            } => EndpointJoint {
                cov_first: g_0c * cov_ec * g_0c.transpose() + cov_e0,
                cross: g_0c * cov_ec,
                cov_partner: cov_ec.clone(),
            },
        }
    }

    /// The same joint endpoint law in the other form.
    pub fn converted(&self) -> Result<BoundaryCondition> {
        match self {
            BoundaryCondition::Bc1 { .. } => self.joint().to_bc2(),
            BoundaryCondition::Bc2 { .. } => self.joint().to_bc1(),
        }
    }

    pub fn is_bc1(&self) -> bool {
        matches!(self, BoundaryCondition::Bc1 { .. })
    }
}

/// One interior step `(G_{k,k-1}, G_{k,c}, G_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmStep {
    pub transition: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmlModelParams {
    endpoint: Endpoint,
    last: usize,
    steps: Vec<CmStep>,
    boundary: BoundaryCondition,
}

impl CmlModelParams {
    /// `steps` lists the interior steps in increasing `k` (see
    /// [`Endpoint::interior`]); there are exactly `n - 1` of them.
    pub fn new(
        endpoint: Endpoint,
        last: usize,
        steps: Vec<CmStep>,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        if last == 0 {
            return Err(Error::InvalidParameter(
                "a CM model needs N >= 1".into(),
            ));
        }
        if steps.len() != last - 1 {
            return Err(Error::InvalidParameter(format!(
                "N = {last} needs {} interior steps, got {}",
                last - 1,
                steps.len()
            )));
        }
        let d = boundary.dim();
        boundary.validate(d)?;
        for (step, k) in steps.iter().zip(endpoint.interior(last)) {
            check_shape(&step.transition, d, &format!("G_{k},{}", k - 1))?;
            check_shape(&step.coupling, d, &format!("G_{k},c"))?;
            check_shape(&step.noise_cov, d, &format!("G_{k}"))?;
            validate_spd(&step.noise_cov, &format!("noise covariance G_{k}"))?;
        }
        Ok(Self {
            endpoint,
            last,
            steps,
            boundary,
        })
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    pub fn dim(&self) -> usize {
        self.boundary.dim()
    }

    pub fn last(&self) -> usize {
        self.last
    }

    /// Conditioning index `c`.
    pub fn conditioning_index(&self) -> usize {
        self.endpoint.index(self.last)
    }

    pub fn steps(&self) -> &[CmStep] {
        &self.steps
    }

    /// Interior step at index `k`.
    pub fn step(&self, k: usize) -> Option<&CmStep> {
        let range = self.endpoint.interior(self.last);
        if range.contains(&k) {
            Some(&self.steps[k - range.start])
        } else {
            None
        }
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.boundary
    }

    pub fn with_boundary(&self, boundary: BoundaryCondition) -> Result<Self> {
        Self::new(self.endpoint, self.last, self.steps.clone(), boundary)
    }

    fn interior_steps(&self) -> impl Iterator<Item = (usize, &CmStep)> {
        self.endpoint.interior(self.last).zip(&self.steps)
    }

    /// Run the recursion without noise from given states at `0` and at the
    /// partner index. With endpoint means this yields the mean path.
    pub fn propagate_noiseless(&self, first: &DVector<f64>, partner: &DVector<f64>) -> Sequence {
        let d = self.dim();
        let c = self.conditioning_index();
        let p = self.endpoint.partner(self.last);
        let mut x = vec![DVector::zeros(d); self.last + 1];
        x[0] = first.clone();
        x[p] = partner.clone();
        for (k, s) in self.interior_steps() {
            x[k] = &s.transition * &x[k - 1] + &s.coupling * &x[c];
        }
        x
    }
}

/// Exact covariance of `x_0, …, x_N` generated by the model.
///
/// Starts from the boundary joint of `(x_0, x_p)` and adds one interior index
/// at a time: since `e_k` is independent of everything generated before it,
/// `Cov(x_k, x_j) = G_{k,k-1} Cov(x_{k-1}, x_j) + G_{k,c} Cov(x_c, x_j)` for
/// every earlier `j`.
pub fn cml_joint_covariance(p: &CmlModelParams) -> Result<JointCovariance> {
    let n = p.last();
    let d = p.dim();
    let c = p.conditioning_index();
    let partner = p.endpoint().partner(n);
    let bj = p.boundary().joint();

    let mut out = BlockMatrix::zeros(n + 1, d);
    out.set_block(0, 0, &bj.cov_first);
    out.set_block(0, partner, &bj.cross);
    out.set_block(partner, 0, &bj.cross.transpose());
    out.set_block(partner, partner, &bj.cov_partner);
    let mut done = vec![0, partner];

    for (k, s) in p.interior_steps() {
        for &j in &done {
            let cross = &s.transition * out.block(k - 1, j) + &s.coupling * out.block(c, j);
            out.set_block(k, j, &cross);
            out.set_block(j, k, &cross.transpose());
        }
        let var = &s.transition * out.block(k - 1, k) + &s.coupling * out.block(c, k) + &s.noise_cov;
        out.set_block(k, k, &var);
        done.push(k);
    }
    out.symmetrize();
    validate_spd(out.as_matrix(), "CM joint covariance")?;
    Ok(out)
}

/// Draw `count` sequences: boundary pair first, then the interior recursion.
pub fn sample_cml(p: &CmlModelParams, count: usize, seed: u64) -> Result<Vec<Sequence>> {
    let d = p.dim();
    let n = p.last();
    let c = p.conditioning_index();
    let partner = p.endpoint().partner(n);
    let (l_e0, l_ec) = match p.boundary() {
        BoundaryCondition::Bc1 { cov_e0, cov_ec, .. } | BoundaryCondition::Bc2 { cov_e0, cov_ec, .. } => (
            lower_factor(cov_e0, "cov_e0")?,
            lower_factor(cov_ec, "cov_ec")?,
        ),
    };
    let factors = p
        .steps()
        .iter()
        .map(|s| lower_factor(&s.noise_cov, "interior noise covariance"))
        .collect::<Result<Vec<_>>>()?;

    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut x = vec![DVector::zeros(d); n + 1];
            match p.boundary() {
                BoundaryCondition::Bc1 { g_c0, .. } => {
                    x[0] = &l_e0 * standard_normal_vector(&mut rng, d);
                    x[partner] = g_c0 * &x[0] + &l_ec * standard_normal_vector(&mut rng, d);
                }
                BoundaryCondition::Bc2 { g_0c, .. } => {
                    x[partner] = &l_ec * standard_normal_vector(&mut rng, d);
                    x[0] = g_0c * &x[partner] + &l_e0 * standard_normal_vector(&mut rng, d);
                }
            }
            for ((k, s), l) in p.interior_steps().zip(&factors) {
                x[k] = &s.transition * &x[k - 1]
                    + &s.coupling * &x[c]
                    + l * standard_normal_vector(&mut rng, d);
            }
            x
        })
        .collect())
}

/// Same model with the boundary written in the other form.
pub fn convert_boundary(p: &CmlModelParams) -> Result<CmlModelParams> {
    p.with_boundary(p.boundary().converted()?)
}
