//! Destination-conditioned trajectories.
//!
//! A nearly-constant-velocity (NCV) Markov model describes free motion; the
//! reciprocal CM_L model induced from it keeps the same conditional
//! evolution given the destination while letting the origin/destination
//! law be anything. Sampling draws the endpoint pair first and fills the
//! interior with the induced recursion.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::cml::{sample_cml, BoundaryCondition, CmlModelParams, EndpointJoint};
use crate::error::{Error, Result};
use crate::gaussian::{check_shape, relative_difference, GaussianSpec, Sequence};
use crate::induction::induce_reciprocal_cml;
use crate::markov::MarkovModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct NcvConfig {
    pub spatial_dims: usize,
    /// Time step in seconds.
    pub dt: f64,
    /// White-acceleration power spectral density `q`.
    pub process_noise_intensity: f64,
    /// Number of steps `N`.
    pub steps: usize,
    /// Law of `x_0`; state is `[pos, vel]` per axis.
    pub origin: GaussianSpec,
    pub origin_mean: DVector<f64>,
    /// Law of `x_N`.
    pub destination: GaussianSpec,
    pub destination_mean: DVector<f64>,
    /// `Cov(x_0, x_N)`; `None` means independent endpoints.
    pub endpoint_cross: Option<DMatrix<f64>>,
}

impl NcvConfig {
    /// Zero-mean endpoints, independent of each other.
    pub fn new(
        spatial_dims: usize,
        dt: f64,
        process_noise_intensity: f64,
        steps: usize,
        origin: GaussianSpec,
        destination: GaussianSpec,
    ) -> Self {
        let d = 2 * spatial_dims;
        Self {
            spatial_dims,
            dt,
            process_noise_intensity,
            steps,
            origin,
            origin_mean: DVector::zeros(d),
            destination,
            destination_mean: DVector::zeros(d),
            endpoint_cross: None,
        }
    }

    pub fn with_means(mut self, origin: DVector<f64>, destination: DVector<f64>) -> Self {
        self.origin_mean = origin;
        self.destination_mean = destination;
        self
    }

    pub fn with_endpoint_cross(mut self, cross: DMatrix<f64>) -> Self {
        self.endpoint_cross = Some(cross);
        self
    }

    pub fn state_dim(&self) -> usize {
        2 * self.spatial_dims
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.spatial_dims) {
            return Err(Error::InvalidParameter(format!(
                "spatial dimensions must be 1..=3, got {}",
                self.spatial_dims
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.process_noise_intensity.is_finite() && self.process_noise_intensity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "process noise intensity must be positive, got {}",
                self.process_noise_intensity
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("need at least one step".into()));
        }
        let d = self.state_dim();
        check_shape(self.origin.covariance(), d, "origin covariance")?;
        check_shape(self.destination.covariance(), d, "destination covariance")?;
        if self.origin_mean.len() != d || self.destination_mean.len() != d {
            return Err(Error::Dimension(format!("endpoint means must have length {d}")));
        }
        if let Some(cross) = &self.endpoint_cross {
            check_shape(cross, d, "endpoint cross-covariance")?;
        }
        Ok(())
    }
}

/// Per-axis NCV discretisation, block diagonal across axes:
/// `F = [[1, dt], [0, 1]]`, `Q = q [[dt³/3, dt²/2], [dt²/2, dt]]`.
pub fn build_ncv_markov(cfg: &NcvConfig) -> Result<MarkovModelParams> {
    cfg.validate()?;
    let (dt, q) = (cfg.dt, cfg.process_noise_intensity);
    let d = cfg.state_dim();
    let mut f = DMatrix::zeros(d, d);
    let mut noise = DMatrix::zeros(d, d);
    for axis in 0..cfg.spatial_dims {
        let o = 2 * axis;
        f[(o, o)] = 1.0;
        f[(o, o + 1)] = dt;
        f[(o + 1, o + 1)] = 1.0;
        noise[(o, o)] = q * dt.powi(3) / 3.0;
        noise[(o, o + 1)] = q * dt.powi(2) / 2.0;
        noise[(o + 1, o)] = q * dt.powi(2) / 2.0;
        noise[(o + 1, o + 1)] = q * dt;
    }
    MarkovModelParams::stationary(cfg.origin.covariance().clone(), f, noise, cfg.steps)
}

/// Induced CM_L model with the configured origin/destination law as its
/// boundary (BC2 form).
pub fn destination_conditioned_model(cfg: &NcvConfig) -> Result<CmlModelParams> {
    let induced = induce_reciprocal_cml(&build_ncv_markov(cfg)?)?;
    let d = cfg.state_dim();
    let joint = EndpointJoint {
        cov_first: cfg.origin.covariance().clone(),
        cross: cfg.endpoint_cross.clone().unwrap_or_else(|| DMatrix::zeros(d, d)),
        cov_partner: cfg.destination.covariance().clone(),
    };
    let boundary = match &cfg.endpoint_cross {
        // Exact zeros rather than a computed 0 * inverse.
        None => BoundaryCondition::Bc2 {
            cov_ec: joint.cov_partner,
            g_0c: DMatrix::zeros(d, d),
            cov_e0: joint.cov_first,
        },
        Some(_) => joint.to_bc2().map_err(|e| {
            Error::InvalidParameter(format!("origin/destination law is not a valid Gaussian: {e}"))
        })?,
    };
    induced.with_boundary(boundary)
}

/// Endpoint sample statistics against the configured laws.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointDiagnostics {
    pub origin_sample_mean: DVector<f64>,
    pub origin_sample_cov: DMatrix<f64>,
    pub destination_sample_mean: DVector<f64>,
    pub destination_sample_cov: DMatrix<f64>,
    /// Relative Frobenius errors of the sample covariances.
    pub origin_cov_error: f64,
    pub destination_cov_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub model: CmlModelParams,
    /// `E[x_k]`, obtained by running the recursion without noise from the
    /// endpoint means.
    pub mean_path: Sequence,
    pub trajectories: Vec<Sequence>,
    /// `None` with fewer than two trajectories.
    pub diagnostics: Option<EndpointDiagnostics>,
}

fn mean_and_cov(xs: &[&DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(d), |acc, x| acc + *x) / n;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        let c = *x - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / (n - 1.0))
}

/// Sample `count` trajectories from origin to destination. Trajectory `i`
/// depends only on `(seed, i)`.
pub fn generate_destination_conditioned(cfg: &NcvConfig, count: usize, seed: u64) -> Result<TrajectoryBatch> {
    let model = destination_conditioned_model(cfg)?;
    let n = cfg.steps;
    let mean_path = model.propagate_noiseless(&cfg.origin_mean, &cfg.destination_mean);
    let mut trajectories = sample_cml(&model, count, seed)?;
    for t in &mut trajectories {
        for (x, m) in t.iter_mut().zip(&mean_path) {
            *x += m;
        }
    }

    let diagnostics = (count >= 2).then(|| {
        let first: Vec<_> = trajectories.iter().map(|t| &t[0]).collect();
        let last: Vec<_> = trajectories.iter().map(|t| &t[n]).collect();
        let (om, oc) = mean_and_cov(&first);
        let (dm, dc) = mean_and_cov(&last);
        EndpointDiagnostics {
            origin_cov_error: relative_difference(&oc, cfg.origin.covariance()),
            destination_cov_error: relative_difference(&dc, cfg.destination.covariance()),
            origin_sample_mean: om,
            origin_sample_cov: oc,
            destination_sample_mean: dm,
            destination_sample_cov: dc,
        }
    });

    Ok(TrajectoryBatch {
        model,
        mean_path,
        trajectories,
        diagnostics,
    })
}

/// `pos_x, vel_x, pos_y, vel_y, …` for NCV states.
pub fn ncv_columns(spatial_dims: usize) -> Vec<String> {
    ["x", "y", "z"]
        .iter()
        .take(spatial_dims)
        .flat_map(|a| [format!("pos_{a}"), format!("vel_{a}")])
        .collect()
}

/// `x0, x1, …` for generic states.
pub fn generic_columns(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

/// CSV with header `traj_id,k,<columns>` and one row per (trajectory, index).
pub fn write_csv<W: Write>(mut w: W, trajectories: &[Sequence], columns: &[String]) -> io::Result<()> {
    write!(w, "traj_id,k")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (id, t) in trajectories.iter().enumerate() {
        for (k, x) in t.iter().enumerate() {
            write!(w, "{id},{k}")?;
            for v in x.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cml::cml_joint_covariance;
    use crate::markov::markov_joint_covariance;
    use nalgebra::dmatrix;

    fn cfg(dims: usize, dt: f64, q: f64) -> NcvConfig {
        let d = 2 * dims;
        NcvConfig::new(
            dims,
            dt,
            q,
            10,
            GaussianSpec::new(DMatrix::identity(d, d)).unwrap(),
            GaussianSpec::new(DMatrix::identity(d, d) * 0.1).unwrap(),
        )
    }

    #[test]
    fn unit_step_ncv() {
        let m = build_ncv_markov(&cfg(1, 1.0, 1.0)).unwrap();
        assert_eq!(m.transition(1), &dmatrix![1.0, 1.0; 0.0, 1.0]);
        let q = m.noise_cov(1);
        assert!((q - dmatrix![1.0 / 3.0, 0.5; 0.5, 1.0]).abs().max() < 1e-15);
    }

    #[test]
    fn degenerate_configs_rejected() {
        assert!(build_ncv_markov(&cfg(1, 0.0, 1.0)).is_err());
        assert!(build_ncv_markov(&cfg(1, 1.0, 0.0)).is_err());
        let mut c = cfg(1, 1.0, 1.0);
        c.spatial_dims = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn two_axes_block_diagonal() {
        let m = build_ncv_markov(&cfg(2, 0.5, 2.0)).unwrap();
        let one = build_ncv_markov(&cfg(1, 0.5, 2.0)).unwrap();
        let f = m.transition(1);
        let q = m.noise_cov(1);
        for axis in 0..2 {
            let o = 2 * axis;
            assert_eq!(f.view((o, o), (2, 2)), one.transition(1).view((0, 0), (2, 2)));
            assert_eq!(q.view((o, o), (2, 2)), one.noise_cov(1).view((0, 0), (2, 2)));
        }
        assert_eq!(f.view((0, 2), (2, 2)).abs().max(), 0.0);
        assert_eq!(q.view((2, 0), (2, 2)).abs().max(), 0.0);
    }

    #[test]
    fn endpoint_marginals_exact() {
        let c = cfg(2, 0.5, 1.0);
        let model = destination_conditioned_model(&c).unwrap();
        let joint = cml_joint_covariance(&model).unwrap();
        assert!(relative_difference(&joint.block(0, 0), c.origin.covariance()) < 1e-10);
        assert!(relative_difference(&joint.block(10, 10), c.destination.covariance()) < 1e-10);
        assert_eq!(joint.block(0, 10).abs().max(), 0.0);
    }

    #[test]
    fn markov_endpoint_law_recovers_free_motion() {
        let base = cfg(1, 1.0, 0.5);
        let free = markov_joint_covariance(&build_ncv_markov(&base).unwrap()).unwrap();
        let c = NcvConfig {
            destination: GaussianSpec::new(free.block(10, 10)).unwrap(),
            ..base
        }
        .with_endpoint_cross(free.block(0, 10));
        let joint = cml_joint_covariance(&destination_conditioned_model(&c).unwrap()).unwrap();
        assert!(relative_difference(joint.as_matrix(), free.as_matrix()) < 1e-8);
    }

    #[test]
    fn inconsistent_cross_covariance_is_a_config_error() {
        let c = cfg(1, 1.0, 1.0).with_endpoint_cross(DMatrix::identity(2, 2) * 5.0);
        assert!(matches!(
            destination_conditioned_model(&c),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn empty_batch() {
        let b = generate_destination_conditioned(&cfg(1, 1.0, 1.0), 0, 1).unwrap();
        assert!(b.trajectories.is_empty());
        assert!(b.diagnostics.is_none());
    }

    #[test]
    fn mean_path_hits_endpoints() {
        let c = cfg(1, 1.0, 1.0).with_means(dmatrix![0.0; 1.0].column(0).into(), dmatrix![10.0; 0.0].column(0).into());
        let b = generate_destination_conditioned(&c, 3, 5).unwrap();
        assert_eq!(b.mean_path[0], c.origin_mean);
        assert_eq!(b.mean_path[10], c.destination_mean);
        let p = &b.mean_path;
        assert!(p.windows(2).all(|w| w[1][0] >= w[0][0] - 1e-12), "monotone progress in position");
    }

    #[test]
    fn csv_layout() {
        let t = vec![vec![DVector::from_vec(vec![1.0, 0.5]), DVector::from_vec(vec![2.0, -0.25])]];
        let mut out = Vec::new();
        write_csv(&mut out, &t, &ncv_columns(1)).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "traj_id,k,pos_x,vel_x\n0,0,1,0.5\n0,1,2,-0.25\n"
        );
        assert_eq!(ncv_columns(3).len(), 6);
    }
}
