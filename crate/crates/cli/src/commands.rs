use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cmseq::cml::{cml_joint_covariance, sample_cml, BoundaryCondition, Endpoint};
use cmseq::gaussian::sample;
use cmseq::induction::{check_markov_condition, check_reciprocal_condition, induce_reciprocal_cml, ConditionReport};
use cmseq::markov::{markov_joint_covariance, sample_markov};
use cmseq::representation::{construct_cm, decompose_cm, representation_joint_covariance};
use cmseq::structure::{check_corollary, classify, StructureReport};
use cmseq::trajectory::{generate_destination_conditioned, generic_columns, ncv_columns, write_csv, NcvConfig};
use cmseq::{Error, GaussianSpec, JointCovariance, Sequence};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model_file::{load, load_boundary, save, Model};
use crate::{BoundaryChoice, CliError, Conditioning};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write to `out`, or standard output when absent. Files are written to a
/// sibling temporary and renamed, so a failed run leaves no partial file.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let Some(path) = out else {
        let mut stdout = std::io::stdout().lock();
        return stdout.write_all(bytes).map_err(|e| CliError::io(Path::new("<stdout>"), e));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s.into_bytes()
}

fn joint_covariance(model: &Model) -> Result<JointCovariance, Error> {
    match model {
        Model::Markov(p) => markov_joint_covariance(p),
        Model::Cml(p) => cml_joint_covariance(p),
        Model::Representation(s) => representation_joint_covariance(s),
        Model::Covariance(c) => Ok(c.clone()),
    }
}

fn wrong_kind(command: &str, expected: &str, model: &Model) -> CliError {
    Error::InvalidParameter(format!("{command} expects a {expected} model file, got {}", model.kind())).into()
}

pub fn induce(
    input: &Path,
    out: Option<&Path>,
    choice: BoundaryChoice,
    boundary_file: Option<&Path>,
    verbose: bool,
) -> Result<(), CliError> {
    let model = load(&read(input)?)?;
    let Model::Markov(p) = &model else {
        return Err(wrong_kind("induce", "markov", &model));
    };
    let induced = induce_reciprocal_cml(p)?;
    let result = match choice {
        BoundaryChoice::Markov => induced,
        BoundaryChoice::Independent => {
            let c = markov_joint_covariance(p)?;
            let d = p.dim();
            induced.with_boundary(BoundaryCondition::Bc2 {
                cov_ec: c.block(c.last(), c.last()),
                g_0c: DMatrix::zeros(d, d),
                cov_e0: c.block(0, 0),
            })?
        }
        BoundaryChoice::File => {
            let path = boundary_file.ok_or_else(|| CliError::Usage("--boundary file requires --boundary-file".into()))?;
            induced.with_boundary(load_boundary(&read(path)?, p.dim())?)?
        }
    };
    if verbose {
        eprintln!(
            "induced CM_L model: d = {}, N = {}, {} interior steps, boundary {:?}",
            result.dim(),
            result.last(),
            result.steps().len(),
            choice
        );
    }
    emit(out, save(&Model::Cml(result)).as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub input_kind: String,
    #[serde(flatten)]
    pub report: StructureReport,
    pub corollary_consistent: bool,
}

pub fn classify_cmd(input: &Path, tol: f64, verbose: bool) -> Result<(), CliError> {
    let model = load(&read(input)?)?;
    let report = classify(&joint_covariance(&model)?, tol)?;
    let out = ClassifyOutput {
        input_kind: model.kind().into(),
        corollary_consistent: check_corollary(&report),
        report,
    };
    if verbose {
        let r = &out.report;
        eprintln!(
            "markov {} reciprocal {} cm_l {} cm_f {} (tol {:e}, corollary consistent {})",
            r.tri_diagonal, r.cyclic_tri_diagonal, r.cml_form, r.cmf_form, tol, out.corollary_consistent
        );
    }
    emit(None, &json(&out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub reciprocal: ConditionReport,
    pub markov: ConditionReport,
}

pub fn verify(input: &Path, tol: f64, verbose: bool) -> Result<(), CliError> {
    let model = load(&read(input)?)?;
    let Model::Cml(p) = &model else {
        return Err(wrong_kind("verify", "cml", &model));
    };
    let out = VerifyOutput {
        reciprocal: check_reciprocal_condition(p, tol)?,
        markov: check_markov_condition(p, tol)?,
    };
    if verbose {
        for r in [&out.reciprocal, &out.markov] {
            eprintln!("{}: {:?}, max residual {:e}", r.condition, r.verdict, r.max_residual());
        }
    }
    emit(None, &json(&out))
}

fn split(x: &DVector<f64>, d: usize) -> Sequence {
    x.as_slice().chunks(d).map(DVector::from_column_slice).collect()
}

pub fn sample_cmd(input: &Path, count: usize, seed: u64, out: Option<&Path>, verbose: bool) -> Result<(), CliError> {
    let model = load(&read(input)?)?;
    let (samples, d) = match &model {
        Model::Markov(p) => (sample_markov(p, count, seed)?, p.dim()),
        Model::Cml(p) => (sample_cml(p, count, seed)?, p.dim()),
        Model::Representation(s) => (sample_cml(&construct_cm(s)?, count, seed)?, s.dim()),
        Model::Covariance(c) => {
            let spec = GaussianSpec::new(c.as_matrix().clone())?;
            let d = c.block_dim();
            (sample(&spec, count, seed)?.iter().map(|x| split(x, d)).collect(), d)
        }
    };
    let mut buf = Vec::new();
    write_csv(&mut buf, &samples, &generic_columns(d)).map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    if verbose {
        eprintln!("sampled {count} sequences from a {} model (seed {seed})", model.kind());
    }
    emit(out, &buf)
}

pub fn decompose(input: &Path, c: Conditioning, tol: f64, out: Option<&Path>, verbose: bool) -> Result<(), CliError> {
    let model = load(&read(input)?)?;
    let cov = joint_covariance(&model)?;
    let endpoint = match c {
        Conditioning::First => Endpoint::First,
        Conditioning::Last => Endpoint::Last,
    };
    let spec = decompose_cm(&cov, endpoint, tol)?;
    if verbose {
        eprintln!(
            "decomposed about x_{}: d = {}, N = {}",
            endpoint.index(spec.last()),
            spec.dim(),
            spec.last()
        );
    }
    emit(out, save(&Model::Representation(spec)).as_bytes())
}

/// Endpoint law: `{covariance: [[...]], mean?: [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointFile {
    pub covariance: Vec<Vec<f64>>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
}

fn load_endpoint(path: &Path) -> Result<(GaussianSpec, DVector<f64>), CliError> {
    let f: EndpointFile = serde_json::from_str(&read(path)?)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    let n = f.covariance.len();
    if n == 0 || f.covariance.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{}: covariance must be square and non-empty", path.display())).into());
    }
    let cov = DMatrix::from_fn(n, n, |i, j| f.covariance[i][j]);
    let mean = match f.mean {
        Some(m) if m.len() != n => {
            return Err(Error::Dimension(format!("{}: mean must have length {n}", path.display())).into())
        }
        Some(m) => DVector::from_vec(m),
        None => DVector::zeros(n),
    };
    Ok((GaussianSpec::new(cov)?, mean))
}

pub struct NcvArgs {
    pub dt: f64,
    pub q: f64,
    pub steps: usize,
    pub origin_file: PathBuf,
    pub dest_file: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn demo_ncv(args: &NcvArgs, verbose: bool) -> Result<(), CliError> {
    let (origin, origin_mean) = load_endpoint(&args.origin_file)?;
    let (dest, dest_mean) = load_endpoint(&args.dest_file)?;
    let d = origin.dim();
    if d % 2 != 0 || dest.dim() != d {
        return Err(Error::Dimension(format!(
            "endpoint states must be [pos, vel] per axis with matching sizes, got {d} and {}",
            dest.dim()
        ))
        .into());
    }
    let cfg = NcvConfig::new(d / 2, args.dt, args.q, args.steps, origin, dest).with_means(origin_mean, dest_mean);
    let batch = generate_destination_conditioned(&cfg, args.count, args.seed)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &batch.trajectories, &ncv_columns(cfg.spatial_dims))
        .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    if verbose {
        eprintln!("{} trajectories over {} steps", args.count, args.steps);
        if let Some(diag) = &batch.diagnostics {
            eprintln!(
                "endpoint covariance error: origin {:.3e}, destination {:.3e}",
                diag.origin_cov_error, diag.destination_cov_error
            );
        }
    }
    emit(args.out.as_deref(), &buf)
}
