//! JSON model files.
//!
//! Every document carries `schema_version: "1"`, a `kind`, the block size `d`
//! and the last index `N`. Matrices are row-major nested arrays. Loading
//! validates everything the library constructors validate; saving writes the
//! shortest decimal form that parses back to the same doubles.

use cmseq::cml::{BoundaryCondition, CmStep, CmlModelParams, Endpoint};
use cmseq::gaussian::validate_spd;
use cmseq::markov::MarkovModelParams;
use cmseq::representation::RepresentationSpec;
use cmseq::{BlockMatrix, Error, JointCovariance};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDoc {
    pub initial_cov: Rows,
    pub transitions: Vec<Rows>,
    pub noise_covs: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDoc {
    pub k: usize,
    pub transition: Rows,
    pub coupling: Rows,
    pub noise_cov: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundaryDoc {
    Bc1 { cov_e0: Rows, g_c0: Rows, cov_ec: Rows },
    Bc2 { cov_ec: Rows, g_0c: Rows, cov_e0: Rows },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Body {
    Markov {
        d: usize,
        #[serde(rename = "N")]
        n: usize,
        #[serde(flatten)]
        chain: ChainDoc,
    },
    Cml {
        d: usize,
        #[serde(rename = "N")]
        n: usize,
        c: usize,
        steps: Vec<StepDoc>,
        boundary: BoundaryDoc,
    },
    Representation {
        d: usize,
        #[serde(rename = "N")]
        n: usize,
        c: usize,
        /// Chain over `[0, N] \ {c}`.
        chain: ChainDoc,
        gammas: Vec<Rows>,
        xc_cov: Rows,
    },
    Covariance {
        d: usize,
        #[serde(rename = "N")]
        n: usize,
        covariance: Rows,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    #[serde(flatten)]
    pub body: Body,
}

/// A validated model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Markov(MarkovModelParams),
    Cml(CmlModelParams),
    Representation(RepresentationSpec),
    Covariance(JointCovariance),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Markov(_) => "markov",
            Model::Cml(_) => "cml",
            Model::Representation(_) => "representation",
            Model::Covariance(_) => "covariance",
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn matrix(rows: &Rows, r: usize, c: usize, what: &str) -> Result<DMatrix<f64>, Error> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{what} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn square(rows: &Rows, d: usize, what: &str) -> Result<DMatrix<f64>, Error> {
    matrix(rows, d, d, what)
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn endpoint(c: usize, n: usize) -> Result<Endpoint, Error> {
    match c {
        0 => Ok(Endpoint::First),
        c if c == n => Ok(Endpoint::Last),
        _ => Err(invalid(format!("c must be 0 or N = {n}, got {c}"))),
    }
}

fn chain(doc: &ChainDoc, d: usize, n: usize) -> Result<MarkovModelParams, Error> {
    if doc.transitions.len() != n || doc.noise_covs.len() != n {
        return Err(invalid(format!("chain of last index {n} needs {n} transitions and noise covariances")));
    }
    let transitions = doc
        .transitions
        .iter()
        .enumerate()
        .map(|(i, m)| square(m, d, &format!("transitions[{i}]")))
        .collect::<Result<_, _>>()?;
    let noise = doc
        .noise_covs
        .iter()
        .enumerate()
        .map(|(i, m)| square(m, d, &format!("noise_covs[{i}]")))
        .collect::<Result<_, _>>()?;
    MarkovModelParams::new(square(&doc.initial_cov, d, "initial_cov")?, transitions, noise)
}

fn chain_doc(p: &MarkovModelParams) -> ChainDoc {
    ChainDoc {
        initial_cov: rows(p.initial_cov()),
        transitions: p.transitions().iter().map(rows).collect(),
        noise_covs: p.noise_covs().iter().map(rows).collect(),
    }
}

fn boundary(doc: &BoundaryDoc, d: usize) -> Result<BoundaryCondition, Error> {
    Ok(match doc {
        BoundaryDoc::Bc1 { cov_e0, g_c0, cov_ec } => BoundaryCondition::Bc1 {
            cov_e0: square(cov_e0, d, "boundary.cov_e0")?,
            g_c0: square(g_c0, d, "boundary.g_c0")?,
            cov_ec: square(cov_ec, d, "boundary.cov_ec")?,
        },
        BoundaryDoc::Bc2 { cov_ec, g_0c, cov_e0 } => BoundaryCondition::Bc2 {
            cov_ec: square(cov_ec, d, "boundary.cov_ec")?,
            g_0c: square(g_0c, d, "boundary.g_0c")?,
            cov_e0: square(cov_e0, d, "boundary.cov_e0")?,
        },
    })
}

pub fn boundary_doc(b: &BoundaryCondition) -> BoundaryDoc {
    match b {
        BoundaryCondition::Bc1 { cov_e0, g_c0, cov_ec } => BoundaryDoc::Bc1 {
            cov_e0: rows(cov_e0),
            g_c0: rows(g_c0),
            cov_ec: rows(cov_ec),
        },
        BoundaryCondition::Bc2 { cov_ec, g_0c, cov_e0 } => BoundaryDoc::Bc2 {
            cov_ec: rows(cov_ec),
            g_0c: rows(g_0c),
            cov_e0: rows(cov_e0),
        },
    }
}

/// Boundary read from a standalone `{type: "bc1" | "bc2", ...}` document.
pub fn load_boundary(text: &str, d: usize) -> Result<BoundaryCondition, Error> {
    let doc: BoundaryDoc = serde_json::from_str(text).map_err(|e| invalid(format!("boundary file: {e}")))?;
    let b = boundary(&doc, d)?;
    b.validate(d)?;
    Ok(b)
}

fn positive_d(d: usize) -> Result<usize, Error> {
    if d == 0 {
        Err(invalid("d must be at least 1"))
    } else {
        Ok(d)
    }
}

impl TryFrom<&ModelFile> for Model {
    type Error = Error;

    fn try_from(f: &ModelFile) -> Result<Self, Error> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {:?}, expected {SCHEMA_VERSION:?}",
                f.schema_version
            )));
        }
        Ok(match &f.body {
            Body::Markov { d, n, chain: doc } => Model::Markov(chain(doc, positive_d(*d)?, *n)?),
            Body::Cml { d, n, c, steps, boundary: b } => {
                let d = positive_d(*d)?;
                let ep = endpoint(*c, *n)?;
                let interior: Vec<usize> = ep.interior(*n).collect();
                let listed: Vec<usize> = steps.iter().map(|s| s.k).collect();
                if listed != interior {
                    return Err(invalid(format!("steps must list k = {interior:?} in order, got {listed:?}")));
                }
                let steps = steps
                    .iter()
                    .map(|s| {
                        Ok(CmStep {
                            transition: square(&s.transition, d, &format!("steps[k={}].transition", s.k))?,
                            coupling: square(&s.coupling, d, &format!("steps[k={}].coupling", s.k))?,
                            noise_cov: square(&s.noise_cov, d, &format!("steps[k={}].noise_cov", s.k))?,
                        })
                    })
                    .collect::<Result<_, Error>>()?;
                Model::Cml(CmlModelParams::new(ep, *n, steps, boundary(b, d)?)?)
            }
            Body::Representation { d, n, c, chain: doc, gammas, xc_cov } => {
                let d = positive_d(*d)?;
                let ep = endpoint(*c, *n)?;
                if *n == 0 {
                    return Err(invalid("a representation needs N >= 1"));
                }
                let gammas = gammas
                    .iter()
                    .enumerate()
                    .map(|(i, g)| square(g, d, &format!("gammas[{i}]")))
                    .collect::<Result<_, _>>()?;
                Model::Representation(RepresentationSpec::new(
                    ep,
                    chain(doc, d, n - 1)?,
                    gammas,
                    square(xc_cov, d, "xc_cov")?,
                )?)
            }
            Body::Covariance { d, n, covariance } => {
                let d = positive_d(*d)?;
                let size = d * (n + 1);
                let m = matrix(covariance, size, size, "covariance")?;
                validate_spd(&m, "covariance")?;
                Model::Covariance(BlockMatrix::new(m, d)?)
            }
        })
    }
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        let body = match m {
            Model::Markov(p) => Body::Markov {
                d: p.dim(),
                n: p.last(),
                chain: chain_doc(p),
            },
            Model::Cml(p) => Body::Cml {
                d: p.dim(),
                n: p.last(),
                c: p.conditioning_index(),
                steps: p
                    .endpoint()
                    .interior(p.last())
                    .zip(p.steps())
                    .map(|(k, s)| StepDoc {
                        k,
                        transition: rows(&s.transition),
                        coupling: rows(&s.coupling),
                        noise_cov: rows(&s.noise_cov),
                    })
                    .collect(),
                boundary: boundary_doc(p.boundary()),
            },
            Model::Representation(s) => Body::Representation {
                d: s.dim(),
                n: s.last(),
                c: s.endpoint().index(s.last()),
                chain: chain_doc(s.markov()),
                gammas: s.gammas().iter().map(rows).collect(),
                xc_cov: rows(s.xc_cov()),
            },
            Model::Covariance(c) => Body::Covariance {
                d: c.block_dim(),
                n: c.last(),
                covariance: rows(c.as_matrix()),
            },
        };
        ModelFile {
            schema_version: SCHEMA_VERSION.into(),
            body,
        }
    }
}

/// Parse and validate a model document.
pub fn load(text: &str) -> Result<Model, Error> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| invalid(format!("model file: {e}")))?;
    Model::try_from(&file)
}

pub fn save(model: &Model) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from(model)).expect("model documents always serialize");
    s.push('\n');
    s
}
