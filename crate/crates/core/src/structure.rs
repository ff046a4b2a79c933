//! Classification of a joint covariance by the block support of its inverse.
//!
//! For a nonsingular Gaussian sequence with covariance `C`:
//! - Markov iff `C^{-1}` is block tri-diagonal,
//! - reciprocal iff `C^{-1}` is cyclic block tri-diagonal (band plus the
//!   `(0, N)` corners),
//! - CM_L (CM_F) iff `C^{-1}` is the band plus a dense last (first) block row
//!   and column.
//!
//! Supports nest: tri-diagonal ⊂ cyclic ⊂ CM_L ∩ CM_F, so a sequence is
//! reciprocal exactly when it is both CM_L and CM_F.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{eigenvalue_ratio, spd_inverse, BlockMatrix, JointCovariance};
use crate::tolerance;

/// Allowed block support of a precision matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    TriDiagonal,
    CyclicTriDiagonal,
    CmlForm,
    CmfForm,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::TriDiagonal,
        Pattern::CyclicTriDiagonal,
        Pattern::CmlForm,
        Pattern::CmfForm,
    ];

    /// Whether block `(i, j)` of an `(n + 1)`-block matrix may be nonzero.
    pub fn allows(self, i: usize, j: usize, n: usize) -> bool {
        if i.abs_diff(j) <= 1 {
            return true;
        }
        match self {
            Pattern::TriDiagonal => false,
            Pattern::CyclicTriDiagonal => (i == 0 && j == n) || (i == n && j == 0),
            Pattern::CmlForm => i == n || j == n,
            Pattern::CmfForm => i == 0 || j == 0,
        }
    }
}

/// Relative Frobenius mass of `precision` outside `pattern`.
pub fn off_pattern_mass(precision: &BlockMatrix, pattern: Pattern) -> f64 {
    let n = precision.last();
    let total = precision.as_matrix().norm();
    if total == 0.0 {
        return 0.0;
    }
    let mut off = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            if !pattern.allows(i, j, n) {
                off += precision.block(i, j).norm_squared();
            }
        }
    }
    off.sqrt() / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternResiduals {
    pub tri_diagonal: f64,
    pub cyclic_tri_diagonal: f64,
    pub cml_form: f64,
    pub cmf_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub tri_diagonal: bool,
    pub cyclic_tri_diagonal: bool,
    pub cml_form: bool,
    pub cmf_form: bool,
    /// Off-pattern mass / total mass of the precision matrix, per pattern.
    pub residuals: PatternResiduals,
    pub tolerance: f64,
    /// Smallest over largest eigenvalue of the covariance.
    pub eigenvalue_ratio: f64,
}

impl StructureReport {
    pub fn is_markov(&self) -> bool {
        self.tri_diagonal
    }

    pub fn is_reciprocal(&self) -> bool {
        self.cyclic_tri_diagonal
    }

    pub fn flag(&self, pattern: Pattern) -> bool {
        match pattern {
            Pattern::TriDiagonal => self.tri_diagonal,
            Pattern::CyclicTriDiagonal => self.cyclic_tri_diagonal,
            Pattern::CmlForm => self.cml_form,
            Pattern::CmfForm => self.cmf_form,
        }
    }
}

/// Precision matrix `C^{-1}` with the same block layout.
pub fn precision(c: &JointCovariance) -> Result<BlockMatrix> {
    BlockMatrix::new(spd_inverse(c.as_matrix(), "joint covariance")?, c.block_dim())
}

/// Classify `c` by which patterns its inverse fits within `tol`.
pub fn classify(c: &JointCovariance, tol: f64) -> Result<StructureReport> {
    let ratio = eigenvalue_ratio(c.as_matrix());
    let asym = (c.as_matrix() - c.as_matrix().transpose()).norm() / c.as_matrix().norm();
    if ratio.is_nan() || ratio <= tolerance::SPD || asym > tolerance::SYMMETRY {
        return Err(Error::NotSpd(format!(
            "joint covariance (eigenvalue ratio {ratio:.3e}, asymmetry {asym:.3e})"
        )));
    }
    classify_precision(&precision(c)?, tol, ratio)
}

pub(crate) fn classify_precision(
    prec: &BlockMatrix,
    tol: f64,
    eigenvalue_ratio: f64,
) -> Result<StructureReport> {
    let residuals = PatternResiduals {
        tri_diagonal: off_pattern_mass(prec, Pattern::TriDiagonal),
        cyclic_tri_diagonal: off_pattern_mass(prec, Pattern::CyclicTriDiagonal),
        cml_form: off_pattern_mass(prec, Pattern::CmlForm),
        cmf_form: off_pattern_mass(prec, Pattern::CmfForm),
    };
    Ok(StructureReport {
        tri_diagonal: residuals.tri_diagonal < tol,
        cyclic_tri_diagonal: residuals.cyclic_tri_diagonal < tol,
        cml_form: residuals.cml_form < tol,
        cmf_form: residuals.cmf_form < tol,
        residuals,
        tolerance: tol,
        eigenvalue_ratio,
    })
}

/// Reciprocal iff both CM_L and CM_F. `false` means the thresholds put the
/// flags inconsistent with each other, not that the identity fails.
pub fn check_corollary(report: &StructureReport) -> bool {
    report.cyclic_tri_diagonal == (report.cml_form && report.cmf_form)
}

/// Time reversal: block `(i, j)` moves to `(N - i, N - j)`.
pub fn reverse_index(c: &JointCovariance) -> JointCovariance {
    let n = c.last();
    BlockMatrix::from_blocks(n + 1, c.block_dim(), |i, j| c.block(n - i, n - j))
}

/// Convenience: the report for a raw matrix with block size `d`.
pub fn classify_matrix(m: DMatrix<f64>, block_dim: usize, tol: f64) -> Result<StructureReport> {
    classify(&BlockMatrix::new(m, block_dim)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn flags(r: &StructureReport) -> [bool; 4] {
        [r.tri_diagonal, r.cyclic_tri_diagonal, r.cml_form, r.cmf_form]
    }

    #[test]
    fn random_walk_precision() {
        let c = BlockMatrix::new(dmatrix![1.0, 1.0, 1.0; 1.0, 2.0, 2.0; 1.0, 2.0, 3.0], 1).unwrap();
        let p = precision(&c).unwrap();
        let expected = dmatrix![2.0, -1.0, 0.0; -1.0, 2.0, -1.0; 0.0, -1.0, 1.0];
        assert!((p.as_matrix() - expected).abs().max() < 1e-12);
        let r = classify(&c, tolerance::STRUCTURE).unwrap();
        assert_eq!(flags(&r), [true; 4]);
        assert!(check_corollary(&r));
    }

    #[test]
    fn block_diagonal_fits_everything() {
        let mut c = BlockMatrix::zeros(5, 2);
        for i in 0..5 {
            c.set_block(i, i, &(DMatrix::identity(2, 2) * (i as f64 + 1.0)));
        }
        assert_eq!(flags(&classify(&c, 1e-8).unwrap()), [true; 4]);
    }

    #[test]
    fn corner_only_precision_is_cyclic() {
        // Precision with a (0, 3) corner: reciprocal but not Markov.
        let mut prec = DMatrix::<f64>::identity(4, 4) * 3.0;
        for i in 0..3 {
            prec[(i, i + 1)] = -1.0;
            prec[(i + 1, i)] = -1.0;
        }
        prec[(0, 3)] = 0.5;
        prec[(3, 0)] = 0.5;
        let c = BlockMatrix::new(prec.clone().try_inverse().unwrap(), 1).unwrap();
        let r = classify(&c, 1e-8).unwrap();
        assert_eq!(flags(&r), [false, true, true, true]);
        assert!((r.residuals.tri_diagonal - (0.5f64 * 0.5 * 2.0).sqrt() / prec.norm()).abs() < 1e-12);
    }

    #[test]
    fn corollary_truth_table() {
        let mut r = classify_matrix(DMatrix::identity(3, 3), 1, 1e-8).unwrap();
        r.tri_diagonal = false;
        r.cyclic_tri_diagonal = false;
        r.cmf_form = false;
        assert!(check_corollary(&r));
        r.cmf_form = true;
        assert!(!check_corollary(&r));
    }

    #[test]
    fn reversal() {
        let c = BlockMatrix::new(dmatrix![1.0, 1.0, 1.0; 1.0, 2.0, 2.0; 1.0, 2.0, 3.0], 1).unwrap();
        let r = reverse_index(&c);
        assert_eq!(r.as_matrix(), &dmatrix![3.0, 2.0, 1.0; 2.0, 2.0, 1.0; 1.0, 1.0, 1.0]);
        assert_eq!(reverse_index(&r), c);
        assert!(classify(&r, 1e-8).unwrap().tri_diagonal);
    }

    #[test]
    fn rejects_non_spd() {
        let c = BlockMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0], 1).unwrap();
        assert!(matches!(classify(&c, 1e-8), Err(Error::NotSpd(_))));
    }

    #[test]
    fn report_json_shape() {
        let r = classify_matrix(DMatrix::identity(2, 2), 1, 1e-8).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["cyclic_tri_diagonal"], true);
        assert!(v["residuals"]["cml_form"].is_number());
    }
}
