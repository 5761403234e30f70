//! Dense complex matrix toolkit shared by every module.
//!
//! Conventions:
//! * definiteness is decided from Hermitian eigenvalues, never from a
//!   Cholesky attempt, so that "how close to singular" is observable;
//! * pseudoinverses come from an SVD with a relative singular value cutoff;
//! * residuals are measured entrywise and scaled by `1 + max|operand|`, so
//!   the same tolerance works for small and large data.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Condition estimate above which callers should warn the user that
/// results may have lost significant accuracy.
pub const COND_WARN: f64 = 1e10;

/// Tolerance policy threaded through all numeric decisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Relative tolerance for identity residuals (round trips, algebraic
    /// identities, moment matches).
    pub rtol_identity: f64,
    /// Eigenvalue floor for semidefiniteness decisions, relative to the
    /// spectral scale of the matrix.
    pub psd_floor: f64,
    /// Relative singular value cutoff for pseudoinverses and solves.
    pub pinv_rcond: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            rtol_identity: 1e-8,
            psd_floor: 1e-10,
            pinv_rcond: 1e-12,
        }
    }
}

impl TolerancePolicy {
    /// Builds a policy, rejecting values outside (0, 1].
    pub fn new(rtol_identity: f64, psd_floor: f64, pinv_rcond: f64) -> Result<Self> {
        let p = TolerancePolicy {
            rtol_identity,
            psd_floor,
            pinv_rcond,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default policy with a different identity tolerance.
    pub fn with_rtol(rtol_identity: f64) -> Result<Self> {
        let d = TolerancePolicy::default();
        TolerancePolicy::new(rtol_identity, d.psd_floor, d.pinv_rcond)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol_identity", self.rtol_identity),
            ("psd_floor", self.psd_floor),
            ("pinv_rcond", self.pinv_rcond),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Invalid(format!(
                    "tolerance {name} must lie in (0, 1], got {v:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest entry magnitude; 0 for an empty matrix.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.norm()))
}

/// Entrywise residual between `a` and `b`, relative to `1 + max|entry|`.
pub fn rel_residual(a: &CMat, b: &CMat) -> f64 {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return f64::INFINITY;
    }
    let scale = 1.0 + max_abs(a).max(max_abs(b));
    max_abs(&(a - b)) / scale
}

/// True when every entry is finite.
pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Hermitian test: square and `max|A - A*| <= rtol_identity * (1 + max|A|)`.
pub fn is_hermitian(a: &CMat, tol: &TolerancePolicy) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let dev = max_abs(&(a - a.adjoint()));
    dev <= tol.rtol_identity * (1.0 + max_abs(a))
}

/// Hermitian part `(A + A*) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Eigenvalues of the Hermitian part of a square matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let h = hermitian_part(a);
    let mut eigs: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| x.total_cmp(y));
    Ok(eigs)
}

fn definite_from_eigs(a: &CMat, tol: &TolerancePolicy, strict: bool) -> bool {
    if !is_hermitian(a, tol) || !all_finite(a) {
        return false;
    }
    let eigs = match hermitian_eigenvalues(a) {
        Ok(e) => e,
        Err(_) => return false,
    };
    if eigs.is_empty() {
        return true;
    }
    let spread = eigs.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let floor = tol.psd_floor * spread.max(1.0);
    let min = eigs[0];
    if strict {
        min > floor
    } else {
        min >= -floor
    }
}

/// Nonnegative definiteness via Hermitian eigenvalues. Non-Hermitian or
/// non-finite input reports `false` rather than erroring.
pub fn is_nonneg_definite(a: &CMat, tol: &TolerancePolicy) -> bool {
    definite_from_eigs(a, tol, false)
}

/// Strict positive definiteness with a margin of `psd_floor * scale`.
pub fn is_pos_definite(a: &CMat, tol: &TolerancePolicy) -> bool {
    definite_from_eigs(a, tol, true)
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `pinv_rcond * sigma_max` are treated as zero; the zero matrix maps to
/// the zero matrix of transposed shape.
pub fn moore_penrose(a: &CMat, tol: &TolerancePolicy) -> CMat {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return CMat::zeros(c, r);
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    if smax == 0.0 {
        return CMat::zeros(c, r);
    }
    let cutoff = tol.pinv_rcond * smax;
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut inv_s = DMatrix::<C64>::zeros(vt.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            inv_s[(i, i)] = C64::new(1.0 / s, 0.0);
        }
    }
    vt.adjoint() * inv_s * u.adjoint()
}

/// Spectral condition estimate `sigma_max / sigma_min`; infinite when the
/// smallest singular value vanishes.
pub fn condition_estimate(a: &CMat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let svd = SVD::new(a.clone(), false, false);
    let mut smin = f64::INFINITY;
    let mut smax = 0.0f64;
    for &s in svd.singular_values.iter() {
        smin = smin.min(s);
        smax = smax.max(s);
    }
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

struct CheckedSvd {
    svd: SVD<C64, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
}

fn checked_svd(a: &CMat, block: &str, tol: &TolerancePolicy) -> Result<CheckedSvd> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{block} must be square to invert, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension(format!("{block} is empty")));
    }
    let svd = SVD::new(a.clone(), true, true);
    let mut smin = f64::INFINITY;
    let mut smax = 0.0f64;
    for &s in svd.singular_values.iter() {
        smin = smin.min(s);
        smax = smax.max(s);
    }
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if smax == 0.0 || smin <= tol.pinv_rcond * smax {
        return Err(Error::Conditioning {
            block: block.to_string(),
            cond,
        });
    }
    Ok(CheckedSvd { svd, cond })
}

/// Inverse of a square matrix with an explicit singularity check. The
/// `block` label names the matrix in the error message.
pub fn checked_inverse(a: &CMat, block: &str, tol: &TolerancePolicy) -> Result<CMat> {
    let c = checked_svd(a, block, tol)?;
    let u = c.svd.u.as_ref().expect("svd requested u");
    let vt = c.svd.v_t.as_ref().expect("svd requested v_t");
    let n = a.nrows();
    let mut inv_s = DMatrix::<C64>::zeros(n, n);
    for (i, &s) in c.svd.singular_values.iter().enumerate() {
        inv_s[(i, i)] = C64::new(1.0 / s, 0.0);
    }
    Ok(vt.adjoint() * inv_s * u.adjoint())
}

/// Solves `A X = B` with the same singularity policy as [`checked_inverse`],
/// returning the condition estimate alongside the solution.
pub fn checked_solve(
    a: &CMat,
    b: &CMat,
    block: &str,
    tol: &TolerancePolicy,
) -> Result<(CMat, f64)> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve with {block}: lhs is {}x{} but rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let c = checked_svd(a, block, tol)?;
    let x = c
        .svd
        .solve(b, 0.0)
        .map_err(|e| Error::Invalid(format!("solve with {block}: {e}")))?;
    Ok((x, c.cond))
}

/// Solves `X A = B` (right division) with the same singularity policy.
pub fn checked_solve_right(a: &CMat, b: &CMat, block: &str, tol: &TolerancePolicy) -> Result<CMat> {
    // X A = B  <=>  A^* X^* = B^*.
    let (xt, _) = checked_solve(&a.adjoint(), &b.adjoint(), block, tol)?;
    Ok(xt.adjoint())
}

/// JSON shape for complex matrices:
/// `{"rows": r, "cols": c, "re": [[...]], "im": [[...]]}` with row-major
/// real and imaginary parts.
pub mod json {
    use super::{all_finite, CMat, C64};
    use crate::{Error, Result};
    use serde::{Deserialize, Serialize};

    #[derive(Clone, Debug, Serialize, Deserialize)]
    pub struct RawMat {
        pub rows: usize,
        pub cols: usize,
        pub re: Vec<Vec<f64>>,
        pub im: Vec<Vec<f64>>,
    }

    impl RawMat {
        pub fn from_mat(a: &CMat) -> Self {
            let (rows, cols) = a.shape();
            let mut re = vec![vec![0.0; cols]; rows];
            let mut im = vec![vec![0.0; cols]; rows];
            for i in 0..rows {
                for j in 0..cols {
                    re[i][j] = a[(i, j)].re;
                    im[i][j] = a[(i, j)].im;
                }
            }
            RawMat { rows, cols, re, im }
        }

        pub fn try_into_mat(self) -> Result<CMat> {
            let RawMat { rows, cols, re, im } = self;
            if re.len() != rows || im.len() != rows {
                return Err(Error::Dimension(format!(
                    "matrix claims {rows} rows but re/im have {}/{}",
                    re.len(),
                    im.len()
                )));
            }
            let mut out = CMat::zeros(rows, cols);
            for i in 0..rows {
                if re[i].len() != cols || im[i].len() != cols {
                    return Err(Error::Dimension(format!(
                        "matrix claims {cols} cols but row {i} has re/im {}/{}",
                        re[i].len(),
                        im[i].len()
                    )));
                }
                for j in 0..cols {
                    out[(i, j)] = C64::new(re[i][j], im[i][j]);
                }
            }
            if !all_finite(&out) {
                return Err(Error::Structure(
                    "matrix entries must be finite".to_string(),
                ));
            }
            Ok(out)
        }
    }

    impl From<&CMat> for RawMat {
        fn from(a: &CMat) -> Self {
            RawMat::from_mat(a)
        }
    }

    /// `#[serde(with = "...")]` adapter for a single matrix field.
    pub mod one {
        use super::*;
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(a: &CMat, s: S) -> core::result::Result<S::Ok, S::Error> {
            RawMat::from_mat(a).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> core::result::Result<CMat, D::Error> {
            RawMat::deserialize(d)?
                .try_into_mat()
                .map_err(serde::de::Error::custom)
        }
    }

    /// `#[serde(with = "...")]` adapter for a `Vec<CMat>` field.
    pub mod many {
        use super::*;
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> core::result::Result<S::Ok, S::Error> {
            let raw: Vec<RawMat> = v.iter().map(RawMat::from_mat).collect();
            raw.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> core::result::Result<Vec<CMat>, D::Error> {
            let raw = Vec::<RawMat>::deserialize(d)?;
            raw.into_iter()
                .map(|r| r.try_into_mat().map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Builds a matrix from rows of `(re, im)` pairs; test and example helper.
pub fn mat_from_rows(rows: &[&[(f64, f64)]]) -> CMat {
    let r = rows.len();
    let c = if r == 0 { 0 } else { rows[0].len() };
    CMat::from_fn(r, c, |i, j| C64::new(rows[i][j].0, rows[i][j].1))
}

/// Builds a real matrix from rows of `f64`; test and example helper.
pub fn mat_real(rows: &[&[f64]]) -> CMat {
    let r = rows.len();
    let c = if r == 0 { 0 } else { rows[0].len() };
    CMat::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
}

/// q x q scalar matrix `x * I` as a 1x1 when q = 1; test helper.
pub fn scalar(x: f64) -> CMat {
    CMat::from_element(1, 1, C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    #[test]
    fn tolerance_policy_rejects_out_of_range() {
        assert!(TolerancePolicy::new(0.0, 1e-10, 1e-12).is_err());
        assert!(TolerancePolicy::new(1e-8, -1.0, 1e-12).is_err());
        assert!(TolerancePolicy::new(1e-8, 1e-10, 1.5).is_err());
        assert!(TolerancePolicy::new(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn hermitian_detection() {
        let a = mat_from_rows(&[&[(1.0, 0.0), (0.0, 1.0)], &[(0.0, -1.0), (2.0, 0.0)]]);
        assert!(is_hermitian(&a, &tol()));
        let b = mat_from_rows(&[&[(1.0, 0.0), (0.0, 1.0)], &[(0.0, 1.0), (2.0, 0.0)]]);
        assert!(!is_hermitian(&b, &tol()));
        let rect = CMat::zeros(2, 3);
        assert!(!is_hermitian(&rect, &tol()));
    }

    #[test]
    fn definiteness_from_eigenvalues() {
        let indefinite = mat_real(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(!is_nonneg_definite(&indefinite, &tol()));
        assert!(!is_pos_definite(&indefinite, &tol()));

        let psd = mat_real(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(is_nonneg_definite(&psd, &tol()));
        assert!(!is_pos_definite(&psd, &tol()));

        let pd = mat_real(&[&[1.0, 1.0], &[1.0, 2.0]]);
        assert!(is_pos_definite(&pd, &tol()));
    }

    #[test]
    fn pseudoinverse_satisfies_penrose_equations() {
        let a = mat_from_rows(&[
            &[(1.0, 0.5), (2.0, 0.0), (0.0, -1.0)],
            &[(0.0, 0.0), (1.0, 1.0), (3.0, 0.0)],
        ]);
        let p = moore_penrose(&a, &tol());
        assert_eq!(p.shape(), (3, 2));
        let apa = &a * &p * &a;
        let pap = &p * &a * &p;
        assert!(rel_residual(&apa, &a) < 1e-12);
        assert!(rel_residual(&pap, &p) < 1e-12);
        let ap = &a * &p;
        let pa = &p * &a;
        assert!(rel_residual(&ap, &ap.adjoint()) < 1e-12);
        assert!(rel_residual(&pa, &pa.adjoint()) < 1e-12);
    }

    #[test]
    fn pseudoinverse_of_rank_deficient_and_zero() {
        let z = CMat::zeros(2, 2);
        assert_eq!(moore_penrose(&z, &tol()), CMat::zeros(2, 2));

        // Rank one: ones(2,2)/2 is its own pseudoinverse scaled by 1/2.
        let ones = mat_real(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let p = moore_penrose(&ones, &tol());
        let expect = ones.scale(0.25);
        assert!(rel_residual(&p, &expect) < 1e-12);
    }

    #[test]
    fn checked_inverse_flags_singularity() {
        let s = mat_real(&[&[1.0, 1.0], &[1.0, 1.0]]);
        match checked_inverse(&s, "test block", &tol()) {
            Err(Error::Conditioning { block, .. }) => assert_eq!(block, "test block"),
            other => panic!("expected conditioning error, got {other:?}"),
        }
        let a = mat_real(&[&[1.0, 1.0], &[1.0, 2.0]]);
        let inv = checked_inverse(&a, "A", &tol()).unwrap();
        let expect = mat_real(&[&[2.0, -1.0], &[-1.0, 1.0]]);
        assert!(rel_residual(&inv, &expect) < 1e-12);
    }

    #[test]
    fn solve_left_and_right_agree_with_inverse() {
        let a = mat_from_rows(&[&[(2.0, 0.0), (0.0, 1.0)], &[(0.0, -1.0), (3.0, 0.0)]]);
        let b = mat_from_rows(&[&[(1.0, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (1.0, 0.0)]]);
        let inv = checked_inverse(&a, "A", &tol()).unwrap();
        let (x, cond) = checked_solve(&a, &b, "A", &tol()).unwrap();
        assert!(rel_residual(&x, &inv) < 1e-12);
        assert!(cond.is_finite() && cond >= 1.0);
        let y = checked_solve_right(&a, &b, "A", &tol()).unwrap();
        assert!(rel_residual(&y, &inv) < 1e-12);
    }

    #[test]
    fn residual_scale_is_relative() {
        let a = mat_real(&[&[1e8]]);
        let b = mat_real(&[&[1e8 + 1.0]]);
        assert!(rel_residual(&a, &b) < 2e-8);
        let c = mat_real(&[&[0.0]]);
        let d = mat_real(&[&[1e-12]]);
        assert!(rel_residual(&c, &d) < 1e-11);
    }

    #[test]
    fn matrix_json_round_trip() {
        let a = mat_from_rows(&[&[(1.0, -2.0), (0.5, 0.0)], &[(0.0, 3.0), (-1.0, 0.25)]]);
        let raw = json::RawMat::from_mat(&a);
        let text = serde_json::to_string(&raw).unwrap();
        let back: json::RawMat = serde_json::from_str(&text).unwrap();
        assert_eq!(back.try_into_mat().unwrap(), a);

        let bad = r#"{"rows":2,"cols":2,"re":[[1.0,2.0]],"im":[[0.0,0.0]]}"#;
        let parsed: json::RawMat = serde_json::from_str(bad).unwrap();
        assert!(parsed.try_into_mat().is_err());
    }

    #[test]
    fn condition_estimate_matches_known_values() {
        let id = CMat::identity(3, 3);
        assert!((condition_estimate(&id) - 1.0).abs() < 1e-12);
        let sing = mat_real(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(condition_estimate(&sing).is_infinite());
    }
}
