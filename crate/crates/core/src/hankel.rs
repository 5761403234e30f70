//! Moment sequences and their block Hankel structure.
//!
//! A sequence `s_0, ..., s_m` of Hermitian q x q matrices generates two
//! families of block Hankel matrices,
//!
//! ```text
//! H_n = [s_{j+k}]_{j,k=0..n}      (needs order >= 2n)
//! K_n = [s_{j+k+1}]_{j,k=0..n}    (needs order >= 2n+1)
//! ```
//!
//! whose definiteness decides whether the sequence is a moment sequence of
//! a nonnegative Hermitian measure on `[0, inf)`. The successive Schur
//! complements of these matrices drive everything else in the crate.

use serde::{Deserialize, Serialize};

use crate::matkit::{self, CMat, TolerancePolicy};
use crate::parametrize;
use crate::{Error, Result};

/// A finite sequence of Hermitian-intended q x q moment matrices.
///
/// Construction validates shape and finiteness. Hermitian structure is not
/// forced here (some intermediate sequences are only approximately
/// Hermitian); operations that need it call [`MomentSequence::ensure_hermitian`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeqRaw", into = "SeqRaw")]
pub struct MomentSequence {
    q: usize,
    moments: Vec<CMat>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SeqRaw {
    q: usize,
    moments: Vec<matkit::json::RawMat>,
}

impl TryFrom<SeqRaw> for MomentSequence {
    type Error = Error;

    fn try_from(raw: SeqRaw) -> Result<Self> {
        let moments = raw
            .moments
            .into_iter()
            .map(|r| r.try_into_mat())
            .collect::<Result<Vec<_>>>()?;
        MomentSequence::new(raw.q, moments)
    }
}

impl From<MomentSequence> for SeqRaw {
    fn from(seq: MomentSequence) -> Self {
        SeqRaw {
            q: seq.q,
            moments: seq
                .moments
                .iter()
                .map(matkit::json::RawMat::from_mat)
                .collect(),
        }
    }
}

impl MomentSequence {
    pub fn new(q: usize, moments: Vec<CMat>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("matrix size q must be positive".into()));
        }
        if moments.is_empty() {
            return Err(Error::Length("a moment sequence needs at least s_0".into()));
        }
        for (j, s) in moments.iter().enumerate() {
            if s.shape() != (q, q) {
                return Err(Error::Dimension(format!(
                    "moment s_{j} is {}x{}, expected {q}x{q}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if !matkit::all_finite(s) {
                return Err(Error::Structure(format!(
                    "moment s_{j} has non-finite entries"
                )));
            }
        }
        Ok(MomentSequence { q, moments })
    }

    /// Scalar (q = 1) sequence from real values; convenience for tests and
    /// examples.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let moments = values.iter().map(|&v| matkit::scalar(v)).collect();
        MomentSequence::new(1, moments)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Highest moment index m (the sequence is `s_0..s_m`).
    pub fn order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The j-th moment; j must not exceed [`MomentSequence::order`].
    pub fn moment(&self, j: usize) -> &CMat {
        &self.moments[j]
    }

    pub fn moments(&self) -> &[CMat] {
        &self.moments
    }

    /// Errors unless every moment is Hermitian within tolerance.
    pub fn ensure_hermitian(&self, tol: &TolerancePolicy) -> Result<()> {
        for (j, s) in self.moments.iter().enumerate() {
            if !matkit::is_hermitian(s, tol) {
                return Err(Error::Structure(format!("moment s_{j} is not Hermitian")));
            }
        }
        Ok(())
    }

    /// The shifted sequence `u_j = s_{j+1}`, one order shorter.
    pub fn shifted(&self) -> Result<Self> {
        if self.moments.len() < 2 {
            return Err(Error::Length("shift needs order >= 1".into()));
        }
        MomentSequence::new(self.q, self.moments[1..].to_vec())
    }

    /// Truncation to order `m`.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.order() {
            return Err(Error::Length(format!(
                "cannot truncate order {} sequence to order {m}",
                self.order()
            )));
        }
        MomentSequence::new(self.q, self.moments[..=m].to_vec())
    }
}

/// Block column `y_{l,m} = col(s_l, ..., s_m)`.
pub(crate) fn y_slice(moments: &[CMat], q: usize, l: usize, m: usize) -> CMat {
    let blocks = m - l + 1;
    let mut out = CMat::zeros(blocks * q, q);
    for (b, j) in (l..=m).enumerate() {
        out.view_mut((b * q, 0), (q, q)).copy_from(&moments[j]);
    }
    out
}

/// Block row `z_{l,m} = row(s_l, ..., s_m)`.
pub(crate) fn z_slice(moments: &[CMat], q: usize, l: usize, m: usize) -> CMat {
    let blocks = m - l + 1;
    let mut out = CMat::zeros(q, blocks * q);
    for (b, j) in (l..=m).enumerate() {
        out.view_mut((0, b * q), (q, q)).copy_from(&moments[j]);
    }
    out
}

/// Block Hankel `[s_{j+k+shift}]_{j,k=0..n}`.
pub(crate) fn hankel_slice(moments: &[CMat], q: usize, shift: usize, n: usize) -> CMat {
    let mut out = CMat::zeros((n + 1) * q, (n + 1) * q);
    for j in 0..=n {
        for k in 0..=n {
            out.view_mut((j * q, k * q), (q, q))
                .copy_from(&moments[j + k + shift]);
        }
    }
    out
}

fn need_order(seq: &MomentSequence, needed: usize, what: &str) -> Result<()> {
    if seq.order() < needed {
        return Err(Error::Length(format!(
            "{what} needs moments through s_{needed}, sequence stops at s_{}",
            seq.order()
        )));
    }
    Ok(())
}

/// `H_n = [s_{j+k}]_{j,k=0..n}`; needs order >= 2n.
pub fn build_h(seq: &MomentSequence, n: usize) -> Result<CMat> {
    need_order(seq, 2 * n, "H_n")?;
    Ok(hankel_slice(&seq.moments, seq.q, 0, n))
}

/// `K_n = [s_{j+k+1}]_{j,k=0..n}`; needs order >= 2n+1.
pub fn build_k(seq: &MomentSequence, n: usize) -> Result<CMat> {
    need_order(seq, 2 * n + 1, "K_n")?;
    Ok(hankel_slice(&seq.moments, seq.q, 1, n))
}

/// Block column of moments `s_l..s_m`.
pub fn y_block(seq: &MomentSequence, l: usize, m: usize) -> Result<CMat> {
    if l > m {
        return Err(Error::Invalid(format!(
            "y block needs l <= m, got l={l}, m={m}"
        )));
    }
    need_order(seq, m, "y block")?;
    Ok(y_slice(&seq.moments, seq.q, l, m))
}

/// Block row of moments `s_l..s_m`.
pub fn z_block(seq: &MomentSequence, l: usize, m: usize) -> Result<CMat> {
    if l > m {
        return Err(Error::Invalid(format!(
            "z block needs l <= m, got l={l}, m={m}"
        )));
    }
    need_order(seq, m, "z block")?;
    Ok(z_slice(&seq.moments, seq.q, l, m))
}

pub(crate) fn schur_l_from(moments: &[CMat], q: usize, n: usize, tol: &TolerancePolicy) -> CMat {
    if n == 0 {
        return moments[0].clone();
    }
    let h = hankel_slice(moments, q, 0, n - 1);
    let y = y_slice(moments, q, n, 2 * n - 1);
    let z = z_slice(moments, q, n, 2 * n - 1);
    &moments[2 * n] - z * matkit::moore_penrose(&h, tol) * y
}

pub(crate) fn schur_lambda_from(
    moments: &[CMat],
    q: usize,
    n: usize,
    tol: &TolerancePolicy,
) -> CMat {
    if n == 0 {
        return moments[1].clone();
    }
    let k = hankel_slice(moments, q, 1, n - 1);
    let y = y_slice(moments, q, n + 1, 2 * n);
    let z = z_slice(moments, q, n + 1, 2 * n);
    &moments[2 * n + 1] - z * matkit::moore_penrose(&k, tol) * y
}

/// Schur complement `L_n = s_{2n} - z_{n,2n-1} H_{n-1}^+ y_{n,2n-1}`
/// (`L_0 = s_0`), always through the Moore-Penrose pseudoinverse so that
/// degenerate sequences are handled uniformly.
pub fn schur_l(seq: &MomentSequence, n: usize, tol: &TolerancePolicy) -> Result<CMat> {
    need_order(seq, 2 * n, "L_n")?;
    Ok(schur_l_from(&seq.moments, seq.q, n, tol))
}

/// Schur complement `Lambda_n = s_{2n+1} - z_{n+1,2n} K_{n-1}^+ y_{n+1,2n}`
/// (`Lambda_0 = s_1`).
pub fn schur_lambda(seq: &MomentSequence, n: usize, tol: &TolerancePolicy) -> Result<CMat> {
    need_order(seq, 2 * n + 1, "Lambda_n")?;
    Ok(schur_lambda_from(&seq.moments, seq.q, n, tol))
}

/// Membership flags for the nested solvability classes of a sequence.
///
/// The flags are monotone: `in_kg` implies `in_kgge` implies `in_kgg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceClass {
    /// The truncated problem is solvable: the top block Hankel matrices
    /// H and K are nonnegative definite.
    pub in_kgg: bool,
    /// Solvable with a one-step extension: the parametrization satisfies
    /// the kernel inclusion chain through its last member.
    pub in_kgge: bool,
    /// Nondegenerate: the top block Hankel matrices are positive definite.
    pub in_kg: bool,
    /// Smallest order at which the truncated sequence becomes completely
    /// degenerate (its top Schur complement vanishes), if any.
    pub completely_degenerate: Option<usize>,
}

impl SequenceClass {
    /// Builds the class record, promoting flags so the inclusion chain
    /// always holds even when two numeric routes sit on opposite sides of
    /// a tolerance boundary.
    pub fn new(
        in_kgg: bool,
        in_kgge: bool,
        in_kg: bool,
        completely_degenerate: Option<usize>,
    ) -> Self {
        let in_kgge = in_kgge || in_kg;
        let in_kgg = in_kgg || in_kgge;
        SequenceClass {
            in_kgg,
            in_kgge,
            in_kg,
            completely_degenerate,
        }
    }
}

/// Classifies a sequence directly from the definitions: definiteness of
/// the top block Hankel matrices for solvability and nondegeneracy, the
/// parametrization kernel criterion for extendability, and vanishing
/// Schur complements for complete degeneracy.
pub fn classify_by_definition(
    seq: &MomentSequence,
    tol: &TolerancePolicy,
) -> Result<SequenceClass> {
    seq.ensure_hermitian(tol)?;
    let m = seq.order();

    let h = build_h(seq, m / 2)?;
    let mut in_kgg = matkit::is_nonneg_definite(&h, tol);
    let mut in_kg = matkit::is_pos_definite(&h, tol);
    if m >= 1 {
        let k = build_k(seq, (m - 1) / 2)?;
        in_kgg = in_kgg && matkit::is_nonneg_definite(&k, tol);
        in_kg = in_kg && matkit::is_pos_definite(&k, tol);
    }

    let sp = parametrize::sp_forward(seq, tol)?;
    let in_kgge = parametrize::classify_from_sp(&sp, tol)?.in_kgge;

    let completely_degenerate = if in_kgg || in_kgge || in_kg {
        (0..=m).find(|&j| {
            let scale = 1.0 + matkit::max_abs(seq.moment(j));
            matkit::max_abs(sp.param(j)) <= tol.psd_floor * scale
        })
    } else {
        None
    };

    Ok(SequenceClass::new(
        in_kgg,
        in_kgge,
        in_kg,
        completely_degenerate,
    ))
}
