//! Reciprocal sequences and the Schur-type transform of moment sequences.
//!
//! The reciprocal of `s_0..s_kappa` is built by the convolution recursion
//!
//! ```text
//! r_0 = s_0^+,   r_j = -s_0^+ (s_j r_0 + s_{j-1} r_1 + ... + s_1 r_{j-1})
//! ```
//!
//! so that for invertible `s_0` the two sequences convolve to the identity.
//! The transform of a sequence is `t_j = -s_0 r_{j+1} s_0`, one order
//! shorter; iterating it shifts the Schur-complement parametrization one
//! step per application and preserves the solvability classes.

use serde::{Deserialize, Serialize};

use crate::hankel::{classify_by_definition, MomentSequence, SequenceClass};
use crate::matkit::{self, CMat, TolerancePolicy};
use crate::parametrize;
use crate::{Error, Result};

/// Reciprocal sequence of the same length. Defined for every sequence;
/// a singular `s_0` enters through its pseudoinverse.
pub fn reciprocal(seq: &MomentSequence, tol: &TolerancePolicy) -> Result<MomentSequence> {
    let s0p = matkit::moore_penrose(seq.moment(0), tol);
    let mut rec: Vec<CMat> = Vec::with_capacity(seq.len());
    rec.push(s0p.clone());
    for j in 1..seq.len() {
        let mut acc = CMat::zeros(seq.q(), seq.q());
        for (l, r) in rec.iter().enumerate() {
            acc += seq.moment(j - l) * r;
        }
        rec.push(-(&s0p) * acc);
    }
    MomentSequence::new(seq.q(), rec)
}

/// One application of the transform: `t_j = -s_0 r_{j+1} s_0` for
/// `j = 0..m-1`, where `r` is the reciprocal sequence.
pub fn transform1(seq: &MomentSequence, tol: &TolerancePolicy) -> Result<MomentSequence> {
    if seq.len() < 2 {
        return Err(Error::Length(
            "the transform shortens the sequence and needs order >= 1".into(),
        ));
    }
    let rec = reciprocal(seq, tol)?;
    let s0 = seq.moment(0);
    let out: Vec<CMat> = (0..seq.order())
        .map(|j| -(s0 * rec.moment(j + 1) * s0))
        .collect();
    MomentSequence::new(seq.q(), out)
}

/// The k-fold transform; `k = 0` returns the sequence unchanged.
pub fn transform_k(
    seq: &MomentSequence,
    k: usize,
    tol: &TolerancePolicy,
) -> Result<MomentSequence> {
    if k > seq.order() {
        return Err(Error::Length(format!(
            "transform power {k} exceeds the sequence order {}",
            seq.order()
        )));
    }
    let mut cur = seq.clone();
    for _ in 0..k {
        cur = transform1(&cur, tol)?;
    }
    Ok(cur)
}

/// Residual of the parametrization shift law: the parametrization of the
/// k-fold transform of a nondegenerate sequence must be the original
/// parametrization with its first k entries dropped. Returns the largest
/// relative deviation over all compared parameters.
pub fn transform_shift_check(seq: &MomentSequence, k: usize, tol: &TolerancePolicy) -> Result<f64> {
    let class = classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "the parametrization shift law needs a nondegenerate sequence".into(),
        ));
    }
    let sp = parametrize::sp_forward(seq, tol)?;
    let shifted = sp.shifted(k)?;
    let transformed = transform_k(seq, k, tol)?;
    let sp_t = parametrize::sp_forward(&transformed, tol)?;
    let mut worst = 0.0f64;
    for j in 0..sp_t.len() {
        worst = worst.max(matkit::rel_residual(sp_t.param(j), shifted.param(j)));
    }
    Ok(worst)
}

/// Outcome of checking how the transform acts on the solvability classes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClassPreservation {
    pub input: SequenceClass,
    pub output: SequenceClass,
    /// Nondegeneracy survived the transform (vacuously true when the input
    /// was degenerate).
    pub kg_preserved: bool,
    /// Expected degeneracy order of the output: the input order reduced by
    /// the transform power, clipped at zero.
    pub expected_degenerate: Option<usize>,
    /// The observed output degeneracy matches `expected_degenerate`
    /// (vacuously true when the input was not extendably solvable).
    pub degenerate_as_expected: bool,
}

impl ClassPreservation {
    pub fn pass(&self) -> bool {
        self.kg_preserved && self.degenerate_as_expected
    }
}

/// Transforms the sequence k times and compares the observed classes of
/// input and output against the preservation laws: nondegeneracy is kept,
/// and for extendably solvable inputs the complete-degeneracy order drops
/// by exactly k (saturating at zero).
pub fn class_preservation_check(
    seq: &MomentSequence,
    k: usize,
    tol: &TolerancePolicy,
) -> Result<ClassPreservation> {
    let input = classify_by_definition(seq, tol)?;
    let transformed = transform_k(seq, k, tol)?;
    let output = classify_by_definition(&transformed, tol)?;

    let kg_preserved = !input.in_kg || output.in_kg;
    let expected_degenerate = if input.in_kgge {
        input.completely_degenerate.map(|d| d.saturating_sub(k))
    } else {
        None
    };
    let degenerate_as_expected = if input.in_kgge && input.completely_degenerate.is_some() {
        output.completely_degenerate == expected_degenerate
    } else {
        true
    };

    Ok(ClassPreservation {
        input,
        output,
        kg_preserved,
        expected_degenerate,
        degenerate_as_expected,
    })
}
