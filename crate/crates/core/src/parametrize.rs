//! The Schur-complement parametrization of a moment sequence.
//!
//! Interleaving the two Schur complement families gives the sequence
//! `Q_0, Q_1, ..., Q_m` with `Q_{2k} = L_k` and `Q_{2k+1} = Lambda_k`.
//! The map `(s_j) -> (Q_j)` is a bijection on all matrix sequences: each
//! moment can be reconstructed from its parameter by adding back the part
//! explained by the lower-order moments. Membership in the solvability
//! classes is readable off the parameters alone: nonnegativity plus a
//! kernel inclusion chain whose required length distinguishes solvable
//! from extendably solvable sequences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hankel::{self, MomentSequence, SequenceClass};
use crate::matkit::{self, CMat, TolerancePolicy, C64};
use crate::{Error, Result};

/// The interleaved Schur-complement parameters `Q_0..Q_kappa` of a
/// sequence of q x q matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpRaw", into = "SpRaw")]
pub struct StieltjesParam {
    q: usize,
    params: Vec<CMat>,
}

#[derive(Clone, Serialize, Deserialize)]
struct SpRaw {
    q: usize,
    params: Vec<matkit::json::RawMat>,
}

impl TryFrom<SpRaw> for StieltjesParam {
    type Error = Error;

    fn try_from(raw: SpRaw) -> Result<Self> {
        let params = raw
            .params
            .into_iter()
            .map(|r| r.try_into_mat())
            .collect::<Result<Vec<_>>>()?;
        StieltjesParam::new(raw.q, params)
    }
}

impl From<StieltjesParam> for SpRaw {
    fn from(sp: StieltjesParam) -> Self {
        SpRaw {
            q: sp.q,
            params: sp
                .params
                .iter()
                .map(matkit::json::RawMat::from_mat)
                .collect(),
        }
    }
}

impl StieltjesParam {
    pub fn new(q: usize, params: Vec<CMat>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("matrix size q must be positive".into()));
        }
        if params.is_empty() {
            return Err(Error::Length("a parametrization needs at least Q_0".into()));
        }
        for (j, p) in params.iter().enumerate() {
            if p.shape() != (q, q) {
                return Err(Error::Dimension(format!(
                    "parameter Q_{j} is {}x{}, expected {q}x{q}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            if !matkit::all_finite(p) {
                return Err(Error::Structure(format!(
                    "parameter Q_{j} has non-finite entries"
                )));
            }
        }
        Ok(StieltjesParam { q, params })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let params = values.iter().map(|&v| matkit::scalar(v)).collect();
        StieltjesParam::new(1, params)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Highest parameter index kappa.
    pub fn order(&self) -> usize {
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn param(&self, j: usize) -> &CMat {
        &self.params[j]
    }

    pub fn params(&self) -> &[CMat] {
        &self.params
    }

    /// Drops the first `k` parameters.
    pub fn shifted(&self, k: usize) -> Result<Self> {
        if k >= self.params.len() {
            return Err(Error::Length(format!(
                "cannot drop {k} parameters from a list of {}",
                self.params.len()
            )));
        }
        StieltjesParam::new(self.q, self.params[k..].to_vec())
    }
}

/// Computes the parametrization `Q_j` of a sequence: even entries are the
/// Schur complements of the plain Hankel family, odd entries those of the
/// shifted family. Defined for every Hermitian sequence; degenerate blocks
/// are absorbed by the pseudoinverse.
pub fn sp_forward(seq: &MomentSequence, tol: &TolerancePolicy) -> Result<StieltjesParam> {
    seq.ensure_hermitian(tol)?;
    let m = seq.order();
    let mut params = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let p = if j % 2 == 0 {
            hankel::schur_l(seq, j / 2, tol)?
        } else {
            hankel::schur_lambda(seq, j / 2, tol)?
        };
        params.push(p);
    }
    StieltjesParam::new(seq.q(), params)
}

/// Reconstructs the unique moment sequence whose parametrization is the
/// given list, inverting [`sp_forward`] exactly (for every parameter list,
/// not only admissible ones).
pub fn sp_inverse(sp: &StieltjesParam, tol: &TolerancePolicy) -> Result<MomentSequence> {
    let q = sp.q();
    let mut moments: Vec<CMat> = Vec::with_capacity(sp.len());
    for j in 0..sp.len() {
        let s = match j {
            0 | 1 => sp.param(j).clone(),
            _ if j % 2 == 0 => {
                let n = j / 2;
                let h = hankel::hankel_slice(&moments, q, 0, n - 1);
                let y = hankel::y_slice(&moments, q, n, 2 * n - 1);
                let z = hankel::z_slice(&moments, q, n, 2 * n - 1);
                sp.param(j) + z * matkit::moore_penrose(&h, tol) * y
            }
            _ => {
                let n = (j - 1) / 2;
                let k = hankel::hankel_slice(&moments, q, 1, n - 1);
                let y = hankel::y_slice(&moments, q, n + 1, 2 * n);
                let z = hankel::z_slice(&moments, q, n + 1, 2 * n);
                sp.param(j) + z * matkit::moore_penrose(&k, tol) * y
            }
        };
        moments.push(s);
    }
    MomentSequence::new(q, moments)
}

/// Kernel-inclusion residual: `|| Q_next (I - Q^+ Q) ||`, zero exactly
/// when the null space of `q_cur` is contained in that of `q_next`.
fn kernel_residual(q_cur: &CMat, q_next: &CMat, tol: &TolerancePolicy) -> f64 {
    let n = q_cur.ncols();
    let proj = CMat::identity(n, n) - matkit::moore_penrose(q_cur, tol) * q_cur;
    matkit::max_abs(&(q_next * proj))
}

/// Classifies a sequence from its parametrization alone:
///
/// * solvable: all `Q_j` nonnegative and the kernel chain holds up to the
///   second-to-last step;
/// * extendably solvable: the kernel chain holds through the last step;
/// * nondegenerate: all `Q_j` positive definite;
/// * completely degenerate at the smallest index whose parameter vanishes.
pub fn classify_from_sp(sp: &StieltjesParam, tol: &TolerancePolicy) -> Result<SequenceClass> {
    let kappa = sp.order();
    let all_nonneg = sp
        .params()
        .iter()
        .all(|p| matkit::is_nonneg_definite(p, tol));
    let in_kg = sp.params().iter().all(|p| matkit::is_pos_definite(p, tol));

    let scale = 1.0 + sp.params().iter().map(matkit::max_abs).fold(0.0, f64::max);
    let mut chain_to = 0usize; // kernel chain holds for j < chain_to
    while chain_to < kappa {
        let r = kernel_residual(sp.param(chain_to), sp.param(chain_to + 1), tol);
        if r > tol.rtol_identity * scale {
            break;
        }
        chain_to += 1;
    }

    let in_kgg = all_nonneg && (kappa < 2 || chain_to >= kappa - 1);
    let in_kgge = all_nonneg && chain_to >= kappa;

    let completely_degenerate = if all_nonneg {
        (0..=kappa).find(|&j| matkit::max_abs(sp.param(j)) <= tol.psd_floor * scale)
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

/// Extends an extendably solvable sequence to order `upto` by padding its
/// parametrization with zero matrices; the result is the unique extension
/// that becomes completely degenerate immediately after the data.
pub fn zero_extension(
    seq: &MomentSequence,
    upto: usize,
    tol: &TolerancePolicy,
) -> Result<MomentSequence> {
    let m = seq.order();
    if upto < m {
        return Err(Error::Length(format!(
            "zero extension target {upto} is below the sequence order {m}"
        )));
    }
    let sp = sp_forward(seq, tol)?;
    let class = classify_from_sp(&sp, tol)?;
    if !class.in_kgge {
        return Err(Error::Classification(
            "zero extension needs an extendably solvable sequence".into(),
        ));
    }
    let q = seq.q();
    let mut params = sp.params().to_vec();
    params.resize(upto + 1, CMat::zeros(q, q));
    sp_inverse(&StieltjesParam::new(q, params)?, tol)
}

/// Draws a random nondegenerate sequence of order `m`: each parameter is
/// `scale * (0.6 I + 0.9 G / ||G||)` with `G` a random Gram matrix, so all
/// parameters are Hermitian positive definite with moderate condition
/// numbers, and the sequence is reconstructed from them. Deterministic in
/// `seed`.
pub fn random_spd_sequence(
    q: usize,
    m: usize,
    seed: u64,
    scale: f64,
    tol: &TolerancePolicy,
) -> Result<MomentSequence> {
    if q == 0 {
        return Err(Error::Dimension("matrix size q must be positive".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Invalid(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        let b = CMat::from_fn(q, q, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let g = &b * b.adjoint();
        let norm = matkit::max_abs(&g);
        let normalized = if norm > 0.0 {
            g.scale(1.0 / norm)
        } else {
            CMat::identity(q, q)
        };
        // Normalization fixes the top entry to 1, which for q = 1 would
        // erase the randomness entirely; the spread factor keeps scalar
        // draws seed-dependent.
        let spread = rng.random_range(0.25..1.0);
        let p = (CMat::identity(q, q).scale(0.6) + normalized.scale(0.9 * spread)).scale(scale);
        params.push(p);
    }
    sp_inverse(&StieltjesParam::new(q, params)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::classify_by_definition;
    use crate::matkit::{mat_real, rel_residual, scalar};

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn factorial_seq(m: usize) -> MomentSequence {
        let mut v = vec![1.0];
        for j in 1..=m {
            v.push(v[j - 1] * j as f64);
        }
        MomentSequence::from_scalars(&v).unwrap()
    }

    #[test]
    fn parametrization_of_factorial_sequence() {
        let seq = factorial_seq(5);
        let sp = sp_forward(&seq, &tol()).unwrap();
        let got: Vec<f64> = sp.params().iter().map(|p| p[(0, 0)].re).collect();
        let want = [1.0, 1.0, 1.0, 2.0, 4.0, 12.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "params {got:?}");
        }
    }

    #[test]
    fn forward_inverse_round_trip_on_moments() {
        let seq = factorial_seq(5);
        let sp = sp_forward(&seq, &tol()).unwrap();
        let back = sp_inverse(&sp, &tol()).unwrap();
        for j in 0..=5 {
            assert!(rel_residual(seq.moment(j), back.moment(j)) < 1e-12);
        }
    }

    #[test]
    fn inverse_forward_round_trip_on_arbitrary_params() {
        // The bijection holds for parameters that are not admissible as a
        // moment problem (mixed signs), not only for definite ones.
        let sp = StieltjesParam::from_scalars(&[1.0, -2.0, 0.5, 3.0, -1.0]).unwrap();
        let seq = sp_inverse(&sp, &tol()).unwrap();
        let again = sp_forward(&seq, &tol()).unwrap();
        for j in 0..=4 {
            assert!(rel_residual(sp.param(j), again.param(j)) < 1e-12);
        }
    }

    #[test]
    fn classification_from_parameters() {
        let seq = factorial_seq(5);
        let sp = sp_forward(&seq, &tol()).unwrap();
        let class = classify_from_sp(&sp, &tol()).unwrap();
        assert!(class.in_kg && class.in_kgge && class.in_kgg);
        assert_eq!(class.completely_degenerate, None);

        // One vanishing parameter: still extendably solvable, degenerate.
        let sp = StieltjesParam::from_scalars(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        let class = classify_from_sp(&sp, &tol()).unwrap();
        assert!(class.in_kgge && !class.in_kg);
        assert_eq!(class.completely_degenerate, Some(2));

        // Negative parameter: not solvable at all.
        let sp = StieltjesParam::from_scalars(&[1.0, -1.0]).unwrap();
        let class = classify_from_sp(&sp, &tol()).unwrap();
        assert!(!class.in_kgg && !class.in_kgge && !class.in_kg);
    }

    #[test]
    fn kernel_violation_blocks_extendability_only() {
        let q0 = mat_real(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let q1 = mat_real(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let sp = StieltjesParam::new(2, vec![q0, q1]).unwrap();
        let class = classify_from_sp(&sp, &tol()).unwrap();
        assert!(class.in_kgg);
        assert!(!class.in_kgge);
    }

    #[test]
    fn zero_extension_of_factorial_data() {
        let seq = factorial_seq(3);
        let ext = zero_extension(&seq, 5, &tol()).unwrap();
        assert_eq!(ext.order(), 5);
        for j in 0..=3 {
            assert!(rel_residual(ext.moment(j), seq.moment(j)) < 1e-12);
        }
        // Padding the parametrization with zeros forces s_4 = 20 and
        // s_5 = 68 for factorial data through s_3.
        assert!((ext.moment(4)[(0, 0)].re - 20.0).abs() < 1e-10);
        assert!((ext.moment(5)[(0, 0)].re - 68.0).abs() < 1e-10);

        let class = classify_by_definition(&ext, &tol()).unwrap();
        assert!(class.in_kgge);
        assert_eq!(class.completely_degenerate, Some(4));
    }

    #[test]
    fn zero_extension_rejects_non_extendable_input() {
        let s0 = mat_real(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let s1 = mat_real(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let seq = MomentSequence::new(2, vec![s0, s1]).unwrap();
        match zero_extension(&seq, 3, &tol()) {
            Err(Error::Classification(_)) => {}
            other => panic!("expected classification error, got {other:?}"),
        }
    }

    #[test]
    fn random_sequences_are_nondegenerate_and_reproducible() {
        for q in 1..=3 {
            let seq = random_spd_sequence(q, 6, 17, 1.0, &tol()).unwrap();
            assert_eq!(seq.q(), q);
            assert_eq!(seq.order(), 6);
            let class = classify_by_definition(&seq, &tol()).unwrap();
            assert!(class.in_kg, "q = {q} random sequence must be nondegenerate");
        }
        let a = random_spd_sequence(2, 5, 99, 1.0, &tol()).unwrap();
        let b = random_spd_sequence(2, 5, 99, 1.0, &tol()).unwrap();
        assert_eq!(a, b);
        let c = random_spd_sequence(2, 5, 100, 1.0, &tol()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_parameters_have_bounded_entries() {
        let seq = random_spd_sequence(3, 8, 7, 1.0, &tol()).unwrap();
        let sp = sp_forward(&seq, &tol()).unwrap();
        for p in sp.params() {
            let n = matkit::max_abs(p);
            assert!((0.5..=2.0).contains(&n), "parameter magnitude {n}");
        }
    }

    #[test]
    fn scalar_helper_builds_1x1_sequences() {
        let sp = StieltjesParam::from_scalars(&[2.0]).unwrap();
        assert_eq!(sp.param(0), &scalar(2.0));
    }
}
