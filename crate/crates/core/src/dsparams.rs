//! Mass and length parameters of a nondegenerate sequence.
//!
//! A nondegenerate sequence of order m is equivalently described by an
//! alternating pair of positive definite parameter lists: masses
//! `M_0..M_{floor(m/2)}` read off the inverses of the plain Hankel blocks,
//! and lengths `L_0..L_{floor((m-1)/2)}` read off the inverses of the
//! shifted blocks. In the scalar case these are the classical parameters
//! of the mechanical string interpretation, computable from Hankel
//! determinant ratios. Conversions to and from the Schur-complement
//! parametrization are pure matrix products, ordered left to right.

use serde::{Deserialize, Serialize};

use crate::hankel::{self, classify_by_definition, MomentSequence};
use crate::matkit::{self, CMat, TolerancePolicy};
use crate::parametrize::StieltjesParam;
use crate::schur;
use crate::{Error, Result};

/// The mass/length parameter pair of a nondegenerate sequence. For a
/// sequence of order m there is one more mass than length when m is even
/// and equally many when m is odd.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DsRaw", into = "DsRaw")]
pub struct DsParams {
    q: usize,
    lengths: Vec<CMat>,
    masses: Vec<CMat>,
}

#[derive(Clone, Serialize, Deserialize)]
struct DsRaw {
    q: usize,
    lengths: Vec<matkit::json::RawMat>,
    masses: Vec<matkit::json::RawMat>,
}

impl TryFrom<DsRaw> for DsParams {
    type Error = Error;

    fn try_from(raw: DsRaw) -> Result<Self> {
        let lengths = raw
            .lengths
            .into_iter()
            .map(|r| r.try_into_mat())
            .collect::<Result<Vec<_>>>()?;
        let masses = raw
            .masses
            .into_iter()
            .map(|r| r.try_into_mat())
            .collect::<Result<Vec<_>>>()?;
        DsParams::new(raw.q, lengths, masses)
    }
}

impl From<DsParams> for DsRaw {
    fn from(ds: DsParams) -> Self {
        DsRaw {
            q: ds.q,
            lengths: ds
                .lengths
                .iter()
                .map(matkit::json::RawMat::from_mat)
                .collect(),
            masses: ds
                .masses
                .iter()
                .map(matkit::json::RawMat::from_mat)
                .collect(),
        }
    }
}

impl DsParams {
    pub fn new(q: usize, lengths: Vec<CMat>, masses: Vec<CMat>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("matrix size q must be positive".into()));
        }
        if masses.is_empty() {
            return Err(Error::Length(
                "parameters need at least the mass M_0".into(),
            ));
        }
        let diff = masses.len() - lengths.len().min(masses.len());
        if lengths.len() > masses.len() || diff > 1 {
            return Err(Error::Length(format!(
                "mismatched counts: {} masses vs {} lengths (must differ by 0 or 1)",
                masses.len(),
                lengths.len()
            )));
        }
        for (name, list) in [("L", &lengths), ("M", &masses)] {
            for (k, p) in list.iter().enumerate() {
                if p.shape() != (q, q) {
                    return Err(Error::Dimension(format!(
                        "parameter {name}_{k} is {}x{}, expected {q}x{q}",
                        p.nrows(),
                        p.ncols()
                    )));
                }
                if !matkit::all_finite(p) {
                    return Err(Error::Structure(format!(
                        "parameter {name}_{k} has non-finite entries"
                    )));
                }
            }
        }
        Ok(DsParams { q, lengths, masses })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn lengths(&self) -> &[CMat] {
        &self.lengths
    }

    pub fn masses(&self) -> &[CMat] {
        &self.masses
    }

    /// Order of the sequence the parameters describe.
    pub fn order(&self) -> usize {
        self.masses.len() + self.lengths.len() - 1
    }
}

/// Computes the mass/length parameters from Hankel block inverses:
/// the k-th mass is the increment of the top-left block of `H_k^{-1}`,
/// the k-th length the increment of `y_{0,k}* K_k^{-1} y_{0,k}`.
/// Requires a nondegenerate sequence.
pub fn ds_forward(seq: &MomentSequence, tol: &TolerancePolicy) -> Result<DsParams> {
    let class = classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "mass/length parameters need a nondegenerate sequence".into(),
        ));
    }
    let q = seq.q();
    let m = seq.order();

    let mut masses = Vec::with_capacity(m / 2 + 1);
    let mut prev = CMat::zeros(q, q);
    for k in 0..=(m / 2) {
        let h = hankel::build_h(seq, k)?;
        let mut v = CMat::zeros((k + 1) * q, q);
        v.view_mut((0, 0), (q, q)).copy_from(&CMat::identity(q, q));
        let (x, _) = matkit::checked_solve(&h, &v, &format!("H_{k}"), tol)?;
        let top = x.view((0, 0), (q, q)).into_owned();
        masses.push(&top - &prev);
        prev = top;
    }

    let mut lengths = Vec::new();
    if m >= 1 {
        let mut prev = CMat::zeros(q, q);
        for k in 0..=((m - 1) / 2) {
            let kk = hankel::build_k(seq, k)?;
            let y = hankel::y_block(seq, 0, k)?;
            let (x, _) = matkit::checked_solve(&kk, &y, &format!("K_{k}"), tol)?;
            let cur = y.adjoint() * x;
            lengths.push(&cur - &prev);
            prev = cur;
        }
    }

    DsParams::new(q, lengths, masses)
}

/// Converts a Schur-complement parametrization into mass/length
/// parameters through ordered products of parameter ratios. All
/// parameters must be invertible.
pub fn ds_from_sp(sp: &StieltjesParam, tol: &TolerancePolicy) -> Result<DsParams> {
    let q = sp.q();
    let kappa = sp.order();
    let inv =
        |j: usize| -> Result<CMat> { matkit::checked_inverse(sp.param(j), &format!("Q_{j}"), tol) };

    let mut masses = Vec::new();
    let mut lengths = Vec::new();
    // a = prod_{j<=k} Q_{2j} Q_{2j+1}^{-1}, b = prod_{j<k} Q_{2j}^{-1} Q_{2j+1}.
    let mut a = CMat::identity(q, q);
    let mut b = CMat::identity(q, q);
    for k in 0.. {
        if 2 * k > kappa {
            break;
        }
        if k == 0 {
            masses.push(inv(0)?);
        } else {
            masses.push(&b * inv(2 * k)? * b.adjoint());
        }
        if 2 * k + 1 > kappa {
            break;
        }
        a = a * sp.param(2 * k) * inv(2 * k + 1)?;
        lengths.push(&a * sp.param(2 * k + 1) * a.adjoint());
        b = b * inv(2 * k)? * sp.param(2 * k + 1);
    }
    DsParams::new(q, lengths, masses)
}

/// Reconstructs the Schur-complement parametrization from mass/length
/// parameters, inverting [`ds_from_sp`].
pub fn sp_from_ds(ds: &DsParams, tol: &TolerancePolicy) -> Result<StieltjesParam> {
    let q = ds.q();
    let mut params = Vec::with_capacity(ds.masses.len() + ds.lengths.len());
    // pi_inv = (prod_{j<k} M_j L_j)^{-1}, updated as k advances.
    let mut pi_inv = CMat::identity(q, q);
    for k in 0..ds.masses.len() {
        let m_inv = matkit::checked_inverse(&ds.masses[k], &format!("M_{k}"), tol)?;
        if k == 0 {
            params.push(m_inv.clone());
        } else {
            params.push(pi_inv.adjoint() * &m_inv * &pi_inv);
        }
        if k < ds.lengths.len() {
            let l_inv = matkit::checked_inverse(&ds.lengths[k], &format!("L_{k}"), tol)?;
            pi_inv = l_inv * m_inv * pi_inv;
            params.push(pi_inv.adjoint() * &ds.lengths[k] * &pi_inv);
        }
    }
    StieltjesParam::new(q, params)
}

/// Scalar mass/length parameters from Hankel determinant ratios, as
/// `(lengths, masses)`. Only for q = 1 and nondegenerate data.
pub fn scalar_ks_params(
    seq: &MomentSequence,
    tol: &TolerancePolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if seq.q() != 1 {
        return Err(Error::Scope(
            "determinant-ratio parameters are defined for q = 1".into(),
        ));
    }
    let class = classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "determinant-ratio parameters need a nondegenerate sequence".into(),
        ));
    }
    let m = seq.order();
    let det_re = |mat: CMat, label: &str| -> Result<f64> {
        let d = mat.determinant();
        if d.norm() <= tol.pinv_rcond {
            return Err(Error::Conditioning {
                block: label.to_string(),
                cond: f64::INFINITY,
            });
        }
        Ok(d.re)
    };
    // det H_k for 2k <= m, det K_k for 2k+1 <= m, with the empty product 1.
    let mut det_h = vec![1.0];
    for k in 0..=(m / 2) {
        det_h.push(det_re(hankel::build_h(seq, k)?, &format!("H_{k}"))?);
    }
    let mut det_k = vec![1.0];
    if m >= 1 {
        for k in 0..=((m - 1) / 2) {
            det_k.push(det_re(hankel::build_k(seq, k)?, &format!("K_{k}"))?);
        }
    }

    let mut masses = Vec::new();
    for k in 0..=(m / 2) {
        // Index shift: det_h[k+1] is det H_k, det_k[k] is det K_{k-1}.
        masses.push(det_k[k].powi(2) / (det_h[k + 1] * det_h[k]));
    }
    let mut lengths = Vec::new();
    if m >= 1 {
        for k in 0..=((m - 1) / 2) {
            lengths.push(det_h[k + 1].powi(2) / (det_k[k + 1] * det_k[k]));
        }
    }
    Ok((lengths, masses))
}

/// Mass/length parameters of the one-step transform, computed without
/// transforming the sequence: lengths and masses swap roles after
/// conjugation by `s_0`.
pub fn ds_of_transform(ds: &DsParams, s0: &CMat, tol: &TolerancePolicy) -> Result<DsParams> {
    if s0.shape() != (ds.q(), ds.q()) {
        return Err(Error::Dimension(format!(
            "s_0 is {}x{}, expected {}x{}",
            s0.nrows(),
            s0.ncols(),
            ds.q(),
            ds.q()
        )));
    }
    if ds.lengths.is_empty() {
        return Err(Error::Length(
            "the transform parameters need at least one length".into(),
        ));
    }
    let s0_inv = matkit::checked_inverse(s0, "s_0", tol)?;
    let masses = ds
        .lengths
        .iter()
        .map(|l| &s0_inv * l * &s0_inv)
        .collect::<Vec<_>>();
    let lengths = ds
        .masses
        .iter()
        .skip(1)
        .map(|m| s0 * m * s0)
        .collect::<Vec<_>>();
    DsParams::new(ds.q(), lengths, masses)
}

/// Residuals of the three shift laws for transformed parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DsShiftCheck {
    /// Closed form: parameters of the ell-th transform expressed through
    /// ordered products of the original parametrization.
    pub closed_form: f64,
    /// Descent by two transform steps at a time.
    pub descent: f64,
    /// Single-step swap between masses and lengths.
    pub swap: f64,
}

impl DsShiftCheck {
    pub fn max(&self) -> f64 {
        self.closed_form.max(self.descent).max(self.swap)
    }
}

/// Verifies, for the `ell`-th transform of a nondegenerate sequence, that
/// its k-th mass/length parameters satisfy the closed-form product law,
/// the two-step descent law with step `m_step`, and the one-step swap law.
pub fn ds_shift_check(
    seq: &MomentSequence,
    ell: usize,
    k: usize,
    m_step: usize,
    tol: &TolerancePolicy,
) -> Result<DsShiftCheck> {
    if m_step == 0 || m_step > k {
        return Err(Error::Invalid(format!(
            "descent step must satisfy 1 <= m_step <= k, got m_step={m_step}, k={k}"
        )));
    }
    let needed = ell + 2 * k + 2;
    if seq.order() < needed {
        return Err(Error::Length(format!(
            "shift check at ell={ell}, k={k} needs order {needed}, sequence has {}",
            seq.order()
        )));
    }
    let class = classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "shift laws are stated for nondegenerate sequences".into(),
        ));
    }

    let sp = crate::parametrize::sp_forward(seq, tol)?;
    let inv =
        |j: usize| -> Result<CMat> { matkit::checked_inverse(sp.param(j), &format!("Q_{j}"), tol) };

    let seq_ell = schur::transform_k(seq, ell, tol)?;
    let ds_ell = ds_forward(&seq_ell, tol)?;
    let ds_next = ds_forward(&schur::transform1(&seq_ell, tol)?, tol)?;
    let ds_deep = ds_forward(&schur::transform_k(&seq_ell, 2 * m_step, tol)?, tol)?;

    // Closed form via ordered parameter products.
    let q = seq.q();
    let mut a = CMat::identity(q, q); // prod_{j<=k} Q_{2j+ell} Q_{2j+ell+1}^{-1}
    let mut b = CMat::identity(q, q); // prod_{j<k}  Q_{2j+ell}^{-1} Q_{2j+ell+1}
    for j in 0..k {
        a = a * sp.param(2 * j + ell) * inv(2 * j + ell + 1)?;
        b = b * inv(2 * j + ell)? * sp.param(2 * j + ell + 1);
    }
    let mass_formula = if k == 0 {
        inv(ell)?
    } else {
        &b * inv(2 * k + ell)? * b.adjoint()
    };
    a = a * sp.param(2 * k + ell) * inv(2 * k + ell + 1)?;
    let length_formula = &a * sp.param(2 * k + ell + 1) * a.adjoint();
    let closed_form = matkit::rel_residual(&length_formula, &ds_ell.lengths()[k])
        .max(matkit::rel_residual(&mass_formula, &ds_ell.masses()[k]));

    // Descent: parameters at depth ell from those at depth ell + 2 m_step.
    let mut a_m = CMat::identity(q, q);
    let mut b_m = CMat::identity(q, q);
    for j in 0..m_step {
        a_m = a_m * sp.param(2 * j + ell) * inv(2 * j + ell + 1)?;
        b_m = b_m * inv(2 * j + ell)? * sp.param(2 * j + ell + 1);
    }
    let l_desc = &a_m * &ds_deep.lengths()[k - m_step] * a_m.adjoint();
    let m_desc = &b_m * &ds_deep.masses()[k - m_step] * b_m.adjoint();
    let descent = matkit::rel_residual(&l_desc, &ds_ell.lengths()[k])
        .max(matkit::rel_residual(&m_desc, &ds_ell.masses()[k]));

    // Swap: one more transform exchanges the roles of masses and lengths
    // after conjugation by Q_ell.
    let q_ell = sp.param(ell);
    let q_ell_inv = inv(ell)?;
    let l_swap = q_ell * &ds_ell.masses()[k + 1] * q_ell;
    let m_swap = &q_ell_inv * &ds_ell.lengths()[k] * &q_ell_inv;
    let swap = matkit::rel_residual(&l_swap, &ds_next.lengths()[k])
        .max(matkit::rel_residual(&m_swap, &ds_next.masses()[k]));

    Ok(DsShiftCheck {
        closed_form,
        descent,
        swap,
    })
}
