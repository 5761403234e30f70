//! Atomic matrix measures on the right half line and their transforms.
//!
//! An atomic measure with nonnegative Hermitian weights represents a
//! solution of the truncated moment problem supported on finitely many
//! points. This module computes its power moments and Stieltjes
//! transform, applies the linear fractional transformation that maps
//! constant parameter pairs to solutions, forms the two extremal
//! (lower and upper) transforms as right matrix fractions, evaluates
//! their continued-fraction expansions, and recovers a scalar atomic
//! measure from a rational transform by companion-matrix root finding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsparams::DsParams;
use crate::hankel::MomentSequence;
use crate::matkit::{self, rel_residual, CMat, TolerancePolicy, C64};
use crate::parametrize::{classify_from_sp, sp_forward, zero_extension};
use crate::polyomp::{omp_quadruple, MatrixPoly, OmpQuadruple};
use crate::schur;
use crate::{Error, Result};

/// Absolute tolerance for root classification: a denominator root is
/// accepted as a node when its imaginary part is within this bound, it
/// sits at least this far from the other roots, and it is no further
/// than this below zero.
pub const ROOT_TOL: f64 = 1e-9;

/// A nonnegative Hermitian matrix measure concentrated on finitely many
/// points of the right half line. The empty atom list is the zero
/// measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRaw", into = "MeasureRaw")]
pub struct AtomicMeasure {
    q: usize,
    atoms: Vec<(f64, CMat)>,
}

#[derive(Clone, Serialize, Deserialize)]
struct AtomRaw {
    t: f64,
    w: matkit::json::RawMat,
}

#[derive(Clone, Serialize, Deserialize)]
struct MeasureRaw {
    q: usize,
    atoms: Vec<AtomRaw>,
}

impl TryFrom<MeasureRaw> for AtomicMeasure {
    type Error = Error;

    fn try_from(raw: MeasureRaw) -> Result<Self> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|a| Ok((a.t, a.w.try_into_mat()?)))
            .collect::<Result<Vec<_>>>()?;
        AtomicMeasure::new(raw.q, atoms, &TolerancePolicy::default())
    }
}

impl From<AtomicMeasure> for MeasureRaw {
    fn from(mu: AtomicMeasure) -> Self {
        MeasureRaw {
            q: mu.q,
            atoms: mu
                .atoms
                .iter()
                .map(|(t, w)| AtomRaw {
                    t: *t,
                    w: matkit::json::RawMat::from_mat(w),
                })
                .collect(),
        }
    }
}

impl AtomicMeasure {
    /// Validates and normalizes an atom list: weights must be q x q
    /// Hermitian nonnegative definite, nodes must not sit below zero by
    /// more than the root tolerance (tiny negatives are clamped to 0),
    /// and nodes must be distinct. Atoms are sorted by node and weights
    /// are replaced by their Hermitian parts.
    pub fn new(q: usize, atoms: Vec<(f64, CMat)>, tol: &TolerancePolicy) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("matrix size q must be positive".into()));
        }
        let mut clean = Vec::with_capacity(atoms.len());
        for (i, (t, w)) in atoms.into_iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Structure(format!("node {i} is not finite")));
            }
            if t < -ROOT_TOL {
                return Err(Error::Structure(format!(
                    "node {i} at {t} lies off the right half line"
                )));
            }
            if w.shape() != (q, q) {
                return Err(Error::Dimension(format!(
                    "weight {i} is {}x{}, expected {q}x{q}",
                    w.nrows(),
                    w.ncols()
                )));
            }
            if !matkit::all_finite(&w) {
                return Err(Error::Structure(format!(
                    "weight {i} has nonfinite entries"
                )));
            }
            if !matkit::is_hermitian(&w, tol) {
                return Err(Error::Structure(format!("weight {i} is not Hermitian")));
            }
            if !matkit::is_nonneg_definite(&w, tol) {
                return Err(Error::Structure(format!(
                    "weight {i} is not nonnegative definite"
                )));
            }
            clean.push((t.max(0.0), matkit::hermitian_part(&w)));
        }
        clean.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("nodes are finite"));
        for pair in clean.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Structure(format!("duplicate node at {}", pair[0].0)));
            }
        }
        Ok(AtomicMeasure { q, atoms: clean })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Atoms as (node, weight) pairs, sorted by node.
    pub fn atoms(&self) -> &[(f64, CMat)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Power moments `s_j = sum_i t_i^j w_i` for j = 0..=upto.
pub fn measure_moments(mu: &AtomicMeasure, upto: usize) -> MomentSequence {
    let q = mu.q;
    let mut moments = Vec::with_capacity(upto + 1);
    let mut powers: Vec<f64> = vec![1.0; mu.atoms.len()];
    for _ in 0..=upto {
        let mut s = CMat::zeros(q, q);
        for (i, (t, w)) in mu.atoms.iter().enumerate() {
            s += w * C64::new(powers[i], 0.0);
            powers[i] *= t;
        }
        moments.push(s);
    }
    MomentSequence::new(q, moments).expect("measure moments are well-formed")
}

/// The Stieltjes transform `S(z) = sum_i w_i / (t_i - z)`.
pub fn stieltjes_transform(mu: &AtomicMeasure, z: C64) -> Result<CMat> {
    let mut s = CMat::zeros(mu.q, mu.q);
    for (t, w) in &mu.atoms {
        let d = C64::new(*t, 0.0) - z;
        if d.norm() <= 1e-12 * (1.0 + t.abs()) {
            return Err(Error::Domain(format!(
                "sample point {z} hits the node at {t}"
            )));
        }
        s += w * (C64::new(1.0, 0.0) / d);
    }
    Ok(s)
}

/// The node-weighted companion measure with weights `t_i w_i`; an atom
/// at zero contributes nothing and is dropped.
pub fn shifted_measure(mu: &AtomicMeasure) -> AtomicMeasure {
    let atoms = mu
        .atoms
        .iter()
        .filter(|(t, _)| *t > 0.0)
        .map(|(t, w)| (*t, w * C64::new(*t, 0.0)))
        .collect();
    AtomicMeasure { q: mu.q, atoms }
}

/// A right matrix fraction `S(z) = N(z) D(z)^{-1}` of square matrix
/// polynomials with a common block size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RationalRaw", into = "RationalRaw")]
pub struct RationalMatrixFn {
    num: MatrixPoly,
    den: MatrixPoly,
}

#[derive(Clone, Serialize, Deserialize)]
struct RationalRaw {
    num: MatrixPoly,
    den: MatrixPoly,
}

impl TryFrom<RationalRaw> for RationalMatrixFn {
    type Error = Error;

    fn try_from(raw: RationalRaw) -> Result<Self> {
        RationalMatrixFn::new(raw.num, raw.den)
    }
}

impl From<RationalMatrixFn> for RationalRaw {
    fn from(s: RationalMatrixFn) -> Self {
        RationalRaw {
            num: s.num,
            den: s.den,
        }
    }
}

impl RationalMatrixFn {
    pub fn new(num: MatrixPoly, den: MatrixPoly) -> Result<Self> {
        if num.q() != den.q() {
            return Err(Error::Dimension(format!(
                "numerator blocks are {}x{} but denominator blocks are {}x{}",
                num.q(),
                num.q(),
                den.q(),
                den.q()
            )));
        }
        Ok(RationalMatrixFn { num, den })
    }

    pub fn q(&self) -> usize {
        self.num.q()
    }

    pub fn num(&self) -> &MatrixPoly {
        &self.num
    }

    pub fn den(&self) -> &MatrixPoly {
        &self.den
    }

    /// Evaluates the right fraction by a linear solve; a denominator
    /// value that is singular in absolute terms (smallest singular value
    /// below 1e-12 of the coefficient scale at this point) is a domain
    /// error even when it is relatively well conditioned, as any nonzero
    /// square matrix of size one is.
    pub fn eval(&self, z: C64, tol: &TolerancePolicy) -> Result<CMat> {
        let den = self.den.eval(z);
        let num = self.num.eval(z);
        let deg = self.den.degree().unwrap_or(0);
        let scale = (1.0 + z.norm()).powi(deg as i32)
            * (1.0
                + self
                    .den
                    .coeffs()
                    .iter()
                    .map(matkit::max_abs)
                    .fold(0.0, f64::max));
        if singular_in_absolute_terms(&den, scale) {
            return Err(Error::Domain(format!("denominator is singular at {z}")));
        }
        matkit::checked_solve_right(&den, &num, "fraction denominator", tol)
            .map_err(|_| Error::Domain(format!("denominator is singular at {z}")))
    }
}

/// True when the smallest singular value of `a` falls below 1e-12 of the
/// given data scale.
fn singular_in_absolute_terms(a: &CMat, scale: f64) -> bool {
    let sv = a.clone().svd(false, false).singular_values;
    let smallest = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    !(smallest.is_finite() && smallest > 1e-12 * scale)
}

/// A constant parameter pair selecting one solution of the moment
/// problem through the linear fractional transformation.
#[derive(Clone, Debug)]
pub struct ConstantPair {
    phi: CMat,
    psi: CMat,
}

impl ConstantPair {
    /// Validates admissibility: the stacked pair has full column rank,
    /// the coupling `phi* psi` is Hermitian, and `phi* psi + psi* phi`
    /// is nonnegative definite.
    pub fn new(phi: CMat, psi: CMat, tol: &TolerancePolicy) -> Result<Self> {
        let q = phi.nrows();
        if phi.shape() != (q, q) || psi.shape() != (q, q) {
            return Err(Error::Dimension(format!(
                "pair blocks must be square of equal size, got {}x{} and {}x{}",
                phi.nrows(),
                phi.ncols(),
                psi.nrows(),
                psi.ncols()
            )));
        }
        if !matkit::all_finite(&phi) || !matkit::all_finite(&psi) {
            return Err(Error::Structure("pair has nonfinite entries".into()));
        }
        let mut stack = CMat::zeros(2 * q, q);
        stack.view_mut((0, 0), (q, q)).copy_from(&phi);
        stack.view_mut((q, 0), (q, q)).copy_from(&psi);
        let sv = stack.svd(false, false).singular_values;
        let top = sv.iter().fold(0.0f64, |m, &s| m.max(s));
        let rank = sv.iter().filter(|&&s| s > top * tol.pinv_rcond).count();
        if top == 0.0 || rank < q {
            return Err(Error::Structure(format!(
                "stacked pair has rank {rank}, needs {q}"
            )));
        }
        let coupling = phi.adjoint() * &psi;
        if !matkit::is_hermitian(&coupling, tol) {
            return Err(Error::Structure(
                "pair coupling phi* psi is not Hermitian".into(),
            ));
        }
        let sym = &coupling + coupling.adjoint();
        if !matkit::is_nonneg_definite(&sym, tol) {
            return Err(Error::Structure(
                "pair coupling phi* psi + psi* phi is not nonnegative definite".into(),
            ));
        }
        Ok(ConstantPair { phi, psi })
    }

    pub fn q(&self) -> usize {
        self.phi.nrows()
    }

    pub fn phi(&self) -> &CMat {
        &self.phi
    }

    pub fn psi(&self) -> &CMat {
        &self.psi
    }
}

/// Applies the linear fractional transformation of a 2q-block resolvent
/// polynomial to a constant pair at a point:
/// `S(z) = (A phi + B psi)(C phi + D psi)^{-1}` with A..D the corner
/// blocks of `u` evaluated at z.
pub fn lft_constant_pair(
    u: &MatrixPoly,
    pair: &ConstantPair,
    z: C64,
    tol: &TolerancePolicy,
) -> Result<CMat> {
    if !u.q().is_multiple_of(2) || u.q() / 2 != pair.q() {
        return Err(Error::Dimension(format!(
            "resolvent blocks are {}x{}, pair blocks are {}x{}",
            u.q(),
            u.q(),
            pair.q(),
            pair.q()
        )));
    }
    let q = pair.q();
    let uz = u.eval(z);
    let a = uz.view((0, 0), (q, q));
    let b = uz.view((0, q), (q, q));
    let c = uz.view((q, 0), (q, q));
    let d = uz.view((q, q), (q, q));
    let num = a * pair.phi() + b * pair.psi();
    let den = c * pair.phi() + d * pair.psi();
    let scale = (1.0 + matkit::max_abs(&uz))
        * (1.0 + matkit::max_abs(pair.phi()).max(matkit::max_abs(pair.psi())));
    if singular_in_absolute_terms(&den, scale) {
        return Err(Error::Domain(format!(
            "pair denominator is singular at {z}"
        )));
    }
    matkit::checked_solve_right(&den, &num, "transformed pair denominator", tol)
        .map_err(|_| Error::Domain(format!("pair denominator is singular at {z}")))
}

/// The lower and upper extremal transforms at order m as right
/// fractions: the lower is `-q_{K,n} (z p_{K,n})^{-1}` with n = floor(m/2),
/// the upper is `-q_{H,n} p_{H,n}^{-1}` with n = ceil(m/2). Consecutive
/// even/odd orders share one side, so each side depends only on the
/// moments it consumes.
pub fn extremal_transforms(
    quad: &OmpQuadruple,
    m: usize,
) -> Result<(RationalMatrixFn, RationalMatrixFn)> {
    let n_min = m / 2;
    let n_max = m.div_ceil(2);
    if quad.p_k().len() <= n_min {
        return Err(Error::Length(format!(
            "lower transform at order {m} needs the shifted family through index {n_min}, have {}",
            quad.p_k().len()
        )));
    }
    if quad.p_h().len() <= n_max {
        return Err(Error::Length(format!(
            "upper transform at order {m} needs the plain family through index {n_max}, have {}",
            quad.p_h().len()
        )));
    }
    let lower = RationalMatrixFn::new(quad.q_k()[n_min].neg(), quad.p_k()[n_min].mul_z())?;
    let upper = RationalMatrixFn::new(quad.q_h()[n_max].neg(), quad.p_h()[n_max].clone())?;
    Ok((lower, upper))
}

/// Which extremal element a continued fraction expands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremalSide {
    Lower,
    Upper,
}

fn level_inverse(a: &CMat, level: usize, tol: &TolerancePolicy) -> Result<CMat> {
    matkit::checked_inverse(a, "continued fraction level", tol)
        .map_err(|_| Error::Domain(format!("singular intermediate at nesting level {level}")))
}

/// Evaluates the matrix continued fraction expansion of an extremal
/// transform from the mass and length parameters, nesting from the
/// innermost term outward. Depth n uses masses through index n (lower)
/// or n-1 (upper) and lengths through n-1; the upper expansion starts
/// at depth 1.
pub fn continued_fraction_eval(
    ds: &DsParams,
    n: usize,
    z: C64,
    side: ExtremalSide,
    tol: &TolerancePolicy,
) -> Result<CMat> {
    let masses = ds.masses();
    let lengths = ds.lengths();
    let need_m = match side {
        ExtremalSide::Lower => n + 1,
        ExtremalSide::Upper => n,
    };
    if masses.len() < need_m || (n >= 1 && lengths.len() < n) {
        return Err(Error::Length(format!(
            "continued fraction at depth {n} needs {need_m} masses and {n} lengths, have {} and {}",
            masses.len(),
            lengths.len()
        )));
    }
    if z.norm() == 0.0 {
        return Err(Error::Domain(
            "continued fraction is evaluated off the origin".into(),
        ));
    }
    let mut w = match side {
        ExtremalSide::Lower => {
            if n == 0 {
                let m0_inv = level_inverse(&masses[0], 0, tol)?;
                return Ok(m0_inv * (-C64::new(1.0, 0.0) / z));
            }
            let mn_inv = level_inverse(&masses[n], n, tol)?;
            let u = &lengths[n - 1] - mn_inv * (C64::new(1.0, 0.0) / z);
            &masses[n - 1] * (-z) + level_inverse(&u, n, tol)?
        }
        ExtremalSide::Upper => {
            if n == 0 {
                return Err(Error::Invalid(
                    "the upper continued fraction starts at depth 1".into(),
                ));
            }
            &masses[n - 1] * (-z) + level_inverse(&lengths[n - 1], n, tol)?
        }
    };
    for k in (0..n.saturating_sub(1)).rev() {
        let inner = &lengths[k] + level_inverse(&w, k + 1, tol)?;
        w = &masses[k] * (-z) + level_inverse(&inner, k, tol)?;
    }
    level_inverse(&w, 0, tol)
}

/// Recovers a scalar atomic measure from its rational Stieltjes
/// transform: the nodes are the denominator roots (via the companion
/// matrix), the weights are the negated residues. The transform must be
/// strictly proper with real coefficients, simple real nonnegative
/// roots, and positive weights; matrix-valued recovery is out of scope.
pub fn recover_scalar_measure(
    s: &RationalMatrixFn,
    tol: &TolerancePolicy,
) -> Result<AtomicMeasure> {
    if s.q() != 1 {
        return Err(Error::Scope(
            "measure recovery is implemented for scalar transforms only".into(),
        ));
    }
    let coeff_scale = 1.0
        + s.num()
            .coeffs()
            .iter()
            .chain(s.den().coeffs())
            .map(matkit::max_abs)
            .fold(0.0, f64::max);
    let floor = 1e-12 * coeff_scale;
    let num = s.num().trim(floor);
    let den = s.den().trim(floor);
    let Some(d) = den.degree() else {
        return Err(Error::NotStieltjes(
            "the denominator vanishes identically".into(),
        ));
    };
    if num.degree().is_none() {
        return Ok(AtomicMeasure {
            q: 1,
            atoms: Vec::new(),
        });
    }
    if num.degree() >= Some(d) {
        return Err(Error::NotStieltjes(
            "the transform must vanish at infinity (numerator degree too high)".into(),
        ));
    }
    for (label, p) in [("numerator", &num), ("denominator", &den)] {
        for (j, a) in p.coeffs().iter().enumerate() {
            if a[(0, 0)].im.abs() > ROOT_TOL * coeff_scale {
                return Err(Error::NotStieltjes(format!(
                    "{label} coefficient {j} is not real"
                )));
            }
        }
    }
    let lead = den.coeff(d)[(0, 0)].re;
    let monic: Vec<f64> = (0..d).map(|j| den.coeff(j)[(0, 0)].re / lead).collect();
    let mut companion = DMatrix::<f64>::zeros(d, d);
    for j in 1..d {
        companion[(j, j - 1)] = 1.0;
    }
    for (j, &c) in monic.iter().enumerate() {
        companion[(j, d - 1)] = -c;
    }
    let eigs = companion.complex_eigenvalues();
    let mut nodes: Vec<f64> = Vec::with_capacity(d);
    for root in eigs.iter() {
        if root.im.abs() > ROOT_TOL {
            return Err(Error::NotStieltjes(format!(
                "denominator root {root} is not real"
            )));
        }
        if root.re < -ROOT_TOL {
            return Err(Error::NotStieltjes(format!(
                "denominator root {root} is negative"
            )));
        }
        nodes.push(root.re.max(0.0));
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("roots are finite"));
    for pair in nodes.windows(2) {
        if pair[1] - pair[0] <= ROOT_TOL {
            return Err(Error::NotStieltjes(format!(
                "denominator root at {} is not simple",
                pair[0]
            )));
        }
    }
    let dprime = den.derivative();
    let mut atoms = Vec::with_capacity(d);
    for &t in &nodes {
        let zt = C64::new(t, 0.0);
        let nv = num.eval(zt)[(0, 0)];
        let dv = dprime.eval(zt)[(0, 0)];
        if dv.norm() <= ROOT_TOL * coeff_scale {
            return Err(Error::NotStieltjes(format!(
                "derivative vanishes at the node {t}"
            )));
        }
        let w = -(nv / dv);
        if w.re <= 0.0 || w.im.abs() > ROOT_TOL * (1.0 + w.re.abs()) {
            return Err(Error::NotStieltjes(format!(
                "residue at node {t} gives the nonpositive weight {w}"
            )));
        }
        atoms.push((t, matkit::scalar(w.re)));
    }
    AtomicMeasure::new(1, atoms, tol)
}

/// Recovers the extremal measure of matching parity (upper for odd m,
/// lower for even m) from a scalar nondegenerate sequence and compares
/// its moments through m+4 against the zero extension of the truncated
/// sequence. Returns one relative residual per moment index.
pub fn extremal_moment_check(
    seq: &MomentSequence,
    m: usize,
    tol: &TolerancePolicy,
) -> Result<Vec<f64>> {
    if seq.q() != 1 {
        return Err(Error::Scope(
            "the moment check recovers scalar measures only".into(),
        ));
    }
    if seq.order() < m {
        return Err(Error::Length(format!(
            "check at order {m} needs moments through {m}, have {}",
            seq.order()
        )));
    }
    let class = classify_from_sp(&sp_forward(seq, tol)?, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "the moment check needs a nondegenerate sequence".into(),
        ));
    }
    let trunc = seq.truncated(m)?;
    let quad = omp_quadruple(&trunc, m.div_ceil(2), tol)?;
    let (lower, upper) = extremal_transforms(&quad, m)?;
    let chosen = if m % 2 == 1 { upper } else { lower };
    let mu = recover_scalar_measure(&chosen, tol)?;
    let target = zero_extension(&trunc, m + 4, tol)?;
    let got = measure_moments(&mu, m + 4);
    Ok((0..=m + 4)
        .map(|j| rel_residual(got.moment(j), target.moment(j)))
        .collect())
}

/// Maximum residuals of the two relations expressing the transformed
/// sequence's extremal elements through the original ones.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtremalRelationCheck {
    /// Lower transform of the transformed sequence vs the original upper.
    pub lower_of_transform: f64,
    /// Upper transform of the transformed sequence vs the original lower.
    pub upper_of_transform: f64,
}

impl ExtremalRelationCheck {
    pub fn max(&self) -> f64 {
        self.lower_of_transform.max(self.upper_of_transform)
    }
}

/// Verifies at the sample points that the transformed sequence's
/// extremal transforms are `-s_0 - s_0 (z S(z))^{-1} s_0` with S the
/// original extremal transform of the opposite side at order 2n.
/// Samples landing on singularities are nudged before evaluation.
pub fn extremal_transform_relation_check(
    seq: &MomentSequence,
    n: usize,
    z_samples: &[C64],
    tol: &TolerancePolicy,
) -> Result<ExtremalRelationCheck> {
    if n == 0 {
        return Err(Error::Invalid(
            "the relation check starts at depth 1".into(),
        ));
    }
    if seq.order() < 2 * n {
        return Err(Error::Length(format!(
            "relation check at depth {n} needs moments through {}, have {}",
            2 * n,
            seq.order()
        )));
    }
    if z_samples.is_empty() {
        return Err(Error::Invalid("no sample points supplied".into()));
    }
    let class = classify_from_sp(&sp_forward(seq, tol)?, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "the relation check needs a nondegenerate sequence".into(),
        ));
    }
    let quad = omp_quadruple(seq, n, tol)?;
    let (lower, upper) = extremal_transforms(&quad, 2 * n)?;
    let tseq = schur::transform1(seq, tol)?;
    let tquad = omp_quadruple(&tseq, n, tol)?;
    let (t_lower, _) = extremal_transforms(&tquad, 2 * n - 2)?;
    let (_, t_upper) = extremal_transforms(&tquad, 2 * n - 1)?;
    let s0 = seq.moment(0);

    let relation =
        |orig: &RationalMatrixFn, transformed: &RationalMatrixFn, z: C64| -> Result<f64> {
            let sv = orig.eval(z, tol)?;
            let inv = matkit::checked_inverse(&(sv * z), "scaled transform value", tol)
                .map_err(|_| Error::Domain(format!("scaled transform value is singular at {z}")))?;
            let rhs = -(s0 + s0 * inv * s0);
            Ok(rel_residual(&transformed.eval(z, tol)?, &rhs))
        };
    let mut out = ExtremalRelationCheck {
        lower_of_transform: 0.0,
        upper_of_transform: 0.0,
    };
    for &z in z_samples {
        let mut done = false;
        let mut last_err = None;
        for attempt in 0..4 {
            let zt = z + C64::new(0.31, 0.17) * C64::new(attempt as f64, 0.0);
            match (
                relation(&upper, &t_lower, zt),
                relation(&lower, &t_upper, zt),
            ) {
                (Ok(r_low), Ok(r_up)) => {
                    out.lower_of_transform = out.lower_of_transform.max(r_low);
                    out.upper_of_transform = out.upper_of_transform.max(r_up);
                    done = true;
                    break;
                }
                (a, b) => {
                    last_err = a.err().or(b.err());
                }
            }
        }
        if !done {
            return Err(last_err.expect("failed attempts leave an error"));
        }
    }
    Ok(out)
}
