//! Resolvent matrices and their factorizations.
//!
//! The solutions of a truncated moment problem on the half axis are
//! swept out by a linear fractional action of one `2q x 2q` matrix
//! polynomial, the resolvent matrix of the sequence. This module
//! computes it three independent ways: directly from bilinear corner
//! forms in the inverse Hankel blocks, as an ordered product of
//! elementary mass and length steps, and from the orthogonal polynomial
//! quadruple column-scaled by its values at zero. It also builds the
//! constant and degree-one conjugators that carry elementary factors of
//! a sequence to those of its Schur transforms, and verifies the
//! resulting splitting laws that peel a resolvent into boundary factors
//! times the resolvent of a transform.

use serde::{Deserialize, Serialize};

use crate::dsparams::{self, DsParams};
use crate::hankel::{self, MomentSequence};
use crate::matkit::{self, rel_residual, CMat, TolerancePolicy, C64};
use crate::polyomp::{self, MatrixPoly, OmpQuadruple};
use crate::schur;
use crate::{Error, Result};

/// Resolvent matrix of a moment sequence at a fixed order: a `2q x 2q`
/// matrix polynomial whose degree never exceeds half the order plus one
/// and whose value at the origin has identity diagonal blocks, a zero
/// lower-left block, and determinant one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ResolventRaw", into = "ResolventRaw")]
pub struct ResolventMatrix {
    m: usize,
    poly: MatrixPoly,
}

#[derive(Clone, Serialize, Deserialize)]
struct ResolventRaw {
    m: usize,
    poly: MatrixPoly,
}

impl TryFrom<ResolventRaw> for ResolventMatrix {
    type Error = Error;

    fn try_from(raw: ResolventRaw) -> Result<Self> {
        if !raw.poly.q().is_multiple_of(2) || raw.poly.q() == 0 {
            return Err(Error::Dimension(format!(
                "a resolvent matrix is 2q x 2q, got side {}",
                raw.poly.q()
            )));
        }
        Ok(ResolventMatrix {
            m: raw.m,
            poly: raw.poly,
        })
    }
}

impl From<ResolventMatrix> for ResolventRaw {
    fn from(r: ResolventMatrix) -> Self {
        ResolventRaw {
            m: r.m,
            poly: r.poly,
        }
    }
}

impl ResolventMatrix {
    /// Order of the moment data the resolvent belongs to.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Moment block size; the polynomial itself has side `2q`.
    pub fn q(&self) -> usize {
        self.poly.q() / 2
    }

    /// The full matrix polynomial.
    pub fn poly(&self) -> &MatrixPoly {
        &self.poly
    }

    /// Value at a point.
    pub fn eval(&self, z: C64) -> CMat {
        self.poly.eval(z)
    }

    /// One of the four `q x q` corner polynomials, indexed by block row
    /// and block column in `{0, 1}`.
    pub fn corner(&self, bi: usize, bj: usize) -> Result<MatrixPoly> {
        self.poly.block_of(bi, bj, self.q())
    }
}

fn need_order(seq: &MomentSequence, needed: usize, what: &str) -> Result<()> {
    if seq.order() < needed {
        return Err(Error::Length(format!(
            "{what} needs moments through order {needed}, have {}",
            seq.order()
        )));
    }
    Ok(())
}

/// Builds the order-`m` resolvent matrix from the sequence itself.
///
/// The four corners are bilinear forms in the inverse Hankel blocks.
/// For even `m = 2n` both corner pairs are taken at index `n`; for odd
/// `m = 2n+1` the right column is taken one step further, so the last
/// moment enters through the shifted block. The caller is expected to
/// pass a nondegenerate sequence; degeneracy surfaces as a conditioning
/// error when a Hankel block fails to invert.
pub fn resolvent_direct(
    seq: &MomentSequence,
    m: usize,
    tol: &TolerancePolicy,
) -> Result<ResolventMatrix> {
    need_order(seq, m, "the resolvent matrix")?;
    let n = m / 2;
    let (alpha, gamma) = polyomp::alpha_gamma(seq, n, tol)?;
    let right = if m.is_multiple_of(2) { n } else { n + 1 };
    let (beta, delta) = polyomp::beta_delta(seq, right, tol)?;
    let poly = MatrixPoly::block2x2(&alpha, &beta, &gamma, &delta)?;
    Ok(ResolventMatrix { m, poly })
}

/// Which elementary step a resolvent factor encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// Lower unipotent step `[[I, 0], [-z M, I]]` built from a mass.
    Mass,
    /// Upper unipotent step `[[I, L], [0, I]]` built from a length.
    Length,
}

/// One elementary factor of the resolvent product: the step kind, the
/// parameter index it was taken from, and the parameter itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorRaw", into = "FactorRaw")]
pub struct Factor {
    kind: FactorKind,
    index: usize,
    param: CMat,
}

#[derive(Clone, Serialize, Deserialize)]
struct FactorRaw {
    kind: FactorKind,
    index: usize,
    param: matkit::json::RawMat,
}

impl TryFrom<FactorRaw> for Factor {
    type Error = Error;

    fn try_from(raw: FactorRaw) -> Result<Self> {
        let param = raw.param.try_into_mat()?;
        if param.nrows() != param.ncols() || param.is_empty() {
            return Err(Error::Dimension(
                "factor parameters are square and nonempty".into(),
            ));
        }
        if !matkit::all_finite(&param) {
            return Err(Error::Structure(
                "factor parameter has a non-finite entry".into(),
            ));
        }
        Ok(Factor {
            kind: raw.kind,
            index: raw.index,
            param,
        })
    }
}

impl From<Factor> for FactorRaw {
    fn from(f: Factor) -> Self {
        FactorRaw {
            kind: f.kind,
            index: f.index,
            param: matkit::json::RawMat::from_mat(&f.param),
        }
    }
}

impl Factor {
    /// Step kind.
    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    /// Index of the parameter within its family.
    pub fn index(&self) -> usize {
        self.index
    }

    /// The mass or length the step is built from.
    pub fn param(&self) -> &CMat {
        &self.param
    }

    /// Value of the `2q x 2q` step at a point.
    pub fn value(&self, z: C64) -> CMat {
        match self.kind {
            FactorKind::Mass => mass_step(&self.param, z),
            FactorKind::Length => length_step(&self.param),
        }
    }
}

fn mass_step(param: &CMat, z: C64) -> CMat {
    let q = param.nrows();
    let mut v = CMat::identity(2 * q, 2 * q);
    v.view_mut((q, 0), (q, q)).copy_from(&(param * (-z)));
    v
}

fn length_step(param: &CMat) -> CMat {
    let q = param.nrows();
    let mut v = CMat::identity(2 * q, 2 * q);
    v.view_mut((0, q), (q, q)).copy_from(param);
    v
}

/// Ordered elementary factorization of a resolvent matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorChain {
    factors: Vec<Factor>,
}

impl FactorChain {
    /// The factors, left to right.
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }
}

/// Lists the elementary factors of the order-`m` resolvent.
///
/// Masses and lengths alternate starting from the mass of index 0; the
/// chain ends on the mass of index `m/2` when `m` is even and on the
/// length of that index when `m` is odd, giving `m + 1` factors in all.
pub fn elementary_factors(ds: &DsParams, m: usize) -> Result<FactorChain> {
    let n = m / 2;
    let (need_masses, need_lengths) = if m.is_multiple_of(2) {
        (n + 1, n)
    } else {
        (n + 1, n + 1)
    };
    if ds.masses().len() < need_masses || ds.lengths().len() < need_lengths {
        return Err(Error::Length(format!(
            "the order-{m} factorization needs {need_masses} masses and {need_lengths} lengths, \
             have {} and {}",
            ds.masses().len(),
            ds.lengths().len()
        )));
    }
    let mut factors = Vec::with_capacity(m + 1);
    for k in 0..=n {
        factors.push(Factor {
            kind: FactorKind::Mass,
            index: k,
            param: ds.masses()[k].clone(),
        });
        if k < n || m % 2 == 1 {
            factors.push(Factor {
                kind: FactorKind::Length,
                index: k,
                param: ds.lengths()[k].clone(),
            });
        }
    }
    Ok(FactorChain { factors })
}

/// Multiplies a factor chain out at a point, left to right.
pub fn factor_product(chain: &FactorChain, z: C64) -> Result<CMat> {
    let first = chain
        .factors
        .first()
        .ok_or_else(|| Error::Length("a factor chain holds at least one factor".into()))?;
    let q = first.param.nrows();
    let mut acc = CMat::identity(2 * q, 2 * q);
    for f in &chain.factors {
        if f.param.nrows() != q {
            return Err(Error::Dimension(
                "factor block sizes differ within the chain".into(),
            ));
        }
        acc *= f.value(z);
    }
    Ok(acc)
}

fn pick<'a>(family: &'a [MatrixPoly], n: usize, what: &str) -> Result<&'a MatrixPoly> {
    family.get(n).ok_or_else(|| {
        Error::Length(format!(
            "the {what} holds {} entries, index {n} required",
            family.len()
        ))
    })
}

/// Evaluates the order-`m` resolvent at `z` from the polynomial
/// quadruple alone.
///
/// The corners are the second-kind and monic polynomials arranged as
/// `[[q_K, -q_H], [-z p_K, p_H]]`, column-scaled on the right by the
/// inverse values at zero of `q_K` and `p_H`. Even orders `m = 2n` use
/// index `n` throughout; odd orders take the plain-family column at
/// index `n + 1`.
pub fn resolvent_from_polys(
    quad: &OmpQuadruple,
    m: usize,
    z: C64,
    tol: &TolerancePolicy,
) -> Result<CMat> {
    let n = m / 2;
    let nh = if m.is_multiple_of(2) { n } else { n + 1 };
    let p_h = pick(quad.p_h(), nh, "plain monic family")?;
    let q_h = pick(quad.q_h(), nh, "plain second-kind family")?;
    let p_k = pick(quad.p_k(), n, "shifted monic family")?;
    let q_k = pick(quad.q_k(), n, "shifted second-kind family")?;
    let q = quad.q();
    let zero = C64::new(0.0, 0.0);
    let left_scale =
        matkit::checked_inverse(&q_k.eval(zero), "shifted second-kind value at zero", tol)?;
    let right_scale = matkit::checked_inverse(&p_h.eval(zero), "plain monic value at zero", tol)?;
    let mut u = CMat::zeros(2 * q, 2 * q);
    u.view_mut((0, 0), (q, q))
        .copy_from(&(q_k.eval(z) * &left_scale));
    u.view_mut((0, q), (q, q))
        .copy_from(&(-(q_h.eval(z) * &right_scale)));
    u.view_mut((q, 0), (q, q))
        .copy_from(&(p_k.eval(z) * &left_scale * (-z)));
    u.view_mut((q, q), (q, q))
        .copy_from(&(p_h.eval(z) * &right_scale));
    Ok(u)
}

/// Builds the two conjugators attached to index `n` of a quadruple.
///
/// The first is the constant block diagonal `diag(a^{-*}, a)` with
/// `a = p_H[n](0)`; conjugation by it carries the elementary factors of
/// the `2n`-fold Schur transform to those of the original sequence. The
/// second is the degree-one antidiagonal swap `[[0, b], [-z b^{-*}, 0]]`
/// with `b = q_K[n](0)`, which does the same for the `(2n+1)`-fold
/// transform while exchanging the roles of masses and lengths; it is
/// invertible only for `z != 0`. Depth-`ell` versions are obtained by
/// passing the quadruple of the `ell`-fold transform.
pub fn conjugation_factors(
    quad: &OmpQuadruple,
    n: usize,
    tol: &TolerancePolicy,
) -> Result<(CMat, MatrixPoly)> {
    let q = quad.q();
    let zero = C64::new(0.0, 0.0);
    let a = pick(quad.p_h(), n, "plain monic family")?.eval(zero);
    let b = pick(quad.q_k(), n, "shifted second-kind family")?.eval(zero);
    let a_inv_adj = matkit::checked_inverse(&a.adjoint(), "plain monic value at zero", tol)?;
    let b_inv_adj =
        matkit::checked_inverse(&b.adjoint(), "shifted second-kind value at zero", tol)?;
    let mut diag = CMat::zeros(2 * q, 2 * q);
    diag.view_mut((0, 0), (q, q)).copy_from(&a_inv_adj);
    diag.view_mut((q, q), (q, q)).copy_from(&a);
    let mut c0 = CMat::zeros(2 * q, 2 * q);
    c0.view_mut((0, q), (q, q)).copy_from(&b);
    let mut c1 = CMat::zeros(2 * q, 2 * q);
    c1.view_mut((q, 0), (q, q))
        .copy_from(&(b_inv_adj * C64::new(-1.0, 0.0)));
    let swap = MatrixPoly::new(2 * q, vec![c0, c1])?;
    Ok((diag, swap))
}

fn swap_step(s0: &CMat, z: C64, tol: &TolerancePolicy) -> Result<CMat> {
    let q = s0.nrows();
    let s0_inv_adj = matkit::checked_inverse(&s0.adjoint(), "transform leading moment", tol)?;
    let mut v = CMat::zeros(2 * q, 2 * q);
    v.view_mut((0, q), (q, q)).copy_from(s0);
    v.view_mut((q, 0), (q, q)).copy_from(&(s0_inv_adj * (-z)));
    Ok(v)
}

/// Resolvent of the `ell`-fold Schur transform at the complementary
/// order `m - ell`: peeling one transform off the data costs one order.
pub fn transformed_resolvent(
    seq: &MomentSequence,
    m: usize,
    ell: usize,
    tol: &TolerancePolicy,
) -> Result<ResolventMatrix> {
    if ell > m {
        return Err(Error::Length(format!(
            "transform depth {ell} exceeds the resolvent order {m}"
        )));
    }
    need_order(seq, m, "the transformed resolvent")?;
    let tseq = schur::transform_k(seq, ell, tol)?;
    resolvent_direct(&tseq, m - ell, tol)
}

/// Worst residuals of the intertwining laws between elementary factors
/// of a sequence and of its Schur transforms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntertwineCheck {
    /// Conjugating a transform factor back to an original factor through
    /// the constant diagonal or the degree-one swap.
    pub conjugations: f64,
    /// Pushing the depth-zero swap through one factor, trading masses
    /// for lengths between consecutive transform depths.
    pub swaps: f64,
    /// Pushing a whole product of depth-zero swaps through one factor of
    /// a deep transform in a single stroke.
    pub chains: f64,
}

impl IntertwineCheck {
    /// Largest of the three residuals.
    pub fn max(&self) -> f64 {
        self.conjugations.max(self.swaps).max(self.chains)
    }
}

/// Verifies the factor intertwining laws on sample points.
///
/// For parameter index `k` the four conjugation laws are checked for
/// every split depth `m` in `0..=k`: the length and mass of index `k`
/// (and the mass of index `k + 1`) of the original sequence equal the
/// corresponding factors of the `2m`- and `(2m+1)`-fold transforms
/// conjugated by the factors of [`conjugation_factors`] at index `m`.
/// The two swap laws are checked for every depth `ell` in `0..=n_max`,
/// and the four chain laws for every product of swaps whose depth stays
/// within `n_max`. Needs a nondegenerate sequence of order at least
/// `2k + n_max + 2`. Sample points are nudged away from places where a
/// swap factor fails to invert.
pub fn intertwine_check(
    seq: &MomentSequence,
    k: usize,
    n_max: usize,
    z_samples: &[C64],
    tol: &TolerancePolicy,
) -> Result<IntertwineCheck> {
    need_order(seq, 2 * k + n_max + 2, "the intertwining laws")?;
    let class = hankel::classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "the intertwining laws need a nondegenerate sequence".into(),
        ));
    }
    let depth = (2 * k + 1).max(n_max + 1);
    let mut ds: Vec<DsParams> = Vec::with_capacity(depth + 1);
    let mut s0s: Vec<CMat> = Vec::with_capacity(depth + 1);
    let mut cur = seq.clone();
    for d in 0..=depth {
        if d > 0 {
            cur = schur::transform1(&cur, tol)?;
        }
        s0s.push(cur.moment(0).clone());
        ds.push(dsparams::ds_forward(&cur, tol)?);
    }
    let quad = polyomp::omp_quadruple(seq, k, tol)?;
    let mut conjugators = Vec::with_capacity(k + 1);
    for m in 0..=k {
        let (diag, swap) = conjugation_factors(&quad, m, tol)?;
        let diag_inv = matkit::checked_inverse(&diag, "diagonal conjugator", tol)?;
        conjugators.push((diag, diag_inv, swap));
    }

    let point = |z: C64| -> Result<(f64, f64, f64)> {
        let swaps = s0s
            .iter()
            .map(|s0| swap_step(s0, z, tol))
            .collect::<Result<Vec<_>>>()?;

        let mut conjugations = 0.0_f64;
        for (m, (diag, diag_inv, swap_poly)) in conjugators.iter().enumerate() {
            let swap = swap_poly.eval(z);
            let swap_inv = matkit::checked_inverse(&swap, "swap conjugator", tol)?;
            let length_k = length_step(&ds[0].lengths()[k]);
            let mass_k = mass_step(&ds[0].masses()[k], z);
            let mass_k1 = mass_step(&ds[0].masses()[k + 1], z);
            let even = &ds[2 * m];
            let odd = &ds[2 * m + 1];
            let through_diag = diag * length_step(&even.lengths()[k - m]) * diag_inv;
            let through_swap = &swap * mass_step(&odd.masses()[k - m], z) * &swap_inv;
            conjugations = conjugations
                .max(rel_residual(&length_k, &through_diag))
                .max(rel_residual(&length_k, &through_swap))
                .max(rel_residual(
                    &mass_k,
                    &(diag * mass_step(&even.masses()[k - m], z) * diag_inv),
                ))
                .max(rel_residual(
                    &mass_k1,
                    &(&swap * length_step(&odd.lengths()[k - m]) * &swap_inv),
                ));
        }

        let mut swaps_res = 0.0_f64;
        for ell in 0..=n_max {
            let s = &swaps[ell];
            swaps_res = swaps_res
                .max(rel_residual(
                    &(length_step(&ds[ell].lengths()[k]) * s),
                    &(s * mass_step(&ds[ell + 1].masses()[k], z)),
                ))
                .max(rel_residual(
                    &(mass_step(&ds[ell].masses()[k + 1], z) * s),
                    &(s * length_step(&ds[ell + 1].lengths()[k])),
                ));
        }

        let mut chains = 0.0_f64;
        let mut chain = CMat::identity(2 * seq.q(), 2 * seq.q());
        for j in 0..n_max {
            chain *= &swaps[j];
            if j % 2 == 0 {
                let n = j / 2;
                chains = chains
                    .max(rel_residual(
                        &(&chain * length_step(&ds[j + 1].lengths()[k])),
                        &(mass_step(&ds[0].masses()[k + n + 1], z) * &chain),
                    ))
                    .max(rel_residual(
                        &(&chain * mass_step(&ds[j + 1].masses()[k], z)),
                        &(length_step(&ds[0].lengths()[k + n]) * &chain),
                    ));
            } else {
                let n = (j - 1) / 2;
                chains = chains
                    .max(rel_residual(
                        &(&chain * length_step(&ds[j + 1].lengths()[k])),
                        &(length_step(&ds[0].lengths()[k + n + 1]) * &chain),
                    ))
                    .max(rel_residual(
                        &(&chain * mass_step(&ds[j + 1].masses()[k], z)),
                        &(mass_step(&ds[0].masses()[k + n + 1], z) * &chain),
                    ));
            }
        }
        Ok((conjugations, swaps_res, chains))
    };

    let mut worst = IntertwineCheck {
        conjugations: 0.0,
        swaps: 0.0,
        chains: 0.0,
    };
    for &z in z_samples {
        let (c, s, ch) = sample_with_nudge(z, &point)?;
        worst.conjugations = worst.conjugations.max(c);
        worst.swaps = worst.swaps.max(s);
        worst.chains = worst.chains.max(ch);
    }
    Ok(worst)
}

fn sample_with_nudge<T>(z: C64, eval: &dyn Fn(C64) -> Result<T>) -> Result<T> {
    let mut zt = z;
    for attempt in 0..4 {
        match eval(zt) {
            Ok(v) => return Ok(v),
            Err(_) if attempt < 3 => {
                zt = z + C64::new(0.31, 0.17) * C64::new(attempt as f64 + 1.0, 0.0);
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the nudge loop either returns a value or propagates the last error")
}

/// Worst residuals of the laws splitting a resolvent into boundary
/// factors times the resolvent of a Schur transform.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SplittingCheck {
    /// Peeling the first transform: the depth-one resolvent equals the
    /// original one conjugated by the leading swap after the leading
    /// mass step is removed.
    pub first_step: f64,
    /// The same peeling applied at the requested depth `ell`.
    pub step_at_ell: f64,
    /// The full telescoped product: the resolvent times the complete
    /// swap chain equals the ordered product of mass steps and swaps.
    pub full_chain: f64,
    /// Regrouping at depth `ell`: the resolvent splits into a low-order
    /// resolvent times the conjugated resolvent of a deep transform.
    pub regroup: f64,
}

impl SplittingCheck {
    /// Largest of the four residuals.
    pub fn max(&self) -> f64 {
        self.first_step
            .max(self.step_at_ell)
            .max(self.full_chain)
            .max(self.regroup)
    }
}

/// Verifies the resolvent splitting laws on sample points.
///
/// Writing `U[m, ell]` for the order-`m - ell` resolvent of the
/// `ell`-fold transform, the laws checked are: the one-step descent
/// from `U[m, 0]` to `U[m, 1]`, the same descent from `U[m, ell]` to
/// `U[m, ell + 1]`, the fully telescoped product over all depths up to
/// `m`, and the regrouped form splitting `U[m, 0]` at depth `ell`.
/// Needs a nondegenerate sequence of order at least `m` and
/// `ell < m`. The swap factors are singular at the origin, so sample
/// points are nudged away from zero.
pub fn splitting_check(
    seq: &MomentSequence,
    m: usize,
    ell: usize,
    z_samples: &[C64],
    tol: &TolerancePolicy,
) -> Result<SplittingCheck> {
    if ell >= m {
        return Err(Error::Length(format!(
            "the splitting laws at depth {ell} need a resolvent order above it, got {m}"
        )));
    }
    need_order(seq, m, "the splitting laws")?;
    let class = hankel::classify_by_definition(seq, tol)?;
    if !class.in_kg {
        return Err(Error::Classification(
            "the splitting laws need a nondegenerate sequence".into(),
        ));
    }
    let mut s0s: Vec<CMat> = Vec::with_capacity(m + 1);
    let mut cur = seq.clone();
    for d in 0..=m {
        if d > 0 {
            cur = schur::transform1(&cur, tol)?;
        }
        s0s.push(cur.moment(0).clone());
    }
    let lead_masses = s0s
        .iter()
        .map(|s0| matkit::checked_inverse(s0, "transform leading moment", tol))
        .collect::<Result<Vec<_>>>()?;
    let u_m0 = resolvent_direct(seq, m, tol)?;
    let u_m1 = transformed_resolvent(seq, m, 1, tol)?;
    let u_ml = transformed_resolvent(seq, m, ell, tol)?;
    let u_ml1 = transformed_resolvent(seq, m, ell + 1, tol)?;
    let u_l0 = resolvent_direct(seq, ell, tol)?;

    let point = |z: C64| -> Result<(f64, f64, f64, f64)> {
        if z.norm() < 1e-6 {
            return Err(Error::Domain(
                "the swap factors are singular at the origin".into(),
            ));
        }
        let swaps = s0s
            .iter()
            .map(|s0| swap_step(s0, z, tol))
            .collect::<Result<Vec<_>>>()?;

        let q0_inv = matkit::checked_inverse(&swaps[0], "leading swap factor", tol)?;
        let m0 = mass_step(&lead_masses[0], z);
        let m0_inv = matkit::checked_inverse(&m0, "leading mass step", tol)?;
        let first_step = rel_residual(&u_m1.eval(z), &(q0_inv * m0_inv * u_m0.eval(z) * &swaps[0]));

        let ql_inv = matkit::checked_inverse(&swaps[ell], "swap factor", tol)?;
        let step_at_ell = rel_residual(
            &u_ml.eval(z),
            &(mass_step(&lead_masses[ell], z) * &swaps[ell] * u_ml1.eval(z) * ql_inv),
        );

        let mut lhs = u_m0.eval(z);
        let mut rhs = CMat::identity(2 * seq.q(), 2 * seq.q());
        for l in 0..=m {
            lhs *= &swaps[l];
            rhs = rhs * mass_step(&lead_masses[l], z) * &swaps[l];
        }
        let full_chain = rel_residual(&lhs, &rhs);

        let mut swap_chain = swaps[0].clone();
        for s in &swaps[1..=ell] {
            swap_chain *= s;
        }
        let chain_inv = matkit::checked_inverse(&swap_chain, "swap chain", tol)?;
        let regroup = rel_residual(
            &u_m0.eval(z),
            &(u_l0.eval(z) * &swap_chain * u_ml1.eval(z) * chain_inv),
        );
        Ok((first_step, step_at_ell, full_chain, regroup))
    };

    let mut worst = SplittingCheck {
        first_step: 0.0,
        step_at_ell: 0.0,
        full_chain: 0.0,
        regroup: 0.0,
    };
    for &z in z_samples {
        let (a, b, c, d) = sample_with_nudge(z, &point)?;
        worst.first_step = worst.first_step.max(a);
        worst.step_at_ell = worst.step_at_ell.max(b);
        worst.full_chain = worst.full_chain.max(c);
        worst.regroup = worst.regroup.max(d);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsparams::ds_forward;
    use crate::matkit::{mat_from_rows, mat_real, max_abs};
    use crate::parametrize::{random_spd_sequence, zero_extension};

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn factorial_seq(order: usize) -> MomentSequence {
        let mut vals = vec![1.0];
        for j in 1..=order {
            vals.push(vals[j - 1] * j as f64);
        }
        MomentSequence::from_scalars(&vals).expect("factorial moments are valid")
    }

    fn assert_mat_close(got: &CMat, want: &CMat, tolv: f64, what: &str) {
        assert!(
            rel_residual(got, want) < tolv,
            "{what}: residual {} for\n{got}\nvs\n{want}",
            rel_residual(got, want)
        );
    }

    #[test]
    fn order_zero_resolvent_is_the_leading_mass_step() {
        let t = tol();
        let seq = factorial_seq(2);
        let u = resolvent_direct(&seq, 0, &t).expect("order zero resolvent");
        let z = c(1.4, -0.6);
        let want = mat_from_rows(&[&[(1.0, 0.0), (0.0, 0.0)], &[(-1.4, 0.6), (1.0, 0.0)]]);
        assert_mat_close(&u.eval(z), &want, 1e-14, "scalar order-zero value");

        let rnd = random_spd_sequence(2, 2, 7, 1.0, &t).expect("random sequence");
        let ur = resolvent_direct(&rnd, 0, &t).expect("order zero resolvent");
        let s0_inv = matkit::checked_inverse(rnd.moment(0), "s0", &t).expect("invertible");
        assert_mat_close(
            &ur.eval(z),
            &mass_step(&s0_inv, z),
            1e-12,
            "matrix order-zero value",
        );
        assert_eq!(ur.q(), 2, "block size is q");
        assert_eq!(ur.m(), 0, "order is recorded");
        let tl = ur.corner(0, 0).expect("corner");
        assert!(
            rel_residual(&tl.eval(z), &CMat::identity(2, 2)) < 1e-14,
            "upper-left corner of the order-zero resolvent is the identity"
        );
    }

    #[test]
    fn factorial_low_order_resolvents_match_hand_values() {
        let t = tol();
        let seq = factorial_seq(4);
        for &z in &[c(2.0, 0.0), c(0.0, 1.0), c(-1.3, 0.7)] {
            let u1 = resolvent_direct(&seq, 1, &t).expect("order 1").eval(z);
            let w1 = mat_from_rows(&[
                &[(1.0, 0.0), (1.0, 0.0)],
                &[(-z.re, -z.im), ((1.0 - z).re, (1.0 - z).im)],
            ]);
            assert_mat_close(&u1, &w1, 1e-13, "order 1 value");

            let u2 = resolvent_direct(&seq, 2, &t).expect("order 2").eval(z);
            let g = z * z - z * 2.0;
            let w2 = mat_from_rows(&[
                &[((1.0 - z).re, (1.0 - z).im), (1.0, 0.0)],
                &[(g.re, g.im), ((1.0 - z).re, (1.0 - z).im)],
            ]);
            assert_mat_close(&u2, &w2, 1e-13, "order 2 value");

            let u3 = resolvent_direct(&seq, 3, &t).expect("order 3").eval(z);
            let b = (C64::new(3.0, 0.0) - z) * 0.5;
            let d = (z * z - z * 4.0 + C64::new(2.0, 0.0)) * 0.5;
            let w3 = mat_from_rows(&[
                &[((1.0 - z).re, (1.0 - z).im), (b.re, b.im)],
                &[(g.re, g.im), (d.re, d.im)],
            ]);
            assert_mat_close(&u3, &w3, 1e-13, "order 3 value");
        }
    }

    #[test]
    fn value_at_origin_has_unipotent_structure() {
        let t = tol();
        let seq = random_spd_sequence(2, 6, 11, 1.0, &t).expect("random sequence");
        for m in 0..=6 {
            let u = resolvent_direct(&seq, m, &t).expect("resolvent");
            let v0 = u.eval(c(0.0, 0.0));
            let q = u.q();
            assert!(
                rel_residual(&v0.view((0, 0), (q, q)).into_owned(), &CMat::identity(q, q)) < 1e-10,
                "upper-left block at the origin is the identity at order {m}"
            );
            assert!(
                rel_residual(&v0.view((q, q), (q, q)).into_owned(), &CMat::identity(q, q)) < 1e-10,
                "lower-right block at the origin is the identity at order {m}"
            );
            assert!(
                max_abs(&v0.view((q, 0), (q, q)).into_owned()) < 1e-10,
                "lower-left block at the origin vanishes at order {m}"
            );
            assert!(
                (v0.determinant() - C64::new(1.0, 0.0)).norm() < 1e-8,
                "determinant at the origin is one at order {m}"
            );
            let deg = u.poly().degree_with(1e-9).unwrap_or(0);
            assert!(
                deg <= m.div_ceil(2) + 1,
                "degree {deg} exceeds the bound at order {m}"
            );
        }
    }

    #[test]
    fn elementary_chain_has_the_alternating_shape() {
        let t = tol();
        let seq = factorial_seq(4);
        let ds = ds_forward(&seq, &t).expect("parameters");

        let chain0 = elementary_factors(&ds, 0).expect("order 0 chain");
        assert_eq!(
            chain0.factors().len(),
            1,
            "order 0 chain is a single factor"
        );
        assert_eq!(
            chain0.factors()[0].kind(),
            FactorKind::Mass,
            "order 0 chain is one mass"
        );

        let chain1 = elementary_factors(&ds, 1).expect("order 1 chain");
        let kinds: Vec<FactorKind> = chain1.factors().iter().map(|f| f.kind()).collect();
        assert_eq!(
            kinds,
            vec![FactorKind::Mass, FactorKind::Length],
            "order 1 alternation"
        );
        let prod = factor_product(&chain1, c(2.0, 0.0)).expect("product");
        let want = mat_real(&[&[1.0, 1.0], &[-2.0, -1.0]]);
        assert_mat_close(&prod, &want, 1e-13, "order 1 product at 2");

        let chain4 = elementary_factors(&ds, 4).expect("order 4 chain");
        let pattern: Vec<(FactorKind, usize)> = chain4
            .factors()
            .iter()
            .map(|f| (f.kind(), f.index()))
            .collect();
        assert_eq!(
            pattern,
            vec![
                (FactorKind::Mass, 0),
                (FactorKind::Length, 0),
                (FactorKind::Mass, 1),
                (FactorKind::Length, 1),
                (FactorKind::Mass, 2),
            ],
            "order 4 chain alternates and ends on a mass"
        );

        assert!(
            matches!(elementary_factors(&ds, 5), Err(Error::Length(_))),
            "order 5 needs one more length than the order-4 data holds"
        );
    }

    #[test]
    fn three_constructions_agree() {
        let t = tol();
        let seq = random_spd_sequence(2, 8, 23, 1.0, &t).expect("random sequence");
        let ds = ds_forward(&seq, &t).expect("parameters");
        let quad = polyomp::omp_quadruple(&seq, 4, &t).expect("quadruple");
        for m in 0..=8 {
            let direct = resolvent_direct(&seq, m, &t).expect("direct resolvent");
            let chain = elementary_factors(&ds, m).expect("factor chain");
            for j in 0..20 {
                let z = c(-2.0 + 0.37 * j as f64, 1.3 - 0.21 * j as f64);
                let via_direct = direct.eval(z);
                let via_chain = factor_product(&chain, z).expect("chain product");
                let via_polys = resolvent_from_polys(&quad, m, z, &t).expect("polynomial corners");
                assert!(
                    rel_residual(&via_direct, &via_chain) < 1e-8,
                    "direct and factored values differ at order {m}, point {j}"
                );
                assert!(
                    rel_residual(&via_direct, &via_polys) < 1e-8,
                    "direct and polynomial-corner values differ at order {m}, point {j}"
                );
            }
        }
    }

    #[test]
    fn conjugators_match_hand_values() {
        let t = tol();
        let seq = factorial_seq(4);
        let quad = polyomp::omp_quadruple(&seq, 2, &t).expect("quadruple");

        let (diag0, swap0) = conjugation_factors(&quad, 0, &t).expect("index 0 factors");
        assert_mat_close(&diag0, &CMat::identity(2, 2), 1e-14, "index 0 diagonal");
        let z = c(2.0, 0.0);
        let want0 = mat_real(&[&[0.0, 1.0], &[-2.0, 0.0]]);
        assert_mat_close(&swap0.eval(z), &want0, 1e-14, "index 0 swap at 2");

        let (diag1, swap1) = conjugation_factors(&quad, 1, &t).expect("index 1 factors");
        let minus_i2 = CMat::identity(2, 2) * C64::new(-1.0, 0.0);
        assert_mat_close(&diag1, &minus_i2, 1e-13, "index 1 diagonal");
        let want1 = mat_real(&[&[0.0, -1.0], &[3.0, 0.0]]);
        assert_mat_close(&swap1.eval(c(3.0, 0.0)), &want1, 1e-13, "index 1 swap at 3");
    }

    #[test]
    fn transformed_resolvent_descends_one_order_per_depth() {
        let t = tol();
        let seq = factorial_seq(3);
        let z = c(0.0, 1.0);

        let full = transformed_resolvent(&seq, 1, 0, &t).expect("depth 0");
        let direct = resolvent_direct(&seq, 1, &t).expect("direct");
        assert_eq!(
            full.poly(),
            direct.poly(),
            "depth zero is the plain resolvent"
        );

        let peeled = transformed_resolvent(&seq, 1, 1, &t).expect("depth 1");
        assert_eq!(peeled.m(), 0, "depth one drops the order by one");
        let want = mat_from_rows(&[&[(1.0, 0.0), (0.0, 0.0)], &[(0.0, -1.0), (1.0, 0.0)]]);
        assert_mat_close(&peeled.eval(z), &want, 1e-13, "peeled resolvent value");

        assert!(
            matches!(transformed_resolvent(&seq, 1, 2, &t), Err(Error::Length(_))),
            "depth above the order is rejected"
        );

        let rnd = random_spd_sequence(2, 4, 31, 1.0, &t).expect("random sequence");
        let deep = transformed_resolvent(&rnd, 4, 4, &t).expect("full depth");
        let tseq = schur::transform_k(&rnd, 4, &t).expect("transform");
        let base = resolvent_direct(&tseq, 0, &t).expect("order zero");
        assert_mat_close(
            &deep.eval(z),
            &base.eval(z),
            1e-10,
            "full depth is the transform base",
        );
    }

    #[test]
    fn intertwining_laws_hold_on_samples() {
        let t = tol();
        let pts = [c(1.7, 0.3), c(-1.1, 0.8), c(0.4, -1.2)];

        let seq = factorial_seq(5);
        let r = intertwine_check(&seq, 1, 1, &pts, &t).expect("scalar laws");
        assert!(
            r.max() < 1e-10,
            "factorial intertwining residual {}",
            r.max()
        );

        let rnd = random_spd_sequence(2, 6, 41, 1.0, &t).expect("random sequence");
        let rr = intertwine_check(&rnd, 1, 2, &pts, &t).expect("matrix laws");
        assert!(rr.max() < 1e-8, "matrix intertwining residual {}", rr.max());

        assert!(
            matches!(
                intertwine_check(&seq, 2, 1, &pts, &t),
                Err(Error::Length(_))
            ),
            "insufficient order is rejected"
        );
        let flat = zero_extension(&factorial_seq(3), 8, &t).expect("degenerate extension");
        assert!(
            matches!(
                intertwine_check(&flat, 1, 1, &pts, &t),
                Err(Error::Classification(_))
            ),
            "a degenerate sequence is rejected"
        );
    }

    #[test]
    fn splitting_laws_hold_on_samples() {
        let t = tol();

        let seq = factorial_seq(3);
        let r = splitting_check(&seq, 1, 0, &[c(0.0, 1.0)], &t).expect("scalar laws");
        assert!(r.max() < 1e-12, "factorial splitting residual {}", r.max());

        let rnd = random_spd_sequence(2, 6, 53, 1.0, &t).expect("random sequence");
        let pts = [c(1.3, 0.9), c(-0.7, 1.1), c(2.1, -0.4)];
        for ell in 0..6 {
            let rr = splitting_check(&rnd, 6, ell, &pts, &t).expect("matrix laws");
            assert!(
                rr.max() < 1e-8,
                "matrix splitting residual {} at depth {ell}",
                rr.max()
            );
        }

        assert!(
            matches!(
                splitting_check(&seq, 1, 1, &[c(0.0, 1.0)], &t),
                Err(Error::Length(_))
            ),
            "depth at the order is rejected"
        );
        let r0 = splitting_check(&seq, 1, 0, &[c(0.0, 0.0)], &t).expect("nudged origin");
        assert!(
            r0.max() < 1e-12,
            "origin sample is nudged, residual {}",
            r0.max()
        );
    }

    #[test]
    fn resolvent_and_chain_round_trip_through_json() {
        let t = tol();
        let seq = factorial_seq(3);
        let u = resolvent_direct(&seq, 2, &t).expect("resolvent");
        let text = serde_json::to_string(&u).expect("serialize resolvent");
        let back: ResolventMatrix = serde_json::from_str(&text).expect("deserialize resolvent");
        assert_eq!(back, u, "resolvent round trip");

        let ds = ds_forward(&seq, &t).expect("parameters");
        let chain = elementary_factors(&ds, 3).expect("chain");
        let text = serde_json::to_string(&chain).expect("serialize chain");
        let back: FactorChain = serde_json::from_str(&text).expect("deserialize chain");
        assert_eq!(back, chain, "chain round trip");

        let odd_poly = MatrixPoly::identity(3);
        let bad = format!(
            "{{\"m\":0,\"poly\":{}}}",
            serde_json::to_string(&odd_poly).expect("serialize poly")
        );
        assert!(
            serde_json::from_str::<ResolventMatrix>(&bad).is_err(),
            "an odd polynomial side cannot be a resolvent"
        );
    }

    #[test]
    fn length_errors_name_the_missing_data() {
        let t = tol();
        let seq = factorial_seq(2);
        assert!(
            matches!(resolvent_direct(&seq, 3, &t), Err(Error::Length(_))),
            "order above the data is rejected"
        );
        let quad = polyomp::omp_quadruple(&seq, 1, &t).expect("quadruple");
        assert!(
            matches!(
                resolvent_from_polys(&quad, 4, c(1.0, 0.0), &t),
                Err(Error::Length(_))
            ),
            "a short quadruple is rejected"
        );
    }
}
