//! Matrix polynomials and the orthogonal systems attached to a sequence.
//!
//! A nondegenerate sequence carries two families of monic orthogonal
//! matrix polynomials, one for the plain Hankel blocks and one for the
//! shifted blocks, each with a second-kind companion. All four are read
//! off one bilinear form: a block row, the transpose of a nilpotent
//! shift resolvent, and a block column, which expands into explicit
//! `z`-coefficients because the shift is nilpotent. The same machinery
//! yields the four corner polynomials of the resolvent matrix. Identity
//! checks relate the families of a sequence and of its Schur transform.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsparams::DsParams;
use crate::hankel::{self, MomentSequence};
use crate::matkit::{self, rel_residual, CMat, TolerancePolicy, C64};
use crate::measures::{measure_moments, shifted_measure, AtomicMeasure};
use crate::schur;
use crate::{Error, Result};

/// A square matrix polynomial stored by explicit coefficients,
/// `P(z) = sum_j z^j A_j` with every `A_j` of size q x q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRaw", into = "PolyRaw")]
pub struct MatrixPoly {
    q: usize,
    coeffs: Vec<CMat>,
}

#[derive(Clone, Serialize, Deserialize)]
struct PolyRaw {
    q: usize,
    coeffs: Vec<matkit::json::RawMat>,
}

impl TryFrom<PolyRaw> for MatrixPoly {
    type Error = Error;

    fn try_from(raw: PolyRaw) -> Result<Self> {
        let coeffs = raw
            .coeffs
            .into_iter()
            .map(|r| r.try_into_mat())
            .collect::<Result<Vec<_>>>()?;
        MatrixPoly::new(raw.q, coeffs)
    }
}

impl From<MatrixPoly> for PolyRaw {
    fn from(p: MatrixPoly) -> Self {
        PolyRaw {
            q: p.q,
            coeffs: p
                .coeffs
                .iter()
                .map(matkit::json::RawMat::from_mat)
                .collect(),
        }
    }
}

impl MatrixPoly {
    /// Builds a polynomial from its coefficient list. An empty list is
    /// normalized to the zero polynomial with a single zero coefficient.
    pub fn new(q: usize, coeffs: Vec<CMat>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("matrix size q must be positive".into()));
        }
        let coeffs = if coeffs.is_empty() {
            vec![CMat::zeros(q, q)]
        } else {
            coeffs
        };
        for (j, a) in coeffs.iter().enumerate() {
            if a.nrows() != q || a.ncols() != q {
                return Err(Error::Dimension(format!(
                    "coefficient {j} is {}x{}, expected {q}x{q}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if !matkit::all_finite(a) {
                return Err(Error::Invalid(format!(
                    "coefficient {j} has nonfinite entries"
                )));
            }
        }
        Ok(MatrixPoly { q, coeffs })
    }

    /// The zero polynomial of block size q.
    pub fn zero(q: usize) -> Self {
        MatrixPoly {
            q,
            coeffs: vec![CMat::zeros(q, q)],
        }
    }

    /// The constant polynomial with value `a`.
    pub fn constant(a: CMat) -> Self {
        let q = a.nrows();
        MatrixPoly { q, coeffs: vec![a] }
    }

    /// The constant identity polynomial of block size q.
    pub fn identity(q: usize) -> Self {
        MatrixPoly::constant(CMat::identity(q, q))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    /// The z^j coefficient, zero beyond the stored list.
    pub fn coeff(&self, j: usize) -> CMat {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.q, self.q))
    }

    /// Largest stored index whose coefficient exceeds `floor` in absolute
    /// value; `None` for the zero polynomial.
    pub fn degree_with(&self, floor: f64) -> Option<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .find(|(_, a)| matkit::max_abs(a) > floor)
            .map(|(j, _)| j)
    }

    /// Exact degree: largest index with a nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.degree_with(0.0)
    }

    /// Drops trailing coefficients at or below `floor` in absolute value.
    pub fn trim(&self, floor: f64) -> Self {
        let keep = self.degree_with(floor).map_or(1, |d| d + 1);
        MatrixPoly {
            q: self.q,
            coeffs: self.coeffs[..keep].to_vec(),
        }
    }

    /// Horner evaluation of the polynomial at z.
    pub fn eval(&self, z: C64) -> CMat {
        let mut acc = self
            .coeffs
            .last()
            .expect("coefficient list is nonempty")
            .clone();
        for a in self.coeffs.iter().rev().skip(1) {
            acc = acc * z + a;
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, C64::new(-1.0, 0.0))
    }

    fn combine(&self, other: &Self, sign: C64) -> Result<Self> {
        if self.q != other.q {
            return Err(Error::Dimension(format!(
                "block sizes {} and {} differ",
                self.q, other.q
            )));
        }
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|j| self.coeff(j) + other.coeff(j) * sign)
            .collect();
        Ok(MatrixPoly { q: self.q, coeffs })
    }

    pub fn neg(&self) -> Self {
        self.scale(C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, c: C64) -> Self {
        MatrixPoly {
            q: self.q,
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Multiplies by z, shifting every coefficient up one index.
    pub fn mul_z(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(CMat::zeros(self.q, self.q));
        coeffs.extend(self.coeffs.iter().cloned());
        MatrixPoly { q: self.q, coeffs }
    }

    /// Left-multiplies every coefficient by a constant matrix.
    pub fn mul_left(&self, c: &CMat) -> Result<Self> {
        if c.ncols() != self.q {
            return Err(Error::Dimension(format!(
                "left factor has {} columns, polynomial blocks are {}x{}",
                c.ncols(),
                self.q,
                self.q
            )));
        }
        MatrixPoly::new(c.nrows(), self.coeffs.iter().map(|a| c * a).collect())
    }

    /// Right-multiplies every coefficient by a constant matrix.
    pub fn mul_right(&self, c: &CMat) -> Result<Self> {
        if c.nrows() != self.q {
            return Err(Error::Dimension(format!(
                "right factor has {} rows, polynomial blocks are {}x{}",
                c.nrows(),
                self.q,
                self.q
            )));
        }
        MatrixPoly::new(c.ncols(), self.coeffs.iter().map(|a| a * c).collect())
    }

    /// Coefficientwise derivative.
    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return MatrixPoly::zero(self.q);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, a)| a * C64::new(j as f64, 0.0))
            .collect();
        MatrixPoly { q: self.q, coeffs }
    }

    /// Assembles a polynomial with 2q blocks from four q-block corners.
    pub fn block2x2(tl: &Self, tr: &Self, bl: &Self, br: &Self) -> Result<Self> {
        let q = tl.q;
        if tr.q != q || bl.q != q || br.q != q {
            return Err(Error::Dimension("corner block sizes differ".into()));
        }
        let len = [tl, tr, bl, br]
            .iter()
            .map(|p| p.coeffs.len())
            .max()
            .expect("four corners");
        let coeffs = (0..len)
            .map(|j| {
                let mut a = CMat::zeros(2 * q, 2 * q);
                a.view_mut((0, 0), (q, q)).copy_from(&tl.coeff(j));
                a.view_mut((0, q), (q, q)).copy_from(&tr.coeff(j));
                a.view_mut((q, 0), (q, q)).copy_from(&bl.coeff(j));
                a.view_mut((q, q), (q, q)).copy_from(&br.coeff(j));
                a
            })
            .collect();
        Ok(MatrixPoly { q: 2 * q, coeffs })
    }

    /// Extracts the (bi, bj) corner of size `block` from a polynomial
    /// whose coefficients tile into blocks of that size.
    pub fn block_of(&self, bi: usize, bj: usize, block: usize) -> Result<Self> {
        if block == 0 || !self.q.is_multiple_of(block) {
            return Err(Error::Dimension(format!(
                "block size {block} does not tile {}x{} coefficients",
                self.q, self.q
            )));
        }
        let per = self.q / block;
        if bi >= per || bj >= per {
            return Err(Error::Dimension(format!(
                "block index ({bi},{bj}) outside {per}x{per} tiling"
            )));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|a| {
                a.view((bi * block, bj * block), (block, block))
                    .into_owned()
            })
            .collect();
        MatrixPoly::new(block, coeffs)
    }
}

/// The block subdiagonal shift on n+1 blocks of size q: block (j,k) is
/// the identity exactly when j = k+1.
pub fn shift_matrix(n: usize, q: usize) -> CMat {
    let d = (n + 1) * q;
    let mut t = CMat::zeros(d, d);
    for j in 1..=n {
        t.view_mut((j * q, (j - 1) * q), (q, q))
            .copy_from(&CMat::identity(q, q));
    }
    t
}

/// Closed form of `(I - z T)^{-1}` for the nilpotent shift: lower block
/// triangular with block (j,k) equal to `z^{j-k} I` for j >= k.
pub fn shift_resolvent(n: usize, q: usize, z: C64) -> CMat {
    let d = (n + 1) * q;
    let mut r = CMat::zeros(d, d);
    let eye = CMat::identity(q, q);
    for j in 0..=n {
        let mut pow = C64::new(1.0, 0.0);
        for k in (0..=j).rev() {
            r.view_mut((j * q, k * q), (q, q)).copy_from(&(&eye * pow));
            pow *= z;
        }
    }
    r
}

/// Coefficients of the scalar-in-z matrix polynomial
/// `row * transpose-resolvent * col`: the z^p coefficient is
/// `sum_j row_j col_{j+p}` because the transposed shift resolvent has
/// `z^{k-j} I` at block (j,k) for k >= j.
fn toeplitz_bilinear(rows: &[CMat], cols: &[CMat]) -> Vec<CMat> {
    assert_eq!(rows.len(), cols.len(), "row and column block counts differ");
    let n = rows.len();
    let q = rows[0].nrows();
    (0..n)
        .map(|p| {
            let mut acc = CMat::zeros(q, q);
            for j in 0..n - p {
                acc += &rows[j] * &cols[j + p];
            }
            acc
        })
        .collect()
}

fn row_blocks(row: &CMat, q: usize) -> Vec<CMat> {
    (0..row.ncols() / q)
        .map(|j| row.view((0, j * q), (q, q)).into_owned())
        .collect()
}

fn col_blocks(col: &CMat, q: usize) -> Vec<CMat> {
    (0..col.nrows() / q)
        .map(|j| col.view((j * q, 0), (q, q)).into_owned())
        .collect()
}

/// Block column with the identity on top and kq zero rows below.
fn v_stack(q: usize, k: usize) -> CMat {
    let mut v = CMat::zeros((k + 1) * q, q);
    v.view_mut((0, 0), (q, q)).copy_from(&CMat::identity(q, q));
    v
}

/// Block column `[0; -y_{0,k-1}]`; for k = 0 just the q x q zero block.
fn u_stack(moments: &[CMat], q: usize, k: usize) -> CMat {
    if k == 0 {
        return CMat::zeros(q, q);
    }
    let mut u = CMat::zeros((k + 1) * q, q);
    u.view_mut((q, 0), (k * q, q))
        .copy_from(&(-hankel::y_slice(moments, q, 0, k - 1)));
    u
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

/// The upper-left and lower-left resolvent corner polynomials at index n.
/// Both need moments through order 2n.
pub(crate) fn alpha_gamma(
    seq: &MomentSequence,
    n: usize,
    tol: &TolerancePolicy,
) -> Result<(MatrixPoly, MatrixPoly)> {
    need_order(seq, 2 * n, "corner polynomials")?;
    let q = seq.q();
    let h = hankel::build_h(seq, n)?;
    let (w, _) = matkit::checked_solve(&h, &v_stack(q, n), &format!("H_{n}"), tol)?;
    let u_adj = u_stack(seq.moments(), q, n).adjoint();
    let v_adj = v_stack(q, n).adjoint();
    let w_cols = col_blocks(&w, q);
    let tb_u = MatrixPoly::new(q, toeplitz_bilinear(&row_blocks(&u_adj, q), &w_cols))?;
    let tb_v = MatrixPoly::new(q, toeplitz_bilinear(&row_blocks(&v_adj, q), &w_cols))?;
    let alpha = MatrixPoly::identity(q).sub(&tb_u.mul_z())?;
    let gamma = tb_v.mul_z().neg();
    Ok((alpha, gamma))
}

/// The upper-right and lower-right resolvent corner polynomials at index
/// n. For n >= 1 they need moments through order 2n-1.
pub(crate) fn beta_delta(
    seq: &MomentSequence,
    n: usize,
    tol: &TolerancePolicy,
) -> Result<(MatrixPoly, MatrixPoly)> {
    let q = seq.q();
    if n == 0 {
        return Ok((MatrixPoly::zero(q), MatrixPoly::identity(q)));
    }
    need_order(seq, 2 * n - 1, "corner polynomials")?;
    let k = hankel::build_k(seq, n - 1)?;
    let y = hankel::y_block(seq, 0, n - 1)?;
    let (x, _) = matkit::checked_solve(&k, &y, &format!("K_{}", n - 1), tol)?;
    let x_cols = col_blocks(&x, q);
    let tb_y = MatrixPoly::new(q, toeplitz_bilinear(&row_blocks(&y.adjoint(), q), &x_cols))?;
    let tb_v = MatrixPoly::new(
        q,
        toeplitz_bilinear(&row_blocks(&v_stack(q, n - 1).adjoint(), q), &x_cols),
    )?;
    let delta = MatrixPoly::identity(q).sub(&tb_v.mul_z())?;
    Ok((tb_y, delta))
}

/// The four corner polynomials of the order-2n resolvent matrix.
pub fn abcd_polys(
    seq: &MomentSequence,
    n: usize,
    tol: &TolerancePolicy,
) -> Result<(MatrixPoly, MatrixPoly, MatrixPoly, MatrixPoly)> {
    let (alpha, gamma) = alpha_gamma(seq, n, tol)?;
    let (beta, delta) = beta_delta(seq, n, tol)?;
    Ok((alpha, beta, gamma, delta))
}

/// The two monic orthogonal families and their second-kind companions.
#[derive(Clone, Debug)]
pub struct OmpQuadruple {
    q: usize,
    p_h: Vec<MatrixPoly>,
    q_h: Vec<MatrixPoly>,
    p_k: Vec<MatrixPoly>,
    q_k: Vec<MatrixPoly>,
}

impl OmpQuadruple {
    pub fn q(&self) -> usize {
        self.q
    }

    /// Monic polynomials orthogonal under the plain Hankel blocks.
    pub fn p_h(&self) -> &[MatrixPoly] {
        &self.p_h
    }

    /// Second-kind companions of the plain family.
    pub fn q_h(&self) -> &[MatrixPoly] {
        &self.q_h
    }

    /// Monic polynomials orthogonal under the shifted Hankel blocks.
    pub fn p_k(&self) -> &[MatrixPoly] {
        &self.p_k
    }

    /// Second-kind companions of the shifted family.
    pub fn q_k(&self) -> &[MatrixPoly] {
        &self.q_k
    }
}

/// Builds both polynomial families. The plain family runs to index
/// `upto_n` (needs moments through 2 upto_n - 1); the shifted family
/// runs to `min(upto_n, order/2)`.
pub fn omp_quadruple(
    seq: &MomentSequence,
    upto_n: usize,
    tol: &TolerancePolicy,
) -> Result<OmpQuadruple> {
    if upto_n >= 1 {
        need_order(seq, 2 * upto_n - 1, "plain polynomial family")?;
    }
    let q = seq.q();
    let moments = seq.moments();
    let mut quad = OmpQuadruple {
        q,
        p_h: vec![MatrixPoly::identity(q)],
        q_h: vec![MatrixPoly::zero(q)],
        p_k: vec![MatrixPoly::identity(q)],
        q_k: vec![MatrixPoly::constant(seq.moment(0).clone())],
    };
    for n in 1..=upto_n {
        let h = hankel::build_h(seq, n - 1)?;
        let y = hankel::y_block(seq, n, 2 * n - 1)?;
        let (sol, _) = matkit::checked_solve(&h, &y, &format!("H_{}", n - 1), tol)?;
        let mut col = col_blocks(&(-sol), q);
        col.push(CMat::identity(q, q));
        let v_rows = row_blocks(&v_stack(q, n).adjoint(), q);
        let u_rows = row_blocks(&u_stack(moments, q, n).adjoint(), q);
        quad.p_h
            .push(MatrixPoly::new(q, toeplitz_bilinear(&v_rows, &col))?);
        quad.q_h
            .push(MatrixPoly::new(q, toeplitz_bilinear(&u_rows, &col))?.neg());
        if 2 * n > seq.order() {
            continue;
        }
        let k = hankel::build_k(seq, n - 1)?;
        let yk = hankel::y_block(seq, n + 1, 2 * n)?;
        let (sol_k, _) = matkit::checked_solve(&k, &yk, &format!("K_{}", n - 1), tol)?;
        let mut col_k = col_blocks(&(-sol_k), q);
        col_k.push(CMat::identity(q, q));
        let z_rows = row_blocks(&hankel::z_block(seq, 0, n)?, q);
        quad.p_k
            .push(MatrixPoly::new(q, toeplitz_bilinear(&v_rows, &col_k))?);
        quad.q_k
            .push(MatrixPoly::new(q, toeplitz_bilinear(&z_rows, &col_k))?);
    }
    Ok(quad)
}

/// Values at zero of the plain monic polynomial and the shifted
/// second-kind polynomial, as signed inverse parameter products:
/// `p_n(0) = (-1)^n (M_0 L_0 ... M_{n-1} L_{n-1})^{-1}` and
/// `q_n(0) = (-1)^n ((M_0 L_0 ... M_{n-1} L_{n-1}) M_n)^{-1}`.
pub fn omp_values_at_zero(ds: &DsParams, n: usize, tol: &TolerancePolicy) -> Result<(CMat, CMat)> {
    if n == 0 {
        return Err(Error::Invalid("value products start at index 1".into()));
    }
    if ds.lengths().len() < n || ds.masses().len() < n + 1 {
        return Err(Error::Length(format!(
            "need {n} lengths and {} masses, have {} and {}",
            n + 1,
            ds.lengths().len(),
            ds.masses().len()
        )));
    }
    let q = ds.q();
    let mut prod = CMat::identity(q, q);
    for k in 0..n {
        prod = prod * &ds.masses()[k] * &ds.lengths()[k];
    }
    let sign = C64::new(if n.is_multiple_of(2) { 1.0 } else { -1.0 }, 0.0);
    let ph0 = matkit::checked_inverse(&prod, "mass-length product", tol)? * sign;
    let full = &prod * &ds.masses()[n];
    let qk0 = matkit::checked_inverse(&full, "mass-length product with tail mass", tol)? * sign;
    Ok((ph0, qk0))
}

/// Which orthogonal family a check applies to: plain Hankel blocks or
/// shifted blocks (integration against the node-weighted measure).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmpFamily {
    Plain,
    Shifted,
}

/// Coefficient stack `[A_0; ...; A_n]` of a polynomial, zero-padded.
fn coeff_stack(p: &MatrixPoly, n: usize) -> CMat {
    let q = p.q();
    let mut y = CMat::zeros((n + 1) * q, q);
    for j in 0..=n {
        y.view_mut((j * q, 0), (q, q)).copy_from(&p.coeff(j));
    }
    y
}

/// Gram entries of a polynomial list under the sequence's Hankel blocks:
/// entry (j,k) is `Y_n[P_j]* H_n Y_n[P_k]` with n = max(j,k). A monic
/// right orthogonal system has zero off-diagonal entries.
pub fn monic_orthogonality_gram(
    polys: &[MatrixPoly],
    seq: &MomentSequence,
) -> Result<Vec<Vec<CMat>>> {
    if polys.is_empty() {
        return Err(Error::Invalid("empty polynomial list".into()));
    }
    let top = polys.len() - 1;
    need_order(seq, 2 * top, "orthogonality Gram blocks")?;
    let mut rows = Vec::with_capacity(polys.len());
    for j in 0..polys.len() {
        let mut row = Vec::with_capacity(polys.len());
        for k in 0..polys.len() {
            let n = j.max(k);
            let h = hankel::build_h(seq, n)?;
            row.push(coeff_stack(&polys[j], n).adjoint() * &h * coeff_stack(&polys[k], n));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Residual table of the orthogonality relations of a polynomial list
/// against an atomic measure: off-diagonal integrals vanish and the
/// diagonal equals the sequence's Schur complement of matching parity.
/// The measure's moments must reproduce the sequence through the order
/// the integrals consume.
pub fn monic_orthogonality_check(
    polys: &[MatrixPoly],
    measure: &AtomicMeasure,
    family: OmpFamily,
    seq: &MomentSequence,
    tol: &TolerancePolicy,
) -> Result<DMatrix<f64>> {
    if polys.is_empty() {
        return Err(Error::Invalid("empty polynomial list".into()));
    }
    let top = polys.len() - 1;
    let needed = match family {
        OmpFamily::Plain => 2 * top,
        OmpFamily::Shifted => 2 * top + 1,
    };
    need_order(seq, needed, "orthogonality targets")?;
    let mm = measure_moments(measure, needed);
    for j in 0..=needed {
        let r = rel_residual(mm.moment(j), seq.moment(j));
        if r > tol.rtol_identity {
            return Err(Error::MomentMismatch(format!(
                "measure moment {j} deviates from the sequence by {r:.3e}"
            )));
        }
    }
    let integrand = match family {
        OmpFamily::Plain => measure.clone(),
        OmpFamily::Shifted => shifted_measure(measure),
    };
    let mut table = DMatrix::zeros(polys.len(), polys.len());
    for j in 0..polys.len() {
        for k in 0..polys.len() {
            let mut acc = CMat::zeros(seq.q(), seq.q());
            for (t, w) in integrand.atoms() {
                let zt = C64::new(*t, 0.0);
                acc += polys[j].eval(zt).adjoint() * w * polys[k].eval(zt);
            }
            let target = if j == k {
                match family {
                    OmpFamily::Plain => hankel::schur_l(seq, j, tol)?,
                    OmpFamily::Shifted => hankel::schur_lambda(seq, j, tol)?,
                }
            } else {
                CMat::zeros(seq.q(), seq.q())
            };
            table[(j, k)] = rel_residual(&acc, &target);
        }
    }
    Ok(table)
}

/// Maximum residuals of the polynomial identities tying a sequence's
/// families to the families of its Schur transform, evaluated at sample
/// points off the nonnegative axis.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransformPolyCheck {
    /// Transform plain monic vs scaled shifted second kind.
    pub plain_monic: f64,
    /// Transform plain second kind vs shifted family combination.
    pub plain_second: f64,
    /// Transform shifted monic vs scaled plain second kind.
    pub shifted_monic: f64,
    /// Transform shifted second kind vs plain family combination.
    pub shifted_second: f64,
    /// First rational sum identity (plain family of the sequence).
    pub sum_plain: f64,
    /// Second rational sum identity (shifted family of the sequence).
    pub sum_shifted: f64,
}

impl TransformPolyCheck {
    pub fn max(&self) -> f64 {
        [
            self.plain_monic,
            self.plain_second,
            self.shifted_monic,
            self.shifted_second,
            self.sum_plain,
            self.sum_shifted,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Finds a point near z at which every listed polynomial evaluates to a
/// well-conditioned matrix, nudging up to three times before giving up.
fn usable_point(polys: &[&MatrixPoly], z: C64, tol: &TolerancePolicy) -> Result<C64> {
    let mut zt = z;
    for attempt in 0..4 {
        if polys
            .iter()
            .all(|p| matkit::checked_inverse(&p.eval(zt), "sample denominator", tol).is_ok())
        {
            return Ok(zt);
        }
        zt = z + C64::new(0.31, 0.17) * C64::new(attempt as f64 + 1.0, 0.0);
    }
    Err(Error::Domain(
        "no sample point near the requested one keeps the denominators invertible".into(),
    ))
}

/// Verifies the four polynomial identities and the two rational sum
/// identities relating a sequence's families to those of its transform,
/// at the given sample points. Returns the maximum residual per identity.
pub fn transform_poly_identities(
    seq: &MomentSequence,
    n: usize,
    z_samples: &[C64],
    tol: &TolerancePolicy,
) -> Result<TransformPolyCheck> {
    if n == 0 {
        return Err(Error::Invalid("identity suite starts at index 1".into()));
    }
    need_order(seq, 2 * n, "transform polynomial identities")?;
    if z_samples.is_empty() {
        return Err(Error::Invalid("no sample points supplied".into()));
    }
    let quad = omp_quadruple(seq, n, tol)?;
    let tseq = schur::transform1(seq, tol)?;
    let tquad = omp_quadruple(&tseq, n, tol)?;
    let s0 = seq.moment(0).clone();
    let s0_inv = matkit::checked_inverse(&s0, "leading moment", tol)?;

    let mut out = TransformPolyCheck {
        plain_monic: 0.0,
        plain_second: 0.0,
        shifted_monic: 0.0,
        shifted_second: 0.0,
        sum_plain: 0.0,
        sum_shifted: 0.0,
    };
    for &z in z_samples {
        let ph_t = tquad.p_h[n].eval(z);
        let qh_t = tquad.q_h[n].eval(z);
        let pk_t = tquad.p_k[n - 1].eval(z);
        let qk_t = tquad.q_k[n - 1].eval(z);
        let ph = quad.p_h[n].eval(z);
        let qh = quad.q_h[n].eval(z);
        let pk = quad.p_k[n].eval(z);
        let qk = quad.q_k[n].eval(z);

        out.plain_monic = out.plain_monic.max(rel_residual(&ph_t, &(&s0_inv * &qk)));
        out.plain_second = out
            .plain_second
            .max(rel_residual(&qh_t, &(&qk - &s0 * &pk)));
        out.shifted_monic = out.shifted_monic.max(rel_residual(&pk_t, &(&s0_inv * &qh)));
        out.shifted_second = out
            .shifted_second
            .max(rel_residual(&qk_t, &(&qh * z - &s0 * &ph)));

        // Sum identities need invertible denominators; nudge the point
        // off polynomial zeros when necessary.
        let za = usable_point(&[&quad.q_h[n], &tquad.p_k[n - 1]], z, tol)?;
        let num_a = &s0 * quad.p_h[n].eval(za);
        let ta =
            matkit::checked_solve_right(&quad.q_h[n].eval(za), &num_a, "plain second kind", tol)?;
        let ta2 = matkit::checked_solve_right(
            &tquad.p_k[n - 1].eval(za),
            &tquad.q_k[n - 1].eval(za),
            "transform shifted monic",
            tol,
        )?;
        let lhs_a = ta * &s0 + ta2;
        out.sum_plain = out.sum_plain.max(rel_residual(&lhs_a, &(&s0 * za)));

        let zb = usable_point(&[&quad.q_k[n], &tquad.p_h[n]], z, tol)?;
        let num_b = &s0 * quad.p_k[n].eval(zb);
        let tb =
            matkit::checked_solve_right(&quad.q_k[n].eval(zb), &num_b, "shifted second kind", tol)?;
        let tb2 = matkit::checked_solve_right(
            &tquad.p_h[n].eval(zb),
            &tquad.q_h[n].eval(zb),
            "transform plain monic",
            tol,
        )?;
        let lhs_b = tb * &s0 + tb2;
        out.sum_shifted = out.sum_shifted.max(rel_residual(&lhs_b, &s0));
    }
    Ok(out)
}

/// Verifies that the mass and length parameters of a sequence are the
/// parameters of its repeated transforms conjugated by polynomial values
/// at zero: for every split 0 <= m <= k,
/// `L_k = p_m(0)^{-*} L'_{k-m} p_m(0)^{-1} = q_m(0) M''_{k-m} q_m(0)*` and
/// `M_k = p_m(0) M'_{k-m} p_m(0)*`,
/// `M_{k+1} = q_m(0)^{-*} L''_{k-m} q_m(0)^{-1}`,
/// where primes mark depth-2m and double primes depth-2m+1 parameters.
/// Returns the maximum residual over all splits.
pub fn ds_values_conjugation_check(
    seq: &MomentSequence,
    k: usize,
    tol: &TolerancePolicy,
) -> Result<f64> {
    need_order(seq, 2 * k + 2, "value conjugation suite")?;
    let ds = crate::dsparams::ds_forward(seq, tol)?;
    let quad = omp_quadruple(seq, k, tol)?;
    let mut worst: f64 = 0.0;
    for m in 0..=k {
        let even = crate::dsparams::ds_forward(&schur::transform_k(seq, 2 * m, tol)?, tol)?;
        let odd = crate::dsparams::ds_forward(&schur::transform_k(seq, 2 * m + 1, tol)?, tol)?;
        let ph0 = quad.p_h[m].eval(C64::new(0.0, 0.0));
        let qk0 = quad.q_k[m].eval(C64::new(0.0, 0.0));
        let ph0_inv = matkit::checked_inverse(&ph0, "plain value at zero", tol)?;
        let qk0_inv = matkit::checked_inverse(&qk0, "shifted value at zero", tol)?;

        let l_even = ph0_inv.adjoint() * &even.lengths()[k - m] * &ph0_inv;
        let l_odd = &qk0 * &odd.masses()[k - m] * qk0.adjoint();
        let m_even = &ph0 * &even.masses()[k - m] * ph0.adjoint();
        let m_odd = qk0_inv.adjoint() * &odd.lengths()[k - m] * &qk0_inv;
        worst = worst
            .max(rel_residual(&l_even, &ds.lengths()[k]))
            .max(rel_residual(&l_odd, &ds.lengths()[k]))
            .max(rel_residual(&m_even, &ds.masses()[k]))
            .max(rel_residual(&m_odd, &ds.masses()[k + 1]));
    }
    Ok(worst)
}
