//! Named identity suites over a moment sequence.
//!
//! Each suite evaluates the laws of one module on concrete data and
//! reports one row per law: the measured residual, the tolerance it was
//! held to, and the verdict. A law whose preconditions the data shape
//! cannot meet (too short a sequence, matrix data for a scalar-only
//! check) is omitted; a law that applies but fails to evaluate reports
//! an infinite residual with a note, so a corrupted input shows up as
//! failing rows rather than as an aborted run.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsparams;
use crate::hankel::{self, MomentSequence};
use crate::matkit::{rel_residual, CMat, TolerancePolicy, C64};
use crate::measures;
use crate::parametrize;
use crate::polyomp::{self, MatrixPoly};
use crate::resolvent;
use crate::schur;
use crate::{Error, Result};

/// One verified law: a named residual compared against a tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Why the law could not be evaluated; the residual is then infinite.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckRow {
    /// Row from a measured residual; passes iff the residual is finite
    /// and within tolerance.
    pub fn from_residual(name: &str, residual: f64, tolerance: f64) -> Self {
        CheckRow {
            name: name.into(),
            residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
            note: None,
        }
    }

    /// Row from a yes/no law: residual 0 when it holds, infinite with
    /// the stated note when it does not.
    pub fn from_flag(name: &str, holds: bool, tolerance: f64, note: &str) -> Self {
        CheckRow {
            name: name.into(),
            residual: if holds { 0.0 } else { f64::INFINITY },
            tolerance,
            pass: holds,
            note: if holds { None } else { Some(note.into()) },
        }
    }

    /// Row for a law that applied but could not be evaluated.
    pub fn from_failure(name: &str, tolerance: f64, err: &Error) -> Self {
        CheckRow {
            name: name.into(),
            residual: f64::INFINITY,
            tolerance,
            pass: false,
            note: Some(err.to_string()),
        }
    }
}

fn row(name: &str, tolerance: f64, outcome: Result<f64>) -> CheckRow {
    match outcome {
        Ok(r) => CheckRow::from_residual(name, r, tolerance),
        Err(e) => CheckRow::from_failure(name, tolerance, &e),
    }
}

/// Which identity suite to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    All,
    Sp,
    Ds,
    Schur,
    Omp,
    Resolvent,
    Measures,
}

impl SuiteKind {
    /// Parses the command-line spelling of a suite name.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "all" => Some(SuiteKind::All),
            "sp" => Some(SuiteKind::Sp),
            "ds" => Some(SuiteKind::Ds),
            "schur" => Some(SuiteKind::Schur),
            "omp" => Some(SuiteKind::Omp),
            "resolvent" => Some(SuiteKind::Resolvent),
            "measures" => Some(SuiteKind::Measures),
            _ => None,
        }
    }

    /// The command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::All => "all",
            SuiteKind::Sp => "sp",
            SuiteKind::Ds => "ds",
            SuiteKind::Schur => "schur",
            SuiteKind::Omp => "omp",
            SuiteKind::Resolvent => "resolvent",
            SuiteKind::Measures => "measures",
        }
    }
}

/// Fixed off-axis sample points used by the identity suites: away from
/// the origin and from the nonnegative real axis where denominators and
/// swap factors degenerate.
pub fn default_sample_points() -> Vec<C64> {
    vec![
        C64::new(0.0, 1.0),
        C64::new(0.0, -1.0),
        C64::new(-1.0, 1.0),
        C64::new(-1.0, -1.0),
        C64::new(-2.0, 0.0),
        C64::new(0.5, 2.0),
        C64::new(-0.5, -1.5),
    ]
}

/// Seeded sample points with imaginary parts bounded away from the real
/// axis, for randomized runs of the identity suites.
pub fn random_sample_points(seed: u64, count: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let re = rng.random_range(-2.5..2.5);
            let sign = if rng.random_range(0.0..1.0) < 0.5 {
                -1.0
            } else {
                1.0
            };
            let im = sign * rng.random_range(0.4..2.0);
            C64::new(re, im)
        })
        .collect()
}

/// Runs the named suite over one sequence, one row per law.
pub fn run_suite(seq: &MomentSequence, kind: SuiteKind, tol: &TolerancePolicy) -> Vec<CheckRow> {
    match kind {
        SuiteKind::All => [
            SuiteKind::Sp,
            SuiteKind::Ds,
            SuiteKind::Schur,
            SuiteKind::Omp,
            SuiteKind::Resolvent,
            SuiteKind::Measures,
        ]
        .iter()
        .flat_map(|k| run_suite(seq, *k, tol))
        .collect(),
        SuiteKind::Sp => sp_suite(seq, tol),
        SuiteKind::Ds => ds_suite(seq, tol),
        SuiteKind::Schur => schur_suite(seq, tol),
        SuiteKind::Omp => omp_suite(seq, tol),
        SuiteKind::Resolvent => resolvent_suite(seq, tol),
        SuiteKind::Measures => measures_suite(seq, tol),
    }
}

fn worst_moment_residual(a: &MomentSequence, b: &MomentSequence) -> f64 {
    if a.q() != b.q() || a.order() != b.order() {
        return f64::INFINITY;
    }
    (0..=a.order())
        .map(|j| rel_residual(a.moment(j), b.moment(j)))
        .fold(0.0, f64::max)
}

/// Rows for the inner parametrization: classification, round trip, and
/// the degenerate continuation.
pub fn sp_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let mut rows = Vec::new();

    match hankel::classify_by_definition(seq, tol) {
        Ok(class) => {
            let nested = (!class.in_kg || class.in_kgge) && (!class.in_kgge || class.in_kgg);
            rows.push(CheckRow::from_flag(
                "sp: solvability classes are nested",
                nested,
                te,
                "the class flags are inconsistent",
            ));
            rows.push(CheckRow::from_flag(
                "sp: sequence is nondegenerate",
                class.in_kg,
                te,
                "a Hankel block fails strict positivity",
            ));
        }
        Err(e) => {
            rows.push(CheckRow::from_failure(
                "sp: solvability classes are nested",
                te,
                &e,
            ));
            rows.push(CheckRow::from_failure(
                "sp: sequence is nondegenerate",
                te,
                &e,
            ));
        }
    }

    rows.push(row(
        "sp: parametrization round trip restores the moments",
        te,
        parametrize::sp_forward(seq, tol)
            .and_then(|sp| parametrize::sp_inverse(&sp, tol))
            .map(|back| worst_moment_residual(seq, &back)),
    ));

    rows.push(row(
        "sp: zero extension continues the sequence in place",
        te,
        parametrize::zero_extension(seq, seq.order() + 2, tol)
            .and_then(|ext| ext.truncated(seq.order()))
            .map(|trunc| worst_moment_residual(seq, &trunc)),
    ));

    rows
}

fn worst_ds_residual(a: &dsparams::DsParams, b: &dsparams::DsParams) -> f64 {
    if a.lengths().len() != b.lengths().len() || a.masses().len() != b.masses().len() {
        return f64::INFINITY;
    }
    let l = a
        .lengths()
        .iter()
        .zip(b.lengths())
        .map(|(x, y)| rel_residual(x, y))
        .fold(0.0, f64::max);
    a.masses()
        .iter()
        .zip(b.masses())
        .map(|(x, y)| rel_residual(x, y))
        .fold(l, f64::max)
}

/// Rows for the mass/length parameters: agreement of both construction
/// routes, the rebuild of the inner parametrization, the scalar
/// determinant-ratio form, and the transform swap laws.
pub fn ds_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let mut rows = Vec::new();

    rows.push(row(
        "ds: parameters from moments match the parametrization route",
        te,
        (|| {
            let direct = dsparams::ds_forward(seq, tol)?;
            let via_sp = dsparams::ds_from_sp(&parametrize::sp_forward(seq, tol)?, tol)?;
            Ok(worst_ds_residual(&direct, &via_sp))
        })(),
    ));

    rows.push(row(
        "ds: parameters rebuild the parametrization",
        te,
        (|| {
            let sp = parametrize::sp_forward(seq, tol)?;
            let rebuilt = dsparams::sp_from_ds(&dsparams::ds_forward(seq, tol)?, tol)?;
            let worst = sp
                .params()
                .iter()
                .zip(rebuilt.params())
                .map(|(x, y)| rel_residual(x, y))
                .fold(
                    if sp.params().len() == rebuilt.params().len() {
                        0.0
                    } else {
                        f64::INFINITY
                    },
                    f64::max,
                );
            Ok(worst)
        })(),
    ));

    if seq.q() == 1 {
        rows.push(row(
            "ds: scalar parameters match the determinant ratios",
            te,
            (|| {
                let ds = dsparams::ds_forward(seq, tol)?;
                let (lengths, masses) = dsparams::scalar_ks_params(seq, tol)?;
                let mut worst = 0.0_f64;
                for (x, y) in lengths.iter().zip(ds.lengths()) {
                    worst = worst.max((x - y[(0, 0)].re).abs() / (1.0 + x.abs()));
                }
                for (x, y) in masses.iter().zip(ds.masses()) {
                    worst = worst.max((x - y[(0, 0)].re).abs() / (1.0 + x.abs()));
                }
                Ok(worst)
            })(),
        ));
    }

    rows.push(row(
        "ds: transform parameters follow the swap law",
        te,
        (|| {
            let direct = dsparams::ds_forward(&schur::transform1(seq, tol)?, tol)?;
            let predicted =
                dsparams::ds_of_transform(&dsparams::ds_forward(seq, tol)?, seq.moment(0), tol)?;
            Ok(worst_ds_residual(&direct, &predicted))
        })(),
    ));

    if seq.order() >= 4 {
        let ell = if seq.order() >= 5 { 1 } else { 0 };
        let k = ((seq.order() - ell - 2) / 2).clamp(1, 2);
        rows.push(row(
            "ds: deep transform parameters follow the descent laws",
            te,
            dsparams::ds_shift_check(seq, ell, k, 1, tol).map(|c| c.max()),
        ));
    }

    rows
}

/// Rows for the Schur transform: the reciprocal convolution, the
/// parametrization shift, and class preservation.
pub fn schur_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let mut rows = Vec::new();

    rows.push(row(
        "schur: reciprocal convolves back to the projection",
        te,
        (|| {
            let rec = schur::reciprocal(seq, tol)?;
            let s0 = seq.moment(0);
            let proj = s0 * crate::matkit::moore_penrose(s0, tol);
            let mut worst = 0.0_f64;
            for j in 0..=seq.order() {
                let mut conv = CMat::zeros(seq.q(), seq.q());
                for l in 0..=j {
                    conv += seq.moment(j - l) * rec.moment(l);
                }
                let target = if j == 0 {
                    proj.clone()
                } else {
                    CMat::zeros(seq.q(), seq.q())
                };
                worst = worst.max(rel_residual(&conv, &target));
            }
            Ok(worst)
        })(),
    ));

    rows.push(row(
        "schur: transform shifts the parametrization",
        te,
        schur::transform_shift_check(seq, seq.order().min(2), tol),
    ));

    match schur::class_preservation_check(seq, seq.order().min(2), tol) {
        Ok(c) => rows.push(CheckRow::from_flag(
            "schur: transform preserves the solvability classes",
            c.kg_preserved && c.degenerate_as_expected,
            te,
            "the transformed sequence left its expected class",
        )),
        Err(e) => rows.push(CheckRow::from_failure(
            "schur: transform preserves the solvability classes",
            te,
            &e,
        )),
    }

    rows
}

fn gram_against_diagonal(
    polys: &[MatrixPoly],
    data: &MomentSequence,
    diagonal: &dyn Fn(usize) -> Result<CMat>,
) -> Result<f64> {
    let gram = polyomp::monic_orthogonality_gram(polys, data)?;
    let q = data.q();
    let zero = CMat::zeros(q, q);
    let mut worst = 0.0_f64;
    for (j, row_blocks) in gram.iter().enumerate() {
        for (k, block) in row_blocks.iter().enumerate() {
            let target = if j == k { diagonal(j)? } else { zero.clone() };
            worst = worst.max(rel_residual(block, &target));
        }
    }
    Ok(worst)
}

/// Rows for the orthogonal polynomial systems: Gram orthogonality with
/// the parametrization diagonals, the transform identities, and the
/// value laws at the origin.
pub fn omp_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let order = seq.order();
    let mut rows = Vec::new();

    rows.push(row(
        "omp: plain monic family is orthogonal with the even-step diagonal",
        te,
        (|| {
            let quad = polyomp::omp_quadruple(seq, order / 2, tol)?;
            gram_against_diagonal(quad.p_h(), seq, &|j| hankel::schur_l(seq, j, tol))
        })(),
    ));

    if order >= 1 {
        rows.push(row(
            "omp: shifted monic family is orthogonal with the odd-step diagonal",
            te,
            (|| {
                let top = (order - 1) / 2;
                let quad = polyomp::omp_quadruple(seq, top, tol)?;
                gram_against_diagonal(&quad.p_k()[..=top], &seq.shifted()?, &|j| {
                    hankel::schur_lambda(seq, j, tol)
                })
            })(),
        ));
    }

    if order >= 2 {
        let n = order / 2;
        let pts = default_sample_points();
        match polyomp::transform_poly_identities(seq, n, &pts, tol) {
            Ok(c) => {
                rows.push(CheckRow::from_residual(
                    "omp: transformed plain monic is the scaled shifted second kind",
                    c.plain_monic,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "omp: transformed plain second kind combines the shifted family",
                    c.plain_second,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "omp: transformed shifted monic is the scaled plain second kind",
                    c.shifted_monic,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "omp: transformed shifted second kind combines the plain family",
                    c.shifted_second,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "omp: plain fraction sum telescopes to the shifted data",
                    c.sum_plain,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "omp: shifted fraction sum telescopes to the plain data",
                    c.sum_shifted,
                    te,
                ));
            }
            Err(e) => rows.push(CheckRow::from_failure(
                "omp: transform identities for the polynomial families",
                te,
                &e,
            )),
        }

        rows.push(row(
            "omp: values at the origin are the signed parameter products",
            te,
            (|| {
                let ds = dsparams::ds_forward(seq, tol)?;
                let quad = polyomp::omp_quadruple(seq, order / 2, tol)?;
                let zero = C64::new(0.0, 0.0);
                let mut worst = 0.0_f64;
                for j in 1..=(order / 2) {
                    let (p_value, q_value) = polyomp::omp_values_at_zero(&ds, j, tol)?;
                    worst = worst
                        .max(rel_residual(&quad.p_h()[j].eval(zero), &p_value))
                        .max(rel_residual(&quad.q_k()[j].eval(zero), &q_value));
                }
                Ok(worst)
            })(),
        ));

        rows.push(row(
            "omp: origin values conjugate through the transform",
            te,
            polyomp::ds_values_conjugation_check(seq, (order - 2) / 2, tol),
        ));
    }

    rows
}

/// Rows for the resolvent matrix: agreement of its three constructions,
/// the unipotent value at the origin, and the intertwining and
/// splitting laws.
pub fn resolvent_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let order = seq.order();
    let pts = default_sample_points();
    let mut rows = Vec::new();

    rows.push(row(
        "resolvent: direct, factored, and polynomial forms agree",
        te,
        (|| {
            let ds = dsparams::ds_forward(seq, tol)?;
            let quad = polyomp::omp_quadruple(seq, order.div_ceil(2), tol)?;
            let mut worst = 0.0_f64;
            for m in 0..=order {
                let direct = resolvent::resolvent_direct(seq, m, tol)?;
                let chain = resolvent::elementary_factors(&ds, m)?;
                for &z in &pts {
                    let a = direct.eval(z);
                    let b = resolvent::factor_product(&chain, z)?;
                    let c = resolvent::resolvent_from_polys(&quad, m, z, tol)?;
                    worst = worst.max(rel_residual(&a, &b)).max(rel_residual(&a, &c));
                }
            }
            Ok(worst)
        })(),
    ));

    rows.push(row(
        "resolvent: value at the origin is unipotent",
        te,
        (|| {
            let q = seq.q();
            let eye = CMat::identity(q, q);
            let zero = CMat::zeros(q, q);
            let mut worst = 0.0_f64;
            for m in 0..=order {
                let v0 = resolvent::resolvent_direct(seq, m, tol)?.eval(C64::new(0.0, 0.0));
                worst = worst
                    .max(rel_residual(&v0.view((0, 0), (q, q)).into_owned(), &eye))
                    .max(rel_residual(&v0.view((q, q), (q, q)).into_owned(), &eye))
                    .max(rel_residual(&v0.view((q, 0), (q, q)).into_owned(), &zero))
                    .max((v0.determinant() - C64::new(1.0, 0.0)).norm());
            }
            Ok(worst)
        })(),
    ));

    if order >= 2 {
        let k = if order >= 5 { 1 } else { 0 };
        let n_max = (order - 2 * k - 2).min(2);
        rows.push(row(
            "resolvent: transform factors intertwine with the original",
            te,
            resolvent::intertwine_check(seq, k, n_max, &pts, tol).map(|c| c.max()),
        ));
    }

    if order >= 1 {
        rows.push(row(
            "resolvent: splitting laws hold at every depth",
            te,
            (|| {
                let mut worst = 0.0_f64;
                for ell in 0..order {
                    worst =
                        worst.max(resolvent::splitting_check(seq, order, ell, &pts, tol)?.max());
                }
                Ok(worst)
            })(),
        ));
    }

    rows
}

/// Rows for the measure side: continued fractions against the extremal
/// rational transforms, the descent of extremal transforms through the
/// Schur transform, and (scalar data only) the recovered extremal
/// measure moments.
pub fn measures_suite(seq: &MomentSequence, tol: &TolerancePolicy) -> Vec<CheckRow> {
    let te = tol.rtol_identity;
    let order = seq.order();
    let pts = default_sample_points();
    let mut rows = Vec::new();

    rows.push(row(
        "measures: continued fractions match the extremal transforms",
        te,
        (|| {
            let ds = dsparams::ds_forward(seq, tol)?;
            let quad = polyomp::omp_quadruple(seq, order.div_ceil(2), tol)?;
            let mut worst = 0.0_f64;
            for n in 0..=(order / 2).min(3) {
                let (lower, _) = measures::extremal_transforms(&quad, 2 * n)?;
                for &z in &pts {
                    let direct = lower.eval(z, tol)?;
                    let nested = measures::continued_fraction_eval(
                        &ds,
                        n,
                        z,
                        measures::ExtremalSide::Lower,
                        tol,
                    )?;
                    worst = worst.max(rel_residual(&direct, &nested));
                }
            }
            for n in 1..=order.div_ceil(2).min(3) {
                let (_, upper) = measures::extremal_transforms(&quad, 2 * n - 1)?;
                for &z in &pts {
                    let direct = upper.eval(z, tol)?;
                    let nested = measures::continued_fraction_eval(
                        &ds,
                        n,
                        z,
                        measures::ExtremalSide::Upper,
                        tol,
                    )?;
                    worst = worst.max(rel_residual(&direct, &nested));
                }
            }
            Ok(worst)
        })(),
    ));

    if order >= 2 {
        let n = (order / 2).min(2);
        match measures::extremal_transform_relation_check(seq, n, &pts, tol) {
            Ok(c) => {
                rows.push(CheckRow::from_residual(
                    "measures: transformed lower extremal descends from the upper",
                    c.lower_of_transform,
                    te,
                ));
                rows.push(CheckRow::from_residual(
                    "measures: transformed upper extremal descends from the lower",
                    c.upper_of_transform,
                    te,
                ));
            }
            Err(e) => rows.push(CheckRow::from_failure(
                "measures: extremal transforms descend through the transform",
                te,
                &e,
            )),
        }
    }

    if seq.q() == 1 {
        rows.push(row(
            "measures: extremal measure moments extend the data by zeros",
            te,
            (|| {
                let mut worst = measures::extremal_moment_check(seq, order, tol)?
                    .into_iter()
                    .fold(0.0, f64::max);
                if order >= 1 {
                    worst = measures::extremal_moment_check(seq, order - 1, tol)?
                        .into_iter()
                        .fold(worst, f64::max);
                }
                Ok(worst)
            })(),
        ));
    }

    rows
}
