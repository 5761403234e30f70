//! Command-line surface over the moment-sequence library: generate random
//! data, classify and parametrize sequences, apply the Schur-type
//! transform, evaluate resolvent matrices, run the identity verification
//! suites, and recover scalar atomic measures from rational transforms.
//!
//! Reports print as an aligned table by default and as stable JSON with
//! `--json`. Exit codes: 0 when every check passes, 2 when a verification
//! row fails, 3 on usage or I/O errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use momentforge_core::hankel::{self, MomentSequence};
use momentforge_core::matkit::json::RawMat;
use momentforge_core::matkit::{self, CMat, TolerancePolicy, C64};
use momentforge_core::measures::{self, RationalMatrixFn};
use momentforge_core::verify::{self, CheckRow, SuiteKind};
use momentforge_core::{dsparams, parametrize, polyomp, resolvent, schur};

#[derive(Parser)]
#[command(
    name = "momentforge",
    version,
    about = "Matricial moment sequences: parametrizations, transforms, resolvents, and verification"
)]
struct Cli {
    /// Relative tolerance for identity residuals.
    #[arg(long, global = true, env = "MOMENTFORGE_TOL")]
    tol: Option<f64>,
    /// Emit the report as JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random nondegenerate moment sequence file.
    Gen(GenArgs),
    /// Classify a sequence and print both parametrizations.
    Analyze(AnalyzeArgs),
    /// Apply the Schur-type transform k times and write the result.
    Transform(TransformArgs),
    /// Evaluate the resolvent matrix three ways at a point.
    Resolve(ResolveArgs),
    /// Run identity suites; exits 2 if any check fails.
    Verify(VerifyArgs),
    /// Recover a scalar atomic measure from a rational transform file.
    Recover(RecoverArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Matrix block size.
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Highest moment index.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Random seed; the same seed reproduces the file byte for byte.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale applied to the random parametrization blocks.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Output path for the sequence JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Moment sequence file.
    input: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    /// Moment sequence file.
    input: PathBuf,
    /// Number of transform steps; each step shortens the sequence by one.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Output path for the transformed sequence JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResolveArgs {
    /// Moment sequence file.
    input: PathBuf,
    /// Resolvent order; must not exceed the sequence order.
    #[arg(long)]
    m: usize,
    /// Real part of the evaluation point.
    #[arg(long, default_value_t = 0.0)]
    z_re: f64,
    /// Imaginary part of the evaluation point.
    #[arg(long, default_value_t = 0.0)]
    z_im: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Moment sequence file; omit when drawing random data.
    #[arg(required_unless_present = "random", conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Draw random nondegenerate sequences instead of reading a file.
    #[arg(long)]
    random: bool,
    /// Matrix block size for random data.
    #[arg(long, default_value_t = 2, requires = "random")]
    q: usize,
    /// Highest moment index for random data.
    #[arg(long, default_value_t = 6, requires = "random")]
    m: usize,
    /// Seed of the first random trial; later trials increment it.
    #[arg(long, default_value_t = 1, requires = "random")]
    seed: u64,
    /// Number of random trials; the report keeps each row's worst residual.
    #[arg(long, default_value_t = 1, requires = "random")]
    trials: usize,
    /// Identity suite: all, sp, ds, schur, omp, resolvent, or measures.
    #[arg(long, default_value = "all")]
    suite: String,
}

#[derive(Args)]
struct RecoverArgs {
    /// Rational transform file with numerator and denominator polynomials.
    input: PathBuf,
    /// Optional output path for the recovered measure JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Machine-readable result of one command invocation.
#[derive(Serialize)]
struct Report {
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    tolerance: f64,
    pass: bool,
    elapsed_ms: u64,
    checks: Vec<CheckRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

/// Report plus the extra lines shown in table mode.
struct Outcome {
    report: Report,
    human: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let tol = TolerancePolicy {
        rtol_identity: cli.tol.unwrap_or(TolerancePolicy::default().rtol_identity),
        ..TolerancePolicy::default()
    };
    let started = Instant::now();
    match run(&cli.command, &tol, started) {
        Ok(outcome) => {
            emit(&outcome, cli.json);
            if outcome.report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn run(command: &Command, tol: &TolerancePolicy, started: Instant) -> anyhow::Result<Outcome> {
    let mut outcome = match command {
        Command::Gen(args) => cmd_gen(args, tol),
        Command::Analyze(args) => cmd_analyze(args, tol),
        Command::Transform(args) => cmd_transform(args, tol),
        Command::Resolve(args) => cmd_resolve(args, tol),
        Command::Verify(args) => cmd_verify(args, tol),
        Command::Recover(args) => cmd_recover(args, tol),
    }?;
    outcome.report.tolerance = tol.rtol_identity;
    outcome.report.pass = outcome.report.checks.iter().all(|row| row.pass);
    outcome.report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(outcome)
}

fn emit(outcome: &Outcome, json: bool) {
    let mut text = String::new();
    if json {
        text.push_str(&serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
        text.push('\n');
    } else {
        for line in &outcome.human {
            text.push_str(line);
            text.push('\n');
        }
        let rows = &outcome.report.checks;
        let width = rows.iter().map(|row| row.name.len()).max().unwrap_or(0);
        for row in rows {
            let status = if row.pass { "PASS" } else { "FAIL" };
            let residual = if row.residual.is_finite() {
                format!("{:.3e}", row.residual)
            } else {
                "inf".into()
            };
            let mut line = format!(
                "  {status}  {:<width$}  residual {residual:>10}  (tol {:.1e})",
                row.name, row.tolerance
            );
            if let Some(note) = &row.note {
                line.push_str(&format!("  [{note}]"));
            }
            text.push_str(&line);
            text.push('\n');
        }
        text.push_str(&format!(
            "result: {} ({} checks, {} ms)\n",
            if outcome.report.pass { "PASS" } else { "FAIL" },
            rows.len(),
            outcome.report.elapsed_ms
        ));
    }
    // A reader that stops consuming (head, a closed pager) must not turn
    // a computed verdict into a panic; the exit code still carries it.
    let _ = io::stdout().write_all(text.as_bytes());
}

fn cmd_gen(args: &GenArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let seq = parametrize::random_spd_sequence(args.q, args.m, args.seed, args.scale, tol)?;
    let text = to_pretty_json(&seq)?;
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    let class = hankel::classify_by_definition(&seq, tol)?;
    let checks = vec![CheckRow::from_flag(
        "gen: generated sequence is nondegenerate",
        class.in_kg,
        tol.rtol_identity,
        "the random generator must produce positive definite block Hankel data",
    )];
    Ok(Outcome {
        report: report(
            "gen",
            Some(sha256_hex(text.as_bytes())),
            Some(args.seed),
            checks,
        )
        .with_details(json!({
            "out": args.out.display().to_string(),
            "q": args.q,
            "m": args.m,
            "scale": args.scale,
        })),
        human: vec![format!(
            "wrote {}: q={}, order {}, seed {}",
            args.out.display(),
            args.q,
            args.m,
            args.seed
        )],
    })
}

fn cmd_analyze(args: &AnalyzeArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let (seq, digest) = read_sequence(&args.input)?;
    seq.ensure_hermitian(tol)?;
    let class = hankel::classify_by_definition(&seq, tol)?;

    let mut human = vec![format!(
        "{}: q={}, order {}",
        args.input.display(),
        seq.q(),
        seq.order()
    )];
    human.push(format!(
        "class: solvable={}, extendable={}, nondegenerate={}, degenerate order {}",
        class.in_kgg,
        class.in_kgge,
        class.in_kg,
        class
            .completely_degenerate
            .map_or("none".into(), |k| k.to_string())
    ));

    let mut details = serde_json::Map::new();
    details.insert(
        "class".into(),
        serde_json::to_value(class).expect("class serializes"),
    );

    match parametrize::sp_forward(&seq, tol) {
        Ok(sp) => {
            if let Some(list) = scalar_list(sp.params()) {
                human.push(format!("Q: {list}"));
            } else {
                human.push(format!(
                    "stieltjes parametrization: {} blocks of size {}",
                    sp.params().len(),
                    seq.q()
                ));
            }
            details.insert(
                "stieltjes_parametrization".into(),
                serde_json::to_value(&sp).expect("parametrization serializes"),
            );
        }
        Err(err) => {
            human.push(format!("stieltjes parametrization unavailable: {err}"));
        }
    }

    match dsparams::ds_forward(&seq, tol) {
        Ok(ds) => {
            if let Some(list) = scalar_list(ds.masses()) {
                human.push(format!("M: {list}"));
            }
            if let Some(list) = scalar_list(ds.lengths()) {
                human.push(format!("L: {list}"));
            }
            if seq.q() > 1 {
                human.push(format!(
                    "ds parameters: {} masses, {} lengths, blocks of size {}",
                    ds.masses().len(),
                    ds.lengths().len(),
                    seq.q()
                ));
            }
            details.insert(
                "ds_parameters".into(),
                serde_json::to_value(&ds).expect("parameters serialize"),
            );
        }
        Err(err) => {
            human.push(format!("ds parameters unavailable: {err}"));
        }
    }

    let warnings = condition_warnings(&seq);
    for w in &warnings {
        human.push(format!("warning: {w}"));
    }
    details.insert(
        "condition_warnings".into(),
        serde_json::to_value(&warnings).expect("warnings serialize"),
    );

    let checks = vec![
        CheckRow::from_flag(
            "analyze: moments are Hermitian",
            true,
            tol.rtol_identity,
            "",
        ),
        CheckRow::from_flag(
            "analyze: sequence is solvable",
            class.in_kgg,
            tol.rtol_identity,
            "the block Hankel matrices are not nonnegative definite",
        ),
    ];

    Ok(Outcome {
        report: report("analyze", Some(digest), None, checks)
            .with_details(serde_json::Value::Object(details)),
        human,
    })
}

fn cmd_transform(args: &TransformArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let (seq, digest) = read_sequence(&args.input)?;
    let out_seq = schur::transform_k(&seq, args.k, tol)?;
    let text = to_pretty_json(&out_seq)?;
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    let human = vec![format!(
        "wrote {}: transform depth {}, order {} -> {}",
        args.out.display(),
        args.k,
        seq.order(),
        out_seq.order()
    )];
    Ok(Outcome {
        report: report("transform", Some(digest), None, Vec::new()).with_details(json!({
            "out": args.out.display().to_string(),
            "k": args.k,
            "input_order": seq.order(),
            "output_order": out_seq.order(),
        })),
        human,
    })
}

fn cmd_resolve(args: &ResolveArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let (seq, digest) = read_sequence(&args.input)?;
    let z = C64::new(args.z_re, args.z_im);
    let m = args.m;

    let direct = resolvent::resolvent_direct(&seq, m, tol)?;
    let u_direct = direct.eval(z);

    let ds = dsparams::ds_forward(&seq, tol)?;
    let chain = resolvent::elementary_factors(&ds, m)?;
    let u_factored = resolvent::factor_product(&chain, z)?;

    let quad = polyomp::omp_quadruple(&seq, m.div_ceil(2), tol)?;
    let u_polys = resolvent::resolvent_from_polys(&quad, m, z, tol)?;

    let checks = vec![
        CheckRow::from_residual(
            "resolve: direct and factored forms agree at the point",
            matkit::rel_residual(&u_direct, &u_factored),
            tol.rtol_identity,
        ),
        CheckRow::from_residual(
            "resolve: direct and polynomial forms agree at the point",
            matkit::rel_residual(&u_direct, &u_polys),
            tol.rtol_identity,
        ),
    ];

    let mut human = vec![format!(
        "resolvent of order {m} at z = {}",
        format_complex(z)
    )];
    human.push("direct polynomial evaluation:".into());
    human.extend(format_mat(&u_direct));
    human.push("elementary factor product:".into());
    human.extend(format_mat(&u_factored));
    human.push("orthogonal polynomial blocks:".into());
    human.extend(format_mat(&u_polys));
    human.push(format!(
        "factor chain: {}",
        chain
            .factors()
            .iter()
            .map(|f| format!(
                "{}_{}",
                match f.kind() {
                    resolvent::FactorKind::Mass => "M",
                    resolvent::FactorKind::Length => "L",
                },
                f.index()
            ))
            .collect::<Vec<_>>()
            .join(" ")
    ));

    Ok(Outcome {
        report: report("resolve", Some(digest), None, checks).with_details(json!({
            "m": m,
            "z": { "re": z.re, "im": z.im },
            "direct": mat_json(&u_direct),
            "factored": mat_json(&u_factored),
            "polynomial": mat_json(&u_polys),
            "factor_chain": serde_json::to_value(&chain).expect("chain serializes"),
        })),
        human,
    })
}

fn cmd_verify(args: &VerifyArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let suite = SuiteKind::from_name(&args.suite).with_context(|| {
        format!(
            "unknown suite {:?}; expected all, sp, ds, schur, omp, resolvent, or measures",
            args.suite
        )
    })?;

    if args.random {
        if args.trials == 0 {
            anyhow::bail!("at least one trial is required");
        }
        let rows = random_trial_rows(args.q, args.m, args.seed, args.trials, suite, tol)?;
        let human = vec![format!(
            "suite {} on {} random trials (q={}, order {}, first seed {})",
            suite.name(),
            args.trials,
            args.q,
            args.m,
            args.seed
        )];
        Ok(Outcome {
            report: report("verify", None, Some(args.seed), rows).with_details(json!({
                "suite": suite.name(),
                "trials": args.trials,
                "q": args.q,
                "m": args.m,
            })),
            human,
        })
    } else {
        let input = args
            .input
            .as_ref()
            .expect("clap requires input without --random");
        let (seq, digest) = read_sequence(input)?;
        let rows = verify::run_suite(&seq, suite, tol);
        let human = vec![format!(
            "suite {} on {} (q={}, order {})",
            suite.name(),
            input.display(),
            seq.q(),
            seq.order()
        )];
        Ok(Outcome {
            report: report("verify", Some(digest), None, rows).with_details(json!({
                "suite": suite.name(),
            })),
            human,
        })
    }
}

fn cmd_recover(args: &RecoverArgs, tol: &TolerancePolicy) -> anyhow::Result<Outcome> {
    let bytes =
        fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let digest = sha256_hex(&bytes);
    let rational: RationalMatrixFn = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {} as a rational transform", args.input.display()))?;
    let mu = measures::recover_scalar_measure(&rational, tol)?;

    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for z in verify::default_sample_points() {
        let from_measure = match measures::stieltjes_transform(&mu, z) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let from_rational = match rational.eval(z, tol) {
            Ok(v) => v,
            Err(_) => continue,
        };
        worst = worst.max(matkit::rel_residual(&from_measure, &from_rational));
        compared += 1;
    }
    let mut checks = vec![CheckRow::from_residual(
        "recover: measure transform matches the rational input on samples",
        worst,
        tol.rtol_identity,
    )];
    if compared == 0 {
        checks[0] = CheckRow::from_flag(
            "recover: measure transform matches the rational input on samples",
            false,
            tol.rtol_identity,
            "every sample point hit a pole",
        );
    }

    let mut human = vec![format!("recovered {} atoms:", mu.len())];
    for (t, w) in mu.atoms() {
        human.push(format!(
            "  node {:.12}  weight {}",
            t,
            format_complex(w[(0, 0)])
        ));
    }
    if let Some(out) = &args.out {
        let text = to_pretty_json(&mu)?;
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
        human.push(format!("wrote {}", out.display()));
    }

    Ok(Outcome {
        report: report("recover", Some(digest), None, checks).with_details(json!({
            "measure": serde_json::to_value(&mu).expect("measure serializes"),
            "atoms": mu.len(),
        })),
        human,
    })
}

/// Runs `trials` independent random suites and keeps, for every row name,
/// the worst residual seen. Trials run on worker threads; the merge is
/// serialized in trial order so the report is deterministic.
fn random_trial_rows(
    q: usize,
    m: usize,
    seed: u64,
    trials: usize,
    suite: SuiteKind,
    tol: &TolerancePolicy,
) -> anyhow::Result<Vec<CheckRow>> {
    let one_trial = |t: usize| -> momentforge_core::Result<Vec<CheckRow>> {
        let seq = parametrize::random_spd_sequence(q, m, seed.wrapping_add(t as u64), 1.0, tol)?;
        Ok(verify::run_suite(&seq, suite, tol))
    };

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(trials);
    let per_trial: Vec<momentforge_core::Result<Vec<CheckRow>>> = if workers <= 1 {
        (0..trials).map(one_trial).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let one_trial = &one_trial;
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        let mut t = w;
                        while t < trials {
                            out.push((t, one_trial(t)));
                            t += workers;
                        }
                        out
                    })
                })
                .collect();
            let mut indexed: Vec<_> = handles
                .into_iter()
                .flat_map(|h| h.join().expect("trial worker does not panic"))
                .collect();
            indexed.sort_by_key(|(t, _)| *t);
            indexed.into_iter().map(|(_, rows)| rows).collect()
        })
    };

    let mut merged: Vec<CheckRow> = Vec::new();
    for rows in per_trial {
        merge_rows(&mut merged, rows?);
    }
    Ok(merged)
}

/// Keeps the worst outcome per row name: a failing row always displaces a
/// passing one, and among comparable rows the larger residual wins.
fn merge_rows(acc: &mut Vec<CheckRow>, rows: Vec<CheckRow>) {
    for row in rows {
        match acc.iter_mut().find(|slot| slot.name == row.name) {
            Some(slot) => {
                if (!row.pass && slot.pass) || row.residual > slot.residual {
                    *slot = row;
                }
            }
            None => acc.push(row),
        }
    }
}

/// Condition warnings for every leading block Hankel matrix of both kinds.
fn condition_warnings(seq: &MomentSequence) -> Vec<String> {
    let mut warnings = Vec::new();
    let order = seq.order();
    for n in 0..=order / 2 {
        if let Ok(h) = hankel::build_h(seq, n) {
            let cond = matkit::condition_estimate(&h);
            if cond > matkit::COND_WARN {
                warnings.push(format!(
                    "plain block Hankel matrix of size {n} has condition {cond:.2e}"
                ));
            }
        }
    }
    for n in 0..=order.saturating_sub(1) / 2 {
        if order >= 1 {
            if let Ok(k) = hankel::build_k(seq, n) {
                let cond = matkit::condition_estimate(&k);
                if cond > matkit::COND_WARN {
                    warnings.push(format!(
                        "shifted block Hankel matrix of size {n} has condition {cond:.2e}"
                    ));
                }
            }
        }
    }
    warnings
}

fn report(
    command: &str,
    digest: Option<String>,
    seed: Option<u64>,
    checks: Vec<CheckRow>,
) -> Report {
    Report {
        command: command.into(),
        digest,
        seed,
        tolerance: 0.0,
        pass: true,
        elapsed_ms: 0,
        checks,
        details: None,
    }
}

impl Report {
    fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }
}

fn read_sequence(path: &Path) -> anyhow::Result<(MomentSequence, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let seq: MomentSequence = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {} as a moment sequence", path.display()))?;
    Ok((seq, sha256_hex(&bytes)))
}

fn to_pretty_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn mat_json(m: &CMat) -> serde_json::Value {
    serde_json::to_value(RawMat::from_mat(m)).expect("matrix serializes")
}

/// Scalar real rendering of a block list, when every block is 1x1 real.
fn scalar_list(mats: &[CMat]) -> Option<String> {
    let mut parts = Vec::with_capacity(mats.len());
    for m in mats {
        if m.shape() != (1, 1) || m[(0, 0)].im.abs() > 1e-12 {
            return None;
        }
        parts.push(format_real(m[(0, 0)].re));
    }
    Some(parts.join(", "))
}

/// Twelve decimals with trailing zeros trimmed, so computed integers read
/// as integers.
fn format_real(v: f64) -> String {
    let s = format!("{v:.12}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn format_complex(v: C64) -> String {
    if v.im.abs() < 1e-12 {
        format!("{:.6}", v.re)
    } else {
        format!("{:.6}{:+.6}i", v.re, v.im)
    }
}

fn format_mat(m: &CMat) -> Vec<String> {
    (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
            format!("  [{}]", cells.join(", "))
        })
        .collect()
}
