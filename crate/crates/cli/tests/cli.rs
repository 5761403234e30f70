//! End-to-end tests that drive the compiled binary through files, flags,
//! exit codes, and both report formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use momentforge_core::hankel::MomentSequence;
use momentforge_core::matkit::{self, CMat};
use momentforge_core::measures::RationalMatrixFn;
use momentforge_core::polyomp::MatrixPoly;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_momentforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("momentforge-cli-{}-{tag}", std::process::id()));
    fs::create_dir_all(&dir).expect("temp dir is writable");
    dir
}

fn write_sequence(path: &Path, seq: &MomentSequence) {
    fs::write(
        path,
        serde_json::to_string_pretty(seq).expect("sequence serializes"),
    )
    .expect("sequence file is writable");
}

fn factorial_file(dir: &Path) -> PathBuf {
    let seq = MomentSequence::from_scalars(&[1.0, 1.0, 2.0, 6.0, 24.0, 120.0])
        .expect("factorial moments are well-formed");
    let path = dir.join("factorial.json");
    write_sequence(&path, &seq);
    path
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn entry(value: &serde_json::Value, part: &str, i: usize, j: usize) -> f64 {
    value[part][i][j]
        .as_f64()
        .expect("matrix entry is a number")
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(exit_code(&help), 0, "--help must exit 0");
    assert!(
        stdout_text(&help).contains("momentforge"),
        "help names the binary"
    );
    let version = run(&["--version"]);
    assert_eq!(exit_code(&version), 0, "--version must exit 0");
}

#[test]
fn gen_is_deterministic_and_produces_nondegenerate_data() {
    let dir = temp_dir("gen");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    let c = dir.join("c.json");

    let out_a = run(&[
        "gen",
        "--q",
        "1",
        "--m",
        "5",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(exit_code(&out_a), 0, "gen exits 0: {}", stderr_text(&out_a));
    let report = stdout_json(&out_a);
    assert_eq!(report["command"], "gen", "report names the command");
    assert_eq!(report["seed"], 7, "report records the seed");
    assert!(
        report["pass"].as_bool().unwrap(),
        "generated data passes its check"
    );
    assert!(
        report["digest"].as_str().unwrap().len() == 64,
        "digest is a sha256 hex string"
    );

    let out_b = run(&[
        "gen",
        "--q",
        "1",
        "--m",
        "5",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out_b), 0);
    assert_eq!(
        fs::read(&a).unwrap(),
        fs::read(&b).unwrap(),
        "the same seed reproduces the file byte for byte"
    );

    let out_c = run(&[
        "gen",
        "--q",
        "1",
        "--m",
        "5",
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out_c), 0);
    assert_ne!(
        fs::read(&a).unwrap(),
        fs::read(&c).unwrap(),
        "a different seed changes the data"
    );

    let seq: MomentSequence =
        serde_json::from_slice(&fs::read(&a).unwrap()).expect("generated file parses");
    assert_eq!(seq.q(), 1, "block size matches the flag");
    assert_eq!(seq.order(), 5, "six scalar moments were written");

    let verify = run(&["verify", a.to_str().unwrap()]);
    assert_eq!(
        exit_code(&verify),
        0,
        "generated data passes the full suite"
    );
}

#[test]
fn analyze_reports_the_factorial_parametrizations() {
    let dir = temp_dir("analyze");
    let path = factorial_file(&dir);

    let out = run(&["analyze", path.to_str().unwrap(), "--json"]);
    assert_eq!(exit_code(&out), 0, "analyze exits 0: {}", stderr_text(&out));
    let report = stdout_json(&out);
    assert!(
        report["pass"].as_bool().unwrap(),
        "factorial data is solvable"
    );

    let class = &report["details"]["class"];
    assert_eq!(class["in_kgg"], true, "solvable");
    assert_eq!(class["in_kgge"], true, "solvable with an extension");
    assert_eq!(class["in_kg"], true, "nondegenerate");

    let q_params = &report["details"]["stieltjes_parametrization"]["params"];
    let expected_q = [1.0, 1.0, 1.0, 2.0, 4.0, 12.0];
    assert_eq!(q_params.as_array().unwrap().len(), expected_q.len());
    for (j, want) in expected_q.iter().enumerate() {
        let got = entry(&q_params[j], "re", 0, 0);
        assert!(
            (got - want).abs() < 1e-10,
            "parametrization entry {j} is {got}, expected {want}"
        );
    }

    let masses = &report["details"]["ds_parameters"]["masses"];
    let lengths = &report["details"]["ds_parameters"]["lengths"];
    for j in 0..3 {
        let got = entry(&masses[j], "re", 0, 0);
        assert!((got - 1.0).abs() < 1e-10, "mass {j} is {got}, expected 1");
    }
    let expected_l = [1.0, 0.5, 1.0 / 3.0];
    for (j, want) in expected_l.iter().enumerate() {
        let got = entry(&lengths[j], "re", 0, 0);
        assert!(
            (got - want).abs() < 1e-10,
            "length {j} is {got}, expected {want}"
        );
    }

    let table = run(&["analyze", path.to_str().unwrap()]);
    let text = stdout_text(&table);
    assert!(
        text.contains("Q: 1, 1, 1, 2, 4, 12"),
        "table shows the Q list: {text}"
    );
    assert!(
        text.contains("M: 1, 1, 1"),
        "table shows the mass list: {text}"
    );
}

#[test]
fn analyze_handles_degenerate_and_malformed_input() {
    let dir = temp_dir("analyze-edge");

    let zero = MomentSequence::from_scalars(&[0.0; 6]).expect("zero moments are well-formed");
    let zero_path = dir.join("zero.json");
    write_sequence(&zero_path, &zero);
    let out = run(&["analyze", zero_path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "the zero sequence is solvable");
    assert!(
        stdout_text(&out).contains("degenerate order 0"),
        "the zero sequence is completely degenerate from the start: {}",
        stdout_text(&out)
    );

    let skew = MomentSequence::new(
        2,
        vec![
            matkit::mat_from_rows(&[&[(1.0, 0.0), (1.0, 0.0)], &[(0.0, 0.0), (1.0, 0.0)]]),
            CMat::identity(2, 2),
        ],
    )
    .expect("construction does not check symmetry");
    let skew_path = dir.join("skew.json");
    write_sequence(&skew_path, &skew);
    let out = run(&["analyze", skew_path.to_str().unwrap()]);
    assert_eq!(
        exit_code(&out),
        3,
        "non-Hermitian input is a structured error"
    );
    assert!(
        stderr_text(&out).contains("Hermitian"),
        "the error names the violated structure: {}",
        stderr_text(&out)
    );

    let out = run(&["analyze", dir.join("missing.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3, "a missing file is an I/O error");
}

#[test]
fn transform_shifts_and_validates_depth() {
    let dir = temp_dir("transform");
    let path = factorial_file(&dir);
    let out_path = dir.join("shifted.json");

    let out = run(&[
        "transform",
        path.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&out),
        0,
        "transform exits 0: {}",
        stderr_text(&out)
    );
    let shifted: MomentSequence =
        serde_json::from_slice(&fs::read(&out_path).unwrap()).expect("output parses");
    assert_eq!(shifted.order(), 4, "one step drops the order by one");
    for (j, want) in [1.0, 1.0, 3.0].iter().enumerate() {
        let got = shifted.moment(j)[(0, 0)].re;
        assert!(
            (got - want).abs() < 1e-10,
            "transformed moment {j} is {got}, expected {want}"
        );
    }

    let copy_path = dir.join("copy.json");
    let out = run(&[
        "transform",
        path.to_str().unwrap(),
        "--k",
        "0",
        "--out",
        copy_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let copy: MomentSequence =
        serde_json::from_slice(&fs::read(&copy_path).unwrap()).expect("output parses");
    let original: MomentSequence =
        serde_json::from_slice(&fs::read(&path).unwrap()).expect("input parses");
    assert_eq!(copy, original, "zero steps copy the sequence");

    let out = run(&[
        "transform",
        path.to_str().unwrap(),
        "--k",
        "6",
        "--out",
        dir.join("too-deep.json").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3, "a depth beyond the order is an error");
}

#[test]
fn resolve_prints_three_agreeing_representations() {
    let dir = temp_dir("resolve");
    let path = factorial_file(&dir);

    let out = run(&[
        "resolve",
        path.to_str().unwrap(),
        "--m",
        "1",
        "--z-re",
        "2",
        "--json",
    ]);
    assert_eq!(exit_code(&out), 0, "resolve exits 0: {}", stderr_text(&out));
    let report = stdout_json(&out);
    assert!(report["pass"].as_bool().unwrap(), "representations agree");
    assert_eq!(
        report["checks"].as_array().unwrap().len(),
        2,
        "both pairwise residuals are reported"
    );
    let direct = &report["details"]["direct"];
    let expected = [[1.0, 1.0], [-2.0, -1.0]];
    for (i, row) in expected.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            let got = entry(direct, "re", i, j);
            assert!(
                (got - want).abs() < 1e-10,
                "entry ({i},{j}) is {got}, expected {want}"
            );
            let imag = entry(direct, "im", i, j);
            assert!(
                imag.abs() < 1e-10,
                "entry ({i},{j}) has imaginary part {imag}"
            );
        }
    }

    let out = run(&["resolve", path.to_str().unwrap(), "--m", "0", "--json"]);
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    let direct = &report["details"]["direct"];
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            let got = entry(direct, "re", i, j);
            assert!(
                (got - want).abs() < 1e-12,
                "value at the origin is the identity, entry ({i},{j}) is {got}"
            );
        }
    }

    let table = run(&["resolve", path.to_str().unwrap(), "--m", "1", "--z-re", "2"]);
    let text = stdout_text(&table);
    assert!(
        text.contains("factor chain: M_0 L_0"),
        "the factor chain is listed: {text}"
    );
}

#[test]
fn verify_separates_good_and_corrupted_data() {
    let dir = temp_dir("verify");
    let path = factorial_file(&dir);

    let out = run(&["verify", path.to_str().unwrap(), "--json"]);
    assert_eq!(
        exit_code(&out),
        0,
        "factorial data passes: {}",
        stderr_text(&out)
    );
    let report = stdout_json(&out);
    assert!(report["pass"].as_bool().unwrap());
    assert!(
        report["checks"].as_array().unwrap().len() >= 20,
        "the full suite runs many checks"
    );

    let corrupted = MomentSequence::from_scalars(&[1.0, 1.0, -2.0, 6.0, 24.0, 120.0])
        .expect("corrupted moments still parse");
    let bad_path = dir.join("corrupted.json");
    write_sequence(&bad_path, &corrupted);
    let out = run(&["verify", bad_path.to_str().unwrap(), "--json"]);
    assert_eq!(exit_code(&out), 2, "a failing suite exits 2");
    let report = stdout_json(&out);
    assert!(!report["pass"].as_bool().unwrap());
    let rows = report["checks"].as_array().unwrap();
    let row = |name: &str| {
        rows.iter()
            .find(|r| r["name"] == name)
            .unwrap_or_else(|| panic!("row {name} is present"))
    };
    assert_eq!(
        row("sp: parametrization round trip restores the moments")["pass"],
        true,
        "the round trip is insensitive to definiteness"
    );
    assert_eq!(
        row("sp: sequence is nondegenerate")["pass"],
        false,
        "the sign flip destroys definiteness"
    );
}

#[test]
fn verify_random_trials_and_suite_selection() {
    let out = run(&[
        "verify", "--random", "--q", "2", "--m", "6", "--seed", "5", "--trials", "3", "--json",
    ]);
    assert_eq!(
        exit_code(&out),
        0,
        "random trials pass: {}",
        stderr_text(&out)
    );
    let report = stdout_json(&out);
    assert!(report["pass"].as_bool().unwrap());
    assert_eq!(report["seed"], 5, "the first seed is recorded");
    assert_eq!(report["details"]["trials"], 3);

    let out = run(&[
        "verify", "--random", "--q", "1", "--m", "4", "--suite", "sp", "--json",
    ]);
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    for row in report["checks"].as_array().unwrap() {
        let name = row["name"].as_str().unwrap();
        assert!(
            name.starts_with("sp:"),
            "suite filter keeps only its rows, found {name}"
        );
    }

    let out = run(&["verify", "--random", "--suite", "nonsense"]);
    assert_eq!(exit_code(&out), 3, "an unknown suite is a usage error");

    let out = run(&["verify"]);
    assert_eq!(exit_code(&out), 3, "a file or --random is required");
}

#[test]
fn recover_finds_the_two_point_measure() {
    let dir = temp_dir("recover");

    let num = MatrixPoly::new(1, vec![matkit::scalar(3.0), matkit::scalar(-1.0)])
        .expect("numerator is well-formed");
    let den = MatrixPoly::new(
        1,
        vec![
            matkit::scalar(2.0),
            matkit::scalar(-4.0),
            matkit::scalar(1.0),
        ],
    )
    .expect("denominator is well-formed");
    let rational = RationalMatrixFn::new(num, den).expect("block sizes match");
    let path = dir.join("rational.json");
    fs::write(&path, serde_json::to_string_pretty(&rational).unwrap()).unwrap();

    let measure_path = dir.join("measure.json");
    let out = run(&[
        "recover",
        path.to_str().unwrap(),
        "--out",
        measure_path.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(exit_code(&out), 0, "recover exits 0: {}", stderr_text(&out));
    let report = stdout_json(&out);
    assert!(
        report["pass"].as_bool().unwrap(),
        "the transform matches on samples"
    );
    assert_eq!(report["details"]["atoms"], 2);

    let atoms = report["details"]["measure"]["atoms"].as_array().unwrap();
    let root = 2.0f64.sqrt();
    let expected = [
        (2.0 - root, (2.0 + root) / 4.0),
        (2.0 + root, (2.0 - root) / 4.0),
    ];
    for (atom, (t_want, w_want)) in atoms.iter().zip(expected) {
        let t = atom["t"].as_f64().unwrap();
        let w = atom["w"]["re"][0][0].as_f64().unwrap();
        assert!((t - t_want).abs() < 1e-9, "node is {t}, expected {t_want}");
        assert!(
            (w - w_want).abs() < 1e-9,
            "weight is {w}, expected {w_want}"
        );
    }

    let written = fs::read(&measure_path).expect("measure file was written");
    let parsed: serde_json::Value = serde_json::from_slice(&written).expect("measure parses");
    assert_eq!(parsed["atoms"].as_array().unwrap().len(), 2);
}

#[test]
fn tolerance_flag_and_env_var_reach_the_report() {
    let dir = temp_dir("tol");
    let path = factorial_file(&dir);

    let out = run(&["verify", path.to_str().unwrap(), "--tol", "1e-6", "--json"]);
    let report = stdout_json(&out);
    assert_eq!(report["tolerance"], 1e-6, "--tol overrides the default");

    let out = bin()
        .args(["verify", path.to_str().unwrap(), "--json"])
        .env("MOMENTFORGE_TOL", "1e-5")
        .output()
        .expect("binary runs");
    let report = stdout_json(&out);
    assert_eq!(
        report["tolerance"], 1e-5,
        "the environment variable is honored"
    );
}
