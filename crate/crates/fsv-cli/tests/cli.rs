//! End-to-end checks of the command-line surface.

use std::path::Path;

use fsv_cli::cli_main;

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("fsv").chain(args.iter().copied()))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

#[test]
fn simulate_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let code = run(&[
            "simulate",
            "--table-ai",
            "--t",
            "50",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    for file in ["returns.csv", "truth_h.csv", "truth_f.csv", "params.txt"] {
        assert_eq!(
            read(&out1.join(file)),
            read(&out2.join(file)),
            "{file} differs between identical seeds"
        );
    }
}

#[test]
fn simulate_from_params_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    assert_eq!(
        run(&[
            "simulate",
            "--table-ai",
            "--t",
            "30",
            "--seed",
            "9",
            "--out",
            out1.to_str().unwrap(),
        ]),
        0
    );
    // Re-simulating from the emitted params file reproduces the data.
    let out2 = dir.path().join("b");
    assert_eq!(
        run(&[
            "simulate",
            "--params",
            out1.join("params.txt").to_str().unwrap(),
            "--t",
            "30",
            "--seed",
            "9",
            "--out",
            out2.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(read(&out1.join("returns.csv")), read(&out2.join("returns.csv")));
}

#[test]
fn fit_manifest_records_interweaving_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(
        run(&[
            "simulate",
            "--table-ai",
            "--t",
            "60",
            "--seed",
            "2",
            "--out",
            sim.to_str().unwrap(),
        ]),
        0
    );
    let draws = dir.path().join("draws");
    assert_eq!(
        run(&[
            "fit",
            "--input",
            sim.join("returns.csv").to_str().unwrap(),
            "--factors",
            "2",
            "--interweaving",
            "deep",
            "--draws",
            "50",
            "--burn-in",
            "10",
            "--seed",
            "77",
            "--out",
            draws.to_str().unwrap(),
        ]),
        0
    );
    let manifest = String::from_utf8(read(&draws.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("interweaving = deep"));
    assert!(manifest.contains("seed = 77"));
    assert!(manifest.contains("stored_draws = 50"));
}

#[test]
fn diag_blanks_restricted_cells() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(
        run(&[
            "simulate",
            "--table-ai",
            "--t",
            "80",
            "--seed",
            "3",
            "--out",
            sim.to_str().unwrap(),
        ]),
        0
    );
    let draws = dir.path().join("draws");
    assert_eq!(
        run(&[
            "fit",
            "--input",
            sim.join("returns.csv").to_str().unwrap(),
            "--factors",
            "2",
            "--interweaving",
            "shallow",
            "--draws",
            "200",
            "--burn-in",
            "20",
            "--seed",
            "4",
            "--out",
            draws.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        run(&["diag", "--draws-dir", draws.to_str().unwrap(), "--max-lag", "10"]),
        0
    );
    // The restricted corner cell (series 1, factor 2) must be blank in the
    // emitted IF table while free cells carry numbers.
    let table = String::from_utf8(read(&draws.join("if_loadings.csv"))).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "series,factor_1,factor_2");
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[0], "1");
    assert!(!fields[1].is_empty(), "free cell should have an IF");
    assert!(fields[2].is_empty(), "restricted cell should be blank");

    assert_eq!(
        run(&["summarize", "--draws-dir", draws.to_str().unwrap()]),
        0
    );
    assert!(draws.join("summary.csv").exists());
}

#[test]
fn exit_codes_follow_the_contract() {
    // Unknown flags: usage error, exit 2.
    assert_eq!(run(&["fit", "--bogus"]), 2);
    assert_eq!(run(&["no-such-command"]), 2);
    // Runtime errors: exit 1.
    assert_eq!(run(&["fit", "--input", "/definitely/not/there.csv"]), 1);
    assert_eq!(run(&["diag", "--draws-dir", "/also/not/there"]), 1);
    // Help: exit 0.
    assert_eq!(run(&["--help"]), 0);
}
