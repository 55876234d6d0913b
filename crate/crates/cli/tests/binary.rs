use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use noma_deepsic_cli::config::OUTPUT_ENV;
use noma_deepsic_cli::manifest::{sha256_hex, CONFIG_SNAPSHOT_FILE};
use noma_deepsic_cli::RunManifest;

fn noma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-deepsic"))
        .args(args)
        .current_dir(cwd)
        .env_remove(OUTPUT_ENV)
        .output()
        .expect("binary runs")
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    RunManifest::read(dir)
        .unwrap()
        .artifacts
        .into_iter()
        .map(|a| (a.path, a.sha256))
        .collect()
}

const QUICK_ESTIMATE: [&str; 7] = ["estimate", "--snr-db", "0", "--trials", "1", "--seed", "7"];

#[test]
fn repeated_runs_are_bit_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (out, jobs) in [("a", "1"), ("b", "2"), ("c", "1")] {
        let mut args = QUICK_ESTIMATE.to_vec();
        args.extend(["--out", out, "--jobs", jobs]);
        let o = noma(&args, tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = checksums(&tmp.path().join("a"));
    assert_eq!(a.len(), 2);
    assert_eq!(a, checksums(&tmp.path().join("b")));
    assert_eq!(a, checksums(&tmp.path().join("c")));
    let csv = fs::read_to_string(tmp.path().join("a/nrmse_vs_snr.csv")).unwrap();
    assert!(csv.starts_with("snr_db,nrmse_no_pdd,nrmse_pdd_ground_truth,nrmse_pdd_soft\n0,"));
}

#[test]
fn manifest_checksums_match_files_and_snapshot_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let o = noma(&["complexity-sweep", "--k", "2..6", "--seed", "3", "--out", "first"], tmp.path());
    assert!(o.status.success());
    let first = tmp.path().join("first");
    let manifest = RunManifest::read(&first).unwrap();
    assert_eq!(manifest.scenario, "complexity-sweep");
    assert_eq!(manifest.seed, 3);
    for a in &manifest.artifacts {
        let bytes = fs::read(first.join(&a.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), a.sha256);
        assert_eq!(bytes.len() as u64, a.bytes);
    }
    // The snapshot names the scenario, so the positional argument only has to agree.
    let snapshot = first.join(CONFIG_SNAPSHOT_FILE);
    let o = noma(
        &["complexity-sweep", "--config", snapshot.to_str().unwrap(), "--out", "second"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(checksums(&first), checksums(&tmp.path().join("second")));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_noma-deepsic"))
        .args(["complexity-sweep"])
        .current_dir(tmp.path())
        .env(OUTPUT_ENV, "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("from-env/complexity.csv").is_file());
    assert!(!tmp.path().join("noma-deepsic-out").exists());
}

#[test]
fn config_errors_exit_64_with_the_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[channel]\nvelocity_kmh = \"fast\"\n").unwrap();
    let o = noma(&["estimate", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel.velocity_kmh"));
}

#[test]
fn strict_mode_fails_an_uncertified_theory_check() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("low_snr.toml"),
        "trials = 1\n[noma]\nsnr_db = -10.0\n[theory]\nblocks = 4\ngrid_lengths = [4, 6, 8]\n\
         grid_train_windows = [4, 6, 8]\ngrid_test_windows = 4\ngrid_epochs = 1\nlemma1_snrs_db = [0.0]\n",
    )
    .unwrap();
    let lenient = noma(&["theory-check", "--config", "low_snr.toml", "--out", "lenient"], tmp.path());
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("certification"));
    let strict = noma(&["theory-check", "--config", "low_snr.toml", "--out", "strict", "--strict"], tmp.path());
    assert_eq!(strict.status.code(), Some(2));
    // Artifacts are still written so the failure can be inspected.
    assert!(tmp.path().join("strict/theory.json").is_file());
}
