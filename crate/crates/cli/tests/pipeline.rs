use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use minrec::{load_splits, ItemModel, ItemSet};
use minrec_cli::pipeline::{build_report, MODEL_FILE, REPORT_DIR, SPLITS_DIR};
use minrec_cli::results::{read_rows, RESULTS_FILE};
use minrec_cli::{load_config, run_all, run_stage, RunConfig, Stage};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
}

fn fixture_config(out: &Path) -> RunConfig {
    load_config(
        &data_dir().join("config.toml"),
        None,
        Some(out.to_path_buf()),
    )
    .unwrap()
}

fn stage(s: Stage, cfg: &RunConfig) {
    run_stage(s, cfg).unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn prepare_counts_match_config_and_are_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    stage(Stage::Prepare, &cfg);
    let splits = load_splits(&dir.path().join(SPLITS_DIR)).unwrap();
    assert_eq!(splits.val_rec.len(), 20);
    assert_eq!(splits.val_est.len(), 20);
    assert_eq!(splits.test.len(), 30);
    assert_eq!(splits.train.n_users() + 70, splits.users.len());
    let manifest = fs::read(dir.path().join("manifest.json")).unwrap();
    stage(Stage::Prepare, &cfg);
    assert_eq!(
        fs::read(dir.path().join("manifest.json")).unwrap(),
        manifest
    );
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.dataset.path = "nowhere.csv".into();
    let err = run_stage(Stage::Prepare, &cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Prepare);
    let msg = err.to_string();
    assert!(msg.starts_with("prepare failed"), "{msg}");
    assert!(msg.contains("nowhere.csv"), "{msg}");
}

#[test]
fn stages_require_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    let err = run_stage(Stage::Fit, &cfg).unwrap_err();
    assert!(err.to_string().contains("run prepare first"));
    stage(Stage::Prepare, &cfg);
    assert!(run_stage(Stage::Minimize, &cfg)
        .unwrap_err()
        .to_string()
        .contains("run fit first"));
    assert!(run_stage(Stage::Report, &cfg)
        .unwrap_err()
        .to_string()
        .contains("run minimize first"));
}

#[test]
fn fit_grid_of_one_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.model.neighbors = vec![7];
    stage(Stage::Prepare, &cfg);
    stage(Stage::Fit, &cfg);
    let path = dir.path().join(MODEL_FILE);
    let model = ItemModel::load(&path).unwrap();
    assert_eq!(
        model.hyperparams(),
        &minrec::Hyperparams::ItemKnn {
            k: 7,
            similarity: minrec::Similarity::Cosine
        }
    );
    let again = dir.path().join("again.bin");
    model.save(&again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn fit_selects_the_planted_best_setting() {
    // One neighbour per item leaves most candidates unscored, which costs a
    // wide margin of validation NDCG on topic-structured data.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.model.neighbors = vec![1, 40];
    stage(Stage::Prepare, &cfg);
    stage(Stage::Fit, &cfg);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["model.k"], 40);
    let grid = manifest["model.grid"].as_array().unwrap();
    let ndcg = |i: usize| grid[i]["ndcg"].as_f64().unwrap();
    assert!(ndcg(1) > ndcg(0) + 0.05, "{grid:?}");
}

#[test]
fn ease_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.model.kind = minrec_cli::config::ModelKind::Ease;
    cfg.model.lambdas = vec![50.0, 500.0];
    cfg.minimize.minimizers = vec!["GR".into()];
    cfg.minimize.etas = vec![0.98];
    run_all(&cfg).unwrap();
    let rows = read_rows(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.feasible && r.prr >= 0.98 - 1e-12));
}

#[test]
fn minimize_row_count_and_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    for s in [Stage::Prepare, Stage::Fit, Stage::TuneGt, Stage::Minimize] {
        stage(s, &cfg);
    }
    let rows = read_rows(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 30 * 7 * 2);
    let splits = load_splits(&dir.path().join(SPLITS_DIR)).unwrap();
    for r in &rows {
        let user = splits
            .test
            .iter()
            .find(|u| splits.users.id(u.user) == r.user)
            .unwrap();
        let subset: ItemSet = r.subset_items(splits.items()).unwrap();
        assert!(subset.is_subset(&user.fold_in));
        assert_eq!(r.history_len, user.fold_in.len());
        assert!(r.feasible);
        let eta: f64 = r.eta.parse().unwrap();
        assert!(r.prr >= eta - 1e-12, "{r:?}");
    }
}

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![
        RESULTS_FILE.to_owned(),
        "manifest.json".into(),
        "test_eval.json".into(),
        "tune.csv".into(),
    ];
    for f in [
        "report.txt",
        "aggregate.csv",
        "strata.csv",
        "test.csv",
        "mr_vs_history.csv",
    ] {
        files.push(format!("{REPORT_DIR}/{f}"));
    }
    files
        .into_iter()
        .map(|f| {
            let bytes = fs::read(out.join(&f)).unwrap_or_else(|e| panic!("{f}: {e}"));
            (f, bytes)
        })
        .collect()
}

#[test]
fn full_runs_are_byte_identical_and_resume_matches() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(&fixture_config(a.path())).unwrap();
    let cfg_b = fixture_config(b.path());
    run_all(&cfg_b).unwrap();
    assert_eq!(artifacts(a.path()), artifacts(b.path()));

    // Interrupt mid-row and resume.
    let results = b.path().join(RESULTS_FILE);
    let full = fs::read(&results).unwrap();
    for cut in [full.len() / 3 + 7, full.len() - 11, 40] {
        fs::write(&results, &full[..cut]).unwrap();
        stage(Stage::Minimize, &cfg_b);
        assert_eq!(fs::read(&results).unwrap(), full, "cut at {cut}");
    }
    stage(Stage::Evaluate, &cfg_b);
    stage(Stage::Report, &cfg_b);
    assert_eq!(artifacts(a.path()), artifacts(b.path()));
}

#[test]
fn report_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    run_all(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join(REPORT_DIR).join("report.txt")).unwrap();
    let golden_path = data_dir().join("golden_report.txt");
    if std::env::var_os("MINREC_BLESS").is_some() {
        fs::write(&golden_path, &text).unwrap();
    }
    let golden = fs::read_to_string(&golden_path).unwrap();
    assert_eq!(
        text, golden,
        "report drifted from tests/data/golden_report.txt"
    );

    let (again, _) = build_report(&cfg).unwrap();
    assert_eq!(again.render_text(), text);
}

#[test]
fn report_rejects_empty_minimizer_list() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.minimize.minimizers.clear();
    let err = run_stage(Stage::Report, &cfg).unwrap_err();
    assert!(err.to_string().contains("minimizer list is empty"));
}

#[test]
fn binary_reports_stage_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_minrec");
    let out = Command::new(bin)
        .args(["fit", "--config"])
        .arg(data_dir().join("config.toml"))
        .arg("--out")
        .arg(dir.path())
        .env("MINREC_WORKERS", "2")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error: fit failed"), "{stderr}");

    let ok = Command::new(bin)
        .args(["prepare", "--seed", "5", "--config"])
        .arg(data_dir().join("config.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5"));

    let bad = Command::new(bin)
        .args(["prepare", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
