//! The `scm` binary end to end on small on-disk fixtures.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use scm::io::{save_mask, save_rgb};
use scm::EvalReport;
use scm_core::metrics::Aggregation;
use scm_core::{BinaryMask, RgbImage};

fn scm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scm"))
        .args(args)
        .env_remove("SCM_WEIGHTS_DIR")
        .output()
        .unwrap()
}

fn run(root: &Path, out: &Path, variant: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--dataset",
        "levir",
        "--root",
        root.to_str().unwrap(),
        "--variant",
        variant,
        "--out",
        out.to_str().unwrap(),
        "--synthetic-backbone",
        "7",
    ];
    args.extend_from_slice(extra);
    scm(&args)
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_writes_maps_comparisons_diagnostics_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (root, out) = (dir.path().join("levir"), dir.path().join("out"));
    common::levir_fixture(&root, 3);
    ok(&run(&root, &out, "scm", &["--workers", "2"]));
    for k in 1..=3 {
        for suffix in [".png", "_cmp.png", "_diag.json"] {
            assert!(out.join(format!("test_{k}{suffix}")).is_file(), "test_{k}{suffix}");
        }
    }
    let report = EvalReport::load(&out.join("report.json")).unwrap();
    assert_eq!(report.per_tile.len(), 3);
    let ids: Vec<&str> = report.per_tile.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids, ["test_1", "test_2", "test_3"]);
    assert_eq!(report.recompute(Aggregation::Micro), report.scores);
    assert!(report.scores.f1 > 0.0);
    let failures: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert!(failures.is_empty());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("test_1_diag.json")).unwrap()).unwrap();
    assert_eq!(diag["tile_id"], "test_1");
    assert_eq!(diag["variant"], "scm");
    assert!(diag["masks_t2"].as_u64().unwrap() >= 1);
}

#[test]
fn reruns_are_byte_identical_regardless_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("levir");
    common::levir_fixture(&root, 4);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&root, &a, "scm", &["--workers", "1"]));
    ok(&run(&root, &b, "scm", &["--workers", "3"]));
    for k in 1..=4 {
        for name in [
            format!("test_{k}.png"),
            format!("test_{k}_cmp.png"),
            format!("test_{k}_diag.json"),
        ] {
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{name}"
            );
        }
    }
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(b.join("report.json")).unwrap()
    );
}

#[test]
fn eval_recomputes_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let (root, out) = (dir.path().join("levir"), dir.path().join("out"));
    common::levir_fixture(&root, 3);
    ok(&run(&root, &out, "rff", &[]));
    let recomputed = dir.path().join("eval.json");
    let o = scm(&[
        "eval",
        "--pred",
        out.to_str().unwrap(),
        "--gt",
        root.to_str().unwrap(),
        "--out",
        recomputed.to_str().unwrap(),
    ]);
    ok(&o);
    let original = EvalReport::load(&out.join("report.json")).unwrap();
    let again = EvalReport::load(&recomputed).unwrap();
    assert_eq!(again.per_tile, original.per_tile);
    assert_eq!(again.scores, original.scores);
    assert_eq!(again.totals, original.totals);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let (root, out) = (dir.path().join("levir"), dir.path().join("out"));
    common::levir_fixture(&root, 2);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "dataset = \"levir\"\nroot = {:?}\nvariant = \"base\"\nout = {:?}\nthreshold = 0.9\naggregate = \"macro\"\n[adapter]\nkind = \"synthetic\"\nseed = 2\n",
            root.to_str().unwrap(),
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(&scm(&["run", "--config", cfg.to_str().unwrap(), "--variant", "rff"]));
    let report = EvalReport::load(&out.join("report.json")).unwrap();
    assert_eq!(report.aggregation, Aggregation::Macro);
    assert_eq!(report.variant, Some(scm_core::Variant::Rff));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("test_1_diag.json")).unwrap()).unwrap();
    assert_eq!(diag["threshold_source"], "override");
    assert_eq!(diag["threshold"], 0.9);
}

#[test]
fn empty_dataset_exits_with_no_work_code() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("empty");
    std::fs::create_dir_all(root.join("A")).unwrap();
    let out = dir.path().join("out");
    let o = run(&root, &out, "rff", &[]);
    assert_eq!(o.status.code(), Some(3));
    let report = EvalReport::load(&out.join("report.json")).unwrap();
    assert!(report.per_tile.is_empty());
}

#[test]
fn bad_tile_is_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let (root, out) = (dir.path().join("levir"), dir.path().join("out"));
    common::levir_fixture(&root, 2);
    // a second acquisition with the wrong size
    save_rgb(&root.join("B/test_2.png"), &RgbImage::filled(40, 40, [0, 0, 0])).unwrap();
    let o = run(&root, &out, "rff", &[]);
    assert_eq!(o.status.code(), Some(1));
    let failures: Vec<scm::Failure> =
        serde_json::from_str(&std::fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].id, "test_2");
    let report = EvalReport::load(&out.join("report.json")).unwrap();
    assert_eq!(report.per_tile.len(), 1);
    assert!(out.join("test_1.png").is_file());
}

#[test]
fn pretrained_adapter_without_weights_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("levir");
    common::levir_fixture(&root, 1);
    let out = dir.path().join("out");
    let o = scm(&["run", "--root", root.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("SCM_WEIGHTS_DIR"));
}

#[test]
fn process_adapter_runs_through_the_worker_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("levir");
    common::levir_fixture(&root, 2);
    let weights = dir.path().join("weights");
    std::fs::create_dir_all(&weights).unwrap();
    let (via_worker, local) = (dir.path().join("w"), dir.path().join("l"));
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "root = {:?}\nout = {:?}\n[adapter]\nkind = \"process\"\ncommand = [{:?}, \"--seed\", \"7\"]\nweights = {:?}\n",
            root.to_str().unwrap(),
            via_worker.to_str().unwrap(),
            env!("CARGO_BIN_EXE_scm-synthetic-worker"),
            weights.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(&scm(&["run", "--config", cfg.to_str().unwrap()]));
    ok(&run(&root, &local, "scm", &[]));
    for name in ["test_1.png", "test_2.png", "report.json"] {
        assert_eq!(
            std::fs::read(via_worker.join(name)).unwrap(),
            std::fs::read(local.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn whu_mosaic_is_tiled_and_scored() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("whu");
    std::fs::create_dir_all(&root).unwrap();
    let (h, w) = (1100, 1500);
    let new = common::rect(300, 340, 900, 960);
    let t1 = common::scene(h, w, &[]);
    let t2 = common::scene(h, w, &[(&new, common::BUILDING)]);
    save_rgb(&root.join("A.png"), &t1).unwrap();
    save_rgb(&root.join("B.png"), &t2).unwrap();
    save_mask(&root.join("label.png"), &BinaryMask::from_fn(h, w, new)).unwrap();
    let out = dir.path().join("out");
    ok(&scm(&[
        "run",
        "--dataset",
        "whu",
        "--root",
        root.to_str().unwrap(),
        "--variant",
        "rff",
        "--out",
        out.to_str().unwrap(),
        "--synthetic-backbone",
        "1",
        "--workers",
        "4",
    ]));
    let report = EvalReport::load(&out.join("report.json")).unwrap();
    assert_eq!(report.per_tile.len(), 4);
    assert_eq!(report.per_tile[0].id, "whu_r00_c00");
    assert!(report
        .per_tile
        .iter()
        .all(|t| t.tile.is_some() && t.counts.total() == 1024 * 1024));
    assert!(report.totals.tp > 0);
}
