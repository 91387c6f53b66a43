//! The subprocess adapter against the bundled synthetic worker.

use scm::process::{process_adapters, ProcessClient};
use scm_core::pipeline::{difference_for_pair, run_pair, PipelineConfig};
use scm_core::synthetic::synthetic_backbone;
use scm_core::{Error, ImagePair, PyramidLayout, RgbImage, Variant};

fn worker(extra: &[&str]) -> Vec<String> {
    let mut cmd = vec![env!("CARGO_BIN_EXE_scm-synthetic-worker").to_string()];
    cmd.extend(extra.iter().map(|s| s.to_string()));
    cmd
}

fn pair() -> ImagePair {
    let t1 = RgbImage::from_fn(72, 88, |y, x| {
        [((x * 3 + y) % 120) as u8 + 20, 40, ((y * 2) % 90) as u8 + 30]
    });
    let t2 = RgbImage::from_fn(72, 88, |y, x| {
        if (20..40).contains(&y) && (30..60).contains(&x) {
            [240, 30, 20]
        } else if (50..62).contains(&y) && (5..25).contains(&x) {
            [20, 40, 240]
        } else {
            t1.pixel(y, x)
        }
    });
    ImagePair::new("p", t1, t2).unwrap()
}

#[test]
fn info_reports_the_layout() {
    let mut client = ProcessClient::spawn(&worker(&["--seed", "5"]), None, "cpu").unwrap();
    assert_eq!(client.info().unwrap(), PyramidLayout::default());
}

#[test]
fn subprocess_results_equal_in_process_results() {
    let pair = pair();
    for variant in [Variant::Base, Variant::Rff, Variant::Scm] {
        let cfg = PipelineConfig::for_variant(variant);
        let mut local = synthetic_backbone(5);
        let client = ProcessClient::spawn(&worker(&["--seed", "5"]), None, "cpu").unwrap();
        let mut remote = process_adapters(client);
        let (d_local, g_local) = difference_for_pair(&pair, &mut local, &cfg).unwrap();
        let (d_remote, g_remote) = difference_for_pair(&pair, &mut remote, &cfg).unwrap();
        assert_eq!(d_local, d_remote, "{variant:?}");
        assert_eq!(g_local, g_remote, "{variant:?}");
        let (m_local, _) = run_pair(&pair, &mut local, &cfg).unwrap();
        let (m_remote, _) = run_pair(&pair, &mut remote, &cfg).unwrap();
        assert_eq!(m_local, m_remote, "{variant:?}");
    }
}

#[test]
fn worker_errors_surface_as_inference_errors() {
    for op in ["extract_pyramid", "generate_masks", "embed_texts", "embed_image"] {
        let client = ProcessClient::spawn(&worker(&["--fail-on", op]), None, "cpu").unwrap();
        let mut adapters = process_adapters(client);
        let err = run_pair(&pair(), &mut adapters, &PipelineConfig::for_variant(Variant::Scm)).unwrap_err();
        match &err {
            Error::Inference { message, .. } => assert!(message.contains(op), "{op}: {message}"),
            other => panic!("{op}: unexpected error {other:?}"),
        }
    }
}

#[test]
fn missing_or_dead_worker_is_reported() {
    let err = ProcessClient::spawn(&["/no/such/worker".to_string()], None, "cpu")
        .err()
        .unwrap();
    assert!(matches!(err, Error::Config(_)));
    let mut client = ProcessClient::spawn(&["true".to_string()], None, "cpu").unwrap();
    let err = client.info().unwrap_err();
    assert!(err.to_string().contains("info"), "{err}");
}
