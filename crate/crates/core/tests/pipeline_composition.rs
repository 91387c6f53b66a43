//! Cross-module behaviour of the change pipeline with hand-built adapters.

use scm_core::adapters::Modality;
use scm_core::change::{cosine_difference, otsu_threshold};
use scm_core::pipeline::{difference_for_pair, fuse_pair, run_pair, PipelineConfig, ThresholdSource};
use scm_core::psa::{build_psa, Combine, PsaOptions};
use scm_core::synthetic::{connected_components, synthetic_backbone};
use scm_core::{
    AdapterSet, BinaryMask, Embedder, Embedding, ImagePair, MaskGenerator, PromptGroups, Result, RgbImage, Variant,
};

/// One fixed mask for every image.
struct FixedMasks(Vec<BinaryMask>);

impl MaskGenerator for FixedMasks {
    fn generate_masks(&mut self, _image: &RgbImage) -> Result<Vec<BinaryMask>> {
        Ok(self.0.clone())
    }
}

/// Texts containing "roof" map to e0, everything else to e1; images map to `image`.
struct AxisEmbedder {
    image: Vec<f32>,
}

impl Embedder for AxisEmbedder {
    fn embed_image(&mut self, _image: &RgbImage) -> Result<Embedding> {
        Embedding::new(self.image.clone(), Modality::Image)
    }

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|t| {
                let v = if t.contains("roof") {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                };
                Embedding::new(v, Modality::Text)
            })
            .collect()
    }
}

fn textured(h: usize, w: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |y, x| {
        [
            ((y * 7 + x * 3) % 97 + 40) as u8,
            ((y * 5 + x * 11) % 89 + 60) as u8,
            ((y * 13 + x * 2) % 83 + 50) as u8,
        ]
    })
}

fn one_to_one_prompts() -> PromptGroups {
    PromptGroups::new(vec!["roof".into()], vec!["pool".into()]).unwrap()
}

#[test]
fn attention_values_follow_the_composed_probability() {
    // sims (0, 1) at temperature ln 4 give p_bld = 1 / (1 + 4) = 0.2 per acquisition
    let img = textured(40, 40);
    let pair = ImagePair::new("p", img.clone(), img).unwrap();
    let mask = BinaryMask::from_fn(40, 40, |y, x| (10..20).contains(&y) && (5..25).contains(&x));
    for (combine, inside) in [(Combine::Sum, 0.8), (Combine::Mean, 0.4)] {
        let options = PsaOptions {
            temperature: 4f64.ln(),
            combine,
            ..PsaOptions::default()
        };
        let mut gen = FixedMasks(vec![mask.clone()]);
        let mut emb = AxisEmbedder { image: vec![0.0, 1.0] };
        let (att, stats) = build_psa(&pair, &mut gen, &mut emb, &one_to_one_prompts(), &options).unwrap();
        assert_eq!(stats.patches, 2);
        for y in 0..40 {
            for x in 0..40 {
                let v = att.values()[y * 40 + x];
                let want = if mask.get(y, x) { inside } else { 0.0 };
                assert!((v - want).abs() < 1e-12, "{combine:?} ({y},{x}) {v} vs {want}");
            }
        }
    }
}

#[test]
fn building_patch_passes_difference_through_unchanged() {
    let t1 = textured(64, 64);
    let t2 = RgbImage::from_fn(64, 64, |y, x| {
        let p = t1.pixel(y, x);
        if y >= 32 {
            [255 - p[0], p[1], 255 - p[2]]
        } else {
            p
        }
    });
    let pair = ImagePair::new("p", t1, t2).unwrap();
    let everywhere = BinaryMask::from_fn(64, 64, |_, _| true);
    let mut cfg = PipelineConfig::for_variant(Variant::Scm);
    cfg.prompts = one_to_one_prompts();

    let mut rff_adapters = synthetic_backbone(3);
    let (rff_diff, _) =
        difference_for_pair(&pair, &mut rff_adapters, &PipelineConfig::for_variant(Variant::Rff)).unwrap();

    let mut adapters = synthetic_backbone(3);
    adapters.masks = Some(Box::new(FixedMasks(vec![everywhere])));
    adapters.embedder = Some(Box::new(AxisEmbedder { image: vec![1.0, 0.0] }));
    let (scm_diff, diag) = difference_for_pair(&pair, &mut adapters, &cfg).unwrap();
    assert_eq!(diag.patches, 2);
    assert_eq!(scm_diff.values(), rff_diff.values());
}

#[test]
fn empty_attention_annihilates_the_difference() {
    let t1 = textured(64, 64);
    let t2 = RgbImage::from_fn(64, 64, |y, x| if x < 20 { [250, 10, 10] } else { t1.pixel(y, x) });
    let pair = ImagePair::new("p", t1, t2).unwrap();
    let mut adapters = synthetic_backbone(1);
    adapters.masks = Some(Box::new(FixedMasks(Vec::new())));
    let (map, diag) = run_pair(&pair, &mut adapters, &PipelineConfig::for_variant(Variant::Scm)).unwrap();
    assert_eq!(map.changed_pixels(), 0);
    assert_eq!(diag.nonzero_pixels, 0);
    assert_eq!(diag.threshold_source, ThresholdSource::Degenerate);
}

#[test]
fn rff_change_stays_inside_the_receptive_footprint() {
    // an edit inside R can reach at most one coarsest cell (32 px) through block
    // averaging plus one more through bilinear upsampling at each of the three strides
    let (h, w) = (384, 384);
    let t1 = textured(h, w);
    let (r0, r1, c0, c1) = (160, 200, 100, 150);
    let t2 = RgbImage::from_fn(h, w, |y, x| {
        if (r0..r1).contains(&y) && (c0..c1).contains(&x) {
            [230, 20, 40]
        } else {
            t1.pixel(y, x)
        }
    });
    let pair = ImagePair::new("fp", t1, t2).unwrap();
    let reach = 2 * (8 + 16 + 32);
    for seed in 0..4 {
        let mut adapters = synthetic_backbone(seed);
        let (map, _) = run_pair(&pair, &mut adapters, &PipelineConfig::for_variant(Variant::Rff)).unwrap();
        assert!(map.changed_pixels() > 0, "seed {seed}: edit not detected");
        let inside = |y: usize, x: usize| y + reach >= r0 && y < r1 + reach && x + reach >= c0 && x < c1 + reach;
        for y in 0..h {
            for x in 0..w {
                assert!(
                    !map.mask().get(y, x) || inside(y, x),
                    "seed {seed}: change at ({y},{x})"
                );
            }
        }
        let hits_r = (r0..r1).any(|y| (c0..c1).any(|x| map.mask().get(y, x)));
        assert!(hits_r, "seed {seed}: nothing flagged inside the edit");
    }
}

#[test]
fn difference_is_zero_exactly_where_fused_features_agree() {
    let img = textured(96, 64);
    let pair = ImagePair::new("same", img.clone(), img).unwrap();
    for variant in [Variant::Base, Variant::Rff] {
        let mut adapters: AdapterSet = synthetic_backbone(9);
        let (c1, c2) = fuse_pair(&pair, &mut adapters, &PipelineConfig::for_variant(variant)).unwrap();
        let diff = cosine_difference(&c1, &c2).unwrap();
        assert!(diff.values().iter().all(|&v| v == 0.0));
        assert!(otsu_threshold(diff.values(), 256).is_err());
    }
}

/// Union-find labelling used as an independent oracle.
fn components_by_union_find(fg: &BinaryMask) -> Vec<Vec<usize>> {
    let (h, w) = fg.dims();
    let mut parent: Vec<usize> = (0..h * w).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let on = |i: usize| fg.as_slice()[i] != 0;
    for i in 0..h * w {
        if !on(i) {
            continue;
        }
        for j in [i + 1, i + w] {
            let neighbour = j < h * w && (j == i + w || j % w != 0);
            if neighbour && on(j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..h * w).filter(|&i| on(i)) {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

#[test]
fn connected_components_match_union_find() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for _ in 0..40 {
        let (h, w) = (rng.random_range(1..24), rng.random_range(1..24));
        let density = rng.random_range(0.2..0.7);
        let fg = BinaryMask::from_fn(h, w, |_, _| rng.random_bool(density));
        let mut ours: Vec<Vec<usize>> = connected_components(&fg)
            .iter()
            .map(|m| (0..h * w).filter(|&i| m.as_slice()[i] != 0).collect())
            .collect();
        ours.sort();
        assert_eq!(ours, components_by_union_find(&fg));
    }
}
