//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use scm::io::{save_mask, save_rgb};
use scm_core::{BinaryMask, RgbImage};

pub const BACKGROUND: [u8; 3] = [40, 45, 50];
pub const BUILDING: [u8; 3] = [235, 40, 30];
pub const POOL: [u8; 3] = [30, 60, 235];

pub fn rect(y0: usize, y1: usize, x0: usize, x1: usize) -> impl Fn(usize, usize) -> bool {
    move |y, x| (y0..y1).contains(&y) && (x0..x1).contains(&x)
}

/// A region test paired with the color painted over it.
pub type Paint<'a> = (&'a dyn Fn(usize, usize) -> bool, [u8; 3]);

/// Dark textured ground with colored rectangles painted on top.
pub fn scene(h: usize, w: usize, paint: &[Paint]) -> RgbImage {
    RgbImage::from_fn(h, w, |y, x| {
        for (inside, color) in paint {
            if inside(y, x) {
                return *color;
            }
        }
        let t = ((y * 7 + x * 5) % 9) as u8;
        [BACKGROUND[0] + t, BACKGROUND[1] + t, BACKGROUND[2] + t]
    })
}

/// One LEVIR-style item: a new building appears in t2 and is the only labelled change.
pub fn building_item(h: usize, w: usize, k: usize) -> (RgbImage, RgbImage, BinaryMask) {
    let y0 = 8 + (k * 13) % (h / 2);
    let x0 = 6 + (k * 29) % (w / 2);
    let new = rect(y0, y0 + 18, x0, x0 + 22);
    let old = rect(h - 20, h - 6, 6, 26);
    let t1 = scene(h, w, &[(&old, BUILDING)]);
    let t2 = scene(h, w, &[(&old, BUILDING), (&new, BUILDING)]);
    (t1, t2, BinaryMask::from_fn(h, w, new))
}

pub fn write_levir(root: &Path, items: &[(String, RgbImage, RgbImage, BinaryMask)]) {
    for d in ["A", "B", "label"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    for (name, t1, t2, gt) in items {
        save_rgb(&root.join("A").join(format!("{name}.png")), t1).unwrap();
        save_rgb(&root.join("B").join(format!("{name}.png")), t2).unwrap();
        save_mask(&root.join("label").join(format!("{name}.png")), gt).unwrap();
    }
}

pub fn levir_fixture(root: &Path, n: usize) {
    let items: Vec<_> = (0..n)
        .map(|k| {
            let (t1, t2, gt) = building_item(64, 80, k);
            (format!("test_{}", k + 1), t1, t2, gt)
        })
        .collect();
    write_levir(root, &items);
}
