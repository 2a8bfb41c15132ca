//! Procedural three-class image generator used as a desk-scale stand-in
//! for clinical data, which is not redistributable.
//!
//! The classes are visually distinct in both texture and channel balance:
//! `covid19` renders soft bright blobs on a red-leaning base, `no_finding`
//! a regular grid on a green-leaning base, and `other_pneumonia` concentric
//! rings on a blue-leaning base. Same seed, same pixels — the generator is
//! fully deterministic.

use crate::data::{load_dataset, ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::path::Path;

/// Channel weights giving each class its dominant tint.
fn class_tint(label: ClassLabel) -> [f64; 3] {
    match label {
        ClassLabel::Covid19 => [0.95, 0.35, 0.25],
        ClassLabel::NoFinding => [0.30, 0.90, 0.35],
        ClassLabel::OtherPneumonia => [0.25, 0.40, 0.95],
    }
}

/// Renders one `[size, size, 3]` image in `[0, 1]` for a class, drawing
/// layout parameters and pixel noise from `rng`.
pub fn render_class_image(label: ClassLabel, size: usize, rng: &mut Rng) -> Tensor {
    let tint = class_tint(label);
    let s = size as f64;
    let field: Box<dyn Fn(f64, f64) -> f64> = match label {
        ClassLabel::Covid19 => {
            // Two to four soft radial blobs.
            let count = 2 + rng.below(3);
            let blobs: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.uniform(0.2 * s, 0.8 * s),
                        rng.uniform(0.2 * s, 0.8 * s),
                        rng.uniform(0.12 * s, 0.22 * s),
                    )
                })
                .collect();
            Box::new(move |x, y| {
                let mut v: f64 = 0.0;
                for &(bx, by, r) in &blobs {
                    let d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                    v += (-d2 / (2.0 * r * r)).exp();
                }
                v.min(1.0)
            })
        }
        ClassLabel::NoFinding => {
            // Crossed periodic stripes.
            let period = rng.uniform(s / 8.0, s / 5.0);
            let phase_x = rng.uniform(0.0, std::f64::consts::TAU);
            let phase_y = rng.uniform(0.0, std::f64::consts::TAU);
            Box::new(move |x, y| {
                let gx = (std::f64::consts::TAU * x / period + phase_x).sin();
                let gy = (std::f64::consts::TAU * y / period + phase_y).sin();
                let line = gx.abs().max(gy.abs());
                line * line
            })
        }
        ClassLabel::OtherPneumonia => {
            // Concentric rings around a random center.
            let cx = rng.uniform(0.3 * s, 0.7 * s);
            let cy = rng.uniform(0.3 * s, 0.7 * s);
            let period = rng.uniform(s / 10.0, s / 6.0);
            let phase = rng.uniform(0.0, std::f64::consts::TAU);
            Box::new(move |x, y| {
                let r = ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt();
                0.5 + 0.5 * (std::f64::consts::TAU * r / period + phase).sin()
            })
        }
    };
    let mut img = Tensor::zeros(&[size, size, 3]);
    for row in 0..size {
        for col in 0..size {
            let v = field(col as f64, row as f64);
            for c in 0..3 {
                let noise = rng.uniform(-0.04, 0.04);
                let px = 0.08 + 0.84 * v * tint[c] + noise;
                *img.at_mut(&[row, col, c]) = px.clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Writes `n_per_class` PNGs per class under `root` in the standard class
/// directory layout and returns the loaded dataset.
pub fn synth_dataset(root: &Path, n_per_class: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n_per_class < 5 {
        return Err(Error::Domain(format!(
            "need at least 5 images per class, got {n_per_class}"
        )));
    }
    if size < 16 {
        return Err(Error::Domain(format!(
            "image side must be at least 16, got {size}"
        )));
    }
    let base = Rng::new(seed, "synth");
    for label in ClassLabel::ALL {
        let dir = root.join(label.dir_name());
        std::fs::create_dir_all(&dir)?;
        for i in 0..n_per_class {
            let mut rng = base.derive(&format!("{}/{i}", label.dir_name()));
            let img = render_class_image(label, size, &mut rng);
            let path = dir.join(format!("{}_{i:03}.png", label.dir_name()));
            crate::augment::save_png(&img, &path)?;
        }
    }
    load_dataset(root)
}
