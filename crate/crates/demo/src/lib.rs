//! Browser demo over the core stack, exposed through wasm-bindgen.
//!
//! Three interactive surfaces, all framework-free on the JS side:
//! - a synthetic dataset gallery ([`synth_image_rgba`]),
//! - an augmentation explorer with direct parameter control
//!   ([`AugmentExplorer`]),
//! - a live training session on an in-memory synthetic set
//!   ([`LiveTrainer`]).
//!
//! Every method returns plain buffers or JSON strings so the crate also
//! compiles and tests natively.

use paxray_core::arch::mini_vgg_spec;
use paxray_core::augment::{
    apply_transform, draw_params, fit_stats, standardize, AugmentConfig, ChannelStats,
    TransformParams,
};
use paxray_core::data::ClassLabel;
use paxray_core::layers::Mode;
use paxray_core::metrics::evaluate;
use paxray_core::model::{build, Model};
use paxray_core::optim::{cross_entropy, AdamState};
use paxray_core::rng::Rng;
use paxray_core::synth::render_class_image;
use paxray_core::tensor::Tensor;
use wasm_bindgen::prelude::*;

fn tensor_to_rgba(img: &Tensor) -> Vec<u8> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut out = Vec::with_capacity(h * w * 4);
    for px in img.data().chunks(3) {
        for c in 0..3 {
            out.push((px[c].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

fn class_of(index: u8) -> ClassLabel {
    ClassLabel::from_index(index as usize).unwrap_or(ClassLabel::Covid19)
}

/// RGBA pixels (length `size*size*4`) of one synthetic image for class
/// 0 (covid19 / blobs), 1 (no_finding / grid), or 2 (other_pneumonia /
/// rings).
#[wasm_bindgen]
pub fn synth_image_rgba(class_index: u8, size: u32, seed: u64, image_index: u32) -> Vec<u8> {
    let label = class_of(class_index);
    let mut rng = Rng::new(seed, "synth").derive(&format!(
        "{}/{image_index}",
        label.dir_name()
    ));
    tensor_to_rgba(&render_class_image(label, size as usize, &mut rng))
}

#[wasm_bindgen]
pub fn class_name(class_index: u8) -> String {
    class_of(class_index).display_name().to_string()
}

/// Interactive augmentation preview on a synthetic base image.
#[wasm_bindgen]
pub struct AugmentExplorer {
    base: Tensor,
}

#[wasm_bindgen]
impl AugmentExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(class_index: u8, size: u32, seed: u64) -> AugmentExplorer {
        let label = class_of(class_index);
        let mut rng = Rng::new(seed, "explorer-base");
        AugmentExplorer {
            base: render_class_image(label, size as usize, &mut rng),
        }
    }

    pub fn side(&self) -> u32 {
        self.base.shape()[0] as u32
    }

    pub fn original_rgba(&self) -> Vec<u8> {
        tensor_to_rgba(&self.base)
    }

    /// Applies one explicit parameter draw (slider values).
    #[allow(clippy::too_many_arguments)]
    pub fn transformed_rgba(
        &self,
        hflip: bool,
        vflip: bool,
        rotation_deg: f64,
        shear_deg_ccw: f64,
        zoom: f64,
        shift_x_frac: f64,
        shift_y_frac: f64,
        channel_shift_r: f64,
        channel_shift_g: f64,
        channel_shift_b: f64,
    ) -> Vec<u8> {
        let params = TransformParams {
            hflip,
            vflip,
            rotation_deg,
            shear_deg_ccw,
            zoom,
            shift_x_frac,
            shift_y_frac,
            channel_shift: [channel_shift_r, channel_shift_g, channel_shift_b],
        };
        match apply_transform(&self.base, &params) {
            Ok(t) => tensor_to_rgba(&t),
            Err(_) => self.original_rgba(),
        }
    }

    /// Samples the full training recipe (its Table-style default ranges)
    /// on stream `draw<index>` and returns the parameters actually drawn
    /// as JSON alongside nothing else; pair with `transformed_rgba` to
    /// render them.
    pub fn random_params_json(&self, seed: u64, index: u32) -> String {
        let cfg = AugmentConfig::default();
        let mut rng = Rng::new(seed, "explorer").derive(&format!("draw{index}"));
        let p = draw_params(&cfg, &mut rng);
        format!(
            "{{\"hflip\":{},\"vflip\":{},\"rotation_deg\":{:.3},\"shear_deg_ccw\":{:.4},\
             \"zoom\":{:.4},\"shift_x_frac\":{:.4},\"shift_y_frac\":{:.4},\
             \"channel_shift\":[{:.4},{:.4},{:.4}]}}",
            p.hflip,
            p.vflip,
            p.rotation_deg,
            p.shear_deg_ccw,
            p.zoom,
            p.shift_x_frac,
            p.shift_y_frac,
            p.channel_shift[0],
            p.channel_shift[1],
            p.channel_shift[2]
        )
    }
}

/// In-browser training session: a mini VGG-style network on an in-memory
/// synthetic dataset, stepped one epoch at a time.
#[wasm_bindgen]
pub struct LiveTrainer {
    model: Model,
    adam: AdamState,
    images: Vec<Tensor>,
    labels: Vec<ClassLabel>,
    stats: ChannelStats,
    base_rng: Rng,
    epoch: usize,
    batch_size: usize,
    side: usize,
}

#[wasm_bindgen]
impl LiveTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, per_class: u32, side: u32, batch_size: u32, lr: f64) -> LiveTrainer {
        let side = (side as usize).max(16);
        let per_class = (per_class as usize).max(2);
        let base_rng = Rng::new(seed, "live");
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for label in ClassLabel::ALL {
            for i in 0..per_class {
                let mut rng = base_rng.derive(&format!("data/{}/{i}", label.dir_name()));
                images.push(render_class_image(label, side, &mut rng));
                labels.push(label);
            }
        }
        let stats = fit_stats(&images).expect("synthetic images are never constant");
        let spec = mini_vgg_spec(3, 0.3, (side, side, 3));
        let model = build(&spec, &base_rng.derive("init")).expect("spec is valid");
        LiveTrainer {
            model,
            adam: AdamState::new(lr.clamp(1e-6, 1.0)),
            images,
            labels,
            stats,
            base_rng,
            epoch: 0,
            batch_size: (batch_size as usize).clamp(2, 64),
            side,
        }
    }

    pub fn sample_count(&self) -> u32 {
        self.images.len() as u32
    }

    pub fn side(&self) -> u32 {
        self.side as u32
    }

    pub fn epoch(&self) -> u32 {
        self.epoch as u32
    }

    pub fn sample_rgba(&self, index: u32) -> Vec<u8> {
        tensor_to_rgba(&self.images[index as usize % self.images.len()])
    }

    pub fn sample_label(&self, index: u32) -> u8 {
        self.labels[index as usize % self.labels.len()].index() as u8
    }

    fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let mut data = Vec::with_capacity(indices.len() * self.side * self.side * 3);
        let mut labels = Tensor::zeros(&[indices.len(), 3]);
        for (row, &i) in indices.iter().enumerate() {
            let std = standardize(&self.images[i], &self.stats).expect("image shape fixed");
            data.extend_from_slice(std.data());
            *labels.at_mut(&[row, self.labels[i].index()]) = 1.0;
        }
        let x = Tensor::new(&[indices.len(), self.side, self.side, 3], data)
            .expect("batch assembly");
        (x, labels)
    }

    /// Runs one epoch; returns `{"epoch":e,"loss":l}` as JSON.
    pub fn train_epoch(&mut self) -> String {
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        let mut shuffle_rng = self.base_rng.derive(&format!("shuffle/{}", self.epoch));
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(self.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let (x, y) = self.batch(chunk);
            let mut rng = self
                .base_rng
                .derive(&format!("drop/{}/{}", self.epoch, b));
            let probs = match self.model.forward(&x, Mode::Train, &mut rng) {
                Ok(p) => p,
                Err(_) => return "{\"error\":\"forward failed\"}".into(),
            };
            let (loss, dlogits) = match cross_entropy(&probs, &y) {
                Ok(v) => v,
                Err(_) => return "{\"error\":\"loss failed\"}".into(),
            };
            if self.model.backward(&dlogits).is_err()
                || self.adam.step(self.model.adam_entries()).is_err()
            {
                return "{\"error\":\"backward failed\"}".into();
            }
            loss_sum += loss;
            batches += 1;
        }
        self.epoch += 1;
        let loss = if batches > 0 {
            loss_sum / batches as f64
        } else {
            f64::NAN
        };
        format!("{{\"epoch\":{},\"loss\":{:.6}}}", self.epoch, loss)
    }

    /// Evaluates on the (un-augmented) training set; returns the metric
    /// suite as JSON.
    pub fn evaluate_json(&mut self) -> String {
        let all: Vec<usize> = (0..self.images.len()).collect();
        let (x, y) = self.batch(&all);
        let mut rng = self.base_rng.derive("eval");
        let probs = match self.model.forward(&x, Mode::Infer, &mut rng) {
            Ok(p) => p,
            Err(_) => return "{\"error\":\"forward failed\"}".into(),
        };
        match evaluate(&probs, &y) {
            Ok(r) => format!(
                "{{\"accuracy\":{:.4},\"loss\":{:.4},\"flat_auc\":{:.4}}}",
                r.accuracy, r.loss, r.flat_auc
            ),
            Err(_) => "{\"error\":\"evaluation failed\"}".into(),
        }
    }

    /// Predicted class index and probabilities for one stored sample.
    pub fn predict_json(&mut self, index: u32) -> String {
        let i = index as usize % self.images.len();
        let (x, _) = self.batch(&[i]);
        let mut rng = self.base_rng.derive("predict");
        let probs = match self.model.forward(&x, Mode::Infer, &mut rng) {
            Ok(p) => p,
            Err(_) => return "{\"error\":\"forward failed\"}".into(),
        };
        let row = probs.data();
        let mut pred = 0;
        for j in 1..3 {
            if row[j] > row[pred] {
                pred = j;
            }
        }
        format!(
            "{{\"truth\":{},\"predicted\":{pred},\"probs\":[{:.4},{:.4},{:.4}]}}",
            self.labels[i].index(),
            row[0],
            row[1],
            row[2]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_rgba_has_the_right_length_and_is_deterministic() {
        let a = synth_image_rgba(0, 24, 5, 0);
        let b = synth_image_rgba(0, 24, 5, 0);
        assert_eq!(a.len(), 24 * 24 * 4);
        assert_eq!(a, b);
        let c = synth_image_rgba(1, 24, 5, 0);
        assert_ne!(a, c);
    }

    #[test]
    fn explorer_identity_params_reproduce_the_base() {
        let ex = AugmentExplorer::new(2, 24, 9);
        let identity = ex.transformed_rgba(
            false, false, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        );
        assert_eq!(identity, ex.original_rgba());
        let rotated = ex.transformed_rgba(
            false, false, 45.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        );
        assert_ne!(rotated, ex.original_rgba());
    }

    #[test]
    fn explorer_random_params_are_valid_json_per_stream() {
        let ex = AugmentExplorer::new(0, 24, 1);
        let a = ex.random_params_json(3, 0);
        let b = ex.random_params_json(3, 0);
        assert_eq!(a, b);
        assert!(a.starts_with('{') && a.ends_with('}'));
    }

    #[test]
    fn live_trainer_reduces_loss_over_a_few_epochs() {
        let mut t = LiveTrainer::new(4, 4, 16, 4, 0.002);
        assert_eq!(t.sample_count(), 12);
        let first: f64 = {
            let json = t.train_epoch();
            json.split("\"loss\":")
                .nth(1)
                .unwrap()
                .trim_end_matches('}')
                .parse()
                .unwrap()
        };
        let mut last = first;
        for _ in 0..6 {
            let json = t.train_epoch();
            last = json
                .split("\"loss\":")
                .nth(1)
                .unwrap()
                .trim_end_matches('}')
                .parse()
                .unwrap();
        }
        assert!(last.is_finite());
        assert!(last < first, "loss {first} -> {last}");
        let eval = t.evaluate_json();
        assert!(eval.contains("accuracy"));
        let pred = t.predict_json(0);
        assert!(pred.contains("probs"));
    }
}
