//! Full-size VGG16 forward pass: expensive (one ~10 GFLOP inference), so
//! it lives in its own target.

use paxray_core::arch::vgg16_spec;
use paxray_core::layers::Mode;
use paxray_core::model::build;
use paxray_core::rng::Rng;
use paxray_core::tensor::Tensor;

#[test]
fn vgg16_forward_at_full_resolution_yields_a_probability_row() {
    let rng = Rng::new(16, "vgg-fwd");
    let spec = vgg16_spec(3, 0.3, (182, 182, 3));
    let mut model = build(&spec, &rng).unwrap();
    assert_eq!(model.param_count(), 88_284_923);

    let x = Tensor::uniform(&[1, 182, 182, 3], 0.0, 1.0, &mut rng.derive("x"));
    let probs = model
        .forward(&x, Mode::Infer, &mut rng.derive("fwd"))
        .unwrap();
    assert_eq!(probs.shape(), &[1, 3]);
    let sum: f64 = probs.data().iter().sum();
    assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
    assert!(probs.data().iter().all(|&p| p > 0.0));
}
