//! Finite-difference check of the full gaze branch in f64: the gradient of
//! a heatmap scalar w.r.t. the gaze-specific input features.

use gop_model::gaze::GazeHead;
use gop_model::ModelConfig;
use gop_nn::gradcheck::max_rel_diff;
use ndarray::{Array4, Ix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn heatmap_gradient_matches_finite_differences() {
    let cfg = ModelConfig {
        image_size: 64,
        stem_channels: 4,
        block_channels: [4, 8, 16, 32],
        gaze_channels: 8,
        det_channels: 8,
        attention_hidden: 8,
        heatmap_size: 16,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut head = GazeHead::<f64>::new(&cfg, &mut rng);

    let dim = (2, 8, 2, 2);
    let f_scene = Array4::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0));
    let f_head = Array4::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0));
    let mut mask = Array4::<f64>::zeros((2, 1, 64, 64));
    for b in 0..2 {
        for y in 40..52 {
            for x in 10..22 {
                mask[(b, 0, y, x)] = 1.0;
            }
        }
    }
    let probe = Array4::from_shape_simple_fn((2, 1, 16, 16), || rng.random_range(-1.0..1.0));

    let _ = head.forward(&mask, &f_scene, &f_head, true);
    let (g_scene, g_head) = head.backward(&probe);

    let eps = 1e-5;
    let fd_scene = gop_nn::gradcheck::finite_diff(&f_scene.clone().into_dyn(), eps, |p| {
        let x = p.clone().into_dimensionality::<Ix4>().unwrap();
        let y = head.forward(&mask, &x, &f_head, true);
        (&y * &probe).sum()
    });
    let rel = max_rel_diff(&g_scene.into_dyn(), &fd_scene);
    assert!(rel < 1e-3, "scene-feature gradient rel err {rel}");

    let fd_head = gop_nn::gradcheck::finite_diff(&f_head.clone().into_dyn(), eps, |p| {
        let x = p.clone().into_dimensionality::<Ix4>().unwrap();
        let y = head.forward(&mask, &f_scene, &x, true);
        (&y * &probe).sum()
    });
    let rel = max_rel_diff(&g_head.into_dyn(), &fd_head);
    assert!(rel < 1e-3, "head-feature gradient rel err {rel}");
}
