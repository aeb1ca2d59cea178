//! Finite-difference checks for every layer's backward pass, run in f64.

use gop_nn::act::{LeakyRelu, Sigmoid};
use gop_nn::conv::{Conv2d, Deconv2d};
use gop_nn::defocus::Defocus;
use gop_nn::gradcheck::{finite_diff, max_abs_diff};
use gop_nn::linear::Linear;
use gop_nn::norm::BatchNorm2d;
use gop_nn::pool::{GlobalAvgPool, MaxPool2d};
use gop_nn::resize::{BilinearResize, ResizeTarget};
use gop_nn::{HasParams, Param};
use ndarray::{Array2, Array4, ArrayD, Ix2, Ix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-7;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand4(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0))
}

fn rand2(rng: &mut ChaCha8Rng, dim: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0))
}

/// Perturbs one named parameter elementwise to finite-difference the
/// layer's weight gradient.
fn param_fd<L: HasParams<f64>>(
    layer: &mut L,
    name: &str,
    mut eval: impl FnMut(&mut L) -> f64,
) -> ArrayD<f64> {
    let shape = {
        let mut dim = None;
        layer.visit_params("", &mut |n, p| {
            if n == name {
                dim = Some(p.data.raw_dim());
            }
        });
        dim.unwrap_or_else(|| panic!("no param {name}"))
    };
    let mut grad = ArrayD::<f64>::zeros(shape.clone());
    for idx in 0..grad.len() {
        for (sign, store) in [(1.0, 0usize), (-1.0, 1usize)] {
            let delta = sign * EPS;
            layer.visit_params("", &mut |n, p| {
                if n == name {
                    p.data.as_slice_mut().unwrap()[idx] += delta;
                }
            });
            let val = eval(layer);
            layer.visit_params("", &mut |n, p| {
                if n == name {
                    p.data.as_slice_mut().unwrap()[idx] -= delta;
                }
            });
            if store == 0 {
                grad.as_slice_mut().unwrap()[idx] = val;
            } else {
                let plus = grad.as_slice().unwrap()[idx];
                grad.as_slice_mut().unwrap()[idx] = (plus - val) / (2.0 * EPS);
            }
        }
    }
    grad
}

fn analytic_param<L: HasParams<f64>>(layer: &mut L, name: &str) -> ArrayD<f64> {
    let mut out = None;
    layer.visit_params("", &mut |n, p: &mut Param<f64>| {
        if n == name {
            out = Some(p.grad.clone());
        }
    });
    out.unwrap_or_else(|| panic!("no param {name}"))
}

#[test]
fn conv2d_gradients() {
    let mut r = rng(11);
    let x = rand4(&mut r, (2, 3, 6, 6));
    let mut conv = Conv2d::<f64>::new(3, 4, 3, 2, 1, true, &mut r);
    let probe = rand4(&mut r, (2, 4, 3, 3));

    let y = conv.forward(&x, true);
    assert_eq!(y.dim(), (2, 4, 3, 3));
    let gx = conv.backward(&(probe.clone()));

    let fd_x = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (conv.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd_x) < TOL);

    for name in ["weight", "bias"] {
        let fd = param_fd(&mut conv, name, |l| (l.forward(&x, false) * &probe).sum());
        let analytic = analytic_param(&mut conv, name);
        assert!(
            max_abs_diff(&analytic, &fd) < TOL,
            "conv {name}: {}",
            max_abs_diff(&analytic, &fd)
        );
    }
}

#[test]
fn deconv2d_gradients() {
    let mut r = rng(12);
    let x = rand4(&mut r, (2, 3, 4, 4));
    let mut deconv = Deconv2d::<f64>::new(3, 2, 4, 2, 1, true, &mut r);
    let y = deconv.forward(&x, true);
    assert_eq!(y.dim(), (2, 2, 8, 8));
    let probe = rand4(&mut r, (2, 2, 8, 8));
    let gx = deconv.backward(&probe);

    let fd_x = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (deconv.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd_x) < TOL);

    for name in ["weight", "bias"] {
        let fd = param_fd(&mut deconv, name, |l| (l.forward(&x, false) * &probe).sum());
        let analytic = analytic_param(&mut deconv, name);
        assert!(max_abs_diff(&analytic, &fd) < TOL, "deconv {name}");
    }
}

#[test]
fn batchnorm_gradients() {
    let mut r = rng(13);
    let x = rand4(&mut r, (3, 4, 5, 5));
    let mut bn = BatchNorm2d::<f64>::new(4);
    let probe = rand4(&mut r, (3, 4, 5, 5));

    let _ = bn.forward(&x, true);
    let gx = bn.backward(&probe).into_dyn();

    // train-mode output is a pure function of the batch; running stats
    // drift during probing but do not feed the output
    let fd_x = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        let y = bn.forward(&xi, true);
        bn.discard_cache();
        (y * &probe).sum()
    });
    let err = max_abs_diff(&gx, &fd_x);
    assert!(err < 1e-6, "bn dx: {err}");

    for name in ["gamma", "beta"] {
        let fd = param_fd(&mut bn, name, |l| {
            let y = l.forward(&x, true);
            l.discard_cache();
            (y * &probe).sum()
        });
        let analytic = analytic_param(&mut bn, name);
        assert!(max_abs_diff(&analytic, &fd) < 1e-6, "bn {name}");
    }
}

#[test]
fn linear_gradients() {
    let mut r = rng(14);
    let x = rand2(&mut r, (3, 10));
    let mut lin = Linear::<f64>::new(10, 4, &mut r);
    let probe = rand2(&mut r, (3, 4));

    let _ = lin.forward(&x, true);
    let gx = lin.backward(&probe);

    let fd_x = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix2>().unwrap();
        (lin.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd_x) < TOL);

    for name in ["weight", "bias"] {
        let fd = param_fd(&mut lin, name, |l| (l.forward(&x, false) * &probe).sum());
        let analytic = analytic_param(&mut lin, name);
        assert!(max_abs_diff(&analytic, &fd) < TOL, "linear {name}");
    }
}

#[test]
fn maxpool_and_gap_gradients() {
    let mut r = rng(15);
    let x = rand4(&mut r, (2, 3, 6, 6));
    let mut pool = MaxPool2d::<f64>::new(2, 2);
    let probe = rand4(&mut r, (2, 3, 3, 3));
    let _ = pool.forward(&x, true);
    let gx = pool.backward(&probe);
    let fd = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (pool.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd) < TOL);

    let mut gap = GlobalAvgPool::<f64>::new();
    let probe2 = rand2(&mut r, (2, 3));
    let _ = gap.forward(&x, true);
    let gx = gap.backward(&probe2);
    let fd = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (gap.forward(&xi, false) * &probe2).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd) < TOL);
}

#[test]
fn activations_and_resize_gradients() {
    let mut r = rng(16);
    let x = rand4(&mut r, (2, 2, 5, 7));

    let mut act = LeakyRelu::<f64, ndarray::Ix4>::new(0.1);
    let probe = rand4(&mut r, (2, 2, 5, 7));
    let _ = act.forward(&x, true);
    let gx = act.backward(&probe);
    let fd = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (act.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd) < TOL);

    let mut sig = Sigmoid::<f64, ndarray::Ix4>::new();
    let _ = sig.forward(&x, true);
    let gx = sig.backward(&probe);
    let fd = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (sig.forward(&xi, false) * &probe).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd) < TOL);

    let mut resize = BilinearResize::<f64>::new(ResizeTarget::Exact(8, 9));
    let y = resize.forward(&x, true);
    assert_eq!(y.dim(), (2, 2, 8, 9));
    let probe3 = rand4(&mut r, (2, 2, 8, 9));
    let gx = resize.backward(&probe3);
    let fd = finite_diff(&x.clone().into_dyn(), EPS, |p| {
        let xi = p.clone().into_dimensionality::<Ix4>().unwrap();
        (resize.forward(&xi, false) * &probe3).sum()
    });
    assert!(max_abs_diff(&gx.into_dyn(), &fd) < TOL);
}

#[test]
fn defocus_jacobian_is_a_permutation() {
    let layer = Defocus::<f64>::new(2);
    let dims = (1usize, 4usize, 2usize, 2usize);
    let n = 16;

    // column k of the Jacobian = forward(unit_k); every column must be a
    // one-hot vector and every row must be hit exactly once
    let mut hit = vec![0usize; n];
    for k in 0..n {
        let mut x = Array4::<f64>::zeros(dims);
        x.as_slice_mut().unwrap()[k] = 1.0;
        let y = layer.forward(&x);
        let ones: Vec<usize> = y
            .as_slice()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| {
                assert_eq!(*v, 1.0);
                i
            })
            .collect();
        assert_eq!(ones.len(), 1, "column {k} not one-hot");
        hit[ones[0]] += 1;
    }
    assert!(hit.iter().all(|&c| c == 1), "not a permutation");

    // backward is the inverse permutation: round trip through
    // forward + backward is the identity
    let mut r = rng(17);
    let x = rand4(&mut r, dims);
    let y = layer.forward(&x);
    let back = layer.backward(&y);
    assert_eq!(back, x);
}

#[test]
fn shared_layer_accumulates_gradients_across_passes() {
    let mut r = rng(18);
    let x1 = rand4(&mut r, (1, 2, 4, 4));
    let x2 = rand4(&mut r, (1, 2, 4, 4));
    let p1 = rand4(&mut r, (1, 3, 4, 4));
    let p2 = rand4(&mut r, (1, 3, 4, 4));

    let mut shared = Conv2d::<f64>::new(2, 3, 3, 1, 1, true, &mut rng(99));
    let _ = shared.forward(&x1, true);
    let _ = shared.forward(&x2, true);
    // reverse order: second pass first
    let _ = shared.backward(&p2);
    let _ = shared.backward(&p1);
    let combined = analytic_param(&mut shared, "weight");

    let mut solo = Conv2d::<f64>::new(2, 3, 3, 1, 1, true, &mut rng(99));
    let _ = solo.forward(&x1, true);
    let _ = solo.backward(&p1);
    let g1 = analytic_param(&mut solo, "weight");
    gop_nn::zero_grad(&mut solo);
    let _ = solo.forward(&x2, true);
    let _ = solo.backward(&p2);
    let g2 = analytic_param(&mut solo, "weight");

    assert!(max_abs_diff(&combined, &(&g1 + &g2)) < 1e-12);
}

#[test]
fn adam_steps_are_deterministic() {
    let build = || {
        let mut r = rng(42);
        Conv2d::<f64>::new(2, 2, 3, 1, 1, true, &mut r)
    };
    let run = |conv: &mut Conv2d<f64>| {
        let mut adam = gop_nn::Adam::new(1e-2);
        let mut r = rng(7);
        for _ in 0..5 {
            let x = rand4(&mut r, (2, 2, 4, 4));
            let probe = rand4(&mut r, (2, 2, 4, 4));
            gop_nn::zero_grad(conv);
            let _ = conv.forward(&x, true);
            let _ = conv.backward(&probe);
            adam.step(conv);
        }
        conv.weight.data.clone()
    };
    let mut a = build();
    let mut b = build();
    assert_eq!(run(&mut a), run(&mut b));
}
