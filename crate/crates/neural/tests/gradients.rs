use corrlab_neural::gradcheck::{check, random_tensor};
use corrlab_neural::{LayerSpec, Network};

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn assert_stack(input_shape: &[usize], layers: Vec<LayerSpec>, batch: usize, seed: u64) {
    let net: Network<f64> = Network::new(input_shape, layers, seed).unwrap();
    let mut shape = vec![batch];
    shape.extend_from_slice(input_shape);
    let x = random_tensor(&shape, 1.0, seed + 1000);
    let report = check(&net, &x, 100, H, seed + 7).unwrap();
    assert!(report.passes(TOL), "{report:?}");
}

#[test]
fn dense() {
    assert_stack(&[6], vec![LayerSpec::Dense { input: 6, output: 4 }], 3, 1);
}

#[test]
fn activations() {
    for (i, act) in [
        LayerSpec::LeakyReLU { alpha: 0.2 },
        LayerSpec::ReLU,
        LayerSpec::Tanh,
        LayerSpec::Sigmoid,
    ]
    .into_iter()
    .enumerate()
    {
        assert_stack(
            &[5],
            vec![LayerSpec::Dense { input: 5, output: 7 }, act],
            4,
            10 + i as u64,
        );
    }
}

#[test]
fn conv2d() {
    assert_stack(
        &[2, 6, 6],
        vec![LayerSpec::Conv2D { in_ch: 2, out_ch: 3, kernel: 3, stride: 2, pad: 1 }],
        2,
        20,
    );
}

#[test]
fn conv_transpose2d() {
    assert_stack(
        &[3, 4, 4],
        vec![LayerSpec::ConvTranspose2D { in_ch: 3, out_ch: 2, kernel: 4, stride: 2, pad: 1 }],
        2,
        30,
    );
}

#[test]
fn flatten_and_reshape() {
    assert_stack(
        &[12],
        vec![
            LayerSpec::Reshape { shape: vec![3, 2, 2] },
            LayerSpec::Conv2D { in_ch: 3, out_ch: 2, kernel: 2, stride: 1, pad: 0 },
            LayerSpec::Flatten,
            LayerSpec::Dense { input: 2, output: 3 },
        ],
        3,
        40,
    );
}

#[test]
fn composed_conv_generator_and_discriminator() {
    assert_stack(
        &[10],
        vec![
            LayerSpec::Dense { input: 10, output: 32 },
            LayerSpec::ReLU,
            LayerSpec::Reshape { shape: vec![8, 2, 2] },
            LayerSpec::ConvTranspose2D { in_ch: 8, out_ch: 4, kernel: 4, stride: 2, pad: 1 },
            LayerSpec::ReLU,
            LayerSpec::ConvTranspose2D { in_ch: 4, out_ch: 1, kernel: 4, stride: 2, pad: 1 },
            LayerSpec::Flatten,
            LayerSpec::Tanh,
        ],
        2,
        50,
    );
    assert_stack(
        &[4, 8, 8],
        vec![
            LayerSpec::Conv2D { in_ch: 4, out_ch: 6, kernel: 4, stride: 2, pad: 1 },
            LayerSpec::LeakyReLU { alpha: 0.2 },
            LayerSpec::Conv2D { in_ch: 6, out_ch: 8, kernel: 4, stride: 2, pad: 1 },
            LayerSpec::LeakyReLU { alpha: 0.2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { input: 32, output: 1 },
            LayerSpec::Sigmoid,
        ],
        2,
        60,
    );
}

#[test]
fn fixed_seed_is_deterministic() {
    let build = || -> Network<f32> {
        Network::new(
            &[4],
            vec![LayerSpec::Dense { input: 4, output: 3 }, LayerSpec::Tanh],
            99,
        )
        .unwrap()
    };
    assert_eq!(build().params(), build().params());
}
