use advfilter::rng::SplitMix64;
use advfilter::tinynet::{self, ModelInput, ModelParams, CLASSES, INPUT_LEN, INPUT_SIZE};

/// Direct six-loop convolution with explicit zero padding.
fn naive_conv(input: &[f64], in_c: usize, size: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_c = b.len();
    let mut out = vec![0.0; out_c * size * size];
    for o in 0..out_c {
        for y in 0..size {
            for x in 0..size {
                let mut acc = b[o];
                for i in 0..in_c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as i64 + ky as i64 - 1;
                            let sx = x as i64 + kx as i64 - 1;
                            if sy < 0 || sx < 0 || sy >= size as i64 || sx >= size as i64 {
                                continue;
                            }
                            acc += w[((o * in_c + i) * 3 + ky) * 3 + kx]
                                * input[(i * size + sy as usize) * size + sx as usize];
                        }
                    }
                }
                out[(o * size + y) * size + x] = acc;
            }
        }
    }
    out
}

fn naive_relu_pool(input: &[f64], channels: usize, size: usize) -> Vec<f64> {
    let half = size / 2;
    let mut out = vec![0.0; channels * half * half];
    for c in 0..channels {
        for y in 0..half {
            for x in 0..half {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += input[(c * size + 2 * y + dy) * size + 2 * x + dx].max(0.0);
                    }
                }
                out[(c * half + y) * half + x] = s / 4.0;
            }
        }
    }
    out
}

fn naive_logits(p: &ModelParams, x: &[f64]) -> Vec<f64> {
    let a = naive_relu_pool(&naive_conv(x, 3, 64, &p.conv1_w, &p.conv1_b), 8, 64);
    let b = naive_relu_pool(&naive_conv(&a, 8, 32, &p.conv2_w, &p.conv2_b), 16, 32);
    (0..CLASSES)
        .map(|k| {
            p.dense_b[k]
                + (0..b.len())
                    .map(|j| p.dense_w[k * b.len() + j] * b[j])
                    .sum::<f64>()
        })
        .collect()
}

fn random_input(seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..INPUT_LEN).map(|_| rng.uniform(0.0, 1.0)).collect()
}

#[test]
fn forward_matches_naive_oracle() {
    for seed in [1u64, 42, 9001] {
        let mut p = ModelParams::init(seed);
        let mut rng = SplitMix64::new(seed + 7);
        for b in p
            .conv1_b
            .iter_mut()
            .chain(&mut p.conv2_b)
            .chain(&mut p.dense_b)
        {
            *b = rng.uniform(-0.1, 0.1);
        }
        let x = random_input(seed * 3);
        let want = naive_logits(&p, &x);
        let got = tinynet::forward(&p, &ModelInput::new(x).unwrap());
        for (g, w) in got.logits.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
        }
        let sum: f64 = got.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn input_gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..5u64 {
        let p = ModelParams::init(seed);
        let x = random_input(100 + seed);
        let mut rng = SplitMix64::new(200 + seed);
        let target = rng.below(CLASSES);
        let (_, grad) =
            tinynet::loss_and_input_grad(&p, &ModelInput::new(x.clone()).unwrap(), target).unwrap();
        let loss = |v: Vec<f64>| {
            tinynet::cross_entropy(
                &tinynet::forward(&p, &ModelInput::from_raw(v).unwrap()).logits,
                target,
            )
        };
        for _ in 0..64 {
            let i = rng.below(INPUT_LEN);
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let numeric = (loss(a) - loss(b)) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel <= 1e-3,
                "seed {seed} coord {i}: analytic {} numeric {numeric}",
                grad[i]
            );
        }
    }
}

#[test]
fn frame_resampling_preserves_constant_images() {
    let f = advfilter::Frame::filled(0, 100, 37, 0.3).unwrap();
    let t = ModelInput::from_frame(&f);
    assert_eq!(t.tensor().len(), 3 * INPUT_SIZE * INPUT_SIZE);
    assert!(t.tensor().iter().all(|v| (v - 0.3).abs() < 1e-12));
}
