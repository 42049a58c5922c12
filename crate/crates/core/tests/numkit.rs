use espd_core::numkit::{AdamConfig, AdamState, MlpParams, SeededRng};
use proptest::prelude::*;

/// Batch loss recomputed from forward passes only.
fn loss(net: &MlpParams, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = net.forward(x).unwrap();
        total += out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
    }
    total / xs.len() as f64
}

fn random_batch(rng: &mut SeededRng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(
        seed in any::<u64>(),
        input in 1usize..6,
        h1 in 1usize..12,
        h2 in 1usize..12,
        output in 1usize..4,
        batch in 1usize..6,
    ) {
        let mut rng = SeededRng::new(seed);
        let mut net = MlpParams::init(&[input, h1, h2, output], &mut rng).unwrap();
        let xs = random_batch(&mut rng, batch, input);
        let ys = random_batch(&mut rng, batch, output);
        let (grads, l) = net.grad(&xs, &ys).unwrap();
        prop_assert!((l - loss(&net, &xs, &ys)).abs() < 1e-12);
        let h = 1e-5;
        for i in 0..net.num_params() {
            let orig = net.as_slice()[i];
            net.as_mut_slice()[i] = orig + h;
            let up = loss(&net, &xs, &ys);
            net.as_mut_slice()[i] = orig - h;
            let down = loss(&net, &xs, &ys);
            net.as_mut_slice()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (grads[i] - fd).abs();
            let scale = grads[i].abs().max(fd.abs());
            prop_assert!(err <= 1e-6 || err <= 1e-4 * scale, "param {i}: {} vs {fd}", grads[i]);
        }
    }
}

#[test]
fn adam_fits_least_squares_slope() {
    let mut rng = SeededRng::new(11);
    let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.uniform(-2.0, 2.0)]).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![1.7 * x[0] - 0.3 + 0.2 * rng.standard_normal()])
        .collect();
    // Closed-form ordinary least squares.
    let n = xs.len() as f64;
    let mx = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let my = ys.iter().map(|y| y[0]).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x[0] - mx) * (y[0] - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x[0] - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mut net = MlpParams::zeros(&[1, 1]).unwrap();
    let cfg = AdamConfig { learning_rate: 1e-2, ..Default::default() };
    let mut opt = AdamState::for_params(&net, cfg);
    for _ in 0..5000 {
        let (g, _) = net.grad(&xs, &ys).unwrap();
        opt.step(&mut net, &g).unwrap();
    }
    assert!((net.weights(0)[0] - slope).abs() < 1e-3, "{} vs {slope}", net.weights(0)[0]);
    assert!((net.biases(0)[0] - intercept).abs() < 1e-3);
}

#[test]
fn gaussian_streams_are_reproducible() {
    let draw = |seed| SeededRng::derive(seed, 3).gaussian_vec(64, 0.5).unwrap();
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}
