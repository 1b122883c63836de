use eiie::autodiff::{gradient_check, AdamState, GraphBuilder, ParamSet, Tensor};
use eiie::portfolio::CommissionSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn convolution_tanh_softmax_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ParamSet::new();
    let w = params.add("w", random(&[2, 3, 3], &mut rng, 0.5)).unwrap();
    let b = params.add("b", random(&[2], &mut rng, 0.5)).unwrap();
    let mut g = GraphBuilder::new();
    let x = g.input("x", &[2, 3, 4, 6]);
    let (wn, bn) = (g.param(&params, w), g.param(&params, b));
    let h = g.conv(x, wn, bn).unwrap();
    let h = g.tanh(h);
    let h = g.reshape(h, &[2, 2 * 4 * 4]).unwrap();
    let s = g.softmax(h).unwrap();
    let l = g.log(s);
    let loss = g.mean(l);
    let graph = g.build();
    let input = random(&[2, 3, 4, 6], &mut rng, 1.0);
    let report = gradient_check(&graph, &params, &[&input], loss, 1e-6, 1e-6).unwrap();
    assert!(report.passed(), "max relative error {}", report.max_relative_error());
}

#[test]
fn recurrent_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (d, h) = (3, 4);
    let mut params = ParamSet::new();
    let wx = params.add("wx", random(&[4 * h, d], &mut rng, 0.5)).unwrap();
    let wh = params.add("wh", random(&[4 * h, h], &mut rng, 0.5)).unwrap();
    let b = params.add("b", random(&[4 * h], &mut rng, 0.5)).unwrap();
    let rx = params.add("rx", random(&[h, d], &mut rng, 0.5)).unwrap();
    let rh = params.add("rh", random(&[h, h], &mut rng, 0.5)).unwrap();
    let rb = params.add("rb", random(&[h], &mut rng, 0.5)).unwrap();
    let mut g = GraphBuilder::new();
    let xs: Vec<_> = (0..3).map(|i| g.input(&format!("x{i}"), &[2, d])).collect();
    let h0 = g.input("h0", &[2, h]);
    let (wxn, whn, bn) = (g.param(&params, wx), g.param(&params, wh), g.param(&params, b));
    let (rxn, rhn, rbn) = (g.param(&params, rx), g.param(&params, rh), g.param(&params, rb));
    let (mut hl, mut cl, mut hr) = (h0, h0, h0);
    for &x in &xs {
        (hl, cl) = g.lstm_cell(x, hl, cl, wxn, whn, bn).unwrap();
        hr = g.rnn_cell(x, hr, rxn, rhn, rbn).unwrap();
    }
    let both = g.mul(hl, hr).unwrap();
    let loss = g.sum_squares(both);
    let graph = g.build();
    let inputs: Vec<Tensor> = (0..3).map(|_| random(&[2, d], &mut rng, 1.0)).chain([Tensor::zeros(&[2, h])]).collect();
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let report = gradient_check(&graph, &params, &refs, loss, 1e-6, 1e-6).unwrap();
    assert!(report.passed(), "max relative error {}", report.max_relative_error());
}

#[test]
fn portfolio_ops_exact_and_surrogate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let a = params.add("a", random(&[3, 4], &mut rng, 1.0)).unwrap();
    let z = params.add("z", random(&[3, 4], &mut rng, 1.0)).unwrap();
    let mut g = GraphBuilder::new();
    let y = g.input("y", &[3, 4]);
    let (an, zn) = (g.param(&params, a), g.param(&params, z));
    let w_prev = g.softmax(an).unwrap();
    let w = g.softmax(zn).unwrap();
    let drifted = g.evolve(w_prev, y).unwrap();
    let mu = g.remainder(drifted, w, CommissionSchedule::new(0.01, 0.0025).unwrap()).unwrap();
    let mu_fast = g.remainder_approx(drifted, w, 0.0025).unwrap();
    let both = g.mul(mu, mu_fast).unwrap();
    let l = g.log(both);
    let loss = g.mean(l);
    let graph = g.build();
    let ys = Tensor::new(vec![3, 4], (0..12).map(|i| if i % 4 == 0 { 1.0 } else { rng.random_range(0.8..1.2) }).collect()).unwrap();
    let report = gradient_check(&graph, &params, &[&ys], loss, 1e-6, 1e-6).unwrap();
    assert!(report.passed(), "max relative error {}", report.max_relative_error());
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    // with bias correction the first update is lr·g/(|g|+ε) per coordinate
    let mut params = ParamSet::new();
    let p = params.add("p", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    let mut g = GraphBuilder::new();
    let pn = g.param(&params, p);
    let loss = g.sum_squares(pn);
    let graph = g.build();
    let (_, grads, _) = graph.value_and_grad(&params, &[], loss).unwrap();
    assert_eq!(grads.get(p).data(), &[2.0, -4.0, 1.0]);
    let mut adam = AdamState::new(&params);
    adam.step(&mut params, &grads, 0.01);
    for (after, before) in params.get(p).data().iter().zip([1.0, -2.0, 0.5]) {
        assert!((before - after - 0.01 * f64::signum(before)).abs() < 1e-9);
    }
    assert_eq!(adam.step_count(), 1);
}
