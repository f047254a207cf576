use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparseload_nn::layers::{AttentionParams, Conv1d, Dense, EncoderLayer, LstmParams};
use sparseload_nn::{grad_check, Bound, Graph, ParamStore, Tensor, Var};

const DELTA: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Checks a layer by treating every parameter plus the input as a leaf; the
/// scalar is a fixed random projection of the layer output.
fn layer_check<F>(store: &ParamStore, input: Tensor, proj_shape: (usize, usize), seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph, &Bound, Var) -> sparseload_nn::Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let proj = random(&mut rng, proj_shape.0, proj_shape.1);
    let mut inputs: Vec<Tensor> = store.tensors().to_vec();
    inputs.push(input);
    let n = store.len();
    grad_check(
        &inputs,
        |g, vars| {
            let bound = Bound::from_vars(vars[..n].to_vec());
            let y = f(g, &bound, vars[n])?;
            g.dot(y, &proj)
        },
        DELTA,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dense_gradients(seed in any::<u64>(), batch in 1usize..4, inp in 1usize..6, out in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", inp, out, &mut rng);
        let x = random(&mut rng, batch, inp);
        let err = layer_check(&store, x, (batch, out), seed, |g, p, x| d.forward(g, p, x));
        prop_assert!(err < TOL, "rel err {err}");
    }

    #[test]
    fn conv_gradients(seed in any::<u64>(), batch in 1usize..3, len in 4usize..8, width in 1usize..4, cin in 1usize..3, cout in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = Conv1d::new(&mut store, "c", cin, cout, width, false, &mut rng);
        let x = random(&mut rng, batch * len, cin);
        let err = layer_check(&store, x, (batch * (len - width + 1), cout), seed, |g, p, x| {
            Ok(c.forward(g, p, x, batch, len)?.0)
        });
        prop_assert!(err < TOL, "rel err {err}");
    }

    #[test]
    fn lstm_gradients_five_steps(seed in any::<u64>(), batch in 1usize..3, d in 1usize..4, h in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = LstmParams::new(&mut store, "l", d, h, &mut rng);
        let x = random(&mut rng, batch * 5, d);
        let err = layer_check(&store, x, (batch, 5 * h), seed, |g, p, x| {
            let hs = l.sequence(g, p, x, batch, 5, false)?;
            g.concat_cols(&hs)
        });
        prop_assert!(err < TOL, "rel err {err}");
    }

    #[test]
    fn attention_gradients(seed in any::<u64>(), batch in 1usize..3, steps in 1usize..5, heads in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * heads;
        let mut store = ParamStore::new();
        let a = AttentionParams::new(&mut store, "a", d, heads, &mut rng);
        let z = random(&mut rng, batch * steps, d);
        let err = layer_check(&store, z, (batch * steps, d), seed, |g, p, z| a.forward(g, p, z, batch, steps));
        prop_assert!(err < TOL, "rel err {err}");
    }

    #[test]
    fn encoder_layer_gradients(seed in any::<u64>(), steps in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e = EncoderLayer::new(&mut store, "e", 4, 2, 6, 0.0, &mut rng);
        let z = random(&mut rng, 2 * steps, 4);
        let err = layer_check(&store, z, (2 * steps, 4), seed, |g, p, z| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            e.forward(g, p, z, 2, steps, &mut r)
        });
        prop_assert!(err < TOL, "rel err {err}");
    }

    #[test]
    fn mse_gradient(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random(&mut rng, 1, n);
        let target = random(&mut rng, 1, n);
        let err = grad_check(&[pred], |g, v| g.mse(v[0], &target), DELTA).unwrap();
        prop_assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn elementwise_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 3, 4);
        let w = random(&mut rng, 3, 8);
        let err = grad_check(&[a, b], |g, v| {
            let s = g.sigmoid(v[0])?;
            let t = g.tanh(v[1])?;
            let m = g.mul(s, t)?;
            let d = g.sub(m, v[1])?;
            let sm = g.softmax_rows(d)?;
            let c = g.concat_cols(&[sm, s])?;
            let c = g.scale(c, 1.7)?;
            g.dot(c, &w)
        }, DELTA).unwrap();
        prop_assert!(err < TOL, "rel err {err}");
    }
}

#[test]
fn bidirectional_with_zero_backward_weights_matches_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let bi = sparseload_nn::layers::BiLstm::new(&mut store, "b", 2, 3, &mut rng);
    let x = random(&mut rng, 6, 2);
    let mut g = Graph::new();
    let p = store.bind(&mut g).unwrap();
    let xv = g.leaf(x).unwrap();
    let both = bi.sequence(&mut g, &p, xv, 1, 6).unwrap();
    let fwd = bi.forward.sequence(&mut g, &p, xv, 1, 6, false).unwrap();
    for (b, f) in both.iter().zip(&fwd) {
        assert_eq!(&g.value(*b).data()[..3], g.value(*f).data());
    }
}
