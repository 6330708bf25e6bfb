use admitsim_autograd::{Graph, ParamStore, Tensor};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn shaped() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..8, 1usize..10).prop_flat_map(|(r, c)| matrix(r, c))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in shaped(), mask_bits in prop::collection::vec(any::<bool>(), 10)) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let cols = x.cols();
        let mut mask = mask_bits[..cols].to_vec();
        mask[0] = true;
        let v = g.input(x.clone());
        let s = g.masked_softmax(v, Some(&mask)).unwrap();
        let out = g.value(s);
        for r in 0..out.rows() {
            let row = out.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (c, &p) in row.iter().enumerate() {
                prop_assert!(p >= 0.0);
                if !mask[c] {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn layer_norm_rows_have_zero_mean(x in (1usize..6, 2usize..10).prop_flat_map(|(r, c)| matrix(r, c))) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let cols = x.cols();
        let v = g.input(x);
        let gain = g.input(Tensor::matrix(1, cols, vec![1.0; cols]).unwrap());
        let bias = g.input(Tensor::zeros(vec![1, cols]));
        let y = g.layer_norm(v, gain, bias, 1e-9).unwrap();
        let out = g.value(y);
        for r in 0..out.rows() {
            let mean = out.row(r).iter().sum::<f64>() / cols as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn matmul_nt_is_matmul_with_transpose(
        (a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(n, k)))
    ) {
        let (n, k) = (b.rows(), b.cols());
        let bt: Vec<f64> = (0..k).flat_map(|c| (0..n).map(move |r| (r, c))).map(|(r, c)| b.get(r, c)).collect();
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let (va, vb) = (g.input(a.clone()), g.input(b));
        let vt = g.input(Tensor::matrix(k, n, bt).unwrap());
        let x = g.matmul_nt(va, vb).unwrap();
        let y = g.matmul(va, vt).unwrap();
        prop_assert_eq!(g.value(x).data(), g.value(y).data());
    }

    #[test]
    fn sigmoid_is_bounded_and_symmetric(x in shaped()) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let v = g.input(x.clone());
        let neg = g.scale(v, -1.0);
        let (s, t) = (g.sigmoid(v), g.sigmoid(neg));
        for (p, q) in g.value(s).data().iter().zip(g.value(t).data()) {
            prop_assert!((0.0..=1.0).contains(p));
            prop_assert!((p + q - 1.0).abs() < 1e-12);
        }
    }
}
