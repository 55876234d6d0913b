use noma_deepsic::transformer::gradcheck::check_gradients;
use noma_deepsic::transformer::{Mat, TokenSequence, TransformerConfig, TransformerModel};
use noma_deepsic::SeededRng;

fn config(d_out: usize) -> TransformerConfig {
    TransformerConfig {
        seq_len: 5,
        d_model: 8,
        n_heads: 2,
        d_ff: 32,
        n_layers: 2,
        d_out,
        input_features: 4,
    }
}

#[test]
fn every_parameter_class_matches_central_differences() {
    for (seed, d_out) in [(1u64, 1usize), (2, 2)] {
        let cfg = config(d_out);
        let mut rng = SeededRng::new(seed, 0);
        let model = TransformerModel::new(cfg.clone(), &mut rng).unwrap();
        let seq = TokenSequence::new(Mat::from_fn(5, 4, |_, _| rng.standard_normal())).unwrap();
        let target: Vec<f64> = (0..d_out).map(|_| rng.normal(0.0, 2.0)).collect();
        let reports = check_gradients(&model, &seq, &target, 1e-5, 100, &mut rng).unwrap();
        assert_eq!(reports.len(), 16);
        for r in &reports {
            println!("d_out={d_out} {:8} coords={:4} max_rel={:.3e}", r.class, r.coordinates, r.max_relative_error);
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }
}
