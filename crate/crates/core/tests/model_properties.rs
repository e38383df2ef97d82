use lacuna_core::masking::{MaskDistribution, MaskPolicy, MaskedSample, Remask};
use lacuna_core::model::{
    mlm_loss, train, Activation, Batch, MaskedBatch, Model, ModelConfig, TrainConfig,
};
use lacuna_core::vocab::{Id, MASK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        embedding_dim: 6,
        hidden_dim: 7,
        projection_dim: 5,
        layers: 2,
        bidirectional: true,
        projection_activation: Activation::Tanh,
    }
}

fn random_seqs(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Id>> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..15);
            (0..len).map(|_| rng.random_range(2..12)).collect()
        })
        .collect()
}

#[test]
fn every_row_is_a_distribution() {
    let m = Model::<f32>::init(config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seqs = random_seqs(6, &mut rng);
    let batch = Batch::new(&seqs);
    let lp = m.forward(&batch).unwrap();
    for (b, s) in seqs.iter().enumerate() {
        for t in 0..s.len() {
            let total: f32 = lp.at(b, t).iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-5, "row ({b},{t}) sums to {total}");
        }
    }
}

#[test]
fn identical_rows_give_identical_outputs() {
    let m = Model::<f32>::init(config(), 2).unwrap();
    let seq: Vec<Id> = vec![3, 4, MASK, 5, 6, 7];
    let lp = m.forward(&Batch::new(&[seq.clone(), seq.clone()])).unwrap();
    for t in 0..seq.len() {
        assert_eq!(lp.at(0, t), lp.at(1, t));
    }
}

#[test]
fn batch_order_does_not_matter() {
    let m = Model::<f32>::init(config(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seqs = random_seqs(5, &mut rng);
    let perm = [3usize, 0, 4, 1, 2];
    let permuted: Vec<Vec<Id>> = perm.iter().map(|&i| seqs[i].clone()).collect();
    let a = m.forward(&Batch::new(&seqs)).unwrap();
    let b = m.forward(&Batch::new(&permuted)).unwrap();
    for (pb, &orig) in perm.iter().enumerate() {
        for t in 0..seqs[orig].len() {
            for (x, y) in a.at(orig, t).iter().zip(b.at(pb, t).iter()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn loss_ignores_unmasked_targets() {
    let m = Model::<f64>::init(config(), 4).unwrap();
    let sample = MaskedSample {
        input_ids: vec![3, MASK, 5, MASK, 7],
        target_ids: vec![3, 4, 5, 6, 7],
        mask_positions: vec![1, 3],
        epoch_tag: 0,
    };
    let mut other = sample.clone();
    other.target_ids[0] = 9;
    other.target_ids[2] = 10;
    other.target_ids[4] = 11;
    let lp = m
        .forward(&Batch::new(std::slice::from_ref(&sample.input_ids)))
        .unwrap();
    let a = mlm_loss(&lp, &[&sample]).unwrap();
    let b = mlm_loss(&lp, &[&other]).unwrap();
    assert_eq!(a, b);
    assert_eq!(m.loss(&MaskedBatch::new(&[&sample]).unwrap()).unwrap(), a);
}

#[test]
fn zero_output_weights_give_uniform_loss() {
    let mut m = Model::<f64>::init(config(), 5).unwrap();
    m.params.out_w.fill(0.0);
    m.params.out_b.fill(0.0);
    let sample = MaskedSample {
        input_ids: vec![3, MASK, MASK, 6],
        target_ids: vec![3, 4, 9, 6],
        mask_positions: vec![1, 2],
        epoch_tag: 0,
    };
    let loss = m.loss(&MaskedBatch::new(&[&sample]).unwrap()).unwrap();
    assert!((loss - 12f64.ln()).abs() < 1e-12);
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let train_split = random_seqs(40, &mut rng);
    let dev_split = random_seqs(8, &mut rng);
    let policy = MaskPolicy::new(MaskDistribution::Random, Remask::Dynamic, 6);
    let cfg = TrainConfig {
        max_epochs: 1,
        batch_size: 8,
        seed: 6,
        ..TrainConfig::default()
    };
    let run = || {
        let mut log = Vec::new();
        let out = train(
            &train_split,
            &dev_split,
            &policy,
            &config(),
            &cfg,
            &mut |r| log.push(r.clone()),
        )
        .unwrap();
        (out.model, log)
    };
    let (m1, log1) = run();
    let (m2, log2) = run();
    assert_eq!(m1, m2);
    assert_eq!(log1[1].train_loss, log2[1].train_loss);
    assert_eq!(log1[1].dev_loss, log2[1].dev_loss);
}
