use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_mt::Mt64;

use mlpeq::complexity::{self, ModelFile, QuantLayout};
use mlpeq::compress::{calibrate_activations, infer_int8, prune_magnitude, quantize_ptq};
use mlpeq::neuralnet::{Activation, MlpModel};

fn inputs(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
    let mut rng = Mt64::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5f32..1.5))
}

#[test]
fn pruned_int8_model_survives_disk_round_trip() {
    let dims = [84, 64, 10, 64, 2];
    let dense = MlpModel::<f32>::glorot(&dims, Activation::Tanh, 3).unwrap();
    let pruned = prune_magnitude(&dense, 0.8).unwrap();
    let x = inputs(200, 84, 9);
    let ranges = calibrate_activations(&pruned, x.view(), 100).unwrap();
    let q = quantize_ptq(&pruned, &ranges).unwrap();
    let expected = infer_int8::<f32>(&q, x.view()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut sizes = Vec::new();
    for layout in [QuantLayout::Dense, QuantLayout::Sparse] {
        let path = dir.path().join(format!("{layout:?}.mlpz"));
        let bytes = complexity::serialize_quantized(&q, layout).unwrap();
        complexity::write_model(&path, &bytes).unwrap();
        assert_eq!(complexity::model_size(&path).unwrap(), bytes.len() as u64);
        sizes.push(bytes.len());
        let ModelFile::Quantized(back) = complexity::read_model(&path).unwrap() else {
            panic!("expected an INT8 model");
        };
        assert_eq!(back.int_weights, q.int_weights);
        assert_eq!(infer_int8::<f32>(&back, x.view()).unwrap(), expected);
    }
    assert!(sizes[1] < sizes[0], "sparse {} vs dense {}", sizes[1], sizes[0]);

    let path = dir.path().join("fp32.mlpz");
    complexity::write_model(&path, &complexity::serialize_dense(&pruned).unwrap()).unwrap();
    let ModelFile::Dense(back) = complexity::read_model(&path).unwrap() else {
        panic!("expected an FP32 model");
    };
    assert_eq!(back.forward(x.view()).unwrap(), pruned.forward(x.view()).unwrap());
    assert_eq!(back.sparsity(), pruned.sparsity());
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let model = MlpModel::<f32>::glorot(&[4, 3, 2], Activation::Tanh, 1).unwrap();
    let bytes = complexity::serialize_dense(&model).unwrap();
    assert!(complexity::deserialize_model(&bytes[..bytes.len() - 1]).is_err());
    assert!(complexity::deserialize_model(b"PK\x03\x04 not a model").is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(complexity::deserialize_model(&extra).is_err());
}
