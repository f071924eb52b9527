//! Model compression: magnitude pruning with a polynomial-decay sparsity
//! schedule, symmetric per-tensor INT8 post-training quantization and the
//! integer inference path.

mod prune;
mod quant;

pub use prune::{
    prune_magnitude, prune_with_finetune, target_sparsity, PruneEvent, PruneSchedule, PruneTrace,
};
pub use quant::{
    calibrate_activations, dequantize_value, infer_int8, quantize_ptq, quantize_value,
    ActivationRanges, QuantParams, QuantizedModel, DEFAULT_CALIBRATION_SAMPLES,
};
