//! Shared numerical substrate: tokenization, the pooled `F` encoder,
//! LogSumExp / softmax cross-entropy, SGD with norm clipping, finite
//! difference gradient checking and the checkpoint file format.

mod checkpoint;
mod encoder;
mod gradcheck;
mod numeric;
mod optim;
mod vocab;

pub use checkpoint::{write_file, Checkpoint, NamedArray, CHECKPOINT_FORMAT_VERSION};
pub use encoder::{f_backward, f_encode, Encoded, InitConfig, ScorerParams};
pub use gradcheck::{flatten, grad_check, unflatten};
pub use numeric::{logsumexp, logsumexp_grad, softmax, softmax_cross_entropy};
pub use optim::{optimizer_step, SgdConfig, StepInfo};
pub use vocab::{detokenize, tokenize, TokenSeq, Vocabulary};
pub use vocab::{
    CONTRADICTION, ENTAILMENT, EOS, EXP, HYPOTHESIS, NEUTRAL, PAD, PREMISE, SEP, SPECIAL_TOKENS,
    UNK,
};

/// Anything holding named parameter arrays. The optimizer, the gradient
/// checker and the checkpoint writer all go through this.
pub trait Params {
    /// (name, shape, values) in a fixed order.
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])>;
    /// Mutable views in the same order as [`Params::arrays`].
    fn arrays_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.arrays().iter().map(|(_, _, a)| a.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, _, a)| a.iter().all(|x| x.is_finite()))
    }

    /// Order-sensitive checksum over the raw bits of every value.
    fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        for (name, _, a) in self.arrays() {
            bytes.extend_from_slice(name.as_bytes());
            for x in a {
                bytes.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        crate::seed::sha256_hex(&bytes)
    }
}
