use crate::error::{CavcError, Result};
use crate::rng::rng_from_seed;
use rand::seq::SliceRandom;
use serde::Serialize;

/// |X|·⌈log₂ n⌉.
pub fn training_length(nx: usize, n: usize) -> usize {
    nx * ceil_log2(n)
}

fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// ⌈log₂ n⌉ copies of each input symbol in increasing order.
pub fn training_sequence(nx: usize, n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(CavcError::Config(format!("training needs n >= 2, got {n}")));
    }
    if nx == 0 {
        return Err(CavcError::Config("empty input alphabet".into()));
    }
    let reps = ceil_log2(n);
    Ok((0..nx).flat_map(|a| std::iter::repeat(a).take(reps)).collect())
}

/// A payload and a training block, concatenated and shuffled by
/// `permutation`: logical position i is sent at position `permutation[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransmissionFrame {
    pub permutation: Vec<usize>,
    pub payload_len: usize,
    pub training_len: usize,
}

impl TransmissionFrame {
    pub fn identity(payload_len: usize, training_len: usize) -> Self {
        TransmissionFrame {
            permutation: (0..payload_len + training_len).collect(),
            payload_len,
            training_len,
        }
    }

    /// Uniformly random permutation of the n + L positions.
    pub fn random(payload_len: usize, training_len: usize, seed: u64) -> Self {
        let mut permutation: Vec<usize> = (0..payload_len + training_len).collect();
        permutation.shuffle(&mut rng_from_seed(seed));
        TransmissionFrame {
            permutation,
            payload_len,
            training_len,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// Moves a logically ordered sequence to transmission order.
    pub fn scatter<T: Copy + Default>(&self, logical: &[T]) -> Result<Vec<T>> {
        self.check(logical.len())?;
        let mut out = vec![T::default(); logical.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            out[p] = logical[i];
        }
        Ok(out)
    }

    /// Inverse of [`TransmissionFrame::scatter`].
    pub fn gather<T: Copy>(&self, sent: &[T]) -> Result<Vec<T>> {
        self.check(sent.len())?;
        Ok(self.permutation.iter().map(|&p| sent[p]).collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(CavcError::LengthMismatch { expected: self.len(), got: len });
        }
        Ok(())
    }
}

/// Concatenates `codeword` and `training` and shuffles them with a
/// permutation drawn from `seed`. Returns the frame and the sequence to send.
pub fn frame_encode(codeword: &[usize], training: &[usize], seed: u64) -> Result<(TransmissionFrame, Vec<usize>)> {
    let frame = TransmissionFrame::random(codeword.len(), training.len(), seed);
    let logical: Vec<usize> = codeword.iter().chain(training).copied().collect();
    let sent = frame.scatter(&logical)?;
    Ok((frame, sent))
}

/// Splits a received block back into (payload part, training part).
pub fn frame_decode(received: &[usize], frame: &TransmissionFrame) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut logical = frame.gather(received)?;
    let training = logical.split_off(frame.payload_len);
    Ok((logical, training))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn training_examples() {
        assert_eq!(training_sequence(2, 8).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(training_sequence(2, 9).unwrap().len(), 8);
        assert_eq!(training_sequence(3, 4).unwrap(), vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(training_length(3, 4), 6);
        assert!(training_sequence(2, 1).is_err());
    }

    #[test]
    fn identity_frame_is_verbatim() {
        let f = TransmissionFrame::identity(3, 2);
        let (p, t) = frame_decode(&[4, 5, 6, 7, 8], &f).unwrap();
        assert_eq!(p, vec![4, 5, 6]);
        assert_eq!(t, vec![7, 8]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let f = TransmissionFrame::identity(3, 2);
        assert!(matches!(frame_decode(&[1, 2], &f), Err(CavcError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(seed in 0u64..10_000, n in 2usize..40) {
            let codeword: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 3).collect();
            let training = training_sequence(3, n).unwrap();
            let (frame, sent) = frame_encode(&codeword, &training, seed).unwrap();
            let (p, t) = frame_decode(&sent, &frame).unwrap();
            prop_assert_eq!(p, codeword);
            prop_assert_eq!(t, training);
            let mut sorted = frame.permutation.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..frame.len()).collect::<Vec<_>>());
        }
    }
}
