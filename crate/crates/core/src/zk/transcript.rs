use super::ZkError;
use crate::field::FieldElement;

/// Ordered prover-to-verifier field elements of one session
/// (authentication corrections and openings).
///
/// Wire form: element count as `u32` LE, then each element as a `u64` LE word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZkTranscript(pub Vec<FieldElement>);

impl ZkTranscript {
    pub fn push(&mut self, e: FieldElement) {
        self.0.push(e);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.0.len());
        out.extend_from_slice(&(self.0.len() as u32).to_le_bytes());
        for e in &self.0 {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ZkError> {
        let (len, rest) = bytes
            .split_first_chunk::<4>()
            .ok_or(ZkError::MalformedTranscript)?;
        let len = u32::from_le_bytes(*len) as usize;
        if rest.len() != 8 * len {
            return Err(ZkError::MalformedTranscript);
        }
        rest.chunks_exact(8)
            .map(|w| {
                FieldElement::from_le_bytes(w.try_into().expect("8-byte chunk"))
                    .ok_or(ZkError::MalformedTranscript)
            })
            .collect::<Result<_, _>>()
            .map(ZkTranscript)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_length_prefixed_le_words() {
        let t = ZkTranscript(vec![FieldElement::new(1), FieldElement::new(0x0102)]);
        let b = t.to_bytes();
        assert_eq!(&b[..4], &[2, 0, 0, 0]);
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[12..14], &[2, 1]);
    }

    #[test]
    fn truncated_or_padded_input_rejected() {
        let b = ZkTranscript(vec![FieldElement::new(5)]).to_bytes();
        assert!(ZkTranscript::from_bytes(&b[..b.len() - 1]).is_err());
        let mut padded = b.clone();
        padded.push(0);
        assert!(ZkTranscript::from_bytes(&padded).is_err());
        assert!(ZkTranscript::from_bytes(&[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(words in proptest::collection::vec(0u64..crate::field::MODULUS, 0..64)) {
            let t = ZkTranscript(words.into_iter().map(FieldElement::new).collect());
            prop_assert_eq!(ZkTranscript::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
