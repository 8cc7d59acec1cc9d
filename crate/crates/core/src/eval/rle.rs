//! Uncompressed binary RLE: alternating run lengths over row-major pixels,
//! starting with a (possibly empty) background run.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<usize>,
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = 0u8;
    let mut run = 0usize;
    for &px in &mask.data {
        let px = u8::from(px != 0);
        if px == current {
            run += 1;
        } else {
            counts.push(run);
            current = px;
            run = 1;
        }
    }
    counts.push(run);
    RleMask {
        height: mask.height,
        width: mask.width,
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask, EvalError> {
    let expected = rle.height * rle.width;
    let total = rle
        .counts
        .iter()
        .try_fold(0usize, |acc, &c| acc.checked_add(c))
        .unwrap_or(usize::MAX);
    if total != expected {
        return Err(EvalError::CorruptMask {
            expected,
            got: total,
        });
    }
    let mut data = Vec::with_capacity(expected);
    for (i, &run) in rle.counts.iter().enumerate() {
        data.extend(std::iter::repeat_n((i % 2) as u8, run));
    }
    Ok(BinaryMask {
        height: rle.height,
        width: rle.width,
        data,
    })
}

impl RleMask {
    pub fn decode(&self) -> Result<BinaryMask, EvalError> {
        rle_decode(self)
    }

    /// Number of foreground pixels, without decoding.
    pub fn area(&self) -> usize {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn background_first_convention() {
        assert_eq!(rle_encode(&BinaryMask::zeros(3, 3)).counts, vec![9]);
        let ones = BinaryMask::from_vec(3, 3, vec![1; 9]).unwrap();
        assert_eq!(rle_encode(&ones).counts, vec![0, 9]);
        let m = BinaryMask::from_vec(2, 3, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let rle = rle_encode(&m);
        assert_eq!(rle.counts, vec![1, 2, 2, 1]);
        assert_eq!(rle.area(), 3);
    }

    #[test]
    fn wrong_total_is_corrupt() {
        let rle = RleMask {
            height: 2,
            width: 2,
            counts: vec![1, 2],
        };
        assert!(matches!(
            rle_decode(&rle),
            Err(EvalError::CorruptMask {
                expected: 4,
                got: 3
            })
        ));
        let overflow = RleMask {
            height: 1,
            width: 1,
            counts: vec![usize::MAX, 2],
        };
        assert!(rle_decode(&overflow).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn roundtrip_is_exact(h in 0usize..12, w in 0usize..12, bits in prop::collection::vec(0u8..2, 144)) {
            let mask = BinaryMask::from_vec(h, w, bits[..h * w].to_vec()).unwrap();
            let rle = rle_encode(&mask);
            prop_assert_eq!(rle.counts.iter().sum::<usize>(), h * w);
            prop_assert_eq!(rle_decode(&rle).unwrap(), mask);
        }
    }
}
