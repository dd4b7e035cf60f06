//! Bit-packed ±1 sequences.
//!
//! Bit `t` set means the value at site `t` is `+1`; clear means `−1`.  Bits
//! past `k` in the last word are always zero so whole-word operations stay
//! exact.

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSeq {
    k: usize,
    words: Vec<u64>,
}

impl BitSeq {
    /// All sites `−1`.
    pub fn minus_ones(k: usize) -> Self {
        BitSeq { k, words: vec![0; k.div_ceil(64)] }
    }

    /// All sites `+1`.
    pub fn plus_ones(k: usize) -> Self {
        let mut s = BitSeq { k, words: vec![u64::MAX; k.div_ceil(64)] };
        s.clear_tail();
        s
    }

    pub fn from_signs(values: &[i8]) -> Self {
        let mut s = BitSeq::minus_ones(values.len());
        for (t, &v) in values.iter().enumerate() {
            if v > 0 {
                s.words[t / 64] |= 1 << (t % 64);
            }
        }
        s
    }

    /// Wraps raw words; bits beyond `k` are cleared.
    pub fn from_words(k: usize, mut words: Vec<u64>) -> Self {
        words.resize(k.div_ceil(64), 0);
        let mut s = BitSeq { k, words };
        s.clear_tail();
        s
    }

    fn clear_tail(&mut self) {
        let r = self.k % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, t: usize) -> i8 {
        if self.words[t / 64] >> (t % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn set(&mut self, t: usize, v: i8) {
        let bit = 1u64 << (t % 64);
        if v > 0 {
            self.words[t / 64] |= bit;
        } else {
            self.words[t / 64] &= !bit;
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.k).map(|t| self.get(t)).collect()
    }

    /// Number of `+1` sites.
    pub fn count_plus(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Σ_t a_t b_t.  Panics on length mismatch.
    pub fn dot(&self, other: &BitSeq) -> i64 {
        assert_eq!(self.k, other.k, "sequence length mismatch");
        let disagree: u64 = self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as u64).sum();
        self.k as i64 - 2 * disagree as i64
    }

    /// Site-wise product with `mask` interpreted as a flip pattern
    /// (bit set = flip).
    pub fn flipped(&self, mask: &[u64]) -> BitSeq {
        let words = self.words.iter().zip(mask).map(|(a, m)| a ^ m).collect();
        BitSeq::from_words(self.k, words)
    }
}
