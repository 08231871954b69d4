use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Frame positions hidden from the role encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMap {
    masked: Vec<usize>,
    len: usize,
    percent: f64,
}

impl MaskMap {
    pub fn none(len: usize) -> Self {
        Self {
            masked: Vec::new(),
            len,
            percent: 0.0,
        }
    }

    pub fn full(len: usize) -> Self {
        Self {
            masked: (0..len).collect(),
            len,
            percent: 100.0,
        }
    }

    pub fn masked_indices(&self) -> &[usize] {
        &self.masked
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn percent(&self) -> f64 {
        self.percent
    }

    pub fn is_masked(&self, t: usize) -> bool {
        self.masked.binary_search(&t).is_ok()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&t| !self.is_masked(t)).collect()
    }

    /// Token `i` covers frames `[i*w, (i+1)*w)`; it is a target iff any of them is masked.
    pub fn token_targets(&self, stride: usize) -> Vec<bool> {
        let n = self.len.div_ceil(stride);
        let mut out = vec![false; n];
        for &t in &self.masked {
            out[t / stride] = true;
        }
        out
    }
}

/// Number of frames masked at `percent` of `len`, rounding half to even.
pub fn masked_count(len: usize, percent: f64) -> usize {
    (percent * len as f64 / 100.0).round_ties_even() as usize
}

/// Samples `round(p/100 * len)` distinct frames uniformly without replacement.
pub fn uniform_mask(len: usize, percent: f64, seed: u64) -> Result<MaskMap> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::invalid(format!("mask percentage {percent} outside [0, 100]")));
    }
    if len == 0 {
        return Err(Error::invalid("cannot mask an empty sequence"));
    }
    let k = masked_count(len, percent);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = rand::seq::index::sample(&mut rng, len, k).into_vec();
    masked.sort_unstable();
    Ok(MaskMap {
        masked,
        len,
        percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_full() {
        assert!(uniform_mask(10, 0.0, 1).unwrap().is_empty());
        assert_eq!(
            uniform_mask(10, 100.0, 99).unwrap().masked_indices(),
            (0..10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn golden_seed_7() {
        let m = uniform_mask(100, 30.0, 7).unwrap();
        assert_eq!(m.masked_indices().len(), 30);
        assert_eq!(m, uniform_mask(100, 30.0, 7).unwrap());
        assert_eq!(
            m.masked_indices(),
            &[
                0, 5, 8, 10, 13, 14, 15, 16, 17, 18, 20, 29, 30, 32, 41, 43, 44, 45, 48, 53, 57, 62,
                63, 71, 74, 85, 86, 91, 98, 99
            ]
        );
    }

    #[test]
    fn cardinality_grid() {
        for len in 1..=200 {
            for step in 0..=10 {
                let p = step as f64 * 10.0;
                let m = uniform_mask(len, p, len as u64 * 31 + step).unwrap();
                // Exact integer half-to-even rounding of step*10*len/100.
                let n = step as usize * 10 * len;
                let (q, r) = (n / 100, n % 100);
                let expected = if r > 50 || (r == 50 && q % 2 == 1) { q + 1 } else { q };
                assert_eq!(m.masked_indices().len(), expected);
                assert!(m.masked_indices().windows(2).all(|w| w[0] < w[1]));
                assert!(m.masked_indices().iter().all(|&i| i < len));
            }
        }
    }

    #[test]
    fn half_rounds_to_even() {
        assert_eq!(masked_count(5, 10.0), 0);
        assert_eq!(masked_count(15, 10.0), 2);
        assert_eq!(masked_count(25, 10.0), 2);
    }

    #[test]
    fn rejects_out_of_range_percent() {
        assert!(uniform_mask(10, -1.0, 0).is_err());
        assert!(uniform_mask(10, 100.5, 0).is_err());
    }

    #[test]
    fn token_targets_cover_windows() {
        let m = MaskMap {
            masked: vec![1, 4],
            len: 6,
            percent: 33.3,
        };
        assert_eq!(m.token_targets(2), vec![true, false, true]);
        assert_eq!(m.visible_indices(), vec![0, 2, 3, 5]);
    }
}
