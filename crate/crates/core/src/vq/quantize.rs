use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete codes for one motion stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u32>,
}

impl TokenSequence {
    /// Checks every token against a codebook of `size` entries.
    pub fn new(tokens: Vec<u32>, size: usize) -> Result<Self> {
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= size) {
            return Err(Error::TokenOutOfRange { token: t, size });
        }
        Ok(Self { tokens })
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.tokens
    }
}

/// Index of the nearest entry (squared L2); ties go to the lowest index.
///
/// `entries` is row-major `K × dim`.
pub fn nearest_code<T: Copy + Into<f64>>(entries: &[T], dim: usize, latent: &[T]) -> usize {
    debug_assert_eq!(latent.len(), dim);
    let mut best = (0, f64::INFINITY);
    for (k, e) in entries.chunks_exact(dim).enumerate() {
        let mut d = 0.0;
        for (a, b) in e.iter().zip(latent) {
            let diff = (*a).into() - (*b).into();
            d += diff * diff;
        }
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Quantizes each `dim`-wide row of `latents`.
pub fn quantize_rows<T: Copy + Into<f64>>(entries: &[T], latents: &[T], dim: usize) -> Result<Vec<u32>> {
    if dim == 0 || entries.is_empty() || entries.len() % dim != 0 || latents.len() % dim != 0 {
        return Err(Error::shape(format!(
            "codebook of {} values and latents of {} values do not split into rows of {dim}",
            entries.len(),
            latents.len()
        )));
    }
    latents
        .chunks_exact(dim)
        .map(|row| {
            if row.iter().any(|v| !(*v).into().is_finite()) {
                return Err(Error::Divergence("non-finite latent".into()));
            }
            Ok(nearest_code(entries, dim, row) as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_cases() {
        let cb = [0.0f32, 0.0, 1.0, 1.0];
        assert_eq!(nearest_code(&cb, 2, &[0.1, 0.2]), 0);
        assert_eq!(nearest_code(&cb, 2, &[0.5, 0.5]), 0);
        assert_eq!(nearest_code(&cb, 2, &[0.9, 0.6]), 1);
        let mut six = vec![0.0f32; 12];
        six[10] = 3.0;
        six[11] = -1.0;
        assert_eq!(nearest_code(&six, 2, &[3.0, -1.0]), 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(quantize_rows(&[0.0f32, 1.0], &[f32::NAN, 0.0], 2).is_err());
        assert!(quantize_rows(&[0.0f32, 1.0, 2.0], &[0.0, 0.0], 2).is_err());
        assert!(matches!(
            TokenSequence::new(vec![0, 4], 4),
            Err(Error::TokenOutOfRange { token: 4, size: 4 })
        ));
    }
}
