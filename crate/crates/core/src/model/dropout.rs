use crate::numerics::Rng;

/// Inverted-dropout mask: each entry is 0 or `1 / (1 - rate)`.
#[derive(Debug, Clone)]
pub(crate) struct DropMask(Option<Vec<f64>>);

impl DropMask {
    pub fn identity() -> Self {
        DropMask(None)
    }

    pub fn sample(n: usize, rate: f64, rng: Option<&mut Rng>) -> Self {
        match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                DropMask(Some(
                    (0..n)
                        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
                        .collect(),
                ))
            }
            _ => DropMask(None),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.0 {
            None => x.to_vec(),
            Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        if let Some(m) = &self.0 {
            for (a, b) in x.iter_mut().zip(m) {
                *a *= b;
            }
        }
    }
}
