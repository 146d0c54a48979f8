//! Seeded sampling of verification states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::Vector;

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub bounds: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        SampleBox { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from_iterator(
            self.bounds.len(),
            self.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        )
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` uniform points inside `region` that satisfy `accept`.
///
/// Gives up after `50 * count` draws, returning what it has.
pub fn uniform_grid(
    region: &SampleBox,
    count: usize,
    seed: u64,
    accept: impl Fn(&Vector) -> bool,
) -> Vec<Vector> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0usize;
    while out.len() < count && draws < 50 * count.max(1) {
        draws += 1;
        let x = region.sample(&mut rng);
        if accept(&x) {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_reproducible_and_filtered() {
        let b = SampleBox::new(vec![(-1.0, 1.0), (0.0, 2.0)]);
        let a = uniform_grid(&b, 100, DEFAULT_SEED, |x| x[0] > 0.0);
        let c = uniform_grid(&b, 100, DEFAULT_SEED, |x| x[0] > 0.0);
        assert_eq!(a.len(), 100);
        assert_eq!(a, c);
        assert!(a.iter().all(|x| x[0] > 0.0 && (0.0..2.0).contains(&x[1])));
        let d = uniform_grid(&b, 100, 7, |x| x[0] > 0.0);
        assert_ne!(a, d);
    }
}
