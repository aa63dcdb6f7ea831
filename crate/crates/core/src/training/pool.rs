use std::collections::HashSet;

use rand::Rng;

use crate::cipher::CipherMapping;
use crate::rng::{stream_rng, streams};

/// A fixed set of distinct training ciphers, sampled uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherPool {
    ciphers: Vec<CipherMapping>,
    members: HashSet<CipherMapping>,
    seed: u64,
}

impl CipherPool {
    /// `size` distinct ciphers drawn from `seed`.
    pub fn new(size: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, streams::POOL);
        let mut ciphers = Vec::with_capacity(size);
        let mut members = HashSet::with_capacity(size);
        while ciphers.len() < size {
            let c = CipherMapping::sample_with(&mut rng);
            if members.insert(c) {
                ciphers.push(c);
            }
        }
        Self { ciphers, members, seed }
    }

    pub fn len(&self) -> usize {
        self.ciphers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ciphers.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ciphers(&self) -> &[CipherMapping] {
        &self.ciphers
    }

    pub fn contains(&self, cipher: &CipherMapping) -> bool {
        self.members.contains(cipher)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &CipherMapping {
        &self.ciphers[rng.random_range(0..self.ciphers.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_are_distinct_and_all_get_sampled() {
        let pool = CipherPool::new(10, 5);
        assert_eq!(pool.ciphers().iter().collect::<HashSet<_>>().len(), 10);
        let mut rng = stream_rng(1, 0);
        let seen: HashSet<_> = (0..2000).map(|_| *pool.sample(&mut rng)).collect();
        assert_eq!(seen.len(), 10);
        assert!(pool.ciphers().iter().all(|c| pool.contains(c)));
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let pool = CipherPool::new(4, 6);
        let mut rng = stream_rng(2, 0);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let c = pool.sample(&mut rng);
            counts[pool.ciphers().iter().position(|p| p == c).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&n| (n as f64 - 10_000.0).abs() < 400.0), "{counts:?}");
    }
}
