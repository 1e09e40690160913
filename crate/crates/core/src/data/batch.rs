use rand::Rng;

use super::AugmentedDataset;
use crate::error::{Error, Result};

/// A set of whole individuals and the union of their row blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Sampled individuals in dataset order.
    pub individuals: Vec<u32>,
    /// Row indices of the sampled blocks, ascending.
    pub rows: Vec<usize>,
}

impl Batch {
    pub fn full(data: &AugmentedDataset) -> Self {
        Self {
            individuals: (0..data.n_individuals() as u32).collect(),
            rows: (0..data.n_rows()).collect(),
        }
    }

    fn from_individuals(data: &AugmentedDataset, mut individuals: Vec<u32>) -> Self {
        individuals.sort_unstable();
        let mut rows = Vec::new();
        for &i in &individuals {
            rows.extend(data.block(i as usize));
        }
        Self { individuals, rows }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

/// Draws individual-level batches, reusing one permutation buffer so a draw
/// costs time proportional to the batch, not the dataset.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    max_rows: usize,
    perm: Vec<u32>,
}

impl BatchSampler {
    pub fn new(data: &AugmentedDataset, max_rows: usize) -> Result<Self> {
        let longest = data.max_block_len();
        if max_rows < longest {
            return Err(Error::Config(format!(
                "batch size {max_rows} is smaller than the longest individual block ({longest} rows)"
            )));
        }
        Ok(Self {
            max_rows,
            perm: (0..data.n_individuals() as u32).collect(),
        })
    }

    pub fn max_rows(&self) -> usize {
        self.max_rows
    }

    /// Sample individuals uniformly without replacement until the row budget
    /// is reached; the individual crossing the budget is kept. Returns the
    /// full dataset, without touching `rng`, when it fits in the budget.
    pub fn sample<R: Rng + ?Sized>(&mut self, data: &AugmentedDataset, rng: &mut R) -> Batch {
        if data.n_rows() <= self.max_rows {
            return Batch::full(data);
        }
        let taken = self.draw(data, 0, rng);
        Batch::from_individuals(data, self.perm[..taken].to_vec())
    }

    /// Two batches with no individual in common: the second is drawn from
    /// the individuals the first left over, and is smaller than the budget
    /// only if those run out. Both are the full dataset when it fits in the
    /// budget.
    pub fn sample_disjoint<R: Rng + ?Sized>(&mut self, data: &AugmentedDataset, rng: &mut R) -> (Batch, Batch) {
        if data.n_rows() <= self.max_rows {
            return (Batch::full(data), Batch::full(data));
        }
        let first = self.draw(data, 0, rng);
        let second = self.draw(data, first, rng);
        (
            Batch::from_individuals(data, self.perm[..first].to_vec()),
            Batch::from_individuals(data, self.perm[first..second].to_vec()),
        )
    }

    /// Partial Fisher-Yates from position `from`; returns the end of the
    /// drawn range.
    fn draw<R: Rng + ?Sized>(&mut self, data: &AugmentedDataset, from: usize, rng: &mut R) -> usize {
        let n = self.perm.len();
        let mut rows = 0usize;
        let mut taken = from;
        while rows < self.max_rows && taken < n {
            let j = rng.random_range(taken..n);
            self.perm.swap(taken, j);
            rows += data.block_len(self.perm[taken] as usize);
            taken += 1;
        }
        taken
    }
}

/// One-off batch draw; see [`BatchSampler::sample`].
pub fn sample_batch<R: Rng + ?Sized>(
    data: &AugmentedDataset,
    max_rows: usize,
    rng: &mut R,
) -> Result<Batch> {
    Ok(BatchSampler::new(data, max_rows)?.sample(data, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{augment, Covariate, CovariateSchema, IndividualRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(times: &[u32]) -> AugmentedDataset {
        let schema = CovariateSchema::continuous(["x"]);
        let recs: Vec<_> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| IndividualRecord::new(i.to_string(), t, 0, vec![Covariate::Num(i as f64)]))
            .collect();
        augment(&recs, &schema, 20).unwrap()
    }

    #[test]
    fn small_dataset_is_one_batch() {
        let d = dataset(&[3, 2, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&d, 20_000, &mut rng).unwrap();
        assert_eq!(b, Batch::full(&d));
    }

    #[test]
    fn whole_block_rule() {
        let d = dataset(&[3, 2]);
        let mut sizes = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = sample_batch(&d, 3, &mut rng).unwrap();
            let mut rows: Vec<usize> = b.individuals.iter().flat_map(|&i| d.block(i as usize)).collect();
            rows.sort_unstable();
            assert_eq!(b.rows, rows);
            assert!((3..3 + 3).contains(&b.row_count()));
            // the 3-row block alone fills the budget; the 2-row block never does
            if b.individuals.len() == 1 {
                assert_eq!(b.individuals, vec![0]);
            }
            sizes.insert(b.individuals.len());
        }
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn budget_below_longest_block_is_rejected() {
        let d = dataset(&[3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_batch(&d, 2, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let d = dataset(&[4, 1, 7, 3, 3, 9, 2, 5]);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut s = BatchSampler::new(&d, 10).unwrap();
            (0..5).map(|_| s.sample(&d, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn batch_size_stays_in_crossing_window() {
        let d = dataset(&[4, 1, 7, 3, 3, 9, 2, 5, 6, 6, 1, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = BatchSampler::new(&d, 12).unwrap();
        for _ in 0..200 {
            let b = s.sample(&d, &mut rng);
            assert!(b.row_count() >= 12 && b.row_count() < 12 + d.max_block_len());
        }
    }

    #[test]
    fn disjoint_pair() {
        let d = dataset(&[4, 1, 7, 3, 3, 9, 2, 5, 6, 6, 1, 2]);
        let mut sampler = BatchSampler::new(&d, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (a, b) = sampler.sample_disjoint(&d, &mut rng);
            assert!(a.row_count() >= 10 && b.row_count() >= 10);
            assert!(a.individuals.iter().all(|i| !b.individuals.contains(i)));
        }
        let small = dataset(&[2, 3]);
        let (a, b) = BatchSampler::new(&small, 10).unwrap().sample_disjoint(&small, &mut rng);
        assert_eq!(a, Batch::full(&small));
        assert_eq!(b, Batch::full(&small));
    }
}
