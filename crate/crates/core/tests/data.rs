use bbhazard::data::{augment, sample_batch, Covariate, CovariateSchema, IndividualRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn records(times: &[u32]) -> Vec<IndividualRecord> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| IndividualRecord::new(format!("p{i}"), t, u8::from(i % 3 == 0), vec![Covariate::Num(i as f64)]))
        .collect()
}

#[test]
fn equal_blocks_are_drawn_uniformly() {
    let schema = CovariateSchema::continuous(["x"]);
    let data = augment(&records(&[4; 10]), &schema, 4).unwrap();
    let mut counts = [0u64; 10];
    for seed in 0..10_000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_batch(&data, 20, &mut rng).unwrap();
        for &i in &b.individuals {
            counts[i as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 1% critical value of χ² with 9 degrees of freedom
    assert!(chi2 < 21.67, "χ² = {chi2}, counts {counts:?}");
}

proptest! {
    #[test]
    fn batches_hold_whole_blocks_within_budget(
        times in prop::collection::vec(1u32..8, 2..40),
        budget in 8usize..60,
        seed in any::<u64>(),
    ) {
        let schema = CovariateSchema::continuous(["x"]);
        let data = augment(&records(&times), &schema, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sample_batch(&data, budget, &mut rng).unwrap();
        let want: Vec<usize> = (0..data.n_rows())
            .filter(|&r| b.individuals.contains(&(data.row_individual(r) as u32)))
            .collect();
        prop_assert_eq!(&b.rows, &want);
        prop_assert!(b.individuals.windows(2).all(|w| w[0] < w[1]));
        if data.n_rows() <= budget {
            prop_assert_eq!(b.rows.len(), data.n_rows());
        } else {
            // the last block drawn may cross the budget, never by a whole block
            prop_assert!(b.rows.len() < budget + 7);
        }
    }
}
