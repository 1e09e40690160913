use ndarray::{Array1, Array2, ArrayView1};

use super::link::{Link, Logit};
use super::ModelState;
use crate::basis::{Design, DesignBlock, KeyKind};
use crate::data::{AugmentedDataset, Batch};
use crate::scalar::Scalar;

/// Distinct design keys present in a frame and the slot of every row.
#[derive(Debug, Clone)]
struct KeyIndex {
    keys: Vec<usize>,
    slot: Vec<u32>,
}

impl KeyIndex {
    fn constant(n: usize) -> Self {
        Self {
            keys: vec![0],
            slot: vec![0; n],
        }
    }

    /// Keys of rows already grouped by key (individual blocks).
    fn from_runs(keys: impl Iterator<Item = usize>) -> Self {
        let mut out = Self {
            keys: Vec::new(),
            slot: Vec::new(),
        };
        for k in keys {
            if out.keys.last() != Some(&k) {
                out.keys.push(k);
            }
            out.slot.push(out.keys.len() as u32 - 1);
        }
        out
    }

    /// Keys from a small domain `0..n_keys`.
    fn from_small_domain(keys: impl Iterator<Item = usize>, n_keys: usize) -> Self {
        let mut map = vec![u32::MAX; n_keys];
        let mut out = Self {
            keys: Vec::new(),
            slot: Vec::new(),
        };
        for k in keys {
            if map[k] == u32::MAX {
                map[k] = out.keys.len() as u32;
                out.keys.push(k);
            }
            out.slot.push(map[k]);
        }
        out
    }
}

/// A set of person-period rows (a batch or the full data) together with the
/// predictor `η` on those rows.
///
/// `eta` equals `Σ_j X_j β_j` for the state it was built from, and stays so
/// as long as every coefficient change goes through [`Frame::shift_term`].
#[derive(Debug, Clone)]
pub struct Frame<'a, S> {
    data: &'a AugmentedDataset,
    rows: Vec<usize>,
    y: Vec<S>,
    constant: KeyIndex,
    time: KeyIndex,
    individual: KeyIndex,
    eta: Vec<S>,
}

impl<'a, S: Scalar> Frame<'a, S> {
    /// Rows must be grouped by individual (any [`Batch`] is).
    pub fn new(data: &'a AugmentedDataset, rows: Vec<usize>, design: &Design<S>, state: &ModelState<S>) -> Self {
        let y = rows.iter().map(|&r| S::from_u8(data.y()[r]).unwrap()).collect();
        let n = rows.len();
        let time = KeyIndex::from_small_domain(
            rows.iter().map(|&r| data.row_time(r) as usize - 1),
            data.max_time() as usize,
        );
        let individual = KeyIndex::from_runs(rows.iter().map(|&r| data.row_individual(r)));
        let mut frame = Self {
            data,
            rows,
            y,
            constant: KeyIndex::constant(n),
            time,
            individual,
            eta: vec![S::zero(); n],
        };
        frame.recompute_eta(design, state);
        frame
    }

    pub fn from_batch(data: &'a AugmentedDataset, batch: &Batch, design: &Design<S>, state: &ModelState<S>) -> Self {
        Self::new(data, batch.rows.clone(), design, state)
    }

    pub fn full(data: &'a AugmentedDataset, design: &Design<S>, state: &ModelState<S>) -> Self {
        Self::new(data, (0..data.n_rows()).collect(), design, state)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn y(&self) -> &[S] {
        &self.y
    }

    pub fn eta(&self) -> &[S] {
        &self.eta
    }

    pub fn data(&self) -> &'a AugmentedDataset {
        self.data
    }

    fn index(&self, key: KeyKind) -> &KeyIndex {
        match key {
            KeyKind::Constant => &self.constant,
            KeyKind::Time => &self.time,
            KeyKind::Individual => &self.individual,
        }
    }

    /// `x_key · β` for each distinct key of the block in this frame.
    fn key_values(&self, block: &DesignBlock<S>, beta: ArrayView1<'_, S>) -> Vec<S> {
        self.index(block.key)
            .keys
            .iter()
            .map(|&k| block.key_row(k).dot(&beta))
            .collect()
    }

    /// `X_j β` on the frame rows.
    pub fn term_values(&self, block: &DesignBlock<S>, beta: ArrayView1<'_, S>) -> Vec<S> {
        let vals = self.key_values(block, beta);
        self.index(block.key).slot.iter().map(|&s| vals[s as usize]).collect()
    }

    pub fn recompute_eta(&mut self, design: &Design<S>, state: &ModelState<S>) {
        self.eta.iter_mut().for_each(|e| *e = S::zero());
        for (block, beta) in design.blocks.iter().zip(&state.beta) {
            self.shift_term(block, beta.view());
        }
    }

    /// `η ← η + X_j Δβ`.
    pub fn shift_term(&mut self, block: &DesignBlock<S>, delta: ArrayView1<'_, S>) {
        let vals = self.key_values(block, delta);
        let mut eta = std::mem::take(&mut self.eta);
        for (e, &s) in eta.iter_mut().zip(&self.index(block.key).slot) {
            *e += vals[s as usize];
        }
        self.eta = eta;
    }

    pub fn loglik(&self) -> S {
        self.y.iter().zip(&self.eta).map(|(&y, &e)| Logit.loglik(y, e)).sum()
    }

    /// Log-likelihood after a hypothetical `η + X_j Δβ`, without changing
    /// the frame.
    pub fn loglik_shifted(&self, block: &DesignBlock<S>, delta: ArrayView1<'_, S>) -> S {
        let vals = self.key_values(block, delta);
        let slot = &self.index(block.key).slot;
        self.y
            .iter()
            .zip(&self.eta)
            .zip(slot)
            .map(|((&y, &e), &s)| Logit.loglik(y, e + vals[s as usize]))
            .sum()
    }

    /// `(X_jᵀ W X_j, X_jᵀ W r)` for per-row weights `w` and responses `r`,
    /// accumulated per distinct key.
    pub fn weighted_cross_products(&self, block: &DesignBlock<S>, w: &[S], r: &[S]) -> (Array2<S>, Array1<S>) {
        let index = self.index(block.key);
        let m = index.keys.len();
        let mut sw = vec![S::zero(); m];
        let mut swr = vec![S::zero(); m];
        for ((&s, &wi), &ri) in index.slot.iter().zip(w).zip(r) {
            sw[s as usize] += wi;
            swr[s as usize] += wi * ri;
        }
        let d = block.dim();
        let mut xtwx = Array2::zeros((d, d));
        let mut xtwr = Array1::zeros(d);
        for ((&k, &a), &b) in index.keys.iter().zip(&sw).zip(&swr) {
            let x = block.key_row(k);
            for p in 0..d {
                let xp = x[p];
                if xp == S::zero() {
                    continue;
                }
                xtwr[p] += b * xp;
                let axp = a * xp;
                for q in p..d {
                    xtwx[[p, q]] += axp * x[q];
                }
            }
        }
        for p in 0..d {
            for q in 0..p {
                xtwx[[p, q]] = xtwx[[q, p]];
            }
        }
        (xtwx, xtwr)
    }
}
