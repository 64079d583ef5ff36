//! Shared split-search machinery for the tree learners.

use rayon::prelude::*;

use crate::matrix::DenseMatrix;
use crate::num::Scalar;

/// How one feature's split candidates get enumerated. Low-cardinality
/// columns (one-hot blocks, quantized scores) index straight into per-value
/// accumulators; high-cardinality columns fall back to sorting. Both paths
/// consider exactly the boundaries between adjacent distinct values, so
/// split search stays exact either way.
pub(crate) enum FeaturePlan<S> {
    Binned {
        values: Vec<S>,
        bins: Vec<u16>,
    },
    /// Rows in ascending feature order, ties by row index.
    Sorted(Vec<u32>),
}

pub(crate) const MAX_BINS: usize = 512;

pub(crate) fn build_plans<S: Scalar>(x: &DenseMatrix<S>) -> Vec<FeaturePlan<S>> {
    let n = x.rows();
    (0..x.cols())
        .into_par_iter()
        .map(|f| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| {
                x.at(a as usize, f)
                    .partial_cmp(&x.at(b as usize, f))
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            let mut distinct = 0usize;
            let mut prev: Option<S> = None;
            for &row in &order {
                let v = x.at(row as usize, f);
                if prev != Some(v) {
                    distinct += 1;
                    prev = Some(v);
                }
            }
            if distinct > MAX_BINS {
                return FeaturePlan::Sorted(order);
            }
            let mut values = Vec::with_capacity(distinct);
            let mut bins = vec![0u16; n];
            let mut prev: Option<S> = None;
            for &row in &order {
                let v = x.at(row as usize, f);
                if prev != Some(v) {
                    values.push(v);
                    prev = Some(v);
                }
                bins[row as usize] = (values.len() - 1) as u16;
            }
            FeaturePlan::Binned { values, bins }
        })
        .collect()
}
