//! Memory-aware Best-Fit Decreasing grouping of a micro-batch.
//!
//! Sequences are taken in decreasing memory order. A sequence that fits no
//! open bin opens a new one sized `d_min * capacity` for its own `d_min`;
//! otherwise it joins the open bin with the least sufficient headroom. Bin
//! capacity is frozen when the bin opens.

use crate::cost;
use crate::error::{Error, Result};
use crate::types::{AtomicGroup, ClusterSpec, CostCoefficients, MicroBatch, SequenceSpec};

struct Bin<'a> {
    d_min: usize,
    tokens: u64,
    members: Vec<&'a SequenceSpec>,
}

/// Groups the batch into atomic groups. Deterministic: ties in length are
/// broken by ascending sequence id, ties in headroom by the earliest bin.
pub fn pack_bfd(
    batch: &MicroBatch,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<Vec<AtomicGroup>> {
    pack_with(batch.sequences(), cluster, coeffs, |seq| {
        cost::min_degree([seq], cluster, coeffs)
    })
}

/// BFD with every bin opened at a fixed `degree`, as a static layout would.
pub fn pack_fixed_degree(
    sequences: &[SequenceSpec],
    degree: usize,
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
) -> Result<Vec<AtomicGroup>> {
    for s in sequences {
        let need = cost::min_degree([s], cluster, coeffs)?;
        if need > degree {
            return Err(Error::StaticDegreeTooSmall {
                degree,
                id: s.id(),
                required: need,
            });
        }
    }
    let groups = pack_with(sequences, cluster, coeffs, |_| Ok(degree))?;
    // report each group's own memory-derived minimum, not the bin size
    groups
        .into_iter()
        .map(|g| AtomicGroup::from_sequences(g.sequences().to_vec(), cluster, coeffs))
        .collect()
}

fn pack_with<F>(
    sequences: &[SequenceSpec],
    cluster: &ClusterSpec,
    coeffs: &CostCoefficients,
    mut bin_degree: F,
) -> Result<Vec<AtomicGroup>>
where
    F: FnMut(&SequenceSpec) -> Result<usize>,
{
    let mut order: Vec<&SequenceSpec> = sequences.iter().collect();
    order.sort_by(|a, b| b.length().cmp(&a.length()).then(a.id().cmp(&b.id())));

    let cap = cost::activation_capacity_per_rank(cluster, coeffs);
    let mut bins: Vec<Bin<'_>> = Vec::new();
    for seq in order {
        let mut best: Option<(usize, f64)> = None;
        for (i, bin) in bins.iter().enumerate() {
            if !cost::fits_memory(bin.tokens + seq.length(), bin.d_min, cluster, coeffs) {
                continue;
            }
            let headroom = bin.d_min as f64 * cap - cost::activation_memory(bin.tokens, coeffs);
            if best.is_none_or(|(_, h)| headroom < h) {
                best = Some((i, headroom));
            }
        }
        match best {
            Some((i, _)) => {
                let bin = &mut bins[i];
                bin.tokens += seq.length();
                bin.members.push(seq);
            }
            None => {
                let d_min = bin_degree(seq)?;
                bins.push(Bin {
                    d_min,
                    tokens: seq.length(),
                    members: vec![seq],
                });
            }
        }
    }

    bins.into_iter()
        .map(|b| AtomicGroup::new(b.members.into_iter().cloned().collect(), b.d_min))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClusterParams, CoefficientValues};

    fn setup(n: usize, e: f64) -> (ClusterSpec, CostCoefficients) {
        let cluster = ClusterSpec::new(ClusterParams {
            num_ranks: n,
            mem_budget_per_rank: e,
            ranks_per_node: 8,
            intra_node_bandwidth: 1.0,
            inter_node_bandwidth: 1.0,
        })
        .unwrap();
        let coeffs = CostCoefficients::new(CoefficientValues {
            mem_per_token: 1.0,
            ..Default::default()
        })
        .unwrap();
        (cluster, coeffs)
    }

    fn batch(lens: &[u64]) -> MicroBatch {
        MicroBatch::new(
            lens.iter()
                .enumerate()
                .map(|(i, &l)| SequenceSpec::causal(i as u64, l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn lengths(g: &AtomicGroup) -> Vec<u64> {
        g.sequences().iter().map(SequenceSpec::length).collect()
    }

    #[test]
    fn hand_traced_example() {
        let (c, k) = setup(8, 10.0);
        let groups = pack_bfd(&batch(&[12, 5, 4, 3]), &c, &k).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(lengths(&groups[0]), vec![12, 5, 3]);
        assert_eq!(groups[0].d_min(), 2);
        assert_eq!(lengths(&groups[1]), vec![4]);
        assert_eq!(groups[1].d_min(), 1);
    }

    #[test]
    fn singleton() {
        let (c, k) = setup(8, 10.0);
        let groups = pack_bfd(&batch(&[25]), &c, &k).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].d_min(), 3);
    }

    #[test]
    fn zero_headroom_keeps_sequences_apart() {
        let (c, k) = setup(8, 10.0);
        let groups = pack_bfd(&batch(&[10, 10, 10, 10]), &c, &k).unwrap();
        assert_eq!(groups.len(), 4);
        assert!(groups
            .iter()
            .all(|g| g.d_min() == 1 && g.sequences().len() == 1));
    }

    #[test]
    fn oversized_sequence_is_rejected() {
        let (c, k) = setup(2, 10.0);
        assert!(matches!(
            pack_bfd(&batch(&[5, 21]), &c, &k),
            Err(Error::ExceedsCluster { id: 1, .. })
        ));
    }

    #[test]
    fn fixed_degree_bins() {
        let (c, k) = setup(8, 10.0);
        let seqs = batch(&[12, 5, 4, 3, 9]);
        let groups = pack_fixed_degree(seqs.sequences(), 2, &c, &k).unwrap();
        // capacity 20 per bin: {12,5,3}, {9,4}
        assert_eq!(groups.len(), 2);
        assert_eq!(lengths(&groups[0]), vec![12, 5, 3]);
        assert_eq!(lengths(&groups[1]), vec![9, 4]);
        assert_eq!(groups[1].d_min(), 2);
        assert!(matches!(
            pack_fixed_degree(batch(&[25]).sequences(), 2, &c, &k),
            Err(Error::StaticDegreeTooSmall {
                degree: 2,
                required: 3,
                ..
            })
        ));
    }
}
