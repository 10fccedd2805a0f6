//! Local knowledge, normalization, equalized transmission and error-free
//! aggregation for a hand-made three-device round.

use otafd::airagg::aggregate_error_free;
use otafd::knowledge::{global_target, knowledge_stats, local_knowledge, normalize_knowledge, DatasetPartition, KnowledgeSet};

fn main() -> otafd::Result<()> {
    // soft predictions of each device, grouped by true label
    let devices = [
        vec![vec![vec![0.8, 0.1, 0.1], vec![0.6, 0.3, 0.1]], vec![vec![0.2, 0.7, 0.1]], vec![]],
        vec![vec![vec![0.5, 0.4, 0.1]], vec![vec![0.1, 0.8, 0.1], vec![0.3, 0.6, 0.1]], vec![vec![0.2, 0.2, 0.6]]],
        vec![vec![], vec![], vec![vec![0.1, 0.1, 0.8], vec![0.0, 0.3, 0.7], vec![0.1, 0.2, 0.7]]],
    ];
    let counts: Vec<Vec<usize>> = devices.iter().map(|d| d.iter().map(Vec::len).collect()).collect();
    let partition = DatasetPartition::from_counts(counts.clone(), None)?;
    let q = devices
        .iter()
        .zip(&counts)
        .map(|(groups, c)| local_knowledge(groups, c))
        .collect::<otafd::Result<Vec<_>>>()?;

    for (i, row) in q.iter().enumerate() {
        for (k, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                let s = knowledge_stats(v);
                let x = normalize_knowledge(v, s.mean, s.std)?;
                println!("wd {i} class {k}: q = {v:.3?}  mean {:.3} std {:.3}  x = {x:.3?}", s.mean, s.std);
            }
        }
    }

    let knowledge = KnowledgeSet::new(q, &partition, 0)?;
    let target = global_target(&knowledge, &partition)?;
    let est = aggregate_error_free(&knowledge, &partition)?;
    for k in 0..3 {
        println!("global knowledge of class {k}: {:.4?} (target {:.4?})", est.real_view[k], target[k]);
    }
    Ok(())
}
