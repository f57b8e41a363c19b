//! Pair- and rank-counting references for the ranking metrics.

/// AUC by direct pair counting: concordant pairs plus half the ties, over
/// all positive-negative pairs.
pub fn auc_pair_count(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / pairs as f64
}

/// Average precision by per-positive rank counting. The rank of item `i` is
/// the number of items strictly ahead of it plus earlier-indexed ties,
/// matching a stable descending sort. Precisions accumulate in rank order.
pub fn ap_rank_count(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let mut at_rank: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        if !labels[i] {
            continue;
        }
        let mut rank = 0usize;
        let mut positives_ahead = 0usize;
        for j in 0..n {
            let ahead = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
            if ahead {
                rank += 1;
                if labels[j] {
                    positives_ahead += 1;
                }
            }
        }
        at_rank.push((rank, (positives_ahead + 1) as f64 / (rank + 1) as f64));
    }
    at_rank.sort_by_key(|&(rank, _)| rank);
    let p = at_rank.len() as f64;
    at_rank.iter().map(|&(_, prec)| prec).sum::<f64>() / p
}

/// Micro-averaged AUC by pooling every (sample, class) pair first.
pub fn micro_auc_pair_count(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> f64 {
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (row_s, row_l) in scores.iter().zip(labels) {
        s.extend_from_slice(row_s);
        l.extend_from_slice(row_l);
    }
    auc_pair_count(&s, &l)
}
