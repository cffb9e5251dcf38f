use super::EvalError;

/// Area under the ROC curve via the Mann-Whitney rank sum, ties at average
/// rank (a tied positive/negative pair counts 1/2).
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch { labels: labels.len(), scores: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank sums are accumulated doubled so tied groups stay integral.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, average (i + 1 + j) / 2
        let avg2 = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        pos_rank_sum2 += avg2 * pos_in_group;
        i = j;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // U = R_pos - np(np+1)/2, doubled
    let u2 = pos_rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

pub fn rmse(labels: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch { labels: labels.len(), scores: scores.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sse: f64 = labels.iter().zip(scores).map(|(&y, &p)| (y as f64 - p).powi(2)).sum();
    Ok((sse / labels.len() as f64).sqrt())
}
