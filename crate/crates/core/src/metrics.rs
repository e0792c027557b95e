//! Evaluation metrics and scored-pair export.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// count one half. Labels are positive when `> 0.5`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Metric(format!("non-finite score {s}")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let positive: Vec<bool> = labels.iter().map(|&y| y > 0.5).collect();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both positive and negative labels".into()));
    }
    let rank_sum: f64 = ranks.iter().zip(&positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Metric(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(Error::Metric("at least two values are required".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Pearson correlation coefficient.
pub fn pcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    if vp == 0.0 || vt == 0.0 {
        return Err(Error::Metric("correlation is undefined for a constant vector".into()));
    }
    Ok((cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Pairs with a score each and the true label.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPairs {
    pairs: Vec<(NodeId, NodeId)>,
    scores: Vec<f64>,
    labels: Vec<f64>,
}

impl ScoredPairs {
    pub fn new(pairs: Vec<(NodeId, NodeId)>, scores: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if pairs.len() != scores.len() || pairs.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} pairs, {} scores, {} labels",
                pairs.len(),
                scores.len(),
                labels.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Metric(format!("non-finite score {s}")));
        }
        Ok(Self { pairs, scores, labels })
    }

    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn write_csv<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        writeln!(out, "u,v,score,label")?;
        for (i, &(u, v)) in self.pairs.iter().enumerate() {
            writeln!(out, "{},{},{},{}", g.label(u), g.label(v), self.scores[i], self.labels[i])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
        assert!(auc(&[0.1], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rmse_and_pcc_examples() {
        let t = [0.5, -0.2, 0.9, 0.1];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!((pcc(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pcc(&neg, &t).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(rmse(&[1.0, -1.0], &[-1.0, 1.0]).unwrap(), 2.0);
        assert!(pcc(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
        assert!(rmse(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn scored_pairs_csv() {
        let g = Graph::with_labels(vec!["x".into(), "y".into()], false, [(0, 1, None)]).unwrap();
        let sp = ScoredPairs::new(vec![(0, 1)], vec![0.25], vec![1.0]).unwrap();
        let mut buf = Vec::new();
        sp.write_csv(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "u,v,score,label\nx,y,0.25,1\n");
        assert!(ScoredPairs::new(vec![(0, 1)], vec![f64::NAN], vec![1.0]).is_err());
    }
}
