use serde::{Deserialize, Serialize};

/// Positive-class precision, recall and F score with the confusion counts
/// they were computed from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let fscore = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { tp, fp, fn_, tn, precision, recall, fscore }
    }

    /// Micro-average: metrics of the summed confusion counts.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a Metrics>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for m in parts {
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            tn += m.tn;
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Arithmetic mean of precision, recall and F over runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

impl MeanMetrics {
    pub fn of(runs: &[Metrics]) -> Self {
        if runs.is_empty() {
            return Self::default();
        }
        let n = runs.len() as f64;
        Self {
            precision: runs.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: runs.iter().map(|m| m.recall).sum::<f64>() / n,
            fscore: runs.iter().map(|m| m.fscore).sum::<f64>() / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_conventions() {
        let perfect = Metrics::from_counts(4, 0, 0, 6);
        assert_eq!((perfect.precision, perfect.recall, perfect.fscore), (1.0, 1.0, 1.0));
        let none = Metrics::from_counts(0, 0, 5, 5);
        assert_eq!((none.precision, none.recall, none.fscore), (0.0, 0.0, 0.0));
        let m = Metrics::from_counts(3, 1, 2, 0);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.fscore - 2.0 * 0.45 / 1.35).abs() < 1e-12);
        assert!((m.fscore - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn pooling_sums_counts() {
        let a = Metrics::from_counts(1, 2, 3, 4);
        let b = Metrics::from_counts(5, 0, 1, 2);
        assert_eq!(Metrics::pooled([&a, &b]), Metrics::from_counts(6, 2, 4, 6));
    }
}
