use crate::fusion::decide;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl Confusion {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }

    /// TP as a percentage of positives.
    pub fn tp_pct(&self) -> Option<f64> {
        pct(self.tp, self.positives())
    }

    pub fn fn_pct(&self) -> Option<f64> {
        pct(self.fn_, self.positives())
    }

    /// TN as a percentage of negatives.
    pub fn tn_pct(&self) -> Option<f64> {
        pct(self.tn, self.negatives())
    }

    pub fn fp_pct(&self) -> Option<f64> {
        pct(self.fp, self.negatives())
    }
}

/// Counts under `decide(p, tau)`.
pub fn confusion(scores: &[f64], labels: &[u8], tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &y) in scores.iter().zip(labels) {
        match (decide(p, tau), y) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    c
}

/// Point metrics; `None` marks an undefined value (zero denominator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn prf_accuracy(c: &Confusion) -> Prf {
    let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    // 2PR/(P+R) written over counts; P + R = 0 means TP = 0, where F1 -> 0
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) => Some(2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}
