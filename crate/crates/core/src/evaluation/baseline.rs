//! L2-regularised logistic regression fitted by Newton's method, the
//! clinical-baseline comparator of the ablation table.

use crate::error::{Error, Result};
use crate::fusion::{sigmoid, STD_FLOOR};

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticBaseline {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Coefficients on standardized features; the intercept is last.
    pub coef: Vec<f64>,
    pub l2: f64,
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

impl LogisticBaseline {
    /// Minimises mean log-loss plus `l2/2 * |w|^2` (intercept unpenalised).
    pub fn fit(x: &[Vec<f64>], y: &[u8], l2: f64) -> Result<LogisticBaseline> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::ShapeMismatch(format!("{n} rows vs {} labels", y.len())));
        }
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == n {
            return Err(Error::SingleClass);
        }
        let d = x[0].len();
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                v.sqrt().max(STD_FLOOR)
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut v: Vec<f64> = (0..d).map(|j| (r[j] - mean[j]) / std[j]).collect();
                v.push(1.0);
                v
            })
            .collect();
        let mut w = vec![0.0; d + 1];
        for _ in 0..100 {
            let mut grad = vec![0.0; d + 1];
            let mut hess = vec![vec![0.0; d + 1]; d + 1];
            for (zi, &yi) in z.iter().zip(y) {
                let p = sigmoid(dot(&w, zi));
                let r = p - yi as f64;
                let s = p * (1.0 - p);
                for a in 0..=d {
                    grad[a] += r * zi[a] / n as f64;
                    for b in 0..=d {
                        hess[a][b] += s * zi[a] * zi[b] / n as f64;
                    }
                }
            }
            for a in 0..d {
                grad[a] += l2 * w[a];
                hess[a][a] += l2;
            }
            // a tiny ridge keeps the system solvable under separation
            for (a, row) in hess.iter_mut().enumerate() {
                row[a] += 1e-10;
            }
            let step = solve(hess, grad.clone()).ok_or_else(|| Error::NonFinite("singular Newton system".into()))?;
            for a in 0..=d {
                w[a] -= step[a];
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("logistic baseline coefficients".into()));
            }
            if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-10 {
                break;
            }
        }
        Ok(LogisticBaseline { mean, std, coef: w, l2 })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut z = self.coef[d];
        for j in 0..d {
            z += self.coef[j] * (row[j] - self.mean[j]) / self.std[j];
        }
        sigmoid(z)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn gradient_vanishes_at_the_fit() {
        let mut r = rng::seeded(5);
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![r.random_range(-3.0..3.0), r.random_range(0.0..10.0)]).collect();
        let y: Vec<u8> = x
            .iter()
            .map(|v| r.random_bool(1.0 / (1.0 + (-(1.5 * v[0] - 0.2 * v[1] + 0.5)).exp())) as u8)
            .collect();
        let m = LogisticBaseline::fit(&x, &y, 0.01).unwrap();
        // recompute the penalised gradient on standardized inputs
        let mut g = [0.0; 3];
        for (v, &yi) in x.iter().zip(&y) {
            let z = [(v[0] - m.mean[0]) / m.std[0], (v[1] - m.mean[1]) / m.std[1], 1.0];
            let p = m.predict(v);
            for a in 0..3 {
                g[a] += (p - yi as f64) * z[a] / 200.0;
            }
        }
        g[0] += 0.01 * m.coef[0];
        g[1] += 0.01 * m.coef[1];
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
        assert!(m.coef[0] > 0.0 && m.coef[1] < 0.0);
    }

    #[test]
    fn separable_data_stays_finite() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..10).map(|i| (i >= 5) as u8).collect();
        let m = LogisticBaseline::fit(&x, &y, 1e-3).unwrap();
        assert!(m.predict(&[9.0]) > 0.9 && m.predict(&[0.0]) < 0.1);
    }
}
