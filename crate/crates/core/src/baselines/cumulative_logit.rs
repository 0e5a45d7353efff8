use nalgebra::{DMatrix, DVector};

use crate::error::{GplmError, Result};

const MAX_NEWTON: usize = 200;
const MAX_HALVINGS: usize = 40;
/// Parameter norms beyond this indicate separated data.
const SEPARATION_NORM: f64 = 1e6;
/// A fitted probability of the observed category this close to one means the
/// likelihood is still increasing along a separating direction.
const SATURATION: f64 = 1e-8;

/// Proportional-odds fit `logit P(y <= k | x) = alpha_k + x beta`.
#[derive(Debug, Clone)]
pub struct CumulativeLogitFit {
    /// Strictly increasing cut points, `K - 1` of them.
    pub alpha: Vec<f64>,
    pub beta: DVector<f64>,
    pub log_likelihood: f64,
    /// Euclidean norm of the score at the returned estimate.
    pub gradient_norm: f64,
    pub iterations: usize,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `P(y = c)` for 1-based `c` given cumulative linear predictors.
fn category_probability(alpha: &[f64], xb: f64, c: usize) -> f64 {
    let k = alpha.len() + 1;
    if c == k {
        // 1 - F(b) = F(-b) keeps the upper tail accurate.
        return sigmoid(-(alpha[c - 2] + xb));
    }
    let lower = if c > 1 { sigmoid(alpha[c - 2] + xb) } else { 0.0 };
    sigmoid(alpha[c - 1] + xb) - lower
}

impl CumulativeLogitFit {
    pub fn categories(&self) -> usize {
        self.alpha.len() + 1
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.beta.len() {
            return Err(GplmError::invalid(format!(
                "expected {} covariates, got {}",
                self.beta.len(),
                x.len()
            )));
        }
        let xb: f64 = x.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum();
        Ok((1..=self.categories())
            .map(|c| category_probability(&self.alpha, xb, c))
            .collect())
    }

    /// Most probable 1-based category; ties go to the lower category.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let probs = self.probabilities(x)?;
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] + 1e-12 {
                best = c;
            }
        }
        Ok(best + 1)
    }
}

struct Evaluation {
    loglik: f64,
    grad: DVector<f64>,
    /// Negative Hessian of the log-likelihood.
    info: DMatrix<f64>,
}

fn evaluate(theta: &DVector<f64>, y: &[usize], x: &DMatrix<f64>, k: usize) -> Option<Evaluation> {
    let (n, p) = (x.nrows(), x.ncols());
    let m = k - 1;
    let dim = m + p;
    let alpha = &theta.as_slice()[..m];
    let beta = theta.rows(m, p);
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut info = DMatrix::zeros(dim, dim);
    let mut ua = DVector::zeros(dim);
    let mut ub = DVector::zeros(dim);
    for i in 0..n {
        let c = y[i];
        let xb = x.row(i).dot(&beta.transpose());
        let prob = category_probability(alpha, xb, c);
        if !(prob > 0.0) {
            return None;
        }
        loglik += prob.ln();
        // a = eta_c (absent for c = K), b = eta_{c-1} (absent for c = 1)
        let term = |j: usize| {
            let f = sigmoid(alpha[j] + xb);
            (f * (1.0 - f), f * (1.0 - f) * (1.0 - 2.0 * f))
        };
        let (fa, dfa) = if c < k { term(c - 1) } else { (0.0, 0.0) };
        let (fb, dfb) = if c > 1 { term(c - 2) } else { (0.0, 0.0) };
        let ga = fa / prob;
        let gb = -fb / prob;
        let haa = dfa / prob - ga * ga;
        let hbb = -dfb / prob - gb * gb;
        let hab = -ga * gb;
        ua.fill(0.0);
        ub.fill(0.0);
        if c < k {
            ua[c - 1] = 1.0;
            ua.rows_mut(m, p).copy_from(&x.row(i).transpose());
        }
        if c > 1 {
            ub[c - 2] = 1.0;
            ub.rows_mut(m, p).copy_from(&x.row(i).transpose());
        }
        grad.axpy(ga, &ua, 1.0);
        grad.axpy(gb, &ub, 1.0);
        info.ger(-haa, &ua, &ua, 1.0);
        info.ger(-hbb, &ub, &ub, 1.0);
        info.ger(-hab, &ua, &ub, 1.0);
        info.ger(-hab, &ub, &ua, 1.0);
    }
    Some(Evaluation { loglik, grad, info })
}

fn increasing(alpha: &[f64]) -> bool {
    alpha.windows(2).all(|w| w[0] < w[1])
}

/// Maximum-likelihood proportional-odds fit by damped Newton iterations.
///
/// `y` holds 1-based categories `1..=K` with every category present.
/// Separated data, where the likelihood has no finite maximizer, surfaces as
/// `NonConvergence` carrying the score-norm trace.
pub fn fit_cumulative_logit(y: &[usize], x: &DMatrix<f64>) -> Result<CumulativeLogitFit> {
    let n = y.len();
    if x.nrows() != n {
        return Err(GplmError::invalid(format!(
            "{} covariate rows for {n} responses",
            x.nrows()
        )));
    }
    let k = y.iter().copied().max().unwrap_or(0);
    if k < 2 || y.contains(&0) {
        return Err(GplmError::invalid("categories must be 1-based with at least two levels"));
    }
    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c - 1] += 1;
    }
    if counts.contains(&0) {
        return Err(GplmError::DegenerateDataset(format!(
            "every category must be present, counts {counts:?}"
        )));
    }
    let (m, p) = (k - 1, x.ncols());
    let mut theta = DVector::zeros(m + p);
    let mut cum = 0;
    for j in 0..m {
        cum += counts[j];
        let q = cum as f64 / n as f64;
        theta[j] = (q / (1.0 - q)).ln();
    }

    let tol = 1e-9 * n as f64;
    let mut current = evaluate(&theta, y, x, k)
        .ok_or_else(|| GplmError::IllConditioned("cumulative logit: invalid start".into()))?;
    let mut trace = vec![current.grad.norm()];
    while current.grad.norm() >= tol && trace.len() <= MAX_NEWTON {
        let step = match current.info.clone().cholesky() {
            Some(ch) => ch.solve(&current.grad),
            None => current.grad.clone(),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &theta + &step * t;
            if increasing(&candidate.as_slice()[..m]) {
                if let Some(ev) = evaluate(&candidate, y, x, k) {
                    // Near the optimum the log-likelihood change drops below roundoff.
                    let slack = 1e-12 * (1.0 + current.loglik.abs());
                    if ev.loglik >= current.loglik - slack {
                        accepted = Some((candidate, ev));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((next, ev)) = accepted else {
            break;
        };
        theta = next;
        current = ev;
        trace.push(current.grad.norm());
        if theta.norm() > SEPARATION_NORM {
            break;
        }
    }
    let alpha = theta.as_slice()[..m].to_vec();
    let beta = theta.rows(m, p).into_owned();
    let saturated = (0..n).any(|i| {
        let xb = x.row(i).dot(&beta.transpose());
        category_probability(&alpha, xb, y[i]) > 1.0 - SATURATION
    });
    if current.grad.norm() < tol && theta.norm() <= SEPARATION_NORM && !saturated {
        return Ok(CumulativeLogitFit {
            alpha,
            beta,
            log_likelihood: current.loglik,
            gradient_norm: current.grad.norm(),
            iterations: trace.len() - 1,
        });
    }
    if saturated {
        log::warn!("cumulative logit: fitted probabilities numerically 0 or 1 (separated data)");
    }
    Err(GplmError::NonConvergence {
        iterations: trace.len() - 1,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intercept_only_matches_cumulative_proportions() {
        let y = [1, 1, 2, 3, 3, 3, 2, 1, 3, 3];
        let fit = fit_cumulative_logit(&y, &DMatrix::zeros(10, 0)).unwrap();
        let logit = |q: f64| (q / (1.0 - q)).ln();
        assert_abs_diff_eq!(fit.alpha[0], logit(0.3), epsilon = 1e-10);
        assert_abs_diff_eq!(fit.alpha[1], logit(0.5), epsilon = 1e-10);
        let probs = fit.probabilities(&[]).unwrap();
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(fit.predict(&[]).unwrap(), 3);
    }

    #[test]
    fn analytic_score_matches_finite_differences() {
        let y = [1, 2, 3, 2, 1, 3, 3];
        let x = DMatrix::from_row_slice(7, 2, &[0.1, 1.0, -0.3, 0.2, 0.8, -1.0, 0.0, 0.5, -1.2, 0.3, 1.5, 0.1, 0.4, -0.4]);
        let theta = DVector::from_column_slice(&[-0.4, 0.6, 0.3, -0.2]);
        let ev = evaluate(&theta, &y, &x, 3).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut up = theta.clone();
            up[j] += h;
            let mut dn = theta.clone();
            dn[j] -= h;
            let a = evaluate(&up, &y, &x, 3).unwrap();
            let b = evaluate(&dn, &y, &x, 3).unwrap();
            assert_abs_diff_eq!((a.loglik - b.loglik) / (2.0 * h), ev.grad[j], epsilon = 1e-7);
            let col = (&a.grad - &b.grad) / (2.0 * h);
            for i in 0..4 {
                assert_abs_diff_eq!(-col[i], ev.info[(i, j)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn separated_data_does_not_converge() {
        let y = [1, 1, 1, 2, 2, 2, 3, 3, 3];
        let x = DMatrix::from_fn(9, 1, |i, _| i as f64);
        match fit_cumulative_logit(&y, &x) {
            Err(GplmError::NonConvergence { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn missing_category_is_degenerate() {
        let y = [1, 1, 3, 3];
        assert!(matches!(
            fit_cumulative_logit(&y, &DMatrix::zeros(4, 0)),
            Err(GplmError::DegenerateDataset(_))
        ));
    }
}
