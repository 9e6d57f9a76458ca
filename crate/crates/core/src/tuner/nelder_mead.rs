//! Nelder–Mead simplex search (maximizing).

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

/// Stop rule: the best value improved by less than `tolerance` over the last `window` evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence<T> {
    pub tolerance: T,
    pub window: usize,
}

struct Tracker<'a, T, F> {
    f: &'a mut F,
    evals: usize,
    budget: usize,
    best: T,
    best_x: Vec<T>,
    history: Vec<T>,
    conv: Convergence<T>,
}

impl<T: Scalar, F: FnMut(&[T]) -> T> Tracker<'_, T, F> {
    fn eval(&mut self, x: &[T]) -> T {
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = T::neg_infinity();
        }
        self.evals += 1;
        if v > self.best || self.best_x.is_empty() {
            self.best = v;
            self.best_x = x.to_vec();
        }
        self.history.push(self.best);
        v
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    fn converged(&self) -> bool {
        let w = self.conv.window;
        let n = self.history.len();
        n > w && self.history[n - 1] - self.history[n - 1 - w] < self.conv.tolerance
    }
}

/// Maximizes `f` from `x0` with an axis-aligned initial simplex of size `step`.
pub fn maximize<T: Scalar, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    step: T,
    budget: usize,
    conv: Convergence<T>,
) -> SimplexOutcome<T> {
    let n = x0.len();
    let mut t = Tracker {
        f: &mut f,
        evals: 0,
        budget: budget.max(1),
        best: T::neg_infinity(),
        best_x: Vec::new(),
        history: Vec::new(),
        conv,
    };
    let half = T::lit(0.5);
    let two = T::lit(2.0);

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let v0 = t.eval(x0);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        if t.exhausted() {
            break;
        }
        let mut x = x0.to_vec();
        x[i] = x[i] + step;
        let v = t.eval(&x);
        simplex.push((x, v));
    }

    let mut converged = false;
    while simplex.len() == n + 1 && !t.exhausted() {
        if t.converged() {
            converged = true;
            break;
        }
        // Best first; stable sort keeps ties in insertion order.
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let worst = simplex[n].clone();
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c = *c + *xi;
            }
        }
        let nt = T::from_usize(n).unwrap();
        for c in centroid.iter_mut() {
            *c = *c / nt;
        }
        let along = |coef: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| *c + coef * (*c - *w))
                .collect()
        };

        let xr = along(T::one());
        let vr = t.eval(&xr);
        if vr > simplex[0].1 {
            if t.exhausted() {
                simplex[n] = (xr, vr);
                break;
            }
            let xe = along(two);
            let ve = t.eval(&xe);
            simplex[n] = if ve > vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr > simplex[n - 1].1 {
            simplex[n] = (xr, vr);
            continue;
        }
        if t.exhausted() {
            break;
        }
        let (xc, vc) = if vr > worst.1 {
            let xc = along(half);
            let vc = t.eval(&xc);
            (xc, vc)
        } else {
            let xc = along(-half);
            let vc = t.eval(&xc);
            (xc, vc)
        };
        if vc > worst.1.max(vr) {
            simplex[n] = (xc, vc);
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if t.exhausted() {
                break;
            }
            let x: Vec<T> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| *b + half * (*v - *b))
                .collect();
            let v = t.eval(&x);
            *vertex = (x, v);
        }
    }
    if !converged && t.converged() {
        converged = true;
    }
    SimplexOutcome {
        x: t.best_x.clone(),
        value: t.best,
        evals: t.evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV: Convergence<f64> = Convergence {
        tolerance: 1e-12,
        window: 50,
    };

    #[test]
    fn quadratic_bowl() {
        let r = maximize(|x: &[f64]| -(x[0] - 1.0).powi(2), &[0.0], 0.5, 2000, CONV);
        assert!((r.x[0] - 1.0).abs() < 1e-4);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_valley() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = maximize(f, &[-1.2, 1.0], 0.5, 20_000, CONV);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn budget_is_respected() {
        let mut calls = 0;
        let r = maximize(
            |x: &[f64]| {
                calls += 1;
                -x.iter().map(|v| v * v).sum::<f64>()
            },
            &[3.0, -2.0, 1.0],
            0.3,
            17,
            CONV,
        );
        assert_eq!(r.evals, 17);
        assert_eq!(calls, 17);
        assert!(!r.converged);
    }
}
