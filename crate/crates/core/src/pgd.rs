//! Projected gradient descent with Barzilai-Borwein steps and Armijo
//! backtracking along the projection arc. Shared by the centralized oracle
//! and the per-node subproblems.

#[derive(Debug, Clone, Copy)]
pub struct PgOptions {
    pub max_iters: usize,
    /// Stop when `||x - P(x - g)||_inf <= grad_tol`.
    pub grad_tol: f64,
    pub armijo: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: 1e-8,
            armijo: 1e-4,
            min_step: 1e-14,
            max_step: 1e14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
    pub grad_map: f64,
}

/// What the caller-supplied stopping rule sees at every iterate.
pub struct PgState<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub grad: &'a [f64],
    pub value: f64,
    pub grad_map: f64,
}

pub trait PgProblem {
    /// Objective value; `f64::INFINITY` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn project(&self, x: &[f64]) -> Vec<f64>;

    /// `value(to) - value(from)`. Override when the difference can be formed
    /// without cancellation; the line search compares it against tiny
    /// decreases near the optimum.
    fn value_change(&self, from: &[f64], to: &[f64]) -> f64 {
        self.value(to) - self.value(from)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn step_to(x: &[f64], g: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(a, b)| a - t * b).collect()
}

/// Minimize from a feasible `x0`. `stop` may end the run early (returning
/// `true` marks it converged).
pub fn minimize<P, S>(problem: &P, x0: Vec<f64>, opts: &PgOptions, mut stop: S) -> PgOutcome
where
    P: PgProblem + ?Sized,
    S: FnMut(&PgState<'_>) -> bool,
{
    let mut x = problem.project(&x0);
    let mut fx = problem.value(&x);
    let mut g = problem.gradient(&x);
    let mut step = {
        let gn = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gn > 0.0 {
            (1.0 / gn).clamp(opts.min_step, opts.max_step)
        } else {
            1.0
        }
    };
    let mut grad_map = inf_norm_diff(&x, &problem.project(&step_to(&x, &g, 1.0)));
    let mut iters = 0;
    for iter in 0..opts.max_iters {
        iters = iter;
        let state = PgState {
            iter,
            x: &x,
            grad: &g,
            value: fx,
            grad_map,
        };
        if stop(&state) || grad_map <= opts.grad_tol {
            return PgOutcome {
                x,
                value: fx,
                iters: iter,
                converged: true,
                grad_map,
            };
        }

        let target = problem.project(&step_to(&x, &g, step));
        let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope = dot(&g, &d);
        if slope >= 0.0 {
            // projected step made no descent progress; shrink the step
            step = (step * 0.5).max(opts.min_step);
            if step <= opts.min_step {
                break;
            }
            continue;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let change = problem.value_change(&x, &trial);
            if change.is_finite() && change <= opts.armijo * t * slope {
                let ft = problem.value(&trial);
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let g_new = problem.gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(opts.min_step, opts.max_step)
        } else {
            (step * 2.0).min(opts.max_step)
        };
        x = x_new;
        fx = f_new;
        g = g_new;
        grad_map = inf_norm_diff(&x, &problem.project(&step_to(&x, &g, 1.0)));
    }
    let converged = grad_map <= opts.grad_tol;
    PgOutcome {
        x,
        value: fx,
        iters: iters + 1,
        converged,
        grad_map,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::project_simplex;

    struct Quadratic {
        center: Vec<f64>,
    }

    impl PgProblem for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.center).map(|(a, c)| 2.0 * (a - c)).collect()
        }
        fn project(&self, x: &[f64]) -> Vec<f64> {
            project_simplex(x, 1.0)
        }
    }

    #[test]
    fn recovers_simplex_projection() {
        let q = Quadratic {
            center: vec![2.0, 2.0, -1.0],
        };
        let out = minimize(&q, vec![0.0, 0.0, 1.0], &PgOptions::default(), |_| false);
        assert!(out.converged);
        assert!((out.x[0] - 0.5).abs() < 1e-8);
        assert!((out.x[1] - 0.5).abs() < 1e-8);
        assert!(out.x[2].abs() < 1e-8);
    }
}
