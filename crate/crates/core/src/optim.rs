//! Derivative-free minimization with the Nelder-Mead simplex method.
//!
//! Coefficients follow the dimension-adaptive choice of Gao and Han, which
//! behaves much better than the textbook (1, 2, 0.5, 0.5) set once the
//! problem has more than a handful of parameters.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Stop once every vertex is within this distance (max-norm) of the best.
    pub diameter_tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-9,
            max_evals: 50_000,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let nf = n as f64;
        let (alpha, gamma, rho, sigma) = if n > 1 {
            (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
        } else {
            (1.0, 2.0, 0.5, 0.5)
        };

        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), v0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        let mut iterations = 0usize;
        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if diameter(&simplex) < self.diameter_tol {
                converged = true;
                break;
            }
            if evals >= self.max_evals {
                break;
            }
            iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let worst = simplex[n].1;
            let second = simplex[n - 1].1;
            let best = simplex[0].1;

            along(&centroid, &simplex[n].0, -alpha, &mut trial);
            let fr = eval(&trial, &mut evals);

            if fr < best {
                let reflected = trial.clone();
                along(&centroid, &simplex[n].0, -alpha * gamma, &mut trial);
                let fe = eval(&trial, &mut evals);
                simplex[n] = if fe < fr {
                    (trial.clone(), fe)
                } else {
                    (reflected, fr)
                };
                continue;
            }
            if fr < second {
                simplex[n] = (trial.clone(), fr);
                continue;
            }
            // contraction, outside or inside
            let (coef, bound) = if fr < worst {
                (-alpha * rho, fr)
            } else {
                (rho, worst)
            };
            along(&centroid, &simplex[n].0, coef, &mut trial);
            let fc = eval(&trial, &mut evals);
            if fc < bound {
                simplex[n] = (trial.clone(), fc);
                continue;
            }
            // shrink toward the best vertex
            let x_best = simplex[0].0.clone();
            for (x, v) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&x_best) {
                    *xi = bi + sigma * (*xi - bi);
                }
                *v = eval(x, &mut evals);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            evaluations: evals,
            converged,
        }
    }
}

/// out = c + t (w − c)
fn along(c: &[f64], w: &[f64], t: f64, out: &mut [f64]) {
    for ((o, ci), wi) in out.iter_mut().zip(c).zip(w) {
        *o = ci + t * (wi - ci);
    }
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(x, _)| {
            x.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let nm = NelderMead::default();
        let m = nm.minimize(
            |x| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum(),
            &[0.0; 6],
        );
        assert!(m.converged);
        assert!(m.x.iter().all(|v| (v - 0.5).abs() < 1e-8), "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            initial_step: 0.5,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_evaluation_budget() {
        let nm = NelderMead {
            max_evals: 100,
            diameter_tol: 0.0,
            ..Default::default()
        };
        let m = nm.minimize(|x| x.iter().map(|v| v.abs()).sum(), &[1.0; 4]);
        assert!(!m.converged);
        assert!(m.evaluations <= 100 + 8);
    }

    #[test]
    fn never_worse_than_start() {
        let nm = NelderMead::default();
        let start = [0.3, -0.7, 2.0];
        let f = |x: &[f64]| x.iter().map(|v| v.sin() + 0.1 * v * v).sum::<f64>();
        let m = nm.minimize(f, &start);
        assert!(m.value <= f(&start));
    }
}
