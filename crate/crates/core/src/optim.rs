//! Local optimizers used by the mapping and threshold searches.

/// Outcome of a local minimization.
#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stops when the spread of simplex values falls below this.
    pub f_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 4000,
            f_tol: 1e-14,
            initial_step: 0.1,
        }
    }
}

impl NelderMead {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            simplex.push(x);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
        let mut iter = 0;
        while iter < self.max_iter {
            iter += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();
            if (values[n] - values[0]).abs() <= self.f_tol * (1.0 + values[0].abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = f(&xr);
            if fr < values[0] {
                let xe = along(gamma);
                let fe = f(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                }
                values[i] = f(&simplex[i]);
            }
        }
        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        Minimum {
            x: simplex[best].clone(),
            value: values[best],
            iterations: iter,
        }
    }
}

/// Central-difference gradient.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + step;
            let up = f(&xp);
            xp[i] = orig - step;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Quasi-Newton minimization with BFGS updates of the inverse Hessian,
/// central-difference gradients and a backtracking Armijo line search.
#[derive(Clone, Debug)]
pub struct Bfgs {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub fd_step: f64,
    /// Largest coordinate change tried by the line search.
    pub max_step: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Bfgs {
            max_iter: 500,
            grad_tol: 1e-9,
            fd_step: 1e-6,
            max_step: f64::INFINITY,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Bfgs {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> Minimum {
        self.minimize_with_gradient(&f, |x| gradient(&f, x, self.fd_step), x0)
    }

    pub fn minimize_with_gradient<F, G>(&self, f: F, grad: G, x0: &[f64]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
        G: Fn(&[f64]) -> Vec<f64>,
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut fx = f(&x);
        let mut g = grad(&x);
        let mut hinv = vec![vec![0.0; n]; n];
        for (i, row) in hinv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut iter = 0;
        while iter < self.max_iter {
            iter += 1;
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < self.grad_tol {
                break;
            }
            let mut dir: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
            let mut slope = dot(&dir, &g);
            if slope >= 0.0 {
                for (i, row) in hinv.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = 1.0;
                }
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&dir, &g);
            }
            let longest = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let mut t = if longest > self.max_step { self.max_step / longest } else { 1.0 };
            let mut accepted = None;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                let fxn = f(&xn);
                if fxn.is_finite() && fxn <= fx + 1e-4 * t * slope {
                    accepted = Some((xn, fxn));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fxn)) = accepted else { break };
            let gn = grad(&xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            let improvement = fx - fxn;
            x = xn;
            fx = fxn;
            g = gn;
            if sy > 1e-16 {
                if iter == 1 {
                    let yy = dot(&y, &y);
                    for row in hinv.iter_mut() {
                        row.iter_mut().for_each(|v| *v *= sy / yy);
                    }
                }
                let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
                let yhy = dot(&y, &hy);
                let scale = (1.0 + yhy / sy) / sy;
                for i in 0..n {
                    for j in 0..n {
                        hinv[i][j] += scale * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                    }
                }
            }
            if improvement.abs() <= 1e-16 * (1.0 + fx.abs()) && t < 1e-10 {
                break;
            }
        }
        Minimum {
            x,
            value: fx,
            iterations: iter,
        }
    }
}

/// Levenberg–Marquardt for least-squares problems `min Σ r_i(x)²` with a
/// forward-difference Jacobian.
#[derive(Clone, Debug)]
pub struct LevenbergMarquardt {
    pub max_iter: usize,
    pub tol: f64,
    pub fd_step: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        LevenbergMarquardt {
            max_iter: 200,
            tol: 1e-16,
            fd_step: 1e-7,
        }
    }
}

impl LevenbergMarquardt {
    pub fn minimize<F: Fn(&[f64]) -> Vec<f64>>(&self, residuals: F, x0: &[f64]) -> Minimum {
        use nalgebra::{DMatrix, DVector};
        let n = x0.len();
        let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let mut x = x0.to_vec();
        let mut r = residuals(&x);
        let mut fx = cost(&r);
        let mut lambda = 1e-3;
        let mut iter = 0;
        while iter < self.max_iter && fx > self.tol {
            iter += 1;
            let m = r.len();
            let mut jac = DMatrix::<f64>::zeros(m, n);
            for j in 0..n {
                let mut xp = x.clone();
                let h = self.fd_step * (1.0 + x[j].abs());
                xp[j] += h;
                let rp = residuals(&xp);
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - r[i]) / h;
                }
            }
            let rv = DVector::from_column_slice(&r);
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * rv;
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let Some(step) = a.lu().solve(&(-&jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let rn = residuals(&xn);
                let fn_ = cost(&rn);
                if fn_.is_finite() && fn_ < fx {
                    x = xn;
                    r = rn;
                    fx = fn_;
                    lambda = (lambda * 0.3).max(1e-15);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        Minimum {
            x,
            value: fx,
            iterations: iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let m = NelderMead::default().minimize(rosenbrock, &[-1.2, 1.0]);
        assert!(m.value < 1e-10, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let m = Bfgs::default().minimize(rosenbrock, &[-1.2, 1.0]);
        assert!(m.value < 1e-10, "{m:?}");
    }

    #[test]
    fn bfgs_quadratic_in_higher_dimension() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 0.5).powi(2)).sum();
        let m = Bfgs::default().minimize(f, &[0.0; 8]);
        assert!(m.x.iter().all(|v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn levenberg_marquardt_solves_rosenbrock_residuals() {
        let r = |x: &[f64]| vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])];
        let m = LevenbergMarquardt::default().minimize(r, &[-1.2, 1.0]);
        assert!(m.value < 1e-16, "{m:?}");
    }
}
