use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::expr::Expr;

const MAX_ITERS: usize = 100;
const FTOL: f64 = 1e-12;

/// Mean squared error on `data`; `+∞` when undefined or non-finite.
pub fn mse_on(expr: &Expr, data: &Dataset) -> f64 {
    match expr.evaluate(data) {
        Ok(v) => mse_of(&v, &data.y),
        Err(_) => f64::INFINITY,
    }
}

pub(crate) fn mse_of(pred: &[f64], y: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    let m = s / y.len().max(1) as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

fn residuals(expr: &Expr, params: &[f64], data: &Dataset) -> Option<DVector<f64>> {
    let v = expr.with_constants(params).evaluate(data).ok()?;
    let r = DVector::from_iterator(v.len(), v.iter().zip(&data.y).map(|(p, t)| p - t));
    r.iter().all(|x| x.is_finite()).then_some(r)
}

/// Refines the constants of `expr` by damped Gauss–Newton (Levenberg–Marquardt)
/// with a forward-difference Jacobian. The result is returned only when it
/// strictly lowers the MSE on `data`; otherwise `expr` is returned unchanged.
pub fn fit_constants(expr: &Expr, data: &Dataset) -> Expr {
    fit_constants_with_mse(expr, data).0
}

/// [`fit_constants`] together with the MSE of the returned expression.
pub fn fit_constants_with_mse(expr: &Expr, data: &Dataset) -> (Expr, f64) {
    let start_mse = mse_on(expr, data);
    let mut params = expr.constants();
    if params.is_empty() || data.n_rows() == 0 {
        return (expr.clone(), start_mse);
    }
    let n = data.n_rows();
    let p = params.len();
    let Some(mut r) = residuals(expr, &params, data) else {
        return (expr.clone(), start_mse);
    };
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERS {
        let mut jac = DMatrix::zeros(n, p);
        let mut ok = true;
        for j in 0..p {
            let h = 1e-7 * (1.0 + params[j].abs());
            let mut shifted = params.clone();
            shifted[j] += h;
            match residuals(expr, &shifted, data) {
                Some(rj) => jac.set_column(j, &((rj - &r) / h)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..p {
                a[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match residuals(expr, &trial, data) {
                Some(rt) if rt.norm_squared() < cost => {
                    let new_cost = rt.norm_squared();
                    let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    params = trial;
                    r = rt;
                    cost = new_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = rel > FTOL;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved || cost == 0.0 {
            break;
        }
    }
    let fitted = expr.with_constants(&params);
    let fitted_mse = mse_on(&fitted, data);
    if fitted_mse < start_mse {
        (fitted, fitted_mse)
    } else {
        (expr.clone(), start_mse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn nguyen1c() -> Dataset {
        let x: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let y = x.iter().map(|x| 3.39 * x * x * x + 2.12 * x * x + 1.78 * x).collect();
        Dataset::new(vec!["x".into()], vec![x], y).unwrap()
    }

    #[test]
    fn single_coefficient() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 1.78 * x).collect();
        let d = Dataset::new(vec!["x".into()], vec![x], y).unwrap();
        let fitted = fit_constants(&parse("1.0*x").unwrap(), &d);
        assert!((fitted.constants()[0] - 1.78).abs() < 1e-6, "{fitted}");
    }

    #[test]
    fn no_constants_unchanged() {
        let e = parse("x*x + x").unwrap();
        assert_eq!(fit_constants(&e, &nguyen1c()), e);
    }

    #[test]
    fn cubic_coefficients() {
        let fitted = fit_constants(&parse("1*x*x*x + 1*x*x + 1*x").unwrap(), &nguyen1c());
        let c = fitted.constants();
        for (got, want) in c.iter().zip([3.39, 2.12, 1.78]) {
            assert!((got - want).abs() < 1e-4, "{fitted}");
        }
    }

    #[test]
    fn never_increases_mse() {
        let d = nguyen1c();
        for s in ["log(0.5*x)", "exp(9*x)*0", "sin(3*x) + 0.1", "1/(x - 0.3)"] {
            let e = parse(s).unwrap();
            let before = mse_on(&e, &d);
            let after = mse_on(&fit_constants(&e, &d), &d);
            assert!(after <= before || before.is_infinite(), "{s}: {before} -> {after}");
        }
    }
}
