use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Floor applied to the relative-error denominator.
pub const DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn worst_rel_err(&self) -> f64 {
        self.worst().map_or(0.0, |p| p.max_rel_err)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.params.iter().all(|p| p.max_rel_err <= tol)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Compares `analytic` gradients against central differences of `loss_fn`.
///
/// Every scalar of every parameter is perturbed by `±eps`. `loss_fn` must be
/// deterministic; it is evaluated twice at the unperturbed point to confirm that.
pub fn finite_diff_check<F>(
    params: &[Matrix<f64>],
    names: &[String],
    analytic: &[Matrix<f64>],
    mut loss_fn: F,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix<f64>]) -> Result<f64>,
{
    if params.len() != analytic.len() || params.len() != names.len() {
        return Err(Error::contract(format!(
            "{} parameters, {} names, {} gradients",
            params.len(),
            names.len(),
            analytic.len()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let base_a = loss_fn(params)?;
    let base_b = loss_fn(params)?;
    if base_a.to_bits() != base_b.to_bits() {
        return Err(Error::contract(format!(
            "loss is not deterministic: {base_a} vs {base_b}"
        )));
    }

    let mut work: Vec<Matrix<f64>> = params.to_vec();
    let mut report = GradCheckReport { params: Vec::new() };
    for (p, (name, grad)) in names.iter().zip(analytic).enumerate() {
        if grad.shape() != params[p].shape() {
            return Err(Error::Dimension {
                op: "finite_diff_check",
                lhs: params[p].shape(),
                rhs: grad.shape(),
            });
        }
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..params[p].len() {
            let orig = params[p].as_slice()[i];
            work[p].as_mut_slice()[i] = orig + eps;
            let plus = loss_fn(&work)?;
            work[p].as_mut_slice()[i] = orig - eps;
            let minus = loss_fn(&work)?;
            work[p].as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice()[i];
            let err = relative_error(a, numeric);
            if err > check.max_rel_err || i == 0 {
                check.max_rel_err = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::{Axis, Tape};

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![Matrix::scalar(3.0)];
        let analytic = vec![Matrix::scalar(6.0)];
        let report = finite_diff_check(
            &theta,
            &["theta".to_string()],
            &analytic,
            |p| Ok(p[0].as_slice()[0].powi(2)),
            1e-5,
        )
        .unwrap();
        assert!(report.worst_rel_err() < 1e-9, "{report:?}");
    }

    #[test]
    fn detects_nondeterminism() {
        let mut calls = 0;
        let err = finite_diff_check(
            &[Matrix::scalar(1.0)],
            &["x".to_string()],
            &[Matrix::scalar(0.0)],
            |_| {
                calls += 1;
                Ok(calls as f64)
            },
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn pooling_loss(params: &[Matrix<f64>], x: &Matrix<f64>) -> (f64, Vec<Matrix<f64>>) {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let w = tape.param(0, params[0].clone());
        let b = tape.param(1, params[1].clone());
        let s = tape.matmul_nt(xv, w).unwrap();
        let s = tape.add_bias(s, b).unwrap();
        let e = tape.tanh(s);
        let a = tape.softmax(e, Axis::Column);
        let f = tape.weighted_sum(a, xv).unwrap();
        let probe = tape.constant(Matrix::row_vector(&[0.7, -1.3]));
        let loss = tape.dot(f, probe).unwrap();
        let mut g = tape.backward(loss).unwrap();
        (
            tape.value(loss).item().unwrap(),
            vec![g.take(0).unwrap(), g.take(1).unwrap()],
        )
    }

    #[test]
    fn tanh_gated_pooling_scorer() {
        let x = Matrix::from_rows(&[vec![0.4, -1.1], vec![1.5, 0.2], vec![-0.3, 0.9]]).unwrap();
        let params = vec![Matrix::row_vector(&[0.8, -0.6]), Matrix::scalar(0.1)];
        let (_, analytic) = pooling_loss(&params, &x);
        let report = finite_diff_check(
            &params,
            &["w".into(), "b".into()],
            &analytic,
            |p| Ok(pooling_loss(p, &x).0),
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn layernorm_gain_and_shift() {
        let x = Matrix::from_rows(&[
            vec![0.3, -1.7, 2.2, 0.1],
            vec![1.0, 0.5, -0.5, -2.0],
            vec![0.2, 0.9, 1.4, -0.6],
        ])
        .unwrap();
        let probe = Matrix::from_rows(&[
            vec![0.5, -0.2, 0.9, 1.1],
            vec![-0.4, 0.3, 0.8, -1.0],
            vec![0.6, 0.6, -0.7, 0.2],
        ])
        .unwrap();
        let eval = |p: &[Matrix<f64>]| {
            let mut tape = Tape::new();
            let xv = tape.param(2, x.clone());
            let g = tape.param(0, p[0].clone());
            let s = tape.param(1, p[1].clone());
            let y = tape.layernorm(xv, g, s).unwrap();
            let t = tape.tanh(y);
            let pr = tape.constant(probe.clone());
            let loss = tape.dot(t, pr).unwrap();
            let mut grads = tape.backward(loss).unwrap();
            (
                tape.value(loss).item().unwrap(),
                vec![grads.take(0).unwrap(), grads.take(1).unwrap()],
            )
        };
        let params = vec![
            Matrix::row_vector(&[1.2, 0.8, -0.5, 1.0]),
            Matrix::row_vector(&[0.1, -0.3, 0.2, 0.0]),
        ];
        let (_, analytic) = eval(&params);
        let report = finite_diff_check(
            &params,
            &["gain".into(), "shift".into()],
            &analytic,
            |p| Ok(eval(p).0),
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }
}
