use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use crate::augment::CommonEda;
use crate::snn::ModelKind;
use crate::{Error, Result};

/// Significance level below which a coefficient is reported as significant.
pub const ALPHA: f64 = 0.05;

/// Two-sided p-value of a Student-t statistic with `df` degrees of freedom,
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

/// Ordinary least squares fit with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n: usize,
    pub df: usize,
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub residual_std: f64,
    pub residuals: Vec<f64>,
}

fn coefficient(name: &str, estimate: f64, var: f64, df: usize) -> Coefficient {
    let se = var.max(0.0).sqrt();
    // an exact fit leaves no residual variance: decide by the estimate alone
    let (t, p) = if se > 0.0 {
        let t = estimate / se;
        (t, t_two_sided_p(t, df as f64))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    };
    Coefficient {
        name: name.to_string(),
        estimate,
        std_error: se,
        t,
        p,
        significant: p < ALPHA,
    }
}

/// Regresses `y` on the columns of `x` (one row per observation) plus an
/// intercept via Householder QR. Standard errors come from `σ̂²(XᵀX)⁻¹`.
pub fn ols(x: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<OlsFit> {
    let n = y.len();
    let p = names.len() + 1;
    if x.len() != n || x.iter().any(|r| r.len() != names.len()) {
        return Err(Error::Shape(
            "design matrix does not match the response".into(),
        ));
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "{n} observations cannot identify {p} coefficients with residual degrees of freedom"
        )));
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| design.column(j).norm()).fold(0.0, f64::max);
    for j in 0..p {
        if r[(j, j)].abs() <= 1e-10 * scale.max(1.0) {
            let column = if j == 0 { "intercept" } else { names[j - 1] };
            return Err(Error::RankDeficient {
                column: column.to_string(),
            });
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient {
            column: "unknown".into(),
        })?;
    let fitted = &design * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let df = n - p;
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma2 = rss / df as f64;
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, so Var(β_j) = σ̂² Σ_k (R⁻¹)_jk²
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient {
            column: "unknown".into(),
        })?;
    let var = |j: usize| sigma2 * r_inv.row(j).iter().map(|v| v * v).sum::<f64>();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    Ok(OlsFit {
        n,
        df,
        intercept: coefficient("intercept", beta[0], var(0), df),
        coefficients: (1..p)
            .map(|j| coefficient(names[j - 1], beta[j], var(j), df))
            .collect(),
        r_squared,
        residual_std: sigma2.sqrt(),
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub model: ModelKind,
    #[serde(flatten)]
    pub fit: OlsFit,
}

/// Accuracy on five 0/1 transform indicators plus an intercept, for one
/// model kind.
pub fn ols_regress(sweep: &SweepResult, model: ModelKind) -> Result<RegressionReport> {
    let names: Vec<&str> = CommonEda::ALL.iter().map(|e| e.name()).collect();
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = sweep
        .records_for(model)
        .map(|r| {
            let row = CommonEda::ALL
                .iter()
                .map(|e| if r.mask & e.bit() != 0 { 1.0 } else { 0.0 })
                .collect();
            (row, r.accuracy)
        })
        .unzip();
    if y.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "sweep has no {} records",
            model.name()
        )));
    }
    Ok(RegressionReport {
        model,
        fit: ols(&x, &y, &names)?,
    })
}

impl RegressionReport {
    pub fn to_text(&self) -> String {
        let f = &self.fit;
        let mut s = format!(
            "model: {}  n = {}  df = {}  R² = {:.4}  residual sd = {:.4}\n\n{:<10} {:>10} {:>10} {:>9} {:>10}\n",
            self.model.name(),
            f.n,
            f.df,
            f.r_squared,
            f.residual_std,
            "term",
            "estimate",
            "std.err",
            "t",
            "p"
        );
        for c in std::iter::once(&f.intercept).chain(&f.coefficients) {
            s.push_str(&format!(
                "{:<10} {:>10.5} {:>10.5} {:>9.3} {:>10.4e}{}\n",
                c.name,
                c.estimate + 0.0,
                c.std_error,
                c.t + 0.0,
                c.p,
                if c.significant { "  *" } else { "" }
            ));
        }
        // `+ 0.0` turns a negative zero into a positive one
        s.push_str(&format!("\n* p < {ALPHA}\n"));
        s
    }
}
