use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Decay laws fitted as `log y = -c x(lambda) + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum DecayModel {
    /// `x = sqrt(lambda)`
    ExpSqrt,
    /// `x = lambda^nu`
    Subexp { nu: f64 },
    /// `x = log lambda`; `c` is the power `q`.
    Power,
}

impl DecayModel {
    pub fn abscissa(&self, lambda: f64) -> f64 {
        match *self {
            DecayModel::ExpSqrt => lambda.sqrt(),
            DecayModel::Subexp { nu } => lambda.powf(nu),
            DecayModel::Power => lambda.ln(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DecayModel::ExpSqrt => "exp-sqrt".into(),
            DecayModel::Subexp { nu } => format!("subexp(nu={nu})"),
            DecayModel::Power => "power".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(flatten)]
    pub model: DecayModel,
    /// Decay coefficient, with sign: positive means decay.
    pub c: f64,
    pub b: f64,
    /// Clamped to `[0, 1]`; a perfectly flat series scores 1.
    pub r2: f64,
    pub points_used: usize,
    pub no_decay: bool,
}

impl DecayFit {
    pub fn predict(&self, lambda: f64) -> f64 {
        (self.b - self.c * self.model.abscissa(lambda)).exp()
    }
}

/// Least-squares fit of `log y` against the model abscissa. Points with
/// `excluded[i]` set or `y <= 0` are dropped.
pub fn fit_decay(model: DecayModel, lambdas: &[f64], ys: &[f64], excluded: &[bool]) -> Result<DecayFit> {
    if lambdas.len() != ys.len() || excluded.len() != ys.len() {
        return Err(LabError::Fit("series lengths differ".into()));
    }
    let (xs, ls): (Vec<f64>, Vec<f64>) = lambdas
        .iter()
        .zip(ys)
        .zip(excluded)
        .filter(|((&l, &y), &ex)| !ex && y > 0.0 && y.is_finite() && l > 0.0)
        .map(|((&l, &y), _)| (model.abscissa(l), y.ln()))
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(LabError::Fit(format!(
            "insufficient unfloored data: {n} usable points, need 3"
        )));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_l = ls.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxl: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - mean_x) * (l - mean_l)).sum();
    if !(sxx > 0.0) {
        return Err(LabError::Fit("abscissae coincide".into()));
    }
    let slope = sxl / sxx;
    let b = mean_l - slope * mean_x;
    let ss_tot: f64 = ls.iter().map(|l| (l - mean_l).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ls).map(|(x, l)| (l - b - slope * x).powi(2)).sum();
    let scale = ls.iter().map(|l| l.abs()).fold(1.0, f64::max);
    let flat = ss_tot <= (1e-12 * scale).powi(2) * n as f64;
    let r2 = if flat { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let c = -slope;
    // total log-decay across the fitted range
    let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    let no_decay = flat || c * span < 1e-6;
    Ok(DecayFit {
        model,
        c,
        b,
        r2,
        points_used: n,
        no_decay,
    })
}

/// Exp-sqrt, sub-exponential and power fits on the same points.
pub fn fit_all(lambdas: &[f64], ys: &[f64], excluded: &[bool], nu: f64) -> Result<Vec<DecayFit>> {
    [DecayModel::ExpSqrt, DecayModel::Subexp { nu }, DecayModel::Power]
        .into_iter()
        .map(|m| fit_decay(m, lambdas, ys, excluded))
        .collect()
}

/// `d log y / d log lambda` between consecutive usable points, located at the
/// midpoint in `log10 lambda`.
pub fn local_slopes(lambdas: &[f64], ys: &[f64], excluded: &[bool]) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(ys)
        .zip(excluded)
        .filter(|((_, &y), &ex)| !ex && y > 0.0)
        .map(|((&l, &y), _)| (l.ln(), y.ln()))
        .collect();
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0].0 + w[1].0) / std::f64::consts::LN_10;
            (mid, (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        })
        .collect()
}
