use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::case::{num, run_case, CaseReport, CSV_HEADER};
use super::config::SweepConfig;
use super::fit::{fit_all, local_slopes, DecayFit};
use crate::bounds::{lambda0, Verdict};
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fits: Vec<DecayFit>,
    /// `(log10 lambda midpoint, d log y / d log lambda)`
    pub local_slopes: Vec<(f64, f64)>,
    /// Name of the model with the highest `R^2`.
    pub best: String,
}

impl FitSummary {
    /// Fits `sup_t |u|^2_{L2(V)}` against lambda over the unfloored points.
    pub fn of(lambdas: &[f64], sup_v: &[f64], floored: &[bool], nu: f64) -> Result<Self> {
        let fits = fit_all(lambdas, sup_v, floored, nu)?;
        let best = fits
            .iter()
            .max_by(|a, b| a.r2.total_cmp(&b.r2))
            .map(|f| f.model.name())
            .unwrap_or_default();
        Ok(FitSummary {
            local_slopes: local_slopes(lambdas, sup_v, floored),
            fits,
            best,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cases: Vec<CaseReport>,
    pub fit: Option<FitSummary>,
    pub fit_error: Option<String>,
    /// Smallest lambda at which the sub-exponential bound was observed to hold.
    pub lambda_star: Option<f64>,
    pub lambda0: f64,
}

impl SweepReport {
    pub fn from_cases(cfg: &SweepConfig, cases: Vec<CaseReport>) -> Result<Self> {
        let lambdas: Vec<f64> = cases.iter().map(|c| c.lambda).collect();
        let sup_v: Vec<f64> = cases.iter().map(|c| c.sup_l2v_sq).collect();
        let floored: Vec<bool> = cases.iter().map(|c| c.floor_flag).collect();
        let (fit, fit_error) = match FitSummary::of(&lambdas, &sup_v, &floored, cfg.case.nu) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let lambda_star = cases
            .iter()
            .find(|c| c.theorem.verdict == Verdict::Holds)
            .map(|c| c.lambda);
        let a = cases.first().map(|c| c.a).unwrap_or(f64::NAN);
        Ok(SweepReport {
            cases,
            fit,
            fit_error,
            lambda_star,
            lambda0: lambda0(a, cfg.case.gamma.min(1.0 - 1e-12), cfg.case.nu)?,
        })
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cases {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.csv().as_bytes())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(fit) = &self.fit {
            for f in &fit.fits {
                s.push_str(&format!(
                    "fit {:<16} c = {:+.4e}  b = {:+.4e}  R^2 = {:.6}  points = {}{}\n",
                    f.model.name(),
                    f.c,
                    f.b,
                    f.r2,
                    f.points_used,
                    if f.no_decay { "  (no decay)" } else { "" }
                ));
            }
            s.push_str(&format!("best model: {}\n", fit.best));
        }
        if let Some(e) = &self.fit_error {
            s.push_str(&format!("fit: {e}\n"));
        }
        match self.lambda_star {
            Some(l) => s.push_str(&format!("empirical lambda* = {}\n", num(l))),
            None => s.push_str("empirical lambda*: bound not observed to hold\n"),
        }
        s.push_str(&format!(
            "theoretical lambda_0 = {:.4e} (the guaranteed regime usually lies past the double-precision floor)\n",
            self.lambda0
        ));
        s
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every case (concurrently), writes the configured outputs and fits
/// the decay of `sup_t |u|^2_{L2(V)}`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let run = || -> Result<Vec<CaseReport>> {
        cfg.lambdas
            .par_iter()
            .map(|&l| run_case(&cfg.case_for(l)))
            .collect()
    };
    let cases = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LabError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    if let Some(dir) = &cfg.output.json_dir {
        for c in &cases {
            c.write_json(dir)?;
        }
    }
    let report = SweepReport::from_cases(cfg, cases)?;
    if let Some(path) = &cfg.output.csv {
        report.write_csv(path)?;
    }
    Ok(report)
}

/// Rows of a sweep CSV needed for refitting.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsvRow {
    pub lambda: f64,
    pub nu: f64,
    #[serde(rename = "sup_L2V_sq")]
    pub sup_l2v_sq: f64,
    pub floor_flag: bool,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| LabError::Input(e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| LabError::Input(format!("{}: {e}", path.display()))))
        .collect()
}

/// Refits an existing sweep CSV. `nu` defaults to the value in the file.
pub fn refit_csv(path: &Path, nu: Option<f64>) -> Result<FitSummary> {
    let rows = read_sweep_csv(path)?;
    let nu = nu
        .or_else(|| rows.first().map(|r| r.nu))
        .ok_or_else(|| LabError::Fit("insufficient unfloored data: empty file".into()))?;
    let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_l2v_sq).collect();
    let floored: Vec<bool> = rows.iter().map(|r| r.floor_flag).collect();
    FitSummary::of(&lambdas, &ys, &floored, nu)
}
