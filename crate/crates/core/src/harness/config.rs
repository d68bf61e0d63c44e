use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretize::{build_grid, Grid, InitialDataSpec};
use crate::error::{LabError, Result};
use crate::evolve::SolveConfig;
use crate::geometry::DomainSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub theta: f64,
    /// Defaults to `min(1e-3, 1/(4 lambda))`.
    pub dt: Option<f64>,
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
    pub jacobi: bool,
    /// Defaults to the number of steps in `1e-3` time units.
    pub stride: Option<usize>,
    /// Defaults to `max(10/lambda, 1/sqrt(lambda))`, which covers the peak
    /// of the `L2(V)` norm.
    pub dense_until: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            theta: 1.0,
            dt: None,
            cg_rel_tol: 1e-12,
            cg_max_iter: 10_000,
            jacobi: false,
            stride: None,
            dense_until: None,
        }
    }
}

/// One simulation and the verifications run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseConfig {
    pub dim: usize,
    /// Cells per axis.
    pub cells: usize,
    pub lambda: f64,
    pub t_end: f64,
    pub nu: f64,
    pub gamma: f64,
    /// Exponent in `N = floor(lambda^n_exponent)`; defaults to `nu`.
    pub n_exponent: Option<f64>,
    /// Cylinder parameter of the mean-value check, in `(0, 1/2)`.
    pub mv_gamma: f64,
    /// Start of the mean-value window; defaults to the time of the largest
    /// `L2(V)` norm.
    pub mv_start: Option<f64>,
    /// Defaults to the concentric-ball reference geometry.
    pub domain: Option<DomainSpec>,
    pub initial: InitialDataSpec,
    pub solver: SolverOptions,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            dim: 2,
            cells: 256,
            lambda: 1e3,
            t_end: 0.1,
            nu: 0.25,
            gamma: 0.45,
            n_exponent: None,
            mv_gamma: 0.25,
            mv_start: None,
            domain: None,
            initial: InitialDataSpec::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl CaseConfig {
    pub fn domain(&self) -> DomainSpec {
        self.domain
            .clone()
            .unwrap_or_else(|| DomainSpec::reference(self.dim))
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(&self.domain(), &vec![self.cells; self.dim])
    }

    pub fn n_exponent(&self) -> f64 {
        self.n_exponent.unwrap_or(self.nu)
    }

    pub fn solve_config(&self) -> SolveConfig {
        let mut cfg = SolveConfig::for_lambda(self.lambda, self.t_end);
        let o = &self.solver;
        cfg.theta = o.theta;
        if let Some(dt) = o.dt {
            cfg.dt = dt;
        }
        cfg.dense_until = match o.dense_until {
            Some(d) => d,
            None if self.lambda > 0.0 => (10.0 / self.lambda).max(self.lambda.sqrt().recip()),
            None => 0.0,
        };
        cfg.stride = o
            .stride
            .unwrap_or_else(|| ((1e-3 / cfg.dt).round() as usize).max(1));
        cfg.cg_rel_tol = o.cg_rel_tol;
        cfg.cg_max_iter = o.cg_max_iter;
        cfg.jacobi = o.jacobi;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(LabError::Config("dim must be 1, 2 or 3".into()));
        }
        if self.domain().dim() != self.dim {
            return Err(LabError::Config("domain dimension differs from dim".into()));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(LabError::Config("nu must lie in (0, 1/2)".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(LabError::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.mv_gamma > 0.0 && self.mv_gamma < 0.5) {
            return Err(LabError::Config("mv_gamma must lie in (0, 1/2)".into()));
        }
        if let Some(e) = self.n_exponent {
            if !(0.0..0.5).contains(&e) {
                return Err(LabError::Config("n_exponent must lie in [0, 1/2)".into()));
            }
        }
        self.solve_config()
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    /// One `case_<lambda>.json` per case.
    pub json_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    /// Worker threads; `None` uses every core. Results do not depend on it.
    pub threads: Option<usize>,
    /// Template; its `lambda` is replaced per case.
    pub case: CaseConfig,
    pub output: OutputConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: default_lambdas(),
            threads: None,
            case: CaseConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// `{10^2, 10^2.5, 10^3, 10^3.5, 10^4}`
pub fn default_lambdas() -> Vec<f64> {
    (0..5).map(|i| 10f64.powf(2.0 + 0.5 * i as f64)).collect()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.len() < 3 {
            return Err(LabError::Config("a sweep needs at least 3 values of lambda".into()));
        }
        if self.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Config("lambda grid must be strictly increasing".into()));
        }
        for &l in &self.lambdas {
            self.case_for(l).validate()?;
        }
        Ok(())
    }

    pub fn case_for(&self, lambda: f64) -> CaseConfig {
        CaseConfig {
            lambda,
            ..self.case.clone()
        }
    }
}

pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_toml(&text).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = SweepConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: SweepConfig = parse_toml(&text).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_file() {
        let cfg: SweepConfig = parse_toml(
            r#"
            lambdas = [100.0, 1000.0, 10000.0]
            [case]
            cells = 64
            [case.solver]
            theta = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.case.cells, 64);
        assert_eq!(cfg.case.solver.theta, 0.5);
        assert_eq!(cfg.case.nu, 0.25);
        let sc = cfg.case_for(1e4).solve_config();
        assert_eq!(sc.dt, 2.5e-5);
    }

    #[test]
    fn custom_domain_parses() {
        let cfg: CaseConfig = parse_toml(
            r#"
            dim = 2
            [domain.omega]
            lower = [0.0, 0.0]
            upper = [2.0, 1.0]
            [domain.obstacle]
            kind = "ellipse"
            center = [1.0, 0.5]
            semi_axes = [0.5, 0.3]
            [domain.subdomain]
            kind = "ball"
            center = [1.0, 0.5]
            radius = 0.1
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.domain().omega.upper, vec![2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_sweeps() {
        let mut cfg = SweepConfig {
            lambdas: vec![1.0, 2.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.lambdas = vec![1.0, 3.0, 2.0];
        assert!(cfg.validate().is_err());
        assert!(parse_toml::<SweepConfig>("lambdaz = [1.0]").is_err());
    }
}
