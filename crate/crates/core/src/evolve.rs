//! Implicit theta-scheme time stepping with a conjugate-gradient inner solve,
//! and the snapshot store the observables are computed from.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretize::{Field, LinearOperator, OperatorSpec};
use crate::error::{LabError, Result};

/// Largest relative CG tolerance accepted by [`SolveConfig::validate`].
pub const MAX_CG_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub lambda: f64,
    /// 1 is backward Euler, 1/2 is Crank–Nicolson.
    pub theta: f64,
    pub dt: f64,
    /// Horizon `T`.
    pub t_end: f64,
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
    /// Jacobi preconditioning of the inner solve.
    pub jacobi: bool,
    /// Snapshot every `stride` steps once `t > dense_until`.
    pub stride: usize,
    /// Every step is stored up to this time.
    pub dense_until: f64,
}

impl SolveConfig {
    /// `dt = min(1e-3, 1/(4 lambda))`, backward Euler, dense snapshots for
    /// `t <= 10/lambda`.
    pub fn for_lambda(lambda: f64, t_end: f64) -> Self {
        let dt = if lambda > 0.0 {
            (1e-3f64).min(0.25 / lambda)
        } else {
            1e-3
        };
        SolveConfig {
            lambda,
            theta: 1.0,
            dt,
            t_end,
            cg_rel_tol: 1e-12,
            cg_max_iter: 10_000,
            jacobi: false,
            stride: 1,
            dense_until: if lambda > 0.0 { 10.0 / lambda } else { 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(LabError::input("lambda must be finite and nonnegative"));
        }
        if !(self.dt > 0.0) {
            return Err(LabError::input("dt must be positive"));
        }
        if !(self.t_end > self.dt) {
            return Err(LabError::input("horizon must exceed dt"));
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol <= MAX_CG_REL_TOL) {
            return Err(LabError::input("cg_rel_tol must lie in (0, 1e-6]"));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(LabError::input("theta must lie in [1/2, 1]"));
        }
        if self.stride == 0 || self.cg_max_iter == 0 {
            return Err(LabError::input("stride and cg_max_iter must be positive"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CgStats {
    pub iterations: usize,
    /// True relative residual `|b - Ax| / |b|` at exit.
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from the
/// contents of `x`. `inv_diag` enables Jacobi preconditioning.
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    inv_diag: Option<&[f64]>,
) -> Result<CgStats> {
    let n = a.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgStats::default());
    }
    let target = rel_tol * b_norm;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    };

    loop {
        // (re)start from the true residual
        a.apply(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let true_res = dot(&r, &r).sqrt();
        if true_res <= target {
            return Ok(CgStats {
                iterations,
                rel_residual: true_res / b_norm,
            });
        }
        if iterations >= max_iter {
            return Err(LabError::Solver {
                message: "conjugate gradient did not converge".into(),
                residual: true_res / b_norm,
                iterations,
            });
        }
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            a.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(LabError::Solver {
                    message: "system matrix is not positive definite".into(),
                    residual: dot(&r, &r).sqrt() / b_norm,
                    iterations,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// `Id - c A` for `c = theta dt`.
struct ShiftedSystem<'a> {
    op: &'a OperatorSpec,
    shift: f64,
}

impl LinearOperator for ShiftedSystem<'_> {
    fn len(&self) -> usize {
        self.op.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - self.shift * *yi;
        }
    }
}

/// Reusable state for repeated steps with one operator and configuration.
pub struct Stepper<'a> {
    op: &'a OperatorSpec,
    cfg: &'a SolveConfig,
    inv_diag: Option<Vec<f64>>,
    rhs: Vec<f64>,
    work: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(op: &'a OperatorSpec, cfg: &'a SolveConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.lambda != op.lambda {
            return Err(LabError::input(format!(
                "config lambda {} differs from operator lambda {}",
                cfg.lambda, op.lambda
            )));
        }
        let shift = cfg.theta * cfg.dt;
        let inv_diag = cfg.jacobi.then(|| {
            op.diagonal()
                .into_iter()
                .map(|d| 1.0 / (1.0 - shift * d))
                .collect()
        });
        Ok(Stepper {
            op,
            cfg,
            inv_diag,
            rhs: vec![0.0; op.len()],
            work: vec![0.0; op.len()],
        })
    }

    /// Advances `u` by one step in place.
    pub fn advance(&mut self, u: &mut Field) -> Result<CgStats> {
        let explicit = (1.0 - self.cfg.theta) * self.cfg.dt;
        if explicit > 0.0 {
            self.op.apply(&u.values, &mut self.work);
            for ((r, ui), wi) in self.rhs.iter_mut().zip(&u.values).zip(&self.work) {
                *r = ui + explicit * wi;
            }
        } else {
            self.rhs.copy_from_slice(&u.values);
        }
        let system = ShiftedSystem {
            op: self.op,
            shift: self.cfg.theta * self.cfg.dt,
        };
        let stats = conjugate_gradient(
            &system,
            &self.rhs,
            &mut u.values,
            self.cfg.cg_rel_tol,
            self.cfg.cg_max_iter,
            self.inv_diag.as_deref(),
        )?;
        u.time += self.cfg.dt;
        Ok(stats)
    }
}

/// One theta-scheme step:
/// `(Id - theta dt A) u+ = (Id + (1 - theta) dt A) u`.
pub fn step(u: &Field, op: &OperatorSpec, cfg: &SolveConfig) -> Result<(Field, CgStats)> {
    if u.grid != op.grid {
        return Err(LabError::input("field and operator grids differ"));
    }
    if !u.is_finite() {
        return Err(LabError::input("field contains non-finite values"));
    }
    let mut stepper = Stepper::new(op, cfg)?;
    let mut next = u.clone();
    let stats = stepper.advance(&mut next)?;
    Ok((next, stats))
}

/// Per-step bookkeeping, recorded for every step regardless of the stride.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub cg_iterations: usize,
    pub cg_rel_residual: f64,
    /// `|u|^2_{L2(Omega)}`
    pub l2_sq: f64,
    pub integral: f64,
    pub min: f64,
    pub max: f64,
}

impl StepRecord {
    fn of(step: usize, u: &Field, stats: CgStats) -> Self {
        StepRecord {
            step,
            time: u.time,
            cg_iterations: stats.iterations,
            cg_rel_residual: stats.rel_residual,
            l2_sq: u.values.iter().map(|v| v * v).sum::<f64>() * u.grid.cell_volume(),
            integral: u.integral(),
            min: u.min(),
            max: u.max(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnapshotStore {
    /// Strictly increasing in time; the first entry is the initial field.
    pub snapshots: Vec<Field>,
    pub steps: Vec<StepRecord>,
    pub cg_rel_tol: f64,
}

impl SnapshotStore {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|f| f.time).collect()
    }

    pub fn first(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("store is never empty")
    }

    pub fn max_cg_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.cg_rel_residual)
            .fold(0.0, f64::max)
    }

    /// Writes `snapshot_NNNNNN.bin` dumps and an `index.csv` with the
    /// per-step record.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut snaps = BufWriter::new(File::create(dir.join("snapshots.csv"))?);
        writeln!(snaps, "snapshot,time,file")?;
        for (i, f) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{i:06}.bin");
            f.write_binary(BufWriter::new(File::create(dir.join(&name))?))?;
            writeln!(snaps, "{i},{:.17e},{name}", f.time)?;
        }
        let mut index = BufWriter::new(File::create(dir.join("index.csv"))?);
        writeln!(
            index,
            "step,time,cg_iterations,cg_rel_residual,l2_sq,integral,min,max"
        )?;
        for s in &self.steps {
            writeln!(
                index,
                "{},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.step,
                s.time,
                s.cg_iterations,
                s.cg_rel_residual,
                s.l2_sq,
                s.integral,
                s.min,
                s.max
            )?;
        }
        Ok(())
    }
}

/// Runs the scheme from `u0` to the horizon, keeping snapshots according to
/// the stride policy.
pub fn evolve(u0: &Field, op: &OperatorSpec, cfg: &SolveConfig) -> Result<SnapshotStore> {
    if u0.grid != op.grid {
        return Err(LabError::input("field and operator grids differ"));
    }
    if !u0.is_finite() {
        return Err(LabError::input("initial field contains non-finite values"));
    }
    let mut stepper = Stepper::new(op, cfg)?;
    let n_steps = cfg.steps();
    let mut u = u0.clone();
    u.time = 0.0;
    let mut store = SnapshotStore {
        snapshots: vec![u.clone()],
        steps: vec![StepRecord::of(0, &u, CgStats::default())],
        cg_rel_tol: cfg.cg_rel_tol,
    };
    for n in 1..=n_steps {
        let stats = stepper
            .advance(&mut u)
            .map_err(|e| e.with_context(format!("step {n} at lambda = {}", cfg.lambda)))?;
        // times are multiples of dt, not accumulated sums
        u.time = n as f64 * cfg.dt;
        store.steps.push(StepRecord::of(n, &u, stats));
        let keep = n == n_steps || n % cfg.stride == 0 || u.time <= cfg.dense_until * (1.0 + 1e-12);
        if keep {
            store.snapshots.push(u.clone());
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_operator, build_grid, build_grid_box, Grid};
    use crate::geometry::{BoxDomain, DomainSpec, RegionMask};
    use std::f64::consts::PI;

    fn killing_everywhere(grid: Grid, lambda: f64) -> OperatorSpec {
        OperatorSpec::new(grid, lambda, RegionMask::full(grid)).unwrap()
    }

    #[test]
    fn backward_euler_on_constants_inside_obstacle() {
        let g = build_grid_box(&BoxDomain::unit(2), &[8, 8]).unwrap();
        let op = killing_everywhere(g, 10.0);
        let cfg = SolveConfig {
            dt: 0.1,
            ..SolveConfig::for_lambda(10.0, 1.0)
        };
        let (u, stats) = step(&Field::constant(g, 1.0), &op, &cfg).unwrap();
        assert!(u.values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(stats.rel_residual <= cfg.cg_rel_tol);
    }

    #[test]
    fn constants_preserved_without_killing() {
        let d = DomainSpec::reference(2);
        let g = build_grid(&d, &[16, 16]).unwrap();
        let op = assemble_operator(&g, &d, 0.0).unwrap();
        let cfg = SolveConfig::for_lambda(0.0, 0.1);
        let (u, _) = step(&Field::constant(g, 2.5), &op, &cfg).unwrap();
        assert!(u.values.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    fn cosine_mode(g: Grid) -> Field {
        Field::from_fn(g, |p| (PI * p[0]).cos() * (PI * p[1]).cos())
    }

    #[test]
    fn manufactured_single_step() {
        // exact decay exp(-2 pi^2 dt) of the separable cosine mode, up to the
        // scheme's truncation error
        let g = build_grid_box(&BoxDomain::unit(2), &[64, 64]).unwrap();
        let op = OperatorSpec::new(g, 0.0, RegionMask::empty(g)).unwrap();
        let u0 = cosine_mode(g);
        let dt = 1e-3;
        for (theta, order) in [(1.0, 1), (0.5, 2)] {
            let cfg = SolveConfig {
                theta,
                dt,
                ..SolveConfig::for_lambda(0.0, 0.1)
            };
            let (u1, _) = step(&u0, &op, &cfg).unwrap();
            let decay = (-2.0 * PI * PI * dt).exp();
            let h = g.spacing[0];
            let err = u1
                .values
                .iter()
                .zip(&u0.values)
                .map(|(a, b)| (a - decay * b).abs())
                .fold(0.0, f64::max);
            let budget = 2.0 * PI.powi(4) * dt * h * h + 2.0 * (2.0 * PI * PI * dt).powi(order + 1);
            assert!(err < budget, "theta {theta}: {err} vs {budget}");
        }
    }

    #[test]
    fn evolve_bookkeeping() {
        let g = build_grid_box(&BoxDomain::unit(1), &[16]).unwrap();
        let op = OperatorSpec::new(g, 0.0, RegionMask::empty(g)).unwrap();
        let cfg = SolveConfig {
            dt: 0.01,
            ..SolveConfig::for_lambda(0.0, 0.03)
        };
        let store = evolve(&Field::from_fn(g, |p| p[0]), &op, &cfg).unwrap();
        let times = store.times();
        assert_eq!(times.len(), 4);
        for (i, t) in times.iter().enumerate() {
            assert!((t - 0.01 * i as f64).abs() < 1e-15);
        }
        assert_eq!(store.steps.len(), 4);
    }

    #[test]
    fn stride_policy() {
        let g = build_grid_box(&BoxDomain::unit(1), &[16]).unwrap();
        let op = OperatorSpec::new(g, 100.0, RegionMask::full(g)).unwrap();
        let cfg = SolveConfig {
            dt: 0.01,
            stride: 4,
            dense_until: 0.025,
            ..SolveConfig::for_lambda(100.0, 0.1)
        };
        let store = evolve(&Field::constant(g, 1.0), &op, &cfg).unwrap();
        let steps: Vec<usize> = store
            .times()
            .iter()
            .map(|t| (t / 0.01).round() as usize)
            .collect();
        assert_eq!(steps, vec![0, 1, 2, 4, 8, 10]);
    }

    #[test]
    fn neumann_conservation_and_contraction() {
        let d = DomainSpec::reference(2);
        let g = build_grid(&d, &[32, 32]).unwrap();
        let op = assemble_operator(&g, &d, 0.0).unwrap();
        let u0 = Field::from_fn(g, |p| (p[0] * 7.0).sin() + p[1]);
        let cfg = SolveConfig::for_lambda(0.0, 0.05);
        let store = evolve(&u0, &op, &cfg).unwrap();
        let i0 = store.steps[0].integral;
        for s in &store.steps {
            assert!((s.integral - i0).abs() <= 1e-8 * i0.abs());
        }
        for w in store.steps.windows(2) {
            assert!(w[1].l2_sq.sqrt() <= w[0].l2_sq.sqrt() + 1e-12 * store.steps[0].l2_sq.sqrt());
        }
    }

    #[test]
    fn jacobi_matches_plain_cg() {
        let d = DomainSpec::reference(2);
        let g = build_grid(&d, &[32, 32]).unwrap();
        let op = assemble_operator(&g, &d, 500.0).unwrap();
        let u0 = Field::from_fn(g, |p| p[0] + p[1]);
        let plain = SolveConfig::for_lambda(500.0, 0.01);
        let jac = SolveConfig {
            jacobi: true,
            ..plain.clone()
        };
        let a = step(&u0, &op, &plain).unwrap().0;
        let b = step(&u0, &op, &jac).unwrap().0;
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        let ok = SolveConfig::for_lambda(10.0, 1.0);
        assert!(ok.validate().is_ok());
        assert!((ok.dt - 1e-3).abs() < 1e-18);
        assert_eq!(SolveConfig::for_lambda(1e4, 1.0).dt, 2.5e-5);
        for bad in [
            SolveConfig { dt: 0.0, ..ok.clone() },
            SolveConfig { t_end: 1e-4, ..ok.clone() },
            SolveConfig { cg_rel_tol: 1e-5, ..ok.clone() },
            SolveConfig { theta: 0.4, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let g = build_grid_box(&BoxDomain::unit(2), &[32, 32]).unwrap();
        let op = OperatorSpec::new(g, 0.0, RegionMask::empty(g)).unwrap();
        let cfg = SolveConfig {
            dt: 1.0,
            cg_max_iter: 2,
            ..SolveConfig::for_lambda(0.0, 10.0)
        };
        let u0 = Field::from_fn(g, |p| (p[0] * 13.0).sin() * (p[1] * 5.0).cos());
        match step(&u0, &op, &cfg) {
            Err(LabError::Solver { iterations, residual, .. }) => {
                assert_eq!(iterations, 2);
                assert!(residual > cfg.cg_rel_tol);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn lambda_mismatch_rejected() {
        let g = build_grid_box(&BoxDomain::unit(1), &[8]).unwrap();
        let op = OperatorSpec::new(g, 1.0, RegionMask::full(g)).unwrap();
        let cfg = SolveConfig::for_lambda(2.0, 1.0);
        assert!(step(&Field::constant(g, 1.0), &op, &cfg).is_err());
    }
}
