//! The acceptance suite: every quantitative criterion of the laboratory,
//! each reduced to one pass/fail line.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use log::info;

use super::case::{analyze, simulate, CaseReport, Diagnostics, Region, Simulation};
use super::chain::verify_caccioppoli_chain;
use super::config::{CaseConfig, SolverOptions, SweepConfig};
use super::oracle::DenseOracle;
use super::sweep::{run_sweep, FitSummary};
use crate::bounds::{lambda0, maclaurin_m, refined_bound, remainder_r, BoundParams, MeanValueReport};
use crate::discretize::{build_grid_box, Field, OperatorSpec};
use crate::error::{LabError, Result};
use crate::evolve::{evolve, SolveConfig};
use crate::geometry::{offset_region, BoxDomain, RegionMask};
use crate::harness::fit::DecayModel;
use crate::observables::l2_sq;

#[derive(Clone, Debug)]
pub struct AcceptanceOptions {
    /// Where the determinism check writes its CSVs; a fresh directory under
    /// the system temp dir by default.
    pub scratch: Option<PathBuf>,
    /// Print each line as soon as it is decided.
    pub echo: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions {
            scratch: None,
            echo: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<34} {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

struct Suite {
    echo: bool,
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: u8, name: &'static str, start: Instant, result: Result<(bool, String)>) {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        let o = Outcome {
            id,
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        if self.echo {
            println!("{o}");
        }
        self.outcomes.push(o);
    }
}

/// Grid counts of the manufactured-solution study.
pub const MMS_CELLS: [usize; 3] = [64, 128, 256];
/// Grid of the lambda sweep behind the energy, shell and decay criteria.
pub const SWEEP_CELLS: usize = 256;
pub const SWEEP_T_END: f64 = 0.1;
/// Width of each shell in the shell-inequality check.
pub const SHELL_WIDTH: f64 = 0.05;
pub const MV_CELLS: usize = 64;
pub const MV_LAMBDAS: [f64; 2] = [1e2, 1e3];
pub const MV_T_END: f64 = 0.04;
pub const ORACLE_CELLS: usize = 16;
pub const ORACLE_LAMBDA: f64 = 1e3;
pub const ORACLE_TIMES: [f64; 2] = [0.01, 0.1];

fn near(a: f64, b: f64) -> bool {
    (a.log10() - b.log10()).abs() < 1e-9
}

/// `L∞` error at `t = 0.1` of Crank–Nicolson with `dt = h/10` against
/// `cos(πx) cos(πy) e^{-2π²t}` with no absorption.
pub fn manufactured_errors(cells: &[usize]) -> Result<Vec<f64>> {
    cells
        .iter()
        .map(|&n| {
            let grid = build_grid_box(&BoxDomain::unit(2), &[n, n])?;
            let op = OperatorSpec::new(grid, 0.0, RegionMask::empty(grid))?;
            let mode = |x: &[f64]| (PI * x[0]).cos() * (PI * x[1]).cos();
            let u0 = Field::from_fn(grid, mode);
            let t = 0.1;
            let dt = grid.max_spacing() / 10.0;
            let cfg = SolveConfig {
                theta: 0.5,
                dt,
                stride: usize::MAX,
                dense_until: 0.0,
                ..SolveConfig::for_lambda(0.0, t)
            };
            let store = evolve(&u0, &op, &cfg)?;
            let last = store.last();
            let decay = (-2.0 * PI * PI * last.time).exp();
            Ok((0..grid.len())
                .map(|i| (last.values[i] - mode(&grid.center(i)) * decay).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

fn mms() -> Result<(bool, String)> {
    let errs = manufactured_errors(&MMS_CELLS)?;
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let passed = orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
    Ok((
        passed,
        format!(
            "Linf errors [{}], observed orders {orders:.3?} (target 2.0 +/- 0.2)",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn reference_case(lambda: f64, cells: usize) -> CaseConfig {
    CaseConfig {
        lambda,
        cells,
        t_end: SWEEP_T_END,
        ..CaseConfig::default()
    }
}

fn sweep_config() -> SweepConfig {
    SweepConfig {
        case: reference_case(1e3, SWEEP_CELLS),
        ..SweepConfig::default()
    }
}

fn lemma(cases: &[CaseReport]) -> Result<(bool, String)> {
    let mut passed = true;
    let mut parts = Vec::new();
    for l in [1e2, 1e3, 1e4] {
        let c = cases
            .iter()
            .find(|c| near(c.lambda, l))
            .ok_or_else(|| LabError::input(format!("sweep lacks lambda = {l:e}")))?;
        passed &= c.lemma_sup.holds() && c.lemma_spacetime.holds();
        parts.push(format!(
            "lambda={l:.0e}: sup margin {:.1}x, space-time margin {:.1}x",
            1.0 / c.lemma_sup.ratio,
            1.0 / c.lemma_spacetime.ratio
        ));
    }
    Ok((passed, parts.join("; ")))
}

/// Shell chains with `N` shells of width [`SHELL_WIDTH`], `N = 1, 2, 3`.
fn shells(sim: &Simulation) -> Result<(bool, String)> {
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut floored = 0;
    let mut total = 0;
    for n in 1..=3 {
        let gamma = (n as f64 * SHELL_WIDTH / sim.a).min(1.0);
        let reports = verify_caccioppoli_chain(
            &sim.store,
            &sim.domain,
            gamma,
            n,
            sim.config.lambda,
            sim.u0_l2_sq,
        )?;
        for r in &reports {
            total += 1;
            passed &= r.ratio <= 1.0;
            worst = worst.max(r.ratio);
            if r.verdict == crate::bounds::Verdict::BelowPrecisionFloor {
                floored += 1;
            }
        }
    }
    Ok((
        passed,
        format!(
            "lambda={:.0e}, factor {:.3}: worst ratio {worst:.3e} over {total} links \
             (both norm families; {floored} links touch the precision floor and are reported raw)",
            sim.config.lambda,
            4.0 / (sim.config.lambda * SHELL_WIDTH * SHELL_WIDTH)
        ),
    ))
}

fn theorem(cases: &[CaseReport], cfg: &SweepConfig) -> Result<(bool, String)> {
    let big: Vec<&CaseReport> = cases.iter().filter(|c| c.lambda >= 1e3 * (1.0 - 1e-9)).collect();
    let unfloored: Vec<&&CaseReport> = big.iter().filter(|c| !c.floor_flag).collect();
    let passed = !unfloored.is_empty() && unfloored.iter().all(|c| c.theorem.holds());
    let margins: Vec<String> = unfloored
        .iter()
        .map(|c| format!("lambda={:.3e}: margin {:.1}x", c.lambda, 1.0 / c.theorem.ratio))
        .collect();
    let floored: Vec<String> = big
        .iter()
        .filter(|c| c.floor_flag)
        .map(|c| format!("{:.0e}", c.lambda))
        .collect();
    let l0 = lambda0(cases[0].a, cfg.case.gamma, cfg.case.nu)?;
    Ok((
        passed,
        format!(
            "{}; floored: [{}]; lambda_0 = {l0:.3e}, so the guaranteed tier lies far past the \
             double-precision floor and only the empirical tier is testable",
            margins.join(", "),
            floored.join(", ")
        ),
    ))
}

fn decay(fit: Option<&FitSummary>) -> Result<(bool, String)> {
    let fit = fit.ok_or_else(|| LabError::Fit("no fit available".into()))?;
    let slopes = &fit.local_slopes;
    if slopes.len() < 2 {
        return Err(LabError::Fit("insufficient unfloored data for slope trend".into()));
    }
    let drops: Vec<f64> = slopes
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let r2 = |pick: fn(&DecayModel) -> bool| {
        fit.fits
            .iter()
            .find(|f| pick(&f.model))
            .map(|f| f.r2)
            .unwrap_or(f64::NAN)
    };
    let sqrt_r2 = r2(|m| matches!(m, DecayModel::ExpSqrt));
    let power_r2 = r2(|m| matches!(m, DecayModel::Power));
    let passed = drops.iter().all(|d| *d <= -0.5) && sqrt_r2 >= 0.99 && power_r2 <= sqrt_r2 - 0.01;
    let s: Vec<String> = slopes.iter().map(|(_, s)| format!("{s:.2}")).collect();
    Ok((
        passed,
        format!(
            "local slopes [{}], change per decade {drops:.2?}; R^2 exp-sqrt {sqrt_r2:.5}, power {power_r2:.5}",
            s.join(", ")
        ),
    ))
}

fn maclaurin() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for s in [0.1f64, 1.0, 10.0, 30.0] {
        for k in [0, 5, 50] {
            let total = maclaurin_m(k, s)? + remainder_r(k, s)?;
            worst = worst.max((total - s.exp()).abs() / s.exp());
        }
    }
    let p = BoundParams {
        lambda: 1e3,
        nu: 0.25,
        gamma: 0.45,
        a: 0.15,
        grad_g_sq: 1.0,
        g_sq: 1.0,
        m: 2,
    };
    let at_zero = refined_bound(&p, 5, 0.01, 0.0)?.value;
    Ok((
        worst <= 1e-12 && at_zero == 0.0,
        format!("worst relative identity error {worst:.2e}; refined bound at t=0 is {at_zero:e}"),
    ))
}

fn mean_value_case(lambda: f64) -> CaseConfig {
    let ag = 0.15 * 0.25;
    CaseConfig {
        dim: 3,
        cells: MV_CELLS,
        lambda,
        t_end: MV_T_END,
        mv_gamma: 0.25,
        solver: SolverOptions {
            dt: Some(ag * ag / 10.0),
            dense_until: Some(MV_T_END),
            ..SolverOptions::default()
        },
        ..CaseConfig::default()
    }
}

fn mean_value(reports: &[MeanValueReport]) -> Result<(bool, String)> {
    let [lo, hi] = reports else {
        return Err(LabError::input("expected two mean-value reports"));
    };
    let spread = (lo.normalized / hi.normalized).max(hi.normalized / lo.normalized);
    let drop = lo.sup_q / hi.sup_q;
    let passed = !lo.floored && !hi.floored && spread <= 2.0 && drop >= 10.0;
    Ok((
        passed,
        format!(
            "normalized constants {:.4e} / {:.4e} (spread {spread:.3}x, limit 2); \
             wide-window spread {:.3}x; sup_Q u^2 drops {drop:.3e}x (need 10)",
            lo.normalized,
            hi.normalized,
            match (lo.wide_normalized, hi.wide_normalized) {
                (Some(a), Some(b)) => (a / b).max(b / a),
                _ => f64::NAN,
            }
        ),
    ))
}

fn oracle() -> Result<(bool, String)> {
    let case = CaseConfig {
        cells: ORACLE_CELLS,
        lambda: ORACLE_LAMBDA,
        t_end: ORACLE_TIMES[1],
        solver: SolverOptions {
            theta: 0.5,
            dt: Some(1e-4),
            stride: Some(100),
            dense_until: Some(0.0),
            ..SolverOptions::default()
        },
        ..CaseConfig::default()
    };
    let sim = simulate(&case)?;
    let op = crate::discretize::assemble_operator(&sim.grid, &sim.domain, ORACLE_LAMBDA)?;
    let dense = DenseOracle::new(&op)?;
    let mask = offset_region(&sim.domain.obstacle, 0.0, &sim.grid)?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in ORACLE_TIMES {
        let snap = sim
            .store
            .snapshots
            .iter()
            .find(|f| (f.time - t).abs() < 1e-9)
            .ok_or_else(|| LabError::input(format!("no snapshot at t = {t}")))?;
        let stepped = l2_sq(snap, &mask)?;
        let exact = l2_sq(&dense.propagate(&sim.initial, t)?, &mask)?;
        let rel = (stepped - exact).abs() / exact;
        worst = worst.max(rel);
        parts.push(format!("t={t}: {stepped:.6e} vs {exact:.6e} ({:.2e})", rel));
    }
    Ok((worst <= 0.01, parts.join("; ")))
}

fn determinism(scratch: &std::path::Path) -> Result<(bool, String)> {
    let mut cfg = SweepConfig {
        lambdas: vec![1e2, 1e3, 1e4],
        case: CaseConfig {
            cells: 48,
            t_end: 0.02,
            ..CaseConfig::default()
        },
        ..SweepConfig::default()
    };
    let mut bytes = Vec::new();
    for (i, threads) in [1, 2].into_iter().enumerate() {
        let path = scratch.join(format!("sweep_{i}.csv"));
        cfg.threads = Some(threads);
        cfg.output.csv = Some(path.clone());
        run_sweep(&cfg)?;
        bytes.push(fs::read(&path)?);
    }
    let same = bytes[0] == bytes[1];
    Ok((
        same,
        format!(
            "two sweeps ({} bytes each, 1 and 2 worker threads) {}",
            bytes[0].len(),
            if same { "are byte-identical" } else { "differ" }
        ),
    ))
}

/// Runs every criterion, printing one line each when `echo` is set.
pub fn run_acceptance(opts: &AcceptanceOptions) -> Vec<Outcome> {
    let mut suite = Suite {
        echo: opts.echo,
        outcomes: Vec::new(),
    };
    let mut runs: Vec<(String, Diagnostics, bool)> = Vec::new();

    let t = Instant::now();
    suite.record(1, "manufactured-solution order", t, mms());

    // cases run one after another: only one snapshot store is alive at a time
    let t = Instant::now();
    let cfg = sweep_config();
    let mut cases = Vec::new();
    let mut shell_result = Err(LabError::input("sweep lacks lambda = 1e4"));
    let mut shell_time = 0.0;
    let sweep_ok = (|| -> Result<()> {
        for &l in &cfg.lambdas {
            let sim = simulate(&cfg.case_for(l)).map_err(|e| e.with_context(format!("lambda = {l:e}")))?;
            if near(l, 1e4) {
                let ts = Instant::now();
                shell_result = shells(&sim);
                shell_time = ts.elapsed().as_secs_f64();
            }
            let report = analyze(&sim)?;
            info!("lambda = {l:e}: sup |u|^2_V = {:e}", report.sup_l2v_sq);
            runs.push((format!("sweep lambda={l:.3e}"), report.diagnostics.clone(), true));
            cases.push(report);
        }
        Ok(())
    })();
    let sweep = sweep_ok.and_then(|_| super::sweep::SweepReport::from_cases(&cfg, cases));
    let sweep_time = t.elapsed().as_secs_f64() - shell_time;
    match &sweep {
        Ok(report) => {
            suite.record(4, "base energy estimate", t, lemma(&report.cases));
            suite.record(5, "shell energy inequality", t, shell_result);
            suite.record(6, "sub-exponential bound (empirical)", t, theorem(&report.cases, &cfg));
            suite.record(7, "super-algebraic decay", t, decay(report.fit.as_ref()));
        }
        Err(e) => {
            for (id, name) in [
                (4, "base energy estimate"),
                (5, "shell energy inequality"),
                (6, "sub-exponential bound (empirical)"),
                (7, "super-algebraic decay"),
            ] {
                suite.record(id, name, t, Err(LabError::input(format!("sweep failed: {e}"))));
            }
        }
    }
    info!("sweep took {sweep_time:.1} s");

    let t = Instant::now();
    suite.record(8, "Maclaurin identity", t, maclaurin());

    let t = Instant::now();
    let mv = MV_LAMBDAS
        .iter()
        .map(|&l| {
            let sim = simulate(&mean_value_case(l))?;
            let report = analyze(&sim)?;
            runs.push((format!("3D lambda={l:.0e}"), report.diagnostics.clone(), true));
            report
                .mean_value
                .ok_or_else(|| LabError::input(format!("no mean-value report: {:?}", report.notes)))
        })
        .collect::<Result<Vec<_>>>();
    suite.record(9, "mean-value ratio stability", t, mv.and_then(|r| mean_value(&r)));

    let t = Instant::now();
    suite.record(10, "dense-oracle equivalence", t, oracle());

    let t = Instant::now();
    let scratch = opts.scratch.clone().unwrap_or_else(|| {
        std::env::temp_dir().join(format!("coupling-lab-verify-{}", std::process::id()))
    });
    let det = fs::create_dir_all(&scratch)
        .map_err(LabError::from)
        .and_then(|_| determinism(&scratch));
    if opts.scratch.is_none() {
        let _ = fs::remove_dir_all(&scratch);
    }
    suite.record(11, "sweep determinism", t, det);

    let t = Instant::now();
    let conservation = (|| -> Result<(bool, String)> {
        let sim = simulate(&CaseConfig {
            lambda: 0.0,
            cells: 64,
            ..reference_case(0.0, 64)
        })?;
        let d = Diagnostics::of(&sim.store);
        let series = sim.series(Region::Obstacle)?;
        runs.push(("lambda=0".into(), d.clone(), true));
        let worst = runs
            .iter()
            .map(|(_, d, _)| d.max_l2_increase)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            d.integral_drift <= 1e-8 && worst <= 1e-12,
            format!(
                "lambda=0 integral drift {:.2e} (limit 1e-8); largest per-step L2 growth over {} runs {worst:.2e} (limit 1e-12); obstacle norm {:.3e}",
                d.integral_drift,
                runs.len(),
                series.sup
            ),
        ))
    })();
    suite.record(2, "conservation and contraction", t, conservation);

    let t = Instant::now();
    let positivity: Result<(bool, String)> = {
        let worst = runs
            .iter()
            .filter(|(_, _, backward_euler)| *backward_euler)
            .map(|(name, d, _)| (name.as_str(), d.min_over_max_g))
            .fold(("", f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        Ok((
            worst.1 >= -1e-12,
            format!("min u / max g = {:.3e} (worst run: {})", worst.1, worst.0),
        ))
    };
    suite.record(3, "positivity", t, positivity);

    suite.outcomes.sort_by_key(|o| o.id);
    suite.outcomes
}
