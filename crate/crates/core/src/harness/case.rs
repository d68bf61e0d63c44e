use std::fs;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::chain::{verify_caccioppoli_chain, worst_ratio};
use super::config::CaseConfig;
use crate::bounds::{
    is_floored, iterated_product_bound_with, iteration_count, lambda0, lemma_base_bound_spacetime,
    lemma_base_bound_sup, mean_value_ratio, refined_bound, theorem1_report, BoundParams,
    BoundReport, MeanValueReport, Verdict, FLOOR_REL,
};
use crate::discretize::{assemble_operator, build_initial, grad_l2_sq, Field, Grid};
use crate::error::Result;
use crate::evolve::{evolve, SnapshotStore};
use crate::geometry::{constant_a, offset_region, DomainSpec};
use crate::observables::{l2_sq, spacetime_from_series, sup_over_time, NormSeries};

pub const CSV_HEADER: &str = "lambda,nu,gamma,a,h,dt,grad_g_sq,sup_L2V_sq,st_L2V_sq,lemma21_bound,lemma21_verdict,thm11_bound,thm11_verdict_tier,cacc_worst_ratio,refined_bound_t*,mv_ratio_normalized,floor_flag";

/// A finished run with everything the reports are computed from.
pub struct Simulation {
    pub config: CaseConfig,
    pub domain: DomainSpec,
    pub grid: Grid,
    pub a: f64,
    pub initial: Field,
    pub store: SnapshotStore,
    /// `|∇g_h|^2_{L2(Omega_1)}`
    pub grad_g_sq: f64,
    /// `|g_h|^2_{L2(Omega_1)}`
    pub g_sq: f64,
    /// `|g_h|^2_{L2(Omega)}`
    pub u0_l2_sq: f64,
}

impl Simulation {
    /// Squared norms below this are treated as round-off.
    pub fn floor(&self) -> f64 {
        FLOOR_REL * self.u0_l2_sq
    }

    pub fn params(&self) -> BoundParams {
        BoundParams {
            lambda: self.config.lambda,
            nu: self.config.nu,
            gamma: self.config.gamma,
            a: self.a,
            grad_g_sq: self.grad_g_sq,
            g_sq: self.g_sq,
            m: self.grid.dim,
        }
    }

    pub fn series(&self, region: Region) -> Result<NormSeries> {
        let mask = match region {
            Region::Obstacle => offset_region(&self.domain.obstacle, 0.0, &self.grid)?,
            Region::Subdomain => offset_region(&self.domain.subdomain, 0.0, &self.grid)?,
        };
        sup_over_time(&self.store, &mask, region.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Obstacle,
    Subdomain,
}

impl Region {
    fn label(&self) -> &'static str {
        match self {
            Region::Obstacle => "Omega_0",
            Region::Subdomain => "V",
        }
    }
}

pub fn simulate(cfg: &CaseConfig) -> Result<Simulation> {
    cfg.validate()?;
    let domain = cfg.domain();
    let grid = cfg.grid()?;
    let a = constant_a(&domain, &grid)?;
    let initial = build_initial(&grid, &domain, &cfg.initial)?;
    let exterior = offset_region(&domain.obstacle, 0.0, &grid)?.complement();
    let grad_g_sq = grad_l2_sq(&initial, &exterior)?;
    let g_sq = l2_sq(&initial, &exterior)?;
    let u0_l2_sq = initial.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
    let op = assemble_operator(&grid, &domain, cfg.lambda)?;
    let solve = cfg.solve_config();
    info!(
        "lambda = {:e}: {} cells, {} steps of {:e}",
        cfg.lambda,
        grid.len(),
        solve.steps(),
        solve.dt
    );
    let store = evolve(&initial, &op, &solve)?;
    debug!(
        "lambda = {:e}: {} snapshots, max CG residual {:e}",
        cfg.lambda,
        store.snapshots.len(),
        store.max_cg_residual()
    );
    Ok(Simulation {
        config: cfg.clone(),
        domain,
        grid,
        a,
        initial,
        store,
        grad_g_sq,
        g_sq,
        u0_l2_sq,
    })
}

/// Conservation, contraction and positivity of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub snapshots: usize,
    pub max_cg_rel_residual: f64,
    pub max_cg_iterations: usize,
    /// `|∫u(T) - ∫g| / ∫g`
    pub integral_drift: f64,
    /// Largest `(|u_{n+1}|^2 - |u_n|^2) / |u_n|^2` over steps.
    pub max_l2_increase: f64,
    /// `min_{t,x} u / max g`
    pub min_over_max_g: f64,
}

impl Diagnostics {
    pub fn of(store: &SnapshotStore) -> Self {
        let steps = &store.steps;
        let first = steps[0];
        let last = steps[steps.len() - 1];
        let max_l2_increase = steps
            .windows(2)
            .map(|w| {
                if w[0].l2_sq > 0.0 {
                    (w[1].l2_sq - w[0].l2_sq) / w[0].l2_sq
                } else {
                    w[1].l2_sq
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let min = steps.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
        Diagnostics {
            steps: steps.len() - 1,
            snapshots: store.snapshots.len(),
            max_cg_rel_residual: store.max_cg_residual(),
            max_cg_iterations: steps.iter().map(|s| s.cg_iterations).max().unwrap_or(0),
            integral_drift: if first.integral != 0.0 {
                ((last.integral - first.integral) / first.integral).abs()
            } else {
                last.integral.abs()
            },
            max_l2_increase,
            min_over_max_g: if first.max > 0.0 { min / first.max } else { min },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub lambda: f64,
    pub nu: f64,
    pub gamma: f64,
    pub dim: usize,
    pub cells: usize,
    pub a: f64,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_shells: usize,
    pub grad_g_sq: f64,
    pub g_sq: f64,
    pub floor: f64,
    pub sup_l2_obstacle_sq: f64,
    pub st_l2_obstacle_sq: f64,
    pub sup_l2v_sq: f64,
    pub st_l2v_sq: f64,
    /// Time of the largest `L2(V)` norm.
    pub t_star: f64,
    pub floor_flag: bool,
    pub lambda0: f64,
    pub lemma_sup: BoundReport,
    pub lemma_spacetime: BoundReport,
    pub theorem: BoundReport,
    pub iterated_product: BoundReport,
    pub chain: Vec<BoundReport>,
    pub cacc_worst_ratio: f64,
    pub refined: BoundReport,
    pub mean_value: Option<MeanValueReport>,
    pub diagnostics: Diagnostics,
    pub notes: Vec<String>,
}

fn lemma_verdict(a: &BoundReport, b: &BoundReport) -> Verdict {
    let rank = |v: Verdict| match v {
        Verdict::Holds => 0,
        Verdict::NotApplicable => 1,
        Verdict::BelowPrecisionFloor => 2,
        Verdict::Fails => 3,
    };
    if rank(a.verdict) >= rank(b.verdict) {
        a.verdict
    } else {
        b.verdict
    }
}

pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:e}")
    }
}

impl CaseReport {
    pub fn lemma21_verdict(&self) -> Verdict {
        lemma_verdict(&self.lemma_sup, &self.lemma_spacetime)
    }

    pub fn csv_row(&self) -> String {
        [
            num(self.lambda),
            num(self.nu),
            num(self.gamma),
            num(self.a),
            num(self.h),
            num(self.dt),
            num(self.grad_g_sq),
            num(self.sup_l2v_sq),
            num(self.st_l2v_sq),
            num(self.lemma_sup.bound),
            self.lemma21_verdict().as_str().to_string(),
            num(self.theorem.bound),
            self.theorem
                .tier
                .clone()
                .unwrap_or_else(|| self.theorem.verdict.as_str().to_string()),
            num(self.cacc_worst_ratio),
            num(self.refined.bound),
            num(self.mean_value.as_ref().map_or(f64::NAN, |m| m.normalized)),
            self.floor_flag.to_string(),
        ]
        .join(",")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("case_{}.json", num(self.lambda)));
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Evolves and runs every verification for one value of lambda.
pub fn run_case(cfg: &CaseConfig) -> Result<CaseReport> {
    let context = format!("lambda = {:e}", cfg.lambda);
    simulate(cfg)
        .and_then(|sim| analyze(&sim))
        .map_err(|e| e.with_context(context))
}

pub fn analyze(sim: &Simulation) -> Result<CaseReport> {
    let cfg = &sim.config;
    let lambda = cfg.lambda;
    let solve = cfg.solve_config();
    let floor = sim.floor();
    let (t0, t1) = (sim.store.first().time, sim.store.last().time);
    let horizon = (t0, t1 - t0);

    let obstacle = sim.series(Region::Obstacle)?;
    let v = sim.series(Region::Subdomain)?;
    let st_obstacle = spacetime_from_series(&obstacle, horizon)?.value;
    let st_v = spacetime_from_series(&v, horizon)?.value;
    let floor_flag = is_floored(v.sup, sim.u0_l2_sq);
    let n_shells = iteration_count(lambda.max(1.0), cfg.n_exponent());
    let mut notes = Vec::new();

    let reports = if lambda > 0.0 {
        bound_reports(sim, &obstacle, &v, st_obstacle, n_shells, &mut notes)?
    } else {
        Reports::not_applicable()
    };
    let lambda0 = lambda0(sim.a, cfg.gamma.min(1.0 - 1e-12), cfg.nu)?;

    Ok(CaseReport {
        lambda,
        nu: cfg.nu,
        gamma: cfg.gamma,
        dim: sim.grid.dim,
        cells: cfg.cells,
        a: sim.a,
        h: sim.grid.max_spacing(),
        dt: solve.dt,
        t_end: t1,
        n_shells,
        grad_g_sq: sim.grad_g_sq,
        g_sq: sim.g_sq,
        floor,
        sup_l2_obstacle_sq: obstacle.sup,
        st_l2_obstacle_sq: st_obstacle,
        sup_l2v_sq: v.sup,
        st_l2v_sq: st_v,
        t_star: v.argmax_time,
        floor_flag,
        lambda0,
        lemma_sup: reports.lemma_sup,
        lemma_spacetime: reports.lemma_spacetime,
        theorem: reports.theorem,
        iterated_product: reports.iterated_product,
        cacc_worst_ratio: worst_ratio(&reports.chain),
        chain: reports.chain,
        refined: reports.refined,
        mean_value: reports.mean_value,
        diagnostics: Diagnostics::of(&sim.store),
        notes,
    })
}

struct Reports {
    lemma_sup: BoundReport,
    lemma_spacetime: BoundReport,
    theorem: BoundReport,
    iterated_product: BoundReport,
    chain: Vec<BoundReport>,
    refined: BoundReport,
    mean_value: Option<MeanValueReport>,
}

impl Reports {
    fn not_applicable() -> Self {
        let na = |name: &str| BoundReport::not_applicable(name, "no absorption at lambda = 0");
        Reports {
            lemma_sup: na("lemma_sup"),
            lemma_spacetime: na("lemma_spacetime"),
            theorem: na("theorem_sub_exponential"),
            iterated_product: na("iterated_product"),
            chain: Vec::new(),
            refined: na("refined_at_t_star"),
            mean_value: None,
        }
    }
}

fn bound_reports(
    sim: &Simulation,
    obstacle: &NormSeries,
    v: &NormSeries,
    st_obstacle: f64,
    n_shells: usize,
    notes: &mut Vec<String>,
) -> Result<Reports> {
    let cfg = &sim.config;
    let p = sim.params();
    let horizon = sim.store.last().time - sim.store.first().time;
    let floor_flag = is_floored(v.sup, sim.u0_l2_sq);

    let lemma_sup = BoundReport::compare(
        "lemma_sup",
        obstacle.sup,
        lemma_base_bound_sup(&p),
        is_floored(obstacle.sup, sim.u0_l2_sq),
    )
    .with_param("argmax_time", obstacle.argmax_time);
    let lemma_spacetime = BoundReport::compare(
        "lemma_spacetime",
        st_obstacle,
        lemma_base_bound_spacetime(&p),
        is_floored(st_obstacle, sim.u0_l2_sq * horizon),
    )
    .with_param("horizon", horizon)
    .with_note("space-time norm over the simulated horizon only");
    let theorem = theorem1_report(&p, v.sup, floor_flag)?
        .with_note("uses |grad g|^2 as in the theorem statement, not the H1 norm");
    let product = iterated_product_bound_with(&p, n_shells);
    let iterated_product = BoundReport::compare("iterated_product", v.sup, product.value, floor_flag)
        .with_param("n", n_shells as f64)
        .with_param("ln_bound", product.ln);
    let chain = verify_caccioppoli_chain(&sim.store, &sim.domain, cfg.gamma, n_shells, p.lambda, sim.u0_l2_sq)?;

    let sigma = cfg.gamma * sim.a / n_shells as f64;
    let at_star = refined_bound(&p, n_shells, sigma, v.argmax_time)?;
    let mut worst = f64::NAN;
    for &(t, value) in &v.entries {
        if t > 0.0 && !is_floored(value, sim.u0_l2_sq) {
            let b = refined_bound(&p, n_shells, sigma, t)?.value;
            worst = worst.max(value / b);
        }
    }
    let refined = BoundReport::compare("refined_at_t_star", v.sup, at_star.value, floor_flag)
        .with_param("t_star", v.argmax_time)
        .with_param("n", n_shells as f64)
        .with_param("sigma", sigma)
        .with_param("worst_ratio_over_snapshots", worst);

    let mean_value = if sim.initial.min() >= 0.0 {
        let start = cfg.mv_start.unwrap_or(v.argmax_time);
        match mean_value_ratio(&sim.store, &sim.domain, sim.a, cfg.mv_gamma, start, sim.u0_l2_sq) {
            Ok(mv) => Some(mv),
            Err(e) => {
                notes.push(format!("mean-value check skipped: {e}"));
                None
            }
        }
    } else {
        notes.push("mean-value check needs nonnegative initial data".into());
        None
    };
    Ok(Reports {
        lemma_sup,
        lemma_spacetime,
        theorem,
        iterated_product,
        chain,
        refined,
        mean_value,
    })
}
