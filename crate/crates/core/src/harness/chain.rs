use crate::bounds::{caccioppoli_factor, is_floored, BoundReport};
use crate::error::Result;
use crate::evolve::SnapshotStore;
use crate::geometry::{constant_a, shell_family, DomainSpec};
use crate::observables::{spacetime_from_series, sup_over_time};

/// Which `X(U)` a chain link measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormFamily {
    SupInTime,
    SpaceTime,
}

impl NormFamily {
    fn tag(&self) -> &'static str {
        match self {
            NormFamily::SupInTime => "sup",
            NormFamily::SpaceTime => "spacetime",
        }
    }
}

/// One report per consecutive pair of shells and per norm family, comparing
/// `X(U_j)` with `4/(lambda sigma^2) X(U_{j-1})`, `sigma = gamma a / N`.
///
/// The space-time norm is taken over the whole stored horizon. Each report
/// carries `link_ratio = X(U_j)/X(U_{j-1})`, so the product of the link
/// ratios telescopes to `X(U_N)/X(U_0)`.
pub fn verify_caccioppoli_chain(
    store: &SnapshotStore,
    domain: &DomainSpec,
    gamma: f64,
    n: usize,
    lambda: f64,
    floor_reference: f64,
) -> Result<Vec<BoundReport>> {
    let grid = store.first().grid;
    let a = constant_a(domain, &grid)?;
    let shells = shell_family(domain, gamma, n, &grid)?;
    let sigma = gamma * a / n as f64;
    let factor = caccioppoli_factor(lambda, sigma);
    let (t0, t1) = (store.first().time, store.last().time);

    let mut sup = Vec::with_capacity(shells.len());
    let mut st = Vec::with_capacity(shells.len());
    for shell in &shells {
        let series = sup_over_time(store, &shell.mask, "U")?;
        st.push(spacetime_from_series(&series, (t0, t1 - t0))?.value);
        sup.push(series.sup);
    }

    let mut reports = Vec::with_capacity(2 * n);
    for (family, values, floor_scale) in [
        (NormFamily::SupInTime, &sup, 1.0),
        (NormFamily::SpaceTime, &st, t1 - t0),
    ] {
        for j in 1..shells.len() {
            let (inner, outer) = (values[j], values[j - 1]);
            let floored = is_floored(inner, floor_reference * floor_scale)
                || is_floored(outer, floor_reference * floor_scale);
            let link = if outer > 0.0 { inner / outer } else { f64::NAN };
            let mut r = BoundReport::compare(
                format!("caccioppoli_{}_{j}", family.tag()),
                inner,
                factor * outer,
                floored,
            )
            .with_param("j", j as f64)
            .with_param("sigma", sigma)
            .with_param("factor", factor)
            .with_param("outer", outer)
            .with_param("link_ratio", link);
            if let Some(rho) = shells[j].offset {
                r = r.with_param("rho", rho);
            }
            reports.push(r);
        }
    }
    Ok(reports)
}

/// Largest measured/bound ratio among unfloored links (`NaN` if none).
pub fn worst_ratio(reports: &[BoundReport]) -> f64 {
    reports
        .iter()
        .filter(|r| r.verdict != crate::bounds::Verdict::BelowPrecisionFloor)
        .map(|r| r.ratio)
        .fold(f64::NAN, f64::max)
}
