//! Profile compliance checking and the search for the cheapest hybrid
//! scheme: minimum analog power for a given digital layer, then a grid
//! search with local refinement over the digital layer itself.

use crate::bounds::{self, LowerBoundResult};
use crate::error::{Error, Result};
use crate::profiles::{Profile, QualityGrid, Spacing};
use crate::schemes::{hybrid_fidelity, multilayer_fidelity, HybridParams, LayeredParams};
use crate::search;
use rayon::prelude::*;
use std::io::Write;

/// Schemes may undershoot the profile by at most this (scaled) margin and
/// still count as compliant; absorbs grid and refinement roundoff.
pub const MARGIN_TOL: f64 = 1e-9;

/// Scheme parameters accepted by [`check_compliance`].
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeParams {
    Hybrid(HybridParams),
    Layered(LayeredParams),
}

impl SchemeParams {
    pub fn fidelity(&self, q: f64) -> Result<f64> {
        match self {
            SchemeParams::Hybrid(hp) => hybrid_fidelity(hp, q),
            SchemeParams::Layered(lp) => multilayer_fidelity(lp, q),
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            SchemeParams::Hybrid(hp) => vec![hp.q_1],
            SchemeParams::Layered(lp) => lp.thresholds.clone(),
        }
    }
}

impl From<HybridParams> for SchemeParams {
    fn from(hp: HybridParams) -> Self {
        SchemeParams::Hybrid(hp)
    }
}

impl From<LayeredParams> for SchemeParams {
    fn from(lp: LayeredParams) -> Self {
        SchemeParams::Layered(lp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Grid point where the margin is smallest.
    pub worst_q: f64,
    /// Smallest margin over the grid; see [`scaled_margin`].
    pub margin: f64,
}

/// Shortfall of the achieved fidelity, scaled by the profile's remaining
/// headroom `1 - F(q)`. The scaling makes a fixed deficit count for more
/// where the profile is nearly saturated, where closing it takes unboundedly
/// more power; an absolute deficit would vanish there and mask genuine
/// infeasibility at large `q`.
pub fn scaled_margin(f_scheme: f64, f_profile: f64) -> f64 {
    (f_scheme - f_profile) / (1.0 - f_profile).max(1e-300)
}

/// Grid values plus, for each scheme threshold, the threshold itself and
/// the representable point just below it, sorted and deduplicated. The
/// extra points pin down both sides of each fidelity jump, which a generic
/// grid almost never lands on.
pub fn candidate_qualities(params: &SchemeParams, grid: &QualityGrid) -> Vec<f64> {
    let mut qs = grid.values();
    for t in params.thresholds() {
        qs.push(t);
        let below = t.next_down();
        if below > 0.0 {
            qs.push(below);
        }
    }
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    qs
}

/// Evaluates scheme and profile over the grid, plus each threshold and the
/// point just below it, and reports the worst scaled margin.
pub fn check_compliance(
    params: &SchemeParams,
    profile: &Profile,
    grid: &QualityGrid,
) -> Result<FeasibilityReport> {
    let qs = candidate_qualities(params, grid);
    let mut worst_q = qs[0];
    let mut margin = f64::INFINITY;
    for &q in &qs {
        let m = scaled_margin(params.fidelity(q)?, profile.eval(q)?);
        if m < margin {
            margin = m;
            worst_q = q;
        }
    }
    Ok(FeasibilityReport { feasible: margin >= -MARGIN_TOL, worst_q, margin })
}

fn check_digital_layer(alpha: f64, p_1: f64, q_1: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("alpha = {alpha} must be positive and finite")));
    }
    if !(q_1 > 0.0 && q_1.is_finite()) {
        return Err(Error::Invalid(format!("q_1 = {q_1} must be positive and finite")));
    }
    if !(p_1 > 0.0 && p_1.is_finite()) {
        return Err(Error::Domain(format!(
            "p_1 = {p_1} must be strictly positive: a zero-power digital layer leaves \
             ln(1 + p_1 q_1) = 0 in a denominator"
        )));
    }
    Ok(())
}

/// Minimum analog power for an order-two profile from the two closed-form
/// constraints: matching the profile from below the threshold,
/// `alpha q_1 (1 + p_1 q_1)`, and the decreasing envelope of the
/// above-threshold requirement, `(1/q_1 + p_1) / ln(1 + p_1 q_1)`.
pub fn min_pa_closed_form(alpha: f64, p_1: f64, q_1: f64) -> Result<f64> {
    check_digital_layer(alpha, p_1, q_1)?;
    let cc1 = alpha * q_1 * (1.0 + p_1 * q_1);
    let jump = (p_1 * q_1).ln_1p();
    let envelope = (1.0 / q_1 + p_1) / jump;
    Ok(cc1.max(envelope))
}

fn above_threshold_requirement(alpha: f64, p_1: f64, jump: f64, q: f64) -> f64 {
    let x = alpha * q * q;
    let f = x / (1.0 + x);
    let one_minus_f = 1.0 / (1.0 + x);
    (f - jump) * (1.0 + p_1 * q) / (q * (one_minus_f + jump))
}

/// Minimum analog power for an order-two profile with the above-threshold
/// constraint maximized numerically over `[q_1, grid.q_max]` instead of
/// bounded by its envelope. Never exceeds [`min_pa_closed_form`].
///
/// The maximization scans a log grid, refines the best bracket by
/// golden-section search, and also considers the analytic `q -> infinity`
/// value `(1 - L) p_1 / L` with `L = ln(1 + p_1 q_1)`. If the requirement is
/// still climbing at `q_max` before the profile has saturated there, the
/// peak may lie beyond the grid and the result would be unreliable, so this
/// is an error. Once the profile is within `10^-9` of saturation the tail is
/// a decaying `1/q` correction to the asymptote and no peak can hide past
/// the grid; for `L >= 1` the whole branch is negative and never binds, so
/// truncation is irrelevant.
pub fn min_pa_exact(alpha: f64, p_1: f64, q_1: f64, grid: &QualityGrid) -> Result<f64> {
    check_digital_layer(alpha, p_1, q_1)?;
    if q_1 >= grid.q_max {
        return Err(Error::Invalid(format!(
            "grid must extend beyond the threshold: q_1 = {q_1}, q_max = {}",
            grid.q_max
        )));
    }
    let jump = (p_1 * q_1).ln_1p();
    let g = |q: f64| above_threshold_requirement(alpha, p_1, jump, q);
    let limit = (1.0 - jump) * p_1 / jump;

    let qs = search::log_space(q_1, grid.q_max, grid.points.max(16));
    let gs: Vec<f64> = qs.iter().map(|&q| g(q)).collect();
    let mut best = 0;
    for i in 1..gs.len() {
        if gs[i] > gs[best] {
            best = i;
        }
    }
    let last = gs.len() - 1;
    let headroom_at_end = 1.0 / (1.0 + alpha * grid.q_max * grid.q_max);
    if jump < 1.0 && gs[last] > gs[last - 1] && headroom_at_end > 1e-9 {
        return Err(Error::GridTruncated(format!(
            "above-threshold requirement still increasing at q_max = {} \
             (value {:.6e}, asymptote {:.6e}); extend the grid",
            grid.q_max, gs[last], limit
        )));
    }

    let lo = qs[best.saturating_sub(1)].ln();
    let hi = qs[(best + 1).min(last)].ln();
    let (_, refined) = search::golden_max(|t| g(t.exp()), lo, hi, 1e-10);
    let sup = refined.max(gs[best]).max(limit);

    let cc1 = alpha * q_1 * (1.0 + p_1 * q_1);
    Ok(cc1.max(sup))
}

/// How the analog power is chosen for each candidate digital layer during
/// the upper-bound search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaRule {
    ClosedForm,
    Exact,
}

/// Search space for the digital-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub p1_range: (f64, f64),
    pub q1_range: (f64, f64),
    pub points_per_axis: usize,
    pub refinement_rounds: usize,
}

impl GridSpec {
    pub fn new(
        p1_range: (f64, f64),
        q1_range: (f64, f64),
        points_per_axis: usize,
        refinement_rounds: usize,
    ) -> Result<Self> {
        for (name, (lo, hi)) in [("p1", p1_range), ("q1", q1_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{name} range must satisfy 0 < min < max, got ({lo}, {hi})"
                )));
            }
        }
        if points_per_axis < 10 {
            return Err(Error::Invalid(format!(
                "need at least 10 points per axis, got {points_per_axis}"
            )));
        }
        Ok(GridSpec { p1_range, q1_range, points_per_axis, refinement_rounds })
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            p1_range: (1e-3, 1e3),
            q1_range: (1e-3, 1e3),
            points_per_axis: 60,
            refinement_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStep {
    pub p_1: f64,
    pub q_1: f64,
    pub p_a: f64,
    pub p_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundResult {
    pub p_total: f64,
    pub params: HybridParams,
    pub alpha: f64,
    /// Incumbent after the initial scan and after each refinement round.
    pub search_log: Option<Vec<SearchStep>>,
}

/// Quality grid used to bound the above-threshold maximization and to
/// validate optimized schemes. Extends to `10^6` because the binding
/// constraints live at both `q -> q_1` and far above the threshold.
fn validation_grid() -> QualityGrid {
    QualityGrid { q_min: 1e-4, q_max: 1e6, points: 2000, spacing: Spacing::Log }
}

/// Minimizes total power `min_pa(alpha, p_1, q_1) + p_1` for an order-two
/// profile over a log grid of digital layers, shrinking the grid tenfold
/// around the incumbent each refinement round. Ties break toward smaller
/// `p_1`. The winner is re-checked with [`check_compliance`] before being
/// returned; failure there means the constraint formulas and the search
/// disagree, which is a bug, not bad input.
pub fn optimize_upper_bound(
    alpha: f64,
    pa_rule: PaRule,
    spec: &GridSpec,
) -> Result<UpperBoundResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("alpha = {alpha} must be positive and finite")));
    }
    let sup_grid = validation_grid();
    let min_pa = |p_1: f64, q_1: f64| -> Result<f64> {
        match pa_rule {
            PaRule::ClosedForm => min_pa_closed_form(alpha, p_1, q_1),
            PaRule::Exact => min_pa_exact(alpha, p_1, q_1, &sup_grid),
        }
    };

    let mut incumbent: Option<SearchStep> = None;
    let mut log = Vec::with_capacity(spec.refinement_rounds + 1);
    let full_span_p1 = (spec.p1_range.1 / spec.p1_range.0).ln();
    let full_span_q1 = (spec.q1_range.1 / spec.q1_range.0).ln();

    for round in 0..=spec.refinement_rounds {
        let (p1s, q1s) = if round == 0 {
            (
                search::log_space(spec.p1_range.0, spec.p1_range.1, spec.points_per_axis),
                search::log_space(spec.q1_range.0, spec.q1_range.1, spec.points_per_axis),
            )
        } else {
            let center = incumbent.expect("incumbent exists after the initial scan");
            let shrink = 10f64.powi(round as i32);
            let half_p = full_span_p1 / shrink / 2.0;
            let half_q = full_span_q1 / shrink / 2.0;
            (
                search::log_space(
                    (center.p_1.ln() - half_p).exp(),
                    (center.p_1.ln() + half_p).exp(),
                    spec.points_per_axis,
                ),
                search::log_space(
                    (center.q_1.ln() - half_q).exp(),
                    (center.q_1.ln() + half_q).exp(),
                    spec.points_per_axis,
                ),
            )
        };

        let cells: Vec<(f64, f64)> = p1s
            .iter()
            .flat_map(|&p_1| q1s.iter().map(move |&q_1| (p_1, q_1)))
            .collect();
        let evals: Vec<SearchStep> = cells
            .into_par_iter()
            .map(|(p_1, q_1)| {
                min_pa(p_1, q_1).map(|p_a| SearchStep { p_1, q_1, p_a, p_total: p_a + p_1 })
            })
            .collect::<Result<Vec<_>>>()?;
        for cand in evals {
            let better = match incumbent {
                None => true,
                Some(b) => {
                    cand.p_total < b.p_total
                        || (cand.p_total == b.p_total && cand.p_1 < b.p_1)
                }
            };
            if better {
                incumbent = Some(cand);
            }
        }
        log.push(incumbent.expect("grid is nonempty"));
    }

    let best = incumbent.expect("grid is nonempty");
    let params = HybridParams::new(best.p_a, best.p_1, best.q_1)?;
    let report = check_compliance(
        &SchemeParams::Hybrid(params),
        &Profile::order2(alpha)?,
        &validation_grid(),
    )?;
    if !report.feasible {
        return Err(Error::InternalConsistency(format!(
            "optimized parameters (p_a {:.6e}, p_1 {:.6e}, q_1 {:.6e}) violate the profile: \
             margin {:.3e} at q = {:.6e}",
            best.p_a, best.p_1, best.q_1, report.margin, report.worst_q
        )));
    }
    Ok(UpperBoundResult { p_total: best.p_total, params, alpha, search_log: Some(log) })
}

/// Decibel value of a linear power quantity, `20 log10(x)`, the convention
/// used on the reference sweep's axis.
pub fn to_db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// One row of an alpha sweep: both bounds, the optimizing digital layer,
/// and the gap in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_a: f64,
    pub p_1: f64,
    pub q_1: f64,
    pub gap_db: f64,
}

/// Computes one sweep row: the numeric lower bound on the default grid and
/// the optimized upper bound under `pa_rule`.
pub fn sweep_point(alpha: f64, pa_rule: PaRule, spec: &GridSpec) -> Result<SweepRow> {
    let lower: LowerBoundResult =
        bounds::lower_bound_pmin(&Profile::order2(alpha)?, &QualityGrid::default())?;
    let upper = optimize_upper_bound(alpha, pa_rule, spec)?;
    Ok(SweepRow {
        alpha,
        p_lower: lower.p_lower,
        p_upper: upper.p_total,
        p_a: upper.params.p_a,
        p_1: upper.params.p_1,
        q_1: upper.params.q_1,
        gap_db: to_db(upper.p_total / lower.p_lower),
    })
}

/// Writes sweep rows as CSV with 12 significant digits.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "alpha,p_lower,p_upper,p_a,p_1,q_1,gap_db")?;
    for r in rows {
        writeln!(
            w,
            "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
            r.alpha, r.p_lower, r.p_upper, r.p_a, r.p_1, r.q_1, r.gap_db
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uncoded(p: f64) -> SchemeParams {
        SchemeParams::Hybrid(HybridParams::new(p, 0.0, 1.0).unwrap())
    }

    #[test]
    fn uncoded_meets_order1_with_zero_margin() {
        let report = check_compliance(
            &uncoded(1.7),
            &Profile::order1(1.7).unwrap(),
            &QualityGrid::default(),
        )
        .unwrap();
        assert!(report.feasible);
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn closed_form_analog_power_complies() {
        let p_a = min_pa_closed_form(1.0, 1.0, 1.0).unwrap();
        let params = HybridParams::new(p_a, 1.0, 1.0).unwrap();
        let report = check_compliance(
            &SchemeParams::Hybrid(params),
            &Profile::order2(1.0).unwrap(),
            &QualityGrid { q_max: 1e6, ..QualityGrid::default() },
        )
        .unwrap();
        assert!(report.feasible, "margin {} at q {}", report.margin, report.worst_q);
    }

    #[test]
    fn uncoded_fails_order2_at_grid_end() {
        let report = check_compliance(
            &uncoded(1.0),
            &Profile::order2(1.0).unwrap(),
            &QualityGrid::default(),
        )
        .unwrap();
        assert!(!report.feasible);
        assert_eq!(report.worst_q, 1e4);

        let huge = check_compliance(
            &uncoded(1e6),
            &Profile::order2(1.0).unwrap(),
            &QualityGrid { q_max: 1e7, ..QualityGrid::default() },
        )
        .unwrap();
        assert!(!huge.feasible);
        assert_eq!(huge.worst_q, 1e7);
        assert!(huge.margin < -1.0);
    }

    #[test]
    fn compliance_probes_points_next_to_thresholds() {
        // Feasible on every default grid point, but not just below the
        // threshold, where the scheme still sits on its analog-only branch.
        let params = HybridParams::new(0.05, 120.0, 1.000001).unwrap();
        let report = check_compliance(
            &SchemeParams::Hybrid(params),
            &Profile::order2(1.0).unwrap(),
            &QualityGrid { points: 2, ..QualityGrid::default() },
        )
        .unwrap();
        assert!(!report.feasible);
        assert!((report.worst_q - 1.000001).abs() < 1e-5);
    }

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(
            min_pa_closed_form(1.0, 1.0, 1.0).unwrap(),
            2.0 / std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert_relative_eq!(min_pa_closed_form(1.0, 10.0, 1.0).unwrap(), 11.0, max_relative = 1e-15);
        assert_relative_eq!(
            min_pa_closed_form(0.01, 1.0, 1.0).unwrap(),
            2.0 / std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert!(min_pa_closed_form(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn exact_rule_values() {
        let grid = QualityGrid { q_max: 1e6, ..QualityGrid::default() };
        // cc1 binds.
        assert_relative_eq!(min_pa_exact(1.0, 1.0, 1.0, &grid).unwrap(), 2.0, max_relative = 1e-12);
        // Interior peak of the above-threshold requirement binds; reference
        // values from a 4*10^6-point scan.
        assert_relative_eq!(
            min_pa_exact(0.01, 1.0, 1.0, &grid).unwrap(),
            0.44293025252100166,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            min_pa_exact(0.1, 1.0, 1.0, &grid).unwrap(),
            0.4450307772898132,
            max_relative = 1e-9
        );
    }

    #[test]
    fn exact_never_exceeds_closed_form() {
        let grid = QualityGrid { q_max: 1e6, ..QualityGrid::default() };
        for &alpha in &[0.01, 0.5, 1.0, 20.0] {
            for &p_1 in &[0.02, 0.3, 1.0, 40.0] {
                for &q_1 in &[0.05, 1.0, 9.0] {
                    let exact = min_pa_exact(alpha, p_1, q_1, &grid).unwrap();
                    let closed = min_pa_closed_form(alpha, p_1, q_1).unwrap();
                    assert!(
                        exact <= closed * (1.0 + 1e-12),
                        "exact {exact} > closed {closed} at ({alpha}, {p_1}, {q_1})"
                    );
                }
            }
        }
    }

    #[test]
    fn truncated_maximization_is_an_error() {
        // Peak far beyond a deliberately short grid.
        let short = QualityGrid::new(1e-4, 20.0, 64, Spacing::Log).unwrap();
        let r = min_pa_exact(0.01, 1.0, 1.0, &short);
        assert!(matches!(r, Err(Error::GridTruncated(_))), "got {r:?}");
    }

    #[test]
    fn optimizer_alpha_one_closed_form() {
        let r = optimize_upper_bound(1.0, PaRule::ClosedForm, &GridSpec::default()).unwrap();
        // True continuous optimum is 2.645549556780306; the default grid
        // search must get within the bracket below, and can never beat it.
        assert!(r.p_total >= 2.645549556, "p_total {}", r.p_total);
        assert!(r.p_total <= 2.6732, "p_total {}", r.p_total);
        assert_relative_eq!(r.p_total, r.params.p_a + r.params.p_1, max_relative = 1e-15);
        let log = r.search_log.unwrap();
        assert_eq!(log.len(), 4);
        assert!(log.windows(2).all(|w| w[1].p_total <= w[0].p_total));
    }

    #[test]
    fn optimizer_alpha_one_exact() {
        let exact = optimize_upper_bound(1.0, PaRule::Exact, &GridSpec::default()).unwrap();
        assert!(exact.p_total >= 1.5127873842, "p_total {}", exact.p_total);
        assert!(exact.p_total <= 1.52, "p_total {}", exact.p_total);
        let closed = optimize_upper_bound(1.0, PaRule::ClosedForm, &GridSpec::default()).unwrap();
        assert!(exact.p_total <= closed.p_total);
    }

    #[test]
    fn optimizer_dominates_lower_bound_and_grows_with_alpha() {
        let mut last = 0.0;
        for &alpha in &[0.01, 1.0, 100.0] {
            let row = sweep_point(alpha, PaRule::ClosedForm, &GridSpec::default()).unwrap();
            assert!(row.p_upper >= row.p_lower);
            assert!(row.p_upper > last);
            last = row.p_upper;
        }
    }

    #[test]
    fn gap_is_scale_invariant() {
        let spec = GridSpec::default();
        let g1 = sweep_point(1.0, PaRule::ClosedForm, &spec).unwrap().gap_db;
        let g2 = sweep_point(100.0, PaRule::ClosedForm, &spec).unwrap().gap_db;
        assert!((g1 - g2).abs() < 0.05, "gap {g1} vs {g2}");
        assert!((11.5..12.3).contains(&g1), "gap {g1}");
    }

    #[test]
    fn db_conversion() {
        assert_relative_eq!(to_db(10.0), 20.0, max_relative = 1e-15);
        assert_relative_eq!(to_db(1.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sweep_csv_shape() {
        let rows = [SweepRow {
            alpha: 1.0,
            p_lower: 0.5,
            p_upper: 2.0,
            p_a: 1.75,
            p_1: 0.25,
            q_1: 1.5,
            gap_db: to_db(4.0),
        }];
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("alpha,p_lower,p_upper,p_a,p_1,q_1,gap_db\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new((1.0, 0.5), (1e-3, 1e3), 60, 3).is_err());
        assert!(GridSpec::new((1e-3, 1e3), (0.0, 1e3), 60, 3).is_err());
        assert!(GridSpec::new((1e-3, 1e3), (1e-3, 1e3), 9, 3).is_err());
    }
}
