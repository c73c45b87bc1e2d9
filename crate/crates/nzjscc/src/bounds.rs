//! Lower bound on the minimum transmit power required by a profile.
//!
//! Any scheme meeting the profile needs at least
//! `sup_{Q>0} (exp(F(Q)) - 1) / Q` in transmit power. The supremum is taken
//! numerically over a quality grid with local refinement, plus analytic
//! endpoint limits for the rational profile kinds.

use crate::error::Result;
use crate::profiles::{Profile, QualityGrid};
use crate::search;

/// Location of the maximizer behind a lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QStar {
    /// Supremum approached in the `Q -> 0` limit.
    AtZero,
    /// Supremum approached in the `Q -> infinity` limit.
    AtInfinity,
    /// Supremum attained at a finite quality.
    At(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundResult {
    /// Minimum power any scheme needs, in linear units.
    pub p_lower: f64,
    pub q_star: QStar,
    /// True when the supremum is attained at an interior point of the
    /// search interval rather than only as a limit.
    pub attained: bool,
}

/// The quantity whose supremum over `Q` is the power lower bound.
pub fn lower_bound_integrand(p: &Profile, q: f64) -> Result<f64> {
    let f = p.eval(q)?;
    Ok(f.exp_m1() / q)
}

/// Supremum of [`lower_bound_integrand`] over the grid, refined by
/// golden-section search in `ln Q` around the best grid point.
///
/// For `RationalOrder1` the `Q -> 0` limit equals `alpha` and strictly
/// dominates every finite-`Q` value, so the bound is reported exactly as
/// `alpha` with [`QStar::AtZero`]. For `RationalOrder2` the integrand
/// vanishes at both ends and the interior maximizer is genuine.
pub fn lower_bound_pmin(p: &Profile, grid: &QualityGrid) -> Result<LowerBoundResult> {
    let qs = grid.values();
    let mut vals = Vec::with_capacity(qs.len());
    for &q in &qs {
        vals.push(lower_bound_integrand(p, q)?);
    }
    let mut best = 0;
    for i in 1..vals.len() {
        if vals[i] > vals[best] {
            best = i;
        }
    }

    let lo = qs[best.saturating_sub(1)];
    let hi = qs[(best + 1).min(qs.len() - 1)];
    let integrand = |t: f64| {
        lower_bound_integrand(p, t.exp()).expect("bracket stays inside the validated grid range")
    };
    let (t_star, refined) = search::golden_max(integrand, lo.ln(), hi.ln(), 1e-10);

    let (mut p_lower, mut q_star) = (refined.max(vals[best]), QStar::At(t_star.exp()));
    let mut attained = true;
    if let Profile::RationalOrder1 { alpha } = p {
        if *alpha >= p_lower {
            p_lower = *alpha;
            q_star = QStar::AtZero;
            attained = false;
        }
    }
    Ok(LowerBoundResult { p_lower, q_star, attained })
}
