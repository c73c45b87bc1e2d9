//! Fidelity-quality profiles `F(Q)` and the quality grids they are
//! evaluated on.
//!
//! A profile prescribes the minimum fidelity a transmission scheme must
//! reach at every channel quality `Q` (the reciprocal of the noise
//! variance). Rational profiles of order one and two are parameterized by a
//! single severity `alpha`; arbitrary targets can be supplied as a table.

use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

/// A fidelity-quality target.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `F(Q) = alpha Q / (1 + alpha Q)`.
    RationalOrder1 { alpha: f64 },
    /// `F(Q) = alpha Q^2 / (1 + alpha Q^2)`.
    RationalOrder2 { alpha: f64 },
    /// Piecewise-linear interpolation in `(ln Q, F)` between table points.
    Tabulated { table: Vec<(f64, f64)> },
}

impl Profile {
    pub fn order1(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Profile::RationalOrder1 { alpha })
    }

    pub fn order2(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Profile::RationalOrder2 { alpha })
    }

    /// Builds a tabulated profile. Requires at least two points, strictly
    /// increasing positive `q`, and nonnegative finite `f`.
    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Invalid(format!(
                "tabulated profile needs at least 2 points, got {}",
                table.len()
            )));
        }
        for (i, &(q, f)) in table.iter().enumerate() {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::Invalid(format!("table q[{i}] = {q} must be positive")));
            }
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Invalid(format!("table f[{i}] = {f} must be nonnegative")));
            }
            if i > 0 && q <= table[i - 1].0 {
                return Err(Error::Invalid(format!(
                    "table q values must be strictly increasing, q[{i}] = {q} after {}",
                    table[i - 1].0
                )));
            }
        }
        Ok(Profile::Tabulated { table })
    }

    /// Reads a tabulated profile from CSV with header `q,f`.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || headers[0].trim() != "q" || headers[1].trim() != "f" {
            return Err(Error::Format(format!(
                "expected CSV header `q,f`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut table = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let q: f64 = parse_field(rec.get(0), "q")?;
            let f: f64 = parse_field(rec.get(1), "f")?;
            table.push((q, f));
        }
        Self::tabulated(table)
    }

    /// Evaluates the profile at quality `q`.
    ///
    /// Rational kinds are defined for all `q > 0`; tabulated profiles only
    /// inside their table range.
    pub fn eval(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("quality q = {q} must be positive")));
        }
        match self {
            Profile::RationalOrder1 { alpha } => {
                let x = alpha * q;
                Ok(x / (1.0 + x))
            }
            Profile::RationalOrder2 { alpha } => {
                let x = alpha * q * q;
                Ok(x / (1.0 + x))
            }
            Profile::Tabulated { table } => {
                let (q0, _) = table[0];
                let (q1, _) = table[table.len() - 1];
                if q < q0 || q > q1 {
                    return Err(Error::OutOfRange(format!(
                        "q = {q} outside tabulated range [{q0}, {q1}]"
                    )));
                }
                let i = table.partition_point(|&(tq, _)| tq <= q);
                if i == table.len() {
                    return Ok(table[table.len() - 1].1);
                }
                let (qa, fa) = table[i - 1];
                let (qb, fb) = table[i];
                let t = (q.ln() - qa.ln()) / (qb.ln() - qa.ln());
                Ok(fa + t * (fb - fa))
            }
        }
    }

    /// Severity parameter for rational kinds.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Profile::RationalOrder1 { alpha } | Profile::RationalOrder2 { alpha } => Some(*alpha),
            Profile::Tabulated { .. } => None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("alpha = {alpha} must be positive and finite")))
    }
}

fn parse_field(field: Option<&str>, name: &str) -> Result<f64> {
    let s = field.ok_or_else(|| Error::Format(format!("missing `{name}` field")))?;
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Format(format!("bad `{name}` value `{s}`: {e}")))
}

/// Converts a noise variance to the quality level `Q = 1/N`.
pub fn noise_to_quality(n: f64) -> Result<f64> {
    if n > 0.0 {
        Ok(1.0 / n)
    } else {
        Err(Error::Domain(format!("noise variance {n} must be positive")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Linear,
}

/// Discretization of the quality axis used by grid scans.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl QualityGrid {
    pub fn new(q_min: f64, q_max: f64, points: usize, spacing: Spacing) -> Result<Self> {
        if !(q_min > 0.0 && q_min < q_max && q_max.is_finite()) {
            return Err(Error::Invalid(format!(
                "grid bounds must satisfy 0 < q_min < q_max, got [{q_min}, {q_max}]"
            )));
        }
        if points < 2 {
            return Err(Error::Invalid(format!("grid needs at least 2 points, got {points}")));
        }
        Ok(QualityGrid { q_min, q_max, points, spacing })
    }

    /// Grid points in increasing order with exact endpoints.
    pub fn values(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Log => crate::search::log_space(self.q_min, self.q_max, self.points),
            Spacing::Linear => {
                let n = self.points;
                let mut v: Vec<f64> = (0..n)
                    .map(|i| {
                        self.q_min + (self.q_max - self.q_min) * i as f64 / (n - 1) as f64
                    })
                    .collect();
                v[0] = self.q_min;
                v[n - 1] = self.q_max;
                v
            }
        }
    }
}

/// Covers `[1e-4, 1e4]` with 2000 log-spaced points, wide enough to expose
/// both the small-Q and large-Q behavior that drives power constraints.
impl Default for QualityGrid {
    fn default() -> Self {
        QualityGrid { q_min: 1e-4, q_max: 1e4, points: 2000, spacing: Spacing::Log }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rational_values() {
        let p1 = Profile::order1(1.0).unwrap();
        let p2 = Profile::order2(1.0).unwrap();
        assert_eq!(p1.eval(1.0).unwrap(), 0.5);
        assert_eq!(p2.eval(1.0).unwrap(), 0.5);
        let p = Profile::order1(2.0).unwrap();
        assert!((p.eval(1e9).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn order_kinds_related_by_alpha_rescale() {
        for &q in &[0.037, 0.5, 1.0, 42.0, 1e3] {
            let a = 1.7;
            let f1 = Profile::order1(a).unwrap().eval(q).unwrap();
            let f2 = Profile::order2(a / q).unwrap().eval(q).unwrap();
            assert_relative_eq!(f1, f2, max_relative = 1e-14);
        }
    }

    #[test]
    fn rational_monotone_and_below_one() {
        for p in [Profile::order1(3.0).unwrap(), Profile::order2(0.2).unwrap()] {
            let mut last = 0.0;
            for q in QualityGrid::default().values() {
                let f = p.eval(q).unwrap();
                assert!(f > last && f < 1.0, "f = {f} at q = {q}");
                last = f;
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Profile::order1(0.0).is_err());
        assert!(Profile::order2(-1.0).is_err());
        assert!(Profile::order1(1.0).unwrap().eval(0.0).is_err());
        assert!(Profile::order1(1.0).unwrap().eval(-2.0).is_err());
        assert!(Profile::tabulated(vec![(1.0, 0.5)]).is_err());
        assert!(Profile::tabulated(vec![(1.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(Profile::tabulated(vec![(1.0, -0.1), (2.0, 0.6)]).is_err());
    }

    #[test]
    fn tabulated_interpolates_in_log_q() {
        let p = Profile::tabulated(vec![(0.1, 0.1), (10.0, 0.9)]).unwrap();
        assert_relative_eq!(p.eval(1.0).unwrap(), 0.5, max_relative = 1e-12);
        assert_eq!(p.eval(0.1).unwrap(), 0.1);
        assert_eq!(p.eval(10.0).unwrap(), 0.9);
        assert!(matches!(p.eval(0.05), Err(Error::OutOfRange(_))));
        assert!(matches!(p.eval(20.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn loads_table_from_csv() {
        let csv = "q,f\n0.5,0.25\n2.0,0.7\n8.0,0.9\n";
        let p = Profile::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(p.eval(2.0).unwrap(), 0.7);
        let mid = p.eval(1.0).unwrap();
        assert_relative_eq!(mid, 0.25 + 0.45 / 2.0, max_relative = 1e-12);

        let bad = "quality,f\n0.5,0.25\n";
        assert!(matches!(Profile::from_csv_reader(bad.as_bytes()), Err(Error::Format(_))));
        let bad_num = "q,f\n0.5,hello\n1.0,0.2\n";
        assert!(matches!(Profile::from_csv_reader(bad_num.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn noise_quality_roundtrip() {
        assert_eq!(noise_to_quality(2.0).unwrap(), 0.5);
        assert_eq!(noise_to_quality(1.0).unwrap(), 1.0);
        assert_eq!(noise_to_quality(0.25).unwrap(), 4.0);
        assert!(noise_to_quality(0.0).is_err());
        for &x in &[0.3, 1.0, 7.5, 1e-9] {
            assert_eq!(noise_to_quality(noise_to_quality(x).unwrap()).unwrap(), x);
        }
    }

    #[test]
    fn grid_values_cover_range() {
        let g = QualityGrid::default();
        let v = g.values();
        assert_eq!(v.len(), 2000);
        assert_eq!(v[0], 1e-4);
        assert_eq!(v[1999], 1e4);
        assert!(v.windows(2).all(|w| w[0] < w[1]));

        let lin = QualityGrid::new(1.0, 3.0, 3, Spacing::Linear).unwrap();
        assert_eq!(lin.values(), vec![1.0, 2.0, 3.0]);

        assert!(QualityGrid::new(0.0, 1.0, 10, Spacing::Log).is_err());
        assert!(QualityGrid::new(2.0, 1.0, 10, Spacing::Log).is_err());
        assert!(QualityGrid::new(1.0, 2.0, 1, Spacing::Log).is_err());
    }
}
