//! Achieved fidelity and finite-blocklength distortion of the uncoded,
//! hybrid, and multi-layer transmission schemes, plus the general matrix
//! MMSE and rate formulas used to cross-validate the scalar path.

use crate::error::{Error, Result};
use crate::profiles::QualityGrid;
use crate::search;
use nalgebra::{DMatrix, SymmetricEigen};
use std::io::Write;

/// Parameters of the hybrid scheme: an analog layer of power `p_a` plus one
/// digital layer of power `p_1` that becomes decodable at quality `q_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridParams {
    pub p_a: f64,
    pub p_1: f64,
    pub q_1: f64,
}

impl HybridParams {
    pub fn new(p_a: f64, p_1: f64, q_1: f64) -> Result<Self> {
        for (name, v) in [("p_a", p_a), ("p_1", p_1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} = {v} must be nonnegative")));
            }
        }
        if !(q_1 > 0.0 && q_1.is_finite()) {
            return Err(Error::Invalid(format!("q_1 = {q_1} must be positive")));
        }
        Ok(HybridParams { p_a, p_1, q_1 })
    }

    /// Total transmit power.
    pub fn total(&self) -> f64 {
        self.p_a + self.p_1
    }
}

/// Analog layer plus `K` digital layers decodable at increasing thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredParams {
    pub p_a: f64,
    pub layer_powers: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl LayeredParams {
    pub fn new(p_a: f64, layer_powers: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if !(p_a >= 0.0 && p_a.is_finite()) {
            return Err(Error::Invalid(format!("p_a = {p_a} must be nonnegative")));
        }
        if layer_powers.is_empty() || layer_powers.len() != thresholds.len() {
            return Err(Error::Invalid(format!(
                "need K >= 1 layers with matching thresholds, got {} powers and {} thresholds",
                layer_powers.len(),
                thresholds.len()
            )));
        }
        for (i, &p) in layer_powers.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Invalid(format!("layer power [{i}] = {p} must be nonnegative")));
            }
        }
        for (i, &t) in thresholds.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Invalid(format!("threshold [{i}] = {t} must be positive")));
            }
            if i > 0 && t <= thresholds[i - 1] {
                return Err(Error::Invalid(format!(
                    "thresholds must be strictly increasing, [{i}] = {t} after {}",
                    thresholds[i - 1]
                )));
            }
        }
        Ok(LayeredParams { p_a, layer_powers, thresholds })
    }

    pub fn total(&self) -> f64 {
        self.layer_powers.iter().fold(self.p_a, |acc, p| acc + p)
    }
}

/// General analog encoder `K` (m channel uses of n source symbols), residual
/// covariance `C_{E1}` of the quantized refinement, and digital power `p_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixScheme {
    pub k_matrix: DMatrix<f64>,
    pub c_e1: DMatrix<f64>,
    pub p_1: f64,
    pub m: usize,
    pub n: usize,
}

const PSD_TOL: f64 = 1e-9;

impl MatrixScheme {
    /// Validates that `c_e1` is symmetric with eigenvalues in `[0, 1]`
    /// (within numerical tolerance) and that dimensions are consistent.
    pub fn new(k_matrix: DMatrix<f64>, c_e1: DMatrix<f64>, p_1: f64) -> Result<Self> {
        let (m, n) = k_matrix.shape();
        if m == 0 || n == 0 {
            return Err(Error::Invalid("encoder matrix must be nonempty".into()));
        }
        if c_e1.shape() != (n, n) {
            return Err(Error::Invalid(format!(
                "residual covariance must be {n}x{n}, got {}x{}",
                c_e1.nrows(),
                c_e1.ncols()
            )));
        }
        if !(p_1 >= 0.0 && p_1.is_finite()) {
            return Err(Error::Invalid(format!("p_1 = {p_1} must be nonnegative")));
        }
        if k_matrix.iter().any(|x| !x.is_finite()) || c_e1.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("matrix entries must be finite".into()));
        }
        let asym = (&c_e1 - c_e1.transpose()).amax();
        if asym > PSD_TOL {
            return Err(Error::Invalid(format!(
                "residual covariance must be symmetric (asymmetry {asym:.2e})"
            )));
        }
        let eigs = SymmetricEigen::new(c_e1.clone()).eigenvalues;
        if eigs.iter().any(|&l| !(-PSD_TOL..=1.0 + PSD_TOL).contains(&l)) {
            return Err(Error::Invalid(format!(
                "residual covariance eigenvalues must lie in [0, 1], got range [{:.6e}, {:.6e}]",
                eigs.min(),
                eigs.max()
            )));
        }
        Ok(MatrixScheme { k_matrix, c_e1, p_1, m, n })
    }

    /// The scalar path used by the hybrid scheme: a single channel use with
    /// `K = [k, ..., k]` carrying total analog power `p_a` (so `n k^2 =
    /// p_a`) and `C_{E1} = beta I`.
    pub fn uniform_row(n: usize, p_a: f64, beta: f64, p_1: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("n must be positive".into()));
        }
        if !(p_a >= 0.0 && p_a.is_finite()) {
            return Err(Error::Invalid(format!("p_a = {p_a} must be nonnegative")));
        }
        let k = (p_a / n as f64).sqrt();
        Self::new(
            DMatrix::from_element(1, n, k),
            DMatrix::from_diagonal_element(n, n, beta),
            p_1,
        )
    }

    /// Analog transmit power per channel use, `(1/m) Tr(K K^T)`.
    pub fn analog_power(&self) -> f64 {
        self.k_matrix.iter().map(|x| x * x).sum::<f64>() / self.m as f64
    }
}

fn check_quality(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("quality q = {q} must be positive")))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa >= 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bandwidth factor kappa = {kappa} must be nonnegative")))
    }
}

/// Fidelity of uncoded transmission at power `p`: `pq / (1 + pq)`.
pub fn uncoded_fidelity(p: f64, q: f64) -> Result<f64> {
    check_quality(q)?;
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("power p = {p} must be nonnegative")));
    }
    Ok(p * q / (1.0 + p * q))
}

/// Distortion of uncoded transmission at bandwidth factor `kappa`:
/// `1 - kappa p / (p + N)`.
pub fn uncoded_distortion(p: f64, n_noise: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !(n_noise > 0.0) {
        return Err(Error::Domain(format!("noise variance {n_noise} must be positive")));
    }
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("power p = {p} must be nonnegative")));
    }
    Ok(1.0 - kappa * p / (p + n_noise))
}

/// Fidelity of the hybrid scheme. Below the threshold only the analog layer
/// contributes, `p_a q / (1 + P q)` with `P` the total power; from the
/// threshold on, decoding the digital layer adds a constant
/// `ln(1 + p_1 q_1)`.
pub fn hybrid_fidelity(hp: &HybridParams, q: f64) -> Result<f64> {
    check_quality(q)?;
    let p = hp.total();
    let analog = hp.p_a * q / (1.0 + p * q);
    if q < hp.q_1 {
        Ok(analog)
    } else {
        Ok((hp.p_1 * hp.q_1).ln_1p() + analog)
    }
}

/// Fidelity of the `K`-layer scheme: the analog term `p_a q / (1 + P q)`
/// plus, for every threshold already reached, a constant jump
/// `ln((1 + S_k Q_k) / (1 + S_{k+1} Q_k))` where `S_k` is the total power of
/// layers `k..=K`.
pub fn multilayer_fidelity(lp: &LayeredParams, q: f64) -> Result<f64> {
    check_quality(q)?;
    let p = lp.total();
    let mut f = lp.p_a * q / (1.0 + p * q);
    let mut suffix = 0.0;
    let mut jumps = vec![0.0; lp.layer_powers.len()];
    for k in (0..lp.layer_powers.len()).rev() {
        let with_k = lp.layer_powers[k] + suffix;
        jumps[k] = (with_k * lp.thresholds[k]).ln_1p() - (suffix * lp.thresholds[k]).ln_1p();
        suffix = with_k;
    }
    for (k, jump) in jumps.iter().enumerate() {
        if q >= lp.thresholds[k] {
            f += jump;
        }
    }
    Ok(f)
}

/// The decodability polynomial for the digital layer at blocklength `n`:
/// `f_n(b) = b^n (1 + P q_1)(1 + p_1 q_1) - b p_a q_1 - (1 + p_1 q_1)`.
pub fn beta_poly(n: u32, hp: &HybridParams, beta: f64) -> f64 {
    let c = 1.0 + hp.p_1 * hp.q_1;
    let b = 1.0 + hp.total() * hp.q_1;
    beta.powi(n as i32) * b * c - beta * hp.p_a * hp.q_1 - c
}

/// Unique root of [`beta_poly`] in `(0, 1)`, found by bisection carried to
/// floating-point resolution. The bracket requires `f_n(1) > 0`, which holds
/// exactly when `p_1 > 0`.
pub fn beta_root(n: u32, hp: &HybridParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("blocklength n must be at least 1".into()));
    }
    let at_one = beta_poly(n, hp, 1.0);
    if !(at_one > 0.0) {
        return Err(Error::NoRoot(format!(
            "f_n(1) = {at_one} is not positive (requires p_1 > 0), so no root lies in (0, 1)"
        )));
    }
    Ok(search::bisect_root(|b| beta_poly(n, hp, b), 0.0, 1.0))
}

/// Distortion of the hybrid scheme for qualities below the threshold, where
/// the digital layer is still undecodable noise.
pub fn hybrid_distortion_below(hp: &HybridParams, q: f64, kappa: f64) -> Result<f64> {
    check_quality(q)?;
    check_kappa(kappa)?;
    Ok(1.0 - kappa * (hp.p_a * q / (1.0 + hp.total() * q)))
}

/// Distortion of the hybrid scheme at and above the threshold, after the
/// refinement carried by the digital layer is decoded:
/// `a^k (1 - k a^k p_a q / (1 + (a^k p_a + p_1) q))` with
/// `a = 1 / (1 + p_1 q_1)`.
pub fn hybrid_distortion_above(hp: &HybridParams, q: f64, kappa: f64) -> Result<f64> {
    check_quality(q)?;
    check_kappa(kappa)?;
    let a = (1.0 + hp.p_1 * hp.q_1).recip();
    let ak = a.powf(kappa);
    Ok(ak * (1.0 - kappa * ak * hp.p_a * q / (1.0 + (ak * hp.p_a + hp.p_1) * q)))
}

fn spd_cholesky(mut mat: DMatrix<f64>, shift: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let dim = mat.nrows();
    for i in 0..dim {
        mat[(i, i)] += shift;
    }
    nalgebra::Cholesky::new(mat)
        .ok_or_else(|| Error::Domain("channel Gram matrix is not positive definite".into()))
}

fn ln_det(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0
}

/// Per-symbol MMSE distortion of the analog part: the estimator sees
/// `V = K X + Z + W` with interference power `p_1` and noise `n_noise`
/// per channel use, and returns `1 - (1/n) Tr(K^T (K K^T + (p_1 + N) I)^-1 K)`.
pub fn matrix_analog_distortion(ms: &MatrixScheme, n_noise: f64) -> Result<f64> {
    if !(n_noise > 0.0) {
        return Err(Error::Domain(format!("noise variance {n_noise} must be positive")));
    }
    let gram = &ms.k_matrix * ms.k_matrix.transpose();
    let chol = spd_cholesky(gram, ms.p_1 + n_noise)?;
    let solved = chol.solve(&ms.k_matrix);
    let tr = ms.k_matrix.component_mul(&solved).sum();
    Ok(1.0 - tr / ms.n as f64)
}

/// Per-symbol MMSE distortion of the refined estimate, where only the
/// residual `E_1` with covariance `C_{E1}` is left to estimate:
/// `(1/n) [Tr(C) - Tr(C K^T (K C K^T + (p_1 + N) I)^-1 K C)]`.
pub fn matrix_refinement_distortion(ms: &MatrixScheme, n_noise: f64) -> Result<f64> {
    if !(n_noise > 0.0) {
        return Err(Error::Domain(format!("noise variance {n_noise} must be positive")));
    }
    let kc = &ms.k_matrix * &ms.c_e1;
    let gram = &kc * ms.k_matrix.transpose();
    let chol = spd_cholesky(gram, ms.p_1 + n_noise)?;
    let solved = chol.solve(&kc);
    let tr = kc.component_mul(&solved).sum();
    Ok((ms.c_e1.trace() - tr) / ms.n as f64)
}

/// Slack of the digital layer's rate constraint at threshold noise `n1`:
/// the rate the channel offers, `(m/2n) ln(1 + p_1/n1)`, minus the rate the
/// quantized refinement costs. Nonnegative slack means decodable.
pub fn dpc_rate_constraint(ms: &MatrixScheme, n1: f64) -> Result<f64> {
    if !(n1 > 0.0) {
        return Err(Error::Domain(format!("noise variance {n1} must be positive")));
    }
    let chol_c = nalgebra::Cholesky::new(ms.c_e1.clone()).ok_or_else(|| {
        Error::DegenerateQuantizer(
            "residual covariance is singular, so the quantizer rate is unbounded".into(),
        )
    })?;
    let ln_det_c = ln_det(&chol_c);
    let gram = &ms.k_matrix * ms.k_matrix.transpose();
    let ln_det_plain = ln_det(&spd_cholesky(gram, ms.p_1 + n1)?);
    let kc = &ms.k_matrix * &ms.c_e1;
    let gram_c = &kc * ms.k_matrix.transpose();
    let ln_det_refined = ln_det(&spd_cholesky(gram_c, ms.p_1 + n1)?);

    let (m, n) = (ms.m as f64, ms.n as f64);
    let offered = m / (2.0 * n) * (ms.p_1 / n1).ln_1p();
    let cost = (ln_det_refined - ln_det_c - ln_det_plain) / (2.0 * n);
    Ok(offered - cost)
}

/// A sampled map from quality to achieved fidelity.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityCurve {
    pub points: Vec<(f64, f64)>,
}

impl FidelityCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(q, f)) in points.iter().enumerate() {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::Invalid(format!("curve q[{i}] = {q} must be positive")));
            }
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Invalid(format!("curve f[{i}] = {f} must be nonnegative")));
            }
            if i > 0 && q <= points[i - 1].0 {
                return Err(Error::Invalid(format!(
                    "curve q values must be strictly increasing, q[{i}] = {q} after {}",
                    points[i - 1].0
                )));
            }
        }
        Ok(FidelityCurve { points })
    }

    pub fn sample_hybrid(hp: &HybridParams, grid: &QualityGrid) -> Result<Self> {
        let points = grid
            .values()
            .into_iter()
            .map(|q| hybrid_fidelity(hp, q).map(|f| (q, f)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn sample_multilayer(lp: &LayeredParams, grid: &QualityGrid) -> Result<Self> {
        let points = grid
            .values()
            .into_iter()
            .map(|q| multilayer_fidelity(lp, q).map(|f| (q, f)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// Writes the curve as CSV with header `q,f` and 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "q,f")?;
        for &(q, f) in &self.points {
            writeln!(w, "{q:.11e},{f:.11e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{Profile, Spacing};
    use approx::assert_relative_eq;

    #[test]
    fn uncoded_fidelity_values() {
        assert_eq!(uncoded_fidelity(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(uncoded_fidelity(0.0, 7.0).unwrap(), 0.0);
        let p = Profile::order1(1.7).unwrap();
        for &q in &[1e-3, 0.3, 1.0, 55.0] {
            assert_eq!(uncoded_fidelity(1.7, q).unwrap(), p.eval(q).unwrap());
        }
        assert!(uncoded_fidelity(1.0, 0.0).is_err());
        assert!(uncoded_fidelity(-1.0, 1.0).is_err());
    }

    #[test]
    fn uncoded_distortion_values() {
        assert_relative_eq!(
            uncoded_distortion(1.0, 1.0, 0.01).unwrap(),
            0.995,
            max_relative = 1e-15
        );
        assert_eq!(uncoded_distortion(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            uncoded_distortion(3.0, 1.0, 0.1).unwrap(),
            0.925,
            max_relative = 1e-15
        );
        assert!(uncoded_distortion(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn hybrid_fidelity_branches() {
        let hp = HybridParams::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            hybrid_fidelity(&hp, 1.0).unwrap(),
            std::f64::consts::LN_2 + 1.0 / 3.0,
            max_relative = 1e-15
        );
        let analog_only = HybridParams::new(1.0, 0.0, 1.0).unwrap();
        for &q in &[0.2, 1.0, 9.0] {
            assert_eq!(
                hybrid_fidelity(&analog_only, q).unwrap(),
                uncoded_fidelity(1.0, q).unwrap()
            );
        }
        let digital_only = HybridParams::new(0.0, 1.0, 2.0).unwrap();
        assert_eq!(hybrid_fidelity(&digital_only, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hybrid_jump_size_and_monotonicity() {
        let hp = HybridParams::new(2.0, 0.7, 3.0).unwrap();
        let just_below = hybrid_fidelity(&hp, 3.0_f64.next_down()).unwrap();
        let at = hybrid_fidelity(&hp, 3.0).unwrap();
        assert_relative_eq!(at - just_below, (0.7 * 3.0f64).ln_1p(), max_relative = 1e-12);

        let mut last = 0.0;
        for q in QualityGrid::default().values() {
            let f = hybrid_fidelity(&hp, q).unwrap();
            assert!(f >= last);
            last = f;
        }
    }

    #[test]
    fn single_layer_reduces_to_hybrid_bitwise() {
        let hp = HybridParams::new(1.3, 0.4, 2.2).unwrap();
        let lp = LayeredParams::new(1.3, vec![0.4], vec![2.2]).unwrap();
        for q in QualityGrid::default().values() {
            assert_eq!(multilayer_fidelity(&lp, q).unwrap(), hybrid_fidelity(&hp, q).unwrap());
        }
    }

    #[test]
    fn two_layer_staircase_values() {
        let lp = LayeredParams::new(1.0, vec![1.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(multilayer_fidelity(&lp, 0.5).unwrap(), 0.2, max_relative = 1e-15);
        // 0.3 + ln(3/2) + ln 3, the analog term at q = 3 plus both jumps.
        assert_relative_eq!(
            multilayer_fidelity(&lp, 3.0).unwrap(),
            1.8040773967762742,
            max_relative = 1e-14
        );
        let between = multilayer_fidelity(&lp, 1.5).unwrap();
        assert_relative_eq!(
            between,
            1.0 * 1.5 / (1.0 + 3.0 * 1.5) + 1.5f64.ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn layer_validation() {
        assert!(LayeredParams::new(1.0, vec![], vec![]).is_err());
        assert!(LayeredParams::new(1.0, vec![1.0, 1.0], vec![2.0, 2.0]).is_err());
        assert!(LayeredParams::new(1.0, vec![1.0, 1.0], vec![3.0, 2.0]).is_err());
        assert!(LayeredParams::new(1.0, vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(LayeredParams::new(-1.0, vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn beta_root_known_values() {
        let hp = HybridParams::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(beta_root(1, &hp).unwrap(), 0.4, max_relative = 1e-14);
        assert_relative_eq!(
            beta_root(10, &hp).unwrap(),
            0.9308600303432673,
            max_relative = 1e-12
        );
        let b1000 = beta_root(1000, &hp).unwrap();
        assert_relative_eq!(b1000, 0.9993068620779219, max_relative = 1e-12);
        assert!(b1000 > 0.99);
    }

    #[test]
    fn beta_root_properties() {
        let hp = HybridParams::new(2.5, 0.3, 4.0).unwrap();
        let mut last = 0.0;
        for n in [1u32, 10, 100, 1000] {
            let b = beta_root(n, &hp).unwrap();
            assert!(b > 0.0 && b < 1.0);
            assert!(beta_poly(n, &hp, b).abs() < 1e-10);
            assert!(b > last, "root should increase with n");
            last = b;
        }
        let a = 1.0 / (1.0 + hp.p_1 * hp.q_1);
        for n in [1u32, 7, 64] {
            assert!(beta_poly(n, &hp, a.powf(1.0 / n as f64)) >= 0.0);
        }
    }

    #[test]
    fn beta_root_requires_digital_power() {
        let no_digital = HybridParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(beta_root(5, &no_digital), Err(Error::NoRoot(_))));
        let nothing = HybridParams::new(0.0, 0.0, 1.0).unwrap();
        assert!(matches!(beta_root(5, &nothing), Err(Error::NoRoot(_))));
        assert!(beta_root(0, &HybridParams::new(1.0, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn distortion_below_threshold() {
        let hp = HybridParams::new(1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(
            hybrid_distortion_below(&hp, 1.0, 0.01).unwrap(),
            1.0 - 0.01 / 3.0,
            max_relative = 1e-15
        );
        let no_analog = HybridParams::new(0.0, 1.0, 2.0).unwrap();
        assert_eq!(hybrid_distortion_below(&no_analog, 1.0, 0.01).unwrap(), 1.0);
        assert_eq!(hybrid_distortion_below(&hp, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn distortion_above_threshold() {
        let hp = HybridParams::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(hybrid_distortion_above(&hp, 3.0, 0.0).unwrap(), 1.0);

        let kappa = 1e-3;
        let v = hybrid_distortion_above(&hp, 1.0, kappa).unwrap();
        let slope = (1.0 - v) / kappa;
        assert!((slope - hybrid_fidelity(&hp, 1.0).unwrap()).abs() < 0.01);

        let no_digital = HybridParams::new(1.5, 0.0, 1.0).unwrap();
        for &q in &[1.0, 4.0] {
            assert_relative_eq!(
                hybrid_distortion_above(&no_digital, q, 0.02).unwrap(),
                uncoded_distortion(1.5, 1.0 / q, 0.02).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn matrix_analog_scalar_reduction() {
        let k = 1.3;
        let ms = MatrixScheme::new(
            DMatrix::from_element(1, 1, k),
            DMatrix::identity(1, 1),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(
            matrix_analog_distortion(&ms, 1.0).unwrap(),
            1.0 - k * k / (k * k + 2.0),
            max_relative = 1e-14
        );

        let zero = MatrixScheme::new(DMatrix::zeros(1, 3), DMatrix::identity(3, 3), 0.5).unwrap();
        assert_eq!(matrix_analog_distortion(&zero, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn matrix_analog_matches_uniform_row_formula() {
        for &n in &[1usize, 2, 10, 100] {
            let (p_a, p_1, q_1) = (2.0, 0.7, 1.5);
            let hp = HybridParams::new(p_a, p_1, q_1).unwrap();
            let ms = MatrixScheme::uniform_row(n, p_a, 1.0, p_1).unwrap();
            for &q in &[0.3, 1.0, 5.0] {
                let direct = matrix_analog_distortion(&ms, 1.0 / q).unwrap();
                let scalar = hybrid_distortion_below(&hp, q, 1.0 / n as f64).unwrap();
                assert_relative_eq!(direct, scalar, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matrix_refinement_matches_scalarization() {
        for &n in &[1usize, 2, 10, 100] {
            let (p_a, p_1, q_1) = (2.0, 0.7, 1.5);
            let hp = HybridParams::new(p_a, p_1, q_1).unwrap();
            let a = 1.0 / (1.0 + p_1 * q_1);
            let beta = a.powf(1.0 / n as f64);
            let ms = MatrixScheme::uniform_row(n, p_a, beta, p_1).unwrap();
            for &q in &[q_1, 4.0, 40.0] {
                let direct = matrix_refinement_distortion(&ms, 1.0 / q).unwrap();
                let scalar = hybrid_distortion_above(&hp, q, 1.0 / n as f64).unwrap();
                assert_relative_eq!(direct, scalar, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matrix_refinement_edge_cases() {
        let ms = MatrixScheme::uniform_row(4, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(matrix_refinement_distortion(&ms, 1.0).unwrap(), 0.0);

        let no_signal =
            MatrixScheme::new(DMatrix::zeros(2, 3), DMatrix::identity(3, 3) * 0.6, 0.0).unwrap();
        assert_relative_eq!(
            matrix_refinement_distortion(&no_signal, 1.0).unwrap(),
            0.6,
            max_relative = 1e-14
        );

        // With nothing quantized away the refinement problem is the plain
        // analog one.
        let ms = MatrixScheme::uniform_row(6, 3.0, 1.0, 0.4).unwrap();
        assert_relative_eq!(
            matrix_refinement_distortion(&ms, 0.5).unwrap(),
            matrix_analog_distortion(&ms, 0.5).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn rate_slack_identity_covariance() {
        let ms = MatrixScheme::uniform_row(5, 2.0, 1.0, 3.0).unwrap();
        let slack = dpc_rate_constraint(&ms, 0.5).unwrap();
        assert_relative_eq!(slack, (3.0 / 0.5f64).ln_1p() / 10.0, max_relative = 1e-12);
    }

    #[test]
    fn rate_slack_sign_tracks_beta_root() {
        let (p_a, p_1, q_1) = (1.0, 1.0, 1.0);
        let hp = HybridParams::new(p_a, p_1, q_1).unwrap();
        let n1 = 1.0 / q_1;
        for n in [2usize, 10, 50] {
            let root = beta_root(n as u32, &hp).unwrap();
            let at_root = dpc_rate_constraint(
                &MatrixScheme::uniform_row(n, p_a, root, p_1).unwrap(),
                n1,
            )
            .unwrap();
            assert!(at_root.abs() < 1e-11, "slack {at_root} at the root");

            let below = dpc_rate_constraint(
                &MatrixScheme::uniform_row(n, p_a, root - 1e-3, p_1).unwrap(),
                n1,
            )
            .unwrap();
            assert!(below < 0.0);

            let a = 1.0 / (1.0 + p_1 * q_1);
            let heuristic = dpc_rate_constraint(
                &MatrixScheme::uniform_row(n, p_a, a.powf(1.0 / n as f64), p_1).unwrap(),
                n1,
            )
            .unwrap();
            assert!(heuristic >= 0.0);
        }
    }

    #[test]
    fn rate_slack_rejects_singular_quantizer() {
        let ms = MatrixScheme::uniform_row(3, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(dpc_rate_constraint(&ms, 1.0), Err(Error::DegenerateQuantizer(_))));
    }

    #[test]
    fn matrix_scheme_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.5]);
        assert!(MatrixScheme::new(DMatrix::zeros(1, 2), asym, 0.0).is_err());
        let too_big = DMatrix::identity(2, 2) * 1.5;
        assert!(MatrixScheme::new(DMatrix::zeros(1, 2), too_big, 0.0).is_err());
        let negative = DMatrix::identity(2, 2) * -0.1;
        assert!(MatrixScheme::new(DMatrix::zeros(1, 2), negative, 0.0).is_err());
        let wrong_dim = DMatrix::identity(3, 3);
        assert!(MatrixScheme::new(DMatrix::zeros(1, 2), wrong_dim, 0.0).is_err());

        let ms = MatrixScheme::uniform_row(8, 3.2, 0.5, 0.0).unwrap();
        assert_relative_eq!(ms.analog_power(), 3.2, max_relative = 1e-14);
    }

    #[test]
    fn curve_sampling_and_csv() {
        let hp = HybridParams::new(1.0, 1.0, 1.0).unwrap();
        let grid = QualityGrid::new(0.5, 2.0, 3, Spacing::Linear).unwrap();
        let curve = FidelityCurve::sample_hybrid(&hp, &grid).unwrap();
        assert_eq!(curve.points.len(), 3);
        assert_eq!(curve.points[1].1, hybrid_fidelity(&hp, 1.25).unwrap());

        let mut out = Vec::new();
        curve.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("q,f"));
        assert_eq!(lines.next(), Some("5.00000000000e-1,2.50000000000e-1"));

        assert!(FidelityCurve::new(vec![(1.0, 0.1), (1.0, 0.2)]).is_err());
        assert!(FidelityCurve::new(vec![(1.0, -0.1)]).is_err());
    }
}
