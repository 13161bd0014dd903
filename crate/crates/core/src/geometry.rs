//! RIS layout, sinc spatial correlation, its sampling factor, and the trace
//! forms consumed by the analytic engine.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Default eigenvalue floor used by [`factorize`].
pub const DEFAULT_CLAMP_FLOOR: f64 = 1e-10;

const ASYMMETRY_TOL: f64 = 1e-9;
const NEG_EIG_TOL: f64 = 1e-8;
const UNIT_MODULUS_TOL: f64 = 1e-12;
const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// Planar rectangular RIS: `n_rows` (vertical) by `n_cols` (horizontal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub wavelength: f64,
}

impl RisGeometry {
    pub fn new(n_rows: usize, n_cols: usize, d_h: f64, d_v: f64, wavelength: f64) -> Result<Self> {
        let g = RisGeometry {
            n_rows,
            n_cols,
            d_h,
            d_v,
            wavelength,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square `side × side` array with both spacings equal to `wavelength * spacing_lambda`.
    pub fn square(side: usize, spacing_lambda: f64, wavelength: f64) -> Result<Self> {
        let d = spacing_lambda * wavelength;
        Self::new(side, side, d, d, wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::domain(
                "RIS must have at least one row and one column",
            ));
        }
        for (name, v) in [
            ("d_h", self.d_h),
            ("d_v", self.d_v),
            ("wavelength", self.wavelength),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Area of a single element, `d_h * d_v`.
    pub fn element_area(&self) -> f64 {
        self.d_h * self.d_v
    }
}

/// Position of element `index` (1-based) in meters.
pub fn element_position(geometry: &RisGeometry, index: usize) -> Result<[f64; 3]> {
    let n = geometry.n_elements();
    if index == 0 || index > n {
        return Err(Error::domain(format!(
            "element index {index} outside 1..={n}"
        )));
    }
    let z = index - 1;
    Ok([
        0.0,
        (z % geometry.n_cols) as f64 * geometry.d_h,
        (z / geometry.n_cols) as f64 * geometry.d_v,
    ])
}

/// `sin(πw)/(πw)` with the removable singularity filled in.
pub fn sinc(w: f64) -> f64 {
    if w == 0.0 {
        1.0
    } else {
        let x = std::f64::consts::PI * w;
        x.sin() / x
    }
}

/// Spatial correlation matrix and, once factorized, a sampling factor.
///
/// Entries are real for the isotropic kernel, so the matrix is stored as
/// `f64`; Hermitian symmetry reduces to plain symmetry.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    factor: Option<Factor>,
}

#[derive(Debug, Clone)]
struct Factor {
    /// `N × r` with orthogonal columns; the `N - r` clamped directions are dropped.
    l: DMatrix<f64>,
    /// Retained eigenvalues, so that `Lᵀ L = diag(eigs)`.
    eigs: Vec<f64>,
    clamped: usize,
    min_eig: f64,
}

impl CorrelationMatrix {
    /// Wrap an arbitrary real matrix (no checks until [`factorize`]).
    pub fn from_entries(entries: DMatrix<f64>) -> Self {
        CorrelationMatrix {
            entries,
            factor: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }

    /// Sampling factor `L` (`N × r`), with `L Lᵀ ≈ R`.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref().map(|f| &f.l)
    }

    /// Eigenvalues kept in the factor, aligned with its columns.
    pub fn factor_eigenvalues(&self) -> Option<&[f64]> {
        self.factor.as_ref().map(|f| f.eigs.as_slice())
    }

    /// Number of eigenvalues set to zero during factorization.
    pub fn clamped_eigs(&self) -> usize {
        self.factor.as_ref().map_or(0, |f| f.clamped)
    }

    /// Smallest eigenvalue seen before clamping.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        self.factor.as_ref().map(|f| f.min_eig)
    }

    /// `‖L Lᵀ − R‖_F / ‖R‖_F`.
    pub fn factor_residual(&self) -> Option<f64> {
        let l = self.factor()?;
        let diff = l * l.transpose() - &self.entries;
        Some(diff.norm() / self.entries.norm())
    }
}

/// Sinc correlation for the isotropic Rayleigh model.
pub fn build_correlation(geometry: &RisGeometry) -> CorrelationMatrix {
    let n = geometry.n_elements();
    let pos: Vec<[f64; 3]> = (1..=n)
        .map(|i| element_position(geometry, i).expect("index in range"))
        .collect();
    let mut r = DMatrix::<f64>::identity(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let dy = pos[a][1] - pos[b][1];
            let dz = pos[a][2] - pos[b][2];
            let dist = (dy * dy + dz * dz).sqrt();
            let v = sinc(2.0 * dist / geometry.wavelength);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    CorrelationMatrix::from_entries(r)
}

/// Eigen-factorize `R`, zeroing eigenvalues below `clamp_floor`.
pub fn factorize(r: &CorrelationMatrix, clamp_floor: f64) -> Result<CorrelationMatrix> {
    if !(clamp_floor >= 0.0) {
        return Err(Error::domain(format!(
            "clamp floor must be >= 0, got {clamp_floor}"
        )));
    }
    let m = &r.entries;
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::domain(
            "correlation matrix must be square and non-empty",
        ));
    }
    let n = m.nrows();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > ASYMMETRY_TOL {
        return Err(Error::domain(format!(
            "correlation matrix is not Hermitian (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -NEG_EIG_TOL * n as f64 {
        return Err(Error::domain(format!(
            "correlation matrix is not positive semidefinite (eigenvalue {min_eig:e})"
        )));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] >= clamp_floor && eig.eigenvalues[i] > 0.0)
        .collect();
    let clamped = n - keep.len();
    let mut l = DMatrix::<f64>::zeros(n, keep.len());
    let mut eigs = Vec::with_capacity(keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        let s = lam.sqrt();
        for row in 0..n {
            l[(row, c)] = eig.eigenvectors[(row, i)] * s;
        }
        eigs.push(lam);
    }
    Ok(CorrelationMatrix {
        entries: m.clone(),
        factor: Some(Factor {
            l,
            eigs,
            clamped,
            min_eig,
        }),
    })
}

/// Trace forms of the moment expressions, evaluated at one phase matrix Φ.
///
/// The first five feed the uncorrected moment forms (with `Υ = Θ`):
/// `Θ = RΦR²ΦᴴR`, `tr_alpha_core = tr(RΦRΦᴴR)`, `tr_eve_q = tr(RΦᴴR²ΦR)`.
/// `t1 = tr(ΦRΦᴴR)` and `t2 = tr((ΦRΦᴴR)²)` are the forms that appear when
/// the channels carry covariance `R` itself.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceBundle {
    pub tr_theta: f64,
    pub tr_theta_sq: f64,
    pub tr_theta_theta: f64,
    pub tr_alpha_core: f64,
    pub tr_eve_q: f64,
    pub t1: f64,
    pub t2: f64,
}

impl TraceBundle {
    /// Element-wise mean of a set of bundles.
    pub fn mean(bundles: &[TraceBundle]) -> Option<TraceBundle> {
        if bundles.is_empty() {
            return None;
        }
        let k = bundles.len() as f64;
        let mut acc = TraceBundle::default();
        for b in bundles {
            acc.tr_theta += b.tr_theta;
            acc.tr_theta_sq += b.tr_theta_sq;
            acc.tr_theta_theta += b.tr_theta_theta;
            acc.tr_alpha_core += b.tr_alpha_core;
            acc.tr_eve_q += b.tr_eve_q;
            acc.t1 += b.t1;
            acc.t2 += b.t2;
        }
        acc.tr_theta /= k;
        acc.tr_theta_sq /= k;
        acc.tr_theta_theta /= k;
        acc.tr_alpha_core /= k;
        acc.tr_eve_q /= k;
        acc.t1 /= k;
        acc.t2 /= k;
        Some(acc)
    }

    /// Bundle for `R = Φ = I_N`: every trace equals `N`.
    pub fn identity(n: usize) -> TraceBundle {
        let n = n as f64;
        TraceBundle {
            tr_theta: n,
            tr_theta_sq: n,
            tr_theta_theta: n,
            tr_alpha_core: n,
            tr_eve_q: n,
            t1: n,
            t2: n,
        }
    }
}

/// Check `|φ_n| = 1` within tolerance.
pub fn check_unit_modulus(phi: &[C64]) -> Result<()> {
    for (i, p) in phi.iter().enumerate() {
        if !((p.norm() - 1.0).abs() <= UNIT_MODULUS_TOL) {
            return Err(Error::domain(format!(
                "phase matrix entry {i} has modulus {} (must be 1)",
                p.norm()
            )));
        }
    }
    Ok(())
}

/// `Σ_ij φ_i A_ij conj(φ_j) B_ji`, i.e. `tr(Φ A Φᴴ B)`, plus an absolute scale.
fn sandwich_trace(phi: &[C64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> (C64, f64) {
    let n = phi.len();
    let mut acc = C64::new(0.0, 0.0);
    let mut scale = 0.0;
    for j in 0..n {
        let pj = phi[j].conj();
        for i in 0..n {
            let w = a[(i, j)] * b[(j, i)];
            acc += phi[i] * pj * w;
            scale += w.abs();
        }
    }
    (acc, scale)
}

/// `tr(K²)` for `K = Φ A Φᴴ B`, returned with an absolute scale.
fn squared_sandwich_trace(phi: &[C64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> (C64, f64) {
    let n = phi.len();
    // (A Φᴴ) split into real and imaginary parts, then multiplied by B.
    let mut ar = a.clone();
    let mut ai = a.clone();
    for j in 0..n {
        let c = phi[j].conj();
        for i in 0..n {
            let v = a[(i, j)];
            ar[(i, j)] = v * c.re;
            ai[(i, j)] = v * c.im;
        }
    }
    let mr = &ar * b;
    let mi = &ai * b;
    // K_ij = φ_i (mr + i mi)_ij
    let k = |i: usize, j: usize| phi[i] * C64::new(mr[(i, j)], mi[(i, j)]);
    let mut acc = C64::new(0.0, 0.0);
    let mut scale = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = k(i, j) * k(j, i);
            acc += t;
            scale += t.norm();
        }
    }
    (acc, scale)
}

fn real_part(name: &str, (v, scale): (C64, f64)) -> Result<f64> {
    if v.im.abs() > IMAG_RESIDUE_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::domain(format!(
            "trace {name} has imaginary residue {:e} against scale {scale:e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// All trace forms at phase matrix `Φ = diag(phi)`.
pub fn trace_bundle(r: &CorrelationMatrix, phi: &[C64]) -> Result<TraceBundle> {
    let n = r.dim();
    if phi.len() != n {
        return Err(Error::domain(format!(
            "phase vector has length {} but R is {n}×{n}",
            phi.len()
        )));
    }
    check_unit_modulus(phi)?;
    let r1 = r.entries();
    let r2 = r1 * r1;
    let tr_theta = real_part("tr Θ", sandwich_trace(phi, &r2, &r2))?;
    let tr_alpha_core = real_part("tr(RΦRΦᴴR)", sandwich_trace(phi, r1, &r2))?;
    let conj: Vec<C64> = phi.iter().map(|p| p.conj()).collect();
    let tr_eve_q = real_part("tr(RΦᴴR²ΦR)", sandwich_trace(&conj, &r2, &r2))?;
    let t1 = real_part("tr(ΦRΦᴴR)", sandwich_trace(phi, r1, r1))?;
    let tr_theta_sq = real_part("tr Θ²", squared_sandwich_trace(phi, &r2, &r2))?;
    let t2 = real_part("tr((ΦRΦᴴR)²)", squared_sandwich_trace(phi, r1, r1))?;
    Ok(TraceBundle {
        tr_theta,
        tr_theta_sq,
        tr_theta_theta: tr_theta_sq,
        tr_alpha_core,
        tr_eve_q,
        t1,
        t2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.1;

    #[test]
    fn positions() {
        let g = RisGeometry::new(4, 4, 0.025, 0.025, LAMBDA).unwrap();
        assert_eq!(element_position(&g, 1).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(element_position(&g, 5).unwrap(), [0.0, 0.0, 0.025]);
        assert_eq!(element_position(&g, 6).unwrap(), [0.0, 0.025, 0.025]);
        assert!(element_position(&g, 0).is_err());
        assert!(element_position(&g, 17).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(RisGeometry::new(0, 3, 0.1, 0.1, 0.1).is_err());
        assert!(RisGeometry::new(3, 3, 0.0, 0.1, 0.1).is_err());
        assert!(RisGeometry::new(3, 3, 0.1, 0.1, -1.0).is_err());
        let g = RisGeometry::square(3, 0.25, LAMBDA).unwrap();
        assert!((g.element_area() - 0.025f64.powi(2)).abs() < 1e-18);
    }

    #[test]
    fn correlation_entries() {
        let g = RisGeometry::square(4, 0.25, LAMBDA).unwrap();
        let r = build_correlation(&g);
        for a in 0..16 {
            assert_eq!(r.entries()[(a, a)], 1.0);
        }
        assert!((r.entries()[(0, 1)] - 2.0 / std::f64::consts::PI).abs() < 1e-12);
        let half = RisGeometry::new(1, 2, 0.05, 0.05, LAMBDA).unwrap();
        let rh = build_correlation(&half);
        assert!(rh.entries()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn factorize_identity() {
        let r = CorrelationMatrix::from_entries(DMatrix::identity(5, 5));
        let f = factorize(&r, DEFAULT_CLAMP_FLOOR).unwrap();
        assert_eq!(f.clamped_eigs(), 0);
        let l = f.factor().unwrap();
        assert!((l * l.transpose() - DMatrix::<f64>::identity(5, 5)).norm() < 1e-14);
    }

    #[test]
    fn factorize_rank_deficient() {
        let g = RisGeometry::square(10, 0.2, LAMBDA).unwrap();
        let f = factorize(&build_correlation(&g), DEFAULT_CLAMP_FLOOR).unwrap();
        assert!(f.clamped_eigs() > 0);
        assert!(f.factor_residual().unwrap() <= 1e-8);
        assert!(f.min_eigenvalue().unwrap() >= -1e-8);
    }

    #[test]
    fn factorize_rejects_asymmetric() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 0.2;
        assert!(matches!(
            factorize(&CorrelationMatrix::from_entries(m), DEFAULT_CLAMP_FLOOR),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_traces() {
        let r = CorrelationMatrix::from_entries(DMatrix::identity(7, 7));
        let phi = vec![C64::new(1.0, 0.0); 7];
        let t = trace_bundle(&r, &phi).unwrap();
        assert_eq!(t, TraceBundle::identity(7));
    }

    fn random_phases(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::from_polar(1.0, rng.gen_range(-3.0..3.0)))
            .collect()
    }

    #[test]
    fn global_phase_is_invisible() {
        let g = RisGeometry::square(4, 0.25, LAMBDA).unwrap();
        let r = build_correlation(&g);
        let ones = vec![C64::new(1.0, 0.0); 16];
        let rotated = vec![C64::from_polar(1.0, 0.83); 16];
        let a = trace_bundle(&r, &ones).unwrap();
        let b = trace_bundle(&r, &rotated).unwrap();
        for (x, y) in [
            (a.tr_theta, b.tr_theta),
            (a.tr_theta_sq, b.tr_theta_sq),
            (a.tr_alpha_core, b.tr_alpha_core),
            (a.tr_eve_q, b.tr_eve_q),
            (a.t1, b.t1),
            (a.t2, b.t2),
        ] {
            assert!(((x - y) / x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unit_phases() {
        let r = CorrelationMatrix::from_entries(DMatrix::identity(2, 2));
        let phi = [C64::new(1.0, 0.0), C64::new(0.5, 0.0)];
        assert!(matches!(trace_bundle(&r, &phi), Err(Error::Domain(_))));
        assert!(trace_bundle(&r, &phi[..1]).is_err());
    }

    #[test]
    fn traces_nonnegative() {
        let g = RisGeometry::square(5, 0.2, LAMBDA).unwrap();
        let r = build_correlation(&g);
        for seed in 0..5 {
            let t = trace_bundle(&r, &random_phases(25, seed)).unwrap();
            assert!(t.tr_theta >= -1e-9 && t.tr_theta_sq >= -1e-9);
            assert!(t.t1 >= -1e-9 && t.t2 >= -1e-9);
        }
    }
}
