//! Exact projections, partial isometries and matrix units near approximate ones.
//!
//! Matrices are dense and complex. "Exact" outputs satisfy their identities up to the
//! tolerance `tau` passed to each operation. Partial isometries use the convention
//! source = `v*v`, range = `v v*`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("matrix is not square or sizes disagree")]
    DimensionMismatch,
    #[error("matrix is not hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("not a projection (defect {0:e})")]
    NotProjection(f64),
    #[error("spectral gap violated: eigenvalue {eigenvalue} with defect {defect} (allowed {allowed})")]
    SpectralGap {
        eigenvalue: f64,
        defect: f64,
        allowed: f64,
    },
    #[error("spectrum of v*v is not clustered near 0 and 1 (eigenvalue {0})")]
    ClusterOverlap(f64),
    #[error("projections at distance {0} are too far apart to conjugate")]
    ProjectionTooFar(f64),
    #[error("conjugating element is numerically singular (smallest eigenvalue {0:e})")]
    Singular(f64),
    #[error("projections are not orthogonal (overlap {0:e})")]
    NotOrthogonal(f64),
    #[error("bad frame: {0}")]
    BadFrame(String),
    #[error("relation check failed: {0}")]
    RelationFailure(String),
}

/// Input defect, output residual and distance moved by one operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub op: String,
    pub input_defect: f64,
    pub residual: f64,
    pub distance: f64,
    pub bound: Option<f64>,
    /// `distance / ε` where an `ε` was supplied.
    pub constant: Option<f64>,
    pub warnings: Vec<String>,
}

impl LiftReport {
    fn new(op: &str) -> Self {
        LiftReport {
            op: op.into(),
            input_defect: 0.0,
            residual: 0.0,
            distance: 0.0,
            bound: None,
            constant: None,
            warnings: Vec::new(),
        }
    }
}

/// A matrix with the report of the operation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted<T: Real> {
    pub value: CMatrix<T>,
    pub report: LiftReport,
}

fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

fn lit<T: Real>(x: f64) -> T {
    T::from_f64_lossy(x)
}

fn f64_of<T: Real>(x: T) -> f64 {
    x.to_f64_lossy()
}

/// Operator norm (largest singular value).
pub fn op_norm<T: Real>(m: &CMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::<T>::identity(n, n)
}

pub fn from_real<T: Real>(rows: usize, cols: usize, data: &[f64]) -> CMatrix<T> {
    CMatrix::<T>::from_row_iterator(rows, cols, data.iter().map(|&x| re(lit(x))))
}

pub fn diagonal<T: Real>(d: &[f64]) -> CMatrix<T> {
    CMatrix::<T>::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| re(lit(x)))))
}

/// Row-major `[re, im]` pairs.
pub fn to_rows<T: Real>(m: &CMatrix<T>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [f64_of(m[(i, j)].re), f64_of(m[(i, j)].im)]).collect())
        .collect()
}

pub fn from_rows<T: Real>(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix<T>, LiftError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(LiftError::DimensionMismatch);
    }
    Ok(CMatrix::<T>::from_fn(n, m, |i, j| {
        Complex::new(lit(rows[i][j][0]), lit(rows[i][j][1]))
    }))
}

fn square<T: Real>(m: &CMatrix<T>) -> Result<usize, LiftError> {
    if m.nrows() != m.ncols() {
        return Err(LiftError::DimensionMismatch);
    }
    Ok(m.nrows())
}

fn same<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<usize, LiftError> {
    let n = square(a)?;
    if b.shape() != a.shape() {
        return Err(LiftError::DimensionMismatch);
    }
    Ok(n)
}

/// `‖p² − p‖` and `‖p − p*‖`, the larger of the two.
pub fn projection_defect<T: Real>(p: &CMatrix<T>) -> T {
    let a = op_norm(&(p * p - p));
    let b = op_norm(&(p - p.adjoint()));
    Float::max(a, b)
}

/// `‖v v* v − v‖`.
pub fn partial_isometry_defect<T: Real>(v: &CMatrix<T>) -> T {
    op_norm(&(v * v.adjoint() * v - v))
}

/// `f(h)` for hermitian `h` by its eigendecomposition.
pub fn spectral_apply<T: Real>(h: &CMatrix<T>, f: impl Fn(T) -> T) -> CMatrix<T> {
    let eig = SymmetricEigen::new(h.clone());
    let d = CMatrix::<T>::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| re(f(l))),
    ));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

pub fn eigenvalues<T: Real>(h: &CMatrix<T>) -> Vec<T> {
    let mut v: Vec<T> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    v
}

fn require_projection<T: Real>(p: &CMatrix<T>, tau: T) -> Result<(), LiftError> {
    let d = projection_defect(p);
    if d > tau {
        return Err(LiftError::NotProjection(f64_of(d)));
    }
    Ok(())
}

fn round_spectrum<T: Real>(p: &CMatrix<T>, eps: T, tau: T, op: &str) -> Result<Lifted<T>, LiftError> {
    square(p)?;
    let herm = op_norm(&(p - p.adjoint()));
    if herm > tau {
        return Err(LiftError::NotHermitian(f64_of(herm)));
    }
    let half = lit::<T>(0.5);
    let h = (p + p.adjoint()) * re(half);
    let evs = eigenvalues(&h);
    let (worst, measured) = evs
        .iter()
        .map(|&l| (l, Float::abs(l * l - l)))
        .fold((T::zero(), T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
    if eps >= lit(0.25) || measured > eps + tau {
        return Err(LiftError::SpectralGap {
            eigenvalue: f64_of(worst),
            defect: f64_of(measured),
            allowed: f64_of(eps),
        });
    }
    let value = spectral_apply(&h, |l| if l > half { T::one() } else { T::zero() });
    let mut report = LiftReport::new(op);
    report.input_defect = f64_of(measured);
    report.residual = f64_of(projection_defect(&value));
    report.distance = f64_of(op_norm(&(&value - p)));
    let one = T::one();
    let four = lit::<T>(4.0);
    report.bound = Some(f64_of((one - Float::sqrt(one - four * measured)) * half + herm * half));
    if eps > T::zero() {
        report.constant = Some(report.distance / f64_of(eps));
    }
    Ok(Lifted { value, report })
}

/// Spectral projection of `(p + p*)/2` onto eigenvalues above 1/2.
///
/// Requires `p` hermitian to `tau` and `‖p² − p‖ <= ε < 1/4`. The reported bound is
/// `(1 − √(1 − 4ε'))/2 + ‖p − p*‖/2` for the measured defect `ε'`.
pub fn project_almost_projection<T: Real>(p: &CMatrix<T>, eps: T, tau: T) -> Result<Lifted<T>, LiftError> {
    round_spectrum(p, eps, tau, "project_almost_projection")
}

/// Projection under `1 − p̃` near `q`: the rounded compression `(1 − p̃) q (1 − p̃)`.
pub fn orthogonalize<T: Real>(
    p_tilde: &CMatrix<T>,
    q: &CMatrix<T>,
    eps: T,
    tau: T,
) -> Result<Lifted<T>, LiftError> {
    let n = same(p_tilde, q)?;
    require_projection(p_tilde, tau)?;
    let comp = identity::<T>(n) - p_tilde;
    let c = &comp * q * &comp;
    let c = (&c + c.adjoint()) * re(lit::<T>(0.5));
    let defect = op_norm(&(&c * &c - &c));
    let mut out = round_spectrum(&c, Float::max(defect, eps), tau, "orthogonalize")?;
    let overlap = op_norm(&(p_tilde * &out.value));
    if overlap > tau {
        return Err(LiftError::NotOrthogonal(f64_of(overlap)));
    }
    out.report.input_defect = f64_of(op_norm(&(p_tilde * q)));
    out.report.distance = f64_of(op_norm(&(&out.value - q)));
    out.report.bound = None;
    out.report.constant = (eps > T::zero()).then(|| out.report.distance / f64_of(eps));
    Ok(out)
}

/// `1 − Σ p̃_i` for pairwise orthogonal projections.
pub fn complete_partition<T: Real>(ps: &[CMatrix<T>], n: usize, tau: T) -> Result<Lifted<T>, LiftError> {
    let mut sum = CMatrix::<T>::zeros(n, n);
    for (i, p) in ps.iter().enumerate() {
        if p.shape() != (n, n) {
            return Err(LiftError::DimensionMismatch);
        }
        require_projection(p, tau)?;
        for q in &ps[..i] {
            let o = op_norm(&(p * q));
            if o > tau {
                return Err(LiftError::NotOrthogonal(f64_of(o)));
            }
        }
        sum += p;
    }
    let value = identity::<T>(n) - sum;
    let mut report = LiftReport::new("complete_partition");
    report.residual = f64_of(projection_defect(&value));
    Ok(Lifted { value, report })
}

/// Splits the projection `p` into orthogonal subprojections near `pieces`, summing to `p`.
/// The last piece is the remainder.
pub fn split_projection<T: Real>(
    pieces: &[CMatrix<T>],
    p: &CMatrix<T>,
    eps: T,
    tau: T,
) -> Result<Vec<Lifted<T>>, LiftError> {
    square(p)?;
    require_projection(p, tau)?;
    let mut out: Vec<Lifted<T>> = Vec::new();
    let mut rest = p.clone();
    for (i, q) in pieces.iter().enumerate() {
        same(p, q)?;
        let mut l = if i + 1 == pieces.len() {
            let mut report = LiftReport::new("split_projection");
            report.residual = f64_of(projection_defect(&rest));
            Lifted { value: rest.clone(), report }
        } else {
            let c = &rest * q * &rest;
            let c = (&c + c.adjoint()) * re(lit::<T>(0.5));
            let defect = op_norm(&(&c * &c - &c));
            round_spectrum(&c, Float::max(defect, eps), tau, "split_projection")?
        };
        l.report.distance = f64_of(op_norm(&(&l.value - q)));
        l.report.constant = (eps > T::zero()).then(|| l.report.distance / f64_of(eps));
        rest -= &l.value;
        out.push(l);
    }
    if pieces.is_empty() && op_norm(p) > tau {
        return Err(LiftError::BadFrame("nonzero projection split into no pieces".into()));
    }
    Ok(out)
}

/// `v f(v*v)` with `f = 0` on the lower spectral cluster and `λ^{-1/2}` on the upper.
///
/// Requires every eigenvalue of `v*v` within `2 max(ε, ‖vv*v − v‖)` of 0 or 1.
pub fn polar_partial_isometry<T: Real>(v: &CMatrix<T>, eps: T, tau: T) -> Result<Lifted<T>, LiftError> {
    square(v)?;
    let measured = partial_isometry_defect(v);
    let a = v.adjoint() * v;
    let a = (&a + a.adjoint()) * re(lit::<T>(0.5));
    let two = lit::<T>(2.0);
    let allowed = two * Float::max(eps, measured) + tau;
    let half = lit::<T>(0.5);
    for l in eigenvalues(&a) {
        if Float::min(Float::abs(l), Float::abs(l - T::one())) > allowed {
            return Err(LiftError::ClusterOverlap(f64_of(l)));
        }
    }
    let f = spectral_apply(&a, |l| if l > half { T::one() / Float::sqrt(l) } else { T::zero() });
    let value = v * f;
    let mut report = LiftReport::new("polar_partial_isometry");
    report.input_defect = f64_of(measured);
    report.residual = f64_of(partial_isometry_defect(&value));
    report.distance = f64_of(op_norm(&(&value - v)));
    report.constant = (eps > T::zero()).then(|| report.distance / f64_of(eps));
    Ok(Lifted { value, report })
}

/// Unitary `u` with `u p̃ u* = p′`: `u = (zz*)^{-1/2} z` for `z = (2p′ − 1)(2p̃ − 1) + 1`.
///
/// Warns when `‖p′ − p̃‖ > 0.9`, where `z` is badly conditioned.
pub fn conjugating_unitary<T: Real>(
    p_prime: &CMatrix<T>,
    p_tilde: &CMatrix<T>,
    tau: T,
) -> Result<Lifted<T>, LiftError> {
    let n = same(p_prime, p_tilde)?;
    require_projection(p_prime, tau)?;
    require_projection(p_tilde, tau)?;
    let dist = op_norm(&(p_prime - p_tilde));
    if dist >= T::one() {
        return Err(LiftError::ProjectionTooFar(f64_of(dist)));
    }
    let one = identity::<T>(n);
    let two = re(lit::<T>(2.0));
    let z = (p_prime * two - &one) * (p_tilde * two - &one) + &one;
    let zz = &z * z.adjoint();
    let zz = (&zz + zz.adjoint()) * re(lit::<T>(0.5));
    let smallest = eigenvalues(&zz).first().copied().unwrap_or(T::one());
    if smallest <= tau {
        return Err(LiftError::Singular(f64_of(smallest)));
    }
    let value = spectral_apply(&zz, |l| T::one() / Float::sqrt(l)) * &z;
    let mut report = LiftReport::new("conjugating_unitary");
    report.input_defect = f64_of(dist);
    let unit = op_norm(&(&value * value.adjoint() - &one));
    let conj = op_norm(&(&value * p_tilde * value.adjoint() - p_prime));
    report.residual = f64_of(Float::max(unit, conj));
    report.distance = f64_of(op_norm(&(&value - &one)));
    report.constant = (dist > T::zero()).then(|| report.distance / f64_of(dist));
    if dist > lit(0.9) {
        report.warnings.push(format!(
            "projections at distance {:.3}: z is ill-conditioned (smallest eigenvalue of zz* {:.3e})",
            f64_of(dist),
            f64_of(smallest)
        ));
    }
    Ok(Lifted { value, report })
}

/// Exact partial isometry near `v_raw` with source `p̃` and range `q̃`:
/// `u₂ w u₁` for `w` the polar part of `v_raw`, `u₁ p̃ u₁* = w*w` and `u₂ ww* u₂* = q̃`.
pub fn adjust_partial_isometry<T: Real>(
    v_raw: &CMatrix<T>,
    source: &CMatrix<T>,
    range: &CMatrix<T>,
    eps: T,
    tau: T,
) -> Result<Lifted<T>, LiftError> {
    same(v_raw, source)?;
    same(v_raw, range)?;
    let w = polar_partial_isometry(v_raw, eps, tau)?;
    let w = w.value;
    let ws = w.adjoint() * &w;
    let wr = &w * w.adjoint();
    let u1 = conjugating_unitary(&ws, source, tau)?;
    let u2 = conjugating_unitary(range, &wr, tau)?;
    let value = &u2.value * &w * &u1.value;
    let mut report = LiftReport::new("adjust_partial_isometry");
    report.input_defect = f64_of(partial_isometry_defect(v_raw));
    let r1 = op_norm(&(value.adjoint() * &value - source));
    let r2 = op_norm(&(&value * value.adjoint() - range));
    report.residual = f64_of(Float::max(r1, r2));
    report.distance = f64_of(op_norm(&(&value - v_raw)));
    report.constant = (eps > T::zero()).then(|| report.distance / f64_of(eps));
    report.warnings.extend(u1.report.warnings);
    report.warnings.extend(u2.report.warnings);
    Ok(Lifted { value, report })
}

/// Result of [`lift_orthogonal_sum`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalLift<T: Real> {
    pub pieces: Vec<Lifted<T>>,
    /// `‖Σ ṽ_i − v‖`.
    pub sum_residual: f64,
    /// Largest `‖ṽ_i* ṽ_j‖` or `‖ṽ_i ṽ_j*‖` over `i ≠ j`.
    pub orthogonality_residual: f64,
    pub warnings: Vec<String>,
}

/// Orthogonal exact partial isometries `ṽ_i` near `v_i` with `Σ ṽ_i = v`.
///
/// Each piece is made exact with orthogonal sources and ranges, giving a partial
/// isometry `s`; unitaries near 1 carry the source and range of `s` onto those of `v`,
/// and a final unitary on the source of `v` turns the sum into `v` itself.
pub fn lift_orthogonal_sum<T: Real>(
    vs: &[CMatrix<T>],
    v: &CMatrix<T>,
    eps: T,
    tau: T,
) -> Result<OrthogonalLift<T>, LiftError> {
    let n = square(v)?;
    let vd = partial_isometry_defect(v);
    if vd > tau {
        return Err(LiftError::RelationFailure(format!("target is not a partial isometry ({:e})", f64_of(vd))));
    }
    let mut warnings = Vec::new();
    let mut ws = Vec::new();
    for vi in vs {
        same(v, vi)?;
        ws.push(polar_partial_isometry(vi, eps, tau)?.value);
    }
    let mut src_sum = CMatrix::<T>::zeros(n, n);
    let mut rng_sum = CMatrix::<T>::zeros(n, n);
    let mut bars = Vec::new();
    for w in &ws {
        let s = orthogonalize(&src_sum, &(w.adjoint() * w), eps, tau)?.value;
        let r = orthogonalize(&rng_sum, &(w * w.adjoint()), eps, tau)?.value;
        let adj = adjust_partial_isometry(w, &s, &r, eps, tau)?;
        warnings.extend(adj.report.warnings);
        src_sum += &s;
        rng_sum += &r;
        bars.push(adj.value);
    }
    let s: CMatrix<T> = bars.iter().fold(CMatrix::<T>::zeros(n, n), |acc, b| acc + b);
    let p = v.adjoint() * v;
    let q = v * v.adjoint();
    let u1 = conjugating_unitary(&src_sum, &p, tau)?;
    let u2 = conjugating_unitary(&q, &rng_sum, tau)?;
    warnings.extend(u1.report.warnings);
    warnings.extend(u2.report.warnings);
    let s1 = &u2.value * &s * &u1.value;
    let one = identity::<T>(n);
    let w = s1.adjoint() * v + (&one - &p);
    let wd = op_norm(&(&w * w.adjoint() - &one));
    if wd > Float::sqrt(tau) {
        return Err(LiftError::RelationFailure(format!("sum correction is not unitary ({:e})", f64_of(wd))));
    }
    let right = &u1.value * &w;
    let mut pieces = Vec::new();
    for (b, vi) in bars.iter().zip(vs) {
        let value = &u2.value * b * &right;
        let mut report = LiftReport::new("lift_orthogonal_sum");
        report.input_defect = f64_of(partial_isometry_defect(vi));
        report.residual = f64_of(partial_isometry_defect(&value));
        report.distance = f64_of(op_norm(&(&value - vi)));
        report.constant = (eps > T::zero()).then(|| report.distance / f64_of(eps));
        pieces.push(Lifted { value, report });
    }
    let total: CMatrix<T> = pieces.iter().fold(CMatrix::<T>::zeros(n, n), |acc, l| acc + &l.value);
    let sum_residual = f64_of(op_norm(&(total - v)));
    let mut orth = T::zero();
    for i in 0..pieces.len() {
        for j in 0..pieces.len() {
            if i != j {
                let a = &pieces[i].value;
                let b = &pieces[j].value;
                orth = Float::max(orth, op_norm(&(a.adjoint() * b)));
                orth = Float::max(orth, op_norm(&(a * b.adjoint())));
            }
        }
    }
    Ok(OrthogonalLift {
        pieces,
        sum_residual,
        orthogonality_residual: f64_of(orth),
        warnings,
    })
}

/// Images of the matrix units of `⊕_n M_{k_n}`: `units[n][i][j]` is `e^{(n)}_{ij}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixUnitFrame<T: Real> {
    pub block_sizes: Vec<usize>,
    pub units: Vec<Vec<Vec<CMatrix<T>>>>,
}

impl<T: Real> MatrixUnitFrame<T> {
    pub fn new(block_sizes: Vec<usize>, units: Vec<Vec<Vec<CMatrix<T>>>>) -> Result<Self, LiftError> {
        if units.len() != block_sizes.len() {
            return Err(LiftError::BadFrame("one unit table per block".into()));
        }
        let mut dim = None;
        for (k, u) in block_sizes.iter().zip(&units) {
            if u.len() != *k || u.iter().any(|r| r.len() != *k) {
                return Err(LiftError::BadFrame("unit table does not match the block size".into()));
            }
            for m in u.iter().flatten() {
                let d = square(m)?;
                if *dim.get_or_insert(d) != d {
                    return Err(LiftError::DimensionMismatch);
                }
            }
        }
        Ok(MatrixUnitFrame { block_sizes, units })
    }

    pub fn dim(&self) -> usize {
        self.units
            .iter()
            .flatten()
            .flatten()
            .next()
            .map_or(0, |m| m.nrows())
    }

    /// Largest violation of `e_ij e_kl = δ_jk e_il` (across blocks: 0) and `e_ij* = e_ji`.
    pub fn relation_defect(&self) -> f64 {
        let n = self.dim();
        let zero = CMatrix::<T>::zeros(n, n);
        let mut worst = T::zero();
        for (a, ua) in self.units.iter().enumerate() {
            for (i, row) in ua.iter().enumerate() {
                for (j, eij) in row.iter().enumerate() {
                    worst = Float::max(worst, op_norm(&(eij.adjoint() - &ua[j][i])));
                    for (b, ub) in self.units.iter().enumerate() {
                        for (k, rowb) in ub.iter().enumerate() {
                            for (l, ekl) in rowb.iter().enumerate() {
                                let want = if a == b && j == k { &ua[i][l] } else { &zero };
                                worst = Float::max(worst, op_norm(&(eij * ekl - want)));
                            }
                        }
                    }
                }
            }
        }
        f64_of(worst)
    }
}

/// A unital-or-not embedding `⊕_m M_{h_m} → ⊕_n M_{k_n}` sending each `M_{h_m}` into
/// block `n` as `multiplicity[n][m]` diagonal copies, with exact images of its units.
///
/// Inside block `n` the copies are stacked in order of `m`, then copy, then index;
/// positions after the last copy are not covered.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSubalgebra<T: Real> {
    pub frame: MatrixUnitFrame<T>,
    pub multiplicity: Vec<Vec<usize>>,
}

/// Result of [`conditional_fd_lift`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdLift<T: Real> {
    pub frame: MatrixUnitFrame<T>,
    pub relation_defect: f64,
    /// Largest `‖Σ lifted units − fixed unit‖` over the fixed units.
    pub agreement_defect: f64,
    /// Largest `‖lifted − input‖` over all units.
    pub distance: f64,
    pub reports: Vec<LiftReport>,
}

/// Exact matrix units near `frame` that restrict to the fixed units on the subalgebra.
///
/// Diagonal units of each fixed summand are split into one projection per copy; the
/// copy's other units are then generated by the fixed units. Every remaining position is
/// joined to the first position of its block by an adjusted partial isometry, and all
/// units are products `V_x V_y*`.
pub fn conditional_fd_lift<T: Real>(
    frame: &MatrixUnitFrame<T>,
    fixed: &FixedSubalgebra<T>,
    eps: T,
    tau: T,
) -> Result<FdLift<T>, LiftError> {
    let dim = frame.dim();
    let nb = frame.block_sizes.len();
    let hs = &fixed.frame.block_sizes;
    if fixed.multiplicity.len() != nb || fixed.multiplicity.iter().any(|r| r.len() != hs.len()) {
        return Err(LiftError::BadFrame("multiplicity matrix has the wrong shape".into()));
    }
    if fixed.frame.dim() != dim && !hs.is_empty() {
        return Err(LiftError::DimensionMismatch);
    }
    let fixed_defect = fixed.frame.relation_defect();
    if fixed_defect > f64_of(tau) {
        return Err(LiftError::BadFrame(format!("fixed units are not exact ({fixed_defect:e})")));
    }
    // position layout: Some((m, copy, i)) or None
    let mut layout: Vec<Vec<Option<(usize, usize, usize)>>> = Vec::new();
    for (n, &k) in frame.block_sizes.iter().enumerate() {
        let mut pos = Vec::new();
        for (m, &h) in hs.iter().enumerate() {
            for r in 0..fixed.multiplicity[n][m] {
                for i in 0..h {
                    pos.push(Some((m, r, i)));
                }
            }
        }
        if pos.len() > k {
            return Err(LiftError::BadFrame(format!("block {n} is too small for its copies")));
        }
        pos.resize(k, None);
        layout.push(pos);
    }
    let mut reports = Vec::new();
    let zero = CMatrix::<T>::zeros(dim, dim);
    let mut diag: Vec<Vec<CMatrix<T>>> = frame.block_sizes.iter().map(|&k| vec![zero.clone(); k]).collect();

    // split each fixed e^m_00 among the copies (n, r)
    for (m, &h) in hs.iter().enumerate() {
        if h == 0 {
            continue;
        }
        let mut slots = Vec::new();
        for (n, pos) in layout.iter().enumerate() {
            for (x, p) in pos.iter().enumerate() {
                if let Some((pm, _, 0)) = p {
                    if *pm == m {
                        slots.push((n, x));
                    }
                }
            }
        }
        let pieces: Vec<CMatrix<T>> = slots.iter().map(|&(n, x)| frame.units[n][x][x].clone()).collect();
        let split = split_projection(&pieces, &fixed.frame.units[m][0][0], eps, tau)?;
        for (&(n, x), l) in slots.iter().zip(split) {
            reports.push(l.report);
            diag[n][x] = l.value;
        }
    }
    let mut covered = CMatrix::<T>::zeros(dim, dim);
    for (n, pos) in layout.iter().enumerate() {
        for (x, p) in pos.iter().enumerate() {
            if let Some((m, _, i)) = *p {
                if i > 0 {
                    let base = x - i;
                    let f = &fixed.frame.units[m];
                    diag[n][x] = &f[i][0] * &diag[n][base] * &f[0][i];
                }
                covered += &diag[n][x];
            }
        }
    }
    // uncovered positions take what is left
    for (n, pos) in layout.iter().enumerate() {
        for (x, p) in pos.iter().enumerate() {
            if p.is_none() {
                let l = orthogonalize(&covered, &frame.units[n][x][x], eps, tau)?;
                covered += &l.value;
                diag[n][x] = l.value;
                reports.push(l.report);
            }
        }
    }

    // V_x: partial isometries from position 0 of each block
    let mut out_units = Vec::new();
    for (n, pos) in layout.iter().enumerate() {
        let k = pos.len();
        let mut v: Vec<CMatrix<T>> = vec![zero.clone(); k];
        if k > 0 {
            v[0] = diag[n][0].clone();
        }
        for x in 1..k {
            match pos[x] {
                Some((m, _, i)) if i > 0 => {
                    let base = x - i;
                    v[x] = &fixed.frame.units[m][i][0] * &v[base];
                }
                _ => {
                    let l = adjust_partial_isometry(&frame.units[n][x][0], &diag[n][0], &diag[n][x], eps, tau)?;
                    v[x] = l.value;
                    reports.push(l.report);
                }
            }
        }
        let units: Vec<Vec<CMatrix<T>>> = (0..k)
            .map(|x| (0..k).map(|y| &v[x] * v[y].adjoint()).collect())
            .collect();
        out_units.push(units);
    }
    let lifted = MatrixUnitFrame::new(frame.block_sizes.clone(), out_units)?;
    let relation_defect = lifted.relation_defect();
    let mut agreement = T::zero();
    for (m, &h) in hs.iter().enumerate() {
        for i in 0..h {
            for j in 0..h {
                let mut s = zero.clone();
                for (n, pos) in layout.iter().enumerate() {
                    for (x, p) in pos.iter().enumerate() {
                        if let Some((pm, _, 0)) = p {
                            if *pm == m {
                                s += &lifted.units[n][x + i][x + j];
                            }
                        }
                    }
                }
                agreement = Float::max(agreement, op_norm(&(s - &fixed.frame.units[m][i][j])));
            }
        }
    }
    let mut distance = T::zero();
    for (a, b) in lifted.units.iter().flatten().flatten().zip(frame.units.iter().flatten().flatten()) {
        distance = Float::max(distance, op_norm(&(a - b)));
    }
    let agreement_defect = f64_of(agreement);
    let tol = f64_of(tau);
    if relation_defect > tol || agreement_defect > tol {
        return Err(LiftError::RelationFailure(format!(
            "relations {relation_defect:e}, agreement {agreement_defect:e}"
        )));
    }
    Ok(FdLift {
        frame: lifted,
        relation_defect,
        agreement_defect,
        distance: f64_of(distance),
        reports,
    })
}

/// Random test matrices.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian<T: Real, R: Rng>(n: usize, m: usize, rng: &mut R) -> CMatrix<T> {
        CMatrix::<T>::from_fn(n, m, |_, _| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(lit(a), lit(b))
        })
    }

    /// Unitary from the QR factorization of a gaussian matrix.
    pub fn unitary<T: Real, R: Rng>(n: usize, rng: &mut R) -> CMatrix<T> {
        gaussian::<T, R>(n, n, rng).qr().q()
    }

    /// A uniformly rotated projection of rank `r`.
    pub fn projection<T: Real, R: Rng>(n: usize, r: usize, rng: &mut R) -> CMatrix<T> {
        let u = unitary::<T, R>(n, rng);
        let d: Vec<f64> = (0..n).map(|i| if i < r { 1.0 } else { 0.0 }).collect();
        &u * diagonal::<T>(&d) * u.adjoint()
    }

    /// Hermitian matrix of operator norm `norm`.
    pub fn hermitian_noise<T: Real, R: Rng>(n: usize, norm: f64, rng: &mut R) -> CMatrix<T> {
        let g = gaussian::<T, R>(n, n, rng);
        let h = &g + g.adjoint();
        let s = op_norm(&h);
        if s == T::zero() {
            return h;
        }
        h * re(lit::<T>(norm) / s)
    }

    /// Matrix of operator norm `norm`.
    pub fn noise<T: Real, R: Rng>(n: usize, norm: f64, rng: &mut R) -> CMatrix<T> {
        let g = gaussian::<T, R>(n, n, rng);
        let s = op_norm(&g);
        g * re(lit::<T>(norm) / s)
    }

    /// A canonical inclusion `⊕ M_{h_m} ⊂ ⊕ M_{k_n}` realized in `M_{copies·Σk}`, in a
    /// random basis.
    #[derive(Debug, Clone)]
    pub struct FdInstance<T: Real> {
        pub exact: MatrixUnitFrame<T>,
        pub noisy: MatrixUnitFrame<T>,
        pub fixed: FixedSubalgebra<T>,
    }

    /// Each unit `e^{(n)}_{ij}` becomes a rank-`copies` partial isometry. The noisy frame
    /// adds noise of norm at most `noise` to every unit, keeping `e_ji = e_ij*`.
    pub fn fd_instance<T: Real, R: Rng>(
        small: &[usize],
        big: &[usize],
        multiplicity: &[Vec<usize>],
        copies: usize,
        noise: f64,
        rng: &mut R,
    ) -> Result<FdInstance<T>, LiftError> {
        let dim = copies * big.iter().sum::<usize>();
        let u = unitary::<T, R>(dim, rng);
        let offsets: Vec<usize> = big
            .iter()
            .scan(0, |acc, &k| {
                let o = *acc;
                *acc += k;
                Some(o)
            })
            .collect();
        let unit = |n: usize, i: usize, j: usize| -> CMatrix<T> {
            let mut m = CMatrix::<T>::zeros(dim, dim);
            for c in 0..copies {
                m[((offsets[n] + i) * copies + c, (offsets[n] + j) * copies + c)] = re(T::one());
            }
            &u * m * u.adjoint()
        };
        let exact_units: Vec<Vec<Vec<CMatrix<T>>>> = big
            .iter()
            .enumerate()
            .map(|(n, &k)| (0..k).map(|i| (0..k).map(|j| unit(n, i, j)).collect()).collect())
            .collect();
        let mut noisy_units = exact_units.clone();
        for units in noisy_units.iter_mut() {
            let k = units.len();
            for i in 0..k {
                for j in i..k {
                    let e = if i == j {
                        hermitian_noise::<T, R>(dim, noise, rng)
                    } else {
                        super::random::noise::<T, R>(dim, noise, rng)
                    };
                    units[i][j] += &e;
                    if i != j {
                        units[j][i] += e.adjoint();
                    }
                }
            }
        }
        let mut fixed_units = Vec::new();
        for (m, &h) in small.iter().enumerate() {
            let mut um = vec![vec![CMatrix::<T>::zeros(dim, dim); h]; h];
            for (n, _) in big.iter().enumerate() {
                let mut base = 0;
                for (mm, &hh) in small.iter().enumerate().take(m) {
                    base += multiplicity[n][mm] * hh;
                }
                for r in 0..multiplicity[n][m] {
                    let o = base + r * h;
                    for (i, row) in um.iter_mut().enumerate() {
                        for (j, x) in row.iter_mut().enumerate() {
                            *x += &exact_units[n][o + i][o + j];
                        }
                    }
                }
            }
            fixed_units.push(um);
        }
        Ok(FdInstance {
            exact: MatrixUnitFrame::new(big.to_vec(), exact_units)?,
            noisy: MatrixUnitFrame::new(big.to_vec(), noisy_units)?,
            fixed: FixedSubalgebra {
                frame: MatrixUnitFrame::new(small.to_vec(), fixed_units)?,
                multiplicity: multiplicity.to_vec(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    type M = CMatrix<f64>;
    const TAU: f64 = 1e-10;

    fn close(a: &M, b: &M, tol: f64) -> bool {
        op_norm(&(a - b)) <= tol
    }

    #[test]
    fn projection_examples() {
        let p: M = diagonal(&[1.0, 0.0]);
        assert!(close(&project_almost_projection(&p, 0.0, TAU).unwrap().value, &p, 1e-12));
        let q: M = diagonal(&[0.9, 0.1]);
        let l = project_almost_projection(&q, 0.09, TAU).unwrap();
        assert!(close(&l.value, &diagonal(&[1.0, 0.0]), 1e-12));
        assert!((l.report.distance - 0.1).abs() < 1e-12);
        assert!(project_almost_projection(&diagonal::<f64>(&[0.5]), 0.2, TAU).is_err());
    }

    #[test]
    fn orthogonalize_diagonal() {
        let p: M = diagonal(&[1.0, 0.0]);
        let q: M = diagonal(&[0.02, 0.97]);
        let l = orthogonalize(&p, &q, 0.03, TAU).unwrap();
        assert!(close(&l.value, &diagonal(&[0.0, 1.0]), 1e-12));
    }

    #[test]
    fn completion() {
        let a: M = diagonal(&[1.0, 0.0, 0.0]);
        let b: M = diagonal(&[0.0, 1.0, 0.0]);
        let c = complete_partition(&[a, b], 3, TAU).unwrap();
        assert!(close(&c.value, &diagonal(&[0.0, 0.0, 1.0]), 0.0));
        assert!(close(&complete_partition::<f64>(&[], 2, TAU).unwrap().value, &identity(2), 0.0));
    }

    #[test]
    fn polar_scalar() {
        let v: M = diagonal(&[0.9]);
        let w = polar_partial_isometry(&v, 0.2, TAU).unwrap();
        assert!(close(&w.value, &diagonal(&[1.0]), 1e-12));
        assert!((w.report.distance - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rotation_conjugates_rank_one_pair() {
        let t: f64 = 0.3;
        let p: M = diagonal(&[1.0, 0.0]);
        let (c, s) = (t.cos(), t.sin());
        let pp: M = from_real(2, 2, &[c * c, c * s, c * s, s * s]);
        let u = conjugating_unitary(&pp, &p, TAU).unwrap();
        let rot: M = from_real(2, 2, &[c, -s, s, c]);
        assert!(close(&u.value, &rot, 1e-12));
        let same = conjugating_unitary(&p, &p, TAU).unwrap();
        assert!(close(&same.value, &identity(2), 1e-12));
    }

    #[test]
    fn near_singular_pair_warns() {
        let t: f64 = 1.2;
        let p: M = diagonal(&[1.0, 0.0]);
        let (c, s) = (t.cos(), t.sin());
        let pp: M = from_real(2, 2, &[c * c, c * s, c * s, s * s]);
        let u = conjugating_unitary(&pp, &p, TAU).unwrap();
        assert!(!u.report.warnings.is_empty());
    }

    #[test]
    fn adjust_scalar() {
        let v: M = diagonal(&[0.9]);
        let one: M = identity(1);
        let l = adjust_partial_isometry(&v, &one, &one, 0.2, TAU).unwrap();
        assert!(close(&l.value, &one, 1e-12));
    }

    #[test]
    fn orthogonal_sum_single_piece() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u: M = random::unitary(4, &mut rng);
        let v = &u * diagonal::<f64>(&[1.0, 1.0, 0.0, 0.0]);
        let l = lift_orthogonal_sum(&[v.clone()], &v, 0.01, TAU).unwrap();
        assert!(close(&l.pieces[0].value, &v, 1e-10));
    }

    #[test]
    fn fd_lift_unital_scalar_in_m2() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let inst = random::fd_instance::<f64, _>(&[1], &[2], &[vec![2]], 2, 0.03, &mut rng).unwrap();
        let out = conditional_fd_lift(&inst.noisy, &inst.fixed, 0.05, TAU).unwrap();
        assert!(out.relation_defect < 1e-10);
        assert!(out.agreement_defect < 1e-10);
        assert!(out.distance < 0.5);
    }

    #[test]
    fn fd_lift_exact_frame_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let inst = random::fd_instance::<f64, _>(&[2], &[2], &[vec![1]], 1, 0.0, &mut rng).unwrap();
        let fixed = FixedSubalgebra {
            frame: inst.exact.clone(),
            multiplicity: vec![vec![1]],
        };
        let out = conditional_fd_lift(&inst.exact, &fixed, 0.01, TAU).unwrap();
        assert!(out.distance < 1e-12);
    }

    #[test]
    fn fd_lift_diagonal_pair() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let inst = random::fd_instance::<f64, _>(&[1, 1], &[2], &[vec![1, 1]], 1, 0.02, &mut rng).unwrap();
        let out = conditional_fd_lift(&inst.noisy, &inst.fixed, 0.05, TAU).unwrap();
        for (m, pos) in [(0usize, 0usize), (1, 1)] {
            let d = op_norm(&(&out.frame.units[0][pos][pos] - &inst.fixed.frame.units[m][0][0]));
            assert!(d < 1e-10);
        }
    }

    #[test]
    fn f32_projection() {
        let p: CMatrix<f32> = diagonal(&[0.95, 0.02, 1.01]);
        let l = project_almost_projection(&p, 0.05, f32::default_tolerance()).unwrap();
        assert!(op_norm(&(&l.value - diagonal::<f32>(&[1.0, 0.0, 1.0]))) < 1e-5);
    }
}
