//! Jones calculus for the pre-selection / plate / post-selection chain.
//!
//! States are written in the `|H⟩, |V⟩` basis. Both Wollaston prisms select
//! linear polarizations at ±45° to that basis, and the birefringent plates
//! have their axes along H and V, so every plate is diagonal here.
//!
//! Optical elements are wavelength-parameterized: [`OpticalElement::jones`]
//! returns the 2×2 matrix at a given vacuum wavelength in nm.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::io::Read;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{interp_table, read_two_column};

/// Raw (unnormalized) Jones amplitudes `[h, v]`.
pub type JonesVector = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A normalized polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    h: Complex64,
    v: Complex64,
}

impl PolarizationState {
    pub const H: Self = Self { h: ONE, v: ZERO };
    pub const V: Self = Self { h: ZERO, v: ONE };

    /// Normalizes `(h, v)`. Fails on the zero vector.
    pub fn new(h: Complex64, v: Complex64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("polarization vector has zero or non-finite norm".into()));
        }
        Ok(Self { h: h / norm, v: v / norm })
    }

    /// Real unit vector `(h, v)`; the caller guarantees `h² + v² = 1`.
    fn real_unit(h: f64, v: f64) -> Self {
        Self { h: Complex64::new(h, 0.0), v: Complex64::new(v, 0.0) }
    }

    pub fn h(&self) -> Complex64 {
        self.h
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    pub fn amplitudes(&self) -> JonesVector {
        [self.h, self.v]
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &JonesVector) -> Complex64 {
        self.h.conj() * other[0] + self.v.conj() * other[1]
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.overlap(&other.amplitudes())
    }

    /// Equality modulo a global phase: `|⟨a|b⟩| = 1` within `tol`.
    pub fn same_ray(&self, other: &Self, tol: f64) -> bool {
        (self.inner(other).norm() - 1.0).abs() <= tol
    }
}

/// Pre-selected state `sin(π/4)|H⟩ + cos(π/4)|V⟩`.
pub fn pre_state() -> PolarizationState {
    PolarizationState::real_unit(FRAC_PI_4.sin(), FRAC_PI_4.cos())
}

/// Post-selected state `sin(β/2 − π/4)|H⟩ + cos(β/2 − π/4)|V⟩`.
///
/// At `β = 0` it is orthogonal to [`pre_state`]; the overlap magnitude is
/// `|sin(β/2)|` for any `β`.
pub fn post_state(beta: f64) -> PolarizationState {
    let angle = beta / 2.0 - FRAC_PI_4;
    PolarizationState::real_unit(angle.sin(), angle.cos())
}

/// 2×2 complex matrix acting on `[h, v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub const IDENTITY: Self = Self([[ONE, ZERO], [ZERO, ONE]]);

    pub fn diag(a: Complex64, d: Complex64) -> Self {
        Self([[a, ZERO], [ZERO, d]])
    }

    /// Polarization operator `A = |H⟩⟨H| − |V⟩⟨V|`.
    pub fn observable_a() -> Self {
        Self::diag(ONE, -ONE)
    }

    /// `|s⟩⟨s|`.
    pub fn projector(s: &PolarizationState) -> Self {
        let (h, v) = (s.h(), s.v());
        Self([[h * h.conj(), h * v.conj()], [v * h.conj(), v * v.conj()]])
    }

    pub fn scalar(c: Complex64) -> Self {
        Self::diag(c, c)
    }

    pub fn apply(&self, x: &JonesVector) -> JonesVector {
        let m = &self.0;
        [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn determinant(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, c: f64) -> Self {
        let m = &self.0;
        Self([[m[0][0] * c, m[0][1] * c], [m[1][0] * c, m[1][1] * c]])
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        Self([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    /// Deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::IDENTITY)
    }

    /// Distance to `other` after removing the best global phase.
    pub fn max_abs_diff_up_to_phase(&self, other: &Self) -> f64 {
        // Phase of tr(other† self) aligns the two matrices.
        let t = (other.adjoint() * *self).trace();
        let phase = if t.norm() > 0.0 { t / t.norm() } else { ONE };
        let aligned = Self(other.0.map(|row| row.map(|e| e * phase)));
        self.max_abs_diff(&aligned)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|e| e.re.is_finite() && e.im.is_finite())
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesMatrix(out)
    }
}

/// An element whose Jones matrix depends on wavelength.
pub trait OpticalElement: Send + Sync {
    fn jones(&self, lambda_nm: f64) -> Result<JonesMatrix>;
}

fn check_wavelength(lambda_nm: f64) -> Result<()> {
    if lambda_nm > 0.0 && lambda_nm.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("wavelength must be > 0, got {lambda_nm}")))
    }
}

/// Tabulated birefringence `Δn(λ)`; only its shape relative to the design
/// wavelength matters.
#[derive(Debug, Clone, PartialEq)]
pub struct BirefringenceTable {
    wavelengths: Vec<f64>,
    delta_n: Vec<f64>,
}

impl BirefringenceTable {
    pub fn new(wavelengths: Vec<f64>, delta_n: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != delta_n.len() || wavelengths.len() < 2 {
            return Err(Error::InvalidConfig("birefringence table needs ≥ 2 matching rows".into()));
        }
        if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("birefringence wavelengths must increase".into()));
        }
        Ok(Self { wavelengths, delta_n })
    }

    fn at(&self, lambda: f64) -> Result<f64> {
        interp_table(&self.wavelengths, &self.delta_n, lambda)
            .ok_or_else(|| Error::InvalidConfig(format!("birefringence undefined at {lambda} nm")))
    }
}

/// Linear retarder with axes along H/V: `diag(e^{−iφ/2}, e^{+iφ/2})` with
/// `φ(λ) = α·λ0/λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Retarder {
    alpha: f64,
    lambda0: f64,
    dispersion: Option<BirefringenceTable>,
}

impl Retarder {
    pub fn new(alpha: f64, lambda0: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("retardance must be finite, got {alpha}")));
        }
        check_wavelength(lambda0)?;
        Ok(Self { alpha, lambda0, dispersion: None })
    }

    /// Scales the retardance by `Δn(λ)/Δn(λ0)` on top of the `λ0/λ` factor.
    pub fn with_birefringence(mut self, table: BirefringenceTable) -> Self {
        self.dispersion = Some(table);
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Relative H–V phase `φ(λ)`.
    pub fn retardance(&self, lambda_nm: f64) -> Result<f64> {
        check_wavelength(lambda_nm)?;
        let achromatic = self.alpha * self.lambda0 / lambda_nm;
        match &self.dispersion {
            None => Ok(achromatic),
            Some(t) => Ok(achromatic * t.at(lambda_nm)? / t.at(self.lambda0)?),
        }
    }
}

impl OpticalElement for Retarder {
    fn jones(&self, lambda_nm: f64) -> Result<JonesMatrix> {
        let phi = self.retardance(lambda_nm)?;
        Ok(JonesMatrix::diag(Complex64::cis(-phi / 2.0), Complex64::cis(phi / 2.0)))
    }
}

pub fn retarder(alpha: f64, lambda0: f64) -> Result<Retarder> {
    Retarder::new(alpha, lambda0)
}

/// Tilt geometry of the half-wave-plate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateParams {
    pub theta: f64,
    pub n0: f64,
    pub lambda0_design: f64,
}

impl PlateParams {
    pub fn new(theta: f64, n0: f64, lambda0_design: f64) -> Result<Self> {
        if !(theta.abs() < FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!("tilt must satisfy |theta| < π/2, got {theta}")));
        }
        if !(n0 > 1.0) || !n0.is_finite() {
            return Err(Error::InvalidConfig(format!("refractive index must be > 1, got {n0}")));
        }
        check_wavelength(lambda0_design).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(Self { theta, n0, lambda0_design })
    }

    /// Path-length factor `1/cos θ_r` of the tilted plate, with Snell's law
    /// `sin θ_r = sin θ / n0`.
    fn path_factor(&self) -> Result<f64> {
        let s = self.theta.sin() / self.n0;
        let c2 = 1.0 - s * s;
        if !(c2 > 0.0) {
            return Err(Error::Domain(format!("sin²θ must be below n0², got θ={}", self.theta)));
        }
        Ok(1.0 / c2.sqrt())
    }
}

/// Effective plate retardance from the tilt: `π(1/√(1 − sin²θ/n0²) − 1)`.
pub fn alpha_from_tilt(p: &PlateParams) -> Result<f64> {
    Ok(PI * (p.path_factor()? - 1.0))
}

/// Small-tilt form `πθ²/(2n0²)`.
pub fn alpha_from_tilt_approx(p: &PlateParams) -> f64 {
    PI * p.theta * p.theta / (2.0 * p.n0 * p.n0)
}

/// Inverse of [`alpha_from_tilt`] on `θ ≥ 0`.
pub fn tilt_from_alpha(alpha: f64, n0: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be ≥ 0 to invert the tilt map, got {alpha}")));
    }
    let inv = 1.0 / (1.0 + alpha / PI);
    let sin_theta = n0 * (1.0 - inv * inv).sqrt();
    if sin_theta > 1.0 {
        return Err(Error::Domain(format!("alpha {alpha} is not reachable by tilting (n0 = {n0})")));
    }
    Ok(sin_theta.asin())
}

/// Two crossed true-zero-order half-wave plates, the second tilted by θ.
///
/// The untilted plate has its fast axis along V (retardance −π at the design
/// wavelength); the tilted one along H with retardance `π/cos θ_r`. Their
/// product is a thin retarder of retardance [`alpha_from_tilt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwpPair {
    plate: PlateParams,
    alpha: f64,
}

impl HwpPair {
    pub fn new(plate: PlateParams) -> Result<Self> {
        let alpha = alpha_from_tilt(&plate)?;
        Ok(Self { plate, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn equivalent_retarder(&self) -> Retarder {
        Retarder { alpha: self.alpha, lambda0: self.plate.lambda0_design, dispersion: None }
    }

    /// The two-plate product, evaluated explicitly.
    pub fn jones_explicit(&self, lambda_nm: f64) -> Result<JonesMatrix> {
        let lambda0 = self.plate.lambda0_design;
        let upright = Retarder::new(-PI, lambda0)?;
        let tilted = Retarder::new(PI * self.plate.path_factor()?, lambda0)?;
        Ok(tilted.jones(lambda_nm)? * upright.jones(lambda_nm)?)
    }
}

impl OpticalElement for HwpPair {
    fn jones(&self, lambda_nm: f64) -> Result<JonesMatrix> {
        self.equivalent_retarder().jones(lambda_nm)
    }
}

pub fn hwp_pair(p: PlateParams) -> Result<HwpPair> {
    HwpPair::new(p)
}

/// Refractive index as a function of wavelength (nm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IndexModel {
    Constant { n: f64 },
    /// `n² = a + b·λ²/(λ² − c²)` with λ and c in µm.
    SinglePole { a: f64, b: f64, c_um: f64 },
    Table { wavelengths_nm: Vec<f64>, index: Vec<f64> },
}

impl IndexModel {
    /// ZnSe near 808 nm.
    pub fn znse_constant() -> Self {
        IndexModel::Constant { n: 2.48 }
    }

    /// Single-pole ZnSe fit, `n² = 4.00 + 1.90λ²/(λ² − 0.113)` (λ in µm).
    pub fn znse_single_pole() -> Self {
        IndexModel::SinglePole { a: 4.00, b: 1.90, c_um: 0.113f64.sqrt() }
    }

    pub fn index_at(&self, lambda_nm: f64) -> Result<f64> {
        let n = match self {
            IndexModel::Constant { n } => *n,
            IndexModel::SinglePole { a, b, c_um } => {
                let l2 = (lambda_nm * 1e-3).powi(2);
                let denom = l2 - c_um * c_um;
                let n2 = a + b * l2 / denom;
                if !(denom > 0.0 && n2 > 0.0) {
                    return Err(Error::InvalidConfig(format!("index model undefined at {lambda_nm} nm")));
                }
                n2.sqrt()
            }
            IndexModel::Table { wavelengths_nm, index } => interp_table(wavelengths_nm, index, lambda_nm)
                .ok_or_else(|| Error::InvalidConfig(format!("index table does not cover {lambda_nm} nm")))?,
        };
        if n.is_finite() && n > 0.0 {
            Ok(n)
        } else {
            Err(Error::InvalidConfig(format!("non-physical index {n} at {lambda_nm} nm")))
        }
    }

    /// Reads a `wavelength_nm,index` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (wavelengths_nm, index) = read_two_column(reader, ["wavelength_nm", "index"])?;
        Ok(IndexModel::Table { wavelengths_nm, index })
    }
}

/// Isotropic slab: `e^{iχ(λ)}·I` with `χ = 2π·n(λ)·d/λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersiveSlab {
    pub thickness_mm: f64,
    pub index: IndexModel,
}

impl DispersiveSlab {
    pub fn new(thickness_mm: f64, index: IndexModel) -> Result<Self> {
        if !(thickness_mm >= 0.0) || !thickness_mm.is_finite() {
            return Err(Error::InvalidConfig(format!("slab thickness must be ≥ 0, got {thickness_mm}")));
        }
        Ok(Self { thickness_mm, index })
    }

    /// 1 mm ZnSe crystal.
    pub fn znse_1mm() -> Self {
        Self { thickness_mm: 1.0, index: IndexModel::znse_constant() }
    }

    pub fn phase(&self, lambda_nm: f64) -> Result<f64> {
        check_wavelength(lambda_nm)?;
        let n = self.index.index_at(lambda_nm)?;
        Ok(TAU * n * self.thickness_mm * 1e6 / lambda_nm)
    }
}

impl OpticalElement for DispersiveSlab {
    fn jones(&self, lambda_nm: f64) -> Result<JonesMatrix> {
        Ok(JonesMatrix::scalar(Complex64::cis(self.phase(lambda_nm)?)))
    }
}

pub fn dispersive_slab(thickness_mm: f64, index: IndexModel) -> Result<DispersiveSlab> {
    DispersiveSlab::new(thickness_mm, index)
}

/// Post-selection angle `β` and the polarizer angular spread `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelectionParams {
    pub beta: f64,
    pub spread: f64,
}

impl PostSelectionParams {
    pub fn new(beta: f64, spread: f64) -> Result<Self> {
        if !(beta.abs() <= FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!("beta must satisfy |beta| ≤ π/2, got {beta}")));
        }
        if !(spread >= 0.0) || !spread.is_finite() {
            return Err(Error::InvalidConfig(format!("polarizer spread must be ≥ 0, got {spread}")));
        }
        Ok(Self { beta, spread })
    }

    pub fn ideal(beta: f64) -> Result<Self> {
        Self::new(beta, 0.0)
    }
}
