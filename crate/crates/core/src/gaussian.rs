//! Linear-form algebra over an explicit basis of independent Gaussian noise
//! sources.
//!
//! Every quadrature the simulator tracks is a [`QuadratureForm`]: a sparse
//! real linear combination of noise-mode components plus a deterministic
//! offset. Because the noise modes are mutually independent and zero mean,
//! second moments of any pair of forms reduce to a sum over shared modes of
//! `cᵀ·M·d`, where `M` is the mode's symmetrized second-moment block.
//!
//! Units: ħ = 1, `√2·X = b + b†`, so the ground-state variance is ½.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix2, Matrix4};

use crate::error::{Error, Result};

/// Meter variances below this are treated as a deterministic (degenerate) meter.
pub const DEGENERATE_METER_THRESHOLD: f64 = 1e-12;

/// Name of the snapshot recorded when a [`SystemState`] is created.
pub const INITIAL_SNAPSHOT: &str = "initial";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(u32);

impl ModeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    InitialMech,
    InitialLight,
    LossVacuum,
    ThermalSegment,
}

/// One independent Gaussian noise source with a `dim × dim` block of
/// symmetrized second moments (`dim` is 1 or 2).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMode {
    id: ModeId,
    kind: NoiseKind,
    dim: u8,
    second_moments: Matrix2<f64>,
}

impl NoiseMode {
    pub fn id(&self) -> ModeId {
        self.id
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// For one-dimensional modes only the `(0, 0)` entry is meaningful.
    pub fn second_moments(&self) -> &Matrix2<f64> {
        &self.second_moments
    }

    fn moment(&self, i: u8, j: u8) -> f64 {
        self.second_moments[(i as usize, j as usize)]
    }
}

/// Append-only set of noise modes. Ids are dense indices into the registry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    modes: Vec<NoiseMode>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a two-component mode after checking that `moments` is a
    /// symmetric positive-semidefinite matrix.
    pub fn push(&mut self, kind: NoiseKind, moments: Matrix2<f64>) -> Result<ModeId> {
        validate_moments(&moments)?;
        Ok(self.push_unchecked(kind, 2, symmetrize(&moments)))
    }

    /// Appends a single-component mode with the given variance.
    pub fn push_scalar(&mut self, kind: NoiseKind, variance: f64) -> Result<ModeId> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::InvalidMoments(format!(
                "scalar variance must be finite and nonnegative, got {variance}"
            )));
        }
        let mut m = Matrix2::zeros();
        m[(0, 0)] = variance;
        Ok(self.push_unchecked(kind, 1, m))
    }

    fn push_unchecked(&mut self, kind: NoiseKind, dim: u8, second_moments: Matrix2<f64>) -> ModeId {
        let id = ModeId(u32::try_from(self.modes.len()).expect("registry overflow"));
        self.modes.push(NoiseMode {
            id,
            kind,
            dim,
            second_moments,
        });
        id
    }

    pub fn get(&self, id: ModeId) -> Result<&NoiseMode> {
        self.modes.get(id.index()).ok_or(Error::UnknownMode(id))
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NoiseMode> {
        self.modes.iter()
    }
}

fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Checks that a 2×2 block is finite, symmetric and positive semidefinite.
pub fn validate_moments(m: &Matrix2<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMoments(format!("non-finite entry in {m:?}")));
    }
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * scale {
        return Err(Error::InvalidMoments(format!("matrix is not symmetric: {m:?}")));
    }
    let tol = 1e-12 * scale;
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let det = m[(0, 0)] * m[(1, 1)] - off * off;
    if m[(0, 0)] < -tol || m[(1, 1)] < -tol || det < -tol * scale {
        return Err(Error::InvalidMoments(format!(
            "matrix is not positive semidefinite: {m:?}"
        )));
    }
    Ok(())
}

/// A quadrature operator as a sparse linear combination over noise-mode
/// components, plus a deterministic offset (the mean).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadratureForm {
    coeffs: BTreeMap<(ModeId, u8), f64>,
    offset: f64,
}

impl QuadratureForm {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The `component`-th quadrature of `mode` with unit coefficient.
    pub fn unit(mode: ModeId, component: u8) -> Self {
        let mut f = Self::zero();
        f.coeffs.insert((mode, component), 1.0);
        f
    }

    pub fn constant(offset: f64) -> Self {
        Self {
            coeffs: BTreeMap::new(),
            offset,
        }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Coefficient on one mode component; zero if absent.
    pub fn coeff(&self, mode: ModeId, component: u8) -> f64 {
        self.coeffs.get(&(mode, component)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (ModeId, u8, f64)> + '_ {
        self.coeffs.iter().map(|(&(m, i), &c)| (m, i, c))
    }

    pub fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.coeffs.values().all(|c| c.is_finite())
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// `self ← self + k·other`. Exact zeros are pruned so that identity maps
    /// leave forms structurally unchanged.
    pub fn add_scaled(&mut self, other: &QuadratureForm, k: f64) {
        if k == 0.0 {
            return;
        }
        for (&key, &c) in &other.coeffs {
            let entry = self.coeffs.entry(key).or_insert(0.0);
            *entry += k * c;
            if *entry == 0.0 {
                self.coeffs.remove(&key);
            }
        }
        self.offset += k * other.offset;
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &QuadratureForm, b: f64) -> QuadratureForm {
        let mut out = self.scaled(a);
        out.add_scaled(other, b);
        out
    }

    pub fn scaled(&self, k: f64) -> QuadratureForm {
        if k == 0.0 {
            return QuadratureForm::zero();
        }
        QuadratureForm {
            coeffs: self.coeffs.iter().map(|(&key, &c)| (key, k * c)).collect(),
            offset: k * self.offset,
        }
    }

    /// Coefficient vector against the canonical quadratures of `mode`.
    fn block(&self, mode: ModeId) -> [f64; 2] {
        [self.coeff(mode, 0), self.coeff(mode, 1)]
    }
}

impl Add for &QuadratureForm {
    type Output = QuadratureForm;
    fn add(self, rhs: &QuadratureForm) -> QuadratureForm {
        self.combine(1.0, rhs, 1.0)
    }
}

impl Sub for &QuadratureForm {
    type Output = QuadratureForm;
    fn sub(self, rhs: &QuadratureForm) -> QuadratureForm {
        self.combine(1.0, rhs, -1.0)
    }
}

impl Mul<f64> for &QuadratureForm {
    type Output = QuadratureForm;
    fn mul(self, k: f64) -> QuadratureForm {
        self.scaled(k)
    }
}

impl Neg for &QuadratureForm {
    type Output = QuadratureForm;
    fn neg(self) -> QuadratureForm {
        self.scaled(-1.0)
    }
}

/// Symmetrized covariance `½⟨fg + gf⟩ − ⟨f⟩⟨g⟩`.
pub fn covariance(f: &QuadratureForm, g: &QuadratureForm, reg: &Registry) -> Result<f64> {
    for (mode, _, _) in g.terms() {
        reg.get(mode)?;
    }
    let mut acc = 0.0;
    for (&(mode, i), &cf) in &f.coeffs {
        let m = reg.get(mode)?;
        for (&(_, j), &cg) in g.coeffs.range((mode, 0)..=(mode, u8::MAX)) {
            acc += cf * m.moment(i, j) * cg;
        }
    }
    Ok(acc)
}

pub fn variance(f: &QuadratureForm, reg: &Registry) -> Result<f64> {
    covariance(f, f, reg)
}

/// `V(a|b) = V(a) − C(a,b)²/V(b)`, clamped at zero against roundoff.
pub fn conditional_variance(a: &QuadratureForm, b: &QuadratureForm, reg: &Registry) -> Result<f64> {
    let vb = variance(b, reg)?;
    if vb < DEGENERATE_METER_THRESHOLD {
        return Err(Error::DegenerateMeasurement {
            variance: vb,
            threshold: DEGENERATE_METER_THRESHOLD,
        });
    }
    let va = variance(a, reg)?;
    let c = covariance(a, b, reg)?;
    Ok((va - c * c / vb).max(0.0))
}

/// Covariance matrix between two lists of forms.
pub fn covariance_matrix(rows: &[&QuadratureForm], cols: &[&QuadratureForm], reg: &Registry) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            out[(i, j)] = covariance(r, c, reg)?;
        }
    }
    Ok(out)
}

/// Covariance of `targets` conditioned jointly on every form in `meters`
/// (the Schur complement `Σ_tt − Σ_tm Σ_mm⁻¹ Σ_mt`).
pub fn conditional_covariance(
    targets: &[&QuadratureForm],
    meters: &[&QuadratureForm],
    reg: &Registry,
) -> Result<DMatrix<f64>> {
    let s_tt = covariance_matrix(targets, targets, reg)?;
    if meters.is_empty() {
        return Ok(s_tt);
    }
    let s_mm = covariance_matrix(meters, meters, reg)?;
    let s_tm = covariance_matrix(targets, meters, reg)?;
    let min_diag = s_mm.diagonal().min();
    let degenerate = || Error::DegenerateMeasurement {
        variance: min_diag,
        threshold: DEGENERATE_METER_THRESHOLD,
    };
    if min_diag < DEGENERATE_METER_THRESHOLD {
        return Err(degenerate());
    }
    let chol = s_mm.cholesky().ok_or_else(degenerate)?;
    let gain = chol.solve(&s_tm.transpose());
    let mut out = s_tt - &s_tm * gain;
    // restore exact symmetry
    let n = out.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Phase-space rotation by `angle`: `(x cos θ + p sin θ, p cos θ − x sin θ)`.
pub fn rotate_pair(x: &QuadratureForm, p: &QuadratureForm, angle: f64) -> (QuadratureForm, QuadratureForm) {
    let (s, c) = angle.sin_cos();
    (x.combine(c, p, s), p.combine(c, x, -s))
}

/// `x cos φ + p sin φ`.
pub fn quadrature_at_angle(x: &QuadratureForm, p: &QuadratureForm, angle: f64) -> QuadratureForm {
    let (s, c) = angle.sin_cos();
    x.combine(c, p, s)
}

/// The four tracked quadratures `(X_M, P_M, X_L, P_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratures {
    pub x_m: QuadratureForm,
    pub p_m: QuadratureForm,
    pub x_l: QuadratureForm,
    pub p_l: QuadratureForm,
}

impl Quadratures {
    pub fn as_array(&self) -> [&QuadratureForm; 4] {
        [&self.x_m, &self.p_m, &self.x_l, &self.p_l]
    }

    pub fn mechanical_at(&self, angle: f64) -> QuadratureForm {
        quadrature_at_angle(&self.x_m, &self.p_m, angle)
    }

    pub fn optical_at(&self, angle: f64) -> QuadratureForm {
        quadrature_at_angle(&self.x_l, &self.p_l, angle)
    }
}

/// Heisenberg-picture carrier: the live quadratures expressed over the
/// noise registry, plus named snapshots of earlier live forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    registry: Registry,
    initial_mech: ModeId,
    initial_light: ModeId,
    live: Quadratures,
    snapshots: BTreeMap<String, Quadratures>,
}

impl SystemState {
    /// Fresh state with the given mechanical second moments and mean; the
    /// optical pulse starts in vacuum.
    pub fn new(mech_moments: Matrix2<f64>, mech_mean: [f64; 2]) -> Result<Self> {
        if !(mech_mean[0].is_finite() && mech_mean[1].is_finite()) {
            return Err(Error::domain("mechanical mean must be finite"));
        }
        let mut registry = Registry::new();
        let initial_mech = registry.push(NoiseKind::InitialMech, mech_moments)?;
        let initial_light = registry.push(NoiseKind::InitialLight, Matrix2::identity() * 0.5)?;
        let live = Quadratures {
            x_m: QuadratureForm::unit(initial_mech, 0).with_offset(mech_mean[0]),
            p_m: QuadratureForm::unit(initial_mech, 1).with_offset(mech_mean[1]),
            x_l: QuadratureForm::unit(initial_light, 0),
            p_l: QuadratureForm::unit(initial_light, 1),
        };
        let mut snapshots = BTreeMap::new();
        snapshots.insert(INITIAL_SNAPSHOT.to_owned(), live.clone());
        Ok(Self {
            registry,
            initial_mech,
            initial_light,
            live,
            snapshots,
        })
    }

    /// Thermal mechanical state with occupation `nbar` (variance `n̄ + ½`).
    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar.is_finite() && nbar >= 0.0) {
            return Err(Error::domain(format!("thermal occupation must be ≥ 0, got {nbar}")));
        }
        Self::new(Matrix2::identity() * (nbar + 0.5), [0.0, 0.0])
    }

    pub fn ground() -> Self {
        Self::thermal(0.0).expect("ground state is valid")
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn live(&self) -> &Quadratures {
        &self.live
    }

    pub fn initial(&self) -> &Quadratures {
        &self.snapshots[INITIAL_SNAPSHOT]
    }

    pub fn snapshot(&self, name: &str) -> Option<&Quadratures> {
        self.snapshots.get(name)
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (&str, &Quadratures)> {
        self.snapshots.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn initial_mech_mode(&self) -> ModeId {
        self.initial_mech
    }

    pub fn initial_light_mode(&self) -> ModeId {
        self.initial_light
    }

    pub(crate) fn with_live(&self, live: Quadratures) -> Self {
        Self { live, ..self.clone() }
    }

    pub(crate) fn push_mode(&mut self, kind: NoiseKind, moments: Matrix2<f64>) -> Result<ModeId> {
        self.registry.push(kind, moments)
    }

    pub(crate) fn set_live(&mut self, live: Quadratures) {
        self.live = live;
    }

    /// Records the current live forms under `name`, replacing any previous
    /// snapshot of that name.
    pub fn record_snapshot(&self, name: &str) -> Self {
        let mut next = self.clone();
        next.snapshots.insert(name.to_owned(), self.live.clone());
        next
    }

    /// Homodyne meter `X_L cos φ + P_L sin φ` on the live optical mode.
    pub fn homodyne(&self, angle: f64) -> QuadratureForm {
        self.live.optical_at(angle)
    }

    pub fn variance(&self, f: &QuadratureForm) -> Result<f64> {
        variance(f, &self.registry)
    }

    pub fn covariance(&self, f: &QuadratureForm, g: &QuadratureForm) -> Result<f64> {
        covariance(f, g, &self.registry)
    }

    pub fn conditional_variance(&self, a: &QuadratureForm, b: &QuadratureForm) -> Result<f64> {
        conditional_variance(a, b, &self.registry)
    }

    /// Unconditioned 2×2 covariance of the live `(X_M, P_M)`.
    pub fn mechanical_covariance(&self) -> Result<Matrix2<f64>> {
        self.conditioned_mechanical_covariance(&[])
    }

    /// Covariance of the live `(X_M, P_M)` conditioned on the given meters.
    pub fn conditioned_mechanical_covariance(&self, meters: &[&QuadratureForm]) -> Result<Matrix2<f64>> {
        let m = conditional_covariance(&[&self.live.x_m, &self.live.p_m], meters, &self.registry)?;
        Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }

    /// The homogeneous linear map taking the initial `(X_M, P_M, X_L, P_L)`
    /// to the live quadratures (rows = live, columns = initial).
    pub fn linear_map(&self) -> Matrix4<f64> {
        let mut out = Matrix4::zeros();
        for (row, f) in self.live.as_array().into_iter().enumerate() {
            let mech = f.block(self.initial_mech);
            let light = f.block(self.initial_light);
            out[(row, 0)] = mech[0];
            out[(row, 1)] = mech[1];
            out[(row, 2)] = light[0];
            out[(row, 3)] = light[1];
        }
        out
    }
}

/// Determinant of a 2×2 covariance; ≥ ¼ for physical single-mode states.
pub fn det2(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}
