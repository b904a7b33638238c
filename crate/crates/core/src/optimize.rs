//! Homodyne-angle and pulse-allocation search.
//!
//! Both searches are deterministic two-stage schemes: a fixed coarse grid
//! followed by golden-section refinement inside the bracket around the best
//! grid point. No randomness is involved, so results are reproducible bit
//! for bit.
//!
//! Minimizing `V(a | X_L cos φ + P_L sin φ)` over `φ` is equivalent to
//! conditioning on both optical quadratures jointly: by Cauchy–Schwarz in the
//! metric of the optical covariance, `max_φ C(a,b_φ)²/V(b_φ) = cᵀ Σ_L⁻¹ c`. The
//! allocation search uses that closed form as its objective and only runs the
//! explicit angle search once, at the optimum.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::OscillatorParams;
use crate::error::{Error, Result};
use crate::gaussian::{conditional_covariance, QuadratureForm, SystemState};
use crate::protocol::{run_protocol, Protocol};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Result of a 1-D golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMinimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`, stopping when the
/// bracket is narrower than `tol` (absolute) or after `max_evals` evaluations.
pub fn golden_section_minimize(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_evals: usize,
) -> LineMinimum {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    while (b - a).abs() > tol && evals < max_evals {
        // `<=` keeps the left point on ties
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    let converged = (b - a).abs() <= tol;
    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    LineMinimum {
        x,
        value,
        evaluations: evals,
        converged,
    }
}

/// Index of the smallest finite value; the first one wins ties.
fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneSearch {
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for HomodyneSearch {
    fn default() -> Self {
        Self {
            grid_points: 64,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneOptimum {
    /// Homodyne angle in `[0, π)`.
    pub angle: f64,
    pub conditional_variance: f64,
}

fn homodyne_value(state: &SystemState, target: &QuadratureForm, angle: f64) -> Result<f64> {
    match state.conditional_variance(target, &state.homodyne(angle)) {
        Ok(v) => Ok(v),
        Err(Error::DegenerateMeasurement { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Homodyne angle minimizing `V(target | X_L cos φ + P_L sin φ)` over
/// `φ ∈ [0, π)`, using the default 64-point grid.
pub fn optimal_homodyne_angle(state: &SystemState, target: &QuadratureForm) -> Result<HomodyneOptimum> {
    optimal_homodyne_angle_with(state, target, &HomodyneSearch::default())
}

pub fn optimal_homodyne_angle_with(
    state: &SystemState,
    target: &QuadratureForm,
    search: &HomodyneSearch,
) -> Result<HomodyneOptimum> {
    let n = search.grid_points.max(3);
    let step = PI / n as f64;
    let values = (0..n)
        .map(|k| homodyne_value(state, target, k as f64 * step))
        .collect::<Result<Vec<_>>>()?;
    let k = argmin(&values).ok_or(Error::DegenerateMeasurement {
        variance: 0.0,
        threshold: crate::gaussian::DEGENERATE_METER_THRESHOLD,
    })?;
    let grid_best = HomodyneOptimum {
        angle: k as f64 * step,
        conditional_variance: values[k],
    };
    // the meter at φ + π is the negated meter, so the bracket may wrap below 0
    let centre = k as f64 * step;
    let mut failure = None;
    let line = golden_section_minimize(
        |phi| match homodyne_value(state, target, phi) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        centre - step,
        centre + step,
        search.tolerance,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if line.value < grid_best.conditional_variance {
        Ok(HomodyneOptimum {
            angle: line.x.rem_euclid(PI),
            conditional_variance: line.value,
        })
    } else {
        Ok(grid_best)
    }
}

/// `min_φ V(target | X_L cos φ + P_L sin φ)` in closed form, as the variance
/// of `target` conditioned jointly on both live optical quadratures.
pub fn best_homodyne_variance(state: &SystemState, target: &QuadratureForm) -> Result<f64> {
    let live = state.live();
    let m = conditional_covariance(&[target], &[&live.x_l, &live.p_l], state.registry())?;
    Ok(m[(0, 0)].max(0.0))
}

/// Photon budget `λ₁² + λ₂² = λ_total²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    lambda_total: f64,
}

impl Budget {
    pub fn new(lambda_total: f64) -> Result<Self> {
        if !(lambda_total.is_finite() && lambda_total > 0.0) {
            return Err(Error::domain(format!(
                "lambda_total must be positive, got {lambda_total}"
            )));
        }
        Ok(Self { lambda_total })
    }

    pub fn lambda_total(&self) -> f64 {
        self.lambda_total
    }

    /// Splits the budget at angle `alpha`: `(λ cos α, λ sin α)`, normalized so
    /// that `λ₁ ≥ 0`.
    pub fn split(&self, alpha: f64) -> (f64, f64) {
        let a = (alpha + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
        let (s, c) = a.sin_cos();
        (self.lambda_total * c, self.lambda_total * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Conditioning {
    /// The mechanical quadrature before the protocol (tomography).
    APriori,
    /// The mechanical quadrature after the protocol (state preparation).
    APosteriori,
}

/// Mechanical quadrature `X_M^φ` to condition on the optical measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub angle: f64,
    pub conditioning: Conditioning,
}

impl Target {
    pub fn a_priori(angle: f64) -> Self {
        Self {
            angle,
            conditioning: Conditioning::APriori,
        }
    }

    pub fn a_posteriori(angle: f64) -> Self {
        Self {
            angle,
            conditioning: Conditioning::APosteriori,
        }
    }

    pub fn form(&self, state: &SystemState) -> QuadratureForm {
        match self.conditioning {
            Conditioning::APriori => state.initial().mechanical_at(self.angle),
            Conditioning::APosteriori => state.live().mechanical_at(self.angle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Single,
    Double,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Single => "single",
            Scheme::Double => "double",
        }
    }
}

/// Pulse strengths and inter-pulse rotation of a protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult {
    pub scheme: Scheme,
    pub best_value: f64,
    pub homodyne_angle: f64,
    pub allocation: Allocation,
    pub trace: Trace,
}

/// Search settings for [`allocate_pulses`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationSearch {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Log-spaced θ grid size.
    pub theta_grid: usize,
    /// Grid size over the budget split angle.
    pub split_grid: usize,
    /// Pin θ instead of searching it.
    pub fixed_theta: Option<f64>,
}

impl Default for AllocationSearch {
    fn default() -> Self {
        Self {
            theta_min: 1e-5,
            theta_max: FRAC_PI_2,
            theta_grid: 48,
            split_grid: 64,
            fixed_theta: None,
        }
    }
}

impl AllocationSearch {
    pub fn with_fixed_theta(theta: f64) -> Self {
        Self {
            fixed_theta: Some(theta),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(t) = self.fixed_theta {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Optimization(format!("fixed theta must be positive, got {t}")));
            }
            return Ok(());
        }
        if !(self.theta_min > 0.0 && self.theta_max >= self.theta_min && self.theta_max.is_finite()) {
            return Err(Error::Optimization(format!(
                "empty theta window ({}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if self.theta_grid < 2 || self.split_grid < 3 {
            return Err(Error::Optimization("search grids are too small".into()));
        }
        Ok(())
    }
}

/// Protocol for a scheme at a given allocation.
pub fn scheme_protocol(scheme: Scheme, alloc: &Allocation, eta: f64) -> Protocol {
    match scheme {
        Scheme::Double => Protocol::double_pulse(alloc.lambda1, alloc.lambda2, alloc.theta, eta),
        Scheme::Single if alloc.lambda1 == 0.0 => Protocol::wait_then_measure(alloc.lambda2, alloc.theta, eta),
        Scheme::Single => Protocol::measure_then_wait(alloc.lambda1, alloc.theta, eta),
    }
}

/// Runs `scheme` from a thermal initial state at the bath occupation.
pub fn run_scheme(scheme: Scheme, alloc: &Allocation, eta: f64, osc: &OscillatorParams) -> Result<SystemState> {
    let initial = SystemState::thermal(osc.nbar())?;
    run_protocol(&initial, &scheme_protocol(scheme, alloc, eta).steps, osc)
}

struct Objective<'a> {
    budget: Budget,
    target: Target,
    eta: f64,
    osc: &'a OscillatorParams,
    initial: SystemState,
    evaluations: usize,
    failure: Option<Error>,
}

impl Objective<'_> {
    fn eval(&mut self, alpha: f64, theta: f64) -> f64 {
        self.evaluations += 1;
        let (lambda1, lambda2) = self.budget.split(alpha);
        let protocol = Protocol::double_pulse(lambda1, lambda2, theta, self.eta);
        let result = run_protocol(&self.initial, &protocol.steps, self.osc)
            .and_then(|s| best_homodyne_variance(&s, &self.target.form(&s)));
        match result {
            Ok(v) => v,
            Err(Error::DegenerateMeasurement { .. }) => f64::INFINITY,
            Err(e) => {
                self.failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    }

    /// Best split at fixed θ: `(alpha, value, converged)`.
    fn profile(&mut self, theta: f64, split_grid: usize) -> (f64, f64, bool) {
        let step = PI / split_grid as f64;
        let alphas: Vec<f64> = (0..split_grid).map(|j| -FRAC_PI_2 + j as f64 * step).collect();
        let values: Vec<f64> = alphas.iter().map(|&a| self.eval(a, theta)).collect();
        let Some(j) = argmin(&values) else {
            return (0.0, f64::INFINITY, false);
        };
        // the split is π-periodic (global sign of both pulses), so wrap freely
        let line = golden_section_minimize(|a| self.eval(a, theta), alphas[j] - step, alphas[j] + step, 1e-13, 200);
        if line.value < values[j] {
            (line.x, line.value, line.converged)
        } else {
            (alphas[j], values[j], line.converged)
        }
    }
}

/// Chooses `(λ₁, λ₂, θ)` on the budget circle minimizing the conditional
/// variance of `target` for the double-pulse protocol `B_η U₂ B_η M_θ U₁`,
/// starting from a thermal state at the bath occupation.
pub fn allocate_pulses(
    budget: Budget,
    target: Target,
    eta: f64,
    osc: &OscillatorParams,
    search: &AllocationSearch,
) -> Result<OptimizationResult> {
    search.validate()?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("transmission eta must lie in [0, 1], got {eta}")));
    }
    let mut obj = Objective {
        budget,
        target,
        eta,
        osc,
        initial: SystemState::thermal(osc.nbar())?,
        evaluations: 0,
        failure: None,
    };

    let (theta, alpha, converged) = match search.fixed_theta {
        Some(theta) => {
            let (alpha, _, conv) = obj.profile(theta, search.split_grid);
            (theta, alpha, conv)
        }
        None => {
            let (lo, hi) = (search.theta_min.ln(), search.theta_max.ln());
            let n = search.theta_grid;
            let log_thetas: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
            let profiles: Vec<(f64, f64, bool)> = log_thetas
                .iter()
                .map(|lt| obj.profile(lt.exp(), search.split_grid))
                .collect();
            let values: Vec<f64> = profiles.iter().map(|p| p.1).collect();
            let i = argmin(&values).ok_or_else(|| {
                obj.failure
                    .take()
                    .unwrap_or_else(|| Error::Optimization("no feasible allocation in the search window".into()))
            })?;
            let a = log_thetas[i.saturating_sub(1)];
            let b = log_thetas[(i + 1).min(n - 1)];
            let split_grid = search.split_grid;
            let line = golden_section_minimize(|lt| obj.profile(lt.exp(), split_grid).1, a, b, 1e-10, 200);
            if line.value < values[i] {
                let theta = line.x.exp();
                let (alpha, _, conv) = obj.profile(theta, split_grid);
                (theta, alpha, conv && line.converged)
            } else {
                (log_thetas[i].exp(), profiles[i].0, profiles[i].2 && line.converged)
            }
        }
    };
    if let Some(e) = obj.failure {
        return Err(e);
    }

    let (lambda1, lambda2) = budget.split(alpha);
    let allocation = Allocation {
        lambda1,
        lambda2,
        theta,
    };
    let state = run_scheme(Scheme::Double, &allocation, eta, osc)?;
    let homodyne = optimal_homodyne_angle(&state, &target.form(&state))?;
    Ok(OptimizationResult {
        scheme: Scheme::Double,
        best_value: homodyne.conditional_variance,
        homodyne_angle: homodyne.angle,
        allocation,
        trace: Trace {
            evaluations: obj.evaluations,
            converged,
        },
    })
}

/// The single-pulse reference scheme for `target` with the whole budget in
/// one pulse. A priori targets wait `φ` and then measure; a posteriori
/// targets measure position and then wait until it has rotated into `X_M^φ`.
pub fn single_pulse(budget: Budget, target: Target, eta: f64, osc: &OscillatorParams) -> Result<OptimizationResult> {
    let lambda = budget.lambda_total();
    let allocation = match target.conditioning {
        Conditioning::APriori => Allocation {
            lambda1: 0.0,
            lambda2: lambda,
            theta: target.angle.rem_euclid(PI),
        },
        Conditioning::APosteriori => Allocation {
            lambda1: lambda,
            lambda2: 0.0,
            theta: (PI - target.angle).rem_euclid(PI),
        },
    };
    let state = run_scheme(Scheme::Single, &allocation, eta, osc)?;
    let homodyne = optimal_homodyne_angle(&state, &target.form(&state))?;
    Ok(OptimizationResult {
        scheme: Scheme::Single,
        best_value: homodyne.conditional_variance,
        homodyne_angle: homodyne.angle,
        allocation,
        trace: Trace {
            evaluations: 1,
            converged: true,
        },
    })
}

/// Dispatches to [`single_pulse`] or [`allocate_pulses`].
pub fn evaluate_scheme(
    scheme: Scheme,
    budget: Budget,
    target: Target,
    eta: f64,
    osc: &OscillatorParams,
    search: &AllocationSearch,
) -> Result<OptimizationResult> {
    match scheme {
        Scheme::Single => single_pulse(budget, target, eta, osc),
        Scheme::Double => allocate_pulses(budget, target, eta, osc, search),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::apply_pulse;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let m = golden_section_minimize(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10, 500);
        assert!(m.converged);
        // a flat minimum pins x only to about √ε
        assert_relative_eq!(m.x, 0.3, epsilon = 1e-7);
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn argmin_prefers_first_on_ties() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::INFINITY, f64::NAN]), None);
    }

    #[test]
    fn phase_quadrature_is_optimal_without_kerr() {
        let s = apply_pulse(&SystemState::thermal(3.0).unwrap(), 2.0);
        let target = s.initial().x_m.clone();
        let opt = optimal_homodyne_angle(&s, &target).unwrap();
        assert_relative_eq!(opt.angle, FRAC_PI_2, epsilon = 1e-9);
        // V(X|P_L) with P_L = P_L0 − 2X: 3.5 − (2·3.5)²/(0.5 + 4·3.5)
        assert_relative_eq!(opt.conditional_variance, 3.5 - 49.0 / 14.5, max_relative = 1e-12);
    }

    #[test]
    fn angle_search_matches_joint_conditioning() {
        let osc = OscillatorParams::new(1.0, 1e-3, 50.0).unwrap();
        let alloc = Allocation {
            lambda1: 1.0,
            lambda2: 1.0,
            theta: FRAC_PI_2,
        };
        for eta in [1.0, 0.7] {
            let s = run_scheme(Scheme::Double, &alloc, eta, &osc).unwrap();
            for target in [Target::a_priori(0.4), Target::a_posteriori(FRAC_PI_2)] {
                let f = target.form(&s);
                let opt = optimal_homodyne_angle(&s, &f).unwrap();
                let exact = best_homodyne_variance(&s, &f).unwrap();
                assert_relative_eq!(opt.conditional_variance, exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn budget_split_stays_on_circle() {
        let b = Budget::new(3.0).unwrap();
        for alpha in [-4.0, -FRAC_PI_2, -0.3, 0.0, 1.2, FRAC_PI_2, 5.0] {
            let (l1, l2) = b.split(alpha);
            assert!(l1 >= 0.0);
            assert!((l1 * l1 + l2 * l2 - 9.0).abs() <= 1e-12 * 9.0);
        }
        assert!(Budget::new(0.0).is_err());
        assert!(Budget::new(f64::NAN).is_err());
    }

    #[test]
    fn bad_search_windows_are_rejected() {
        let osc = OscillatorParams::new(1.0, 1e-3, 1.0).unwrap();
        let bad = AllocationSearch {
            theta_min: 1.0,
            theta_max: 0.5,
            ..AllocationSearch::default()
        };
        let r = allocate_pulses(Budget::new(1.0).unwrap(), Target::a_priori(0.0), 1.0, &osc, &bad);
        assert!(matches!(r, Err(Error::Optimization(_))));
    }

    #[test]
    fn single_pulse_position_measurement_formula() {
        let osc = OscillatorParams::new(TAU, 1e-3, 0.0).unwrap();
        let r = single_pulse(Budget::new(2.0).unwrap(), Target::a_priori(0.0), 1.0, &osc).unwrap();
        assert_relative_eq!(r.best_value, 0.5 / (1.0 + 4.0), max_relative = 1e-12);
    }
}
