//! Physical constants and SI conversions.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Bose–Einstein occupation `1/(exp(ħω/k_BT) − 1)`; `omega` in rad/s.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (HBAR * omega / (K_B * temperature)).exp_m1()
}

/// High-temperature approximation `k_BT/ħω`.
pub fn thermal_occupation_high_t(omega: f64, temperature: f64) -> f64 {
    K_B * temperature / (HBAR * omega)
}

/// SI momentum scale `√(ħmω)`: physical momentum = scale × dimensionless `P_M`.
pub fn momentum_scale(mass: f64, omega: f64) -> f64 {
    (HBAR * mass * omega).sqrt()
}
