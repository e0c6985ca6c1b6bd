//! Temperature-dependent material laws and the body force.

use serde::{Deserialize, Serialize};

/// Default buoyancy coefficient, 1e-3·9.81/303.
pub const BOUSSINESQ_COEFFICIENT: f64 = 1e-3 * 9.81 / 303.0;

/// Breakpoints (°C) of the tissue conductivity law.
pub const SIGMA_BREAKPOINTS: [f64; 3] = [99.0, 100.0, 105.0];

/// Shape of a temperature law. `Tissue` selects the built-in law of each
/// quantity; the others are generic overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    #[default]
    Tissue,
    Constant {
        value: f64,
    },
    /// `intercept + slope·θ`.
    Linear {
        intercept: f64,
        slope: f64,
    },
}

impl Law {
    fn eval_or(&self, theta: f64, tissue: impl FnOnce(f64) -> f64) -> f64 {
        match *self {
            Law::Tissue => tissue(theta),
            Law::Constant { value } => value,
            Law::Linear { intercept, slope } => intercept + slope * theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buoyancy {
    pub enabled: bool,
    pub coefficient: f64,
}

impl Default for Buoyancy {
    fn default() -> Self {
        Self {
            enabled: false,
            coefficient: BOUSSINESQ_COEFFICIENT,
        }
    }
}

/// Declared bounds checked by [`validate_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBounds {
    pub nu1: f64,
    pub nu2: f64,
    /// Electrical conductivity bounds.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Thermal conductivity bounds.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Componentwise bound on the body force.
    pub c_f: f64,
}

impl Default for DeclaredBounds {
    fn default() -> Self {
        Self {
            nu1: 0.0021,
            nu2: 0.0021,
            lambda1: 0.0152,
            lambda2: 1.5208,
            gamma1: 0.43,
            gamma2: 0.62,
            c_f: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialModel {
    pub sigma0: f64,
    pub eta0: f64,
    pub nu_const: f64,
    pub theta_b: f64,
    #[serde(default)]
    pub buoyancy: Buoyancy,
    #[serde(default)]
    pub sigma_law: Law,
    #[serde(default)]
    pub eta_law: Law,
    #[serde(default)]
    pub nu_law: Law,
    #[serde(default)]
    pub bounds: DeclaredBounds,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self {
            sigma0: 0.6,
            eta0: 0.54,
            nu_const: 0.0021,
            theta_b: 37.0,
            buoyancy: Buoyancy::default(),
            sigma_law: Law::Tissue,
            eta_law: Law::Tissue,
            nu_law: Law::Tissue,
            bounds: DeclaredBounds::default(),
        }
    }
}

impl MaterialModel {
    /// Electrical conductivity.
    pub fn sigma(&self, theta: f64) -> f64 {
        self.sigma_law.eval_or(theta, |t| self.tissue_sigma(t))
    }

    fn tissue_sigma(&self, theta: f64) -> f64 {
        let s0 = self.sigma0;
        if theta <= 99.0 {
            s0 * (0.015 * (theta - self.theta_b)).exp()
        } else if theta <= 100.0 {
            2.5345 * s0
        } else if theta <= 105.0 {
            2.5345 * s0 * (1.0 - 0.198 * (theta - 100.0))
        } else {
            0.025345 * s0
        }
    }

    /// Thermal conductivity.
    pub fn eta(&self, theta: f64) -> f64 {
        self.eta_law
            .eval_or(theta, |t| self.eta0 + 0.0012 * (t.min(100.0) - self.theta_b))
    }

    /// Kinematic viscosity.
    pub fn nu(&self, theta: f64) -> f64 {
        self.nu_law.eval_or(theta, |_| self.nu_const)
    }

    pub fn body_force(&self, theta: f64) -> [f64; 2] {
        if self.buoyancy.enabled {
            [0.0, -self.buoyancy.coefficient * (theta - self.theta_b)]
        } else {
            [0.0, 0.0]
        }
    }

    /// `(θ, left limit, right limit)` of σ at each tissue breakpoint.
    pub fn sigma_breakpoint_limits(&self) -> Vec<(f64, f64, f64)> {
        if self.sigma_law != Law::Tissue {
            return Vec::new();
        }
        let s0 = self.sigma0;
        let left99 = s0 * (0.015 * (99.0 - self.theta_b)).exp();
        vec![
            (99.0, left99, 2.5345 * s0),
            (100.0, 2.5345 * s0, 2.5345 * s0),
            (105.0, 2.5345 * s0 * (1.0 - 0.198 * 5.0), 0.025345 * s0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Sigma,
    Eta,
    Nu,
    BodyForce,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundIssue {
    /// Value ≤ 0 or not finite where positivity is required.
    NotPositive { quantity: Quantity, theta: f64, value: f64 },
    OutOfBounds {
        quantity: Quantity,
        theta: f64,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub sigma: Range,
    pub eta: Range,
    pub nu: Range,
    /// Range of the vertical body-force component.
    pub force_y: Range,
    pub violations: Vec<BoundIssue>,
    /// Observations that do not fail the check (jumps, sign of F).
    pub notes: Vec<String>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples the laws every 0.01 °C over [0, 200] °C.
pub fn validate_bounds(model: &MaterialModel) -> BoundsReport {
    validate_bounds_over(model, 0.0, 200.0, 20_000)
}

/// Samples `n + 1` equispaced temperatures in `[lo, hi]`.
pub fn validate_bounds_over(model: &MaterialModel, lo: f64, hi: f64, n: usize) -> BoundsReport {
    let b = model.bounds;
    let mut violations = Vec::new();
    let mut ranges = [Range {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    }; 4];
    let mut first_negative_force = None;
    let limits = [(b.lambda1, b.lambda2), (b.gamma1, b.gamma2), (b.nu1, b.nu2)];
    let kinds = [Quantity::Sigma, Quantity::Eta, Quantity::Nu];
    // Only the first offending sample per quantity and kind is recorded.
    let mut reported = [[false; 2]; 4];

    for k in 0..=n {
        let theta = lo + (hi - lo) * k as f64 / n as f64;
        let vals = [model.sigma(theta), model.eta(theta), model.nu(theta)];
        for q in 0..3 {
            let v = vals[q];
            ranges[q].min = ranges[q].min.min(v);
            ranges[q].max = ranges[q].max.max(v);
            if !(v > 0.0 && v.is_finite()) {
                if !reported[q][0] {
                    violations.push(BoundIssue::NotPositive {
                        quantity: kinds[q],
                        theta,
                        value: v,
                    });
                    reported[q][0] = true;
                }
            } else if (v < limits[q].0 || v > limits[q].1) && !reported[q][1] {
                violations.push(BoundIssue::OutOfBounds {
                    quantity: kinds[q],
                    theta,
                    value: v,
                    lo: limits[q].0,
                    hi: limits[q].1,
                });
                reported[q][1] = true;
            }
        }
        let f = model.body_force(theta);
        ranges[3].min = ranges[3].min.min(f[1]);
        ranges[3].max = ranges[3].max.max(f[1]);
        for fi in f {
            if fi < 0.0 && first_negative_force.is_none() {
                first_negative_force = Some(theta);
            }
            if (fi.abs() > b.c_f || !fi.is_finite()) && !reported[3][1] {
                violations.push(BoundIssue::OutOfBounds {
                    quantity: Quantity::BodyForce,
                    theta,
                    value: fi,
                    lo: -b.c_f,
                    hi: b.c_f,
                });
                reported[3][1] = true;
            }
        }
    }

    let mut notes = Vec::new();
    for (at, left, right) in model.sigma_breakpoint_limits() {
        let jump = (right - left).abs();
        if jump > 1e-12 * left.abs().max(1.0) {
            notes.push(format!(
                "sigma is discontinuous at {at} C: left {left:.9}, right {right:.9}, jump {jump:.3e}"
            ));
        }
    }
    if let Some(theta) = first_negative_force {
        notes.push(format!(
            "body force has a negative component from {theta} C (buoyancy sign)"
        ));
    }

    BoundsReport {
        sigma: ranges[0],
        eta: ranges[1],
        nu: ranges[2],
        force_y: ranges[3],
        violations,
        notes,
    }
}
