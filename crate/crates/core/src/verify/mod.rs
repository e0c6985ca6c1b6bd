//! Verification: manufactured solutions, convergence rates and the
//! invariant suite.

mod manufactured;
mod suite;

pub use manufactured::{
    convergence_study, convergence_study_on, finite_difference_source_check, heat_case, oseen_case, perturbed_levels,
    potential_case, temporal_study, FieldFn, GradFn, ManufacturedCase, Physics, HEAT_TEMPORAL_DTS, OSEEN_JITTER,
    OSEEN_LEVELS, POTENTIAL_LEVELS,
};
pub use suite::{invariant_suite, CheckResult, Invariant, SuiteOptions, SuiteReport, REGISTRY};

use std::fmt::Write as _;

use crate::fem::{interior_rule, MiniVelocity, TriangleGeometry};
use crate::mesh::Mesh2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    /// Slope between the two finest levels.
    pub headline: f64,
    /// Least-squares slope over all levels.
    pub least_squares: f64,
}

pub fn fit_slopes(h: &[f64], e: &[f64]) -> Slopes {
    assert!(h.len() == e.len() && h.len() >= 2);
    let n = h.len();
    let headline = (e[n - 2] / e[n - 1]).ln() / (h[n - 2] / h[n - 1]).ln();
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Slopes {
        headline,
        least_squares: sxy / sxx,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// Errors on a sequence of refinements. `h` is the mesh size, or the time
/// step for temporal studies.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub name: String,
    pub h: Vec<f64>,
    pub series: Vec<ErrorSeries>,
    /// Per-level quantities that are reported but not fitted.
    pub monitors: Vec<ErrorSeries>,
}

impl RateReport {
    pub fn new(name: impl Into<String>, h: Vec<f64>) -> Self {
        assert!(h.len() >= 3, "a rate study needs at least three levels");
        Self {
            name: name.into(),
            h,
            series: Vec::new(),
            monitors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.h.len());
        self.series.push(ErrorSeries {
            name: name.to_string(),
            values,
        });
    }

    pub fn monitor(&mut self, name: &str, values: Vec<f64>) {
        self.monitors.push(ErrorSeries {
            name: name.to_string(),
            values,
        });
    }

    pub fn errors(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| &s.values[..])
    }

    pub fn slopes(&self, name: &str) -> Option<Slopes> {
        self.errors(name).map(|e| fit_slopes(&self.h, e))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h");
        for e in self.series.iter().chain(&self.monitors) {
            let _ = write!(s, ",{}", e.name);
        }
        s.push('\n');
        for (i, h) in self.h.iter().enumerate() {
            let _ = write!(s, "{h}");
            for e in self.series.iter().chain(&self.monitors) {
                let _ = write!(s, ",{}", e.values[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}:", self.name);
        for e in &self.series {
            let sl = fit_slopes(&self.h, &e.values);
            let _ = write!(s, " {} slope {:.3} (lsq {:.3})", e.name, sl.headline, sl.least_squares);
        }
        s
    }
}

/// L² error and H¹ seminorm error of a P1 field.
pub fn p1_errors(
    mesh: &Mesh2D,
    u: &[f64],
    exact: impl Fn([f64; 2]) -> f64,
    grad: impl Fn([f64; 2]) -> [f64; 2],
) -> (f64, f64) {
    let rule = interior_rule();
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = TriangleGeometry::of(mesh, t);
        let c = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let g = geo.gradient(c);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = geo.point(*b);
            let jw = 2.0 * geo.area * w;
            let e = b[0] * c[0] + b[1] * c[1] + b[2] * c[2] - exact(x);
            let ge = grad(x);
            l2 += jw * e * e;
            h1 += jw * ((g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2));
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// L² and H¹ seminorm errors of a MINI velocity.
pub fn velocity_errors(
    mesh: &Mesh2D,
    v: &MiniVelocity,
    exact: impl Fn([f64; 2]) -> [f64; 2],
    grad: impl Fn([f64; 2]) -> [[f64; 2]; 2],
) -> (f64, f64) {
    let rule = interior_rule();
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = TriangleGeometry::of(mesh, t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = geo.point(*b);
            let jw = 2.0 * geo.area * w;
            let val = v.eval(*tri, t, *b);
            let g = v.gradient(&geo, *tri, t, *b);
            let (ue, ge) = (exact(x), grad(x));
            for i in 0..2 {
                l2 += jw * (val[i] - ue[i]).powi(2);
                for j in 0..2 {
                    h1 += jw * (g[i][j] - ge[i][j]).powi(2);
                }
            }
        }
    }
    (l2.sqrt(), h1.sqrt())
}
