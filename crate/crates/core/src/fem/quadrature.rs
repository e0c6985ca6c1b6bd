//! Triangle and edge quadrature.

/// Barycentric points and weights on a triangle. Weights are relative to the
/// reference triangle (area 1/2); multiply by `2 |K|` on a physical cell.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Number of points of the default interior rule.
pub const NQ: usize = 12;

impl QuadratureRule {
    /// Dunavant's 12-point rule, exact for polynomials of degree 6.
    pub fn dunavant6() -> Self {
        let sym3 = [
            (0.116786275726379, 0.501426509658179, 0.249286745170910),
            (0.050844906370207, 0.873821971016996, 0.063089014491502),
        ];
        let (w6, a, b, c) = (
            0.082851075618374,
            0.053145049844817,
            0.310352451033784,
            0.636502499121399,
        );
        let mut points = Vec::with_capacity(NQ);
        let mut weights = Vec::with_capacity(NQ);
        for (w, p, q) in sym3 {
            for bary in [[p, q, q], [q, p, q], [q, q, p]] {
                points.push(bary);
                weights.push(0.5 * w);
            }
        }
        for bary in [[a, b, c], [b, c, a], [c, a, b], [b, a, c], [c, b, a], [a, c, b]] {
            points.push(bary);
            weights.push(0.5 * w6);
        }
        Self {
            points,
            weights,
            degree: 6,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Shared instance of the degree-6 rule.
pub fn interior_rule() -> &'static QuadratureRule {
    static RULE: std::sync::OnceLock<QuadratureRule> = std::sync::OnceLock::new();
    RULE.get_or_init(QuadratureRule::dunavant6)
}

/// Two-point Gauss rule on the unit edge: (parameter, weight), weights sum to 1.
pub const EDGE_GAUSS2: [(f64, f64); 2] = [
    (0.5 - 0.288_675_134_594_812_9, 0.5),
    (0.5 + 0.288_675_134_594_812_9, 0.5),
];
