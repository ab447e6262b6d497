//! Every numerical threshold the crate uses, in one overridable block.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Newton residual |f(z) - y| accepted by the path corrector.
    pub tracking_residual: f64,
    /// Minimum distance between a tracked path and any critical value.
    pub loop_clearance: f64,
    /// Two fiber points closer than this are treated as collided.
    pub collision: f64,
    /// A value closer than this to a critical value is not regular.
    pub regular_value_margin: f64,
    /// Radius of the image circle used for the boundary permutation.
    pub boundary_radius: f64,
    /// Residual bound for root polishing.
    pub root_polish: f64,
    /// Distance below which critical points are merged into one with multiplicity.
    pub critical_cluster: f64,
    /// Residual bound for idempotent identities in the convolution algebra.
    pub idempotent: f64,
    /// Residual bound for operator identities on the trusted block.
    pub verification: f64,
    /// Residual bound for the homomorphism identity.
    pub homomorphism: f64,
    /// Residuals above this are reported as hard verification failures.
    pub verification_hard: f64,
    /// Grid points closer than this to the branch set are dropped from quadrature.
    pub branch_exclusion: f64,
    /// Largest path step in the image disc.
    pub max_step: f64,
    /// Smallest path step before tracking gives up.
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tracking_residual: 1e-12,
            loop_clearance: 1e-4,
            collision: 1e-9,
            regular_value_margin: 1e-6,
            boundary_radius: 0.999,
            root_polish: 1e-10,
            critical_cluster: 1e-7,
            idempotent: 1e-10,
            verification: 1e-8,
            homomorphism: 1e-7,
            verification_hard: 1e-6,
            branch_exclusion: 1e-4,
            max_step: 0.02,
            min_step: 1e-12,
        }
    }
}

impl Tolerances {
    /// Radius of the small circles used by lassos and detours.
    pub fn lasso_radius(&self) -> f64 {
        10.0 * self.loop_clearance
    }

    pub fn validate(&self) -> Result<(), String> {
        let named = [
            ("tracking_residual", self.tracking_residual),
            ("loop_clearance", self.loop_clearance),
            ("collision", self.collision),
            ("regular_value_margin", self.regular_value_margin),
            ("boundary_radius", self.boundary_radius),
            ("root_polish", self.root_polish),
            ("critical_cluster", self.critical_cluster),
            ("idempotent", self.idempotent),
            ("verification", self.verification),
            ("homomorphism", self.homomorphism),
            ("verification_hard", self.verification_hard),
            ("branch_exclusion", self.branch_exclusion),
            ("max_step", self.max_step),
            ("min_step", self.min_step),
        ];
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("tolerance `{name}` must be positive, got {value}"));
            }
        }
        if self.boundary_radius >= 1.0 {
            return Err(format!(
                "boundary_radius must be < 1, got {}",
                self.boundary_radius
            ));
        }
        Ok(())
    }
}
