use serde::{Deserialize, Serialize};

use super::cutoff::Cutoff;
use crate::geometry::{dot, norm};

/// Compactly supported profiles on `R^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `a exp(-1 / (1 - |η/s|²))` on `|η| < s`.
    Bump { support: f64, amplitude: f64 },
    /// `a (1 + |η|²)^{-(N-2)/2} χ_s(η)`.
    AubinTalenti { support: f64, amplitude: f64 },
    /// `base(shift + scale η)`.
    Affine {
        base: Box<Profile>,
        shift: Vec<f64>,
        scale: f64,
    },
}

impl Profile {
    pub fn bump(support: f64, amplitude: f64) -> Self {
        Profile::Bump { support, amplitude }
    }

    pub fn aubin_talenti(support: f64, amplitude: f64) -> Self {
        Profile::AubinTalenti { support, amplitude }
    }

    pub fn affine(base: Profile, shift: Vec<f64>, scale: f64) -> Self {
        Profile::Affine {
            base: Box::new(base),
            shift,
            scale,
        }
    }

    /// Library names accepted in configuration files.
    pub fn from_name(name: &str, support: f64, amplitude: f64) -> Option<Self> {
        match name {
            "bump" => Some(Self::bump(support, amplitude)),
            "aubin_talenti" => Some(Self::aubin_talenti(support, amplitude)),
            _ => None,
        }
    }

    /// Ball `(center, radius)` containing the support.
    pub fn support_ball(&self, n: usize) -> (Vec<f64>, f64) {
        match self {
            Profile::Bump { support, .. } | Profile::AubinTalenti { support, .. } => {
                (vec![0.0; n], *support)
            }
            Profile::Affine { base, shift, scale } => {
                let (c, r) = base.support_ball(n);
                let center = c.iter().zip(shift).map(|(a, b)| (a - b) / scale).collect();
                (center, r / scale.abs())
            }
        }
    }

    pub fn value(&self, eta: &[f64]) -> f64 {
        self.value_grad_inner(eta, false).0
    }

    pub fn value_grad(&self, eta: &[f64]) -> (f64, Vec<f64>) {
        self.value_grad_inner(eta, true)
    }

    fn value_grad_inner(&self, eta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n = eta.len();
        match self {
            Profile::Bump { support, amplitude } => {
                let q = dot(eta, eta) / (support * support);
                if q >= 1.0 {
                    return (0.0, vec![0.0; n]);
                }
                let v = amplitude * (-1.0 / (1.0 - q)).exp();
                if v == 0.0 {
                    return (0.0, vec![0.0; n]);
                }
                if !want_grad {
                    return (v, Vec::new());
                }
                let c = -v / ((1.0 - q) * (1.0 - q)) * 2.0 / (support * support);
                (v, eta.iter().map(|e| c * e).collect())
            }
            Profile::AubinTalenti { support, amplitude } => {
                let cut = Cutoff { r: *support };
                let s2 = dot(eta, eta);
                if s2 >= support * support {
                    return (0.0, vec![0.0; n]);
                }
                let ex = -(n as f64 - 2.0) / 2.0;
                let base = amplitude * (1.0 + s2).powf(ex);
                let (c, gc) = cut.value_grad(eta);
                if !want_grad {
                    return (base * c, Vec::new());
                }
                let db = amplitude * ex * (1.0 + s2).powf(ex - 1.0) * 2.0;
                let g = eta
                    .iter()
                    .zip(&gc)
                    .map(|(e, g)| db * e * c + base * g)
                    .collect();
                (base * c, g)
            }
            Profile::Affine { base, shift, scale } => {
                let arg: Vec<f64> = eta.iter().zip(shift).map(|(e, s)| s + scale * e).collect();
                let (v, g) = base.value_grad_inner(&arg, want_grad);
                (v, g.into_iter().map(|x| x * scale).collect())
            }
        }
    }

    /// Smallest radius about the origin containing the support.
    pub fn outer_radius(&self, n: usize) -> f64 {
        let (c, r) = self.support_ball(n);
        norm(&c) + r
    }
}
