use serde::{Deserialize, Serialize};

/// Radial cutoff equal to 1 on `|ξ| <= r/2` and 0 on `|ξ| >= r`, with
/// `χ(s) = f(1 - s/r) / (f(1 - s/r) + f(s/r - 1/2))` and `f(t) = exp(-1/t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub r: f64,
}

fn bump_edge(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn bump_edge_prime(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp() / (t * t)
    } else {
        0.0
    }
}

pub fn smooth_cutoff(r: f64) -> Cutoff {
    Cutoff { r }
}

impl Cutoff {
    /// Value as a function of the radius `s = |ξ|`.
    pub fn radial(&self, s: f64) -> f64 {
        let r = self.r;
        if s <= 0.5 * r {
            return 1.0;
        }
        if s >= r {
            return 0.0;
        }
        let u = s / r;
        let a = bump_edge(1.0 - u);
        let b = bump_edge(u - 0.5);
        a / (a + b)
    }

    /// Derivative in `s`.
    pub fn radial_prime(&self, s: f64) -> f64 {
        let r = self.r;
        if s <= 0.5 * r || s >= r {
            return 0.0;
        }
        let u = s / r;
        let a = bump_edge(1.0 - u);
        let b = bump_edge(u - 0.5);
        let da = -bump_edge_prime(1.0 - u);
        let db = bump_edge_prime(u - 0.5);
        (da * b - a * db) / ((a + b) * (a + b) * r)
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        self.radial(crate::geometry::norm(xi))
    }

    /// `(χ(ξ), ∇χ(ξ))`.
    pub fn value_grad(&self, xi: &[f64]) -> (f64, Vec<f64>) {
        let s = crate::geometry::norm(xi);
        let v = self.radial(s);
        let dp = self.radial_prime(s);
        if dp == 0.0 {
            return (v, vec![0.0; xi.len()]);
        }
        (v, xi.iter().map(|x| dp * x / s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let c = smooth_cutoff(1.0);
        assert_eq!(c.radial(0.0), 1.0);
        assert_eq!(c.radial(0.5), 1.0);
        assert_eq!(c.radial(1.0), 0.0);
        let mid = c.radial(0.75);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let c = smooth_cutoff(2.0);
        for i in 1..200 {
            let s = 1.0 + i as f64 / 200.0;
            let h = 1e-6;
            let fd = (c.radial(s + h) - c.radial(s - h)) / (2.0 * h);
            assert!((fd - c.radial_prime(s)).abs() < 1e-6);
        }
    }
}
