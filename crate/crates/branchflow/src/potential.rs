//! Random Gaussian potential landscapes.
//!
//! The potential is a sum of K isotropic Gaussian wells with means drawn
//! uniformly over a rectangle, scaled by -A. The exponent uses the factor
//! 1/(2*pi*sigma^2); set `conventional_exponent` for the textbook 1/(2*sigma^2)
//! form instead.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Axis-aligned rectangle for mean placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const UNIT: Rect = Rect {
        min: [0.0, 0.0],
        max: [1.0, 1.0],
    };

    /// Constructor form of [`Rect::UNIT`] for serde defaults.
    pub fn unit() -> Rect {
        Rect::UNIT
    }

    pub fn is_degenerate(&self) -> bool {
        self.min[0] >= self.max[0] || self.min[1] >= self.max[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPotential {
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub sigma: f64,
    pub sampling_rect: Rect,
    pub means: Vec<[f64; 2]>,
    #[serde(default)]
    pub conventional_exponent: bool,
}

impl RandomPotential {
    /// Draw K means i.i.d. uniform over the rectangle with a ChaCha8 stream
    /// seeded by `seed`, so the same inputs always reproduce the same means.
    pub fn sample(seed: u64, k: usize, amplitude: f64, sigma: f64, rect: Rect) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        if amplitude < 0.0 {
            return Err(Error::Config(format!(
                "amplitude must be non-negative, got {amplitude}"
            )));
        }
        if rect.is_degenerate() {
            return Err(Error::Config("degenerate sampling rectangle".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = (0..k)
            .map(|_| {
                [
                    rng.random_range(rect.min[0]..rect.max[0]),
                    rng.random_range(rect.min[1]..rect.max[1]),
                ]
            })
            .collect();
        Ok(RandomPotential {
            seed,
            k,
            amplitude,
            sigma,
            sampling_rect: rect,
            means,
            conventional_exponent: false,
        })
    }

    /// The reference setup: K=10, A=0.1, sigma=0.1 over the unit square.
    pub fn reference_default(seed: u64) -> Self {
        RandomPotential::sample(seed, 10, 0.1, 0.1, Rect::UNIT).expect("valid parameters")
    }

    /// Denominator inside the exponent.
    #[inline]
    fn exponent_scale(&self) -> f64 {
        if self.conventional_exponent {
            2.0 * self.sigma * self.sigma
        } else {
            2.0 * std::f64::consts::PI * self.sigma * self.sigma
        }
    }

    #[inline]
    fn prefactor(&self) -> f64 {
        -self.amplitude / (2.0 * std::f64::consts::PI * self.sigma * self.sigma)
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let s = self.exponent_scale();
        let mut total = 0.0;
        for mu in &self.means {
            let dx = x[0] - mu[0];
            let dy = x[1] - mu[1];
            total += (-(dx * dx + dy * dy) / s).exp();
        }
        self.prefactor() * total
    }

    /// Analytic gradient (dV/dx, dV/dy).
    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.exponent_scale();
        let c = self.prefactor();
        let mut gx = 0.0;
        let mut gy = 0.0;
        for mu in &self.means {
            let dx = x[0] - mu[0];
            let dy = x[1] - mu[1];
            let e = (-(dx * dx + dy * dy) / s).exp();
            gx += c * e * (-2.0 * dx / s);
            gy += c * e * (-2.0 * dy / s);
        }
        [gx, gy]
    }

    /// Analytic Hessian entries (Vxx, Vxy, Vyy).
    pub fn hessian(&self, x: [f64; 2]) -> [f64; 3] {
        let s = self.exponent_scale();
        let c = self.prefactor();
        let mut h = [0.0; 3];
        for mu in &self.means {
            let dx = x[0] - mu[0];
            let dy = x[1] - mu[1];
            let e = (-(dx * dx + dy * dy) / s).exp();
            h[0] += c * e * (4.0 * dx * dx / (s * s) - 2.0 / s);
            h[1] += c * e * (4.0 * dx * dy / (s * s));
            h[2] += c * e * (4.0 * dy * dy / (s * s) - 2.0 / s);
        }
        h
    }

    /// Content hash identifying the potential a model was trained against.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("potential serialization");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load a persisted potential; stored means are used verbatim.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let p: RandomPotential = serde_json::from_str(&text)?;
        if p.sigma <= 0.0 {
            return Err(Error::Config("loaded potential has sigma <= 0".into()));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_bumps_is_free_space() {
        let p = RandomPotential::sample(1, 0, 0.1, 0.1, Rect::UNIT).unwrap();
        assert!(p.means.is_empty());
        assert_eq!(p.value([0.3, 0.7]), 0.0);
        assert_eq!(p.grad([0.3, 0.7]), [0.0, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let a = RandomPotential::sample(7, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        let b = RandomPotential::sample(7, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        assert_eq!(a.means, b.means);
        for mu in &a.means {
            assert!((0.0..1.0).contains(&mu[0]));
            assert!((0.0..1.0).contains(&mu[1]));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = RandomPotential::sample(7, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        let b = RandomPotential::sample(8, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        assert_ne!(a.means, b.means);
    }

    #[test]
    fn value_at_mean_is_minus_depth() {
        let mut p = RandomPotential::sample(1, 1, 0.1, 0.1, Rect::UNIT).unwrap();
        p.means = vec![[0.0, 0.0]];
        let depth = -0.1 / (2.0 * std::f64::consts::PI * 0.01);
        assert_relative_eq!(p.value([0.0, 0.0]), depth, epsilon = 1e-12);
        assert_relative_eq!(depth, -1.5915494309189535, epsilon = 1e-12);
    }

    #[test]
    fn far_field_underflows_to_zero() {
        let mut p = RandomPotential::sample(1, 1, 0.1, 0.1, Rect::UNIT).unwrap();
        p.means = vec![[0.0, 0.0]];
        assert_eq!(p.value([10.0, 0.0]), 0.0);
    }

    #[test]
    fn superposition_of_equal_bumps() {
        let mut p = RandomPotential::sample(1, 2, 0.1, 0.1, Rect::UNIT).unwrap();
        p.means = vec![[0.0, 0.0], [1.0, 0.0]];
        let mut single = p.clone();
        single.means = vec![[0.0, 0.0]];
        single.k = 1;
        assert_relative_eq!(
            p.value([0.5, 0.0]),
            2.0 * single.value([0.5, 0.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_vanishes_at_mean() {
        let mut p = RandomPotential::sample(1, 1, 0.1, 0.1, Rect::UNIT).unwrap();
        p.means = vec![[0.4, 0.6]];
        assert_eq!(p.grad([0.4, 0.6]), [0.0, 0.0]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(RandomPotential::sample(1, 1, 0.1, 0.0, Rect::UNIT).is_err());
        assert!(RandomPotential::sample(1, 1, 0.1, -0.1, Rect::UNIT).is_err());
        let degenerate = Rect {
            min: [0.0, 0.0],
            max: [0.0, 1.0],
        };
        assert!(RandomPotential::sample(1, 1, 0.1, 0.1, degenerate).is_err());
    }

    #[test]
    fn hash_changes_with_means() {
        let a = RandomPotential::sample(7, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        let b = RandomPotential::sample(8, 10, 0.1, 0.1, Rect::UNIT).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
