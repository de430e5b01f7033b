//! Impulse response generators and their exact areas.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::special::gamma_p;

/// Two-component gamma mixture survival in minutes:
/// `M(t) = (1/c) [1 − Σ w_k F_k(t / 60)]` with `F_k` gamma CDFs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMixture {
    pub weights: [f64; 2],
    pub shapes: [f64; 2],
    pub scales: [f64; 2],
    pub c: f64,
}

impl GammaMixture {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shapes.iter().chain(&self.scales).all(|v| *v > 0.0 && v.is_finite())
            && self.weights.iter().all(|w| *w >= 0.0)
            && (self.weights[0] + self.weights[1] - 1.0).abs() < 1e-12
            && self.c > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid gamma mixture {self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let v = t / 60.0;
        let f: f64 = (0..2).map(|k| self.weights[k] * gamma_p(self.shapes[k], v / self.scales[k])).sum();
        (1.0 - f) / self.c
    }

    /// `∫_0^∞ M = (60/c) Σ w_k a_k b_k`.
    pub fn vt_infinite(&self) -> f64 {
        60.0 / self.c * (0..2).map(|k| self.weights[k] * self.shapes[k] * self.scales[k]).sum::<f64>()
    }

    /// `∫_0^τ M`, using `∫_0^x F(v) dv = x F(x) − a b P(a+1, x/b)`.
    pub fn vt(&self, tau: f64) -> f64 {
        let x = tau / 60.0;
        let inner: f64 = (0..2)
            .map(|k| {
                let (a, b) = (self.shapes[k], self.scales[k]);
                self.weights[k] * (x * gamma_p(a, x / b) - a * b * gamma_p(a + 1.0, x / b))
            })
            .sum();
        (tau - 60.0 * inner) / self.c
    }
}

/// Concrete impulse response of one voxel.
#[derive(Debug, Clone, PartialEq)]
pub enum IrfKind {
    /// `Σ α_j e^{−β_j t}`; empty for a zero response.
    Exponentials(Vec<(f64, f64)>),
    GammaMixture(GammaMixture),
}

impl IrfKind {
    pub fn zero() -> Self {
        IrfKind::Exponentials(Vec::new())
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            IrfKind::Exponentials(terms) => terms.iter().map(|(a, b)| a * libm::exp(-b * t)).sum(),
            IrfKind::GammaMixture(g) => g.eval(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IrfKind::Exponentials(terms) => {
                if terms.iter().all(|(a, b)| a.is_finite() && *b > 0.0 && b.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("exponential rates must be positive".into()))
                }
            }
            IrfKind::GammaMixture(g) => g.validate(),
        }
    }

    fn scaled(&self, f: f64) -> Self {
        match self {
            IrfKind::Exponentials(terms) => IrfKind::Exponentials(terms.iter().map(|(a, b)| (a * f, *b)).collect()),
            IrfKind::GammaMixture(g) => IrfKind::GammaMixture(GammaMixture { c: g.c / f, ..*g }),
        }
    }
}

/// `∫_0^τ M(t) dt`.
pub fn analytic_vt(irf: &IrfKind, tau: f64) -> f64 {
    match irf {
        IrfKind::Exponentials(terms) => terms.iter().map(|(a, b)| -a * libm::expm1(-b * tau) / b).sum(),
        IrfKind::GammaMixture(g) => g.vt(tau),
    }
}

/// Per-voxel randomization of a region's response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jitter {
    None,
    /// Whole response scaled by `N(1, sd²)`.
    Multiplicative { sd: f64 },
    /// Gamma shapes and scales drawn from normals around the nominal values.
    GammaParameters { shape_sd: [f64; 2], scale_sd: [f64; 2] },
}

/// Region response template plus its randomization.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfSpec {
    pub kind: IrfKind,
    pub jitter: Jitter,
}

impl IrfSpec {
    pub fn fixed(kind: IrfKind) -> Self {
        Self { kind, jitter: Jitter::None }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        match (&self.kind, self.jitter) {
            (IrfKind::Exponentials(_), Jitter::GammaParameters { .. }) => {
                Err(Error::InvalidParameter("gamma parameter jitter needs a gamma-mixture response".into()))
            }
            (_, Jitter::Multiplicative { sd }) if !(sd >= 0.0) => Err(Error::InvalidParameter(format!("jitter sd {sd} is negative"))),
            _ => Ok(()),
        }
    }

    /// Draw one voxel's response.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> IrfKind {
        self.sample_with_factor(rng).0
    }

    /// Draw one voxel's response; the factor is `Some(f)` when the draw is
    /// the template scaled by `f`, so convolved templates can be reused.
    pub fn sample_with_factor<R: Rng>(&self, rng: &mut R) -> (IrfKind, Option<f64>) {
        match (&self.kind, self.jitter) {
            (kind, Jitter::None) => (kind.clone(), Some(1.0)),
            (kind, Jitter::Multiplicative { sd }) => {
                let z: f64 = rng.sample(StandardNormal);
                // keep the response positive under extreme draws
                let f = (1.0 + sd * z).max(1e-3);
                (kind.scaled(f), Some(f))
            }
            (IrfKind::GammaMixture(g), Jitter::GammaParameters { shape_sd, scale_sd }) => {
                let mut draw = |mean: f64, sd: f64| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = mean + sd * z;
                    if v > 0.0 {
                        break v;
                    }
                };
                let shapes = [draw(g.shapes[0], shape_sd[0]), draw(g.shapes[1], shape_sd[1])];
                let scales = [draw(g.scales[0], scale_sd[0]), draw(g.scales[1], scale_sd[1])];
                (IrfKind::GammaMixture(GammaMixture { shapes, scales, ..*g }), None)
            }
            (kind @ IrfKind::Exponentials(_), Jitter::GammaParameters { .. }) => (kind.clone(), Some(1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_mixture_starts_at_inverse_scale() {
        let g = GammaMixture { weights: [0.7, 0.3], shapes: [1.5, 10.0], scales: [2.0, 1.5], c: 200.0 };
        assert!((g.eval(0.0) - 1.0 / 200.0).abs() < 1e-15);
        assert!((g.vt_infinite() - 1.98).abs() < 1e-12);
        assert!((g.vt(1e6) - 1.98).abs() < 1e-9);
    }

    #[test]
    fn exponential_area() {
        let irf = IrfKind::Exponentials(alloc::vec![(0.0060, 0.0030)]);
        assert!((analytic_vt(&irf, 1e7) - 2.0).abs() < 1e-12);
        assert_eq!(analytic_vt(&IrfKind::zero(), 5580.0), 0.0);
    }
}
