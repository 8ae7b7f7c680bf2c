//! Penalty contact against rigid wall chains.
//!
//! Penetration is the signed distance past a piecewise-linear wall, measured
//! at the boundary quadrature points. The contact normal is taken from the
//! wall (not the deforming surface): for a segment `a -> b` it is the left
//! perpendicular `perp(b - a) = (-dy, dx)`, so scenario geometry orients its
//! chains with the material on the negative-perpendicular side.

use crate::error::{FligaError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WallChain {
    pub points: Vec<[f64; 2]>,
}

impl WallChain {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FligaError::InvalidInput("wall chain needs >= 2 points".into()));
        }
        Ok(Self { points })
    }

    /// Penetration depth and wall normal at `x`: `Some((P, n))` when some
    /// segment's projection covers the point; `P > 0` means penetrated, `n`
    /// is the unit normal pointing from the material into the wall.
    pub fn penetration(&self, x: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let mut best: Option<(f64, f64, [f64; 2])> = None; // |P|, P, n
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            if len2 == 0.0 {
                continue;
            }
            let t = ((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2;
            if !(-1e-9..=1.0 + 1e-9).contains(&t) {
                continue;
            }
            let len = len2.sqrt();
            let n = [-d[1] / len, d[0] / len];
            let p = (x[0] - a[0]) * n[0] + (x[1] - a[1]) * n[1];
            if best.map_or(true, |(abs, _, _)| p.abs() < abs) {
                best = Some((p.abs(), p, n));
            }
        }
        best.map(|(_, p, n)| (p, n))
    }
}

/// Ramp profile scaling the slip penalty along one coordinate axis
/// (0 before `from`, full value after `to`).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlipRamp {
    pub axis: usize,
    pub from: f64,
    pub to: f64,
}

impl SlipRamp {
    pub fn factor(&self, x: [f64; 2]) -> f64 {
        ((x[self.axis] - self.from) / (self.to - self.from)).clamp(0.0, 1.0)
    }
}

/// Patch boundaries that can carry contact terms. Only the characteristic
/// element boundary rows at `eta = 0` and `eta = 1` are supported; the
/// shipped scenarios drive the `xi` edges with Dirichlet data instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchBoundary {
    EtaZero,
    EtaOne,
    XiZero,
    XiOne,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContactParams {
    /// Penetration penalty (active for P > 0).
    pub kappa_p: f64,
    /// Penetration-rate penalty (active for dP/dt > 0).
    pub kappa_r: f64,
    /// Slip penalty regularizing no-slip (active for P > 0).
    pub kappa_s: f64,
    pub walls: Vec<WallChain>,
    pub slip_ramp: Option<SlipRamp>,
    pub boundaries: Vec<PatchBoundary>,
    /// Contact search band: candidates farther than this from a wall (on
    /// either side) are ignored, so material passing beside a finite wall
    /// is not attracted to its lateral extension. `None` disables the cap.
    pub search_band: Option<f64>,
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_p < 0.0 || self.kappa_r < 0.0 || self.kappa_s < 0.0 {
            return Err(FligaError::InvalidInput("penalty coefficients must be >= 0".into()));
        }
        for b in &self.boundaries {
            if matches!(b, PatchBoundary::XiZero | PatchBoundary::XiOne) {
                return Err(FligaError::InvalidInput(
                    "contact on the xi edges is not supported; declare eta boundaries".into(),
                ));
            }
        }
        Ok(())
    }

    /// Closest penetration over all wall chains, within the search band.
    pub fn penetration(&self, x: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let mut best: Option<(f64, [f64; 2])> = None;
        for chain in &self.walls {
            if let Some((p, n)) = chain.penetration(x) {
                if self.search_band.is_some_and(|band| p.abs() > band) {
                    continue;
                }
                if best.map_or(true, |(bp, _)| p.abs() < bp.abs()) {
                    best = Some((p, n));
                }
            }
        }
        best
    }
}
