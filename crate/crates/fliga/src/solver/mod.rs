//! Quasi-static incompressible Lagrangian mechanics on a floating patch:
//! Newtonian or Oldroyd-B constitutive behavior with explicit history
//! transport, mixed velocity-pressure assembly, penalty contact, and the
//! time-stepping loop with periodic floating operations.

mod assembly;
mod contact;
mod mixed;
mod timeloop;

pub use assembly::{
    assemble_system, contact_contributions, incompressibility_residual, physics_residual,
    solve_constrained, SystemMatrices,
};
pub use contact::{ContactParams, PatchBoundary, SlipRamp, WallChain};
pub use mixed::PressureSpace;
pub use timeloop::{
    BoundaryModel, Checkpoint, Simulation, SimulationBuilder, StepConfig, StepReport,
};

use crate::error::{FligaError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstitutiveModel {
    Newtonian,
    OldroydB,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaterialParams {
    pub model: ConstitutiveModel,
    /// Solvent viscosity (Pa s).
    pub solvent_viscosity: f64,
    /// Polymeric viscosity (Pa s); unused for the Newtonian model.
    pub polymer_viscosity: f64,
    /// Relaxation time (s); must be positive for Oldroyd-B.
    pub relaxation_time: f64,
}

impl MaterialParams {
    pub fn newtonian(solvent_viscosity: f64) -> Self {
        Self {
            model: ConstitutiveModel::Newtonian,
            solvent_viscosity,
            polymer_viscosity: 0.0,
            relaxation_time: 0.0,
        }
    }

    pub fn oldroyd_b(solvent_viscosity: f64, polymer_viscosity: f64, relaxation_time: f64) -> Self {
        Self {
            model: ConstitutiveModel::OldroydB,
            solvent_viscosity,
            polymer_viscosity,
            relaxation_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvent_viscosity < 0.0 {
            return Err(FligaError::InvalidInput("solvent viscosity must be >= 0".into()));
        }
        if self.model == ConstitutiveModel::OldroydB
            && (self.relaxation_time <= 0.0 || self.polymer_viscosity < 0.0)
        {
            return Err(FligaError::InvalidInput(
                "Oldroyd-B requires lambda > 0 and eta_p >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-quadrature-point history: symmetric polymeric extra stress
/// `[xx, yy, xy]` and the velocity gradient captured after the last solve.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PointState {
    pub tau: [f64; 3],
    pub velocity_gradient: [[f64; 2]; 2],
}

/// History variables, one record per quadrature point, living at fixed
/// parent coordinates so they never need remapping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaterialState {
    pub rows: Vec<Vec<PointState>>,
}

impl MaterialState {
    pub fn zeros(point_set: &crate::quadrature::QuadraturePointSet) -> Self {
        Self {
            rows: point_set
                .rows()
                .iter()
                .map(|r| vec![PointState::default(); r.points.len()])
                .collect(),
        }
    }

    pub fn point(&self, g: usize, l0: usize) -> &PointState {
        &self.rows[l0][g]
    }
}

/// Explicit forward-Euler update of the polymeric extra stress from the
/// previous step's velocity gradient; the result is symmetrized to keep
/// roundoff from accumulating in the off-diagonal entries.
pub fn oldroyd_b_update(state: &mut MaterialState, params: &MaterialParams, dt: f64) {
    if params.model != ConstitutiveModel::OldroydB {
        return;
    }
    let inv_lambda = 1.0 / params.relaxation_time;
    let eta_p = params.polymer_viscosity;
    for row in &mut state.rows {
        for pt in row {
            let l = pt.velocity_gradient;
            let t = [[pt.tau[0], pt.tau[2]], [pt.tau[2], pt.tau[1]]];
            // L tau + tau L^T
            let mut conv = [[0.0_f64; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        acc += l[a][c] * t[c][b] + t[a][c] * l[b][c];
                    }
                    conv[a][b] = acc;
                }
            }
            let d = [
                [l[0][0], 0.5 * (l[0][1] + l[1][0])],
                [0.5 * (l[0][1] + l[1][0]), l[1][1]],
            ];
            let mut new = [[0.0_f64; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    new[a][b] =
                        t[a][b] + dt * (conv[a][b] - inv_lambda * (t[a][b] - 2.0 * eta_p * d[a][b]));
                }
            }
            pt.tau = [new[0][0], new[1][1], 0.5 * (new[0][1] + new[1][0])];
        }
    }
}

/// Cauchy stress `sigma = -p I + 2 eta_s grad^s v + tau_p` as a 2x2 matrix.
pub fn cauchy_stress(
    pressure: f64,
    velocity_gradient: [[f64; 2]; 2],
    tau: [f64; 3],
    params: &MaterialParams,
) -> [[f64; 2]; 2] {
    let l = velocity_gradient;
    let sym01 = 0.5 * (l[0][1] + l[1][0]);
    let two_eta = 2.0 * params.solvent_viscosity;
    [
        [-pressure + two_eta * l[0][0] + tau[0], two_eta * sym01 + tau[2]],
        [two_eta * sym01 + tau[2], -pressure + two_eta * l[1][1] + tau[1]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear_state(gamma: f64) -> PointState {
        PointState {
            tau: [0.0; 3],
            velocity_gradient: [[0.0, gamma], [0.0, 0.0]],
        }
    }

    #[test]
    fn pure_relaxation() {
        let params = MaterialParams::oldroyd_b(0.5, 1.5, 0.1);
        let mut state = MaterialState {
            rows: vec![vec![PointState {
                tau: [2.0, -1.0, 0.5],
                velocity_gradient: [[0.0; 2]; 2],
            }]],
        };
        let dt = 1e-3;
        oldroyd_b_update(&mut state, &params, dt);
        let f = 1.0 - dt / 0.1;
        let tau = state.point(0, 0).tau;
        assert!((tau[0] - 2.0 * f).abs() < 1e-14);
        assert!((tau[1] + 1.0 * f).abs() < 1e-14);
        assert!((tau[2] - 0.5 * f).abs() < 1e-14);
    }

    #[test]
    fn zero_stays_zero() {
        let params = MaterialParams::oldroyd_b(0.5, 1.5, 0.1);
        let mut state = MaterialState {
            rows: vec![vec![PointState::default()]],
        };
        for _ in 0..100 {
            oldroyd_b_update(&mut state, &params, 1e-3);
        }
        assert_eq!(state.point(0, 0).tau, [0.0; 3]);
    }

    #[test]
    fn steady_simple_shear_oracle() {
        // Independent oracle: setting the stress rate to zero in simple shear
        // gives tau_xy = eta_p * gamma, tau_xx = 2 eta_p lambda gamma^2,
        // tau_yy = 0.
        let (eta_p, lambda, gamma) = (1.5, 0.1, 1.0);
        let params = MaterialParams::oldroyd_b(0.5, eta_p, lambda);
        let mut state = MaterialState {
            rows: vec![vec![shear_state(gamma)]],
        };
        let dt = 1e-4;
        let steps = (1.0 / dt) as usize; // t = 1 s = 10 lambda
        for _ in 0..steps {
            oldroyd_b_update(&mut state, &params, dt);
            state.rows[0][0].velocity_gradient = [[0.0, gamma], [0.0, 0.0]];
        }
        let tau = state.point(0, 0).tau;
        let want_xy = eta_p * gamma;
        let want_xx = 2.0 * eta_p * lambda * gamma * gamma;
        assert!((tau[2] - want_xy).abs() / want_xy < 0.01, "tau_xy {}", tau[2]);
        assert!((tau[0] - want_xx).abs() / want_xx < 0.01, "tau_xx {}", tau[0]);
        assert!(tau[1].abs() < 0.01 * want_xx, "tau_yy {}", tau[1]);
    }

    #[test]
    fn cauchy_stress_examples() {
        let params = MaterialParams::newtonian(50.0);
        let s = cauchy_stress(1.0, [[0.0; 2]; 2], [0.0; 3], &params);
        assert_eq!(s, [[-1.0, 0.0], [0.0, -1.0]]);

        let shear = [[0.0, 0.3], [0.1, 0.0]];
        let s = cauchy_stress(0.0, shear, [0.0; 3], &params);
        assert!((s[0][1] - 50.0 * 0.4).abs() < 1e-14);

        // Term-by-term oracle on random-ish inputs.
        let params = MaterialParams::oldroyd_b(2.0, 1.0, 0.5);
        let l = [[0.2, -0.1], [0.4, -0.2]];
        let tau = [0.7, -0.3, 0.2];
        let s = cauchy_stress(1.3, l, tau, &params);
        assert!((s[0][0] - (-1.3 + 4.0 * 0.2 + 0.7)).abs() < 1e-14);
        assert!((s[1][1] - (-1.3 + 4.0 * (-0.2) - 0.3)).abs() < 1e-14);
        assert!((s[0][1] - (2.0 * (0.3) + 0.2)).abs() < 1e-14);
        assert_eq!(s[0][1], s[1][0]);
    }
}
