//! Global assembly of the mixed velocity-pressure system and the penalty
//! contact terms.
//!
//! Unknown ordering: velocity controls first, interleaved per running index
//! (`2m`, `2m + 1`), then the pressure controls. Without contact the system
//! is linear: `K U = b` with `b` collecting the known polymeric stress
//! contribution (external body forces are zero throughout). The global
//! matrix is symmetric: the viscous block pairs symmetric gradients, the
//! gradient/divergence couplings are transposes (the divergence rows carry
//! the -1 factor), and the pressure-pressure block vanishes.

use crate::error::{FligaError, Result};
use crate::linalg::{LinearSolver, TripletMatrix};
use crate::patch::FloatingPatch;
use crate::quadrature::{PointEval, QuadraturePointSet};
use crate::solver::{cauchy_stress, ContactParams, MaterialParams, MaterialState, PatchBoundary, PressureSpace};

pub struct SystemMatrices {
    pub k: TripletMatrix,
    pub b: Vec<f64>,
    pub n_velocity: usize,
    pub n_pressure: usize,
}

/// Gather the global velocity tuple list at a point: `(global m, value,
/// physical gradient)`. Only supported-row functions carry values.
fn velocity_tuples(
    patch: &FloatingPatch,
    qrow: &crate::quadrature::QuadRow,
    ev: &PointEval,
    offsets: &[usize],
    out: &mut Vec<(usize, f64, [f64; 2])>,
) {
    out.clear();
    let sb = patch.row_basis(qrow.s);
    for (o, a) in ev.sup.indices().enumerate() {
        out.push((offsets[qrow.s] + sb.dof_of(a), ev.sup.value[o], ev.grad_s[o]));
    }
    let nb = patch.row_basis(qrow.n);
    for (o, a) in ev.nbr.indices().enumerate() {
        out.push((offsets[qrow.n] + nb.dof_of(a), 0.0, ev.grad_n[o]));
    }
}

/// Assemble the stiffness matrix and right-hand side.
pub fn assemble_system(
    patch: &FloatingPatch,
    pressure: Option<&PressureSpace>,
    point_set: &QuadraturePointSet,
    evals: &[Vec<PointEval>],
    states: &MaterialState,
    params: &MaterialParams,
) -> Result<SystemMatrices> {
    let nv = 2 * patch.total_dofs();
    let nq = pressure.map_or(0, |p| p.num_dofs());
    let ntot = nv + nq;
    let offsets = patch.row_offsets();
    let eta_s = params.solvent_viscosity;

    let mut k = TripletMatrix::new(ntot);
    k.entries.reserve(point_set.num_points() * 180);
    let mut b = vec![0.0; ntot];
    let mut tuples: Vec<(usize, f64, [f64; 2])> = Vec::with_capacity(16);

    for (l0, qrow) in point_set.rows().iter().enumerate() {
        for (g, pt) in qrow.points.iter().enumerate() {
            let ev = &evals[l0][g];
            let w = ev.w_phys;
            velocity_tuples(patch, qrow, ev, &offsets, &mut tuples);

            // Viscous block.
            for &(m1, _, g1) in &tuples {
                for &(m2, _, g2) in &tuples {
                    let dot = g1[0] * g2[0] + g1[1] * g2[1];
                    // K[(m1,a)][(m2,c)] = eta_s (delta_ac dot + g2[a] g1[c]) W
                    k.push(2 * m1, 2 * m2, eta_s * (dot + g2[0] * g1[0]) * w);
                    k.push(2 * m1, 2 * m2 + 1, eta_s * (g2[0] * g1[1]) * w);
                    k.push(2 * m1 + 1, 2 * m2, eta_s * (g2[1] * g1[0]) * w);
                    k.push(2 * m1 + 1, 2 * m2 + 1, eta_s * (dot + g2[1] * g1[1]) * w);
                }
            }

            // Known polymeric stress enters the right-hand side.
            let tau = states.rows[l0][g].tau;
            if tau != [0.0; 3] {
                let t = [[tau[0], tau[2]], [tau[2], tau[1]]];
                for &(m, _, grad) in &tuples {
                    for a in 0..2 {
                        b[2 * m + a] -= (t[a][0] * grad[0] + t[a][1] * grad[1]) * w;
                    }
                }
            }

            // Pressure coupling (and its transpose, giving symmetry).
            if let Some(ps) = pressure {
                for (z, az) in ps.eval_at_point(qrow, pt)? {
                    let col = nv + z;
                    for &(m, _, grad) in &tuples {
                        for a in 0..2 {
                            let e = -grad[a] * az * w;
                            k.push(2 * m + a, col, e);
                            k.push(col, 2 * m + a, e);
                        }
                    }
                }
            }
        }
    }
    Ok(SystemMatrices {
        k,
        b,
        n_velocity: nv,
        n_pressure: nq,
    })
}

/// Momentum and divergence residuals evaluated directly from the Cauchy
/// stress at the current unknowns; independent of the matrix assembly path.
pub fn physics_residual(
    patch: &FloatingPatch,
    pressure: Option<&PressureSpace>,
    point_set: &QuadraturePointSet,
    evals: &[Vec<PointEval>],
    states: &MaterialState,
    params: &MaterialParams,
    u: &[f64],
) -> Result<Vec<f64>> {
    let nv = 2 * patch.total_dofs();
    let ntot = nv + pressure.map_or(0, |p| p.num_dofs());
    assert_eq!(u.len(), ntot);
    let offsets = patch.row_offsets();
    let mut r = vec![0.0; ntot];
    let mut tuples: Vec<(usize, f64, [f64; 2])> = Vec::with_capacity(16);

    for (l0, qrow) in point_set.rows().iter().enumerate() {
        for (g, pt) in qrow.points.iter().enumerate() {
            let ev = &evals[l0][g];
            let w = ev.w_phys;
            velocity_tuples(patch, qrow, ev, &offsets, &mut tuples);

            let mut grad_v = [[0.0_f64; 2]; 2];
            for &(m, _, grad) in &tuples {
                for a in 0..2 {
                    for c in 0..2 {
                        grad_v[a][c] += u[2 * m + a] * grad[c];
                    }
                }
            }
            let mut p_h = 0.0;
            let mut pressure_tuples = Vec::new();
            if let Some(ps) = pressure {
                pressure_tuples = ps.eval_at_point(qrow, pt)?;
                for &(z, az) in &pressure_tuples {
                    p_h += u[nv + z] * az;
                }
            }
            let sigma = cauchy_stress(p_h, grad_v, states.rows[l0][g].tau, params);
            for &(m, _, grad) in &tuples {
                for a in 0..2 {
                    r[2 * m + a] += (sigma[a][0] * grad[0] + sigma[a][1] * grad[1]) * w;
                }
            }
            let div = grad_v[0][0] + grad_v[1][1];
            for &(z, az) in &pressure_tuples {
                r[nv + z] -= div * az * w;
            }
        }
    }
    Ok(r)
}

/// Divergence residuals `Q_z` at the solved state.
pub fn incompressibility_residual(
    patch: &FloatingPatch,
    pressure: &PressureSpace,
    point_set: &QuadraturePointSet,
    evals: &[Vec<PointEval>],
    u: &[f64],
) -> Result<Vec<f64>> {
    let nv = 2 * patch.total_dofs();
    let offsets = patch.row_offsets();
    let mut q = vec![0.0; pressure.num_dofs()];
    let mut tuples: Vec<(usize, f64, [f64; 2])> = Vec::with_capacity(16);
    for (l0, qrow) in point_set.rows().iter().enumerate() {
        for (g, pt) in qrow.points.iter().enumerate() {
            let ev = &evals[l0][g];
            velocity_tuples(patch, qrow, ev, &offsets, &mut tuples);
            let mut div = 0.0;
            for &(m, _, grad) in &tuples {
                div += u[2 * m] * grad[0] + u[2 * m + 1] * grad[1];
            }
            for (z, az) in pressure.eval_at_point(qrow, pt)? {
                q[z] -= div * az * ev.w_phys;
            }
        }
    }
    Ok(q)
}

/// Contact force (added to the external vector) and stiffness contribution,
/// from the boundary rows at `eta = 0` / `eta = 1`. Boundary quadrature uses
/// the row's parent Gauss-Legendre points with arc-length weights; the
/// penetration-only stiffness term carries no geometry derivative, matching
/// a Newton loop with frozen geometry.
pub fn contact_contributions(
    patch: &FloatingPatch,
    point_set: &QuadraturePointSet,
    contact: &ContactParams,
    u: &[f64],
) -> Result<(Vec<f64>, TripletMatrix)> {
    let offsets = patch.row_offsets();
    let mut force = vec![0.0; u.len()];
    let mut k = TripletMatrix::new(u.len());

    for boundary in &contact.boundaries {
        let l0 = match boundary {
            PatchBoundary::EtaZero => 0,
            PatchBoundary::EtaOne => point_set.rows().len() - 1,
            _ => {
                return Err(FligaError::InvalidInput(
                    "contact on the xi edges is not supported".into(),
                ))
            }
        };
        let qrow = &point_set.rows()[l0];
        let basis = patch.row_basis(qrow.s);
        for pt in &qrow.points {
            let Some((pen, n)) = contact.penetration(pt.phys) else {
                continue;
            };
            let ev = basis.eval(pt.xt, 1)?;
            // Arc-length weight of the boundary curve at this point.
            let mut speed = [0.0_f64; 2];
            for (o, a) in ev.indices().enumerate() {
                let c = patch.control(qrow.s, basis.dof_of(a));
                speed[0] += c[0] * ev.d1[o];
                speed[1] += c[1] * ev.d1[o];
            }
            let arc = (speed[0] * speed[0] + speed[1] * speed[1]).sqrt() * pt.parent_weight;

            // Velocity at the point (boundary row functions only).
            let mut v = [0.0_f64; 2];
            for (o, a) in ev.indices().enumerate() {
                let m = offsets[qrow.s] + basis.dof_of(a);
                v[0] += u[2 * m] * ev.value[o];
                v[1] += u[2 * m + 1] * ev.value[o];
            }
            let pdot = v[0] * n[0] + v[1] * n[1];

            let kp = if pen > 0.0 { contact.kappa_p } else { 0.0 };
            let kr = if pdot > 0.0 { contact.kappa_r } else { 0.0 };
            let ramp = contact.slip_ramp.map_or(1.0, |r| r.factor(pt.phys));
            let ks = if pen > 0.0 { contact.kappa_s * ramp } else { 0.0 };
            if kp == 0.0 && kr == 0.0 && ks == 0.0 {
                continue;
            }

            let traction = [
                kp * pen * n[0] + kr * pdot * n[0] + ks * v[0],
                kp * pen * n[1] + kr * pdot * n[1] + ks * v[1],
            ];
            for (o, a) in ev.indices().enumerate() {
                let m = offsets[qrow.s] + basis.dof_of(a);
                force[2 * m] -= traction[0] * ev.value[o] * arc;
                force[2 * m + 1] -= traction[1] * ev.value[o] * arc;
            }
            if kr != 0.0 || ks != 0.0 {
                for (o1, a1) in ev.indices().enumerate() {
                    let m1 = offsets[qrow.s] + basis.dof_of(a1);
                    for (o2, a2) in ev.indices().enumerate() {
                        let m2 = offsets[qrow.s] + basis.dof_of(a2);
                        let bb = ev.value[o1] * ev.value[o2] * arc;
                        for a in 0..2 {
                            for c in 0..2 {
                                let e = (kr * n[a] * n[c] + if a == c { ks } else { 0.0 }) * bb;
                                if e != 0.0 {
                                    k.push(2 * m1 + a, 2 * m2 + c, e);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((force, k))
}

/// Solve `K U = b` with Dirichlet values imposed by row/column elimination;
/// constrained entries of the returned vector equal the imposed values
/// bit-exactly.
pub fn solve_constrained(
    k: &TripletMatrix,
    b: &[f64],
    bc: &[(usize, f64)],
    solver: &mut LinearSolver,
    symmetric: bool,
) -> Result<Vec<f64>> {
    let n = k.n;
    let mut fixed = vec![false; n];
    let mut value = vec![0.0; n];
    for &(dof, v) in bc {
        fixed[dof] = true;
        value[dof] = v;
    }
    let mut free_id = vec![usize::MAX; n];
    let mut free_count = 0;
    for i in 0..n {
        if !fixed[i] {
            free_id[i] = free_count;
            free_count += 1;
        }
    }
    let mut kf = TripletMatrix::new(free_count);
    kf.entries.reserve(k.entries.len());
    let mut bf = vec![0.0; free_count];
    for i in 0..n {
        if !fixed[i] {
            bf[free_id[i]] = b[i];
        }
    }
    for &(r, c, v) in &k.entries {
        match (fixed[r], fixed[c]) {
            (false, false) => kf.push(free_id[r], free_id[c], v),
            (false, true) => bf[free_id[r]] -= v * value[c],
            _ => {}
        }
    }
    let xf = solver.solve(&kf, &bf, symmetric)?;
    let mut x = value;
    for i in 0..n {
        if !fixed[i] {
            x[i] = xf[free_id[i]];
        }
    }
    Ok(x)
}
