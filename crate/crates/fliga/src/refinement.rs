//! Adaptive local h-refinement along the characteristic direction.
//!
//! Spans whose physical image grows beyond an insertion threshold are split
//! at their parent-domain center; spans compressed below a removal threshold
//! give up a bounding inner knot through a geometry-change-minimizing knot
//! removal. Both operations transform regulation points, control points and
//! every field array alike, and never touch the pre-sized quadrature knot
//! vectors, so quadrature history stays in place.

use crate::error::{FligaError, Result};
use crate::patch::FloatingPatch;
use crate::quadrature::QuadraturePointSet;
use crate::spline::{KnotVector, RowBasis};

#[derive(Clone, Debug)]
pub struct RefinementPolicy {
    /// Physical span length above which a span is split (meters).
    pub insert_threshold: f64,
    /// Physical span length below which a bounding knot is removed.
    pub remove_threshold: f64,
}

impl RefinementPolicy {
    pub fn new(insert_threshold: f64, remove_threshold: f64) -> Result<Self> {
        if !(remove_threshold > 0.0 && insert_threshold > 0.0) {
            return Err(FligaError::InvalidInput("thresholds must be positive".into()));
        }
        if remove_threshold >= insert_threshold / 2.0 {
            return Err(FligaError::InvalidInput(format!(
                "anti-thrash margin violated: T_rem {remove_threshold} must be < T_ins/2 = {}",
                insert_threshold / 2.0
            )));
        }
        Ok(Self {
            insert_threshold,
            remove_threshold,
        })
    }

    /// Thresholds derived from the mean initial physical span length.
    pub fn from_mean_span(mean: f64) -> Self {
        Self {
            insert_threshold: 1.5 * mean,
            remove_threshold: 0.5 * mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementAction {
    Insert,
    Remove,
}

#[derive(Clone, Debug)]
pub struct RefinementEvent {
    pub row: usize,
    pub action: RefinementAction,
    pub knot: f64,
}

/// Physical length of the curve segment of parent span `k` of row `j`,
/// integrated with the supported-row quadrature points falling in the span.
pub fn segment_length(
    k: usize,
    j: usize,
    patch: &FloatingPatch,
    point_set: &QuadraturePointSet,
) -> Result<f64> {
    let parent_breaks = patch.row_basis(j).breaks();
    if k + 1 >= parent_breaks.len() {
        return Err(FligaError::InvalidInput(format!("span {k} out of range for row {j}")));
    }
    let (lo, hi) = (parent_breaks[k], parent_breaks[k + 1]);
    let row = point_set
        .rows()
        .iter()
        .find(|r| r.s == j)
        .ok_or_else(|| FligaError::InvalidInput(format!("no quadrature row supports row {j}")))?;
    let basis = patch.row_basis(j);
    let mut length = 0.0;
    for pt in &row.points {
        if pt.xt < lo || pt.xt >= hi {
            continue;
        }
        let ev = basis.eval(pt.xt, 1)?;
        let mut speed = [0.0_f64; 2];
        for (o, a) in ev.indices().enumerate() {
            let c = patch.control(j, basis.dof_of(a));
            speed[0] += c[0] * ev.d1[o];
            speed[1] += c[1] * ev.d1[o];
        }
        length += pt.parent_weight * (speed[0] * speed[0] + speed[1] * speed[1]).sqrt();
    }
    Ok(length)
}

fn open_kv(patch: &FloatingPatch, j: usize) -> Result<&KnotVector> {
    match patch.row_basis(j) {
        RowBasis::Open(kv) => Ok(kv),
        RowBasis::Periodic(_) => Err(FligaError::InvalidInput(format!(
            "row {j} is periodic; refinement supports open rows only"
        ))),
    }
}

/// All per-point data of a row flattened into stride-tagged arrays so one
/// transform covers regulation points, control points and field variables.
struct RowData {
    strides: Vec<usize>,
    arrays: Vec<Vec<f64>>,
}

fn collect_row(patch: &FloatingPatch, j: usize) -> (RowData, Vec<String>) {
    let mut strides = vec![1, 2];
    let mut arrays = vec![
        patch.h_row(j).to_vec(),
        patch
            .controls_row(j)
            .iter()
            .flat_map(|c| c.iter().copied())
            .collect(),
    ];
    let names: Vec<String> = patch.field_names().map(|s| s.to_string()).collect();
    for name in &names {
        let f = patch.field(name).unwrap();
        strides.push(f.components);
        arrays.push(f.rows[j].clone());
    }
    (RowData { strides, arrays }, names)
}

fn store_row(
    patch: &mut FloatingPatch,
    j: usize,
    kv: KnotVector,
    data: RowData,
    names: &[String],
) {
    let h = data.arrays[0].clone();
    let controls: Vec<[f64; 2]> = data.arrays[1].chunks(2).map(|c| [c[0], c[1]]).collect();
    let fields: Vec<(String, Vec<f64>)> = names
        .iter()
        .cloned()
        .zip(data.arrays[2..].iter().cloned())
        .collect();
    patch.replace_row(j, RowBasis::Open(kv), h, controls, fields);
}

/// Insert a parent knot into row `j`; geometry, floating map and every field
/// representation are preserved exactly.
pub fn insert_knot(patch: &mut FloatingPatch, j: usize, x_plus: f64) -> Result<()> {
    let kv = open_kv(patch, j)?.clone();
    let refined = kv.with_inserted(x_plus)?;
    let p = kv.degree();
    let knots = kv.knots();
    let k0 = kv.find_span(x_plus)?;
    let (data, names) = collect_row(patch, j);

    let mut out_arrays = Vec::with_capacity(data.arrays.len());
    for (arr, &stride) in data.arrays.iter().zip(&data.strides) {
        let count = arr.len() / stride;
        let mut out = Vec::with_capacity((count + 1) * stride);
        for f in 0..=count {
            if f + p <= k0 {
                out.extend_from_slice(&arr[f * stride..(f + 1) * stride]);
            } else if f <= k0 {
                let a = (x_plus - knots[f]) / (knots[f + p] - knots[f]);
                for c in 0..stride {
                    out.push((1.0 - a) * arr[(f - 1) * stride + c] + a * arr[f * stride + c]);
                }
            } else {
                out.extend_from_slice(&arr[(f - 1) * stride..f * stride]);
            }
        }
        out_arrays.push(out);
    }
    store_row(
        patch,
        j,
        refined,
        RowData {
            strides: data.strides,
            arrays: out_arrays,
        },
        &names,
    );
    Ok(())
}

/// Blending weights of the one-sided removal solutions.
///
/// `lambda[t]` are the `p` interior insertion ratios of the coarsened vector
/// (each appears in exactly one reproduction equation). The weight of
/// equation `t` is `(1/lambda_t) * prod_{r>t} (1-lambda_r)/lambda_r`; the
/// blend factor at replaced position `r` is the normalized partial sum,
/// which ramps from forward-dominated on the left to backward-dominated on
/// the right and minimizes the worst-case curve change.
fn blend_factors(lambda: &[f64]) -> Vec<f64> {
    let p = lambda.len();
    let weights: Vec<f64> = (0..p)
        .map(|t| {
            let mut w = 1.0 / lambda[t];
            for r in t + 1..p {
                w *= (1.0 - lambda[r]) / lambda[r];
            }
            w
        })
        .collect();
    let gamma: f64 = weights.iter().sum();
    let mut mu = Vec::with_capacity(p.saturating_sub(1));
    let mut acc = 0.0;
    for t in 0..p.saturating_sub(1) {
        acc += weights[t];
        mu.push(acc / gamma);
    }
    mu
}

/// Remove an inner parent knot from row `j` with the geometry-change
/// minimizing one-sided blend. Removal always executes; it is exact only
/// when the knot is removable.
pub fn remove_knot(patch: &mut FloatingPatch, j: usize, x_minus: f64) -> Result<()> {
    let kv = open_kv(patch, j)?.clone();
    let coarse = kv.with_removed(x_minus)?;
    let p = kv.degree();
    let knots = kv.knots();
    let kk = knots
        .iter()
        .position(|&t| t == x_minus)
        .expect("checked by with_removed");
    let (data, names) = collect_row(patch, j);

    let mut out_arrays = Vec::with_capacity(data.arrays.len());
    for (arr, &stride) in data.arrays.iter().zip(&data.strides) {
        let mut out = arr.clone();
        if p > 1 {
            // The p interior insertion ratios of the coarsened vector,
            // one per reproduction equation.
            let lambda: Vec<f64> = (0..p)
                .map(|rho| {
                    (x_minus - knots[kk - p + rho]) / (knots[kk + 1 + rho] - knots[kk - p + rho])
                })
                .collect();
            let mu = blend_factors(&lambda);

            // One-sided solutions indexed so that b[idx] is the coarse point
            // kk - p - 1 + idx; idx 0 and p are the known outer points.
            let mut b_fwd = vec![vec![0.0; stride]; p + 1];
            let mut b_bwd = vec![vec![0.0; stride]; p + 1];
            b_fwd[0].copy_from_slice(&arr[(kk - p - 1) * stride..(kk - p) * stride]);
            b_bwd[p].copy_from_slice(&arr[kk * stride..(kk + 1) * stride]);
            for rho in 0..p - 1 {
                for c in 0..stride {
                    b_fwd[rho + 1][c] = (arr[(kk - p + rho) * stride + c]
                        - (1.0 - lambda[rho]) * b_fwd[rho][c])
                        / lambda[rho];
                }
            }
            for rho in (1..=p - 1).rev() {
                for c in 0..stride {
                    b_bwd[rho][c] =
                        (arr[(kk - p + rho) * stride + c] - lambda[rho] * b_bwd[rho + 1][c])
                            / (1.0 - lambda[rho]);
                }
            }
            for r in 1..=p - 1 {
                for c in 0..stride {
                    out[(kk - p - 1 + r) * stride + c] =
                        (1.0 - mu[r - 1]) * b_fwd[r][c] + mu[r - 1] * b_bwd[r][c];
                }
            }
        }
        out.drain((kk - 1) * stride..kk * stride);
        out_arrays.push(out);
    }
    store_row(
        patch,
        j,
        coarse,
        RowData {
            strides: data.strides,
            arrays: out_arrays,
        },
        &names,
    );
    Ok(())
}

/// One adaptive sweep: measure every parent span, split the stretched ones at
/// their center, remove a bounding inner knot of the compressed ones. The
/// resulting parent vectors must stay knot-set subsets of every quadrature
/// vector referring to them.
pub fn adapt(
    patch: &mut FloatingPatch,
    point_set: &QuadraturePointSet,
    policy: &RefinementPolicy,
) -> Result<Vec<RefinementEvent>> {
    let mut events = Vec::new();
    for j in 0..patch.num_rows() {
        if patch.row_basis(j).is_periodic() {
            continue;
        }
        let breaks = patch.row_basis(j).breaks();
        let lengths: Result<Vec<f64>> = (0..breaks.len() - 1)
            .map(|k| segment_length(k, j, patch, point_set))
            .collect();
        let lengths = lengths?;

        let mut insertions = Vec::new();
        let mut removals = Vec::new();
        for (k, &len) in lengths.iter().enumerate() {
            if len > policy.insert_threshold {
                insertions.push(0.5 * (breaks[k] + breaks[k + 1]));
            } else if len < policy.remove_threshold {
                // Left bounding inner knot, falling back to the right one for
                // the first span.
                if k > 0 {
                    removals.push(breaks[k]);
                } else if breaks.len() > 2 {
                    removals.push(breaks[k + 1]);
                }
            }
        }
        removals.dedup();

        for &x_plus in &insertions {
            // Density guard: the new knot must exist in every quadrature
            // vector that sees this row as supported or neighbor.
            for (l0, qrow) in point_set.rows().iter().enumerate() {
                if qrow.s == j || qrow.n == j {
                    let qb = qrow.basis.breaks();
                    if !qb.iter().any(|&q| (q - x_plus).abs() < 1e-12) {
                        return Err(FligaError::DensityExceeded(format!(
                            "row {j}: knot {x_plus} absent from quadrature vector l = {l0}; \
                             increase the density factor for this row"
                        )));
                    }
                }
            }
            insert_knot(patch, j, x_plus)?;
            events.push(RefinementEvent {
                row: j,
                action: RefinementAction::Insert,
                knot: x_plus,
            });
        }
        for &x_minus in &removals {
            // A removal planned from stale breaks can disappear when the
            // neighboring span was split; skip silently in that case.
            if open_kv(patch, j)?.knots().iter().any(|&t| t == x_minus) {
                remove_knot(patch, j, x_minus)?;
                events.push(RefinementEvent {
                    row: j,
                    action: RefinementAction::Remove,
                    knot: x_minus,
                });
            }
        }
    }
    if !events.is_empty() {
        point_set.validate_supersets(patch)?;
    }
    Ok(events)
}
