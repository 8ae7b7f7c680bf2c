//! Run definitions: one TOML document per scenario, one section per
//! parameter group. Unset scenario parameters fall back to the reference
//! values of the corresponding study.

use fliga::solver::{ConstitutiveModel, MaterialParams};
use fliga::{FligaError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PatchTest,
    TaylorCouette,
    PlanarExtrusion,
    AmDeposition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub model: String,
    #[serde(default)]
    pub solvent_viscosity: f64,
    #[serde(default)]
    pub polymer_viscosity: f64,
    #[serde(default)]
    pub relaxation_time: f64,
}

impl MaterialConfig {
    pub fn to_params(&self) -> Result<MaterialParams> {
        let model = match self.model.as_str() {
            "newtonian" => ConstitutiveModel::Newtonian,
            "oldroyd_b" => ConstitutiveModel::OldroydB,
            other => {
                return Err(FligaError::InvalidInput(format!(
                    "unknown material model '{other}' (newtonian | oldroyd_b)"
                )))
            }
        };
        let params = MaterialParams {
            model,
            solvent_viscosity: self.solvent_viscosity,
            polymer_viscosity: self.polymer_viscosity,
            relaxation_time: self.relaxation_time,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Characteristic polynomial degree p (the normal degree is fixed at 1).
    pub degree: usize,
    /// Velocity element counts: characteristic x normal.
    pub elements: [usize; 2],
    /// Gauss-Legendre points per quadrature span; defaults to p + 1.
    #[serde(default)]
    pub points_per_span: Option<usize>,
    /// Assumed maximum span shrinkage (power of two), uniform over rows.
    #[serde(default = "one")]
    pub density_factor: usize,
}

fn one() -> usize {
    1
}

impl Discretization {
    pub fn g(&self) -> usize {
        self.points_per_span.unwrap_or(self.degree + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stepping {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_nf")]
    pub floating_interval: usize,
    #[serde(default = "default_true")]
    pub enable_regulation: bool,
}

fn default_nf() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Multiples of the initial mean physical span length.
    #[serde(default = "default_ins")]
    pub insert_factor: f64,
    #[serde(default = "default_rem")]
    pub remove_factor: f64,
}

fn default_ins() -> f64 {
    1.5
}

fn default_rem() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub kappa_p: f64,
    pub kappa_r: f64,
    pub kappa_s: f64,
    /// Slip-penalty ramp interval along the flow axis (unverified extent,
    /// taken from the figure); `None` disables the ramp.
    #[serde(default)]
    pub slip_ramp: Option<[f64; 2]>,
}

/// Patch-test specifics: the floated configuration and reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchTestParams {
    /// Imposed boundary speed.
    pub v0: f64,
    /// Row-alternating amplitude of the floating-map warp.
    pub float_amplitude: f64,
    /// Per-row decay of the warp amplitude (rows two apart must differ).
    pub float_decay: f64,
    /// Number of normal rows.
    pub rows: usize,
}

impl Default for PatchTestParams {
    fn default() -> Self {
        Self {
            v0: 1.0,
            float_amplitude: 0.55,
            float_decay: 0.5,
            rows: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaylorCouetteParams {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Outer-cylinder angular frequency (rad/s); the inner one is fixed.
    pub outer_omega: f64,
    /// Radial row placement: 0 = uniform, 1 = fully geometric grading
    /// (rows concentrate toward the inner cylinder, where the shear rate
    /// and the viscoelastic pressure profile are steepest).
    pub radial_grading: f64,
    /// Report the error norms every this many steps.
    pub report_interval: usize,
}

impl Default for TaylorCouetteParams {
    fn default() -> Self {
        Self {
            inner_radius: 0.1,
            outer_radius: 0.2,
            outer_omega: 7.5,
            radial_grading: 1.0,
            report_interval: 200,
        }
    }
}

/// Extrusion lengths are expressed in millimeters and speeds in mm/s: the
/// penalty coefficients of the reference study tie stress (Pa) to lengths in
/// mm, and the inertialess model is otherwise unit-free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtrusionParams {
    /// Nozzle exit half-width (mm).
    pub exit_halfwidth: f64,
    /// Contraction ratio of the convergent segment.
    pub contraction: f64,
    /// Convergent segment length (mm).
    pub contraction_length: f64,
    /// Straight nozzle length (mm).
    pub straight_length: f64,
    /// Initial free-strand stub beyond the exit (mm).
    pub stub_length: f64,
    /// Exit fillet radius as a fraction of the exit half-width.
    pub fillet_fraction: f64,
    /// Inflow speed (mm/s).
    pub v_in: f64,
    /// Weissenberg number; 0 selects the Newtonian model.
    pub weissenberg: f64,
    /// Measure the swell beyond exit + this many exit half-widths.
    pub swell_margin: f64,
}

impl Default for ExtrusionParams {
    fn default() -> Self {
        Self {
            exit_halfwidth: 0.2,
            contraction: 4.0,
            contraction_length: 1.0,
            straight_length: 1.2,
            stub_length: 0.6,
            fillet_fraction: 0.125,
            v_in: 0.5,
            weissenberg: 1.0,
            swell_margin: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmVariant {
    Straight,
    VibratingNozzle,
    UnevenSubstrate,
    Obstacle,
}

/// Deposition lengths are in millimeters and speeds in mm/s, matching the
/// penalty calibration (see [`ExtrusionParams`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmParams {
    pub variant: AmVariant,
    /// Nozzle exit half-width (mm).
    pub exit_halfwidth: f64,
    pub contraction: f64,
    pub contraction_length: f64,
    pub straight_length: f64,
    /// Pre-deposited foot length along the substrate (mm).
    pub foot_length: f64,
    /// Nozzle traverse speed imposed on substrate-contacting controls (mm/s).
    pub nozzle_speed: f64,
    pub v_in: f64,
    pub weissenberg: f64,
    /// Vertical nozzle vibration (amplitude mm, frequency Hz).
    pub vibration: [f64; 2],
    /// Substrate surface as piecewise-linear (x, height) samples; heights are
    /// relative to the flat reference level.
    pub substrate: Vec<[f64; 2]>,
    /// Height step of the substrate front segment avoiding the corner
    /// singularity (unspecified in the study; exposed here).
    pub front_step: f64,
    /// Maximum admissible mean interface-to-path angle (degrees) for the
    /// alignment diagnostic.
    pub alignment_bound_deg: f64,
}

impl Default for AmParams {
    fn default() -> Self {
        Self {
            variant: AmVariant::Straight,
            exit_halfwidth: 0.2,
            contraction: 4.0,
            contraction_length: 0.6,
            straight_length: 0.2,
            foot_length: 0.8,
            nozzle_speed: 2.4,
            v_in: 0.5,
            weissenberg: 1.5,
            vibration: [0.0, 0.0],
            substrate: Vec::new(),
            front_step: 0.05,
            alignment_bound_deg: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write the point-cloud field dump every this many steps (0: only at
    /// the end).
    pub dump_interval: usize,
    /// Write a restartable checkpoint at the end of the run.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dump_interval: 0,
            checkpoint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub material: MaterialConfig,
    pub discretization: Discretization,
    pub stepping: Stepping,
    #[serde(default)]
    pub refinement: Option<RefinementConfig>,
    #[serde(default)]
    pub contact: Option<ContactConfig>,
    #[serde(default)]
    pub patch_test: PatchTestParams,
    #[serde(default)]
    pub taylor_couette: TaylorCouetteParams,
    #[serde(default)]
    pub extrusion: ExtrusionParams,
    #[serde(default)]
    pub am: AmParams,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)
            .map_err(|e| FligaError::InvalidInput(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// FNV-1a fingerprint of the canonical serialization, recorded in the
    /// run manifest.
    pub fn fingerprint(&self) -> u64 {
        let text = self.to_toml();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        self.material.to_params()?;
        if self.stepping.dt <= 0.0 {
            return Err(FligaError::InvalidInput("dt must be positive".into()));
        }
        if self.stepping.floating_interval == 0 {
            return Err(FligaError::InvalidInput("floating_interval must be >= 1".into()));
        }
        let d = &self.discretization;
        if d.degree == 0 || d.degree > 4 {
            return Err(FligaError::InvalidInput("degree must be in 1..=4".into()));
        }
        if d.elements[0] == 0 || d.elements[1] == 0 {
            return Err(FligaError::InvalidInput("element counts must be >= 1".into()));
        }
        if d.density_factor == 0 || d.density_factor & (d.density_factor - 1) != 0 {
            return Err(FligaError::InvalidInput(
                "density_factor must be a power of two >= 1".into(),
            ));
        }
        if let Some(g) = d.points_per_span {
            if g == 0 || g > 10 {
                return Err(FligaError::InvalidInput("points_per_span must be in 1..=10".into()));
            }
        }
        if let Some(r) = &self.refinement {
            if r.remove_factor >= r.insert_factor / 2.0 {
                return Err(FligaError::InvalidInput(
                    "remove_factor must be < insert_factor / 2".into(),
                ));
            }
        }
        // Mixed-space nesting: scenarios with pressure need an odd row count
        // (even normal element count) and even characteristic element count.
        let needs_pressure = !matches!(self.kind, ScenarioKind::PatchTest);
        if needs_pressure {
            if d.elements[1] % 2 != 0 {
                return Err(FligaError::InvalidInput(
                    "normal element count must be even to nest the pressure space".into(),
                ));
            }
            if d.elements[0] % 2 != 0 {
                return Err(FligaError::InvalidInput(
                    "characteristic element count must be even to nest the pressure space".into(),
                ));
            }
            if d.degree < 2 {
                return Err(FligaError::InvalidInput(
                    "mixed scenarios need degree >= 2".into(),
                ));
            }
        }
        if matches!(self.kind, ScenarioKind::PlanarExtrusion | ScenarioKind::AmDeposition)
            && self.contact.is_none()
        {
            return Err(FligaError::InvalidInput(
                "extrusion scenarios require a [contact] section".into(),
            ));
        }
        Ok(())
    }
}
