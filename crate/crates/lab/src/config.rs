//! Scenario files: TOML with strict key checking.
//!
//! Every key that survives parsing is written back by the serializer, so an
//! input key missing from the re-serialized tree was not recognised.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use singular_flow_core::dimension::geometric_ladder;
use singular_flow_core::fields::{Background, FieldSpec, GridTable, Path, VortexTerm};
use singular_flow_core::geometry::{BoxDomain, PointSet};
use singular_flow_core::sets::{
    make_cantor, make_graph, make_product, make_reciprocal_powers, InitialSet, Motion, SpaceTimeSet, TimeSet,
    TrajectoryBundle,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Dimension,
    Print,
    Conditions,
    Flow,
    Avoidance,
    Transport,
    VortexWave,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Dimension,
        Stage::Print,
        Stage::Conditions,
        Stage::Flow,
        Stage::Avoidance,
        Stage::Transport,
        Stage::VortexWave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Dimension => "dimension",
            Stage::Print => "print",
            Stage::Conditions => "conditions",
            Stage::Flow => "flow",
            Stage::Avoidance => "avoidance",
            Stage::Transport => "transport",
            Stage::VortexWave => "vortex-wave",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<BoxDomain, ConfigError> {
        BoxDomain::new(self.lo.clone(), self.hi.clone()).map_err(|e| invalid(format!("domain: {e}")))
    }
}

/// Geometric ladder `hi, hi·ratio, …` with `count` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub hi: f64,
    pub ratio: f64,
    pub count: usize,
}

impl LadderSpec {
    pub fn values(&self) -> Result<Vec<f64>, ConfigError> {
        if !(self.hi > 0.0) || !(self.ratio > 0.0 && self.ratio < 1.0) || self.count < 2 {
            return Err(invalid("ladder needs hi > 0, 0 < ratio < 1, count ≥ 2"));
        }
        Ok(geometric_ladder(self.hi, self.ratio, self.count))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceRecipe {
    /// Keep-ratio Cantor set on `[0,1]`, optionally embedded in ℝ^dim.
    Cantor {
        keep: f64,
        depth: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    /// `C × C ⊂ ℝ²`.
    CantorProduct { keep: f64, depth: u32 },
    /// `{n^{-power} : 1 ≤ n ≤ count} ∪ {0}`.
    Reciprocal {
        power: f64,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Points {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theoretical_dim: Option<f64>,
    },
}

impl SpaceRecipe {
    pub fn build(&self) -> Result<InitialSet, ConfigError> {
        let core = |e: singular_flow_core::Error| invalid(format!("set recipe: {e}"));
        let embed = |s: InitialSet, dim: Option<usize>| match dim {
            Some(d) => s.embed(d).map_err(core),
            None => Ok(s),
        };
        match self {
            SpaceRecipe::Cantor { keep, depth, dim } => embed(make_cantor(*keep, *depth).map_err(core)?, *dim),
            SpaceRecipe::CantorProduct { keep, depth } => {
                let c = make_cantor(*keep, *depth).map_err(core)?;
                Ok(c.product(&c))
            }
            SpaceRecipe::Reciprocal { power, count, dim } => {
                embed(make_reciprocal_powers(*power, *count).map_err(core)?, *dim)
            }
            SpaceRecipe::Points {
                points,
                theoretical_dim,
            } => {
                let dim = points.first().map_or(0, |p| p.len());
                let ps = PointSet::from_rows(dim, points).map_err(core)?;
                InitialSet::new(ps, *theoretical_dim, "points").map_err(core)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeRecipe {
    Interval {
        start: f64,
        end: f64,
    },
    /// Cantor set scaled to `[start, end]`.
    Cantor {
        keep: f64,
        depth: u32,
        #[serde(default)]
        start: f64,
        #[serde(default = "one")]
        end: f64,
    },
    Points {
        times: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theoretical_dim: Option<f64>,
    },
}

impl TimeRecipe {
    pub fn build(&self) -> Result<TimeSet, ConfigError> {
        let core = |e: singular_flow_core::Error| invalid(format!("time recipe: {e}"));
        match self {
            TimeRecipe::Interval { start, end } => TimeSet::interval(*start, *end).map_err(core),
            TimeRecipe::Cantor {
                keep,
                depth,
                start,
                end,
            } => {
                let c = make_cantor(*keep, *depth).map_err(core)?;
                let times = c.points.coords().iter().map(|s| start + s * (end - start)).collect();
                TimeSet::finite(times, c.theoretical_dim).map_err(core)
            }
            TimeRecipe::Points { times, theoretical_dim } => {
                TimeSet::finite(times.clone(), *theoretical_dim).map_err(core)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MotionRecipe {
    Identity,
    Rotation { center: [f64; 2], omega: f64 },
    PowerDrift { direction: Vec<f64>, exponent: f64 },
    Polyline { times: Vec<f64>, offsets: Vec<Vec<f64>> },
    Quadratic,
}

impl MotionRecipe {
    pub fn build(&self) -> Motion {
        match self {
            MotionRecipe::Identity => Motion::Identity,
            MotionRecipe::Rotation { center, omega } => Motion::Rotation {
                center: *center,
                omega: *omega,
            },
            MotionRecipe::PowerDrift { direction, exponent } => Motion::PowerDrift {
                direction: direction.clone(),
                exponent: *exponent,
            },
            MotionRecipe::Polyline { times, offsets } => Motion::Polyline {
                times: times.clone(),
                offsets: offsets.clone(),
            },
            MotionRecipe::Quadratic => Motion::Quadratic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathRecipe {
    Fixed {
        at: [f64; 2],
    },
    Circular {
        center: [f64; 2],
        radius: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Polyline {
        times: Vec<f64>,
        points: Vec<[f64; 2]>,
    },
    PowerDrift {
        start: [f64; 2],
        direction: [f64; 2],
        exponent: f64,
    },
}

impl PathRecipe {
    pub fn build(&self) -> Path {
        match self {
            PathRecipe::Fixed { at } => Path::Fixed(*at),
            PathRecipe::Circular {
                center,
                radius,
                omega,
                phase,
            } => Path::Circular {
                center: *center,
                radius: *radius,
                omega: *omega,
                phase: *phase,
            },
            PathRecipe::Polyline { times, points } => Path::Polyline {
                times: times.clone(),
                points: points.clone(),
            },
            PathRecipe::PowerDrift {
                start,
                direction,
                exponent,
            } => Path::PowerDrift {
                start: *start,
                direction: *direction,
                exponent: *exponent,
            },
        }
    }
}

/// The singular set `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetRecipe {
    Product {
        time: TimeRecipe,
        space: SpaceRecipe,
    },
    /// `{(t, Z(t,x)) : x ∈ base}`; the Hölder pair is derived from the motion
    /// unless given as `[alpha, K]`.
    Graph {
        base: SpaceRecipe,
        motion: MotionRecipe,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder: Option<[f64; 2]>,
    },
    /// Graph of a point-vortex path.
    Vortex {
        path: PathRecipe,
    },
}

impl SetRecipe {
    pub fn build(&self, horizon: f64) -> Result<SpaceTimeSet, ConfigError> {
        let core = |e: singular_flow_core::Error| invalid(format!("set: {e}"));
        match self {
            SetRecipe::Product { time, space } => make_product(time.build()?, space.build()?, horizon).map_err(core),
            SetRecipe::Graph { base, motion, holder } => {
                let base = base.build()?;
                let motion = motion.build();
                let bundle = match holder {
                    Some([a, k]) => TrajectoryBundle::new(motion, *a, *k, horizon),
                    None => TrajectoryBundle::with_known_holder(motion, &base.points, horizon),
                }
                .map_err(core)?;
                make_graph(base, bundle).map_err(core)
            }
            SetRecipe::Vortex { path } => path.build().to_set(horizon).map_err(core),
        }
    }

    /// Dimension of the spatial sections, when the recipe knows it.
    pub fn section_dim(&self) -> Option<f64> {
        match self {
            SetRecipe::Product { space, .. } | SetRecipe::Graph { base: space, .. } => {
                space.build().ok().and_then(|s| s.theoretical_dim)
            }
            SetRecipe::Vortex { .. } => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundRecipe {
    #[default]
    Zero,
    Rotation {
        omega: f64,
    },
    Uniform {
        velocity: Vec<f64>,
    },
    /// `A x + c`, `A` row-major.
    Linear {
        matrix: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        offset: Vec<f64>,
    },
    Radial {
        center: Vec<f64>,
        strength: f64,
    },
    /// Bilinear table on an `nx × ny` node grid, row-major in x.
    Table {
        lo: [f64; 2],
        hi: [f64; 2],
        nx: usize,
        ny: usize,
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexRecipe {
    pub path: PathRecipe,
    pub strength: f64,
    /// Use the `1/2π` Biot–Savart normalisation.
    #[serde(default)]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecipe {
    #[serde(default)]
    pub background: BackgroundRecipe,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vortices: Vec<VortexRecipe>,
    #[serde(default = "yes")]
    pub bv_off_singular_set: bool,
}

impl FieldRecipe {
    pub fn build(&self, dim: usize, horizon: f64) -> Result<FieldSpec, ConfigError> {
        let core = |e: singular_flow_core::Error| invalid(format!("field: {e}"));
        let bg = match &self.background {
            BackgroundRecipe::Zero => Background::Zero,
            BackgroundRecipe::Rotation { omega } => Background::Rotation { omega: *omega },
            BackgroundRecipe::Uniform { velocity } => Background::Uniform(velocity.clone()),
            BackgroundRecipe::Linear { matrix, offset } => Background::Linear {
                matrix: matrix.clone(),
                offset: if offset.is_empty() {
                    vec![0.0; dim]
                } else {
                    offset.clone()
                },
            },
            BackgroundRecipe::Radial { center, strength } => Background::Radial {
                center: center.clone(),
                strength: *strength,
            },
            BackgroundRecipe::Table { lo, hi, nx, ny, u, v } => {
                Background::Table(GridTable::new(*lo, *hi, *nx, *ny, u.clone(), v.clone()).map_err(core)?)
            }
        };
        let mut b = FieldSpec::new(dim, horizon, bg).map_err(core)?;
        for v in &self.vortices {
            b = b
                .with_vortex(VortexTerm {
                    path: v.path.build(),
                    strength: v.strength,
                    normalized: v.normalized,
                })
                .map_err(core)?;
        }
        b.bv_off_singular_set = self.bv_off_singular_set;
        Ok(b)
    }

    /// Only rotations, uniform fields and traceless linear maps are
    /// divergence-free among the backgrounds; vortex terms always are.
    pub fn divergence_free(&self) -> bool {
        match &self.background {
            BackgroundRecipe::Zero | BackgroundRecipe::Rotation { .. } | BackgroundRecipe::Uniform { .. } => true,
            BackgroundRecipe::Linear { matrix, .. } => {
                let n = (matrix.len() as f64).sqrt() as usize;
                (0..n).map(|i| matrix[i * n + i]).sum::<f64>().abs() < 1e-14
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSet {
    pub name: String,
    pub recipe: SpaceRecipe,
    /// Expected dimension; checked at `tolerance` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<f64>,
    #[serde(default = "dim_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minkowski_ladder: Option<LadderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub ladder: LadderSpec,
    #[serde(default = "yes")]
    pub minkowski: bool,
    /// Largest allowed gap between the two methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(default = "measure_samples")]
    pub max_samples: usize,
    #[serde(default = "rel_error")]
    pub target_rel_error: f64,
    pub sets: Vec<NamedSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictName {
    Member,
    NonMember,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintExpect {
    pub alpha: f64,
    pub beta: f64,
    pub verdict: VerdictName,
}

/// Factor dimensions of a product set, used for the predicted print region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDims {
    pub time: f64,
    pub space: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default = "eps_floor")]
    pub eps_floor: f64,
    #[serde(default = "margin")]
    pub margin: f64,
    #[serde(default = "time_samples")]
    pub time_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ladder: Option<LadderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ladder: Option<LadderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    /// Compare verdicts with the product-set prediction outside a band of
    /// this half-width around the boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<ProductDims>,
    #[serde(default = "margin")]
    pub band: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<PrintExpect>,
    /// Samples for the Hölder section-bound check (graphs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_bound_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    /// Violated conditions fail the run.
    Error,
    /// Violations are reported only.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalSpec {
    pub samples: usize,
    #[serde(default = "normal_min_distance")]
    pub min_distance: f64,
    pub tolerance: f64,
    #[serde(default)]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsSpec {
    pub p: f64,
    pub q: f64,
    /// Hölder exponent of the trajectories; taken from the set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_h: Option<f64>,
    /// Supremum of section dimensions; taken from the set recipe when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_dim: Option<f64>,
    #[serde(default = "severity")]
    pub severity: Severity,
    /// Expected status per condition label (`i` … `v`, `trajectory`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expect: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_threshold: Option<f64>,
    #[serde(default)]
    pub skip_print: bool,
    #[serde(default = "quad_cells")]
    pub cells_per_axis: usize,
    #[serde(default = "quad_times")]
    pub time_samples: usize,
    #[serde(default = "excision")]
    pub excision: f64,
    #[serde(default = "eps_floor")]
    pub eps_floor: f64,
    /// Pointwise check of `|b·∇d_S|` on random points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialRecipe {
    Grid {
        per_axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<DomainSpec>,
    },
    Random {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<DomainSpec>,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressibilitySpec {
    pub boxes: Vec<DomainSpec>,
    #[serde(default = "min_count")]
    pub min_count: usize,
    /// Required range `[lo, hi]` for `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub initial: InitialRecipe,
    #[serde(default = "outputs")]
    pub outputs: usize,
    #[serde(default = "delta_min")]
    pub delta_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_step: Option<f64>,
    /// Stop trajectories leaving the domain.
    #[serde(default)]
    pub escape: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressibility: Option<CompressibilitySpec>,
    /// Trajectories checked against the integral form of the ODE.
    #[serde(default)]
    pub residual_samples: usize,
    #[serde(default = "residual_tolerance")]
    pub residual_tolerance: f64,
    /// Trajectories traced for the Lyapunov inequality.
    #[serde(default)]
    pub lyapunov_samples: usize,
    #[serde(default = "lyapunov_r0")]
    pub lyapunov_r0: f64,
    #[serde(default = "yes")]
    pub export_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceSpec {
    pub r0: f64,
    pub deltas: LadderSpec,
    #[serde(default = "bound_samples")]
    pub bound_samples: usize,
    /// `L`; estimated by the flow stage (or 1) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressibility: Option<f64>,
    #[serde(default = "margin")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarRecipe {
    Gaussian {
        center: [f64; 2],
        sigma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Constant {
        value: f64,
    },
    /// `sin(2π kx x) cos(2π ky y)`.
    Wave {
        k: [f64; 2],
    },
}

impl ScalarRecipe {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarRecipe::Gaussian {
                center,
                sigma,
                amplitude,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            ScalarRecipe::Constant { value } => *value,
            ScalarRecipe::Wave { k } => {
                let tau = std::f64::consts::TAU;
                (tau * k[0] * x[0]).sin() * (tau * k[1] * x[1]).cos()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaName {
    Identity,
    Square,
    Cube,
    Sin,
}

impl BetaName {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            BetaName::Identity => z,
            BetaName::Square => z * z,
            BetaName::Cube => z * z * z,
            BetaName::Sin => z.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BetaName::Identity => "identity",
            BetaName::Square => "square",
            BetaName::Cube => "cube",
            BetaName::Sin => "sin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    /// `(t, x1, x2)`.
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryName {
    Periodic,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationName {
    Bilinear,
    MonotoneCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSpec {
    /// One solve per entry, coarse to fine.
    pub cells: Vec<usize>,
    /// Time step as a multiple of the mesh width.
    #[serde(default = "dt_factor")]
    pub dt_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "stride")]
    pub stride: usize,
    #[serde(default = "boundary")]
    pub boundary: BoundaryName,
    #[serde(default = "interpolation")]
    pub interpolation: InterpolationName,
    pub initial: ScalarRecipe,
    #[serde(default = "betas")]
    pub betas: Vec<BetaName>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_functions: Vec<TestFunctionSpec>,
    /// Required empirical order of the `β = z²` residuals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
    #[serde(default = "margin_gronwall")]
    pub gronwall_tolerance: f64,
    /// Allowed relative drift of `∫u²` (divergence-free fields only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_tolerance: Option<f64>,
    #[serde(default = "yes")]
    pub snapshot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityRecipe {
    Gaussian {
        center: [f64; 2],
        sigma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude · exp(−decay r²)` on `inner < r < outer` about `center`.
    Annulus {
        center: [f64; 2],
        inner: f64,
        outer: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        decay: f64,
    },
}

impl DensityRecipe {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DensityRecipe::Gaussian {
                center,
                sigma,
                amplitude,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            DensityRecipe::Annulus {
                center,
                inner,
                outer,
                amplitude,
                decay,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                if r2 > inner * inner && r2 < outer * outer {
                    amplitude * (-decay * r2).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParticleRecipe {
    /// One particle per cell centre carrying `ω₀ h²`.
    Density {
        profile: DensityRecipe,
        cells: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<DomainSpec>,
    },
    List {
        positions: Vec<[f64; 2]>,
        omega: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexAvoidanceSpec {
    pub r0: f64,
    pub deltas: LadderSpec,
    #[serde(default = "bound_samples")]
    pub bound_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexWaveSpec {
    pub gamma: f64,
    #[serde(default)]
    pub z0: [f64; 2],
    #[serde(default)]
    pub normalized: bool,
    /// Defaults to twice the smallest particle spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "snapshots")]
    pub snapshots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    pub particles: ParticleRecipe,
    /// Relative tolerance on the two-vortex period (single particle only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_tolerance: Option<f64>,
    /// Largest allowed displacement of the point vortex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avoidance: Option<VortexAvoidanceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Mandatory; every random stream derives from it.
    pub seed: u64,
    /// Worker cap, 0 = all cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub pipeline: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default = "one")]
    pub horizon: f64,
    /// Time sampling of graph distance evaluators.
    #[serde(default = "time_resolution")]
    pub time_resolution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<DimensionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub print: Option<PrintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avoidance: Option<AvoidanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vortex_wave: Option<VortexWaveSpec>,
}

impl Scenario {
    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses and validates; unknown keys anywhere in the tree are an error.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let sc: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let echo = toml::Table::try_from(&sc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&toml::Value::Table(raw), &toml::Value::Table(echo), "", &mut unknown);
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        if let Some(d) = &self.domain {
            d.build()?;
        }
        for st in &self.pipeline {
            let ok = match st {
                Stage::Dimension => self.dimension.is_some(),
                Stage::Print => self.print.is_some() && self.set.is_some() && self.domain.is_some(),
                Stage::Conditions => self.conditions.is_some() && self.field.is_some() && self.domain.is_some(),
                Stage::Flow => self.flow.is_some() && self.field.is_some(),
                Stage::Avoidance => self.avoidance.is_some() && self.flow.is_some() && self.field.is_some(),
                Stage::Transport => self.transport.is_some() && self.field.is_some() && self.domain.is_some(),
                Stage::VortexWave => self.vortex_wave.is_some(),
            };
            if !ok {
                return Err(invalid(format!(
                    "stage `{st}` is missing its section or a recipe it needs"
                )));
            }
        }
        if let Some(s) = &self.set {
            s.build(self.horizon)?;
        }
        if let Some(f) = &self.field {
            f.build(self.dim(), self.horizon)?;
        }
        Ok(())
    }

    /// Ambient spatial dimension implied by the domain (2 when absent).
    pub fn dim(&self) -> usize {
        self.domain.as_ref().map_or(2, |d| d.lo.len())
    }

    /// The configured set, or the path of the first vortex.
    pub fn singular_set(&self) -> Result<Option<SpaceTimeSet>, ConfigError> {
        if let Some(s) = &self.set {
            return s.build(self.horizon).map(Some);
        }
        match self.field.as_ref().and_then(|f| f.vortices.first()) {
            Some(v) => SetRecipe::Vortex { path: v.path.clone() }.build(self.horizon).map(Some),
            None => Ok(None),
        }
    }

    pub fn section_dim(&self) -> Option<f64> {
        match &self.set {
            Some(s) => s.section_dim(),
            None => self.field.as_ref().and_then(|f| f.vortices.first()).map(|_| 0.0),
        }
    }
}

/// Paths present in `input` but absent from `echo`.
fn unknown_keys(input: &toml::Value, echo: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    match (input, echo) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in a {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &path, out),
                    None => out.push(path),
                }
            }
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            for (i, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_keys(v, w, &format!("{prefix}[{i}]"), out);
            }
        }
        _ => {}
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn dim_tolerance() -> f64 {
    0.05
}
fn measure_samples() -> usize {
    1 << 21
}
fn rel_error() -> f64 {
    0.01
}
fn eps_floor() -> f64 {
    1e-3
}
fn margin() -> f64 {
    0.1
}
fn margin_gronwall() -> f64 {
    0.01
}
fn time_samples() -> usize {
    5
}
fn severity() -> Severity {
    Severity::Error
}
fn quad_cells() -> usize {
    128
}
fn quad_times() -> usize {
    4
}
fn excision() -> f64 {
    0.05
}
fn normal_min_distance() -> f64 {
    0.1
}
fn min_count() -> usize {
    50
}
fn outputs() -> usize {
    4
}
fn delta_min() -> f64 {
    1e-6
}
fn residual_tolerance() -> f64 {
    1e-6
}
fn lyapunov_r0() -> f64 {
    0.25
}
fn bound_samples() -> usize {
    200_000
}
fn dt_factor() -> f64 {
    2.0
}
fn stride() -> usize {
    1
}
fn boundary() -> BoundaryName {
    BoundaryName::Clamp
}
fn interpolation() -> InterpolationName {
    InterpolationName::Bilinear
}
fn betas() -> Vec<BetaName> {
    vec![BetaName::Identity, BetaName::Square]
}
fn snapshots() -> usize {
    10
}
fn time_resolution() -> f64 {
    1e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "m"
seed = 3
pipeline = []
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 3);
        assert!(s.pipeline.is_empty());
        assert_eq!(s.horizon, 1.0);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let text = format!("{MINIMAL}bogus = 1\n[domain]\nlo = [0.0]\nhi = [1.0]\nextra = true\n");
        match Scenario::parse(&text) {
            Err(ConfigError::UnknownKeys(k)) => assert_eq!(k, vec!["bogus", "domain.extra"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_inside_tagged_recipes() {
        let text =
            format!("{MINIMAL}[set]\nkind = \"vortex\"\npath = {{ kind = \"fixed\", at = [0.0, 0.0], speed = 2 }}\n");
        match Scenario::parse(&text) {
            Err(ConfigError::UnknownKeys(k)) => assert_eq!(k, vec!["set.path.speed"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(Scenario::parse("name = \"x\"\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn stage_without_section_rejected() {
        let text = "name = \"x\"\nseed = 1\npipeline = [\"flow\"]\n";
        assert!(matches!(Scenario::parse(text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
name = "v"
seed = 9
pipeline = ["conditions"]
[domain]
lo = [-1.0, -1.0]
hi = [1.0, 1.0]
[field]
vortices = [{ path = { kind = "circular", center = [0.0, 0.0], radius = 0.3, omega = 1.0 }, strength = 0.5 }]
[conditions]
p = 2.0
q = inf
"#;
        let s = Scenario::parse(text).unwrap();
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.section_dim(), Some(0.0));
        assert!(s.conditions.unwrap().q.is_infinite());
    }
}
