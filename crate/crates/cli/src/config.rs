//! Declarative experiment configuration: one human-writable TOML file with
//! an explicit seed. Unknown fields are rejected so a config always means
//! what it says.

use relax_core::density::{ConstraintMode, Density, Domain, HFunction};
use relax_core::mat::{Mat, Mat32, Mat33, Vec3};
use relax_core::sampling;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Envelope,
    Membrane,
    Identity,
    Thinfilm,
    Interchange,
    Growth,
    Family,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Envelope => "envelope",
            ExperimentKind::Membrane => "membrane",
            ExperimentKind::Identity => "identity",
            ExperimentKind::Thinfilm => "thinfilm",
            ExperimentKind::Interchange => "interchange",
            ExperimentKind::Growth => "growth",
            ExperimentKind::Family => "family",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct HSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<(f64, f64)>>,
}

impl Default for HSpec {
    fn default() -> Self {
        HSpec {
            kind: "reciprocal_power".into(),
            alpha: Some(1.0),
            knots: None,
        }
    }
}

impl HSpec {
    pub fn build(&self) -> Result<HFunction, ConfigError> {
        match self.kind.as_str() {
            "reciprocal_power" => Ok(HFunction::ReciprocalPower {
                alpha: self.alpha.unwrap_or(1.0),
            }),
            "table" => {
                let knots = self
                    .knots
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("table h needs knots".into()))?;
                Ok(HFunction::Table(knots))
            }
            other => Err(ConfigError::Invalid(format!("unknown h kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct DensitySpec {
    /// det_barrier | membrane_barrier | convex_power
    pub kind: String,
    pub p: f64,
    #[serde(default)]
    pub h: HSpec,
    /// strict_positive | nonzero | abs_barrier | none (det_barrier only)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec {
            kind: "det_barrier".into(),
            p: 2.0,
            h: HSpec::default(),
            mode: Some("strict_positive".into()),
        }
    }
}

impl DensitySpec {
    pub fn build(&self) -> Result<Density, ConfigError> {
        if self.p <= 1.0 || self.p.is_nan() {
            return Err(ConfigError::Invalid("growth exponent p must be > 1".into()));
        }
        match self.kind.as_str() {
            "det_barrier" => {
                let mode = match self.mode.as_deref().unwrap_or("strict_positive") {
                    "strict_positive" => ConstraintMode::StrictPositive,
                    "nonzero" => ConstraintMode::Nonzero,
                    "abs_barrier" => ConstraintMode::AbsBarrier,
                    "none" => ConstraintMode::None,
                    other => {
                        return Err(ConfigError::Invalid(format!(
                            "unknown constraint mode '{other}'"
                        )))
                    }
                };
                Ok(relax_core::make_det_barrier(self.p, self.h.build()?, mode))
            }
            "membrane_barrier" => Ok(relax_core::make_membrane_barrier(self.p, self.h.build()?)),
            "convex_power" => {
                let domain = match self.mode.as_deref() {
                    Some("m32") => Domain::M32,
                    _ => Domain::M33,
                };
                Ok(relax_core::density::convex_power(domain, self.p))
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown density kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct SampleSpec {
    /// seeded | explicit
    #[serde(default = "default_sample_kind")]
    pub kind: String,
    /// m33 | m32
    #[serde(default = "default_shape")]
    pub shape: String,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Leading seeded samples forced rank-deficient.
    #[serde(default)]
    pub rank_deficient: usize,
    /// Replace the first sample by the zero matrix.
    #[serde(default)]
    pub include_zero: bool,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Row-major entries for explicit samples (9 per 3x3, 6 per 3x2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<f64>>>,
}

fn default_sample_kind() -> String {
    "seeded".into()
}
fn default_shape() -> String {
    "m32".into()
}
fn default_count() -> usize {
    10
}
fn default_scale() -> f64 {
    1.0
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            kind: default_sample_kind(),
            shape: default_shape(),
            count: default_count(),
            rank_deficient: 0,
            include_zero: false,
            scale: default_scale(),
            matrices: None,
        }
    }
}

impl SampleSpec {
    pub fn is_planar(&self) -> bool {
        self.shape == "m32"
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<Mat>, ConfigError> {
        match self.kind.as_str() {
            "explicit" => {
                let mats = self
                    .matrices
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("explicit samples need matrices".into()))?;
                mats.iter().map(|row| self.parse_matrix(row)).collect()
            }
            "seeded" => {
                let out: Vec<Mat> = (0..self.count)
                    .map(|i| {
                        let mut rng = sampling::rng_for(seed, i as u64);
                        if self.include_zero && i == 0 {
                            return if self.is_planar() {
                                Mat::M32(Mat32::ZERO)
                            } else {
                                Mat::M33(Mat33::ZERO)
                            };
                        }
                        let offset = usize::from(self.include_zero);
                        let deficient = i >= offset && i < self.rank_deficient + offset;
                        if self.is_planar() {
                            let xi = if deficient {
                                sampling::rank_deficient_mat32(&mut rng)
                            } else {
                                sampling::gaussian_mat32(&mut rng)
                            };
                            Mat::M32(xi.scale(self.scale))
                        } else {
                            let f = if deficient {
                                let g = sampling::gaussian_mat32(&mut rng);
                                Mat33::from_cols(g.cols[0], g.cols[1], Vec3::ZERO)
                            } else {
                                sampling::gaussian_mat33(&mut rng)
                            };
                            Mat::M33(f.scale(self.scale))
                        }
                    })
                    .collect();
                Ok(out)
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown sample kind '{other}'"
            ))),
        }
    }

    fn parse_matrix(&self, row: &[f64]) -> Result<Mat, ConfigError> {
        if self.is_planar() {
            if row.len() != 6 {
                return Err(ConfigError::Invalid("3x2 samples need 6 entries".into()));
            }
            Ok(Mat::M32(Mat32::from_cols(
                Vec3([row[0], row[2], row[4]]),
                Vec3([row[1], row[3], row[5]]),
            )))
        } else {
            if row.len() != 9 {
                return Err(ConfigError::Invalid("3x3 samples need 9 entries".into()));
            }
            Ok(Mat::M33(Mat33::from_rows([
                [row[0], row[1], row[2]],
                [row[3], row[4], row[5]],
                [row[6], row[7], row[8]],
            ])))
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    /// Kohn-Strang depth appended to the estimator columns (0 = none).
    #[serde(default)]
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneSection {
    #[serde(default = "default_zeta")]
    pub zeta_budget: usize,
}

fn default_zeta() -> usize {
    2000
}

impl Default for MembraneSection {
    fn default() -> Self {
        MembraneSection {
            zeta_budget: default_zeta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    #[serde(default = "d_outer_b")]
    pub outer_b: usize,
    #[serde(default = "d_zeta_b")]
    pub zeta_b: usize,
    #[serde(default = "d_outer_a")]
    pub outer_a: usize,
    #[serde(default = "d_zeta_a")]
    pub zeta_a: usize,
    #[serde(default = "d_inner_a")]
    pub inner_a: usize,
    #[serde(default = "d_max_gap")]
    pub max_gap: f64,
}

fn d_outer_b() -> usize {
    5000
}
fn d_zeta_b() -> usize {
    2000
}
fn d_outer_a() -> usize {
    1200
}
fn d_zeta_a() -> usize {
    400
}
fn d_inner_a() -> usize {
    300
}
fn d_max_gap() -> f64 {
    0.05
}

impl Default for IdentitySection {
    fn default() -> Self {
        IdentitySection {
            outer_b: d_outer_b(),
            zeta_b: d_zeta_b(),
            outer_a: d_outer_a(),
            zeta_a: d_zeta_a(),
            inner_a: d_inner_a(),
            max_gap: d_max_gap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinfilmSection {
    #[serde(default = "d_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "d_j")]
    pub j: f64,
    #[serde(default = "d_blend")]
    pub blend: usize,
    #[serde(default = "d_grid_tf")]
    pub grid: usize,
    #[serde(default = "d_quad")]
    pub quad: usize,
    #[serde(default = "d_director_budget")]
    pub director_budget: usize,
}

fn d_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn d_j() -> f64 {
    2.0
}
fn d_blend() -> usize {
    8
}
fn d_grid_tf() -> usize {
    24
}
fn d_quad() -> usize {
    4
}
fn d_director_budget() -> usize {
    700
}

impl Default for ThinfilmSection {
    fn default() -> Self {
        ThinfilmSection {
            eps: d_eps(),
            j: d_j(),
            blend: d_blend(),
            grid: d_grid_tf(),
            quad: d_quad(),
            director_budget: d_director_budget(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterchangeSection {
    #[serde(default = "d_grid_ic")]
    pub grid: usize,
    #[serde(default = "d_blends")]
    pub blends: Vec<usize>,
    #[serde(default = "d_j")]
    pub j: f64,
    /// gamma | lambda
    #[serde(default = "d_kind")]
    pub kind: String,
    #[serde(default = "d_search")]
    pub search_budget: usize,
}

fn d_grid_ic() -> usize {
    64
}
fn d_blends() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn d_kind() -> String {
    "lambda".into()
}
fn d_search() -> usize {
    500
}

impl Default for InterchangeSection {
    fn default() -> Self {
        InterchangeSection {
            grid: d_grid_ic(),
            blends: d_blends(),
            j: d_j(),
            kind: d_kind(),
            search_budget: d_search(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSection {
    /// Threshold constants of the growth bound.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
}

fn d_alpha() -> f64 {
    1.0
}
fn d_beta() -> f64 {
    1.0
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection {
            alpha: d_alpha(),
            beta: d_beta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    #[serde(default = "d_family_n")]
    pub n_values: Vec<u32>,
    /// The sup over n must exceed this cap wherever det <= 0.
    #[serde(default = "d_family_cap")]
    pub cap: f64,
}

fn d_family_n() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32, 64]
}
fn d_family_cap() -> f64 {
    50.0
}

impl Default for FamilySection {
    fn default() -> Self {
        FamilySection {
            n_values: d_family_n(),
            cap: d_family_cap(),
        }
    }
}

/// The whole experiment description. Reproducibility is the product: the
/// seed is explicit and a run embeds the normalized config in its report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub envelope: EnvelopeSection,
    #[serde(default)]
    pub membrane: MembraneSection,
    #[serde(default)]
    pub identity: IdentitySection,
    #[serde(default)]
    pub thinfilm: ThinfilmSection,
    #[serde(default)]
    pub interchange: InterchangeSection,
    #[serde(default)]
    pub growth: GrowthSection,
    #[serde(default)]
    pub family: FamilySection,
}

fn default_budget() -> usize {
    5000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seed: 0,
            budget: default_budget(),
            density: DensitySpec::default(),
            samples: SampleSpec::default(),
            envelope: EnvelopeSection::default(),
            membrane: MembraneSection::default(),
            identity: IdentitySection::default(),
            thinfilm: ThinfilmSection::default(),
            interchange: InterchangeSection::default(),
            growth: GrowthSection::default(),
            family: FamilySection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Sensible defaults per experiment, used when no config file is given.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            experiment: Some(kind),
            ..ExperimentConfig::default()
        };
        match kind {
            ExperimentKind::Envelope => {
                cfg.samples.shape = "m33".into();
                cfg.samples.count = 5;
            }
            ExperimentKind::Growth => {
                cfg.density = DensitySpec {
                    kind: "membrane_barrier".into(),
                    p: 4.0,
                    h: HSpec::default(),
                    mode: None,
                };
                cfg.samples.count = 100;
                cfg.samples.rank_deficient = 10;
                cfg.samples.include_zero = true;
            }
            ExperimentKind::Family => {
                cfg.samples.shape = "m33".into();
                cfg.samples.count = 50;
            }
            ExperimentKind::Membrane | ExperimentKind::Identity => {
                cfg.samples.count = 5;
            }
            ExperimentKind::Thinfilm | ExperimentKind::Interchange => {
                cfg.samples = SampleSpec {
                    kind: "explicit".into(),
                    shape: "m32".into(),
                    count: 2,
                    matrices: Some(vec![
                        vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                        vec![1.2, 0.0, 0.0, 0.8, 0.0, 0.0],
                    ]),
                    ..SampleSpec::default()
                };
            }
        }
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Normalized TOML echo of the effective config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
