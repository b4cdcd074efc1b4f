//! Run configuration: TOML with unit-suffixed keys, hard errors on unknown
//! keys, and an explicit record of every applied default (nothing is
//! defaulted silently — the runner writes the list into the manifest).

use crate::charge::{ChargeSystem, DielectricParams, PointCharge};
use crate::coupled::{ContinuationSchedule, ContinuationStage, FixedPointConfig};
use crate::elasticity::ElasticParams;
use crate::error::{Error, Result};
use crate::force::StatePipelineConfig;
use crate::pbe::{PbeConfig, PbeMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Born,
    TwoSpheres,
    IonicShift,
    FullCoupled,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub radius_a: Option<f64>,
    /// Center-to-center distance of the two spheres.
    pub separation_a: Option<f64>,
    pub box_half_width_a: Option<f64>,
    pub h_a: Option<f64>,
    /// Half-angle (radians) of the pinned cap on the flexible sphere.
    pub cap_angle_rad: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DielectricSection {
    pub eps_m: f64,
    pub eps_s: f64,
    pub kappa_per_a: Option<f64>,
    pub kappa0_per_a: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeEntry {
    pub x_a: f64,
    pub y_a: f64,
    pub z_a: f64,
    pub q_e: f64,
    pub radius_a: f64,
}

impl ChargeEntry {
    fn to_charge(&self) -> PointCharge {
        PointCharge {
            position: [self.x_a, self.y_a, self.z_a],
            magnitude: self.q_e,
            radius: self.radius_a,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChargesSection {
    /// PQR file with the flexible molecule's charges.
    pub pqr_path: Option<PathBuf>,
    #[serde(default)]
    pub flexible: Vec<ChargeEntry>,
    #[serde(default)]
    pub rigid: Vec<ChargeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ElasticSection {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub newton_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    pub omega: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub bound_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PbeSection {
    pub tol: Option<f64>,
    pub max_newton: Option<usize>,
    #[serde(default)]
    pub linearized: Option<bool>,
    pub delta_target: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub scales: Vec<f64>,
}

/// On-disk configuration shape. Optional fields are filled by `resolve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: ScenarioKind,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry: GeometrySection,
    pub dielectric: DielectricSection,
    #[serde(default)]
    pub charges: ChargesSection,
    #[serde(default)]
    pub elastic: ElasticSection,
    #[serde(default)]
    pub fixed_point: FixedPointSection,
    #[serde(default)]
    pub pbe: PbeSection,
    pub continuation: Option<ContinuationSection>,
}

/// Fully validated runtime configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub radius: f64,
    pub separation: f64,
    pub box_half_width: f64,
    pub h: f64,
    pub cap_angle: f64,
    pub diel: DielectricParams,
    pub charges: ChargeSystem,
    pub elastic: ElasticParams,
    pub elastic_tol: f64,
    pub fixed_point: FixedPointConfig,
    pub pipeline: StatePipelineConfig,
    pub continuation: Option<ContinuationSchedule>,
    /// Every `key = value` this resolution defaulted; written to the
    /// manifest so no default is silent.
    pub applied_defaults: Vec<String>,
}

fn take<T: Copy + std::fmt::Display>(
    opt: Option<T>,
    key: &str,
    default: T,
    log: &mut Vec<String>,
) -> T {
    match opt {
        Some(v) => v,
        None => {
            log.push(format!("{key} = {default}"));
            default
        }
    }
}

impl RawConfig {
    pub fn resolve(&self, config_dir: &Path) -> Result<ScenarioConfig> {
        let mut log = Vec::new();
        let radius = take(self.geometry.radius_a, "geometry.radius_a", 1.0, &mut log);
        let separation = take(
            self.geometry.separation_a,
            "geometry.separation_a",
            3.5 * radius,
            &mut log,
        );
        let box_half_width = take(
            self.geometry.box_half_width_a,
            "geometry.box_half_width_a",
            4.0 * radius,
            &mut log,
        );
        let h = take(self.geometry.h_a, "geometry.h_a", radius / 4.0, &mut log);
        let cap_angle = take(
            self.geometry.cap_angle_rad,
            "geometry.cap_angle_rad",
            0.7,
            &mut log,
        );
        if radius <= 0.0 || h <= 0.0 || separation <= 0.0 || box_half_width <= 0.0 {
            return Err(Error::Config(
                "geometry values must be positive (radius_a, separation_a, box_half_width_a, h_a)"
                    .into(),
            ));
        }

        let diel = DielectricParams {
            eps_m: self.dielectric.eps_m,
            eps_s: self.dielectric.eps_s,
            kappa: take(
                self.dielectric.kappa_per_a,
                "dielectric.kappa_per_a",
                0.0,
                &mut log,
            ),
            kappa0: take(
                self.dielectric.kappa0_per_a,
                "dielectric.kappa0_per_a",
                0.0,
                &mut log,
            ),
        };
        diel.validate()?;

        let mut charges = ChargeSystem::default();
        if let Some(pqr) = &self.charges.pqr_path {
            let full = if pqr.is_absolute() {
                pqr.clone()
            } else {
                config_dir.join(pqr)
            };
            if !full.exists() {
                return Err(Error::Config(format!(
                    "charges.pqr_path does not exist: {}",
                    full.display()
                )));
            }
            charges = crate::charge::read_pqr(&full)?;
        }
        charges
            .flexible
            .extend(self.charges.flexible.iter().map(ChargeEntry::to_charge));
        charges
            .rigid
            .extend(self.charges.rigid.iter().map(ChargeEntry::to_charge));
        if charges.flexible.is_empty() {
            // default unit charge at the flexible sphere's center
            let cx = match self.kind {
                ScenarioKind::Born | ScenarioKind::IonicShift => 0.0,
                ScenarioKind::TwoSpheres | ScenarioKind::FullCoupled => -0.5 * separation,
            };
            log.push(format!(
                "charges.flexible = [{{ x_a = {cx}, y_a = 0, z_a = 0, q_e = 1, radius_a = {} }}] \
                 (sphere center)",
                0.3 * radius
            ));
            charges.flexible.push(PointCharge {
                position: [cx, 0.0, 0.0],
                magnitude: 1.0,
                radius: 0.3 * radius,
            });
        }
        charges.validate()?;

        let elastic = ElasticParams {
            lambda: take(self.elastic.lambda, "elastic.lambda", 20.0, &mut log),
            mu: take(self.elastic.mu, "elastic.mu", 20.0, &mut log),
        };
        elastic.validate()?;
        let elastic_tol = take(self.elastic.newton_tol, "elastic.newton_tol", 1e-10, &mut log);

        let fp_default = FixedPointConfig::default();
        let fixed_point = FixedPointConfig {
            omega: take(self.fixed_point.omega, "fixed_point.omega", fp_default.omega, &mut log),
            tol: take(self.fixed_point.tol, "fixed_point.tol", fp_default.tol, &mut log),
            max_iter: take(
                self.fixed_point.max_iter,
                "fixed_point.max_iter",
                fp_default.max_iter,
                &mut log,
            ),
            bound_m: take(
                self.fixed_point.bound_m,
                "fixed_point.bound_m",
                fp_default.bound_m,
                &mut log,
            ),
        };
        fixed_point.validate()?;

        let pbe_default = PbeConfig::default();
        let pbe = PbeConfig {
            tol: take(self.pbe.tol, "pbe.tol", pbe_default.tol, &mut log),
            max_newton: take(
                self.pbe.max_newton,
                "pbe.max_newton",
                pbe_default.max_newton,
                &mut log,
            ),
            ..pbe_default
        };
        pbe.validate()?;
        let linearized = take(self.pbe.linearized, "pbe.linearized", false, &mut log);
        let pipeline = StatePipelineConfig {
            delta_target: take(
                self.pbe.delta_target,
                "pbe.delta_target",
                crate::force::DELTA_TARGET,
                &mut log,
            ),
            pbe,
            mode: if linearized {
                PbeMode::Linearized
            } else {
                PbeMode::Nonlinear
            },
        };
        if pipeline.delta_target <= 0.0 {
            return Err(Error::Config("pbe.delta_target must be positive".into()));
        }

        let continuation = match &self.continuation {
            Some(c) => {
                let schedule = ContinuationSchedule {
                    stages: c
                        .scales
                        .iter()
                        .map(|&scale| ContinuationStage {
                            scale,
                            cfg: fixed_point,
                        })
                        .collect(),
                };
                schedule.validate()?;
                Some(schedule)
            }
            None => None,
        };

        let seed = take(self.seed, "seed", 0, &mut log);
        Ok(ScenarioConfig {
            kind: self.kind,
            output_dir: self.output_dir.clone(),
            seed,
            radius,
            separation,
            box_half_width,
            h,
            cap_angle,
            diel,
            charges,
            elastic,
            elastic_tol,
            fixed_point,
            pipeline,
            continuation,
            applied_defaults: log,
        })
    }
}

/// Parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<(RawConfig, ScenarioConfig)> {
    let text = std::fs::read_to_string(path)?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let resolved = raw.resolve(dir)?;
    Ok((raw, resolved))
}

/// Canonical serialization (for round-trip checks and the manifest).
pub fn serialize_config(raw: &RawConfig) -> Result<String> {
    toml::to_string_pretty(raw).map_err(|e| Error::Config(format!("serialize: {e}")))
}
