//! Run configuration: a single TOML file with one section per stage.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use roadcap_core::capacity::{
    BackgroundPolicy, ConstraintSet, TrafficState, DEFAULT_BACKGROUND_FRACTION, G30_AVERAGE_SPEED, G30_TRAFFIC_VOLUME,
};
use roadcap_core::dispersion::{
    DispersionConfig, DpmConfig, Monitor, DEFAULT_MONITOR_DISTANCES, DEFAULT_MONITOR_HEIGHT,
};
use roadcap_core::fleet::{G30_MODELED_ROAD_LENGTH, G30_SECTION_LENGTH};
use roadcap_core::mesh::{MeshPreset, MeshSpec, DEFAULT_CELL_BUDGET, PAPER_CELL_COUNT};
use roadcap_core::rans::{
    BoundarySet, FluidProperties, Relaxation, SolverConfig, TurbulenceConstants, TurbulenceModel, G30_REFERENCE_HEIGHT,
    G30_ROUGHNESS_LENGTH, G30_WIND_SPEED,
};
use roadcap_core::units::ConcentrationUnit;
use roadcap_core::{PerPollutant, PollutantId};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

/// Input file reference; `bundled` selects the copy shipped in the binary.
pub const BUNDLED: &str = "bundled";
/// Disables an optional input.
pub const NONE: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub fleet: String,
    pub emission_factors: String,
    pub field_measurements: String,
}

impl Default for Inputs {
    fn default() -> Self {
        Inputs { fleet: BUNDLED.into(), emission_factors: BUNDLED.into(), field_measurements: BUNDLED.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSection {
    pub volume_veh_per_year: f64,
    pub speed_kmh: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_veh_per_km: Option<f64>,
    pub section_length_m: f64,
    pub modeled_road_length_m: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            volume_veh_per_year: G30_TRAFFIC_VOLUME,
            speed_kmh: G30_AVERAGE_SPEED,
            density_veh_per_km: None,
            section_length_m: G30_SECTION_LENGTH,
            modeled_road_length_m: G30_MODELED_ROAD_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshSection {
    pub preset: MeshPreset,
    pub cell_budget: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { preset: MeshPreset::Coarse, cell_budget: DEFAULT_CELL_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowSection {
    pub density: f64,
    pub viscosity: f64,
    pub temperature_c: f64,
    pub gravity: [f64; 3],
    pub wind_speed: f64,
    pub reference_height: f64,
    pub roughness_length: f64,
    /// Power-law exponent of the inlet profile. Recorded only.
    pub surface_roughness_factor: f64,
    pub turbulence: TurbulenceModel,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub relaxation: Relaxation,
}

impl Default for FlowSection {
    fn default() -> Self {
        let f = FluidProperties::default();
        let s = SolverConfig::default();
        FlowSection {
            density: f.density,
            viscosity: f.viscosity,
            temperature_c: f.temperature_c,
            gravity: f.gravity,
            wind_speed: G30_WIND_SPEED,
            reference_height: G30_REFERENCE_HEIGHT,
            roughness_length: G30_ROUGHNESS_LENGTH,
            surface_roughness_factor: 0.2,
            turbulence: s.turbulence,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            relaxation: s.relaxation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpmSection {
    /// Also track particulates as Lagrangian particles.
    pub enabled: bool,
    pub particles: usize,
    pub max_steps: usize,
    pub step_factor: f64,
    pub update_interval: usize,
    pub random_walk: bool,
    pub gravity: bool,
    pub max_dt: f64,
    pub trajectories: usize,
}

impl Default for DpmSection {
    fn default() -> Self {
        let d = DpmConfig::default();
        DpmSection {
            enabled: false,
            particles: d.particles,
            max_steps: d.max_steps,
            step_factor: d.step_factor,
            update_interval: d.update_interval,
            random_walk: d.random_walk,
            gravity: d.gravity,
            max_dt: d.max_dt,
            trajectories: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorSection {
    pub distances_m: Vec<f64>,
    pub height_m: f64,
    /// Monitor whose concentrations constrain capacity.
    pub capacity_distance_m: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        MonitorSection {
            distances_m: DEFAULT_MONITOR_DISTANCES.to_vec(),
            height_m: DEFAULT_MONITOR_HEIGHT,
            capacity_distance_m: 600.0,
        }
    }
}

/// Concentration with its mandatory unit tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tagged {
    pub value: f64,
    pub unit: String,
}

impl Tagged {
    pub fn kg_per_m3(&self) -> Result<f64> {
        let unit = ConcentrationUnit::from_str(&self.unit)?;
        Ok(unit.to_internal(self.value))
    }
}

pub type TaggedSet = std::collections::BTreeMap<String, Tagged>;

fn default_limits() -> TaggedSet {
    ConstraintSet::DEFAULT_LIMITS
        .iter()
        .map(|&(p, v, u)| (p.label().to_string(), Tagged { value: v, unit: u.label().to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacitySection {
    pub background_fraction: f64,
    /// Explicit background per pollutant; replaces the fraction when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<TaggedSet>,
    pub limits: TaggedSet,
}

impl Default for CapacitySection {
    fn default() -> Self {
        CapacitySection { background_fraction: DEFAULT_BACKGROUND_FRACTION, background: None, limits: default_limits() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub dpm: DpmSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub capacity: CapacitySection,
    /// Directory relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn fill_pollutants(set: &TaggedSet, what: &str) -> Result<PerPollutant<f64>> {
    let mut out = PerPollutant::splat(f64::NAN);
    for (key, t) in set {
        let p = PollutantId::from_str(key)
            .map_err(|_| RunError::Validation(format!("{what}: unknown pollutant `{key}`")))?;
        out[p] = t.kg_per_m3().map_err(|e| RunError::Validation(format!("{what}.{key}: {e}")))?;
    }
    if let Some((p, _)) = out.iter().find(|(_, v)| v.is_nan()) {
        return Err(RunError::Validation(format!("{what}: no value for {p}")));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults for everything but the scenario name.
    pub fn new(scenario: impl Into<String>) -> Self {
        RunConfig {
            scenario: scenario.into(),
            deterministic: false,
            seed: 0,
            inputs: Inputs::default(),
            traffic: TrafficSection::default(),
            mesh: MeshSection::default(),
            flow: FlowSection::default(),
            dispersion: DispersionConfig::default(),
            dpm: DpmSection::default(),
            monitors: MonitorSection::default(),
            capacity: CapacitySection::default(),
            base_dir: PathBuf::from("."),
        }
    }

    /// Parses TOML text. Every unknown key is collected and reported together.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let parsed: std::result::Result<RunConfig, _> =
            serde_ignored::deserialize(de, |path| unknown.push(path.to_string()));
        let mut cfg = parsed.map_err(|e| RunError::Validation(format!("config: {}", e.message().trim())))?;
        if !unknown.is_empty() {
            return Err(RunError::Validation(format!("config: unknown keys: {}", unknown.join(", "))));
        }
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.trim().is_empty() {
            return Err(RunError::Validation("config: scenario must not be empty".into()));
        }
        for (name, path) in self.input_paths() {
            if !path.is_file() {
                return Err(RunError::Validation(format!("config: inputs.{name} `{}` does not exist", path.display())));
            }
        }
        self.traffic_state().validate()?;
        let t = &self.traffic;
        if !(t.section_length_m >= t.modeled_road_length_m) || !(t.modeled_road_length_m > 0.0) {
            return Err(RunError::Validation("config: section length must cover the modelled road length".into()));
        }
        self.fluid().validate()?;
        self.solver().validate()?;
        self.dispersion.validate()?;
        self.dpm_config().validate()?;
        if self.monitors.distances_m.is_empty() || self.monitors.distances_m.iter().any(|d| !(*d >= 0.0)) {
            return Err(RunError::Validation(
                "config: monitor distances must be a non-empty list of values >= 0".into(),
            ));
        }
        if !self.monitors.distances_m.contains(&self.monitors.capacity_distance_m) {
            return Err(RunError::Validation(format!(
                "config: capacity monitor {} m is not in the monitor list",
                self.monitors.capacity_distance_m
            )));
        }
        self.constraints()?;
        self.background_policy()?.background(&self.constraints()?)?;
        Ok(())
    }

    /// Named input files that come from disk rather than the bundle.
    pub fn input_paths(&self) -> Vec<(&'static str, PathBuf)> {
        let i = &self.inputs;
        [("fleet", &i.fleet), ("emission_factors", &i.emission_factors), ("field_measurements", &i.field_measurements)]
            .into_iter()
            .filter(|(_, v)| v.as_str() != BUNDLED && v.as_str() != NONE)
            .map(|(k, v)| (k, self.base_dir.join(v)))
            .collect()
    }

    pub fn traffic_state(&self) -> TrafficState {
        TrafficState {
            q: self.traffic.volume_veh_per_year,
            v: self.traffic.speed_kmh,
            k: self.traffic.density_veh_per_km,
        }
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let mut spec = self.mesh.preset.spec();
        spec.cell_budget = self.mesh.cell_budget;
        spec
    }

    pub fn fluid(&self) -> FluidProperties {
        let f = &self.flow;
        FluidProperties {
            density: f.density,
            viscosity: f.viscosity,
            gravity: f.gravity,
            temperature_c: f.temperature_c,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        let f = &self.flow;
        SolverConfig {
            relaxation: f.relaxation,
            tolerance: f.tolerance,
            max_iterations: f.max_iterations,
            turbulence: f.turbulence,
            deterministic_reductions: self.deterministic,
            ..SolverConfig::default()
        }
    }

    pub fn boundaries(&self, tc: &TurbulenceConstants) -> Result<BoundarySet> {
        let f = &self.flow;
        Ok(BoundarySet::atmospheric(f.wind_speed, f.reference_height, f.roughness_length, tc)?)
    }

    pub fn dpm_config(&self) -> DpmConfig {
        let d = &self.dpm;
        DpmConfig {
            max_steps: d.max_steps,
            step_factor: d.step_factor,
            update_interval: d.update_interval,
            particles: d.particles,
            particle_density: self.dispersion.particle_density,
            random_walk: d.random_walk,
            gravity: d.gravity,
            seed: self.seed,
            max_dt: d.max_dt,
            schmidt_turbulent: self.dispersion.schmidt_turbulent,
            record_trajectories: d.trajectories,
        }
    }

    pub fn monitor_list(&self) -> Vec<Monitor> {
        self.monitors.distances_m.iter().map(|&d| Monitor { distance_m: d, height_m: self.monitors.height_m }).collect()
    }

    pub fn constraints(&self) -> Result<ConstraintSet> {
        Ok(ConstraintSet::new(fill_pollutants(&self.capacity.limits, "capacity.limits")?)?)
    }

    pub fn background_policy(&self) -> Result<BackgroundPolicy> {
        match &self.capacity.background {
            Some(set) => Ok(BackgroundPolicy::Explicit(fill_pollutants(set, "capacity.background")?)),
            None => Ok(BackgroundPolicy::FractionOfLimit(self.capacity.background_fraction)),
        }
    }

    /// Remarks about the run that do not stop it.
    pub fn notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.mesh.preset == MeshPreset::Paper {
            notes.push(format!(
                "mesh preset `paper` targets {PAPER_CELL_COUNT} cells and is excluded from CI; expect hours of run time"
            ));
        }
        notes
    }

    /// The configuration with defaults applied, as TOML. Values that come
    /// from the published study carry a `# paper:` comment.
    pub fn effective_toml(&self) -> String {
        let body = toml::to_string(self).expect("config serialises");
        let mut out = String::from("# Effective configuration (defaults applied)\n");
        for n in self.notes() {
            out.push_str(&format!("# note: {n}\n"));
        }
        let mut section = String::new();
        for line in body.lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') {
                section = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
            }
            match trimmed.split_once(" = ").and_then(|(k, _)| citation(&section, k)) {
                Some(c) => out.push_str(&format!("{line}  # paper: {c}\n")),
                None => {
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn citation(section: &str, key: &str) -> Option<&'static str> {
    Some(match (section, key) {
        ("inputs", "fleet") => "six-class fleet stock, mileage and composition of the study section",
        ("inputs", "field_measurements") => "roadside field measurements at 30-600 m",
        ("traffic", "volume_veh_per_year") => "current annual traffic volume 2661896 vehicles",
        ("traffic", "speed_kmh") => "average speed 90 km/h",
        ("traffic", "section_length_m") => "118 km expressway section",
        ("traffic", "modeled_road_length_m") => "300 m of road inside the simulated domain",
        ("mesh", "preset") => "0.5 m / 5 m spacing with 1.2 growth, 1778130 cells (preset `paper`)",
        ("flow", "density") => "air density 1.225 kg/m3",
        ("flow", "viscosity") => "air viscosity 1.7894e-5 Pa s",
        ("flow", "temperature_c") => "ambient temperature 32 C",
        ("flow", "gravity") => "gravity 9.8 m/s2 downward",
        ("flow", "wind_speed") => "inlet wind speed 3.4 m/s",
        ("flow", "surface_roughness_factor") => "surface roughness factor 0.2 (recorded; the log-law inlet is used)",
        ("flow", "turbulence") => "standard k-epsilon closure",
        ("flow", "tolerance") => "all scaled residuals below 1e-5",
        ("dispersion", "schmidt_turbulent") => "turbulent Schmidt number 0.7",
        ("dispersion", "particle_density") => "particle density 1000 kg/m3",
        ("dpm", "max_steps") => "50000 tracking steps",
        ("dpm", "step_factor") => "step length factor 5",
        ("dpm", "update_interval") => "source update every 10 iterations",
        ("dpm", "random_walk") => "discrete random walk on",
        ("monitors", "distances_m") => "monitors at 30, 100, 200, 300, 400, 600 m",
        ("monitors", "height_m") => "sampling height 2 m",
        ("monitors", "capacity_distance_m") => "capacity checked at the 600 m point",
        ("capacity", "background_fraction") => "background is 70% of the primary standard",
        (s, "value") if s.starts_with("capacity.limits.") => "24-hour limit of the Class I ambient air standard",
        _ => return None,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_toml(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_every_default() {
        let cfg = parse("scenario = \"g30\"").unwrap();
        assert_eq!(cfg, RunConfig { base_dir: PathBuf::from("."), ..RunConfig::new("g30") });
        let dump = cfg.effective_toml();
        assert!(dump.contains("volume_veh_per_year = 2661896.0  # paper:"), "{dump}");
        assert!(dump.contains("wind_speed = 3.4  # paper:"));
        assert!(dump.contains("[capacity.limits.SO2]"));
        let back = parse(&dump).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn misspelled_keys_are_named() {
        let err = parse("scenario = \"g30\"\n[flow]\nwind_sped = 3.0\n[mesh]\npresett = \"coarse\"").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("flow.wind_sped") && msg.contains("mesh.presett"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn paper_preset_is_noted() {
        let cfg = parse("scenario = \"g30\"\n[mesh]\npreset = \"paper\"").unwrap();
        assert!(cfg.notes()[0].contains("1778130"));
        assert!(cfg.effective_toml().contains("excluded from CI"));
    }

    #[test]
    fn concentration_without_unit_is_rejected() {
        let text = "scenario = \"g30\"\n[capacity.limits]\nCO = { value = 4.0 }";
        assert!(parse(text).unwrap_err().to_string().contains("unit"));
        let text = "scenario = \"g30\"\n[capacity.limits]\nCO = { value = 4.0, unit = \"ppm\" }";
        assert!(parse(text).is_err());
    }

    #[test]
    fn partial_limit_set_is_rejected() {
        let text = "scenario = \"g30\"\n[capacity.limits]\nCO = { value = 4.0, unit = \"mg/m3\" }";
        assert!(parse(text).unwrap_err().to_string().contains("no value"));
    }

    #[test]
    fn missing_input_file_is_rejected() {
        let text = "scenario = \"g30\"\n[inputs]\nfleet = \"no/such/fleet.csv\"";
        assert!(parse(text).unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn explicit_background_needs_tags() {
        let mut text = String::from("scenario = \"g30\"\n[capacity.background]\n");
        for p in PollutantId::ALL {
            text.push_str(&format!("\"{}\" = {{ value = 1.0, unit = \"ug/m3\" }}\n", p.label()));
        }
        let cfg = parse(&text).unwrap();
        let b = cfg.background_policy().unwrap().background(&cfg.constraints().unwrap()).unwrap();
        assert!(b.0.iter().all(|&v| (v - 1e-9).abs() < 1e-24));
    }
}
