//! Stage orchestration: emissions, mesh, flow, dispersion, capacity and
//! calibration, each writing its artifacts and a manifest entry.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rayon::ThreadPool;
use roadcap_core::calibration::{calibrate, CalibrationReport, FieldMeasurement};
use roadcap_core::capacity::{assess_capacity, unit_concentration, CapacityReport};
use roadcap_core::dispersion::{add_background, sample_monitors, solve_scalar, MonitorSample, SpeciesField};
use roadcap_core::fleet::{
    compute_inventory, inventory_to_source, EmissionFactorTable, EmissionInventory, FleetSpec, SourceSpec,
};
use roadcap_core::mesh::{build_mesh, MeshQuality, StructuredMesh, BLOCKAGE_RATIO_LIMIT};
use roadcap_core::rans::{solve_flow, FlowState, TurbulenceConstants};
use roadcap_core::{Pollutant, PollutantId};
use serde::Serialize;

use crate::config::{RunConfig, BUNDLED, NONE};
use crate::error::{Result, RunError};
use crate::manifest::Manifest;
use crate::{io, parallel, vtk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Emit,
    Mesh,
    Solve,
    Disperse,
    Capacity,
    Calibrate,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Emit, Stage::Mesh, Stage::Solve, Stage::Disperse, Stage::Capacity, Stage::Calibrate];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Emit => "emit",
            Stage::Mesh => "mesh",
            Stage::Solve => "solve",
            Stage::Disperse => "disperse",
            Stage::Capacity => "capacity",
            Stage::Calibrate => "calibrate",
        }
    }
}

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";
pub const INVENTORY_FILE: &str = "inventory.csv";
pub const SOURCE_FILE: &str = "source.json";
pub const MESH_SUMMARY_FILE: &str = "mesh_summary.json";
pub const MESH_VTK_FILE: &str = "mesh.vtk";
pub const FLOW_VTK_FILE: &str = "flow.vtk";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const MONITORS_FILE: &str = "monitors.csv";
pub const DPM_MONITORS_FILE: &str = "dpm_monitors.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const CAPACITY_CSV_FILE: &str = "capacity.csv";
pub const CAPACITY_JSON_FILE: &str = "capacity.json";
pub const CALIBRATION_CSV_FILE: &str = "calibration.csv";
pub const CALIBRATION_TXT_FILE: &str = "calibration.txt";

pub fn species_file(p: PollutantId) -> String {
    format!("species_{}.vtk", p.label())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Last stage to run.
    pub until: Option<Stage>,
    /// Start from an existing monitor CSV instead of running the forward
    /// stages (capacity and calibration only).
    pub monitors_csv: Option<PathBuf>,
    /// Field measurements overriding the configured ones.
    pub field_csv: Option<PathBuf>,
}

#[derive(Debug, Default)]
pub struct PipelineOutput {
    pub fleet: Option<FleetSpec>,
    pub inventory: Option<EmissionInventory>,
    pub source: Option<SourceSpec>,
    pub mesh: Option<StructuredMesh>,
    pub flow: Option<FlowState>,
    pub fields: Vec<SpeciesField>,
    /// Monitor samples with background applied.
    pub samples: Vec<MonitorSample>,
    pub capacity: Option<CapacityReport>,
    pub calibration: Option<CalibrationReport>,
}

#[derive(Debug)]
pub struct PipelineRun {
    pub output: PipelineOutput,
    pub manifest: Manifest,
    pub stages_run: Vec<Stage>,
    pub result: Result<()>,
}

impl PipelineRun {
    pub fn exit_code(&self) -> u8 {
        self.result.as_ref().err().map_or(0, RunError::exit_code)
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    pool: ThreadPool,
    manifest: Manifest,
    out: PipelineOutput,
}

fn write_with<T>(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::result::Result<T, csv::Error>) -> Result<T> {
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    f(BufWriter::new(file)).map_err(|e| RunError::csv(path, e))
}

fn write_io(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    f(BufWriter::new(file)).map_err(|e| RunError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| RunError::io(path, e))
}

fn read_input<T>(
    cfg: &RunConfig,
    spec: &str,
    bundled: &str,
    parse: impl FnOnce(&[u8], &Path) -> Result<T>,
) -> Result<T> {
    if spec == BUNDLED {
        parse(bundled.as_bytes(), Path::new("<bundled>"))
    } else {
        let path = cfg.base_dir.join(spec);
        let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
        parse(&bytes, &path)
    }
}

#[derive(Serialize)]
struct MeshSummary<'a> {
    preset: &'a str,
    dims: [usize; 3],
    extent_m: [f64; 3],
    road_cells: usize,
    quality: &'a MeshQuality,
}

#[derive(Serialize)]
struct SourceSummary {
    pollutant: &'static str,
    rate_kg_s: f64,
}

fn record(m: &mut Manifest, dir: &Path, stage: Stage, artifact: &str, started: Instant, converged: bool) -> Result<()> {
    m.record(dir, stage.label(), artifact, started.elapsed().as_secs_f64(), converged)
}

impl<'a> Runner<'a> {
    fn fleet(&mut self) -> Result<FleetSpec> {
        if let Some(f) = &self.out.fleet {
            return Ok(f.clone());
        }
        let f = read_input(self.cfg, &self.cfg.inputs.fleet, io::BUNDLED_FLEET, |b, p| io::read_fleet(b, p))?;
        self.out.fleet = Some(f.clone());
        Ok(f)
    }

    fn emit(&mut self) -> Result<()> {
        let t0 = Instant::now();
        let fleet = self.fleet()?;
        let ef: EmissionFactorTable =
            read_input(self.cfg, &self.cfg.inputs.emission_factors, io::BUNDLED_EF, |b, p| {
                io::read_emission_factors(b, p)
            })?;
        let inv = compute_inventory(&fleet, &ef, &self.cfg.traffic_state())?;
        let t = &self.cfg.traffic;
        let source = inventory_to_source(&inv, t.modeled_road_length_m, t.section_length_m, self.cfg.mesh_spec().road)?;
        write_with(&self.dir.join(INVENTORY_FILE), |w| io::write_inventory(w, &inv))?;
        let rates: Vec<SourceSummary> =
            source.rate_kg_s.iter().map(|(p, &r)| SourceSummary { pollutant: p.label(), rate_kg_s: r }).collect();
        write_text(&self.dir.join(SOURCE_FILE), &(serde_json::to_string_pretty(&rates).expect("serialises") + "\n"))?;
        record(&mut self.manifest, self.dir, Stage::Emit, INVENTORY_FILE, t0, true)?;
        record(&mut self.manifest, self.dir, Stage::Emit, SOURCE_FILE, t0, true)?;
        for (p, r) in source.rate_kg_s.iter() {
            log::info!("source {p}: {r:e} kg/s");
        }
        self.out.inventory = Some(inv);
        self.out.source = Some(source);
        Ok(())
    }

    fn mesh(&mut self) -> Result<()> {
        let t0 = Instant::now();
        let mesh = build_mesh(&self.cfg.mesh_spec())?;
        let quality = mesh.quality();
        if quality.blockage_ratio > BLOCKAGE_RATIO_LIMIT {
            log::warn!("blockage ratio {} exceeds {BLOCKAGE_RATIO_LIMIT}", quality.blockage_ratio);
        }
        log::info!("mesh {}: {:?} = {} cells", self.cfg.mesh.preset.label(), mesh.dims(), mesh.len());
        let summary = MeshSummary {
            preset: self.cfg.mesh.preset.label(),
            dims: mesh.dims(),
            extent_m: mesh.extent(),
            road_cells: mesh.road_cells.len(),
            quality: &quality,
        };
        write_text(
            &self.dir.join(MESH_SUMMARY_FILE),
            &(serde_json::to_string_pretty(&summary).expect("serialises") + "\n"),
        )?;
        write_io(&self.dir.join(MESH_VTK_FILE), |w| vtk::write_mesh(w, &mesh))?;
        record(&mut self.manifest, self.dir, Stage::Mesh, MESH_SUMMARY_FILE, t0, true)?;
        record(&mut self.manifest, self.dir, Stage::Mesh, MESH_VTK_FILE, t0, true)?;
        self.out.mesh = Some(mesh);
        Ok(())
    }

    fn solve(&mut self) -> Result<()> {
        let t0 = Instant::now();
        let mesh = self.out.mesh.as_ref().expect("mesh stage ran");
        let tc = TurbulenceConstants::default();
        let bc = self.cfg.boundaries(&tc)?;
        let flow = solve_flow(mesh, &self.cfg.fluid(), &bc, &tc, &self.cfg.solver())?;
        let last = flow.final_residuals();
        log::info!(
            "flow {} after {} iterations, max scaled residual {:e}",
            if flow.converged { "converged" } else { "did not converge" },
            flow.iterations,
            last.max()
        );
        write_io(&self.dir.join(FLOW_VTK_FILE), |w| vtk::write_flow(w, mesh, &flow))?;
        write_with(&self.dir.join(RESIDUALS_FILE), |w| io::write_residuals(w, &flow.residuals))?;
        record(&mut self.manifest, self.dir, Stage::Solve, FLOW_VTK_FILE, t0, flow.converged)?;
        record(&mut self.manifest, self.dir, Stage::Solve, RESIDUALS_FILE, t0, flow.converged)?;
        let converged = flow.converged;
        let iterations = flow.iterations;
        self.out.flow = Some(flow);
        if !converged {
            return Err(RunError::NonConvergence(format!(
                "flow did not reach the residual tolerance {:e} in {iterations} iterations (last max {:e})",
                self.cfg.flow.tolerance,
                last.max()
            )));
        }
        Ok(())
    }

    fn disperse(&mut self) -> Result<()> {
        let t0 = Instant::now();
        let cfg = self.cfg;
        let mesh = self.out.mesh.as_ref().expect("mesh stage ran");
        let flow = self.out.flow.as_ref().expect("solve stage ran");
        let source = self.out.source.as_ref().expect("emit stage ran");
        let fluid = cfg.fluid();
        let fields: Vec<Result<SpeciesField>> = self.pool.install(|| {
            PollutantId::ALL
                .par_iter()
                .map(|&p| Ok(solve_scalar(flow, mesh, source, Pollutant::new(p), &fluid, &cfg.dispersion)?))
                .collect()
        });
        let fields: Vec<SpeciesField> = fields.into_iter().collect::<Result<_>>()?;
        let monitors = cfg.monitor_list();
        let mut raw = Vec::new();
        for f in &fields {
            for s in sample_monitors(f, mesh, &monitors) {
                raw.push(s?);
            }
        }
        let samples = add_background(&raw, &cfg.background_policy()?, &cfg.constraints()?)?;
        for f in &fields {
            let name = species_file(f.pollutant.id);
            write_io(&self.dir.join(&name), |w| {
                vtk::write_species(w, mesh, &[(f.pollutant.id.label().to_string(), &f.concentration)])
            })?;
            record(&mut self.manifest, self.dir, Stage::Disperse, &name, t0, f.converged)?;
        }
        write_with(&self.dir.join(MONITORS_FILE), |w| io::write_monitors(w, &samples))?;
        let all_converged = fields.iter().all(|f| f.converged);
        record(&mut self.manifest, self.dir, Stage::Disperse, MONITORS_FILE, t0, all_converged)?;
        if cfg.dpm.enabled {
            self.particles(&fields)?;
        }
        let failed: Vec<&str> = fields.iter().filter(|f| !f.converged).map(|f| f.pollutant.id.label()).collect();
        self.out.fields = fields;
        self.out.samples = samples;
        if !failed.is_empty() {
            return Err(RunError::NonConvergence(format!(
                "scalar transport did not converge for {}",
                failed.join(", ")
            )));
        }
        Ok(())
    }

    /// Lagrangian tracking of the particulates, sampled at the same monitors.
    fn particles(&mut self, fields: &[SpeciesField]) -> Result<()> {
        let t0 = Instant::now();
        let cfg = self.cfg;
        let mesh = self.out.mesh.as_ref().expect("mesh stage ran");
        let flow = self.out.flow.as_ref().expect("solve stage ran");
        let source = self.out.source.as_ref().expect("emit stage ran");
        let tc = TurbulenceConstants::default();
        let mut raw = Vec::new();
        let mut trajectories = Vec::new();
        for f in fields.iter().filter(|f| f.pollutant.id.is_particulate()) {
            let r = parallel::track_particles_parallel(
                &self.pool,
                flow,
                mesh,
                source,
                f.pollutant,
                &cfg.fluid(),
                &tc,
                &cfg.dpm_config(),
                cfg.deterministic,
            )?;
            log::info!(
                "{}: {} particles, {} escaped, {} still airborne",
                f.pollutant.id,
                r.particles,
                r.escaped,
                r.stuck
            );
            for s in sample_monitors(&r.field, mesh, &cfg.monitor_list()) {
                raw.push(s?);
            }
            trajectories.extend(r.trajectories);
        }
        let samples = add_background(&raw, &cfg.background_policy()?, &cfg.constraints()?)?;
        write_with(&self.dir.join(DPM_MONITORS_FILE), |w| io::write_monitors(w, &samples))?;
        record(&mut self.manifest, self.dir, Stage::Disperse, DPM_MONITORS_FILE, t0, true)?;
        if cfg.dpm.trajectories > 0 {
            write_with(&self.dir.join(TRAJECTORIES_FILE), |w| io::write_trajectories(w, &trajectories))?;
            record(&mut self.manifest, self.dir, Stage::Disperse, TRAJECTORIES_FILE, t0, true)?;
        }
        Ok(())
    }

    fn capacity(&mut self) -> Result<()> {
        let t0 = Instant::now();
        let cfg = self.cfg;
        let fleet = self.fleet()?;
        let monitor = (cfg.monitors.capacity_distance_m, cfg.monitors.height_m);
        let c_u = unit_concentration(&self.out.samples, &cfg.traffic_state(), monitor)?;
        let report = assess_capacity(&c_u, &cfg.constraints()?, &cfg.background_policy()?, &fleet, monitor)?;
        write_with(&self.dir.join(CAPACITY_CSV_FILE), |w| io::write_capacity_csv(w, &report))?;
        write_text(&self.dir.join(CAPACITY_JSON_FILE), &io::capacity_json(&report))?;
        record(&mut self.manifest, self.dir, Stage::Capacity, CAPACITY_CSV_FILE, t0, true)?;
        record(&mut self.manifest, self.dir, Stage::Capacity, CAPACITY_JSON_FILE, t0, true)?;
        match report.binding {
            Some(p) => log::info!("binding constraint {p}: {:?} vehicles/yr", report.entries[p].t_max),
            None => log::info!("no pollutant constrains traffic at the {} m monitor", monitor.0),
        }
        self.out.capacity = Some(report);
        Ok(())
    }

    fn field_measurements(&self, override_path: Option<&Path>) -> Result<Option<Vec<FieldMeasurement>>> {
        if let Some(path) = override_path {
            let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
            return io::read_field(&bytes[..], path).map(Some);
        }
        let spec = &self.cfg.inputs.field_measurements;
        if spec == NONE {
            return Ok(None);
        }
        read_input(self.cfg, spec, io::BUNDLED_FIELD, |b, p| io::read_field(b, p)).map(Some)
    }

    fn calibrate(&mut self, override_path: Option<&Path>) -> Result<()> {
        let t0 = Instant::now();
        let Some(field) = self.field_measurements(override_path)? else {
            log::info!("no field measurements configured; calibration skipped");
            return Ok(());
        };
        let report = calibrate(&self.out.samples, &field);
        write_with(&self.dir.join(CALIBRATION_CSV_FILE), |w| io::write_calibration_csv(w, &report))?;
        write_text(&self.dir.join(CALIBRATION_TXT_FILE), &io::calibration_table(&report))?;
        record(&mut self.manifest, self.dir, Stage::Calibrate, CALIBRATION_CSV_FILE, t0, true)?;
        record(&mut self.manifest, self.dir, Stage::Calibrate, CALIBRATION_TXT_FILE, t0, true)?;
        log::info!(
            "calibration: overall max relative error {:.1}%, {} unmatched rows",
            100.0 * report.overall_max,
            report.errors.len()
        );
        self.out.calibration = Some(report);
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage, opts: &RunOptions) -> Result<()> {
        log::info!("stage {}", stage.label());
        match stage {
            Stage::Emit => self.emit(),
            Stage::Mesh => self.mesh(),
            Stage::Solve => self.solve(),
            Stage::Disperse => self.disperse(),
            Stage::Capacity => self.capacity(),
            Stage::Calibrate => self.calibrate(opts.field_csv.as_deref()),
        }
    }
}

/// Runs the stages in order up to `opts.until` (all by default). A failing
/// stage stops the run; artifacts already written stay on disk and in the
/// manifest, which is written in every case.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path, opts: &RunOptions) -> PipelineRun {
    let mut run = PipelineRun {
        output: PipelineOutput::default(),
        manifest: Manifest::default(),
        stages_run: Vec::new(),
        result: Ok(()),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        run.result = Err(RunError::io(out_dir, e));
        return run;
    }
    let pool = match parallel::pool() {
        Ok(p) => p,
        Err(e) => {
            run.result = Err(e);
            return run;
        }
    };
    let mut r = Runner { cfg, dir: out_dir, pool, manifest: Manifest::default(), out: PipelineOutput::default() };
    let until = opts.until.unwrap_or(Stage::Calibrate);
    let mut result = (|| -> Result<()> {
        for note in cfg.notes() {
            log::warn!("{note}");
        }
        let t0 = Instant::now();
        write_text(&out_dir.join(EFFECTIVE_CONFIG_FILE), &cfg.effective_toml())?;
        r.manifest.record(out_dir, "config", EFFECTIVE_CONFIG_FILE, t0.elapsed().as_secs_f64(), true)?;
        let first = match &opts.monitors_csv {
            Some(path) => {
                if until < Stage::Capacity {
                    return Err(RunError::Validation(
                        "a monitor CSV can only feed the capacity and calibration stages".into(),
                    ));
                }
                let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
                r.out.samples = io::read_monitors(&bytes[..], path)?;
                Stage::Capacity
            }
            None => Stage::Emit,
        };
        for stage in Stage::ALL.into_iter().filter(|s| *s >= first && *s <= until) {
            run.stages_run.push(stage);
            r.run_stage(stage, opts).map_err(|e| e.in_stage(stage.label()))?;
        }
        Ok(())
    })();
    if let Err(e) = r.manifest.write(out_dir) {
        result = result.and(Err(e));
    }
    if let Err(e) = &result {
        log::error!("{e}");
    }
    run.output = r.out;
    run.manifest = r.manifest;
    run.result = result;
    run
}
