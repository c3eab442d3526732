//! CSV formats for fleet, emission factors, inventories, monitor samples,
//! field measurements, capacity and calibration reports.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use roadcap_core::calibration::{CalibrationReport, FieldMeasurement};
use roadcap_core::capacity::{CapacityOutcome, CapacityReport};
use roadcap_core::dispersion::{MonitorSample, TrajectoryPoint};
use roadcap_core::fleet::{EmissionFactorTable, EmissionInventory, FleetSpec, Fuel, VehicleClass};
use roadcap_core::rans::Residuals;
use roadcap_core::units::ConcentrationUnit;
use roadcap_core::PollutantId;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

pub const BUNDLED_FLEET: &str = include_str!("../../../data/fleet.csv");
pub const BUNDLED_EF: &str = include_str!("../../../data/ef.csv");
pub const BUNDLED_FIELD: &str = include_str!("../../../data/table2_field.csv");
pub const BUNDLED_SIM: &str = include_str!("../../../data/table2_sim.csv");

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn parse_pollutant(s: &str, line: u64) -> Result<PollutantId> {
    PollutantId::from_str(s).map_err(|e| RunError::Validation(format!("line {line}: {e}")))
}

fn parse_unit(s: &str, line: u64) -> Result<ConcentrationUnit> {
    if s.trim().is_empty() {
        return Err(RunError::Validation(format!("line {line}: missing unit tag")));
    }
    ConcentrationUnit::from_str(s).map_err(|e| RunError::Validation(format!("line {line}: {e}")))
}

fn rows<R: Read, T: for<'de> Deserialize<'de>>(r: R, source: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let row: T = rec.map_err(|e| RunError::csv(source, e))?;
        out.push((out.len() as u64 + 2, row));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct FleetRow {
    class: String,
    fuel: String,
    stock: f64,
    annual_mileage_km: f64,
    type_ratio: f64,
    pce: f64,
}

pub fn read_fleet<R: Read>(r: R, source: &Path) -> Result<FleetSpec> {
    let mut classes = Vec::new();
    for (line, row) in rows::<_, FleetRow>(r, source)? {
        let fuel = Fuel::from_str(&row.fuel).map_err(|e| RunError::Validation(format!("line {line}: {e}")))?;
        classes.push(VehicleClass {
            name: row.class,
            fuel,
            stock: row.stock,
            annual_mileage_km: row.annual_mileage_km,
            type_ratio: row.type_ratio,
            pce: row.pce,
        });
    }
    FleetSpec::new(classes).map_err(|e| RunError::Validation(format!("{}: {e}", source.display())))
}

pub fn write_fleet<W: Write>(w: W, fleet: &FleetSpec) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in &fleet.classes {
        wtr.serialize(FleetRow {
            class: c.name.clone(),
            fuel: c.fuel.label().into(),
            stock: c.stock,
            annual_mileage_km: c.annual_mileage_km,
            type_ratio: c.type_ratio,
            pce: c.pce,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct EfRow {
    class: String,
    pollutant: String,
    ef_g_per_km: f64,
}

pub fn read_emission_factors<R: Read>(r: R, source: &Path) -> Result<EmissionFactorTable> {
    let mut table = EmissionFactorTable::new();
    for (line, row) in rows::<_, EfRow>(r, source)? {
        let p = parse_pollutant(&row.pollutant, line)?;
        table
            .insert(&row.class, p, row.ef_g_per_km)
            .map_err(|e| RunError::Validation(format!("{} line {line}: {e}", source.display())))?;
    }
    Ok(table)
}

#[derive(Debug, Serialize)]
struct InventoryRow<'a> {
    class: &'a str,
    pollutant: &'a str,
    kg_per_year: f64,
}

/// Per-class rows followed by one `total` row per pollutant.
pub fn write_inventory<W: Write>(w: W, inv: &EmissionInventory) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in &inv.per_class {
        for (p, &kg) in c.kg_per_year.iter() {
            wtr.serialize(InventoryRow { class: &c.class, pollutant: p.label(), kg_per_year: kg })?;
        }
    }
    for (p, &kg) in inv.totals.iter() {
        wtr.serialize(InventoryRow { class: "total", pollutant: p.label(), kg_per_year: kg })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MonitorRow {
    pollutant: String,
    distance_m: f64,
    height_m: f64,
    raw_kg_m3: f64,
    background_kg_m3: f64,
    adjusted_kg_m3: f64,
}

pub fn write_monitors<W: Write>(w: W, samples: &[MonitorSample]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in samples {
        wtr.serialize(MonitorRow {
            pollutant: s.pollutant.label().into(),
            distance_m: s.distance_m,
            height_m: s.height_m,
            raw_kg_m3: s.raw,
            background_kg_m3: s.background,
            adjusted_kg_m3: s.adjusted,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_monitors<R: Read>(r: R, source: &Path) -> Result<Vec<MonitorSample>> {
    rows::<_, MonitorRow>(r, source)?
        .into_iter()
        .map(|(line, row)| {
            Ok(MonitorSample {
                pollutant: parse_pollutant(&row.pollutant, line)?,
                distance_m: row.distance_m,
                height_m: row.height_m,
                raw: row.raw_kg_m3,
                background: row.background_kg_m3,
                adjusted: row.adjusted_kg_m3,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct FieldRow {
    pollutant: String,
    distance_m: f64,
    field_value: f64,
    unit: String,
}

pub fn read_field<R: Read>(r: R, source: &Path) -> Result<Vec<FieldMeasurement>> {
    rows::<_, FieldRow>(r, source)?
        .into_iter()
        .map(|(line, row)| {
            Ok(FieldMeasurement {
                pollutant: parse_pollutant(&row.pollutant, line)?,
                distance_m: row.distance_m,
                value: row.field_value,
                unit: parse_unit(&row.unit, line)?,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct SimRow {
    pollutant: String,
    distance_m: f64,
    sim_value: f64,
    unit: String,
}

/// Tabulated simulated concentrations (`pollutant,distance_m,sim_value,unit`)
/// as raw monitor samples at `height_m` with no background.
pub fn read_sim_table<R: Read>(r: R, source: &Path, height_m: f64) -> Result<Vec<MonitorSample>> {
    rows::<_, SimRow>(r, source)?
        .into_iter()
        .map(|(line, row)| {
            let raw = parse_unit(&row.unit, line)?.to_internal(row.sim_value);
            Ok(MonitorSample {
                pollutant: parse_pollutant(&row.pollutant, line)?,
                distance_m: row.distance_m,
                height_m,
                raw,
                background: 0.0,
                adjusted: raw,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    particle_id: u64,
    step: usize,
    x: f64,
    y: f64,
    z: f64,
    t: f64,
}

pub fn write_trajectories<W: Write>(w: W, points: &[TrajectoryPoint]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        let [x, y, z] = p.position;
        wtr.serialize(TrajectoryRow { particle_id: p.particle_id, step: p.step, x, y, z, t: p.time })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_residuals<W: Write>(w: W, residuals: &[Residuals]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["iteration", "continuity", "u", "v", "w", "k", "epsilon"])?;
    for r in residuals {
        let mut rec = vec![r.iteration.to_string()];
        rec.extend([r.continuity, r.u, r.v, r.w, r.k, r.epsilon].iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Column order of the published capacity table.
pub const CAPACITY_COLUMNS: [PollutantId; 6] =
    [PollutantId::Pm25, PollutantId::Pm10, PollutantId::Co, PollutantId::Co2, PollutantId::No2, PollutantId::So2];

fn outcome_cell(outcome: CapacityOutcome, value: impl FnOnce() -> String) -> String {
    match outcome {
        CapacityOutcome::NotBinding => "not-binding".into(),
        CapacityOutcome::BackgroundExceeds => "background-exceeds".into(),
        CapacityOutcome::Finite(_) => value(),
    }
}

/// Vehicle classes by constraint, then the annual total and the standard
/// vehicle equivalents.
pub fn write_capacity_csv<W: Write>(w: W, report: &CapacityReport) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["vehicle_type".to_string(), "type_ratio".to_string()];
    header.extend(CAPACITY_COLUMNS.iter().map(|p| format!("{} constraint", p.label())));
    wtr.write_record(&header)?;
    for (i, name) in report.class_names.iter().enumerate() {
        let mut rec = vec![name.clone(), report.type_ratios[i].to_string()];
        for p in CAPACITY_COLUMNS {
            let e = &report.entries[p];
            rec.push(outcome_cell(e.outcome, || e.per_class[i].to_string()));
        }
        wtr.write_record(&rec)?;
    }
    let mut total = vec!["total".to_string(), String::new()];
    let mut equiv = vec!["standard_vehicle_equivalents".to_string(), String::new()];
    for p in CAPACITY_COLUMNS {
        let e = &report.entries[p];
        total.push(outcome_cell(e.outcome, || e.t_max.unwrap_or(0).to_string()));
        equiv.push(outcome_cell(e.outcome, || format!("{}", e.equivalents.round())));
    }
    wtr.write_record(&total)?;
    wtr.write_record(&equiv)?;
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CapacityJsonEntry<'a> {
    pollutant: &'static str,
    status: &'static str,
    t_max_exact: Option<f64>,
    vehicles_per_year: Option<u64>,
    per_class: Vec<(&'a str, u64)>,
    standard_vehicle_equivalents: Option<f64>,
    ceiling_kg_m3: f64,
    background_kg_m3: f64,
    unit_concentration_kg_m3_per_vehicle: f64,
}

#[derive(Debug, Serialize)]
struct CapacityJson<'a> {
    monitor_distance_m: f64,
    monitor_height_m: f64,
    binding: Option<&'static str>,
    constraints: Vec<CapacityJsonEntry<'a>>,
}

pub fn capacity_json(report: &CapacityReport) -> String {
    let constraints = CAPACITY_COLUMNS
        .iter()
        .map(|&p| {
            let e = &report.entries[p];
            let status = match e.outcome {
                CapacityOutcome::Finite(_) => "finite",
                CapacityOutcome::NotBinding => "not-binding",
                CapacityOutcome::BackgroundExceeds => "background-exceeds",
            };
            let binding = !matches!(e.outcome, CapacityOutcome::NotBinding);
            CapacityJsonEntry {
                pollutant: p.label(),
                status,
                t_max_exact: e.outcome.t_max(),
                vehicles_per_year: e.t_max,
                per_class: if binding {
                    report.class_names.iter().map(String::as_str).zip(e.per_class.iter().copied()).collect()
                } else {
                    Vec::new()
                },
                standard_vehicle_equivalents: binding.then_some(e.equivalents),
                ceiling_kg_m3: report.ceiling[p],
                background_kg_m3: report.background[p],
                unit_concentration_kg_m3_per_vehicle: report.unit_concentration[p],
            }
        })
        .collect();
    let doc = CapacityJson {
        monitor_distance_m: report.monitor_distance_m,
        monitor_height_m: report.monitor_height_m,
        binding: report.binding.map(PollutantId::label),
        constraints,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("capacity report serialises");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct CalibrationCsvRow {
    pollutant: &'static str,
    distance_m: f64,
    unit: &'static str,
    field_value: f64,
    sim_raw: f64,
    sim_adjusted: f64,
    abs_error: f64,
    rel_error: f64,
    degenerate: bool,
}

pub fn write_calibration_csv<W: Write>(w: W, report: &CalibrationReport) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in &report.rows {
        wtr.serialize(CalibrationCsvRow {
            pollutant: r.pollutant.label(),
            distance_m: r.distance_m,
            unit: r.unit.label(),
            field_value: r.field,
            sim_raw: r.sim_raw,
            sim_adjusted: r.sim_adjusted,
            abs_error: r.abs_error,
            rel_error: r.rel_error,
            degenerate: r.degenerate,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn calibration_table(report: &CalibrationReport) -> String {
    let mut s = format!(
        "{:<6} {:>8} {:>6} {:>14} {:>14} {:>14} {:>14} {:>10}\n",
        "pollut", "dist_m", "unit", "field", "sim_raw", "sim_adjusted", "abs_error", "rel_error"
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{:<6} {:>8} {:>6} {:>14.6} {:>14.6} {:>14.6} {:>14.6} {:>9.2}%{}\n",
            r.pollutant.label(),
            r.distance_m,
            r.unit.label(),
            r.field,
            r.sim_raw,
            r.sim_adjusted,
            r.abs_error,
            100.0 * r.rel_error,
            if r.degenerate { " (field ~ 0)" } else { "" }
        ));
    }
    s.push('\n');
    for (p, m) in report.per_pollutant_max.iter() {
        if let Some(m) = m {
            s.push_str(&format!("max relative error {:<6} {:>9.2}%\n", p.label(), 100.0 * m));
        }
    }
    s.push_str(&format!("overall max relative error {:.2}%\n", 100.0 * report.overall_max));
    s.push_str(&format!("within 10%: {}\n", if report.within_threshold { "yes" } else { "no" }));
    for e in &report.errors {
        s.push_str(&format!("unmatched {} at {} m: {}\n", e.pollutant.label(), e.distance_m, e.message));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_fleet_is_the_g30_fleet() {
        assert_eq!(read_fleet(BUNDLED_FLEET.as_bytes(), Path::new("fleet.csv")).unwrap(), FleetSpec::g30());
        let mut buf = Vec::new();
        write_fleet(&mut buf, &FleetSpec::g30()).unwrap();
        assert_eq!(read_fleet(&buf[..], Path::new("x")).unwrap(), FleetSpec::g30());
    }

    #[test]
    fn bundled_field_rows_carry_tags() {
        let f = read_field(BUNDLED_FIELD.as_bytes(), Path::new("field.csv")).unwrap();
        assert_eq!(f.len(), 36);
        assert!(f.iter().all(|m| m.unit == ConcentrationUnit::UgPerM3));
        let co2 = f.iter().find(|m| m.pollutant == PollutantId::Co2 && m.distance_m == 30.0).unwrap();
        assert_eq!(co2.value, 410.647);
    }

    #[test]
    fn field_row_without_unit_is_rejected() {
        let text = "pollutant,distance_m,field_value,unit\nCO,30,0.3,\n";
        let err = read_field(text.as_bytes(), Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("missing unit"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_number_is_a_validation_error() {
        let text = "class,pollutant,ef_g_per_km\nCoach,CO,abc\n";
        let err = read_emission_factors(text.as_bytes(), Path::new("ef.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    proptest! {
        #[test]
        fn monitor_csv_round_trips(raw in 0.0f64..1e-2, bg in 0.0f64..1e-3, d in 0.0f64..1e3) {
            let s = MonitorSample { pollutant: PollutantId::Pm25, distance_m: d, height_m: 2.0, raw, background: bg, adjusted: raw + bg };
            let mut buf = Vec::new();
            write_monitors(&mut buf, &[s]).unwrap();
            let back = read_monitors(&buf[..], Path::new("m.csv")).unwrap();
            prop_assert_eq!(back, vec![s]);
        }

        #[test]
        fn mg_tag_round_trips(v in 1e-6f64..1e6) {
            let u = ConcentrationUnit::MgPerM3;
            let back = u.from_internal(u.to_internal(v));
            prop_assert!((back - v).abs() <= 1e-15 * v);
        }
    }
}
