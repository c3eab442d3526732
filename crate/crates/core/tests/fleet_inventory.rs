use roadcap_core::capacity::TrafficState;
use roadcap_core::fleet::*;
use roadcap_core::mesh::RoadStrip;
use roadcap_core::PollutantId;

const EF_CSV: &str = include_str!("../../../data/ef.csv");

fn ef_table() -> EmissionFactorTable {
    let mut t = EmissionFactorTable::new();
    for line in EF_CSV.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        t.insert(f[0], f[1].parse().unwrap(), f[2].parse().unwrap()).unwrap();
    }
    t
}

fn g30_source() -> SourceSpec {
    let inv = compute_inventory(&FleetSpec::g30(), &ef_table(), &TrafficState::default()).unwrap();
    inventory_to_source(&inv, G30_MODELED_ROAD_LENGTH, G30_SECTION_LENGTH, RoadStrip::g30()).unwrap()
}

// Independent decimal recomputation of sum(stock x mileage x factor) for the
// bundled factor table.
const ORACLE_KG_PER_YEAR: [(PollutantId, f64); 6] = [
    (PollutantId::Co, 9_948_132.172_978_273),
    (PollutantId::Co2, 9_495_382_935.594_944),
    (PollutantId::No2, 8_248_770.276_326_679),
    (PollutantId::So2, 10_717_195.182_268_897),
    (PollutantId::Pm25, 422_981.736_358_527_04),
    (PollutantId::Pm10, 422_981.736_358_527_04),
];

#[test]
fn inventory_matches_decimal_oracle() {
    let inv = compute_inventory(&FleetSpec::g30(), &ef_table(), &TrafficState::default()).unwrap();
    for (p, kg) in ORACLE_KG_PER_YEAR {
        let got = inv.totals[p];
        assert!((got - kg).abs() <= 1e-12 * kg, "{p}: {got} vs {kg}");
    }
}

#[test]
fn source_rates_reproduce_published_road_source() {
    // Road-segment source strengths in kg/s, three significant figures.
    let published = [
        (PollutantId::Co, 8.02e-4),
        (PollutantId::Co2, 0.7655),
        (PollutantId::No2, 6.65e-4),
        (PollutantId::So2, 8.64e-4),
        (PollutantId::Pm25, 3.41e-5),
        (PollutantId::Pm10, 3.41e-5),
    ];
    let src = g30_source();
    for (p, rate) in published {
        let got = src.rate_kg_s[p];
        assert!((got - rate).abs() <= 1e-5 * rate, "{p}: {got:e} vs {rate:e}");
    }
}

#[test]
fn source_round_trips_to_network_annual_mass() {
    let inv = compute_inventory(&FleetSpec::g30(), &ef_table(), &TrafficState::default()).unwrap();
    let src = g30_source();
    for (p, kg) in inv.totals.iter() {
        let back = src.network_kg_per_year(p, G30_MODELED_ROAD_LENGTH, G30_SECTION_LENGTH);
        assert!((back - kg).abs() <= 1e-12 * kg);
    }
}

#[test]
fn doubling_stock_doubles_every_total() {
    let ef = ef_table();
    let t = TrafficState::default();
    let a = compute_inventory(&FleetSpec::g30(), &ef, &t).unwrap();
    let b = compute_inventory(&FleetSpec::g30().scaled_stock(2.0), &ef, &t).unwrap();
    for p in PollutantId::ALL {
        assert_eq!(b.totals[p], 2.0 * a.totals[p]);
    }
}

#[test]
fn missing_factor_is_reported() {
    let mut ef = EmissionFactorTable::new();
    ef.insert("Medium-small Car", PollutantId::Co, 1.0).unwrap();
    let err = compute_inventory(&FleetSpec::g30(), &ef, &TrafficState::default()).unwrap_err();
    assert!(err.to_string().contains("no entry"), "{err}");
}
