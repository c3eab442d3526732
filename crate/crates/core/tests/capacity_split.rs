use roadcap_core::capacity::*;
use roadcap_core::fleet::FleetSpec;
use roadcap_core::units::*;
use roadcap_core::{PerPollutant, PollutantId};

/// Published annual capacity per constraint: total, per-class cells in fleet
/// order, standard-vehicle equivalents.
const PUBLISHED_CAPACITY: [(PollutantId, u64, [u64; 6], f64); 6] = [
    (PollutantId::Pm25, 3_236_022, [2_006_334, 210_341, 194_161, 113_261, 631_024, 80_901], 4_748_862.0),
    (PollutantId::Pm10, 22_020_013, [13_652_408, 1_431_301, 1_321_201, 770_700, 4_293_903, 550_500], 32_314_370.0),
    (PollutantId::Co, 7_718_717, [4_785_605, 501_717, 463_123, 270_155, 1_505_150, 192_968], 11_327_219.0),
    (PollutantId::Co2, 8_037_217, [4_983_075, 522_419, 482_233, 281_303, 1_567_258, 200_930], 11_794_619.0),
    (PollutantId::No2, 2_465_373, [1_528_532, 160_249, 147_922, 86_288, 480_748, 61_634], 3_617_935.0),
    (PollutantId::So2, 909_662, [563_990, 59_128, 54_580, 31_838, 177_384, 22_742], 1_334_929.0),
];

#[test]
fn class_split_reproduces_published_cells() {
    let fleet = FleetSpec::g30();
    for (p, total, cells, _) in PUBLISHED_CAPACITY {
        let split = split_by_class(total, &fleet);
        assert_eq!(split.iter().sum::<u64>(), total, "{p}");
        for (got, want) in split.iter().zip(cells) {
            assert!(got.abs_diff(want) <= 1, "{p}: {got} vs {want}");
        }
    }
}

#[test]
fn equivalents_reproduce_published_row() {
    let fleet = FleetSpec::g30();
    for (p, total, _, eq) in PUBLISHED_CAPACITY {
        let got = to_standard_vehicles(&split_by_class(total, &fleet), &fleet);
        assert!((got - eq).abs() <= 5.0, "{p}: {got} vs {eq}");
    }
    // Equivalents per vehicle, matched to five significant figures.
    for (_, total, _, eq) in PUBLISHED_CAPACITY.iter().filter(|r| matches!(r.0, PollutantId::So2 | PollutantId::Co2)) {
        assert_eq!(format!("{:.4}", eq / *total as f64), "1.4675");
    }
}

#[test]
fn published_totals_bind_on_so2_in_abstract_order() {
    let outcomes =
        PerPollutant::from_fn(|p| CapacityOutcome::Finite(PUBLISHED_CAPACITY.iter().find(|r| r.0 == p).unwrap().1 as f64));
    assert_eq!(binding_constraint(&outcomes), Some(PollutantId::So2));
    let mut order: Vec<_> = PollutantId::ALL.iter().map(|&p| (outcomes[p].t_max().unwrap(), p)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ids: Vec<_> = order.into_iter().map(|(_, p)| p).collect();
    assert_eq!(
        ids,
        [PollutantId::So2, PollutantId::No2, PollutantId::Pm25, PollutantId::Co, PollutantId::Co2, PollutantId::Pm10]
    );
}

#[test]
fn ceiling_reached_at_current_traffic_returns_current_traffic() {
    let constraints = ConstraintSet::default();
    let policy = BackgroundPolicy::default();
    let bg = policy.background(&constraints).unwrap();
    let q = TrafficState::default().q;
    let c_u = PerPollutant::from_fn(|p| (constraints.limits[p].ceiling - bg[p]) / q);
    let out = invert_capacity(&c_u, &constraints, &policy).unwrap();
    for p in PollutantId::ALL {
        assert_eq!(out[p].vehicles(), Some(G30_TRAFFIC_VOLUME as u64), "{p}: {:?}", out[p]);
    }
}

#[test]
fn bisection_agrees_with_direct_inversion() {
    let constraints = ConstraintSet::default();
    let policy = BackgroundPolicy::default();
    let bg = policy.background(&constraints).unwrap();
    // Arbitrary linear response per pollutant, kg/m^3 per vehicle/yr.
    let c_u = PerPollutant::from_fn(|p| 1e-15 * (1.0 + p.index() as f64));
    let direct = invert_capacity(&c_u, &constraints, &policy).unwrap();
    for p in PollutantId::ALL {
        let ceiling = constraints.limits[p].ceiling;
        let tol = 1e-9 * ceiling;
        let t = bisection_invert(|q| bg[p] + c_u[p] * q, ceiling, (0.0, 1e12), tol).unwrap();
        let exact = direct[p].t_max().unwrap();
        assert!((bg[p] + c_u[p] * t - ceiling).abs() <= tol);
        assert!((t - exact).abs() <= tol / c_u[p], "{p}: {t} vs {exact}");
    }
}

#[test]
fn unbracketed_target_is_an_error() {
    assert!(bisection_invert(|q| q, 10.0, (0.0, 5.0), 1e-9).is_err());
}

#[test]
fn annual_unit_chain_is_lossless() {
    let per_vehicle = 3.7e-3;
    for rate in [8.02e-4, 0.7655, 6.65e-4, 3.41e-5, 8.64e-4] {
        let kg_yr = kg_per_year(rate);
        assert_eq!(kg_yr, rate * 31_536_000.0);
        let back = kg_per_second(kg_per_year_from_vehicles(vehicles_per_year(kg_yr, per_vehicle), per_vehicle));
        assert!((back - rate).abs() <= 1e-12 * rate);
    }
}
