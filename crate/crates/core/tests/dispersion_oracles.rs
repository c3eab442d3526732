use roadcap_core::dispersion::*;
use roadcap_core::fleet::SourceSpec;
use roadcap_core::mesh::{RoadStrip, StructuredMesh};
use roadcap_core::rans::{FlowState, FluidProperties, TurbulenceConstants};
use roadcap_core::{PerPollutant, Pollutant, PollutantId};

const WIND: f64 = 3.0;
const K_EDDY: f64 = 1.0;
const DEPTH: f64 = 100.0;

fn plume_setup() -> (StructuredMesh, FlowState, SourceSpec, FluidProperties) {
    let road = RoadStrip::new(100.0, 126.0, 0.0, 10.0, 0.3).unwrap();
    let mesh = StructuredMesh::uniform([400, 1, 100], [800.0, 10.0, DEPTH], road).unwrap();
    let fluid = FluidProperties::default();
    let nu_m = fluid.viscosity / fluid.density;
    let sc = DispersionConfig::default().schmidt_turbulent;
    let mu_t = fluid.density * sc * (K_EDDY - nu_m / DispersionConfig::default().schmidt_molecular);
    let flow = FlowState::uniform(&mesh, [WIND, 0.0, 0.0], mu_t, fluid.density);
    let src = SourceSpec::new(PerPollutant::splat(1e-3), road).unwrap();
    (mesh, flow, src, fluid)
}

/// Area source of uniform strength over `[x0, x1]`, integrated as a sum of
/// crosswind line sources with reflections from the ground and the lid.
fn gaussian_strip(rate: f64, road: &RoadStrip, x: f64, z: f64) -> f64 {
    let q_line = rate / road.length();
    let width = road.x_max - road.x_min;
    let n = 4000;
    let mut sum = 0.0;
    for s in 0..n {
        let xs = road.x_min + (s as f64 + 0.5) * width / n as f64;
        let dx = x - xs;
        if dx <= 0.0 {
            continue;
        }
        let sigma = (2.0 * K_EDDY * dx / WIND).sqrt();
        let mut images = 0.0;
        for m in -6i32..=6 {
            let shift = 2.0 * m as f64 * DEPTH;
            for zs in [road.height + shift, -road.height + shift] {
                images += (-(z - zs).powi(2) / (2.0 * sigma * sigma)).exp();
            }
        }
        sum += q_line / (WIND * (2.0 * std::f64::consts::PI).sqrt() * sigma) * images / n as f64;
    }
    sum
}

#[test]
fn uniform_wind_plume_matches_gaussian_solution() {
    let (mesh, flow, src, fluid) = plume_setup();
    let p = Pollutant::new(PollutantId::Co);
    let field = solve_scalar(&flow, &mesh, &src, p, &fluid, &DispersionConfig::default()).unwrap();
    assert!(field.converged);
    for d in [30.0, 100.0, 200.0, 300.0, 400.0] {
        let x = src.strip.x_max + d;
        let got = mesh.interpolate(&field.concentration, [x, 5.0, 2.0]).unwrap();
        let want = gaussian_strip(1e-3, &src.strip, x, 2.0);
        let rel = (got - want).abs() / want;
        assert!(rel <= 0.20, "d {d}: {got:e} vs {want:e} ({:.1}%)", 100.0 * rel);
    }
}

#[test]
fn doubling_source_doubles_field() {
    let (mesh, flow, src, fluid) = plume_setup();
    let p = Pollutant::new(PollutantId::No2);
    let cfg = DispersionConfig::default();
    let a = solve_scalar(&flow, &mesh, &src, p, &fluid, &cfg).unwrap();
    let b = solve_scalar(&flow, &mesh, &src.scaled(2.0), p, &fluid, &cfg).unwrap();
    for (x, y) in a.concentration.iter().zip(&b.concentration) {
        assert!((y - 2.0 * x).abs() <= 1e-10 * y.abs().max(f64::MIN_POSITIVE));
    }
}

#[test]
fn transported_mass_leaves_through_boundaries() {
    let (mesh, flow, src, fluid) = plume_setup();
    let p = Pollutant::new(PollutantId::Co);
    let cfg = DispersionConfig { tolerance: 1e-10, ..Default::default() };
    let field = solve_scalar(&flow, &mesh, &src, p, &fluid, &cfg).unwrap();
    let out = boundary_outflow(&field, &flow, &mesh);
    assert!((out - 1e-3).abs() <= 1e-6 * 1e-3, "{out:e}");
}

#[test]
fn settling_particles_reach_stokes_velocity() {
    let road = RoadStrip::new(4.0, 6.0, 4.0, 6.0, 5.0).unwrap();
    let mesh = StructuredMesh::uniform([10, 10, 10], [10.0, 10.0, 10.0], road).unwrap();
    let fluid = FluidProperties::default();
    let flow = FlowState::uniform(&mesh, [0.0; 3], 0.0, fluid.density);
    let src = SourceSpec::new(PerPollutant::splat(1.0), road).unwrap();
    let tc = TurbulenceConstants::default();
    let cfg = DpmConfig { particles: 200, random_walk: false, gravity: true, max_steps: 100, ..Default::default() };
    for id in [PollutantId::Pm25, PollutantId::Pm10] {
        let p = Pollutant::new(id);
        let ws = settling_velocity(&p, cfg.particle_density, &fluid).unwrap();
        assert!(ws.stokes_valid);
        let r = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &cfg).unwrap();
        let w = -r.mean_final_velocity[2];
        assert!((w - ws.velocity).abs() <= 0.01 * ws.velocity, "{id}: {w:e} vs {:e}", ws.velocity);
    }
}

#[test]
fn pm25_settling_velocity_by_hand() {
    // (1000 - 1.225) * 9.8 * (2.5e-6)^2 / (18 * 1.7894e-5)
    let ws = settling_velocity(&Pollutant::new(PollutantId::Pm25), 1000.0, &FluidProperties::default()).unwrap();
    assert!((ws.velocity - 1.899_301_092_544_988e-4).abs() <= 1e-12 * 1.9e-4, "{}", ws.velocity);
}

#[test]
fn tracer_without_turbulence_moves_in_straight_lines() {
    let road = RoadStrip::new(10.0, 20.0, 2.0, 8.0, 0.3).unwrap();
    let mesh = StructuredMesh::uniform([50, 10, 10], [100.0, 10.0, 10.0], road).unwrap();
    let fluid = FluidProperties::default();
    let flow = FlowState::uniform(&mesh, [1.0, 0.0, 0.0], 0.0, fluid.density);
    let src = SourceSpec::new(PerPollutant::splat(1.0), road).unwrap();
    let cfg =
        DpmConfig { particles: 50, random_walk: false, gravity: false, record_trajectories: 50, ..Default::default() };
    let p = Pollutant::new(PollutantId::Co).with_diameter(1e-10).unwrap();
    let r = track_particles(&flow, &mesh, &src, p, &fluid, &TurbulenceConstants::default(), &cfg).unwrap();
    assert_eq!(r.escaped, 50);
    for id in 0..50u64 {
        let path: Vec<_> = r.trajectories.iter().filter(|t| t.particle_id == id).collect();
        let (first, last) = (path[0], path[path.len() - 1]);
        let length = last.position[0] - first.position[0];
        assert!(last.position[0] >= 100.0);
        for a in 1..3 {
            assert!((last.position[a] - first.position[a]).abs() <= 1e-6 * length);
        }
        assert!((last.time - length).abs() <= 1e-6 * length);
    }
}

#[test]
fn still_air_keeps_tracers_at_release_points() {
    let road = RoadStrip::new(10.0, 20.0, 2.0, 8.0, 0.3).unwrap();
    let mesh = StructuredMesh::uniform([10, 5, 5], [30.0, 10.0, 10.0], road).unwrap();
    let fluid = FluidProperties::default();
    let flow = FlowState::uniform(&mesh, [0.0; 3], 0.0, fluid.density);
    let src = SourceSpec { injection_speed: 0.0, ..SourceSpec::new(PerPollutant::splat(1.0), road).unwrap() };
    let cfg = DpmConfig {
        particles: 20,
        random_walk: false,
        gravity: false,
        max_steps: 20,
        record_trajectories: 20,
        ..Default::default()
    };
    let r = track_particles(
        &flow,
        &mesh,
        &src,
        Pollutant::new(PollutantId::So2),
        &fluid,
        &TurbulenceConstants::default(),
        &cfg,
    )
    .unwrap();
    assert_eq!(r.stuck, 20);
    for id in 0..20u64 {
        let path: Vec<_> = r.trajectories.iter().filter(|t| t.particle_id == id).collect();
        assert!(path.iter().all(|t| t.position == path[0].position));
    }
}

#[test]
fn fixed_seed_reproduces_particles() {
    let (mesh, mut flow, src, fluid) = plume_setup();
    flow.k.iter_mut().for_each(|k| *k = 0.3);
    flow.epsilon.iter_mut().for_each(|e| *e = 0.01);
    let tc = TurbulenceConstants::default();
    let cfg = DpmConfig { particles: 300, gravity: false, record_trajectories: 5, seed: 7, ..Default::default() };
    let p = Pollutant::new(PollutantId::Co);
    let a = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &cfg).unwrap();
    let b = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &cfg).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.field.concentration, b.field.concentration);
    let c = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &DpmConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.trajectories, c.trajectories);
}

#[test]
fn random_walk_matches_gradient_diffusion_in_homogeneous_turbulence() {
    let (mesh, mut flow, src, fluid) = plume_setup();
    let tc = TurbulenceConstants::default();
    // k^2 / eps chosen so C_mu k^2 / (eps Sc_t) equals the plume diffusivity.
    let sc = DispersionConfig::default().schmidt_turbulent;
    let k = 0.3;
    let eps = tc.c_mu * k * k / (sc * K_EDDY);
    flow.k.iter_mut().for_each(|v| *v = k);
    flow.epsilon.iter_mut().for_each(|v| *v = eps);
    let p = Pollutant::new(PollutantId::Co);
    let eul = solve_scalar(&flow, &mesh, &src, p, &fluid, &DispersionConfig::default()).unwrap();
    let cfg = DpmConfig { particles: 20_000, gravity: false, ..Default::default() };
    let dpm = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &cfg).unwrap();
    for d in [100.0, 200.0, 300.0, 400.0] {
        let x = [src.strip.x_max + d, 5.0, 2.0];
        let e = mesh.interpolate(&eul.concentration, x).unwrap();
        let l = mesh.interpolate(&dpm.field.concentration, x).unwrap();
        assert!((l / e - 1.0).abs() <= 0.2, "d {d}: dpm {l:e} eulerian {e:e}");
    }
}
