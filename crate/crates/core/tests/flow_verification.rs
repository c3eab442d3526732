use roadcap_core::mesh::{RoadStrip, StructuredMesh};
use roadcap_core::rans::*;

/// Plane channel of height 1 between no-slip walls, Re = 10 on the bulk
/// speed. Fully developed profile is `6 U z (H - z) / H^2`.
fn channel() -> (StructuredMesh, FlowState) {
    let road = RoadStrip::new(0.0, 0.1, 0.0, 0.1, 0.05).unwrap();
    let mesh = StructuredMesh::uniform([40, 1, 64], [10.0, 0.5, 1.0], road).unwrap();
    let fluid = FluidProperties { density: 1.0, viscosity: 0.1, ..Default::default() };
    let bc = BoundarySet {
        inlet: InletSpec::Uniform { speed: 1.0, k: 0.0, epsilon: 0.0 },
        ground: GroundBoundary::NoSlip,
        top: TopBoundary::NoSlip,
        lateral: OpenBoundary::Symmetry,
    };
    let cfg = SolverConfig { turbulence: TurbulenceModel::Laminar, max_iterations: 5000, ..Default::default() };
    let flow = solve_flow(&mesh, &fluid, &bc, &TurbulenceConstants::default(), &cfg).unwrap();
    (mesh, flow)
}

#[test]
fn laminar_channel_develops_parabolic_profile() {
    let (mesh, flow) = channel();
    assert!(flow.converged, "{:?}", flow.final_residuals());
    let centre = mesh.interpolate(&flow.u, [8.0, 0.25, 0.5]).unwrap();
    assert!((centre - 1.5).abs() <= 0.02 * 1.5, "centreline {centre}");
    for z in [0.1, 0.25, 0.75, 0.9] {
        let exact = 6.0 * z * (1.0 - z);
        let u = mesh.interpolate(&flow.u, [8.0, 0.25, z]).unwrap();
        assert!((u - exact).abs() <= 0.03 * exact, "z {z}: {u} vs {exact}");
    }
}

#[test]
fn laminar_channel_conserves_mass() {
    let (_, flow) = channel();
    let (inflow, outflow) = flow.boundary_flows();
    assert!((inflow - outflow).abs() <= 1e-5 * inflow, "{inflow} vs {outflow}");
    let worst = flow.mass_imbalance().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-5 * inflow, "worst cell imbalance {worst}");
}
