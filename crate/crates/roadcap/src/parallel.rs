//! Worker pool sized by `ROADCAP_THREADS` and the parallel particle tracker.

use rayon::prelude::*;
use rayon::ThreadPool;
use roadcap_core::dispersion::{DpmConfig, DpmResult, DpmTally, ParticleTracker};
use roadcap_core::fleet::SourceSpec;
use roadcap_core::mesh::StructuredMesh;
use roadcap_core::rans::{FlowState, FluidProperties, TurbulenceConstants};
use roadcap_core::Pollutant;

use crate::error::{Result, RunError};

pub const THREADS_ENV: &str = "ROADCAP_THREADS";

/// Worker count from `ROADCAP_THREADS`; `None` leaves the choice to rayon.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(RunError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

pub fn pool() -> Result<ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| RunError::Validation(format!("cannot start worker pool: {e}")))
}

fn merge(mut a: DpmTally, b: DpmTally) -> DpmTally {
    for (x, y) in a.residence.iter_mut().zip(&b.residence) {
        *x += y;
    }
    a.particles += b.particles;
    a.escaped += b.escaped;
    a.stuck += b.stuck;
    a.steps += b.steps;
    for i in 0..3 {
        a.final_velocity_sum[i] += b.final_velocity_sum[i];
    }
    a.trajectories.extend(b.trajectories);
    a
}

/// Tracks particle chunks on the pool. Deterministic mode merges chunk tallies
/// in chunk order; otherwise tallies are reduced in whatever order workers
/// finish, which can change the last bits of the field.
#[allow(clippy::too_many_arguments)]
pub fn track_particles_parallel(
    pool: &ThreadPool,
    flow: &FlowState,
    mesh: &StructuredMesh,
    source: &SourceSpec,
    p: Pollutant,
    fluid: &FluidProperties,
    tc: &TurbulenceConstants,
    cfg: &DpmConfig,
    deterministic: bool,
) -> Result<DpmResult> {
    let tracker = ParticleTracker::new(flow, mesh, source, p, fluid, tc, cfg)?;
    let chunks = tracker.chunk_count();
    let result = pool.install(|| {
        if deterministic {
            let tallies: Vec<DpmTally> = (0..chunks).into_par_iter().map(|c| tracker.track_chunk(c)).collect();
            tracker.finish(tallies)
        } else {
            let merged = (0..chunks).into_par_iter().map(|c| tracker.track_chunk(c)).reduce_with(merge);
            tracker.finish(merged)
        }
    });
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use roadcap_core::dispersion::track_particles;
    use roadcap_core::mesh::RoadStrip;
    use roadcap_core::{PerPollutant, PollutantId};

    #[test]
    fn deterministic_parallel_run_matches_serial() {
        let road = RoadStrip::new(10.0, 20.0, 0.0, 10.0, 0.3).unwrap();
        let mesh = StructuredMesh::uniform([40, 5, 10], [80.0, 10.0, 20.0], road).unwrap();
        let fluid = FluidProperties::default();
        let mut flow = FlowState::uniform(&mesh, [2.0, 0.0, 0.0], 0.0, fluid.density);
        flow.k.iter_mut().for_each(|k| *k = 0.2);
        flow.epsilon.iter_mut().for_each(|e| *e = 0.05);
        let src = SourceSpec::new(PerPollutant::splat(1e-3), road).unwrap();
        let tc = TurbulenceConstants::default();
        let cfg = DpmConfig { particles: 5000, gravity: false, record_trajectories: 3, ..Default::default() };
        let p = Pollutant::new(PollutantId::No2);
        let serial = track_particles(&flow, &mesh, &src, p, &fluid, &tc, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = track_particles_parallel(&pool, &flow, &mesh, &src, p, &fluid, &tc, &cfg, true).unwrap();
        assert_eq!(serial, par);
        let fast = track_particles_parallel(&pool, &flow, &mesh, &src, p, &fluid, &tc, &cfg, false).unwrap();
        assert_eq!(fast.particles, serial.particles);
        let total = |r: &DpmResult| r.field.concentration.iter().sum::<f64>();
        assert!((total(&fast) - total(&serial)).abs() <= 1e-9 * total(&serial));
    }
}
