//! Particle set, staggered grid and scene configuration.

mod grid;
mod particle;
pub mod scene;
mod seed;

pub use grid::{face_position, CellMarker, FaceChannels, Layout, MacGrid, OpenSides, MASS_EPSILON};
pub use particle::{Particle, Phase};
pub use scene::{
    BallEmitter, BlockEmitter, Emitter, MapKind, MapReference, OutputConfig, PressureConfig, SceneConfig,
    SceneOverrides, SchemeKind, SheetEmitter, TransferScheme,
};
pub use seed::{seed_particles, sheet_vertex, SeedResult, SeededSheet};

/// Why a particle left the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeletionReason {
    /// Crossed an open side of the domain; its mass leaves the system.
    ExitedDomain,
    /// All of its mass was absorbed by fabric; nothing leaves the system.
    FullyAbsorbed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeletionEvent {
    pub step: u64,
    pub reason: DeletionReason,
    pub phase: Phase,
    /// Mass that left the system with this deletion.
    pub mass_removed: f64,
}

/// Record of every particle deletion in a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeletionLedger {
    pub events: Vec<DeletionEvent>,
}

impl DeletionLedger {
    pub fn record(&mut self, event: DeletionEvent) {
        self.events.push(event);
    }

    pub fn removed_mass(&self) -> f64 {
        self.events.iter().fold(0.0, |acc, e| acc + e.mass_removed)
    }

    pub fn count(&self) -> usize {
        self.events.len()
    }
}

/// Removes particles for which `keep` is false, returning the old-to-new
/// index map (`None` for removed particles).
pub fn retain_particles<const D: usize>(
    particles: &mut Vec<Particle<D>>,
    mut keep: impl FnMut(usize, &Particle<D>) -> bool,
) -> Vec<Option<usize>> {
    let mut map = Vec::with_capacity(particles.len());
    let mut next = 0;
    let mut i = 0;
    particles.retain(|p| {
        let k = keep(i, p);
        i += 1;
        if k {
            map.push(Some(next));
            next += 1;
        } else {
            map.push(None);
        }
        k
    });
    map
}

/// Total mass held by particles, absorbed fluid included.
pub fn particle_mass<const D: usize>(particles: &[Particle<D>]) -> f64 {
    particles.iter().map(|p| p.transfer_mass()).sum()
}
