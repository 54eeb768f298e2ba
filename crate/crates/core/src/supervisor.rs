//! The global authority: hidden field, shared maps, and the stop condition.
//!
//! Every confirmed sample at cell (i, j) bumps the pheromone map P and the
//! visit-count map C and sets the visited mask V; the pheromone decays by a
//! factor of 0.995 once per supervisor tick (1 Hz). A reported bullseye is
//! validated against the un-noised field (the reported point must lie on a
//! blob cell), deduplicated against already-confirmed hotspots, and - when
//! coordination is enabled - turned into a blocked disc in B that the
//! sampling path treats as zero richness. The fourth confirmed hotspot
//! triggers a single STOP_ALL.
//!
//! Blocked cells still update P/C/V when sampled, which keeps the redundancy
//! accounting honest (configurable).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::Disc;
use crate::field::RichnessField;
use crate::grid::Grid;

/// Pheromone decay factor applied once per supervisor tick.
pub const EVAPORATION: f64 = 0.995;
/// Confirmed hotspots that end the run.
pub const HOTSPOT_QUOTA: u32 = 4;

/// The shared coordination maps over the supervisor grid.
#[derive(Clone, Debug)]
pub struct SharedMaps {
    /// Pheromone accumulation, >= 0 everywhere.
    pub pheromone: Grid<f64>,
    /// Cells ever sampled.
    pub visited: Grid<bool>,
    /// Cells inside confirmed-hotspot exclusion discs.
    pub blocked: Grid<bool>,
    /// Per-cell sample counts; visited <=> count > 0.
    pub counts: Grid<u32>,
    pub hotspots_confirmed: u32,
    /// Exclusion discs actually painted into `blocked` (coordination ON).
    pub block_discs: Vec<Disc>,
}

impl SharedMaps {
    pub fn new(nx: usize, ny: usize) -> Self {
        SharedMaps {
            pheromone: Grid::filled(nx, ny, 0.0),
            visited: Grid::filled(nx, ny, false),
            blocked: Grid::filled(nx, ny, false),
            counts: Grid::filled(nx, ny, 0),
            hotspots_confirmed: 0,
            block_discs: Vec::new(),
        }
    }
}

/// Outcome of a BULLSEYE report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BullseyeOutcome {
    /// The reported point is not actually on a blob cell.
    Rejected,
    /// Already inside a confirmed hotspot; no new disc, no count.
    Duplicate,
    /// Counted; carries the disc to broadcast (None with coordination OFF)
    /// and whether this confirmation filled the quota.
    Confirmed { disc: Option<Disc>, stop: bool },
}

/// Per-run summary entry for a confirmed hotspot.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HotspotRecord {
    pub x: f64,
    pub y: f64,
    pub tick: u64,
}

#[derive(Clone, Debug)]
pub struct Supervisor {
    pub maps: SharedMaps,
    pub field: RichnessField,
    /// Std dev of the measurement noise on sample responses.
    pub sample_noise_sd: f64,
    /// Radius of the exclusion disc around a confirmed hotspot, meters.
    pub block_radius: f64,
    /// Whether BULLSEYE confirmations publish blocks (Experiment 3 ON arm).
    pub coordination: bool,
    /// Whether blocked cells still update P/C/V when sampled.
    pub count_blocked_samples: bool,
    /// Map-updating sample responses issued (the C-ledger counterpart).
    pub samples_answered: u64,
    /// Requests dropped for non-finite coordinates.
    pub malformed_requests: u64,
    pub hotspots: Vec<HotspotRecord>,
    /// Tick at which STOP_ALL was emitted, set exactly once.
    pub stop_tick: Option<u64>,
}

impl Supervisor {
    pub fn new(field: RichnessField, sample_noise_sd: f64, block_radius: f64, coordination: bool) -> Self {
        let (nx, ny) = (field.spec.nx, field.spec.ny);
        Supervisor {
            maps: SharedMaps::new(nx, ny),
            field,
            sample_noise_sd,
            block_radius,
            coordination,
            count_blocked_samples: true,
            samples_answered: 0,
            malformed_requests: 0,
            hotspots: Vec::new(),
            stop_tick: None,
        }
    }

    /// Answer a sample request: the noisy reading and gradient (zeros inside
    /// blocks), the local pheromone gradient, and the P/C/V update. Requests
    /// with non-finite coordinates are dropped and counted.
    pub fn handle_sample_request(
        &mut self,
        x: f64,
        y: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<(f64, (f64, f64), (f64, f64))> {
        if !x.is_finite() || !y.is_finite() {
            self.malformed_requests += 1;
            return None;
        }
        let (value, grad) = self.field.sample(x, y, &self.maps.blocked, self.sample_noise_sd, rng);
        let (i, j) = self.field.spec.world_to_grid(x, y);
        if self.count_blocked_samples || !*self.maps.blocked.at(i, j) {
            *self.maps.pheromone.at_mut(i, j) += 1.0;
            *self.maps.counts.at_mut(i, j) += 1;
            *self.maps.visited.at_mut(i, j) = true;
            self.samples_answered += 1;
        }
        Some((value, grad, self.pheromone_gradient(i, j)))
    }

    /// Central-difference gradient of the pheromone map with border clamping.
    fn pheromone_gradient(&self, i: usize, j: usize) -> (f64, f64) {
        let spec = &self.field.spec;
        let p = &self.maps.pheromone;
        let ip = (i + 1).min(spec.nx - 1);
        let im = i.saturating_sub(1);
        let jp = (j + 1).min(spec.ny - 1);
        let jm = j.saturating_sub(1);
        (
            (p.at(ip, j) - p.at(im, j)) / (2.0 * spec.dx()),
            (p.at(i, jp) - p.at(i, jm)) / (2.0 * spec.dy()),
        )
    }

    /// Multiply every pheromone cell by the decay factor; call once per
    /// supervisor tick.
    pub fn evaporate(&mut self) {
        for cell in self.maps.pheromone.cells_mut() {
            *cell *= EVAPORATION;
        }
    }

    /// Validate, deduplicate, and count a reported hotspot center. With
    /// coordination enabled the confirmation also paints an exclusion disc.
    pub fn handle_bullseye(&mut self, x: f64, y: f64, tick: u64) -> BullseyeOutcome {
        if !x.is_finite() || !y.is_finite() {
            return BullseyeOutcome::Rejected;
        }
        // validation: the reported point must sit on a blob cell of the
        // un-noised field, so a diverged robot cannot end the run spuriously
        let (i, j) = self.field.spec.world_to_grid(x, y);
        if !*self.field.blob_mask.at(i, j) {
            return BullseyeOutcome::Rejected;
        }
        let dedup_r = self.block_radius;
        if self
            .hotspots
            .iter()
            .any(|h| (h.x - x).powi(2) + (h.y - y).powi(2) <= dedup_r * dedup_r)
        {
            return BullseyeOutcome::Duplicate;
        }

        self.hotspots.push(HotspotRecord { x, y, tick });
        self.maps.hotspots_confirmed += 1;

        let disc = if self.coordination {
            let disc = Disc { x, y, radius: self.block_radius };
            self.paint_block(&disc);
            self.maps.block_discs.push(disc);
            Some(disc)
        } else {
            None
        };

        let stop = self.maps.hotspots_confirmed >= HOTSPOT_QUOTA && self.stop_tick.is_none();
        if stop {
            self.stop_tick = Some(tick);
        }
        BullseyeOutcome::Confirmed { disc, stop }
    }

    /// Mark every cell whose center lies within the disc as blocked.
    fn paint_block(&mut self, disc: &Disc) {
        let spec = self.field.spec;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (cx, cy) = spec.cell_center(i, j);
                if (cx - disc.x).powi(2) + (cy - disc.y).powi(2) <= disc.radius * disc.radius {
                    *self.maps.blocked.at_mut(i, j) = true;
                }
            }
        }
    }

    /// Blob-vs-coverage mask: 2 covered hotspot, 1 unvisited hotspot,
    /// -1 visited background, 0 untouched background.
    pub fn build_coverage_mask(&self) -> Grid<i32> {
        let spec = &self.field.spec;
        let mut mask = Grid::filled(spec.nx, spec.ny, 0i32);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let blob = *self.field.blob_mask.at(i, j);
                let visited = *self.maps.visited.at(i, j);
                *mask.at_mut(i, j) = match (blob, visited) {
                    (true, true) => 2,
                    (true, false) => 1,
                    (false, true) => -1,
                    (false, false) => 0,
                };
            }
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_field, BlobParams};
    use crate::grid::GridSpec;
    use crate::rng::{derive_rng, Stream};

    fn supervisor(coordination: bool) -> Supervisor {
        let field = build_field(GridSpec::standard(), BlobParams::default(), 0).unwrap();
        Supervisor::new(field, 0.02, 0.7, coordination)
    }

    fn rng() -> ChaCha8Rng {
        derive_rng(7, Stream::SampleNoise(0))
    }

    #[test]
    fn first_sample_sets_p_c_v() {
        let mut sup = supervisor(true);
        let mut r = rng();
        assert!(sup.handle_sample_request(1.23, -0.4, &mut r).is_some());
        let (i, j) = sup.field.spec.world_to_grid(1.23, -0.4);
        assert_eq!(*sup.maps.counts.at(i, j), 1);
        assert!(*sup.maps.visited.at(i, j));
        assert_eq!(*sup.maps.pheromone.at(i, j), 1.0);
        assert_eq!(sup.samples_answered, 1);
    }

    #[test]
    fn malformed_request_changes_nothing() {
        let mut sup = supervisor(true);
        let mut r = rng();
        assert!(sup.handle_sample_request(f64::NAN, 0.0, &mut r).is_none());
        assert_eq!(sup.malformed_requests, 1);
        assert_eq!(sup.samples_answered, 0);
        assert!(sup.maps.visited.cells().all(|&v| !v));
    }

    #[test]
    fn blocked_cell_returns_zero_but_still_updates_maps() {
        let mut sup = supervisor(true);
        let mut r = rng();
        sup.paint_block(&Disc { x: 0.0, y: 0.0, radius: 0.5 });
        let (value, grad, _) = sup.handle_sample_request(0.0, 0.0, &mut r).unwrap();
        assert_eq!((value, grad), (0.0, (0.0, 0.0)));
        let (i, j) = sup.field.spec.world_to_grid(0.0, 0.0);
        assert_eq!(*sup.maps.counts.at(i, j), 1);
        assert!(*sup.maps.visited.at(i, j));
    }

    #[test]
    fn evaporation_examples() {
        let mut sup = supervisor(true);
        *sup.maps.pheromone.at_mut(10, 10) = 1.0;
        sup.evaporate();
        assert_eq!(*sup.maps.pheromone.at(10, 10), 0.995);
        assert_eq!(*sup.maps.pheromone.at(0, 0), 0.0);
        // geometric decay over k steps
        let mut sup = supervisor(true);
        *sup.maps.pheromone.at_mut(5, 5) = 1.0;
        for _ in 0..100 {
            sup.evaporate();
        }
        let expected = EVAPORATION.powi(100);
        assert!((sup.maps.pheromone.at(5, 5) - expected).abs() < 1e-12);
        assert!((expected - 0.6058).abs() < 1e-3);
    }

    #[test]
    fn ledger_sum_counts_equals_answers() {
        let mut sup = supervisor(true);
        let mut r = rng();
        for k in 0..500 {
            let x = -4.5 + (k % 50) as f64 * 0.19;
            let y = -4.5 + (k % 37) as f64 * 0.23;
            sup.handle_sample_request(x, y, &mut r);
        }
        sup.handle_sample_request(f64::INFINITY, 0.0, &mut r);
        let total: u64 = sup.maps.counts.cells().map(|&c| u64::from(c)).sum();
        assert_eq!(total, sup.samples_answered);
        assert_eq!(total, 500);
    }

    #[test]
    fn visited_iff_count_positive() {
        let mut sup = supervisor(true);
        let mut r = rng();
        for k in 0..200 {
            sup.handle_sample_request(-4.9 + 0.31 * (k % 31) as f64, 4.9 - 0.17 * k as f64, &mut r);
        }
        for (v, c) in sup.maps.visited.cells().zip(sup.maps.counts.cells()) {
            assert_eq!(*v, *c > 0);
        }
    }

    #[test]
    fn bullseye_on_blob_cell_confirms_and_blocks() {
        let mut sup = supervisor(true);
        // the first blob center is at grid (20, 18) -> world (-0.9, -1.3)
        let out = sup.handle_bullseye(-0.9, -1.3, 100);
        match out {
            BullseyeOutcome::Confirmed { disc: Some(d), stop } => {
                assert!(!stop);
                assert_eq!((d.x, d.y), (-0.9, -1.3));
            }
            other => panic!("expected confirmation with disc, got {other:?}"),
        }
        assert_eq!(sup.maps.hotspots_confirmed, 1);
        assert_eq!(sup.maps.block_discs.len(), 1);
        assert!(sup.maps.blocked.cells().any(|&b| b));
    }

    #[test]
    fn bullseye_inside_existing_disc_is_duplicate() {
        let mut sup = supervisor(true);
        sup.handle_bullseye(-0.9, -1.3, 1);
        let out = sup.handle_bullseye(-0.8, -1.4, 2);
        assert_eq!(out, BullseyeOutcome::Duplicate);
        assert_eq!(sup.maps.hotspots_confirmed, 1);
        assert_eq!(sup.maps.block_discs.len(), 1);
    }

    #[test]
    fn bullseye_off_blob_is_rejected() {
        let mut sup = supervisor(true);
        let out = sup.handle_bullseye(4.0, 4.0, 1); // corner is background
        assert_eq!(out, BullseyeOutcome::Rejected);
        assert_eq!(sup.maps.hotspots_confirmed, 0);
        assert!(sup.maps.blocked.cells().all(|&b| !b));
    }

    #[test]
    fn fourth_confirmation_stops_exactly_once() {
        let mut sup = supervisor(true);
        let centers = [(-0.9, -1.3), (2.1, 1.1), (-2.9, 2.7), (3.5, -2.9)];
        for (k, &(x, y)) in centers.iter().enumerate() {
            let out = sup.handle_bullseye(x, y, k as u64);
            match out {
                BullseyeOutcome::Confirmed { stop, .. } => {
                    assert_eq!(stop, k == 3, "stop only on the fourth");
                }
                other => panic!("unexpected outcome {other:?}"),
            }
        }
        assert_eq!(sup.stop_tick, Some(3));
    }

    #[test]
    fn coordination_off_counts_but_never_blocks() {
        let mut sup = supervisor(false);
        let out = sup.handle_bullseye(-0.9, -1.3, 5);
        assert!(matches!(out, BullseyeOutcome::Confirmed { disc: None, .. }));
        assert_eq!(sup.maps.hotspots_confirmed, 1);
        assert!(sup.maps.blocked.cells().all(|&b| !b));
        assert!(sup.maps.block_discs.is_empty());
        // dedup still works without painted discs
        assert_eq!(sup.handle_bullseye(-0.9, -1.3, 6), BullseyeOutcome::Duplicate);
    }

    #[test]
    fn block_disc_matches_exhaustive_cell_scan() {
        let mut sup = supervisor(true);
        let disc = Disc { x: 0.0, y: 0.0, radius: 0.5 };
        sup.paint_block(&disc);
        let spec = sup.field.spec;
        let mut painted = 0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (cx, cy) = spec.cell_center(i, j);
                let inside = cx * cx + cy * cy <= 0.25;
                assert_eq!(*sup.maps.blocked.at(i, j), inside, "cell ({i},{j})");
                painted += usize::from(inside);
            }
        }
        assert!(painted > 0);
    }

    #[test]
    fn coverage_mask_encoding() {
        let mut sup = supervisor(true);
        let mut r = rng();
        // fresh run: only 0 and 1, with exactly 180 ones on the reference field
        let mask = sup.build_coverage_mask();
        let ones = mask.cells().filter(|&&m| m == 1).count();
        assert_eq!(ones, 180);
        assert!(mask.cells().all(|&m| m == 0 || m == 1));

        // one sample on a blob cell -> exactly one 2
        sup.handle_sample_request(-0.9, -1.3, &mut r);
        let mask = sup.build_coverage_mask();
        assert_eq!(mask.cells().filter(|&&m| m == 2).count(), 1);

        // a background sample -> a -1 appears
        sup.handle_sample_request(0.0, 0.0, &mut r);
        let mask = sup.build_coverage_mask();
        assert_eq!(mask.cells().filter(|&&m| m == -1).count(), 1);
        assert!(mask.cells().all(|&m| matches!(m, -1 | 0 | 1 | 2)));
    }

    #[test]
    fn all_visited_mask_has_only_minus_one_and_two() {
        let mut sup = supervisor(true);
        for v in sup.maps.visited.cells_mut() {
            *v = true;
        }
        let mask = sup.build_coverage_mask();
        assert!(mask.cells().all(|&m| m == -1 || m == 2));
        assert_eq!(mask.cells().filter(|&&m| m == 2).count(), 180);
    }
}
