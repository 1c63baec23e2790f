mod common;

use common::{scan_blocking, scenario};
use star_alloc::matching::{self, snapshot_gains, OmaSnapshot, SwapScope, UtilityKind};
use star_alloc::starface::SurfaceMode;

#[test]
fn lma_is_same_region_stable_and_mixed() {
    for s in 0..6 {
        let sc = scenario(3, 8, s);
        for (kind, noma) in [(UtilityKind::Noma, true), (UtilityKind::Oma, false)] {
            let out = matching::lma(&sc, SurfaceMode::Star, kind).unwrap();
            assert!(!out.stats.cap_reached);
            let regions = &sc.layout.regions;
            assert!(out.assignment.is_tr_paired(regions), "seed {s}");
            let gains = snapshot_gains(&sc, &out.coeffs);
            let power = sc.config.p_max / sc.config.num_users as f64;
            let blocking = scan_blocking(&gains, regions, power, noma, &out.assignment, true);
            assert!(blocking.is_empty(), "seed {s}: {blocking:?}");
        }
    }
}

#[test]
fn general_swap_matching_has_no_blocking_pair() {
    for s in 0..6 {
        let sc = scenario(3, 8, s);
        let out = matching::swap_oma(&sc, SurfaceMode::Star).unwrap();
        assert!(!out.stats.cap_reached);
        let snap = OmaSnapshot::new(&sc, &out.coeffs);
        let blocking = scan_blocking(&snap.gains, &sc.layout.regions, snap.power, false, &out.assignment, false);
        assert!(blocking.is_empty(), "seed {s}: {blocking:?}");
        let lib = matching::blocking_pairs(&out.assignment, &snap, SwapScope::AllPairs, &sc.layout.regions);
        assert!(lib.is_empty());
    }
}

#[test]
fn exhaustive_enumerates_every_labelled_pairing() {
    let all = matching::enumerate_assignments(6, 3).unwrap();
    assert_eq!(all.len(), 15 * 6);
    let mut keys: Vec<_> = all.iter().map(|a| a.key()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 90);
}
