use parpath::analysis::chen_defect;
use parpath::config::RunConfig;
use parpath::index::IndexConfig;
use parpath::integrate::{integrate, VolFunction};
use parpath::rate::z_grid;
use parpath::{Grid, MultiIndex, PartialRoughPath};
use proptest::prelude::*;

fn cellwise(xs: &[(f64, f64, f64)], beta: f64) -> PartialRoughPath {
    let n = xs.len();
    let cfg = IndexConfig::new(0.4, beta, 2).unwrap();
    let grid = Grid::new(1.0, n).unwrap();
    let mut xhat = vec![0.0, 0.0];
    let (mut a, mut b) = (0.0, 0.0);
    let mut dx = Vec::new();
    for &(u, v, w) in xs {
        a += u;
        b += v;
        xhat.extend([a, b]);
        dx.push(w);
    }
    let area: Vec<f64> = dx.iter().map(|w| 0.5 * (w * w - 1.0 / n as f64)).collect();
    PartialRoughPath::from_cellwise(cfg, grid, &xhat, &dx, Some(&area)).unwrap()
}

fn steps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-0.5..0.5f64, 0.0..0.3f64, -0.5..0.5f64), 2..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chen_relations_hold_on_all_triples(xs in steps(), beta in 0.15..0.3f64) {
        let prp = cellwise(&xs, beta);
        let n = xs.len();
        for s in 0..=n {
            for u in s..=n {
                for t in u..=n {
                    let (d1, d2) = chen_defect(&prp, s, u, t).unwrap();
                    prop_assert!(d1 <= 1e-10 && d2 <= 1e-10, "({s},{u},{t}): {d1} {d2}");
                }
            }
        }
    }

    #[test]
    fn constant_integrand_is_exact_at_level_one(xs in steps(), c in -2.0..2.0f64) {
        let prp = cellwise(&xs, 0.2);
        let (y, _) = integrate(&prp, &VolFunction::constant(c).unwrap(), 1e-9).unwrap();
        let p0 = prp.config().position(&MultiIndex::zero(2)).unwrap();
        for q in 0..=xs.len() {
            prop_assert_eq!(y.y1_at(q)[0], c * prp.level1_at(q)[p0]);
        }
    }

    #[test]
    fn dilation_scales_levels(xs in steps(), lambda in 0.1..3.0f64) {
        let prp = cellwise(&xs, 0.2);
        let (y, _) = integrate(&prp, &VolFunction::exponential(0.5, vec![0.3, 1.0]).unwrap(), 1e-9).unwrap();
        let z = y.dilate(lambda);
        let n = xs.len();
        let (a1, a2) = y.increment(1, n);
        let (b1, b2) = z.increment(1, n);
        prop_assert!((b1[0] - lambda * a1[0]).abs() <= 1e-12 * (1.0 + a1[0].abs()));
        prop_assert!((b2[0] - lambda * lambda * a2[0]).abs() <= 1e-11 * (1.0 + a2[0].abs()));
    }

    #[test]
    fn z_grid_hits_both_ends(lo in -1.0..0.0f64, width in 0.0..2.0f64, steps in 2usize..40) {
        let hi = lo + width;
        let zs = z_grid(lo, hi, steps).unwrap();
        prop_assert_eq!(zs.len(), steps);
        prop_assert_eq!(zs[0], lo);
        prop_assert_eq!(zs[steps - 1], hi);
        prop_assert!(zs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn canonical_config_round_trips(h in 0.05..0.5f64, n in 2usize..4096, seed in any::<u64>()) {
        let c = RunConfig::parse(&format!("kernel.H = {h}\ngrid.N = {n}\nrng.seed = {seed}")).unwrap();
        let again = RunConfig::parse(&c.canonical()).unwrap();
        prop_assert_eq!(c.hash(), again.hash());
        prop_assert_eq!(again.seed().unwrap(), seed);
    }
}
