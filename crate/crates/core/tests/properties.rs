use proptest::prelude::*;

use lesioneval::metrics::{hd95_with, PercentileMethod};
use lesioneval::nifti::{encode_volume, ByteOrder, VoxelData};
use lesioneval::oracle::{oracle_components, oracle_dilate, oracle_distance_field, oracle_hd95};
use lesioneval::phantom::{generate, PhantomSpec, RandomPhantom};
use lesioneval::ranking::{per_case_ranks, summary_stats, Direction, MetricTable};
use lesioneval::{
    brats_scores, connected_components, dice, dilate_once, distance_field, read_volume,
    score_case, BinaryMask, EvalOptions, Geometry, LabelVolume,
};

const SPACINGS: [f64; 5] = [0.5, 0.8, 1.0, 1.2, 2.5];
// pixdim is stored as f32, so only these survive a file round trip bit-exactly
const FILE_SPACINGS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 2.5];

fn geometry_from(max_dim: usize, table: &'static [f64; 5]) -> impl Strategy<Value = Geometry> {
    (
        [1..=max_dim, 1..=max_dim, 1..=max_dim],
        [0..table.len(), 0..table.len(), 0..table.len()],
    )
        .prop_map(move |(dims, s)| Geometry::new(dims, [table[s[0]], table[s[1]], table[s[2]]]).unwrap())
}

fn geometry(max_dim: usize) -> impl Strategy<Value = Geometry> {
    geometry_from(max_dim, &SPACINGS)
}

fn mask_in(g: Geometry) -> impl Strategy<Value = BinaryMask> {
    (0.05f64..0.6).prop_flat_map(move |density| {
        prop::collection::vec(prop::bool::weighted(density), g.len())
            .prop_map(move |bits| BinaryMask::from_bits(g, bits).unwrap())
    })
}

fn mask(max_dim: usize) -> impl Strategy<Value = BinaryMask> {
    geometry(max_dim).prop_flat_map(mask_in)
}

fn nonempty_pair(max_dim: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    geometry(max_dim)
        .prop_flat_map(|g| (mask_in(g), mask_in(g)))
        .prop_filter("both non-empty", |(a, b)| !a.is_blank() && !b.is_blank())
}

fn voxel_data(n: usize) -> impl Strategy<Value = VoxelData> {
    prop_oneof![
        prop::collection::vec(any::<u8>(), n).prop_map(VoxelData::U8),
        prop::collection::vec(any::<i16>(), n).prop_map(VoxelData::I16),
        prop::collection::vec(any::<i32>(), n).prop_map(VoxelData::I32),
        prop::collection::vec(-1e6f32..1e6, n).prop_map(VoxelData::F32),
    ]
}

fn volume() -> impl Strategy<Value = LabelVolume> {
    (geometry_from(9, &FILE_SPACINGS), any::<bool>()).prop_flat_map(|(g, big)| {
        voxel_data(g.len()).prop_map(move |d| {
            let order = if big { ByteOrder::Big } else { ByteOrder::Little };
            LabelVolume::new(g, d).unwrap().with_byte_order(order)
        })
    })
}

fn subset_of(m: &BinaryMask, keep: &[bool]) -> BinaryMask {
    let bits = m.bits().iter().zip(keep.iter().cycle()).map(|(&a, &k)| a && k).collect();
    BinaryMask::from_bits(*m.geometry(), bits).unwrap()
}

fn scaled(m: &BinaryMask, factor: f64) -> BinaryMask {
    let g = m.geometry();
    let s = g.spacing;
    let g2 = Geometry::new(g.dims, [s[0] * factor, s[1] * factor, s[2] * factor]).unwrap();
    BinaryMask::from_bits(g2, m.bits().to_vec()).unwrap()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn nifti_round_trip(vol in volume()) {
        let bytes = encode_volume(&vol).unwrap();
        let back = read_volume(&bytes).unwrap();
        prop_assert_eq!(&back, &vol);
        prop_assert_eq!(encode_volume(&back).unwrap(), bytes);
    }

    #[test]
    fn mask_round_trip_through_u8_volume(m in geometry_from(10, &FILE_SPACINGS).prop_flat_map(mask_in)) {
        let vol = LabelVolume::from_mask(&m);
        let back = read_volume(&encode_volume(&vol).unwrap()).unwrap();
        prop_assert_eq!(back.binarize(), m.clone());
        prop_assert_eq!(LabelVolume::from_mask(&back.binarize()).binarize(), m);
    }

    #[test]
    fn components_match_flood_fill(m in mask(12)) {
        let fast = connected_components(&m);
        let slow = oracle_components(&m);
        prop_assert_eq!(fast.labels(), slow.labels());
        prop_assert_eq!(fast.foreground_count(), m.count());
    }

    #[test]
    fn dilation_matches_scan_and_is_monotone(m in mask(10), keep in prop::collection::vec(any::<bool>(), 1..64)) {
        let d = dilate_once(&m);
        prop_assert_eq!(&d, &oracle_dilate(&m));
        prop_assert!(m.is_subset_of(&d));
        let sub = subset_of(&m, &keep);
        prop_assert!(dilate_once(&sub).is_subset_of(&d));
    }

    #[test]
    fn components_never_increase_under_dilation(m in mask(10)) {
        prop_assert!(connected_components(&dilate_once(&m)).len() <= connected_components(&m).len());
    }

    #[test]
    fn distance_field_matches_brute_force(m in mask(9).prop_filter("non-empty", |m| !m.is_blank())) {
        let fast = distance_field(&m).unwrap();
        let slow = oracle_distance_field(&m);
        for (a, b) in fast.values().iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
        for i in m.foreground() {
            prop_assert_eq!(fast.get(i), 0.0);
        }
        let grown = distance_field(&dilate_once(&m)).unwrap();
        for (g, f) in grown.values().iter().zip(fast.values()) {
            prop_assert!(*g <= *f + 1e-12);
        }
    }

    #[test]
    fn hd95_matches_all_pairs((a, b) in nonempty_pair(9)) {
        for method in [PercentileMethod::Linear, PercentileMethod::NearestRank] {
            let fast = hd95_with(&a, &b, method).unwrap();
            let slow = oracle_hd95(&a, &b, method);
            prop_assert!((fast - slow).abs() <= 1e-9, "{:?}: {} vs {}", method, fast, slow);
        }
    }

    #[test]
    fn hd95_is_symmetric_and_zero_on_identity((a, b) in nonempty_pair(8)) {
        let ab = hd95_with(&a, &b, PercentileMethod::Linear).unwrap();
        let ba = hd95_with(&b, &a, PercentileMethod::Linear).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert_eq!(hd95_with(&a, &a, PercentileMethod::Linear).unwrap(), 0.0);
    }

    #[test]
    fn hd95_scales_with_spacing((a, b) in nonempty_pair(8), k in 0u32..3) {
        // powers of two keep the scaling exact in floating point
        let f = f64::from(1u32 << k);
        let base = hd95_with(&a, &b, PercentileMethod::Linear).unwrap();
        let big = hd95_with(&scaled(&a, f), &scaled(&b, f), PercentileMethod::Linear).unwrap();
        prop_assert_eq!(big, base * f);
    }

    #[test]
    fn dice_bounds_and_symmetry((a, b) in nonempty_pair(8)) {
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ranks_sum_and_monotone_invariance(vals in prop::collection::vec(prop::option::weighted(0.8, 0u8..6), 2..8)) {
        let values: Vec<Option<f64>> = vals.iter().map(|v| v.map(f64::from)).collect();
        let n = values.len() as f64;
        let ranks = per_case_ranks(&values, Direction::HigherBetter);
        if values.iter().all(Option::is_none) {
            prop_assert!(ranks.is_none());
            return Ok(());
        }
        let ranks = ranks.unwrap();
        prop_assert_eq!(ranks.iter().sum::<f64>(), n * (n + 1.0) / 2.0);
        for r in &ranks {
            prop_assert!(*r >= 1.0 && *r <= n);
        }
        // strictly increasing transform keeps ranks
        let warped: Vec<Option<f64>> = values.iter().map(|v| v.map(|x| x.powi(3) + 7.0)).collect();
        prop_assert_eq!(&per_case_ranks(&warped, Direction::HigherBetter).unwrap(), &ranks);
        // negating and flipping the direction keeps ranks
        let neg: Vec<Option<f64>> = values.iter().map(|v| v.map(|x| -x)).collect();
        prop_assert_eq!(&per_case_ranks(&neg, Direction::LowerBetter).unwrap(), &ranks);
        // permuting teams permutes ranks
        let mut rev = values.clone();
        rev.reverse();
        let mut rr = per_case_ranks(&rev, Direction::HigherBetter).unwrap();
        rr.reverse();
        prop_assert_eq!(rr, ranks);
    }

    #[test]
    fn adding_a_worse_team_keeps_existing_scores(
        teams in 2usize..5,
        cases in 1usize..6,
        raw in prop::collection::vec((0u8..5, 0u8..5), 20 * 6),
    ) {
        let names: Vec<String> = (0..teams).map(|t| format!("t{t}")).collect();
        let ids: Vec<String> = (0..cases).map(|c| format!("c{c}")).collect();
        let cell = |t: usize, c: usize| raw[t * 6 + c];
        let dsc: Vec<Vec<Option<f64>>> = (0..teams)
            .map(|t| (0..cases).map(|c| Some(0.5 + f64::from(cell(t, c).0) / 10.0)).collect())
            .collect();
        let hd: Vec<Vec<Option<f64>>> = (0..teams)
            .map(|t| (0..cases).map(|c| Some(f64::from(cell(t, c).1))).collect())
            .collect();
        let before = brats_scores(&MetricTable::new(names.clone(), ids.clone(), dsc.clone(), hd.clone()).unwrap()).unwrap();

        let mut names2 = names.clone();
        names2.push("worst".into());
        let (mut dsc2, mut hd2) = (dsc, hd);
        dsc2.push(vec![Some(0.0); cases]);
        hd2.push(vec![Some(1000.0); cases]);
        let after = brats_scores(&MetricTable::new(names2, ids, dsc2, hd2).unwrap()).unwrap();

        for s in &before.standings {
            let t = after.standing(&s.team).unwrap();
            prop_assert_eq!(t.brats_mean, s.brats_mean);
            prop_assert_eq!(t.final_rank, s.final_rank);
        }
        prop_assert_eq!(&after.standings.last().unwrap().team, "worst");
    }

    #[test]
    fn summary_stats_ordering(vals in prop::collection::vec(-100.0f64..100.0, 1..40)) {
        let s = summary_stats(&vals).unwrap();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= hi);
        prop_assert!(s.mean >= lo - 1e-9 && s.mean <= hi + 1e-9);
        prop_assert!(s.std >= 0.0);
        prop_assert_eq!(s.n, vals.len());
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn spurious_predictions_do_not_move_scores(seed in any::<u64>(), count in 1usize..=5) {
        let spec = PhantomSpec::random(seed, &RandomPhantom::default());
        let Some(noisy) = spec.with_spurious(count, seed ^ 0x5eed) else {
            return Ok(());
        };
        let (clean, dirty) = (generate(&spec).unwrap(), generate(&noisy).unwrap());
        prop_assert_eq!(clean.reference_mask(), dirty.reference_mask());
        let opts = EvalOptions::default();
        let a = score_case(&clean.reference_mask(), &clean.prediction_mask(), &opts);
        let b = score_case(&dirty.reference_mask(), &dirty.prediction_mask(), &opts);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.lesionwise_dsc.to_bits(), b.lesionwise_dsc.to_bits());
                prop_assert_eq!(a.lesionwise_hd95.to_bits(), b.lesionwise_hd95.to_bits());
                prop_assert_eq!(b.fp, a.fp + count);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.kind(), b.kind()),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }
}
