use chanpred_core::channel::{kmh_to_mps, LinkConfig, ProfileDef};
use chanpred_core::dataset::{
    from_two_channel, generate, read_csid, split_counts, to_two_channel, Dataset, NormalizationStats,
    WeightedProfile,
};
use chanpred_core::{Band, CsiMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

fn eva_mix(cfg: &LinkConfig) -> Vec<WeightedProfile> {
    WeightedProfile::single(ProfileDef::builtin("EVA").unwrap().resolve(cfg).unwrap())
}

#[test]
fn same_seed_gives_byte_identical_files() {
    let cfg = LinkConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let ds = generate(&cfg, &eva_mix(&cfg), kmh_to_mps(50.0), 25, 77).unwrap();
        let path = dir.path().join(format!("run{run}.csid"));
        ds.save(&path).unwrap();
        bytes.push((
            std::fs::read(&path).unwrap(),
            std::fs::read(Dataset::sidecar_path(&path)).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
    let other = generate(&cfg, &eva_mix(&cfg), kmh_to_mps(50.0), 25, 78).unwrap();
    let reread = Dataset::load(&dir.path().join("run0.csid")).unwrap();
    assert_ne!(other.samples, reread.samples);
}

#[test]
fn single_sample_round_trips_exactly() {
    let cfg = LinkConfig::default();
    let ds = generate(&cfg, &eva_mix(&cfg), kmh_to_mps(300.0), 1, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csid");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, ds);
    let (header, pairs) = read_csid(&mut std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(header.n_samples, 1);
    assert_eq!(pairs[0].0, ds.samples[0].h_ul);
    assert_eq!(pairs[0].1, ds.samples[0].h_dl);
}

#[test]
fn sample_depends_only_on_seed_and_index() {
    let cfg = LinkConfig::default();
    let small = generate(&cfg, &eva_mix(&cfg), 10.0, 5, 3).unwrap();
    let large = generate(&cfg, &eva_mix(&cfg), 10.0, 40, 3).unwrap();
    assert_eq!(small.samples[..], large.samples[..5]);
}

#[test]
fn full_scale_split_counts() {
    assert_eq!(split_counts(40_000, [0.875, 0.025, 0.1]).unwrap(), (35_000, 1_000, 4_000));
    assert_eq!(split_counts(40, [0.875, 0.025, 0.1]).unwrap(), (35, 1, 4));
}

#[test]
fn splits_are_contiguous_in_generation_order() {
    let cfg = LinkConfig::default();
    let ds = generate(&cfg, &eva_mix(&cfg), 10.0, 10, 1).unwrap();
    let (tr, va, te) = ds.split([0.5, 0.2, 0.3]).unwrap();
    let ids: Vec<u64> = [&tr, &va, &te]
        .iter()
        .flat_map(|d| d.samples.iter().map(|s| s.meta.seed_index))
        .collect();
    assert_eq!(ids, (0..10).collect::<Vec<_>>());
    assert_eq!((tr.len(), va.len(), te.len()), (5, 2, 3));
}

#[test]
fn normalizer_ignores_held_out_splits() {
    let cfg = LinkConfig::default();
    let ds = generate(&cfg, &eva_mix(&cfg), kmh_to_mps(50.0), 60, 21).unwrap();
    let (train, _, test) = ds.split([0.5, 0.1, 0.4]).unwrap();
    let stats = NormalizationStats::fit_samples(&train.samples).unwrap();

    // Swap the test split for wildly scaled data and refit from the same
    // train split: the statistics must not move.
    let mut replaced = test.clone();
    for s in &mut replaced.samples {
        s.h_ul = s.h_ul.scaled(Complex64::new(1e3, 0.0));
        s.h_dl = s.h_dl.scaled(Complex64::new(0.0, -1e3));
    }
    let again = NormalizationStats::fit_samples(&train.samples).unwrap();
    assert_eq!(stats, again);
    let with_test = NormalizationStats::fit_samples(&[train.samples.clone(), replaced.samples].concat()).unwrap();
    assert_ne!(stats, with_test);
}

#[test]
fn held_out_values_are_not_clipped() {
    let stats = NormalizationStats { lo: -1.0, hi: 3.0 };
    assert_eq!(stats.normalize(-1.0), -1.0);
    assert_eq!(stats.normalize(3.0), 1.0);
    assert_eq!(stats.normalize(7.0), 3.0);
    assert_eq!(stats.denormalize(3.0), 7.0);
}

fn arb_matrix() -> impl Strategy<Value = CsiMatrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(k, t)| {
        prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), k * t).prop_map(move |v| {
            CsiMatrix::from_vec(k, t, Band::Ul, v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
                .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn two_channel_round_trip(m in arb_matrix()) {
        let v = to_two_channel(&m);
        prop_assert_eq!(v.len(), 2 * m.as_slice().len());
        let back = from_two_channel(&v, m.dims(), Band::Ul).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn normalization_inverts(m in arb_matrix(), x in -1e3..1e3f64) {
        let stats = NormalizationStats::fit([&m]).unwrap();
        prop_assume!(!stats.is_degenerate());
        let y = stats.normalize(x);
        prop_assert!((stats.denormalize(y) - x).abs() <= 1e-12 * x.abs().max(stats.hi.abs()).max(stats.lo.abs()));
        let flat = stats.normalize_matrix(&m);
        prop_assert!(flat.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        let back = stats.denormalize_matrix(&flat, m.dims(), Band::Ul).unwrap();
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            prop_assert!((a - b).norm() <= 1e-12 * (stats.hi - stats.lo));
        }
    }

    #[test]
    fn split_counts_partition_within_n(n in 0usize..5000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let r1 = a;
        let r2 = (1.0 - a) * b;
        let r3 = 1.0 - r1 - r2;
        let (x, y, z) = split_counts(n, [r1, r2, r3.max(0.0)]).unwrap();
        prop_assert!(x + y + z <= n);
        prop_assert!((x as f64 - n as f64 * r1).abs() <= 1.0);
    }
}
