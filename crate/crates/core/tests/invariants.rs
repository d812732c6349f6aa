use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sds_core::bandga::{crossover_at, mutate_uniform_int, Chromosome};
use sds_core::eval::{confusion, metrics, stratified_kfold, ConfusionMatrix};
use sds_core::preprocess::{
    flat_field, gene_to_slot, spatial_resize, spectral_bin, trim_bands, wavelength_of_band, CalibrationPair, TrimSpec,
};
use sds_core::{CubeF64, HyperCube, Label, Stage};

fn cube(r: usize, c: usize, b: usize, data: Vec<f64>, stage: Stage) -> CubeF64 {
    HyperCube::new(r, c, b, data, None, stage).unwrap()
}

fn arb_dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..7, 1usize..7, 1usize..5)
}

fn labels(n_h: usize, n_i: usize) -> Vec<Label> {
    let mut v = vec![Label::Healthy; n_h];
    v.extend(vec![Label::Infected; n_i]);
    v
}

proptest! {
    #[test]
    fn binning_preserves_band_sums((r, c, groups) in arb_dims(), k in 1usize..5, seed in any::<u64>()) {
        let b = groups * k;
        let data: Vec<f64> = (0..r * c * b).map(|i| ((i as u64 ^ seed) % 97) as f64 / 97.0).collect();
        let x = cube(r, c, b, data, Stage::Reflectance);
        let y = spectral_bin(&x, k).unwrap();
        prop_assert_eq!(y.dims(), (r, c, groups));
        for row in 0..r {
            for col in 0..c {
                let before: f64 = x.pixel_spectrum(row, col).iter().sum();
                let after: f64 = y.pixel_spectrum(row, col).iter().sum::<f64>() * k as f64;
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn area_resize_preserves_band_means(
        (r, c, b) in arb_dims(),
        (tr, tc) in (1usize..9, 1usize..9),
        data in prop::collection::vec(0.0f64..2.0, 6 * 6 * 4),
    ) {
        let x = cube(r, c, b, data[..r * c * b].to_vec(), Stage::Binned);
        let y = spatial_resize(&x, (tr, tc)).unwrap();
        prop_assert_eq!(y.dims(), (tr, tc, b));
        for band in 0..b {
            let m0 = x.band(band).iter().sum::<f64>() / (r * c) as f64;
            let m1 = y.band(band).iter().sum::<f64>() / (tr * tc) as f64;
            prop_assert!((m0 - m1).abs() < 1e-9, "band {} {} vs {}", band, m0, m1);
            let (lo, hi) = x.band(band).iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            prop_assert!(y.band(band).iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }

    #[test]
    fn flat_field_stays_in_range(
        raw in prop::collection::vec(-1.0f64..3.0, 12),
        white in prop::collection::vec(-1.0f64..3.0, 12),
        dark in prop::collection::vec(-1.0f64..3.0, 12),
    ) {
        let mk = |v: Vec<f64>| cube(2, 2, 3, v, Stage::Raw);
        let cal = CalibrationPair::new(mk(white), mk(dark)).unwrap();
        let out = flat_field(&mk(raw), &cal, 1e-6).unwrap();
        prop_assert!(out.cube.data().iter().all(|v| (0.0..=2.0).contains(v)));
        prop_assert_eq!(out.cube.stage(), Stage::Reflectance);
    }

    #[test]
    fn trim_keeps_the_middle(front in 0usize..5, back in 0usize..5, extra in 1usize..5) {
        let b = front + back + extra;
        let x = cube(1, 1, b, (0..b).map(|i| i as f64).collect(), Stage::Binned);
        let y = trim_bands(&x, TrimSpec { drop_front: front, drop_back: back }).unwrap();
        prop_assert_eq!(y.data(), &(front..front + extra).map(|i| i as f64).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn kfold_partitions_and_stratifies(n_h in 5usize..40, n_i in 5usize..40, k in 2usize..6, seed in any::<u64>()) {
        let y = labels(n_h, n_i);
        let split = stratified_kfold(&y, k, seed).unwrap();
        prop_assert_eq!(split.folds.len(), k);
        let mut seen = BTreeSet::new();
        for f in &split.folds {
            let train: BTreeSet<_> = f.train.iter().copied().collect();
            prop_assert!(f.test.iter().all(|i| !train.contains(i)));
            prop_assert_eq!(train.len() + f.test.len(), y.len());
            for &i in &f.test {
                prop_assert!(seen.insert(i), "index {} tested twice", i);
            }
            // Each class is spread over folds as evenly as possible.
            let h = f.test.iter().filter(|&&i| y[i] == Label::Healthy).count();
            prop_assert!(h >= n_h / k && h <= n_h.div_ceil(k));
        }
        prop_assert_eq!(seen.len(), y.len());
        prop_assert_eq!(stratified_kfold(&y, k, seed).unwrap(), split);
    }

    #[test]
    fn metrics_are_consistent(truth in prop::collection::vec(any::<bool>(), 1..60), flips in prop::collection::vec(any::<bool>(), 60)) {
        let t: Vec<Label> = truth.iter().map(|&b| if b { Label::Infected } else { Label::Healthy }).collect();
        let p: Vec<Label> = t.iter().zip(&flips).map(|(&l, &f)| if f { Label::from_index(1 - l.index()) } else { l }).collect();
        let cm = confusion(&t, &p).unwrap();
        prop_assert_eq!(cm.total() as usize, t.len());
        let m = metrics(&cm).unwrap();
        let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        prop_assert!((m.accuracy - correct as f64 / t.len() as f64).abs() < 1e-12);
        prop_assert!((m.mse - (1.0 - m.accuracy)).abs() < 1e-12);
        for c in &m.per_class {
            prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.recall));
            prop_assert!((0.0..=1.0).contains(&c.f1));
        }
        let n = cm.normalized();
        for (row, counts) in n.iter().zip(cm.counts) {
            let s: f64 = row.iter().sum();
            let ok = if counts.iter().sum::<u64>() == 0 { s == 0.0 } else { (s - 1.0).abs() < 1e-12 };
            prop_assert!(ok);
        }
    }

    #[test]
    fn merged_confusion_adds(a in prop::array::uniform4(0u64..50), b in prop::array::uniform4(0u64..50)) {
        let ca = ConfusionMatrix::from_counts([[a[0], a[1]], [a[2], a[3]]]);
        let cb = ConfusionMatrix::from_counts([[b[0], b[1]], [b[2], b[3]]]);
        let mut m = ca.clone();
        m.merge(&cb);
        prop_assert_eq!(m.total(), ca.total() + cb.total());
        prop_assert_eq!(m.correct(), ca.correct() + cb.correct());
    }

    #[test]
    fn crossover_swaps_a_segment(
        a in prop::collection::vec(7usize..=107, 5),
        b in prop::collection::vec(7usize..=107, 5),
        (p, q) in (0usize..=5, 0usize..=5).prop_map(|(x, y)| (x.min(y), x.max(y))),
    ) {
        let (x, y) = crossover_at(&Chromosome::new(a.clone()), &Chromosome::new(b.clone()), p, q);
        for i in 0..5 {
            let inside = (p..q).contains(&i);
            prop_assert_eq!(x.genes()[i], if inside { b[i] } else { a[i] });
            prop_assert_eq!(y.genes()[i], if inside { a[i] } else { b[i] });
        }
    }

    #[test]
    fn mutation_stays_in_range(genes in prop::collection::vec(7usize..=107, 5), prob in 0.0f64..=1.0, seed in any::<u64>()) {
        let range = 7..=107;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mutate_uniform_int(&Chromosome::new(genes.clone()), prob, &range, &mut rng);
        prop_assert_eq!(m.genes().len(), 5);
        prop_assert!(m.genes().iter().all(|g| range.contains(g)));
        if prob == 0.0 {
            prop_assert_eq!(m.genes(), &genes[..]);
        }
    }

    #[test]
    fn gene_slots_agree_between_spaces(gene in 7usize..=107) {
        let binned = gene_to_slot(gene, 116).unwrap();
        let trimmed = gene_to_slot(gene, 101).unwrap();
        prop_assert_eq!(binned, trimmed + 6);
    }
}

#[test]
fn wavelengths_increase_over_every_band() {
    let w: Vec<f64> = (1..=116).map(|b| wavelength_of_band(b).unwrap()).collect();
    assert!(w.windows(2).all(|p| p[1] > p[0]));
    assert!(wavelength_of_band(0).is_err() && wavelength_of_band(117).is_err());
}
