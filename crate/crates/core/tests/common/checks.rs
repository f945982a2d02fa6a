//! Randomized instance checks shared by the oracle tests and the
//! acceptance runner. Each returns a short summary or the first mismatch.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use oswb::circular::{circular_error_deg, vector_mean_deg};
use oswb::coloc::{build_matchup_table, ColocCriteria, MatchValue};
use oswb::detect_eval::{f1, iou, match_detections, BBox};
use oswb::embed_store::{EmbeddingSet, GridView, Labels};
use oswb::probes::{ridge_fit, run_probe_benchmark, DistanceMetric, Prediction, ProbeConfig, ProbeKind, Weighting};
use oswb::pruning::{kcenter_greedy, PruneConfig, PruneMetric, SeedStrategy};
use oswb::simmap::similarity_map;
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;

/// One random kNN instance (classification and regression share the
/// data). Returns the time spent inside the probe.
pub fn knn_instance(seed: u64, max_n: usize, max_dim: usize, n_queries: usize) -> Result<Duration, String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max_n);
    let dim = r.gen_range(1..=max_dim);
    let n_classes = r.gen_range(2..=10);
    let k = r.gen_range(1..=30);
    let metric = if r.gen_bool(0.5) { DistanceMetric::Cosine } else { DistanceMetric::Euclidean };
    let temperature = match r.gen_range(0..3) {
        0 => None,
        1 => Some(0.07),
        _ => Some(1.0),
    };
    let mut train = gaussian_rows(&mut r, n, dim);
    // exact duplicates exercise the tie order
    for i in 0..n / 10 {
        let src = r.gen_range(0..n);
        let dst = (i * 7 + 3) % n;
        let row: Vec<f32> = train[src * dim..(src + 1) * dim].to_vec();
        train[dst * dim..(dst + 1) * dim].copy_from_slice(&row);
    }
    let mut queries = gaussian_rows(&mut r, n_queries, dim);
    for q in 0..n_queries / 20 {
        let src = r.gen_range(0..n);
        queries[q * dim..(q + 1) * dim].copy_from_slice(&train[src * dim..(src + 1) * dim]);
    }
    let class_train: Vec<usize> = (0..n).map(|_| r.gen_range(0..n_classes)).collect();
    let class_test: Vec<usize> = (0..n_queries).map(|_| r.gen_range(0..n_classes)).collect();
    let y_train: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
    let y_test: Vec<f64> = (0..n_queries).map(|_| r.gen_range(-5.0..5.0)).collect();
    // shuffled ids so the id tie-break differs from row order
    let mut train_ids = ids("t", n);
    train_ids.shuffle(&mut r);
    let test_ids = ids("q", n_queries);

    let weighting = match temperature {
        None => Weighting::Uniform,
        Some(t) => Weighting::Softmax { temperature: t },
    };
    let mut elapsed = Duration::ZERO;
    let tr = labeled_classes(train_ids.clone(), dim, train.clone(), class_train.clone(), n_classes);
    let te = labeled_classes(test_ids.clone(), dim, queries.clone(), class_test, n_classes);
    let cfg = ProbeConfig { k, metric, weighting, ..ProbeConfig::new(ProbeKind::KnnClassify) };
    let t = Instant::now();
    let res = run_probe_benchmark(&tr, &te, &cfg, seed).map_err(|e| e.to_string())?;
    elapsed += t.elapsed();
    for (q, qr) in res.queries.iter().enumerate() {
        let nb = oracle_neighbors(&tr, &queries[q * dim..(q + 1) * dim], k, metric);
        let want = format!("c{}", oracle_classify(&nb, &class_train, n_classes, temperature));
        if qr.prediction != Prediction::Class(want.clone()) {
            return Err(format!("seed {seed}: query {q} classified {:?}, oracle {want}", qr.prediction));
        }
    }

    let tr = labeled_scalars(train_ids, dim, train, y_train.clone());
    let te = labeled_scalars(test_ids, dim, queries.clone(), y_test);
    let cfg = ProbeConfig { kind: ProbeKind::KnnRegress, ..cfg };
    let t = Instant::now();
    let res = run_probe_benchmark(&tr, &te, &cfg, seed).map_err(|e| e.to_string())?;
    elapsed += t.elapsed();
    for (q, qr) in res.queries.iter().enumerate() {
        let nb = oracle_neighbors(&tr, &queries[q * dim..(q + 1) * dim], k, metric);
        let want = oracle_regress(&nb, &y_train, temperature);
        if qr.prediction != Prediction::Value(want) {
            return Err(format!("seed {seed}: query {q} regressed {:?}, oracle {want}", qr.prediction));
        }
    }
    Ok(elapsed)
}

/// Indexed matching against all-pairs matching under one criteria set.
/// Returns the number of matched images.
pub fn coloc_instance(seed: u64, max_images: usize, max_refs: usize, c: &ColocCriteria) -> Result<usize, String> {
    let mut r = rng(seed);
    let n_images = r.gen_range(1..=max_images);
    let n_refs = r.gen_range(0..=max_refs);
    let (images, refs) = random_coloc_instance(&mut r, n_images, n_refs);
    let table = build_matchup_table(&images, &refs, c).map_err(|e| e.to_string())?;
    let oracle = oracle_matchups(&images, &refs, c);
    if table.rows.len() != oracle.len() {
        return Err(format!("seed {seed}: {} indexed matchups, {} all-pairs", table.rows.len(), oracle.len()));
    }
    for (got, want) in table.rows.iter().zip(&oracle) {
        let mut got_refs = got.ref_indices.clone();
        got_refs.sort_unstable();
        if got.image_id != want.image_id || got_refs != want.ref_indices {
            return Err(format!(
                "seed {seed}: {} matched {:?}, all-pairs gives {} with {:?}",
                got.image_id, got.ref_indices, want.image_id, want.ref_indices
            ));
        }
        let values = match got.value {
            MatchValue::Swh { swh_m } => vec![swh_m],
            MatchValue::Wind { wind_speed_ms, wind_dir_deg } => vec![wind_speed_ms, wind_dir_deg],
        };
        let close = values.len() == want.values.len()
            && values.iter().zip(&want.values).enumerate().all(|(i, (a, b))| {
                if i == 1 {
                    circular_error_deg(*a, *b) <= 1e-9
                } else {
                    (a - b).abs() <= 1e-9
                }
            });
        if !close {
            return Err(format!("seed {seed}: {} value {values:?} vs {:?}", got.image_id, want.values));
        }
    }
    Ok(oracle.len())
}

pub fn circular_checks() -> Result<(), String> {
    let m = vector_mean_deg(&[350.0, 10.0], None).ok_or("no mean for {350, 10}")?;
    if circular_error_deg(m, 0.0) > 1e-6 {
        return Err(format!("mean of 350 and 10 is {m}"));
    }
    for p in 0..360 {
        for t in 0..360 {
            let d = (p as f64 - t as f64).abs();
            let want = d.min(360.0 - d);
            let got = circular_error_deg(p as f64, t as f64);
            if got != want {
                return Err(format!("circular_error({p}, {t}) = {got}, expected {want}"));
            }
        }
    }
    Ok(())
}

/// Fixed IoU case against the closed form and the raster count.
pub fn iou_fixed_case() -> Result<(), String> {
    let a = BBox::gt(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = BBox::gt(1.0, 1.0, 3.0, 3.0).unwrap();
    let v = iou(&a, &b);
    let raster = raster_iou((0.0, 0.0, 2.0, 2.0), (1.0, 1.0, 3.0, 3.0), 100);
    if (v - 1.0 / 7.0).abs() > 1e-9 || (raster - 1.0 / 7.0).abs() > 1e-9 {
        return Err(format!("iou {v}, raster {raster}"));
    }
    Ok(())
}

/// Random boxes: raster IoU agreement and greedy vs exhaustive matching.
/// Returns `(images, images where greedy found fewer TPs)`.
pub fn detection_instances(seed: u64, n: usize) -> Result<(usize, usize), String> {
    let mut r = rng(seed);
    let mut images = 0;
    let mut short = 0;
    for inst in 0..n {
        let (preds, gts) = random_detection_image(&mut r);
        for p in &preds {
            for g in &gts {
                // a 20-cell lattice over integer-snapped boxes gives exact counts
                let snap = |b: &BBox| (b.x_min.round(), b.y_min.round(), b.x_max.round().max(b.x_min.round() + 1.0), b.y_max.round().max(b.y_min.round() + 1.0));
                let (sa, sb) = (snap(p), snap(g));
                let want = raster_iou(sa, sb, 20);
                let got = iou(&BBox::gt(sa.0, sa.1, sa.2, sa.3).unwrap(), &BBox::gt(sb.0, sb.1, sb.2, sb.3).unwrap());
                if (got - want).abs() > 1e-9 {
                    return Err(format!("instance {inst}: iou {got} vs raster {want}"));
                }
            }
        }
        let greedy = match_detections(&preds, &gts, 0.1, 0.5).counts;
        let best = oracle_max_tp(&preds, &gts, 0.1, 0.5);
        images += 1;
        if greedy.tp > best {
            return Err(format!("instance {inst}: greedy TP {} exceeds the optimum {best}", greedy.tp));
        }
        if greedy.tp < best {
            short += 1;
            if greedy.tp + 1 < best {
                return Err(format!("instance {inst}: greedy TP {} vs optimum {best}", greedy.tp));
            }
        }
    }
    Ok((images, short))
}

/// TP=2, FP=1, FN=0 through the matcher.
pub fn detection_constructed_case() -> Result<(), String> {
    let gts = vec![BBox::gt(0.0, 0.0, 10.0, 10.0).unwrap(), BBox::gt(20.0, 20.0, 30.0, 30.0).unwrap()];
    let preds = vec![
        BBox::pred(0.0, 0.0, 10.0, 10.0, 0.9).unwrap(),
        BBox::pred(21.0, 21.0, 31.0, 31.0, 0.8).unwrap(),
        BBox::pred(50.0, 50.0, 60.0, 60.0, 0.7).unwrap(),
        BBox::pred(0.0, 0.0, 10.0, 10.0, 0.2).unwrap(),
    ];
    let c = match_detections(&preds, &gts, 0.1, 0.5).counts;
    let v = f1(c.tp, c.fp, c.fn_).map_err(|e| e.to_string())?;
    if (c.tp, c.fp, c.fn_) != (2, 1, 0) || v != 0.8 {
        return Err(format!("counts {c:?}, F1 {v}"));
    }
    Ok(())
}

/// Greedy k-center radius against the exhaustive optimum. Returns the
/// worst observed ratio.
pub fn kcenter_instances(seed: u64, n_instances: usize) -> Result<f64, String> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for inst in 0..n_instances {
        let n = r.gen_range(1..=12);
        let m = r.gen_range(1..=n.min(4));
        let dim = r.gen_range(1..=4);
        let data: Vec<f32> = (0..n * dim).map(|_| r.gen_range(-10.0f32..10.0)).collect();
        let set = EmbeddingSet::new(ids("p", n), dim, data.clone()).unwrap();
        let cfg = PruneConfig { metric: PruneMetric::Euclidean, ..PruneConfig::new(m) };
        let greedy = kcenter_greedy(&set, &cfg).map_err(|e| e.to_string())?;
        let points: Vec<&[f32]> = data.chunks(dim).collect();
        let opt = oracle_kcenter_radius(&points, m);
        if greedy.coverage_radius > 2.0 * opt + 1e-9 {
            return Err(format!("instance {inst}: greedy radius {} > 2 × optimum {opt}", greedy.coverage_radius));
        }
        if opt > 0.0 {
            worst = worst.max(greedy.coverage_radius / opt);
        }
    }
    Ok(worst)
}

pub fn kcenter_line() -> Result<(), String> {
    let set = EmbeddingSet::new(ids("x", 10), 1, (0..10).map(|i| i as f32).collect()).unwrap();
    let cfg = PruneConfig { metric: PruneMetric::Euclidean, seed_strategy: SeedStrategy::FixedIndex(0), ..PruneConfig::new(2) };
    let res = kcenter_greedy(&set, &cfg).map_err(|e| e.to_string())?;
    let picked: HashSet<usize> = res.selected.iter().copied().collect();
    if picked != HashSet::from([0, 9]) {
        return Err(format!("selected {:?}", res.selected));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn ridge_exact_fit() -> Result<(), String> {
    let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.5 - 1.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let m = ridge_fit(&x, 1, &y, 0.0).map_err(|e| e.to_string())?;
    if (m.weights[0] - 2.0).abs() > 1e-9 || m.bias.abs() > 1e-9 {
        return Err(format!("w = {}, b = {}", m.weights[0], m.bias));
    }
    Ok(())
}

/// ‖w‖ never grows along λ ∈ {0, 0.01, 0.1, 1, 10}.
pub fn ridge_shrinkage(seed: u64, instances: usize) -> Result<(), String> {
    let mut r = rng(seed);
    for inst in 0..instances {
        let n = r.gen_range(20..60);
        let p = r.gen_range(1..8);
        let x: Vec<f64> = (0..n * p).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = (0..n).map(|i| (0..p).map(|j| x[i * p + j] * (j as f64 - 1.5)).sum::<f64>() + normal(&mut r)).collect();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let w = norm(&ridge_fit(&x, p, &y, lambda).map_err(|e| e.to_string())?.weights);
            if w > last * (1.0 + 1e-12) {
                return Err(format!("instance {inst}: ‖w‖ grew to {w} at λ = {lambda} (was {last})"));
            }
            last = w;
        }
    }
    Ok(())
}

/// kNN accuracy (percent) on 10 balanced classes of pure noise.
pub fn chance_accuracy(seed: u64, n_train: usize, n_queries: usize, dim: usize) -> f64 {
    let mut r = rng(seed);
    let mut labels_train: Vec<usize> = (0..n_train).map(|i| i % 10).collect();
    let mut labels_test: Vec<usize> = (0..n_queries).map(|i| i % 10).collect();
    labels_train.shuffle(&mut r);
    labels_test.shuffle(&mut r);
    let tr = labeled_classes(ids("t", n_train), dim, gaussian_rows(&mut r, n_train, dim), labels_train, 10);
    let te = labeled_classes(ids("q", n_queries), dim, gaussian_rows(&mut r, n_queries, dim), labels_test, 10);
    let res = run_probe_benchmark(&tr, &te, &ProbeConfig::default(), seed).unwrap();
    assert!(matches!(tr.labels(), Labels::Class { .. }));
    res.metrics[0].value
}

/// Reference patch of random grids scores 1.
pub fn simmap_reference_cells(seed: u64, n: usize) -> Result<(), String> {
    let mut r = rng(seed);
    for inst in 0..n {
        let (rows, cols, dim) = (r.gen_range(1..=8), r.gen_range(1..=8), r.gen_range(1..=32));
        let data: Vec<f32> = (0..rows * cols * dim).map(|_| r.gen_range(-3.0f32..3.0)).collect();
        let grid = GridView::new(rows, cols, dim, &data).unwrap();
        let reference = (r.gen_range(0..rows), r.gen_range(0..cols));
        let map = similarity_map(grid, reference).map_err(|e| e.to_string())?;
        let v = map.get(reference.0, reference.1);
        if (v - 1.0).abs() > 1e-6 {
            return Err(format!("instance {inst}: reference value {v}"));
        }
    }
    Ok(())
}
