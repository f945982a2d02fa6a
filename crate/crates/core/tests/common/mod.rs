//! Shared generators, brute-force oracles and golden-file helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub mod checks;

use oswb::coloc::{write_refs_csv, ColocCriteria, RefKind, RefMeasurement, SpatialGate, TieBreak, ANY_FLAG};
use oswb::detect_eval::BBox;
use oswb::embed_store::{
    write_embedding_file, write_meta_sidecar, ClassSet, EmbeddingSet, GeoMeta, ImageMeta, LabeledSet, Labels, Timestamp, Unit,
    TENGEOP_CLASSES,
};
use oswb::probes::DistanceMetric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal via Box-Muller.
pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.gen_range(f64::EPSILON..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gaussian_rows(r: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f32> {
    (0..n * dim).map(|_| normal(r) as f32).collect()
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

pub fn class_set_of(n_classes: usize) -> ClassSet {
    let names: Vec<String> = (0..n_classes).map(|c| format!("c{c}")).collect();
    ClassSet::new(&names).unwrap()
}

pub fn labeled_classes(ids: Vec<String>, dim: usize, vectors: Vec<f32>, labels: Vec<usize>, n_classes: usize) -> LabeledSet {
    LabeledSet::new(ids, dim, vectors, Labels::Class { classes: class_set_of(n_classes), values: labels }).unwrap()
}

pub fn labeled_scalars(ids: Vec<String>, dim: usize, vectors: Vec<f32>, values: Vec<f64>) -> LabeledSet {
    LabeledSet::new(ids, dim, vectors, Labels::Scalar { unit: Unit::Meters, values }).unwrap()
}

// ------------------------------------------------------------------ kNN

/// Every training row scored and fully sorted: score descending, then id.
/// Cosine scores use the same normalize-then-dot arithmetic as the probe so
/// that exact ties resolve identically.
pub fn oracle_neighbors(train: &LabeledSet, query: &[f32], k: usize, metric: DistanceMetric) -> Vec<(usize, f64)> {
    let unit = |v: &[f32]| -> Vec<f64> {
        let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    };
    let q: Vec<f64> = match metric {
        DistanceMetric::Cosine => unit(query),
        DistanceMetric::Euclidean => query.iter().map(|&x| x as f64).collect(),
    };
    let mut all: Vec<(usize, f64)> = (0..train.len())
        .map(|i| {
            let t: Vec<f64> = match metric {
                DistanceMetric::Cosine => unit(train.vector(i)),
                DistanceMetric::Euclidean => train.vector(i).iter().map(|&x| x as f64).collect(),
            };
            let s = match metric {
                DistanceMetric::Cosine => {
                    let mut s = 0.0;
                    for j in 0..q.len() {
                        s += q[j] * t[j];
                    }
                    s
                }
                DistanceMetric::Euclidean => {
                    let mut s = 0.0;
                    for j in 0..q.len() {
                        s += (q[j] - t[j]) * (q[j] - t[j]);
                    }
                    -s.sqrt()
                }
            };
            (i, s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| train.ids()[a.0].cmp(&train.ids()[b.0])));
    all.truncate(k);
    all
}

fn softmax(nb: &[(usize, f64)], temperature: Option<f64>) -> Vec<f64> {
    match temperature {
        None => vec![1.0; nb.len()],
        Some(t) => {
            let top = nb.iter().map(|n| n.1).fold(f64::NEG_INFINITY, f64::max);
            nb.iter().map(|n| ((n.1 - top) / t).exp()).collect()
        }
    }
}

/// Weighted vote; the first declared class wins ties.
pub fn oracle_classify(nb: &[(usize, f64)], labels: &[usize], n_classes: usize, temperature: Option<f64>) -> usize {
    let mut votes = vec![0.0; n_classes];
    for (n, w) in nb.iter().zip(softmax(nb, temperature)) {
        votes[labels[n.0]] += w;
    }
    let top = votes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    votes.iter().position(|&v| v == top).unwrap()
}

pub fn oracle_regress(nb: &[(usize, f64)], targets: &[f64], temperature: Option<f64>) -> f64 {
    let w = softmax(nb, temperature);
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, w) in nb.iter().zip(w) {
        num += w * targets[n.0];
        den += w;
    }
    num / den
}

// ------------------------------------------------------------------ co-location

const R_KM: f64 = 6371.0088;

pub fn oracle_haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R_KM * h.sqrt().min(1.0).asin()
}

/// Gnomonic projection via the spherical-trigonometry formulas.
fn oracle_gnomonic_km(center: (f64, f64), p: (f64, f64)) -> Option<(f64, f64)> {
    let (p0, l0) = (center.0.to_radians(), center.1.to_radians());
    let (p1, l1) = (p.0.to_radians(), p.1.to_radians());
    let cos_c = p0.sin() * p1.sin() + p0.cos() * p1.cos() * (l1 - l0).cos();
    if cos_c <= 0.0 {
        return None;
    }
    let x = p1.cos() * (l1 - l0).sin() / cos_c;
    let y = (p0.cos() * p1.sin() - p0.sin() * p1.cos() * (l1 - l0).cos()) / cos_c;
    Some((R_KM * x, R_KM * y))
}

fn oracle_dlon(a: f64, b: f64) -> f64 {
    let mut d = b - a;
    while d > 180.0 {
        d -= 360.0;
    }
    while d <= -180.0 {
        d += 360.0;
    }
    d
}

pub fn oracle_admits(c: &ColocCriteria, img: &GeoMeta, r: &RefMeasurement) -> bool {
    if r.kind != c.target || (r.time.0 - img.timestamp.0).abs() > c.max_dt_s {
        return false;
    }
    let flags_ok = if c.require_flags_clear.contains(ANY_FLAG) {
        r.flags.is_empty()
    } else {
        r.flags.iter().all(|f| !c.require_flags_clear.contains(f))
    };
    let spatial = match c.spatial_gate {
        SpatialGate::LatlonBoxDeg { half_width_deg } => {
            (r.lat - img.lat).abs() <= half_width_deg && oracle_dlon(img.lon, r.lon).abs() <= half_width_deg
        }
        SpatialGate::Footprint => oracle_gnomonic_km((img.lat, img.lon), (r.lat, r.lon))
            .is_some_and(|(x, y)| x.abs() <= img.footprint_half_width_km && y.abs() <= img.footprint_half_width_km),
        SpatialGate::GreatCircleKm { radius_km } => oracle_haversine_km((img.lat, img.lon), (r.lat, r.lon)) <= radius_km,
    };
    flags_ok && spatial
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatch {
    pub image_id: String,
    pub ref_indices: Vec<usize>,
    /// SWH, or wind speed and direction.
    pub values: Vec<f64>,
}

/// All-pairs matching: every image against every record.
pub fn oracle_matchups(images: &[ImageMeta], refs: &[RefMeasurement], c: &ColocCriteria) -> Vec<OracleMatch> {
    let mut out = Vec::new();
    for img in images {
        let admitted: Vec<usize> = (0..refs.len()).filter(|&i| oracle_admits(c, &img.meta, &refs[i])).collect();
        if admitted.is_empty() {
            continue;
        }
        let dist = |i: usize| oracle_haversine_km((img.meta.lat, img.meta.lon), (refs[i].lat, refs[i].lon));
        let chosen: Vec<usize> = match c.tie_break {
            TieBreak::Closest => {
                let mut best = admitted[0];
                for &i in &admitted[1..] {
                    let (di, db) = (dist(i), dist(best));
                    let (ti, tb) = ((refs[i].time.0 - img.meta.timestamp.0).abs(), (refs[best].time.0 - img.meta.timestamp.0).abs());
                    if di < db || (di == db && ti < tb) {
                        best = i;
                    }
                }
                vec![best]
            }
            TieBreak::Mean => admitted,
        };
        let n = chosen.len() as f64;
        let values = match c.target {
            RefKind::AltimeterSwh => vec![chosen.iter().map(|&i| refs[i].swh_m.unwrap()).sum::<f64>() / n],
            RefKind::ScatWind => {
                let speed = chosen.iter().map(|&i| refs[i].wind_speed_ms.unwrap()).sum::<f64>() / n;
                let (s, co) = chosen.iter().fold((0.0, 0.0), |(s, co), &i| {
                    let a = refs[i].wind_dir_deg.unwrap().to_radians();
                    (s + a.sin(), co + a.cos())
                });
                vec![speed, s.atan2(co).to_degrees().rem_euclid(360.0)]
            }
        };
        out.push(OracleMatch { image_id: img.image_id.clone(), ref_indices: chosen, values });
    }
    out
}

/// Images in a random region (sometimes straddling the antimeridian) and
/// records scattered around them, half close to some image.
pub fn random_coloc_instance(r: &mut ChaCha8Rng, n_images: usize, n_refs: usize) -> (Vec<ImageMeta>, Vec<RefMeasurement>) {
    let lat0 = r.gen_range(-70.0..70.0);
    let lon0: f64 = if r.gen_bool(0.3) { 179.0 } else { r.gen_range(-180.0..180.0) };
    let t0 = 1_500_000_000i64;
    let wrap = |lon: f64| (lon + 180.0).rem_euclid(360.0) - 180.0;
    let images: Vec<ImageMeta> = (0..n_images)
        .map(|i| ImageMeta {
            image_id: format!("img{i:04}"),
            meta: GeoMeta {
                timestamp: Timestamp(t0 + r.gen_range(0..43_200)),
                lat: lat0 + r.gen_range(-5.0..5.0),
                lon: wrap(lon0 + r.gen_range(-5.0..5.0)),
                footprint_half_width_km: if r.gen_bool(0.5) { 10.0 } else { r.gen_range(2.0..25.0) },
            },
        })
        .collect();
    let refs = (0..n_refs)
        .map(|_| {
            let (lat, lon, t) = if r.gen_bool(0.5) && !images.is_empty() {
                let img = &images[r.gen_range(0..images.len())].meta;
                let scale = if r.gen_bool(0.5) { 0.15 } else { 2.5 };
                (
                    (img.lat + r.gen_range(-scale..scale)).clamp(-90.0, 90.0),
                    wrap(img.lon + r.gen_range(-scale..scale)),
                    img.timestamp.0 + r.gen_range(-12_000..12_000),
                )
            } else {
                (lat0 + r.gen_range(-7.0..7.0), wrap(lon0 + r.gen_range(-7.0..7.0)), t0 + r.gen_range(-10_000..53_200))
            };
            let mut m = if r.gen_bool(0.5) {
                RefMeasurement::swh(Timestamp(t), lat, lon, r.gen_range(0.0..8.0))
            } else {
                RefMeasurement::wind(Timestamp(t), lat, lon, r.gen_range(0.0..25.0), r.gen_range(0.0..360.0))
            };
            if r.gen_bool(0.2) {
                m = m.with_flag("rain_flag");
            }
            if r.gen_bool(0.1) {
                m = m.with_flag("qc_fail");
            }
            m
        })
        .collect();
    (images, refs)
}

// ------------------------------------------------------------------ detection

/// IoU by counting the centres of a `1/cells`-spaced lattice inside each box.
pub fn raster_iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), cells: usize) -> f64 {
    let inside = |bx: (f64, f64, f64, f64), x: f64, y: f64| x >= bx.0 && x <= bx.2 && y >= bx.1 && y <= bx.3;
    let x_lo = a.0.min(b.0);
    let y_lo = a.1.min(b.1);
    let x_hi = a.2.max(b.2);
    let y_hi = a.3.max(b.3);
    let nx = ((x_hi - x_lo) * cells as f64).round() as usize;
    let ny = ((y_hi - y_lo) * cells as f64).round() as usize;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..nx {
        for j in 0..ny {
            let x = x_lo + (i as f64 + 0.5) / cells as f64;
            let y = y_lo + (j as f64 + 0.5) / cells as f64;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    inter as f64 / union as f64
}

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Largest number of one-to-one prediction/ground-truth pairs with IoU at
/// or above the threshold, found by trying every assignment.
pub fn oracle_max_tp(preds: &[BBox], gts: &[BBox], iou_thresh: f64, score_thresh: f64) -> usize {
    let kept: Vec<&BBox> = preds.iter().filter(|p| p.score.unwrap_or(1.0) >= score_thresh).collect();
    fn go(i: usize, kept: &[&BBox], gts: &[BBox], used: &mut Vec<bool>, thr: f64) -> usize {
        if i == kept.len() {
            return 0;
        }
        let mut best = go(i + 1, kept, gts, used, thr);
        for g in 0..gts.len() {
            if !used[g] && oracle_iou(kept[i], &gts[g]) >= thr {
                used[g] = true;
                best = best.max(1 + go(i + 1, kept, gts, used, thr));
                used[g] = false;
            }
        }
        best
    }
    go(0, &kept, gts, &mut vec![false; gts.len()], iou_thresh)
}

pub fn random_box(r: &mut ChaCha8Rng, score: Option<f64>) -> BBox {
    let x = r.gen_range(0.0..20.0);
    let y = r.gen_range(0.0..20.0);
    let w = r.gen_range(0.5..8.0);
    let h = r.gen_range(0.5..8.0);
    BBox::new(x, y, x + w, y + h, score).unwrap()
}

/// Ground truth plus predictions that are jittered copies, duplicates or
/// strays.
pub fn random_detection_image(r: &mut ChaCha8Rng) -> (Vec<BBox>, Vec<BBox>) {
    let gts: Vec<BBox> = (0..r.gen_range(0..=6)).map(|_| random_box(r, None)).collect();
    let n_preds = r.gen_range(0..=6);
    let preds = (0..n_preds)
        .map(|_| {
            let score = Some(r.gen_range(0.0..1.0));
            if !gts.is_empty() && r.gen_bool(0.7) {
                let g = &gts[r.gen_range(0..gts.len())];
                let j = |r: &mut ChaCha8Rng| r.gen_range(-2.0..2.0);
                let (x0, y0) = (g.x_min + j(r), g.y_min + j(r));
                let (w, h) = ((g.x_max - g.x_min + j(r)).max(0.3), (g.y_max - g.y_min + j(r)).max(0.3));
                BBox::new(x0, y0, x0 + w, y0 + h, score).unwrap()
            } else {
                random_box(r, score)
            }
        })
        .collect();
    (preds, gts)
}

// ------------------------------------------------------------------ pruning

pub fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>().sqrt()
}

pub fn radius_of(points: &[&[f32]], centers: &[usize]) -> f64 {
    points.iter().map(|p| centers.iter().map(|&c| euclid(p, points[c])).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Smallest covering radius over every `m`-subset.
pub fn oracle_kcenter_radius(points: &[&[f32]], m: usize) -> f64 {
    fn go(start: usize, m: usize, cur: &mut Vec<usize>, points: &[&[f32]], best: &mut f64) {
        if cur.len() == m {
            *best = best.min(radius_of(points, cur));
            return;
        }
        for i in start..points.len() {
            cur.push(i);
            go(i + 1, m, cur, points, best);
            cur.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(0, m, &mut Vec::new(), points, &mut best);
    best
}

// ------------------------------------------------------------------ synthetic fixture

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// The committed end-to-end fixture: 100 images over the ten TenGeoP
/// classes with 4×4 patch grids, a metadata sidecar, altimeter and
/// scatterometer records, detection boxes and five manifests. Only
/// arithmetic is used, so the bytes do not depend on the platform libm.
pub fn synthetic_fixture() -> BTreeMap<&'static str, Vec<u8>> {
    let mut r = rng(20_240_601);
    let (n, dim, grid) = (100usize, 8usize, 4usize);
    let centers: Vec<Vec<f64>> = (0..10).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let slope: Vec<f64> = (0..dim).map(|_| r.gen_range(-0.5..0.5)).collect();
    let image_ids: Vec<String> = (0..n).map(|i| format!("s1a-wv-{i:03}")).collect();
    let mut rows = Vec::new();
    let mut patches = Vec::new();
    let mut classes = Vec::new();
    let mut latent = Vec::new();
    for i in 0..n {
        let c = i % 10;
        let z: f64 = r.gen_range(0.0..1.0);
        let v: Vec<f32> = (0..dim).map(|j| (centers[c][j] + z * slope[j] + r.gen_range(-0.25..0.25)) as f32).collect();
        for _ in 0..grid * grid {
            patches.extend(v.iter().map(|&x| x + r.gen_range(-0.5f32..0.5)));
        }
        rows.push(v);
        classes.push(c);
        latent.push(z);
    }
    let set = EmbeddingSet::from_rows(image_ids.clone(), dim, &rows).unwrap().with_patches(grid, grid, patches).unwrap();

    let t0 = 1_456_826_400i64;
    let meta: Vec<ImageMeta> = (0..n)
        .map(|i| ImageMeta {
            image_id: image_ids[i].clone(),
            meta: GeoMeta {
                timestamp: Timestamp(t0 + 3600 * i as i64 + r.gen_range(0..600)),
                lat: round3(r.gen_range(-55.0..55.0)),
                lon: round3(r.gen_range(-180.0..180.0)),
                footprint_half_width_km: 10.0,
            },
        })
        .collect();

    let mut refs = Vec::new();
    for i in 0..n {
        let m = &meta[i].meta;
        let z = latent[i];
        let wrap = |lon: f64| round3((lon + 180.0).rem_euclid(360.0) - 180.0);
        if i % 5 != 4 {
            for k in 0..2 {
                let d = if k == 0 { 0.4 } else { 1.6 };
                let mut rec = RefMeasurement::swh(
                    Timestamp(m.timestamp.0 + r.gen_range(-9000..9000)),
                    round3(m.lat + r.gen_range(-d..d)),
                    wrap(m.lon + r.gen_range(-d..d)),
                    round3(1.0 + 4.0 * z + r.gen_range(-0.2..0.2)),
                );
                if k == 1 && i % 7 == 0 {
                    rec = rec.with_flag("qc_fail");
                }
                refs.push(rec);
            }
        }
        if i % 4 != 3 {
            for _ in 0..3 {
                // ~0.05° is about 5 km, inside the 10 km half-width footprint
                let mut rec = RefMeasurement::wind(
                    Timestamp(m.timestamp.0 + r.gen_range(-1500..1500)),
                    round3(m.lat + r.gen_range(-0.05..0.05)),
                    wrap(m.lon + r.gen_range(-0.05..0.05)),
                    round3(3.0 + 10.0 * z + r.gen_range(-0.5..0.5)),
                    round3((200.0 + 120.0 * z + r.gen_range(-10.0..10.0)).rem_euclid(360.0)),
                );
                if r.gen_bool(0.15) {
                    rec = rec.with_flag("rain_flag");
                }
                refs.push(rec);
            }
        }
    }
    // decoys: stale in time or far away
    for i in (0..n).step_by(3) {
        let m = &meta[i].meta;
        refs.push(RefMeasurement::swh(Timestamp(m.timestamp.0 + 4 * 3600), m.lat, m.lon, 9.0));
        refs.push(RefMeasurement::wind(Timestamp(m.timestamp.0 + 100), (m.lat + 1.0).min(90.0), m.lon, 30.0, 0.0));
    }
    refs.sort_by(|a, b| a.time.cmp(&b.time).then(a.lat.total_cmp(&b.lat)));

    let mut labels = String::from("image_id,label\n");
    for i in 0..n {
        labels.push_str(&format!("{},{}\n", image_ids[i], TENGEOP_CLASSES[classes[i]]));
    }

    let mut det_gt = String::from("image_id,x_min,y_min,x_max,y_max\n");
    let mut det_pred = String::from("image_id,x_min,y_min,x_max,y_max,score\n");
    for (i, id) in image_ids.iter().enumerate().take(20) {
        for _ in 0..(i % 4) {
            let (x, y) = (round3(r.gen_range(0.0..200.0)), round3(r.gen_range(0.0..200.0)));
            let (w, h) = (round3(r.gen_range(5.0..30.0)), round3(r.gen_range(5.0..30.0)));
            det_gt.push_str(&format!("{id},{x},{y},{},{}\n", round3(x + w), round3(y + h)));
            if r.gen_bool(0.8) {
                let j = |r: &mut ChaCha8Rng| round3(r.gen_range(-4.0..4.0));
                let s = round3(r.gen_range(0.3..1.0));
                let (px, py) = (round3(x + j(&mut r)), round3(y + j(&mut r)));
                det_pred.push_str(&format!("{id},{px},{py},{},{},{s}\n", round3(px + w), round3(py + h)));
            }
        }
        if i % 6 == 0 {
            let s = round3(r.gen_range(0.3..1.0));
            det_pred.push_str(&format!("{id},250,250,270,270,{s}\n"));
        }
    }

    let mut meta_bytes = Vec::new();
    write_meta_sidecar(&mut meta_bytes, &meta).unwrap();
    let mut ref_bytes = Vec::new();
    write_refs_csv(&mut ref_bytes, &refs).unwrap();

    let class_list = TENGEOP_CLASSES.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ");
    let tengeop = format!(
        "schema_version = 1\nname = \"tengeop\"\nversion = 1\ntask = \"classification\"\nmetric = \"accuracy_pct\"\nclasses = [{class_list}]\n\n[split]\nkind = \"fraction\"\ntest_fraction = 0.2\nseed = 42\nmode = \"hash_rank\"\n\n[provenance]\nsensor = \"Sentinel-1 WV\"\n"
    );
    let probe_manifest = |name: &str, task: &str, metric: &str, preset: &str| {
        format!(
            "schema_version = 1\nname = \"{name}\"\nversion = 1\ntask = \"{task}\"\nmetric = \"{metric}\"\ncoloc = {{ preset = \"{preset}\" }}\n\n[split]\nkind = \"fraction\"\ntest_fraction = 0.2\nseed = 7\n"
        )
    };
    let detection = "schema_version = 1\nname = \"oil_platforms\"\nversion = 1\ntask = \"detection\"\nmetric = \"f1_at_iou\"\n\n[split]\nkind = \"fraction\"\ntest_fraction = 0.2\nseed = 0\n\n[detection]\niou_thresh = 0.1\nscore_thresh = 0.5\n";

    let mut files = BTreeMap::new();
    files.insert("embeddings.oswb", write_embedding_file(&set));
    files.insert("meta.jsonl", meta_bytes);
    files.insert("refs.csv", ref_bytes);
    files.insert("labels_tengeop.csv", labels.into_bytes());
    files.insert("det_ground_truth.csv", det_gt.into_bytes());
    files.insert("det_predictions.csv", det_pred.into_bytes());
    files.insert("tengeop.toml", tengeop.into_bytes());
    files.insert("swh.toml", probe_manifest("swh", "regression", "rmse", "standard_swh").into_bytes());
    files.insert("wspd.toml", probe_manifest("wspd", "regression", "rmse", "standard_wind").into_bytes());
    files.insert("wdir.toml", probe_manifest("wdir", "circular_regression", "circular_mae_deg", "standard_wind").into_bytes());
    files.insert("detection.toml", detection.as_bytes().to_vec());
    files
}

// ------------------------------------------------------------------ files and the binary

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/e2e")
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/golden")
}

pub fn updating_golden() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

/// Compares `bytes` with the golden file, or rewrites it when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(name: &str, bytes: &[u8]) -> Result<(), String> {
    let path = golden_dir().join(name);
    if updating_golden() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, bytes).unwrap();
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    if expected != bytes {
        return Err(format!("{} differs from the golden copy", path.display()));
    }
    Ok(())
}

pub fn oswb(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oswb"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("OSWB_OUT_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn oswb_ok(cwd: &Path, args: &[&str]) -> String {
    let out = oswb(cwd, args);
    assert!(
        out.status.success(),
        "oswb {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Copies the committed fixture into `dir`.
pub fn stage_fixture(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
    }
}

/// Runs ingest, both co-locations, every evaluation and the report inside
/// `dir`, which must hold the staged fixture. Outputs land in `dir/out`.
pub fn run_pipeline(dir: &Path) {
    oswb_ok(dir, &["ingest", "--embeddings", "embeddings.oswb", "--labels", "labels_tengeop.csv", "--meta", "meta.jsonl", "--out-dir", "out/ingest"]);
    oswb_ok(dir, &["colocate", "--meta", "meta.jsonl", "--refs", "refs.csv", "--preset", "standard_swh", "--out-dir", "out/coloc_swh"]);
    oswb_ok(dir, &["colocate", "--meta", "meta.jsonl", "--refs", "refs.csv", "--preset", "standard_wind", "--out-dir", "out/coloc_wind"]);
    let evals: [(&str, &str, &str); 4] = [
        ("tengeop.toml", "labels_tengeop.csv", "out/eval_tengeop"),
        ("swh.toml", "out/coloc_swh/labels_swh.csv", "out/eval_swh"),
        ("wspd.toml", "out/coloc_wind/labels_wind_speed.csv", "out/eval_wspd"),
        ("wdir.toml", "out/coloc_wind/labels_wind_dir.csv", "out/eval_wdir"),
    ];
    for (manifest, labels, out) in evals {
        oswb_ok(dir, &["eval", "--manifest", manifest, "--embeddings", "embeddings.oswb", "--labels", labels, "--model", "synthetic", "--out-dir", out]);
    }
    oswb_ok(
        dir,
        &["eval", "--manifest", "detection.toml", "--predictions", "det_predictions.csv", "--ground-truth", "det_ground_truth.csv", "--model", "synthetic", "--out-dir", "out/eval_detection"],
    );
    oswb_ok(
        dir,
        &[
            "report",
            "--input",
            "out/eval_tengeop/report.jsonl",
            "out/eval_swh/report.jsonl",
            "out/eval_wspd/report.jsonl",
            "out/eval_wdir/report.jsonl",
            "out/eval_detection/report.jsonl",
            "--out-dir",
            "out/report",
        ],
    );
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Pipeline outputs checked against golden copies.
pub const GOLDEN_PIPELINE_FILES: [&str; 16] = [
    "ingest/ingest.json",
    "coloc_swh/matchups.csv",
    "coloc_swh/matchup_summary.json",
    "coloc_swh/resolved_config.toml",
    "coloc_wind/matchup_summary.json",
    "coloc_wind/resolved_config.toml",
    "eval_tengeop/report.jsonl",
    "eval_tengeop/resolved_config.toml",
    "eval_swh/report.jsonl",
    "eval_wspd/report.jsonl",
    "eval_wdir/report.jsonl",
    "eval_detection/report.jsonl",
    "eval_detection/detection_report.json",
    "eval_detection/resolved_config.toml",
    "report/leaderboard.md",
    "report/leaderboard.jsonl",
];
