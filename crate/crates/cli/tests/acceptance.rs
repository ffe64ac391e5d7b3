//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use vistrack::association::{assign, Outcome};
use vistrack::evaluation::Metrics;
use vistrack::fusion::ScoreMode;
use vistrack::io;
use vistrack::pseudo_pair::{make_pair, ImageMeta, InstanceAnnotation};
use vistrack::synth::{count_id_switches, Identity, IdentityKey};
use vistrack::{
    embed_loss, evaluate, merge_tracks, rle_encode, similarity, st_iou, track_video_with_labels, AssociationConfig,
    BBox, Bitmap, CropConfig, Detection, Embedding, EvalConfig, FusionConfig, Matrix, MemoryBank, RleMask,
    SimilarityKind, SplitMix64, Track, TrackEntry, VideoGroundTruth, VideoMeta, VideoTracks,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------------ process

fn vistrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vistrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Result<Output, String> {
    let out = vistrack(args);
    ensure(out.status.success(), || {
        format!(
            "`vistrack {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p
}

// ---------------------------------------------------------------- oracles

/// Column-major pixel grid decoded by expanding runs.
fn decode(m: &RleMask) -> Vec<bool> {
    let mut out = Vec::new();
    for (k, &c) in m.counts.iter().enumerate() {
        out.extend(std::iter::repeat_n(k % 2 == 1, c as usize));
    }
    assert_eq!(out.len(), (m.height * m.width) as usize);
    out
}

fn grid_at(t: &Track, f: u32, n: usize) -> Vec<bool> {
    t.mask_at(f).map(decode).unwrap_or_else(|| vec![false; n])
}

/// Spatio-temporal IoU by counting pixels on decoded grids.
fn st_iou_grid(a: &Track, b: &Track, len: u32, n: usize) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for f in 0..len {
        let (ga, gb) = (grid_at(a, f, n), grid_at(b, f, n));
        for (x, y) in ga.iter().zip(&gb) {
            inter += u64::from(*x && *y);
            union += u64::from(*x || *y);
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

struct Oracle {
    ap: f64,
    ap50: f64,
    ap75: f64,
    ar1: f64,
    ar10: f64,
}

/// Evaluation straight from the definitions: per-video greedy matching in
/// (score desc, track id, position) order, global ranking by (score desc,
/// video id, track id, position), precision envelope sampled at k/100.
fn brute_force_eval(preds: &[VideoTracks], gts: &[VideoGroundTruth]) -> Option<Oracle> {
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let mut cats: Vec<u32> = gts.iter().flat_map(|g| g.category_set.iter().copied()).collect();
    cats.sort_unstable();
    cats.dedup();

    let ap_at = |cat: u32, t: f64| -> (f64, f64, f64) {
        let mut ranked: Vec<(f64, u64, u64, usize, bool)> = Vec::new();
        let (mut hits1, mut hits10, mut n_gt) = (0usize, 0usize, 0usize);
        for g in gts {
            let n = (g.height * g.width) as usize;
            let gt: Vec<&Track> = g.gt_tracks.iter().filter(|t| t.category_id == cat).collect();
            n_gt += gt.len();
            let empty = Vec::new();
            let pv = preds
                .iter()
                .find(|p| p.meta.video_id == g.video_id)
                .map_or(&empty, |p| &p.tracks);
            let mut order: Vec<usize> = (0..pv.len()).filter(|&i| pv[i].category_id == cat).collect();
            order.sort_by(|&a, &b| {
                pv[b]
                    .score
                    .partial_cmp(&pv[a].score)
                    .unwrap()
                    .then(pv[a].track_id.cmp(&pv[b].track_id))
                    .then(a.cmp(&b))
            });
            let mut used = vec![false; gt.len()];
            for (rank, &p) in order.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (j, gt_t) in gt.iter().enumerate() {
                    let iou = st_iou_grid(&pv[p], gt_t, g.length, n);
                    if !used[j] && iou >= t && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((j, iou));
                    }
                }
                let tp = best.is_some();
                if let Some((j, _)) = best {
                    used[j] = true;
                }
                hits1 += usize::from(tp && rank < 1);
                hits10 += usize::from(tp && rank < 10);
                ranked.push((pv[p].score, g.video_id, pv[p].track_id, p, tp));
            }
        }
        ranked.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let mut points = Vec::new();
        let mut tp = 0;
        for (i, r) in ranked.iter().enumerate() {
            tp += usize::from(r.4);
            points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
        }
        let ap = (0..=100)
            .map(|k| {
                let r = k as f64 / 100.0;
                points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 101.0;
        (ap, hits1 as f64 / n_gt as f64, hits10 as f64 / n_gt as f64)
    };

    let mut per_cat = Vec::new();
    for &c in &cats {
        let n_gt: usize = gts
            .iter()
            .flat_map(|g| &g.gt_tracks)
            .filter(|t| t.category_id == c)
            .count();
        if n_gt == 0 {
            continue;
        }
        let rows: Vec<(f64, f64, f64)> = thresholds.iter().map(|&t| ap_at(c, t)).collect();
        let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        per_cat.push(Oracle {
            ap: mean(&|r| r.0),
            ap50: ap_at(c, 0.5).0,
            ap75: ap_at(c, 0.75).0,
            ar1: mean(&|r| r.1),
            ar10: mean(&|r| r.2),
        });
    }
    if per_cat.is_empty() {
        return None;
    }
    let n = per_cat.len() as f64;
    Some(Oracle {
        ap: per_cat.iter().map(|o| o.ap).sum::<f64>() / n,
        ap50: per_cat.iter().map(|o| o.ap50).sum::<f64>() / n,
        ap75: per_cat.iter().map(|o| o.ap75).sum::<f64>() / n,
        ar1: per_cat.iter().map(|o| o.ar1).sum::<f64>() / n,
        ar10: per_cat.iter().map(|o| o.ar10).sum::<f64>() / n,
    })
}

// ------------------------------------------------------------- generators

fn random_mask(rng: &mut SplitMix64, h: u32, w: u32, density: f64) -> RleMask {
    let mut g = Bitmap::new(h, w);
    for c in 0..w {
        for r in 0..h {
            if rng.next_f64() < density {
                g.set(r, c, true);
            }
        }
    }
    rle_encode(&g)
}

fn track_from(id: u64, cat: u32, score: f64, masks: Vec<(u32, RleMask)>) -> Track {
    Track {
        track_id: id,
        category_id: cat,
        score,
        entries: masks
            .into_iter()
            .map(|(f, m)| {
                let bbox = m.bbox().unwrap_or(BBox {
                    x: 0.0,
                    y: 0.0,
                    w: 0.0,
                    h: 0.0,
                });
                (
                    f,
                    TrackEntry {
                        bbox,
                        mask: Some(m),
                        score,
                    },
                )
            })
            .collect(),
    }
}

fn random_track(rng: &mut SplitMix64, id: u64, len: u32) -> Track {
    let density = rng.uniform(0.1, 0.6);
    let mut masks = Vec::new();
    for f in 0..len {
        if rng.next_f64() < 0.75 {
            masks.push((f, random_mask(rng, 8, 8, density)));
        }
    }
    if masks.is_empty() {
        masks.push((
            rng.int_inclusive(0, len as i64 - 1) as u32,
            random_mask(rng, 8, 8, density),
        ));
    }
    track_from(id, rng.int_inclusive(1, 2) as u32, 1.0, masks)
}

/// Flips each foreground pixel off with probability `p`, keeping masks
/// recognisably close to the source.
fn perturb(rng: &mut SplitMix64, t: &Track, p: f64) -> Track {
    let mut out = t.clone();
    for e in out.entries.values_mut() {
        let m = e.mask.as_ref().unwrap();
        let bits: Vec<bool> = decode(m).into_iter().map(|b| b && rng.next_f64() >= p).collect();
        let nm = rle_encode(&Bitmap::from_column_major(m.height, m.width, bits).unwrap());
        e.mask = Some(nm);
    }
    out
}

fn micro_corpus(rng: &mut SplitMix64) -> (Vec<VideoTracks>, Vec<VideoGroundTruth>) {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for v in 1..=rng.int_inclusive(1, 3) as u64 {
        let len = rng.int_inclusive(1, 5) as u32;
        let gt: Vec<Track> = (0..rng.int_inclusive(0, 4) as u64)
            .map(|k| random_track(rng, k + 1, len))
            .collect();
        let mut pt = Vec::new();
        for k in 0..rng.int_inclusive(0, 4) as u64 {
            let mut t = if !gt.is_empty() && rng.next_f64() < 0.7 {
                let src = &gt[rng.int_inclusive(0, gt.len() as i64 - 1) as usize];
                let p = rng.uniform(0.0, 0.5);
                perturb(rng, src, p)
            } else {
                random_track(rng, 0, len)
            };
            t.track_id = 10 + k;
            // coarse scores so ties occur
            t.score = rng.int_inclusive(1, 6) as f64 / 6.0;
            if rng.next_f64() < 0.2 {
                t.category_id = 3 - t.category_id;
            }
            pt.push(t);
        }
        let meta = VideoMeta {
            video_id: v,
            height: 8,
            width: 8,
            length: len,
        };
        preds.push(VideoTracks { meta, tracks: pt });
        gts.push(VideoGroundTruth {
            video_id: v,
            height: 8,
            width: 8,
            length: len,
            gt_tracks: gt,
            category_set: vec![1, 2],
        });
    }
    (preds, gts)
}

// --------------------------------------------------------------- criteria

fn criterion_1() -> Check {
    let start = Instant::now();
    let out = run_ok(&["losscheck", "--samples", "100", "--seed", "0"])?;
    let elapsed = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let max_rel: f64 = stdout
        .split("max relative error ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| format!("unexpected output: {stdout}"))?;
    ensure(max_rel <= 1e-4, || format!("max relative error {max_rel:e} > 1e-4"))?;
    ensure(elapsed < 5.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("max relative error {max_rel:.2e}, {elapsed:.2}s"))
}

fn criterion_2() -> Check {
    let e = |v: &[f64]| Embedding(v.to_vec());
    let v = e(&[1.0, 0.0]);
    let empty_pos = embed_loss(&v, &[], &[e(&[0.3, 1.0])]).map_err(|x| x.to_string())?;
    let empty_neg = embed_loss(&v, &[e(&[0.3, 1.0])], &[]).map_err(|x| x.to_string())?;
    ensure(empty_pos == 0.0 && empty_neg == 0.0, || {
        format!("empty sets gave {empty_pos}, {empty_neg}")
    })?;
    let sym = embed_loss(&v, &[e(&[0.5, 2.0])], &[e(&[0.5, -3.0])]).map_err(|x| x.to_string())?;
    ensure((sym - std::f64::consts::LN_2).abs() <= 1e-12, || {
        format!("symmetric pair gave {sym}")
    })?;
    // v·k⁺ = 2, v·k⁻ = 0; log(1 + e^-2) to 16 digits
    let reference = 0.1269280110429725_f64;
    let l = embed_loss(&v, &[e(&[2.0, 7.0])], &[e(&[0.0, -1.0])]).map_err(|x| x.to_string())?;
    ensure((l - reference).abs() <= 1e-12, || {
        format!("(2, 0) gave {l}, expected {reference}")
    })?;
    Ok(format!("empty 0, symmetric {sym:.15}, (2,0) {l:.15}"))
}

/// Exhaustive best partial one-to-one matching by total similarity above
/// the threshold.
fn exhaustive_matching(f: &Matrix, thr: f64) -> Vec<Option<usize>> {
    let (n, m) = (f.rows(), f.cols());
    let mut best: (f64, Vec<Option<usize>>) = (f64::NEG_INFINITY, vec![]);
    let mut cur = vec![None; n];
    fn rec(
        f: &Matrix,
        thr: f64,
        i: usize,
        used: u32,
        total: f64,
        cur: &mut Vec<Option<usize>>,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if i == f.rows() {
            if total > best.0 {
                *best = (total, cur.clone());
            }
            return;
        }
        cur[i] = None;
        rec(f, thr, i + 1, used, total, cur, best);
        for j in 0..f.cols() {
            if used & (1 << j) == 0 && f[(i, j)] > thr {
                cur[i] = Some(j);
                rec(f, thr, i + 1, used | (1 << j), total + f[(i, j)], cur, best);
            }
        }
        cur[i] = None;
    }
    let _ = m;
    rec(f, thr, 0, 0, 0.0, &mut cur, &mut best);
    best.1
}

/// Smallest lead of a matched entry over the rest of its row and column.
fn dominance_margin(f: &Matrix, matching: &[Option<usize>]) -> f64 {
    let mut margin = f64::INFINITY;
    for (i, m) in matching.iter().enumerate() {
        if let Some(j) = *m {
            for c in (0..f.cols()).filter(|&c| c != j) {
                margin = margin.min(f[(i, j)] - f[(i, c)]);
            }
            for r in (0..f.rows()).filter(|&r| r != i) {
                margin = margin.min(f[(i, j)] - f[(r, j)]);
            }
        }
    }
    margin
}

fn criterion_3() -> Check {
    let cfg = AssociationConfig::default();
    let mut rng = SplitMix64::new(3);
    let (mut dominant, mut agree) = (0, 0);
    for _ in 0..200 {
        let (n, m) = (rng.int_inclusive(1, 4) as usize, rng.int_inclusive(1, 4) as usize);
        let dim = 6;
        let mut memory = MemoryBank::new();
        let mut mem_vecs = Vec::new();
        for _ in 0..m {
            let v: Vec<f64> = (0..dim).map(|_| 2.0 * rng.gaussian()).collect();
            mem_vecs.push(v.clone());
            memory.insert(Embedding(v), 1, 0);
        }
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let emb: Vec<f64> = if rng.next_f64() < 0.7 {
                    let src = &mem_vecs[rng.int_inclusive(0, m as i64 - 1) as usize];
                    src.iter().map(|x| x + 0.5 * rng.gaussian()).collect()
                } else {
                    (0..dim).map(|_| 2.0 * rng.gaussian()).collect()
                };
                let score = rng.next_f64();
                Detection {
                    bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                    mask: None,
                    score,
                    class_probs: vec![0.0, score],
                    category_id: 1,
                    embedding: Embedding(emb),
                }
            })
            .collect();
        let embs: Vec<Embedding> = dets.iter().map(|d| d.embedding.clone()).collect();
        let f = similarity(&embs, &memory, SimilarityKind::BiSoftmax).map_err(|e| e.to_string())?;
        let best = exhaustive_matching(&f, cfg.match_threshold);
        if dominance_margin(&f, &best) <= 0.1 {
            continue;
        }
        dominant += 1;
        let got = assign(&f, &dets, &memory, &cfg).map_err(|e| e.to_string())?;
        let same = got.iter().enumerate().all(|(i, a)| {
            let expected = match best[i] {
                Some(j) => Outcome::MatchedTo(memory.instances()[j].track_id),
                None if dets[i].score >= cfg.new_instance_score => Outcome::NewInstance,
                None => Outcome::Discarded,
            };
            a.outcome == expected
        });
        agree += usize::from(same);
    }
    ensure(dominant > 0, || "no instance had a dominant matching".into())?;
    ensure(agree == dominant, || {
        format!("greedy agreed on {agree}/{dominant} dominant instances")
    })?;
    Ok(format!("{agree}/{dominant} dominant instances agree (of 200 drawn)"))
}

fn read_identity(path: &Path) -> IdentityKey {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let key = (
                r["video_id"].as_u64().unwrap(),
                r["frame_index"].as_u64().unwrap() as u32,
                r["detection_index"].as_u64().unwrap() as usize,
            );
            let id = r["gt_track_id"].as_u64().map_or(Identity::Clutter, Identity::Gt);
            (key, id)
        })
        .collect()
}

fn overall(report: &Path) -> Result<[f64; 5], String> {
    let v: Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    let o = &v["overall"];
    let get = |k: &str| o[k].as_f64().ok_or_else(|| format!("report lacks overall.{k}"));
    Ok([get("ap")?, get("ap50")?, get("ap75")?, get("ar1")?, get("ar10")?])
}

fn pipeline(dir: &Path, synth: &str) -> Result<(), String> {
    let cfg = write_config(dir, synth);
    let (d, a, r, rep) = (
        dir.join("detections.json"),
        dir.join("annotations.json"),
        dir.join("results.json"),
        dir.join("report.json"),
    );
    run_ok(&["synth", "--config", s(&cfg), "--seed", "42", "--out-dir", s(dir)])?;
    run_ok(&["track", "--detections", s(&d), "--config", s(&cfg), "--out", s(&r)])?;
    run_ok(&[
        "eval",
        "--gt",
        s(&a),
        "--results",
        s(&r),
        "--config",
        s(&cfg),
        "--out",
        s(&rep),
    ])?;
    Ok(())
}

/// mAP obtained when every detection is assigned its true identity, i.e.
/// with no association errors at all.
fn identity_oracle_map(dir: &Path, key: &IdentityKey) -> f64 {
    let dets = io::load_detections(&dir.join("detections.json")).unwrap();
    let gts = io::load_annotations(&dir.join("annotations.json")).unwrap();
    let preds: Vec<VideoTracks> = dets
        .videos
        .iter()
        .map(|v| {
            let mut by_id: BTreeMap<u64, Vec<(u32, &Detection)>> = BTreeMap::new();
            for f in &v.frames {
                for (i, d) in f.detections.iter().enumerate() {
                    if let Identity::Gt(g) = key[&(v.meta.video_id, f.frame_index, i)] {
                        by_id.entry(g).or_default().push((f.frame_index, d));
                    }
                }
            }
            let tracks = by_id
                .into_iter()
                .map(|(id, ds)| Track {
                    track_id: id,
                    category_id: ds[0].1.category_id,
                    score: ds.iter().map(|x| x.1.score).sum::<f64>() / ds.len() as f64,
                    entries: ds
                        .iter()
                        .map(|(f, d)| {
                            (
                                *f,
                                TrackEntry {
                                    bbox: d.bbox,
                                    mask: d.mask.clone(),
                                    score: d.score,
                                },
                            )
                        })
                        .collect(),
                })
                .collect();
            VideoTracks { meta: v.meta, tracks }
        })
        .collect();
    evaluate(&preds, &gts.videos, &EvalConfig::default())
        .unwrap()
        .overall
        .unwrap()
        .ap
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let noisy = tempfile::tempdir().unwrap();
    let clean = tempfile::tempdir().unwrap();
    pipeline(
        noisy.path(),
        r#"{"synth": {"n_videos": 10, "frames_per_video": 20, "objects_per_video": 4,
            "embedding_noise_sigma": 0.05, "detector_dropout": 0.1, "clutter_rate": 0.5}}"#,
    )?;
    pipeline(
        clean.path(),
        r#"{"synth": {"n_videos": 10, "frames_per_video": 20, "objects_per_video": 4,
            "embedding_noise_sigma": 0.0, "detector_dropout": 0.0, "clutter_rate": 0.0}}"#,
    )?;
    let elapsed = start.elapsed().as_secs_f64();

    // identity labels from the library on the same detections file; its
    // serialized tracks must equal the CLI output
    let dir = noisy.path();
    let dets = io::load_detections(&dir.join("detections.json")).map_err(|e| e.to_string())?;
    let cfg = AssociationConfig::default();
    let mut labels = Vec::new();
    let mut lib_results = Vec::new();
    for v in &dets.videos {
        let (tracks, l) = track_video_with_labels(&v.frames, &cfg, v.meta).map_err(|e| e.to_string())?;
        labels.push(l);
        lib_results.push(VideoTracks { meta: v.meta, tracks });
    }
    let cli_results = fs::read_to_string(dir.join("results.json")).unwrap();
    ensure(io::results_to_string(&lib_results) == cli_results, || {
        "library and CLI tracks differ".into()
    })?;
    let key = read_identity(&dir.join("identity.json"));
    let switches = count_id_switches(&dets.videos, &labels, &key);
    let clean_videos = switches.iter().filter(|&&s| s == 0).count();

    let m = overall(&dir.join("report.json"))?;
    let c = overall(&clean.path().join("report.json"))?;
    let ceiling = identity_oracle_map(dir, &key);
    let detail = format!(
        "noisy mAP {:.4} (identity-oracle tracking {:.4}), {}/{} videos without ID switches, clean metrics {:?}, {elapsed:.2}s",
        m[0],
        ceiling,
        clean_videos,
        switches.len(),
        c
    );
    ensure(m[0] >= 0.90, || format!("mAP {:.4} < 0.90; {detail}", m[0]))?;
    ensure(clean_videos as f64 >= 0.95 * switches.len() as f64, || {
        format!("too many ID switches; {detail}")
    })?;
    ensure(c.iter().all(|&x| x == 1.0), || {
        format!("clean run not perfect; {detail}")
    })?;
    ensure(elapsed < 30.0, || format!("too slow; {detail}"))?;
    Ok(detail)
}

fn criterion_5() -> Check {
    let mut rng = SplitMix64::new(5);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for i in 0..100 {
        let (preds, gts) = micro_corpus(&mut rng);
        let lib = evaluate(&preds, &gts, &EvalConfig::default()).map_err(|e| format!("corpus {i}: {e}"))?;
        let oracle = brute_force_eval(&preds, &gts);
        match (&lib.overall, &oracle) {
            (None, None) => {}
            (Some(Metrics { ap, ap50, ap75, ar, .. }), Some(o)) => {
                let pairs = [
                    (*ap, o.ap),
                    (*ap50, o.ap50),
                    (*ap75, o.ap75),
                    (ar[&1], o.ar1),
                    (ar[&10], o.ar10),
                ];
                for (a, b) in pairs {
                    worst = worst.max((a - b).abs());
                }
                ensure(pairs.iter().all(|(a, b)| (a - b).abs() <= 1e-9), || {
                    format!("corpus {i}: {pairs:?}")
                })?;
                compared += 1;
            }
            _ => return Err(format!("corpus {i}: presence differs")),
        }
    }
    Ok(format!(
        "{compared}/100 corpora with ground truth, worst deviation {worst:.1e}"
    ))
}

fn criterion_6() -> Check {
    let dims = (2u32, 5u32);
    let mask10 = |col_start: u32| {
        let mut g = Bitmap::new(2, 5);
        for c in col_start..col_start + 5 {
            for r in 0..2 {
                if c < 5 {
                    g.set(r, c, true);
                }
            }
        }
        rle_encode(&g)
    };
    let full = mask10(0);
    ensure(full.area() == 10, || "fixture mask is not 10 px".into())?;
    let a = track_from(1, 1, 1.0, vec![(0, full.clone()), (1, full.clone())]);
    let b = track_from(2, 1, 1.0, vec![(0, full.clone())]);
    let c = track_from(3, 1, 1.0, vec![(2, full.clone())]);
    let same = st_iou(&a, &a.clone(), 3, dims).map_err(|e| e.to_string())?;
    let half = st_iou(&a, &b, 3, dims).map_err(|e| e.to_string())?;
    let disjoint = st_iou(&a, &c, 3, dims).map_err(|e| e.to_string())?;
    ensure(same == 1.0, || format!("identical gave {same}"))?;
    ensure(disjoint == 0.0, || format!("disjoint frames gave {disjoint}"))?;
    ensure((half - 0.5).abs() <= 1e-12, || format!("half overlap gave {half}"))?;

    let mut rng = SplitMix64::new(6);
    for i in 0..500 {
        let len = rng.int_inclusive(1, 6) as u32;
        let (h, w) = (rng.int_inclusive(1, 12) as u32, rng.int_inclusive(1, 12) as u32);
        let mk = |rng: &mut SplitMix64| {
            let d = rng.uniform(0.0, 0.7);
            let mut masks = Vec::new();
            for f in 0..len {
                if rng.next_f64() < 0.7 {
                    masks.push((f, random_mask(rng, h, w, d)));
                }
            }
            track_from(0, 1, 1.0, masks)
        };
        let (x, y) = (mk(&mut rng), mk(&mut rng));
        let lib = st_iou(&x, &y, len, (h, w)).map_err(|e| e.to_string())?;
        let oracle = st_iou_grid(&x, &y, len, (h * w) as usize);
        ensure(lib == oracle, || format!("pair {i}: {lib} vs grid {oracle}"))?;
    }
    Ok("fixtures exact, 500/500 random pairs equal the grid count".into())
}

fn random_image(rng: &mut SplitMix64, image_id: u64) -> (ImageMeta, Vec<InstanceAnnotation>) {
    let (w, h) = (rng.int_inclusive(8, 40) as u32, rng.int_inclusive(8, 40) as u32);
    let mut anns = Vec::new();
    for k in 0..rng.int_inclusive(0, 5) as u64 {
        let (bw, bh) = (
            rng.int_inclusive(1, (w / 2) as i64) as u32,
            rng.int_inclusive(1, (h / 2) as i64) as u32,
        );
        let (x0, y0) = (
            rng.int_inclusive(0, (w - bw) as i64) as u32,
            rng.int_inclusive(0, (h - bh) as i64) as u32,
        );
        let mut g = Bitmap::new(h, w);
        g.set(y0, x0, true);
        for c in x0..x0 + bw {
            for r in y0..y0 + bh {
                if rng.next_f64() < 0.7 {
                    g.set(r, c, true);
                }
            }
        }
        let mask = rle_encode(&g);
        anns.push(InstanceAnnotation {
            instance_id: k + 1,
            category_id: rng.int_inclusive(1, 3) as u32,
            bbox: mask.bbox().unwrap(),
            mask: Some(mask),
        });
    }
    (
        ImageMeta {
            image_id,
            width: w,
            height: h,
        },
        anns,
    )
}

fn generate_pairs(
    n: usize,
    seed: u64,
    cfg: &CropConfig,
) -> Result<Vec<(ImageMeta, Vec<InstanceAnnotation>, vistrack::CropPairSample)>, String> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let (image, anns) = random_image(&mut rng, i as u64);
            let p = make_pair(&image, &anns, cfg, &mut rng).map_err(|e| e.to_string())?;
            Ok((image, anns, p))
        })
        .collect()
}

fn criterion_7() -> Check {
    let cfg = CropConfig::default();
    let pairs = generate_pairs(1000, 7, &cfg)?;
    let mut shared = 0;
    for (n, (image, anns, p)) in pairs.iter().enumerate() {
        for view in [&p.view_a, &p.view_b] {
            let win = view.window;
            ensure(
                win.x0 >= 0.0 && win.y0 >= 0.0 && win.x1 <= image.width as f64 && win.y1 <= image.height as f64,
                || format!("pair {n}: window outside image"),
            )?;
            let (vw, vh) = (win.width(), win.height());
            let mut seen = std::collections::BTreeSet::new();
            for a in &view.annotations {
                ensure(seen.insert(a.instance_id), || {
                    format!("pair {n}: instance twice in a view")
                })?;
                let b = a.bbox;
                ensure(b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= vw && b.y + b.h <= vh, || {
                    format!("pair {n}: box {b:?} outside view")
                })?;
                let src = anns.iter().find(|s| s.instance_id == a.instance_id).unwrap();
                let grid = decode(src.mask.as_ref().unwrap());
                let mut inside = 0u64;
                for c in win.x0 as u32..win.x1 as u32 {
                    for r in win.y0 as u32..win.y1 as u32 {
                        inside += u64::from(grid[(c * image.height + r) as usize]);
                    }
                }
                let got = a.mask.as_ref().unwrap().area();
                ensure(got == inside, || {
                    format!("pair {n}: cropped mask has {got} px, oracle {inside}")
                })?;
            }
        }
        let (mut left, mut right) = (std::collections::BTreeSet::new(), std::collections::BTreeSet::new());
        for &(i, j) in &p.correspondence {
            ensure(left.insert(i) && right.insert(j), || {
                format!("pair {n}: correspondence not injective")
            })?;
            ensure(
                p.view_a.annotations[i].instance_id == p.view_b.annotations[j].instance_id,
                || format!("pair {n}: correspondence links different instances"),
            )?;
        }
        // symmetric: every instance present in both views is linked
        let both = p
            .view_a
            .annotations
            .iter()
            .filter(|a| p.view_b.annotations.iter().any(|b| b.instance_id == a.instance_id))
            .count();
        ensure(both == p.correspondence.len(), || {
            format!("pair {n}: shared instance missing from correspondence")
        })?;
        shared += both;
    }

    let full = CropConfig {
        min_scale: 1.0,
        max_scale: 1.0,
        ..Default::default()
    };
    for (n, (_, anns, p)) in generate_pairs(200, 70, &full)?.iter().enumerate() {
        ensure(&p.view_a.annotations == anns && &p.view_b.annotations == anns, || {
            format!("full crop {n} altered annotations")
        })?;
    }

    let text = |v: &[(ImageMeta, Vec<InstanceAnnotation>, vistrack::CropPairSample)]| {
        io::pairs_to_string(&v.iter().map(|(_, _, p)| (7u64, p.clone())).collect::<Vec<_>>())
    };
    ensure(text(&pairs) == text(&generate_pairs(1000, 7, &cfg)?), || {
        "second run differs".into()
    })?;
    Ok(format!(
        "1000 pairs, {shared} shared instances, full-crop identity, byte-identical rerun"
    ))
}

fn criterion_8() -> Check {
    let meta = VideoMeta {
        video_id: 1,
        height: 8,
        width: 8,
        length: 4,
    };
    let set = |tracks: Vec<Track>| VideoTracks { meta, tracks };
    // fixture: two copies of one track at 0.9 and 0.7
    let mut rng = SplitMix64::new(8);
    let base = random_track(&mut rng, 1, 4);
    let (mut hi, mut lo) = (base.clone(), base.clone());
    hi.score = 0.9;
    lo.score = 0.7;
    lo.track_id = 2;
    let merged =
        merge_tracks(&[set(vec![hi]), set(vec![lo])], &FusionConfig::default(), &meta).map_err(|e| e.to_string())?;
    ensure(merged.len() == 1 && merged[0].score == 0.8, || {
        format!(
            "0.9/0.7 merge gave {:?}",
            merged.iter().map(|t| t.score).collect::<Vec<_>>()
        )
    })?;

    let max_cfg = FusionConfig {
        score_mode: ScoreMode::Max,
        ..Default::default()
    };
    for trial in 0..200 {
        // tracks with distinct categories never merge with each other
        let n = rng.int_inclusive(1, 5);
        let tracks: Vec<Track> = (0..n)
            .map(|k| {
                let mut t = random_track(&mut rng, k as u64 + 1, 4);
                t.category_id = k as u32 + 1;
                t.score = rng.next_f64();
                t
            })
            .collect();
        let dup = merge_tracks(
            &[set(tracks.clone()), set(tracks.clone())],
            &FusionConfig::default(),
            &meta,
        )
        .map_err(|e| e.to_string())?;
        let single =
            merge_tracks(&[set(tracks.clone())], &FusionConfig::default(), &meta).map_err(|e| e.to_string())?;
        ensure(dup == single && dup.len() == tracks.len(), || {
            format!("trial {trial}: duplicates did not collapse")
        })?;

        let a: Vec<Track> = (0..rng.int_inclusive(0, 6))
            .map(|k| {
                let mut t = random_track(&mut rng, k as u64 + 1, 4);
                t.score = rng.next_f64();
                t
            })
            .collect();
        let b: Vec<Track> = a
            .iter()
            .map(|t| {
                let mut u = perturb(&mut rng, t, 0.2);
                u.score = rng.next_f64();
                u
            })
            .collect();
        let once = merge_tracks(&[set(a), set(b)], &max_cfg, &meta).map_err(|e| e.to_string())?;
        let twice = merge_tracks(&[set(once.clone())], &max_cfg, &meta).map_err(|e| e.to_string())?;
        ensure(once == twice, || format!("trial {trial}: not idempotent under Max"))?;
    }
    Ok("0.9/0.7 -> 0.8 exact, 200 dedupe and idempotence trials".into())
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/golden")
        .join(name)
}

fn numbers_as_f64(v: Value) -> Value {
    match v {
        Value::Number(n) => serde_json::json!(n.as_f64().unwrap()),
        Value::Array(a) => Value::Array(a.into_iter().map(numbers_as_f64).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, numbers_as_f64(v))).collect()),
        other => other,
    }
}

fn same_json(a: &str, b: &str) -> bool {
    numbers_as_f64(serde_json::from_str(a).unwrap()) == numbers_as_f64(serde_json::from_str(b).unwrap())
}

fn criterion_9() -> Check {
    // every subcommand twice, outputs compared byte for byte
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for dir in &runs {
        let d = dir.path();
        let cfg = write_config(
            d,
            r#"{"synth": {"n_videos": 3, "frames_per_video": 8}, "fusion": {"score_mode": "max"}}"#,
        );
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        run_ok(&["synth", "--config", s(&cfg), "--seed", "9", "--out-dir", s(d)])?;
        run_ok(&[
            "track",
            "--detections",
            s(&d.join("detections.json")),
            "--config",
            s(&cfg),
            "--out",
            s(&d.join("r1.json")),
        ])?;
        let c2 = d.join("config2.json");
        fs::write(
            &c2,
            r#"{"association": {"similarity_kind": "cosine", "match_threshold": 0.8}}"#,
        )
        .unwrap();
        run_ok(&[
            "track",
            "--detections",
            s(&d.join("detections.json")),
            "--config",
            s(&c2),
            "--out",
            s(&d.join("r2.json")),
        ])?;
        let table = run_ok(&[
            "eval",
            "--gt",
            s(&d.join("annotations.json")),
            "--results",
            s(&d.join("r1.json")),
            "--config",
            s(&cfg),
            "--out",
            s(&d.join("report.json")),
            "--table",
        ])?;
        run_ok(&[
            "pseudopair",
            "--annotations",
            s(&d.join("annotations.json")),
            "--config",
            s(&cfg),
            "--seed",
            "7",
            "--out",
            s(&d.join("pairs.json")),
        ])?;
        run_ok(&[
            "fuse",
            "--inputs",
            s(&d.join("r1.json")),
            s(&d.join("r2.json")),
            "--config",
            s(&cfg),
            "--out",
            s(&d.join("fused.json")),
        ])?;
        let loss = run_ok(&["losscheck", "--samples", "5", "--seed", "3"])?;
        for f in [
            "annotations.json",
            "detections.json",
            "identity.json",
            "r1.json",
            "r2.json",
            "report.json",
            "pairs.json",
            "fused.json",
        ] {
            files.push((f.to_string(), fs::read(d.join(f)).unwrap()));
        }
        files.push(("eval --table stdout".into(), table.stdout));
        files.push(("losscheck stdout".into(), loss.stdout));
        outputs.push(files);
    }
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        ensure(a.1 == b.1, || format!("{} differs between runs", a.0))?;
        ensure(!a.1.is_empty(), || format!("{} is empty", a.0))?;
    }

    // golden round trips
    let ann_text = fs::read_to_string(golden("annotations.json")).unwrap();
    let ann = io::parse_annotations(&ann_text, "golden").map_err(|e| e.to_string())?;
    ensure(same_json(&ann_text, &io::annotations_to_string(&ann)), || {
        "annotation golden round trip".into()
    })?;
    let det_text = fs::read_to_string(golden("detections.json")).unwrap();
    let det = io::parse_detections(&det_text, "golden").map_err(|e| e.to_string())?;
    ensure(same_json(&det_text, &io::detections_to_string(&det)), || {
        "detections golden round trip".into()
    })?;
    let res_text = fs::read_to_string(golden("results.json")).unwrap();
    let res = io::parse_results(&res_text, "golden").map_err(|e| e.to_string())?;
    ensure(io::results_to_string(&res) == res_text, || {
        "results golden round trip".into()
    })?;

    // malformed inputs through the CLI
    let d = runs[0].path();
    let bad_ann = d.join("bad_annotations.json");
    fs::write(&bad_ann, ann_text.replace("[3, 3, 6]", "[3, 3, 7]")).unwrap();
    let out = vistrack(&[
        "eval",
        "--gt",
        s(&bad_ann),
        "--results",
        s(&golden("results.json")),
        "--out",
        s(&d.join("x.json")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    ensure(
        out.status.code() == Some(2) && err.contains("counts sum to height*width"),
        || format!("malformed RLE: exit {:?}, stderr {err}", out.status.code()),
    )?;
    let bad_det = d.join("bad_detections.json");
    fs::write(&bad_det, det_text.replace("[0.0, 1.0, -0.25]", "[0.0, 1.0]")).unwrap();
    let out = vistrack(&["track", "--detections", s(&bad_det), "--out", s(&d.join("y.json"))]);
    let err2 = String::from_utf8_lossy(&out.stderr).to_string();
    ensure(
        out.status.code() == Some(2) && err2.contains("embedding length equals header.embedding_dim"),
        || format!("wrong embedding dimension: exit {:?}, stderr {err2}", out.status.code()),
    )?;
    Ok("6 subcommands byte-identical, 3 golden round trips, both malformed inputs exit 2".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gradient finite-difference suite", criterion_1),
        ("embedding loss value fixtures", criterion_2),
        ("greedy association vs exhaustive", criterion_3),
        ("end-to-end synthetic tracking", criterion_4),
        ("evaluator vs brute force", criterion_5),
        ("spatio-temporal IoU", criterion_6),
        ("pseudo-pair properties", criterion_7),
        ("fusion properties", criterion_8),
        ("determinism and formats", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
