//! Acceptance gate: one test per criterion, named `criterion_NN_*`.

use jndattack::boundary::{is_gamma_success, next_gamma, GammaLadder, StoppedReason};
use jndattack::directions::{sample_u_hat, LowFrequencySampler};
use jndattack::geometry::{project_u, project_v, single_step_attack, StepContext, StepStatus};
use jndattack::harness::{
    load_dataset, run_campaign, run_campaign_detailed, write_synthetic_corpus, CampaignConfig, CampaignReport,
    ImageResult,
};
use jndattack::imageops::{load_png, minimum_barrier_raster, MBS_PASSES};
use jndattack::jnd::{jnd_box, jnd_threshold, JndMap};
use jndattack::metrics::{krocc, srocc, ssim};
use jndattack::oracle::{FnModel, SharpnessModel};
use jndattack::{
    run_attack, AttackConfig, BinaryMask, Gamma, Image, OracleHandle, ProjectedFrame, Side,
    TextureBank, ThetaSchedule,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BinaryHeap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

struct Corpus {
    _dir: tempfile::TempDir,
    report: CampaignReport,
    results: Vec<ImageResult>,
    out: std::path::PathBuf,
    elapsed: Duration,
}

fn write_corpus(dir: &Path) {
    write_synthetic_corpus(dir, &mut SharpnessModel::default()).unwrap();
}

/// One default-configured campaign over the synthetic corpus, shared by the
/// criteria that inspect its outputs.
fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        write_corpus(&data);
        let manifest = load_dataset(&data, data.join("mos.csv"), 0).unwrap();
        let mut cfg = CampaignConfig::default();
        cfg.attack.keep_points = true;
        cfg.attack.seed = 2024;
        let out = dir.path().join("out");
        let start = Instant::now();
        let (report, results) = run_campaign_detailed(&cfg, &manifest, &out).unwrap();
        Corpus {
            elapsed: start.elapsed(),
            _dir: dir,
            report,
            results,
            out,
        }
    })
}

#[test]
fn criterion_01_jnd_containment() {
    let c = corpus();
    assert_eq!(c.results.len(), 24);
    let (mut checked, mut violations) = (0usize, 0usize);
    for r in &c.results {
        let x0 = r.x0.as_ref().expect("image attacked");
        let m = jnd_threshold(x0);
        let bx = jnd_box(x0, &m).unwrap();
        let png = load_png(c.out.join(r.row.adv_png.as_ref().unwrap())).unwrap();
        assert_eq!(&png, r.adv.as_ref().unwrap());
        for k in 0..png.data().len() {
            let ok = (png.data()[k] - x0.data()[k]).abs() <= m.thresholds()[k]
                && bx.lo()[k] <= png.data()[k]
                && png.data()[k] <= bx.hi()[k];
            violations += usize::from(!ok);
            checked += 1;
        }
    }
    println!(
        "criterion 1: {violations} of {checked} pixels outside the JND box after PNG round trip; campaign took {:.1?}",
        c.elapsed
    );
    assert_eq!(violations, 0);
    assert!(c.elapsed < Duration::from_secs(300));
}

#[test]
fn criterion_02_gamma_success_chain() {
    let c = corpus();
    let (mut steps, mut confirmed) = (0usize, 0usize);
    for r in &c.results {
        let o = r.outcome.as_ref().unwrap();
        let x0 = r.x0.as_ref().unwrap();
        let bx = o.bounds.as_ref().unwrap();
        let (score0, side) = (o.score_before.unwrap(), o.side.unwrap());
        let fresh = SharpnessModel::default();
        for t in o.trace.iter().filter(|t| t.achieved) {
            let p = t.point.as_ref().expect("points kept");
            assert!(bx.contains(p), "{}: traced point leaves the box", r.row.id);
            let f = fresh.score(p);
            steps += 1;
            confirmed += usize::from(is_gamma_success(score0, f, t.gamma.value(), side));
        }
        assert!(bx.contains(&o.x_adv) && jnd_box(x0, &jnd_threshold(x0)).unwrap() == *bx);
    }
    println!("criterion 2: {confirmed} of {steps} traced steps re-confirmed as gamma-success");
    assert!(steps > 0);
    assert_eq!(confirmed, steps);
}

#[test]
fn criterion_03_query_budget() {
    let c = corpus();
    let mut worst = 0;
    for r in &c.results {
        let o = r.outcome.as_ref().unwrap();
        assert!(o.total_queries <= 8000, "{}: {} queries", r.row.id, o.total_queries);
        assert_eq!(o.initial_queries, 1);
        assert_eq!(o.trace.iter().map(|t| t.queries).sum::<u64>() + 1, o.total_queries);
        worst = worst.max(o.total_queries);
    }
    println!("criterion 3: max {worst} queries per image (budget 8000), accounting identity exact for 24 images");
}

#[test]
fn criterion_04_rank_destruction() {
    let c = corpus();
    let pre = c.report.original.srocc.unwrap();
    let post = c.report.ours.srocc.unwrap();
    let mae = c.report.ours.mae.unwrap();
    println!(
        "criterion 4: SROCC {pre:.4} -> {post:.4} (need <= 0.6), MAE {:.3} -> {mae:.3} (need >= 8), {:.1?}",
        c.report.original.mae.unwrap(),
        c.elapsed
    );
    assert_eq!(pre, 1.0);
    assert!(post <= 0.6);
    assert!(mae >= 8.0);
    assert!(c.elapsed < Duration::from_secs(600));
}

#[test]
fn criterion_05_gamma_schedule_exactness() {
    let n = 20;
    let mut ladder = GammaLadder::new(Gamma::from_ratio(1, 100));
    let mut seen = vec![ladder.gamma0()];
    for _ in 0..n - 1 {
        let g = next_gamma(&ladder);
        ladder.push(g, true);
        seen.push(g);
    }
    for (k, g) in seen.iter().enumerate() {
        let k = k as i64 + 1;
        assert_eq!(*g, Gamma::from_ratio(k, 100));
        assert_eq!(g.value(), k as f64 / 100.0);
    }

    // Decrease then Increase in exact arithmetic; the naive f64 chain would
    // land on 0.019999999999999997 instead of returning to 0.02
    let (gp, gi) = (Gamma::from_ratio(1, 100), Gamma::from_ratio(2, 100));
    let dec = gi.decrease(gp);
    assert_eq!(dec, Gamma::from_ratio(3, 200));
    assert_eq!(dec.value(), 0.015);
    let inc = dec.increase(gp);
    assert_eq!(inc, Gamma::from_ratio(2, 100));
    assert_eq!(inc.value(), 0.02);
    assert_eq!(Gamma::from_f64(0.02).unwrap(), gi);

    // the same two strategies driven through one real step
    let x = Image::from_fn(32, 32, 3, |y, x, c| 0.35 + 0.01 * ((3 * y + x + c) % 11) as f64).unwrap();
    let bx = jnd_box(&x, &JndMap::uniform(x.shape(), 0.03).unwrap()).unwrap();
    let bank = TextureBank::procedural(x.shape()).unwrap();
    let mask = BinaryMask::ones(32, 32);
    let sampler = LowFrequencySampler::new(&x, 1.0 / 16.0).unwrap();
    let x0 = x.clone();
    let t_max = 5u64;
    // score0 = 30; the first t_max + 1 probes do not move, then every probe
    // scores 34: success at 0.015 (31.05) and at its overshoot 0.025 (31.75)
    let mut calls = 0u64;
    let model = FnModel::new("scripted", move |img: &Image| {
        if img == &x0 {
            return 30.0;
        }
        calls += 1;
        if calls <= t_max + 1 {
            30.0
        } else {
            34.0
        }
    });
    let mut oracle = OracleHandle::new(Box::new(model), 8000);
    oracle.score(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ctx = StepContext {
        oracle: &mut oracle,
        bank: &bank,
        mask: &mask,
        bounds: &bx,
        v_sampler: &sampler,
        score0: 30.0,
        side: Side::LowQuality,
        t_max: t_max as u32,
        theta: ThetaSchedule::default(),
        early_stop_eps: Some(Gamma::from_ratio(1, 400)),
        rng: &mut rng,
    };
    let r = single_step_attack(&x, gi, gp, &mut ctx).unwrap();
    assert_eq!((r.decreases, r.increases), (1, 1));
    assert_eq!(r.gamma_final, inc);
    assert_eq!(r.status, StepStatus::Success);
    println!("criterion 5: ladder 0.01..0.20 exact; decrease 0.02 -> 0.015 and increase 0.015 -> 0.02 bit-exact");
}

#[test]
fn criterion_06_early_stop() {
    let x0 = jndattack::harness::synthetic_images().swap_remove(5).1;
    let bank = TextureBank::procedural(x0.shape()).unwrap();
    let mut oracle = OracleHandle::new(Box::new(FnModel::new("constant", |_: &Image| 57.0)), 8000);
    let cfg = AttackConfig::default();
    let out = run_attack(&x0, &mut oracle, &bank, &cfg).unwrap();
    let limit = 2 * cfg.t_max as u64 * cfg.n_boundaries as u64;
    println!(
        "criterion 6: stopped {:?} after {} queries (limit {limit})",
        out.stopped_reason, out.total_queries
    );
    assert_eq!(out.stopped_reason, StoppedReason::EarlyStop);
    assert!(out.total_queries < limit);
    assert_eq!(out.x_adv, x0);
}

type Q = Ratio<i128>;

fn exact_ranks(v: &[i64]) -> Vec<Q> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as i128;
            let equal = v.iter().filter(|&&y| y == x).count() as i128;
            Q::from_integer(below + 1) + Q::new(equal - 1, 2)
        })
        .collect()
}

/// Exact squared correlation and its sign, or `None` if undefined.
fn exact_pearson_sq(x: &[Q], y: &[Q]) -> Option<(Q, i32)> {
    let n = Q::from_integer(x.len() as i128);
    let mx = x.iter().sum::<Q>() / n;
    let my = y.iter().sum::<Q>() / n;
    let cov: Q = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: Q = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: Q = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == Q::from_integer(0) || vy == Q::from_integer(0) {
        return None;
    }
    let sign = if cov > Q::from_integer(0) { 1 } else if cov < Q::from_integer(0) { -1 } else { 0 };
    Some((cov * cov / (vx * vy), sign))
}

fn exact_kendall_sq(a: &[i64], b: &[i64]) -> Option<(Q, i32)> {
    let n = a.len();
    let (mut nc, mut nd, mut n1, mut n2) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            nc += i128::from(s > 0);
            nd += i128::from(s < 0);
            n1 += i128::from(a[i] == a[j]);
            n2 += i128::from(b[i] == b[j]);
        }
    }
    let n0 = (n * (n - 1) / 2) as i128;
    if n0 == n1 || n0 == n2 {
        return None;
    }
    let num = nc - nd;
    Some((Q::new(num * num, (n0 - n1) * (n0 - n2)), num.signum() as i32))
}

/// `got` agrees with `sign * sqrt(sq)`: bit-exact when the root is rational,
/// otherwise within two units in the last place.
fn agrees(got: f64, exact: (Q, i32)) -> bool {
    let (sq, sign) = exact;
    let reference = sign as f64 * (*sq.numer() as f64 / *sq.denom() as f64).sqrt();
    let root = |v: i128| {
        let r = (v as f64).sqrt().round() as i128;
        (r * r == v).then_some(r)
    };
    if let (Some(p), Some(q)) = (root(*sq.numer()), root(*sq.denom())) {
        return got == sign as f64 * (p as f64 / q as f64);
    }
    (got - reference).abs() <= 2.0 * f64::EPSILON * reference.abs().max(f64::MIN_POSITIVE)
}

fn all_vectors(n: usize, values: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| (1..=values).map(move |x| [v.clone(), vec![x]].concat()))
            .collect();
    }
    out
}

#[test]
fn criterion_07_metric_oracles() {
    let mut cases = 0usize;
    let mut check = |a: &[i64], b: &[i64]| {
        let (af, bf): (Vec<f64>, Vec<f64>) = (a.iter().map(|&v| v as f64).collect(), b.iter().map(|&v| v as f64).collect());
        match exact_pearson_sq(&exact_ranks(a), &exact_ranks(b)) {
            Some(e) => assert!(agrees(srocc(&af, &bf).unwrap(), e), "srocc {a:?} {b:?}"),
            None => assert!(srocc(&af, &bf).is_err()),
        }
        match exact_kendall_sq(a, b) {
            Some(e) => assert!(agrees(krocc(&af, &bf).unwrap(), e), "krocc {a:?} {b:?}"),
            None => assert!(krocc(&af, &bf).is_err()),
        }
        cases += 1;
    };
    // every pair of vectors over {1..n} up to length 3, and every vector up
    // to length 6 over {1..6} against a fixed set of partners
    for n in 2..=3 {
        let all = all_vectors(n, 6);
        for a in &all {
            for b in &all {
                check(a, b);
            }
        }
    }
    for n in 4..=6 {
        let partners: Vec<Vec<i64>> = vec![
            (1..=n as i64).collect(),
            (1..=n as i64).rev().collect(),
            (0..n as i64).map(|i| i % 3 + 1).collect(),
            (0..n as i64).map(|i| (i * 5) % 6 + 1).collect(),
        ];
        for a in all_vectors(n, 6) {
            for b in &partners {
                check(&a, b);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Image::from_fn(40, 36, 3, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
    let self_ssim = ssim(&x, &x).unwrap();
    assert!((self_ssim - 1.0).abs() < 1e-9);
    let c1 = 1e-4;
    let shift = ssim(&Image::filled(32, 32, 1, 0.5).unwrap(), &Image::filled(32, 32, 1, 0.6).unwrap()).unwrap();
    let closed = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    assert!((shift - closed).abs() < 1e-6);
    println!("criterion 7: {cases} srocc/krocc cases match the exact oracle; ssim(x,x) = {self_ssim}; shift ssim {shift:.6} vs {closed:.6}");
}

#[test]
fn criterion_08_geometry_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let thetas: Vec<f64> = (0..64).map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / 63.0).collect();
    let (mut unclamped, mut worst_law, mut worst_out) = (0usize, 0.0f64, 0.0f64);
    for frame_index in 0..1000 {
        let (h, w) = (rng.random_range(8..20), rng.random_range(8..20));
        let c = if frame_index % 2 == 0 { 3 } else { 1 };
        let edge_anchors = frame_index % 4 < 2;
        let x = Image::from_fn(h, w, c, |_, _, _| {
            // half the frames have anchors sitting on the value range ends
            match if edge_anchors { rng.random_range(0..10) } else { 9 } {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            }
        })
        .unwrap();
        let m = JndMap::new(x.shape(), (0..x.data().len()).map(|_| rng.random_range(1.0 / 255.0..32.0 / 255.0)).collect()).unwrap();
        let bx = jnd_box(&x, &m).unwrap();
        let bank = TextureBank::procedural(x.shape()).unwrap();
        let mask = BinaryMask::new(h, w, (0..h * w).map(|_| u8::from(rng.random_bool(0.5))).collect()).unwrap();
        if mask.is_empty() {
            continue;
        }
        let sample = sample_u_hat(&bank, &mask, &mut rng).unwrap();
        // shrink some directions so that the v clamp stays inactive
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let u_hat = sample.direction.scaled(scale);
        let Ok((u, d)) = project_u(&x, &u_hat, &bx) else { continue };
        let v_hat = LowFrequencySampler::new(&x, 1.0 / 16.0).unwrap().sample(&u, &mut rng).unwrap();
        let pv = project_v(&x, &v_hat, &u, d, &bx).unwrap();
        let frame = ProjectedFrame::new(&x, &bx, u, pv.v, d).unwrap();
        for &t in &thetas {
            let raw = frame.candidate_raw(t);
            for k in 0..raw.len() {
                worst_out = worst_out.max(bx.lo()[k] - raw[k]).max(raw[k] - bx.hi()[k]);
            }
            let cand = frame.candidate(t);
            assert!(bx.contains(&cand));
            if !pv.clamped {
                let dist = cand.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                worst_law = worst_law.max((dist - d * t.cos().abs()).abs());
            }
        }
        unclamped += usize::from(!pv.clamped);
    }
    println!(
        "criterion 8: 1000 frames x 64 angles in box (raw overshoot {worst_out:.2e}); distance law on {unclamped} unclamped frames, worst error {worst_law:.2e}"
    );
    assert!(worst_out <= 1e-12);
    assert!(unclamped >= 100);
    assert!(worst_law <= 1e-6);
}

/// Exact minimum barrier distance: for each lower level `l`, a minimax
/// Dijkstra restricted to pixels `>= l` gives the smallest achievable path
/// maximum; the barrier is the minimum over `l` of `max - l`.
fn exact_mbd(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0)
        }
    }
    let mut best = vec![f64::INFINITY; h * w];
    let mut levels = plane.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for &l in &levels {
        let mut top = vec![f64::INFINITY; h * w];
        let mut heap = BinaryHeap::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if (y == 0 || x == 0 || y == h - 1 || x == w - 1) && plane[i] >= l {
                    top[i] = plane[i];
                    heap.push(Item(plane[i], i));
                }
            }
        }
        while let Some(Item(t, i)) = heap.pop() {
            if t > top[i] {
                continue;
            }
            let (y, x) = (i / w, i % w);
            let mut nbrs = Vec::new();
            if y > 0 {
                nbrs.push(i - w);
            }
            if y + 1 < h {
                nbrs.push(i + w);
            }
            if x > 0 {
                nbrs.push(i - 1);
            }
            if x + 1 < w {
                nbrs.push(i + 1);
            }
            for j in nbrs {
                if plane[j] < l {
                    continue;
                }
                let nt = t.max(plane[j]);
                if nt < top[j] {
                    top[j] = nt;
                    heap.push(Item(nt, j));
                }
            }
        }
        for i in 0..h * w {
            if plane[i] >= l && top[i].is_finite() {
                best[i] = best[i].min(top[i] - l);
            }
        }
    }
    best
}

#[test]
fn criterion_09_mbs_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 1.0f64;
    for _ in 0..50 {
        let (h, w) = (rng.random_range(4..=10), rng.random_range(4..=10));
        let plane: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let fast = minimum_barrier_raster(&plane, h, w, MBS_PASSES);
        let exact = exact_mbd(&plane, h, w);
        let rho = match srocc(&fast, &exact) {
            Ok(r) => r,
            // both maps flat: identical (all-zero) rankings
            Err(_) => {
                assert_eq!(fast, exact);
                1.0
            }
        };
        worst = worst.min(rho);
    }
    println!("criterion 9: worst per-grid Spearman between raster and exact barrier maps: {worst:.4}");
    assert!(worst >= 0.95);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["", "adv"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                files.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_10_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_corpus(&data);
    let manifest = load_dataset(&data, data.join("mos.csv"), 0).unwrap();
    let run = |name: &str, workers: usize| {
        let cfg = CampaignConfig {
            workers,
            ..CampaignConfig::default()
        };
        run_campaign(&cfg, &manifest, dir.path().join(name)).unwrap();
        dir_bytes(&dir.path().join(name))
    };
    let (a, b) = (run("a", 0), run("b", 0));
    assert_eq!(a.len(), 28);
    assert_eq!(a.iter().filter(|(n, _)| n.starts_with("adv/")).count(), 24);
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    // the thread count does not leak into any per-image output either; only
    // the configuration echo inside report.json names it
    let single = run("c", 1);
    let thread_free = |files: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        files.iter().filter(|(n, _)| n != "/report.json").cloned().collect()
    };
    let same_single = thread_free(&a) == thread_free(&single);
    println!(
        "criterion 10: {same} of {} output files byte-identical across two runs; single-worker run identical apart from the config echo: {same_single}",
        a.len()
    );
    assert_eq!(same, a.len());
    assert!(same_single);
}
