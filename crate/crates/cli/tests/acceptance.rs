//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the report is always printed; exits non-zero on any failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dynmask_core::codec::{
    parse, serialize, GroundingElement, BOX_END, BOX_START, LINE_END, LINE_START, POINT_END,
    POINT_START, REF_END, REF_START, SEG_MASK,
};
use dynmask_core::decoder::{decode_mask_traced, disk_target, probe_config, random_inputs};
use dynmask_core::eval::{
    best_f1_sweep, eval_detection, eval_diagnosis_corpus, eval_keypoints, eval_segmentation,
    iou_boxes, rle_encode, AnnotationRecord, Corpus, DetectionGroup, Keypoint, Rect, ScoredBox,
    Target,
};
use dynmask_core::gradsuite::{decoder_gradient_error, random_decoder_config};
use dynmask_core::{
    bce_loss, combined_seg_loss, dice_loss, overfit_probe, BinaryMask, DecoderConfig,
    DecoderParams, LossConfig, MaskLogits,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, format!("took {took:.1?}, budget {budget:?}"))
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let cfg = random_decoder_config(&mut rng);
        ensure(
            (4..=16).contains(&cfg.d_llm)
                && (4..=16).contains(&cfg.c_dec)
                && [2, 4, 8].contains(&cfg.n_query)
                && cfg.h_vis <= 6
                && cfg.w_vis <= 6,
            format!("config out of range: {cfg:?}"),
        )?;
        let r = decoder_gradient_error(&cfg, trial).map_err(|e| e.to_string())?;
        ensure(
            r.max_rel_error < 1e-4,
            format!("trial {trial} {cfg:?}: rel error {:.3e}", r.max_rel_error),
        )?;
        worst = worst.max(r.max_rel_error);
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "20 configs, worst rel error {worst:.2e}, {:.1?}",
        start.elapsed()
    ))
}

fn shape_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = Vec::new();
    for (h_out, w_out) in [(32, 32), (64, 64), (100, 37), (1, 1), (7, 129)] {
        let cfg = DecoderConfig::new(16, 8, 8, h_out, w_out).with_channels(128, 16);
        let params = DecoderParams::random(&cfg, &mut rng, 0.1);
        let (f_img, f_q) = random_inputs(&cfg, &mut rng, 1.0);
        let trace = decode_mask_traced(&f_img, &f_q, &params, &cfg).map_err(|e| e.to_string())?;
        let h2 = trace.h2.shape();
        ensure(h2 == (1, 32, 32), format!("H2 shape {h2:?}"))?;
        let l = &trace.logits;
        ensure(
            (l.height, l.width) == (h_out, w_out),
            format!("logits {}x{}", l.height, l.width),
        )?;
        seen.push(format!("{h_out}x{w_out}"));
    }
    Ok(format!(
        "N=16 C=128 8x8 grid: H2 1x32x32, logits {}",
        seen.join(" ")
    ))
}

fn expressive_probe() -> Verdict {
    let start = Instant::now();
    let cfg = probe_config();
    let out = overfit_probe(
        &disk_target(&cfg),
        &cfg,
        &LossConfig::default(),
        300,
        0.05,
        7,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        out.final_dice > 0.95,
        format!("soft dice {:.4}", out.final_dice),
    )?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "soft dice {:.4} after 300 steps, {:.1?}",
        out.final_dice,
        start.elapsed()
    ))
}

fn random_primitive(rng: &mut ChaCha8Rng) -> GroundingElement {
    let mut b = || rng.random_range(0..1000u32);
    let (a, c, d, e) = (b(), b(), b(), b());
    match rng.random_range(0..4) {
        0 => GroundingElement::Box {
            x1: a.min(d),
            y1: c.min(e),
            x2: a.max(d),
            y2: c.max(e),
        },
        1 => GroundingElement::Point { x: a, y: c },
        2 => GroundingElement::Line {
            x1: a,
            y1: c,
            x2: d,
            y2: e,
        },
        _ => GroundingElement::MaskQuery {
            token_count: rng.random_range(1..20),
        },
    }
}

fn random_run(rng: &mut ChaCha8Rng, max: usize) -> Vec<GroundingElement> {
    let mut out: Vec<GroundingElement> = Vec::new();
    for _ in 0..rng.random_range(0..=max) {
        let el = random_primitive(rng);
        let adjacent_masks = matches!(el, GroundingElement::MaskQuery { .. })
            && matches!(out.last(), Some(GroundingElement::MaskQuery { .. }));
        if !adjacent_masks {
            out.push(el);
        }
    }
    out
}

fn random_elements(rng: &mut ChaCha8Rng) -> Vec<GroundingElement> {
    const LABEL_CHARS: &[char] = &['a', 'Z', '7', ' ', '_', '(', ',', '.', '甲', 'é'];
    let mut els = random_run(rng, 6);
    for _ in 0..rng.random_range(0..3) {
        let label = (0..rng.random_range(0..10))
            .map(|_| LABEL_CHARS[rng.random_range(0..LABEL_CHARS.len())])
            .collect();
        els.push(GroundingElement::ObjectRef {
            label,
            body: random_run(rng, 3),
        });
    }
    els
}

fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        BOX_START,
        BOX_END,
        POINT_START,
        POINT_END,
        LINE_START,
        LINE_END,
        SEG_MASK,
        REF_START,
        REF_END,
        "<|",
        "|>",
        "(",
        ")",
        ",",
        " ",
        "-",
        "12",
        "999",
        "1000",
        "\n",
        "ß",
        "🦀",
    ];
    let mut s = String::new();
    for _ in 0..rng.random_range(0..24) {
        if rng.random_bool(0.2) {
            s.push(char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?'));
        } else {
            s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        }
    }
    s
}

fn codec_roundtrip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let els = random_elements(&mut rng);
        let text = serialize(&els).map_err(|e| format!("list {i}: {e}"))?;
        let back = parse(&text);
        ensure(
            back.diagnostics.is_empty() && back.elements == els,
            format!("list {i} differs: {text:?}"),
        )?;
    }
    let mut panics = 0;
    for _ in 0..100_000 {
        let s = fuzz_string(&mut rng);
        if catch_unwind(|| parse(&s)).is_err() {
            panics += 1;
        }
    }
    ensure(panics == 0, format!("{panics} fuzzed inputs panicked"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "1000 roundtrips exact, 100000 fuzzed strings survived, {:.1?}",
        start.elapsed()
    ))
}

fn random_rect(rng: &mut ChaCha8Rng) -> Rect {
    let (x, y) = (
        rng.random_range(0..12) as f64,
        rng.random_range(0..12) as f64,
    );
    Rect::new(
        x,
        y,
        x + rng.random_range(1..7) as f64,
        y + rng.random_range(1..7) as f64,
    )
}

fn detection_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for c in 0..100 {
        let budget = rng.random_range(0..=10usize);
        let mut corpus: oracles::ScoredCorpus = Vec::new();
        let mut used = 0;
        for _ in 0..rng.random_range(1..4) {
            let n = rng.random_range(0..=(budget - used).min(4));
            used += n;
            let preds = (0..n)
                .map(|_| (random_rect(&mut rng), rng.random_range(0..5) as f64 / 4.0))
                .collect();
            let gts = (0..rng.random_range(0..4))
                .map(|_| random_rect(&mut rng))
                .collect();
            corpus.push((preds, gts));
        }
        let groups: Vec<DetectionGroup> = corpus
            .iter()
            .map(|(p, g)| DetectionGroup {
                preds: p
                    .iter()
                    .map(|&(rect, s)| ScoredBox {
                        rect,
                        score: Some(s),
                    })
                    .collect(),
                gts: g.clone(),
            })
            .collect();
        let got = best_f1_sweep(&groups, 0.5).map_err(|e| e.to_string())?;
        let (f1, threshold) = oracles::brute_force_best(&corpus, 0.5);
        ensure(
            (got.f1 - f1).abs() < 1e-12 && got.threshold == threshold,
            format!(
                "corpus {c}: sweep ({}, {}) vs oracle ({f1}, {threshold})",
                got.f1, got.threshold
            ),
        )?;
    }
    for p in 0..500 {
        let mut b = || {
            let (x, y) = (rng.random_range(0..24i64), rng.random_range(0..24i64));
            [x, y, x + rng.random_range(0..9), y + rng.random_range(0..9)]
        };
        let (a, c) = (b(), b());
        let rect = |r: [i64; 4]| Rect::new(r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64);
        let analytic = iou_boxes(&rect(a), &rect(c)).map_err(|e| e.to_string())?;
        ensure(
            analytic == oracles::raster_iou(a, c),
            format!("pair {p}: {a:?} {c:?}"),
        )?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "100 corpora match exhaustive search, 500 box pairs match rasterization, {:.1?}",
        start.elapsed()
    ))
}

fn fixture_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<AnnotationRecord> {
    let sites = ["thyroid", "breast", "liver"];
    (0..n)
        .map(|i| {
            let mask = BinaryMask::from_fn(16, 16, |r, c| {
                let (dr, dc) = (r as f64 - 8.0, c as f64 - 8.0);
                dr * dr + dc * dc < (3 + i % 4) as f64 * (3 + i % 4) as f64
            });
            let (x, y) = (rng.random_range(0.0..8.0), rng.random_range(0.0..8.0));
            let dx = if i % 2 == 0 { "benign" } else { "malignant" };
            let target = Target {
                label: "lesion".into(),
                mask: Some(rle_encode(&mask)),
                bbox: Some(Rect::new(x, y, x + 6.0, y + 6.0)),
                keypoints: Some(vec![
                    Keypoint {
                        name: "apex".into(),
                        x,
                        y,
                    },
                    Keypoint {
                        name: "base".into(),
                        x: x + 6.0,
                        y: y + 6.0,
                    },
                ]),
                score: Some(rng.random_range(0.0..1.0)),
                diagnosis: Some(dx.into()),
                ..Default::default()
            };
            AnnotationRecord::new(&format!("img{i:03}"), 16, 16, sites[i % 3], vec![target])
        })
        .collect()
}

fn metric_fixed_points() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gts = fixture_records(&mut rng, 12);
    let err = |e: dynmask_core::eval::EvalError| e.to_string();

    let seg = eval_segmentation(&gts, &gts).map_err(err)?;
    let det = eval_detection(&gts, &gts, 0.5, true).map_err(err)?;
    let kpt = eval_keypoints(&gts, &gts).map_err(err)?;
    let gt_corpus = Corpus::from_records(gts.clone()).map_err(err)?;
    let dx = eval_diagnosis_corpus(&gt_corpus, &gt_corpus).map_err(err)?;
    let d = det.detection.as_ref().unwrap();
    ensure(
        format!("{:.2}", seg.overall.unwrap()) == "100.00",
        format!("mIoU {:?}", seg.overall),
    )?;
    ensure(d.f1 == 1.0, format!("F1 {}", d.f1))?;
    ensure(kpt.overall == Some(0.0), format!("MDE {:?}", kpt.overall))?;
    ensure(
        dx.overall == Some(100.0),
        format!("accuracy {:?}", dx.overall),
    )?;

    let empty: Vec<AnnotationRecord> = gts
        .iter()
        .map(|g| {
            let blank = Target {
                label: "lesion".into(),
                mask: Some(rle_encode(&BinaryMask::zeros(16, 16))),
                ..Default::default()
            };
            AnnotationRecord::new(&g.image_id, 16, 16, &g.site, vec![blank])
        })
        .collect();
    let seg = eval_segmentation(&empty, &gts).map_err(err)?;
    let det = eval_detection(&empty, &gts, 0.5, false).map_err(err)?;
    let kpt = eval_keypoints(&empty, &gts).map_err(err)?;
    let dx = eval_diagnosis_corpus(&Corpus::from_records(empty).map_err(err)?, &gt_corpus)
        .map_err(err)?;
    let d = det.detection.as_ref().unwrap();
    ensure(
        seg.overall == Some(0.0),
        format!("empty mIoU {:?}", seg.overall),
    )?;
    ensure(
        d.f1 == 0.0 && d.fn_ == gts.len() && d.tp == 0,
        format!("empty det {d:?}"),
    )?;
    ensure(
        kpt.incomplete == Some(gts.len()) && kpt.overall.is_none(),
        format!("empty kpt {kpt:?}"),
    )?;
    ensure(
        dx.overall == Some(0.0),
        format!("empty accuracy {:?}", dx.overall),
    )?;
    Ok("pred==gt: mIoU 100.00, F1 1.0, MDE 0.0, acc 100.0; empty: 0.0, F1 0 (fn=12), 12 incomplete, 0.0".into())
}

fn loss_sanity() -> Verdict {
    let target = BinaryMask::centered_disk(16, 16, 5.0);
    let saturated = MaskLogits::from_vec(
        16,
        16,
        target
            .data
            .iter()
            .map(|&t| if t == 1 { 30.0 } else { -30.0 })
            .collect(),
    )
    .unwrap();
    let dice = dice_loss(&saturated, &target, 1.0).unwrap().loss;
    let bce = bce_loss(&saturated, &target).unwrap().loss;
    ensure(
        dice < 1e-6 && bce < 1e-6,
        format!("saturated dice {dice:.2e}, bce {bce:.2e}"),
    )?;
    let zero = MaskLogits::filled(16, 16, 0.0);
    let at_zero = bce_loss(&zero, &target).unwrap().loss;
    ensure(
        (at_zero - std::f64::consts::LN_2).abs() < 1e-14,
        format!("bce(0) = {at_zero}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let logits = MaskLogits::from_vec(
            16,
            16,
            (0..256).map(|_| rng.random_range(-4.0..4.0)).collect(),
        )
        .unwrap();
        let (wd, wb) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let cfg = LossConfig {
            weight_dice: wd,
            weight_bce: wb,
            ..LossConfig::default()
        };
        let combined = combined_seg_loss(&logits, &target, &cfg).unwrap();
        let d = dice_loss(&logits, &target, cfg.dice_smooth).unwrap();
        let b = bce_loss(&logits, &target).unwrap();
        worst = worst.max((combined.loss - (wd * d.loss + wb * b.loss)).abs());
        for ((c, x), y) in combined.grad.iter().zip(&d.grad).zip(&b.grad) {
            worst = worst.max((c - (wd * x + wb * y)).abs());
        }
    }
    ensure(worst <= 1e-12, format!("additivity error {worst:.2e}"))?;
    Ok(format!(
        "saturated dice {dice:.1e} bce {bce:.1e}; bce(0)=ln2; additivity error {worst:.1e}"
    ))
}

fn write_jsonl(path: &Path, records: &[AnnotationRecord]) {
    let lines: Vec<String> = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dynmask"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("{args:?} exited {:?}", out.status.code()),
    )?;
    Ok(out.stdout)
}

fn determinism() -> Verdict {
    let dir: PathBuf =
        std::env::temp_dir().join(format!("dynmask-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let gts = fixture_records(&mut rng, 9);
    let mut preds = fixture_records(&mut rng, 9);
    preds.reverse();
    for (p, g) in preds.iter_mut().zip(&gts) {
        p.image_id = g.image_id.clone();
        p.site = g.site.clone();
    }
    let (gt_path, pred_path) = (dir.join("gt.jsonl"), dir.join("pred.jsonl"));
    write_jsonl(&gt_path, &gts);
    write_jsonl(&pred_path, &preds);
    let (gt, pred) = (gt_path.to_str().unwrap(), pred_path.to_str().unwrap());

    let mut commands: Vec<Vec<&str>> = vec![
        vec!["gradcheck", "--trials", "5", "--seed", "3"],
        vec!["probe", "--steps", "40"],
    ];
    for kind in ["seg", "det", "kpt", "dx"] {
        commands.push(vec!["eval", kind, "--pred", pred, "--gt", gt]);
    }
    commands.push(vec!["eval", "det", "--pred", pred, "--gt", gt, "--best-f1"]);
    let mut checked = 0;
    for args in &commands {
        let first = run_cli(args)?;
        let second = run_cli(args)?;
        ensure(
            !first.is_empty() && first == second,
            format!("{args:?}: stdout differs between runs"),
        )?;
        checked += 1;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "{checked} command lines produced bit-identical stdout"
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("shape contract", shape_contract),
        ("expressive-power probe", expressive_probe),
        ("codec roundtrip", codec_roundtrip),
        ("detection-protocol oracle", detection_oracle),
        ("metric fixed points", metric_fixed_points),
        ("loss sanity", loss_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut summary = BTreeMap::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => {
                failed += 1;
                ("FAIL", d.as_str())
            }
        };
        println!("[{tag}] {}. {name}: {detail}", i + 1);
        summary.insert(i + 1, verdict.is_ok());
    }
    println!(
        "acceptance: {}/{} passed",
        summary.values().filter(|&&ok| ok).count(),
        summary.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
