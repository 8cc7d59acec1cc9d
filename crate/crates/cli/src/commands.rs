use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dynmask_core::codec::{parse, GroundingElement, ParseDiagnostic, Task};
use dynmask_core::decoder::{
    disk_target, probe_config, random_inputs, read_params, write_params, ProbeStep,
    PROBE_INIT_SCALE,
};
use dynmask_core::eval::{
    eval_detection_corpus, eval_diagnosis_corpus, eval_keypoints_corpus, eval_segmentation_corpus,
    Corpus,
};
use dynmask_core::gradsuite::{
    decoder_gradient_error, primitive_gradient_errors, random_decoder_config, CheckResult,
};
use dynmask_core::tensor::Matrix;
use dynmask_core::{
    binarize, decode_mask, overfit_probe, DecoderConfig, DecoderParams, LossConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    Cli, Command, DemoDecodeArgs, EvalArgs, EvalKind, Failure, GradcheckArgs, InitDemoArgs,
    ParseArgs, ProbeArgs, Settings, EXIT_CHECK, EXIT_OK,
};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

type Outcome = Result<i32, Failure>;

pub(crate) fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    check_flags(&cli.command)?;
    let settings = Settings::load(cli.settings.as_deref())?;
    match &cli.command {
        Command::Gradcheck(a) => gradcheck(a, &settings, out),
        Command::DemoDecode(a) => demo_decode(a, out),
        Command::InitDemo(a) => init_demo(a, &settings, out),
        Command::Parse(a) => parse_cmd(a, &settings, out),
        Command::Probe(a) => probe(a, &settings, out),
        Command::Eval(a) => eval(a, &settings, out, err),
    }
}

/// Flag combinations that clap cannot express; runs before any file is read.
fn check_flags(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Eval(a) if a.kind != EvalKind::Det && (a.best_f1 || a.iou_thresh.is_some()) => {
            Err(Failure::Usage(
                "--best-f1 and --iou-thresh apply only to `eval det`".into(),
            ))
        }
        Command::Parse(a) => a
            .task
            .as_deref()
            .map_or(Ok(()), |t| parse_task(t).map(drop)),
        Command::DemoDecode(a) if a.out.extension().is_some_and(|e| e == "pgm") => Err(
            Failure::Usage("--out names the logits file; the .pgm is derived from it".into()),
        ),
        _ => Ok(()),
    }
}

fn parse_task(s: &str) -> Result<Task, Failure> {
    s.parse::<Task>().map_err(Failure::Usage)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::Io(format!("stdout: {e}")))
}

#[derive(Serialize)]
struct DecoderCheck {
    config: DecoderConfig,
    coordinates: usize,
    max_rel_error: f64,
}

#[derive(Serialize)]
struct GradcheckReport {
    seed: u64,
    tolerance: f64,
    decoder: Vec<DecoderCheck>,
    primitives: Vec<CheckResult>,
    max_rel_error: f64,
    passed: bool,
}

fn gradcheck(a: &GradcheckArgs, s: &Settings, out: &mut dyn Write) -> Outcome {
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let trials = a.trials.or(s.trials).unwrap_or(20);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decoder = Vec::new();
    for t in 0..trials {
        let cfg = random_decoder_config(&mut rng);
        let r = decoder_gradient_error(&cfg, seed.wrapping_add(t))
            .map_err(|e| Failure::Check(format!("trial {t}: {e}")))?;
        decoder.push(DecoderCheck {
            config: cfg,
            coordinates: r.coordinates,
            max_rel_error: r.max_rel_error,
        });
    }
    let primitives = primitive_gradient_errors(seed).map_err(|e| Failure::Check(e.to_string()))?;
    let max_rel_error = decoder
        .iter()
        .map(|d| d.max_rel_error)
        .chain(primitives.iter().map(|p| p.max_rel_error))
        .fold(0.0, f64::max);
    let passed = max_rel_error < GRADCHECK_TOLERANCE;
    emit(
        out,
        &GradcheckReport {
            seed,
            tolerance: GRADCHECK_TOLERANCE,
            decoder,
            primitives,
            max_rel_error,
            passed,
        },
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK })
}

#[derive(Serialize, Deserialize)]
struct Features {
    f_img: Matrix,
    f_q: Matrix,
}

fn load_config(path: &Path) -> Result<DecoderConfig, Failure> {
    let cfg: DecoderConfig = read_json(path)?;
    cfg.validate().map_err(|e| io_err(path, e))?;
    Ok(cfg)
}

/// Plain (P2) PGM, foreground white.
fn pgm(mask: &dynmask_core::BinaryMask) -> String {
    let mut s = format!("P2\n{} {}\n255\n", mask.width, mask.height);
    for row in mask.data.chunks(mask.width.max(1)) {
        let line: Vec<&str> = row
            .iter()
            .map(|&v| if v != 0 { "255" } else { "0" })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct DemoSummary {
    logits: PathBuf,
    mask: PathBuf,
    height: usize,
    width: usize,
    foreground: usize,
}

fn demo_decode(a: &DemoDecodeArgs, out: &mut dyn Write) -> Outcome {
    let cfg = load_config(&a.config)?;
    let (stored, params) = read_params(&a.params).map_err(|e| io_err(&a.params, e))?;
    if stored != cfg {
        return Err(Failure::Io(format!(
            "{}: parameters were saved for a different configuration",
            a.params.display()
        )));
    }
    let features: Features = read_json(&a.features)?;
    let logits = decode_mask(&features.f_img, &features.f_q, &params, &cfg)
        .map_err(|e| io_err(&a.features, e))?;
    let mask = binarize(&logits, 0.5);
    let mask_path = a.out.with_extension("pgm");
    let json = serde_json::to_string(&logits).map_err(|e| Failure::Io(e.to_string()))?;
    write_file(&a.out, (json + "\n").as_bytes())?;
    write_file(&mask_path, pgm(&mask).as_bytes())?;
    emit(
        out,
        &DemoSummary {
            logits: a.out.clone(),
            mask: mask_path,
            height: mask.height,
            width: mask.width,
            foreground: mask.count_ones(),
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct InitSummary {
    params: PathBuf,
    features: PathBuf,
    seed: u64,
}

fn init_demo(a: &InitDemoArgs, s: &Settings, out: &mut dyn Write) -> Outcome {
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let cfg = load_config(&a.config)?;
    fs::create_dir_all(&a.dir).map_err(|e| io_err(&a.dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = DecoderParams::random(&cfg, &mut rng, PROBE_INIT_SCALE);
    let (f_img, f_q) = random_inputs(&cfg, &mut rng, 1.0);
    let params_path = a.dir.join("params.json");
    write_params(&params, &cfg, &params_path).map_err(|e| io_err(&params_path, e))?;
    let features_path = a.dir.join("features.json");
    let json =
        serde_json::to_string(&Features { f_img, f_q }).map_err(|e| Failure::Io(e.to_string()))?;
    write_file(&features_path, (json + "\n").as_bytes())?;
    emit(
        out,
        &InitSummary {
            params: params_path,
            features: features_path,
            seed,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ParseReport {
    elements: Vec<GroundingElement>,
    offsets: Vec<usize>,
    diagnostics: Vec<ParseDiagnostic>,
}

fn parse_cmd(a: &ParseArgs, s: &Settings, out: &mut dyn Write) -> Outcome {
    let task = match a.task.as_deref().or(s.task.as_deref()) {
        Some(t) => Some(parse_task(t)?),
        None => None,
    };
    let n_query = a.n_query.or(s.n_query).unwrap_or(16) as usize;
    let text = match (&a.text, &a.file) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => read_text(f)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let parsed = parse(&text);
    let mut diagnostics = parsed.diagnostics.clone();
    if let Some(task) = task {
        diagnostics.extend(parsed.validate(task, n_query));
    }
    let failed = diagnostics.iter().any(ParseDiagnostic::is_error);
    emit(
        out,
        &ParseReport {
            elements: parsed.elements,
            offsets: parsed.offsets,
            diagnostics,
        },
    )?;
    Ok(if failed { EXIT_CHECK } else { EXIT_OK })
}

#[derive(Serialize)]
struct ProbeReport {
    config: DecoderConfig,
    target_radius: f64,
    steps: u64,
    lr: f64,
    seed: u64,
    trajectory: Vec<ProbeStep>,
    final_dice: f64,
}

fn probe(a: &ProbeArgs, s: &Settings, out: &mut dyn Write) -> Outcome {
    let steps = a.steps.or(s.steps).unwrap_or(300);
    let lr = a.lr.or(s.lr).unwrap_or(0.05);
    let seed = a.seed.or(s.seed).unwrap_or(7);
    let min_dice = a.min_dice.or(s.min_dice);
    let cfg = probe_config();
    let target = disk_target(&cfg);
    let outcome = overfit_probe(
        &target,
        &cfg,
        &LossConfig::default(),
        steps as usize,
        lr,
        seed,
    )
    .map_err(|e| Failure::Check(e.to_string()))?;
    let report = ProbeReport {
        config: cfg,
        target_radius: cfg.h_out as f64 / 4.0,
        steps,
        lr,
        seed,
        trajectory: outcome.trajectory,
        final_dice: outcome.final_dice,
    };
    emit(out, &report)?;
    match min_dice {
        Some(m) if report.final_dice <= m => Ok(EXIT_CHECK),
        _ => Ok(EXIT_OK),
    }
}

fn load_corpus(path: &Path, err: &mut dyn Write) -> Result<Corpus, Failure> {
    let corpus = Corpus::from_jsonl(&read_text(path)?).map_err(|e| io_err(path, e))?;
    for w in &corpus.warnings {
        let _ = writeln!(err, "warning: {}: {w}", path.display());
    }
    Ok(corpus)
}

fn eval(a: &EvalArgs, s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let preds = load_corpus(&a.pred, err)?;
    let gts = load_corpus(&a.gt, err)?;
    let report = match a.kind {
        EvalKind::Seg => eval_segmentation_corpus(&preds, &gts),
        EvalKind::Det => {
            let iou = a.iou_thresh.or(s.iou_thresh).unwrap_or(0.5);
            let best = a.best_f1 || s.best_f1.unwrap_or(false);
            eval_detection_corpus(&preds, &gts, iou, best)
        }
        EvalKind::Kpt => eval_keypoints_corpus(&preds, &gts),
        EvalKind::Dx => eval_diagnosis_corpus(&preds, &gts),
    }
    .map_err(|e| Failure::Io(e.to_string()))?;
    if a.table {
        write!(out, "{}", report.to_table()).map_err(|e| Failure::Io(format!("stdout: {e}")))?;
    } else {
        emit(out, &report)?;
    }
    Ok(EXIT_OK)
}
