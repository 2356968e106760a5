//! One function per subcommand. Each resolves its configuration, reads
//! the inputs, calls the library, and hands the result to the emitter.

use crate::config::{parse_enum, pick, require, FileConfig};
use crate::runio::{emit, OutTarget, RunManifest};
use crate::{
    AblateArgs, AugmentArgs, CliError, EvalArgs, GenDatasetArgs, IngestArgs, Log, OutputFormat,
    PseudoLabelsArgs, ResponderKind,
};
use clap::ValueEnum;
use odac_core::augment::{self, AugmentError};
use odac_core::coco_ingest::{self, AnnotationFile};
use odac_core::dataset_gen::{self, GenConfig, GenError, Ratio};
use odac_core::eval::{self, AblationConfig, AblationError};
use odac_core::jsonl;
use odac_core::pseudo_label::{count_pseudo_labels, filter_detections};
use odac_core::responder::{
    respond_all, BlindOracle, ReferenceOracle, RemoteConfig, RemoteResponder, Responder,
};
use odac_core::{CategoryTable, DetectionSet, FilterConfig, PromptRecord, PseudoLabelTable};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Duration;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn pipeline_err(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

fn load_annotation_file(path: &Path) -> Result<AnnotationFile, CliError> {
    coco_ingest::load_annotations(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_detection_file(path: &Path, cats: &CategoryTable) -> Result<DetectionSet, CliError> {
    coco_ingest::load_detections(path, cats)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn out_target(flag: Option<String>, file: &FileConfig) -> Result<OutTarget, CliError> {
    Ok(OutTarget::parse(&require(
        flag,
        file.out.clone(),
        "out",
    )?))
}

fn filter_config(
    confidence: Option<f64>,
    aspect_ratio: Option<f64>,
    file: &FileConfig,
) -> Result<FilterConfig, CliError> {
    let defaults = FilterConfig::default();
    let cfg = FilterConfig {
        confidence_threshold: pick(confidence, file.confidence, defaults.confidence_threshold),
        aspect_ratio_min: pick(aspect_ratio, file.aspect_ratio, defaults.aspect_ratio_min),
    };
    cfg.validate().map_err(input_err)?;
    Ok(cfg)
}

fn file_ratio(file: &FileConfig) -> Result<Option<Ratio>, CliError> {
    file.ratio
        .as_deref()
        .map(|s| s.parse::<Ratio>())
        .transpose()
        .map_err(input_err)
}

fn gen_error(e: GenError) -> CliError {
    // Both variants mean the inputs cannot support the request.
    input_err(e)
}

fn jsonl_bytes<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    jsonl::to_string(items).into_bytes()
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(pipeline_err)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub(crate) fn ingest(args: IngestArgs, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let annotations = require(args.annotations, file.annotations.clone(), "annotations")?;
    let detections = args.detections.or_else(|| file.detections.clone());
    let out = out_target(args.out, file)?;

    let loaded = load_annotation_file(&annotations)?;
    log.info(format_args!(
        "{}: {} images, {} annotations, {} categories",
        annotations.display(),
        loaded.image_ids.len(),
        loaded.annotations.len(),
        loaded.categories.len()
    ));
    let mut manifest = RunManifest::new(
        "ingest",
        json!({ "annotations": annotations.display().to_string() }),
        &out,
    );
    manifest.digest_input(&annotations)?;

    if let Some(path) = &detections {
        let dets = load_detection_file(path, &loaded.categories)?;
        log.info(format_args!(
            "{}: {} detections validated",
            path.display(),
            dets.len()
        ));
        manifest.digest_input(path)?;
    }

    let data = coco_ingest::serialize_annotations(&loaded).into_bytes();
    emit(&out, &data, &manifest, log)
}

/// Build the reference table either from a saved label file or by
/// filtering and counting a detection file.
fn resolve_label_table(
    labels: Option<PathBuf>,
    detections: Option<PathBuf>,
    cats: &CategoryTable,
    filter: &FilterConfig,
    manifest: &mut RunManifest,
) -> Result<PseudoLabelTable, CliError> {
    match (labels, detections) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let table = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            manifest.digest_input(&path)?;
            Ok(table)
        }
        (None, Some(path)) => {
            let dets = load_detection_file(&path, cats)?;
            manifest.digest_input(&path)?;
            Ok(count_pseudo_labels(&filter_detections(&dets, filter)))
        }
        (None, None) => Err(CliError::Input(
            "one of --labels or --detections is required".to_string(),
        )),
    }
}

pub(crate) fn pseudo_labels(
    args: PseudoLabelsArgs,
    file: &FileConfig,
    log: &Log,
) -> Result<(), CliError> {
    let annotations = require(args.annotations, file.annotations.clone(), "annotations")?;
    let detections = require(args.detections, file.detections.clone(), "detections")?;
    let out = out_target(args.out, file)?;
    let cfg = filter_config(args.confidence, args.aspect_ratio, file)?;

    let loaded = load_annotation_file(&annotations)?;
    let dets = load_detection_file(&detections, &loaded.categories)?;
    let kept = filter_detections(&dets, &cfg);
    let table = count_pseudo_labels(&kept);
    log.info(format_args!(
        "kept {} of {} detections across {} cells",
        kept.len(),
        dets.len(),
        table.len()
    ));

    let mut manifest = RunManifest::new(
        "pseudo-labels",
        serde_json::to_value(&cfg).map_err(pipeline_err)?,
        &out,
    );
    manifest.digest_input(&annotations)?;
    manifest.digest_input(&detections)?;
    emit(&out, &json_bytes(&table)?, &manifest, log)
}

fn gen_config(
    digit: Option<u32>,
    ratio: Option<Ratio>,
    seed: Option<u64>,
    delta_max: Option<u32>,
    counterfactual_fraction: Option<f64>,
    zero_fraction: Option<f64>,
    file: &FileConfig,
) -> Result<GenConfig, CliError> {
    let mut cfg = GenConfig::new(pick(digit, file.digit, 100), pick(seed, file.seed, 0));
    if let Some(r) = ratio.or(file_ratio(file)?) {
        cfg.yesno_ratio = r;
    }
    if let Some(d) = delta_max.or(file.delta_max) {
        cfg.delta_max = d;
    }
    if let Some(f) = counterfactual_fraction.or(file.counterfactual_fraction) {
        cfg.counterfactual_fraction = f;
    }
    if let Some(f) = zero_fraction.or(file.zero_fraction) {
        cfg.zero_fraction = f;
    }
    cfg.validate().map_err(gen_error)?;
    Ok(cfg)
}

pub(crate) fn gen_dataset(
    args: GenDatasetArgs,
    file: &FileConfig,
    log: &Log,
) -> Result<(), CliError> {
    let annotations = require(args.annotations, file.annotations.clone(), "annotations")?;
    let out = out_target(args.out, file)?;
    let cfg = gen_config(
        args.digit,
        args.ratio,
        args.seed,
        args.delta_max,
        args.counterfactual_fraction,
        args.zero_fraction,
        file,
    )?;

    let loaded = load_annotation_file(&annotations)?;
    let ds = dataset_gen::generate(&loaded.annotations, &loaded.categories, &cfg)
        .map_err(gen_error)?;
    for warning in &ds.manifest.warnings {
        log.warn(format_args!("{warning}"));
    }
    log.info(format_args!("generated {} records", ds.records.len()));

    let mut manifest = RunManifest::new(
        "gen-dataset",
        serde_json::to_value(&cfg).map_err(pipeline_err)?,
        &out,
    );
    manifest.seed = Some(cfg.seed);
    manifest.extra = Some(serde_json::to_value(&ds.manifest).map_err(pipeline_err)?);
    manifest.digest_input(&annotations)?;
    emit(&out, &jsonl_bytes(&ds.records), &manifest, log)
}

fn augment_error(e: AugmentError) -> CliError {
    // Question files are user input; every failure here is a bad file.
    input_err(e)
}

pub(crate) fn augment(args: AugmentArgs, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let questions = require(args.questions, file.questions.clone(), "questions")?;
    let annotations = require(args.annotations, file.annotations.clone(), "annotations")?;
    let out = out_target(args.out, file)?;
    let filter = filter_config(args.confidence, args.aspect_ratio, file)?;

    let loaded = load_annotation_file(&annotations)?;
    let mut manifest = RunManifest::new(
        "augment",
        serde_json::to_value(&filter).map_err(pipeline_err)?,
        &out,
    );
    manifest.digest_input(&annotations)?;
    let table = resolve_label_table(
        args.labels.or_else(|| file.labels.clone()),
        args.detections.or_else(|| file.detections.clone()),
        &loaded.categories,
        &filter,
        &mut manifest,
    )?;

    let parsed = augment::read_questions(&questions).map_err(augment_error)?;
    manifest.digest_input(&questions)?;
    let records =
        augment::augment_test_set(&parsed, &table, &loaded.categories).map_err(augment_error)?;
    log.info(format_args!("augmented {} questions", records.len()));
    emit(&out, &jsonl_bytes(&records), &manifest, log)
}

fn resolve_endpoint(flag: Option<String>, file: &FileConfig) -> Result<String, CliError> {
    flag.or_else(|| file.endpoint.clone())
        .or_else(|| std::env::var("ODAC_ENDPOINT").ok())
        .ok_or_else(|| {
            CliError::Input("remote responder needs --endpoint or ODAC_ENDPOINT".to_string())
        })
}

pub(crate) fn eval(args: EvalArgs, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let records_path = require(args.records, file.records.clone(), "records")?;
    let kind = match args.responder {
        Some(kind) => kind,
        None => match &file.responder {
            Some(value) => parse_enum::<ResponderKind>(value, "responder")?,
            None => return Err(CliError::Input("missing required --responder".to_string())),
        },
    };
    let out = out_target(args.out, file)?;
    let jobs = pick(args.jobs, file.jobs, 1).max(1);
    let format = match args.format {
        Some(f) => f,
        None => match &file.format {
            Some(value) => parse_enum::<OutputFormat>(value, "format")?,
            None => OutputFormat::Json,
        },
    };

    let records: Vec<PromptRecord> = jsonl::read(&records_path).map_err(input_err)?;
    let mut manifest = RunManifest::new("eval", json!({}), &out);
    manifest.digest_input(&records_path)?;

    let mut config_echo = json!({
        "records": records_path.display().to_string(),
        "responder": kind.to_possible_value().expect("skipless enum").get_name(),
        "jobs": jobs,
    });
    let responder: Box<dyn Responder> = match kind {
        ResponderKind::OracleReference => {
            let annotations =
                require(args.annotations, file.annotations.clone(), "annotations")?;
            let loaded = load_annotation_file(&annotations)?;
            manifest.digest_input(&annotations)?;
            let filter = filter_config(args.confidence, args.aspect_ratio, file)?;
            let table = resolve_label_table(
                args.labels.or_else(|| file.labels.clone()),
                args.detections.or_else(|| file.detections.clone()),
                &loaded.categories,
                &filter,
                &mut manifest,
            )?;
            config_echo["filter"] = serde_json::to_value(&filter).map_err(pipeline_err)?;
            Box::new(ReferenceOracle::new(table, loaded.categories))
        }
        ResponderKind::OracleBlind => {
            let seed = pick(args.seed, file.seed, 0);
            manifest.seed = Some(seed);
            config_echo["seed"] = json!(seed);
            Box::new(BlindOracle::new(seed))
        }
        ResponderKind::Remote => {
            let mut remote = RemoteConfig::new(resolve_endpoint(args.endpoint, file)?);
            remote.timeout = Duration::from_secs(pick(args.timeout_secs, file.timeout_secs, 30));
            remote.retry_budget = pick(args.retry_budget, file.retry_budget, 2);
            config_echo["endpoint"] = json!(remote.endpoint);
            config_echo["timeout_secs"] = json!(remote.timeout.as_secs());
            config_echo["retry_budget"] = json!(remote.retry_budget);
            Box::new(RemoteResponder::new(remote))
        }
    };
    manifest.config = config_echo;

    log.info(format_args!(
        "answering {} records with {}",
        records.len(),
        responder.id()
    ));
    let replies = respond_all(responder.as_ref(), &records, jobs).map_err(pipeline_err)?;
    let report = eval::score(&records, &replies).map_err(pipeline_err)?;
    log.info(format_args!(
        "overall {}/{} = {:.4}",
        report.overall.correct, report.overall.total, report.overall.acc
    ));
    manifest.extra = Some(json!({
        "responder_id": responder.id(),
        "overall_acc": report.overall.acc,
    }));

    let data = match format {
        OutputFormat::Json => json_bytes(&report)?,
        OutputFormat::Text => report.render_text().into_bytes(),
    };
    emit(&out, &data, &manifest, log)
}

fn ablation_error(e: AblationError) -> CliError {
    match e {
        AblationError::Gen(inner) => gen_error(inner),
        AblationError::Augment(inner) => augment_error(inner),
        other => pipeline_err(other),
    }
}

pub(crate) fn ablate(args: AblateArgs, file: &FileConfig, log: &Log) -> Result<(), CliError> {
    let annotations = require(args.annotations, file.annotations.clone(), "annotations")?;
    let detections = require(args.detections, file.detections.clone(), "detections")?;
    let out = out_target(args.out, file)?;
    let format = match args.format {
        Some(f) => f,
        None => match &file.format {
            Some(value) => parse_enum::<OutputFormat>(value, "format")?,
            None => OutputFormat::Json,
        },
    };
    let gen = gen_config(
        args.digit,
        args.ratio,
        args.seed,
        args.delta_max,
        args.counterfactual_fraction,
        args.zero_fraction,
        file,
    )?;
    let mut cfg = AblationConfig::new(gen);
    cfg.filter = filter_config(args.confidence, args.aspect_ratio, file)?;

    let loaded = load_annotation_file(&annotations)?;
    let dets = load_detection_file(&detections, &loaded.categories)?;
    let table = eval::ablation_run(
        &loaded.annotations,
        &loaded.categories,
        &dets,
        &eval::full_matrix(),
        &cfg,
    )
    .map_err(ablation_error)?;
    for outcome in &table.cells {
        log.info(format_args!(
            "{}: overall {:.4}",
            outcome.cell, outcome.report.overall.acc
        ));
    }

    let mut manifest = RunManifest::new(
        "ablate",
        serde_json::to_value(&cfg).map_err(pipeline_err)?,
        &out,
    );
    manifest.seed = Some(cfg.gen.seed);
    manifest.digest_input(&annotations)?;
    manifest.digest_input(&detections)?;

    let data = match format {
        OutputFormat::Json => json_bytes(&table)?,
        OutputFormat::Text => table.render_text().into_bytes(),
    };
    emit(&out, &data, &manifest, log)
}
