//! Implementations behind the CLI subcommands. Everything here is also
//! callable from tests.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use lap_core::cost::{compare_totals, count_network_with, CostReport};
use lap_core::data::{generate_toy_sample, split_indices, ToyDatasetSpec};
use lap_core::gradcheck;
use lap_core::heatmap::{
    decode, keypoint_records_to_text, KeypointSchema, KeypointSet,
};
use lap_core::metrics::{evaluate, EvalResult};
use lap_core::net::{build_network, NetworkConfig};
use lap_core::tensor::{Shape, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config_file::{resolve_dataset_spec, resolve_net_config, resolve_train_file, TrainFile};
use crate::netpbm;
use crate::render;
use crate::trainer::{run_training, TrainOutcome};

/// Published reference totals used by the self-check block: the two-stack
/// baseline against the lightweight two-stack model.
pub const REF_LIGHT_PARAMS: u64 = 2_300_000;
pub const REF_BASE_PARAMS: u64 = 6_700_000;
pub const REF_LIGHT_FLOPS: u64 = 3_700_000_000;
pub const REF_BASE_FLOPS: u64 = 9_080_000_000;

fn print_resolved_config(label: &str, text: &str) {
    eprintln!("resolved {label} config:");
    for line in text.lines() {
        eprintln!("  {line}");
    }
}

fn parse_input_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("--input-size must look like 256x192 (HxW)"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

/// The reference self-check block appended to every analyze report.
pub fn reference_self_check() -> Result<String> {
    let c = compare_totals(
        REF_LIGHT_PARAMS,
        REF_LIGHT_FLOPS,
        REF_BASE_PARAMS,
        REF_BASE_FLOPS,
    )?;
    Ok(format!(
        "reference_self_check 2.30M/6.70M params, 3.7G/9.08G flops\n{}",
        c.format_block()
    ))
}

fn analyze_one(cfg: &NetworkConfig, input: (usize, usize), elementwise: bool) -> Result<CostReport> {
    let report = count_network_with(cfg, input.0, input.1, elementwise)?;
    let enumerated = build_network(cfg, 0)?.count_trainable_scalars();
    if enumerated != report.total_params {
        bail!(
            "analytic parameter total {} disagrees with enumerated scalars {}",
            report.total_params,
            enumerated
        );
    }
    Ok(report)
}

pub fn cmd_analyze(
    config: &str,
    baseline: Option<&str>,
    input_size: Option<&str>,
    out: &Path,
    include_elementwise: bool,
) -> Result<()> {
    let cfg = resolve_net_config(config)?;
    print_resolved_config("network", &cfg.to_text());
    let input = match input_size {
        Some(s) => parse_input_size(s)?,
        None => (cfg.input_h, cfg.input_w),
    };

    let report = analyze_one(&cfg, input, include_elementwise)?;
    let mut stdout_text = report.to_table();
    stdout_text.push_str(&format!(
        "enumerated trainable scalars: {} (matches analytic total)\n",
        report.total_params
    ));
    let mut machine = report.to_machine_text();

    if let Some(baseline) = baseline {
        let base_cfg = resolve_net_config(baseline)?;
        print_resolved_config("baseline network", &base_cfg.to_text());
        let base_report = analyze_one(&base_cfg, input, include_elementwise)?;
        stdout_text.push('\n');
        stdout_text.push_str(&base_report.to_table());
        let cmp = lap_core::cost::compare(&report, &base_report)?;
        let block = format!("comparison vs baseline\n{}", cmp.format_block());
        stdout_text.push_str(&block);
        machine.push_str(&base_report.to_machine_text());
        machine.push_str(&block);
    }

    let self_check = reference_self_check()?;
    stdout_text.push_str(&self_check);
    machine.push_str(&self_check);

    print!("{stdout_text}");
    fs::write(out, machine).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn cmd_train(
    net: &str,
    train: Option<&str>,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<TrainOutcome> {
    let cfg = resolve_net_config(net)?;
    let mut file: TrainFile = resolve_train_file(train)?;
    if let Some(seed) = seed {
        file.settings.seed = seed;
    }
    print_resolved_config("network", &cfg.to_text());
    print_resolved_config(
        "train",
        &format!(
            "lr = {}\nbatch_size = {}\nepochs = {}\nseed = {}\naugment = {}\ndata_samples = {}\ndata_image_size = {}\ndata_keypoints = {}\ndata_seed = {}\n",
            file.settings.adam.lr,
            file.settings.batch_size,
            file.settings.epochs,
            file.settings.seed,
            file.settings.augment.enabled,
            file.data.num_samples,
            file.data.image_size,
            file.data.num_keypoints,
            file.data.seed,
        ),
    );
    let outcome = run_training(&cfg, &file, out_dir)?;
    log::info!(
        "best val loss {:.6e} at epoch {}; wrote {}, {}, {}",
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.log_path.display(),
        outcome.best_path.display(),
        outcome.last_path.display()
    );
    Ok(outcome)
}

pub fn cmd_infer(ckpt: &Path, image_path: &Path, out_dir: &Path) -> Result<()> {
    let ck = Checkpoint::load(ckpt)?;
    let cfg = ck.net_config()?;
    print_resolved_config("network", &cfg.to_text());
    let net = ck.instantiate()?;

    let image = netpbm::read(image_path)?;
    if image.height != cfg.input_h || image.width != cfg.input_w {
        bail!(
            "image size mismatch: expected {}x{}, got {}x{}",
            cfg.input_h,
            cfg.input_w,
            image.height,
            image.width
        );
    }
    let x = image.to_tensor();
    let heats = net.forward_eval(&x)?;
    let final_heat = heats.last().expect("at least one stack");
    let decoded = decode(final_heat)?;
    let joints = &decoded[0];

    fs::create_dir_all(out_dir)?;
    let schema = KeypointSchema::for_keypoint_count(cfg.num_keypoints);

    // keypoint record in image coordinates (heatmaps are quarter scale)
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into());
    let kps = KeypointSet::new(
        joints
            .iter()
            .map(|d| lap_core::heatmap::Keypoint {
                x: d.x * 4.0,
                y: d.y * 4.0,
                visible: true,
            })
            .collect(),
    );
    let text = keypoint_records_to_text(&[(id, kps)], &schema)
        .map_err(|e| anyhow!("{e}"))?;
    fs::write(out_dir.join("keypoints.txt"), text)?;

    for (j, name) in schema.joints.iter().enumerate() {
        let img = render::heatmap_image(final_heat, 0, j);
        netpbm::write(&out_dir.join(format!("heatmap_{name}.pgm")), &img)?;
    }
    let overlay = render::render_overlay(&x, joints, &schema, 4.0);
    netpbm::write(&out_dir.join("overlay.ppm"), &overlay)?;
    log::info!("wrote keypoints.txt, {} heatmaps, overlay.ppm", schema.num_joints());
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Split {
    Train,
    Val,
    All,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "all" => Ok(Split::All),
            other => bail!("unknown split `{other}` (train, val, all)"),
        }
    }
}

pub fn cmd_eval(
    ckpt: &Path,
    dataset: &str,
    split: Split,
    out: Option<&Path>,
) -> Result<EvalResult> {
    let ck = Checkpoint::load(ckpt)?;
    let cfg = ck.net_config()?;
    print_resolved_config("network", &cfg.to_text());
    let net = ck.instantiate()?;
    let spec: ToyDatasetSpec = resolve_dataset_spec(dataset)?;
    if spec.num_keypoints != cfg.num_keypoints
        || spec.image_size != cfg.input_h
        || spec.image_size != cfg.input_w
    {
        bail!(
            "dataset spec ({}x{} images, {} keypoints) does not match the network ({}x{}, {})",
            spec.image_size,
            spec.image_size,
            spec.num_keypoints,
            cfg.input_h,
            cfg.input_w,
            cfg.num_keypoints
        );
    }

    let (train_idx, val_idx) = split_indices(&spec);
    let indices: Vec<usize> = match split {
        Split::Train => train_idx,
        Split::Val => val_idx,
        Split::All => (0..spec.num_samples).collect(),
    };
    if indices.is_empty() {
        bail!("selected split is empty");
    }

    let schema = KeypointSchema::for_keypoint_count(cfg.num_keypoints);
    let (hm_h, hm_w) = cfg.heatmap_size();
    let mut preds = Vec::with_capacity(indices.len());
    let mut gts: Vec<KeypointSet> = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(8) {
        let mut batch = Tensor::zeros(Shape::new(chunk.len(), 3, spec.image_size, spec.image_size));
        for (bi, &idx) in chunk.iter().enumerate() {
            let (img, kps) = generate_toy_sample(&spec, idx)?;
            for c in 0..3 {
                batch.plane_mut(bi, c).copy_from_slice(img.plane(0, c));
            }
            gts.push(kps.scaled(0.25));
        }
        let heats = net.forward_eval(&batch)?;
        let final_heat = heats.last().expect("at least one stack");
        preds.extend(decode(final_heat)?);
    }

    let area = (hm_h * hm_w) as f64;
    let normalizer = ((hm_h * hm_h + hm_w * hm_w) as f64).sqrt();
    let result = evaluate(&preds, &gts, &schema, area, normalizer)?;
    let text = result.to_text(&schema);
    print!("{text}");
    if let Some(out) = out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(result)
}

/// Runs the finite-difference suite; returns true when every check passed.
pub fn cmd_gradcheck(module: Option<&str>, seed: u64) -> Result<bool> {
    let results = gradcheck::run_suite(seed, module).map_err(|e| anyhow!("{e}"))?;
    if results.is_empty() {
        bail!("no gradient checks match module filter");
    }
    println!(
        "{:<24} {:>12} {:>9} {:>7}  status",
        "check", "max_rel_err", "tol", "coords"
    );
    let mut all_ok = true;
    for r in &results {
        let ok = r.passed();
        all_ok &= ok;
        println!(
            "{:<24} {:>12.3e} {:>9.0e} {:>7}  {}",
            r.name,
            r.max_rel_err,
            r.tolerance,
            r.coords_checked,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(all_ok)
}
