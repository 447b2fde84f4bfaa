//! Loading of the textual config files: network configs (or preset names),
//! training configs, and dataset specs. Every key is optional in the train
//! and dataset files (defaults apply); unknown keys are rejected.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use lap_core::data::{AugmentConfig, ToyDatasetSpec};
use lap_core::net::{
    build_lap_config, parse_bool, parse_f64, parse_key_values, parse_usize, NetworkConfig, Preset,
};
use lap_core::optim::{AdamConfig, PlateauConfig};
use lap_core::train::TrainSettings;

/// Whether the training driver stamps wall time into the epoch log.
/// `None` writes 0.000 seconds, which makes logs byte-reproducible.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Timing {
    Wall,
    None,
}

/// A network config argument: a preset name (`lap2`, `hourglass2-standard`,
/// `toy`) or a path to a config file.
pub fn resolve_net_config(arg: &str) -> Result<NetworkConfig> {
    if let Some(preset) = Preset::parse(arg) {
        return Ok(build_lap_config(preset));
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!("`{arg}` is neither a preset name (lap2, hourglass2-standard, toy) nor a file");
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    NetworkConfig::from_text(&text).map_err(|e| anyhow!("{arg}: {e}"))
}

/// Parsed training file: engine settings, dataset spec, and log timing.
#[derive(Clone, Copy, Debug)]
pub struct TrainFile {
    pub settings: TrainSettings,
    pub data: ToyDatasetSpec,
    pub timing: Timing,
}

impl Default for TrainFile {
    fn default() -> Self {
        TrainFile {
            settings: TrainSettings::default(),
            data: ToyDatasetSpec::default(),
            timing: Timing::Wall,
        }
    }
}

pub fn parse_train_file(text: &str) -> Result<TrainFile> {
    let mut f = TrainFile::default();
    let mut adam = AdamConfig::default();
    let mut plateau = PlateauConfig::default();
    let mut aug = AugmentConfig::default();
    for (key, value) in parse_key_values(text).map_err(|e| anyhow!("{e}"))? {
        let k = key.as_str();
        let v = value.as_str();
        match k {
            "lr" => adam.lr = parse_f64(k, v)?,
            "beta1" => adam.beta1 = parse_f64(k, v)?,
            "beta2" => adam.beta2 = parse_f64(k, v)?,
            "epsilon" => adam.epsilon = parse_f64(k, v)?,
            "batch_size" => f.settings.batch_size = parse_usize(k, v)?,
            "epochs" => f.settings.epochs = parse_usize(k, v)?,
            "factor" => plateau.factor = parse_f64(k, v)?,
            "patience" => plateau.patience = parse_usize(k, v)?,
            "min_delta_rel" => plateau.min_delta_rel = parse_f64(k, v)?,
            "seed" => {
                f.settings.seed = v
                    .parse::<u64>()
                    .map_err(|_| anyhow!("key `seed`: `{v}` is not a u64"))?
            }
            "sigma" => f.settings.sigma = parse_f64(k, v)?,
            "timing" => {
                f.timing = match v {
                    "wall" => Timing::Wall,
                    "none" => Timing::None,
                    other => bail!("key `timing`: `{other}` is not `wall` or `none`"),
                }
            }
            "augment" => aug.enabled = parse_bool(k, v)?,
            "aug_scale_min" => aug.scale.0 = parse_f64(k, v)?,
            "aug_scale_max" => aug.scale.1 = parse_f64(k, v)?,
            "aug_rotate_min" => aug.rotate_deg.0 = parse_f64(k, v)?,
            "aug_rotate_max" => aug.rotate_deg.1 = parse_f64(k, v)?,
            "aug_flip_prob" => aug.flip_prob = parse_f64(k, v)?,
            "aug_brightness_min" => aug.brightness.0 = parse_f64(k, v)?,
            "aug_brightness_max" => aug.brightness.1 = parse_f64(k, v)?,
            "aug_contrast_min" => aug.contrast.0 = parse_f64(k, v)?,
            "aug_contrast_max" => aug.contrast.1 = parse_f64(k, v)?,
            "data_samples" => f.data.num_samples = parse_usize(k, v)?,
            "data_image_size" => f.data.image_size = parse_usize(k, v)?,
            "data_keypoints" => f.data.num_keypoints = parse_usize(k, v)?,
            "data_blob_radius_min" => f.data.blob_radius.0 = parse_f64(k, v)?,
            "data_blob_radius_max" => f.data.blob_radius.1 = parse_f64(k, v)?,
            "data_intensity_min" => f.data.blob_intensity.0 = parse_f64(k, v)?,
            "data_intensity_max" => f.data.blob_intensity.1 = parse_f64(k, v)?,
            "data_noise" => f.data.noise = parse_f64(k, v)?,
            "data_seed" => {
                f.data.seed = v
                    .parse::<u64>()
                    .map_err(|_| anyhow!("key `data_seed`: `{v}` is not a u64"))?
            }
            other => bail!("unknown train config key `{other}`"),
        }
    }
    f.settings.adam = adam;
    f.settings.plateau = plateau;
    f.settings.augment = aug;
    Ok(f)
}

/// `default` (or an empty argument) yields the built-in toy training setup.
pub fn resolve_train_file(arg: Option<&str>) -> Result<TrainFile> {
    match arg {
        None | Some("default") => Ok(TrainFile::default()),
        Some(path_str) => {
            let text = fs::read_to_string(path_str)
                .with_context(|| format!("reading {path_str}"))?;
            parse_train_file(&text).with_context(|| format!("parsing {path_str}"))
        }
    }
}

/// Dataset spec files reuse the `data_*` keys of the train file.
pub fn resolve_dataset_spec(arg: &str) -> Result<ToyDatasetSpec> {
    if arg == "toy" || arg == "default" {
        return Ok(ToyDatasetSpec::default());
    }
    let text =
        fs::read_to_string(arg).with_context(|| format!("reading dataset spec {arg}"))?;
    let f = parse_train_file(&text).with_context(|| format!("parsing dataset spec {arg}"))?;
    Ok(f.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        assert_eq!(resolve_net_config("toy").unwrap().stacks, 1);
        assert_eq!(resolve_net_config("lap2").unwrap().stacks, 2);
        assert!(resolve_net_config("nonsense-path").is_err());
    }

    #[test]
    fn train_file_defaults_and_overrides() {
        let f = parse_train_file("lr = 1e-3\nepochs = 3\ndata_samples = 32\ntiming = none\n")
            .unwrap();
        assert_eq!(f.settings.adam.lr, 1e-3);
        assert_eq!(f.settings.epochs, 3);
        assert_eq!(f.settings.adam.beta1, 0.9);
        assert_eq!(f.data.num_samples, 32);
        assert_eq!(f.timing, Timing::None);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_train_file("bogus = 1\n").is_err());
    }
}
