//! The `guilget` subcommands as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use guilget_core::ag::GuiAg;
use guilget_core::corpus::{
    assign_splits, filter_screens, load_dataset, synth_corpus, write_dataset, Split, SynthConfig,
};
use guilget_core::metrics::{eval_report, format_table, GroupBy};
use guilget_core::model::train::{run_training, TrainConfig};
use guilget_core::model::{generate_layouts, GenerateOptions, LossReport, Model};

use crate::api::LayoutDoc;
use crate::svg::{class_color, render_svg};

/// Train/val/test shares used by `synth`.
pub const SYNTH_SPLITS: [f64; 3] = [0.8, 0.1, 0.1];

pub fn cmd_train(config: &Path) -> Result<Vec<LossReport>> {
    let cfg =
        TrainConfig::from_path(config).with_context(|| format!("reading {}", config.display()))?;
    let every = cfg.log_every.max(1) as u64;
    let (_, history) = run_training(&cfg, |step, r| {
        if step % every == 0 || step == cfg.steps as u64 {
            log::info!(
                "step {step:>6}  total {:.4}  pred {:.4}  box {:.4}  kl {:.4}  rel {:.4}  reg {:.4}  cc {:.4}  cp {:.4}",
                r.total, r.pred, r.box_nll, r.kl, r.rel, r.reg, r.cc, r.cp
            );
        }
    })?;
    log::info!(
        "wrote {} and {}",
        cfg.checkpoint.display(),
        cfg.loss_csv.display()
    );
    Ok(history)
}

pub fn read_ag(path: &Path) -> Result<GuiAg> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GuiAg::from_json_str(&text).with_context(|| format!("parsing graph {}", path.display()))
}

/// Writes `layout_{i}.json` and `layout_{i}.svg` for each sample and
/// returns the written paths.
pub fn cmd_generate(
    ckpt: &Path,
    ag_path: &Path,
    opts: &GenerateOptions,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let ag = read_ag(ag_path)?;
    let model = Model::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let layouts = generate_layouts(&model, &ag, opts)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (i, layout) in layouts.iter().enumerate() {
        let json = out.join(format!("layout_{i}.json"));
        let mut text = serde_json::to_string_pretty(&LayoutDoc::from_layout(layout))?;
        text.push('\n');
        fs::write(&json, text)?;
        let svg = out.join(format!("layout_{i}.svg"));
        fs::write(&svg, render_svg(layout, class_color))?;
        written.push(json);
        written.push(svg);
    }
    Ok(written)
}

/// Evaluates the dataset's test split (every screen if it has none).
pub fn cmd_eval(
    ckpt: &Path,
    data: &Path,
    group_by: GroupBy,
    temperature: f64,
    seed: u64,
) -> Result<String> {
    let model = Model::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let records =
        load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let test: Vec<_> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .cloned()
        .collect();
    let records = if test.is_empty() { records } else { test };
    if records.is_empty() {
        bail!("dataset {} has no screens", data.display());
    }
    let reports = eval_report(&model, &records, group_by, temperature, seed)?;
    Ok(format_table(&reports))
}

/// Synthesizes, filters and splits `count` screens into `out`. Returns the
/// number written.
pub fn cmd_synth(count: usize, seed: u64, out: &Path) -> Result<usize> {
    let records = filter_screens(synth_corpus(count, seed, &SynthConfig::default()));
    let records = assign_splits(records, SYNTH_SPLITS, seed)?;
    write_dataset(out, &records)?;
    Ok(records.len())
}
