//! The `sslhop` commands, written against `io::Write` so they can be driven
//! from tests as well as from `main`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sslhop::decision::{accuracy, confusion_matrix, Classifier};
use sslhop::io::{
    format_hop_config, load_dataset, parse_config, write_features, Dataset, ModelFile,
};
use sslhop::pixelhop::{describe, fit_hoptree, transform_batch};
use sslhop::Error;

/// Reals in data output: 9 significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn load_nonempty(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let ds = load_dataset(images, labels)
        .with_context(|| format!("loading {}", images.display()))?;
    if ds.is_empty() {
        bail!(Error::EmptyDataset);
    }
    Ok(ds)
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn head(model: &ModelFile) -> Result<&Classifier> {
    model
        .head
        .as_ref()
        .context("model has no decision head")
}

/// Fits the tree and the head, writes the model file and prints the model
/// report followed by the training accuracy.
pub fn train(
    config: &Path,
    images: &Path,
    labels: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let cfg = parse_config(&text)?;
    let ds = load_nonempty(images, labels)?;
    let labels = ds.labels()?;
    let n_classes = ds.class_count.context("dataset has no class count")?;

    let tree = fit_hoptree(&ds.images, &cfg.hop)?;
    let features = transform_batch(&ds.images, &tree)?;
    let head = Classifier::fit(features.view(), labels, n_classes, cfg.ridge)?;
    let predicted: Vec<usize> = head
        .predict_batch(features.view())?
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    let acc = accuracy(&predicted, labels).expect("nonempty dataset");

    let model = ModelFile {
        tree,
        head: Some(head),
    };
    model
        .save(out)
        .with_context(|| format!("writing model {}", out.display()))?;
    write!(stdout, "{}", describe(&model.tree))?;
    writeln!(stdout, "training accuracy {}", sig9(acc))?;
    Ok(())
}

fn prediction_lines(model: &ModelFile, ds: &Dataset) -> Result<(String, Vec<usize>)> {
    let head = head(model)?;
    let features = transform_batch(&ds.images, &model.tree)?;
    let mut text = String::new();
    let mut classes = Vec::with_capacity(ds.len());
    for (i, (class, scores)) in head.predict_batch(features.view())?.into_iter().enumerate() {
        write!(text, "{i}\t{class}").unwrap();
        for s in scores {
            write!(text, "\t{}", sig9(s)).unwrap();
        }
        text.push('\n');
        classes.push(class);
    }
    Ok((text, classes))
}

/// One line per image: index, predicted class, then the raw scores.
pub fn predict(model: &Path, images: &Path, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(model)?;
    let ds = load_nonempty(images, None)?;
    let (text, _) = prediction_lines(&model, &ds)?;
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

/// `predict` output followed by the accuracy and a confusion matrix
/// (rows: true class, columns: predicted class).
pub fn evaluate(model: &Path, images: &Path, labels: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(model)?;
    let ds = load_nonempty(images, labels)?;
    let truth = ds.labels()?;
    let (text, predicted) = prediction_lines(&model, &ds)?;
    let k = head(&model)?.n_classes();
    stdout.write_all(text.as_bytes())?;
    let acc = accuracy(&predicted, truth).expect("nonempty dataset");
    writeln!(stdout, "accuracy {}", sig9(acc))?;
    writeln!(stdout, "confusion")?;
    for row in confusion_matrix(&predicted, truth, k) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(stdout, "{}", cells.join("\t"))?;
    }
    Ok(())
}

/// Configuration as `key=value` lines, then the model report.
pub fn inspect(model: &Path, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(model)?;
    write!(stdout, "{}", format_hop_config(model.config()))?;
    match &model.head {
        Some(h) => writeln!(stdout, "head.ridge={}", h.model.ridge())?,
        None => writeln!(stdout, "head.ridge=none")?,
    }
    write!(stdout, "{}", describe(&model.tree))?;
    Ok(())
}

/// Writes the feature matrix of `images` as an `SSLFEA01` file.
pub fn extract(model: &Path, images: &Path, out: &Path) -> Result<()> {
    let model = load_model(model)?;
    let ds = load_nonempty(images, None)?;
    let features = transform_batch(&ds.images, &model.tree)?;
    write_features(out, &features).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
