//! Gate activity, per-class routing and lesion reports for highway bodies.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::{csv_bytes, write_atomic, write_json};
use crate::nn::{Body, Network};
use crate::tensor::{Activation, Matrix};
use crate::train::{evaluate, evaluate_lesioned, EVAL_BATCH};

fn highway_body(net: &Network) -> Result<()> {
    match net.body {
        Body::Highway(_) => Ok(()),
        Body::Plain(_) => Err(Error::Usage("gate analysis needs a highway body".into())),
    }
}

/// Per layer, the gate matrix of rows `idx`.
fn gates(net: &Network, ds: &Dataset, idx: &[usize]) -> Result<Vec<Matrix>> {
    let x = ds.features.select_rows(idx);
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
    let trace = net.forward(&x, &labels)?;
    Ok(trace
        .body
        .iter()
        .map(|c| c.gate().expect("highway body").clone())
        .collect())
}

/// Layer × block sums of the gates of rows `idx`, added into `acc`.
fn accumulate(acc: &mut Matrix, layer_gates: &[Matrix]) {
    for (l, g) in layer_gates.iter().enumerate() {
        let row = acc.row_mut(l);
        for r in 0..g.rows() {
            for (a, &v) in row.iter_mut().zip(g.row(r)) {
                *a += v;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateReport {
    pub activation: Activation,
    /// Body layers × blocks, for each of the following.
    pub bias: Matrix,
    /// Exact mean of the transform gate over the dataset.
    pub mean_gate: Matrix,
    pub sample_index: usize,
    pub sample_gate: Matrix,
    /// Block outputs y for the designated sample.
    pub sample_output: Matrix,
}

pub fn gate_activity(net: &Network, ds: &Dataset, sample_index: usize) -> Result<GateReport> {
    gate_activity_chunked(net, ds, sample_index, EVAL_BATCH)
}

/// As [`gate_activity`], summing the dataset in chunks of `chunk` rows.
pub fn gate_activity_chunked(net: &Network, ds: &Dataset, sample_index: usize, chunk: usize) -> Result<GateReport> {
    highway_body(net)?;
    if sample_index >= ds.len() {
        return Err(Error::Usage(format!("sample {sample_index} out of range for {} samples", ds.len())));
    }
    if chunk == 0 {
        return Err(Error::Param("chunk size must be positive".into()));
    }
    let Body::Highway(layers) = &net.body else { unreachable!() };
    let (depth, width) = (layers.len(), net.width());
    let mut bias = Matrix::zeros(depth, width);
    for (l, layer) in layers.iter().enumerate() {
        bias.row_mut(l).copy_from_slice(layer.b_t.as_slice());
    }

    let mut sums = Matrix::zeros(depth, width);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for part in idx.chunks(chunk) {
        accumulate(&mut sums, &gates(net, ds, part)?);
    }
    let mean_gate = sums.scale(1.0 / ds.len() as f64);

    let one = [sample_index];
    let x = ds.features.select_rows(&one);
    let trace = net.forward(&x, &[ds.labels[sample_index]])?;
    let mut sample_gate = Matrix::zeros(depth, width);
    let mut sample_output = Matrix::zeros(depth, width);
    for (l, c) in trace.body.iter().enumerate() {
        sample_gate.row_mut(l).copy_from_slice(c.gate().expect("highway body").as_slice());
        sample_output.row_mut(l).copy_from_slice(c.output().as_slice());
    }
    Ok(GateReport {
        activation: layers.first().map_or(net.first.activation, |l| l.activation),
        bias,
        mean_gate,
        sample_index,
        sample_gate,
        sample_output,
    })
}

#[derive(Debug, Clone)]
pub struct ClassRoutingReport {
    pub class_counts: Vec<usize>,
    pub global_mean: Matrix,
    /// Per class, class-conditional mean gate minus the global mean;
    /// `None` for classes without samples.
    pub deviations: Vec<Option<Matrix>>,
}

impl ClassRoutingReport {
    /// Σ_c (n_c / n) · deviation_c, which is zero up to rounding.
    pub fn weighted_sum(&self) -> Matrix {
        let n: usize = self.class_counts.iter().sum();
        let mut acc = Matrix::zeros(self.global_mean.rows(), self.global_mean.cols());
        for (d, &c) in self.deviations.iter().zip(&self.class_counts) {
            if let Some(d) = d {
                acc.add_assign(&d.scale(c as f64 / n as f64)).expect("same shape");
            }
        }
        acc
    }

    pub fn empty_classes(&self) -> Vec<usize> {
        self.deviations
            .iter()
            .enumerate()
            .filter_map(|(c, d)| d.is_none().then_some(c))
            .collect()
    }
}

pub fn class_routing(net: &Network, ds: &Dataset) -> Result<ClassRoutingReport> {
    highway_body(net)?;
    if ds.is_empty() {
        return Err(Error::Param("class routing needs a non-empty dataset".into()));
    }
    let (depth, width) = (net.body.len(), net.width());
    let mut per_class = vec![Matrix::zeros(depth, width); ds.classes];
    let idx: Vec<usize> = (0..ds.len()).collect();
    for part in idx.chunks(EVAL_BATCH) {
        let layer_gates = gates(net, ds, part)?;
        for (r, &i) in part.iter().enumerate() {
            let acc = &mut per_class[ds.labels[i]];
            for (l, g) in layer_gates.iter().enumerate() {
                for (a, &v) in acc.row_mut(l).iter_mut().zip(g.row(r)) {
                    *a += v;
                }
            }
        }
    }
    let counts = ds.class_counts();
    let mut total = Matrix::zeros(depth, width);
    for s in &per_class {
        total.add_assign(s)?;
    }
    let global_mean = total.scale(1.0 / ds.len() as f64);
    let deviations = per_class
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s.scale(1.0 / c as f64).sub(&global_mean).expect("same shape")))
        .collect::<Vec<_>>();
    for c in deviations.iter().enumerate().filter_map(|(c, d)| d.is_none().then_some(c)) {
        log::warn!("class {c} has no samples; its routing deviation is undefined");
    }
    Ok(ClassRoutingReport {
        class_counts: counts,
        global_mean,
        deviations,
    })
}

#[derive(Debug, Clone)]
pub struct LesionReport {
    pub baseline_loss: f64,
    pub baseline_err: f64,
    /// Per body layer: (loss, error) with that layer's gates closed.
    pub lesioned: Vec<(f64, f64)>,
}

impl LesionReport {
    /// Error increase of each lesion over the baseline.
    pub fn degradation(&self) -> Vec<f64> {
        self.lesioned.iter().map(|&(_, e)| e - self.baseline_err).collect()
    }
}

pub fn lesion_sweep(net: &Network, ds: &Dataset) -> Result<LesionReport> {
    highway_body(net)?;
    let (baseline_loss, baseline_err) = evaluate(net, ds)?;
    let lesioned = (0..net.body.len())
        .map(|l| evaluate_lesioned(net, ds, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(LesionReport {
        baseline_loss,
        baseline_err,
        lesioned,
    })
}

fn block_header(lead: &[&str], width: usize) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((0..width).map(|b| format!("block_{b}")))
        .collect()
}

fn matrix_rows<'a>(tag: &'a str, m: &'a Matrix) -> impl Iterator<Item = Vec<String>> + 'a {
    (0..m.rows()).map(move |l| {
        [tag.to_string(), l.to_string()]
            .into_iter()
            .chain(m.row(l).iter().map(f64::to_string))
            .collect()
    })
}

pub fn gates_csv(r: &GateReport) -> Result<Vec<u8>> {
    let rows = matrix_rows("bias", &r.bias)
        .chain(matrix_rows("mean_gate", &r.mean_gate))
        .chain(matrix_rows("sample_gate", &r.sample_gate))
        .chain(matrix_rows("sample_output", &r.sample_output));
    csv_bytes(&block_header(&["quantity", "layer"], r.bias.cols()), rows)
}

pub fn routing_csv(r: &ClassRoutingReport) -> Result<Vec<u8>> {
    let tags: Vec<String> = (0..r.deviations.len()).map(|c| c.to_string()).collect();
    let rows: Vec<Vec<String>> = r
        .deviations
        .iter()
        .zip(&tags)
        .filter_map(|(d, t)| d.as_ref().map(|d| matrix_rows(t, d).collect::<Vec<_>>()))
        .flatten()
        .collect();
    csv_bytes(&block_header(&["class", "layer"], r.global_mean.cols()), rows)
}

pub fn lesion_csv(r: &LesionReport) -> Result<Vec<u8>> {
    let header = ["layer", "train_loss", "train_err", "delta_err"].map(String::from).to_vec();
    let base = vec![
        "baseline".to_string(),
        r.baseline_loss.to_string(),
        r.baseline_err.to_string(),
        "0".to_string(),
    ];
    let rows = std::iter::once(base).chain(r.lesioned.iter().enumerate().map(|(l, &(loss, err))| {
        vec![
            l.to_string(),
            loss.to_string(),
            err.to_string(),
            (err - r.baseline_err).to_string(),
        ]
    }));
    csv_bytes(&header, rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub run_id: String,
    pub report: &'static str,
    pub csv: String,
    pub activation: Activation,
    pub body_depth: usize,
    pub width: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub empty_classes: Vec<usize>,
}

/// Writes `{run_id}.{kind}.csv` and its `{run_id}.{kind}.json` manifest;
/// returns the CSV path.
pub fn write_report(dir: &Path, manifest: &Manifest, csv: &[u8]) -> Result<PathBuf> {
    let csv_path = dir.join(&manifest.csv);
    write_atomic(&csv_path, csv)?;
    write_json(&dir.join(format!("{}.{}.json", manifest.run_id, manifest.report)), manifest)?;
    Ok(csv_path)
}

impl Manifest {
    pub fn new(run_id: &str, report: &'static str, net: &Network, ds: &Dataset) -> Self {
        let activation = match &net.body {
            Body::Highway(v) => v.first().map_or(net.first.activation, |l| l.activation),
            Body::Plain(v) => v.first().map_or(net.first.activation, |l| l.activation),
        };
        Manifest {
            run_id: run_id.to_string(),
            report,
            csv: format!("{run_id}.{report}.csv"),
            activation,
            body_depth: net.body.len(),
            width: net.width(),
            samples: ds.len(),
            sample_index: None,
            empty_classes: Vec::new(),
        }
    }
}
