//! Plain-text network files and dependency-free policy inference.
//!
//! Two formats live here. `SACPOLICY 1` is the deployable actor: the
//! observation normalization is folded into the first layer so a consumer
//! feeds raw observations and needs nothing but matrix-vector products,
//! ReLU, tanh and an affine rescale. `MLP 1` is a generic checkpoint for any
//! [`Mlp`]. Numbers are written with the shortest representation that
//! parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::agents::sac::{GaussianPolicy, ACTION_DIM};
use crate::agents::{Controller, OBS_CENTER, OBS_SCALE};
use crate::env::{Action, ContinuousAction, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Matrix, Mlp};

pub const POLICY_HEADER: &str = "SACPOLICY 1";
pub const MLP_HEADER: &str = "MLP 1";
/// Log-std range assumed when an artifact is sampled stochastically.
pub const ARTIFACT_LOG_STD_RANGE: (f64, f64) = (-5.0, 2.0);

/// Dense affine map stored row-major, `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn out_dim(&self) -> usize {
        self.bias.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn from_layer(layer: &Layer, rows: std::ops::Range<usize>) -> Self {
        Self {
            weights: rows.clone().map(|r| layer.weights.row(r).to_vec()).collect(),
            bias: layer.bias[rows].to_vec(),
        }
    }
}

/// Exported actor: ReLU hidden layers, then a mean head and a log-std head
/// both fed by the last hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub hidden: Vec<DenseLayer>,
    pub mean_head: DenseLayer,
    pub log_std_head: DenseLayer,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Use the mean action when driving an environment. Not serialized.
    pub deterministic: bool,
}

impl PolicyArtifact {
    /// Snapshot a policy, folding the observation normalization into the
    /// first layer.
    pub fn from_policy(policy: &GaussianPolicy) -> Self {
        let layers = policy.net().layers();
        let n = layers.len();
        let mut hidden: Vec<DenseLayer> = layers[..n - 1]
            .iter()
            .map(|l| DenseLayer::from_layer(l, 0..l.out_dim()))
            .collect();
        let last = &layers[n - 1];
        let mut mean_head = DenseLayer::from_layer(last, 0..ACTION_DIM);
        let mut log_std_head = DenseLayer::from_layer(last, ACTION_DIM..2 * ACTION_DIM);

        if let Some(first) = hidden.first_mut() {
            fold_normalization(first);
        } else {
            fold_normalization(&mut mean_head);
            fold_normalization(&mut log_std_head);
        }
        Self {
            hidden,
            mean_head,
            log_std_head,
            lower: ContinuousAction::lower_bounds().to_vec(),
            upper: ContinuousAction::upper_bounds().to_vec(),
            deterministic: true,
        }
    }

    /// `[in, hidden..., mean_out, log_std_out]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.in_dim()];
        sizes.extend(self.hidden.iter().map(DenseLayer::out_dim));
        sizes.push(self.mean_head.out_dim());
        sizes.push(self.log_std_head.out_dim());
        sizes
    }

    fn in_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.mean_head).in_dim()
    }

    fn trunk(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                found: obs.len(),
            });
        }
        let mut x = obs.to_vec();
        for layer in &self.hidden {
            x = layer.apply(&x).into_iter().map(|v| v.max(0.0)).collect();
        }
        Ok(x)
    }

    fn rescale(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(y, (lo, hi))| lo + 0.5 * (y + 1.0) * (hi - lo))
            .collect()
    }

    /// Deterministic action from raw observation values.
    pub fn infer(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let h = self.trunk(obs)?;
        let y: Vec<f64> = self.mean_head.apply(&h).into_iter().map(f64::tanh).collect();
        Ok(self.rescale(&y))
    }

    /// Stochastic action: Gaussian sample around the mean head, squashed.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let h = self.trunk(obs)?;
        let mean = self.mean_head.apply(&h);
        let raw = self.log_std_head.apply(&h);
        let (lmin, lmax) = ARTIFACT_LOG_STD_RANGE;
        let y: Vec<f64> = mean
            .iter()
            .zip(&raw)
            .map(|(m, r)| {
                let log_std = lmin + 0.5 * (lmax - lmin) * (r.tanh() + 1.0);
                let e: f64 = rng.sample(StandardNormal);
                (m + log_std.exp() * e).tanh()
            })
            .collect();
        Ok(self.rescale(&y))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(POLICY_HEADER);
        out.push('\n');
        push_row(&mut out, &self.layer_sizes());
        for layer in self.hidden.iter().chain([&self.mean_head, &self.log_std_head]) {
            for row in &layer.weights {
                push_row(&mut out, row);
            }
            push_row(&mut out, &layer.bias);
        }
        push_row(&mut out, &self.lower);
        push_row(&mut out, &self.upper);
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = Lines::new(text, origin);
        let (n, header) = lines.next_line()?;
        if header.trim() != POLICY_HEADER {
            return Err(Error::parse(origin, n, format!("expected `{POLICY_HEADER}`")));
        }
        let sizes: Vec<usize> = lines.numbers()?;
        if sizes.len() < 3 || sizes.contains(&0) {
            return Err(Error::parse(origin, 2, "layer sizes need an input and two heads, all positive"));
        }
        let k = sizes.len();
        let (head_in, mean_out, log_std_out) = (sizes[k - 3], sizes[k - 2], sizes[k - 1]);
        if mean_out != log_std_out {
            return Err(Error::parse(origin, 2, "mean and log-std heads differ in size"));
        }
        let mut hidden = Vec::new();
        for w in sizes[..k - 2].windows(2) {
            hidden.push(lines.dense(w[0], w[1])?);
        }
        let mean_head = lines.dense(head_in, mean_out)?;
        let log_std_head = lines.dense(head_in, log_std_out)?;
        let lower = lines.floats(mean_out)?;
        let upper = lines.floats(mean_out)?;
        if let Some((i, l)) = lower.iter().zip(&upper).enumerate().find(|(_, (l, u))| !(l < u)).map(|(i, (l, _))| (i, *l)) {
            return Err(Error::parse(origin, lines.line, format!("bound {i}: lower {l} is not below upper")));
        }
        lines.expect_end()?;
        Ok(Self {
            hidden,
            mean_head,
            log_std_head,
            lower,
            upper,
            deterministic: true,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// `W·((x − c)/s) + b = (W/s)·x + (b − W·(c/s))`
fn fold_normalization(layer: &mut DenseLayer) {
    for (row, b) in layer.weights.iter_mut().zip(layer.bias.iter_mut()) {
        for j in 0..OBS_DIM {
            *b -= row[j] * OBS_CENTER[j] / OBS_SCALE[j];
            row[j] /= OBS_SCALE[j];
        }
    }
}

/// Deterministic artifact action for an observation.
pub fn matmul_inference(artifact: &PolicyArtifact, obs: &Observation) -> Result<ContinuousAction> {
    let a = artifact.infer(&obs.to_array())?;
    if a.len() != ACTION_DIM {
        return Err(Error::DimensionMismatch {
            expected: ACTION_DIM,
            found: a.len(),
        });
    }
    Ok(ContinuousAction::from_array([a[0], a[1], a[2]]))
}

/// Drives an environment from an artifact.
#[derive(Debug, Clone)]
pub struct ArtifactController<R> {
    pub artifact: PolicyArtifact,
    rng: R,
}

impl<R: Rng> ArtifactController<R> {
    pub fn new(artifact: PolicyArtifact, rng: R) -> Self {
        Self { artifact, rng }
    }
}

impl<R: Rng> Controller for ArtifactController<R> {
    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let a = if self.artifact.deterministic {
            self.artifact.infer(&obs.to_array())?
        } else {
            self.artifact.sample(&obs.to_array(), &mut self.rng)?
        };
        if a.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: ACTION_DIM,
                found: a.len(),
            });
        }
        Ok(Action::Continuous(ContinuousAction::from_array([a[0], a[1], a[2]])))
    }

    fn name(&self) -> String {
        if self.artifact.deterministic {
            "sac-artifact".into()
        } else {
            "sac-artifact-stochastic".into()
        }
    }
}

/// `MLP 1`, sizes, activation tags, then per layer its weight rows and bias.
pub fn mlp_to_text(mlp: &Mlp) -> String {
    let mut out = String::new();
    out.push_str(MLP_HEADER);
    out.push('\n');
    push_row(&mut out, &mlp.sizes());
    let tags: Vec<&str> = mlp.layers().iter().map(|l| l.activation.tag()).collect();
    out.push_str(&tags.join(" "));
    out.push('\n');
    for layer in mlp.layers() {
        for r in 0..layer.out_dim() {
            push_row(&mut out, layer.weights.row(r));
        }
        push_row(&mut out, &layer.bias);
    }
    out
}

pub fn parse_mlp(text: &str, origin: &Path) -> Result<Mlp> {
    let mut lines = Lines::new(text, origin);
    let (n, header) = lines.next_line()?;
    if header.trim() != MLP_HEADER {
        return Err(Error::parse(origin, n, format!("expected `{MLP_HEADER}`")));
    }
    let sizes: Vec<usize> = lines.numbers()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::parse(origin, 2, "need at least two positive sizes"));
    }
    let (n, tag_line) = lines.next_line()?;
    let acts = tag_line
        .split_whitespace()
        .map(|t| Activation::from_tag(t).ok_or_else(|| Error::parse(origin, n, format!("unknown activation `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    if acts.len() != sizes.len() - 1 {
        return Err(Error::parse(origin, n, format!("expected {} activations, found {}", sizes.len() - 1, acts.len())));
    }
    let mut layers = Vec::new();
    for (w, act) in sizes.windows(2).zip(acts) {
        let d = lines.dense(w[0], w[1])?;
        let flat: Vec<f64> = d.weights.into_iter().flatten().collect();
        layers.push(Layer::new(Matrix::from_vec(w[1], w[0], flat)?, d.bias, act)?);
    }
    lines.expect_end()?;
    Mlp::new(layers)
}

pub fn save_mlp(mlp: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, mlp_to_text(mlp)).map_err(|e| Error::io(path, e))
}

pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mlp(&text, path)
}

fn push_row<T: std::fmt::Display>(out: &mut String, values: &[T]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Line cursor that reports 1-based line numbers in errors.
struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line: usize,
    origin: &'a Path,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Self {
        Self {
            iter: text.lines(),
            line: 0,
            origin,
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.line += 1;
        self.iter
            .next()
            .map(|l| (self.line, l))
            .ok_or_else(|| Error::parse(self.origin, self.line, "unexpected end of file"))
    }

    fn numbers<T: std::str::FromStr>(&mut self) -> Result<Vec<T>> {
        let (n, line) = self.next_line()?;
        line.split_whitespace()
            .map(|f| f.parse::<T>().map_err(|_| Error::parse(self.origin, n, format!("bad number `{f}`"))))
            .collect()
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.numbers()?;
        if v.len() != expected {
            return Err(Error::parse(
                self.origin,
                self.line,
                format!("expected {expected} values, found {}", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(self.origin, self.line, "non-finite value"));
        }
        Ok(v)
    }

    fn dense(&mut self, in_dim: usize, out_dim: usize) -> Result<DenseLayer> {
        let weights = (0..out_dim).map(|_| self.floats(in_dim)).collect::<Result<Vec<_>>>()?;
        let bias = self.floats(out_dim)?;
        Ok(DenseLayer { weights, bias })
    }

    fn expect_end(&mut self) -> Result<()> {
        for rest in self.iter.by_ref() {
            self.line += 1;
            if !rest.trim().is_empty() {
                return Err(Error::parse(self.origin, self.line, "trailing content"));
            }
        }
        Ok(())
    }
}
