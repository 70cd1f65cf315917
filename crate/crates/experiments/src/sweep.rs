//! Loss-landscape sweeps over the input and over single parameters of a
//! trained scalar network.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use anyhow::{anyhow, bail, ensure, Context, Result};
use dbprop::{
    double_backprop, penalty_backward, Direction, LossKind, Network, OpCounter, OperatorKind, PenaltySpec, Tensor,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainedModel;
use crate::sine::{dataset, nearest_sample, Sample};

/// `n` evenly spaced points from `from` to `to`, both included.
pub fn grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    let step = (to - from) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { to } else { from + step * i as f64 }).collect()
}

/// A scalar weight `layer{j}.w[r][c]` or bias `layer{j}.b[r]` of a dense
/// layer. Layers count from 1, rows and columns from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

impl ParamId {
    pub fn layer(self) -> usize {
        match self {
            ParamId::Weight { layer, .. } | ParamId::Bias { layer, .. } => layer,
        }
    }

    pub fn is_bias(self) -> bool {
        matches!(self, ParamId::Bias { .. })
    }

    /// Flat index into the layer's weight or bias tensor, after checking
    /// that the parameter exists.
    pub fn flat_index(self, net: &Network) -> Result<usize> {
        let j = self.layer();
        ensure!(j >= 1 && j <= net.depth(), "{self}: the network has {} layers", net.depth());
        let layer = &net.layers()[j - 1];
        ensure!(
            layer.op.kind() == OperatorKind::Dense,
            "{self}: only dense layers can be swept"
        );
        let (rows, cols) = (layer.op.param_shape()[0], layer.op.param_shape()[1]);
        match self {
            ParamId::Weight { row, col, .. } => {
                ensure!(row < rows && col < cols, "{self}: weight matrix is {rows}x{cols}");
                Ok(row * cols + col)
            }
            ParamId::Bias { row, .. } => {
                ensure!(row < rows, "{self}: bias has {rows} entries");
                Ok(row)
            }
        }
    }

    pub fn get(self, net: &Network) -> Result<f64> {
        let k = self.flat_index(net)?;
        let l = &net.layers()[self.layer() - 1];
        Ok(if self.is_bias() { l.bias.data()[k] } else { l.theta.data()[k] })
    }

    pub fn set(self, net: &mut Network, value: f64) -> Result<()> {
        let k = self.flat_index(net)?;
        let slot = if self.is_bias() {
            net.bias_mut(self.layer())
        } else {
            net.theta_mut(self.layer())
        };
        slot[k] = value;
        Ok(())
    }

    fn grad(self, grads: &dbprop::GradientSet, k: usize) -> f64 {
        let j = self.layer() - 1;
        if self.is_bias() {
            grads.bias[j].data()[k]
        } else {
            grads.theta[j].data()[k]
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::Weight { layer, row, col } => write!(f, "layer{layer}.w[{row}][{col}]"),
            ParamId::Bias { layer, row } => write!(f, "layer{layer}.b[{row}]"),
        }
    }
}

impl FromStr for ParamId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || anyhow!("bad parameter id {s:?}; expected layerJ.w[r][c] or layerJ.b[r]");
        let rest = s.strip_prefix("layer").ok_or_else(bad)?;
        let (layer, rest) = rest.split_once('.').ok_or_else(bad)?;
        let layer: usize = layer.parse().map_err(|_| bad())?;
        if let Some(t) = rest.strip_prefix('w') {
            let (row, t) = bracketed(t).ok_or_else(bad)?;
            let (col, t) = bracketed(t).ok_or_else(bad)?;
            ensure!(t.is_empty(), bad());
            Ok(ParamId::Weight { layer, row, col })
        } else if let Some(t) = rest.strip_prefix('b') {
            let (row, t) = bracketed(t).ok_or_else(bad)?;
            ensure!(t.is_empty(), bad());
            Ok(ParamId::Bias { layer, row })
        } else {
            Err(bad())
        }
    }
}

/// Splits `"[n]rest"` into `(n, rest)`.
fn bracketed(t: &str) -> Option<(usize, &str)> {
    let (n, rest) = t.strip_prefix('[')?.split_once(']')?;
    Some((n.parse().ok()?, rest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// `ℛ_node = (∂x_L/∂x_0)²`
    Node,
    /// `ℛ_cdb = (∂ℓ/∂x_0)²` with the squared loss
    Cdb,
}

impl FromStr for PenaltyKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(PenaltyKind::Node),
            "cdb" => Ok(PenaltyKind::Cdb),
            other => bail!("unknown penalty {other:?}; expected node or cdb"),
        }
    }
}

impl PenaltyKind {
    fn spec(self) -> PenaltySpec {
        match self {
            PenaltyKind::Node => PenaltySpec::output_node(1, 1.0),
            PenaltyKind::Cdb => PenaltySpec::classical(LossKind::Squared, 1.0),
        }
    }
}

fn check_scalar(net: &Network) -> Result<()> {
    ensure!(
        net.input_shape() == [1] && net.output_dim() == 1,
        "sweeps need a scalar-input, scalar-output network"
    );
    Ok(())
}

/// `∂x_L/∂x_0` from one penalty pass with `v = [1]`.
pub fn input_slope(net: &Network, x: f64) -> Result<f64> {
    let c = OpCounter::new();
    let trace = net.forward(&Tensor::vector(vec![x]), &c)?;
    let (_, bt) = penalty_backward(net, &trace, &PenaltySpec::output_node(1, 1.0), None, &c)?;
    Ok(bt.xi(0).expect("ξ_0").data()[0])
}

/// Bit mask of active hidden units (`z > 0`) at input `x`.
pub fn activation_pattern(net: &Network, x: f64) -> Result<Vec<bool>> {
    let trace = net.forward(&Tensor::vector(vec![x]), &OpCounter::new())?;
    Ok((1..net.depth())
        .flat_map(|j| trace.z(j).data().iter().map(|&z| z > 0.0).collect::<Vec<_>>())
        .collect())
}

/// Number of groups left after merging sorted values closer than `tol`.
pub fn count_plateaus(values: &[f64], tol: f64) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0;
    }
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

/// Indices `k` where `|c[k+1] − c[k]|` exceeds ten times the median absolute
/// adjacent difference.
pub fn jumps(column: &[f64]) -> Vec<usize> {
    let diffs: Vec<f64> = column.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.is_empty() {
        return Vec::new();
    }
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    diffs
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 10.0 * median)
        .map(|(k, _)| k)
        .collect()
}

pub fn max_adjacent_change(column: &[f64]) -> f64 {
    column.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

/// `max |Δ batch| / max |Δ single|` over adjacent grid points.
pub fn smoothing_ratio(batch: &[f64], single: &[f64]) -> f64 {
    max_adjacent_change(batch) / max_adjacent_change(single)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSweep {
    pub x0: Vec<f64>,
    pub x_l: Vec<f64>,
    pub s: Vec<f64>,
    pub r_cdb: Vec<f64>,
    /// Distinct hidden-unit sign patterns met along the grid.
    pub patterns: usize,
}

pub fn landscape_input_sweep(model: &TrainedModel, from: f64, to: f64, points: usize) -> Result<InputSweep> {
    ensure!(points >= 2, "sweep resolution must be at least 2");
    let net = model.checkpoint.to_network()?;
    check_scalar(&net)?;
    let target = model.experiment.target;
    let cdb = PenaltyKind::Cdb.spec();
    let mut out = InputSweep {
        x0: Vec::with_capacity(points),
        x_l: Vec::with_capacity(points),
        s: Vec::with_capacity(points),
        r_cdb: Vec::with_capacity(points),
        patterns: 0,
    };
    let mut seen = std::collections::HashSet::new();
    for x in grid(from, to, points) {
        let c = OpCounter::new();
        let trace = net.forward(&Tensor::vector(vec![x]), &c)?;
        let (_, bt) = penalty_backward(&net, &trace, &PenaltySpec::output_node(1, 1.0), None, &c)?;
        let y = Tensor::vector(vec![target.eval(x)]);
        let (r, _) = penalty_backward(&net, &trace, &cdb, Some(&y), &c)?;
        out.x0.push(x);
        out.x_l.push(trace.output().data()[0]);
        out.s.push(bt.xi(0).expect("ξ_0").data()[0]);
        out.r_cdb.push(r);
        seen.insert(activation_pattern(&net, x)?);
    }
    out.patterns = seen.len();
    Ok(out)
}

impl InputSweep {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        write_csv(
            w,
            &["x0", "x_L", "s", "R_cdb"],
            &[&self.x0, &self.x_l, &self.s, &self.r_cdb],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSweep {
    pub param: ParamId,
    pub penalty: PenaltyKind,
    /// Samples averaged over; 1 for the pinned single sample.
    pub batch: usize,
    pub value: Vec<f64>,
    /// `∂x_L/∂x_0` at the pinned sample.
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub dr: Vec<f64>,
    /// Whether the pinned sample's hidden-unit sign pattern changes along
    /// the sweep.
    pub crosses_kink: bool,
}

impl ParamSweep {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        write_csv(w, &["value", "s", "R", "dR"], &[&self.value, &self.s, &self.r, &self.dr])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSweepOptions {
    pub param: ParamId,
    pub penalty: PenaltyKind,
    /// 0 sweeps the pinned sample alone; `M > 0` averages over `M` dataset
    /// samples drawn with `seed`.
    pub batch: usize,
    pub seed: u64,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
}

/// Default sweep range for `param`: current value ± the configured half-width.
pub fn default_range(model: &TrainedModel, param: ParamId) -> Result<(f64, f64)> {
    let net = model.checkpoint.to_network()?;
    let v = param.get(&net)?;
    let h = model.experiment.sweep_half_width;
    Ok((v - h, v + h))
}

fn pinned(model: &TrainedModel) -> Sample {
    let data = dataset(&model.experiment);
    let i = nearest_sample(&data, model.experiment.sample_point);
    data[i].clone()
}

/// First weight of layer 2 (row-major) whose default-range sweep moves the
/// pinned sample across a hidden-unit kink.
pub fn auto_weight(model: &TrainedModel) -> Result<ParamId> {
    let net = model.checkpoint.to_network()?;
    ensure!(net.depth() >= 2, "network has no second layer");
    let shape = net.layers()[1].op.param_shape().to_vec();
    let x = pinned(model).x;
    for row in 0..shape[0] {
        for col in 0..shape[1] {
            let p = ParamId::Weight { layer: 2, row, col };
            let (from, to) = default_range(model, p)?;
            if pattern_changes(&net, p, x, &grid(from, to, 65))? {
                return Ok(p);
            }
        }
    }
    bail!("no layer-2 weight moves the pinned sample across a kink")
}

fn pattern_changes(net: &Network, p: ParamId, x: f64, values: &[f64]) -> Result<bool> {
    let mut work = net.clone();
    let mut first = None;
    for &v in values {
        p.set(&mut work, v)?;
        let pat = activation_pattern(&work, x)?;
        match &first {
            None => first = Some(pat),
            Some(f) if *f != pat => return Ok(true),
            _ => {}
        }
    }
    Ok(false)
}

pub fn landscape_param_sweep(model: &TrainedModel, opts: &ParamSweepOptions) -> Result<ParamSweep> {
    let mut net = model.checkpoint.to_network()?;
    check_scalar(&net)?;
    let k = opts.param.flat_index(&net)?;
    let (dfrom, dto) = default_range(model, opts.param)?;
    let from = opts.from.unwrap_or(dfrom);
    let to = opts.to.unwrap_or(dto);
    let points = opts.points.unwrap_or(model.experiment.sweep_points);
    ensure!(points >= 2, "sweep resolution must be at least 2");

    let data = dataset(&model.experiment);
    let pin = pinned(model);
    let samples: Vec<Sample> = if opts.batch == 0 {
        vec![pin.clone()]
    } else {
        ensure!(
            opts.batch <= data.len(),
            "batch {} exceeds the dataset size {}",
            opts.batch,
            data.len()
        );
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
        idx[..opts.batch].iter().map(|&i| data[i].clone()).collect()
    };
    let spec = opts.penalty.spec();
    let values = grid(from, to, points);
    let mut out = ParamSweep {
        param: opts.param,
        penalty: opts.penalty,
        batch: samples.len(),
        value: Vec::with_capacity(points),
        s: Vec::with_capacity(points),
        r: Vec::with_capacity(points),
        dr: Vec::with_capacity(points),
        crosses_kink: pattern_changes(&net, opts.param, pin.x, &values)?,
    };
    let w = 1.0 / samples.len() as f64;
    for &value in &values {
        opts.param.set(&mut net, value)?;
        let (mut r, mut dr) = (0.0, 0.0);
        for smp in &samples {
            let y = smp.label();
            let labels = matches!(spec.v, Direction::LossGradient(_)).then_some(&y);
            let res = double_backprop(&net, &smp.input(), labels, &spec, None)
                .with_context(|| format!("{} = {value}", opts.param))?;
            r += w * res.penalty;
            dr += w * opts.param.grad(&res.penalty_grads, k);
        }
        out.value.push(value);
        out.s.push(input_slope(&net, pin.x)?);
        out.r.push(r);
        out.dr.push(dr);
    }
    Ok(out)
}

/// Header plus one row per index, 17 significant digits, LF line endings.
pub fn write_csv(w: impl Write, header: &[&str], columns: &[&Vec<f64>]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(header)?;
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        wtr.write_record(columns.iter().map(|c| format!("{:.16e}", c[i])))?;
    }
    wtr.flush()?;
    Ok(())
}
