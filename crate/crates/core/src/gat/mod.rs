//! Graph attention network mapping `(B, Phi)` to a power-control matrix.
//!
//! Every (AP, UE) pair is a node, numbered `k * M + m`. Nodes sharing an AP
//! are joined by AP-type edges that carry the pilot overlap `Phi[k_i, k_j]`;
//! nodes sharing a UE are joined by UE-type edges. Padded UEs are removed from
//! every softmax through the activity mask `Phi[j, j]`.
//!
//! The network is always evaluated on an autodiff [`Tape`], one or more
//! samples at a time. Samples of a batch are disjoint blocks of one graph.


use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdResult, EdgeList, Tape, Var};
use crate::error::{Error, Result};
use crate::feasible::PowerMatrix;
use crate::scenario::ScenarioSample;
use crate::Mat;

/// Feature widths: input, then the output of each attention layer.
pub const WIDTHS: [usize; 5] = [1, 32, 64, 64, 64];
/// Number of attention layers.
pub const LAYERS: usize = 4;
/// Shift inside the softplus of the output stage.
pub const OUTPUT_SHIFT: f64 = 6.0;
/// Epsilon of the per-node normalization.
pub const NORM_EPS: f64 = 1e-5;
/// Variance below which standardized inputs are set to 0.
pub const MIN_VARIANCE: f64 = 1e-12;

const EDGE_TYPES: [&str; 2] = ["ap", "ue"];

/// Network weights as named tensors.
///
/// Weights are stored `in x out` and applied as `x W + b`, with `b` a row.
#[derive(Clone, Debug, PartialEq)]
pub struct GatParams {
    /// Number of APs the preprocessing affine was built for.
    pub m: usize,
    pub tensors: BTreeMap<String, Mat>,
}

/// Names and shapes of every tensor for `m` APs.
pub fn param_layout(m: usize) -> Vec<(String, (usize, usize))> {
    let mut out = vec![("pre.alpha".to_string(), (m, 1)), ("pre.beta".to_string(), (m, 1))];
    for t in 1..=LAYERS {
        let (win, wout) = (WIDTHS[t - 1], WIDTHS[t]);
        for e in EDGE_TYPES {
            for q in 1..=5 {
                let fan_in = if q == 5 { wout } else { win };
                out.push((format!("layer{t}.{e}.l{q}.w"), (fan_in, wout)));
                out.push((format!("layer{t}.{e}.l{q}.b"), (1, wout)));
            }
        }
        out.push((format!("layer{t}.pilot.w"), (1, wout)));
        out.push((format!("layer{t}.norm.gain"), (1, wout)));
        out.push((format!("layer{t}.norm.bias"), (1, wout)));
    }
    let d = WIDTHS[LAYERS];
    for (q, out_w) in [(1, d), (2, d), (3, 1)] {
        out.push((format!("post.l{q}.w"), (d, out_w)));
        out.push((format!("post.l{q}.b"), (1, out_w)));
    }
    out
}

/// Xavier-uniform weights, zero biases, identity affine and normalization.
pub fn init_params(seed: u64, m: usize) -> GatParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = param_layout(m)
        .into_iter()
        .map(|(name, (r, c))| {
            let value = if name == "pre.alpha" || name.ends_with(".gain") {
                Array2::ones((r, c))
            } else if name.ends_with(".w") {
                let bound = (6.0 / (r + c) as f64).sqrt();
                Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..=bound))
            } else {
                Array2::zeros((r, c))
            };
            (name, value)
        })
        .collect();
    GatParams { m, tensors }
}

impl GatParams {
    pub fn get(&self, name: &str) -> &Mat {
        &self.tensors[name]
    }

    /// Check names and shapes against [`param_layout`].
    pub fn validate(&self) -> Result<()> {
        let layout = param_layout(self.m);
        if layout.len() != self.tensors.len() {
            return Err(Error::shape("parameter count", layout.len(), self.tensors.len()));
        }
        for (name, shape) in layout {
            let t = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Input(format!("missing parameter {name}")))?;
            if t.dim() != shape {
                return Err(Error::shape(name, format!("{shape:?}"), format!("{:?}", t.dim())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Register every tensor as a named input of `tape`.
    pub fn on_tape(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.tensors.iter().map(|(n, t)| (n.clone(), tape.input(n.clone(), t.clone()))).collect())
    }
}

/// Tape handles of the parameters, by name.
#[derive(Clone, Debug)]
pub struct ParamVars(pub BTreeMap<String, Var>);

impl ParamVars {
    fn get(&self, name: &str) -> Var {
        self.0[name]
    }
}

/// Node numbering and neighborhoods of the pair graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTopology {
    pub m: usize,
    pub k_max: usize,
    /// Per node, the other nodes of the same AP (ascending UE).
    pub ap_neighbors: Vec<Vec<usize>>,
    /// Per node, the other nodes of the same UE (ascending AP).
    pub ue_neighbors: Vec<Vec<usize>>,
}

impl GraphTopology {
    pub fn node(&self, m: usize, k: usize) -> usize {
        k * self.m + m
    }

    /// `(m, k)` of a node.
    pub fn pair(&self, node: usize) -> (usize, usize) {
        (node % self.m, node / self.m)
    }

    pub fn n_nodes(&self) -> usize {
        self.m * self.k_max
    }
}

pub fn build_topology(m: usize, k_max: usize) -> GraphTopology {
    let n = m * k_max;
    let mut ap_neighbors = Vec::with_capacity(n);
    let mut ue_neighbors = Vec::with_capacity(n);
    for node in 0..n {
        let (mi, ki) = (node % m, node / m);
        ap_neighbors.push((0..k_max).filter(|&k| k != ki).map(|k| k * m + mi).collect());
        ue_neighbors.push((0..m).filter(|&a| a != mi).map(|a| ki * m + a).collect());
    }
    GraphTopology {
        m,
        k_max,
        ap_neighbors,
        ue_neighbors,
    }
}

/// Log, standardize over the active entries, then apply the per-AP affine.
///
/// Returns the node features (length `M K_max`, node order) and the per-node
/// activity mask. Padded entries are 0.
pub fn preprocess(b: &Mat, active: &[f64], alpha: &Mat, beta: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
    let std = standardized_log(b, active)?;
    let (m, k_max) = b.dim();
    let mut x = vec![0.0; m * k_max];
    let mut mask = vec![0.0; m * k_max];
    for (k, &a) in active.iter().enumerate().take(k_max) {
        for mi in 0..m {
            let node = k * m + mi;
            mask[node] = a;
            if a != 0.0 {
                x[node] = alpha[[mi, 0]] * std[node] + beta[[mi, 0]];
            }
        }
    }
    Ok((x, mask))
}

/// Standardized `ln B` in node order, 0 on padded entries.
fn standardized_log(b: &Mat, active: &[f64]) -> Result<Vec<f64>> {
    let (m, k_max) = b.dim();
    if active.len() != k_max {
        return Err(Error::shape("activity mask", k_max, active.len()));
    }
    let mut logs = vec![0.0; m * k_max];
    let mut count = 0usize;
    for k in 0..k_max {
        if active[k] == 0.0 {
            continue;
        }
        for mi in 0..m {
            let v = b[[mi, k]];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("fading coefficient B[{mi},{k}] = {v} must be positive")));
            }
            logs[k * m + mi] = v.ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Input("no active UE".into()));
    }
    let is_active = |node: usize| active[node / m] != 0.0;
    let mean = (0..m * k_max).filter(|&i| is_active(i)).map(|i| logs[i]).sum::<f64>() / count as f64;
    let var = (0..m * k_max).filter(|&i| is_active(i)).map(|i| (logs[i] - mean).powi(2)).sum::<f64>() / count as f64;
    let inv = if var < MIN_VARIANCE { 0.0 } else { 1.0 / var.sqrt() };
    Ok((0..m * k_max)
        .map(|i| if is_active(i) { (logs[i] - mean) * inv } else { 0.0 })
        .collect())
}

/// Constant graph data for a batch of samples sharing `M` and `K_max`.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub m: usize,
    pub k_max: usize,
    pub samples: usize,
    /// Standardized log-fading per node (`n x 1`).
    std_log: Mat,
    /// Per-node activity (`n x 1`).
    node_mask: Mat,
    /// AP index of every node.
    node_ap: Arc<[usize]>,
    /// Maps AP-major rows `(s, m, k)` to node rows.
    to_ap_major: Arc<[usize]>,
    ap_edges: Arc<EdgeList>,
    ue_edges: Arc<EdgeList>,
}

impl GraphBatch {
    pub fn new(samples: &[&ScenarioSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::Input("empty batch".into()))?;
        let (m, k_max) = (first.m(), first.k_max());
        let per = m * k_max;
        let n = per * samples.len();
        let topo = build_topology(m, k_max);
        let mut std_log = Vec::with_capacity(n);
        let mut node_mask = Vec::with_capacity(n);
        let mut ap = EdgeBuilder::new(n);
        let mut ue = EdgeBuilder::new(n);
        for (s, sample) in samples.iter().enumerate() {
            if sample.b.dim() != (m, k_max) {
                return Err(Error::shape(
                    "batch sample",
                    format!("{m}x{k_max}"),
                    format!("{}x{}", sample.m(), sample.k_max()),
                ));
            }
            let active = sample.active_mask();
            std_log.extend(standardized_log(&sample.b, &active)?);
            let base = s * per;
            for node in 0..per {
                let (_, ki) = topo.pair(node);
                node_mask.push(active[ki]);
                for &j in &topo.ap_neighbors[node] {
                    let kj = j / m;
                    ap.push(base + j, sample.phi[[ki, kj]], active[kj]);
                }
                ap.close();
                for &j in &topo.ue_neighbors[node] {
                    ue.push(base + j, 0.0, active[ki]);
                }
                ue.close();
            }
        }
        let to_ap_major = (0..samples.len())
            .flat_map(|s| (0..m).flat_map(move |mi| (0..k_max).map(move |k| s * per + k * m + mi)))
            .collect();
        Ok(Self {
            m,
            k_max,
            samples: samples.len(),
            std_log: Array2::from_shape_vec((n, 1), std_log).expect("length checked"),
            node_mask: Array2::from_shape_vec((n, 1), node_mask).expect("length checked"),
            node_ap: (0..n).map(|i| i % m).collect(),
            to_ap_major,
            ap_edges: Arc::new(ap.finish()),
            ue_edges: Arc::new(ue.finish()),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.std_log.nrows()
    }
}

struct EdgeBuilder {
    list: EdgeList,
}

impl EdgeBuilder {
    fn new(n: usize) -> Self {
        Self {
            list: EdgeList {
                offsets: vec![0],
                src: Vec::new(),
                attr: Vec::new(),
                mask: Vec::new(),
                n_src: n,
            },
        }
    }

    fn push(&mut self, src: usize, attr: f64, mask: f64) {
        self.list.src.push(src);
        self.list.attr.push(attr);
        self.list.mask.push(mask);
    }

    fn close(&mut self) {
        self.list.offsets.push(self.list.src.len());
    }

    fn finish(self) -> EdgeList {
        self.list
    }
}

/// Whether the pilot-overlap pathway is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PilotMode {
    #[default]
    Aware,
    /// All `L_phi` contributions are zeroed.
    Ablated,
}

/// Preprocessed node features `n x 1` on the tape.
fn preprocess_on_tape(tape: &mut Tape, p: &ParamVars, g: &GraphBatch) -> AdResult<Var> {
    let std = tape.constant(g.std_log.clone());
    let alpha = tape.gather_rows(p.get("pre.alpha"), g.node_ap.clone())?;
    let beta = tape.gather_rows(p.get("pre.beta"), g.node_ap.clone())?;
    let x = tape.mul(std, alpha)?;
    let x = tape.add(x, beta)?;
    let mask = tape.constant(g.node_mask.clone());
    tape.mul(x, mask)
}

fn linear(tape: &mut Tape, p: &ParamVars, x: Var, prefix: &str) -> AdResult<Var> {
    tape.linear(x, p.get(&format!("{prefix}.w")), Some(p.get(&format!("{prefix}.b"))))
}

/// One attention layer `t` (1-based).
pub fn attention_layer(
    tape: &mut Tape,
    p: &ParamVars,
    g: &GraphBatch,
    x: Var,
    t: usize,
    mode: PilotMode,
) -> AdResult<Var> {
    let mut y = None;
    for (e, edges) in [("ap", &g.ap_edges), ("ue", &g.ue_edges)] {
        let pre = format!("layer{t}.{e}");
        let own = linear(tape, p, x, &format!("{pre}.l1"))?;
        let value = linear(tape, p, x, &format!("{pre}.l2"))?;
        let query = linear(tape, p, x, &format!("{pre}.l3"))?;
        let key = linear(tape, p, x, &format!("{pre}.l4"))?;
        let pilot = (e == "ap" && mode == PilotMode::Aware).then(|| p.get(&format!("layer{t}.pilot.w")));
        let agg = tape.edge_attention(query, key, value, pilot, (*edges).clone())?;
        let agg = linear(tape, p, agg, &format!("{pre}.l5"))?;
        let part = tape.add(own, agg)?;
        y = Some(match y {
            None => part,
            Some(acc) => tape.add(acc, part)?,
        });
    }
    let h = tape.relu(y.expect("two edge types"))?;
    let h = tape.row_normalize(h, NORM_EPS)?;
    let h = tape.mul(h, p.get(&format!("layer{t}.norm.gain")))?;
    tape.add(h, p.get(&format!("layer{t}.norm.bias")))
}

/// Output stage: `exp(-softplus(L3(L2(relu(L1 x))) + 6))`, masked, rearranged
/// AP-major to `(samples * M) x K_max` and projected row by row.
pub fn postprocess(tape: &mut Tape, p: &ParamVars, g: &GraphBatch, x: Var, antennas: usize) -> AdResult<Var> {
    let h = linear(tape, p, x, "post.l1")?;
    let h = tape.relu(h)?;
    let h = linear(tape, p, h, "post.l2")?;
    let h = linear(tape, p, h, "post.l3")?;
    let h = tape.offset(h, OUTPUT_SHIFT)?;
    let h = tape.softplus(h)?;
    let h = tape.neg(h)?;
    let y = tape.exp(h)?;
    let mask = tape.constant(g.node_mask.clone());
    let y = tape.mul(y, mask)?;
    let y = tape.gather_rows(y, g.to_ap_major.clone())?;
    let y = tape.reshape(y, g.samples * g.m, g.k_max)?;
    tape.project_rows(y, 1.0 / antennas as f64)
}

/// Full network on the tape. Returns the stacked power matrices,
/// `(samples * M) x K_max`, sample `s` in rows `s*M .. (s+1)*M`.
pub fn forward_on_tape(
    tape: &mut Tape,
    p: &ParamVars,
    g: &GraphBatch,
    antennas: usize,
    mode: PilotMode,
) -> AdResult<Var> {
    let mut x = preprocess_on_tape(tape, p, g)?;
    for t in 1..=LAYERS {
        x = attention_layer(tape, p, g, x, t, mode)?;
    }
    postprocess(tape, p, g, x, antennas)
}

/// Rows of sample `s` from a stacked forward output.
pub fn sample_rows(tape: &mut Tape, stacked: Var, s: usize, m: usize) -> AdResult<Var> {
    tape.gather_rows(stacked, (s * m..(s + 1) * m).collect())
}

fn check_params(params: &GatParams, m: usize) -> Result<()> {
    if params.m != m {
        return Err(Error::shape("number of APs for these parameters", params.m, m));
    }
    Ok(())
}

/// Power matrices for a batch of samples.
pub fn forward_batch(
    samples: &[&ScenarioSample],
    params: &GatParams,
    antennas: usize,
    mode: PilotMode,
) -> Result<Vec<PowerMatrix>> {
    let g = GraphBatch::new(samples)?;
    check_params(params, g.m)?;
    let mut tape = Tape::new();
    let p = params.on_tape(&mut tape);
    let out = forward_on_tape(&mut tape, &p, &g, antennas, mode)?;
    let all = tape.value(out);
    if let Some((node, op)) = tape.first_non_finite() {
        return Err(Error::Numeric(format!("non-finite value at node {node} ({op}) of the network forward")));
    }
    (0..g.samples)
        .map(|s| {
            let mu = all.slice(ndarray::s![s * g.m..(s + 1) * g.m, ..]).to_owned();
            PowerMatrix::try_new(mu, antennas, 0.0)
                .map_err(|r| Error::Numeric(format!("network output infeasible: {r:?}")))
        })
        .collect()
}

/// Power matrix for one sample.
pub fn forward(sample: &ScenarioSample, params: &GatParams, antennas: usize, mode: PilotMode) -> Result<PowerMatrix> {
    Ok(forward_batch(&[sample], params, antennas, mode)?.remove(0))
}
