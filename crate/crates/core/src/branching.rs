//! Layered branching programs reading samples `(a, b)` with `b = a·x`.
//!
//! Vertices are addressed by `(layer, index)`. A non-leaf vertex holds a
//! dense transition table of `2^{n+1}` targets in the next layer, indexed by
//! `a·2 + b` with `a` the packed word of the sample vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::MAX_TABLE_DIM;
use crate::error::{check_dim, Error, Result};
use crate::gf2::{parity, AffineSubspace, BitVector};
use crate::par::{self, Execution};
use crate::seeding::{streams, trial_rng};
use crate::stats::{Proportion, Z95};

/// Default cap on `d · 2^{2n} · m` for the exact forward DP.
pub const DEFAULT_DP_BUDGET: u128 = 1 << 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub a: BitVector,
    pub b: bool,
}

impl Sample {
    pub fn new(a: BitVector, b: bool) -> Self {
        Sample { a, b }
    }

    /// The noiseless sample `(a, a·x)`.
    pub fn for_key(a: BitVector, x: &BitVector) -> Result<Self> {
        Ok(Sample { b: a.dot(x)?, a })
    }

    #[inline]
    pub(crate) fn edge(&self) -> usize {
        edge_index(self.a.bits(), self.b)
    }
}

#[inline]
pub(crate) fn edge_index(a: u32, b: bool) -> usize {
    (a as usize) << 1 | b as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Inner(Vec<u32>),
    Leaf(AffineSubspace),
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub layer: usize,
    pub index: usize,
}

impl VertexId {
    pub const START: VertexId = VertexId { layer: 0, index: 0 };

    pub fn new(layer: usize, index: usize) -> Self {
        VertexId { layer, index }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingProgram {
    n: usize,
    width: usize,
    layers: Vec<Vec<Node>>,
}

impl BranchingProgram {
    pub fn new(n: usize, width: usize, layers: Vec<Vec<Node>>) -> Result<Self> {
        if n > MAX_TABLE_DIM {
            return Err(Error::AmbientTooLarge(n));
        }
        if layers.is_empty() || layers[0].len() != 1 {
            return Err(Error::parameter("layer 0 must hold exactly the start vertex"));
        }
        let fan_out = 1usize << (n + 1);
        let last = layers.len() - 1;
        for (t, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::parameter(format!("layer {t} is empty")));
            }
            if layer.len() > width {
                return Err(Error::parameter(format!("layer {t} has {} vertices, width is {width}", layer.len())));
            }
            for (i, node) in layer.iter().enumerate() {
                match node {
                    Node::Leaf(w) => check_dim(n, w.n())?,
                    Node::Inner(_) if t == last => {
                        return Err(Error::parameter(format!("vertex ({t},{i}) in the last layer is not a leaf")))
                    }
                    Node::Inner(targets) => {
                        if targets.len() != fan_out {
                            return Err(Error::parameter(format!(
                                "vertex ({t},{i}) has {} out-edges, expected {fan_out}",
                                targets.len()
                            )));
                        }
                        let next = layers[t + 1].len();
                        if let Some(&bad) = targets.iter().find(|&&v| v as usize >= next) {
                            return Err(Error::parameter(format!("vertex ({t},{i}) targets missing vertex {bad}")));
                        }
                    }
                }
            }
        }
        Ok(BranchingProgram { n, width, layers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The length `m`: the number of layers after the start layer.
    pub fn length(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[Vec<Node>] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn node(&self, v: VertexId) -> &Node {
        &self.layers[v.layer][v.index]
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.layers.iter().enumerate().flat_map(|(t, l)| (0..l.len()).map(move |i| VertexId::new(t, i)))
    }

    /// Target of the edge labelled `(a, b)` out of `v`; `None` at leaves.
    pub fn transition(&self, v: VertexId, a: &BitVector, b: bool) -> Result<Option<VertexId>> {
        check_dim(self.n, a.n())?;
        Ok(match self.node(v) {
            Node::Leaf(_) => None,
            Node::Inner(t) => Some(VertexId::new(v.layer + 1, t[edge_index(a.bits(), b)] as usize)),
        })
    }

    pub fn has_early_leaves(&self) -> bool {
        self.layers[..self.length()].iter().any(|l| l.iter().any(Node::is_leaf))
    }

    /// `⌈log2 d⌉` bits.
    pub fn memory_bits(&self) -> usize {
        crate::ceil_log2(self.width as u64)
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        check_dim(self.n, s.a.n())
    }

    /// Follows the computation path from the start vertex until a leaf.
    pub fn run_path(&self, samples: &[Sample]) -> Result<PathOutcome> {
        let trace = self.trace_path(samples)?;
        let leaf = *trace.last().expect("path contains the start vertex");
        let Node::Leaf(output) = self.node(leaf) else { unreachable!("trace ends at a leaf") };
        Ok(PathOutcome { leaf, output: output.clone(), samples_used: trace.len() - 1 })
    }

    /// All vertices visited, start vertex first and leaf last.
    pub fn trace_path(&self, samples: &[Sample]) -> Result<Vec<VertexId>> {
        let mut v = VertexId::START;
        let mut trace = vec![v];
        let mut used = 0;
        loop {
            match self.node(v) {
                Node::Leaf(_) => return Ok(trace),
                Node::Inner(targets) => {
                    let s = samples.get(used).ok_or(Error::PathIncomplete { consumed: used, layer: v.layer })?;
                    self.check_sample(s)?;
                    used += 1;
                    v = VertexId::new(v.layer + 1, targets[s.edge()] as usize);
                    trace.push(v);
                }
            }
        }
    }

    /// Runs on fresh noiseless samples for key `x` drawn from `rng`.
    pub fn run_on_key<R: Rng + ?Sized>(&self, x: u32, rng: &mut R) -> (VertexId, &AffineSubspace) {
        let mut v = VertexId::START;
        loop {
            match self.node(v) {
                Node::Leaf(w) => return (v, w),
                Node::Inner(targets) => {
                    let a: u32 = rng.random::<u32>() & crate::gf2::mask(self.n);
                    v = VertexId::new(v.layer + 1, targets[edge_index(a, parity(a & x))] as usize);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathOutcome {
    pub leaf: VertexId,
    pub output: AffineSubspace,
    pub samples_used: usize,
}

// ---------------------------------------------------------------------------
// Exact forward DP
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct DpConfig {
    pub execution: Execution,
    pub budget: u128,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { execution: Execution::default(), budget: DEFAULT_DP_BUDGET }
    }
}

impl DpConfig {
    pub fn with_execution(execution: Execution) -> Self {
        DpConfig { execution, ..Default::default() }
    }
}

/// Weights `Pr[V_t = v, x]` for the vertices of one layer, stored x-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub layer: usize,
    n: usize,
    vertices: usize,
    table: Vec<f64>,
}

impl JointDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn weight(&self, v: usize, x: u32) -> f64 {
        self.table[x as usize * self.vertices + v]
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }

    /// `Pr[V_t = v]` for every vertex of the layer.
    pub fn vertex_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices];
        for row in self.table.chunks(self.vertices) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out
    }

    /// The weights `Pr[V_t = v, x]` over `x` for one vertex.
    pub fn column(&self, v: usize) -> Vec<f64> {
        self.table.chunks(self.vertices).map(|row| row[v]).collect()
    }

    /// `ℙ_{x | V_t = v}`, or `None` if `v` is never reached.
    pub fn conditional(&self, v: usize) -> Option<Vec<f64>> {
        let col = self.column(v);
        let mass: f64 = col.iter().sum();
        (mass > 0.0).then(|| col.into_iter().map(|w| w / mass).collect())
    }
}

impl BranchingProgram {
    fn check_budget(&self, budget: u128) -> Result<()> {
        let needed = (self.width as u128) << (2 * self.n);
        let needed = needed * self.length().max(1) as u128;
        if needed > budget {
            return Err(Error::Budget { what: "exact DP (d·2^{2n}·m)", needed, budget });
        }
        Ok(())
    }

    /// Per-key weights through every layer: `result[t][v]` for the fixed key `x`.
    /// Weight reaching a leaf stays at that leaf.
    fn propagate_key(&self, x: u32) -> Vec<Vec<f64>> {
        let n = self.n;
        let scale = 1.0 / (1u64 << n) as f64;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        out.push(vec![scale]);
        for t in 0..self.length() {
            let mut next = vec![0.0; self.layers[t + 1].len()];
            for (u, node) in self.layers[t].iter().enumerate() {
                let w = out[t][u];
                if w == 0.0 {
                    continue;
                }
                if let Node::Inner(targets) = node {
                    let share = w * scale;
                    for a in 0..1u32 << n {
                        next[targets[edge_index(a, parity(a & x))] as usize] += share;
                    }
                }
            }
            out.push(next);
        }
        out
    }

    /// Exact joint distributions for every layer.
    pub fn reach_all_with(&self, cfg: &DpConfig) -> Result<Vec<JointDistribution>> {
        self.check_budget(cfg.budget)?;
        let keys = 1usize << self.n;
        let per_key = par::map_indices(cfg.execution, keys, |x| self.propagate_key(x as u32));
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(t, layer)| {
                let vertices = layer.len();
                let mut table = Vec::with_capacity(keys * vertices);
                for row in &per_key {
                    table.extend_from_slice(&row[t]);
                }
                JointDistribution { layer: t, n: self.n, vertices, table }
            })
            .collect())
    }

    pub fn reach_all(&self) -> Result<Vec<JointDistribution>> {
        self.reach_all_with(&DpConfig::default())
    }

    pub fn reach_distribution_with(&self, t: usize, cfg: &DpConfig) -> Result<JointDistribution> {
        if t > self.length() {
            return Err(Error::parameter(format!("layer {t} exceeds length {}", self.length())));
        }
        self.check_budget(cfg.budget)?;
        let keys = 1usize << self.n;
        let vertices = self.layers[t].len();
        let mut table = vec![0.0; keys * vertices];
        par::for_each_chunk_mut(cfg.execution, &mut table, vertices, |x, row| {
            let layers = self.truncated_propagate(x as u32, t);
            row.copy_from_slice(&layers);
        });
        Ok(JointDistribution { layer: t, n: self.n, vertices, table })
    }

    fn truncated_propagate(&self, x: u32, t: usize) -> Vec<f64> {
        // The per-key DP is cheap relative to the table; reuse the full pass.
        self.propagate_key(x).swap_remove(t)
    }

    pub fn reach_distribution(&self, t: usize) -> Result<JointDistribution> {
        self.reach_distribution_with(t, &DpConfig::default())
    }

    /// `Pr[x ∈ output]`, summed over leaves at every layer.
    pub fn success_probability_with(&self, cfg: &DpConfig) -> Result<f64> {
        self.success_where(cfg, |label, x| label.contains_word(x))
    }

    pub fn success_probability(&self) -> Result<f64> {
        self.success_probability_with(&DpConfig::default())
    }

    /// `Pr[output = {x}]`: exact recovery of the key.
    pub fn point_recovery_probability_with(&self, cfg: &DpConfig) -> Result<f64> {
        self.success_where(cfg, |label, x| label.is_point() && label.contains_word(x))
    }

    fn success_where<F: Fn(&AffineSubspace, u32) -> bool>(&self, cfg: &DpConfig, hit: F) -> Result<f64> {
        let all = self.reach_all_with(cfg)?;
        let mut total = 0.0;
        for (t, joint) in all.iter().enumerate() {
            for (v, node) in self.layers[t].iter().enumerate() {
                if let Node::Leaf(label) = node {
                    for x in 0..1u32 << self.n {
                        if hit(label, x) {
                            total += joint.weight(v, x);
                        }
                    }
                }
            }
        }
        Ok(total)
    }

    /// `Pr[V = v]` for every leaf, over all layers.
    pub fn leaf_masses_with(&self, cfg: &DpConfig) -> Result<Vec<(VertexId, f64)>> {
        let all = self.reach_all_with(cfg)?;
        let mut out = Vec::new();
        for (t, joint) in all.iter().enumerate() {
            let marginal = joint.vertex_marginal();
            for (v, node) in self.layers[t].iter().enumerate() {
                if node.is_leaf() {
                    out.push((VertexId::new(t, v), marginal[v]));
                }
            }
        }
        Ok(out)
    }

    /// Monte Carlo estimate of the success probability, one substream per trial.
    pub fn simulate_success(&self, trials: u64, seed: u64, exec: Execution) -> Proportion {
        let hits = par::count_indices(exec, trials as usize, |i| {
            let mut rng = trial_rng(seed, streams::PROGRAM_MC, i as u64);
            let x = rng.random::<u32>() & crate::gf2::mask(self.n);
            let (_, label) = self.run_on_key(x, &mut rng);
            label.contains_word(x)
        });
        Proportion::wilson(hits, trials, Z95)
    }

    /// Replaces every early leaf with a chain of pass-through vertices ending
    /// at a last-layer leaf with the same output. Labels, if given, follow.
    pub fn pad_early_leaves(&self, labels: Option<&AffineLabels>) -> Result<(BranchingProgram, Option<AffineLabels>)> {
        let m = self.length();
        let mut layers: Vec<Vec<Node>> = self.layers.clone();
        let mut lab: Option<Vec<Vec<AffineSubspace>>> = labels.map(|l| l.labels.clone());
        let fan_out = 1usize << (self.n + 1);
        for t in 0..m {
            for i in 0..layers[t].len() {
                if let Node::Leaf(output) = layers[t][i].clone() {
                    let label = lab.as_ref().map(|l| l[t][i].clone());
                    let next = layers[t + 1].len() as u32;
                    layers[t][i] = Node::Inner(vec![next; fan_out]);
                    layers[t + 1].push(Node::Leaf(output));
                    if let (Some(l), Some(label)) = (lab.as_mut(), label) {
                        l[t + 1].push(label);
                    }
                }
            }
        }
        let width = layers.iter().map(Vec::len).max().unwrap_or(1).max(self.width);
        let padded = BranchingProgram::new(self.n, width, layers)?;
        let labels = match lab {
            Some(l) => Some(AffineLabels::new(&padded, l)?),
            None => None,
        };
        Ok((padded, labels))
    }
}

// ---------------------------------------------------------------------------
// Affine labels
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineLabels {
    labels: Vec<Vec<AffineSubspace>>,
}

impl AffineLabels {
    pub fn new(program: &BranchingProgram, labels: Vec<Vec<AffineSubspace>>) -> Result<Self> {
        if labels.len() != program.layers.len()
            || labels.iter().zip(&program.layers).any(|(l, p)| l.len() != p.len())
        {
            return Err(Error::parameter("label shape does not match the program"));
        }
        for w in labels.iter().flatten() {
            check_dim(program.n, w.n())?;
        }
        Ok(AffineLabels { labels })
    }

    /// Every vertex labelled `{0,1}^n`.
    pub fn full(program: &BranchingProgram) -> Self {
        let full = AffineSubspace::full(program.n).expect("program dimension is in range");
        AffineLabels { labels: program.layers.iter().map(|l| vec![full.clone(); l.len()]).collect() }
    }

    /// Labels taken from leaf outputs; inner vertices get `{0,1}^n`.
    pub fn from_leaf_outputs(program: &BranchingProgram) -> Self {
        let full = AffineSubspace::full(program.n).expect("program dimension is in range");
        AffineLabels {
            labels: program
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|node| match node {
                            Node::Leaf(w) => w.clone(),
                            Node::Inner(_) => full.clone(),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn label(&self, v: VertexId) -> &AffineSubspace {
        &self.labels[v.layer][v.index]
    }

    pub fn labels(&self) -> &[Vec<AffineSubspace>] {
        &self.labels
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, v: VertexId, w: AffineSubspace) {
        self.labels[v.layer][v.index] = w;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    StartLabel {
        found: String,
    },
    Edge {
        from: VertexId,
        a: String,
        b: bool,
        to: VertexId,
        edge_space: String,
        target_label: String,
    },
    LeafOutput {
        vertex: VertexId,
        label: String,
        output: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

/// Checks the start label, soundness `w(u) ∩ {a·x = b} ⊆ w(v)` on every
/// edge, and that each leaf outputs its own label.
pub fn validate_affine(program: &BranchingProgram, labels: &AffineLabels) -> ValidationReport {
    let n = program.n;
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let start = labels.label(VertexId::START);
    if !start.is_full() {
        violations.push(Violation::StartLabel { found: start.to_string() });
    }
    for v in program.vertices() {
        let label = labels.label(v);
        match program.node(v) {
            Node::Leaf(output) => {
                if output != label {
                    violations.push(Violation::LeafOutput {
                        vertex: v,
                        label: label.to_string(),
                        output: output.to_string(),
                    });
                }
                if output.is_empty() {
                    warnings.push(format!("leaf ({},{}) outputs the empty set", v.layer, v.index));
                }
            }
            Node::Inner(targets) => {
                for a in 0..1u32 << n {
                    for b in [false, true] {
                        let edge_space = label.intersect_word(a, b);
                        let to = VertexId::new(v.layer + 1, targets[edge_index(a, b)] as usize);
                        let target_label = labels.label(to);
                        if !edge_space.is_subset_unchecked(target_label) {
                            violations.push(Violation::Edge {
                                from: v,
                                a: BitVector::from_raw(n, a).to_string(),
                                b,
                                to,
                                edge_space: edge_space.to_string(),
                                target_label: target_label.to_string(),
                            });
                        }
                    }
                }
            }
        }
    }
    ValidationReport { ok: violations.is_empty(), violations, warnings }
}

/// `E_{V_t} |ℙ_{x|V_t} - U_{w(V_t)}|_1` for every layer.
pub fn layer_accuracies_with(program: &BranchingProgram, labels: &AffineLabels, cfg: &DpConfig) -> Result<Vec<f64>> {
    if program.has_early_leaves() {
        return Err(Error::precondition("accuracy is defined only when all leaves are in the last layer"));
    }
    let all = program.reach_all_with(cfg)?;
    all.iter().map(|joint| accuracy_of(joint, labels)).collect()
}

pub fn layer_accuracy(program: &BranchingProgram, labels: &AffineLabels, t: usize) -> Result<f64> {
    if program.has_early_leaves() {
        return Err(Error::precondition("accuracy is defined only when all leaves are in the last layer"));
    }
    accuracy_of(&program.reach_distribution(t)?, labels)
}

fn accuracy_of(joint: &JointDistribution, labels: &AffineLabels) -> Result<f64> {
    let n = joint.n;
    let mut total = 0.0;
    for v in 0..joint.vertex_count() {
        let col = joint.column(v);
        let mass: f64 = col.iter().sum();
        if mass == 0.0 {
            continue;
        }
        let label = labels.label(VertexId::new(joint.layer, v));
        if label.is_empty() {
            return Err(Error::precondition(format!(
                "vertex ({},{v}) is reachable but labelled with the empty set",
                joint.layer
            )));
        }
        let u = 1.0 / label.len() as f64;
        let mut d = 0.0;
        for x in 0..1u32 << n {
            let p = col[x as usize] / mass;
            let q = if label.contains_word(x) { u } else { 0.0 };
            d += (p - q).abs();
        }
        total += mass * d;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SoundnessReport {
    pub paths: u64,
    pub violations: u64,
}

/// Exhaustive pathwise containment: for every key and every sequence of
/// sample vectors, the key lies in the label of every visited vertex.
pub fn exhaustive_soundness(program: &BranchingProgram, labels: &AffineLabels) -> Result<SoundnessReport> {
    let n = program.n;
    let paths_bound = (1u128 << n) * (1u128 << (n * program.length()));
    if paths_bound > 1 << 28 {
        return Err(Error::Budget { what: "exhaustive path enumeration", needed: paths_bound, budget: 1 << 28 });
    }
    let mut report = SoundnessReport { paths: 0, violations: 0 };
    for x in 0..1u32 << n {
        walk(program, labels, x, VertexId::START, &mut report);
    }
    Ok(report)
}

fn walk(program: &BranchingProgram, labels: &AffineLabels, x: u32, v: VertexId, report: &mut SoundnessReport) {
    let inside = labels.label(v).contains_word(x);
    if !inside {
        report.violations += 1;
    }
    match program.node(v) {
        Node::Leaf(_) => report.paths += 1,
        Node::Inner(targets) => {
            for a in 0..1u32 << program.n {
                let to = VertexId::new(v.layer + 1, targets[edge_index(a, parity(a & x))] as usize);
                walk(program, labels, x, to, report);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramFile {
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub layer_sizes: Vec<usize>,
    /// Per layer, per vertex: the transition table, or `null` for a leaf.
    pub transitions: Vec<Vec<Option<Vec<u32>>>>,
    /// Per layer, per vertex: the output subspace of a leaf, or `null`.
    pub leaf_labels: Vec<Vec<Option<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Vec<String>>>,
    /// For programs derived from another: the originating vertex index in
    /// the same layer of the source program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<usize>>>,
}

impl ProgramFile {
    pub fn from_program(program: &BranchingProgram, labels: Option<&AffineLabels>) -> Self {
        let transitions = program
            .layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|node| match node {
                        Node::Inner(t) => Some(t.clone()),
                        Node::Leaf(_) => None,
                    })
                    .collect()
            })
            .collect();
        let leaf_labels = program
            .layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|node| match node {
                        Node::Leaf(w) => Some(w.to_string()),
                        Node::Inner(_) => None,
                    })
                    .collect()
            })
            .collect();
        ProgramFile {
            n: program.n,
            m: program.length(),
            width: program.width,
            layer_sizes: program.layer_sizes(),
            transitions,
            leaf_labels,
            labels: labels.map(|l| l.labels.iter().map(|row| row.iter().map(|w| w.to_string()).collect()).collect()),
            gamma: None,
        }
    }

    pub fn to_program(&self) -> Result<(BranchingProgram, Option<AffineLabels>)> {
        let n = self.n;
        if self.transitions.len() != self.m + 1
            || self.leaf_labels.len() != self.m + 1
            || self.layer_sizes.len() != self.m + 1
        {
            return Err(Error::parameter("program file: layer count does not match m + 1"));
        }
        let mut layers = Vec::with_capacity(self.m + 1);
        for (t, (trans, leaves)) in self.transitions.iter().zip(&self.leaf_labels).enumerate() {
            if trans.len() != self.layer_sizes[t] || leaves.len() != self.layer_sizes[t] {
                return Err(Error::parameter(format!("program file: layer {t} size mismatch")));
            }
            let mut layer = Vec::with_capacity(trans.len());
            for (i, (tr, leaf)) in trans.iter().zip(leaves).enumerate() {
                layer.push(match (tr, leaf) {
                    (Some(t), None) => Node::Inner(t.clone()),
                    (None, Some(w)) => Node::Leaf(AffineSubspace::parse(w, n)?),
                    _ => {
                        return Err(Error::parameter(format!(
                            "program file: vertex ({t},{i}) must have exactly one of transition or leaf label"
                        )))
                    }
                });
            }
            layers.push(layer);
        }
        let program = BranchingProgram::new(n, self.width, layers)?;
        let labels = match &self.labels {
            None => None,
            Some(rows) => {
                let parsed = rows
                    .iter()
                    .map(|row| row.iter().map(|w| AffineSubspace::parse(w, n)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Some(AffineLabels::new(&program, parsed)?)
            }
        };
        Ok((program, labels))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parameter(format!("program file: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Constructors for tests and experiments
// ---------------------------------------------------------------------------

pub mod gen {
    use super::*;
    use crate::gf2::gen::random_affine;

    /// Uniformly random transitions; layer sizes in `1..=width`; last-layer
    /// leaves labelled with random affine subspaces.
    pub fn random_program<R: Rng + ?Sized>(n: usize, m: usize, width: usize, rng: &mut R) -> BranchingProgram {
        let mut sizes: Vec<usize> = (0..=m).map(|_| rng.random_range(1..=width)).collect();
        sizes[0] = 1;
        let fan_out = 1usize << (n + 1);
        let layers = (0..=m)
            .map(|t| {
                (0..sizes[t])
                    .map(|_| {
                        if t == m {
                            let dim = rng.random_range(0..=n);
                            Node::Leaf(random_affine(n, dim, rng))
                        } else {
                            Node::Inner((0..fan_out).map(|_| rng.random_range(0..sizes[t + 1]) as u32).collect())
                        }
                    })
                    .collect()
            })
            .collect();
        BranchingProgram::new(n, width, layers).expect("generated program is well formed")
    }

    /// One layer of `2^{n+1}` leaves, leaf `(a,b)` labelled `{x : a·x = b}`
    /// (or `{0,1}^n` for `a = 0`).
    pub fn record_first_sample(n: usize) -> BranchingProgram {
        let fan_out = 1usize << (n + 1);
        let leaves = (0..fan_out)
            .map(|e| {
                let a = (e >> 1) as u32;
                let b = e & 1 == 1;
                Node::Leaf(AffineSubspace::full(n).unwrap().intersect_word(a, b))
            })
            .collect();
        BranchingProgram::new(n, fan_out, vec![vec![Node::Inner((0..fan_out as u32).collect())], leaves])
            .expect("well formed")
    }

    /// Width-1 chain of length `m` ignoring every sample; single leaf output `w`.
    pub fn chain(n: usize, m: usize, w: AffineSubspace) -> BranchingProgram {
        let fan_out = 1usize << (n + 1);
        let mut layers: Vec<Vec<Node>> = (0..m).map(|_| vec![Node::Inner(vec![0; fan_out])]).collect();
        layers.push(vec![Node::Leaf(w)]);
        BranchingProgram::new(n, 1, layers).expect("well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::gen::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    fn full(n: usize) -> AffineSubspace {
        AffineSubspace::full(n).unwrap()
    }

    /// Records the first equation with `a ≠ 0` (n = 2, m = 2).
    fn record_one_equation() -> BranchingProgram {
        let n = 2;
        // layer 1: vertex 0 = nothing recorded, vertices 1..=6 = (a,b) with a≠0
        let first: Vec<u32> = (0..8u32).map(|e| if e >> 1 == 0 { 0 } else { e - 1 }).collect();
        let mut layer1 = vec![Node::Inner((0..8u32).map(|e| if e >> 1 == 0 { 0 } else { e - 1 }).collect())];
        for e in 2..8u32 {
            layer1.push(Node::Inner(vec![e - 1; 8]));
        }
        let mut layer2 = vec![Node::Leaf(full(n))];
        for e in 2..8u32 {
            layer2.push(Node::Leaf(full(n).intersect_word(e >> 1, e & 1 == 1)));
        }
        BranchingProgram::new(n, 7, vec![vec![Node::Inner(first)], layer1, layer2]).unwrap()
    }

    #[test]
    fn construction_rejects_malformed_programs() {
        let leaf = Node::Leaf(full(1));
        assert!(BranchingProgram::new(1, 1, vec![vec![]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Inner(vec![0; 4])]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Inner(vec![0; 3])], vec![leaf.clone()]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Inner(vec![1; 4])], vec![leaf.clone()]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Inner(vec![0; 4])], vec![leaf.clone(), leaf.clone()]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Leaf(full(2))]]).is_err());
        assert!(BranchingProgram::new(1, 1, vec![vec![Node::Inner(vec![0; 4])], vec![leaf]]).is_ok());
    }

    #[test]
    fn run_path_examples() {
        let b = record_first_sample(1);
        let out = b.run_path(&[Sample::new(bv("1"), true)]).unwrap();
        assert_eq!(out.output, AffineSubspace::point(bv("1")));
        assert_eq!(out.samples_used, 1);
        let out = b.run_path(&[Sample::new(bv("0"), false)]).unwrap();
        assert!(out.output.is_full());
        // every key and first sample: the output contains the key
        for x in 0..2u32 {
            for a in 0..2u32 {
                let s = Sample::for_key(BitVector::new(1, a).unwrap(), &BitVector::new(1, x).unwrap()).unwrap();
                assert!(b.run_path(&[s]).unwrap().output.contains_word(x));
            }
        }
        let chain = chain(2, 3, AffineSubspace::point(bv("01")));
        let s = Sample::new(bv("11"), false);
        assert_eq!(chain.run_path(&[s, s, s]).unwrap().leaf, VertexId::new(3, 0));
        assert_eq!(chain.run_path(&[s, s]), Err(Error::PathIncomplete { consumed: 2, layer: 2 }));
        assert!(chain.run_path(&[Sample::new(bv("1"), false)]).is_err());
    }

    #[test]
    fn reach_distribution_examples() {
        let b = random_program(2, 2, 3, &mut ChaCha8Rng::seed_from_u64(1));
        let j = b.reach_distribution(0).unwrap();
        for x in 0..4 {
            assert_eq!(j.weight(0, x), 0.25);
        }
        for t in 0..=2 {
            assert!((b.reach_distribution(t).unwrap().total() - 1.0).abs() < 1e-12);
        }

        // n = 1: route on b only (vertex 0 for b=0, vertex 1 for b=1)
        let routed = BranchingProgram::new(
            1,
            2,
            vec![vec![Node::Inner(vec![0, 1, 0, 1])], vec![Node::Leaf(full(1)), Node::Leaf(full(1))]],
        )
        .unwrap();
        let j = routed.reach_distribution(1).unwrap();
        // oracle: enumerate (x, a) uniformly
        let mut oracle = [[0.0; 2]; 2];
        for x in 0..2u32 {
            for a in 0..2u32 {
                oracle[parity(a & x) as usize][x as usize] += 0.25;
            }
        }
        assert_eq!(oracle, [[0.5, 0.25], [0.0, 0.25]]);
        for (v, row) in oracle.iter().enumerate() {
            for x in 0..2 {
                assert_eq!(j.weight(v, x), row[x as usize]);
            }
        }
    }

    #[test]
    fn success_probability_examples() {
        assert_eq!(chain(3, 2, full(3)).success_probability().unwrap(), 1.0);
        assert_eq!(chain(3, 2, AffineSubspace::point(bv("000"))).success_probability().unwrap(), 0.125);
        assert_eq!(record_one_equation().success_probability().unwrap(), 1.0);
        let empty = chain(2, 1, AffineSubspace::empty(2).unwrap());
        assert_eq!(empty.success_probability().unwrap(), 0.0);
        let v = validate_affine(&empty, &AffineLabels::from_leaf_outputs(&empty));
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn parallel_and_sequential_dp_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let b = random_program(3, 3, 5, &mut rng);
            let s = b.reach_all_with(&DpConfig::with_execution(Execution::Sequential)).unwrap();
            let p = b.reach_all_with(&DpConfig::with_execution(Execution::Parallel)).unwrap();
            assert_eq!(s, p);
            for (t, layer) in s.iter().enumerate() {
                assert_eq!(&b.reach_distribution(t).unwrap(), layer);
            }
        }
    }

    #[test]
    fn budget_guard() {
        let b = random_program(3, 2, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let cfg = DpConfig { budget: 10, ..Default::default() };
        assert!(matches!(b.reach_all_with(&cfg), Err(Error::Budget { .. })));
    }

    #[test]
    fn validation_examples() {
        let b = record_one_equation();
        let all_full = AffineLabels::full(&b);
        // leaves output their own subspaces, so the all-full labelling breaks
        // only the leaf-output consistency, never soundness
        let report = validate_affine(&b, &all_full);
        assert!(report.violations.iter().all(|v| matches!(v, Violation::LeafOutput { .. })));
        let chain = chain(2, 2, full(2));
        assert!(validate_affine(&chain, &AffineLabels::full(&chain)).ok);

        let mut labels = AffineLabels::from_leaf_outputs(&b);
        for i in 1..7 {
            let e = (i + 1) as u32;
            labels.set(VertexId::new(1, i), full(2).intersect_word(e >> 1, e & 1 == 1));
        }
        assert!(validate_affine(&b, &labels).ok);
        labels.set(VertexId::new(1, 1), AffineSubspace::point(bv("00")));
        let report = validate_affine(&b, &labels);
        assert!(!report.ok);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Edge { to, .. } if *to == VertexId::new(1, 1))));
    }

    #[test]
    fn accuracy_examples() {
        let b = record_one_equation();
        let labels = AffineLabels::from_leaf_outputs(&b);
        assert_eq!(layer_accuracy(&b, &labels, 0).unwrap(), 0.0);

        // all labels full, one equation learnt at layer 1 unless a₁ = 0:
        // the conditional is uniform on a half-space, at distance 1 from U_{0,1}^2
        let all_full = AffineLabels::full(&b);
        let acc = layer_accuracy(&b, &all_full, 1).unwrap();
        let oracle: f64 = {
            let mut total = 0.0;
            for a in 0..4u32 {
                // layer-1 vertex for a≠0 has conditional uniform on 2 points
                total += 0.25 * if a == 0 { 0.0 } else { 1.0 };
            }
            total
        };
        assert!((acc - oracle).abs() < 1e-12, "{acc} vs {oracle}");
        assert!((acc - 0.75).abs() < 1e-12);

        // point labels that pin the key whenever a₁ = 1: accuracy 0
        let point = |s: &str| AffineSubspace::point(bv(s));
        let pin = BranchingProgram::new(
            1,
            3,
            vec![
                vec![Node::Inner(vec![0, 0, 1, 2])],
                vec![Node::Inner(vec![0; 4]), Node::Inner(vec![1; 4]), Node::Inner(vec![2; 4])],
                vec![Node::Leaf(full(1)), Node::Leaf(point("0")), Node::Leaf(point("1"))],
            ],
        )
        .unwrap();
        let mut labels = AffineLabels::from_leaf_outputs(&pin);
        labels.set(VertexId::new(1, 1), point("0"));
        labels.set(VertexId::new(1, 2), point("1"));
        assert!(validate_affine(&pin, &labels).ok);
        let accs = layer_accuracies_with(&pin, &labels, &DpConfig::default()).unwrap();
        assert!(accs.iter().all(|&a| a.abs() < 1e-12), "{accs:?}");

        let early = BranchingProgram::new(
            1,
            2,
            vec![vec![Node::Inner(vec![0, 0, 1, 1])], vec![Node::Leaf(full(1)), Node::Inner(vec![0; 4])], vec![
                Node::Leaf(full(1)),
            ]],
        )
        .unwrap();
        assert!(early.has_early_leaves());
        assert!(matches!(layer_accuracy(&early, &AffineLabels::full(&early), 1), Err(Error::Precondition(_))));
        let (padded, labels) = early.pad_early_leaves(Some(&AffineLabels::full(&early))).unwrap();
        assert!(!padded.has_early_leaves());
        assert!(validate_affine(&padded, labels.as_ref().unwrap()).ok);
        assert_eq!(padded.success_probability().unwrap(), early.success_probability().unwrap());
    }

    #[test]
    fn pathwise_soundness_of_recording_program() {
        let b = record_one_equation();
        let mut labels = AffineLabels::from_leaf_outputs(&b);
        for i in 1..7 {
            let e = (i + 1) as u32;
            labels.set(VertexId::new(1, i), full(2).intersect_word(e >> 1, e & 1 == 1));
        }
        let report = exhaustive_soundness(&b, &labels).unwrap();
        assert_eq!(report, SoundnessReport { paths: 4 * 16, violations: 0 });
    }

    #[test]
    fn monte_carlo_matches_dp() {
        let b = random_program(3, 3, 4, &mut ChaCha8Rng::seed_from_u64(9));
        let exact = b.success_probability().unwrap();
        let est = b.simulate_success(100_000, 3, Execution::default());
        assert!(est.within_sigmas(exact, 3.0), "{} vs {exact}", est.estimate);
        assert_eq!(est, b.simulate_success(100_000, 3, Execution::Sequential));
    }

    #[test]
    fn program_file_round_trip() {
        let b = random_program(2, 3, 4, &mut ChaCha8Rng::seed_from_u64(6));
        let labels = AffineLabels::full(&b);
        let file = ProgramFile::from_program(&b, Some(&labels));
        let text = serde_json::to_string(&file).unwrap();
        let back = ProgramFile::from_json(&text).unwrap();
        let (b2, l2) = back.to_program().unwrap();
        assert_eq!(b, b2);
        assert_eq!(Some(labels), l2);
        assert!(ProgramFile::from_json("{").is_err());
    }
}
