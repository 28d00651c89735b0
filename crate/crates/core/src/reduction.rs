//! Turning a branching program into an accurate affine one.
//!
//! Layer by layer, each vertex `v` of the source program `B` is split into
//! one vertex per representative of a subspace partition of the edge spaces
//! entering `v`, plus a catch-all vertex labelled `{0,1}^n`. The idealized
//! pair `(U_j, y_j)` (a vertex of the new program and a key uniform on its
//! label) is propagated exactly to weigh the edge spaces.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::branching::{
    edge_index, layer_accuracies_with, validate_affine, AffineLabels, BranchingProgram, DpConfig, Node, ProgramFile,
    ValidationReport, VertexId,
};
use crate::distributions::SubspaceMixture;
use crate::error::{Error, Result};
use crate::gf2::AffineSubspace;
use crate::par;
use crate::partition::{build_partition, log2_group_bound, SubspacePartition};

/// Slack on the floating-point inequalities checked in reports.
pub const CHECK_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReductionParams {
    pub r: f64,
}

impl ReductionParams {
    pub fn new(n: usize, r: f64) -> Result<Self> {
        let half = n as f64 / 2.0;
        if !(half..=n as f64).contains(&r) {
            return Err(Error::parameter(format!("r = {r} must lie in [n/2, n] = [{half}, {n}]")));
        }
        Ok(ReductionParams { r })
    }

    /// `ε = 4m · 2^{-(r - n/2)}`.
    pub fn epsilon(&self, n: usize, m: usize) -> f64 {
        4.0 * m as f64 * (-(self.r - n as f64 / 2.0)).exp2()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundStatus {
    Binding,
    Vacuous,
}

impl BoundStatus {
    /// A bound on an ℓ1 distance is vacuous once it reaches 2.
    fn for_distance(bound: f64) -> Self {
        if bound >= 2.0 {
            BoundStatus::Vacuous
        } else {
            BoundStatus::Binding
        }
    }

    /// A lower bound on a probability is vacuous when non-positive.
    fn for_lower(bound: f64) -> Self {
        if bound <= 0.0 {
            BoundStatus::Vacuous
        } else {
            BoundStatus::Binding
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceCheck {
    pub layer: usize,
    pub value: f64,
    pub bound: f64,
    pub status: BoundStatus,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionCount {
    pub k: usize,
    pub count: usize,
    pub log2_bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputDimensionCheck {
    pub k: usize,
    pub probability_below: f64,
    pub bound: f64,
    pub status: BoundStatus,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationCheck {
    pub structure_ok: bool,
    pub functionality_ok: bool,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub r: f64,
    pub epsilon: f64,
    pub epsilon_status: BoundStatus,
    pub beta: f64,
    pub k_prime: usize,
    pub layer_sizes: Vec<usize>,
    pub validation: ValidationReport,
    pub accuracy: Vec<DistanceCheck>,
    pub inductive: Vec<DistanceCheck>,
    pub vertex_counts: Vec<DimensionCount>,
    /// `Pr[dim(output) = k]` for `k = 0..=n`.
    pub output_dimensions: Vec<f64>,
    pub output_bounds: Vec<OutputDimensionCheck>,
    pub simulation: SimulationCheck,
    pub ok: bool,
}

impl ReductionReport {
    fn compute_ok(&mut self) {
        self.ok = self.validation.ok
            && self.accuracy.iter().all(|c| c.ok)
            && self.inductive.iter().all(|c| c.ok)
            && self.vertex_counts.iter().all(|c| c.ok)
            && self.output_bounds.iter().all(|c| c.ok)
            && self.simulation.structure_ok
            && self.simulation.functionality_ok;
    }
}

#[derive(Clone, Debug)]
pub struct AffineReduction {
    pub program: BranchingProgram,
    pub labels: AffineLabels,
    /// `gamma[t][i]`: the vertex of the source program in layer `t` that
    /// vertex `(t, i)` simulates.
    pub gamma: Vec<Vec<usize>>,
    pub report: ReductionReport,
}

impl AffineReduction {
    pub fn to_file(&self) -> ProgramFile {
        let mut file = ProgramFile::from_program(&self.program, Some(&self.labels));
        file.gamma = Some(self.gamma.clone());
        file
    }
}

/// The edge spaces `w(u) ∩ {a·x = b}` out of a vertex with label `w`, with
/// the idealized probability of each `(a, b)` given `U = u`.
fn edge_spaces(n: usize, w: &AffineSubspace) -> Vec<(usize, AffineSubspace, f64)> {
    let pa = 1.0 / (1u64 << n) as f64;
    let mut out = Vec::with_capacity(1 << (n + 1));
    for a in 0..1u32 << n {
        let w0 = w.intersect_word(a, false);
        let w1 = w.intersect_word(a, true);
        let (p0, p1) = match (w0.is_empty(), w1.is_empty()) {
            (true, _) => (0.0, pa),
            (_, true) => (pa, 0.0),
            _ => (pa / 2.0, pa / 2.0),
        };
        out.push((edge_index(a, false), w0, p0));
        out.push((edge_index(a, true), w1, p1));
    }
    out
}

pub fn reduce_to_affine(source: &BranchingProgram, params: ReductionParams, cfg: &DpConfig) -> Result<AffineReduction> {
    let n = source.n();
    let m = source.length();
    ReductionParams::new(n, params.r)?;
    if source.has_early_leaves() {
        return Err(Error::precondition("the source program must have all leaves in the last layer"));
    }
    let full = AffineSubspace::full(n)?;
    if m == 0 {
        let program = BranchingProgram::new(n, 1, vec![vec![Node::Leaf(full.clone())]])?;
        let labels = AffineLabels::new(&program, vec![vec![full]])?;
        let gamma = vec![vec![0]];
        let report = verify_reduction(source, &program, &labels, &gamma, params, cfg)?;
        return Ok(AffineReduction { program, labels, gamma, report });
    }

    let mut layers: Vec<Vec<Node>> = vec![vec![Node::Inner(Vec::new())]];
    let mut labels: Vec<Vec<AffineSubspace>> = vec![vec![full.clone()]];
    let mut gamma: Vec<Vec<usize>> = vec![vec![0]];
    let mut q: Vec<f64> = vec![1.0];

    for j in 0..m {
        let next_source = &source.layers()[j + 1];
        let edges: Vec<Vec<(usize, AffineSubspace, f64)>> = labels[j].iter().map(|w| edge_spaces(n, w)).collect();
        let target_of = |u: usize, e: usize| -> usize {
            match &source.layers()[j][gamma[j][u]] {
                Node::Inner(t) => t[e] as usize,
                Node::Leaf(_) => unreachable!("inner layers of the source have no leaves"),
            }
        };

        // Mixture of edge spaces entering each source vertex of layer j+1.
        let mut incoming: Vec<BTreeMap<AffineSubspace, f64>> = vec![BTreeMap::new(); next_source.len()];
        for (u, list) in edges.iter().enumerate() {
            if q[u] == 0.0 {
                continue;
            }
            for (e, w, p) in list {
                if *p > 0.0 {
                    *incoming[target_of(u, *e)].entry(w.clone()).or_insert(0.0) += q[u] * p;
                }
            }
        }
        let partitions: Vec<Option<SubspacePartition>> =
            par::map_slice(cfg.execution, &incoming, |weights| -> Result<Option<SubspacePartition>> {
                if weights.is_empty() {
                    return Ok(None);
                }
                let mixture = SubspaceMixture::from_weights(n, weights.iter().map(|(w, p)| (w.clone(), *p)).collect::<Vec<_>>())?;
                Ok(Some(build_partition(&mixture, params.r)?))
            })
            .into_iter()
            .collect::<Result<_>>()?;

        // New vertices: (v, s_1), …, (v, s_k), (v, *) for every source vertex v.
        let mut offsets = Vec::with_capacity(next_source.len());
        let mut next_labels = Vec::new();
        let mut next_gamma = Vec::new();
        for (v, part) in partitions.iter().enumerate() {
            offsets.push(next_labels.len());
            if let Some(part) = part {
                for g in &part.groups {
                    next_labels.push(g.representative.clone());
                    next_gamma.push(v);
                }
            }
            next_labels.push(full.clone());
            next_gamma.push(v);
        }
        let star = |v: usize| partitions[v].as_ref().map_or(0, |p| p.groups.len());
        let mut next_q = vec![0.0; next_labels.len()];
        for (u, list) in edges.iter().enumerate() {
            let mut targets = vec![0u32; 1 << (n + 1)];
            for (e, w, p) in list {
                let v = target_of(u, *e);
                let slot = partitions[v].as_ref().and_then(|part| part.representative_for(w)).unwrap_or(star(v));
                let to = offsets[v] + slot;
                targets[*e] = to as u32;
                next_q[to] += q[u] * p;
            }
            layers[j][u] = Node::Inner(targets);
        }
        let last = j + 1 == m;
        layers.push(
            next_labels
                .iter()
                .map(|w| if last { Node::Leaf(w.clone()) } else { Node::Inner(Vec::new()) })
                .collect(),
        );
        labels.push(next_labels);
        gamma.push(next_gamma);
        q = next_q;
    }

    let width = layers.iter().map(Vec::len).max().unwrap_or(1);
    let program = BranchingProgram::new(n, width, layers)?;
    let labels = AffineLabels::new(&program, labels)?;
    let report = verify_reduction(source, &program, &labels, &gamma, params, cfg)?;
    Ok(AffineReduction { program, labels, gamma, report })
}

/// Checks the simulation map: layers and leaf status are preserved, and every
/// edge `(u, v)` labelled `(a, b)` has the edge `(Γu, Γv)` labelled `(a, b)` in `B`.
fn check_simulation(source: &BranchingProgram, program: &BranchingProgram, gamma: &[Vec<usize>]) -> SimulationCheck {
    let mut violations = Vec::new();
    let shape_ok = gamma.len() == program.layers().len()
        && program.length() == source.length()
        && gamma.iter().zip(program.layers()).all(|(g, l)| g.len() == l.len());
    if !shape_ok {
        return SimulationCheck {
            structure_ok: false,
            functionality_ok: false,
            violations: vec!["simulation map shape does not match the programs".into()],
        };
    }
    let mut structure_ok = gamma[0] == [0];
    for v in program.vertices() {
        let g = gamma[v.layer][v.index];
        if g >= source.layers()[v.layer].len() {
            structure_ok = false;
            violations.push(format!("({},{}) maps outside layer {}", v.layer, v.index, v.layer));
            continue;
        }
        if program.node(v).is_leaf() != source.layers()[v.layer][g].is_leaf() {
            structure_ok = false;
            violations.push(format!("({},{}) and its image differ in leaf status", v.layer, v.index));
        }
    }
    let mut functionality_ok = structure_ok;
    if structure_ok {
        for v in program.vertices() {
            let (Node::Inner(ours), Node::Inner(theirs)) =
                (program.node(v), &source.layers()[v.layer][gamma[v.layer][v.index]])
            else {
                continue;
            };
            for (e, (&to, &src_to)) in ours.iter().zip(theirs).enumerate() {
                if gamma[v.layer + 1][to as usize] != src_to as usize {
                    functionality_ok = false;
                    violations.push(format!(
                        "edge {e} of ({},{}) leads to ({},{to}), simulating {} instead of {src_to}",
                        v.layer,
                        v.index,
                        v.layer + 1,
                        gamma[v.layer + 1][to as usize]
                    ));
                }
            }
        }
    }
    SimulationCheck { structure_ok, functionality_ok, violations }
}

/// `Pr[U_j = u]` for the idealized process, recomputed from the edges of `P`.
fn idealized_marginals(program: &BranchingProgram, labels: &AffineLabels) -> Vec<Vec<f64>> {
    let n = program.n();
    let mut out = vec![vec![1.0]];
    for j in 0..program.length() {
        let mut next = vec![0.0; program.layers()[j + 1].len()];
        for (u, node) in program.layers()[j].iter().enumerate() {
            let (Node::Inner(targets), qu) = (node, out[j][u]) else { continue };
            if qu == 0.0 {
                continue;
            }
            for (e, _, p) in edge_spaces(n, labels.label(VertexId::new(j, u))) {
                next[targets[e] as usize] += qu * p;
            }
        }
        out.push(next);
    }
    out
}

/// Recomputes every quantity of the report from the two programs, the labels
/// and the simulation map.
pub fn verify_reduction(
    source: &BranchingProgram,
    program: &BranchingProgram,
    labels: &AffineLabels,
    gamma: &[Vec<usize>],
    params: ReductionParams,
    cfg: &DpConfig,
) -> Result<ReductionReport> {
    let n = source.n();
    let m = source.length();
    let epsilon = params.epsilon(n, m);
    let beta = source.success_probability_with(cfg)?;
    let k_prime = source
        .layers()
        .iter()
        .flatten()
        .filter_map(|node| match node {
            Node::Leaf(w) => w.dim(),
            Node::Inner(_) => None,
        })
        .max()
        .unwrap_or(0);

    let validation = validate_affine(program, labels);
    let simulation = check_simulation(source, program, gamma);

    let joint = program.reach_all_with(cfg)?;
    let accuracies = layer_accuracies_with(program, labels, cfg)?;
    let accuracy = accuracies
        .iter()
        .enumerate()
        .map(|(t, &value)| {
            let bound = epsilon.min(2.0);
            DistanceCheck { layer: t, value, bound, status: BoundStatus::for_distance(epsilon), ok: value <= bound + CHECK_SLACK }
        })
        .collect();

    let q = idealized_marginals(program, labels);
    let step = 2.0 * (-(params.r - n as f64 / 2.0)).exp2();
    let inductive = (0..=m)
        .map(|j| {
            let mut d = 0.0;
            for (u, &qu) in q[j].iter().enumerate() {
                let w = labels.label(VertexId::new(j, u));
                let share = if w.is_empty() { 0.0 } else { qu / w.len() as f64 };
                for x in 0..1u32 << n {
                    let ideal = if w.contains_word(x) { share } else { 0.0 };
                    d += (joint[j].weight(u, x) - ideal).abs();
                }
            }
            let raw = step * j as f64;
            let bound = raw.min(2.0);
            DistanceCheck { layer: j, value: d, bound, status: BoundStatus::for_distance(raw), ok: d <= bound + CHECK_SLACK }
        })
        .collect();

    let d = source.width();
    let vertex_counts = (0..n)
        .map(|k| {
            let count = program.vertices().filter(|&v| labels.label(v).dim() == Some(k)).count();
            let log2_bound = if m == 0 {
                f64::NEG_INFINITY
            } else {
                log2_group_bound(n, params.r, k) + ((d * m) as f64).log2()
            };
            let ok = count == 0 || (count as f64).log2() <= log2_bound + 1e-12;
            DimensionCount { k, count, log2_bound, ok }
        })
        .collect();

    let mut output_dimensions = vec![0.0; n + 1];
    for (t, layer) in program.layers().iter().enumerate() {
        let marginal = joint[t].vertex_marginal();
        for (v, node) in layer.iter().enumerate() {
            if let Node::Leaf(w) = node {
                if let Some(k) = w.dim() {
                    output_dimensions[k] += marginal[v];
                }
            }
        }
    }
    let output_bounds = ((k_prime + 1)..n)
        .map(|k| {
            let probability_below: f64 = output_dimensions[..k].iter().sum();
            let bound = beta - epsilon - (-((k - k_prime) as f64)).exp2();
            OutputDimensionCheck {
                k,
                probability_below,
                bound,
                status: BoundStatus::for_lower(bound),
                ok: probability_below >= bound - CHECK_SLACK,
            }
        })
        .collect();

    let mut report = ReductionReport {
        n,
        m,
        width: d,
        r: params.r,
        epsilon,
        epsilon_status: BoundStatus::for_distance(epsilon),
        beta,
        k_prime,
        layer_sizes: program.layer_sizes(),
        validation,
        accuracy,
        inductive,
        vertex_counts,
        output_dimensions,
        output_bounds,
        simulation,
        ok: false,
    };
    report.compute_ok();
    Ok(report)
}
