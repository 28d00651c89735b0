//! Reach-probability bounds for affine programs and the exponent arithmetic
//! of the time-space lower bound.

use serde::Serialize;

use crate::branching::{validate_affine, AffineLabels, BranchingProgram, DpConfig, Node, VertexId};
use crate::error::{Error, Result};
use crate::gf2::AffineSubspace;

/// `log2` of `m^{n-k} · 2^{Σ_{j=0}^{n-k-1}(n - 2k - j)}`.
pub fn log2_probaffine_bound(n: usize, m: usize, k: usize) -> Result<f64> {
    if k >= n {
        return Err(Error::parameter(format!("k = {k} must be below n = {n}")));
    }
    if m == 0 {
        return Err(Error::parameter("m must be at least 1"));
    }
    let l = (n - k) as f64;
    let (n, k) = (n as f64, k as f64);
    Ok(l * (m as f64).log2() + l * (n - 2.0 * k) - l * (l - 1.0) / 2.0)
}

/// Upper bound on the probability of reaching a dimension-`k` vertex of a
/// length-`m` affine program whose labels all have dimension at least `k`.
pub fn probaffine_bound(n: usize, m: usize, k: usize) -> Result<f64> {
    let log2 = log2_probaffine_bound(n, m, k)?;
    // Both factors are exact in floating point while they stay in range.
    let l = (n - k) as i32;
    let sum = l as f64 * (n as f64 - 2.0 * k as f64) - (l * (l - 1) / 2) as f64;
    let direct = (m as f64).powi(l) * sum.exp2();
    Ok(if direct.is_finite() && direct > 0.0 { direct } else { log2.exp2() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachBoundReport {
    pub vertex: VertexId,
    pub k: usize,
    pub exact: f64,
    pub bound: f64,
    pub margin: f64,
    pub ok: bool,
    pub trimmed: bool,
}

/// The program cut down to labels of dimension at least `k`: dimension-`k`
/// vertices become leaves, lower-dimensional vertices are removed, and edges
/// into removed vertices (whose edge spaces are empty in a sound program) are
/// redirected to a surviving vertex or to an added `{0,1}^n` sink.
#[derive(Clone, Debug)]
pub struct Trimmed {
    pub program: BranchingProgram,
    pub labels: AffineLabels,
    /// Original vertex → new vertex, for vertices that survive.
    pub map: Vec<Vec<Option<usize>>>,
}

pub fn trim_to_dimension(program: &BranchingProgram, labels: &AffineLabels, k: usize) -> Result<Trimmed> {
    let n = program.n();
    let m = program.length();
    let full = AffineSubspace::full(n)?;
    let keep = |v: VertexId| labels.label(v).dim().is_some_and(|d| d >= k);
    let mut map: Vec<Vec<Option<usize>>> = Vec::with_capacity(m + 1);
    let mut new_labels: Vec<Vec<AffineSubspace>> = Vec::with_capacity(m + 1);
    for (t, layer) in program.layers().iter().enumerate() {
        let mut row = Vec::with_capacity(layer.len());
        let mut lab = Vec::new();
        for i in 0..layer.len() {
            let v = VertexId::new(t, i);
            if keep(v) {
                row.push(Some(lab.len()));
                lab.push(labels.label(v).clone());
            } else {
                row.push(None);
            }
        }
        map.push(row);
        new_labels.push(lab);
    }
    if map[0][0].is_none() {
        return Err(Error::precondition("the start vertex does not survive trimming"));
    }
    // sink[t]: index of the added sink in layer t, if any
    let mut sink: Vec<Option<usize>> = vec![None; m + 1];
    let mut layers: Vec<Vec<Node>> = new_labels.iter().map(|l| Vec::with_capacity(l.len())).collect();
    for t in 0..=m {
        let layer = &program.layers()[t];
        let fallback = |sink: &mut Vec<Option<usize>>, new_labels: &mut Vec<Vec<AffineSubspace>>| -> u32 {
            if let Some(first) = map[t + 1].iter().flatten().next() {
                return *first as u32;
            }
            *sink[t + 1].get_or_insert_with(|| {
                new_labels[t + 1].push(full.clone());
                new_labels[t + 1].len() - 1
            }) as u32
        };
        for (i, node) in layer.iter().enumerate() {
            if map[t][i].is_none() {
                continue;
            }
            let label = labels.label(VertexId::new(t, i));
            let new_node = match node {
                Node::Leaf(w) => Node::Leaf(w.clone()),
                Node::Inner(_) if label.dim() == Some(k) => Node::Leaf(label.clone()),
                Node::Inner(targets) => Node::Inner(
                    targets
                        .iter()
                        .map(|&to| match map[t + 1][to as usize] {
                            Some(j) => j as u32,
                            None => fallback(&mut sink, &mut new_labels),
                        })
                        .collect(),
                ),
            };
            layers[t].push(new_node);
        }
        if sink[t].is_some() {
            layers[t].push(if t == m {
                Node::Leaf(full.clone())
            } else {
                Node::Inner(vec![fallback(&mut sink, &mut new_labels); 1 << (n + 1)])
            });
        }
    }
    let width = layers.iter().map(Vec::len).max().unwrap_or(1);
    let trimmed = BranchingProgram::new(n, width, layers)?;
    let labels = AffineLabels::new(&trimmed, new_labels)?;
    Ok(Trimmed { program: trimmed, labels, map })
}

fn require_sound(program: &BranchingProgram, labels: &AffineLabels) -> Result<()> {
    let v = validate_affine(program, labels);
    if !v.ok {
        return Err(Error::precondition(format!(
            "not a sound affine program ({} violations)",
            v.violations.len()
        )));
    }
    Ok(())
}

/// Exact reach probability of every dimension-`k` vertex against the bound.
///
/// Without `trim`, every label must have dimension at least `k`. With `trim`,
/// the program is first cut by [`trim_to_dimension`]; the exact value is then
/// the probability that `v` is the first dimension-`k` vertex on the path.
pub fn verify_reach_bounds(
    program: &BranchingProgram,
    labels: &AffineLabels,
    k: usize,
    trim: bool,
    cfg: &DpConfig,
) -> Result<Vec<ReachBoundReport>> {
    require_sound(program, labels)?;
    let n = program.n();
    let bound = probaffine_bound(n, program.length(), k)?;
    let low: Vec<VertexId> = program.vertices().filter(|&v| labels.label(v).dim().is_none_or(|d| d < k)).collect();
    let (target_program, map, trimmed) = if low.is_empty() {
        (program.clone(), None, false)
    } else if trim {
        let t = trim_to_dimension(program, labels, k)?;
        require_sound(&t.program, &t.labels)?;
        (t.program, Some(t.map), true)
    } else {
        return Err(Error::precondition(format!(
            "{} vertices have labels of dimension below {k}, first at ({},{})",
            low.len(),
            low[0].layer,
            low[0].index
        )));
    };
    let joint = target_program.reach_all_with(cfg)?;
    let marginals: Vec<Vec<f64>> = joint.iter().map(|j| j.vertex_marginal()).collect();
    let mut out = Vec::new();
    for v in program.vertices() {
        if labels.label(v).dim() != Some(k) {
            continue;
        }
        let idx = match &map {
            None => v.index,
            Some(map) => map[v.layer][v.index].expect("dimension-k vertices survive"),
        };
        let exact = marginals[v.layer][idx];
        out.push(ReachBoundReport { vertex: v, k, exact, bound, margin: bound - exact, ok: exact <= bound + 1e-12, trimmed });
    }
    Ok(out)
}

/// The bound check for a single vertex, with `k = dim(w(v))`.
pub fn verify_reach_bound(
    program: &BranchingProgram,
    labels: &AffineLabels,
    v: VertexId,
    trim: bool,
    cfg: &DpConfig,
) -> Result<ReachBoundReport> {
    let k = labels.label(v).dim().ok_or(Error::Domain("target vertex is labelled with the empty set"))?;
    verify_reach_bounds(program, labels, k, trim, cfg)?
        .into_iter()
        .find(|r| r.vertex == v)
        .ok_or_else(|| Error::Internal("target vertex missing from report".into()))
}

// ---------------------------------------------------------------------------
// Orthogonal-space traces
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrthogonalTrace {
    /// `dim S_i` along the path.
    pub orthogonal_dims: Vec<usize>,
    /// `Z_i = dim(S_i ∩ s)`.
    pub z: Vec<usize>,
    /// `n - k` for the target.
    pub target_codim: usize,
}

impl OrthogonalTrace {
    pub fn new(labels: &AffineLabels, path: &[VertexId], target: VertexId) -> Result<Self> {
        let s = labels.label(target).orthogonal_space()?;
        let mut orthogonal_dims = Vec::with_capacity(path.len());
        let mut z = Vec::with_capacity(path.len());
        for &v in path {
            let si = labels.label(v).orthogonal_space()?;
            orthogonal_dims.push(si.dim());
            z.push(si.intersection(&s)?.dim());
        }
        Ok(OrthogonalTrace { orthogonal_dims, z, target_codim: s.dim() })
    }

    /// `Z_0 = 0` and `Z_i ≤ Z_{i-1} + 1`.
    pub fn steps_ok(&self) -> bool {
        self.z.first().is_none_or(|&z0| z0 == 0) && self.z.windows(2).all(|w| w[1] <= w[0] + 1)
    }

    pub fn reaches_codim(&self) -> bool {
        self.z.contains(&self.target_codim)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub paths: u64,
    pub traces: u64,
    pub step_violations: u64,
    pub codim_violations: u64,
}

/// For every key, every sequence of sample vectors, and every vertex `v` on
/// the resulting path with a proper label, checks the trace invariants of
/// the path prefix ending at `v`.
pub fn exhaustive_trace_check(program: &BranchingProgram, labels: &AffineLabels) -> Result<TraceReport> {
    let n = program.n();
    let paths_bound = (1u128 << n) * (1u128 << (n * program.length()));
    if paths_bound > 1 << 22 {
        return Err(Error::Budget { what: "exhaustive trace enumeration", needed: paths_bound, budget: 1 << 22 });
    }
    let mut report = TraceReport { paths: 0, traces: 0, step_violations: 0, codim_violations: 0 };
    for x in 0..1u32 << n {
        let mut path = vec![VertexId::START];
        trace_walk(program, labels, x, &mut path, &mut report)?;
    }
    Ok(report)
}

fn trace_walk(
    program: &BranchingProgram,
    labels: &AffineLabels,
    x: u32,
    path: &mut Vec<VertexId>,
    report: &mut TraceReport,
) -> Result<()> {
    let v = *path.last().expect("non-empty path");
    if labels.label(v).dim().is_some_and(|d| d < program.n()) {
        let trace = OrthogonalTrace::new(labels, path, v)?;
        report.traces += 1;
        report.step_violations += u64::from(!trace.steps_ok());
        report.codim_violations += u64::from(!trace.reaches_codim());
    }
    match program.node(v) {
        Node::Leaf(_) => report.paths += 1,
        Node::Inner(targets) => {
            for a in 0..1u32 << program.n() {
                let e = crate::branching::edge_index(a, crate::gf2::parity(a & x));
                path.push(VertexId::new(v.layer + 1, targets[e] as usize));
                trace_walk(program, labels, x, path, report)?;
                path.pop();
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Theorem exponent
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport {
    pub c: f64,
    pub alpha: f64,
    pub n: f64,
    pub log2_m: f64,
    pub log2_d: f64,
    pub k: f64,
    pub r: f64,
    /// `log2` of `4n · 2^{Σ(r - i/2)} · d · m`, the count of dimension-`k` vertices.
    pub log2_vertex_count: f64,
    /// `log2` of `m^{n-k} · 2^{Σ(n - 2k - i)}`, the reach bound per vertex.
    pub log2_reach_bound: f64,
    /// `log2` of their product.
    pub log2_final_bound: f64,
    /// The product itself; `None` if it overflows.
    pub final_bound: Option<f64>,
    /// `c + 3α/5 - 1/20 + 3/(20n)`.
    pub exponent_coefficient: f64,
    /// `log2` of `4nm · 2^{n²·coefficient}`.
    pub log2_closed_form: f64,
    /// `α < (5/3)(1/20 - c)`.
    pub condition_holds: bool,
    pub alpha_threshold: f64,
    pub exponent_negative: bool,
    pub bound_nonnegative_exponent: bool,
}

/// Evaluates the proof chain with `k = 4n/5`, `r = (1/2 + 2α)n`. `log2_m`
/// and `log2_d` default to `αn` and `cn²`. Sums over `i < n - k` are taken
/// in closed form with the real `n - k = n/5`.
pub fn theorem_exponent(c: f64, alpha: f64, n: f64, log2_m: Option<f64>, log2_d: Option<f64>) -> Result<ExponentReport> {
    if !(n > 0.0) || !c.is_finite() || !alpha.is_finite() {
        return Err(Error::parameter("n must be positive and c, α finite"));
    }
    let log2_m = log2_m.unwrap_or(alpha * n);
    let log2_d = log2_d.unwrap_or(c * n * n);
    let k = 0.8 * n;
    let r = (0.5 + 2.0 * alpha) * n;
    let l = n - k;
    let sum_r = l * r - l * (l - 1.0) / 4.0;
    let sum_reach = l * (n - 2.0 * k) - l * (l - 1.0) / 2.0;
    let log2_vertex_count = (4.0 * n).log2() + sum_r + log2_d + log2_m;
    let log2_reach_bound = l * log2_m + sum_reach;
    let log2_final_bound = log2_vertex_count + log2_reach_bound;
    let exponent_coefficient = c + 0.6 * alpha - 0.05 + 3.0 / (20.0 * n);
    let log2_closed_form = (4.0 * n).log2() + log2_m + n * n * exponent_coefficient;
    let final_bound = Some(log2_final_bound.exp2()).filter(|v| v.is_finite());
    let alpha_threshold = 5.0 / 3.0 * (0.05 - c);
    Ok(ExponentReport {
        c,
        alpha,
        n,
        log2_m,
        log2_d,
        k,
        r,
        log2_vertex_count,
        log2_reach_bound,
        log2_final_bound,
        final_bound,
        exponent_coefficient,
        log2_closed_form,
        condition_holds: alpha < alpha_threshold,
        alpha_threshold,
        exponent_negative: exponent_coefficient < 0.0,
        bound_nonnegative_exponent: log2_final_bound >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::exhaustive_soundness;
    use crate::gf2::BitVector;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    #[test]
    fn bound_examples() {
        assert_eq!(probaffine_bound(4, 2, 3).unwrap(), 0.5);
        assert_eq!(probaffine_bound(6, 3, 4).unwrap(), 0.28125);
        assert!(probaffine_bound(4, 2, 4).is_err());
        assert!(probaffine_bound(4, 0, 2).is_err());
        // direct product form
        for n in 1..8usize {
            for k in 0..n {
                for m in 1..5usize {
                    let mut direct = (m as f64).powi((n - k) as i32);
                    for j in 0..n - k {
                        direct *= (n as f64 - 2.0 * k as f64 - j as f64).exp2();
                    }
                    let got = probaffine_bound(n, m, k).unwrap();
                    assert!((got - direct).abs() <= 1e-12 * direct.max(1.0), "{n} {m} {k}");
                }
            }
        }
    }

    /// n = 3, m = 2: records `a₁·x = b₁` only when `a₁ = e₁`.
    fn record_on_e1() -> (BranchingProgram, AffineLabels) {
        let n = 3;
        let full = AffineSubspace::full(n).unwrap();
        let fan = 1 << (n + 1);
        let e1 = 1u32;
        let start: Vec<u32> = (0..fan as u32).map(|e| if e >> 1 == e1 { 1 + (e & 1) } else { 0 }).collect();
        let h0 = full.intersect_word(e1, false);
        let h1 = full.intersect_word(e1, true);
        let layer1 = vec![Node::Inner(vec![0; fan]), Node::Inner(vec![1; fan]), Node::Inner(vec![2; fan])];
        let layer2 = vec![Node::Leaf(full.clone()), Node::Leaf(h0.clone()), Node::Leaf(h1.clone())];
        let p = BranchingProgram::new(n, 3, vec![vec![Node::Inner(start)], layer1, layer2]).unwrap();
        let labels = AffineLabels::new(&p, vec![vec![full.clone()], vec![full.clone(), h0.clone(), h1.clone()], vec![
            full, h0, h1,
        ]])
        .unwrap();
        (p, labels)
    }

    #[test]
    fn reach_bound_on_recording_program() {
        let (p, labels) = record_on_e1();
        assert!(validate_affine(&p, &labels).ok);
        let reports = verify_reach_bounds(&p, &labels, 2, false, &DpConfig::default()).unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            // Pr[a₁ = e₁, b₁ = b] = 1/8 · 1/2
            assert_eq!(r.exact, 1.0 / 16.0);
            assert_eq!(r.bound, probaffine_bound(3, 2, 2).unwrap());
            assert!(r.ok);
        }
        let single = verify_reach_bound(&p, &labels, VertexId::new(1, 1), false, &DpConfig::default()).unwrap();
        assert_eq!(single.exact, 1.0 / 16.0);
        assert!(verify_reach_bound(&p, &labels, VertexId::START, false, &DpConfig::default()).is_err());
    }

    #[test]
    fn unsound_program_fails_before_bound() {
        let (p, mut labels) = record_on_e1();
        labels.set(VertexId::new(1, 1), AffineSubspace::point(bv("000")));
        let err = verify_reach_bounds(&p, &labels, 2, false, &DpConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(m) if m.contains("sound")));
    }

    #[test]
    fn trimming_low_dimension_vertices() {
        // record every equation at both steps: dimensions drop to 1 at layer 2
        let n = 2;
        let full = AffineSubspace::full(n).unwrap();
        let fan = 1usize << (n + 1);
        let mut layer1 = Vec::new();
        let mut lab1 = Vec::new();
        for e in 0..fan as u32 {
            lab1.push(full.intersect_word(e >> 1, e & 1 == 1));
        }
        let mut lab2 = Vec::new();
        for (u, w) in lab1.iter().enumerate() {
            let mut targets = Vec::new();
            for e in 0..fan as u32 {
                let ws = w.intersect_word(e >> 1, e & 1 == 1);
                let idx = lab2.iter().position(|x| *x == ws).unwrap_or_else(|| {
                    lab2.push(ws.clone());
                    lab2.len() - 1
                });
                targets.push(idx as u32);
            }
            let _ = u;
            layer1.push(Node::Inner(targets));
        }
        let layer2: Vec<Node> = lab2.iter().cloned().map(Node::Leaf).collect();
        let width = lab2.len().max(fan);
        let p = BranchingProgram::new(n, width, vec![vec![Node::Inner((0..fan as u32).collect())], layer1, layer2])
            .unwrap();
        let labels = AffineLabels::new(&p, vec![vec![full.clone()], lab1, lab2]).unwrap();
        assert!(validate_affine(&p, &labels).ok);
        assert!(verify_reach_bounds(&p, &labels, 1, false, &DpConfig::default()).is_err());
        let reports = verify_reach_bounds(&p, &labels, 1, true, &DpConfig::default()).unwrap();
        assert!(!reports.is_empty());
        assert!(reports.iter().all(|r| r.ok && r.trimmed));
        let t = trim_to_dimension(&p, &labels, 1).unwrap();
        assert!(validate_affine(&t.program, &t.labels).ok);
        assert!(t.labels.labels().iter().flatten().all(|w| w.dim().unwrap() >= 1));
        // first dimension-1 vertices: the layer-1 hyperplanes carry 3/4 of the mass
        let total: f64 = reports.iter().filter(|r| r.vertex.layer == 1).map(|r| r.exact).sum();
        assert!((total - 0.75).abs() < 1e-12);
        let soundness = exhaustive_soundness(&t.program, &t.labels).unwrap();
        assert_eq!(soundness.violations, 0);
    }

    #[test]
    fn traces_on_recording_program() {
        let (p, labels) = record_on_e1();
        let report = exhaustive_trace_check(&p, &labels).unwrap();
        assert_eq!(report.paths, 8 * 64);
        assert!(report.traces > 0);
        assert_eq!(report.step_violations, 0);
        assert_eq!(report.codim_violations, 0);
        let t = OrthogonalTrace::new(&labels, &[VertexId::START, VertexId::new(1, 1)], VertexId::new(1, 1)).unwrap();
        assert_eq!(t.z, vec![0, 1]);
        assert!(t.steps_ok() && t.reaches_codim());
    }

    #[test]
    fn exponent_examples() {
        let r = theorem_exponent(0.05, 0.01, 100.0, None, None).unwrap();
        assert!(!r.condition_holds);
        let r = theorem_exponent(0.04, 0.01, 100.0, None, None).unwrap();
        assert!(r.condition_holds);
        assert!(r.exponent_negative);
        assert!((r.alpha_threshold - 1.0 / 60.0).abs() < 1e-15);
        assert!(r.log2_final_bound < 0.0);
        let r = theorem_exponent(0.04, 0.01, 5.0, None, None).unwrap();
        assert!(!r.exponent_negative);
        assert!(r.bound_nonnegative_exponent);
    }

    #[test]
    fn closed_form_matches_the_chain() {
        for &n in &[5.0, 10.0, 37.0, 100.0, 1000.0] {
            for &c in &[0.0, 0.01, 0.04, 0.2] {
                for &alpha in &[0.001, 0.01, 0.1] {
                    let r = theorem_exponent(c, alpha, n, None, None).unwrap();
                    let tol = 1e-9 * r.log2_closed_form.abs().max(1.0);
                    assert!((r.log2_final_bound - r.log2_closed_form).abs() < tol, "{n} {c} {alpha}: {r:?}");
                }
            }
        }
    }
}
