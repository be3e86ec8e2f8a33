use super::maxflow::{max_flow_min_cut, FlowNetwork};
use super::{energy_unchecked, LabelField, UnaryCosts};
use crate::error::{Error, Result};

/// Result of an α-expansion run.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub labels: LabelField,
    /// Energy of the initial labeling followed by the energy after every
    /// accepted move.
    pub energy_trace: Vec<f64>,
    /// Full passes over the label set that were executed.
    pub cycles: usize,
}

/// Approximate Potts MAP labeling; see [`alpha_expansion_traced`].
pub fn alpha_expansion(unary: &UnaryCosts, beta: f64, init: &LabelField, max_cycles: usize) -> Result<LabelField> {
    alpha_expansion_traced(unary, beta, init, max_cycles).map(|e| e.labels)
}

/// Runs expansion moves for α = 0, 1, …, C-1 in turn, accepting a move only
/// if it strictly lowers the Potts energy, until a full pass changes nothing
/// or `max_cycles` passes have run.
pub fn alpha_expansion_traced(
    unary: &UnaryCosts,
    beta: f64,
    init: &LabelField,
    max_cycles: usize,
) -> Result<Expansion> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Argument(format!(
            "Potts weight must be finite and >= 0, got {beta}"
        )));
    }
    if init.len() != unary.sites() {
        return Err(Error::Dimension(format!(
            "{} initial labels for {} unary sites",
            init.len(),
            unary.sites()
        )));
    }
    init.ensure_classes(unary.classes())?;

    let mut labels = init.clone();
    let mut energy = energy_unchecked(&labels, unary, beta);
    let mut trace = vec![energy];
    let mut cycles = 0;
    let mut scratch = Vec::new();
    while cycles < max_cycles {
        cycles += 1;
        let mut improved = false;
        for alpha in 0..unary.classes() {
            let Some(proposal) = expansion_move(&labels, unary, beta, alpha, &mut scratch)? else {
                continue;
            };
            let e = energy_unchecked(&proposal, unary, beta);
            if e < energy {
                labels = proposal;
                energy = e;
                trace.push(e);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(Expansion {
        labels,
        energy_trace: trace,
        cycles,
    })
}

/// Optimal labeling among those where every site keeps its label or
/// switches to `alpha`. Returns `None` when every site already has `alpha`.
fn expansion_move(
    labels: &LabelField,
    unary: &UnaryCosts,
    beta: f64,
    alpha: usize,
    node_of: &mut Vec<usize>,
) -> Result<Option<LabelField>> {
    let (rows, cols) = (labels.grid_rows(), labels.grid_cols());
    let current = labels.labels();
    let n = current.len();

    // Sites already labeled α cannot change and are left out of the graph.
    node_of.clear();
    let mut vars = 0;
    for &l in current {
        node_of.push(if l == alpha { usize::MAX } else { vars });
        if l != alpha {
            vars += 1;
        }
    }
    if vars == 0 {
        return Ok(None);
    }
    let (s, t) = (vars, vars + 1);
    let mut net = FlowNetwork::new(vars + 2, s, t)?;
    // e0: cost of keeping the current label, e1: cost of switching to α.
    let mut e0 = vec![0.0; vars];
    let mut e1 = vec![0.0; vars];
    for (i, &l) in current.iter().enumerate() {
        let v = node_of[i];
        if v != usize::MAX {
            e0[v] += unary.cost(i, l);
            e1[v] += unary.cost(i, alpha);
        }
    }

    if beta > 0.0 {
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let right = (c + 1 < cols).then(|| i + 1);
                let down = (r + 1 < rows).then(|| i + cols);
                for j in [right, down].into_iter().flatten() {
                    pairwise(&mut net, &mut e0, &mut e1, node_of, current, beta, i, j)?;
                }
            }
        }
    }

    for v in 0..vars {
        let diff = e1[v] - e0[v];
        if diff > 0.0 {
            net.add_edge(s, v, diff, 0.0)?;
        } else if diff < 0.0 {
            net.add_edge(v, t, -diff, 0.0)?;
        }
    }

    let cut = max_flow_min_cut(&net);
    let mut next = current.to_vec();
    for i in 0..n {
        let v = node_of[i];
        // Sites that can still reach the sink switch; ties keep their label.
        if v != usize::MAX && cut.sink_side[v] {
            next[i] = alpha;
        }
    }
    Ok(Some(LabelField::new(rows, cols, next)?))
}

/// Adds the Potts term of neighbors `i`, `j` to the expansion graph, with
/// `x = 1` meaning "switch to α" (sink side).
#[allow(clippy::too_many_arguments)]
fn pairwise(
    net: &mut FlowNetwork,
    e0: &mut [f64],
    e1: &mut [f64],
    node_of: &[usize],
    current: &[usize],
    beta: f64,
    i: usize,
    j: usize,
) -> Result<()> {
    let (vi, vj) = (node_of[i], node_of[j]);
    match (vi != usize::MAX, vj != usize::MAX) {
        (false, false) => {}
        // The fixed neighbor holds α: disagreement only if the site keeps
        // its (non-α) label.
        (true, false) => e0[vi] += beta,
        (false, true) => e0[vj] += beta,
        (true, true) => {
            // E(00)=A, E(01)=E(10)=β, E(11)=0, written as
            // A(1-x_i) + βx_i - βx_j + (2β-A)(1-x_i)x_j.
            let a = if current[i] != current[j] { beta } else { 0.0 };
            e0[vi] += a;
            e1[vi] += beta;
            e1[vj] -= beta;
            net.add_edge(vi, vj, 2.0 * beta - a, 0.0)?;
        }
    }
    Ok(())
}
