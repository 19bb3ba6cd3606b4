//! 0-1 knapsack: exact dynamic programming for tables up to
//! [`EXACT_CELL_LIMIT`] cells, density greedy with a best-single-item fallback
//! above that.

use serde::{Deserialize, Serialize};

/// Largest `items × (capacity + 1)` table solved exactly.
pub const EXACT_CELL_LIMIT: u64 = 10_000_000;

/// Values are scaled by this factor and rounded before the exact DP.
pub const VALUE_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub weight: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Indices into the input slice, ascending.
    pub chosen: Vec<usize>,
    pub total_weight: u64,
    pub total_value: f64,
    pub mode: SolverMode,
}

pub fn scaled_value(v: f64) -> u64 {
    (v.max(0.0) * VALUE_SCALE).round() as u64
}

/// Picks the solver for the instance size.
pub fn choose_mode(n_items: usize, capacity: u64) -> SolverMode {
    let cells = (n_items as u64).saturating_mul(capacity.saturating_add(1));
    if cells <= EXACT_CELL_LIMIT {
        SolverMode::Exact
    } else {
        SolverMode::Greedy
    }
}

/// Solves the instance. Items are visited in slice order for tie-breaking:
/// among optimal subsets, earlier items are included whenever possible.
pub fn solve(items: &[Item], capacity: u64) -> Solution {
    let total: u64 = items.iter().map(|i| i.weight).sum();
    let mode = choose_mode(items.len(), capacity.min(total));
    if total <= capacity {
        return finish(items, (0..items.len()).collect(), mode);
    }
    match mode {
        SolverMode::Exact => solve_exact(items, capacity),
        SolverMode::Greedy => solve_greedy(items, capacity),
    }
}

fn finish(items: &[Item], chosen: Vec<usize>, mode: SolverMode) -> Solution {
    Solution {
        total_weight: chosen.iter().map(|&i| items[i].weight).sum(),
        total_value: chosen.iter().map(|&i| items[i].value).sum(),
        chosen,
        mode,
    }
}

/// Exact DP over scaled integer values.
///
/// Items are processed back to front so that `best[w]` after visiting item
/// `i` is the optimum over the suffix `i..`. Reconstruction then walks front
/// to back and takes item `i` whenever that still reaches the optimum.
pub fn solve_exact(items: &[Item], capacity: u64) -> Solution {
    let n = items.len();
    let cap = capacity.min(items.iter().map(|i| i.weight).sum()) as usize;
    let width = cap + 1;
    let words_per_row = width.div_ceil(64);
    let mut take = vec![0u64; n * words_per_row];
    let mut best = vec![0u64; width];

    for i in (0..n).rev() {
        let w = items[i].weight as usize;
        let v = scaled_value(items[i].value);
        if w > cap {
            continue;
        }
        let row = &mut take[i * words_per_row..(i + 1) * words_per_row];
        for c in (w..width).rev() {
            let with = best[c - w] + v;
            if with >= best[c] {
                best[c] = with;
                row[c / 64] |= 1 << (c % 64);
            }
        }
    }

    let mut chosen = Vec::new();
    let mut c = cap;
    for i in 0..n {
        if take[i * words_per_row + c / 64] & (1 << (c % 64)) != 0 {
            chosen.push(i);
            c -= items[i].weight as usize;
        }
    }
    finish(items, chosen, SolverMode::Exact)
}

/// Greedy by value density with the best single fitting item as fallback.
/// The result is never worse than half the optimum.
pub fn solve_greedy(items: &[Item], capacity: u64) -> Solution {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let density = |i: usize| {
        if items[i].weight == 0 {
            f64::INFINITY
        } else {
            items[i].value / items[i].weight as f64
        }
    };
    order.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));

    let mut chosen = Vec::new();
    let mut used = 0u64;
    let mut value = 0.0;
    for i in order {
        if used + items[i].weight <= capacity {
            used += items[i].weight;
            value += items[i].value;
            chosen.push(i);
        }
    }

    let single = (0..items.len())
        .filter(|&i| items[i].weight <= capacity)
        .max_by(|&a, &b| items[a].value.total_cmp(&items[b].value).then(b.cmp(&a)));
    if let Some(s) = single {
        if items[s].value > value {
            return finish(items, vec![s], SolverMode::Greedy);
        }
    }
    chosen.sort_unstable();
    finish(items, chosen, SolverMode::Greedy)
}
