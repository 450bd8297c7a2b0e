//! Matching operations across the op paths of a selection.
//!
//! Two aligners live here. [`progressive_lcs`] is the cheap one: seed with
//! the longest path, fold each further path in by a longest common
//! subsequence over operation names. [`min_cost_alignment`] searches every
//! alignment of a small selection via dynamic programming over the lattice of
//! path positions and returns one whose slot variables are cheapest.

use std::collections::{BTreeSet, HashMap};

use crate::store::Operation;

use super::cost::{slot_cost, Cost};

/// `columns[s][p]` is the index into path `p` of the operation placed in
/// slot `s`, or `None` when path `p` has no operation there.
pub type Columns = Vec<Vec<Option<usize>>>;

/// Work ceiling (states × subsets) for the exact aligner.
pub const EXACT_BUDGET: usize = 8_000_000;
const EXACT_MAX_PATHS: usize = 16;

struct Slot {
    name: String,
    cells: Vec<Option<usize>>,
}

/// Progressive LCS alignment.
///
/// Slots are labelled by the name of the first operation placed in them.
/// When several LCS matchings exist, path operations match the earliest
/// slots possible. Unmatched operations open new slots just before the next
/// matched slot.
pub fn progressive_lcs(paths: &[&[Operation]]) -> Columns {
    if paths.is_empty() {
        return Vec::new();
    }
    let n = paths.len();
    let seed = (0..n)
        .max_by(|&a, &b| paths[a].len().cmp(&paths[b].len()).then(b.cmp(&a)))
        .expect("non-empty");
    let mut slots: Vec<Slot> = paths[seed]
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let mut cells = vec![None; n];
            cells[seed] = Some(i);
            Slot {
                name: op.name.clone(),
                cells,
            }
        })
        .collect();

    for p in (0..n).filter(|&p| p != seed) {
        let path = paths[p];
        let matches = lcs_matches(&slots, path);
        let mut merged: Vec<Slot> = Vec::with_capacity(slots.len() + path.len());
        let mut old = slots.into_iter().enumerate().peekable();
        let mut j = 0;
        for (si, pj) in matches
            .iter()
            .copied()
            .chain(std::iter::once((usize::MAX, path.len())))
        {
            while let Some((i, _)) = old.peek() {
                if *i >= si {
                    break;
                }
                merged.push(old.next().expect("peeked").1);
            }
            while j < pj {
                let mut cells = vec![None; n];
                cells[p] = Some(j);
                merged.push(Slot {
                    name: path[j].name.clone(),
                    cells,
                });
                j += 1;
            }
            if si != usize::MAX {
                let (_, mut slot) = old.next().expect("matched slot exists");
                slot.cells[p] = Some(pj);
                merged.push(slot);
                j = pj + 1;
            }
        }
        slots = merged;
    }
    slots.into_iter().map(|s| s.cells).collect()
}

/// LCS between slot labels and path names as `(slot, path index)` pairs.
fn lcs_matches(slots: &[Slot], path: &[Operation]) -> Vec<(usize, usize)> {
    let (n, m) = (slots.len(), path.len());
    // suffix table: l[i][j] = LCS(slots[i..], path[j..])
    let mut l = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            l[i][j] = if slots[i].name == path[j].name {
                1 + l[i + 1][j + 1]
            } else {
                l[i + 1][j].max(l[i][j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(l[0][0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if slots[i].name == path[j].name && l[i][j] == 1 + l[i + 1][j + 1] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if l[i][j + 1] == l[i][j] {
            // Leaving the path op unmatched keeps slot i free for a later
            // op, so matches land on the earliest slots.
            j += 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Minimum-cost alignment, or `None` when the lattice exceeds the budget.
///
/// Every alignment is a monotone walk through the lattice of path positions
/// where each step advances a non-empty subset of paths; the step's cost is
/// the cost of the slot it creates. Costs compare lexicographically on
/// (variable count, complexity).
pub fn min_cost_alignment(paths: &[&[Operation]]) -> Option<Columns> {
    let k = paths.len();
    if k == 0 {
        return Some(Vec::new());
    }
    if k > EXACT_MAX_PATHS {
        return None;
    }
    let mut strides = Vec::with_capacity(k);
    let mut total: usize = 1;
    for p in paths {
        strides.push(total);
        total = total.checked_mul(p.len() + 1)?;
    }
    if total.checked_mul(1usize << k)? > EXACT_BUDGET {
        return None;
    }

    let interner = Interner::new(paths);
    const UNSET: Cost = Cost {
        count: u32::MAX,
        complexity: u32::MAX,
    };
    let mut best = vec![UNSET; total];
    let mut back: Vec<(u32, u32)> = vec![(0, 0); total];
    best[0] = Cost::ZERO;
    let mut pos = vec![0usize; k];
    let mut column: Vec<Option<&Operation>> = vec![None; k];
    let mut memo: HashMap<Vec<u32>, Cost> = HashMap::new();

    for s in 0..total {
        if best[s] == UNSET {
            continue;
        }
        let mut rem = s;
        let mut avail = 0u32;
        for i in 0..k {
            pos[i] = rem % (paths[i].len() + 1);
            rem /= paths[i].len() + 1;
            if pos[i] < paths[i].len() {
                avail |= 1 << i;
            }
        }
        let mut sub = avail;
        while sub != 0 {
            let mut target = s;
            let mut key: Vec<u32> = Vec::with_capacity(k);
            for i in 0..k {
                if sub & (1 << i) != 0 {
                    target += strides[i];
                    column[i] = Some(&paths[i][pos[i]]);
                    key.push(interner.sig[i][pos[i]]);
                } else {
                    column[i] = None;
                    key.push(u32::MAX);
                }
            }
            // Slot cost depends only on which operations share the slot.
            let c = *memo.entry(key).or_insert_with(|| slot_cost(&column));
            let cand = best[s] + c;
            if cand < best[target] {
                best[target] = cand;
                back[target] = (s as u32, sub);
            }
            sub = (sub - 1) & avail;
        }
    }

    let mut cols: Columns = Vec::new();
    let mut s = total - 1;
    while s != 0 {
        let (prev, sub) = back[s];
        let mut rem = prev as usize;
        let mut col = vec![None; k];
        for (i, cell) in col.iter_mut().enumerate() {
            let p = rem % (paths[i].len() + 1);
            rem /= paths[i].len() + 1;
            if sub & (1 << i) != 0 {
                *cell = Some(p);
            }
        }
        cols.push(col);
        s = prev as usize;
    }
    cols.reverse();
    Some(cols)
}

/// Interned operation signatures per path position.
struct Interner {
    sig: Vec<Vec<u32>>,
}

impl Interner {
    fn new(paths: &[&[Operation]]) -> Self {
        let mut ids: HashMap<String, u32> = HashMap::new();
        let sig = paths
            .iter()
            .map(|p| {
                p.iter()
                    .map(|op| {
                        let next = ids.len() as u32;
                        *ids.entry(op.signature()).or_insert(next)
                    })
                    .collect()
            })
            .collect();
        Interner { sig }
    }
}

/// Checks that every path's non-empty cells list its operations in order.
pub fn is_valid(columns: &Columns, lens: &[usize]) -> bool {
    let mut next = vec![0usize; lens.len()];
    for col in columns {
        if col.len() != lens.len() || col.iter().all(Option::is_none) {
            return false;
        }
        for (p, cell) in col.iter().enumerate() {
            if let Some(i) = cell {
                if *i != next[p] {
                    return false;
                }
                next[p] += 1;
            }
        }
    }
    next == lens
}

/// Distinct operation names present in a column.
pub(crate) fn column_names<'a>(col: &[Option<&'a Operation>]) -> BTreeSet<&'a str> {
    col.iter().flatten().map(|o| o.name.as_str()).collect()
}
