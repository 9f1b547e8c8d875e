//! Protograph base matrices and their expansion into labeled parity-check matrices.
//!
//! A base matrix lists edge multiplicities between check-node types (rows) and
//! variable-node types (columns). The search space of base matrices is reduced
//! to minimal sets (no two elements related by a row and/or column
//! permutation) through [`BaseMatrix::canonical_form`]. Expansion to a code uses
//! a circulant progressive-edge-growth lifting followed by i.i.d. uniform
//! nonzero labels.

use crate::error::{Error, Result};
use crate::galois::{Field, FieldElement};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::fmt;

/// `m_b x n_b` matrix of non-negative edge multiplicities.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BaseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<u32>,
}

impl BaseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<u32>) -> Result<BaseMatrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidBaseMatrix("empty base matrix".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Ok(BaseMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<BaseMatrix> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidBaseMatrix("ragged rows".into()));
        }
        BaseMatrix::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.entries.chunks(self.cols).map(<[u32]>::to_vec).collect()
    }

    pub fn column_weight(&self, j: usize) -> u32 {
        (0..self.rows).map(|i| self.get(i, j)).sum()
    }

    pub fn row_weight(&self, i: usize) -> u32 {
        (0..self.cols).map(|j| self.get(i, j)).sum()
    }

    pub fn total_edges(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }

    /// `(n_b - m_b) / n_b`.
    pub fn design_rate(&self) -> f64 {
        (self.cols as f64 - self.rows as f64) / self.cols as f64
    }

    /// Fails unless the design rate lies strictly between 0 and 1.
    pub fn check_rate(&self) -> Result<()> {
        if self.cols > self.rows {
            Ok(())
        } else {
            Err(Error::InvalidBaseMatrix(format!(
                "{}x{} base matrix has design rate {} (need 0 < R < 1)",
                self.rows,
                self.cols,
                self.design_rate()
            )))
        }
    }

    /// True if the matrix has a zero-weight column or more weight-1 columns than rows.
    pub fn is_expurgated(&self) -> bool {
        let weights: Vec<u32> = (0..self.cols).map(|j| self.column_weight(j)).collect();
        weights.contains(&0) || weights.iter().filter(|&&w| w == 1).count() > self.rows
    }

    fn permuted_rows(&self, perm: &[usize]) -> Vec<Vec<u32>> {
        // column vectors of the row-permuted matrix
        (0..self.cols)
            .map(|j| perm.iter().map(|&i| self.get(i, j)).collect())
            .collect()
    }

    /// Representative of the row/column permutation class.
    ///
    /// Columns are sorted in descending lexicographic order, and the result is
    /// the lexicographically largest (row-major) over all row permutations, so
    /// `[1 2]` becomes `[2 1]`.
    pub fn canonical_form(&self) -> BaseMatrix {
        let mut best: Option<Vec<u32>> = None;
        for_each_permutation(self.rows, |perm| {
            let mut cols = self.permuted_rows(perm);
            cols.sort_unstable_by(|a, b| b.cmp(a));
            let flat: Vec<u32> = (0..self.rows)
                .flat_map(|i| cols.iter().map(move |c| c[i]))
                .collect();
            if best.as_ref().is_none_or(|b| flat > *b) {
                best = Some(flat);
            }
        });
        BaseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: best.expect("at least one permutation"),
        }
    }

    pub fn is_equivalent(&self, other: &BaseMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.canonical_form() == other.canonical_form()
    }

    /// Parses `"m_b n_b"` followed by `m_b` rows of integers.
    pub fn parse(text: &str) -> Result<BaseMatrix> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims = parse_numbers::<usize>(header, line)?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: "header must be \"m_b n_b\"".into(),
            });
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line, text) = lines.next().ok_or(Error::Parse {
                line,
                msg: "missing rows".into(),
            })?;
            let row = parse_numbers::<u32>(text, line)?;
            if row.len() != cols {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {cols} entries, found {}", row.len()),
                });
            }
            entries.extend(row);
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                msg: "trailing data".into(),
            });
        }
        BaseMatrix::new(rows, cols, entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for row in self.entries.chunks(self.cols) {
            let r: Vec<String> = row.iter().map(u32::to_string).collect();
            s.push_str(&r.join(" "));
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for BaseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .entries
            .chunks(self.cols)
            .map(|r| r.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
            .collect();
        write!(f, "[{}]", rows.join("; "))
    }
}

fn parse_numbers<T: std::str::FromStr>(text: &str, line: usize) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number {t:?}"),
            })
        })
        .collect()
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// All-zero matrix with a single unit entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SingleEntryMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row: usize,
    pub col: usize,
}

impl SingleEntryMatrix {
    pub fn to_base(self) -> BaseMatrix {
        let mut entries = vec![0; self.rows * self.cols];
        entries[self.row * self.cols + self.col] = 1;
        BaseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn add_to(self, b: &BaseMatrix) -> BaseMatrix {
        debug_assert_eq!((b.rows, b.cols), (self.rows, self.cols));
        let mut out = b.clone();
        out.entries[self.row * self.cols + self.col] += 1;
        out
    }
}

/// Keeps the first representative of each permutation class, in input order.
pub fn minimal_set(candidates: impl IntoIterator<Item = BaseMatrix>) -> Vec<BaseMatrix> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for b in candidates {
        if seen.insert(b.canonical_form()) {
            out.push(b);
        }
    }
    out
}

/// Expurgated minimal set of `m_b x n_b` base matrices with entries in `0..p_max`.
///
/// Elements are returned in canonical form, sorted.
pub fn enumerate_candidates(m_b: usize, n_b: usize, p_max: u32) -> Vec<BaseMatrix> {
    assert!(m_b >= 1 && n_b >= 1 && p_max >= 2, "invalid enumeration dimensions");
    let size = m_b * n_b;
    let mut entries = vec![0u32; size];
    let mut classes = HashSet::new();
    loop {
        let b = BaseMatrix {
            rows: m_b,
            cols: n_b,
            entries: entries.clone(),
        };
        if !b.is_expurgated() {
            classes.insert(b.canonical_form());
        }
        // odometer increment
        let mut k = 0;
        while k < size {
            entries[k] += 1;
            if entries[k] < p_max {
                break;
            }
            entries[k] = 0;
            k += 1;
        }
        if k == size {
            break;
        }
    }
    let mut out: Vec<BaseMatrix> = classes.into_iter().collect();
    out.sort();
    out
}

/// Outcome of the refinement construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    /// Expansion factor, the largest entry of the starting matrix.
    pub lifting: usize,
    /// The binary `l' m_b x l' n_b` expansion.
    pub expanded: BaseMatrix,
    /// Minimal set of `expanded + Q` over all single-entry matrices `Q`.
    pub candidates: Vec<BaseMatrix>,
}

/// Expands `b_star` by its largest entry and perturbs it by every single-entry matrix.
pub fn refine_candidates(b_star: &BaseMatrix) -> Result<Refinement> {
    let lifting = b_star.max_entry() as usize;
    if lifting == 0 {
        return Err(Error::InvalidBaseMatrix("all-zero base matrix".into()));
    }
    let expanded = CirculantLifting::peg(b_star, lifting)?.binary_base();
    let (rows, cols) = (expanded.rows, expanded.cols);
    let perturbed = (0..rows).flat_map(|row| (0..cols).map(move |col| (row, col))).map(
        |(row, col)| {
            SingleEntryMatrix {
                rows,
                cols,
                row,
                col,
            }
            .add_to(&expanded)
        },
    );
    let mut candidates: Vec<BaseMatrix> = minimal_set(perturbed)
        .into_iter()
        .map(|b| b.canonical_form())
        .collect();
    candidates.sort();
    Ok(Refinement {
        lifting,
        expanded,
        candidates,
    })
}

/// Lifting factor for a target length: nearest integer to `n_target / n_b`, halves rounded up.
pub fn lifting_factor(n_target: usize, n_b: usize) -> usize {
    (2 * n_target + n_b) / (2 * n_b)
}

/// One circulant block: check type `row`, variable type `col`, cyclic shift `shift`.
///
/// Check copy `c` of type `row` connects to variable copy `(c + shift) mod l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circulant {
    pub row: usize,
    pub col: usize,
    pub shift: usize,
}

/// Base matrix lifted with circulant permutations chosen by progressive edge growth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CirculantLifting {
    pub base: BaseMatrix,
    pub lifting: usize,
    pub circulants: Vec<Circulant>,
}

impl CirculantLifting {
    /// Greedy circulant PEG.
    ///
    /// Variable types are processed in order of increasing degree. For each
    /// edge, every unused `(check type, shift)` with remaining multiplicity is
    /// scored by the BFS distance from variable copy 0 to the check copy it
    /// would attach; the farthest (unreachable first) wins, then the check type
    /// with lowest current degree, then the smallest type index and shift.
    pub fn peg(base: &BaseMatrix, lifting: usize) -> Result<CirculantLifting> {
        if lifting == 0 {
            return Err(Error::InvalidParameter("lifting factor must be positive".into()));
        }
        for i in 0..base.rows {
            for j in 0..base.cols {
                if base.get(i, j) as usize > lifting {
                    return Err(Error::InfeasibleExpansion {
                        row: i,
                        col: j,
                        entry: base.get(i, j),
                        lifting,
                    });
                }
            }
        }
        let l = lifting;
        let (m, n) = (base.rows * l, base.cols * l);
        let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut chk_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut used = vec![vec![false; l]; base.rows * base.cols];
        let mut remaining: Vec<u32> = base.entries.clone();
        let mut chk_type_degree = vec![0usize; base.rows];
        let mut circulants = Vec::new();

        let mut order: Vec<usize> = (0..base.cols).collect();
        order.sort_by_key(|&j| base.column_weight(j));

        for j in order {
            for _ in 0..base.column_weight(j) {
                let mut best: Option<(usize, usize, usize, usize)> = None;
                for i in 0..base.rows {
                    if remaining[i * base.cols + j] == 0 {
                        continue;
                    }
                    for s in 0..l {
                        if used[i * base.cols + j][s] {
                            continue;
                        }
                        add_circulant(&mut var_adj, &mut chk_adj, l, i, j, s);
                        let girth = local_girth(&var_adj, &chk_adj, j * l);
                        remove_circulant(&mut var_adj, &mut chk_adj, l, i, j);
                        let key = (usize::MAX - girth, chk_type_degree[i], i, s);
                        if best.is_none_or(|b| key < b) {
                            best = Some(key);
                        }
                    }
                }
                let (_, _, i, s) = best.expect("remaining multiplicity implies a free shift");
                used[i * base.cols + j][s] = true;
                remaining[i * base.cols + j] -= 1;
                chk_type_degree[i] += 1;
                add_circulant(&mut var_adj, &mut chk_adj, l, i, j, s);
                circulants.push(Circulant { row: i, col: j, shift: s });
            }
        }
        Ok(CirculantLifting {
            base: base.clone(),
            lifting,
            circulants,
        })
    }

    pub fn num_checks(&self) -> usize {
        self.base.rows * self.lifting
    }

    pub fn num_variables(&self) -> usize {
        self.base.cols * self.lifting
    }

    /// `(check, variable)` positions of all ones, sorted.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let l = self.lifting;
        let mut pos: Vec<(usize, usize)> = self
            .circulants
            .iter()
            .flat_map(|c| (0..l).map(move |k| (c.row * l + k, c.col * l + (k + c.shift) % l)))
            .collect();
        pos.sort_unstable();
        pos
    }

    /// The lifted graph as a 0/1 base matrix.
    pub fn binary_base(&self) -> BaseMatrix {
        let (m, n) = (self.num_checks(), self.num_variables());
        let mut entries = vec![0; m * n];
        for (r, c) in self.positions() {
            entries[r * n + c] += 1;
        }
        BaseMatrix {
            rows: m,
            cols: n,
            entries,
        }
    }
}

fn add_circulant(var_adj: &mut [Vec<usize>], chk_adj: &mut [Vec<usize>], l: usize, i: usize, j: usize, s: usize) {
    for c in 0..l {
        let chk = i * l + c;
        let var = j * l + (c + s) % l;
        chk_adj[chk].push(var);
        var_adj[var].push(chk);
    }
}

/// Undoes the most recent [`add_circulant`] for block `(i, j)`.
fn remove_circulant(var_adj: &mut [Vec<usize>], chk_adj: &mut [Vec<usize>], l: usize, i: usize, j: usize) {
    for c in 0..l {
        chk_adj[i * l + c].pop();
    }
    for c in 0..l {
        var_adj[j * l + c].pop();
    }
}

/// Length of the shortest cycle through variable node `root` (`usize::MAX` if none).
///
/// Every node reached by the BFS is tagged with the root neighbour it descends
/// from; an edge joining two different branches closes a cycle through the root.
fn local_girth(var_adj: &[Vec<usize>], chk_adj: &[Vec<usize>], root: usize) -> usize {
    let nv = var_adj.len();
    let total = nv + chk_adj.len();
    let mut dist = vec![usize::MAX; total];
    let mut branch = vec![usize::MAX; total];
    let mut queue = VecDeque::new();
    dist[root] = 0;
    for (b, &c) in var_adj[root].iter().enumerate() {
        let node = nv + c;
        if dist[node] != usize::MAX {
            return 2; // parallel edge
        }
        dist[node] = 1;
        branch[node] = b;
        queue.push_back(node);
    }
    let mut best = usize::MAX;
    while let Some(u) = queue.pop_front() {
        if 2 * dist[u] >= best {
            break;
        }
        let neighbours: &[usize] = if u < nv { &var_adj[u] } else { &chk_adj[u - nv] };
        let offset = if u < nv { nv } else { 0 };
        let mut skipped_parent = false;
        for &w in neighbours {
            let w = w + offset;
            if w == root {
                if dist[u] == 1 && !skipped_parent {
                    skipped_parent = true;
                    continue;
                }
                best = best.min(dist[u] + 1);
                continue;
            }
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                branch[w] = branch[u];
                queue.push_back(w);
            } else if branch[w] != branch[u] {
                best = best.min(dist[u] + dist[w] + 1);
            }
        }
    }
    best
}

/// One nonzero entry of a parity-check matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub label: FieldElement,
}

/// Sparse parity-check matrix over GF(2^p).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    field: Field,
    entries: Vec<Entry>,
    row_index: Vec<Vec<usize>>,
    col_index: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds the matrix; entries are sorted, positions must be unique and labels nonzero.
    pub fn new(rows: usize, cols: usize, field: Field, mut entries: Vec<Entry>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("empty parity-check matrix".into()));
        }
        entries.sort_unstable();
        for w in entries.windows(2) {
            if (w[0].row, w[0].col) == (w[1].row, w[1].col) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate entry at ({}, {})",
                    w[0].row, w[0].col
                )));
            }
        }
        let mut row_index = vec![Vec::new(); rows];
        let mut col_index = vec![Vec::new(); cols];
        for (k, e) in entries.iter().enumerate() {
            if e.row >= rows || e.col >= cols {
                return Err(Error::InvalidParameter(format!(
                    "entry ({}, {}) outside {rows}x{cols}",
                    e.row, e.col
                )));
            }
            if e.label.is_zero() {
                return Err(Error::ZeroLabel);
            }
            if e.label.index() >= field.order() {
                return Err(Error::InvalidParameter(format!("label {} outside field", e.label)));
            }
            row_index[e.row].push(k);
            col_index[e.col].push(k);
        }
        if let Some(j) = col_index.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("column {j} has weight 0")));
        }
        Ok(ParityCheckMatrix {
            rows,
            cols,
            field,
            entries,
            row_index,
            col_index,
        })
    }

    /// Dense constructor from rows of labels (0 = absent).
    pub fn from_dense(field: Field, dense: &[Vec<u8>]) -> Result<Self> {
        let rows = dense.len();
        let cols = dense.first().map_or(0, Vec::len);
        let mut entries = Vec::new();
        for (r, row) in dense.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidParameter("ragged dense matrix".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0 {
                    entries.push(Entry {
                        row: r,
                        col: c,
                        label: field.element(v as usize)?,
                    });
                }
            }
        }
        ParityCheckMatrix::new(rows, cols, field, entries)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = &Entry> {
        self.row_index[r].iter().map(move |&k| &self.entries[k])
    }

    pub fn col_entries(&self, c: usize) -> impl Iterator<Item = &Entry> {
        self.col_index[c].iter().map(move |&k| &self.entries[k])
    }

    pub fn column_weights(&self) -> Vec<usize> {
        self.col_index.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.row_index.iter().map(Vec::len).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut d = vec![vec![0u8; self.cols]; self.rows];
        for e in &self.entries {
            d[e.row][e.col] = e.label.0;
        }
        d
    }

    pub fn syndrome(&self, word: &[FieldElement]) -> Vec<FieldElement> {
        (0..self.rows)
            .map(|r| {
                self.row_entries(r).fold(FieldElement::ZERO, |acc, e| {
                    self.field.add(acc, self.field.mul(e.label, word[e.col]))
                })
            })
            .collect()
    }

    pub fn is_codeword(&self, word: &[FieldElement]) -> bool {
        word.len() == self.cols && self.syndrome(word).iter().all(|s| s.is_zero())
    }

    /// Length of the shortest cycle in the Tanner graph, `None` if acyclic.
    pub fn girth(&self) -> Option<usize> {
        let n = self.cols + self.rows;
        let neighbours = |u: usize| -> Vec<usize> {
            if u < self.cols {
                self.col_entries(u).map(|e| self.cols + e.row).collect()
            } else {
                self.row_entries(u - self.cols).map(|e| e.col).collect()
            }
        };
        let adj: Vec<Vec<usize>> = (0..n).map(neighbours).collect();
        let mut best = usize::MAX;
        for root in 0..self.cols {
            let mut dist = vec![usize::MAX; n];
            let mut parent = vec![usize::MAX; n];
            let mut queue = VecDeque::new();
            dist[root] = 0;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                if 2 * dist[u] + 1 >= best {
                    break;
                }
                for &w in &adj[u] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        parent[w] = u;
                        queue.push_back(w);
                    } else if parent[u] != w {
                        best = best.min(dist[u] + dist[w] + 1);
                    }
                }
            }
        }
        (best != usize::MAX).then_some(best)
    }

    /// Extended alist text.
    ///
    /// ```text
    /// N M m
    /// max_col_degree max_row_degree
    /// <N column degrees>
    /// <M row degrees>
    /// N lines of (row, exponent) pairs, 1-based rows
    /// M lines of (col, exponent) pairs, 1-based columns
    /// ```
    /// Labels are written as discrete logs (`alpha^k` -> `k`); short lists are
    /// padded with `0 -1`.
    pub fn to_alist(&self) -> String {
        let cw = self.column_weights();
        let rw = self.row_weights();
        let max_c = cw.iter().copied().max().unwrap_or(0);
        let max_r = rw.iter().copied().max().unwrap_or(0);
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let mut s = format!("{} {} {}\n{max_c} {max_r}\n", self.cols, self.rows, self.field.order());
        s.push_str(&join(&cw));
        s.push('\n');
        s.push_str(&join(&rw));
        s.push('\n');
        let pairs = |items: Vec<(usize, FieldElement)>, width: usize| -> String {
            let mut parts: Vec<String> = items
                .into_iter()
                .map(|(idx, lab)| format!("{} {}", idx + 1, self.field.log(lab).expect("nonzero label")))
                .collect();
            parts.resize(width, "0 -1".to_string());
            parts.join(" ")
        };
        for c in 0..self.cols {
            s.push_str(&pairs(self.col_entries(c).map(|e| (e.row, e.label)).collect(), max_c));
            s.push('\n');
        }
        for r in 0..self.rows {
            s.push_str(&pairs(self.row_entries(r).map(|e| (e.col, e.label)).collect(), max_r));
            s.push('\n');
        }
        s
    }

    /// Parses [`to_alist`](Self::to_alist) output; the row section must agree with the column section.
    pub fn from_alist(text: &str, field: &Field) -> Result<Self> {
        let lines: Vec<(usize, Vec<i64>)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| Ok((k + 1, parse_numbers::<i64>(l, k + 1)?)))
            .collect::<Result<_>>()?;
        let err = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let get = |k: usize| lines.get(k).ok_or_else(|| err(lines.last().map_or(1, |l| l.0), "truncated alist"));
        let (hl, header) = get(0)?;
        if header.len() != 3 {
            return Err(err(*hl, "header must be \"N M m\""));
        }
        let (n, m, q) = (header[0] as usize, header[1] as usize, header[2] as usize);
        if q != field.order() {
            return Err(err(*hl, &format!("alist is over GF({q}), expected GF({})", field.order())));
        }
        let (dl, maxd) = get(1)?;
        if maxd.len() != 2 {
            return Err(err(*dl, "expected max degrees"));
        }
        let (cl, cw) = get(2)?;
        let (rl, rw) = get(3)?;
        if cw.len() != n {
            return Err(err(*cl, "column degree count mismatch"));
        }
        if rw.len() != m {
            return Err(err(*rl, "row degree count mismatch"));
        }
        let mut entries = Vec::new();
        for c in 0..n {
            let (line, vals) = get(4 + c)?;
            if vals.len() != 2 * maxd[0] as usize {
                return Err(err(*line, "wrong number of column entries"));
            }
            for (k, pair) in vals.chunks(2).enumerate() {
                if k < cw[c] as usize {
                    let row = usize::try_from(pair[0] - 1).map_err(|_| err(*line, "bad row index"))?;
                    let exp = usize::try_from(pair[1]).map_err(|_| err(*line, "bad label exponent"))?;
                    entries.push(Entry {
                        row,
                        col: c,
                        label: field.alpha_pow(exp),
                    });
                } else if pair != [0, -1] {
                    return Err(err(*line, "expected padding \"0 -1\""));
                }
            }
        }
        let h = ParityCheckMatrix::new(m, n, field.clone(), entries)?;
        for r in 0..m {
            let (line, vals) = get(4 + n + r)?;
            let listed: Vec<(i64, i64)> = vals
                .chunks(2)
                .filter(|p| p[0] != 0)
                .map(|p| (p[0], p[1]))
                .collect();
            let expect: Vec<(i64, i64)> = h
                .row_entries(r)
                .map(|e| (e.col as i64 + 1, field.log(e.label).unwrap_or(0) as i64))
                .collect();
            if listed != expect || rw[r] as usize != expect.len() {
                return Err(err(*line, "row section disagrees with column section"));
            }
        }
        Ok(h)
    }
}

/// Lifts `base` to about `n_target` variable nodes with circulant PEG and draws
/// i.i.d. uniform nonzero labels from `seed`.
pub fn expand_peg(
    base: &BaseMatrix,
    n_target: usize,
    field: &Field,
    seed: u64,
) -> Result<(ParityCheckMatrix, CirculantLifting)> {
    if n_target < base.cols {
        return Err(Error::InvalidParameter(format!(
            "target length {n_target} shorter than {} base columns",
            base.cols
        )));
    }
    let lifting = lifting_factor(n_target, base.cols);
    let structure = CirculantLifting::peg(base, lifting)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = field.order();
    let entries = structure
        .positions()
        .into_iter()
        .map(|(row, col)| Entry {
            row,
            col,
            label: FieldElement(rng.random_range(1..q) as u8),
        })
        .collect();
    let h = ParityCheckMatrix::new(
        structure.num_checks(),
        structure.num_variables(),
        field.clone(),
        entries,
    )?;
    Ok((h, structure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn bm(rows: &[&[u32]]) -> BaseMatrix {
        BaseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Exhaustive search over all row and column permutations.
    fn brute_equivalent(a: &BaseMatrix, b: &BaseMatrix) -> bool {
        let mut found = false;
        for_each_permutation(a.rows, |rp| {
            for_each_permutation(a.cols, |cp| {
                if (0..a.rows).all(|i| (0..a.cols).all(|j| a.get(rp[i], cp[j]) == b.get(i, j))) {
                    found = true;
                }
            });
        });
        found
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_candidates(1, 3, 4).len(), 7);
        let two = enumerate_candidates(1, 2, 4);
        let expect: Vec<BaseMatrix> = [[1, 2], [1, 3], [2, 2], [2, 3], [3, 3]]
            .iter()
            .map(|r| bm(&[r]).canonical_form())
            .collect();
        assert_eq!(two.len(), 5);
        for e in &expect {
            assert!(two.contains(e), "{e} missing");
        }
        let one = enumerate_candidates(1, 1, 4);
        assert_eq!(one, vec![bm(&[&[1]]), bm(&[&[2]]), bm(&[&[3]])]);
        assert!(one.iter().all(|b| b.check_rate().is_err()));
    }

    #[test]
    fn enumeration_matches_brute_force_dedup() {
        for (m_b, n_b) in [(1, 2), (1, 3), (1, 4), (2, 2), (2, 3)] {
            let fast = enumerate_candidates(m_b, n_b, 3);
            // brute force: scan all matrices, dedup by exhaustive equivalence
            let mut reps: Vec<BaseMatrix> = Vec::new();
            let size = m_b * n_b;
            for code in 0..3usize.pow(size as u32) {
                let entries: Vec<u32> = (0..size).map(|k| (code / 3usize.pow(k as u32) % 3) as u32).collect();
                let b = BaseMatrix::new(m_b, n_b, entries).unwrap();
                if b.is_expurgated() {
                    continue;
                }
                if !reps.iter().any(|r| brute_equivalent(r, &b)) {
                    reps.push(b);
                }
            }
            assert_eq!(fast.len(), reps.len(), "{m_b}x{n_b}");
            for (i, a) in fast.iter().enumerate() {
                for b in &fast[i + 1..] {
                    assert!(!brute_equivalent(a, b));
                }
            }
        }
    }

    #[test]
    fn canonical_form_examples() {
        assert_eq!(bm(&[&[2, 1]]).canonical_form(), bm(&[&[1, 2]]).canonical_form());
        assert_eq!(bm(&[&[1, 2]]).canonical_form(), bm(&[&[2, 1]]));
        assert_eq!(
            bm(&[&[1, 0], &[0, 1]]).canonical_form(),
            bm(&[&[0, 1], &[1, 0]]).canonical_form()
        );
    }

    #[test]
    fn canonical_form_shuffle_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = BaseMatrix::new(3, 4, (0..12).map(|_| rng.random_range(0..4)).collect()).unwrap();
        let canon = base.canonical_form();
        for _ in 0..1000 {
            let mut rp: Vec<usize> = (0..3).collect();
            let mut cp: Vec<usize> = (0..4).collect();
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let shuffled = BaseMatrix::new(
                3,
                4,
                (0..3).flat_map(|i| cp.iter().map(move |&j| (i, j))).map(|(i, j)| base.get(rp[i], j)).collect(),
            )
            .unwrap();
            assert!(brute_equivalent(&base, &shuffled));
            assert_eq!(shuffled.canonical_form(), canon);
        }
    }

    #[test]
    fn canonical_form_separates_inequivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let a = BaseMatrix::new(2, 3, (0..6).map(|_| rng.random_range(0..3)).collect()).unwrap();
            let b = BaseMatrix::new(2, 3, (0..6).map(|_| rng.random_range(0..3)).collect()).unwrap();
            assert_eq!(a.canonical_form() == b.canonical_form(), brute_equivalent(&a, &b));
        }
    }

    #[test]
    fn refine_two_one() {
        let r = refine_candidates(&bm(&[&[2, 1]])).unwrap();
        assert_eq!(r.lifting, 2);
        assert_eq!((r.expanded.rows(), r.expanded.cols()), (2, 4));
        assert!(r.expanded.entries().iter().all(|&e| e <= 1));
        assert_eq!(r.expanded.total_edges(), 6);
        assert_eq!(r.candidates.len(), 3);
        for c in &r.candidates {
            assert_eq!(c.total_edges(), r.expanded.total_edges() + 1);
        }
    }

    #[test]
    fn refine_degenerate_cases() {
        // [1 1] + single entry gives [2 1] or [1 2], one permutation class
        let r = refine_candidates(&bm(&[&[1, 1]])).unwrap();
        assert_eq!(r.lifting, 1);
        assert_eq!(r.expanded, bm(&[&[1, 1]]));
        assert_eq!(r.candidates, vec![bm(&[&[2, 1]])]);

        let r = refine_candidates(&bm(&[&[1]])).unwrap();
        assert_eq!(r.candidates, vec![bm(&[&[2]])]);
    }

    #[test]
    fn expansion_dimensions_and_weights() {
        let field = Field::with_default_polynomial(3).unwrap();
        let base = bm(&[&[2, 1]]);
        let (h, _) = expand_peg(&base, 160, &field, 1).unwrap();
        assert_eq!((h.rows(), h.cols()), (80, 160));
        let cw = h.column_weights();
        assert!(cw[..80].iter().all(|&w| w == 2));
        assert!(cw[80..].iter().all(|&w| w == 1));
        assert!(h.row_weights().iter().all(|&w| w == 3));
        assert!(h.girth().is_none_or(|g| g >= 6));

        let (h, _) = expand_peg(&bm(&[&[2, 2, 1]]), 120, &field, 1).unwrap();
        assert_eq!((h.rows(), h.cols()), (40, 120));
    }

    #[test]
    fn expansion_of_single_entry_is_permutation() {
        let field = Field::with_default_polynomial(3).unwrap();
        let (h, _) = expand_peg(&bm(&[&[1]]), 4, &field, 3).unwrap();
        assert_eq!((h.rows(), h.cols()), (4, 4));
        assert!(h.row_weights().iter().all(|&w| w == 1));
        assert!(h.column_weights().iter().all(|&w| w == 1));
    }

    #[test]
    fn expansion_infeasible_and_rounding() {
        let field = Field::with_default_polynomial(3).unwrap();
        assert!(matches!(
            expand_peg(&bm(&[&[3, 1]]), 4, &field, 0),
            Err(Error::InfeasibleExpansion { .. })
        ));
        assert_eq!(lifting_factor(161, 2), 81);
        assert_eq!(lifting_factor(160, 3), 53);
        assert_eq!(lifting_factor(5, 2), 3);
    }

    #[test]
    fn expansion_is_deterministic() {
        let field = Field::with_default_polynomial(4).unwrap();
        let base = bm(&[&[2, 2, 2, 1]]);
        let (a, _) = expand_peg(&base, 128, &field, 42).unwrap();
        let (b, _) = expand_peg(&base, 128, &field, 42).unwrap();
        assert_eq!(a, b);
        let (c, _) = expand_peg(&base, 128, &field, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn peg_avoids_four_cycles_when_possible() {
        let field = Field::with_default_polynomial(3).unwrap();
        let refined = bm(&[&[2, 1, 1, 0], &[1, 1, 0, 1]]);
        let (h, _) = expand_peg(&refined, 160, &field, 5).unwrap();
        assert!(h.girth().unwrap() >= 6);
    }

    #[test]
    fn alist_round_trip() {
        let field = Field::with_default_polynomial(3).unwrap();
        let (h, _) = expand_peg(&bm(&[&[2, 1, 1, 0], &[1, 1, 0, 1]]), 40, &field, 9).unwrap();
        let text = h.to_alist();
        assert!(text.starts_with("40 20 8\n"));
        let back = ParityCheckMatrix::from_alist(&text, &field).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.to_alist(), text);
        let gf16 = Field::with_default_polynomial(4).unwrap();
        assert!(ParityCheckMatrix::from_alist(&text, &gf16).is_err());
    }

    #[test]
    fn base_matrix_text_round_trip() {
        let b = bm(&[&[2, 1, 1, 0], &[1, 1, 0, 1]]);
        assert_eq!(BaseMatrix::parse(&b.to_text()).unwrap(), b);
        assert!(BaseMatrix::parse("1 2\n1\n").is_err());
        assert!(BaseMatrix::parse("2 2\n1 1\n").is_err());
    }

    #[test]
    fn parity_matrix_rejects_duplicates() {
        let field = Field::with_default_polynomial(2).unwrap();
        let e = Entry {
            row: 0,
            col: 0,
            label: FieldElement(1),
        };
        assert!(ParityCheckMatrix::new(1, 1, field.clone(), vec![e, e]).is_err());
        assert!(ParityCheckMatrix::from_dense(field, &[vec![1, 0]]).is_err());
    }
}
