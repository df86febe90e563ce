//! Strength of connection, classical CF-splitting, and structural analysis
//! of the matrix graph (strongly connected components, triangularity).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::Error;
use crate::sparse::{IndexSet, SparseMatrix};
use crate::Result;

/// Pattern of strong connections of a square matrix.
///
/// Row `i` of `pattern` holds `j != i` with `|a_ij| >= threshold * max_{k != i} |a_ik|`.
#[derive(Debug, Clone)]
pub struct StrengthGraph {
    pattern: SparseMatrix,
    threshold: f64,
}

impl StrengthGraph {
    pub fn pattern(&self) -> &SparseMatrix {
        &self.pattern
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Strong neighbors of row `i` (columns only; all entries stored as 1).
    pub fn row(&self, i: usize) -> &[usize] {
        self.pattern.row(i).0
    }

    pub fn n(&self) -> usize {
        self.pattern.nrows()
    }
}

/// Marks strong connections: `j` is strong for row `i` iff
/// `|a_ij| >= threshold * max_{k != i} |a_ik|` (absolute values, so positive
/// and negative couplings are treated alike).
pub fn strength(a: &SparseMatrix, threshold: f64) -> Result<StrengthGraph> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            details: format!("{threshold} not in [0, 1)"),
        });
    }
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            op: "strength",
            details: format!("matrix is {}x{}", a.nrows(), a.ncols()),
        });
    }
    let n = a.nrows();
    let mut row_offsets = vec![0usize; n + 1];
    let mut col_indices = Vec::new();
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let max_off = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != i)
            .fold(0.0f64, |m, (_, &v)| m.max(v.abs()));
        if max_off > 0.0 {
            let cut = threshold * max_off;
            for (&c, &v) in cols.iter().zip(vals) {
                if c != i && v.abs() >= cut {
                    col_indices.push(c);
                }
            }
        }
        row_offsets[i + 1] = col_indices.len();
    }
    let nnz = col_indices.len();
    let pattern = SparseMatrix::new(n, n, row_offsets, col_indices, vec![1.0; nnz])?;
    Ok(StrengthGraph { pattern, threshold })
}

/// C/F label of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    C,
    F,
}

/// Partition of rows into C-points and F-points with coarse/fine index maps.
#[derive(Debug, Clone)]
pub struct CfSplitting {
    marks: Vec<Mark>,
    c_index: Vec<usize>,
    f_index: Vec<usize>,
    n_c: usize,
    n_f: usize,
}

impl CfSplitting {
    /// Builds the index maps from a label vector.
    pub fn from_marks(marks: Vec<Mark>) -> Self {
        let n = marks.len();
        let mut c_index = vec![usize::MAX; n];
        let mut f_index = vec![usize::MAX; n];
        let (mut n_c, mut n_f) = (0usize, 0usize);
        for (i, &m) in marks.iter().enumerate() {
            match m {
                Mark::C => {
                    c_index[i] = n_c;
                    n_c += 1;
                }
                Mark::F => {
                    f_index[i] = n_f;
                    n_f += 1;
                }
            }
        }
        Self { marks, c_index, f_index, n_c, n_f }
    }

    pub fn n(&self) -> usize {
        self.marks.len()
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn mark(&self, i: usize) -> Mark {
        self.marks[i]
    }

    pub fn is_c(&self, i: usize) -> bool {
        self.marks[i] == Mark::C
    }

    /// Coarse index of C-point `i`; `usize::MAX` for F-points.
    pub fn c_index(&self, i: usize) -> usize {
        self.c_index[i]
    }

    /// Local F index of F-point `i`; `usize::MAX` for C-points.
    pub fn f_index(&self, i: usize) -> usize {
        self.f_index[i]
    }

    /// C-points in increasing global order.
    pub fn c_points(&self) -> IndexSet {
        let v: Vec<usize> = (0..self.n()).filter(|&i| self.is_c(i)).collect();
        IndexSet::new(v, self.n()).expect("c_points is sorted by construction")
    }

    /// F-points in increasing global order.
    pub fn f_points(&self) -> IndexSet {
        let v: Vec<usize> = (0..self.n()).filter(|&i| !self.is_c(i)).collect();
        IndexSet::new(v, self.n()).expect("f_points is sorted by construction")
    }
}

/// Ruge-Stuben first-pass coloring on a strength graph.
///
/// The measure of point `i` is the number of points strongly depending on
/// it. Points of maximal measure become C (ties broken toward the lowest
/// index); their dependents become F, and measures of candidate points that
/// new F-points depend on are incremented. Points with no strong connections
/// in either direction become F. Deterministic.
pub fn rs_split(s: &StrengthGraph) -> CfSplitting {
    let n = s.n();
    let transpose = s.pattern().transpose();
    let mut lambda: Vec<usize> = (0..n).map(|i| transpose.row(i).0.len()).collect();
    let mut marks: Vec<Option<Mark>> = vec![None; n];

    for i in 0..n {
        if lambda[i] == 0 && s.row(i).is_empty() {
            marks[i] = Some(Mark::F);
        }
    }

    // Lazy max-heap: stale entries are skipped on pop.
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = (0..n)
        .filter(|&i| marks[i].is_none())
        .map(|i| (lambda[i], Reverse(i)))
        .collect();

    while let Some((lam, Reverse(i))) = heap.pop() {
        if marks[i].is_some() || lambda[i] != lam {
            continue;
        }
        marks[i] = Some(Mark::C);
        for &dep in transpose.row(i).0 {
            if marks[dep].is_none() {
                marks[dep] = Some(Mark::F);
                for &u in s.row(dep) {
                    if marks[u].is_none() {
                        lambda[u] += 1;
                        heap.push((lambda[u], Reverse(u)));
                    }
                }
            }
        }
    }

    let marks = marks
        .into_iter()
        .map(|m| m.expect("every point is assigned"))
        .collect();
    CfSplitting::from_marks(marks)
}

/// Strongly connected components of the off-diagonal digraph.
#[derive(Debug, Clone)]
pub struct SccDecomposition {
    components: Vec<IndexSet>,
    is_triangular: bool,
}

impl SccDecomposition {
    /// Components in reverse-topological order (a component is listed after
    /// every component it depends on).
    pub fn components(&self) -> &[IndexSet] {
        &self.components
    }

    /// True iff every component is a singleton.
    pub fn is_triangular(&self) -> bool {
        self.is_triangular
    }

    pub fn largest(&self) -> usize {
        self.components.iter().map(IndexSet::len).max().unwrap_or(0)
    }
}

/// Tarjan's algorithm on the digraph of off-diagonal entries, implemented
/// iteratively so deep chains do not overflow the call stack.
pub fn scc(a: &SparseMatrix) -> Result<SccDecomposition> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            op: "scc",
            details: format!("matrix is {}x{}", a.nrows(), a.ncols()),
        });
    }
    let n = a.nrows();
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components: Vec<IndexSet> = Vec::new();

    // Work frames: (vertex, position inside its adjacency row).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        frames.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            let (cols, _) = a.row(v);
            let mut advanced = false;
            while *pos < cols.len() {
                let w = cols[*pos];
                *pos += 1;
                if w == v {
                    continue;
                }
                if index[w] == UNSET {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                    advanced = true;
                    break;
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if advanced {
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(IndexSet::new(comp, n)?);
            }
        }
    }
    let is_triangular = components.iter().all(|c| c.len() == 1);
    Ok(SccDecomposition { components, is_triangular })
}

/// Permutation `perm` (with `perm[new] = old`) such that the symmetrically
/// permuted matrix is lower triangular. Fails if a nontrivial strongly
/// connected component exists, reporting its size.
pub fn topological_order(a: &SparseMatrix) -> Result<Vec<usize>> {
    let decomposition = scc(a)?;
    if !decomposition.is_triangular() {
        return Err(Error::NotTriangular { size: decomposition.largest() });
    }
    Ok(decomposition
        .components()
        .iter()
        .flat_map(|c| c.iter())
        .collect())
}
