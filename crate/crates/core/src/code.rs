//! (2, d_c)-regular non-binary LDPC codes: construction, encoding, syndrome
//! computation and rate lowering by multiplicative repetition.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_rational::Ratio;
use rand::Rng;
use thiserror::Error;

use crate::galois::{FieldError, FieldTable, GfSymbol};
use crate::rng;

/// Restarts of the edge-placement procedure before giving up on 4-cycle avoidance.
const MAX_PLACEMENT_RESTARTS: usize = 200;
/// Full matrix redraws before giving up on a full-rank draw.
const MAX_RANK_REDRAWS: usize = 64;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("infeasible code shape: {0}")]
    Infeasible(String),
    #[error("could not place edges without 4-cycles after {0} restarts; try a larger N")]
    FourCycles(usize),
    #[error("parity-check matrix is rank deficient over GF(2^m)")]
    RankDeficient,
    #[error("no full-rank matrix found after {0} redraws")]
    RankRedrawsExhausted(usize),
    #[error("encoding needs column weight 2, column {col} has weight {weight}")]
    UnsupportedColumnWeight { col: usize, weight: usize },
    #[error("length mismatch: got {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("invalid matrix entry: {0}")]
    InvalidEntry(String),
    #[error("rate {target} is not the base rate {base} divided by an integer")]
    RateNotReachable { base: Ratio<usize>, target: Ratio<usize> },
    #[error("matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse parity-check matrix over GF(2^m) in row and column adjacency form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseParityMatrix {
    m: u32,
    rows: Vec<Vec<(usize, GfSymbol)>>,
    cols: Vec<Vec<(usize, GfSymbol)>>,
}

impl SparseParityMatrix {
    /// Builds a matrix from `(row, col, coeff)` triples.
    pub fn from_edges<I>(m: u32, n_checks: usize, n_vars: usize, edges: I) -> Result<Self, CodeError>
    where
        I: IntoIterator<Item = (usize, usize, GfSymbol)>,
    {
        let mut rows = vec![Vec::new(); n_checks];
        let mut cols = vec![Vec::new(); n_vars];
        let mut seen = HashSet::new();
        for (r, c, a) in edges {
            if r >= n_checks || c >= n_vars {
                return Err(CodeError::InvalidEntry(format!("({r}, {c}) outside {n_checks}x{n_vars}")));
            }
            if a.is_zero() || (a.value() >> m) != 0 {
                return Err(CodeError::InvalidEntry(format!("coefficient {a} at ({r}, {c})")));
            }
            if !seen.insert((r, c)) {
                return Err(CodeError::InvalidEntry(format!("duplicate entry at ({r}, {c})")));
            }
            rows[r].push((c, a));
            cols[c].push((r, a));
        }
        for row in &mut rows {
            row.sort_unstable();
        }
        for col in &mut cols {
            col.sort_unstable();
        }
        Ok(SparseParityMatrix { m, rows, cols })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Number of checks `P`.
    pub fn n_checks(&self) -> usize {
        self.rows.len()
    }

    /// Number of variables (code symbols) `N`.
    pub fn n_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> &[(usize, GfSymbol)] {
        &self.rows[r]
    }

    pub fn col(&self, c: usize) -> &[(usize, GfSymbol)] {
        &self.cols[c]
    }

    pub fn rows(&self) -> &[Vec<(usize, GfSymbol)>] {
        &self.rows
    }

    pub fn cols(&self) -> &[Vec<(usize, GfSymbol)>] {
        &self.cols
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Every column has weight `dv` and every row weight `dc`.
    pub fn is_regular(&self, dv: usize, dc: usize) -> bool {
        self.cols.iter().all(|c| c.len() == dv) && self.rows.iter().all(|r| r.len() == dc)
    }

    /// Common row weight, if all rows agree.
    pub fn row_weight(&self) -> Option<usize> {
        let w = self.rows.first()?.len();
        self.rows.iter().all(|r| r.len() == w).then_some(w)
    }

    /// True when two columns share two or more rows.
    pub fn has_four_cycle(&self) -> bool {
        let mut pairs = HashSet::new();
        for row in &self.rows {
            for (i, &(a, _)) in row.iter().enumerate() {
                for &(b, _) in &row[i + 1..] {
                    if !pairs.insert((a, b)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// `A·xᵀ` over GF(2^m).
    pub fn syndrome(&self, x: &[GfSymbol], field: &FieldTable) -> Result<Vec<GfSymbol>, CodeError> {
        if x.len() != self.n_vars() {
            return Err(CodeError::Length { got: x.len(), expected: self.n_vars() });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().fold(GfSymbol::ZERO, |acc, &(c, a)| field.add(acc, field.mul(a, x[c]))))
            .collect())
    }

    pub fn is_codeword(&self, x: &[GfSymbol], field: &FieldTable) -> bool {
        self.syndrome(x, field).map(|s| s.iter().all(|v| v.is_zero())).unwrap_or(false)
    }

    /// Writes the plain-text form: a `m P N d_c` header, then `row col coeff` per edge.
    ///
    /// `d_c` is written as 0 for matrices without a common row weight.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), CodeError> {
        writeln!(w, "{} {} {} {}", self.m, self.n_checks(), self.n_vars(), self.row_weight().unwrap_or(0))?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                writeln!(w, "{r} {c} {a}")?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, CodeError> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('#') => None,
            other => Some((i + 1, other)),
        });
        let (line_no, header) = lines.next().ok_or_else(|| CodeError::Format("empty file".into()))?;
        let header = header?;
        let h: Vec<usize> = parse_fields(&header, 4, line_no)?;
        let (m, p, n, dc) = (h[0] as u32, h[1], h[2], h[3]);
        if !(2..=8).contains(&m) {
            return Err(CodeError::Format(format!("line {line_no}: unsupported m={m}")));
        }
        let mut edges = Vec::new();
        for (line_no, line) in lines {
            let line = line?;
            let f: Vec<usize> = parse_fields(&line, 3, line_no)?;
            if f[2] > u8::MAX as usize {
                return Err(CodeError::Format(format!("line {line_no}: coefficient {} too large", f[2])));
            }
            edges.push((f[0], f[1], GfSymbol(f[2] as u8)));
        }
        let matrix = SparseParityMatrix::from_edges(m, p, n, edges)?;
        if dc != 0 && matrix.row_weight() != Some(dc) {
            return Err(CodeError::Format(format!("header declares d_c={dc} but rows disagree")));
        }
        Ok(matrix)
    }
}

fn parse_fields(line: &str, count: usize, line_no: usize) -> Result<Vec<usize>, CodeError> {
    let fields: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
    match fields {
        Ok(f) if f.len() == count => Ok(f),
        _ => Err(CodeError::Format(format!("line {line_no}: expected {count} non-negative integers"))),
    }
}

/// Random (2, d_c)-regular matrix with no 4-cycles, deterministic in `seed`.
///
/// Columns are placed one at a time on two distinct rows drawn in proportion
/// to their remaining capacity; a row pair already used by another column is
/// rejected. A dead end restarts placement from a fresh stream.
pub fn construct_regular(n: usize, dc: usize, field: &FieldTable, seed: u64) -> Result<SparseParityMatrix, CodeError> {
    if dc < 3 {
        return Err(CodeError::Infeasible(format!("d_c={dc} must be at least 3")));
    }
    if n == 0 || (2 * n) % dc != 0 {
        return Err(CodeError::Infeasible(format!("2N={} is not divisible by d_c={dc}", 2 * n)));
    }
    let p = 2 * n / dc;
    if p < dc + 1 {
        return Err(CodeError::Infeasible(format!(
            "P={p} checks cannot carry a 4-cycle-free (2,{dc}) code; try a larger N"
        )));
    }

    for attempt in 0..MAX_PLACEMENT_RESTARTS {
        let mut rng = rng::stream(seed, &[0xc0de, attempt as u64]);
        if let Some(pairs) = place_columns(n, p, dc, &mut rng) {
            let q = field.size() as u32;
            let mut edges = Vec::with_capacity(2 * n);
            for (c, (r1, r2)) in pairs.into_iter().enumerate() {
                for r in [r1, r2] {
                    let a = GfSymbol(rng.random_range(1..q) as u8);
                    edges.push((r, c, a));
                }
            }
            return SparseParityMatrix::from_edges(field.m(), p, n, edges);
        }
    }
    Err(CodeError::FourCycles(MAX_PLACEMENT_RESTARTS))
}

fn place_columns<R: Rng>(n: usize, p: usize, dc: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    // One stub per unit of remaining row capacity.
    let mut stubs: Vec<usize> = (0..p).flat_map(|r| std::iter::repeat_n(r, dc)).collect();
    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..64 {
            let i = rng.random_range(0..stubs.len());
            let j = rng.random_range(0..stubs.len());
            let (a, b) = (stubs[i], stubs[j]);
            if a == b || used.contains(&(a.min(b), a.max(b))) {
                continue;
            }
            take_stubs(&mut stubs, i, j);
            used.insert((a.min(b), a.max(b)));
            pairs.push((a, b));
            placed = true;
            break;
        }
        if !placed {
            // Exhaustive scan over remaining stubs before declaring a dead end.
            let found = (0..stubs.len()).find_map(|i| {
                (i + 1..stubs.len()).find(|&j| {
                    let (a, b) = (stubs[i], stubs[j]);
                    a != b && !used.contains(&(a.min(b), a.max(b)))
                })
                .map(|j| (i, j))
            });
            let (i, j) = found?;
            let (a, b) = (stubs[i], stubs[j]);
            take_stubs(&mut stubs, i, j);
            used.insert((a.min(b), a.max(b)));
            pairs.push((a, b));
        }
    }
    Some(pairs)
}

fn take_stubs(stubs: &mut Vec<usize>, i: usize, j: usize) {
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    stubs.swap_remove(hi);
    stubs.swap_remove(lo);
}

#[derive(Debug, Clone)]
struct PeelStep {
    check: usize,
    var: usize,
    coef: GfSymbol,
    other_check: usize,
    other_coef: GfSymbol,
}

#[derive(Debug, Clone)]
struct CycleLink {
    check: usize,
    /// Edge to the previous check on the cycle and its coefficient here.
    prev_coef: GfSymbol,
    /// Edge to the next check on the cycle and its coefficient here.
    var: usize,
    coef: GfSymbol,
    /// Coefficient of the free cycle unknown in this edge's value.
    alpha: GfSymbol,
}

#[derive(Debug, Clone)]
struct CycleSolve {
    links: Vec<CycleLink>,
    /// Inverse of the closing coefficient.
    closing_inv: GfSymbol,
}

/// Linear-time encoder for column-weight-2 matrices.
///
/// Viewing checks as vertices and symbols as edges, the parity symbols of
/// each connected component form a spanning tree plus one edge whose cycle
/// has a nonzero closing coefficient; such a set exists exactly when the
/// component's rows are linearly independent. Encoding peels tree leaves
/// toward the cycle and then solves the cycle in one pass.
#[derive(Debug, Clone)]
pub struct Encoder {
    info_positions: Vec<usize>,
    peel: Vec<PeelStep>,
    cycles: Vec<CycleSolve>,
    n_vars: usize,
    n_checks: usize,
}

impl Encoder {
    pub fn new(matrix: &SparseParityMatrix, field: &FieldTable) -> Result<Self, CodeError> {
        let p = matrix.n_checks();
        let n = matrix.n_vars();
        let mut ends = Vec::with_capacity(n);
        for (c, col) in matrix.cols().iter().enumerate() {
            if col.len() != 2 {
                return Err(CodeError::UnsupportedColumnWeight { col: c, weight: col.len() });
            }
            ends.push((col[0], col[1]));
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); p];
        for (v, &((r1, _), (r2, _))) in ends.iter().enumerate() {
            adj[r1].push((r2, v));
            adj[r2].push((r1, v));
        }
        let coef = |check: usize, var: usize| -> GfSymbol {
            let ((r1, a1), (_, a2)) = ends[var];
            if r1 == check { a1 } else { a2 }
        };

        let mut is_parity = vec![false; n];
        let mut comp_of = vec![usize::MAX; p];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; p];
        let mut depth = vec![0usize; p];
        let mut cycles = Vec::new();
        let mut parity_adj_deg = vec![0usize; p];

        for root in 0..p {
            if comp_of[root] != usize::MAX {
                continue;
            }
            let comp = root;
            comp_of[root] = comp;
            let mut queue = VecDeque::from([root]);
            let mut members = vec![root];
            let mut tree_vars = HashSet::new();
            while let Some(u) = queue.pop_front() {
                for &(w, v) in &adj[u] {
                    if comp_of[w] == usize::MAX {
                        comp_of[w] = comp;
                        parent[w] = Some((u, v));
                        depth[w] = depth[u] + 1;
                        tree_vars.insert(v);
                        members.push(w);
                        queue.push_back(w);
                    }
                }
            }
            let mut non_tree: Vec<usize> = members
                .iter()
                .flat_map(|&u| adj[u].iter().map(|&(_, v)| v))
                .filter(|v| !tree_vars.contains(v))
                .collect();
            non_tree.sort_unstable();
            non_tree.dedup();

            let solve = non_tree
                .iter()
                .find_map(|&e| fundamental_cycle(e, &ends, &parent, &depth, &coef, field));
            let solve = solve.ok_or(CodeError::RankDeficient)?;
            for &v in tree_vars.iter().chain(std::iter::once(&solve.links.last().unwrap().var)) {
                is_parity[v] = true;
                let ((r1, _), (r2, _)) = ends[v];
                parity_adj_deg[r1] += 1;
                parity_adj_deg[r2] += 1;
            }
            cycles.push(solve);
        }

        // Peel leaves of the parity subgraph until only the cycles remain.
        let mut removed = vec![false; n];
        let mut queue: VecDeque<usize> = (0..p).filter(|&c| parity_adj_deg[c] == 1).collect();
        let mut peel = Vec::new();
        while let Some(c) = queue.pop_front() {
            if parity_adj_deg[c] != 1 {
                continue;
            }
            let (other, v) = adj[c]
                .iter()
                .copied()
                .find(|&(_, v)| is_parity[v] && !removed[v])
                .expect("leaf has one live parity edge");
            removed[v] = true;
            parity_adj_deg[c] -= 1;
            parity_adj_deg[other] -= 1;
            peel.push(PeelStep { check: c, var: v, coef: coef(c, v), other_check: other, other_coef: coef(other, v) });
            if parity_adj_deg[other] == 1 {
                queue.push_back(other);
            }
        }

        let info_positions = (0..n).filter(|&v| !is_parity[v]).collect();
        Ok(Encoder { info_positions, peel, cycles, n_vars: n, n_checks: p })
    }

    /// Codeword positions that carry the information symbols, in order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn encode(
        &self,
        matrix: &SparseParityMatrix,
        field: &FieldTable,
        info: &[GfSymbol],
    ) -> Result<Vec<GfSymbol>, CodeError> {
        if info.len() != self.k() {
            return Err(CodeError::Length { got: info.len(), expected: self.k() });
        }
        let mut x = vec![GfSymbol::ZERO; self.n_vars];
        for (&pos, &s) in self.info_positions.iter().zip(info) {
            x[pos] = s;
        }
        // Residual of every check from the information symbols.
        let mut residual = vec![GfSymbol::ZERO; self.n_checks];
        for &pos in &self.info_positions {
            if x[pos].is_zero() {
                continue;
            }
            for &(r, a) in matrix.col(pos) {
                residual[r] = field.add(residual[r], field.mul(a, x[pos]));
            }
        }
        for step in &self.peel {
            let v = field.div(residual[step.check], step.coef)?;
            x[step.var] = v;
            residual[step.check] = GfSymbol::ZERO;
            residual[step.other_check] = field.add(residual[step.other_check], field.mul(step.other_coef, v));
        }
        for cycle in &self.cycles {
            let links = &cycle.links;
            let l = links.len();
            // Constant parts of each edge value, with the free unknown set to zero.
            let mut beta = vec![GfSymbol::ZERO; l - 1];
            for i in 0..l - 1 {
                let carry = if i == 0 { GfSymbol::ZERO } else { field.mul(links[i].prev_coef, beta[i - 1]) };
                beta[i] = field.div(field.add(residual[links[i].check], carry), links[i].coef)?;
            }
            let last = &links[l - 1];
            let rhs = field.add(residual[last.check], field.mul(last.prev_coef, beta[l - 2]));
            let t = field.mul(rhs, cycle.closing_inv);
            x[last.var] = t;
            for i in 0..l - 1 {
                x[links[i].var] = field.add(field.mul(links[i].alpha, t), beta[i]);
            }
        }
        Ok(x)
    }
}

/// Cycle closed by non-tree edge `e`, if its closing coefficient is nonzero.
fn fundamental_cycle(
    e: usize,
    ends: &[((usize, GfSymbol), (usize, GfSymbol))],
    parent: &[Option<(usize, usize)>],
    depth: &[usize],
    coef: &dyn Fn(usize, usize) -> GfSymbol,
    field: &FieldTable,
) -> Option<CycleSolve> {
    let ((u, _), (w, _)) = ends[e];
    // Tree paths from both endpoints up to their common ancestor.
    let (mut a, mut b) = (u, w);
    let mut up_a = Vec::new();
    let mut up_b = Vec::new();
    while depth[a] > depth[b] {
        let (pa, v) = parent[a].unwrap();
        up_a.push((a, v));
        a = pa;
    }
    while depth[b] > depth[a] {
        let (pb, v) = parent[b].unwrap();
        up_b.push((b, v));
        b = pb;
    }
    while a != b {
        let (pa, va) = parent[a].unwrap();
        let (pb, vb) = parent[b].unwrap();
        up_a.push((a, va));
        up_b.push((b, vb));
        a = pa;
        b = pb;
    }
    // Walk u → ancestor → w using tree edges, then close with e back to u.
    // Each entry: (check, edge leaving it toward the next check).
    let mut walk: Vec<(usize, usize)> = up_a.clone();
    let lca = a;
    let mut down: Vec<(usize, usize)> = Vec::new();
    // From the ancestor down to w: the edge leaving node X toward its child.
    let mut prev = lca;
    for &(node, v) in up_b.iter().rev() {
        down.push((prev, v));
        prev = node;
    }
    walk.extend(down);
    walk.push((w, e));
    let l = walk.len();
    debug_assert!(l >= 2);

    let mut links = Vec::with_capacity(l);
    let mut alpha_prev = GfSymbol::ONE; // unknown t itself on the closing edge
    for i in 0..l {
        let (check, var) = walk[i];
        let prev_var = if i == 0 { e } else { walk[i - 1].1 };
        let prev_coef = coef(check, prev_var);
        let c = coef(check, var);
        let alpha = if i < l - 1 {
            let a = field.div(field.mul(prev_coef, alpha_prev), c).ok()?;
            alpha_prev = a;
            a
        } else {
            GfSymbol::ONE
        };
        links.push(CycleLink { check, prev_coef, var, coef: c, alpha });
    }
    let last = &links[l - 1];
    let closing = field.add(last.coef, field.mul(last.prev_coef, links[l - 2].alpha));
    let closing_inv = field.inv(closing).ok()?;
    Some(CycleSolve { links, closing_inv })
}

/// Multiplicative repetition: copy `j` of symbol `v` is sent as `c[v][j]·x_v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repetition {
    factor: usize,
    /// `coefficients[j * n + v]` for copy `j`; copy 0 always uses 1.
    coefficients: Vec<GfSymbol>,
    n: usize,
}

impl Repetition {
    pub fn identity(n: usize) -> Self {
        Repetition { factor: 1, coefficients: vec![GfSymbol::ONE; n], n }
    }

    pub fn random(n: usize, factor: usize, field: &FieldTable, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[0x7e9e, factor as u64]);
        let q = field.size() as u32;
        let coefficients = (0..factor * n)
            .map(|i| if i < n { GfSymbol::ONE } else { GfSymbol(rng.random_range(1..q) as u8) })
            .collect();
        Repetition { factor, coefficients, n }
    }

    pub fn with_coefficients(n: usize, factor: usize, coefficients: Vec<GfSymbol>) -> Result<Self, CodeError> {
        if coefficients.len() != n * factor {
            return Err(CodeError::Length { got: coefficients.len(), expected: n * factor });
        }
        if coefficients.iter().any(|c| c.is_zero()) {
            return Err(CodeError::InvalidEntry("zero repetition coefficient".into()));
        }
        Ok(Repetition { factor, coefficients, n })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    #[inline]
    pub fn coefficient(&self, copy: usize, v: usize) -> GfSymbol {
        self.coefficients[copy * self.n + v]
    }
}

/// A complete code: field, matrix, encoder and repetition schedule.
#[derive(Debug, Clone)]
pub struct CodeSpec {
    field: Arc<FieldTable>,
    matrix: SparseParityMatrix,
    encoder: Encoder,
    repetition: Repetition,
    seed: u64,
}

impl CodeSpec {
    /// Draws a full-rank (2, d_c)-regular code of `n` symbols.
    pub fn regular(field: Arc<FieldTable>, n: usize, dc: usize, seed: u64) -> Result<Self, CodeError> {
        for redraw in 0..MAX_RANK_REDRAWS {
            let draw_seed = if redraw == 0 { seed } else { rng::derive_seed(seed, &[0x4a4e, redraw as u64]) };
            let matrix = construct_regular(n, dc, &field, draw_seed)?;
            match Encoder::new(&matrix, &field) {
                Ok(encoder) => {
                    let repetition = Repetition::identity(n);
                    return Ok(CodeSpec { field, matrix, encoder, repetition, seed });
                }
                Err(CodeError::RankDeficient) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(CodeError::RankRedrawsExhausted(MAX_RANK_REDRAWS))
    }

    /// Wraps an existing matrix; fails if it is rank deficient.
    pub fn from_matrix(field: Arc<FieldTable>, matrix: SparseParityMatrix, seed: u64) -> Result<Self, CodeError> {
        if matrix.m() != field.m() {
            return Err(CodeError::InvalidEntry(format!("matrix m={} but field m={}", matrix.m(), field.m())));
        }
        let encoder = Encoder::new(&matrix, &field)?;
        let repetition = Repetition::identity(matrix.n_vars());
        Ok(CodeSpec { field, matrix, encoder, repetition, seed })
    }

    pub fn field(&self) -> &FieldTable {
        &self.field
    }

    pub fn field_arc(&self) -> Arc<FieldTable> {
        Arc::clone(&self.field)
    }

    pub fn matrix(&self) -> &SparseParityMatrix {
        &self.matrix
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn repetition(&self) -> &Repetition {
        &self.repetition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Base code length in symbols.
    pub fn n(&self) -> usize {
        self.matrix.n_vars()
    }

    /// Information symbols.
    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    pub fn info_bits(&self) -> usize {
        self.k() * self.field.m() as usize
    }

    /// Transmitted symbols per codeword, repetitions included.
    pub fn transmitted_symbols(&self) -> usize {
        self.n() * self.repetition.factor()
    }

    pub fn transmitted_bits(&self) -> usize {
        self.transmitted_symbols() * self.field.m() as usize
    }

    pub fn base_rate(&self) -> Ratio<usize> {
        Ratio::new(self.k(), self.n())
    }

    pub fn rate(&self) -> Ratio<usize> {
        Ratio::new(self.k(), self.transmitted_symbols())
    }

    pub fn encode(&self, info: &[GfSymbol]) -> Result<Vec<GfSymbol>, CodeError> {
        self.encoder.encode(&self.matrix, &self.field, info)
    }

    pub fn syndrome(&self, x: &[GfSymbol]) -> Result<Vec<GfSymbol>, CodeError> {
        self.matrix.syndrome(x, &self.field)
    }

    /// Information symbols read back from a (decoded) codeword.
    pub fn extract_info(&self, codeword: &[GfSymbol]) -> Vec<GfSymbol> {
        self.encoder.info_positions().iter().map(|&p| codeword[p]).collect()
    }

    /// Same code transmitted `t = base_rate / target` times per symbol.
    pub fn lower_rate(&self, target: Ratio<usize>) -> Result<CodeSpec, CodeError> {
        let base = self.base_rate();
        let t = base / target;
        if !t.is_integer() || t.to_integer() == 0 {
            return Err(CodeError::RateNotReachable { base, target });
        }
        let t = t.to_integer();
        let repetition = if t == 1 {
            Repetition::identity(self.n())
        } else {
            Repetition::random(self.n(), t, &self.field, self.seed)
        };
        Ok(CodeSpec { repetition, ..self.clone() })
    }

    pub fn with_repetition(&self, repetition: Repetition) -> Result<CodeSpec, CodeError> {
        if repetition.n != self.n() {
            return Err(CodeError::Length { got: repetition.n, expected: self.n() });
        }
        Ok(CodeSpec { repetition, ..self.clone() })
    }

    /// Symbols in transmission order: all of copy 0, then all of copy 1, ...
    pub fn transmit_symbols(&self, codeword: &[GfSymbol]) -> Vec<GfSymbol> {
        let n = self.n();
        (0..self.repetition.factor())
            .flat_map(|j| (0..n).map(move |v| (j, v)))
            .map(|(j, v)| self.field.mul(self.repetition.coefficient(j, v), codeword[v]))
            .collect()
    }

    /// Folds per-copy priors (transmission order, `q` values each) back onto
    /// the base code: `p_v(x) ∝ Π_j p_{v,j}(c_{v,j}·x)`.
    pub fn combine_priors(&self, copies: &[f64]) -> Result<Vec<f64>, CodeError> {
        let q = self.field.size();
        let n = self.n();
        let t = self.repetition.factor();
        if copies.len() != n * t * q {
            return Err(CodeError::Length { got: copies.len(), expected: n * t * q });
        }
        if t == 1 {
            return Ok(copies.to_vec());
        }
        let mut out = vec![1.0; n * q];
        for j in 0..t {
            for v in 0..n {
                let row = self.field.mul_row(self.repetition.coefficient(j, v));
                let src = &copies[(j * n + v) * q..(j * n + v + 1) * q];
                let dst = &mut out[v * q..(v + 1) * q];
                for x in 0..q {
                    dst[x] *= src[row[x] as usize];
                }
                // Renormalise per copy so long repetition chains cannot underflow.
                let s: f64 = dst.iter().sum();
                if s > 0.0 {
                    dst.iter_mut().for_each(|p| *p /= s);
                }
            }
        }
        Ok(out)
    }
}

/// Counts, per row pair, how many columns cover it; used by tests and tooling.
pub fn column_pair_overlaps(matrix: &SparseParityMatrix) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for col in matrix.cols() {
        for (i, &(a, _)) in col.iter().enumerate() {
            for &(b, _) in &col[i + 1..] {
                *counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf256() -> Arc<FieldTable> {
        Arc::new(FieldTable::new(8, None).unwrap())
    }

    fn random_info(k: usize, q: usize, seed: u64) -> Vec<GfSymbol> {
        let mut r = rng::stream(seed, &[]);
        (0..k).map(|_| GfSymbol(r.random_range(0..q) as u8)).collect()
    }

    #[test]
    fn regular_shapes() {
        let f = gf256();
        let m = construct_regular(1200, 3, &f, 1).unwrap();
        assert_eq!(m.n_checks(), 800);
        assert!(m.is_regular(2, 3));
        assert!(!m.has_four_cycle());
        let m = construct_regular(300, 4, &f, 2).unwrap();
        assert_eq!(m.n_checks(), 150);
        assert!(m.is_regular(2, 4));
        assert!(m.rows().iter().flatten().all(|&(_, a)| !a.is_zero()));
    }

    #[test]
    fn infeasible_shapes() {
        let f = gf256();
        assert!(matches!(construct_regular(301, 4, &f, 0), Err(CodeError::Infeasible(_))));
        assert!(matches!(construct_regular(4, 4, &f, 0), Err(CodeError::Infeasible(_))));
        assert!(matches!(construct_regular(10, 2, &f, 0), Err(CodeError::Infeasible(_))));
    }

    #[test]
    fn construction_is_deterministic() {
        let f = gf256();
        let a = CodeSpec::regular(f.clone(), 300, 3, 42).unwrap();
        let b = CodeSpec::regular(f.clone(), 300, 3, 42).unwrap();
        let c = CodeSpec::regular(f, 300, 3, 43).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_ne!(a.matrix(), c.matrix());
        let info = random_info(a.k(), 256, 5);
        assert_eq!(a.encode(&info).unwrap(), b.encode(&info).unwrap());
    }

    #[test]
    fn encoder_produces_codewords() {
        let f = gf256();
        for &(n, dc) in &[(300usize, 3usize), (300, 4), (120, 6)] {
            let code = CodeSpec::regular(f.clone(), n, dc, 9).unwrap();
            assert_eq!(code.k(), n - 2 * n / dc);
            let zero = code.encode(&vec![GfSymbol::ZERO; code.k()]).unwrap();
            assert!(zero.iter().all(|s| s.is_zero()));
            for seed in 0..20 {
                let info = random_info(code.k(), 256, seed);
                let x = code.encode(&info).unwrap();
                assert!(code.syndrome(&x).unwrap().iter().all(|s| s.is_zero()));
                assert_eq!(code.extract_info(&x), info);
            }
        }
    }

    #[test]
    fn single_corruption_hits_two_checks() {
        let f = gf256();
        let code = CodeSpec::regular(f, 300, 3, 3).unwrap();
        let mut x = code.encode(&random_info(code.k(), 256, 1)).unwrap();
        x[17] = GfSymbol(x[17].0 ^ 0x5a);
        let nonzero = code.syndrome(&x).unwrap().iter().filter(|s| !s.is_zero()).count();
        assert_eq!(nonzero, 2);
        assert!(matches!(code.syndrome(&x[1..]), Err(CodeError::Length { .. })));
    }

    #[test]
    fn rank_deficient_matrix_is_rejected() {
        // Two checks joined by two parallel edges with proportional coefficients.
        let f = Arc::new(FieldTable::new(2, None).unwrap());
        let one = GfSymbol(1);
        let m = SparseParityMatrix::from_edges(2, 2, 2, [(0, 0, one), (1, 0, one), (0, 1, one), (1, 1, one)]).unwrap();
        assert!(matches!(CodeSpec::from_matrix(f.clone(), m, 0), Err(CodeError::RankDeficient)));
        // A tree component has no cycle at all.
        let m = SparseParityMatrix::from_edges(2, 3, 2, [(0, 0, one), (1, 0, one), (1, 1, one), (2, 1, one)]).unwrap();
        assert!(matches!(CodeSpec::from_matrix(f, m, 0), Err(CodeError::RankDeficient)));
    }

    #[test]
    fn rate_lowering() {
        let f = gf256();
        let code = CodeSpec::regular(f, 300, 3, 11).unwrap();
        assert_eq!(code.info_bits(), 800);
        assert_eq!(code.transmitted_bits(), 2400);
        let r6 = code.lower_rate(Ratio::new(1, 6)).unwrap();
        assert_eq!(r6.rate(), Ratio::new(1, 6));
        assert_eq!(r6.transmitted_bits(), 4800);
        assert_eq!(r6.info_bits(), 800);
        let r12 = code.lower_rate(Ratio::new(1, 12)).unwrap();
        assert_eq!(r12.repetition().factor(), 4);
        let same = code.lower_rate(Ratio::new(1, 3)).unwrap();
        assert_eq!(same.repetition(), &Repetition::identity(300));
        assert!(matches!(code.lower_rate(Ratio::new(1, 4)), Err(CodeError::RateNotReachable { .. })));
        assert!(matches!(code.lower_rate(Ratio::new(1, 2)), Err(CodeError::RateNotReachable { .. })));

        let x = code.encode(&random_info(code.k(), 256, 2)).unwrap();
        let tx = r6.transmit_symbols(&x);
        assert_eq!(&tx[..300], &x[..]);
        for v in 0..300 {
            let c = r6.repetition().coefficient(1, v);
            assert!(!c.is_zero());
            assert_eq!(tx[300 + v], r6.field().mul(c, x[v]));
        }
    }

    #[test]
    fn unit_coefficient_repetition_squares_prior() {
        let f = Arc::new(FieldTable::new(2, None).unwrap());
        let one = GfSymbol(1);
        let a = GfSymbol(2);
        // 3 checks in a triangle, one symbol per side.
        let m = SparseParityMatrix::from_edges(2, 3, 3, [(0, 0, one), (1, 0, a), (1, 1, one), (2, 1, a), (2, 2, one), (0, 2, one)])
            .unwrap();
        let code = CodeSpec::from_matrix(f, m, 0).unwrap();
        let rep = Repetition::with_coefficients(3, 2, vec![one; 6]).unwrap();
        let code2 = code.with_repetition(rep).unwrap();
        let single = [0.7, 0.1, 0.15, 0.05];
        let copies: Vec<f64> = (0..6).flat_map(|_| single).collect();
        let combined = code2.combine_priors(&copies).unwrap();
        let sq: Vec<f64> = single.iter().map(|p| p * p).collect();
        let s: f64 = sq.iter().sum();
        for (got, want) in combined[..4].iter().zip(sq.iter().map(|p| p / s)) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let f = gf256();
        let m = construct_regular(60, 3, &f, 4).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("8 40 60 3\n"));
        assert_eq!(text.lines().count(), 1 + 120);
        let back = SparseParityMatrix::read_text(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(SparseParityMatrix::read_text(&b"8 2 2 3\n0 0 1\n"[..]).is_err());
        assert!(SparseParityMatrix::read_text(&b"8 2 2\n"[..]).is_err());
        assert!(SparseParityMatrix::read_text(&b"8 1 1 0\n0 0 0\n"[..]).is_err());
    }
}
