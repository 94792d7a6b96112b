//! Flip Metropolis-Hastings sampling of dimer covers of a rectangular grid patch.
//!
//! A patch of `rows x cols` faces has `(rows + 1) x (cols + 1)` vertices; vertex `(r, c)`
//! is black when `r + c` is even. Row index grows southward, column index eastward.
//! Each face stores which of its edges are matched as a 4-bit code: north 1, west 2,
//! south 4, east 8. Edges outside the patch do not exist. A patch may also be an Aztec
//! diamond cut out of its bounding rectangle by a vertex mask; the squares in the
//! diagonal lattice are of this shape in the sampler frame.
//!
//! Heights follow the dual form of `omega_D - omega_0` with `omega_0 = 1/4`: crossing an
//! edge with its black end on the left adds `1[e in D] - 1/4`, with the black end on the
//! right it subtracts that amount. The base is the virtual face just north of the first
//! active face, whose height does not depend on the cover, so one flip changes one value.
//! Faces with a corner outside the region carry no height (NaN).

use crate::error::{Error, Result};
use crate::weights::WeightField;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NORTH: u8 = 1;
pub const WEST: u8 = 2;
pub const SOUTH: u8 = 4;
pub const EAST: u8 = 8;

/// Identifier recorded next to the seed in run outputs.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), sampler v1";

/// Largest edge count accepted by the exhaustive enumeration.
pub const MAX_ENUM_EDGES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// joins vertices `(r, c)` and `(r, c + 1)`
    Horizontal(usize, usize),
    /// joins vertices `(r, c)` and `(r + 1, c)`
    Vertical(usize, usize),
}

impl Edge {
    pub fn black_first(&self) -> bool {
        match *self {
            Edge::Horizontal(r, c) | Edge::Vertical(r, c) => (r + c) % 2 == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// horizontal dimers stacked in aligned columns; needs `cols + 1` even
    BrickworkHorizontal,
    /// vertical dimers in aligned rows; needs `rows + 1` even
    BrickworkVertical,
}

impl std::str::FromStr for Pattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brickwork_horizontal" => Ok(Pattern::BrickworkHorizontal),
            "brickwork_vertical" => Ok(Pattern::BrickworkVertical),
            _ => Err(Error::Config(format!("unknown pattern '{s}' (brickwork_horizontal | brickwork_vertical)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipKind {
    None,
    /// `n_f = 5`: north and south edges matched, flips to east and west
    HorizontalToVertical,
    /// `n_f = 10`: east and west edges matched
    VerticalToHorizontal,
}

/// Shape of the sampled region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Rectangle { rows: usize, cols: usize },
    /// Aztec diamond of the given order: `2 order` vertex rows of lengths `2, 4, .., 2 order, .., 4, 2`,
    /// in a bounding box of `(2 order - 1)^2` faces.
    Aztec { order: usize },
}

impl Region {
    /// Face counts of the bounding rectangle.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Region::Rectangle { rows, cols } => (rows, cols),
            Region::Aztec { order } => (2 * order - 1, 2 * order - 1),
        }
    }

    pub fn vertex_mask(&self) -> Vec<bool> {
        let (rows, cols) = self.dims();
        match *self {
            Region::Rectangle { .. } => vec![true; (rows + 1) * (cols + 1)],
            Region::Aztec { order } => {
                let c = order as f64 - 0.5;
                (0..(rows + 1) * (cols + 1))
                    .map(|v| {
                        let (r, k) = ((v / (cols + 1)) as f64, (v % (cols + 1)) as f64);
                        (r - c).abs() + (k - c).abs() <= order as f64
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimerConfig {
    rows: usize,
    cols: usize,
    codes: Vec<u8>,
    /// per vertex of the bounding rectangle
    present: Vec<bool>,
    /// faces whose four corners are present, row-major indices
    active: Vec<usize>,
}

impl DimerConfig {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn code(&self, r: usize, c: usize) -> u8 {
        self.codes[r * self.cols + c]
    }

    pub fn vertex_present(&self, r: usize, c: usize) -> bool {
        self.present[r * (self.cols + 1) + c]
    }

    pub fn edge_exists(&self, e: Edge) -> bool {
        let (a, b) = endpoints(e);
        self.vertex_present(a.0, a.1) && self.vertex_present(b.0, b.1)
    }

    pub fn face_active(&self, r: usize, c: usize) -> bool {
        self.vertex_present(r, c) && self.vertex_present(r, c + 1) && self.vertex_present(r + 1, c) && self.vertex_present(r + 1, c + 1)
    }

    /// Row-major indices of faces with all four corners in the region.
    pub fn active_faces(&self) -> &[usize] {
        &self.active
    }

    /// Build from a set of matched edges; checks the result.
    pub fn from_edges(rows: usize, cols: usize, edges: &[Edge]) -> Result<Self> {
        Self::from_edges_in(rows, cols, vec![true; (rows + 1) * (cols + 1)], edges)
    }

    pub fn from_edges_in(rows: usize, cols: usize, present: Vec<bool>, edges: &[Edge]) -> Result<Self> {
        if present.len() != (rows + 1) * (cols + 1) {
            return Err(Error::Invalid("vertex mask does not match the patch".into()));
        }
        let mut codes = vec![0u8; rows * cols];
        for &e in edges {
            match e {
                Edge::Horizontal(r, c) if r <= rows && c < cols => {
                    if r < rows {
                        codes[r * cols + c] |= NORTH;
                    }
                    if r > 0 {
                        codes[(r - 1) * cols + c] |= SOUTH;
                    }
                }
                Edge::Vertical(r, c) if r < rows && c <= cols => {
                    if c < cols {
                        codes[r * cols + c] |= WEST;
                    }
                    if c > 0 {
                        codes[r * cols + c - 1] |= EAST;
                    }
                }
                _ => return Err(Error::Invalid(format!("edge {e:?} lies outside the patch"))),
            }
        }
        let cfg = Self::assemble(rows, cols, codes, present);
        cfg.check()?;
        Ok(cfg)
    }

    fn assemble(rows: usize, cols: usize, codes: Vec<u8>, present: Vec<bool>) -> Self {
        let mut cfg = DimerConfig { rows, cols, codes, present, active: Vec::new() };
        cfg.active = (0..rows * cols).filter(|&f| cfg.face_active(f / cols, f % cols)).collect();
        cfg
    }

    pub fn is_matched(&self, e: Edge) -> bool {
        let (rows, cols) = (self.rows, self.cols);
        match e {
            Edge::Horizontal(r, c) => {
                if r < rows {
                    self.code(r, c) & NORTH != 0
                } else {
                    self.code(r - 1, c) & SOUTH != 0
                }
            }
            Edge::Vertical(r, c) => {
                if c < cols {
                    self.code(r, c) & WEST != 0
                } else {
                    self.code(r, c - 1) & EAST != 0
                }
            }
        }
    }

    pub fn matched_edges(&self) -> Vec<Edge> {
        all_edges(self.rows, self.cols).into_iter().filter(|&e| self.is_matched(e)).collect()
    }

    /// Shared-edge consistency and perfect matching.
    pub fn check(&self) -> Result<()> {
        let (rows, cols) = (self.rows, self.cols);
        if rows == 0 || cols == 0 || self.codes.len() != rows * cols || self.present.len() != (rows + 1) * (cols + 1) {
            return Err(Error::Invalid("configuration has inconsistent dimensions".into()));
        }
        for r in 0..rows {
            for c in 0..cols {
                let k = self.code(r, c);
                if k > 15 {
                    return Err(Error::Invalid(format!("face ({r}, {c}) has code {k} > 15")));
                }
                if r + 1 < rows && (k & SOUTH != 0) != (self.code(r + 1, c) & NORTH != 0) {
                    return Err(Error::Invalid(format!("faces ({r}, {c}) and ({}, {c}) disagree on their shared edge", r + 1)));
                }
                if c + 1 < cols && (k & EAST != 0) != (self.code(r, c + 1) & WEST != 0) {
                    return Err(Error::Invalid(format!("faces ({r}, {c}) and ({r}, {}) disagree on their shared edge", c + 1)));
                }
            }
        }
        let mut degree = vec![0u8; (rows + 1) * (cols + 1)];
        for e in self.matched_edges() {
            if !self.edge_exists(e) {
                return Err(Error::Invalid(format!("matched edge {e:?} leaves the region")));
            }
            let (a, b) = endpoints(e);
            degree[a.0 * (cols + 1) + a.1] += 1;
            degree[b.0 * (cols + 1) + b.1] += 1;
        }
        if let Some(v) = (0..degree.len()).find(|&v| degree[v] != u8::from(self.present[v])) {
            return Err(Error::Invalid(format!(
                "vertex ({}, {}) is covered {} times",
                v / (cols + 1),
                v % (cols + 1),
                degree[v]
            )));
        }
        Ok(())
    }

    pub fn flippable(&self, r: usize, c: usize) -> FlipKind {
        match self.code(r, c) {
            5 => FlipKind::HorizontalToVertical,
            10 => FlipKind::VerticalToHorizontal,
            _ => FlipKind::None,
        }
    }

    /// Height change of face `(r, c)` if it were flipped now (0 when not flippable).
    pub fn flip_sign(&self, r: usize, c: usize) -> i32 {
        let parity = if (r + c) % 2 == 0 { 1 } else { -1 };
        match self.flippable(r, c) {
            FlipKind::HorizontalToVertical => parity,
            FlipKind::VerticalToHorizontal => -parity,
            FlipKind::None => 0,
        }
    }

    /// Rotate the two dimers around face `(r, c)`; returns the height change at that face.
    pub fn flip(&mut self, r: usize, c: usize) -> Result<i32> {
        let s = self.flip_sign(r, c);
        if s == 0 {
            return Err(Error::Invalid(format!("face ({r}, {c}) with code {} is not flippable", self.code(r, c))));
        }
        self.flip_unchecked(r, c);
        Ok(s)
    }

    fn flip_unchecked(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        self.codes[r * cols + c] ^= 15;
        if r > 0 {
            self.codes[(r - 1) * cols + c] ^= SOUTH;
        }
        if r + 1 < self.rows {
            self.codes[(r + 1) * cols + c] ^= NORTH;
        }
        if c > 0 {
            self.codes[r * cols + c - 1] ^= EAST;
        }
        if c + 1 < cols {
            self.codes[r * cols + c + 1] ^= WEST;
        }
    }

    pub fn flippable_count(&self) -> usize {
        self.codes.iter().filter(|&&k| k == 5 || k == 10).count()
    }

    /// One lowercase hex digit per face, one line per row.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(char::from_digit(self.code(r, c) as u32, 16).unwrap());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.len());
        let mut codes = Vec::with_capacity(rows * cols);
        for l in &lines {
            if l.len() != cols {
                return Err(Error::Invalid("ragged configuration dump".into()));
            }
            for ch in l.chars() {
                let d = ch.to_digit(16).filter(|_| !ch.is_ascii_uppercase());
                codes.push(d.ok_or_else(|| Error::Invalid(format!("'{ch}' is not a lowercase hex digit")))? as u8);
            }
        }
        let cfg = Self::assemble(rows, cols, codes, vec![true; (rows + 1) * (cols + 1)]);
        cfg.check()?;
        Ok(cfg)
    }
}

fn endpoints(e: Edge) -> ((usize, usize), (usize, usize)) {
    match e {
        Edge::Horizontal(r, c) => ((r, c), (r, c + 1)),
        Edge::Vertical(r, c) => ((r, c), (r + 1, c)),
    }
}

pub fn all_edges(rows: usize, cols: usize) -> Vec<Edge> {
    let mut v = Vec::new();
    for r in 0..=rows {
        for c in 0..cols {
            v.push(Edge::Horizontal(r, c));
        }
    }
    for r in 0..rows {
        for c in 0..=cols {
            v.push(Edge::Vertical(r, c));
        }
    }
    v
}

pub fn init_config(rows: usize, cols: usize, pattern: Pattern) -> Result<DimerConfig> {
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid("patch needs at least one face in each direction".into()));
    }
    if (rows + 1) * (cols + 1) % 2 == 1 {
        return Err(Error::Invalid(format!("a {rows}x{cols}-face patch has an odd number of vertices and no dimer cover")));
    }
    let mut edges = Vec::new();
    match pattern {
        Pattern::BrickworkHorizontal => {
            if (cols + 1) % 2 == 1 {
                return Err(Error::Invalid("brickwork_horizontal needs an even number of vertex columns (cols odd)".into()));
            }
            for r in 0..=rows {
                for c in (0..cols).step_by(2) {
                    edges.push(Edge::Horizontal(r, c));
                }
            }
        }
        Pattern::BrickworkVertical => {
            if (rows + 1) % 2 == 1 {
                return Err(Error::Invalid("brickwork_vertical needs an even number of vertex rows (rows odd)".into()));
            }
            for r in (0..rows).step_by(2) {
                for c in 0..=cols {
                    edges.push(Edge::Vertical(r, c));
                }
            }
        }
    }
    DimerConfig::from_edges(rows, cols, &edges)
}

/// Starting cover of a region: the rectangle patterns, or rows of horizontal dimers for an Aztec diamond.
pub fn init_region(region: Region, pattern: Pattern) -> Result<DimerConfig> {
    match region {
        Region::Rectangle { rows, cols } => init_config(rows, cols, pattern),
        Region::Aztec { order } => {
            if order == 0 {
                return Err(Error::Invalid("Aztec diamond order must be at least 1".into()));
            }
            let (rows, cols) = region.dims();
            let present = region.vertex_mask();
            let mut edges = Vec::new();
            for r in 0..=rows {
                let row: Vec<usize> = (0..=cols).filter(|&c| present[r * (cols + 1) + c]).collect();
                for pair in row.chunks(2) {
                    edges.push(Edge::Horizontal(r, pair[0]));
                }
            }
            DimerConfig::from_edges_in(rows, cols, present, &edges)
        }
    }
}

/// Heights per face, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl HeightField {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Sum over faces inside the region.
    pub fn volume(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).sum()
    }

    /// Slope `(d/d east, d/d south)` by central differences over `k` faces, clamped at the
    /// border; NaN if a stencil point lies outside the region.
    pub fn slope(&self, r: usize, c: usize, k: usize) -> (f64, f64) {
        let (c0, c1) = (c.saturating_sub(k), (c + k).min(self.cols - 1));
        let (r0, r1) = (r.saturating_sub(k), (r + k).min(self.rows - 1));
        let a = if c1 > c0 { (self.get(r, c1) - self.get(r, c0)) / (c1 - c0) as f64 } else { 0.0 };
        let b = if r1 > r0 { (self.get(r1, c) - self.get(r0, c)) / (r1 - r0) as f64 } else { 0.0 };
        (a, b)
    }
}

/// Height with `omega_0 = 1/4`.
pub fn height_field(cfg: &DimerConfig) -> Result<HeightField> {
    height_field_with(cfg, &|_| 0.25)
}

/// Height with an arbitrary reference flow `omega_0` (total 1 at every vertex).
pub fn height_field_with(cfg: &DimerConfig, omega0: &dyn Fn(Edge) -> f64) -> Result<HeightField> {
    cfg.check()?;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let form = |e: Edge| (if cfg.is_matched(e) { 1.0 } else { 0.0 }) - omega0(e);
    let mut v = vec![f64::NAN; rows * cols];
    let Some(&first) = cfg.active.first() else {
        return Ok(HeightField { rows, cols, values: v });
    };
    // enter the first active face southward across its north edge; its left end is the east corner
    let e0 = Edge::Horizontal(first / cols, first % cols);
    v[first] = if e0.black_first() { -form(e0) } else { form(e0) };
    let mut queue = std::collections::VecDeque::from([first]);
    while let Some(f) = queue.pop_front() {
        let (r, c) = (f / cols, f % cols);
        // (neighbour, crossed edge, sign of the form for this direction)
        let mut steps = Vec::with_capacity(4);
        if c + 1 < cols {
            let e = Edge::Vertical(r, c + 1);
            steps.push((f + 1, e, if e.black_first() { 1.0 } else { -1.0 }));
        }
        if c > 0 {
            let e = Edge::Vertical(r, c);
            steps.push((f - 1, e, if e.black_first() { -1.0 } else { 1.0 }));
        }
        if r + 1 < rows {
            let e = Edge::Horizontal(r + 1, c);
            steps.push((f + cols, e, if e.black_first() { -1.0 } else { 1.0 }));
        }
        if r > 0 {
            let e = Edge::Horizontal(r, c);
            steps.push((f - cols, e, if e.black_first() { 1.0 } else { -1.0 }));
        }
        for (g, e, s) in steps {
            if v[g].is_nan() && cfg.face_active(g / cols, g % cols) {
                v[g] = v[f] + s * form(e);
                queue.push_back(g);
            }
        }
    }
    Ok(HeightField { rows, cols, values: v })
}

/// Kasteleyn signs for the grid: horizontal edges `+1`, vertical edge in column `c` gets `(-1)^c`.
pub fn kasteleyn_sign(e: Edge) -> f64 {
    match e {
        Edge::Horizontal(..) => 1.0,
        Edge::Vertical(_, c) => {
            if c % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// `|det K|` of the signed white-black matrix, after checking the sign condition on every face.
pub fn kasteleyn_partition(weights: &WeightField) -> Result<f64> {
    kasteleyn_partition_signed(weights, &kasteleyn_sign)
}

pub fn kasteleyn_partition_signed(weights: &WeightField, sign: &dyn Fn(Edge) -> f64) -> Result<f64> {
    let (rows, cols) = (weights.rows, weights.cols);
    for r in 0..rows {
        for c in 0..cols {
            let p = sign(Edge::Vertical(r, c)) * sign(Edge::Vertical(r, c + 1)) / (sign(Edge::Horizontal(r, c)) * sign(Edge::Horizontal(r + 1, c)));
            if p >= 0.0 {
                return Err(Error::Invalid(format!("Kasteleyn sign condition fails at face ({r}, {c})")));
            }
        }
    }
    let vcols = cols + 1;
    let nv = (rows + 1) * vcols;
    let mut black = vec![usize::MAX; nv];
    let mut white = vec![usize::MAX; nv];
    let (mut nb, mut nw) = (0, 0);
    for v in 0..nv {
        if (v / vcols + v % vcols) % 2 == 0 {
            black[v] = nb;
            nb += 1;
        } else {
            white[v] = nw;
            nw += 1;
        }
    }
    if nb != nw {
        return Ok(0.0);
    }
    let mut k = DMatrix::<f64>::zeros(nw, nb);
    for e in all_edges(rows, cols) {
        let (a, b) = endpoints(e);
        let (ia, ib) = (a.0 * vcols + a.1, b.0 * vcols + b.1);
        let (w, bl) = if black[ia] != usize::MAX { (white[ib], black[ia]) } else { (white[ia], black[ib]) };
        k[(w, bl)] = sign(e) * edge_weight(weights, e);
    }
    Ok(k.determinant().abs())
}

pub fn edge_weight(weights: &WeightField, e: Edge) -> f64 {
    match e {
        Edge::Horizontal(r, c) => weights.horizontal_edge(r, c),
        Edge::Vertical(r, c) => weights.vertical_edge(r, c),
    }
}

/// All dimer covers with their Boltzmann probabilities, by backtracking.
pub fn brute_force_distribution(weights: &WeightField) -> Result<Vec<(DimerConfig, f64)>> {
    let (rows, cols) = (weights.rows, weights.cols);
    let ne = all_edges(rows, cols).len();
    if ne > MAX_ENUM_EDGES {
        return Err(Error::Invalid(format!("{ne} edges exceeds the enumeration limit {MAX_ENUM_EDGES}")));
    }
    let vcols = cols + 1;
    let nv = (rows + 1) * vcols;
    let mut covered = vec![false; nv];
    let mut chosen = Vec::new();
    let mut out = Vec::new();
    fn go(v: usize, rows: usize, vcols: usize, covered: &mut Vec<bool>, chosen: &mut Vec<Edge>, out: &mut Vec<Vec<Edge>>) {
        let nv = covered.len();
        let mut v = v;
        while v < nv && covered[v] {
            v += 1;
        }
        if v == nv {
            out.push(chosen.clone());
            return;
        }
        let (r, c) = (v / vcols, v % vcols);
        covered[v] = true;
        if c + 1 < vcols && !covered[v + 1] {
            covered[v + 1] = true;
            chosen.push(Edge::Horizontal(r, c));
            go(v + 1, rows, vcols, covered, chosen, out);
            chosen.pop();
            covered[v + 1] = false;
        }
        if r < rows && !covered[v + vcols] {
            covered[v + vcols] = true;
            chosen.push(Edge::Vertical(r, c));
            go(v + 1, rows, vcols, covered, chosen, out);
            chosen.pop();
            covered[v + vcols] = false;
        }
        covered[v] = false;
    }
    go(0, rows, vcols, &mut covered, &mut chosen, &mut out);
    let mut configs = Vec::with_capacity(out.len());
    let mut z = 0.0;
    for edges in out {
        let w: f64 = edges.iter().map(|&e| edge_weight(weights, e)).product();
        z += w;
        configs.push((DimerConfig::from_edges(rows, cols, &edges)?, w));
    }
    for c in configs.iter_mut() {
        c.1 /= z;
    }
    Ok(configs)
}

/// Metropolis ratio for flipping face `(r, c)` in its current state.
fn flip_ratio(cfg: &DimerConfig, weights: &WeightField, r: usize, c: usize) -> f64 {
    match cfg.flippable(r, c) {
        FlipKind::HorizontalToVertical => weights.face(r, c),
        FlipKind::VerticalToHorizontal => 1.0 / weights.face(r, c),
        FlipKind::None => 0.0,
    }
}

/// One single-flip proposal at a uniform face; returns the height change (0 if nothing moved).
pub fn mh_step(cfg: &mut DimerConfig, weights: &WeightField, rng: &mut ChaCha8Rng) -> i32 {
    let f = cfg.active[rng.random_range(0..cfg.active.len())];
    let (r, c) = (f / cfg.cols, f % cfg.cols);
    let ratio = flip_ratio(cfg, weights, r, c);
    if ratio == 0.0 {
        return 0;
    }
    // draw even when ratio >= 1 so the random stream does not depend on the weights' branch
    let u: f64 = rng.random();
    if u < ratio {
        cfg.flip(r, c).unwrap()
    } else {
        0
    }
}

/// Faces that raise (`plus`) or lower (`minus`) the volume when flipped, with O(1) updates.
#[derive(Debug, Clone)]
pub struct FlipSets {
    plus: Vec<usize>,
    minus: Vec<usize>,
    slot: Vec<(i8, usize)>,
}

impl FlipSets {
    pub fn new(cfg: &DimerConfig) -> Self {
        let mut s = FlipSets { plus: Vec::new(), minus: Vec::new(), slot: vec![(0, 0); cfg.rows * cfg.cols] };
        for f in 0..cfg.rows * cfg.cols {
            s.refresh(cfg, f);
        }
        s
    }

    pub fn plus(&self) -> &[usize] {
        &self.plus
    }

    pub fn minus(&self) -> &[usize] {
        &self.minus
    }

    fn remove(&mut self, f: usize) {
        let (kind, i) = self.slot[f];
        let list = match kind {
            1 => &mut self.plus,
            -1 => &mut self.minus,
            _ => return,
        };
        list.swap_remove(i);
        if i < list.len() {
            let moved = list[i];
            self.slot[moved].1 = i;
        }
        self.slot[f] = (0, 0);
    }

    fn refresh(&mut self, cfg: &DimerConfig, f: usize) {
        self.remove(f);
        let s = cfg.flip_sign(f / cfg.cols, f % cfg.cols);
        if s > 0 {
            self.slot[f] = (1, self.plus.len());
            self.plus.push(f);
        } else if s < 0 {
            self.slot[f] = (-1, self.minus.len());
            self.minus.push(f);
        }
    }

    fn refresh_around(&mut self, cfg: &DimerConfig, f: usize) {
        let (r, c) = (f / cfg.cols, f % cfg.cols);
        self.refresh(cfg, f);
        if r > 0 {
            self.refresh(cfg, f - cfg.cols);
        }
        if r + 1 < cfg.rows {
            self.refresh(cfg, f + cfg.cols);
        }
        if c > 0 {
            self.refresh(cfg, f - 1);
        }
        if c + 1 < cfg.cols {
            self.refresh(cfg, f + 1);
        }
    }
}

fn adjacent(cols: usize, a: usize, b: usize) -> bool {
    let (ra, ca, rb, cb) = (a / cols, a % cols, b / cols, b % cols);
    ra.abs_diff(rb) + ca.abs_diff(cb) == 1
}

/// One volume-preserving pair proposal. The pair `(a, b)` is uniform over raising x lowering
/// faces; acceptance includes the Hastings factor for the changed pair counts.
pub fn mh_step_volume(cfg: &mut DimerConfig, sets: &mut FlipSets, weights: &WeightField, rng: &mut ChaCha8Rng) -> Result<bool> {
    let (np, nm) = (sets.plus.len(), sets.minus.len());
    if np == 0 || nm == 0 {
        return Err(Error::Numeric("volume-constrained chain stalled: no raising/lowering pair exists".into()));
    }
    let a = sets.plus[rng.random_range(0..np)];
    let b = sets.minus[rng.random_range(0..nm)];
    let u: f64 = rng.random();
    let cols = cfg.cols;
    if adjacent(cols, a, b) {
        // flipping one destroys the other's flippability; such a move is never valid
        return Ok(false);
    }
    let ratio = flip_ratio(cfg, weights, a / cols, a % cols) * flip_ratio(cfg, weights, b / cols, b % cols);
    cfg.flip_unchecked(a / cols, a % cols);
    cfg.flip_unchecked(b / cols, b % cols);
    sets.refresh_around(cfg, a);
    sets.refresh_around(cfg, b);
    let hastings = (np * nm) as f64 / (sets.plus.len() * sets.minus.len()) as f64;
    if u < ratio * hastings {
        Ok(true)
    } else {
        cfg.flip_unchecked(b / cols, b % cols);
        cfg.flip_unchecked(a / cols, a % cols);
        sets.refresh_around(cfg, a);
        sets.refresh_around(cfg, b);
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub sweeps: u64,
    pub seed: u64,
    /// Volume the chain is driven to before pair moves start; `None` runs single flips.
    pub volume_target: Option<f64>,
    /// Sweeps between recorded height samples (0 records only the final state).
    pub record_interval: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub final_config: DimerConfig,
    pub mean_height: HeightField,
    pub samples: u64,
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub initial_volume: f64,
    pub final_volume: f64,
    /// signed flips used to reach the volume target
    pub drive_flips: u64,
    pub seed: u64,
    pub rng: &'static str,
}

/// Run the chain; one sweep is one proposal per active face.
pub fn run_chain(spec: &ChainSpec, weights: &WeightField, init: &DimerConfig) -> Result<ChainSummary> {
    init.check()?;
    if init.active.is_empty() {
        return Err(Error::Invalid("region has no face to flip".into()));
    }
    if weights.rows != init.rows || weights.cols != init.cols {
        return Err(Error::Invalid("weight field and configuration have different patch sizes".into()));
    }
    if weights.faces.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Invalid("face weights must be positive and finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cfg = init.clone();
    let mut h = height_field(&cfg)?;
    let initial_volume = h.volume();
    let mut volume = initial_volume;
    let n = cfg.active.len();
    let mut sum = vec![0.0; cfg.rows * cfg.cols];
    let mut samples = 0u64;
    let (mut proposals, mut accepted, mut drive_flips) = (0u64, 0u64, 0u64);
    let record = |cfg: &DimerConfig, sum: &mut Vec<f64>, samples: &mut u64| -> Result<()> {
        let h = height_field(cfg)?;
        for (s, v) in sum.iter_mut().zip(&h.values) {
            *s += v;
        }
        *samples += 1;
        Ok(())
    };
    let mut sets = None;
    if let Some(target) = spec.volume_target {
        let mut s = FlipSets::new(&cfg);
        while (target - volume).abs() > 0.5 {
            let pool = if target > volume { &s.plus } else { &s.minus };
            if pool.is_empty() {
                return Err(Error::Numeric(format!("volume target {target} is unreachable: stuck at volume {volume}")));
            }
            let f = pool[rng.random_range(0..pool.len())];
            volume += cfg.flip(f / cfg.cols, f % cfg.cols)? as f64;
            s.refresh_around(&cfg, f);
            drive_flips += 1;
        }
        sets = Some(s);
    }
    for sweep in 0..spec.sweeps {
        for _ in 0..n {
            proposals += 1;
            match sets.as_mut() {
                Some(s) => {
                    if mh_step_volume(&mut cfg, s, weights, &mut rng)? {
                        accepted += 1;
                    }
                }
                None => {
                    let d = mh_step(&mut cfg, weights, &mut rng);
                    if d != 0 {
                        accepted += 1;
                        volume += d as f64;
                    }
                }
            }
        }
        if spec.record_interval > 0 && (sweep + 1) % spec.record_interval == 0 {
            record(&cfg, &mut sum, &mut samples)?;
        }
    }
    if samples == 0 {
        record(&cfg, &mut sum, &mut samples)?;
    }
    h.values = sum.iter().map(|s| s / samples as f64).collect();
    let final_volume = height_field(&cfg)?.volume();
    debug_assert!((final_volume - volume).abs() < 1e-6);
    Ok(ChainSummary {
        final_config: cfg,
        mean_height: h,
        samples,
        proposals,
        accepted,
        acceptance_rate: if proposals == 0 { 0.0 } else { accepted as f64 / proposals as f64 },
        initial_volume,
        final_volume,
        drive_flips,
        seed: spec.seed,
        rng: RNG_ALGORITHM,
    })
}

/// Corners of the Newton polygon in `(east, south)` slope coordinates.
pub const NEWTON_CORNERS: [(f64, f64); 4] = [(0.5, 0.0), (0.0, 0.5), (-0.5, 0.0), (0.0, -0.5)];

/// `true` when the slope lies strictly inside the polygon `|a| + |b| <= 1/2` by at least `margin`.
pub fn slope_inside(a: f64, b: f64, margin: f64) -> bool {
    a.abs() + b.abs() < 0.5 - margin
}

/// Distance of a slope to the nearest Newton polygon corner.
pub fn corner_distance(a: f64, b: f64) -> f64 {
    NEWTON_CORNERS.iter().map(|&(x, y)| ((a - x).powi(2) + (b - y).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
}

/// Total variation distance between two distributions on the same index set.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
