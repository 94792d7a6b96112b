//! Square-lattice dimer model with theta-function edge weights.
//!
//! Geometry lives on the diamond graph in doubled coordinates: black vertices of the
//! dimer graph sit at (even, even), white vertices at (odd, odd) and faces at mixed
//! parity. Vertical strands cross the x axis at `2i + 1/2` (label `alpha_i^-`, pointing
//! down) and `2i + 3/2` (`alpha_i^+`, pointing up); horizontal strands cross the y axis at
//! `2j + 1/2` (`beta_j^-`, pointing right) and `2j + 3/2` (`beta_j^+`, pointing left).
//! Labels repeat with period `m` in x and `n` in y.
//!
//! The sampler works on an axis-aligned face grid. Sampler vertex `(r, c)` is the diamond
//! site `(r + c, c - r)` and sampler face `(r, c)` is `(r + c + 1, c - r)`, shifted by an
//! even origin. Faces with `r + c` even hold an alpha pair, the others a beta pair.

use crate::error::{Error, Result};
use crate::surface::{HarnackData, Mark, Surface, TrackPair};
use crate::theta::{theta, theta_char, theta_real, Characteristic, PeriodMatrix, DEFAULT_TOL};
use crate::C64;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn kind(&self) -> SiteKind {
        match (self.x.rem_euclid(2), self.y.rem_euclid(2)) {
            (0, 0) => SiteKind::Black,
            (1, 1) => SiteKind::White,
            (1, 0) => SiteKind::Face(FaceType::AlphaPair),
            _ => SiteKind::Face(FaceType::BetaPair),
        }
    }

    pub fn offset(&self, dx: i64, dy: i64) -> Site {
        Site { x: self.x + dx, y: self.y + dy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Black,
    White,
    Face(FaceType),
}

/// The two square face types: between two blacks side by side in x (crossed by
/// `alpha_i^-` and `alpha_i^+`) or in y (crossed by `beta_j^-` and `beta_j^+`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceType {
    AlphaPair,
    BetaPair,
}

/// Placement of a sampler patch on the diamond lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PatchMap {
    pub origin: Site,
}

impl PatchMap {
    pub fn new(origin: Site) -> Result<Self> {
        if origin.kind() != SiteKind::Black {
            return Err(Error::Invalid("patch origin must be a black site".into()));
        }
        Ok(PatchMap { origin })
    }

    pub fn vertex(&self, r: i64, c: i64) -> Site {
        self.origin.offset(r + c, c - r)
    }

    pub fn face(&self, r: i64, c: i64) -> Site {
        self.origin.offset(r + c + 1, c - r)
    }
}

/// Harnack data arranged on the square lattice: `m` alpha pairs across x, `n` beta pairs across y.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareLattice {
    harnack: HarnackData,
}

impl SquareLattice {
    pub fn new(harnack: HarnackData) -> Result<Self> {
        harnack.check_clusters()?;
        Ok(SquareLattice { harnack })
    }

    /// No cluster check; used to evaluate sign conditions on arbitrary points.
    pub fn unchecked(harnack: HarnackData) -> Self {
        SquareLattice { harnack }
    }

    pub fn harnack(&self) -> &HarnackData {
        &self.harnack
    }

    pub fn m(&self) -> usize {
        self.harnack.alphas.len()
    }

    pub fn n(&self) -> usize {
        self.harnack.betas.len()
    }

    fn alpha(&self, i: i64) -> (usize, &TrackPair) {
        let k = i.rem_euclid(self.m() as i64) as usize;
        (k, &self.harnack.alphas[k])
    }

    fn beta(&self, j: i64) -> (usize, &TrackPair) {
        let k = j.rem_euclid(self.n() as i64) as usize;
        (k, &self.harnack.betas[k])
    }

    /// Strand labels of edge `(w, b)` in prime-form order: rotating counterclockwise from
    /// the direction `w -> b`, the first label met comes first.
    pub fn edge_labels(&self, w: Site, b: Site) -> Result<(Mark, Mark)> {
        let (sx, sy) = (w.x - b.x, w.y - b.y);
        if b.kind() != SiteKind::Black || w.kind() != SiteKind::White || sx.abs() != 1 || sy.abs() != 1 {
            return Err(Error::Invalid(format!("({w:?}, {b:?}) is not a white-black edge")));
        }
        let i = b.x.div_euclid(2);
        let j = b.y.div_euclid(2);
        let a = if sx == 1 { Mark::AlphaMinus(self.alpha(i).0) } else { Mark::AlphaPlus(self.alpha(i - 1).0) };
        let bt = if sy == 1 { Mark::BetaMinus(self.beta(j).0) } else { Mark::BetaPlus(self.beta(j - 1).0) };
        Ok(if sx == sy { (a, bt) } else { (bt, a) })
    }

    /// The four sampler edges of a face as `(white, black)` pairs in the order N, E, S, W.
    pub fn face_edges(&self, f: Site) -> Result<[(Site, Site); 4]> {
        if !matches!(f.kind(), SiteKind::Face(_)) {
            return Err(Error::Invalid(format!("{f:?} is not a face")));
        }
        let split = |p: Site, q: Site| if p.kind() == SiteKind::White { (p, q) } else { (q, p) };
        Ok([
            split(f.offset(-1, 0), f.offset(0, 1)),
            split(f.offset(0, 1), f.offset(1, 0)),
            split(f.offset(0, -1), f.offset(1, 0)),
            split(f.offset(-1, 0), f.offset(0, -1)),
        ])
    }
}

/// Sampler-direction neighbours of a face: N, E, S, W.
pub fn face_neighbours(f: Site) -> [Site; 4] {
    [f.offset(-1, 1), f.offset(1, 1), f.offset(1, -1), f.offset(-1, -1)]
}

/// The two faces adjacent to edge `(w, b)`.
pub fn edge_faces(w: Site, b: Site) -> [Site; 2] {
    [Site::new(w.x, b.y), Site::new(b.x, w.y)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSign {
    pub face_type: FaceType,
    /// sign of `K_E K_W / (K_N K_S)`, or 0 if some factor vanishes
    pub sign: i8,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KasteleynReport {
    /// worst case over all label combinations, one entry per face type
    pub faces: Vec<FaceSign>,
}

impl KasteleynReport {
    pub fn pass(&self) -> bool {
        self.faces.iter().all(|f| f.pass)
    }
}

/// Sign conditions for both square face types, evaluated on the marked points with the
/// genus-zero prime form `b - a` (the sign is unchanged under cyclic-order preserving moves).
pub fn kasteleyn_check(lattice: &SquareLattice) -> KasteleynReport {
    let h = lattice.harnack();
    let x = |m: Mark| h.point(m);
    let mut faces = Vec::new();
    for (t, site) in [(FaceType::AlphaPair, Site::new(1, 0)), (FaceType::BetaPair, Site::new(0, 1))] {
        let mut worst = FaceSign { face_type: t, sign: -1, pass: true };
        for i in 0..lattice.m() as i64 {
            for j in 0..lattice.n() as i64 {
                let f = site.offset(2 * i, 2 * j);
                let edges = lattice.face_edges(f).unwrap();
                let e: Vec<f64> = edges
                    .iter()
                    .map(|&(w, b)| {
                        let (p, q) = lattice.edge_labels(w, b).unwrap();
                        x(q) - x(p)
                    })
                    .collect();
                let r = e[1] * e[3] / (e[0] * e[2]);
                let sign = if r.is_finite() && r != 0.0 { r.signum() as i8 } else { 0 };
                if sign != -1 {
                    worst = FaceSign { face_type: t, sign, pass: false };
                }
            }
        }
        faces.push(worst);
    }
    KasteleynReport { faces }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightOptions {
    /// Real shift `D` of the theta arguments; empty means zero.
    pub d: Vec<f64>,
    pub theta_tol: f64,
    /// Odd characteristic of the gauge-fixed prime form; defaults to `[e_1/2; e_1/2]`.
    pub characteristic: Option<Characteristic>,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions { d: Vec::new(), theta_tol: DEFAULT_TOL, characteristic: None }
    }
}

/// Discrete Abel map sampled on a sampler patch.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaField {
    pub rows: usize,
    pub cols: usize,
    /// row-major, `rows * cols`
    pub faces: Vec<Vec<f64>>,
    /// row-major, `(rows + 1) * (cols + 1)`
    pub vertices: Vec<Vec<f64>>,
}

/// Positive edge weights and face weights on a sampler patch.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub rows: usize,
    pub cols: usize,
    /// `nu` on horizontal edges, `(rows + 1) * cols`, edge `(r, c)` joins vertices `(r, c)` and `(r, c + 1)`
    pub horizontal: Vec<f64>,
    /// `nu` on vertical edges, `rows * (cols + 1)`, edge `(r, c)` joins vertices `(r, c)` and `(r + 1, c)`
    pub vertical: Vec<f64>,
    /// `W_f = nu(E) nu(W) / (nu(N) nu(S))`, `rows * cols`
    pub faces: Vec<f64>,
    /// Discrete Abel map of each face (empty vectors for genus zero or synthetic fields).
    pub face_eta: Vec<Vec<f64>>,
}

impl WeightField {
    pub fn from_edges(rows: usize, cols: usize, horizontal: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        if horizontal.len() != (rows + 1) * cols || vertical.len() != rows * (cols + 1) {
            return Err(Error::Invalid("edge weight arrays do not match the patch".into()));
        }
        if horizontal.iter().chain(&vertical).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid("edge weights must be positive and finite".into()));
        }
        let mut faces = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let n = horizontal[r * cols + c];
                let s = horizontal[(r + 1) * cols + c];
                let w = vertical[r * (cols + 1) + c];
                let e = vertical[r * (cols + 1) + c + 1];
                faces.push(e * w / (n * s));
            }
        }
        Ok(WeightField { rows, cols, horizontal, vertical, faces, face_eta: vec![Vec::new(); rows * cols] })
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self::from_edges(rows, cols, vec![1.0; (rows + 1) * cols], vec![1.0; rows * (cols + 1)]).unwrap()
    }

    pub fn face(&self, r: usize, c: usize) -> f64 {
        self.faces[r * self.cols + c]
    }

    pub fn horizontal_edge(&self, r: usize, c: usize) -> f64 {
        self.horizontal[r * self.cols + c]
    }

    pub fn vertical_edge(&self, r: usize, c: usize) -> f64 {
        self.vertical[r * (self.cols + 1) + c]
    }

    /// Multiply every edge at sampler vertex `(r, c)` by `lambda`.
    pub fn gauge(&mut self, r: usize, c: usize, lambda: f64) {
        let cols = self.cols;
        if c < cols {
            self.horizontal[r * cols + c] *= lambda;
        }
        if c > 0 {
            self.horizontal[r * cols + c - 1] *= lambda;
        }
        if r < self.rows {
            self.vertical[r * (cols + 1) + c] *= lambda;
        }
        if r > 0 {
            self.vertical[(r - 1) * (cols + 1) + c] *= lambda;
        }
    }
}

/// Edge weights, Baker-Akhiezer functions and the associated identities on one surface.
#[derive(Debug, Clone)]
pub struct FockModel {
    surface: Surface,
    lattice: SquareLattice,
    period: Option<PeriodMatrix>,
    characteristic: Option<Characteristic>,
    d: Vec<f64>,
    tol: f64,
    abel_alpha: Vec<(Vec<f64>, Vec<f64>)>,
    abel_beta: Vec<(Vec<f64>, Vec<f64>)>,
    /// `eta` along one period in x and y, indexed by doubled coordinate `0..=2m`
    eta_x: Vec<Vec<f64>>,
    eta_y: Vec<Vec<f64>>,
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scaled(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| x * k).collect()
}

fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

impl FockModel {
    pub fn new(surface: Surface, lattice: SquareLattice, opts: WeightOptions) -> Result<Self> {
        lattice.harnack().validate(surface.data())?;
        let g = surface.genus();
        let d = if opts.d.is_empty() { vec![0.0; g] } else { opts.d.clone() };
        if d.len() != g || d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("D must be a finite real vector of length {g}")));
        }
        let (period, characteristic) = if g == 0 {
            (None, None)
        } else {
            let (b, _) = surface.period_matrix()?;
            let ch = match opts.characteristic {
                Some(c) => c,
                None => Characteristic::odd_unit(g, 0)?,
            };
            if ch.delta1.len() != g || !ch.is_odd() {
                return Err(Error::Invalid("the prime form needs an odd characteristic of matching genus".into()));
            }
            (Some(b), Some(ch))
        };
        let abel = |x: f64| surface.abel_real(x);
        let abel_alpha = lattice
            .harnack()
            .alphas
            .iter()
            .map(|p| Ok((abel(p.p_minus)?, abel(p.p_plus)?)))
            .collect::<Result<Vec<_>>>()?;
        let abel_beta = lattice
            .harnack()
            .betas
            .iter()
            .map(|p| Ok((abel(p.p_minus)?, abel(p.p_plus)?)))
            .collect::<Result<Vec<_>>>()?;
        let walk = |pairs: &[(Vec<f64>, Vec<f64>)]| {
            let mut out = vec![vec![0.0; g]];
            for (minus, plus) in pairs {
                let last = out.last().unwrap().clone();
                let mid = add(&last, minus);
                out.push(mid.clone());
                out.push(sub(&mid, plus));
            }
            out
        };
        let eta_x = walk(&abel_alpha);
        let eta_y = walk(&abel_beta);
        Ok(FockModel { surface, lattice, period, characteristic, d, tol: opts.theta_tol, abel_alpha, abel_beta, eta_x, eta_y })
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn lattice(&self) -> &SquareLattice {
        &self.lattice
    }

    pub fn genus(&self) -> usize {
        self.surface.genus()
    }

    pub fn period_matrix(&self) -> Option<&PeriodMatrix> {
        self.period.as_ref()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Real Abel map of a marked point (base point infinity).
    pub fn abel_mark(&self, m: Mark) -> &[f64] {
        match m {
            Mark::AlphaMinus(i) => &self.abel_alpha[i].0,
            Mark::AlphaPlus(i) => &self.abel_alpha[i].1,
            Mark::BetaMinus(j) => &self.abel_beta[j].0,
            Mark::BetaPlus(j) => &self.abel_beta[j].1,
        }
    }

    fn eta_axis(table: &[Vec<f64>], pos: i64) -> Vec<f64> {
        let per = (table.len() - 1) as i64;
        let q = pos.div_euclid(per);
        let r = pos.rem_euclid(per) as usize;
        add(&table[r], &scaled(&table[per as usize], q as f64))
    }

    /// Discrete Abel map at a diamond site, zero at the black vertex at the origin.
    pub fn eta(&self, s: Site) -> Vec<f64> {
        add(&Self::eta_axis(&self.eta_x, s.x), &Self::eta_axis(&self.eta_y, s.y))
    }

    pub fn eta_field(&self, rows: usize, cols: usize, map: &PatchMap) -> EtaField {
        let mut faces = Vec::with_capacity(rows * cols);
        for r in 0..rows as i64 {
            for c in 0..cols as i64 {
                faces.push(self.eta(map.face(r, c)));
            }
        }
        let mut vertices = Vec::with_capacity((rows + 1) * (cols + 1));
        for r in 0..=rows as i64 {
            for c in 0..=cols as i64 {
                vertices.push(self.eta(map.vertex(r, c)));
            }
        }
        EtaField { rows, cols, faces, vertices }
    }

    /// Sum of `A(alpha_i^-) - A(alpha_i^+)` and of `A(beta_j^-) - A(beta_j^+)` over one period.
    pub fn period_shifts(&self) -> (Vec<f64>, Vec<f64>) {
        (self.eta_x.last().unwrap().clone(), self.eta_y.last().unwrap().clone())
    }

    /// Distances of both period shifts to the integer lattice, stacked (`2g` entries in `[0, 1/2]`).
    pub fn periodicity_residual(&self) -> Vec<f64> {
        let (a, b) = self.period_shifts();
        a.iter().chain(&b).map(|&v| dist_to_int(v)).collect()
    }

    fn theta_pos(&self, eta: &[f64]) -> Result<f64> {
        match &self.period {
            None => Ok(1.0),
            Some(b) => theta_real(&add(eta, &self.d), b, self.tol),
        }
    }

    /// Gauge-fixed prime form `theta[Delta](A(q) - A(p))` of two marked points; `q - p` in genus zero.
    /// Evaluated in a canonical order so that antisymmetry holds bit for bit.
    pub fn prime_marks(&self, p: Mark, q: Mark) -> Result<f64> {
        let h = self.lattice.harnack();
        if h.point(p) > h.point(q) {
            return Ok(-self.prime_marks(q, p)?);
        }
        match (&self.period, &self.characteristic) {
            (Some(b), Some(ch)) => {
                let u: Vec<C64> = sub(self.abel_mark(q), self.abel_mark(p)).into_iter().map(|v| C64::new(v, 0.0)).collect();
                Ok(theta_char(ch, &u, b, self.tol)?.re)
            }
            _ => Ok(self.lattice.harnack().point(q) - self.lattice.harnack().point(p)),
        }
    }

    /// Gauge-fixed prime form between two points of the closed upper half-domain.
    pub fn prime(&self, p: C64, q: C64) -> Result<C64> {
        match (&self.period, &self.characteristic) {
            (Some(b), Some(ch)) => {
                let ap = self.abel_point(p)?;
                let aq = self.abel_point(q)?;
                let u: Vec<C64> = aq.iter().zip(&ap).map(|(x, y)| x - y).collect();
                theta_char(ch, &u, b, self.tol)
            }
            _ => Ok(q - p),
        }
    }

    fn abel_point(&self, p: C64) -> Result<Vec<C64>> {
        self.surface.check_point(p)?;
        Ok(self.surface.abel_lift(p))
    }

    fn theta_complex(&self, z: &[C64]) -> Result<C64> {
        match &self.period {
            None => Ok(C64::new(1.0, 0.0)),
            Some(b) => theta(z, b, self.tol),
        }
    }

    /// Signed edge weight `E^(alpha, beta) / (theta(eta(f1) + D) theta(eta(f2) + D))`.
    pub fn edge_weight(&self, w: Site, b: Site) -> Result<f64> {
        let (p, q) = self.lattice.edge_labels(w, b)?;
        let e = self.prime_marks(p, q)?;
        if e == 0.0 {
            return Err(Error::Numeric(format!("prime form vanishes on edge ({w:?}, {b:?})")));
        }
        let [f1, f2] = edge_faces(w, b);
        Ok(e / (self.theta_pos(&self.eta(f1))? * self.theta_pos(&self.eta(f2))?))
    }

    /// Face weight from the closed theta-ratio form, with the face's own Abel value replaced by `eta_f`.
    pub fn face_weight_at(&self, f: Site, eta_f: &[f64]) -> Result<f64> {
        let edges = self.lattice.face_edges(f)?;
        let mut e = [0.0; 4];
        for (k, &(w, b)) in edges.iter().enumerate() {
            let (p, q) = self.lattice.edge_labels(w, b)?;
            e[k] = self.prime_marks(p, q)?;
        }
        let base = self.eta(f);
        let th: Vec<f64> = face_neighbours(f)
            .iter()
            .map(|&nb| self.theta_pos(&add(eta_f, &sub(&self.eta(nb), &base))))
            .collect::<Result<_>>()?;
        let w = -(e[1] * e[3]) / (e[0] * e[2]) * th[0] * th[2] / (th[1] * th[3]);
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Numeric(format!("face weight at {f:?} is {w}; Kasteleyn sign condition fails")));
        }
        Ok(w)
    }

    /// `W_f = nu(E) nu(W) / (nu(N) nu(S))` through the closed theta-ratio form.
    pub fn face_weight(&self, f: Site) -> Result<f64> {
        self.face_weight_at(f, &self.eta(f))
    }

    /// Face weight as the alternating product of the signed edge weights.
    pub fn face_weight_alternating(&self, f: Site) -> Result<f64> {
        let edges = self.lattice.face_edges(f)?;
        let k: Vec<f64> = edges.iter().map(|&(w, b)| self.edge_weight(w, b)).collect::<Result<_>>()?;
        Ok((k[1] * k[3] / (k[0] * k[2])).abs())
    }

    pub fn weight_field(&self, rows: usize, cols: usize, map: &PatchMap) -> Result<WeightField> {
        let edge = |p: Site, q: Site| -> Result<f64> {
            let (w, b) = if p.kind() == SiteKind::White { (p, q) } else { (q, p) };
            Ok(self.edge_weight(w, b)?.abs())
        };
        let mut horizontal = Vec::with_capacity((rows + 1) * cols);
        for r in 0..=rows as i64 {
            for c in 0..cols as i64 {
                horizontal.push(edge(map.vertex(r, c), map.vertex(r, c + 1))?);
            }
        }
        let mut vertical = Vec::with_capacity(rows * (cols + 1));
        for r in 0..rows as i64 {
            for c in 0..=cols as i64 {
                vertical.push(edge(map.vertex(r, c), map.vertex(r + 1, c))?);
            }
        }
        let mut field = WeightField::from_edges(rows, cols, horizontal, vertical)?;
        for r in 0..rows {
            for c in 0..cols {
                let f = map.face(r as i64, c as i64);
                // the closed form is the reference value; the edge product agrees to rounding
                field.faces[r * cols + c] = self.face_weight(f)?;
                field.face_eta[r * cols + c] = self.eta(f);
            }
        }
        Ok(field)
    }

    fn alpha_ratio(&self, p: C64, i: i64) -> Result<C64> {
        let pair = self.lattice.alpha(i).1;
        Ok(self.prime(p, C64::new(pair.p_minus, 0.0))? / self.prime(p, C64::new(pair.p_plus, 0.0))?)
    }

    fn beta_ratio(&self, p: C64, j: i64) -> Result<C64> {
        let pair = self.lattice.beta(j).1;
        Ok(self.prime(p, C64::new(pair.p_minus, 0.0))? / self.prime(p, C64::new(pair.p_plus, 0.0))?)
    }

    /// Gauge-fixed Baker-Akhiezer function at the black vertex `(i, j)` (site `(2i, 2j)`).
    pub fn ba_function(&self, i: i64, j: i64, p: C64) -> Result<C64> {
        let ap = if self.genus() == 0 { Vec::new() } else { self.abel_point(p)? };
        let shift = |eta: Vec<f64>| -> Vec<C64> { ap.iter().zip(eta.iter().zip(&self.d)).map(|(a, (e, d))| a + e + d).collect() };
        let den = self.theta_complex(&shift(vec![0.0; self.genus()]))?;
        if den.norm() < 1e-300 {
            return Err(Error::Pole(format!("theta(A(P) + D) vanishes at {p}")));
        }
        let mut psi = self.theta_complex(&shift(self.eta(Site::new(2 * i, 2 * j))))? / den;
        for k in i.min(0)..i.max(0) {
            let r = self.alpha_ratio(p, k)?;
            psi = if i > 0 { psi * r } else { psi / r };
        }
        for k in j.min(0)..j.max(0) {
            let r = self.beta_ratio(p, k)?;
            psi = if j > 0 { psi * r } else { psi / r };
        }
        Ok(psi)
    }

    /// Relative residual `|sum_k K_{w b_k} psi_{b_k}(P)| / max_k |K_{w b_k} psi_{b_k}(P)|` on the star of `w`.
    pub fn dirac_residual(&self, w: Site, p: C64) -> Result<f64> {
        if w.kind() != SiteKind::White {
            return Err(Error::Invalid(format!("{w:?} is not a white vertex")));
        }
        let mut sum = C64::new(0.0, 0.0);
        let mut scale: f64 = 0.0;
        for (dx, dy) in [(-1, -1), (1, -1), (1, 1), (-1, 1)] {
            let b = w.offset(dx, dy);
            let t = self.ba_function(b.x / 2, b.y / 2, p)? * self.edge_weight(w, b)?;
            sum += t;
            scale = scale.max(t.norm());
        }
        Ok(sum.norm() / scale)
    }

    /// White vertex north of an alpha-pair face or east of a beta-pair face.
    pub fn face_white(f: Site) -> Result<Site> {
        match f.kind() {
            SiteKind::Face(FaceType::AlphaPair) => Ok(f.offset(0, 1)),
            SiteKind::Face(FaceType::BetaPair) => Ok(f.offset(1, 0)),
            _ => Err(Error::Invalid(format!("{f:?} is not a face"))),
        }
    }

    /// Relative size of the three-term Fay sum for `P` and three points of `X_0`.
    pub fn fay_residual(&self, p: C64, a1: f64, a2: f64, a3: f64) -> Result<f64> {
        let pts = [p, C64::new(a1, 0.0), C64::new(a2, 0.0), C64::new(a3, 0.0)];
        let g = self.genus();
        let ab: Vec<Vec<C64>> = if g == 0 { vec![Vec::new(); 4] } else { pts.iter().map(|&q| self.abel_point(q)).collect::<Result<_>>()? };
        let th = |i: usize, j: usize| -> Result<C64> {
            let z: Vec<C64> = (0..g).map(|k| ab[i][k] + ab[j][k] + self.d[k]).collect();
            self.theta_complex(&z)
        };
        let terms = [
            th(2, 3)? * th(0, 1)? * self.prime(pts[2], pts[3])? * self.prime(pts[0], pts[1])?,
            th(1, 3)? * th(0, 2)? * self.prime(pts[3], pts[1])? * self.prime(pts[0], pts[2])?,
            th(1, 2)? * th(0, 3)? * self.prime(pts[1], pts[2])? * self.prime(pts[0], pts[3])?,
        ];
        let scale = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::Numeric("all Fay terms vanish (coincident points)".into()));
        }
        Ok((terms[0] + terms[1] + terms[2]).norm() / scale)
    }

    /// `z(P) = prod E(P, alpha_k^-)/E(P, alpha_k^+)` and `w(P)` likewise for beta, over one period.
    pub fn monodromies(&self, p: C64) -> Result<(C64, C64)> {
        let mut z = C64::new(1.0, 0.0);
        for k in 0..self.lattice.m() as i64 {
            z *= self.alpha_ratio(p, k)?;
        }
        let mut w = C64::new(1.0, 0.0);
        for k in 0..self.lattice.n() as i64 {
            w *= self.beta_ratio(p, k)?;
        }
        Ok((z, w))
    }

    /// Magnetic Kasteleyn matrix of one fundamental domain whose lowest black vertex is `(oi, oj)`.
    pub fn spectral_matrix(&self, z: C64, w: C64, origin: (i64, i64)) -> Result<DMatrix<C64>> {
        let (m, n) = (self.lattice.m() as i64, self.lattice.n() as i64);
        let size = (m * n) as usize;
        let mut k = DMatrix::from_element(size, size, C64::new(0.0, 0.0));
        for a in 0..m {
            for c in 0..n {
                let white = Site::new(2 * (origin.0 + a) + 1, 2 * (origin.1 + c) + 1);
                let row = (a * n + c) as usize;
                for (dx, dy) in [(-1, -1), (1, -1), (1, 1), (-1, 1)] {
                    let b = white.offset(dx, dy);
                    let (bi, bj) = (b.x / 2 - origin.0, b.y / 2 - origin.1);
                    let (qi, ri) = (bi.div_euclid(m), bi.rem_euclid(m));
                    let (qj, rj) = (bj.div_euclid(n), bj.rem_euclid(n));
                    let factor = z.powi(qi as i32) * w.powi(qj as i32);
                    k[(row, (ri * n + rj) as usize)] += factor * self.edge_weight(white, b)?;
                }
            }
        }
        Ok(k)
    }

    /// `det K~(z, w)` and the product of the row norms of `K~` (Hadamard bound).
    pub fn spectral_det(&self, z: C64, w: C64, origin: (i64, i64)) -> Result<(C64, f64)> {
        let r = self.periodicity_residual();
        if r.iter().any(|&v| v > 1e-8) {
            return Err(Error::Invalid(format!("spectral determinant needs periodic weights; residual {r:?}")));
        }
        let k = self.spectral_matrix(z, w, origin)?;
        let norm: f64 = k.row_iter().map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).product();
        Ok((k.determinant(), norm))
    }
}

/// Default movable points for the periodicity solve: the last `g` points of the
/// `alpha^-` and `beta^-` clusters (by index).
pub fn default_movable(harnack: &HarnackData, g: usize) -> Result<Vec<Mark>> {
    let (m, n) = (harnack.alphas.len(), harnack.betas.len());
    if g > m || g > n {
        return Err(Error::Invalid(format!("need at least g = {g} alpha and beta pairs, have m = {m}, n = {n}")));
    }
    let mut out: Vec<Mark> = (m - g..m).map(Mark::AlphaMinus).collect();
    out.extend((n - g..n).map(Mark::BetaMinus));
    Ok(out)
}

fn set_mark(h: &mut HarnackData, m: Mark, x: f64) {
    match m {
        Mark::AlphaMinus(i) => h.alphas[i].p_minus = x,
        Mark::AlphaPlus(i) => h.alphas[i].p_plus = x,
        Mark::BetaMinus(j) => h.betas[j].p_minus = x,
        Mark::BetaPlus(j) => h.betas[j].p_plus = x,
    }
}

/// Open interval of the real line a marked point may occupy without breaking clustering.
fn cluster_arc(h: &HarnackData, m: Mark) -> (f64, f64) {
    let vals = |f: fn(&TrackPair) -> f64, v: &[TrackPair]| v.iter().map(f).collect::<Vec<_>>();
    let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let am = vals(|p| p.p_minus, &h.alphas);
    let ap = vals(|p| p.p_plus, &h.alphas);
    let bm = vals(|p| p.p_minus, &h.betas);
    let bp = vals(|p| p.p_plus, &h.betas);
    match m {
        Mark::AlphaMinus(_) => (max(bp), f64::INFINITY),
        Mark::BetaMinus(_) => (f64::NEG_INFINITY, min(ap)),
        Mark::AlphaPlus(_) => (max(bm), min(bp)),
        Mark::BetaPlus(_) => (max(ap), min(am)),
    }
}

/// Smooth bijection from the real line onto an open interval.
fn arc_point(lo: f64, hi: f64, t: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let s = 1.0 / (1.0 + (-t).exp());
            (lo + (hi - lo) * s, (hi - lo) * s * (1.0 - s))
        }
        (true, false) => (lo + t.exp(), t.exp()),
        (false, true) => (hi - t.exp(), -t.exp()),
        _ => (t, 1.0),
    }
}

fn arc_param(lo: f64, hi: f64, x: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let s = (x - lo) / (hi - lo);
            (s / (1.0 - s)).ln()
        }
        (true, false) => (x - lo).ln(),
        (false, true) => (hi - x).ln(),
        _ => x,
    }
}

const T_RANGE: f64 = 30.0;

/// Move the selected points inside their cluster arcs until both period shifts are
/// integer vectors. Genus one uses bisection, higher genus damped Newton.
pub fn solve_periodic(surface: &Surface, harnack: &HarnackData, movable: Option<&[Mark]>, tol: f64) -> Result<HarnackData> {
    harnack.validate(surface.data())?;
    let g = surface.genus();
    if g == 0 {
        return Ok(harnack.clone());
    }
    let movable = match movable {
        Some(m) => m.to_vec(),
        None => default_movable(harnack, g)?,
    };
    let alphas: Vec<Mark> = movable.iter().cloned().filter(|m| matches!(m, Mark::AlphaMinus(_) | Mark::AlphaPlus(_))).collect();
    let betas: Vec<Mark> = movable.iter().cloned().filter(|m| matches!(m, Mark::BetaMinus(_) | Mark::BetaPlus(_))).collect();
    if alphas.len() != g || betas.len() != g {
        return Err(Error::Invalid(format!("select exactly {g} alpha points and {g} beta points to move")));
    }
    let mut h = harnack.clone();
    for (group, is_alpha) in [(alphas, true), (betas, false)] {
        solve_group(surface, &mut h, &group, is_alpha, tol)?;
    }
    h.validate(surface.data())?;
    Ok(h)
}

fn group_shift(surface: &Surface, h: &HarnackData, is_alpha: bool) -> Result<Vec<f64>> {
    let pairs = if is_alpha { &h.alphas } else { &h.betas };
    let mut s = vec![0.0; surface.genus()];
    for p in pairs {
        s = add(&s, &sub(&surface.abel_real(p.p_minus)?, &surface.abel_real(p.p_plus)?));
    }
    Ok(s)
}

fn mark_sign(m: Mark) -> f64 {
    match m {
        Mark::AlphaMinus(_) | Mark::BetaMinus(_) => 1.0,
        _ => -1.0,
    }
}

/// Damped Newton towards one integer target; `Some(residual)` when it fails.
#[allow(clippy::too_many_arguments)]
fn newton(surface: &Surface, h: &mut HarnackData, marks: &[Mark], arcs: &[(f64, f64)], t0: &[f64], target: &[f64], is_alpha: bool, tol: f64) -> Result<Option<f64>> {
    let g = surface.genus();
    let eval = |t: &[f64], h: &mut HarnackData| -> Result<Vec<f64>> {
        for (k, &m) in marks.iter().enumerate() {
            set_mark(h, m, arc_point(arcs[k].0, arcs[k].1, t[k]).0);
        }
        Ok(sub(&group_shift(surface, h, is_alpha)?, target))
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut t = t0.to_vec();
    let mut r = eval(&t, h)?;
    for _ in 0..100 {
        if norm(&r) < tol * 0.01 {
            break;
        }
        let jac = DMatrix::from_fn(g, g, |row, col| {
            let (x, dx) = arc_point(arcs[col].0, arcs[col].1, t[col]);
            mark_sign(marks[col]) * surface.omega_raw(row, C64::new(x, 0.0)).re * dx
        });
        let Some(step) = jac.lu().solve(&nalgebra::DVector::from_vec(r.clone())) else {
            return Ok(Some(norm(&r)));
        };
        let mut lambda = 1.0;
        loop {
            let cand: Vec<f64> = t.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
            if cand.iter().all(|v| v.abs() < T_RANGE) {
                let rc = eval(&cand, h)?;
                if norm(&rc) < norm(&r) {
                    t = cand;
                    r = rc;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return Ok(Some(norm(&r)));
            }
        }
    }
    eval(&t, h)?;
    Ok(if norm(&r) < tol { None } else { Some(norm(&r)) })
}

fn solve_group(surface: &Surface, h: &mut HarnackData, marks: &[Mark], is_alpha: bool, tol: f64) -> Result<()> {
    let g = surface.genus();
    let current = group_shift(surface, h, is_alpha)?;
    if current.iter().all(|&v| dist_to_int(v) < tol) {
        return Ok(());
    }
    let arcs: Vec<(f64, f64)> = marks.iter().map(|&m| cluster_arc(h, m)).collect();
    let name = if is_alpha { "alpha" } else { "beta" };
    let (m_pairs, n_pairs) = (h.alphas.len(), h.betas.len());
    let no_root = |detail: String| {
        Error::NoRoot(format!(
            "no periodic {name} configuration within the cluster arcs for m = {m_pairs}, n = {n_pairs} ({detail}); enlarge m and n"
        ))
    };
    if g == 1 {
        let m = marks[0];
        let (lo, hi) = arcs[0];
        let base = h.point(m);
        let rest = current[0] - mark_sign(m) * surface.abel_real(base)?[0];
        let value = |t: f64| -> Result<f64> { Ok(rest + mark_sign(m) * surface.abel_real(arc_point(lo, hi, t).0)?[0]) };
        let (mut a, mut b) = (-T_RANGE, T_RANGE);
        let (fa, fb) = (value(a)?, value(b)?);
        let (low, high) = (fa.min(fb), fa.max(fb));
        let k = current[0].round();
        let target = [k, k - 1.0, k + 1.0]
            .into_iter()
            .filter(|&k| k > low && k < high)
            .min_by(|x, y| (x - current[0]).abs().total_cmp(&(y - current[0]).abs()))
            .ok_or_else(|| no_root(format!("moving {m:?} sweeps the shift over ({low:.12}, {high:.12}), which contains no integer")))?;
        let increasing = fb > fa;
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            let v = value(mid)? - target;
            if (v < 0.0) == increasing {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        set_mark(h, m, arc_point(lo, hi, 0.5 * (a + b)).0);
    } else {
        let t0: Vec<f64> = marks.iter().zip(&arcs).map(|(&m, &(lo, hi))| arc_param(lo, hi, h.point(m))).collect();
        // candidate integer targets: corners of the unit cell around the current shift, nearest first
        let mut targets: Vec<Vec<f64>> = (0..1usize << g)
            .map(|bits| current.iter().enumerate().map(|(k, v)| if bits >> k & 1 == 1 { v.ceil() } else { v.floor() }).collect())
            .collect();
        let dist = |v: &Vec<f64>| v.iter().zip(&current).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        targets.sort_by(|a, b| dist(a).total_cmp(&dist(b)));
        targets.dedup();
        let original = h.clone();
        let mut best = f64::INFINITY;
        for target in &targets {
            *h = original.clone();
            match newton(surface, h, marks, &arcs, &t0, target, is_alpha, tol)? {
                None => {
                    h.check_clusters()?;
                    return Ok(());
                }
                Some(r) => best = best.min(r),
            }
        }
        *h = original;
        return Err(no_root(format!("Newton reached residual {best:.3e} at best over {} integer targets", targets.len())));
    }
    h.check_clusters()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schottky::{Generator, SchottkyData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> HarnackData {
        HarnackData::square(-2.4, -0.4, 0.4, 2.4)
    }

    fn model(gens: Vec<Generator>, h: HarnackData) -> FockModel {
        let s = Surface::new(SchottkyData::new(gens), 8).unwrap();
        FockModel::new(s, SquareLattice::new(h).unwrap(), WeightOptions::default()).unwrap()
    }

    fn g0() -> FockModel {
        model(vec![], square())
    }

    fn g1() -> FockModel {
        model(vec![Generator::new(0.25, 0.9, 0.015)], square())
    }

    fn g2() -> FockModel {
        model(vec![Generator::new(1.2, 1.3, 0.08), Generator::new(-0.4, 0.6, 0.03)], square())
    }

    /// Two-pair data on the genus-one surface, made periodic by the solver.
    pub(crate) fn periodic_g1() -> FockModel {
        let s = Surface::new(SchottkyData::new(vec![Generator::new(0.25, 0.9, 0.015)]), 8).unwrap();
        let h = HarnackData::new(
            vec![TrackPair::new(2.4, -0.4), TrackPair::new(2.0, -0.6)],
            vec![TrackPair::new(-2.4, 0.4), TrackPair::new(-3.0, 0.6)],
        );
        let p = solve_periodic(&s, &h, None, 1e-13).unwrap();
        FockModel::new(s, SquareLattice::new(p).unwrap(), WeightOptions::default()).unwrap()
    }

    #[test]
    fn site_kinds_and_patch_map() {
        let map = PatchMap::default();
        assert_eq!(map.vertex(0, 0).kind(), SiteKind::Black);
        assert_eq!(map.vertex(0, 1).kind(), SiteKind::White);
        assert_eq!(map.face(0, 0).kind(), SiteKind::Face(FaceType::AlphaPair));
        assert_eq!(map.face(0, 1).kind(), SiteKind::Face(FaceType::BetaPair));
        assert!(PatchMap::new(Site::new(1, 1)).is_err());
        // a sampler face's neighbours are the faces across its edges
        let f = map.face(3, 4);
        let nb = face_neighbours(f);
        assert_eq!(nb, [map.face(2, 4), map.face(3, 5), map.face(4, 4), map.face(3, 3)]);
    }

    #[test]
    fn star_labels_are_cyclic() {
        let l = SquareLattice::new(square()).unwrap();
        let w = Site::new(1, 1);
        let labels: Vec<(Mark, Mark)> = [(-1, -1), (1, -1), (1, 1), (-1, 1)].iter().map(|&(dx, dy)| l.edge_labels(w, w.offset(dx, dy)).unwrap()).collect();
        for k in 0..4 {
            assert_eq!(labels[k].1, labels[(k + 1) % 4].0);
        }
        assert_eq!(labels[0], (Mark::AlphaMinus(0), Mark::BetaMinus(0)));
    }

    #[test]
    fn eta_closed_and_shifts() {
        let m = g1();
        // a closed loop of diamond steps around a black vertex
        let loop_sites = [Site::new(0, 0), Site::new(1, 0), Site::new(1, 1), Site::new(0, 1), Site::new(-1, 1), Site::new(-1, 0), Site::new(0, 0)];
        let mut acc = vec![0.0];
        for w in loop_sites.windows(2) {
            acc = add(&acc, &sub(&m.eta(w[1]), &m.eta(w[0])));
        }
        assert!(dist_to_int(acc[0]) < 1e-9);
        // one period in x adds the alpha shift
        let s = m.eta(Site::new(3, 2));
        let t = m.eta(Site::new(5, 2));
        let (sa, _) = m.period_shifts();
        let expect = sub(m.abel_mark(Mark::AlphaMinus(0)), m.abel_mark(Mark::AlphaPlus(0)));
        assert!((t[0] - s[0] - sa[0]).abs() < 1e-12 && (sa[0] - expect[0]).abs() < 1e-12);
        // relation eta(w) - eta(b) = A(alpha) + A(beta) for the edge labels
        let l = m.lattice();
        let (w, b) = (Site::new(1, 1), Site::new(0, 0));
        let (p, q) = l.edge_labels(w, b).unwrap();
        let d = sub(&m.eta(w), &m.eta(b));
        assert!((d[0] - m.abel_mark(p)[0] - m.abel_mark(q)[0]).abs() < 1e-12);
        assert!(g0().eta(Site::new(7, -3)).is_empty());
    }

    #[test]
    fn random_walks_agree_mod_one() {
        let m = g2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut s = Site::new(0, 0);
            let mut acc = vec![0.0; 2];
            for _ in 0..60 {
                let (dx, dy) = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.random_range(0..4)];
                let nxt = s.offset(dx, dy);
                // one step crosses one strand
                let (pos, positive) = if dx != 0 { (s.x.min(nxt.x), dx > 0) } else { (s.y.min(nxt.y), dy > 0) };
                let l = m.lattice();
                let mark = match (dx != 0, pos.rem_euclid(2) == 0) {
                    (true, true) => Mark::AlphaMinus(l.alpha(pos.div_euclid(2)).0),
                    (true, false) => Mark::AlphaPlus(l.alpha(pos.div_euclid(2)).0),
                    (false, true) => Mark::BetaMinus(l.beta(pos.div_euclid(2)).0),
                    (false, false) => Mark::BetaPlus(l.beta(pos.div_euclid(2)).0),
                };
                let sign = if matches!(mark, Mark::AlphaMinus(_) | Mark::BetaMinus(_)) { 1.0 } else { -1.0 };
                let step = scaled(m.abel_mark(mark), if positive { sign } else { -sign });
                acc = add(&acc, &step);
                s = nxt;
            }
            let direct = m.eta(s);
            for k in 0..2 {
                assert!(dist_to_int(acc[k] - direct[k]) < 1e-9);
            }
        }
    }

    #[test]
    fn kasteleyn_signs() {
        let ok = kasteleyn_check(&SquareLattice::new(square()).unwrap());
        assert!(ok.pass());
        assert_eq!(ok.faces.len(), 2);
        let bad = kasteleyn_check(&SquareLattice::unchecked(HarnackData::square(-2.4, 0.4, -0.4, 2.4)));
        assert!(!bad.pass());
        assert!(SquareLattice::new(HarnackData::square(-2.4, 0.4, -0.4, 2.4)).is_err());
    }

    #[test]
    fn genus_zero_weights_are_cross_ratios() {
        let m = g0();
        let f = Site::new(1, 0);
        let w = m.face_weight(f).unwrap();
        assert!((w - 4.0 / 3.84).abs() < 1e-14);
        assert!((m.face_weight(Site::new(0, 1)).unwrap() - w).abs() < 1e-14);
        assert!((m.prime_marks(Mark::AlphaMinus(0), Mark::BetaMinus(0)).unwrap() + 4.8).abs() < 1e-15);
    }

    #[test]
    fn symmetric_points_give_symmetric_weights() {
        let (t, s) = (1.7, 0.3);
        let m = model(vec![], HarnackData::square(-t, -s, s, t));
        let a = m.face_weight(Site::new(1, 0)).unwrap();
        let b = m.face_weight(Site::new(0, 1)).unwrap();
        assert!((a - b).abs() < 1e-14 * a);
    }

    #[test]
    fn face_weights_positive_and_consistent() {
        for m in [g0(), g1(), g2()] {
            let map = PatchMap::default();
            let field = m.weight_field(6, 7, &map).unwrap();
            for r in 0..6 {
                for c in 0..7 {
                    let f = map.face(r as i64, c as i64);
                    let wf = field.face(r, c);
                    assert!(wf > 0.0);
                    assert!((m.face_weight_alternating(f).unwrap() - wf).abs() < 1e-10 * wf);
                    // the patch edge product gives the same gauge invariant
                    let e = field.vertical_edge(r, c + 1) * field.vertical_edge(r, c) / (field.horizontal_edge(r, c) * field.horizontal_edge(r + 1, c));
                    assert!((e - wf).abs() < 1e-10 * wf);
                }
            }
        }
    }

    #[test]
    fn antisymmetric_prime_form() {
        let m = g2();
        let a = Mark::AlphaMinus(0);
        let b = Mark::BetaPlus(0);
        assert_eq!(m.prime_marks(a, b).unwrap(), -m.prime_marks(b, a).unwrap());
    }

    #[test]
    fn characteristic_independence() {
        let s = Surface::new(SchottkyData::new(vec![Generator::new(1.2, 1.3, 0.08), Generator::new(-0.4, 0.6, 0.03)]), 8).unwrap();
        let l = SquareLattice::new(square()).unwrap();
        let m1 = FockModel::new(s.clone(), l.clone(), WeightOptions::default()).unwrap();
        let opts = WeightOptions { characteristic: Some(Characteristic::odd_unit(2, 1).unwrap()), ..Default::default() };
        let m2 = FockModel::new(s, l, opts).unwrap();
        for f in [Site::new(1, 0), Site::new(0, 1), Site::new(5, -2), Site::new(-4, 3)] {
            let (a, b) = (m1.face_weight(f).unwrap(), m2.face_weight(f).unwrap());
            assert!((a - b).abs() < 1e-10 * a, "{a} {b}");
            assert!(m1.fay_residual(C64::new(0.1, 0.0), -1.0, 2.0, 3.5).unwrap() < 1e-9);
        }
    }

    #[test]
    fn face_weight_periodic_in_eta() {
        let m = g1();
        let f = Site::new(3, 2);
        let e = m.eta(f);
        let w0 = m.face_weight_at(f, &e).unwrap();
        assert!((m.face_weight_at(f, &[e[0] + 1.0]).unwrap() - w0).abs() < 1e-8 * w0);
        assert!((m.face_weight_at(f, &[e[0] - 3.0]).unwrap() - w0).abs() < 1e-8 * w0);
        for k in 0..50 {
            assert!(m.face_weight_at(f, &[k as f64 / 50.0]).unwrap() > 0.0);
        }
    }

    #[test]
    fn face_weight_curve_alternate_surface() {
        let m = model(vec![Generator::new(0.1, 1.0, 0.02)], square());
        for f in [Site::new(1, 0), Site::new(0, 1)] {
            let w: Vec<f64> = (0..=40).map(|k| m.face_weight_at(f, &[k as f64 / 40.0]).unwrap()).collect();
            assert!(w.iter().all(|&v| v > 0.0));
            assert!((w[0] - w[40]).abs() < 1e-10 * w[0]);
            // not constant: the weights genuinely depend on eta
            let spread = w.iter().cloned().fold(0.0, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread > 1e-3);
        }
    }

    #[test]
    fn quasi_periodic_faces_agree() {
        let m = periodic_g1();
        let map = PatchMap::default();
        let a = map.face(1, 2);
        // one full period in x keeps type and labels and moves eta by an integer
        let b = a.offset(4, 0);
        assert!(dist_to_int(m.eta(a)[0] - m.eta(b)[0]) < 1e-9);
        let (wa, wb) = (m.face_weight(a).unwrap(), m.face_weight(b).unwrap());
        assert!((wa - wb).abs() < 1e-8 * wa);
    }

    #[test]
    fn fay_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [g0(), g1(), g2()] {
            for _ in 0..25 {
                let pts: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                let r = m.fay_residual(C64::new(pts[0], 0.0), pts[1], pts[2], pts[3]).unwrap();
                assert!(r < 1e-9, "{r}");
            }
            let p = C64::new(0.7, 2.9);
            assert!(m.fay_residual(p, -1.0, 0.3, 4.0).unwrap() < 1e-9);
        }
    }

    #[test]
    fn fay_symmetry_for_real_points() {
        let m = g1();
        let x = [0.3, -1.2, 2.2, 4.1];
        let base = m.fay_residual(C64::new(x[0], 0.0), x[1], x[2], x[3]).unwrap();
        let perm = m.fay_residual(C64::new(x[2], 0.0), x[0], x[3], x[1]).unwrap();
        assert!((base - perm).abs() < 1e-12);
    }

    #[test]
    fn dirac_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [g0(), g1()] {
            for _ in 0..25 {
                let w = Site::new(2 * rng.random_range(-4..4) + 1, 2 * rng.random_range(-4..4) + 1);
                let p = C64::new(rng.random_range(-3.0..3.0), rng.random_range(0.05..3.0));
                if m.surface().data().disc_clearance(p) < 0.05 {
                    continue;
                }
                let r = m.dirac_residual(w, p).unwrap();
                assert!(r < 1e-9, "{r}");
            }
        }
        let m = g1();
        let shifted = FockModel::new(m.surface().clone(), m.lattice().clone(), WeightOptions { d: vec![1.0], ..Default::default() }).unwrap();
        let p = C64::new(0.4, 1.7);
        let w = Site::new(3, -1);
        assert!((m.dirac_residual(w, p).unwrap() - shifted.dirac_residual(w, p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ba_normalization_and_transition_zero() {
        let m = g1();
        let p = C64::new(1.3, 1.1);
        assert!((m.ba_function(0, 0, p).unwrap() - 1.0).norm() < 1e-14);
        let am = m.lattice().harnack().alphas[0].p_minus;
        let near = C64::new(am, 1e-9);
        let ratio = m.ba_function(1, 0, near).unwrap() / m.ba_function(0, 0, near).unwrap();
        let far = m.ba_function(1, 0, p).unwrap();
        assert!(ratio.norm() < 1e-8 * far.norm().max(1.0));
    }

    #[test]
    fn periodicity_residuals() {
        assert!(g0().periodicity_residual().is_empty());
        let r = g1().periodicity_residual();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|&v| v > 1e-3 && v <= 0.5));
    }

    #[test]
    fn single_pair_genus_one_has_no_periodic_solution() {
        let m = g1();
        let e = solve_periodic(m.surface(), m.lattice().harnack(), None, 1e-12).unwrap_err();
        assert!(matches!(e, Error::NoRoot(_)), "{e}");
        let s = Surface::new(SchottkyData::default(), 8).unwrap();
        assert_eq!(solve_periodic(&s, &square(), None, 1e-12).unwrap(), square());
    }

    #[test]
    fn two_pair_solve_and_idempotence() {
        let m = periodic_g1();
        assert!(m.periodicity_residual().iter().all(|&v| v < 1e-10));
        let h = m.lattice().harnack().clone();
        let again = solve_periodic(m.surface(), &h, None, 1e-12).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn genus_two_newton_solve() {
        let s = Surface::new(SchottkyData::new(vec![Generator::new(1.2, 1.3, 0.08), Generator::new(-0.4, 0.6, 0.03)]), 6).unwrap();
        let h = HarnackData::new(
            vec![TrackPair::new(4.6002, -1.6375), TrackPair::new(3.2999, -1.4420), TrackPair::new(6.2307, -1.2389)],
            vec![TrackPair::new(-7.3614, -0.0420), TrackPair::new(-5.7852, -0.0736), TrackPair::new(-4.1959, 2.4184)],
        );
        let movable = [Mark::AlphaMinus(2), Mark::AlphaPlus(2), Mark::BetaMinus(2), Mark::BetaPlus(2)];
        let p = solve_periodic(&s, &h, Some(&movable), 1e-11).unwrap();
        assert_eq!(p.alphas[0], h.alphas[0]);
        assert_eq!(p.betas[1], h.betas[1]);
        let m = FockModel::new(s.clone(), SquareLattice::new(p).unwrap(), WeightOptions::default()).unwrap();
        assert!(m.periodicity_residual().iter().all(|&v| v < 1e-10));
        // the default choice (alpha^- and beta^- points only) has no root here
        assert!(matches!(solve_periodic(&s, &h, None, 1e-11), Err(Error::NoRoot(_))));
    }

    #[test]
    fn monodromy_matches_ba_shift() {
        let m = periodic_g1();
        let p = C64::new(0.6, 1.4);
        let (z, w) = m.monodromies(p).unwrap();
        let psi0 = m.ba_function(0, 0, p).unwrap();
        let zr = m.ba_function(2, 0, p).unwrap() / psi0;
        let wr = m.ba_function(0, 2, p).unwrap() / psi0;
        assert!((zr - z).norm() < 1e-10 * z.norm());
        assert!((wr - w).norm() < 1e-10 * w.norm());
    }

    #[test]
    fn spectral_curve_vanishing_and_shift() {
        let m = periodic_g1();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p = C64::new(rng.random_range(-3.0..3.0), rng.random_range(0.1..3.0));
            if m.surface().data().disc_clearance(p) < 0.1 {
                continue;
            }
            let (z, w) = m.monodromies(p).unwrap();
            let (d, norm) = m.spectral_det(z, w, (0, 0)).unwrap();
            assert!(d.norm() / norm < 1e-6, "{}", d.norm() / norm);
        }
        let (z, w) = (C64::new(0.7, 0.2), C64::new(-1.3, 0.5));
        let (d0, _) = m.spectral_det(z, w, (0, 0)).unwrap();
        let (d1, _) = m.spectral_det(z, w, (1, 0)).unwrap();
        let ratio = d1.norm() / d0.norm();
        let found = (-2..=2).any(|k| (-2..=2).any(|l| (ratio - z.norm().powi(k) * w.norm().powi(l)).abs() < 1e-9 * ratio));
        assert!(found, "{ratio}");
    }

    #[test]
    fn genus_zero_spectral_polynomial() {
        let m = g0();
        let det = |z: C64, w: C64| m.spectral_det(z, w, (0, 0)).unwrap().0;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let a = det(zero, zero);
        let b = det(one, zero) - a;
        let c = det(zero, one) - a;
        let d = det(one, one) - a - b - c;
        for v in [a, b, c, d] {
            assert!(v.norm() > 1e-6);
        }
        let (z, w) = (C64::new(0.3, -1.1), C64::new(2.0, 0.4));
        assert!((det(z, w) - (a + b * z + c * w + d * z * w)).norm() < 1e-12 * det(z, w).norm().max(1.0));
    }

    #[test]
    fn non_periodic_spectral_det_rejected() {
        assert!(g1().spectral_det(C64::new(1.0, 0.0), C64::new(1.0, 0.0), (0, 0)).is_err());
    }
}
