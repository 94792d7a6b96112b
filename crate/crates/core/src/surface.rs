//! Holomorphic differentials, period matrix, Abel map and the third-kind integrals
//! `zeta_k` on the upper fundamental half-domain of a U2 Schottky group.

use crate::error::{Error, Result};
use crate::schottky::{validate_u2, CosetFilter, GroupWord, MobiusMap, SchottkyData};
use crate::theta::PeriodMatrix;
use crate::C64;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Minimal distance of a marked point from any disc boundary.
pub const MARK_MARGIN: f64 = 1e-6;
/// Default clipping bound for amoeba coordinates when tracing tentacles.
pub const DEFAULT_CLIP: f64 = 12.0;

/// Marked points with residue `+1` at `p_minus` and `-1` at `p_plus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPair {
    pub p_minus: f64,
    pub p_plus: f64,
}

impl TrackPair {
    pub fn new(p_minus: f64, p_plus: f64) -> Self {
        TrackPair { p_minus, p_plus }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarnackData {
    pub alphas: Vec<TrackPair>,
    pub betas: Vec<TrackPair>,
}

/// Which of the four clusters a marked point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    AlphaMinus(usize),
    AlphaPlus(usize),
    BetaMinus(usize),
    BetaPlus(usize),
}

impl HarnackData {
    pub fn new(alphas: Vec<TrackPair>, betas: Vec<TrackPair>) -> Self {
        HarnackData { alphas, betas }
    }

    /// `m = n = 1` data from the four points `beta^- < alpha^+ < beta^+ < alpha^-`.
    pub fn square(beta_minus: f64, alpha_plus: f64, beta_plus: f64, alpha_minus: f64) -> Self {
        HarnackData {
            alphas: vec![TrackPair::new(alpha_minus, alpha_plus)],
            betas: vec![TrackPair::new(beta_minus, beta_plus)],
        }
    }

    pub fn marked_points(&self) -> Vec<(Mark, f64)> {
        let mut out = Vec::new();
        for (i, a) in self.alphas.iter().enumerate() {
            out.push((Mark::AlphaMinus(i), a.p_minus));
            out.push((Mark::AlphaPlus(i), a.p_plus));
        }
        for (j, b) in self.betas.iter().enumerate() {
            out.push((Mark::BetaMinus(j), b.p_minus));
            out.push((Mark::BetaPlus(j), b.p_plus));
        }
        out
    }

    pub fn point(&self, mark: Mark) -> f64 {
        match mark {
            Mark::AlphaMinus(i) => self.alphas[i].p_minus,
            Mark::AlphaPlus(i) => self.alphas[i].p_plus,
            Mark::BetaMinus(j) => self.betas[j].p_minus,
            Mark::BetaPlus(j) => self.betas[j].p_plus,
        }
    }

    /// Cluster ordering `beta^- < alpha^+ < beta^+ < alpha^-` on the real line.
    pub fn check_clusters(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() {
            return Err(Error::Invalid("cluster ordering: need at least one alpha and one beta pair".into()));
        }
        let pts = self.marked_points();
        if pts.iter().any(|(_, x)| !x.is_finite()) {
            return Err(Error::Invalid("marked points must be finite reals".into()));
        }
        let cluster = |f: fn(&Mark) -> bool| -> Vec<f64> { pts.iter().filter(|(m, _)| f(m)).map(|p| p.1).collect() };
        let bm = cluster(|m| matches!(m, Mark::BetaMinus(_)));
        let ap = cluster(|m| matches!(m, Mark::AlphaPlus(_)));
        let bp = cluster(|m| matches!(m, Mark::BetaPlus(_)));
        let am = cluster(|m| matches!(m, Mark::AlphaMinus(_)));
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max(&bm) < min(&ap) && max(&ap) < min(&bp) && max(&bp) < min(&am)) {
            return Err(Error::Invalid(format!(
                "cluster ordering violated: need beta- {bm:?} < alpha+ {ap:?} < beta+ {bp:?} < alpha- {am:?}"
            )));
        }
        let mut sorted: Vec<f64> = pts.iter().map(|p| p.1).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("cluster ordering: marked points must be distinct".into()));
        }
        Ok(())
    }

    /// Clustering plus clearance from the Schottky discs.
    pub fn validate(&self, data: &SchottkyData) -> Result<()> {
        self.check_clusters()?;
        for (mark, x) in self.marked_points() {
            let z = C64::new(x, 0.0);
            if data.disc_clearance(z) < MARK_MARGIN {
                return Err(Error::InsideDisc(format!("marked point {mark:?} = {x} is too close to a disc")));
            }
        }
        Ok(())
    }

    /// Marked points sorted along the real line.
    pub fn sorted_points(&self) -> Vec<(Mark, f64)> {
        let mut pts = self.marked_points();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmoebaPolygonSample {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    pub s1: f64,
    pub s2: f64,
}

impl AmoebaPolygonSample {
    pub fn from_zeta(z1: C64, z2: C64) -> Self {
        AmoebaPolygonSample { x1: z1.re, x2: z2.re, y1: z1.im, y2: z2.im, s1: -z2.im / PI, s2: z1.im / PI }
    }
}

/// Diagnostics from the truncated period matrix series.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodReport {
    /// Largest `|B_nm - B_mn|` before symmetrization.
    pub asymmetry: f64,
    /// Sum of `|term|` per exponent mass over all entries.
    pub level_sums: Vec<f64>,
}

/// `log(1 + w)` without cancellation for small `w`.
pub fn cln1p(w: C64) -> C64 {
    let u = C64::new(1.0, 0.0) + w;
    if u == C64::new(1.0, 0.0) {
        w
    } else {
        u.ln() * w / (u - C64::new(1.0, 0.0))
    }
}

/// Principal `log((z - a)/(z - b))` for `a`, `b` in a common disc not containing `z`.
fn log_ratio(z: C64, a: C64, b: C64) -> C64 {
    cln1p((b - a) / (z - b))
}

/// `sum Log((z - a)/(z - b))` over orbit pairs. Factors near 1 are multiplied and logged in
/// batches whose arguments stay below `pi/3`, so the principal logs add up exactly while most
/// terms cost no logarithm.
fn orbit_log_sum(z: C64, orbit: impl Iterator<Item = (C64, C64)>) -> C64 {
    let one = C64::new(1.0, 0.0);
    let mut s = C64::new(0.0, 0.0);
    let mut prod = one;
    for (a, b) in orbit {
        let w = (b - a) / (z - b);
        if w.norm() > 0.5 {
            s += cln1p(w);
            continue;
        }
        prod *= one + w;
        if (prod - one).norm() > 0.5 {
            s += prod.ln();
            prod = one;
        }
    }
    s + cln1p(prod - one)
}

/// Upper half-plane argument in `[0, pi]`, treating a signed zero imaginary part as `+0`.
fn log_upper(w: C64) -> C64 {
    let im = if w.im == 0.0 { 0.0 } else { w.im };
    C64::new(w.re, im).ln()
}

/// A Schottky group together with its truncated word lists.
#[derive(Debug, Clone)]
pub struct Surface {
    data: SchottkyData,
    max_letters: u32,
    /// all reduced words of mass at most `max_letters`, identity excluded
    full: Vec<(GroupWord, MobiusMap)>,
    /// per generator: images `(sigma B_n, sigma A_n, mass)` for `sigma` in `G/G_n`, identity excluded
    abel_orbits: Vec<Vec<(C64, C64, u32)>>,
}

impl Surface {
    pub fn new(data: SchottkyData, max_letters: u32) -> Result<Self> {
        let bad = validate_u2(&data);
        if !bad.is_empty() {
            let msg: Vec<String> = bad.iter().map(|v| v.to_string()).collect();
            return Err(Error::Invalid(msg.join("; ")));
        }
        let full: Vec<_> = data
            .enumerate_words(max_letters, CosetFilter::FullGroup)?
            .into_iter()
            .filter(|(w, _)| !w.is_identity())
            .collect();
        let mut abel_orbits = Vec::new();
        for (n, g) in data.generators.iter().enumerate() {
            abel_orbits.push(
                full.iter()
                    .filter(|(w, _)| CosetFilter::RightCoset(n).accepts(w))
                    .map(|(w, m)| (m.at(g.b()), m.at(g.a), w.mass()))
                    .collect(),
            );
        }
        Ok(Surface { data, max_letters, full, abel_orbits })
    }

    pub fn genus(&self) -> usize {
        self.data.genus()
    }

    pub fn data(&self) -> &SchottkyData {
        &self.data
    }

    pub fn max_letters(&self) -> u32 {
        self.max_letters
    }

    /// Non-identity words of the truncated group.
    pub fn words(&self) -> &[(GroupWord, MobiusMap)] {
        &self.full
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.genus() {
            return Err(Error::Index { index: n, genus: self.genus() });
        }
        Ok(())
    }

    /// Rejects points below the real axis or inside an upper Schottky disc.
    pub fn check_point(&self, z: C64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Invalid(format!("point {z} is not finite")));
        }
        if z.im < 0.0 {
            return Err(Error::Invalid(format!("point {z} lies below the real axis")));
        }
        if let Some(i) = self.data.generators.iter().position(|g| g.disc().contains(z)) {
            return Err(Error::InsideDisc(format!("{z} (disc {i})")));
        }
        Ok(())
    }

    /// Period matrix from the double-coset series with Aitken extrapolation over the
    /// per-mass partial sums, symmetrized, with diagnostics.
    pub fn period_matrix(&self) -> Result<(PeriodMatrix, PeriodReport)> {
        self.period_matrix_with(true)
    }

    /// Same series; `accelerate = false` returns the plain truncated sum.
    pub fn period_matrix_with(&self, accelerate: bool) -> Result<(PeriodMatrix, PeriodReport)> {
        let g = self.genus();
        if g == 0 {
            return Err(Error::Invalid("period matrix needs genus at least 1".into()));
        }
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        let l = self.max_letters as usize;
        let mut raw = DMatrix::from_element(g, g, C64::new(0.0, 0.0));
        let mut levels = vec![0.0; l + 1];
        let all = self.data.enumerate_words(self.max_letters, CosetFilter::FullGroup)?;
        for n in 0..g {
            for m in 0..g {
                let (an, bn) = (self.data.generators[n].a, self.data.generators[n].b());
                let (am, bm) = (self.data.generators[m].a, self.data.generators[m].b());
                let filter = if n == m {
                    CosetFilter::DoubleCosetExcludingIdentity(m, n)
                } else {
                    CosetFilter::DoubleCoset(m, n)
                };
                let mut per_level = vec![C64::new(0.0, 0.0); l + 1];
                if n == m {
                    per_level[0] = C64::new(self.data.generators[n].mu.ln(), 0.0);
                }
                for (w, map) in all.iter().filter(|(w, _)| filter.accepts(w)) {
                    let (sb, sa) = (map.at(bn), map.at(an));
                    let cr = (bm - sb) / (sb - am) * (am - sa) / (sa - bm);
                    let t = cr.ln();
                    levels[w.mass() as usize] += t.norm();
                    per_level[w.mass() as usize] += t;
                }
                let partial: Vec<C64> = per_level
                    .iter()
                    .scan(C64::new(0.0, 0.0), |acc, t| {
                        *acc += t;
                        Some(*acc)
                    })
                    .collect();
                let s = if accelerate { aitken(&partial) } else { partial[l] };
                raw[(n, m)] = s / two_pi_i;
            }
        }
        let mut asym: f64 = 0.0;
        for i in 0..g {
            for j in 0..g {
                asym = asym.max((raw[(i, j)] - raw[(j, i)]).norm());
            }
        }
        check_levels(&levels)?;
        let sym = DMatrix::from_fn(g, g, |i, j| {
            let v = 0.5 * (raw[(i, j)] + raw[(j, i)]);
            // the series is purely imaginary up to rounding
            C64::new(if v.re.abs() < 1e-9 { 0.0 } else { v.re }, v.im)
        });
        Ok((PeriodMatrix::new(sym)?, PeriodReport { asymmetry: asym, level_sums: levels }))
    }

    /// `omega_n / dz` at `z`.
    pub fn holomorphic_differential(&self, n: usize, z: C64) -> Result<C64> {
        self.check_index(n)?;
        self.check_point(z)?;
        Ok(self.omega_raw(n, z))
    }

    /// Series for `omega_n / dz` without domain checks.
    pub fn omega_raw(&self, n: usize, z: C64) -> C64 {
        let g = &self.data.generators[n];
        let mut s = 1.0 / (z - g.b()) - 1.0 / (z - g.a);
        for &(sb, sa, _) in &self.abel_orbits[n] {
            s += 1.0 / (z - sb) - 1.0 / (z - sa);
        }
        s / C64::new(0.0, 2.0 * PI)
    }

    /// Contour integral of `omega_n` over the circle conjugate to oval `m`, counterclockwise
    /// (equivalently the oval circle itself traversed clockwise).
    pub fn a_period(&self, n: usize, m: usize, nodes: usize) -> Result<C64> {
        self.check_index(n)?;
        self.check_index(m)?;
        let c = self.data.oval_circle(m)?.conj();
        let mut s = C64::new(0.0, 0.0);
        for k in 0..nodes {
            let t = 2.0 * PI * k as f64 / nodes as f64;
            let e = C64::from_polar(1.0, t);
            s += self.omega_raw(n, c.center + e * c.radius) * C64::i() * e * c.radius;
        }
        Ok(s * (2.0 * PI / nodes as f64))
    }

    /// One fixed lift of the Abel map with base point at infinity; continuous on the real
    /// line and on the upper half-domain cut vertically above each `A_n`. The coset series
    /// is Aitken-extrapolated over its per-mass partial sums, as for the period matrix.
    pub fn abel_lift(&self, z: C64) -> Vec<C64> {
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        (0..self.genus())
            .map(|n| {
                let g = &self.data.generators[n];
                // arg(A - z) taken in (-pi/2, 3pi/2)
                let w = g.a - z;
                let mut arg = w.arg();
                if arg < -PI / 2.0 {
                    arg += 2.0 * PI;
                }
                let mut per_level = vec![C64::new(0.0, 0.0); self.max_letters as usize + 1];
                per_level[0] = (g.b() - z).ln() - C64::new(w.norm().ln(), arg);
                for &(sb, sa, mass) in &self.abel_orbits[n] {
                    per_level[mass as usize] += log_ratio(z, sb, sa);
                }
                let partial: Vec<C64> = per_level
                    .iter()
                    .scan(C64::new(0.0, 0.0), |acc, t| {
                        *acc += t;
                        Some(*acc)
                    })
                    .collect();
                aitken(&partial) / two_pi_i
            })
            .collect()
    }

    /// Real Abel map of a point of `X_0` (`f64::INFINITY` allowed), using the fixed lift.
    pub fn abel_real(&self, x: f64) -> Result<Vec<f64>> {
        if x.is_infinite() {
            return Ok(vec![0.0; self.genus()]);
        }
        let z = C64::new(x, 0.0);
        self.check_point(z)?;
        let v = self.abel_lift(z);
        for (n, a) in v.iter().enumerate() {
            if a.im.abs() > 1e-9 {
                return Err(Error::Numeric(format!("Abel map component {n} at {x} has imaginary part {}", a.im)));
            }
        }
        Ok(v.iter().map(|a| a.re).collect())
    }

    /// `int_Q^P omega_n` reduced to `[0, 1)`.
    pub fn abel_increment(&self, p: f64, q: f64, n: usize) -> Result<f64> {
        self.check_index(n)?;
        let d = self.abel_real(p)?[n] - self.abel_real(q)?[n];
        let r = d.rem_euclid(1.0);
        Ok(if r >= 1.0 { 0.0 } else { r })
    }

    /// `zeta` of one track pair with base point at infinity, no domain checks.
    pub fn zeta_raw(&self, pair: &TrackPair, z: C64) -> C64 {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return C64::new(0.0, 0.0);
        }
        let (pm, pp) = (C64::new(pair.p_minus, 0.0), C64::new(pair.p_plus, 0.0));
        let scale = pair.p_minus.abs().max(pair.p_plus.abs());
        let s = if z.norm() > 4.0 * scale + 1.0 && z.im >= 0.0 {
            log_ratio(z, pm, pp)
        } else {
            log_upper(z - pm) - log_upper(z - pp)
        };
        s + orbit_log_sum(z, self.full.iter().map(|(_, m)| (m.at(pm), m.at(pp))))
    }

    /// Images `(w p_minus, w p_plus)` of a track pair under every non-identity word.
    pub fn pair_orbit(&self, pair: &TrackPair) -> Vec<(C64, C64)> {
        let (pm, pp) = (C64::new(pair.p_minus, 0.0), C64::new(pair.p_plus, 0.0));
        self.full.iter().map(|(_, m)| (m.at(pm), m.at(pp))).collect()
    }

    /// [`Surface::zeta_raw`] with the orbit of the pair precomputed by [`Surface::pair_orbit`].
    pub fn zeta_orbit(&self, pair: &TrackPair, orbit: &[(C64, C64)], z: C64) -> C64 {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return C64::new(0.0, 0.0);
        }
        let (pm, pp) = (C64::new(pair.p_minus, 0.0), C64::new(pair.p_plus, 0.0));
        let scale = pair.p_minus.abs().max(pair.p_plus.abs());
        let s = if z.norm() > 4.0 * scale + 1.0 && z.im >= 0.0 {
            log_ratio(z, pm, pp)
        } else {
            log_upper(z - pm) - log_upper(z - pp)
        };
        s + orbit_log_sum(z, orbit.iter().copied())
    }

    /// [`Surface::dzeta_raw`] with a precomputed orbit.
    pub fn dzeta_orbit(&self, pair: &TrackPair, orbit: &[(C64, C64)], z: C64) -> C64 {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return C64::new(0.0, 0.0);
        }
        let (pm, pp) = (C64::new(pair.p_minus, 0.0), C64::new(pair.p_plus, 0.0));
        let mut s = (pm - pp) / ((z - pm) * (z - pp));
        for &(a, b) in orbit {
            s += (a - b) / ((z - a) * (z - b));
        }
        s
    }


    pub fn dzeta_raw(&self, pair: &TrackPair, z: C64) -> C64 {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return C64::new(0.0, 0.0);
        }
        let (pm, pp) = (C64::new(pair.p_minus, 0.0), C64::new(pair.p_plus, 0.0));
        let mut s = 1.0 / (z - pm) - 1.0 / (z - pp);
        for (_, m) in &self.full {
            s += 1.0 / (z - m.at(pm)) - 1.0 / (z - m.at(pp));
        }
        s
    }

    fn check_not_pole(&self, pair: &TrackPair, z: C64) -> Result<()> {
        for p in [pair.p_minus, pair.p_plus] {
            if (z - p).norm() < 1e-12 * (1.0 + p.abs()) {
                return Err(Error::Pole(format!("{z} coincides with marked point {p}")));
            }
        }
        Ok(())
    }

    pub fn zeta_pair(&self, pair: &TrackPair, z: C64) -> Result<C64> {
        self.check_point(z)?;
        self.check_not_pole(pair, z)?;
        Ok(self.zeta_raw(pair, z))
    }

    pub fn dzeta_pair(&self, pair: &TrackPair, z: C64) -> Result<C64> {
        self.check_point(z)?;
        self.check_not_pole(pair, z)?;
        Ok(self.dzeta_raw(pair, z))
    }

    /// `(zeta_1, zeta_2)` summed over the alpha and beta pairs.
    pub fn zetas_raw(&self, h: &HarnackData, z: C64) -> (C64, C64) {
        let z1 = h.alphas.iter().map(|p| self.zeta_raw(p, z)).sum();
        let z2 = h.betas.iter().map(|p| self.zeta_raw(p, z)).sum();
        (z1, z2)
    }

    pub fn dzetas_raw(&self, h: &HarnackData, z: C64) -> (C64, C64) {
        let d1 = h.alphas.iter().map(|p| self.dzeta_raw(p, z)).sum();
        let d2 = h.betas.iter().map(|p| self.dzeta_raw(p, z)).sum();
        (d1, d2)
    }

    fn check_marks(&self, h: &HarnackData, z: C64) -> Result<()> {
        self.check_point(z)?;
        for p in h.alphas.iter().chain(&h.betas) {
            self.check_not_pole(p, z)?;
        }
        Ok(())
    }

    pub fn amoeba_map(&self, h: &HarnackData, z: C64) -> Result<AmoebaPolygonSample> {
        self.check_marks(h, z)?;
        let (z1, z2) = self.zetas_raw(h, z);
        Ok(AmoebaPolygonSample::from_zeta(z1, z2))
    }

    pub fn dzetas(&self, h: &HarnackData, z: C64) -> Result<(C64, C64)> {
        self.check_marks(h, z)?;
        Ok(self.dzetas_raw(h, z))
    }

    /// Boundary images: one polyline per arc of `X_0` and one closed polyline per oval.
    pub fn trace_amoeba_boundary(&self, h: &HarnackData, samples: usize, clip: f64) -> Result<Vec<BoundaryCurve>> {
        if samples < 8 {
            return Err(Error::Invalid("samples_per_component must be at least 8".into()));
        }
        h.validate(&self.data)?;
        let mut out = Vec::new();
        // arcs of the circle R u {inf}, in the angle coordinate x = tan(t/2)
        let pts = h.sorted_points();
        let angles: Vec<f64> = pts.iter().map(|p| 2.0 * p.1.atan()).collect();
        let k = angles.len();
        for i in 0..k {
            let t0 = angles[i];
            let t1 = if i + 1 < k { angles[i + 1] } else { angles[0] + 2.0 * PI };
            let mut poly = Vec::new();
            for j in 0..samples {
                // cosine spacing toward the tentacle ends
                let u = 0.5 - 0.5 * (PI * (j as f64 + 0.5) / samples as f64).cos();
                let t = t0 + (t1 - t0) * u;
                let z = angle_to_point(t);
                let s = match z {
                    None => AmoebaPolygonSample::from_zeta(C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
                    Some(z) => {
                        let (a, b) = self.zetas_raw(h, z);
                        AmoebaPolygonSample::from_zeta(a, b)
                    }
                };
                if s.x1.abs() <= clip && s.x2.abs() <= clip {
                    poly.push((z.map(|z| z.re).unwrap_or(f64::INFINITY), s));
                }
            }
            out.push(BoundaryCurve { component: Component::Arc { from: pts[i].0, to: pts[(i + 1) % k].0 }, points: poly });
        }
        for n in 0..self.genus() {
            let c = self.data.oval_circle(n)?;
            let poly = (0..samples)
                .map(|j| {
                    let z = c.point(2.0 * PI * j as f64 / samples as f64);
                    let (a, b) = self.zetas_raw(h, z);
                    (z.re, AmoebaPolygonSample::from_zeta(a, b))
                })
                .collect();
            out.push(BoundaryCurve { component: Component::Oval(n), points: poly });
        }
        Ok(out)
    }
}

fn angle_to_point(t: f64) -> Option<C64> {
    let t = (t + PI).rem_euclid(2.0 * PI) - PI;
    if (t.abs() - PI).abs() < 1e-15 {
        None
    } else {
        Some(C64::new((t / 2.0).tan(), 0.0))
    }
}

/// Aitken delta-squared on the last three partial sums; plain last sum when the tail is not
/// geometric enough to extrapolate.
fn aitken(partial: &[C64]) -> C64 {
    let k = partial.len();
    if k < 3 {
        return partial[k - 1];
    }
    let (a, b, c) = (partial[k - 3], partial[k - 2], partial[k - 1]);
    let (d1, d2) = (b - a, c - b);
    if d1.norm() == 0.0 || d2.norm() == 0.0 {
        return c;
    }
    let r = d2 / d1;
    if r.norm() >= 0.9 || (r - 1.0).norm() < 1e-12 {
        return c;
    }
    c + d2 * r / (C64::new(1.0, 0.0) - r)
}

fn check_levels(levels: &[f64]) -> Result<()> {
    // the last two nonempty levels above the rounding floor must decay
    let live: Vec<f64> = levels.iter().cloned().filter(|v| *v > 1e-14).collect();
    if live.len() >= 2 {
        let (a, b) = (live[live.len() - 2], live[live.len() - 1]);
        if b >= 0.9 * a {
            return Err(Error::Series(format!("period matrix terms do not decay: level sums {a:.3e} then {b:.3e}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Arc { from: Mark, to: Mark },
    Oval(usize),
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::Arc { from, to } => write!(f, "arc:{}-{}", mark_name(*from), mark_name(*to)),
            Component::Oval(n) => write!(f, "oval:{n}"),
        }
    }
}

pub fn mark_name(m: Mark) -> String {
    match m {
        Mark::AlphaMinus(i) => format!("a{i}-"),
        Mark::AlphaPlus(i) => format!("a{i}+"),
        Mark::BetaMinus(j) => format!("b{j}-"),
        Mark::BetaPlus(j) => format!("b{j}+"),
    }
}

/// Sampled image of one boundary component; each entry is `(real part of z, sample)`.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub component: Component,
    pub points: Vec<(f64, AmoebaPolygonSample)>,
}
