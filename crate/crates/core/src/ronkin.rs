//! Ronkin function, surface tension and their Legendre duality through the path
//! integral `h(P) = (1/pi) Im int zeta_2 dzeta_1` on the upper half-domain.

use crate::error::{Error, Result};
use crate::quad::integrate_segment;
use crate::schottky::Circle;
use crate::surface::{AmoebaPolygonSample, HarnackData, Surface};
use crate::C64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RonkinOptions {
    pub quad_tol: f64,
    /// Clearance kept by every path segment from discs and marked points.
    pub margin: f64,
    /// Real point of the base arc used as the zero of `zeta_k`; infinity by default.
    pub base_point: f64,
}

impl Default for RonkinOptions {
    fn default() -> Self {
        RonkinOptions { quad_tol: 1e-9, margin: 1e-3, base_point: f64::INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationPath {
    pub waypoints: Vec<C64>,
}

impl IntegrationPath {
    pub fn start(&self) -> C64 {
        self.waypoints[0]
    }

    pub fn end(&self) -> C64 {
        *self.waypoints.last().unwrap()
    }

    /// Waypoints strictly between the start and the end.
    pub fn detours(&self) -> usize {
        self.waypoints.len().saturating_sub(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RonkinSample {
    pub z: C64,
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    pub s1: f64,
    pub s2: f64,
    pub h: f64,
    pub rho: f64,
    pub sigma: f64,
    pub r: C64,
    pub hess: [[f64; 2]; 2],
}

/// Harnack data on a Schottky surface, ready for path integration.
#[derive(Debug, Clone)]
pub struct Ronkin<'a> {
    surface: &'a Surface,
    harnack: HarnackData,
    opts: RonkinOptions,
    shift: (f64, f64),
    discs: Vec<Circle>,
    marks: Vec<f64>,
    q_right: f64,
    q_left: f64,
    y_low: f64,
    y_top: f64,
    alpha_orbits: Vec<Vec<(C64, C64)>>,
    beta_orbits: Vec<Vec<(C64, C64)>>,
}

/// Which product the path integral accumulates.
#[derive(Clone, Copy)]
enum Integrand {
    /// `zeta_2 dzeta_1`
    Primal,
    /// `zeta_1 dzeta_2`
    Dual,
}

fn segment_distance(a: C64, b: C64, p: C64) -> f64 {
    let d = b - a;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / l2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

impl<'a> Ronkin<'a> {
    pub fn new(surface: &'a Surface, harnack: &HarnackData, opts: RonkinOptions) -> Result<Self> {
        harnack.validate(surface.data())?;
        if !(opts.quad_tol > 0.0 && opts.margin > 0.0) {
            return Err(Error::Invalid("quad_tol and margin must be positive".into()));
        }
        let discs: Vec<Circle> = surface.data().generators.iter().map(|g| g.disc()).collect();
        let marks: Vec<f64> = harnack.marked_points().iter().map(|p| p.1).collect();
        let right = discs.iter().map(|c| c.center.re + c.radius).chain(marks.iter().cloned()).fold(f64::NEG_INFINITY, f64::max);
        let left = discs.iter().map(|c| c.center.re - c.radius).chain(marks.iter().cloned()).fold(f64::INFINITY, f64::min);
        let bottom = discs.iter().map(|c| c.center.im - c.radius).fold(f64::INFINITY, f64::min);
        let top = discs.iter().map(|c| c.center.im + c.radius).fold(0.0, f64::max);
        let mut r = Ronkin {
            surface,
            harnack: harnack.clone(),
            opts,
            shift: (0.0, 0.0),
            discs,
            marks,
            q_right: right + 1.0,
            q_left: left - 1.0,
            y_low: if bottom.is_finite() { 0.5 * bottom } else { 1.0 },
            y_top: top + opts.margin,
            alpha_orbits: harnack.alphas.iter().map(|p| surface.pair_orbit(p)).collect(),
            beta_orbits: harnack.betas.iter().map(|p| surface.pair_orbit(p)).collect(),
        };
        if opts.base_point.is_finite() {
            let b = opts.base_point;
            let lo = r.marks.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = r.marks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if b > lo && b < hi {
                return Err(Error::Invalid(format!("base point {b} is not on the base arc")));
            }
            let (z1, z2) = surface.zetas_raw(harnack, C64::new(b, 0.0));
            r.shift = (z1.re, z2.re);
        }
        Ok(r)
    }

    pub fn surface(&self) -> &Surface {
        self.surface
    }

    pub fn harnack(&self) -> &HarnackData {
        &self.harnack
    }

    pub fn options(&self) -> RonkinOptions {
        self.opts
    }

    fn on_base_arc(&self, z: C64) -> bool {
        z.im == 0.0 && self.marks.iter().all(|&m| z.re > m) || z.im == 0.0 && self.marks.iter().all(|&m| z.re < m)
    }

    fn segment_ok(&self, a: C64, b: C64) -> bool {
        let m = self.opts.margin;
        if a.im < 0.0 || b.im < 0.0 {
            return false;
        }
        if self.discs.iter().any(|c| segment_distance(a, b, c.center) < c.radius + m) {
            return false;
        }
        // running along the real axis must not pass a marked point
        !self.marks.iter().any(|&p| segment_distance(a, b, C64::new(p, 0.0)) < m)
    }

    fn path_ok(&self, w: &[C64]) -> bool {
        w.windows(2).all(|s| self.segment_ok(s[0], s[1]))
    }

    /// Every admissible route the router knows for `z`, in order of preference.
    pub fn candidate_paths(&self, z: C64) -> Result<Vec<IntegrationPath>> {
        self.surface.check_point(z)?;
        if self.marks.iter().any(|&p| (z - p).norm() < self.opts.margin) {
            return Err(Error::Pole(format!("{z} is within the margin of a marked point")));
        }
        if self.surface.data().disc_clearance(z) < self.opts.margin {
            return Err(Error::InsideDisc(format!("{z} is within the margin of a disc")));
        }
        if self.on_base_arc(z) {
            let q = if z.re >= self.q_right || self.marks.iter().all(|&m| z.re > m) { self.q_right } else { self.q_left };
            return Ok(vec![IntegrationPath { waypoints: vec![C64::new(q, 0.0), z] }]);
        }
        let q = C64::new(self.q_right, 0.0);
        let y_high = self.y_top + 1.0;
        let mut cands: Vec<Vec<C64>> = Vec::new();
        if z.im >= self.y_top {
            cands.push(vec![q, C64::new(self.q_right, z.im), z]);
        }
        for y in [self.y_low, y_high] {
            cands.push(vec![q, C64::new(self.q_right, y), C64::new(z.re, y), z]);
        }
        let pad = 2.0 * self.opts.margin + 1e-3;
        let mut xs: Vec<f64> = self
            .discs
            .iter()
            .flat_map(|c| [c.center.re - c.radius - pad, c.center.re + c.radius + pad])
            .collect();
        xs.sort_by(|a, b| (a - z.re).abs().total_cmp(&(b - z.re).abs()));
        for y in [y_high, self.y_low] {
            for &x in &xs {
                cands.push(vec![q, C64::new(self.q_right, y), C64::new(x, y), C64::new(x, z.im), z]);
            }
        }
        let out: Vec<IntegrationPath> = cands
            .into_iter()
            .filter(|w| self.path_ok(w))
            .map(|mut w| {
                w.dedup();
                IntegrationPath { waypoints: w }
            })
            .collect();
        if out.is_empty() {
            return Err(Error::Numeric(format!("no admissible integration path to {z}")));
        }
        Ok(out)
    }

    pub fn build_path(&self, z: C64) -> Result<IntegrationPath> {
        Ok(self.candidate_paths(z)?.remove(0))
    }

    fn zeta_sum(&self, alpha: bool, z: C64) -> C64 {
        let (pairs, orbits) = if alpha { (&self.harnack.alphas, &self.alpha_orbits) } else { (&self.harnack.betas, &self.beta_orbits) };
        pairs.iter().zip(orbits).map(|(p, o)| self.surface.zeta_orbit(p, o, z)).sum()
    }

    fn dzeta_sum(&self, alpha: bool, z: C64) -> C64 {
        let (pairs, orbits) = if alpha { (&self.harnack.alphas, &self.alpha_orbits) } else { (&self.harnack.betas, &self.beta_orbits) };
        pairs.iter().zip(orbits).map(|(p, o)| self.surface.dzeta_orbit(p, o, z)).sum()
    }

    fn integral(&self, path: &IntegrationPath, kind: Integrand) -> Result<C64> {
        let segs = path.waypoints.len().saturating_sub(1).max(1) as f64;
        let tol = PI * self.opts.quad_tol / segs;
        let mut total = C64::new(0.0, 0.0);
        for w in path.waypoints.windows(2) {
            let r = integrate_segment(
                |z| match kind {
                    Integrand::Primal => (self.zeta_sum(false, z) - self.shift.1) * self.dzeta_sum(true, z),
                    Integrand::Dual => (self.zeta_sum(true, z) - self.shift.0) * self.dzeta_sum(false, z),
                },
                w[0],
                w[1],
                tol,
            )?;
            total += r.value;
        }
        Ok(total)
    }

    /// `h` along an explicit path.
    pub fn h_value(&self, path: &IntegrationPath) -> Result<f64> {
        if path.waypoints.len() < 2 || !self.path_ok(&path.waypoints) {
            return Err(Error::Invalid("path leaves the admissible region".into()));
        }
        Ok(self.integral(path, Integrand::Primal)?.im / PI)
    }

    /// `(1/pi) Im int zeta_1 dzeta_2` along the path, used by the symmetric forms.
    pub fn h_dual(&self, path: &IntegrationPath) -> Result<f64> {
        Ok(self.integral(path, Integrand::Dual)?.im / PI)
    }

    pub fn amoeba(&self, z: C64) -> Result<AmoebaPolygonSample> {
        let (z1, z2) = self.zetas(z)?;
        Ok(AmoebaPolygonSample::from_zeta(z1, z2))
    }

    fn zetas(&self, z: C64) -> Result<(C64, C64)> {
        let s = self.surface.amoeba_map(&self.harnack, z)?;
        Ok((C64::new(s.x1 - self.shift.0, s.y1), C64::new(s.x2 - self.shift.1, s.y2)))
    }

    pub fn r_ratio(&self, z: C64) -> Result<C64> {
        let (d1, d2) = self.surface.dzetas(&self.harnack, z)?;
        if d2.norm() == 0.0 {
            return Err(Error::Pole(format!("dzeta_2 vanishes at {z}")));
        }
        Ok(d1 / d2)
    }

    pub fn sample(&self, z: C64) -> Result<RonkinSample> {
        let path = self.build_path(z)?;
        let h = self.h_value(&path)?;
        let a = self.amoeba(z)?;
        let r = self.r_ratio(z)?;
        let rho = -h + a.x2 * a.y1 / PI;
        let sigma = h - a.x1 * a.y2 / PI;
        let k = 1.0 / (PI * r.im);
        let hess = [[k, -k * r.re], [-k * r.re, k * r.norm_sqr()]];
        Ok(RonkinSample { z, x1: a.x1, x2: a.x2, y1: a.y1, y2: a.y2, s1: a.s1, s2: a.s2, h, rho, sigma, r, hess })
    }

    /// The symmetric explicit form of `sigma`, built from both path integrals.
    pub fn sigma_explicit(&self, z: C64) -> Result<f64> {
        let path = self.build_path(z)?;
        let a = self.amoeba(z)?;
        let h = self.h_value(&path)?;
        let hd = self.h_dual(&path)?;
        Ok(0.5 * (h - hd) + (a.x2 * a.y1 - a.x1 * a.y2) / (2.0 * PI))
    }

    fn newton(&self, start: C64, target: [f64; 2], polygon: bool) -> Result<C64> {
        let eval = |z: C64| -> Result<[f64; 2]> {
            let (z1, z2) = self.zetas(z)?;
            Ok(if polygon { [z1.im - target[0], z2.im - target[1]] } else { [z1.re - target[0], z2.re - target[1]] })
        };
        let mut z = start;
        let mut f = eval(z)?;
        for _ in 0..100 {
            let norm = f[0].hypot(f[1]);
            if norm < 1e-13 * (1.0 + target[0].abs() + target[1].abs()) {
                return Ok(z);
            }
            let (d1, d2) = self.surface.dzetas(&self.harnack, z)?;
            // rows: components, columns: (du, dv)
            let j = if polygon { [[d1.im, d1.re], [d2.im, d2.re]] } else { [[d1.re, -d1.im], [d2.re, -d2.im]] };
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                return Err(Error::NoRoot(format!("singular Jacobian at {z}")));
            }
            let du = (j[1][1] * f[0] - j[0][1] * f[1]) / det;
            let dv = (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
            let mut t = 1.0;
            loop {
                let cand = z - C64::new(du, dv) * t;
                let ok = cand.im > 0.0 && self.surface.data().disc_clearance(cand) > 0.0;
                if ok {
                    if let Ok(fc) = eval(cand) {
                        if fc[0].hypot(fc[1]) < norm {
                            z = cand;
                            f = fc;
                            break;
                        }
                    }
                }
                t *= 0.5;
                if t < 1e-12 {
                    return Err(Error::NoRoot(format!("Newton stalled at {z} with residual {norm:.3e}")));
                }
            }
        }
        Err(Error::NoRoot(format!("Newton did not converge from {start}")))
    }

    /// Point with amoeba coordinates `x`, found by damped Newton from `start`.
    pub fn invert_amoeba(&self, x: [f64; 2], start: C64) -> Result<C64> {
        self.newton(start, x, false)
    }

    /// Point with imaginary parts `y`, found by damped Newton from `start`.
    pub fn invert_polygon(&self, y: [f64; 2], start: C64) -> Result<C64> {
        self.newton(start, y, true)
    }

    pub fn rho_at(&self, x: [f64; 2], start: C64) -> Result<(f64, C64)> {
        let z = self.invert_amoeba(x, start)?;
        Ok((self.sample(z)?.rho, z))
    }

    /// `sigma` as a function of polygon coordinates `s`.
    pub fn sigma_at(&self, s: [f64; 2], start: C64) -> Result<(f64, C64)> {
        let z = self.invert_polygon([PI * s[1], -PI * s[0]], start)?;
        Ok((self.sample(z)?.sigma, z))
    }

    fn grad_rho_fd(&self, x: [f64; 2], start: C64, d: f64) -> Result<[f64; 2]> {
        let mut g = [0.0; 2];
        for k in 0..2 {
            let mut p = x;
            let mut m = x;
            p[k] += d;
            m[k] -= d;
            g[k] = (self.rho_at(p, start)?.0 - self.rho_at(m, start)?.0) / (2.0 * d);
        }
        Ok(g)
    }

    fn grad_sigma_fd(&self, s: [f64; 2], start: C64, d: f64) -> Result<[f64; 2]> {
        let mut g = [0.0; 2];
        for k in 0..2 {
            let mut p = s;
            let mut m = s;
            p[k] += d;
            m[k] -= d;
            g[k] = (self.sigma_at(p, start)?.0 - self.sigma_at(m, start)?.0) / (2.0 * d);
        }
        Ok(g)
    }

    /// `|Div(grad sigma o grad rho) - 2|` at the amoeba point of `z`, all derivatives by
    /// central differences with step `fd_step` (the inner polygon step is scaled by the
    /// local Hessian so both stencils have comparable resolution).
    pub fn euler_lagrange_residual(&self, z: C64, fd_step: f64) -> Result<f64> {
        let c = self.sample(z)?;
        let x = [c.x1, c.x2];
        let ds = fd_step * (c.hess[0][0] + c.hess[1][1]) * 0.5;
        let field = |p: [f64; 2]| -> Result<[f64; 2]> {
            let zs = self.invert_amoeba(p, z).map_err(|e| Error::Numeric(format!("stencil leaves the amoeba: {e}")))?;
            let s = self.grad_rho_fd(p, zs, fd_step)?;
            self.grad_sigma_fd(s, zs, ds)
        };
        let mut div = 0.0;
        for k in 0..2 {
            let mut p = x;
            let mut m = x;
            p[k] += fd_step;
            m[k] -= fd_step;
            div += (field(p)?[k] - field(m)?[k]) / (2.0 * fd_step);
        }
        Ok((div - 2.0).abs())
    }
}
