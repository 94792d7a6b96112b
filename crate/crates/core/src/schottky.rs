//! Classical Schottky groups in U2 form: generators with fixed points `A`, `conj(A)`
//! and real multiplier `mu`, reduced words, coset filters and the oval circles.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// One generator `sigma` given by `(sigma z - B)/(sigma z - A) = mu (z - B)/(z - A)` with `B = conj(A)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub a: C64,
    pub mu: f64,
}

impl Generator {
    pub fn new(re: f64, im: f64, mu: f64) -> Self {
        Generator { a: C64::new(re, im), mu }
    }

    /// The attracting fixed point `B = conj(A)`.
    pub fn b(&self) -> C64 {
        self.a.conj()
    }

    /// Circle `C` around `A` with `sigma(C) = conj(C)`; it is the hole of the upper half domain.
    pub fn disc(&self) -> Circle {
        let s = self.mu.sqrt();
        Circle {
            center: (self.a - self.b() * self.mu) / (1.0 - self.mu),
            radius: s * (self.a - self.b()).norm() / (1.0 - self.mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
}

impl Circle {
    pub fn point(&self, t: f64) -> C64 {
        self.center + C64::from_polar(self.radius, t)
    }

    pub fn conj(&self) -> Circle {
        Circle { center: self.center.conj(), radius: self.radius }
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchottkyData {
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ImaginaryPart { index: usize },
    Multiplier { index: usize },
    NotFinite { index: usize },
    DiscOverlap { first: usize, second: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ImaginaryPart { index } => write!(f, "generator {index}: Im(A) must be positive"),
            Violation::Multiplier { index } => write!(f, "generator {index}: mu must lie in (0, 1)"),
            Violation::NotFinite { index } => write!(f, "generator {index}: non-finite parameter"),
            Violation::DiscOverlap { first, second } => {
                write!(f, "disc-disjointness violated for pair ({first}, {second})")
            }
        }
    }
}

/// Checks every generator and pairwise constraint; an empty list means the data is admissible.
pub fn validate_u2(data: &SchottkyData) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, g) in data.generators.iter().enumerate() {
        if !(g.a.re.is_finite() && g.a.im.is_finite() && g.mu.is_finite()) {
            out.push(Violation::NotFinite { index: i });
            continue;
        }
        if g.a.im <= 0.0 {
            out.push(Violation::ImaginaryPart { index: i });
        }
        if !(g.mu > 0.0 && g.mu < 1.0) {
            out.push(Violation::Multiplier { index: i });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for i in 0..data.generators.len() {
        for j in i + 1..data.generators.len() {
            let (ci, cj) = (data.generators[i].disc(), data.generators[j].disc());
            if (ci.center - cj.center).norm() <= ci.radius + cj.radius {
                out.push(Violation::DiscOverlap { first: i, second: j });
            }
        }
    }
    out
}

/// Point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ext {
    Finite(C64),
    Infinity,
}

impl Ext {
    pub fn finite(self) -> Option<C64> {
        match self {
            Ext::Finite(z) => Some(z),
            Ext::Infinity => None,
        }
    }
}

/// Projective 2x2 complex matrix acting by `(a z + b)/(c z + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusMap {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl MobiusMap {
    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        MobiusMap { a: o, b: z, c: z, d: o }
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn compose(&self, other: &MobiusMap) -> MobiusMap {
        MobiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
        .normalized()
    }

    /// Divides by the entry of largest modulus.
    pub fn normalized(self) -> MobiusMap {
        let m = [self.a, self.b, self.c, self.d]
            .into_iter()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap();
        if m.norm() == 0.0 {
            return self;
        }
        MobiusMap { a: self.a / m, b: self.b / m, c: self.c / m, d: self.d / m }
    }

    pub fn inverse(&self) -> MobiusMap {
        MobiusMap { a: self.d, b: -self.b, c: -self.c, d: self.a }.normalized()
    }

    pub fn apply(&self, z: Ext) -> Ext {
        match z {
            Ext::Infinity => {
                if self.c.norm() == 0.0 {
                    Ext::Infinity
                } else {
                    Ext::Finite(self.a / self.c)
                }
            }
            Ext::Finite(z) => {
                let den = self.c * z + self.d;
                if den.norm() == 0.0 {
                    Ext::Infinity
                } else {
                    Ext::Finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    /// Finite-input shortcut; returns a non-finite value at the pole.
    pub fn at(&self, z: C64) -> C64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    pub fn derivative(&self, z: C64) -> C64 {
        let den = self.c * z + self.d;
        self.det() / (den * den)
    }

    /// Projective distance to another map (zero iff equal up to scalar).
    pub fn projective_distance(&self, other: &MobiusMap) -> f64 {
        let p = self.normalized();
        let q = other.normalized();
        let ps = [p.a, p.b, p.c, p.d];
        let qs = [q.a, q.b, q.c, q.d];
        let k = (0..4).max_by(|&i, &j| ps[i].norm().total_cmp(&ps[j].norm())).unwrap();
        if qs[k].norm() == 0.0 {
            return f64::INFINITY;
        }
        let s = ps[k] / qs[k];
        (0..4).map(|i| (ps[i] - qs[i] * s).norm()).fold(0.0, f64::max)
    }
}

/// Reduced word `sigma_{i1}^{j1} ... sigma_{ik}^{jk}` with zero-based generator indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupWord {
    pub letters: Vec<(usize, i32)>,
}

impl GroupWord {
    pub fn identity() -> Self {
        GroupWord { letters: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn mass(&self) -> u32 {
        self.letters.iter().map(|&(_, e)| e.unsigned_abs()).sum()
    }

    pub fn is_reduced(&self) -> bool {
        self.letters.iter().all(|&(_, e)| e != 0) && self.letters.windows(2).all(|w| w[0].0 != w[1].0)
    }

    /// Word obtained by inverting every exponent in place (the complex-conjugate group element).
    pub fn bar(&self) -> GroupWord {
        GroupWord { letters: self.letters.iter().map(|&(i, e)| (i, -e)).collect() }
    }

    pub fn concat(&self, other: &GroupWord) -> GroupWord {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        GroupWord { letters }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosetFilter {
    FullGroup,
    /// `G/G_n`: the last letter is not a power of `sigma_n`.
    RightCoset(usize),
    /// `G_m\G/G_n`: first letter not in `G_m`, last letter not in `G_n`.
    DoubleCoset(usize, usize),
    DoubleCosetExcludingIdentity(usize, usize),
}

impl CosetFilter {
    fn check(&self, g: usize) -> Result<()> {
        let bad = |i: usize| if i >= g { Err(Error::Index { index: i, genus: g }) } else { Ok(()) };
        match *self {
            CosetFilter::FullGroup => Ok(()),
            CosetFilter::RightCoset(n) => bad(n),
            CosetFilter::DoubleCoset(m, n) | CosetFilter::DoubleCosetExcludingIdentity(m, n) => {
                bad(m)?;
                bad(n)
            }
        }
    }

    pub fn accepts(&self, w: &GroupWord) -> bool {
        let first = w.letters.first().map(|l| l.0);
        let last = w.letters.last().map(|l| l.0);
        match *self {
            CosetFilter::FullGroup => true,
            CosetFilter::RightCoset(n) => last != Some(n),
            CosetFilter::DoubleCoset(m, n) => first != Some(m) && last != Some(n),
            CosetFilter::DoubleCosetExcludingIdentity(m, n) => {
                !w.is_identity() && first != Some(m) && last != Some(n)
            }
        }
    }
}

impl SchottkyData {
    pub fn new(generators: Vec<Generator>) -> Self {
        SchottkyData { generators }
    }

    pub fn genus(&self) -> usize {
        self.generators.len()
    }

    /// Matrix of `sigma_n^exponent`.
    pub fn generator_map(&self, n: usize, exponent: i32) -> Result<MobiusMap> {
        let g = self.generators.get(n).ok_or(Error::Index { index: n, genus: self.genus() })?;
        if exponent == 0 {
            return Ok(MobiusMap::identity());
        }
        let (a, b) = (g.a, g.b());
        let one = C64::new(1.0, 0.0);
        // T z = (z - B)/(z - A); sigma^e = T^{-1} diag(mu^e, 1) T.
        let (p, q) = if exponent > 0 {
            (C64::new(g.mu.powi(exponent), 0.0), one)
        } else {
            (one, C64::new(g.mu.powi(-exponent), 0.0))
        };
        let t = MobiusMap { a: one, b: -b, c: one, d: -a };
        let tinv = MobiusMap { a: -a, b, c: -one, d: one };
        let dg = MobiusMap { a: p, b: C64::new(0.0, 0.0), c: C64::new(0.0, 0.0), d: q };
        Ok(tinv.compose(&dg).compose(&t))
    }

    pub fn word_map(&self, w: &GroupWord) -> Result<MobiusMap> {
        let mut m = MobiusMap::identity();
        for &(i, e) in &w.letters {
            m = m.compose(&self.generator_map(i, e)?);
        }
        Ok(m)
    }

    /// Every reduced word of exponent mass at most `max_letters` accepted by `filter`,
    /// ordered by mass and then lexicographically.
    pub fn enumerate_words(&self, max_letters: u32, filter: CosetFilter) -> Result<Vec<(GroupWord, MobiusMap)>> {
        let g = self.genus();
        filter.check(g)?;
        let mut powers = Vec::new();
        for i in 0..g {
            for k in 1..=max_letters as i32 {
                powers.push((i, k, self.generator_map(i, k)?));
                powers.push((i, -k, self.generator_map(i, -k)?));
            }
        }
        let mut out = Vec::new();
        let mut stack = vec![(GroupWord::identity(), MobiusMap::identity(), 0u32)];
        while let Some((w, m, mass)) = stack.pop() {
            let last = w.letters.last().map(|l| l.0);
            for (i, e, pm) in &powers {
                let em = e.unsigned_abs();
                if Some(*i) == last || mass + em > max_letters {
                    continue;
                }
                let mut nw = w.clone();
                nw.letters.push((*i, *e));
                stack.push((nw, m.compose(pm), mass + em));
            }
            if filter.accepts(&w) {
                out.push((w, m));
            }
        }
        out.sort_by(|x, y| x.0.mass().cmp(&y.0.mass()).then_with(|| x.0.cmp(&y.0)));
        Ok(out)
    }

    /// Oval circle of generator `n`: the fixed set of `z -> sigma_n^{-1}(conj z)`, in the upper
    /// half plane. Its conjugate is the fixed set of `z -> sigma_n(conj z)`.
    pub fn oval_circle(&self, n: usize) -> Result<Circle> {
        let m = self.generator_map(n, 1)?;
        // sigma(z) = conj(z)  <=>  c|z|^2 + d conj(z) - a z - b = 0
        if m.c.norm() < 1e-300 {
            return Err(Error::Invalid(format!("generator {n}: fixed set is a line")));
        }
        let center = -m.d / m.c;
        let other = (m.a / m.c).conj();
        if (center - other).norm() > 1e-8 * (1.0 + center.norm()) {
            return Err(Error::Invalid(format!("generator {n}: fixed set is not a circle")));
        }
        let r2 = center.norm_sqr() + m.b / m.c;
        if r2.re <= 0.0 || r2.im.abs() > 1e-8 * (1.0 + r2.re.abs()) {
            return Err(Error::Invalid(format!("generator {n}: empty fixed set")));
        }
        let c = Circle { center, radius: r2.re.sqrt() };
        if c.center.im - c.radius <= 0.0 {
            return Err(Error::Invalid(format!("generator {n}: oval meets the real axis")));
        }
        Ok(c)
    }

    /// Index of the open disc containing `z` (upper or lower), if any.
    pub fn disc_containing(&self, z: C64) -> Option<usize> {
        self.generators.iter().position(|g| {
            let d = g.disc();
            d.contains(z) || d.conj().contains(z)
        })
    }

    /// Distance from `z` to the nearest disc boundary in the upper half plane (infinite for g = 0).
    pub fn disc_clearance(&self, z: C64) -> f64 {
        self.generators
            .iter()
            .map(|g| {
                let d = g.disc();
                (z - d.center).norm() - d.radius
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Number of reduced words with exponent mass at most `l` in the free group of rank `g`.
pub fn reduced_word_count(g: usize, l: u32) -> usize {
    // a[k] = words of mass exactly k; a word of mass k ends in a power of some generator.
    // e[k] = words of mass k whose last letter uses a fixed generator (same for all by symmetry).
    if g == 0 {
        return 1;
    }
    let l = l as usize;
    let mut total = vec![0usize; l + 1];
    let mut ending = vec![0usize; l + 1];
    total[0] = 1;
    for k in 1..=l {
        let mut e = 0;
        for p in 1..=k {
            // append sigma_i^{+-p} to a word of mass k-p not ending in generator i
            let prev = total[k - p] - if k - p == 0 { 0 } else { ending[k - p] };
            e += 2 * prev;
        }
        ending[k] = e;
        total[k] = g * e;
    }
    total.iter().sum()
}
