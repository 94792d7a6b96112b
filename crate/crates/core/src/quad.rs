//! Adaptive Gauss-Kronrod 7-15 quadrature of complex integrands on line segments.

use crate::error::{Error, Result};
use crate::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: FnMut(C64) -> C64>(f: &mut F, a: C64, b: C64) -> (C64, f64) {
    let c = (a + b) * 0.5;
    let h = (b - a) * 0.5;
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let d = h * XGK[j];
        let s = f(c - d) + f(c + d);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let k = kron * h;
    (k, (k - gauss * h).norm())
}

/// Integrates `f(z) dz` along the straight segment `[a, b]`, bisecting until the
/// Gauss-Kronrod error estimate of every piece sums below `tol`.
pub fn integrate_segment<F: FnMut(C64) -> C64>(mut f: F, a: C64, b: C64, tol: f64) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: C64::new(0.0, 0.0), error: 0.0, evaluations: 0 });
    }
    let mut pieces = vec![(a, b, gk15(&mut f, a, b))];
    let mut evals = 15;
    let min_len = (b - a).norm() * 1e-12;
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if total_err < tol {
            break;
        }
        if evals > 200_000 {
            return Err(Error::Quadrature(format!("error estimate {total_err:.3e} above {tol:.3e} after {evals} evaluations")));
        }
        let (i, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (pa, pb, _) = pieces.swap_remove(i);
        if (pb - pa).norm() < min_len {
            return Err(Error::Quadrature(format!("interval collapsed near {pa} with error {total_err:.3e}")));
        }
        let mid = (pa + pb) * 0.5;
        pieces.push((pa, mid, gk15(&mut f, pa, mid)));
        pieces.push((mid, pb, gk15(&mut f, mid, pb)));
        evals += 30;
    }
    let value = pieces.iter().map(|p| p.2 .0).sum();
    let error: f64 = pieces.iter().map(|p| p.2 .1).sum();
    if !(error.is_finite()) {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok(Integral { value, error, evaluations: evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate_segment(|z| z * z, C64::new(0.0, 0.0), C64::new(1.0, 1.0), 1e-14).unwrap();
        let e = C64::new(1.0, 1.0).powi(3) / 3.0;
        assert!((r.value - e).norm() < 1e-14);
    }

    #[test]
    fn logarithmic_endpoint_behaviour() {
        let r = integrate_segment(|z| z.ln(), C64::new(1e-8, 0.0), C64::new(1.0, 0.0), 1e-10).unwrap();
        let a: f64 = 1e-8;
        let e = -1.0 - (a * a.ln() - a);
        assert!((r.value.re - e).abs() < 1e-10);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = integrate_segment(|z| (z * 30.0).sin(), C64::new(0.0, 0.0), C64::new(3.0, 0.0), 1e-12).unwrap();
        let e = (1.0 - (90.0f64).cos()) / 30.0;
        assert!((r.value.re - e).abs() < 1e-11);
    }
}
