//! Adaptive Gauss–Kronrod (7/15) quadrature, scalar and vector valued.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

struct Piece {
    a: f64,
    b: f64,
    val: Vec<f64>,
    err: Vec<f64>,
}

fn gk15_vec<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    dim: usize,
    buf: &mut [f64],
) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for k in 0..dim {
        kron[k] = buf[k] * WGK[7];
        gauss[k] = buf[k] * WG[3];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        f(c - dx, buf);
        for k in 0..dim {
            kron[k] += WGK[j] * buf[k];
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * buf[k];
            }
        }
        f(c + dx, buf);
        for k in 0..dim {
            kron[k] += WGK[j] * buf[k];
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * buf[k];
            }
        }
    }
    let err = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| ((k - g) * h).abs())
        .collect();
    let val = kron.iter().map(|k| k * h).collect();
    Piece { a, b, val, err }
}

/// Integrate a vector-valued `f` over consecutive `breakpoints`, bisecting the
/// worst piece until every component satisfies `err ≤ rel·|value| + abs`.
pub(crate) fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    breakpoints: &[f64],
    dim: usize,
    rel_tol: f64,
    abs_tol: f64,
    what: &'static str,
) -> Result<Vec<f64>> {
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut buf = vec![0.0; dim];
    let mut pieces: Vec<Piece> = breakpoints
        .windows(2)
        .map(|w| gk15_vec(&mut f, w[0], w[1], dim, &mut buf))
        .collect();
    loop {
        let mut total = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        for p in &pieces {
            for k in 0..dim {
                total[k] += p.val[k];
                err[k] += p.err[k];
            }
        }
        let scale: Vec<f64> = total.iter().map(|t| rel_tol * t.abs() + abs_tol).collect();
        if (0..dim).all(|k| err[k] <= scale[k]) {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::NonConvergence {
                what,
                terms_used: pieces.len(),
                estimate: total.first().copied().unwrap_or(f64::NAN),
            });
        }
        let badness = |p: &Piece| -> f64 {
            (0..dim)
                .map(|k| p.err[k] / scale[k].max(f64::MIN_POSITIVE))
                .sum()
        };
        let worst = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (i, badness(p)))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            )
            .0;
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        pieces.push(gk15_vec(&mut f, p.a, mid, dim, &mut buf));
        pieces.push(gk15_vec(&mut f, mid, p.b, dim, &mut buf));
    }
}

/// Scalar version of [`integrate_vec`] on a single interval.
#[cfg(test)]
pub(crate) fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    what: &'static str,
) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), &[a, b], 1, rel_tol, abs_tol, what).map(|v| v[0])
}

/// `∫₀^∞ g(t) dt` through `t = e^y`, integrating `g(e^y) e^y` over
/// `[y_lo, y_hi]` split into unit-length pieces.
pub(crate) fn integrate_log_vec<F: FnMut(f64, &mut [f64])>(
    mut g: F,
    y_lo: f64,
    y_hi: f64,
    dim: usize,
    rel_tol: f64,
    what: &'static str,
) -> Result<Vec<f64>> {
    let n = ((y_hi - y_lo).ceil() as usize).max(1);
    let step = (y_hi - y_lo) / n as f64;
    let bps: Vec<f64> = (0..=n).map(|i| y_lo + step * i as f64).collect();
    integrate_vec(
        |y, out| {
            let t = y.exp();
            g(t, out);
            for v in out.iter_mut() {
                *v *= t;
            }
        },
        &bps,
        dim,
        rel_tol,
        0.0,
        what,
    )
}
