//! Scalar special functions: the standard normal law, its quantile, Owen's T
//! and the bivariate normal CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::num::quad;

/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Correlations this close to +-1 are treated as exactly degenerate.
const RHO_DEGENERATE: f64 = 1e-12;

/// Above this truncation point the pre-integrated ratio is computed by
/// quadrature instead of a difference of bivariate probabilities.
const RATIO_QUAD_THRESHOLD: f64 = 3.0;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `ln(1 - Phi(x))` without underflow for any finite `x`.
pub fn log_norm_sf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x < -5.0 {
        (-norm_cdf(x)).ln_1p()
    } else if x <= 37.0 {
        norm_sf(x).ln()
    } else if x.is_finite() {
        // Asymptotic Mills-ratio expansion; the next term is below 1e-13 here.
        let e = 1.0 / (x * x);
        let series = 1.0 - e * (1.0 - 3.0 * e * (1.0 - 5.0 * e * (1.0 - 7.0 * e)));
        -0.5 * x * x - x.ln() - LN_SQRT_2PI + series.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln Phi(x)`.
pub fn log_norm_cdf(x: f64) -> f64 {
    log_norm_sf(-x)
}

/// Inverse Mills ratio `phi(a) / (1 - Phi(a))`, i.e. the mean of a standard
/// normal truncated to `[a, inf)`.
pub fn inv_mills(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else if a <= RATIO_QUAD_THRESHOLD {
        (log_norm_pdf(a) - log_norm_sf(a)).exp()
    } else {
        let tail = mills_tail(a);
        a + tail[1]
    }
}

/// Backward evaluation of the Laplace continued fraction
/// `T_k = k / (a + T_{k+1})`, returning `[_, T_1, T_2, T_3]`.
/// `1 - Phi(a) = phi(a) / (a + T_1)`.
fn mills_tail(a: f64) -> [f64; 4] {
    let depth = if a > 10.0 { 60 } else { 240 };
    let mut t = 0.0;
    let mut out = [0.0; 4];
    for k in (1..=depth).rev() {
        t = k as f64 / (a + t);
        if k <= 3 {
            out[k] = t;
        }
    }
    out
}

/// Mean and variance of `N(mu, var)` truncated to `[lower, inf)`.
pub fn trunc_norm_moments_1d(mu: f64, var: f64, lower: f64) -> Result<(f64, f64)> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Domain(format!("variance must be positive, got {var}")));
    }
    if lower == f64::NEG_INFINITY {
        return Ok((mu, var));
    }
    let sd = var.sqrt();
    let alpha = (lower - mu) / sd;
    let (lambda, factor) = if alpha <= RATIO_QUAD_THRESHOLD {
        let lambda = inv_mills(alpha);
        (lambda, 1.0 + alpha * lambda - lambda * lambda)
    } else {
        // 1 + a*lambda - lambda^2 cancels badly for large a; rewrite through
        // the continued-fraction tails: factor = (T_2 - T_1) / (a + T_2).
        let [_, t1, t2, t3] = mills_tail(alpha);
        let diff = (alpha + 2.0 * t2 - t3) / ((alpha + t3) * (alpha + t2));
        (alpha + t1, diff / (alpha + t2))
    };
    Ok((mu + sd * lambda, var * factor.clamp(0.0, 1.0)))
}

/// Standard normal quantile (Wichura's AS 241, PPND16). Returns `-inf`/`inf`
/// at 0/1 and NaN outside `[0, 1]`.
pub fn norm_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    if tail == 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let x = quantile_tail(tail);
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// `-Phi^{-1}(tail)` for `0 < tail <= 0.075`, i.e. the positive upper quantile.
fn quantile_tail(tail: f64) -> f64 {
    let mut r = (-tail.ln()).sqrt();
    if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    }
}

/// Checked standard normal quantile.
pub fn norm_inv_cdf(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(norm_quantile(p))
    } else {
        Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")))
    }
}

/// `x` with `ln(1 - Phi(x)) = log_tail`, for tails too small to represent.
fn norm_isf_log(log_tail: f64) -> f64 {
    let mut x = (-2.0 * log_tail).sqrt();
    for _ in 0..50 {
        // d/dx ln(1 - Phi(x)) = -inv_mills(x)
        let step = (log_norm_sf(x) - log_tail) / inv_mills(x);
        x += step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// Draw from a standard normal truncated to `[a, inf)` by inversion:
/// `Phi^{-1}(Phi(a) + u (1 - Phi(a)))`, evaluated on whichever side keeps
/// full relative precision. The result is strictly greater than `a`.
pub fn trunc_norm_quantile_above(a: f64, u: f64) -> f64 {
    trunc_norm_draw_above(a, u).0
}

/// [`trunc_norm_quantile_above`] together with `1 - Phi(a)`, sharing one
/// tail evaluation. The tail is returned as `0.0` once it drops below
/// `1e-300`; callers then need [`log_norm_sf`].
pub(crate) fn trunc_norm_draw_above(a: f64, u: f64) -> (f64, f64) {
    let (z, sf) = if a < 0.0 {
        let cdf = norm_cdf(a);
        let sf = 1.0 - cdf;
        let p = cdf + u * sf;
        let z = if p < 0.5 { norm_quantile(p) } else { -norm_quantile(sf * (1.0 - u)) };
        (z, sf)
    } else {
        let sf = norm_sf(a);
        let q = sf * (1.0 - u);
        if q > 1e-300 {
            (-norm_quantile(q), sf)
        } else {
            (norm_isf_log(log_norm_sf(a) + (-u).ln_1p()), 0.0)
        }
    };
    (if z > a { z } else { a.next_up() }, sf)
}

/// Draw from a standard normal truncated to `[lo, hi]` by inversion.
pub fn trunc_norm_quantile(lo: f64, hi: f64, u: f64) -> f64 {
    if hi == f64::INFINITY {
        return trunc_norm_quantile_above(lo, u);
    }
    if lo == f64::NEG_INFINITY {
        return -trunc_norm_quantile_above(-hi, 1.0 - u);
    }
    let z = if lo >= 0.0 {
        // upper tail: work with survival probabilities
        let (slo, shi) = (norm_sf(lo), norm_sf(hi));
        let q = slo - u * (slo - shi);
        if q > 1e-300 {
            -norm_quantile(q)
        } else {
            lo + (hi - lo) * u
        }
    } else if hi <= 0.0 {
        let (clo, chi) = (norm_cdf(lo), norm_cdf(hi));
        let p = clo + u * (chi - clo);
        if p > 1e-300 {
            norm_quantile(p)
        } else {
            lo + (hi - lo) * u
        }
    } else {
        let (clo, chi) = (norm_cdf(lo), norm_cdf(hi));
        norm_quantile(clo + u * (chi - clo))
    };
    z.clamp(lo, hi)
}

/// Owen's T function `T(h, a) = (1/2pi) int_0^a exp(-h^2 (1+t^2)/2) / (1+t^2) dt`.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return a.signum() * 0.5 * norm_sf(h.abs());
    }
    owens_t::owens_t(h, a)
}

/// `P(Z1 <= x, Z2 <= y)` for a standard bivariate normal with correlation `rho`.
pub fn bvn_prob(x: f64, y: f64, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(Error::Domain(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    if x.is_nan() || y.is_nan() {
        return Err(Error::Domain("bivariate normal limits must not be NaN".into()));
    }
    Ok(bvn_cdf(x, y, rho))
}

/// Unchecked bivariate normal CDF through Owen's T decomposition.
pub(crate) fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    if rho >= 1.0 - RHO_DEGENERATE {
        return norm_cdf(x.min(y));
    }
    if rho <= -1.0 + RHO_DEGENERATE {
        return (norm_cdf(x) - norm_cdf(-y)).max(0.0);
    }
    if x == 0.0 && y == 0.0 {
        return 0.25 + rho.asin() / (2.0 * PI);
    }
    bvn_owen(x, y, rho, norm_cdf(y))
}

/// Owen's T decomposition for finite `x`, `y` and non-degenerate `rho`,
/// given `Phi(y)`.
fn bvn_owen(x: f64, y: f64, rho: f64, cdf_y: f64) -> f64 {
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let tx = if x == 0.0 {
        0.25 * y.signum()
    } else {
        owens_t(x, (y - rho * x) / (x * s))
    };
    let ty = if y == 0.0 {
        0.25 * x.signum()
    } else {
        owens_t(y, (x - rho * y) / (y * s))
    };
    let beta = if x * y > 0.0 || (x * y == 0.0 && x + y >= 0.0) {
        0.0
    } else {
        0.5
    };
    (0.5 * norm_cdf(x) + 0.5 * cdf_y - tx - ty - beta).clamp(0.0, 1.0)
}

/// `int_{a}^{inf} Phi(g z + s) phi(z) dz`: the last SOV coordinate integrated
/// out in closed form. Equals `P(V <= s / sqrt(1+g^2), Z >= a)` with
/// `corr(V, Z) = -g / sqrt(1+g^2)`.
pub fn preintegrate_last(g: f64, s: f64, a: f64) -> f64 {
    let scale = (1.0 + g * g).sqrt();
    bvn_cdf(s / scale, -a, g / scale)
}

/// `E[Phi(g Z + s) | Z >= a]` for standard normal `Z`, i.e.
/// `preintegrate_last(g, s, a) / (1 - Phi(a))`, accurate in absolute terms
/// even when `1 - Phi(a)` is tiny.
pub fn preintegrate_ratio(g: f64, s: f64, a: f64) -> f64 {
    if g == 0.0 {
        return norm_cdf(s);
    }
    if a <= RATIO_QUAD_THRESHOLD {
        return (preintegrate_last(g, s, a) / norm_sf(a)).clamp(0.0, 1.0);
    }
    // Z = a + t has density proportional to exp(-a t - t^2/2) on t >= 0.
    let upper = -a + (a * a + 90.0).sqrt();
    let mills = 1.0 / (a + mills_tail(a)[1]);
    let num = quad::integrate(
        |t| norm_cdf(g * (a + t) + s) * (-a * t - 0.5 * t * t).exp(),
        0.0,
        upper,
        1e-14 * mills,
    );
    (num / mills).clamp(0.0, 1.0)
}

/// `(ln(1 - Phi(a)), preintegrate_ratio(g, s, a))` sharing the tail
/// evaluation.
pub(crate) fn preintegrate_with_tail(g: f64, s: f64, a: f64) -> (f64, f64) {
    if g == 0.0 || a > RATIO_QUAD_THRESHOLD || !a.is_finite() || !s.is_finite() {
        return (log_norm_sf(a), preintegrate_ratio(g, s, a));
    }
    let scale = (1.0 + g * g).sqrt();
    let rho = g / scale;
    let sf = norm_sf(a);
    if rho.abs() >= 1.0 - RHO_DEGENERATE {
        return (sf.ln(), preintegrate_ratio(g, s, a));
    }
    let x = s / scale;
    let joint = if x == 0.0 && a == 0.0 {
        0.25 + rho.asin() / (2.0 * PI)
    } else {
        bvn_owen(x, -a, rho, sf)
    };
    (sf.ln(), (joint / sf).clamp(0.0, 1.0))
}
