//! Test-support oracles, deliberately independent of the library's numeric paths.
//!
//! `BigExp` is a sign-mantissa / power-of-two-exponent float with an unbounded
//! exponent range. It exists so tests can evaluate exponentially weighted sums
//! the brute-force way (raw `e^{-alpha v}` weights, no stabilization) for
//! alpha-scaled arguments far outside f64's exponent range, and compare the
//! library's stabilized implementations against that.

/// Extended-range float: `mant * 2^exp` with `mant` in +/-[1,2) or exactly 0.
#[derive(Clone, Copy, Debug)]
pub struct BigExp {
    mant: f64,
    exp: i64,
}

fn split_normal(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let be = (((bits >> 52) & 0x7ff) as i64) - 1023;
    let mant = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (mant, be)
}

fn split(x: f64) -> (f64, i64) {
    assert!(x.is_finite(), "BigExp split on non-finite value");
    if x == 0.0 {
        return (0.0, 0);
    }
    if ((x.to_bits() >> 52) & 0x7ff) == 0 {
        let (m, e) = split_normal(x * f64::powi(2.0, 64));
        (m, e - 64)
    } else {
        split_normal(x)
    }
}

impl BigExp {
    pub const ZERO: BigExp = BigExp { mant: 0.0, exp: 0 };

    pub fn from_f64(x: f64) -> BigExp {
        let (mant, exp) = split(x);
        BigExp { mant, exp }
    }

    /// `e^t` for |t| up to ~7e5 (two-part ln2 argument reduction; the
    /// reduction constant is exact for |k| < 2^20).
    pub fn exp(t: f64) -> BigExp {
        assert!(t.abs() < 7.0e5, "exp argument outside oracle domain");
        const LN2_HI: f64 = 6.93147180369123816490e-1;
        const LN2_LO: f64 = 1.90821492927058770002e-10;
        let k = (t * std::f64::consts::LOG2_E).round();
        let r = (t - k * LN2_HI) - k * LN2_LO;
        let (mant, e) = split(r.exp());
        BigExp { mant, exp: e + k as i64 }
    }

    pub fn mul(self, other: BigExp) -> BigExp {
        if self.mant == 0.0 || other.mant == 0.0 {
            return BigExp::ZERO;
        }
        let (m, e) = split(self.mant * other.mant);
        BigExp { mant: m, exp: e + self.exp + other.exp }
    }

    pub fn add(self, other: BigExp) -> BigExp {
        if self.mant == 0.0 {
            return other;
        }
        if other.mant == 0.0 {
            return self;
        }
        let (hi, lo) = if self.exp >= other.exp { (self, other) } else { (other, self) };
        let shift = hi.exp - lo.exp;
        if shift > 130 {
            return hi;
        }
        let sum = hi.mant + lo.mant * f64::powi(2.0, -(shift as i32));
        if sum == 0.0 {
            return BigExp::ZERO;
        }
        let (m, e) = split(sum);
        BigExp { mant: m, exp: e + hi.exp }
    }

    pub fn div(self, other: BigExp) -> BigExp {
        assert!(other.mant != 0.0, "BigExp division by zero");
        if self.mant == 0.0 {
            return BigExp::ZERO;
        }
        let (m, e) = split(self.mant / other.mant);
        BigExp { mant: m, exp: e + self.exp - other.exp }
    }

    pub fn to_f64(self) -> f64 {
        if self.mant == 0.0 {
            return 0.0;
        }
        if self.exp > 1100 {
            return f64::INFINITY * self.mant.signum();
        }
        if self.exp < -1100 {
            return 0.0;
        }
        self.mant * f64::powi(2.0, self.exp as i32)
    }
}

/// Brute-force weighted mean with raw weights `e^{-alpha v_i}`, evaluated in
/// extended-range arithmetic with no stabilizing shift. `points` is row-major
/// `n x d`.
pub fn weighted_mean_bigexp(points: &[f64], values: &[f64], d: usize, alpha: f64) -> Vec<f64> {
    let n = values.len();
    assert_eq!(points.len(), n * d);
    let mut den = BigExp::ZERO;
    let mut num = vec![BigExp::ZERO; d];
    for i in 0..n {
        let w = BigExp::exp(-alpha * values[i]);
        den = den.add(w);
        for k in 0..d {
            num[k] = num[k].add(w.mul(BigExp::from_f64(points[i * d + k])));
        }
    }
    num.into_iter().map(|nk| nk.div(den).to_f64()).collect()
}

/// Least-squares slope of y against x, with the standard error of the slope.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 2 && n == ys.len());
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if n == 2 {
        return (slope, 0.0);
    }
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let pred = my + slope * (x - mx);
            (y - pred) * (y - pred)
        })
        .sum();
    let se = (ss_res / ((n - 2) as f64) / sxx).sqrt();
    (slope, se)
}
