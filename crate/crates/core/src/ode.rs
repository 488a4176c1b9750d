//! Dormand–Prince 5(4) integrator for small fixed-size systems.

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-12,
            rtol: 0.0,
            max_steps: 100_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, starting with step `h0`.
/// Returns the final state and the last accepted step size, or `None` if the
/// step size collapses or the step budget runs out.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    t1: f64,
    y0: [f64; N],
    h0: f64,
    opts: &OdeOptions,
) -> Option<([f64; N], f64)> {
    let span = t1 - t0;
    if span == 0.0 {
        return Some((y0, h0));
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = h0.abs().min(span.abs()) * dir;
    let mut k1 = f(t, &y);
    let h_min = 1e-14 * span.abs();
    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Some((y, h.abs()));
        }
        let last = (t + h - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }
        let k2 = f(t + C2 * h, &axpy(&y, &[(h * A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, &[(h * A31, &k1), (h * A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &axpy(&y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &axpy(
                &y,
                &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
            ),
        );
        let k6 = f(
            t + h,
            &axpy(
                &y,
                &[
                    (h * A61, &k1),
                    (h * A62, &k2),
                    (h * A63, &k3),
                    (h * A64, &k4),
                    (h * A65, &k5),
                ],
            ),
        );
        let y_new = axpy(
            &y,
            &[(h * B1, &k1), (h * B3, &k3), (h * B4, &k4), (h * B5, &k5), (h * B6, &k6)],
        );
        let t_new = if last { t1 } else { t + h };
        let k7 = f(t_new, &y_new);
        let mut err = 0.0f64;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.2;
            if h.abs() < h_min {
                return None;
            }
            continue;
        }
        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h *= fac;
            } else {
                return Some((y, (h * fac).abs()));
            }
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h.abs() < h_min {
                return None;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_period() {
        let opts = OdeOptions::default();
        let (y, _) = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            2.0 * std::f64::consts::PI,
            [1.0, 0.0],
            0.1,
            &opts,
        )
        .unwrap();
        assert_relative_eq!(y[0], 1.0, epsilon = 1e-10);
        assert!(y[1].abs() < 1e-10);
    }

    #[test]
    fn exponential_growth_with_relative_tolerance() {
        let opts = OdeOptions {
            atol: 0.0,
            rtol: 1e-12,
            max_steps: 10_000,
        };
        let (y, _) = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, 5.0, [1.0], 0.5, &opts).unwrap();
        assert_relative_eq!(y[0], 5f64.exp(), max_relative = 1e-10);
    }
}
