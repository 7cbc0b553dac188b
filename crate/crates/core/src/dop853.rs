//! Dormand–Prince 8(5,3) explicit Runge–Kutta step with embedded error estimates.
//! Tableau values follow Hairer's DOP853.

#[allow(dead_code)]
const C: [f64; 12] = [0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0];
const A: [[f64; 12]; 12] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0],
];
const B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];
const E3: [f64; 13] = [-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082, 0.0];
const E5: [f64; 13] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294, 0.0];

pub const SAFETY: f64 = 0.9;
pub const MIN_FACTOR: f64 = 0.2;
pub const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

/// Result of one trial step.
#[derive(Clone, Copy, Debug)]
pub struct Step<const N: usize> {
    pub y: [f64; N],
    /// Derivative at the new point, reusable as the next step's first stage.
    pub f: [f64; N],
    /// Scaled error norm; the step is acceptable when it is at most 1.
    pub error: f64,
}

/// Advances an autonomous system `y' = f(y)` by `h` from `(y, f0)`.
pub fn step<const N: usize>(
    f: &impl Fn(&[f64; N]) -> [f64; N],
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    rtol: f64,
    atol: f64,
) -> Step<N> {
    let mut k = [[0.0; N]; 13];
    k[0] = *f0;
    for s in 1..12 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(&ys);
    }
    let mut y_new = *y;
    for (s, ks) in k.iter().enumerate().take(12) {
        if B[s] != 0.0 {
            for i in 0..N {
                y_new[i] += h * B[s] * ks[i];
            }
        }
    }
    k[12] = f(&y_new);

    let mut err5 = 0.0;
    let mut err3 = 0.0;
    for i in 0..N {
        let scale = atol + y[i].abs().max(y_new[i].abs()) * rtol;
        let (mut e5, mut e3) = (0.0, 0.0);
        for s in 0..13 {
            e5 += k[s][i] * E5[s];
            e3 += k[s][i] * E3[s];
        }
        err5 += (e5 / scale).powi(2);
        err3 += (e3 / scale).powi(2);
    }
    let error = if err5 == 0.0 && err3 == 0.0 {
        0.0
    } else {
        let denom = err5 + 0.01 * err3;
        h.abs() * err5 / (denom * N as f64).sqrt()
    };
    Step { y: y_new, f: k[12], error }
}

/// Step-size multiplier after a trial step with the given error norm.
pub fn step_factor(error: f64, accepted: bool) -> f64 {
    if error == 0.0 {
        return MAX_FACTOR;
    }
    let fac = SAFETY * error.powf(ERROR_EXPONENT);
    if accepted {
        fac.clamp(MIN_FACTOR, MAX_FACTOR)
    } else {
        fac.clamp(MIN_FACTOR, 1.0)
    }
}

/// Initial step guess (Hairer, Nørsett & Wanner, II.4).
pub fn initial_step<const N: usize>(
    f: &impl Fn(&[f64; N]) -> [f64; N],
    y: &[f64; N],
    f0: &[f64; N],
    rtol: f64,
    atol: f64,
) -> f64 {
    let norm = |v: &[f64; N]| -> f64 {
        (v.iter().zip(y).map(|(a, b)| (a / (atol + b.abs() * rtol)).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = *y;
    for i in 0..N {
        y1[i] += h0 * f0[i];
    }
    let f1 = f(&y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_consistent() {
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for s in 1..12 {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-14, "row {s}");
        }
    }

    #[test]
    fn harmonic_oscillator_is_eighth_order() {
        let f = |y: &[f64; 2]| [y[1], -y[0]];
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = [1.0, 0.0];
            for _ in 0..n {
                let f0 = f(&y);
                y = step(&f, &y, &f0, h, 1e-10, 1e-12).y;
            }
            (y[0] - 1f64.cos()).abs()
        };
        let (e1, e2) = (run(4), run(8));
        let order = (e1 / e2).log2();
        assert!(order > 7.5, "observed order {order}");
    }
}
