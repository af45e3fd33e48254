use alloc::vec::Vec;

use super::{field, jacobian, Params3, State3};
use crate::{math, Error, Result};

/// 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn col(&self, j: usize) -> State3 {
        State3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn set_col(&mut self, j: usize, v: State3) {
        self.0[0][j] = v.x;
        self.0[1][j] = v.y;
        self.0[2][j] = v.z;
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    fn mul(a: &[[f64; 3]; 3], b: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b.0[0][j] + a[i][1] * b.0[1][j] + a[i][2] * b.0[2][j];
            }
        }
        Mat3(out)
    }

    fn axpy(&self, k: f64, o: &Mat3) -> Mat3 {
        let mut out = self.0;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += k * o.0[i][j];
            }
        }
        Mat3(out)
    }
}

/// A base point with a frame of tangent vectors (the columns of `frame`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub state: State3,
    pub frame: Mat3,
}

impl Jet {
    pub fn new(state: State3) -> Self {
        Self { state, frame: Mat3::IDENTITY }
    }
}

/// Logs of the column norms removed at each orthonormalization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JetLedger {
    pub entries: Vec<[f64; 3]>,
    pub elapsed: f64,
}

impl JetLedger {
    pub fn sums(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for e in &self.entries {
            for k in 0..3 {
                s[k] += e[k];
            }
        }
        s
    }

    /// Column sums divided by the elapsed time.
    pub fn rates(&self) -> [f64; 3] {
        let s = self.sums();
        if self.elapsed > 0.0 {
            [s[0] / self.elapsed, s[1] / self.elapsed, s[2] / self.elapsed]
        } else {
            [0.0; 3]
        }
    }
}

/// Fixed-step RK4 on the combined system `x' = F(x)`, `V' = DF(x) V`.
#[derive(Debug, Clone)]
pub struct JetStepper {
    pub jet: Jet,
    p: Params3,
}

impl JetStepper {
    pub fn new(jet: Jet, p: Params3) -> Self {
        Self { jet, p }
    }

    pub fn step(&mut self, h: f64) {
        let p = &self.p;
        let Jet { state: x, frame: v } = self.jet;
        let dv = |s: &State3, m: &Mat3| Mat3::mul(&jacobian(s, p), m);
        let k1x = field(&x, p);
        let k1v = dv(&x, &v);
        let x2 = x + k1x * (0.5 * h);
        let v2 = v.axpy(0.5 * h, &k1v);
        let k2x = field(&x2, p);
        let k2v = dv(&x2, &v2);
        let x3 = x + k2x * (0.5 * h);
        let v3 = v.axpy(0.5 * h, &k2v);
        let k3x = field(&x3, p);
        let k3v = dv(&x3, &v3);
        let x4 = x + k3x * h;
        let v4 = v.axpy(h, &k3v);
        let k4x = field(&x4, p);
        let k4v = dv(&x4, &v4);
        let w = h / 6.0;
        self.jet.state = x + (k1x + (k2x + k3x) * 2.0 + k4x) * w;
        self.jet.frame = v.axpy(w, &k1v).axpy(2.0 * w, &k2v).axpy(2.0 * w, &k3v).axpy(w, &k4v);
    }
}

/// Modified Gram-Schmidt in place; returns the logs of the removed norms.
fn orthonormalize(frame: &mut Mat3, time: f64) -> Result<[f64; 3]> {
    let mut logs = [0.0; 3];
    for j in 0..3 {
        let mut v = frame.col(j);
        let before = v.norm();
        for i in 0..j {
            let q = frame.col(i);
            v = v - q * q.dot(&v);
        }
        let n = v.norm();
        // Losing ten digits to cancellation means the columns are no longer
        // numerically independent.
        if !(n.is_finite() && n > 1e-300 && n > 1e-10 * before) {
            return Err(Error::FrameCollapse { time });
        }
        frame.set_col(j, v * (1.0 / n));
        logs[j] = math::ln(n);
    }
    Ok(logs)
}

/// Advance `j` by `t` with RK4 steps of at most `dt`, orthonormalizing the
/// frame every `renorm_period` and at the end.
pub fn propagate_jet(j: Jet, p: &Params3, t: f64, renorm_period: f64, dt: f64) -> Result<(Jet, JetLedger)> {
    if !(renorm_period > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "renorm_period and dt must be > 0, got {renorm_period}, {dt}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("t must be finite and >= 0, got {t}")));
    }
    if !j.state.is_finite() || !j.frame.is_finite() {
        return Err(Error::NonFinite("jet"));
    }
    let mut ledger = JetLedger::default();
    if t == 0.0 {
        return Ok((j, ledger));
    }
    let mut st = JetStepper::new(j, *p);
    let full = math::floor(t / renorm_period) as u64;
    let rest = t - full as f64 * renorm_period;
    let run_chunk = |st: &mut JetStepper, len: f64, ledger: &mut JetLedger| -> Result<()> {
        let n = math::ceil(len / dt - 1e-9).max(1.0) as u64;
        let h = len / n as f64;
        for _ in 0..n {
            st.step(h);
        }
        ledger.elapsed += len;
        if !st.jet.state.is_finite() {
            return Err(Error::IntegrationFailure { time: ledger.elapsed, last_good: j.state });
        }
        let logs = orthonormalize(&mut st.jet.frame, ledger.elapsed)?;
        ledger.entries.push(logs);
        Ok(())
    };
    for _ in 0..full {
        run_chunk(&mut st, renorm_period, &mut ledger)?;
    }
    if rest > 1e-12 * renorm_period {
        run_chunk(&mut st, rest, &mut ledger)?;
    }
    ledger.elapsed = t;
    Ok((st.jet, ledger))
}
