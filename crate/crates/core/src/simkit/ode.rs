//! Classical fixed-step Runge–Kutta integration.

use crate::error::{Error, Result};

/// Scratch buffers for repeated RK4 steps on a fixed-size state.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advance `state` in place by one step of size `h` from time `t`.
    pub fn step<F>(&mut self, f: &mut F, t: f64, state: &mut [f64], h: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        if !(h > 0.0) {
            return Err(Error::Numerical(format!("step must be positive, got {h}")));
        }
        let n = state.len();
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        f(t, state, &mut self.k1)?;
        check(&self.k1, t)?;
        for p in 0..n {
            self.tmp[p] = state[p] + 0.5 * h * self.k1[p];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        check(&self.k2, t)?;
        for p in 0..n {
            self.tmp[p] = state[p] + 0.5 * h * self.k2[p];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        check(&self.k3, t)?;
        for p in 0..n {
            self.tmp[p] = state[p] + h * self.k3[p];
        }
        f(t + h, &self.tmp, &mut self.k4)?;
        check(&self.k4, t)?;
        for p in 0..n {
            state[p] += h / 6.0 * (self.k1[p] + 2.0 * self.k2[p] + 2.0 * self.k3[p] + self.k4[p]);
        }
        Ok(())
    }
}

fn check(k: &[f64], t: f64) -> Result<()> {
    if k.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state derivative near t = {t}")))
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(mut f: F, t: f64, state: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut out = state.to_vec();
    Rk4::new(state.len()).step(&mut f, t, &mut out, h)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_keeps_state() {
        let x = rk4_step(
            |_, _, d| {
                d.fill(0.0);
                Ok(())
            },
            0.0,
            &[1.0, -2.0],
            0.3,
        )
        .unwrap();
        assert_eq!(x, vec![1.0, -2.0]);
    }

    #[test]
    fn decay_single_step() {
        let x = rk4_step(
            |_, s, d| {
                d[0] = -s[0];
                Ok(())
            },
            0.0,
            &[1.0],
            0.1,
        )
        .unwrap();
        assert!((x[0] - 0.9048375).abs() < 1e-7);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn non_finite_aborts() {
        let r = rk4_step(
            |_, _, d| {
                d[0] = f64::NAN;
                Ok(())
            },
            0.0,
            &[1.0],
            0.1,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(rk4_step(
            |_, _, d| {
                d[0] = 0.0;
                Ok(())
            },
            0.0,
            &[1.0],
            0.0
        )
        .is_err());
    }
}
