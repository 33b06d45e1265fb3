//! Product-trapezoid rules for the single- and double-layer heat potentials on
//! a uniform grid.
//!
//! At node `n` the history `[0, t_{n-1}]` is covered by ordinary trapezoid
//! cells, and the last cell `[t_{n-1}, t_n]`, where the kernels are singular,
//! is integrated after the substitution `t_n - t' = u^2` assuming a
//! piecewise-linear drift rate and a piecewise-linear weight. Everything is
//! written in terms of the drift displacement `Psi(t_n, t') = M(t_n) - M(t')`,
//! so the same code serves a known drift and the feedback drift `M = -alpha L`.

use std::f64::consts::PI;

use crate::kernels::gauss;

/// Interior-cell sums over nodes `0..n-1` at target node `n`, before the
/// factor `delta`:
///
/// * `potential`: `sum w_l Psi_l Xi_l nu_l / sqrt(2 pi tau_l^3)`
/// * `flux_diag`: `sum w_l / sqrt(2 pi tau_l^3)` (coefficient of `nu_n`)
/// * `flux_hist`: `sum w_l (1 - Psi_l^2/tau_l) Xi_l nu_l / sqrt(2 pi tau_l^3)`
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct HistorySums {
    pub potential: f64,
    pub flux_diag: f64,
    pub flux_hist: f64,
}

/// Interior sums for node `n = m_hist.len()`. `m_hist` and `nu_hist` hold
/// nodes `0..n`; `m_n` is the drift at node `n`.
pub(crate) fn history_sums(m_hist: &[f64], nu_hist: &[f64], m_n: f64, delta: f64) -> HistorySums {
    let n = m_hist.len();
    debug_assert_eq!(nu_hist.len(), n);
    if n < 2 {
        return HistorySums::default();
    }
    let mut s = HistorySums::default();
    for l in 0..n {
        let w = if l == 0 || l == n - 1 { 0.5 } else { 1.0 };
        let tau = (n - l) as f64 * delta;
        let inv = w / (2.0 * PI * tau * tau * tau).sqrt();
        let psi = m_n - m_hist[l];
        let xi = (-psi * psi / (2.0 * tau)).exp();
        let xnu = xi * nu_hist[l] * inv;
        s.potential += psi * xnu;
        s.flux_diag += inv;
        s.flux_hist += (1.0 - psi * psi / tau) * xnu;
    }
    s.potential *= delta;
    s.flux_diag *= delta;
    s.flux_hist *= delta;
    s
}

/// Last-cell rules, linear in `(nu_n, nu_{n-1})`.
///
/// With drift rates `rate_left` at `t_{n-1}` and `rate_right` at `t_n`:
/// the potential integral over the cell is `pot_diag * nu_n + pot_prev * nu_{n-1}`
/// and the flux integral is `flux_diag * nu_n - flux_prev * nu_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SingularCell {
    pub pot_diag: f64,
    pub pot_prev: f64,
    pub flux_diag: f64,
    pub flux_prev: f64,
}

impl SingularCell {
    pub fn new(rate_left: f64, rate_right: f64, delta: f64) -> Self {
        let gamma = 0.5 * delta * (rate_left + rate_right);
        let g2 = gamma * gamma;
        let e = (-g2 / (2.0 * delta)).exp();
        let s1 = (2.0 * PI * delta).sqrt();
        let s3 = (2.0 * PI * delta * delta * delta).sqrt();
        let r2 = rate_right * rate_right * delta * delta;
        Self {
            pot_diag: (delta / (2.0 * PI)).sqrt() * rate_right,
            pot_prev: gamma * e / s1,
            flux_diag: (1.0 + e) / s1 + (1.5 * r2 + 0.5 * g2) / s3,
            flux_prev: (1.0 + e) / s1 - g2 * e / s3,
        }
    }
}

/// One node of the heat-potential recursion for a drift whose value and rate
/// at the target node are known.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeInput<'a> {
    pub t: f64,
    pub delta: f64,
    pub z: f64,
    pub m_hist: &'a [f64],
    pub nu_hist: &'a [f64],
    pub m_n: f64,
    pub rate_left: f64,
    pub rate_right: f64,
}

impl NodeInput<'_> {
    fn parts(&self) -> (HistorySums, SingularCell) {
        (
            history_sums(self.m_hist, self.nu_hist, self.m_n, self.delta),
            SingularCell::new(self.rate_left, self.rate_right, self.delta),
        )
    }

    fn nu_prev(&self) -> f64 {
        *self.nu_hist.last().expect("history includes node 0")
    }

    /// Solves the boundary condition `nu - int Psi Xi nu / sqrt(2 pi tau^3) + forcing = 0`
    /// for `nu_n`; returns `None` when the diagonal coefficient vanishes.
    pub fn solve_nu(&self) -> Option<f64> {
        let (h, c) = self.parts();
        self.nu_from(&h, &c)
    }

    fn nu_from(&self, h: &HistorySums, c: &SingularCell) -> Option<f64> {
        let forcing = gauss(self.t, self.m_n + self.z);
        let diag = 1.0 - c.pot_diag;
        if diag.abs() < 1e-300 || !diag.is_finite() {
            return None;
        }
        Some((h.potential + c.pot_prev * self.nu_prev() - forcing) / diag)
    }

    /// Loss rate through the boundary from the double-layer limit, given `nu_n`.
    pub fn loss_rate(&self, nu_n: f64) -> f64 {
        let (h, c) = self.parts();
        self.loss_rate_from(&h, &c, nu_n)
    }

    fn loss_rate_from(&self, h: &HistorySums, c: &SingularCell, nu_n: f64) -> f64 {
        let t = self.t;
        let flux = h.flux_diag * nu_n - h.flux_hist + c.flux_diag * nu_n
            - c.flux_prev * self.nu_prev();
        let a = self.m_n + self.z;
        (self.rate_right - 1.0 / (2.0 * PI * t).sqrt()) * nu_n - 0.5 * flux
            + a * (-a * a / (2.0 * t)).exp() / (2.0 * (2.0 * PI * t * t * t).sqrt())
    }

    /// `(nu_n, g_n)` in one pass over the history.
    pub fn step(&self) -> Option<(f64, f64)> {
        let (h, c) = self.parts();
        let nu = self.nu_from(&h, &c)?;
        Some((nu, self.loss_rate_from(&h, &c, nu)))
    }
}

/// `int_0^{t_n} phi(t') / sqrt(2 pi (t_n - t')) dt'` for `phi` piecewise
/// linear through `values[0..=n]`, integrated exactly cell by cell.
pub(crate) fn abel_product_integral(values: &[f64], delta: f64) -> f64 {
    let n = values.len() - 1;
    let mut acc = 0.0;
    for k in 1..=n {
        // cell [t_{k-1}, t_k] in s = t_n - t' is [a, b]
        let a = (n - k) as f64 * delta;
        let b = a + delta;
        let (sa, sb) = (a.sqrt(), b.sqrt());
        let i0 = 2.0 * (sb - sa);
        let i1 = 2.0 / 3.0 * (b * sb - a * sa);
        // phi = values[k] + (values[k-1] - values[k]) (s - a) / delta
        let slope = (values[k - 1] - values[k]) / delta;
        acc += values[k] * i0 + slope * (i1 - a * i0);
    }
    acc / (2.0 * PI).sqrt()
}

/// Composite trapezoid on `[0, b]` with `n` panels.
pub(crate) fn trapezoid(b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = b / n as f64;
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    h * (0.5 * f(0.0) + inner + 0.5 * f(b))
}

/// Trapezoid of nodal values over the whole grid.
pub(crate) fn trapezoid_nodal(values: &[f64], delta: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => delta * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Cumulative trapezoid of nodal values, starting from 0.
pub(crate) fn cumulative_trapezoid(values: &[f64], delta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * delta * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Piecewise-linear interpolation of nodal values at `t`.
pub(crate) fn interp_linear(values: &[f64], delta: f64, t: f64) -> f64 {
    let x = t / delta;
    let n = values.len() - 1;
    if x <= 0.0 {
        return values[0];
    }
    if x >= n as f64 {
        return values[n];
    }
    let k = x.floor() as usize;
    let f = x - k as f64;
    values[k] + f * (values[k + 1] - values[k])
}
