//! Innate and adaptive immune factors acting on free merozoites.

/// Cumulative merozoite density accumulated over the adaptive window
/// `[Δ₀, Δ₀ + Δ₁]` (cells·ml⁻¹·h).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImmuneState {
    pub cum_m: f64,
}

/// Saturating innate factor `m / (m + S_I*)`.
pub fn innate_response(m: f64, si_star: f64) -> f64 {
    let m = m.max(0.0);
    m / (m + si_star)
}

/// Adaptive factor: zero before `delta0`, then `cum / (cum + S_A*)`.
///
/// `cum_m` must already be the integral over `[Δ₀, min(t, Δ₀+Δ₁)]`, so the
/// factor freezes automatically once the window closes.
pub fn adaptive_response(t: f64, cum_m: f64, sa_star: f64, delta0: f64, _delta1: f64) -> f64 {
    if t < delta0 {
        return 0.0;
    }
    let c = cum_m.max(0.0);
    c / (c + sa_star)
}

/// Adds `m · |[t, t+dt] ∩ [Δ₀, Δ₀+Δ₁]|` to the running integral.
pub fn accumulate(prev: ImmuneState, t: f64, dt: f64, m: f64, delta0: f64, delta1: f64) -> ImmuneState {
    let overlap = window_overlap(t, dt, delta0, delta1);
    if overlap <= 0.0 {
        return prev;
    }
    ImmuneState {
        cum_m: prev.cum_m + m * overlap,
    }
}

/// Length of `[t, t+dt] ∩ [Δ₀, Δ₀+Δ₁]`.
pub(crate) fn window_overlap(t: f64, dt: f64, delta0: f64, delta1: f64) -> f64 {
    let lo = t.max(delta0);
    let hi = (t + dt).min(delta0 + delta1);
    (hi - lo).max(0.0)
}
