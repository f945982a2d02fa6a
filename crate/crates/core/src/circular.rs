//! Full-circle (0 to 360°) angle arithmetic for wind directions.

/// Maps any finite angle into `[0, 360)`.
pub fn normalize_deg(d: f64) -> f64 {
    let r = d.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Maps any finite angle into `(-180, 180]`.
pub fn wrap_signed_deg(d: f64) -> f64 {
    // one-turn shifts of |d| in (180, 360] are exact, which keeps wrap(-d) == -wrap(d)
    if d > -180.0 && d <= 180.0 {
        return d;
    }
    if d > 180.0 && d <= 360.0 {
        return d - 360.0;
    }
    if d > -360.0 && d <= -180.0 {
        return d + 360.0;
    }
    let r = d.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// `(sin, cos)` of an angle in degrees, reduced to `(-180, 180]` first so
/// that e.g. 350° and −10° give bit-identical results.
pub fn sincos_deg(d: f64) -> (f64, f64) {
    wrap_signed_deg(d).to_radians().sin_cos()
}

/// `atan2(s, c)` in degrees, mapped into `[0, 360)`.
pub fn atan2_deg(s: f64, c: f64) -> f64 {
    normalize_deg(s.atan2(c).to_degrees())
}

/// Absolute angular difference in `[0, 180]`.
pub fn circular_error_deg(pred_deg: f64, truth_deg: f64) -> f64 {
    wrap_signed_deg(pred_deg - truth_deg).abs()
}

/// Weighted unit-vector mean direction. `None` when the resultant length
/// (relative to total weight) is below `1e-9`.
pub fn vector_mean_deg(angles: &[f64], weights: Option<&[f64]>) -> Option<f64> {
    if let Some(&first) = angles.first() {
        let positive = weights.is_none_or(|w| w.iter().all(|&x| x > 0.0));
        if positive && angles.iter().all(|&a| a == first) {
            return Some(normalize_deg(first));
        }
    }
    let (mut s, mut c, mut w_total) = (0f64, 0f64, 0f64);
    for (i, &a) in angles.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let (si, ci) = sincos_deg(a);
        s += w * si;
        c += w * ci;
        w_total += w;
    }
    if w_total <= 0.0 || (s.hypot(c) / w_total) < 1e-9 {
        return None;
    }
    Some(atan2_deg(s, c))
}
