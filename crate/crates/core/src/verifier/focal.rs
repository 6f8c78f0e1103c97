//! Binary focal loss with its closed-form gradient on the logit.

/// Probabilities are clamped into `[P_MIN, 1 - P_MIN]` before the log.
pub const P_MIN: f64 = 1e-7;

/// Focal loss of predicted probability `p` for label `y` and its derivative
/// with respect to the pre-sigmoid logit.
///
/// With `pt = p` for positives (`1 - p` otherwise) and `αt = alpha` for
/// positives (`1 - alpha` otherwise):
///
/// ```text
/// loss    = -αt (1 - pt)^γ ln(pt)
/// dL/dz   = s · αt · [γ pt (1 - pt)^γ ln(pt) - (1 - pt)^(γ+1)],  s = +1 if y else -1
/// ```
pub fn focal_loss(p: f64, y: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let p = p.clamp(P_MIN, 1.0 - P_MIN);
    let (pt, alpha_t, sign) = if y { (p, alpha, 1.0) } else { (1.0 - p, 1.0 - alpha, -1.0) };
    let miss = 1.0 - pt;
    let ln_pt = pt.ln();
    let modulator = miss.powf(gamma);
    let loss = -alpha_t * modulator * ln_pt;
    let grad = sign * alpha_t * (gamma * pt * modulator * ln_pt - modulator * miss);
    (loss, grad)
}

/// Numerically stable logistic function, kept strictly inside `(0, 1)`.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
