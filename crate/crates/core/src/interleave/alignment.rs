use crate::nnkit::ParamVector;

/// Norms below this count as zero when measuring alignment.
pub const ZERO_NORM: f64 = 1e-12;

/// `rho = -cos(g_il, g_rl)`: +1 for opposed gradients, -1 for parallel ones, 0 when
/// either gradient is (numerically) zero.
pub fn measure_alignment(g_il: &ParamVector, g_rl: &ParamVector) -> f64 {
    debug_assert_eq!(g_il.len(), g_rl.len());
    let (a, b) = (g_il.norm(), g_rl.norm());
    if a < ZERO_NORM || b < ZERO_NORM {
        return 0.0;
    }
    (-g_il.dot(g_rl) / (a * b)).clamp(-1.0, 1.0) + 0.0
}

/// Combine two gradients so neither objective increases to first order.
///
/// Non-conflicting pairs (`<g_il, g_rl> >= 0`) are summed unchanged. Otherwise each
/// gradient is projected onto the orthogonal complement of the *original* other one,
/// `g_i' = g_i - (<g_i, g_j> / ||g_j||^2) g_j`, and the projections are summed.
pub fn dual_cone_combine(g_il: &ParamVector, g_rl: &ParamVector) -> ParamVector {
    debug_assert_eq!(g_il.len(), g_rl.len());
    let dot = g_il.dot(g_rl);
    if dot >= 0.0 {
        return ParamVector::from_vec(g_il.as_slice().iter().zip(g_rl.as_slice()).map(|(a, b)| a + b).collect());
    }
    // dot < 0 implies both norms are positive.
    let k_il = dot / g_rl.norm_sq();
    let k_rl = dot / g_il.norm_sq();
    ParamVector::from_vec(
        g_il.as_slice()
            .iter()
            .zip(g_rl.as_slice())
            .map(|(a, b)| (a - k_il * b) + (b - k_rl * a))
            .collect(),
    )
}
