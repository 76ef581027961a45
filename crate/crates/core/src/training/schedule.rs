/// Linear warmup to `peak` over `warmup_steps`, then linear decay to zero
/// at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, peak: f64) -> f64 {
    let step = step.min(total_steps);
    if warmup_steps > 0 && step <= warmup_steps {
        peak * step as f64 / warmup_steps as f64
    } else if total_steps == warmup_steps {
        0.0
    } else {
        peak * (total_steps - step) as f64 / (total_steps - warmup_steps) as f64
    }
}

/// Warmup length used by training: 10% of the schedule, at least one step.
pub fn default_warmup(total_steps: usize) -> usize {
    ((total_steps as f64 * 0.1).round() as usize).clamp(1, total_steps.saturating_sub(1).max(1))
}
