/// Linear warm-up from 0 to `base` over the first `ceil(warmup_frac * total)`
/// steps, then linear decay to 0 at `total`.
pub fn lr_at(step: usize, total_steps: usize, base: f64, warmup_frac: f64) -> f64 {
    let warmup = (warmup_frac * total_steps as f64).ceil() as usize;
    if step < warmup {
        return base * step as f64 / warmup as f64;
    }
    if total_steps <= warmup {
        return if step < total_steps { base } else { 0.0 };
    }
    let left = total_steps.saturating_sub(step);
    base * left as f64 / (total_steps - warmup) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let total = 1000;
        assert_eq!(lr_at(0, total, 0.01, 0.2), 0.0);
        assert_eq!(lr_at(200, total, 0.01, 0.2), 0.01);
        assert_eq!(lr_at(total, total, 0.01, 0.2), 0.0);
        assert!((lr_at(100, total, 0.01, 0.2) - 0.005).abs() < 1e-15);
        assert!((lr_at(600, total, 0.01, 0.2) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn ramp_peak_uses_ceiling() {
        // ceil(0.2 * 7) = 2
        assert_eq!(lr_at(2, 7, 1.0, 0.2), 1.0);
        assert_eq!(lr_at(1, 7, 1.0, 0.2), 0.5);
    }

    #[test]
    fn no_warmup_starts_at_base() {
        assert_eq!(lr_at(0, 10, 0.5, 0.0), 0.5);
        assert_eq!(lr_at(10, 10, 0.5, 0.0), 0.0);
    }
}
