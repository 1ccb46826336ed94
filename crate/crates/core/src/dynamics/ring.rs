//! Periodic-boundary arithmetic on a ring of circumference `L`.

/// Maps any finite coordinate into `[0, ring_length)`.
#[inline]
pub fn wrap(position: f64, ring_length: f64) -> f64 {
    let p = position.rem_euclid(ring_length);
    // rem_euclid of a tiny negative value rounds up to exactly L
    if p >= ring_length {
        0.0
    } else {
        p
    }
}

/// Distance travelled going forward from `from` to `to`, in `[0, L)`.
#[inline]
pub fn forward_distance(from: f64, to: f64, ring_length: f64) -> f64 {
    wrap(to - from, ring_length)
}

/// Shorter of the two arc lengths between two points.
#[inline]
pub fn ring_distance(a: f64, b: f64, ring_length: f64) -> f64 {
    let fwd = forward_distance(a, b, ring_length);
    fwd.min(ring_length - fwd)
}

/// Bumper-to-bumper gap from a follower's front bumper to the rear bumper of
/// the vehicle ahead. Negative when the two overlap.
#[inline]
pub fn ring_gap(follower_pos: f64, leader_pos: f64, leader_length: f64, ring_length: f64) -> f64 {
    forward_distance(follower_pos, leader_pos, ring_length) - leader_length
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(ring_gap(990.0, 10.0, 5.0, 1000.0), 15.0);
        assert_eq!(ring_gap(0.0, 100.0, 5.0, 1000.0), 95.0);
        assert_eq!(ring_gap(300.0, 300.0, 5.0, 1000.0), -5.0);
    }

    #[test]
    fn wrap_never_returns_ring_length() {
        assert_eq!(wrap(-1e-17, 1000.0), 0.0);
        assert_eq!(wrap(1000.0, 1000.0), 0.0);
        assert_eq!(wrap(-10.0, 1000.0), 990.0);
        assert_eq!(wrap(2010.0, 1000.0), 10.0);
    }

    #[test]
    fn ring_distance_is_symmetric() {
        assert_eq!(ring_distance(10.0, 990.0, 1000.0), 20.0);
        assert_eq!(ring_distance(990.0, 10.0, 1000.0), 20.0);
        assert_eq!(ring_distance(0.0, 500.0, 1000.0), 500.0);
    }
}
