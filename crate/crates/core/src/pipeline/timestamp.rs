use crate::chip::TIMESTAMP_MODULUS;
use crate::sim::SimTime;

const HALF_WINDOW: u64 = TIMESTAMP_MODULUS / 2;

/// Reconstructs full time from an 8-bit timestamp.
///
/// Returns the start of the unique tick `c` with `c ≡ ts8 (mod 256)` and
/// `now_tick - 128 < c <= now_tick + 128`. Before tick 128 the window is
/// clamped to start at tick 0, since no event predates the simulation.
pub fn expand_timestamp(ts8: u8, now: SimTime, tick: SimTime) -> SimTime {
    let tick_ns = tick.as_ns();
    let upper = now.as_ns() / tick_ns + HALF_WINDOW;
    let back = (upper + TIMESTAMP_MODULUS - ts8 as u64) % TIMESTAMP_MODULUS;
    let c = if back > upper {
        upper + TIMESTAMP_MODULUS - back
    } else {
        upper - back
    };
    SimTime::from_ns(c * tick_ns)
}
