use super::Plane;

/// Side of the non-overlapping cells used to find local maxima.
pub const LOCAL_MAX_CELL: usize = 7;

/// Itti's map normalization operator.
///
/// Rescales to [0, 1], then multiplies by `(1 - m)^2` where `m` is the mean of
/// the per-cell maxima over all 7x7 cells except the one holding the global
/// maximum. Maps with one dominant peak keep their weight; maps with many
/// comparable peaks are suppressed. A constant map becomes all zeros.
pub fn itti_normalize(map: &Plane) -> Plane {
    let scaled = map.normalized_min_max();
    let (_, hi) = scaled.min_max();
    if hi <= 0.0 {
        return scaled;
    }
    let (gx, gy) = scaled.argmax();
    let (w, h) = scaled.dims();
    let mut sum = 0.0;
    let mut count = 0usize;
    for cy in (0..h).step_by(LOCAL_MAX_CELL) {
        for cx in (0..w).step_by(LOCAL_MAX_CELL) {
            let in_cell = |x: usize, y: usize| {
                x >= cx && x < cx + LOCAL_MAX_CELL && y >= cy && y < cy + LOCAL_MAX_CELL
            };
            if in_cell(gx, gy) {
                continue;
            }
            let mut m = 0.0f64;
            for y in cy..(cy + LOCAL_MAX_CELL).min(h) {
                for x in cx..(cx + LOCAL_MAX_CELL).min(w) {
                    m = m.max(scaled.get(x, y));
                }
            }
            sum += m;
            count += 1;
        }
    }
    let mean_local = if count == 0 { 0.0 } else { sum / count as f64 };
    let weight = (1.0 - mean_local).powi(2);
    scaled.map(|v| v * weight)
}
