//! Sobel gradient magnitude.

use crate::raster::Plane;

/// `√(gx² + gy²)` with the unnormalized 3×3 Sobel pair and replicate padding.
pub fn gradient_magnitude(img: &Plane) -> Plane {
    Plane::from_fn(img.width, img.height, |x, y| {
        let p = |dx: isize, dy: isize| img.get_clamped(x as isize + dx, y as isize + dy);
        let gx = p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1);
        let gy = p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1);
        (gx * gx + gy * gy).sqrt()
    })
}
