//! sRGB to CIELAB conversion used by the SNIC clustering distance.
//!
//! Standard sRGB -> linear -> XYZ (D65 white) -> Lab chain. Inputs are
//! sRGB-encoded values in [0, 1]; out-of-range inputs are clamped.

const D65_WHITE: [f64; 3] = [0.950_489, 1.0, 1.088_840];

#[inline]
fn srgb_to_linear(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    if u <= 0.040_45 {
        u / 12.92
    } else {
        ((u + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Convert one sRGB triple to (L, a, b).
pub fn srgb_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let (rl, gl, bl) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    // sRGB D65 primaries
    let x = 0.412_456_4 * rl + 0.357_576_1 * gl + 0.180_437_5 * bl;
    let y = 0.212_672_9 * rl + 0.715_152_2 * gl + 0.072_175_0 * bl;
    let z = 0.019_333_9 * rl + 0.119_192_0 * gl + 0.950_304_1 * bl;

    let fx = lab_f(x / D65_WHITE[0]);
    let fy = lab_f(y / D65_WHITE[1]);
    let fz = lab_f(z / D65_WHITE[2]);

    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
