//! sRGB (D65) to CIELAB conversion.

/// D65 reference white in XYZ, Y normalized to 1.
pub const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn f_inv(t: f64) -> f64 {
    let t3 = t * t * t;
    if t3 > EPSILON {
        t3
    } else {
        (116.0 * t - 16.0) / KAPPA
    }
}

/// Lightness `L*` in `[0, 100]` of a relative luminance `Y`.
pub fn luminance_to_lightness(y: f64) -> f64 {
    116.0 * f(y) - 16.0
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let xyz: [f64; 3] =
        std::array::from_fn(|i| RGB_TO_XYZ[i].iter().zip(lin).map(|(m, v)| m * v).sum());
    let [fx, fy, fz] = std::array::from_fn(|i| f(xyz[i] / WHITE_D65[i]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        f_inv(fx) * WHITE_D65[0],
        f_inv(fy) * WHITE_D65[1],
        f_inv(fz) * WHITE_D65[2],
    ];
    std::array::from_fn(|i| {
        linear_to_srgb(XYZ_TO_RGB[i].iter().zip(xyz).map(|(m, v)| m * v).sum())
    })
}
