//! sRGB transfer functions (IEC 61966-2-1, exact piecewise form).

/// Encoded sRGB value in `[0, 1]` to linear light.
#[inline]
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Linear light to encoded sRGB. Input is clamped to `[0, 1]`.
#[inline]
pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Linear light to an 8-bit sRGB code value.
#[inline]
pub fn linear_to_srgb8(v: f64) -> u8 {
    (linear_to_srgb(v) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert_eq!(srgb_to_linear(1.0), 1.0);
        assert_eq!(linear_to_srgb8(1.0), 255);
        assert_eq!(linear_to_srgb8(0.0), 0);
    }

    #[test]
    fn code_128_decodes_to_0_21586() {
        // ((128/255 + 0.055) / 1.055)^2.4 evaluated by hand: 0.215861
        let v = srgb_to_linear(128.0 / 255.0);
        assert!((v - 0.21586).abs() < 1e-4, "{v}");
    }

    #[test]
    fn every_code_value_round_trips() {
        for c in 0..=255u8 {
            assert_eq!(linear_to_srgb8(srgb_to_linear(c as f64 / 255.0)), c);
        }
    }
}
