use nalgebra::{SMatrix, SVector};

use super::{Interval, INPUT_BOX, STATE_BOX};

/// Half-space description `G v <= g` of a box, one bound per row.
///
/// In normalized coordinates every box is `[-1, 1]^3`, so `G = [I; -I]` and
/// `g = 1`. The physical-unit variant is kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingLimits {
    pub g_state: SMatrix<f64, 6, 3>,
    pub h_state: SVector<f64, 6>,
    pub g_input: SMatrix<f64, 6, 3>,
    pub h_input: SVector<f64, 6>,
}

fn box_rows(b: &[Interval; 3]) -> (SMatrix<f64, 6, 3>, SVector<f64, 6>) {
    let mut g = SMatrix::<f64, 6, 3>::zeros();
    let mut h = SVector::<f64, 6>::zeros();
    for i in 0..3 {
        g[(2 * i, i)] = 1.0;
        h[2 * i] = b[i].hi;
        g[(2 * i + 1, i)] = -1.0;
        h[2 * i + 1] = -b[i].lo;
    }
    (g, h)
}

impl OperatingLimits {
    pub fn normalized() -> Self {
        let unit = [Interval::new(-1.0, 1.0); 3];
        let (g_state, h_state) = box_rows(&unit);
        let (g_input, h_input) = box_rows(&unit);
        Self {
            g_state,
            h_state,
            g_input,
            h_input,
        }
    }

    pub fn physical() -> Self {
        let (g_state, h_state) = box_rows(&STATE_BOX);
        let (g_input, h_input) = box_rows(&INPUT_BOX);
        Self {
            g_state,
            h_state,
            g_input,
            h_input,
        }
    }
}

impl Default for OperatingLimits {
    fn default() -> Self {
        Self::normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_have_unit_infinity_norm() {
        let l = OperatingLimits::normalized();
        for r in 0..6 {
            let m = l.g_state.row(r).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert_eq!(m, 1.0);
            assert_eq!(l.g_state.row(r).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn physical_rows_encode_the_boxes() {
        let l = OperatingLimits::physical();
        assert_eq!(l.h_state[0], 13.0);
        assert_eq!(l.h_state[1], -2.0);
        assert_eq!(l.h_input[2], 0.97);
    }
}
