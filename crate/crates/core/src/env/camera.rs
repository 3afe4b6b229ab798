//! Pinhole-style roadside cameras: ground position to pixel and back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Ground position of the mast.
    pub position: [f64; 2],
    pub height: f64,
    /// Height of the tracked point above ground (bounding-box centre).
    pub target_height: f64,
    /// Boresight azimuth, radians, global frame.
    pub azimuth: f64,
    /// Boresight angle from the vertical, radians.
    pub tilt: f64,
    pub fov_h: f64,
    pub fov_v: f64,
    pub width_px: f64,
    pub height_px: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

impl Camera {
    pub fn effective_height(&self) -> f64 {
        self.height - self.target_height
    }

    /// Pixel `(l_w, l_h)` of a ground position, or `None` when out of view.
    pub fn project_to_pixels(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let rel = [p[0] - self.position[0], p[1] - self.position[1]];
        let dist = rel[0].hypot(rel[1]);
        if dist == 0.0 {
            return None;
        }
        let daz = wrap_angle(rel[1].atan2(rel[0]) - self.azimuth);
        if daz.abs() >= self.fov_h / 2.0 {
            return None;
        }
        let elev = (dist / self.effective_height()).atan();
        let del = elev - self.tilt;
        if del.abs() >= self.fov_v / 2.0 {
            return None;
        }
        let lw = self.width_px / 2.0 * (1.0 + daz.tan() / (self.fov_h / 2.0).tan());
        let lh = self.height_px / 2.0 * (1.0 + del.tan() / (self.fov_v / 2.0).tan());
        Some([lw, lh])
    }

    /// Ground position of a pixel via the closed-form localization formula.
    pub fn pixel_to_position(&self, px: [f64; 2]) -> Result<[f64; 2]> {
        let [lw, lh] = px;
        if !(0.0..=self.width_px).contains(&lw) || !(0.0..=self.height_px).contains(&lh) {
            return Err(Error::Domain { op: "pixel_to_position", detail: format!("pixel {px:?} outside the image") });
        }
        let vert = self.tilt + ((2.0 * lh - self.height_px) / self.height_px * (self.fov_v / 2.0).tan()).atan();
        if vert.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain { op: "pixel_to_position", detail: format!("ray angle {vert} does not meet the ground") });
        }
        let horiz = self.azimuth + ((2.0 * lw - self.width_px) / self.width_px * (self.fov_h / 2.0).tan()).atan();
        let r = self.effective_height() * vert.tan();
        Ok([self.position[0] + r * horiz.cos(), self.position[1] + r * horiz.sin()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cam() -> Camera {
        Camera {
            position: [0.0, 0.0],
            height: 15.0,
            target_height: 0.8,
            azimuth: 0.0,
            tilt: PI / 4.0,
            fov_h: 80f64.to_radians(),
            fov_v: 60f64.to_radians(),
            width_px: 1920.0,
            height_px: 1080.0,
        }
    }

    #[test]
    fn centre_pixel_is_on_boresight() {
        let c = cam();
        let p = c.pixel_to_position([960.0, 540.0]).unwrap();
        assert!((p[0] - 14.2).abs() < 1e-12 && p[1].abs() < 1e-12);
        let px = c.project_to_pixels([14.2, 0.0]).unwrap();
        assert!((px[0] - 960.0).abs() < 1e-9 && (px[1] - 540.0).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_out_of_view() {
        assert!(cam().project_to_pixels([-10.0, 0.0]).is_none());
        assert!(cam().pixel_to_position([-1.0, 10.0]).is_err());
    }

    #[test]
    fn round_trip() {
        let c = Camera { position: [3.0, -2.0], azimuth: 2.0, ..cam() };
        for k in 0..50 {
            let t = k as f64 / 50.0;
            let az = 2.0 + (t - 0.5) * 1.2;
            let r = 8.0 + 14.0 * t;
            let p = [3.0 + r * az.cos(), -2.0 + r * az.sin()];
            let px = c.project_to_pixels(p).unwrap();
            let q = c.pixel_to_position(px).unwrap();
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }
}
