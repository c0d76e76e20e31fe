use nalgebra::Vector3;
use super::model::ContactParams;

/// Flat ground plus an optional perch on the body underside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terrain {
    pub height_m: f64,
    pub friction: f64,
    /// Perch center, body frame.
    pub perch_point_m: Option<Vector3<f64>>,
    /// Half extents (x, y) of the perch pad. The pad touches at its four
    /// corners; zero extents give a single point.
    pub perch_half_size_m: [f64; 2],
}

impl Default for Terrain {
    fn default() -> Self {
        Self {
            height_m: 0.0,
            friction: 0.7,
            perch_point_m: None,
            perch_half_size_m: [0.0; 2],
        }
    }
}

impl Terrain {
    /// Body-frame perch contact points.
    pub fn perch_points(&self) -> Vec<Vector3<f64>> {
        let Some(c) = self.perch_point_m else {
            return Vec::new();
        };
        let [hx, hy] = self.perch_half_size_m;
        if hx == 0.0 && hy == 0.0 {
            return vec![c];
        }
        [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)]
            .iter()
            .map(|(sx, sy)| c + Vector3::new(sx * hx, sy * hy, 0.0))
            .collect()
    }
}

/// Ground reaction on a point at `pos` moving with `vel` (world frame).
///
/// Normal: `k * depth - c * vz`, never pulling. Tangential: Coulomb friction
/// opposing slip, smoothed as `mu N v / sqrt(|v|^2 + v_reg^2)` so it stays
/// strictly inside the cone.
pub fn contact_force(pos: &Vector3<f64>, vel: &Vector3<f64>, terrain: &Terrain, params: &ContactParams) -> Vector3<f64> {
    let depth = terrain.height_m - pos.z;
    if depth <= 0.0 {
        return Vector3::zeros();
    }
    let normal = (params.stiffness_n_per_m * depth - params.damping_ns_per_m * vel.z).max(0.0);
    if normal == 0.0 {
        return Vector3::zeros();
    }
    let slip = Vector3::new(vel.x, vel.y, 0.0);
    let speed2 = slip.norm_squared();
    let reg = params.slip_reg_mps;
    let scale = -terrain.friction * normal / (speed2 + reg * reg).sqrt();
    Vector3::new(slip.x * scale, slip.y * scale, normal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn terrain() -> Terrain {
        Terrain::default()
    }

    #[test]
    fn no_force_above_ground() {
        let f = contact_force(&Vector3::new(0.0, 0.0, 0.01), &Vector3::zeros(), &terrain(), &ContactParams::default());
        assert_eq!(f, Vector3::zeros());
    }

    #[test]
    fn static_penetration_is_spring_law() {
        let p = ContactParams::default();
        let f = contact_force(&Vector3::new(0.3, -0.2, -0.002), &Vector3::zeros(), &terrain(), &p);
        assert_eq!(f, Vector3::new(0.0, 0.0, p.stiffness_n_per_m * 0.002));
    }

    #[test]
    fn never_pulls() {
        let f = contact_force(
            &Vector3::new(0.0, 0.0, -0.001),
            &Vector3::new(0.0, 0.0, 5.0),
            &terrain(),
            &ContactParams::default(),
        );
        assert_eq!(f, Vector3::zeros());
    }

    proptest! {
        #[test]
        fn friction_cone_holds(
            z in -0.02f64..0.01,
            vx in -3.0f64..3.0,
            vy in -3.0f64..3.0,
            vz in -2.0f64..2.0,
            mu in 0.0f64..1.5,
        ) {
            let t = Terrain { friction: mu, ..Terrain::default() };
            let f = contact_force(&Vector3::new(0.0, 0.0, z), &Vector3::new(vx, vy, vz), &t, &ContactParams::default());
            prop_assert!(f.z >= 0.0);
            prop_assert!(f.xy().norm() <= mu * f.z + 1e-9);
            // friction opposes slip
            prop_assert!(f.x * vx + f.y * vy <= 1e-12);
        }
    }
}
