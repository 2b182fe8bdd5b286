use crate::geometry::Vec3;
use crate::simkit::SensorRig;

/// Body-frame air velocity from the sensor-frame anemometer vector:
/// `V_a^B = R0·v̄ − ω×δ`.
pub fn lever_arm_velocity(anemometer: &Vec3, omega: &Vec3, rig: &SensorRig) -> Vec3 {
    rig.r0.apply(anemometer) - omega.cross(&rig.delta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::simkit::{generate_trajectory, synthesize_sensors, ScenarioConfig, TrajectoryStyle, VehicleParams};
    use proptest::prelude::*;

    #[test]
    fn identity_rig_passes_through() {
        let rig = SensorRig::ideal();
        let v = Vec3::new(0.4, -1.0, 0.25);
        assert_eq!(lever_arm_velocity(&v, &Vec3::new(0.3, 0.2, 0.1), &rig), v);
    }

    #[test]
    fn pure_lever_arm() {
        let rig = SensorRig {
            delta: [0.1, 0.0, 0.0],
            ..SensorRig::ideal()
        };
        let v = lever_arm_velocity(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0), &rig);
        assert!((v - Vec3::new(0.0, -0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inverts_the_simulated_measurement() {
        let params = VehicleParams::default();
        let cfg = ScenarioConfig {
            duration: 40.0,
            style: TrajectoryStyle::Lissajous,
            seed: 8,
            ..ScenarioConfig::default()
        };
        let truth = generate_trajectory(&cfg, &params).unwrap();
        let rig = SensorRig {
            r0: Rotation::from_euler(0.1, -0.2, 0.7),
            delta: [0.04, -0.02, -0.05],
            ..SensorRig::ideal()
        };
        let recs = synthesize_sensors(&truth, &rig, &params, 3).unwrap();
        for (rec, s) in recs.iter().zip(&truth.samples) {
            let measured = rig.assemble(&rec.anemometer.unwrap());
            let v = lever_arm_velocity(&measured, &s.omega, &rig);
            assert!((v - s.attitude.apply_inverse(&s.velocity)).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn affine_superposition(
            a in prop::array::uniform3(-3.0..3.0f64), b in prop::array::uniform3(-3.0..3.0f64),
            w1 in prop::array::uniform3(-2.0..2.0f64), w2 in prop::array::uniform3(-2.0..2.0f64),
            s in -2.0..2.0f64,
        ) {
            let rig = SensorRig::default();
            let (a, b, w1, w2) = (Vec3::from(a), Vec3::from(b), Vec3::from(w1), Vec3::from(w2));
            let lhs = lever_arm_velocity(&(a + b * s), &(w1 + w2 * s), &rig);
            let rhs = lever_arm_velocity(&a, &w1, &rig) + (lever_arm_velocity(&b, &w2, &rig)
                - lever_arm_velocity(&Vec3::zeros(), &Vec3::zeros(), &rig)) * s;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
