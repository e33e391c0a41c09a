//! Constant-velocity Kalman filter on noisy positions of a target moving at
//! 0.5 m/s, followed by a run of misses showing how the search ROI grows.
//! A smaller acceleration noise trusts the motion model more and smooths the
//! velocity estimate.
//!
//! cargo run --example kalman_cv

use pano_track::kf::{predict, predicted_roi, update, KfParams, TrackState};
use pano_track::{Point3, Result, SensorIntrinsics};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DT: f64 = 0.1;

fn track(params: &KfParams, steps: usize) -> Result<(TrackState, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, params.r_pos).expect("valid sigma");
    let v = Point3::new(0.3, 0.4, 0.0);
    let start = Point3::new(1.0, 1.0, -0.3);
    let mut s = TrackState::at_rest(start, 0.0, 0.04, 1.0);
    let (mut pos_err, mut vel_err) = (0.0, 0.0);
    for k in 1..=steps {
        let truth = start + v * (k as f64 * DT);
        let z = Point3::new(
            truth.x + noise.sample(&mut rng),
            truth.y + noise.sample(&mut rng),
            truth.z + noise.sample(&mut rng),
        );
        s = update(&predict(&s, DT, params)?, &z, params)?;
        // skip the transient
        if k > steps / 2 {
            pos_err += s.position().distance(&truth);
            vel_err += (s.velocity() - v).norm();
        }
    }
    let n = (steps - steps / 2) as f64;
    Ok((s, pos_err / n, vel_err / n))
}

pub fn run() -> Result<()> {
    let intr = SensorIntrinsics::default();
    let defaults = KfParams::default();
    for q in [defaults.q_accel, 0.2] {
        let params = KfParams { q_accel: q, ..defaults };
        let (_, pos, vel) = track(&params, 100)?;
        println!("q_accel {q:.1}: mean position error {pos:.3} m, velocity error {vel:.3} m/s");
    }

    let (mut s, _, _) = track(&defaults, 100)?;
    println!("misses  roi rows x cols");
    for _ in 0..8 {
        let roi = predicted_roi(&s, &intr, &defaults);
        println!("{:6}  {:4} x {:4}", s.misses, roi.height(), roi.col_len);
        s = predict(&s, DT, &defaults)?;
        s.misses += 1;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
