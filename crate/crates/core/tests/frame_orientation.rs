mod common;

use common::{random_rotation, synth_bout, walk_config};
use gaitkit::stepdetect::Bout;

fn rms(x: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = x.collect();
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

fn channel_disagreement(a: &Bout, b: &Bout, axis: usize) -> f64 {
    let n = a.accel.len().min(b.accel.len());
    let mean = |x: &Bout| x.accel[..n].iter().map(|v| v[axis]).sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let scale = rms(a.accel[..n].iter().map(|v| v[axis] - ma));
    let same = rms((0..n).map(|k| (a.accel[k][axis] - ma) - (b.accel[k][axis] - mb)));
    let flipped = rms((0..n).map(|k| (a.accel[k][axis] - ma) + (b.accel[k][axis] - mb)));
    same.min(flipped) / scale
}

#[test]
fn anatomical_channels_do_not_depend_on_sensor_rotation() {
    let base = synth_bout(&walk_config(105.0, 0.0, [1.0, 0.0, 0.0, 0.0], 0), 1.0);
    for seed in 0..10 {
        let rotated = synth_bout(&walk_config(105.0, 0.0, random_rotation(seed), 0), 1.0);
        assert_eq!(rotated.accel.len(), base.accel.len());
        for axis in 0..2 {
            let d = channel_disagreement(&base, &rotated, axis);
            assert!(d < 0.01, "seed {seed} axis {axis}: {d}");
        }
    }
}

#[test]
fn aligned_vertical_mean_does_not_depend_on_rotation() {
    let mean_v = |b: &Bout| b.accel.iter().map(|a| a.x).sum::<f64>() / b.accel.len() as f64;
    let base = mean_v(&synth_bout(&walk_config(100.0, 0.0, [1.0, 0.0, 0.0, 0.0], 0), 1.0));
    let rotated = mean_v(&synth_bout(&walk_config(100.0, 0.0, random_rotation(4), 0), 1.0));
    // the contact transients pull the mean slightly below g
    assert!((base - 9.81).abs() < 0.3, "{base}");
    assert!((rotated - base).abs() < 1e-3, "{rotated} vs {base}");
}
