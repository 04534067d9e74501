mod common;

use common::{random_rotation, stride_config, synth_bout, walk_config};
use gaitkit::dsp;
use gaitkit::evaluate::match_events;
use gaitkit::events::times_of;
use gaitkit::stepdetect::{
    assign_laterality, detect_events, detect_steps, estimate_stride_duration, estimate_wavelet_params, Bout, StepConfig,
    WaveletAxis, WaveletSign,
};
use gaitkit::synth::generate;
use gaitkit::{EventKind, Side};
use nalgebra::Vector3;

#[test]
fn stride_of_synthetic_gait() {
    for stride in [1.2, 0.9] {
        let bout = synth_bout(&stride_config(stride), 1.0);
        let est = estimate_stride_duration(&bout.channel(WaveletAxis::Vertical), bout.sample_rate, &StepConfig::default())
            .unwrap();
        assert!((est.stride_s - stride).abs() <= 0.05, "{stride}: {}", est.stride_s);
        assert!((est.max_stride_s - 1.5 * stride).abs() <= 0.075);
    }
}

#[test]
fn vertical_axis_and_scale_for_one_second_stride() {
    let bout = synth_bout(&stride_config(1.0), 1.0);
    let cfg = StepConfig::default();
    let stride = estimate_stride_duration(&bout.channel(WaveletAxis::Vertical), bout.sample_rate, &cfg).unwrap();
    let params = estimate_wavelet_params(&bout, &stride, &cfg).unwrap();
    assert_eq!(params.axis, WaveletAxis::Vertical);
    let fc = dsp::wavelet_center_frequency(params.scale, bout.sample_rate);
    assert!((fc / 2.0 - 1.0).abs() <= 0.2, "{fc}");
    assert_eq!(params.sign, WaveletSign::Negative);

    let mut negated = bout.clone();
    negated.accel.iter_mut().for_each(|a| a.x = -a.x);
    assert_eq!(estimate_wavelet_params(&negated, &stride, &cfg).unwrap().sign, WaveletSign::Positive);
}

#[test]
fn every_true_contact_found_within_60_ms() {
    let cfg = walk_config(105.0, 0.0, [1.0, 0.0, 0.0, 0.0], 0);
    let truth = generate(&cfg).unwrap().events;
    let bout = synth_bout(&cfg, 0.0);
    let det = detect_steps(&bout, &StepConfig::default()).unwrap();
    let inside: Vec<f64> = times_of(&truth, EventKind::InitialContact)
        .into_iter()
        .filter(|t| *t >= bout.start_s + 0.5 && *t <= bout.end_s() - 0.5)
        .collect();
    let rep = match_events(&times_of(&det.events, EventKind::InitialContact), &inside, 0.12, EventKind::InitialContact)
        .unwrap();
    assert_eq!(rep.fn_(), 0, "{:?}", rep.false_negatives);
}

#[test]
fn stationary_tail_has_no_events() {
    let mut bout = synth_bout(&walk_config(110.0, 0.0, [1.0, 0.0, 0.0, 0.0], 0), 1.0);
    let walk_end = bout.end_s();
    let still = (5.0 * bout.sample_rate) as usize;
    bout.accel.extend(std::iter::repeat_n(Vector3::new(9.81, 0.0, 0.0), still));
    bout.gyro.extend(std::iter::repeat_n(Vector3::zeros(), still));
    let cfg = StepConfig::default();
    let stride = estimate_stride_duration(&bout.channel(WaveletAxis::Vertical), bout.sample_rate, &cfg).unwrap();
    let params = estimate_wavelet_params(&bout, &stride, &cfg).unwrap();
    let events = detect_events(&bout, &params, &cfg).unwrap();
    // the wavelet support lets edge effects reach a little past the walk
    let margin = 2.0 * dsp::wavelet_support(params.scale) as f64 / bout.sample_rate;
    assert!(events.iter().all(|e| e.time_s <= walk_end + margin), "{:?}", events.last());
}

#[test]
fn amplitude_scaling_keeps_event_indices() {
    let bout = synth_bout(&walk_config(95.0, 0.2, random_rotation(3), 3), 0.0);
    let base = detect_steps(&bout, &StepConfig::default()).unwrap().events;
    for k in [0.5, 2.0, 10.0] {
        let mut scaled = bout.clone();
        scaled.accel.iter_mut().for_each(|a| *a *= k);
        let ev = detect_steps(&scaled, &StepConfig::default()).unwrap().events;
        let t = |v: &[gaitkit::GaitEvent]| v.iter().map(|e| (e.time_s, e.kind, e.side)).collect::<Vec<_>>();
        assert_eq!(t(&ev), t(&base), "k = {k}");
    }
}

#[test]
fn rotated_sensor_gives_same_events() {
    let base = detect_steps(&synth_bout(&walk_config(115.0, 0.0, [1.0, 0.0, 0.0, 0.0], 1), 1.0), &StepConfig::default())
        .unwrap()
        .events;
    for seed in 0..5 {
        let rotated = synth_bout(&walk_config(115.0, 0.0, random_rotation(seed), 1), 1.0);
        let ev = detect_steps(&rotated, &StepConfig::default()).unwrap().events;
        assert_eq!(ev.len(), base.len());
        for (a, b) in ev.iter().zip(&base) {
            assert_eq!(a.kind, b.kind);
            assert!((a.time_s - b.time_s).abs() <= 1.0 / 50.0 + 1e-9);
        }
    }
}

#[test]
fn laterality_alternates_and_flips_with_gyro() {
    let bout = synth_bout(&walk_config(100.0, 0.0, [1.0, 0.0, 0.0, 0.0], 0), 1.0);
    let events = detect_steps(&bout, &StepConfig::default()).unwrap().events;
    let ic_sides: Vec<Side> = events.iter().filter(|e| e.kind == EventKind::InitialContact).map(|e| e.side).collect();
    assert!(ic_sides.len() > 10);
    assert!(ic_sides.iter().all(|s| *s != Side::Unknown));
    assert!(ic_sides.windows(2).all(|w| w[0] != w[1]));

    let yaw: Vec<f64> = bout.yaw_rate().iter().map(|w| -w).collect();
    let flipped = assign_laterality(&events, &yaw, bout.sample_rate, bout.start_s, &StepConfig::default()).unwrap();
    for (a, b) in events.iter().zip(&flipped) {
        assert_eq!(a.side.opposite(), b.side);
    }
    let zero = vec![0.0; yaw.len()];
    let unknown = assign_laterality(&events, &zero, bout.sample_rate, bout.start_s, &StepConfig::default()).unwrap();
    assert!(unknown.iter().all(|e| e.side == Side::Unknown));
}

#[test]
fn output_ordering_and_fc_gate() {
    let bout = synth_bout(&walk_config(125.0, 0.5, random_rotation(8), 8), 0.0);
    let det = detect_steps(&bout, &StepConfig::default()).unwrap();
    let ic = times_of(&det.events, EventKind::InitialContact);
    let fc = times_of(&det.events, EventKind::FinalContact);
    assert!(ic.windows(2).all(|w| w[1] > w[0]));
    assert!(fc.windows(2).all(|w| w[1] > w[0]));
    let gate = 0.25 * det.stride.max_stride_s;
    for f in fc {
        let prev = ic.iter().rev().find(|&&t| t <= f).copied().unwrap();
        assert!(f - prev <= gate + 1e-9);
    }
    assert!(det.events.iter().all(|e| e.time_s >= det.start_s && e.time_s <= det.end_s));
}

#[test]
fn detection_is_deterministic() {
    let bout = synth_bout(&walk_config(90.0, 0.3, random_rotation(2), 2), 0.0);
    let a = detect_steps(&bout, &StepConfig::default()).unwrap();
    let b = detect_steps(&bout, &StepConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn short_bout_is_insufficient() {
    let bout = Bout {
        start_s: 0.0,
        sample_rate: 50.0,
        accel: vec![Vector3::new(9.81, 0.0, 0.0); 10],
        gyro: vec![Vector3::zeros(); 10],
        has_frame: false,
    };
    assert!(detect_steps(&bout, &StepConfig::default()).is_err());
}
