#![allow(dead_code)]

use gaitkit::evaluate::{evaluate_kind, KindEvaluation};
use gaitkit::events::times_of;
use gaitkit::pipeline::{process, PipelineConfig, ProcessedRecording};
use gaitkit::synth::{generate, Phase, SynthConfig, SynthOutput};
use gaitkit::EventKind;
use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, UnitSphere};

/// A uniformly random fixed sensor orientation as `[w, x, y, z]`.
pub fn random_rotation(seed: u64) -> [f64; 4] {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
    [q.w, q.i, q.j, q.k]
}

/// Standing still, walking, standing still.
pub fn walk_config(cadence: f64, noise: f64, rotation: [f64; 4], seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::walk(0.0, cadence).with_script(vec![
        Phase::Rest { duration_s: 3.0 },
        Phase::Walk { duration_s: 40.0 },
        Phase::Rest { duration_s: 3.0 },
    ]);
    cfg.noise_sigma = noise;
    cfg.sensor_rotation = rotation;
    cfg.seed = seed;
    cfg
}

pub struct Run {
    pub synth: SynthOutput,
    pub result: ProcessedRecording,
    pub ic: KindEvaluation,
    pub fc: KindEvaluation,
}

pub fn run(cfg: &SynthConfig) -> Run {
    let synth = generate(cfg).unwrap();
    let result = process(&synth.recording, &PipelineConfig::default()).unwrap();
    let eval = |kind| {
        evaluate_kind(&times_of(&result.events, kind), &times_of(&synth.events, kind), 0.5, kind).unwrap()
    };
    let (ic, fc) = (eval(EventKind::InitialContact), eval(EventKind::FinalContact));
    Run { synth, result, ic, fc }
}

/// The gravity-aligned walking bout of a synthetic recording, trimmed by
/// `margin_s` at both ends of the first walking phase.
pub fn synth_bout(cfg: &SynthConfig, margin_s: f64) -> gaitkit::stepdetect::Bout {
    use gaitkit::frame;
    let synth = generate(cfg).unwrap();
    let aligned = gaitkit::pipeline::preprocess(&synth.recording, &PipelineConfig::default()).unwrap();
    let walk = synth.segments.iter().find(|s| s.kind == gaitkit::segmentation::SegmentKind::GaitBout).unwrap();
    let (i0, i1) = (aligned.index_at(walk.start_s + margin_s), aligned.index_at(walk.end_s - margin_s));
    let accel = &aligned.accel[i0..i1];
    let f = frame::estimate_frame(accel, aligned.sample_rate).unwrap();
    gaitkit::stepdetect::Bout {
        start_s: aligned.timestamps[i0],
        sample_rate: aligned.sample_rate,
        accel: frame::to_anatomical(accel, &f),
        gyro: frame::to_anatomical(&aligned.gyro[i0..i1], &f),
        has_frame: true,
    }
}

pub fn stride_config(stride_s: f64) -> SynthConfig {
    walk_config(120.0 / stride_s, 0.0, [1.0, 0.0, 0.0, 0.0], 0)
}
