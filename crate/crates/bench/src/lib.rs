//! Fixtures shared by the benchmarks.

use brhpo_core::brhpo::{SubtaskTrace, ACT_DIM, OBS_DIM};
use brhpo_core::envs::{Action, DistanceMetric, Goal, State};
use brhpo_core::sac::Batch;

/// A full batch of synthetic transitions with the training layout.
pub fn synthetic_batch(size: usize) -> Batch {
    let mut b = Batch::with_capacity(size, OBS_DIM, ACT_DIM);
    for i in 0..size {
        let x = i as f64 / size as f64;
        let obs: Vec<f64> = (0..OBS_DIM).map(|j| (x + 0.1 * j as f64).sin()).collect();
        let next: Vec<f64> = obs.iter().map(|v| v + 0.01).collect();
        b.push(&obs, &[x - 0.5, 0.5 - x], -x, &next, i % 97 == 0);
    }
    b
}

/// A straight-line subtask trace of `len` steps.
pub fn line_trace(len: usize) -> SubtaskTrace {
    let start = State::at_rest([0.0, 0.0]);
    let mut t = SubtaskTrace::new(start, Goal::new(10.0, 0.0), len, DistanceMetric::L2).expect("positive horizon");
    let mut s = start;
    for _ in 0..len {
        let next = State {
            pos: [s.pos[0] + 0.01, 0.0],
            vel: [0.1, 0.0],
            t: s.t + 1,
        };
        t.push(s, Action { accel: [1.0, 0.0] }, -1.0, next).expect("chained steps");
        s = next;
    }
    t
}
