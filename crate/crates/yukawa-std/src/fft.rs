//! `rustfft` backend for the core's [`Dft`] trait.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rustfft::{Fft, FftDirection, FftPlanner};
use yukawa_core::spectral::{for_each_line, Dft};
use yukawa_core::C64;

/// Planned FFTs, cached per length and direction.
pub struct RustFft {
    plans: Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>,
    planner: Mutex<FftPlanner<f64>>,
}

impl RustFft {
    pub fn new() -> Self {
        RustFft { plans: Mutex::new(HashMap::new()), planner: Mutex::new(FftPlanner::new()) }
    }

    fn plan(&self, n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        let mut plans = self.plans.lock().expect("fft plan cache poisoned");
        plans
            .entry((n, forward))
            .or_insert_with(|| {
                let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
                self.planner.lock().expect("fft planner poisoned").plan_fft(n, dir)
            })
            .clone()
    }
}

impl Default for RustFft {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for RustFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RustFft")
    }
}

impl Dft for RustFft {
    fn transform(&self, data: &mut [C64], shape: &[usize], sign: i32) {
        let forward = sign < 0;
        // The last axis is contiguous: transform all its lines in one call.
        if let Some(&n) = shape.last() {
            if n > 1 {
                self.plan(n, forward).process(data);
            }
        }
        if shape.len() > 1 {
            let mut head = shape.to_vec();
            let last = head.pop().unwrap_or(1);
            let mut cache: Option<(usize, Arc<dyn Fft<f64>>)> = None;
            // Remaining axes through the strided line iterator, with the last axis masked out.
            head.push(1);
            let total: usize = shape.iter().product();
            let stride_block = last;
            for s in 0..stride_block {
                let mut sub: Vec<C64> = (0..total / last).map(|i| data[i * last + s]).collect();
                for_each_line(&mut sub, &head, |line| {
                    let n = line.len();
                    let plan = match &cache {
                        Some((m, p)) if *m == n => p.clone(),
                        _ => {
                            let p = self.plan(n, forward);
                            cache = Some((n, p.clone()));
                            p
                        }
                    };
                    plan.process(line);
                });
                for (i, v) in sub.into_iter().enumerate() {
                    data[i * last + s] = v;
                }
            }
        }
    }
}
