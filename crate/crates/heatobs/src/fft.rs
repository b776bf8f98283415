//! Unnormalized n-dimensional FFT over row-major torus samples.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place transform along every axis. `inverse` uses the `+i` kernel; no scaling is applied.
pub(crate) fn fft_nd(n: usize, m: usize, data: &mut [Complex64], inverse: bool) {
    debug_assert_eq!(data.len(), m.pow(n as u32));
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(m)
        } else {
            p.plan_fft_forward(m)
        }
    });
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    if n == 1 {
        return;
    }
    let total = data.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    for axis in 0..n - 1 {
        let stride = m.pow((n - 1 - axis) as u32);
        let outer = total / (m * stride);
        let mut line = 0;
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * m * stride + inner;
                let dst = &mut buf[line * m..(line + 1) * m];
                for (i, d) in dst.iter_mut().enumerate() {
                    *d = data[base + i * stride];
                }
                line += 1;
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        line = 0;
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * m * stride + inner;
                let src = &buf[line * m..(line + 1) * m];
                for (i, s) in src.iter().enumerate() {
                    data[base + i * stride] = *s;
                }
                line += 1;
            }
        }
    }
}
