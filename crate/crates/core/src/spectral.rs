//! Real FFT along the last axis with a packed real layout.
//!
//! For an even row length `d` the spectrum of a real row occupies exactly `d`
//! reals:
//!
//! ```text
//! [Re_0, Re_1, ..., Re_{d/2}, Im_1, ..., Im_{d/2-1}]
//! ```
//!
//! `Im_0` and `Im_{d/2}` are always zero for real input and are not stored.
//! The forward transform is unnormalized; the inverse carries `1/d`.
//!
//! Power-of-two lengths use an iterative radix-2 transform. Other even
//! lengths fall back to direct summation.

use std::f64::consts::PI;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

/// Packed rFFT coefficients, one row per input row.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSpectrum(Tensor);

impl PackedSpectrum {
    pub fn new(packed: Tensor) -> Result<Self> {
        check_width("packed_spectrum", packed.cols())?;
        Ok(Self(packed))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn re(&self, row: usize, k: usize) -> f64 {
        let d = self.width();
        assert!(k <= d / 2);
        self.0.get(row, k)
    }

    pub fn im(&self, row: usize, k: usize) -> f64 {
        let d = self.width();
        assert!(k <= d / 2);
        if k == 0 || k == d / 2 {
            0.0
        } else {
            self.0.get(row, d / 2 + k)
        }
    }
}

pub fn check_width(op: &'static str, d: usize) -> Result<()> {
    if d < 2 || !d.is_multiple_of(2) {
        return Err(Error::InvalidShape {
            op,
            shape: vec![d],
            reason: "hidden width must be even and at least 2".into(),
        });
    }
    Ok(())
}

/// In-place complex DFT. `sign = -1` is the forward kernel `e^{-i2πkl/n}`,
/// `sign = +1` the (unnormalized) inverse kernel.
fn dft_in_place(buf: &mut [Complex], sign: f64) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if !n.is_power_of_two() {
        let input = buf.to_vec();
        for (k, out) in buf.iter_mut().enumerate() {
            let mut acc = Complex::ZERO;
            for (l, x) in input.iter().enumerate() {
                let theta = sign * 2.0 * PI * ((k * l) % n) as f64 / n as f64;
                acc = acc.add(x.mul(Complex::new(theta.cos(), theta.sin())));
            }
            *out = acc;
        }
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex> = (0..half)
            .map(|k| {
                let theta = sign * 2.0 * PI * k as f64 / len as f64;
                Complex::new(theta.cos(), theta.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half].mul(twiddles[k]);
                buf[start + k] = a.add(b);
                buf[start + k + half] = a.sub(b);
            }
        }
        len <<= 1;
    }
}

fn pack(spectrum: &[Complex], out: &mut [f64]) {
    let d = out.len();
    let half = d / 2;
    for k in 0..=half {
        out[k] = spectrum[k].re;
    }
    for k in 1..half {
        out[half + k] = spectrum[k].im;
    }
}

/// Forward transform of one even-length real row into packed layout.
pub fn rfft_row(row: &[f64], out: &mut [f64]) {
    let mut buf: Vec<Complex> = row.iter().map(|&v| Complex::new(v, 0.0)).collect();
    dft_in_place(&mut buf, -1.0);
    pack(&buf, out);
}

/// Inverse transform (with `1/d`) of one packed row.
pub fn irfft_row(packed: &[f64], out: &mut [f64]) {
    let d = packed.len();
    let half = d / 2;
    let mut buf = vec![Complex::ZERO; d];
    buf[0] = Complex::new(packed[0], 0.0);
    buf[half] = Complex::new(packed[half], 0.0);
    for k in 1..half {
        let c = Complex::new(packed[k], packed[half + k]);
        buf[k] = c;
        buf[d - k] = Complex::new(c.re, -c.im);
    }
    dft_in_place(&mut buf, 1.0);
    let scale = 1.0 / d as f64;
    for (o, c) in out.iter_mut().zip(&buf) {
        *o = c.re * scale;
    }
}

/// Adjoint of [`rfft_row`]: maps a cotangent on the packed spectrum back to
/// the real row.
pub(crate) fn rfft_row_adjoint(grad_packed: &[f64], out: &mut [f64]) {
    let d = grad_packed.len();
    let half = d / 2;
    let mut buf = vec![Complex::ZERO; d];
    buf[0] = Complex::new(grad_packed[0], 0.0);
    buf[half] = Complex::new(grad_packed[half], 0.0);
    for k in 1..half {
        buf[k] = Complex::new(grad_packed[k], grad_packed[half + k]);
    }
    dft_in_place(&mut buf, 1.0);
    for (o, c) in out.iter_mut().zip(&buf) {
        *o = c.re;
    }
}

/// Adjoint of [`irfft_row`].
pub(crate) fn irfft_row_adjoint(grad_row: &[f64], out: &mut [f64]) {
    let d = grad_row.len();
    let half = d / 2;
    let mut buf: Vec<Complex> = grad_row.iter().map(|&v| Complex::new(v, 0.0)).collect();
    dft_in_place(&mut buf, -1.0);
    let inv = 1.0 / d as f64;
    out[0] = buf[0].re * inv;
    out[half] = buf[half].re * inv;
    for k in 1..half {
        out[k] = 2.0 * buf[k].re * inv;
        out[half + k] = 2.0 * buf[k].im * inv;
    }
}

fn map_rows(op: &'static str, z: &Tensor, f: impl Fn(&[f64], &mut [f64])) -> Result<Tensor> {
    let (n, d) = z.dims();
    check_width(op, d)?;
    let mut out = vec![0.0; n * d];
    for (src, dst) in z.data().chunks(d).zip(out.chunks_mut(d)) {
        f(src, dst);
    }
    Tensor::matrix(n, d, out)
}

pub(crate) fn rfft_rows_tensor(z: &Tensor) -> Result<Tensor> {
    map_rows("rfft_rows", z, rfft_row)
}

pub(crate) fn irfft_rows_tensor(c: &Tensor) -> Result<Tensor> {
    map_rows("irfft_rows", c, irfft_row)
}

pub(crate) fn rfft_rows_adjoint(g: &Tensor) -> Result<Tensor> {
    map_rows("rfft_rows", g, rfft_row_adjoint)
}

pub(crate) fn irfft_rows_adjoint(g: &Tensor) -> Result<Tensor> {
    map_rows("irfft_rows", g, irfft_row_adjoint)
}

/// Row-wise forward transform of an `N x d` matrix.
pub fn rfft_rows(z: &Tensor) -> Result<PackedSpectrum> {
    rfft_rows_tensor(z).map(PackedSpectrum)
}

/// Row-wise inverse transform; `irfft_rows(&rfft_rows(z)?)` reproduces `z`.
pub fn irfft_rows(c: &PackedSpectrum) -> Result<Tensor> {
    irfft_rows_tensor(&c.0)
}

/// Direct `O(d^2)` summation in the packed layout. Test oracle only.
pub fn naive_dft_rows(z: &Tensor) -> Result<PackedSpectrum> {
    map_rows("naive_dft_rows", z, |row, out| {
        let d = row.len();
        let spectrum: Vec<Complex> = (0..d)
            .map(|k| {
                let mut acc = Complex::ZERO;
                for (l, &x) in row.iter().enumerate() {
                    let theta = -2.0 * PI * ((k * l) % d) as f64 / d as f64;
                    acc = acc.add(Complex::new(x * theta.cos(), x * theta.sin()));
                }
                acc
            })
            .collect();
        pack(&spectrum, out);
    })
    .map(PackedSpectrum)
}
