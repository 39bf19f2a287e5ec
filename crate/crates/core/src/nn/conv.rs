//! im2col / col2im for a single `[C, H, W]` sample.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Output spatial size, or `None` when the kernel does not fit.
    pub fn new(
        in_ch: usize,
        in_h: usize,
        in_w: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if kernel == 0 || stride == 0 {
            return None;
        }
        let ph = in_h + 2 * pad;
        let pw = in_w + 2 * pad;
        if ph < kernel || pw < kernel {
            return None;
        }
        Some(ConvGeom {
            in_ch,
            in_h,
            in_w,
            kernel,
            stride,
            pad,
            out_h: (ph - kernel) / stride + 1,
            out_w: (pw - kernel) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    /// Source index into the input for (patch row, output position), or
    /// `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, c: usize, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.stride + ki) as isize - self.pad as isize;
        let x = (ox * self.stride + kj) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.in_h as isize || x >= self.in_w as isize {
            return None;
        }
        Some((c * self.in_h + y as usize) * self.in_w + x as usize)
    }

    /// `cols` is `[patch_len, positions]`, row-major.
    pub fn im2col(&self, input: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        let k = self.kernel;
        for c in 0..self.in_ch {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            dst[oy * self.out_w + ox] =
                                self.source(c, ki, kj, oy, ox).map_or(0.0, |s| input[s]);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back into `grad_input`.
    pub fn col2im(&self, cols: &[f64], grad_input: &mut [f64]) {
        let p = self.positions();
        let k = self.kernel;
        for c in 0..self.in_ch {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some(s) = self.source(c, ki, kj, oy, ox) {
                                grad_input[s] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_size_arithmetic() {
        let g = ConvGeom::new(1, 8, 8, 3, 1, 0).unwrap();
        assert_eq!((g.out_h, g.out_w), (6, 6));
        let g = ConvGeom::new(3, 32, 32, 3, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (16, 16));
        assert!(ConvGeom::new(1, 2, 2, 3, 1, 0).is_none());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for the linear map and its transpose
        let g = ConvGeom::new(2, 5, 4, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.patch_len() * g.positions())
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut cols = vec![0.0; y.len()];
        g.im2col(&x, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        g.col2im(&y, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
