//! 2-D convolution on `[H, W, C]` feature maps via im2col.

use crate::error::{ensure, Result};
use crate::tensor::{gemm, MatLayout, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

struct Dims {
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    cin_g: usize,
    cout_g: usize,
    ho: usize,
    wo: usize,
}

fn dims<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, g: ConvGeometry) -> Result<Dims> {
    ensure!(
        x.rank() == 3,
        "diffcore",
        "conv2d: input must be [H, W, C], got {:?}",
        x.shape()
    );
    ensure!(
        kernel.rank() == 4,
        "diffcore",
        "conv2d: kernel must be [Cout, kh, kw, Cin/groups], got {:?}",
        kernel.shape()
    );
    ensure!(g.stride > 0 && g.groups > 0, "diffcore", "conv2d: stride and groups must be positive");
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kh, kw, cin_g) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    ensure!(
        cin % g.groups == 0 && cout % g.groups == 0,
        "diffcore",
        "conv2d: channels in={cin} out={cout} not divisible by groups={}",
        g.groups
    );
    ensure!(
        cin_g * g.groups == cin,
        "diffcore",
        "conv2d: kernel expects {} input channels per group, input has {cin} over {} groups",
        cin_g,
        g.groups
    );
    ensure!(
        h + 2 * g.padding >= kh && w + 2 * g.padding >= kw,
        "diffcore",
        "conv2d: {kh}x{kw} kernel larger than padded {h}x{w} input"
    );
    let ho = (h + 2 * g.padding - kh) / g.stride + 1;
    let wo = (w + 2 * g.padding - kw) / g.stride + 1;
    Ok(Dims {
        h,
        w,
        cin,
        cout,
        kh,
        kw,
        cin_g,
        cout_g: cout / g.groups,
        ho,
        wo,
    })
}

/// Visit `(output position, kernel tap, input index)` for in-bounds taps.
fn for_each_tap(d: &Dims, g: ConvGeometry, mut f: impl FnMut(usize, usize, usize)) {
    for oy in 0..d.ho {
        for ox in 0..d.wo {
            let pos = oy * d.wo + ox;
            for ky in 0..d.kh {
                let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                if iy < 0 || iy >= d.h as isize {
                    continue;
                }
                for kx in 0..d.kw {
                    let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                    if ix < 0 || ix >= d.w as isize {
                        continue;
                    }
                    f(pos, ky * d.kw + kx, (iy as usize * d.w + ix as usize) * d.cin);
                }
            }
        }
    }
}

fn im2col<T: Scalar>(x: &Tensor<T>, d: &Dims, g: ConvGeometry, group: usize) -> Vec<T> {
    let k = d.kh * d.kw * d.cin_g;
    let mut cols = vec![T::zero(); d.ho * d.wo * k];
    let c0 = group * d.cin_g;
    for_each_tap(d, g, |pos, tap, base| {
        let dst = pos * k + tap * d.cin_g;
        cols[dst..dst + d.cin_g].copy_from_slice(&x.data()[base + c0..base + c0 + d.cin_g]);
    });
    cols
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = dims(x, kernel, g)?;
    if let Some(b) = bias {
        ensure!(b.len() == d.cout, "diffcore", "conv2d: bias must have {} entries", d.cout);
    }
    let npos = d.ho * d.wo;
    let mut out = Tensor::zeros(&[d.ho, d.wo, d.cout]);
    if let Some(b) = bias {
        for p in 0..npos {
            out.row_mut(p).copy_from_slice(b.data());
        }
    }
    if d.cin_g == 1 && d.cout_g == 1 {
        // depth-wise: one filter per channel
        let taps = d.kh * d.kw;
        let o = out.data_mut();
        for_each_tap(&d, g, |pos, tap, base| {
            for c in 0..d.cout {
                o[pos * d.cout + c] += kernel.data()[c * taps + tap] * x.data()[base + c];
            }
        });
        return Ok(out);
    }
    let k = d.kh * d.kw * d.cin_g;
    for group in 0..g.groups {
        let cols = im2col(x, &d, g, group);
        gemm(
            T::one(),
            &cols,
            MatLayout::dense(npos, k),
            kernel.data(),
            MatLayout {
                rows: d.cout_g,
                cols: k,
                row_stride: k,
                col_stride: 1,
                offset: group * d.cout_g * k,
            }
            .t(),
            T::one(),
            out.data_mut(),
            MatLayout::column_block(npos, d.cout, group * d.cout_g, d.cout_g),
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    gy: &Tensor<T>,
    with_bias: bool,
    g: ConvGeometry,
) -> Result<ConvGrads<T>> {
    let d = dims(x, kernel, g)?;
    ensure!(
        gy.shape() == [d.ho, d.wo, d.cout],
        "diffcore",
        "conv2d backward: upstream {:?} does not match output [{}, {}, {}]",
        gy.shape(),
        d.ho,
        d.wo,
        d.cout
    );
    let npos = d.ho * d.wo;
    let mut gx = Tensor::zeros(x.shape());
    let mut gk = Tensor::zeros(kernel.shape());
    let gb = with_bias.then(|| {
        let mut gb = vec![T::zero(); d.cout];
        for p in 0..npos {
            for (a, &v) in gb.iter_mut().zip(gy.row(p)) {
                *a += v;
            }
        }
        Tensor::from_vec(gb)
    });
    if d.cin_g == 1 && d.cout_g == 1 {
        let taps = d.kh * d.kw;
        let (gxd, gkd) = (gx.data_mut(), gk.data_mut());
        for_each_tap(&d, g, |pos, tap, base| {
            for c in 0..d.cout {
                let up = gy.data()[pos * d.cout + c];
                gkd[c * taps + tap] += up * x.data()[base + c];
                gxd[base + c] += up * kernel.data()[c * taps + tap];
            }
        });
        return Ok(ConvGrads {
            input: gx,
            kernel: gk,
            bias: gb,
        });
    }
    let k = d.kh * d.kw * d.cin_g;
    for group in 0..g.groups {
        let cols = im2col(x, &d, g, group);
        let gy_view = MatLayout::column_block(npos, d.cout, group * d.cout_g, d.cout_g);
        let w_view = MatLayout {
            rows: d.cout_g,
            cols: k,
            row_stride: k,
            col_stride: 1,
            offset: group * d.cout_g * k,
        };
        gemm(
            T::one(),
            gy.data(),
            gy_view.t(),
            &cols,
            MatLayout::dense(npos, k),
            T::zero(),
            gk.data_mut(),
            w_view,
        );
        let mut gcols = vec![T::zero(); npos * k];
        gemm(
            T::one(),
            gy.data(),
            gy_view,
            kernel.data(),
            w_view,
            T::zero(),
            &mut gcols,
            MatLayout::dense(npos, k),
        );
        let c0 = group * d.cin_g;
        let gxd = gx.data_mut();
        for_each_tap(&d, g, |pos, tap, base| {
            let src = pos * k + tap * d.cin_g;
            for c in 0..d.cin_g {
                gxd[base + c0 + c] += gcols[src + c];
            }
        });
    }
    Ok(ConvGrads {
        input: gx,
        kernel: gk,
        bias: gb,
    })
}
