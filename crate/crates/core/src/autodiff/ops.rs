//! Slice-level forward and backward kernels. Shapes are validated by the
//! graph before these are called.

use super::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.padding - self.kw) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Output columns `lo..hi` whose input column `ox + shift` lies in `0..w`.
fn valid_span(shift: isize, wo: usize, w: usize) -> (usize, usize) {
    let lo = (-shift).clamp(0, wo as isize) as usize;
    let hi = (w as isize - shift).clamp(lo as isize, wo as isize) as usize;
    (lo, hi)
}

/// Unfolds one image `[C, H, W]` into columns `[C*kh*kw, Ho*Wo]`, zero padded.
fn im2col<T: Float>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride) as isize + ky as isize - p;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(kx as isize - p, wo, g.w);
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        if lo < hi {
                            let off = (lo as isize + kx as isize - p) as usize;
                            line[lo..hi].copy_from_slice(&src[off..off + hi - lo]);
                        }
                        continue;
                    }
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride) as isize + kx as isize - p;
                        *v = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adds columns back into an image gradient; the adjoint of [`im2col`].
fn col2im<T: Float>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride) as isize + ky as isize - p;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(kx as isize - p, wo, g.w);
                        if lo < hi {
                            let off = (lo as isize + kx as isize - p) as usize;
                            for (d, v) in dst[off..off + hi - lo].iter_mut().zip(&src[oy * wo + lo..oy * wo + hi]) {
                                *d += *v;
                            }
                        }
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride) as isize + kx as isize - p;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Float>(x: &[T], weight: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plen = g.patch_len();
    let mut out = vec![T::zero(); g.n * g.c_out * ho * wo];
    let mut cols = vec![T::zero(); plen * ho * wo];
    for b in 0..g.n {
        let xb = &x[b * g.c_in * g.h * g.w..(b + 1) * g.c_in * g.h * g.w];
        im2col(xb, g, &mut cols);
        let ob = &mut out[b * g.c_out * ho * wo..(b + 1) * g.c_out * ho * wo];
        if let Some(bias) = bias {
            for (co, chunk) in ob.chunks_mut(ho * wo).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            g.c_out,
            plen,
            ho * wo,
            weight,
            (plen as isize, 1),
            &cols,
            ((ho * wo) as isize, 1),
            beta,
            ob,
        );
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dweight: Option<Vec<T>>,
    pub dbias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Float>(
    x: &[T],
    weight: &[T],
    gout: &[T],
    g: &ConvGeom,
    want: (bool, bool, bool),
) -> ConvGrads<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plen = g.patch_len();
    let hw = ho * wo;
    let mut dx = want.0.then(|| vec![T::zero(); x.len()]);
    let mut dweight = want.1.then(|| vec![T::zero(); weight.len()]);
    let mut dbias = want.2.then(|| vec![T::zero(); g.c_out]);
    let mut cols = vec![T::zero(); plen * hw];
    for b in 0..g.n {
        let gb = &gout[b * g.c_out * hw..(b + 1) * g.c_out * hw];
        if let Some(db) = dbias.as_mut() {
            for (co, chunk) in gb.chunks(hw).enumerate() {
                db[co] += chunk.iter().copied().sum();
            }
        }
        if let Some(dw) = dweight.as_mut() {
            let xb = &x[b * g.c_in * g.h * g.w..(b + 1) * g.c_in * g.h * g.w];
            im2col(xb, g, &mut cols);
            // dW[co, p] += sum_j gout[co, j] * cols[p, j]
            T::gemm(g.c_out, hw, plen, gb, (hw as isize, 1), &cols, (1, hw as isize), T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[p, j] = sum_co W[co, p] * gout[co, j]
            T::gemm(plen, g.c_out, hw, weight, (1, plen as isize), gb, (hw as isize, 1), T::zero(), &mut cols);
            let dxb = &mut dx[b * g.c_in * g.h * g.w..(b + 1) * g.c_in * g.h * g.w];
            col2im(&cols, g, dxb);
        }
    }
    ConvGrads { dx, dweight, dbias }
}

pub(crate) fn avg_pool2_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..ho {
            let r0 = &plane[2 * oy * w..(2 * oy + 1) * w];
            let r1 = &plane[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..wo {
                out.push((r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter);
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward<T: Float>(gout: &[T], dx: &mut [T], planes: usize, h: usize, w: usize) {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    for p in 0..planes {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = gout[(p * ho + oy) * wo + ox] * quarter;
                let base = p * h * w;
                dx[base + 2 * oy * w + 2 * ox] += gv;
                dx[base + 2 * oy * w + 2 * ox + 1] += gv;
                dx[base + (2 * oy + 1) * w + 2 * ox] += gv;
                dx[base + (2 * oy + 1) * w + 2 * ox + 1] += gv;
            }
        }
    }
}

/// Source taps of output index `o` for ×2 bilinear upsampling with
/// half-pixel centers and edge clamping.
fn upsample_taps(o: usize, len: usize) -> [(usize, f64); 2] {
    let k = o / 2;
    if o.is_multiple_of(2) {
        [(k.saturating_sub(1), 0.25), (k, 0.75)]
    } else {
        [(k, 0.75), ((k + 1).min(len - 1), 0.25)]
    }
}

pub(crate) fn upsample2_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    // rows first, then columns
    let mut tmp = vec![T::zero(); planes * ho * w];
    for p in 0..planes {
        for oy in 0..ho {
            let dst = &mut tmp[(p * ho + oy) * w..(p * ho + oy + 1) * w];
            for (src_y, wt) in upsample_taps(oy, h) {
                let wt = T::lit(wt);
                let src = &x[(p * h + src_y) * w..(p * h + src_y + 1) * w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
    }
    let taps: Vec<_> = (0..wo).map(|ox| upsample_taps(ox, w)).collect();
    let mut out = vec![T::zero(); planes * ho * wo];
    for (row, dst) in tmp.chunks(w).zip(out.chunks_mut(wo)) {
        for (d, t) in dst.iter_mut().zip(&taps) {
            *d = T::lit(t[0].1) * row[t[0].0] + T::lit(t[1].1) * row[t[1].0];
        }
    }
    out
}

pub(crate) fn upsample2_backward<T: Float>(gout: &[T], dx: &mut [T], planes: usize, h: usize, w: usize) {
    let (ho, wo) = (2 * h, 2 * w);
    let taps: Vec<_> = (0..wo).map(|ox| upsample_taps(ox, w)).collect();
    let mut tmp = vec![T::zero(); planes * ho * w];
    for (grow, trow) in gout.chunks(wo).zip(tmp.chunks_mut(w)) {
        for (&gv, t) in grow.iter().zip(&taps) {
            trow[t[0].0] += T::lit(t[0].1) * gv;
            trow[t[1].0] += T::lit(t[1].1) * gv;
        }
    }
    for p in 0..planes {
        for oy in 0..ho {
            let src = &tmp[(p * ho + oy) * w..(p * ho + oy + 1) * w];
            for (dst_y, wt) in upsample_taps(oy, h) {
                let wt = T::lit(wt);
                let dst = &mut dx[(p * h + dst_y) * w..(p * h + dst_y + 1) * w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
    }
}

/// Padding amounts `(top, bottom, left, right)`.
pub(crate) type Pad4 = (usize, usize, usize, usize);

pub(crate) fn replicate_pad_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize, pad: Pad4) -> Vec<T> {
    let (top, bottom, left, right) = pad;
    let (ho, wo) = (h + top + bottom, w + left + right);
    let mut out = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        for oy in 0..ho {
            let iy = oy.saturating_sub(top).min(h - 1);
            let row = &x[(p * h + iy) * w..(p * h + iy + 1) * w];
            for ox in 0..wo {
                out.push(row[ox.saturating_sub(left).min(w - 1)]);
            }
        }
    }
    out
}

pub(crate) fn replicate_pad_backward<T: Float>(gout: &[T], dx: &mut [T], planes: usize, h: usize, w: usize, pad: Pad4) {
    let (top, bottom, left, right) = pad;
    let (ho, wo) = (h + top + bottom, w + left + right);
    for p in 0..planes {
        for oy in 0..ho {
            let iy = oy.saturating_sub(top).min(h - 1);
            for ox in 0..wo {
                let ix = ox.saturating_sub(left).min(w - 1);
                dx[(p * h + iy) * w + ix] += gout[(p * ho + oy) * wo + ox];
            }
        }
    }
}

/// Geometry of a per-pixel separable filter: frames `[N, C, H, W]`,
/// kernels `[N, K, H, W]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SepGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

#[inline]
fn clamp_idx(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// `out(y,x,c) = sum_i sum_j kv(i,y,x) kh(j,y,x) frame(y+i-r, x+j-r, c)` with
/// replicate boundary handling.
pub(crate) fn separable_forward<T: Float>(frame: &[T], kv: &[T], kh: &[T], g: &SepGeom) -> Vec<T> {
    let SepGeom { n, c, h, w, k } = *g;
    let r = (k / 2) as isize;
    let hw = h * w;
    let mut out = vec![T::zero(); n * c * hw];
    let mut tmp = vec![T::zero(); c * k];
    let mut khv = vec![T::zero(); k];
    for b in 0..n {
        let fb = &frame[b * c * hw..(b + 1) * c * hw];
        let kvb = &kv[b * k * hw..(b + 1) * k * hw];
        let khb = &kh[b * k * hw..(b + 1) * k * hw];
        for y in 0..h {
            for x in 0..w {
                let pix = y * w + x;
                for (j, v) in khv.iter_mut().enumerate() {
                    *v = khb[j * hw + pix];
                }
                // tmp[c][i] = sum_j kh(j) f(y+i-r, x+j-r, c)
                for ch in 0..c {
                    let plane = &fb[ch * hw..(ch + 1) * hw];
                    for i in 0..k {
                        let yy = clamp_idx(y as isize + i as isize - r, h);
                        let row = &plane[yy * w..(yy + 1) * w];
                        let mut acc = T::zero();
                        for (j, &kj) in khv.iter().enumerate() {
                            acc += kj * row[clamp_idx(x as isize + j as isize - r, w)];
                        }
                        tmp[ch * k + i] = acc;
                    }
                }
                for ch in 0..c {
                    let mut acc = T::zero();
                    for i in 0..k {
                        acc += kvb[i * hw + pix] * tmp[ch * k + i];
                    }
                    out[(b * c + ch) * hw + pix] = acc;
                }
            }
        }
    }
    out
}

pub(crate) struct SepGrads<T> {
    pub dframe: Option<Vec<T>>,
    pub dkv: Option<Vec<T>>,
    pub dkh: Option<Vec<T>>,
}

pub(crate) fn separable_backward<T: Float>(
    frame: &[T],
    kv: &[T],
    kh: &[T],
    gout: &[T],
    g: &SepGeom,
    want: (bool, bool, bool),
) -> SepGrads<T> {
    let SepGeom { n, c, h, w, k } = *g;
    let r = (k / 2) as isize;
    let hw = h * w;
    let mut dframe = want.0.then(|| vec![T::zero(); frame.len()]);
    let mut dkv = want.1.then(|| vec![T::zero(); kv.len()]);
    let mut dkh = want.2.then(|| vec![T::zero(); kh.len()]);
    let mut xs = vec![0usize; k];
    let mut kvv = vec![T::zero(); k];
    let mut khv = vec![T::zero(); k];
    let mut gkv = vec![T::zero(); k];
    let mut gkh = vec![T::zero(); k];
    for b in 0..n {
        let fb = &frame[b * c * hw..(b + 1) * c * hw];
        for y in 0..h {
            for x in 0..w {
                let pix = y * w + x;
                for j in 0..k {
                    xs[j] = clamp_idx(x as isize + j as isize - r, w);
                    kvv[j] = kv[(b * k + j) * hw + pix];
                    khv[j] = kh[(b * k + j) * hw + pix];
                }
                gkv.fill(T::zero());
                gkh.fill(T::zero());
                for ch in 0..c {
                    let go = gout[(b * c + ch) * hw + pix];
                    if go == T::zero() {
                        continue;
                    }
                    let plane = &fb[ch * hw..(ch + 1) * hw];
                    for i in 0..k {
                        let yy = clamp_idx(y as isize + i as isize - r, h);
                        let row = &plane[yy * w..(yy + 1) * w];
                        let gi = go * kvv[i];
                        let mut t = T::zero();
                        for j in 0..k {
                            let f = row[xs[j]];
                            t += khv[j] * f;
                            gkh[j] += gi * f;
                        }
                        gkv[i] += go * t;
                        if let Some(df) = dframe.as_mut() {
                            let drow = &mut df[(b * c + ch) * hw + yy * w..(b * c + ch) * hw + (yy + 1) * w];
                            for j in 0..k {
                                drow[xs[j]] += gi * khv[j];
                            }
                        }
                    }
                }
                if let Some(d) = dkv.as_mut() {
                    for i in 0..k {
                        d[(b * k + i) * hw + pix] += gkv[i];
                    }
                }
                if let Some(d) = dkh.as_mut() {
                    for j in 0..k {
                        d[(b * k + j) * hw + pix] += gkh[j];
                    }
                }
            }
        }
    }
    SepGrads { dframe, dkv, dkh }
}
