use crate::tensor::{ShapeError, Tensor};

/// `+1` for `x ≥ 0`, `−1` otherwise. NaN maps to `−1`.
#[inline]
pub fn sign(x: f32) -> f32 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_forward(x: &Tensor) -> Tensor {
    x.map(sign)
}

/// Straight-through gradient: passes `grad_out` where `|x| < t_clip`, zero
/// elsewhere (the boundary itself is cut).
pub fn ste_backward(x: &Tensor, grad_out: &Tensor, t_clip: f32) -> Result<Tensor, ShapeError> {
    x.same_shape(grad_out)?;
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv.abs() >= t_clip {
            *gv = 0.0;
        }
    }
    Ok(g)
}

#[inline]
pub fn clip(x: f32, t_clip: f32) -> f32 {
    x.clamp(-t_clip, t_clip)
}
