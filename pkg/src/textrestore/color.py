"""CIE Lab <-> sRGB conversions (D65 white point).

Tensors are channel-first: RGB is 3xHxW in [0, 1], Lab is L in [0, 100]
and a/b nominally in [-128, 127]. `lab_to_rgb` clamps out-of-gamut
colors to [0, 1].
"""

import torch

# D65 reference white, 2-degree observer.
_WHITE = (0.95047, 1.0, 1.08883)

_RGB_TO_XYZ = torch.tensor(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ],
    dtype=torch.float64,
)

# exact inverse keeps the round trip consistent to float precision
_XYZ_TO_RGB = torch.linalg.inv(_RGB_TO_XYZ)

_DELTA = 6.0 / 29.0


def _srgb_to_linear(c: torch.Tensor) -> torch.Tensor:
    return torch.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: torch.Tensor) -> torch.Tensor:
    c = c.clamp(min=0.0)
    return torch.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t: torch.Tensor) -> torch.Tensor:
    return torch.where(t > _DELTA**3, t.clamp(min=0.0) ** (1.0 / 3.0), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: torch.Tensor) -> torch.Tensor:
    return torch.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb: torch.Tensor) -> torch.Tensor:
    """Convert a 3xHxW sRGB tensor in [0, 1] to a 3xHxW Lab tensor."""
    if rgb.shape[0] != 3:
        raise ValueError(f"expected 3xHxW RGB tensor, got shape {tuple(rgb.shape)}")
    lin = _srgb_to_linear(rgb.clamp(0.0, 1.0))
    xyz = torch.einsum("ij,jhw->ihw", _RGB_TO_XYZ.to(rgb.dtype), lin)
    fx = _lab_f(xyz[0] / _WHITE[0])
    fy = _lab_f(xyz[1] / _WHITE[1])
    fz = _lab_f(xyz[2] / _WHITE[2])
    lum = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return torch.stack([lum, a, b])


def lab_to_rgb(lab: torch.Tensor) -> torch.Tensor:
    """Convert a 3xHxW Lab tensor back to sRGB in [0, 1] (clamped)."""
    if lab.shape[0] != 3:
        raise ValueError(f"expected 3xHxW Lab tensor, got shape {tuple(lab.shape)}")
    fy = (lab[0] + 16.0) / 116.0
    fx = fy + lab[1] / 500.0
    fz = fy - lab[2] / 200.0
    xyz = torch.stack(
        [
            _lab_f_inv(fx) * _WHITE[0],
            _lab_f_inv(fy) * _WHITE[1],
            _lab_f_inv(fz) * _WHITE[2],
        ]
    )
    lin = torch.einsum("ij,jhw->ihw", _XYZ_TO_RGB.to(lab.dtype), xyz)
    return _linear_to_srgb(lin).clamp(0.0, 1.0)
