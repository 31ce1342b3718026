"""Equilibrium-residual (physical) loss, MSE loss, their gradients and loss tables.

Index convention of the stencils: i runs along x (image columns, left to right)
and j along y (upwards, i.e. towards smaller row numbers). Differences are taken
without the 1/(2h) factor. Rasters are (..., 3, height, width) in the channel
order sigma_x, sigma_y, tau_xy.
"""

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class LossReport:
    total: float
    mse: float
    physical: float
    physicalSum: float = 0.0
    pixelCount: int = 0
    maskedCount: int = 0
    emptyMask: bool = False

    def toDict(self):
        return asdict(self)

    def toJson(self):
        return json.dumps(self.toDict())


def _centralX(f):
    ##f(i+1, j) - f(i-1, j), NaN on the left and right borders
    out = np.full(f.shape, np.nan)
    out[..., :, 1:-1] = f[..., :, 2:] - f[..., :, :-2]
    return out


def _centralY(f):
    ##f(i, j+1) - f(i, j-1), j up, NaN on the top and bottom borders
    out = np.full(f.shape, np.nan)
    out[..., 1:-1, :] = f[..., :-2, :] - f[..., 2:, :]
    return out


def _adjointX(w):
    ##transpose of _centralX; w is zero wherever no residual is taken
    padded = np.pad(w, [(0, 0)] * (w.ndim - 1) + [(1, 1)])
    return padded[..., :, :-2] - padded[..., :, 2:]


def _adjointY(w):
    padded = np.pad(w, [(0, 0)] * (w.ndim - 2) + [(1, 1), (0, 0)])
    return padded[..., 2:, :] - padded[..., :-2, :]


def _checkRaster(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim < 3 or y.shape[-3] != 3:
        raise ValueError(f"expected (..., 3, height, width) rasters, got {y.shape}")
    if y.shape[-2] < 3 or y.shape[-1] < 3:
        raise ValueError(f"rasters of {y.shape[-2]}x{y.shape[-1]} are smaller than the 3x3 stencil")
    return y


def _checkMask(mask, shape):
    mask = np.asarray(getattr(mask, "mask", mask), dtype=bool)
    if mask.shape != shape[-2:]:
        raise ValueError(f"mask {mask.shape} does not match rasters {shape[-2:]}")
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("mask selects border pixels the stencil cannot reach")
    return mask


def divergence(y):
    """Two-channel residual (r_x, r_y) of the discrete equilibrium equations.

    r_x = dsigma_x/dx + dtau_xy/dy and r_y = dsigma_y/dy + dtau_xy/dx; border
    pixels are NaN.
    """
    y = _checkRaster(y)
    y1, y2, y3 = y[..., 0, :, :], y[..., 1, :, :], y[..., 2, :, :]
    rx = _centralX(y1) + _centralY(y3)
    ry = _centralY(y2) + _centralX(y3)
    return np.stack([rx, ry], axis=-3)


def _maskedResidual(y, mask):
    residual = divergence(y)
    return np.where(mask, residual, 0.0)


def physicalLossSum(y, mask):
    y = _checkRaster(y)
    mask = _checkMask(mask, y.shape)
    residual = _maskedResidual(y, mask)
    return float(np.sum(residual**2))


def physicalLoss(y, mask):
    """Masked squared equilibrium residual, averaged over the masked pixels.

    An empty mask gives 0 and logs a warning.
    """
    y = _checkRaster(y)
    mask = _checkMask(mask, y.shape)
    count = int(mask.sum())
    if count == 0:
        logging.warning("Physical loss requested with an empty interior mask")
        return 0.0
    return physicalLossSum(y, mask) / count


def physicalLossGrad(y, mask):
    """Exact gradient of physicalLoss with respect to the three rasters."""
    y = _checkRaster(y)
    mask = _checkMask(mask, y.shape)
    count = int(mask.sum())
    if count == 0:
        return np.zeros_like(y)
    residual = _maskedResidual(y, mask)
    a = 2.0 * residual[..., 0, :, :] / count
    b = 2.0 * residual[..., 1, :, :] / count
    return np.stack([_adjointX(a), _adjointY(b), _adjointY(a) + _adjointX(b)], axis=-3)


def mseLoss(output, target):
    """Mean squared error over every pixel and channel, and its gradient."""
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape:
        raise ValueError(f"output {output.shape} and target {target.shape} differ in shape")
    diff = output - target
    count = diff.size
    return float(np.sum(diff**2) / count), 2.0 * diff / count


def lossReport(output, target, mask, physicsWeight=1.0, physicsInformed=True):
    """Loss report of one sample; total includes the physical term only for PI models."""
    mse, _ = mseLoss(output, target)
    mask = _checkMask(mask, np.shape(output))
    count = int(mask.sum())
    rawSum = physicalLossSum(output, mask)
    physical = rawSum / count if count else 0.0
    total = mse + physicsWeight * physical if physicsInformed else mse
    return LossReport(total, mse, physical, rawSum, int(np.size(output)), count, count == 0)


def meanReport(reports, weights=None):
    """Average of reports, summed in list order; weights default to 1 each."""
    if not reports:
        raise ValueError("no loss reports to average")
    weights = [1.0] * len(reports) if weights is None else [float(w) for w in weights]
    if len(weights) != len(reports):
        raise ValueError(f"{len(weights)} weights for {len(reports)} reports")
    n = sum(weights)
    return LossReport(
        total=sum(w * r.total for w, r in zip(weights, reports)) / n,
        mse=sum(w * r.mse for w, r in zip(weights, reports)) / n,
        physical=sum(w * r.physical for w, r in zip(weights, reports)) / n,
        physicalSum=sum(w * r.physicalSum for w, r in zip(weights, reports)) / n,
        pixelCount=sum(r.pixelCount for r in reports),
        maskedCount=sum(r.maskedCount for r in reports),
        emptyMask=any(r.emptyMask for r in reports),
    )


def formatLossTable(rows, scale=1e-4):
    """Aligned text table of named reports in the Total / MSE / physical layout."""
    header = f"{'':<12}{'Total loss':>14}{'MSE loss':>14}{'physical loss':>15}"
    lines = [f"(values x {scale:g})", header, "-" * len(header)]
    for name, report in rows:
        lines.append(
            f"{name:<12}{report.total / scale:>14.2f}{report.mse / scale:>14.2f}{report.physical / scale:>15.2f}"
        )
    return "\n".join(lines)


def lossTableJson(rows, **meta):
    return json.dumps({**meta, "rows": [{"name": name, **report.toDict()} for name, report in rows]}, indent=1)
