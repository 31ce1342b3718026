"""Fast in-process checks: patch test, force balance, codec round trip and gradient checks.

Runs without pytest; main() returns a summary and the command line exits
nonzero when any check fails.
"""

import json
import logging
import sys

import numpy as np

from config.runConfig import ModelConfig
from func.contourCodec import CanvasLayout, decode, dequantize, fitContourMap, quantize, rasterize
from func.errors import NumericalError
from func.fem2d import LoadCase, Material, buildMeshCantilever, solve
from func.nnCore import Conv2d, LayerParams, MaxPool2x2, ReLU, Sigmoid, Upsample2x, gradientCheck
from func.physicsLoss import physicalLoss, physicalLossGrad
from func.unetModels import build

GRADIENT_TOLERANCE = 1e-4


def checkPatchTest():
    """Uniform tension of a sliding-root strip reproduces sigma_x = F / (H t) at every node."""
    mesh = buildMeshCantilever(1.0, 0.2)
    material = Material()
    field = solve(mesh, material, LoadCase("sliding", "distributed", "x", "tip", 1000.0))
    exact = 1000.0 / (1.0 * material.thickness)
    error = max(
        float(np.max(np.abs(field.sigmaX - exact))) / exact,
        float(np.max(np.abs(field.sigmaY))) / exact,
        float(np.max(np.abs(field.tauXY))) / exact,
    )
    return error <= 1e-8, error


def checkForceBalance():
    mesh = buildMeshCantilever(1.0, 0.2)
    field = solve(mesh, Material(), LoadCase("fixed", "concentrated", "y", 0.6, 1000.0))
    residual = np.abs(field.reactions.sum(axis=0) + np.array([0.0, 1000.0])).max() / 1000.0
    return residual <= 1e-8, float(residual)


def checkCodecRoundTrip():
    """8-bit export then decode stays within one quantization step of the float image."""
    mesh = buildMeshCantilever(1.0, 0.1)
    field = solve(mesh, Material(), LoadCase("fixed", "concentrated", "y", 1.0, 1000.0))
    contourMap = fitContourMap(field)
    layout = CanvasLayout.forOutline(mesh.outline, 32, 64)
    image = rasterize(field, contourMap, layout, "selftest")
    restored = dequantize(quantize(image), contourMap, "selftest", image.footprint)
    error = np.abs(decode(restored) - decode(image)).max() / abs(contourMap.C)
    step = 1.0 / 255.0
    return bool(error <= step), float(error / step)


def checkPhysicsGradient(rng):
    y = rng.normal(size=(3, 8, 8))
    mask = np.zeros((8, 8), dtype=bool)
    mask[1:-1, 1:-1] = True
    worst = gradientCheck(lambda v: physicalLoss(v, mask), y, physicalLossGrad(y, mask), rng, coordinates=60)
    return worst <= 1e-5, worst


def _layerCheck(layer, x, rng, skip=None):
    weights = rng.normal(size=layer.forward(x).shape)
    analytic = layer.backward(weights)
    return gradientCheck(lambda v: float(np.sum(weights * layer.forward(v))), x, analytic, rng, skip=skip)


def checkLayerGradients(rng):
    results = {}
    x = rng.normal(size=(2, 3, 6, 6))
    conv = Conv2d(LayerParams.heNormal(4, 3, 3, rng, np.float64))
    results["conv2d input"] = _layerCheck(conv, x.copy(), rng)
    weights = rng.normal(size=(2, 4, 6, 6))
    conv.params.zeroGrad()
    conv.forward(x)
    conv.backward(weights)
    results["conv2d kernels"] = gradientCheck(
        lambda k: float(np.sum(weights * conv.forward(x))), conv.params.kernels, conv.params.gradKernels.copy(), rng
    )

    pool = MaxPool2x2()
    pooled = x.copy()

    def nearTie(index):
        b, c, r, col = np.unravel_index(index, pooled.shape)
        window = pooled[b, c, r - r % 2:r - r % 2 + 2, col - col % 2:col - col % 2 + 2]
        top = np.sort(window.ravel())
        return top[-1] - top[-2] < 1e-3

    results["maxpool"] = _layerCheck(pool, pooled, rng, skip=nearTie)
    results["upsample"] = _layerCheck(Upsample2x(), x.copy(), rng)
    results["relu"] = _layerCheck(ReLU(), x.copy(), rng, skip=lambda i: abs(x.reshape(-1)[i]) < 1e-3)
    results["sigmoid"] = _layerCheck(Sigmoid(), x.copy(), rng)
    return all(v <= GRADIENT_TOLERANCE for v in results.values()), results


def checkModelGradients(rng):
    results = {}
    for variant in ("unet", "unetpp"):
        config = ModelConfig(variant=variant, depth=2, baseChannels=4, physicsInformed=False)
        model = build(config, seed=1).astype(np.float64)
        x = rng.uniform(size=(1, 3, 8, 8))
        weights = rng.normal(size=(1, 3, 8, 8))
        model.forward(x)
        analytic = model.backward(weights)
        results[variant] = gradientCheck(lambda v: float(np.sum(weights * model.forward(v))), x, analytic, rng,
                                         coordinates=40, step=1e-6)
    return all(v <= GRADIENT_TOLERANCE for v in results.values()), results


def runChecks(seed=0):
    rng = np.random.default_rng(seed)
    checks = [
        ("patch test", checkPatchTest),
        ("force balance", checkForceBalance),
        ("codec round trip", checkCodecRoundTrip),
        ("physical loss gradient", lambda: checkPhysicsGradient(rng)),
        ("layer gradients", lambda: checkLayerGradients(rng)),
        ("model gradients", lambda: checkModelGradients(rng)),
    ]
    results = {}
    for k, (name, check) in enumerate(checks):
        logging.info(f"({k + 1}/{len(checks)}) -> {name}")
        try:
            passed, detail = check()
        except (ValueError, FloatingPointError, NumericalError) as e:
            logging.error(f"Self-test '{name}' raised: {e}")
            passed, detail = False, str(e)
        results[name] = {"passed": bool(passed), "detail": detail}
        if not passed:
            logging.error(f"Self-test '{name}' failed: {detail}")
    return results


def main(seed=0):
    logging.info("\n\n************************SELF-TEST*************************")
    results = runChecks(seed)
    failed = [name for name, result in results.items() if not result["passed"]]
    logging.info(f"************************SELF-TEST {'FAILED' if failed else 'PASSED'}*************************")
    return {"command": "selftest", "passed": not failed, "failed": failed, "checks": results}


if __name__ == "__main__":
    summary = main()
    print(json.dumps(summary, default=float))
    sys.exit(0 if summary["passed"] else 3)
