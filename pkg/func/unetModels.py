"""U-Net and U-Net++ over the nnCore layer set, plus the plain / physics-informed loss.

Both topologies are wired as a list of nodes X(i, j): i is the resolution level
(0 = full canvas) and j the position along the skip pathway. Encoder nodes are
X(i, 0); a decoder node concatenates its skip inputs with an upsampled copy of a
node one level deeper, then runs a conv-relu-conv-relu block. U-Net keeps only
the decoder nodes X(depth - j, j); U-Net++ keeps every X(i, j) with i + j <= depth.
"""

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from func.nnCore import (
    Conv2d,
    LayerParams,
    MaxPool2x2,
    ReLU,
    Sigmoid,
    Upsample2x,
    concatChannels,
    splitChannels,
)
from func.physicsLoss import LossReport, meanReport, mseLoss, physicalLossGrad, physicalLossSum

IN_CHANNELS = 3
OUT_CHANNELS = 3


def convParameterCount(inChannels, outChannels, kernelSize=3):
    return outChannels * inChannels * kernelSize * kernelSize + outChannels


class ConvBlock:
    """conv3x3 - relu - conv3x3 - relu"""

    def __init__(self, inChannels, outChannels, rng, dtype):
        self.conv1 = Conv2d(LayerParams.heNormal(outChannels, inChannels, 3, rng, dtype))
        self.relu1 = ReLU()
        self.conv2 = Conv2d(LayerParams.heNormal(outChannels, outChannels, 3, rng, dtype))
        self.relu2 = ReLU()

    def forward(self, x):
        return self.relu2.forward(self.conv2.forward(self.relu1.forward(self.conv1.forward(x))))

    def backward(self, dout):
        return self.conv1.backward(self.relu1.backward(self.conv2.backward(self.relu2.backward(dout))))

    def convs(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]


class UpConv:
    """Nearest 2x upsampling followed by a 3x3 conv."""

    def __init__(self, inChannels, outChannels, rng, dtype):
        self.upsample = Upsample2x()
        self.conv = Conv2d(LayerParams.heNormal(outChannels, inChannels, 3, rng, dtype))

    def forward(self, x):
        return self.conv.forward(self.upsample.forward(x))

    def backward(self, dout):
        return self.upsample.backward(self.conv.backward(dout))

    def convs(self):
        return [("up", self.conv)]


@dataclass
class Node:
    level: int
    column: int
    block: ConvBlock
    skips: list = field(default_factory=list)
    upFrom: tuple = None
    up: UpConv = None
    pool: MaxPool2x2 = None
    splitSizes: list = None

    @property
    def key(self):
        return (self.level, self.column)

    @property
    def name(self):
        return f"x{self.level}_{self.column}"


class Model:
    """Image-to-image network: 3 stress channels in, 3 channels in (0, 1) out."""

    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        depth = config.depth
        widths = [config.baseChannels * 2**level for level in range(depth + 1)]
        self.widths = widths

        self.nodes = []
        for level in range(depth + 1):
            inChannels = IN_CHANNELS if level == 0 else widths[level - 1]
            node = Node(level, 0, ConvBlock(inChannels, widths[level], rng, dtype))
            if level > 0:
                node.pool = MaxPool2x2()
            self.nodes.append(node)

        for column in range(1, depth + 1):
            levels = range(depth - column + 1) if config.variant == "unetpp" else [depth - column]
            for level in levels:
                if config.variant == "unetpp":
                    skips = [(level, k) for k in range(column)]
                else:
                    skips = [(level, 0)]
                up = UpConv(widths[level + 1], widths[level], rng, dtype)
                block = ConvBlock((len(skips) + 1) * widths[level], widths[level], rng, dtype)
                self.nodes.append(Node(level, column, block, skips=skips, upFrom=(level + 1, column - 1), up=up))

        self.outputKey = (0, depth)
        self.head = Conv2d(LayerParams.heNormal(OUT_CHANNELS, widths[0], 1, rng, dtype))
        self.sigmoid = Sigmoid()

    @property
    def variantName(self):
        return self.config.variantName()

    # ----------------------------------
    # Parameters
    # ----------------------------------
    def namedLayers(self):
        """Every conv in a fixed order, with stable names."""
        layers = []
        for node in self.nodes:
            if node.up is not None:
                layers.extend((f"{node.name}.{name}", conv) for name, conv in node.up.convs())
            layers.extend((f"{node.name}.{name}", conv) for name, conv in node.block.convs())
        layers.append(("head", self.head))
        return layers

    def parameters(self):
        return [conv.params for _, conv in self.namedLayers()]

    def setParameters(self, params):
        layers = self.namedLayers()
        if len(params) != len(layers):
            raise ValueError(f"model has {len(layers)} layers, got parameters for {len(params)}")
        for (name, conv), p in zip(layers, params):
            if p.kernels.shape != conv.params.kernels.shape:
                raise ValueError(f"layer {name}: expected {conv.params.kernels.shape}, got {p.kernels.shape}")
            conv.params = p

    def astype(self, dtype):
        """Copy of the model with parameters cast to dtype (gradient checks use float64)."""
        clone = copy.deepcopy(self)
        clone.dtype = dtype
        clone.setParameters([p.astype(dtype) for p in self.parameters()])
        return clone

    def clone(self):
        return copy.deepcopy(self)

    def describe(self):
        lines = [f"{self.variantName} depth={self.config.depth} base={self.config.baseChannels}"]
        for node in self.nodes:
            if node.up is None:
                source = "input" if node.level == 0 else f"pool(x{node.level - 1}_0)"
            else:
                skips = ", ".join(f"x{i}_{j}" for i, j in node.skips)
                source = f"concat({skips}, up(x{node.upFrom[0]}_{node.upFrom[1]}))"
            lines.append(f"  {node.name}: {source} -> {self.widths[node.level]} ch")
        lines.append(f"  head: conv1x1(x{self.outputKey[0]}_{self.outputKey[1]}) -> {OUT_CHANNELS} ch, sigmoid")
        lines.append(f"  parameters: {parameterCount(self)}")
        return "\n".join(lines)

    # ----------------------------------
    # Forward / backward
    # ----------------------------------
    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ValueError(f"expected (batch, {IN_CHANNELS}, height, width) input, got {x.shape}")
        self.config.checkCanvas(x.shape[2], x.shape[3])
        outputs = {}
        for node in self.nodes:
            if node.up is None:
                h = x if node.level == 0 else node.pool.forward(outputs[(node.level - 1, 0)])
            else:
                upsampled = node.up.forward(outputs[node.upFrom])
                h, node.splitSizes = concatChannels([outputs[key] for key in node.skips] + [upsampled])
            outputs[node.key] = node.block.forward(h)
        return self.sigmoid.forward(self.head.forward(outputs[self.outputKey]))

    def backward(self, dout):
        """Accumulate parameter gradients; returns the input gradient."""
        grads = {self.outputKey: self.head.backward(self.sigmoid.backward(dout))}
        dx = None

        def accumulate(key, value):
            grads[key] = value if key not in grads else grads[key] + value

        for node in reversed(self.nodes):
            g = grads.pop(node.key)
            dh = node.block.backward(g)
            if node.up is None:
                if node.level == 0:
                    dx = dh
                else:
                    accumulate((node.level - 1, 0), node.pool.backward(dh))
            else:
                parts = splitChannels(dh, node.splitSizes)
                for key, part in zip(node.skips, parts[:-1]):
                    accumulate(key, part)
                accumulate(node.upFrom, node.up.backward(parts[-1]))
        return dx

    def zeroGrad(self):
        for p in self.parameters():
            p.zeroGrad()


def build(config, seed=0, dtype=np.float32):
    """Build the configured variant; raises ValueError on an invalid config."""
    if config.depth < 2:
        raise ValueError(f"depth must be at least 2, got {config.depth}")
    if config.baseChannels < 4:
        raise ValueError(f"baseChannels must be at least 4, got {config.baseChannels}")
    if config.variant not in ("unet", "unetpp"):
        raise ValueError(f"unknown variant '{config.variant}'")
    model = Model(config, seed=seed, dtype=dtype)
    logging.info(f"Built {model.variantName} with {parameterCount(model)} parameters")
    return model


def parameterCount(model):
    return sum(p.count for p in model.parameters())


def unetParameterCount(depth, baseChannels):
    """Closed-form parameter count of the U-Net topology."""
    widths = [baseChannels * 2**level for level in range(depth + 1)]
    count = 0
    for level in range(depth + 1):
        inChannels = IN_CHANNELS if level == 0 else widths[level - 1]
        count += convParameterCount(inChannels, widths[level]) + convParameterCount(widths[level], widths[level])
    for level in range(depth):
        count += convParameterCount(widths[level + 1], widths[level])
        count += convParameterCount(2 * widths[level], widths[level]) + convParameterCount(widths[level], widths[level])
    return count + convParameterCount(widths[0], OUT_CHANNELS, 1)


# ----------------------------------
# Loss
# ----------------------------------
def sampleLoss(output, target, mask, config, withGrad=True):
    """Loss report of one (3, height, width) sample and, optionally, its gradient.

    The physical term enters the total and the gradient only for
    physics-informed configs; a plain model reports it when a mask is given.
    """
    mse, grad = mseLoss(output, target)
    if mask is None:
        if config.physicsInformed:
            raise ValueError("the physics-informed loss needs an interior mask per sample")
        rawSum, count = 0.0, 0
    else:
        mask = np.asarray(getattr(mask, "mask", mask), dtype=bool)
        rawSum = physicalLossSum(output, mask)
        count = int(mask.sum())
    physical = rawSum / count if count else 0.0
    if config.physicsInformed:
        total = mse + config.physicsWeight * physical
        if withGrad and count:
            grad = grad + config.physicsWeight * physicalLossGrad(output, mask)
    else:
        total = mse
    report = LossReport(total, mse, physical, rawSum, int(np.size(output)), count, count == 0)
    return report, (grad if withGrad else None)


def loss(output, target, masks, config):
    """Batch-mean loss report and the gradient seed for Model.backward.

    Accepts one (3, height, width) sample or a (batch, 3, height, width) batch
    with one mask per sample.
    """
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    single = output.ndim == 3
    if single:
        output, target = output[None], target[None]
        masks = None if masks is None else [masks]
    if output.shape != target.shape:
        raise ValueError(f"output {output.shape} and target {target.shape} differ in shape")
    if masks is None:
        masks = [None] * output.shape[0]
    if len(masks) != output.shape[0]:
        raise ValueError(f"{len(masks)} masks for a batch of {output.shape[0]}")

    batch = output.shape[0]
    reports = []
    seed = np.empty_like(output)
    for b in range(batch):
        report, grad = sampleLoss(output[b], target[b], masks[b], config)
        reports.append(report)
        seed[b] = grad / batch
    return meanReport(reports), (seed[0] * batch if single else seed)


def predict(model, inputs, batchSize=8):
    """Forward pass over many samples in fixed-size batches."""
    outputs = [model.forward(inputs[start:start + batchSize]) for start in range(0, len(inputs), batchSize)]
    return np.concatenate(outputs)


def sampleReports(model, inputs, targets, masks, config, batchSize=8, workers=1):
    """Per-sample loss reports, in input order.

    With several workers the samples are cut into contiguous chunks, each run
    on its own copy of the model.
    """
    def runChunk(chunk):
        worker = model if workers == 1 else model.clone()
        outputs = predict(worker, inputs[chunk], batchSize)
        return [sampleLoss(out, targets[k], masks[k], config, withGrad=False)[0] for out, k in zip(outputs, chunk)]

    chunks = [chunk for chunk in np.array_split(np.arange(len(inputs)), max(1, workers)) if len(chunk)]
    if workers == 1:
        results = [runChunk(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(runChunk, chunks))
    return [report for chunkReports in results for report in chunkReports]
