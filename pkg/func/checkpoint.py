"""Binary model checkpoints and their flat text export.

Binary layout, little-endian:

    magic      4 bytes  b"PSCK"
    version    uint32
    headerLen  uint32   length of the JSON header that follows
    header     utf-8 JSON: model config echo, variant tag, canvas, extra run info
    layerCount uint32
    per layer:
        nameLen  uint16, name utf-8
        ndim     uint8, dims uint32 x ndim   (kernel shape out, in, kh, kw)
        kernels  float32 x prod(dims)
        biasLen  uint32, biases float32 x biasLen

Adam moments are not stored.
"""

import json
import logging
import struct

import numpy as np

from config.runConfig import ModelConfig
from func.errors import DataError
from func.nnCore import LayerParams
from func.unetModels import build

MAGIC = b"PSCK"
VERSION = 1


def saveCheckpoint(path, model, canvas, extra=None):
    header = {
        "model": model.config.model_dump(),
        "variantName": model.variantName,
        "canvas": list(canvas),
        **(extra or {}),
    }
    headerBytes = json.dumps(header, sort_keys=True).encode("utf-8")
    layers = model.namedLayers()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(headerBytes)))
        f.write(headerBytes)
        f.write(struct.pack("<I", len(layers)))
        for name, conv in layers:
            nameBytes = name.encode("utf-8")
            kernels = conv.params.kernels.astype("<f4")
            biases = conv.params.biases.astype("<f4")
            f.write(struct.pack("<H", len(nameBytes)))
            f.write(nameBytes)
            f.write(struct.pack("<B", kernels.ndim))
            f.write(struct.pack(f"<{kernels.ndim}I", *kernels.shape))
            f.write(kernels.tobytes())
            f.write(struct.pack("<I", biases.size))
            f.write(biases.tobytes())
    logging.info(f"Checkpoint saved to {path} ({len(layers)} layers)")


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count):
        if self.pos + count > len(self.data):
            raise DataError(f"checkpoint {self.path} is truncated")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def readCheckpoint(path):
    """Header dict and [(name, kernels, biases)] as stored."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}")
    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    version, headerLen = reader.unpack("<II")
    if version != VERSION:
        raise DataError(f"checkpoint {path} has unsupported version {version}")
    try:
        header = json.loads(reader.take(headerLen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"checkpoint {path} has a corrupt header: {e}")
    (layerCount,) = reader.unpack("<I")
    layers = []
    for _ in range(layerCount):
        (nameLen,) = reader.unpack("<H")
        name = reader.take(nameLen).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        kernels = np.frombuffer(reader.take(4 * int(np.prod(shape))), dtype="<f4").reshape(shape)
        (biasLen,) = reader.unpack("<I")
        biases = np.frombuffer(reader.take(4 * biasLen), dtype="<f4")
        layers.append((name, kernels, biases))
    if reader.pos != len(data):
        raise DataError(f"checkpoint {path} has trailing bytes")
    return header, layers


def loadCheckpoint(path):
    """Rebuild the model stored at path; returns (model, header)."""
    header, layers = readCheckpoint(path)
    try:
        config = ModelConfig.model_validate(header["model"])
    except (KeyError, ValueError) as e:
        raise DataError(f"checkpoint {path} carries an invalid model config: {e}")
    model = build(config)
    expected = [name for name, _ in model.namedLayers()]
    stored = [name for name, _, _ in layers]
    if expected != stored:
        raise DataError(f"checkpoint {path} does not match the {model.variantName} layer layout")
    try:
        model.setParameters([LayerParams(k.astype(np.float32), b.astype(np.float32)) for _, k, b in layers])
    except ValueError as e:
        raise DataError(f"checkpoint {path}: {e}")
    logging.info(f"Checkpoint {path} loaded ({header.get('variantName')})")
    return model, header


def exportCheckpointText(path, textPath):
    """One line per weight, 'layer index value', for diffing two checkpoints."""
    header, layers = readCheckpoint(path)
    with open(textPath, "w") as f:
        f.write(f"# {json.dumps(header, sort_keys=True)}\n")
        for name, kernels, biases in layers:
            f.write(f"# {name} kernels {'x'.join(str(n) for n in kernels.shape)}\n")
            for index, value in enumerate(kernels.reshape(-1)):
                f.write(f"{name}.k {index} {value:.9g}\n")
            for index, value in enumerate(biases):
                f.write(f"{name}.b {index} {value:.9g}\n")
    return textPath
