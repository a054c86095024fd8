"""Compact container for quantized coordinate networks.

Payload layout (little-endian), before the entropy stage::

    magic     4s   b"INRQ"
    version   u8
    arch      u16 hidden_layers, u16 hidden_width, u8 input_dim, u8 output_dim,
              u8 activation, f64 omega, f64 sigma, u8 num_frequencies
    method    u8
    bits      u8   k
    layers    u16  L
    counts    L x u32   levels per layer
    codebooks sum(counts) x f32, layer by layer, ascending
    biases    f32, layer by layer
    indices   k bits per weight, all layers concatenated, each matrix
              row-major; bit j of an index lands at stream bit (i*k + j),
              stream bits fill each byte from the least significant bit;
              zero-padded to a whole byte
    crc32     u32 over every preceding payload byte

The stored artifact is ``bz2.compress(payload)``.
"""

from __future__ import annotations

import bz2
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ConsistencyError, DecodeError
from .net import ACTIVATIONS, NetworkArch, WeightSet
from .quant import METHODS, LayerQuantState, QuantizationMap, assign_indices

MAGIC = b"INRQ"
VERSION = 1
_HEAD = struct.Struct("<4sBHHBBBddBBBH")
_COUNT = struct.Struct("<I")
_CRC = struct.Struct("<I")


@dataclass
class Decoded:
    arch: NetworkArch
    weights: WeightSet  # float32
    state: LayerQuantState
    method: str
    bits: int

    def __iter__(self):
        return iter((self.arch, self.weights, self.state))


def header_bits(num_layers: int) -> int:
    """Fixed overhead in bits: header, per-layer level counts and checksum."""
    return 8 * (_HEAD.size + _COUNT.size * num_layers + _CRC.size)


def raw_bits(arch: NetworkArch, bits: int, level_counts) -> int:
    """Unpadded payload size: header + sum of k|W| + 32|levels| + 32|b| per layer."""
    total = header_bits(len(arch.layer_shapes))
    for (fi, fo), n_levels in zip(arch.layer_shapes, level_counts):
        total += bits * fi * fo + 32 * n_levels + 32 * fo
    return total


def pack_indices(indices: np.ndarray, k: int) -> bytes:
    idx = np.asarray(indices, dtype=np.uint32).ravel()
    bits = ((idx[:, None] >> np.arange(k, dtype=np.uint32)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_indices(buf: bytes, count: int, k: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    bits = bits[: count * k].reshape(count, k).astype(np.uint32)
    return (bits << np.arange(k, dtype=np.uint32)).sum(axis=1)


def _layer_indices(w: np.ndarray, qmap: QuantizationMap, layer: int) -> np.ndarray:
    idx = assign_indices(w, qmap.levels)
    if not np.array_equal(qmap.levels[idx], w):
        bad = int(np.argmax(qmap.levels[idx] != w))
        raise ConsistencyError(
            f"layer {layer}: weight {w.ravel()[bad]!r} is not on the level set"
        )
    return idx


def encode_payload(arch: NetworkArch, qweights: WeightSet, state: LayerQuantState, method: str, bits: int) -> bytes:
    if len(state.maps) != len(arch.layer_shapes):
        raise ConsistencyError("map count does not match architecture")
    head = _HEAD.pack(
        MAGIC,
        VERSION,
        arch.hidden_layers,
        arch.hidden_width,
        arch.input_dim,
        arch.output_dim,
        ACTIVATIONS.index(arch.activation),
        arch.omega,
        arch.sigma,
        arch.num_frequencies,
        METHODS.index(method),
        bits,
        len(state.maps),
    )
    parts = [head]
    parts += [_COUNT.pack(len(q)) for q in state.maps]
    parts += [np.asarray(q.levels, dtype="<f4").tobytes() for q in state.maps]
    parts += [np.asarray(b, dtype="<f4").tobytes() for b in qweights.biases]
    all_idx = [
        _layer_indices(np.asarray(w, dtype=np.float64), q, i).ravel()
        for i, (w, q) in enumerate(zip(qweights.weights, state.maps))
    ]
    parts.append(pack_indices(np.concatenate(all_idx), bits))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def encode_weights(arch: NetworkArch, qweights: WeightSet, state: LayerQuantState, method: str, bits: int) -> bytes:
    return bz2.compress(encode_payload(arch, qweights, state, method, bits))


def encode(model) -> bytes:
    """Compress the best-epoch quantized weights of a trained model."""
    return encode_weights(
        model.arch, model.best_weights, model.best_state, model.config.method, model.config.bits
    )


def _decompress(blob: bytes) -> bytes:
    try:
        return bz2.decompress(blob)
    except (OSError, ValueError, EOFError) as exc:
        raise DecodeError(f"entropy stage failed: {exc}") from exc


def _parse_header(payload: bytes):
    if len(payload) < _HEAD.size + _CRC.size:
        raise DecodeError("truncated header", len(payload))
    body, crc = payload[: -_CRC.size], payload[-_CRC.size :]
    if zlib.crc32(body) != _CRC.unpack(crc)[0]:
        raise DecodeError("checksum mismatch", len(body))
    (magic, version, h, w, din, dout, act, omega, sigma, nf, method, bits, nl) = _HEAD.unpack_from(body, 0)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", 4)
    if act >= len(ACTIVATIONS) or method >= len(METHODS) or not 1 <= bits <= 16:
        raise DecodeError("invalid header field", 0)
    try:
        arch = NetworkArch(
            hidden_layers=h, hidden_width=w, activation=ACTIVATIONS[act], omega=omega,
            sigma=sigma, input_dim=din, output_dim=dout, num_frequencies=nf,
        )
    except ConfigurationError as exc:
        raise DecodeError(f"invalid architecture: {exc}", 5) from exc
    if nl != len(arch.layer_shapes):
        raise DecodeError(f"layer count {nl} inconsistent with architecture", _HEAD.size - 2)
    pos = _HEAD.size
    if len(body) < pos + _COUNT.size * nl:
        raise DecodeError("truncated level counts", len(body))
    counts = [_COUNT.unpack_from(body, pos + _COUNT.size * i)[0] for i in range(nl)]
    pos += _COUNT.size * nl
    for i, c in enumerate(counts):
        if not 1 <= c <= 2**bits:
            raise DecodeError(f"layer {i}: invalid level count {c}", _HEAD.size + 4 * i)
    return body, arch, METHODS[method], bits, counts, pos


def decode(blob: bytes) -> Decoded:
    payload = _decompress(blob)
    body, arch, method, bits, counts, pos = _parse_header(payload)
    expected = (raw_bits(arch, bits, counts) + 7) // 8
    if len(payload) != expected:
        raise DecodeError(f"payload is {len(payload)} bytes, expected {expected}", len(payload))

    levels = []
    for c in counts:
        levels.append(np.frombuffer(body, dtype="<f4", count=c, offset=pos).astype(np.float32))
        pos += 4 * c
    biases = []
    for _, fo in arch.layer_shapes:
        biases.append(np.frombuffer(body, dtype="<f4", count=fo, offset=pos).astype(np.float32))
        pos += 4 * fo
    for i, lv in enumerate(levels):
        if not np.all(np.isfinite(lv)) or np.any(np.diff(lv) < 0):
            raise DecodeError(f"layer {i}: codebook not sorted")

    sizes = [fi * fo for fi, fo in arch.layer_shapes]
    idx = unpack_indices(body[pos:], sum(sizes), bits)
    weights, maps = [], []
    start = 0
    for i, ((fi, fo), n, lv) in enumerate(zip(arch.layer_shapes, sizes, levels)):
        li = idx[start : start + n]
        if li.size and li.max() >= lv.size:
            bad = start + int(np.argmax(li >= lv.size))
            raise DecodeError(f"layer {i}: index {li.max()} out of range", pos + bad * bits // 8)
        weights.append(lv[li].reshape(fi, fo))
        maps.append(QuantizationMap(lv.astype(np.float64), method, bits))
        start += n
    return Decoded(arch, WeightSet(weights, biases), LayerQuantState(tuple(maps)), method, bits)


def measure_rate(blob: bytes) -> dict:
    """Raw (pre-entropy) bits, stored bytes and effective bits per weight."""
    payload = _decompress(blob)
    _, arch, _, bits, counts, _ = _parse_header(payload)
    return {
        "raw_bits": raw_bits(arch, bits, counts),
        "compressed_bytes": len(blob),
        "bits_per_weight_effective": 8.0 * len(blob) / arch.num_weights,
    }
