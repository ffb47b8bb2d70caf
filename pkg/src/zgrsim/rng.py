"""Addressable Gaussian perturbation streams.

Every draw is a pure function of a :class:`StreamAddress`, so a client and the
edge server can regenerate the same perturbation independently and in any
order. The layout below is part of the wire protocol; changing it breaks
interoperability between roles and is versioned by ``KEY_LAYOUT_VERSION``.

Key layout, version 1
---------------------
1. ``material = b"zgrsim/stream/v1" + pack("<5Q", root_seed, round, client_id,
   probe_index, layer_index)`` (five unsigned little-endian 64-bit integers).
2. ``digest = sha256(material)``; the Philox4x64-10 key is the first 16 bytes
   read as two little-endian uint64 words. The counter starts at zero.
3. Raw 64-bit outputs are consumed in pairs ``(r0, r1)``; with
   ``u1 = ((r0 >> 11) + 1) / 2**53`` and ``u2 = (r1 >> 11) / 2**53`` the
   Box-Muller transform yields ``sqrt(-2 ln u1) * cos(2 pi u2)`` at even
   positions and ``sqrt(-2 ln u1) * sin(2 pi u2)`` at odd positions.

A stream of length ``n`` is therefore a prefix of any longer stream at the same
address. Draws of guided coefficients ``z_g`` use ``layer_index = GUIDANCE_LAYER``
so they never collide with a client's local perturbation; a direction shared by
all clients additionally uses ``client_id = CLOUD_STREAM``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EmptyRequestError, ShapeError

KEY_LAYOUT_VERSION = 1
_DOMAIN_TAG = b"zgrsim/stream/v1"
_U64_MAX = 2**64 - 1
_TWO_NEG_53 = 2.0**-53

# Reserved ids for cloud-side draws of guided coefficients z_g.
CLOUD_STREAM = _U64_MAX
GUIDANCE_LAYER = _U64_MAX


@dataclass(frozen=True)
class StreamAddress:
    root_seed: int
    round: int = 0
    client_id: int = 0
    probe_index: int = 0
    layer_index: int = 0

    def __post_init__(self):
        for name in ("root_seed", "round", "client_id", "probe_index", "layer_index"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ConfigError(f"must be an integer, got {value!r}", f"address.{name}")
            if not 0 <= int(value) <= _U64_MAX:
                raise ConfigError(f"must be in [0, 2**64), got {value}", f"address.{name}")
            object.__setattr__(self, name, int(value))

    def at_layer(self, layer_index: int) -> "StreamAddress":
        return replace(self, layer_index=layer_index)

    def key_material(self) -> bytes:
        return _DOMAIN_TAG + struct.pack(
            "<5Q", self.root_seed, self.round, self.client_id, self.probe_index, self.layer_index
        )

    def philox_key(self) -> np.ndarray:
        digest = hashlib.sha256(self.key_material()).digest()
        return np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)


@dataclass(frozen=True)
class PerturbationSpec:
    """Identity of one probe: where its Gaussian draw comes from and how it is scaled."""

    address: StreamAddress
    epsilon: float
    alpha: float = 1.0
    guided: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}", "epsilon")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}", "alpha")


def guided_address(root_seed: int, round: int, client_id: int = CLOUD_STREAM, probe_index: int = 0) -> StreamAddress:
    return StreamAddress(root_seed, round, client_id, probe_index, GUIDANCE_LAYER)


def gaussian_stream(address: StreamAddress, length: int) -> np.ndarray:
    """i.i.d. N(0, 1) draws determined entirely by ``address``."""
    length = int(length)
    if length < 1:
        raise EmptyRequestError(f"requested a stream of length {length}")
    pairs = (length + 1) // 2
    raw = np.random.Philox(key=address.philox_key()).random_raw(2 * pairs)
    u1 = ((raw[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _TWO_NEG_53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:length]


def layer_chunk(address: StreamAddress, layer_map, layer_index: int) -> np.ndarray:
    """Perturbation slice for one layer, drawn from that layer's own address."""
    if not 0 <= layer_index < len(layer_map):
        raise ShapeError(f"layer {layer_index} outside model with {len(layer_map)} layers")
    _, length = layer_map[layer_index]
    return gaussian_stream(address.at_layer(layer_index), length)


def full_perturbation(address: StreamAddress, layer_map) -> np.ndarray:
    """Concatenation of :func:`layer_chunk` over every layer, in order."""
    return np.concatenate([layer_chunk(address, layer_map, k) for k in range(len(layer_map))])
