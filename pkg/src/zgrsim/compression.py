"""b-bit asymmetric quantization of guided chunks and the compression-proportion controller.

Wire layout of a :class:`QuantizedBlock`, version 1 (all little-endian)::

    offset  size  field
    0       4     magic b"ZQB1"
    4       1     bits b (2..8)
    5       1     flags: bit0 constant block, bit1 literal zero point
    6       2     reserved, zero
    8       8     scale s (float64)
    16      4     zero point delta (int32)
    20      4     original_len (uint32)
    24      8     constant value (float64; 0.0 unless bit0 is set)
    32      ...   codes packed b bits each, code i in bits [i*b, (i+1)*b) of the
                  payload, least significant bit first

A constant block carries no payload.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DecodeError, NumericError

__all__ = [
    "DecompressionModel",
    "HEADER_SIZE",
    "OmegaChoice",
    "QuantizedBlock",
    "TransmissionPlan",
    "choose_omega",
    "compress_chunk",
    "decode_block",
    "decompress_chunk",
    "dequantize",
    "encode_block",
    "feasible",
    "measure_decompression",
    "omega_grid",
    "quantize",
]

_MAGIC = b"ZQB1"
_HEADER = struct.Struct("<4sBBxxdiId")
HEADER_SIZE = _HEADER.size
_FLAG_CONSTANT = 1
_FLAG_LITERAL = 2


@dataclass(frozen=True)
class QuantizedBlock:
    codes: np.ndarray
    scale: float
    zero_point: int
    bits: int
    original_len: int
    constant: float | None = None
    literal_zero_point: bool = False

    @property
    def degenerate(self) -> bool:
        return self.constant is not None

    @property
    def nbytes(self) -> int:
        """Size on the wire."""
        payload = 0 if self.degenerate else (self.original_len * self.bits + 7) // 8
        return HEADER_SIZE + payload


def _check_bits(bits):
    if bits not in range(2, 9):
        raise ConfigError(f"bit width must be in 2..8, got {bits}", "dtc.bits")


def quantize(values, bits: int = 4, zero_point: str = "range") -> QuantizedBlock:
    """Map ``values`` onto ``[0, 2^b - 1]`` with ``s = (max - min) / (2^b - 1)``.

    ``zero_point="range"`` uses ``delta = round(-min / s)`` so codes cover the
    full range. ``"literal"`` uses ``delta = round(-2^b / (max - min))``; codes
    are then clamped and the error bound no longer holds.
    """
    _check_bits(bits)
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ConfigError("cannot quantize an empty vector", "dtc")
    if not np.all(np.isfinite(x)):
        raise NumericError("cannot quantize non-finite values")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return QuantizedBlock(np.zeros(x.size, dtype=np.uint8), 0.0, 0, bits, x.size, constant=lo)
    levels = 2**bits - 1
    scale = (hi - lo) / levels
    if zero_point == "range":
        delta = int(np.round(-lo / scale))
    elif zero_point == "literal":
        delta = int(np.round(-(2**bits) / (hi - lo)))
    else:
        raise ConfigError(f"unknown zero point rule {zero_point!r}", "dtc.zero_point")
    codes = np.clip(np.round(x / scale + delta), 0, levels).astype(np.uint8)
    return QuantizedBlock(codes, scale, delta, bits, x.size, literal_zero_point=zero_point == "literal")


def dequantize(block: QuantizedBlock) -> np.ndarray:
    """``s * (code - delta)``, or the stored constant for a degenerate block."""
    _check_bits(block.bits)
    if block.degenerate:
        return np.full(block.original_len, block.constant, dtype=np.float64)
    codes = np.asarray(block.codes)
    if codes.size != block.original_len:
        raise DecodeError(f"block holds {codes.size} codes, header says {block.original_len}")
    if codes.size and int(codes.max()) > 2**block.bits - 1:
        raise DecodeError(f"code {int(codes.max())} exceeds the {block.bits}-bit range")
    return block.scale * (codes.astype(np.float64) - block.zero_point)


def encode_block(block: QuantizedBlock) -> bytes:
    flags = (_FLAG_CONSTANT if block.degenerate else 0) | (_FLAG_LITERAL if block.literal_zero_point else 0)
    header = _HEADER.pack(_MAGIC, block.bits, flags, block.scale, block.zero_point,
                          block.original_len, block.constant if block.degenerate else 0.0)
    if block.degenerate:
        return header
    codes = np.asarray(block.codes, dtype=np.uint8)
    bit_matrix = (codes[:, None] >> np.arange(block.bits, dtype=np.uint8)) & 1
    return header + np.packbits(bit_matrix.ravel(), bitorder="little").tobytes()


def decode_block(data: bytes) -> QuantizedBlock:
    if len(data) < HEADER_SIZE:
        raise DecodeError(f"need at least {HEADER_SIZE} header bytes, got {len(data)}")
    magic, bits, flags, scale, delta, n, constant = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if bits not in range(2, 9):
        raise DecodeError(f"bad bit width {bits}")
    literal = bool(flags & _FLAG_LITERAL)
    if flags & _FLAG_CONSTANT:
        return QuantizedBlock(np.zeros(n, dtype=np.uint8), scale, delta, bits, n, constant, literal)
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE)
    expected = (n * bits + 7) // 8
    if payload.size != expected:
        raise DecodeError(f"payload has {payload.size} bytes, expected {expected}")
    bit_stream = np.unpackbits(payload, bitorder="little")[: n * bits].reshape(n, bits)
    codes = (bit_stream << np.arange(bits, dtype=np.uint8)).sum(axis=1).astype(np.uint8)
    return QuantizedBlock(codes, scale, delta, bits, n, None, literal)


def compress_chunk(values, omega: float, bits: int | None = 4):
    """Quantize the leading ``omega`` fraction of a chunk; the rest stays raw.

    Returns ``(block or None, raw_tail)``. ``bits=None`` disables quantization.
    """
    x = np.asarray(values, dtype=np.float64)
    k = 0 if bits is None else int(np.floor(omega * x.size + 1e-12))
    if k == 0:
        return None, x.copy()
    return quantize(x[:k], bits), x[k:].copy()


def decompress_chunk(block, raw_tail) -> np.ndarray:
    if block is None:
        return np.asarray(raw_tail, dtype=np.float64).copy()
    return np.concatenate([dequantize(block), raw_tail])


@dataclass(frozen=True)
class DecompressionModel:
    """Offline-fitted decompression latency ``overhead + bytes / throughput`` (0 for no data)."""

    overhead_s: float = 2e-4
    throughput_Bps: float = 2e9

    def __call__(self, nbytes: float) -> float:
        if nbytes <= 0:
            return 0.0
        return self.overhead_s + nbytes / self.throughput_Bps


def measure_decompression(bits: int = 4, sizes=(2**14, 2**16, 2**18, 2**20), repeats: int = 5,
                          seed: int = 0) -> DecompressionModel:
    """Time :func:`dequantize` at several sizes and fit a linear latency model.

    Sizes are in compressed-source bytes (FP16 values, 2 bytes each).
    """
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for nbytes in sizes:
        block = quantize(rng.standard_normal(nbytes // 2), bits)
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            dequantize(block)
            best = min(best, time.perf_counter() - t0)
        xs.append(nbytes)
        ys.append(best)
    slope, intercept = np.polyfit(np.asarray(xs, float), np.asarray(ys), 1)
    slope = max(slope, 1e-15)
    return DecompressionModel(max(float(intercept), 0.0), float(1.0 / slope))


@dataclass(frozen=True)
class TransmissionPlan:
    D0: float  # bytes per layer
    B0: float  # bytes per second
    theta: float
    T_cc: float  # per-layer client compute seconds
    decomp_model: DecompressionModel = DecompressionModel()
    omega: float = 0.0

    def __post_init__(self):
        if self.B0 <= 0:
            raise ConfigError("bandwidth must be > 0", "dtc.B0")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must be in (0, 1), got {self.theta}", "dtc.theta")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError(f"omega must be in [0, 1], got {self.omega}", "dtc.omega")
        if self.D0 < 0 or self.T_cc < 0:
            raise ConfigError("D0 and T_cc must be >= 0", "dtc")

    def effective_bytes(self, omega: float) -> float:
        return self.D0 * (1.0 - omega) + self.D0 * omega * self.theta

    def transmit_time(self, omega: float, constraint: str = "effective") -> float:
        size = self.D0 if constraint == "literal" else self.effective_bytes(omega)
        return size / self.B0

    def compute_time(self, omega: float) -> float:
        return self.T_cc + self.decomp_model(self.D0 * omega)


@dataclass(frozen=True)
class OmegaChoice:
    omega: float
    feasible: bool


def omega_grid(step: float = 0.05) -> np.ndarray:
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ConfigError(f"grid step must divide 1, got {step}", "dtc.grid_step")
    return np.arange(n + 1) / n


def feasible(plan: TransmissionPlan, omega: float, constraint: str = "effective") -> bool:
    """Transmission of one layer hides under that layer's compute plus decompression."""
    if constraint not in ("effective", "literal"):
        raise ConfigError(f"unknown constraint {constraint!r}", "dtc.constraint")
    return plan.transmit_time(omega, constraint) <= plan.compute_time(omega)


def choose_omega(plan: TransmissionPlan, step: float = 0.05, constraint: str = "effective") -> OmegaChoice:
    """Smallest grid ``omega`` that hides transmission, by bisection.

    Transmit time falls and compute time rises with ``omega``, so feasibility
    is monotone on the grid. Returns ``omega = 1`` flagged infeasible when even
    full compression is not enough.
    """
    grid = omega_grid(step)
    if not feasible(plan, grid[-1], constraint):
        return OmegaChoice(1.0, False)
    lo, hi = 0, len(grid) - 1  # invariant: grid[hi] feasible
    if feasible(plan, grid[0], constraint):
        return OmegaChoice(float(grid[0]), True)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(plan, grid[mid], constraint):
            hi = mid
        else:
            lo = mid
    return OmegaChoice(float(grid[hi]), True)
