"""GOP codec: one I-frame then closed-loop P-frames, sliced, with a byte-exact container.

Container layout (little-endian)::

    "RFDV" | version u8 | width u16 | height u16 | frame_count u8 | gop_len u8
    | quant_step u8 | slice_rows u8
    | directory: frame_count * slices_per_frame * (offset u32, length u32)
    | per slice: SYNC (00 00 01 AB) + payload

``offset`` is the absolute position of the slice's sync marker and
``length`` the payload size after it.  Each payload codes the Y, Cb and Cr
blocks of its block-rows in raster order.  Intra slices carry a 1-bit mode
per block; predicted slices prefix every non-SKIP block with ue(skip_run),
the number of SKIP blocks before it, and end with ue(trailing skips).

    mode 0 CODED    ue(count) then count * (ue(run), se(level)) in zigzag order
    mode 1 UNIFORM  se(value - previous UNIFORM value), all 64 samples equal;
                    the predictor restarts at 128 for each plane of a slice
    SKIP            copy the co-located reference block (P-frames only); chosen
                    when the source block is unchanged from the reference or
                    the previous source frame, or quantises to all zeros
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..core import Frame, Role
from .bits import BitReader, BitstreamError, BitWriter, se_bits, ue_bits
from .transform import (
    N, ZIGZAG, dct2, from_blocks, idct2, rgb_to_ycbcr, round_half_away,
    to_blocks, ycbcr_to_rgb,
)

MAGIC = b"RFDV"
VERSION = 1
SYNC = b"\x00\x00\x01\xab"
HEADER = struct.Struct("<4sBHHBBBB")
DIR_ENTRY = struct.Struct("<II")

CODED, UNIFORM, SKIP = 0, 1, 2
MODE_BITS = {CODED: "0", UNIFORM: "1"}

GRAY = 128
BLACK_YCBCR = (0, 128, 128)
GRAY_YCBCR = (GRAY, GRAY, GRAY)

_UE = [ue_bits(v) for v in range(65)]
_SE: dict[int, str] = {}


def _se(v: int) -> str:
    s = _SE.get(v)
    if s is None:
        s = _SE[v] = se_bits(v)
    return s


@dataclass(frozen=True)
class CodecParams:
    quant_step: int = 8
    gop_len: int = 10
    slice_rows: int = 2

    def __post_init__(self):
        if not 1 <= self.quant_step <= 255:
            raise ValueError("quant_step must be in [1, 255]")
        if not 1 <= self.gop_len <= 255:
            raise ValueError("gop_len must be in [1, 255]")
        if self.slice_rows < 1:
            raise ValueError("slice_rows must be >= 1")

    @property
    def slice_height(self) -> int:
        return self.slice_rows * N


@dataclass(frozen=True)
class Bitstream:
    data: bytes

    def __post_init__(self):
        if len(self.data) < HEADER.size:
            raise BitstreamError("bitstream shorter than header")
        magic, version, *_ = HEADER.unpack_from(self.data, 0)
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        if len(self.data) < self.header_size:
            raise BitstreamError("truncated slice directory")

    @cached_property
    def _fields(self):
        return HEADER.unpack_from(self.data, 0)

    width = property(lambda self: self._fields[2])
    height = property(lambda self: self._fields[3])
    frame_count = property(lambda self: self._fields[4])
    gop_len = property(lambda self: self._fields[5])
    quant_step = property(lambda self: self._fields[6])
    slice_rows = property(lambda self: self._fields[7])

    @property
    def params(self) -> CodecParams:
        return CodecParams(self.quant_step, self.gop_len, self.slice_rows)

    @property
    def slices_per_frame(self) -> int:
        return self.height // (self.slice_rows * N)

    @property
    def header_size(self) -> int:
        f = self._fields
        spf = f[3] // (f[7] * N) if f[7] else 0
        return HEADER.size + DIR_ENTRY.size * f[4] * spf

    @property
    def total_bytes(self) -> int:
        return len(self.data)

    @cached_property
    def directory(self) -> np.ndarray:
        """(frame_count, slices_per_frame, 2) array of (offset, length)."""
        n = self.frame_count * self.slices_per_frame
        d = np.frombuffer(self.data, dtype="<u4", count=2 * n, offset=HEADER.size)
        return d.reshape(self.frame_count, self.slices_per_frame, 2).astype(np.int64)

    def header_bytes(self) -> bytes:
        return self.data[:self.header_size]

    def slice_payload(self, frame: int, sl: int) -> bytes:
        off, length = self.directory[frame, sl]
        if self.data[off:off + len(SYNC)] != SYNC:
            raise BitstreamError(f"missing sync marker for slice ({frame}, {sl})")
        start = off + len(SYNC)
        if start + length > len(self.data):
            raise BitstreamError("slice extends past end of stream")
        return self.data[start:start + length]

    def slice_span(self, frame: int, sl: int) -> int:
        """Bytes on the wire for one slice, sync marker included."""
        return int(self.directory[frame, sl, 1]) + len(SYNC)

    def frame_bytes(self, frame: int) -> int:
        return int(self.directory[frame, :, 1].sum()) + len(SYNC) * self.slices_per_frame


def _validate_batch(frames, params: CodecParams):
    if not frames:
        raise ValueError("empty batch")
    if len(frames) > params.gop_len:
        raise ValueError(f"batch of {len(frames)} exceeds gop_len {params.gop_len}")
    shape = frames[0].shape
    for f in frames:
        if f.shape != shape:
            raise ValueError(f"frame dimensions differ: {f.shape} vs {shape}")
    h, w = shape
    if h % params.slice_height:
        raise ValueError(f"slice height {params.slice_height} does not divide frame height {h}")
    if w > 0xFFFF or h > 0xFFFF or len(frames) > 255:
        raise ValueError("frame or batch too large for the container")


def _reconstruct(qcoef: np.ndarray, pred: np.ndarray, qstep: int) -> np.ndarray:
    spatial = idct2(qcoef.astype(np.float64) * qstep) + pred
    return np.clip(round_half_away(spatial), 0, 255).astype(np.int32)


def _code_frame(src: np.ndarray, ref: np.ndarray | None, qstep: int, prev_src: np.ndarray | None = None):
    """Mode decision, quantisation and closed-loop reconstruction for one frame.

    ``src``/``ref``/``prev_src`` are (3, BR, BC, 8, 8) int planes-of-blocks.
    A predicted block is skipped when it is unchanged from the previous
    source frame, equals its reference, or quantises to nothing.  Returns
    ``(modes, values, qcoef, recon)``.
    """
    flat = src.reshape(*src.shape[:3], 64)
    uniform = np.all(flat == flat[..., :1], axis=-1)
    pred = GRAY if ref is None else ref
    resid = (src - pred).astype(np.float64)
    qcoef = round_half_away(dct2(resid) / qstep).astype(np.int32)
    zero = ~qcoef.reshape(*src.shape[:3], 64).any(axis=-1)

    modes = np.full(src.shape[:3], CODED, dtype=np.int8)
    modes[uniform] = UNIFORM
    if ref is not None:
        same = np.all((src == ref).reshape(*src.shape[:3], 64), axis=-1)
        if prev_src is not None:
            same |= np.all((src == prev_src).reshape(*src.shape[:3], 64), axis=-1)
        modes[~uniform & zero] = SKIP
        modes[same] = SKIP

    recon = _reconstruct(qcoef, pred, qstep)
    if ref is not None:
        recon = np.where((modes == SKIP)[..., None, None], ref, recon)
    recon = np.where((modes == UNIFORM)[..., None, None], src[..., :1, :1], recon)
    values = flat[..., 0]
    return modes, values, qcoef, recon


def _write_slice(modes, values, qcoef, rows: slice, intra: bool) -> bytes:
    w = BitWriter()
    parts = w._parts
    zz = qcoef[:, rows].reshape(-1, 64)[:, ZIGZAG]
    m = modes[:, rows].reshape(-1).tolist()
    v = values[:, rows].reshape(-1).tolist()
    per_plane = len(m) // 3
    skipped = 0
    last = GRAY
    for b, mode in enumerate(m):
        if b % per_plane == 0:
            last = GRAY
        if mode == SKIP:
            skipped += 1
            continue
        if not intra:
            parts.append(ue_bits(skipped))
            skipped = 0
        parts.append(MODE_BITS[mode])
        if mode == UNIFORM:
            # value predicted from the previous uniform block of the same plane
            parts.append(_se(v[b] - last))
            last = v[b]
        else:
            coefs = zz[b]
            nz = np.flatnonzero(coefs)
            parts.append(_UE[len(nz)])
            prev = -1
            for idx in nz.tolist():
                parts.append(_UE[idx - prev - 1])
                parts.append(_se(int(coefs[idx])))
                prev = idx
    if not intra:
        parts.append(ue_bits(skipped))
    return w.to_bytes()


def encode_batch(frames: list[Frame], params: CodecParams = CodecParams()) -> Bitstream:
    """Encode one GOP: frame 0 intra, the rest predicted from the previous reconstruction."""
    return encode_batch_detailed(frames, params)[0]


def encode_batch_detailed(frames: list[Frame], params: CodecParams = CodecParams()
                          ) -> tuple[Bitstream, list[np.ndarray]]:
    """Like :func:`encode_batch`, also returning the encoder's (3, H, W) YCbCr reconstructions.

    These equal what a decoder produces when every slice arrives.
    """
    _validate_batch(frames, params)
    recons = []
    h, w = frames[0].shape
    spf = h // params.slice_height
    header = HEADER.pack(MAGIC, VERSION, w, h, len(frames), params.gop_len,
                         params.quant_step, params.slice_rows)
    payloads: list[bytes] = []
    ref = prev = None
    for f in frames:
        planes = rgb_to_ycbcr(f.pixels)
        src = np.stack([to_blocks(p) for p in planes])
        modes, values, qcoef, recon = _code_frame(src, ref, params.quant_step, prev)
        prev = src
        for s in range(spf):
            rows = slice(s * params.slice_rows, (s + 1) * params.slice_rows)
            payloads.append(_write_slice(modes, values, qcoef, rows, ref is None))
        ref = recon
        recons.append(np.stack([from_blocks(recon[p]) for p in range(3)]))

    dir_size = DIR_ENTRY.size * len(payloads)
    offset = len(header) + dir_size
    directory = []
    body = []
    for p in payloads:
        directory.append(DIR_ENTRY.pack(offset, len(p)))
        body.append(SYNC + p)
        offset += len(SYNC) + len(p)
    return Bitstream(header + b"".join(directory) + b"".join(body)), recons


def _read_block(r: BitReader, i: int, modes, values, zz, last: int) -> int:
    """Parse one non-skipped block; returns the updated uniform-value predictor."""
    if r.read(1) == UNIFORM:
        v = last + r.se()
        if not 0 <= v <= 255:
            raise BitstreamError("uniform value out of range")
        modes[i] = UNIFORM
        values[i] = v
        return v
    modes[i] = CODED
    count = r.ue()
    if count > 64:
        raise BitstreamError("coefficient count exceeds block size")
    pos = -1
    for _ in range(count):
        pos += r.ue() + 1
        if pos >= 64:
            raise BitstreamError("coefficient run overflows block")
        zz[i, pos] = r.se()
    return last


def _parse_slice(payload: bytes, nblocks: int, intra: bool):
    """Returns (modes, values, qcoef) for the 3*nblocks blocks of a slice."""
    r = BitReader(payload)
    total = 3 * nblocks
    modes = np.full(total, SKIP, dtype=np.int8)
    values = np.zeros(total, dtype=np.int32)
    zz = np.zeros((total, 64), dtype=np.int32)
    per_plane = nblocks
    last = GRAY
    if intra:
        for i in range(total):
            if i % per_plane == 0:
                last = GRAY
            last = _read_block(r, i, modes, values, zz, last)
    else:
        i = 0
        plane = 0
        while True:
            i += r.ue()
            if i == total:
                break
            if i > total:
                raise BitstreamError("skip run overflows slice")
            if i // per_plane != plane:
                plane = i // per_plane
                last = GRAY
            last = _read_block(r, i, modes, values, zz, last)
            i += 1
    if not r.tail_is_padding():
        raise BitstreamError("unexpected trailing data in slice")
    qcoef = np.zeros_like(zz)
    qcoef[:, ZIGZAG] = zz
    return modes, values, qcoef.reshape(total, 8, 8)


@dataclass
class DecodeResult:
    frames: list[Frame]
    planes: list[np.ndarray]       # per frame (3, H, W) int YCbCr reconstruction
    slice_ok: np.ndarray           # (frames, slices) True where the slice decoded


def decode_batch_detailed(bits: Bitstream, params: CodecParams | None = None,
                          loss_map: np.ndarray | None = None, conceal: str = "previous",
                          role: Role = Role.DELTA) -> DecodeResult:
    """Decode with per-slice availability and a concealment policy.

    ``conceal="previous"`` copies the co-located pixels of the previous
    reconstruction (mid-gray for the intra frame); ``"black"`` fills lost
    slices with black.
    """
    if not isinstance(bits, Bitstream):
        bits = Bitstream(bytes(bits))
    hp = bits.params
    if params is not None and params != hp:
        raise ValueError(f"codec params {params} disagree with stream header {hp}")
    if conceal not in ("previous", "black"):
        raise ValueError(f"unknown concealment policy {conceal!r}")
    nf, spf = bits.frame_count, bits.slices_per_frame
    h, w = bits.height, bits.width
    if nf == 0 or spf == 0 or w % N or h % hp.slice_height:
        raise BitstreamError("inconsistent stream header")
    if loss_map is None:
        avail = np.ones((nf, spf), dtype=bool)
    else:
        avail = np.asarray(loss_map, dtype=bool)
        if avail.shape != (nf, spf):
            raise ValueError(f"loss_map shape {avail.shape} != {(nf, spf)}")

    br, bc = h // N, w // N
    rows_per = hp.slice_rows
    nblocks = rows_per * bc
    fill = GRAY_YCBCR if conceal == "previous" else BLACK_YCBCR
    ok = np.zeros((nf, spf), dtype=bool)
    frames, planes_out = [], []
    ref = None
    for f in range(nf):
        intra = f == 0
        cur = np.empty((3, br, bc, N, N), dtype=np.int32)
        for s in range(spf):
            rows = slice(s * rows_per, (s + 1) * rows_per)
            parsed = None
            if avail[f, s]:
                try:
                    parsed = _parse_slice(bits.slice_payload(f, s), nblocks, intra)
                except BitstreamError:
                    parsed = None
            if parsed is None:
                if conceal == "previous" and ref is not None:
                    cur[:, rows] = ref[:, rows]
                else:
                    for p in range(3):
                        cur[p, rows] = fill[p]
                continue
            ok[f, s] = True
            modes, values, qcoef = parsed
            shape = (3, rows_per, bc)
            modes = modes.reshape(shape)
            values = values.reshape(shape)
            qcoef = qcoef.reshape(*shape, N, N)
            pred = GRAY if intra else ref[:, rows]
            blk = _reconstruct(qcoef, pred, hp.quant_step)
            if not intra:
                blk = np.where((modes == SKIP)[..., None, None], pred, blk)
            blk = np.where((modes == UNIFORM)[..., None, None], values[..., None, None], blk)
            cur[:, rows] = blk
        ref = cur
        planes = np.stack([from_blocks(cur[p]) for p in range(3)])
        planes_out.append(planes)
        frames.append(Frame(ycbcr_to_rgb(planes), role=role, frame_index=f))
    return DecodeResult(frames, planes_out, ok)


def decode_batch(bits: Bitstream, params: CodecParams | None = None,
                 loss_map: np.ndarray | None = None, conceal: str = "previous") -> list[Frame]:
    return decode_batch_detailed(bits, params, loss_map, conceal).frames


def slice_rows_mask(height: int, width: int, params: CodecParams, slice_ok: np.ndarray) -> np.ndarray:
    """Expand one frame's per-slice flags to a (H, W) pixel mask."""
    per_row = np.repeat(np.asarray(slice_ok, dtype=bool), params.slice_height)
    return np.broadcast_to(per_row[:height, None], (height, width))
