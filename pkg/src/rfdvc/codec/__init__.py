"""Reference GOP codec standing in for a production video encoder."""

from .bits import BitReader, BitstreamError, BitWriter, se_bits, ue_bits
from .stream import (
    Bitstream, CodecParams, DecodeResult, decode_batch, decode_batch_detailed,
    encode_batch, encode_batch_detailed, slice_rows_mask,
)

__all__ = [
    "BitReader", "BitWriter", "Bitstream", "BitstreamError", "CodecParams", "DecodeResult",
    "decode_batch", "decode_batch_detailed", "encode_batch", "encode_batch_detailed", "se_bits", "slice_rows_mask",
    "ue_bits",
]
