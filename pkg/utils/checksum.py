import numpy as np
from numba import njit

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


@njit(nogil=True)
def _fnv1a64(data, offset, prime):
    h = offset
    for i in range(data.shape[0]):
        h = h ^ np.uint64(data[i])
        h = h * prime
    return h


def fnv1a64(payload: bytes) -> int:
    """64-bit FNV-1a hash of a byte string"""
    data = np.frombuffer(payload, dtype=np.uint8)
    return int(_fnv1a64(data, FNV_OFFSET, FNV_PRIME))
